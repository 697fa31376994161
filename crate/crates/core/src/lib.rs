pub mod assoc;
pub mod cli;
pub mod dist;
pub mod error;
pub mod kernels;
pub mod latentmodel;
pub mod pedigree;
pub mod power;
pub mod propodds;
pub mod sim;

mod cumlogit;

pub use error::{Error, Result};
