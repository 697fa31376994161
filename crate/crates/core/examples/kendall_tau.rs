//! Kendall's tau for two continuous samples: concordance counts, the
//! normalized U-statistic and its null-variance p-value.

use gentau::assoc::{kendall_null_variance, kendall_tau};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> gentau::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 60;
    let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    for slope in [0.0, 0.5, 2.0] {
        let y: Vec<f64> = x.iter().map(|&xi| slope * xi + rng.random::<f64>()).collect();
        let k = kendall_tau(&x, &y)?;
        println!(
            "slope {slope}: concordant {} discordant {} tau_u {:.3} z {:.2} p {:.3e}",
            k.concordant,
            k.discordant,
            k.u,
            k.tau,
            k.p_value()
        );
    }
    println!("null variance of the pair sum at n = {n}: {}", kendall_null_variance(n));
    Ok(())
}
