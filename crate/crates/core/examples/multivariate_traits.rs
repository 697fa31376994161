//! Joint test of an ordinal, a quantitative and a binary trait against the
//! single-trait tests, in family and in case-control mode.

use gentau::assoc::gen_tau_statistic;
use gentau::kernels::TraitKind;
use gentau::sim::{simulate_cohort, Causal, CohortSim};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> gentau::Result<()> {
    let cfg = CohortSim {
        families: 250,
        markers: 2,
        traits: vec![
            TraitKind::Ordinal { levels: 5 },
            TraitKind::Quantitative,
            TraitKind::Binary,
        ],
        trait_correlation: 0.5,
        causal: Some(Causal {
            marker: 0,
            effect: 0.35,
            interaction: 0.0,
        }),
        ..CohortSim::default()
    };
    let cohort = simulate_cohort(&cfg, &mut ChaCha8Rng::seed_from_u64(9))?;
    let allele = cohort.minor_allele(0).unwrap_or(2);
    for traits in [vec![0], vec![1], vec![2], vec![0, 1, 2]] {
        let r = gen_tau_statistic(&cohort, "m1", allele, &traits, None)?;
        println!("family traits {traits:?}: chi2 {:.3} on {} df, p {:.3e}", r.statistic, r.df, r.p_value);
    }
    let unrelated = cohort.into_case_control()?;
    let r = gen_tau_statistic(&unrelated, "m1", allele, &[0, 1, 2], None)?;
    println!("case-control, all traits: chi2 {:.3} on {} df, p {:.3e}", r.statistic, r.df, r.p_value);
    Ok(())
}
