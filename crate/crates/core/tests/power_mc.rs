mod common;

use common::*;
use gentau::dist::noncentral_chi2_sf;
use gentau::power::{alt_distribution, match_moments};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[test]
fn weighted_sum_matches_quadratic_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let spec = random_spec(4, &mut rng);
    let w = alt_distribution(&spec).unwrap();
    let n = 1_000_000;
    let direct = quadratic_form_draws(&spec, n, &mut rng);
    let mixture: Vec<f64> = (0..n).map(|_| w.sample(&mut rng)).collect();
    let d = ks_two_sample(&direct, &mixture);
    assert!(d < 0.01, "two-sample KS distance {d}");
}

#[test]
fn approximation_tails_for_skewed_weights() {
    let w = gentau::power::WeightedChiSq {
        e: vec![2.0, 1.0, 0.5],
        phi: vec![1.0, 0.0, 0.0],
        q: nalgebra::DMatrix::identity(3, 3),
        pinv_fallback: false,
        null_df: 3,
    };
    let approx = match_moments(&w).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(201);
    let mut draws: Vec<f64> = (0..1_000_000).map(|_| w.sample(&mut rng)).collect();
    draws.sort_by(f64::total_cmp);
    for q in [0.9, 0.95, 0.99] {
        let t = draws[(q * draws.len() as f64) as usize];
        assert!((approx.sf(t) - (1.0 - q)).abs() < 0.01, "quantile {q}: {}", approx.sf(t));
    }
}

#[test]
fn noncentral_sf_matches_simulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let draws = 200_000;
    for _ in 0..20 {
        let df = rng.random_range(1..=6);
        let ncp = rng.random::<f64>() * 8.0;
        let x = rng.random::<f64>() * 20.0 + 0.5;
        let shift = (ncp / df as f64).sqrt();
        let hits = (0..draws)
            .filter(|_| {
                (0..df)
                    .map(|_| (rng.sample::<f64, _>(StandardNormal) + shift).powi(2))
                    .sum::<f64>()
                    > x
            })
            .count();
        let mc = hits as f64 / draws as f64;
        let sf = noncentral_chi2_sf(x, df as f64, ncp);
        assert!((sf - mc).abs() < 0.004, "df {df} ncp {ncp} x {x}: {sf} vs {mc}");
    }
}
