use gentau::latentmodel::{
    family_loglik, fit, generate_family, loglik_enumerated, FamilyData, FamilyShape, LatentParams, ParamMask,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

fn params() -> LatentParams {
    LatentParams {
        theta1: 0.4,
        theta2: 0.3,
        beta: vec![0.8],
        gamma: [1.2, 0.7, -0.5],
        alpha: vec![0.2],
    }
}

#[test]
fn generated_trio_patterns_follow_the_likelihood() {
    let ped = FamilyShape::Trio.build("f");
    let x = vec![vec![0.5], vec![-1.0], vec![1.5]];
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let draws = 100_000;
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    for _ in 0..draws {
        *counts.entry(generate_family(&ped, &x, &p, &mut rng)).or_default() += 1;
    }
    let mut total = 0.0;
    for code in 0..8usize {
        let y: Vec<usize> = (0..3).map(|b| code >> b & 1).collect();
        let fam = FamilyData {
            pedigree: ped.clone(),
            x: x.clone(),
            y: y.clone(),
        };
        let prob = loglik_enumerated(&fam, &p).unwrap().exp();
        let fast = family_loglik(&fam, &p).unwrap().exp();
        assert!((prob - fast).abs() < 1e-12);
        total += prob;
        let freq = *counts.get(&y).unwrap_or(&0) as f64 / draws as f64;
        let sd = (prob * (1.0 - prob) / draws as f64).sqrt();
        assert!((freq - prob).abs() < 5.0 * sd, "{y:?}: {freq} vs {prob}");
    }
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn seven_member_likelihoods_agree() {
    let ped = FamilyShape::Seven.build("f");
    let x: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64 * 0.3 - 1.0]).collect();
    let mut p = params();
    p.alpha = vec![-0.5, 0.4, 1.1];
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    for _ in 0..5 {
        let y = generate_family(&ped, &x, &p, &mut rng);
        let fam = FamilyData {
            pedigree: ped.clone(),
            x: x.clone(),
            y,
        };
        let a = loglik_enumerated(&fam, &p).unwrap();
        let b = family_loglik(&fam, &p).unwrap();
        assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }
}

#[test]
fn fit_recovers_covariate_and_major_effects() {
    let mut truth = params();
    truth.gamma = [2.0, 0.0, 0.0];
    truth.theta2 = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(302);
    let families: Vec<FamilyData> = (0..400)
        .map(|i| {
            let ped = FamilyShape::Trio.build(&format!("f{i}"));
            let x: Vec<Vec<f64>> = (0..3).map(|_| vec![rand::Rng::random::<f64>(&mut rng) * 2.0 - 1.0]).collect();
            let y = generate_family(&ped, &x, &truth, &mut rng);
            FamilyData { pedigree: ped, x, y }
        })
        .collect();
    let mut mask = ParamMask::all();
    mask.theta2 = false;
    mask.gamma = [true, false, false];
    let mut init = truth.clone();
    init.theta1 = 0.5;
    init.beta = vec![0.0];
    init.gamma = [1.0, 0.0, 0.0];
    init.alpha = vec![0.0];
    let r = fit(&families, mask, &init).unwrap();
    assert!((r.params.beta[0] - 0.8).abs() < 0.35, "{:?}", r.params);
    assert!(r.loglik >= gentau::latentmodel::loglik(&families, &truth).unwrap() - 1e-6);
}
