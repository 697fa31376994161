#![allow(dead_code)]

use gentau::kernels::TraitKind;
use gentau::pedigree::{Cohort, CovariateTable, GenotypeCall, Individual, MarkerData, Pedigree, PhenotypeTable, Sex, StudyMode};
use rand::Rng;

/// One nuclear family: parental calls and, per child, its call and traits.
pub struct Family {
    pub father: GenotypeCall,
    pub mother: GenotypeCall,
    pub children: Vec<(GenotypeCall, Vec<f64>)>,
}

/// Cohort of nuclear families with a single marker `m`; parents carry `NA`
/// traits. `z` gives one continuous covariate per child when present.
pub fn nuclear_cohort(families: &[Family], kinds: &[TraitKind], z: Option<&[f64]>) -> Cohort {
    let mut peds = Vec::new();
    let mut calls = Vec::new();
    let mut values = Vec::new();
    let mut cov = Vec::new();
    let mut child = 0;
    for (i, f) in families.iter().enumerate() {
        let fam = format!("f{i}");
        let (fa, mo) = (format!("f{i}_fa"), format!("f{i}_mo"));
        let mut members = vec![
            Individual::founder(&fam, &fa, Sex::Male),
            Individual::founder(&fam, &mo, Sex::Female),
        ];
        calls.extend([f.father, f.mother]);
        values.push(vec![None; kinds.len()]);
        values.push(vec![None; kinds.len()]);
        cov.push(vec![None]);
        cov.push(vec![None]);
        for (k, (call, traits)) in f.children.iter().enumerate() {
            members.push(Individual::child(&fam, &format!("f{i}_c{k}"), &fa, &mo, Sex::Unknown));
            calls.push(*call);
            values.push(traits.iter().map(|&v| Some(v)).collect());
            cov.push(vec![z.map(|z| z[child])]);
            child += 1;
        }
        peds.push(Pedigree::new(fam, members).unwrap());
    }
    let phen = PhenotypeTable {
        names: (1..=kinds.len()).map(|k| format!("t{k}")).collect(),
        kinds: kinds.to_vec(),
        values,
    };
    let covariates = z.map(|_| {
        let mut t = CovariateTable {
            values: vec![Vec::new(); cov.len()],
            ..CovariateTable::default()
        };
        t.push_continuous("z", &cov.iter().map(|r| r[0]).collect::<Vec<_>>());
        t
    });
    Cohort::new(
        StudyMode::Family,
        peds,
        vec![MarkerData {
            marker_id: "m".into(),
            calls,
        }],
        phen,
        covariates,
    )
    .unwrap()
}

pub fn random_trait(kind: TraitKind, rng: &mut impl Rng) -> f64 {
    match kind {
        TraitKind::Quantitative => rng.random::<f64>() * 4.0 - 2.0,
        TraitKind::Binary => f64::from(u8::from(rng.random_bool(0.5))),
        TraitKind::Ordinal { levels } => f64::from(rng.random_range(0..levels)),
    }
}

/// Genotype with `count` copies of allele 1 (the other allele is 2).
pub fn genotype(count: u8) -> GenotypeCall {
    match count {
        0 => GenotypeCall::called(2, 2),
        1 => GenotypeCall::called(1, 2),
        _ => GenotypeCall::called(1, 1),
    }
}

/// Kolmogorov-Smirnov distance of `p` from uniform(0,1) and its asymptotic
/// p-value.
pub fn ks_uniform(p: &[f64]) -> (f64, f64) {
    let mut s = p.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max);
    (d, kolmogorov_sf((n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d))
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut total = 0.0;
    for k in 1..200 {
        let k = f64::from(k);
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        total += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    total.clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

fn kernel(kind: TraitKind, d: f64) -> f64 {
    match kind {
        TraitKind::Ordinal { .. } => {
            if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        _ => d,
    }
}

/// `S_k = 2/(n(n-1)) sum_{i<j} F_ij^k w_ij (c_i - c_j)` by direct double loop.
pub fn u_double_loop(traits: &[Vec<f64>], kinds: &[TraitKind], c: &[f64], w: &dyn Fn(usize, usize) -> f64) -> Vec<f64> {
    let n = c.len();
    let mut s = vec![0.0; kinds.len()];
    for i in 0..n {
        for j in i + 1..n {
            let wij = w(i, j);
            for (k, &kind) in kinds.iter().enumerate() {
                s[k] += kernel(kind, traits[i][k] - traits[j][k]) * wij * (c[i] - c[j]);
            }
        }
    }
    let scale = 2.0 / (n as f64 * (n as f64 - 1.0));
    s.iter().map(|x| x * scale).collect()
}

/// Mean and covariance of the double-loop `S` over every equally likely
/// combination of heterozygous-parent transmissions. `parents[i]` holds
/// the allele-1 counts of child `i`'s parents.
pub fn enumerate_moments(
    traits: &[Vec<f64>],
    kinds: &[TraitKind],
    parents: &[(u8, u8)],
    w: &dyn Fn(usize, usize) -> f64,
) -> (Vec<f64>, Vec<Vec<f64>>, usize) {
    let mut slots = Vec::new();
    for (i, &(f, m)) in parents.iter().enumerate() {
        if f == 1 {
            slots.push(i);
        }
        if m == 1 {
            slots.push(i);
        }
    }
    let meioses = slots.len();
    let p = kinds.len();
    let outcomes = 1usize << meioses;
    let mut mean = vec![0.0; p];
    let mut second = vec![vec![0.0; p]; p];
    for bits in 0..outcomes {
        let mut c: Vec<f64> = parents
            .iter()
            .map(|&(f, m)| f64::from(u8::from(f == 2) + u8::from(m == 2)))
            .collect();
        for (b, &i) in slots.iter().enumerate() {
            if bits >> b & 1 == 1 {
                c[i] += 1.0;
            }
        }
        let s = u_double_loop(traits, kinds, &c, w);
        for k in 0..p {
            mean[k] += s[k];
            for l in 0..p {
                second[k][l] += s[k] * s[l];
            }
        }
    }
    let inv = 1.0 / outcomes as f64;
    mean.iter_mut().for_each(|x| *x *= inv);
    let cov = (0..p)
        .map(|k| (0..p).map(|l| second[k][l] * inv - mean[k] * mean[l]).collect())
        .collect();
    (mean, cov, meioses)
}

/// Random nuclear families whose children carry `kinds` traits, with at most
/// `max_meioses` heterozygous parent-to-child transmissions in total (and at
/// least one). Also returns the per-child traits, parental counts and
/// observed counts in cohort order.
pub struct SmallCohort {
    pub families: Vec<Family>,
    pub traits: Vec<Vec<f64>>,
    pub parents: Vec<(u8, u8)>,
    pub c: Vec<f64>,
}

pub fn small_cohort(kinds: &[TraitKind], max_meioses: usize, rng: &mut impl Rng) -> SmallCohort {
    loop {
        let n_fam = rng.random_range(1..=4);
        let mut out = SmallCohort {
            families: Vec::new(),
            traits: Vec::new(),
            parents: Vec::new(),
            c: Vec::new(),
        };
        let mut meioses = 0;
        for _ in 0..n_fam {
            let (f, m): (u8, u8) = (rng.random_range(0..=2), rng.random_range(0..=2));
            let kids = rng.random_range(1..=2);
            let mut children = Vec::new();
            for _ in 0..kids {
                meioses += usize::from(f == 1) + usize::from(m == 1);
                let from = |g: u8, rng: &mut dyn rand::RngCore| match g {
                    0 => 0,
                    2 => 1,
                    _ => u8::from(rng.random_bool(0.5)),
                };
                let c = from(f, rng) + from(m, rng);
                let t: Vec<f64> = kinds.iter().map(|&k| random_trait(k, rng)).collect();
                out.traits.push(t.clone());
                out.parents.push((f, m));
                out.c.push(f64::from(c));
                children.push((genotype(c), t));
            }
            out.families.push(Family {
                father: genotype(f),
                mother: genotype(m),
                children,
            });
        }
        if (1..=max_meioses).contains(&meioses) && out.c.len() >= 2 {
            return out;
        }
    }
}

/// Random alternative with `p` traits: a well-conditioned `sigma0`, `sigma1`
/// a rescaled copy of it and a mean shift of moderate size.
pub fn random_spec(p: usize, rng: &mut impl Rng) -> gentau::power::AltSpec {
    use nalgebra::{DMatrix, DVector};
    let a = DMatrix::from_fn(p, p, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let sigma0 = &a * a.transpose() + DMatrix::identity(p, p) * 0.5;
    let d = DMatrix::from_diagonal(&DVector::from_fn(p, |_, _| 0.8 + 0.45 * rng.random::<f64>()));
    let sigma1 = &d * &sigma0 * &d;
    let l0 = sigma0.clone().cholesky().unwrap().l();
    let scale = rng.random::<f64>() * 1.5;
    let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let mu = l0 * z * scale;
    gentau::power::AltSpec { sigma0, sigma1, mu }
}

/// Draws of `S' sigma0^{-1} S` with `S ~ N(mu, sigma1)`, straight from the
/// definition of the test statistic.
pub fn quadratic_form_draws(spec: &gentau::power::AltSpec, draws: usize, rng: &mut impl Rng) -> Vec<f64> {
    use nalgebra::DVector;
    let p = spec.p();
    let l1 = spec.sigma1.clone().cholesky().unwrap().l();
    let inv0 = spec.sigma0.clone().try_inverse().unwrap();
    (0..draws)
        .map(|_| {
            let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            let s = &spec.mu + &l1 * z;
            (s.transpose() * &inv0 * &s)[(0, 0)]
        })
        .collect()
}
