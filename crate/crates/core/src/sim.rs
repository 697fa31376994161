//! Synthetic cohorts: Mendelian marker data on arbitrary pedigrees, trait
//! liabilities with optional causal and covariate effects, extended families
//! at a chosen scale, latent-model families and genotype corruption.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::kernels::TraitKind;
use crate::latentmodel::{generate_family, FamilyShape, LatentParams};
use crate::pedigree::{
    Allele, Cohort, CovariateTable, GenotypeCall, Individual, MarkerData, Pedigree, PhenotypeTable, Sex,
    StudyMode,
};

/// Common allele code; the minor (risk) allele is `RISK`.
pub const COMMON: Allele = 1;
pub const RISK: Allele = 2;

#[derive(Clone, Debug, PartialEq)]
pub enum Layout {
    Trios,
    /// Unrelated individuals, analysed in case-control mode.
    Singletons,
    Shape(FamilyShape),
    /// Three-generation families of the given sizes (each at least 3).
    Extended(Vec<usize>),
}

/// Marker effect on every trait liability: `(effect + interaction * z) *
/// (c - 2 maf)` with `c` the risk-allele count and `z` the covariate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Causal {
    pub marker: usize,
    pub effect: f64,
    pub interaction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CohortSim {
    pub layout: Layout,
    /// Ignored for `Extended`.
    pub families: usize,
    pub markers: usize,
    /// Risk-allele frequencies are uniform on this range.
    pub maf: (f64, f64),
    pub traits: Vec<TraitKind>,
    /// Correlation between the liabilities of one individual.
    pub trait_correlation: f64,
    pub causal: Option<Causal>,
    /// Main effect of `z - 1/2`, `z ~ uniform(0,1)`, on every liability. With `Some`, a
    /// continuous covariate column `z` is written.
    pub covariate_effect: Option<f64>,
}

impl Default for CohortSim {
    fn default() -> Self {
        CohortSim {
            layout: Layout::Trios,
            families: 100,
            markers: 10,
            maf: (0.1, 0.5),
            traits: vec![TraitKind::Ordinal { levels: 4 }],
            trait_correlation: 0.3,
            causal: None,
            covariate_effect: None,
        }
    }
}

/// Single-pedigree layout of a three-generation family of `size` members:
/// two founders, up to four offspring, then spouses with grandchildren.
pub fn extended_family(family_id: &str, size: usize) -> Result<Pedigree> {
    if size < 3 {
        return Err(Error::InvalidArgument(format!("family size must be at least 3, got {size}")));
    }
    let id = |s: String| format!("{family_id}_{s}");
    let fa = id("fa".into());
    let mo = id("mo".into());
    let mut members = vec![
        Individual::founder(family_id, &fa, Sex::Male),
        Individual::founder(family_id, &mo, Sex::Female),
    ];
    let sibs = (size - 2).min(4);
    let sex = |k: usize| if k.is_multiple_of(2) { Sex::Male } else { Sex::Female };
    for s in 0..sibs {
        members.push(Individual::child(family_id, &id(format!("s{s}")), &fa, &mo, sex(s)));
    }
    let mut left = size - 2 - sibs;
    let mut couple = 0;
    let mut last: Option<(String, String)> = None;
    let mut kid = 0;
    while left > 0 {
        if left == 1 || couple == sibs {
            let (f, m) = last.clone().unwrap_or((fa.clone(), mo.clone()));
            members.push(Individual::child(family_id, &id(format!("g{kid}")), &f, &m, Sex::Unknown));
            kid += 1;
            left -= 1;
            continue;
        }
        let sib = id(format!("s{couple}"));
        let spouse = id(format!("p{couple}"));
        let spouse_sex = if couple % 2 == 0 { Sex::Female } else { Sex::Male };
        members.push(Individual::founder(family_id, &spouse, spouse_sex));
        let (f, m) = if couple % 2 == 0 { (sib, spouse) } else { (spouse, sib) };
        let kids = if left >= 3 { 2 } else { 1 };
        for _ in 0..kids {
            members.push(Individual::child(family_id, &id(format!("g{kid}")), &f, &m, Sex::Unknown));
            kid += 1;
        }
        left -= 1 + kids;
        last = Some((f, m));
        couple += 1;
    }
    Pedigree::new(family_id, members)
}

/// Sizes of `families` families totalling `individuals`, as even as possible.
pub fn even_sizes(families: usize, individuals: usize) -> Result<Vec<usize>> {
    if families == 0 || individuals < 3 * families {
        return Err(Error::InvalidArgument(format!(
            "cannot split {individuals} individuals into {families} families of at least 3"
        )));
    }
    let base = individuals / families;
    let extra = individuals % families;
    Ok((0..families).map(|i| base + usize::from(i < extra)).collect())
}

fn pedigrees(layout: &Layout, families: usize) -> Result<Vec<Pedigree>> {
    match layout {
        Layout::Trios => Ok((0..families).map(|i| FamilyShape::Trio.build(&format!("F{i}"))).collect()),
        Layout::Shape(shape) => Ok((0..families).map(|i| shape.build(&format!("F{i}"))).collect()),
        Layout::Singletons => (0..families)
            .map(|i| {
                let fam = format!("S{i}");
                Pedigree::new(fam.clone(), vec![Individual::founder(&fam, &format!("{fam}_1"), Sex::Unknown)])
            })
            .collect(),
        Layout::Extended(sizes) => sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| extended_family(&format!("F{i}"), n))
            .collect(),
    }
}

/// Risk-allele counts per marker and individual (flattened pedigree order),
/// founders in Hardy-Weinberg equilibrium and one allele drawn from each
/// parent.
pub fn simulate_haplotypes(peds: &[Pedigree], freqs: &[f64], rng: &mut impl Rng) -> Vec<Vec<[bool; 2]>> {
    let n: usize = peds.iter().map(Pedigree::n).sum();
    let mut out = vec![vec![[false; 2]; n]; freqs.len()];
    let mut offset = 0;
    for ped in peds {
        for &j in ped.topological_order() {
            for (m, &f) in freqs.iter().enumerate() {
                let h = match ped.parents_of(j) {
                    None => [rng.random_bool(f), rng.random_bool(f)],
                    Some((fa, mo)) => {
                        let (a, b) = (out[m][offset + fa], out[m][offset + mo]);
                        [a[usize::from(rng.random_bool(0.5))], b[usize::from(rng.random_bool(0.5))]]
                    }
                };
                out[m][offset + j] = h;
            }
        }
        offset += ped.n();
    }
    out
}

fn call(h: [bool; 2]) -> GenotypeCall {
    let code = |b: bool| if b { RISK } else { COMMON };
    GenotypeCall::called(code(h[0]), code(h[1]))
}

/// Maps a liability to a trait value.
fn trait_value(kind: TraitKind, liability: f64) -> f64 {
    match kind {
        TraitKind::Quantitative => liability,
        TraitKind::Binary => f64::from(u8::from(liability > 0.0)),
        TraitKind::Ordinal { levels } => {
            let std = Normal::standard();
            (1..levels)
                .filter(|&k| liability > std.inverse_cdf(f64::from(k) / f64::from(levels)))
                .count() as f64
        }
    }
}

pub fn simulate_cohort(cfg: &CohortSim, rng: &mut impl Rng) -> Result<Cohort> {
    if cfg.traits.is_empty() {
        return Err(Error::InvalidArgument("at least one trait is required".into()));
    }
    if !(0.0..=1.0).contains(&cfg.trait_correlation) {
        return Err(Error::InvalidArgument("trait correlation must lie in [0, 1]".into()));
    }
    let (lo, hi) = cfg.maf;
    if !(0.0 < lo && lo <= hi && hi < 1.0) {
        return Err(Error::InvalidArgument(format!("invalid allele frequency range ({lo}, {hi})")));
    }
    if let Some(c) = cfg.causal {
        if c.marker >= cfg.markers {
            return Err(Error::InvalidArgument(format!(
                "causal marker {} out of range for {} markers",
                c.marker, cfg.markers
            )));
        }
    }
    let peds = pedigrees(&cfg.layout, cfg.families)?;
    let freqs: Vec<f64> = (0..cfg.markers).map(|_| rng.random_range(lo..=hi)).collect();
    let haps = simulate_haplotypes(&peds, &freqs, rng);
    let n: usize = peds.iter().map(Pedigree::n).sum();
    let z: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let rho = cfg.trait_correlation;
    let values = (0..n)
        .map(|g| {
            let mut mean = cfg.covariate_effect.unwrap_or(0.0) * (z[g] - 0.5);
            if let Some(c) = cfg.causal {
                let count = f64::from(u8::from(haps[c.marker][g][0]) + u8::from(haps[c.marker][g][1]));
                mean += (c.effect + c.interaction * z[g]) * (count - 2.0 * freqs[c.marker]);
            }
            let shared: f64 = rng.sample(StandardNormal);
            cfg.traits
                .iter()
                .map(|&kind| {
                    let own: f64 = rng.sample(StandardNormal);
                    Some(trait_value(kind, mean + rho.sqrt() * shared + (1.0 - rho).sqrt() * own))
                })
                .collect()
        })
        .collect();
    let phenotypes = PhenotypeTable {
        names: (1..=cfg.traits.len()).map(|k| format!("t{k}")).collect(),
        kinds: cfg.traits.clone(),
        values,
    };
    let covariates = cfg.covariate_effect.map(|_| {
        let mut t = CovariateTable {
            values: vec![Vec::new(); n],
            ..CovariateTable::default()
        };
        t.push_continuous("z", &z.iter().map(|&v| Some(v)).collect::<Vec<_>>());
        t
    });
    let markers = haps
        .iter()
        .enumerate()
        .map(|(m, h)| MarkerData {
            marker_id: format!("m{}", m + 1),
            calls: h.iter().map(|&x| call(x)).collect(),
        })
        .collect();
    let mode = if cfg.layout == Layout::Singletons {
        StudyMode::CaseControl
    } else {
        StudyMode::Family
    };
    Cohort::new(mode, peds, markers, phenotypes, covariates)
}

/// Families from the latent-variable trait model with one covariate
/// `x = 0.9 r2 + 0.2 r1 - 0.55` (`r1` per family, `r2` per member) and
/// `markers` unlinked null markers. The trait column is `y`, the covariate
/// column `x`.
pub fn simulate_latent_cohort(
    shape: FamilyShape,
    families: usize,
    params: &LatentParams,
    markers: usize,
    maf: f64,
    rng: &mut impl Rng,
) -> Result<Cohort> {
    params.validate()?;
    if params.beta.len() > 1 {
        return Err(Error::InvalidArgument("the latent simulator draws a single covariate".into()));
    }
    let peds = pedigrees(&Layout::Shape(shape), families)?;
    let mut y = Vec::new();
    let mut x = Vec::new();
    for ped in &peds {
        let r1: f64 = rng.random();
        let xs: Vec<Vec<f64>> = (0..ped.n())
            .map(|_| vec![0.9 * rng.random::<f64>() + 0.2 * r1 - 0.55])
            .collect();
        let design: Vec<Vec<f64>> = if params.beta.is_empty() {
            vec![Vec::new(); ped.n()]
        } else {
            xs.clone()
        };
        y.extend(generate_family(ped, &design, params, rng).into_iter().map(|v| vec![Some(v as f64)]));
        x.extend(xs.into_iter().map(|v| Some(v[0])));
    }
    let haps = simulate_haplotypes(&peds, &vec![maf; markers], rng);
    let n = y.len();
    let mut cov = CovariateTable {
        values: vec![Vec::new(); n],
        ..CovariateTable::default()
    };
    cov.push_continuous("x", &x);
    let phenotypes = PhenotypeTable {
        names: vec!["y".into()],
        kinds: vec![TraitKind::Ordinal {
            levels: params.levels() as u32,
        }],
        values: y,
    };
    let markers = haps
        .iter()
        .enumerate()
        .map(|(m, h)| MarkerData {
            marker_id: format!("m{}", m + 1),
            calls: h.iter().map(|&c| call(c)).collect(),
        })
        .collect();
    Cohort::new(StudyMode::Family, peds, markers, phenotypes, Some(cov))
}

/// Replaces the genotype of `round(fraction * eligible)` nonfounders at
/// `marker` with a homozygote for an allele no parent carries. Only
/// individuals without offspring and with genotyped parents are eligible, so
/// each replacement causes exactly one Mendelian violation. Returns the
/// global indices changed, ascending.
pub fn corrupt_leaves(cohort: &mut Cohort, marker: usize, fraction: f64, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if marker >= cohort.markers.len() {
        return Err(Error::InvalidArgument(format!("no marker at index {marker}")));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("fraction must lie in [0, 1], got {fraction}")));
    }
    let n = cohort.n_individuals();
    let mut has_child = vec![false; n];
    for g in 0..n {
        if let Some((f, m)) = cohort.parents(g) {
            has_child[f] = true;
            has_child[m] = true;
        }
    }
    let calls = &cohort.markers[marker].calls;
    let eligible: Vec<usize> = (0..n)
        .filter(|&g| {
            !has_child[g]
                && cohort
                    .parents(g)
                    .is_some_and(|(f, m)| !calls[f].is_missing() && !calls[m].is_missing())
        })
        .collect();
    let novel = cohort.markers[marker].observed_alleles().last().map_or(1, |a| a + 1);
    let k = (fraction * eligible.len() as f64).round() as usize;
    let mut chosen: Vec<usize> = sample(rng, eligible.len(), k).iter().map(|i| eligible[i]).collect();
    chosen.sort_unstable();
    for &g in &chosen {
        cohort.markers[marker].calls[g] = GenotypeCall::called(novel, novel);
    }
    Ok(chosen)
}
