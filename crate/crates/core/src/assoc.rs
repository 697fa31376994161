//! Association statistics: weighted transmission scores (TDT, QTDT), the
//! ordinal O-TDT and its covariate-adjusted form, Kendall's tau and the
//! generalized (optionally covariate-weighted) Kendall's tau.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dist::chi2_sf;
use crate::error::{Error, Result};
use crate::kernels::{
    component_kernel, covariate_design, covariate_weight, prepare_covariates, PreparedCovariates,
    TraitKind, WeightKernel,
};
use crate::pedigree::{allele_count, Allele, Cohort, GenotypeCall, StudyMode};
use crate::propodds::{fit_cumulative_logit, PropOddsFit};

/// Relative eigenvalue cutoff of the pseudo-inverse.
pub const PINV_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Tdt,
    Qtdt,
    Otdt,
    OtdtAdjusted,
    GenTau,
    GenTauWeighted,
    /// Transmission score with caller-supplied weights.
    CustomScore,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Tdt => "tdt",
            Method::Qtdt => "qtdt",
            Method::Otdt => "otdt",
            Method::OtdtAdjusted => "otdt_adjusted",
            Method::GenTau => "gen_tau",
            Method::GenTauWeighted => "gen_tau_weighted",
            Method::CustomScore => "custom_score",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "tdt" => Method::Tdt,
            "qtdt" => Method::Qtdt,
            "otdt" => Method::Otdt,
            "otdt_adjusted" => Method::OtdtAdjusted,
            "gen_tau" => Method::GenTau,
            "gen_tau_weighted" => Method::GenTauWeighted,
            other => return Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssocResult {
    pub marker_id: String,
    pub method: Method,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub s: Vec<f64>,
    pub e0_s: Vec<f64>,
    pub var0_s: DMatrix<f64>,
    pub n_used: usize,
}

/// Distribution of an offspring's chosen-allele count given its parents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OffspringTransmissionLaw {
    probs: [f64; 3],
}

impl OffspringTransmissionLaw {
    /// `(count, probability)` pairs with positive probability.
    pub fn support(&self) -> Vec<(u8, f64)> {
        (0..3u8)
            .filter(|&c| self.probs[c as usize] > 0.0)
            .map(|c| (c, self.probs[c as usize]))
            .collect()
    }

    pub fn prob(&self, count: u8) -> f64 {
        self.probs.get(count as usize).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.probs[1] + 2.0 * self.probs[2]
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.probs[1] + 4.0 * self.probs[2] - m * m
    }
}

/// Each parent passes either allele with probability 1/2, independently.
pub fn mendelian_offspring_law(
    father: GenotypeCall,
    mother: GenotypeCall,
    chosen: Allele,
) -> Result<OffspringTransmissionLaw> {
    let pf = f64::from(allele_count(father, chosen).ok_or(Error::MissingParent)?) / 2.0;
    let pm = f64::from(allele_count(mother, chosen).ok_or(Error::MissingParent)?) / 2.0;
    Ok(OffspringTransmissionLaw {
        probs: [
            (1.0 - pf) * (1.0 - pm),
            pf * (1.0 - pm) + (1.0 - pf) * pm,
            pf * pm,
        ],
    })
}

/// Chosen-allele counts of the individuals entering a test, with their null
/// means and variances.
#[derive(Clone, Debug)]
struct Transmissions {
    /// Positions into the candidate list.
    positions: Vec<usize>,
    used: Vec<usize>,
    c: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
}

/// Individuals eligible before looking at genotypes: offspring in family
/// mode, everyone in case-control mode, filtered by `keep`.
fn candidates(cohort: &Cohort, keep: impl Fn(usize) -> bool) -> Vec<usize> {
    (0..cohort.n_individuals())
        .filter(|&g| (cohort.mode == StudyMode::CaseControl || !cohort.is_founder(g)) && keep(g))
        .collect()
}

fn transmissions(cohort: &Cohort, marker: usize, chosen: Allele, candidates: &[usize]) -> Result<Transmissions> {
    let data = &cohort.markers[marker];
    let mut t = Transmissions {
        positions: Vec::new(),
        used: Vec::new(),
        c: Vec::new(),
        mean: Vec::new(),
        var: Vec::new(),
    };
    for (pos, &g) in candidates.iter().enumerate() {
        let Some(c) = allele_count(data.calls[g], chosen) else {
            continue;
        };
        let law = match cohort.mode {
            StudyMode::CaseControl => None,
            StudyMode::Family => {
                let Some((f, m)) = cohort.parents(g) else {
                    continue;
                };
                match mendelian_offspring_law(data.calls[f], data.calls[m], chosen) {
                    Ok(law) => Some(law),
                    Err(_) => continue,
                }
            }
        };
        t.positions.push(pos);
        t.used.push(g);
        t.c.push(f64::from(c));
        if let Some(law) = law {
            t.mean.push(law.mean());
            t.var.push(law.variance());
        }
    }
    let n = t.used.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, have: n });
    }
    if cohort.mode == StudyMode::CaseControl {
        let mean = t.c.iter().sum::<f64>() / n as f64;
        let var = t.c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        t.mean = vec![mean; n];
        t.var = vec![var; n];
    }
    if t.var.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateMarker {
            marker: data.marker_id.clone(),
            reason: "no informative transmissions (monomorphic marker or homozygous parents)".into(),
        });
    }
    Ok(t)
}

/// Score `sum w_i c_i` against its null moments, as a 1-df chi-square.
fn scalar_score(t: &Transmissions, w: &[f64], marker_id: &str, method: Method) -> Result<AssocResult> {
    let s: f64 = w.iter().zip(&t.c).map(|(w, c)| w * c).sum();
    let e: f64 = w.iter().zip(&t.mean).map(|(w, m)| w * m).sum();
    let v: f64 = w.iter().zip(&t.var).map(|(w, v)| w * w * v).sum();
    if v <= 0.0 {
        return Err(Error::DegenerateMarker {
            marker: marker_id.to_string(),
            reason: "every weighted offspring has a non-informative transmission".into(),
        });
    }
    let statistic = (s - e).powi(2) / v;
    Ok(AssocResult {
        marker_id: marker_id.to_string(),
        method,
        statistic,
        df: 1,
        p_value: chi2_sf(statistic, 1.0),
        s: vec![s],
        e0_s: vec![e],
        var0_s: DMatrix::from_element(1, 1, v),
        n_used: t.used.len(),
    })
}

/// `d' V^+ d` with eigenvalues below `PINV_TOLERANCE * max` discarded, and
/// the number kept.
pub fn pinv_quadratic_form(d: &DVector<f64>, v: &DMatrix<f64>) -> (f64, usize) {
    let eig = SymmetricEigen::new(v.clone());
    let max = eig.eigenvalues.max();
    if max <= 0.0 {
        return (0.0, 0);
    }
    let cutoff = PINV_TOLERANCE * max;
    let mut q = 0.0;
    let mut rank = 0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cutoff {
            let proj = eig.eigenvectors.column(k).dot(d);
            q += proj * proj / lambda;
            rank += 1;
        }
    }
    (q, rank)
}

/// Covariate weighting for the generalized tau.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSpec {
    /// Covariate columns of the cohort.
    pub covariates: Vec<usize>,
    /// `None` picks the median nonzero pairwise distance.
    pub bandwidth: Option<f64>,
    pub kernel: WeightKernel,
}

/// Generalized Kendall's tau for one cohort and trait selection. Trait
/// kernels and covariate weights are computed once and reused across markers.
#[derive(Clone, Debug)]
pub struct TauPlan<'a> {
    cohort: &'a Cohort,
    candidates: Vec<usize>,
    p: usize,
    kinds: Vec<TraitKind>,
    /// Row-major `candidates x p`.
    values: Vec<f64>,
    weights: Option<PreparedCovariates>,
    ubar_all: Vec<f64>,
}

impl<'a> TauPlan<'a> {
    pub fn new(cohort: &'a Cohort, traits: &[usize], weights: Option<&WeightSpec>) -> Result<Self> {
        if traits.is_empty() {
            return Err(Error::InvalidArgument("no traits selected".into()));
        }
        let ncol = cohort.phenotypes.names.len();
        if let Some(&bad) = traits.iter().find(|&&t| t >= ncol) {
            return Err(Error::UnknownTrait(format!("column {bad}")));
        }
        let covs = weights.map_or(&[][..], |w| &w.covariates[..]);
        if weights.is_some() {
            let n = cohort.covariates.as_ref().map_or(0, |c| c.names.len());
            if cohort.covariates.is_none() {
                return Err(Error::InvalidArgument("weighting requested but cohort has no covariates".into()));
            }
            if let Some(&bad) = covs.iter().find(|&&c| c >= n) {
                return Err(Error::UnknownCovariate(format!("column {bad}")));
            }
        }
        let candidates = candidates(cohort, |g| {
            traits.iter().all(|&t| cohort.phenotypes.values[g][t].is_some())
                && (weights.is_none() || cohort.covariate_vector(g, covs).is_some())
        });
        let p = traits.len();
        let kinds = traits.iter().map(|&t| cohort.phenotypes.kinds[t]).collect();
        let values = candidates
            .iter()
            .flat_map(|&g| traits.iter().map(move |&t| cohort.phenotypes.values[g][t].unwrap_or(0.0)))
            .collect();
        let weights = match weights {
            None => None,
            Some(spec) => {
                let z = candidates
                    .iter()
                    .map(|&g| cohort.covariate_vector(g, covs).unwrap_or_default())
                    .collect();
                Some(prepare_covariates(z, spec.bandwidth, spec.kernel)?)
            }
        };
        let mut plan = TauPlan {
            cohort,
            candidates,
            p,
            kinds,
            values,
            weights,
            ubar_all: Vec::new(),
        };
        let all: Vec<usize> = (0..plan.candidates.len()).collect();
        plan.ubar_all = plan.ubar(&all);
        Ok(plan)
    }

    pub fn method(&self) -> Method {
        if self.weights.is_some() {
            Method::GenTauWeighted
        } else {
            Method::GenTau
        }
    }

    /// Bandwidth in force, if weighted.
    pub fn bandwidth(&self) -> Option<f64> {
        self.weights.as_ref().map(|w| w.config.bandwidth())
    }

    /// `u_i = n^{-1} sum_{j != i} F_ij w_ij` over the candidate positions in
    /// `subset`, row-major `subset x p`.
    fn ubar(&self, subset: &[usize]) -> Vec<f64> {
        let p = self.p;
        let n = subset.len();
        let mut u = vec![0.0; n * p];
        for a in 0..n {
            let ia = subset[a];
            let va = &self.values[ia * p..(ia + 1) * p];
            for b in a + 1..n {
                let ib = subset[b];
                let w = match &self.weights {
                    None => 1.0,
                    Some(pc) => covariate_weight(&pc.z[ia], &pc.z[ib], &pc.config),
                };
                if w == 0.0 {
                    continue;
                }
                let vb = &self.values[ib * p..(ib + 1) * p];
                for k in 0..p {
                    let f = component_kernel(self.kinds[k], va[k] - vb[k]) * w;
                    u[a * p + k] += f;
                    u[b * p + k] -= f;
                }
            }
        }
        let scale = 1.0 / n as f64;
        u.iter_mut().for_each(|x| *x *= scale);
        u
    }

    pub fn test(&self, marker_id: &str, chosen: Allele) -> Result<AssocResult> {
        let marker = self.cohort.marker_index(marker_id)?;
        self.test_index(marker, chosen)
    }

    pub fn test_index(&self, marker: usize, chosen: Allele) -> Result<AssocResult> {
        let marker_id = &self.cohort.markers[marker].marker_id;
        let t = transmissions(self.cohort, marker, chosen, &self.candidates)?;
        let owned;
        let u: &[f64] = if t.positions.len() == self.candidates.len() {
            &self.ubar_all
        } else {
            owned = self.ubar(&t.positions);
            &owned
        };
        let (p, n) = (self.p, t.used.len());
        let scale = 2.0 / (n as f64 - 1.0);
        let mut s = DVector::zeros(p);
        let mut e = DVector::zeros(p);
        let mut v = DMatrix::zeros(p, p);
        for i in 0..n {
            let ui = &u[i * p..(i + 1) * p];
            for k in 0..p {
                s[k] += ui[k] * t.c[i];
                e[k] += ui[k] * t.mean[i];
                if t.var[i] != 0.0 {
                    for l in 0..p {
                        v[(k, l)] += ui[k] * ui[l] * t.var[i];
                    }
                }
            }
        }
        s *= scale;
        e *= scale;
        v *= scale * scale;
        let (statistic, rank) = if u.iter().all(|&x| x == 0.0) {
            // no pair differs in trait (or all pairs carry zero weight)
            (0.0, 0)
        } else {
            let (q, rank) = pinv_quadratic_form(&(&s - &e), &v);
            if rank == 0 {
                return Err(Error::DegenerateMarker {
                    marker: marker_id.clone(),
                    reason: "null variance of S is zero".into(),
                });
            }
            (q, rank)
        };
        let df = rank.max(1);
        Ok(AssocResult {
            marker_id: marker_id.clone(),
            method: self.method(),
            statistic,
            df,
            p_value: if rank == 0 { 1.0 } else { chi2_sf(statistic, df as f64) },
            s: s.iter().copied().collect(),
            e0_s: e.iter().copied().collect(),
            var0_s: v,
            n_used: n,
        })
    }
}

pub fn gen_tau_statistic(
    cohort: &Cohort,
    marker_id: &str,
    chosen: Allele,
    traits: &[usize],
    weights: Option<&WeightSpec>,
) -> Result<AssocResult> {
    TauPlan::new(cohort, traits, weights)?.test(marker_id, chosen)
}

fn ordinal_trait(cohort: &Cohort, trait_col: usize) -> Result<()> {
    let name = cohort
        .phenotypes
        .names
        .get(trait_col)
        .ok_or_else(|| Error::UnknownTrait(format!("column {trait_col}")))?;
    match cohort.phenotypes.kinds[trait_col] {
        TraitKind::Ordinal { .. } | TraitKind::Binary => Ok(()),
        TraitKind::Quantitative => Err(Error::TraitType {
            name: name.clone(),
            msg: "an ordinal (or binary) trait is required".into(),
        }),
    }
}

fn trait_values(cohort: &Cohort, used: &[usize], trait_col: usize) -> Vec<f64> {
    used.iter()
        .map(|&g| cohort.phenotypes.values[g][trait_col].unwrap_or(f64::NAN))
        .collect()
}

/// `R+(y_i) - R-(y_i)`: how many subjects have a larger trait value minus how
/// many have a smaller one. Ties count toward neither.
pub fn rank_count_weights(y: &[f64]) -> Vec<f64> {
    let mut sorted = y.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    y.iter()
        .map(|&v| {
            let below = sorted.partition_point(|&x| x < v);
            let above = sorted.len() - sorted.partition_point(|&x| x <= v);
            above as f64 - below as f64
        })
        .collect()
}

/// O-TDT for a single ordinal trait.
pub fn otdt_statistic(cohort: &Cohort, marker_id: &str, chosen: Allele, trait_col: usize) -> Result<AssocResult> {
    ordinal_trait(cohort, trait_col)?;
    let marker = cohort.marker_index(marker_id)?;
    let cands = candidates(cohort, |g| cohort.phenotypes.values[g][trait_col].is_some());
    let t = transmissions(cohort, marker, chosen, &cands)?;
    let w = rank_count_weights(&trait_values(cohort, &t.used, trait_col));
    if w.iter().all(|&x| x == 0.0) {
        return Err(Error::DegenerateVariance("all trait values are tied".into()));
    }
    scalar_score(&t, &w, marker_id, Method::Otdt)
}

/// `1 - gamma(y) - gamma(y - 1)`, i.e. `P(Y > y | z) - P(Y < y | z)` under
/// the fitted null model.
pub fn adjusted_weights(fit: &PropOddsFit, y: &[usize], z: &DMatrix<f64>) -> Vec<f64> {
    y.iter()
        .enumerate()
        .map(|(i, &level)| {
            let row: Vec<f64> = z.row(i).iter().copied().collect();
            let k = level as isize;
            1.0 - fit.gamma_hat(k, &row) - fit.gamma_hat(k - 1, &row)
        })
        .collect()
}

/// O-TDT with weights from a proportional-odds null fit on `covariates`.
pub fn otdt_adjusted_statistic(
    cohort: &Cohort,
    marker_id: &str,
    chosen: Allele,
    trait_col: usize,
    covariates: &[usize],
) -> Result<AssocResult> {
    ordinal_trait(cohort, trait_col)?;
    let marker = cohort.marker_index(marker_id)?;
    let cands = candidates(cohort, |g| {
        cohort.phenotypes.values[g][trait_col].is_some()
            && (covariates.is_empty() || cohort.covariate_vector(g, covariates).is_some())
    });
    let t = transmissions(cohort, marker, chosen, &cands)?;
    let y: Vec<usize> = trait_values(cohort, &t.used, trait_col)
        .iter()
        .map(|&v| v as usize)
        .collect();
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::DegenerateVariance("all trait values are tied".into()));
    }
    let z = if covariates.is_empty() {
        DMatrix::zeros(y.len(), 0)
    } else {
        covariate_design(cohort, &t.used, covariates)?
    };
    let fit = fit_cumulative_logit(&y, &z)?;
    let w = adjusted_weights(&fit, &y, &z);
    scalar_score(&t, &w, marker_id, Method::OtdtAdjusted)
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScoreWeights {
    /// `w = 1`: the classic TDT.
    Unit,
    /// `w = y - mean(y)` for a trait column: QTDT.
    CenteredTrait(usize),
    /// One weight per individual (global index); `None` excludes.
    Custom(Vec<Option<f64>>),
}

/// `sum w_i c_i` over offspring with genotyped parents.
pub fn weighted_score_statistic(
    cohort: &Cohort,
    marker_id: &str,
    chosen: Allele,
    weights: &ScoreWeights,
) -> Result<AssocResult> {
    if cohort.mode != StudyMode::Family {
        return Err(Error::InvalidArgument("transmission scores need family data".into()));
    }
    let marker = cohort.marker_index(marker_id)?;
    let (method, cands) = match weights {
        ScoreWeights::Unit => (Method::Tdt, candidates(cohort, |_| true)),
        ScoreWeights::CenteredTrait(col) => {
            let name = cohort
                .phenotypes
                .names
                .get(*col)
                .ok_or_else(|| Error::UnknownTrait(format!("column {col}")))?;
            if let TraitKind::Ordinal { .. } = cohort.phenotypes.kinds[*col] {
                return Err(Error::TraitType {
                    name: name.clone(),
                    msg: "centered weights need a quantitative or binary trait".into(),
                });
            }
            (
                Method::Qtdt,
                candidates(cohort, |g| cohort.phenotypes.values[g][*col].is_some()),
            )
        }
        ScoreWeights::Custom(w) => {
            if w.len() != cohort.n_individuals() {
                return Err(Error::LengthMismatch {
                    left: w.len(),
                    right: cohort.n_individuals(),
                });
            }
            (Method::CustomScore, candidates(cohort, |g| w[g].is_some()))
        }
    };
    let t = transmissions(cohort, marker, chosen, &cands)?;
    let w: Vec<f64> = match weights {
        ScoreWeights::Unit => vec![1.0; t.used.len()],
        ScoreWeights::CenteredTrait(col) => {
            let y = trait_values(cohort, &t.used, *col);
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            y.iter().map(|v| v - mean).collect()
        }
        ScoreWeights::Custom(w) => t.used.iter().map(|&g| w[g].unwrap_or(0.0)).collect(),
    };
    if w.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroWeights);
    }
    scalar_score(&t, &w, marker_id, method)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KendallTau {
    pub concordant: u64,
    pub discordant: u64,
    /// Average sign-kernel product over pairs.
    pub u: f64,
    /// `(C - D) / sqrt(n(n-1)(2n+5)/18)`.
    pub tau: f64,
}

impl KendallTau {
    /// Two-sided normal p-value of `tau`.
    pub fn p_value(&self) -> f64 {
        let z = Normal::new(0.0, 1.0).expect("standard normal");
        2.0 * z.sf(self.tau.abs())
    }
}

/// Null variance of `C - D` for `n` untied observations.
pub fn kendall_null_variance(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) * (2.0 * n + 5.0) / 18.0
}

pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<KendallTau> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, have: n });
    }
    let (mut concordant, mut discordant) = (0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            let prod = (x[i] - x[j]) * (y[i] - y[j]);
            if prod > 0.0 {
                concordant += 1;
            } else if prod < 0.0 {
                discordant += 1;
            }
        }
    }
    let diff = concordant as f64 - discordant as f64;
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(KendallTau {
        concordant,
        discordant,
        u: diff / pairs,
        tau: diff / kendall_null_variance(n).sqrt(),
    })
}
