//! Pairwise building blocks of the tau-family statistics: trait kernels,
//! marker kernels, covariate weights and genomic propensity scores.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::pedigree::{Allele, Cohort, CovariateKind};
use crate::propodds::fit_cumulative_logit;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraitKind {
    Quantitative,
    Binary,
    /// Values are integers in `0..levels`.
    Ordinal { levels: u32 },
}

impl TraitKind {
    /// Whether `v` is a legal value for this kind.
    pub fn admits(self, v: f64) -> bool {
        match self {
            TraitKind::Quantitative => v.is_finite(),
            TraitKind::Binary => v == 0.0 || v == 1.0,
            TraitKind::Ordinal { levels } => v.fract() == 0.0 && v >= 0.0 && v < f64::from(levels),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraitComponent {
    pub value: f64,
    pub kind: TraitKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraitVector {
    pub components: Vec<TraitComponent>,
}

impl TraitVector {
    pub fn p(&self) -> usize {
        self.components.len()
    }

    pub fn ordinal(values: &[u32], levels: u32) -> Self {
        TraitVector {
            components: values
                .iter()
                .map(|&v| TraitComponent {
                    value: f64::from(v),
                    kind: TraitKind::Ordinal { levels },
                })
                .collect(),
        }
    }

    pub fn quantitative(values: &[f64]) -> Self {
        TraitVector {
            components: values
                .iter()
                .map(|&value| TraitComponent {
                    value,
                    kind: TraitKind::Quantitative,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct CovariateVector {
    pub z_co: Vec<f64>,
    pub z_ca: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WeightKernel {
    /// `W(u) = exp(-u^2 / 2h^2)`
    #[default]
    Gaussian,
}

impl WeightKernel {
    pub fn name(self) -> &'static str {
        match self {
            WeightKernel::Gaussian => "gaussian",
        }
    }
}

impl std::str::FromStr for WeightKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(WeightKernel::Gaussian),
            other => Err(Error::InvalidArgument(format!("unknown weight kernel {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightConfig {
    bandwidth: f64,
    pub kernel: WeightKernel,
}

impl WeightConfig {
    pub fn new(bandwidth: f64, kernel: WeightKernel) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(WeightConfig { bandwidth, kernel })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    fn profile(&self, distance: f64) -> f64 {
        match self.kernel {
            WeightKernel::Gaussian => {
                let h = self.bandwidth;
                (-distance * distance / (2.0 * h * h)).exp()
            }
        }
    }
}

/// `F_ij`: identity differences for quantitative and binary components, sign
/// of the difference for ordinal ones.
pub fn trait_kernel(ti: &TraitVector, tj: &TraitVector) -> Result<Vec<f64>> {
    if ti.p() != tj.p() {
        return Err(Error::KindMismatch);
    }
    ti.components
        .iter()
        .zip(&tj.components)
        .map(|(a, b)| {
            if a.kind != b.kind {
                return Err(Error::KindMismatch);
            }
            Ok(component_kernel(a.kind, a.value - b.value))
        })
        .collect()
}

#[inline]
pub(crate) fn component_kernel(kind: TraitKind, diff: f64) -> f64 {
    match kind {
        TraitKind::Quantitative | TraitKind::Binary => diff,
        TraitKind::Ordinal { .. } => sign(diff),
    }
}

#[inline]
pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `D_ij = c_i - c_j`.
pub fn marker_kernel(ci: u8, cj: u8) -> i8 {
    ci as i8 - cj as i8
}

/// `w(z_i, z_j) = W(|z_i^co - z_j^co|) * I(z_i^ca = z_j^ca)`.
pub fn covariate_weight(zi: &CovariateVector, zj: &CovariateVector, cfg: &WeightConfig) -> f64 {
    if zi.z_ca != zj.z_ca {
        return 0.0;
    }
    let d2: f64 = zi
        .z_co
        .iter()
        .zip(&zj.z_co)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    cfg.profile(d2.sqrt())
}

/// Covariates of a working sample after standardizing the continuous block,
/// together with the bandwidth in force.
#[derive(Clone, Debug)]
pub struct PreparedCovariates {
    pub z: Vec<CovariateVector>,
    pub config: WeightConfig,
    pub standardized: bool,
}

/// Largest sample used when searching for the median pairwise distance.
const BANDWIDTH_SAMPLE: usize = 2000;

/// Standardizes continuous covariates (mean 0, sd 1) over `z` and picks the
/// bandwidth: `bandwidth` if given, else the median nonzero pairwise distance.
pub fn prepare_covariates(
    mut z: Vec<CovariateVector>,
    bandwidth: Option<f64>,
    kernel: WeightKernel,
) -> Result<PreparedCovariates> {
    let l1 = z.first().map_or(0, |v| v.z_co.len());
    let n = z.len() as f64;
    for k in 0..l1 {
        let mean = z.iter().map(|v| v.z_co[k]).sum::<f64>() / n;
        let var = z.iter().map(|v| (v.z_co[k] - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for v in &mut z {
            v.z_co[k] = (v.z_co[k] - mean) / sd;
        }
    }
    let h = match bandwidth {
        Some(h) => h,
        None => median_pairwise_distance(&z).unwrap_or(1.0),
    };
    Ok(PreparedCovariates {
        z,
        config: WeightConfig::new(h, kernel)?,
        standardized: l1 > 0,
    })
}

fn median_pairwise_distance(z: &[CovariateVector]) -> Option<f64> {
    if z.first().is_none_or(|v| v.z_co.is_empty()) {
        return None;
    }
    let stride = z.len().div_ceil(BANDWIDTH_SAMPLE).max(1);
    let sample: Vec<&CovariateVector> = z.iter().step_by(stride).collect();
    let mut d = Vec::with_capacity(sample.len() * sample.len() / 2);
    for i in 0..sample.len() {
        for j in i + 1..sample.len() {
            let s: f64 = sample[i]
                .z_co
                .iter()
                .zip(&sample[j].z_co)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if s > 0.0 {
                d.push(s.sqrt());
            }
        }
    }
    if d.is_empty() {
        return None;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    Some(*m)
}

/// Regression design for the selected covariate columns over the rows in
/// `rows`: continuous columns standardized, categorical columns expanded to
/// indicator columns with the first observed level as reference. Rows must
/// have complete covariates.
pub fn covariate_design(cohort: &Cohort, rows: &[usize], columns: &[usize]) -> Result<DMatrix<f64>> {
    let cov = cohort
        .covariates
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("cohort has no covariates".into()))?;
    let n = rows.len();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for &c in columns {
        let raw: Vec<f64> = rows
            .iter()
            .map(|&g| {
                cov.values[g][c].ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "individual {} lacks covariate {}",
                        cohort.individual(g).id,
                        cov.names[c]
                    ))
                })
            })
            .collect::<Result<_>>()?;
        match cov.kinds[c] {
            CovariateKind::Continuous => {
                let mean = raw.iter().sum::<f64>() / n as f64;
                let var = raw.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
                let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
                cols.push(raw.iter().map(|x| (x - mean) / sd).collect());
            }
            CovariateKind::Categorical => {
                let mut levels: Vec<f64> = Vec::new();
                for &x in &raw {
                    if !levels.contains(&x) {
                        levels.push(x);
                    }
                }
                for &level in levels.iter().skip(1) {
                    cols.push(raw.iter().map(|&x| f64::from(u8::from(x == level))).collect());
                }
            }
        }
    }
    Ok(DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PropensityCoding {
    /// Outcome is allele type: each subject contributes two allele draws.
    AlleleCount,
    /// Outcome is the genotype itself.
    Genotype,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InheritanceMode {
    Additive,
    Dominant,
    Recessive,
}

impl std::str::FromStr for InheritanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" => Ok(InheritanceMode::Additive),
            "dominant" => Ok(InheritanceMode::Dominant),
            "recessive" => Ok(InheritanceMode::Recessive),
            other => Err(Error::InvalidArgument(format!("unknown inheritance mode {other:?}"))),
        }
    }
}

/// Genomic propensity score `P(G = g_i | z_i)` of each subject's own
/// genotype class, by global index. Subjects with a missing genotype or
/// covariate get `None`.
///
/// Dominant and recessive modes reduce `G` to a carrier or homozygote
/// indicator and fit a logistic model. Additive mode fits a three-level
/// proportional-odds model of the genotype (`Genotype` coding) or a logistic
/// model of allele type with two draws per subject (`AlleleCount` coding).
pub fn genomic_propensity(
    cohort: &Cohort,
    marker_id: &str,
    chosen: Allele,
    covariates: &[usize],
    coding: PropensityCoding,
    mode: InheritanceMode,
) -> Result<Vec<Option<f64>>> {
    let m = cohort.marker_index(marker_id)?;
    let counts = cohort.allele_counts(m, chosen);
    let rows: Vec<usize> = (0..cohort.n_individuals())
        .filter(|&g| counts[g].is_some() && cohort.covariate_vector(g, covariates).is_some())
        .collect();
    let z = covariate_design(cohort, &rows, covariates)?;
    let c: Vec<u8> = rows.iter().map(|&g| counts[g].unwrap_or(0)).collect();

    let own: Vec<f64> = match (mode, coding) {
        (InheritanceMode::Additive, PropensityCoding::Genotype) => {
            let y: Vec<usize> = c.iter().map(|&x| x as usize).collect();
            let fit = fit_cumulative_logit(&y, &z)?;
            (0..rows.len())
                .map(|i| fit.cell_probability(y[i], &row_of(&z, i)))
                .collect()
        }
        (InheritanceMode::Additive, PropensityCoding::AlleleCount) => {
            // two binary allele draws per subject; the MLE matches a binomial(2, p) fit
            let y: Vec<usize> = c
                .iter()
                .flat_map(|&x| [usize::from(x >= 1), usize::from(x >= 2)])
                .collect();
            let doubled = DMatrix::from_fn(2 * rows.len(), z.ncols(), |i, j| z[(i / 2, j)]);
            let fit = fit_cumulative_logit(&y, &doubled)?;
            (0..rows.len())
                .map(|i| {
                    let p = fit.cell_probability(1, &row_of(&z, i));
                    match c[i] {
                        0 => (1.0 - p) * (1.0 - p),
                        1 => 2.0 * p * (1.0 - p),
                        _ => p * p,
                    }
                })
                .collect()
        }
        (InheritanceMode::Dominant | InheritanceMode::Recessive, _) => {
            let threshold = if mode == InheritanceMode::Dominant { 1 } else { 2 };
            let y: Vec<usize> = c.iter().map(|&x| usize::from(x >= threshold)).collect();
            let fit = fit_cumulative_logit(&y, &z)?;
            (0..rows.len())
                .map(|i| fit.cell_probability(y[i], &row_of(&z, i)))
                .collect()
        }
    };

    let mut out = vec![None; cohort.n_individuals()];
    for (i, &g) in rows.iter().enumerate() {
        out[g] = Some(own[i]);
    }
    Ok(out)
}

fn row_of(z: &DMatrix<f64>, i: usize) -> Vec<f64> {
    (0..z.ncols()).map(|j| z[(i, j)]).collect()
}
