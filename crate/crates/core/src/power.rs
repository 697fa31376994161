//! Alternative distribution of the tau chi-square as a weighted sum of
//! noncentral chi-square(1) variables, its moment-matched noncentral
//! chi-square approximation, and power.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dist::{chi2_upper_quantile, noncentral_chi2_sf};
use crate::error::{Error, Result};

/// Relative eigenvalue cutoff for definiteness checks and pseudo-inverses.
const EIGEN_TOLERANCE: f64 = 1e-10;

/// `S - E0(S) ~ Normal(mu, sigma1)` under the alternative; `sigma0` is the
/// null variance used by the test.
#[derive(Clone, Debug, PartialEq)]
pub struct AltSpec {
    pub sigma0: DMatrix<f64>,
    pub sigma1: DMatrix<f64>,
    pub mu: DVector<f64>,
}

impl AltSpec {
    pub fn p(&self) -> usize {
        self.mu.len()
    }

    fn check(&self) -> Result<()> {
        let p = self.p();
        for m in [&self.sigma0, &self.sigma1] {
            if m.nrows() != p || m.ncols() != p {
                return Err(Error::LengthMismatch {
                    left: m.nrows(),
                    right: p,
                });
            }
            if (m - m.transpose()).amax() > 1e-9 * m.amax().max(1.0) {
                return Err(Error::InvalidArgument("covariance matrix is not symmetric".into()));
            }
        }
        Ok(())
    }
}

/// `sum_i e_i chi2_1(phi_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedChiSq {
    /// Descending.
    pub e: Vec<f64>,
    pub phi: Vec<f64>,
    /// Rows are the eigenvectors matching `e`.
    pub q: DMatrix<f64>,
    /// Whether `sigma0` was singular and replaced by its pseudo-inverse.
    pub pinv_fallback: bool,
    /// Degrees of freedom of the null reference, the rank of `sigma0`.
    pub null_df: usize,
}

impl WeightedChiSq {
    pub fn mean(&self) -> f64 {
        self.e.iter().zip(&self.phi).map(|(e, f)| e * (1.0 + f)).sum()
    }

    /// One draw of the weighted sum.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        self.e
            .iter()
            .zip(&self.phi)
            .map(|(e, f)| {
                let z: f64 = rng.sample(StandardNormal);
                e * (z + f.sqrt()).powi(2)
            })
            .sum()
    }

    /// `sum e^k + k sum e^k phi`, proportional to the `k`-th cumulant.
    fn c(&self, k: i32) -> f64 {
        self.e
            .iter()
            .zip(&self.phi)
            .map(|(e, f)| e.powi(k) * (1.0 + f64::from(k) * f))
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatchCase {
    /// Squared skewness exceeds kurtosis: noncentral fit.
    Skewness,
    /// Central fit on skewness alone.
    Kurtosis,
}

impl MatchCase {
    pub fn name(self) -> &'static str {
        match self {
            MatchCase::Skewness => "skewness",
            MatchCase::Kurtosis => "kurtosis",
        }
    }
}

/// `chi2_l(upsilon)` matched to a weighted sum, with the location-scale map
/// used to evaluate its tail.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApproxChiSq {
    pub l: f64,
    pub upsilon: f64,
    pub mean_q: f64,
    pub sd_q: f64,
    pub mean_x: f64,
    pub sd_x: f64,
    pub s1: f64,
    pub s2: f64,
    pub case: MatchCase,
}

impl ApproxChiSq {
    /// Approximate `P(T > t)`.
    pub fn sf(&self, t: f64) -> f64 {
        let x = (t - self.mean_q) / self.sd_q * self.sd_x + self.mean_x;
        noncentral_chi2_sf(x, self.l, self.upsilon)
    }
}

fn symmetric_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
}

/// Eigen-decomposes `sigma1^{1/2} sigma0^{-1} sigma1^{1/2}`; `Q` and the
/// weights come from the same decomposition.
pub fn alt_distribution(spec: &AltSpec) -> Result<WeightedChiSq> {
    spec.check()?;
    let p = spec.p();
    let eig1 = symmetric_eigen(&spec.sigma1);
    let max1 = eig1.eigenvalues.amax();
    if eig1.eigenvalues.iter().any(|&l| l <= EIGEN_TOLERANCE * max1) || max1 <= 0.0 {
        return Err(Error::NotPositiveDefinite("sigma1".into()));
    }
    let v1 = &eig1.eigenvectors;
    let root = v1 * DMatrix::from_diagonal(&eig1.eigenvalues.map(f64::sqrt)) * v1.transpose();
    let inv_root = v1 * DMatrix::from_diagonal(&eig1.eigenvalues.map(|l| 1.0 / l.sqrt())) * v1.transpose();

    let eig0 = symmetric_eigen(&spec.sigma0);
    let max0 = eig0.eigenvalues.amax();
    if max0 <= 0.0 {
        return Err(Error::NotPositiveDefinite("sigma0 is zero".into()));
    }
    let keep: Vec<bool> = eig0.eigenvalues.iter().map(|&l| l > EIGEN_TOLERANCE * max0).collect();
    let null_df = keep.iter().filter(|&&k| k).count();
    let inv0_diag = DVector::from_iterator(
        p,
        eig0.eigenvalues.iter().zip(&keep).map(|(&l, &k)| if k { 1.0 / l } else { 0.0 }),
    );
    let inv0 = &eig0.eigenvectors * DMatrix::from_diagonal(&inv0_diag) * eig0.eigenvectors.transpose();

    let m = &root * inv0 * &root;
    let eig = symmetric_eigen(&m);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let e: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let q = DMatrix::from_fn(p, p, |r, c| eig.eigenvectors[(c, order[r])]);
    let mu_r = &q * inv_root * &spec.mu;
    let phi = mu_r.iter().map(|x| x * x).collect();
    Ok(WeightedChiSq {
        e,
        phi,
        q,
        pinv_fallback: null_df < p,
        null_df,
    })
}

/// Matches `chi2_l(upsilon)` to the weighted sum by its mean, variance,
/// skewness and (when they conflict) kurtosis.
pub fn match_moments(w: &WeightedChiSq) -> Result<ApproxChiSq> {
    if !w.e.iter().any(|&e| e > 0.0) {
        return Err(Error::InvalidArgument("no positive weight".into()));
    }
    let (c1, c2, c3, c4) = (w.c(1), w.c(2), w.c(3), w.c(4));
    let s1 = c3 / c2.powf(1.5);
    let s2 = c4 / (c2 * c2);
    let emax = w.e[0];
    let positive: Vec<usize> = (0..w.e.len()).filter(|&i| w.e[i] > 0.0).collect();
    let (a, upsilon, l, case) = if positive.iter().all(|&i| (w.e[i] - emax).abs() <= 1e-12 * emax) {
        // equal weights: exactly emax * chi2_k(sum phi)
        let k = positive.len() as f64;
        let upsilon: f64 = positive.iter().map(|&i| w.phi[i]).sum();
        let case = if upsilon > 0.0 { MatchCase::Skewness } else { MatchCase::Kurtosis };
        ((k + 2.0 * upsilon).sqrt(), upsilon, k, case)
    } else if s1 * s1 > s2 * (1.0 + 1e-12) {
        let a = 1.0 / (s1 - (s1 * s1 - s2).sqrt());
        let upsilon = s1 * a.powi(3) - a * a;
        (a, upsilon, a * a - 2.0 * upsilon, MatchCase::Skewness)
    } else {
        let a = 1.0 / s1;
        (a, 0.0, a * a, MatchCase::Kurtosis)
    };
    Ok(ApproxChiSq {
        l,
        upsilon,
        mean_q: c1,
        sd_q: (2.0 * c2).sqrt(),
        mean_x: l + upsilon,
        sd_x: std::f64::consts::SQRT_2 * a,
        s1,
        s2,
        case,
    })
}

/// Critical value of the test at level `alpha`: the upper `alpha` point of
/// the central chi-square on the rank of `sigma0`.
pub fn critical_value(w: &WeightedChiSq, alpha: f64) -> f64 {
    chi2_upper_quantile(alpha, w.null_df as f64)
}

/// Approximate power of the level-`alpha` test.
pub fn power(spec: &AltSpec, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let w = alt_distribution(spec)?;
    let approx = match_moments(&w)?;
    Ok(approx.sf(critical_value(&w, alpha)))
}
