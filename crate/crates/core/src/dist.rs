//! Central and noncentral chi-square tail probabilities.

use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

/// Poisson tail mass left unsummed by [`noncentral_chi2_sf`].
pub const POISSON_TAIL: f64 = 1e-12;

pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df).map_or(f64::NAN, |d| d.sf(x))
}

pub fn chi2_cdf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    ChiSquared::new(df).map_or(f64::NAN, |d| d.cdf(x))
}

/// Upper quantile: the `x` with `P(chi2_df > x) = alpha`.
pub fn chi2_upper_quantile(alpha: f64, df: f64) -> f64 {
    ChiSquared::new(df).map_or(f64::NAN, |d| d.inverse_cdf(1.0 - alpha))
}

/// `P(chi2_df(ncp) > x)` as a Poisson(ncp/2) mixture of central tails,
/// summed outward from the Poisson mode until the remaining weight is below
/// [`POISSON_TAIL`].
pub fn noncentral_chi2_sf(x: f64, df: f64, ncp: f64) -> f64 {
    mixture(df, ncp, |k| chi2_sf(x, k))
}

pub fn noncentral_chi2_cdf(x: f64, df: f64, ncp: f64) -> f64 {
    mixture(df, ncp, |k| chi2_cdf(x, k))
}

fn mixture(df: f64, ncp: f64, central: impl Fn(f64) -> f64) -> f64 {
    if ncp <= 0.0 {
        return central(df);
    }
    let lambda = ncp / 2.0;
    let Ok(pois) = Poisson::new(lambda) else {
        return f64::NAN;
    };
    let mode = lambda.floor() as u64;
    let mut total = 0.0;
    let mut mass = 0.0;
    let term = |j: u64| {
        let w = pois.pmf(j);
        (w, w * central(df + 2.0 * j as f64))
    };
    let (w, t) = term(mode);
    mass += w;
    total += t;
    let (mut lo, mut hi) = (mode, mode);
    while 1.0 - mass > POISSON_TAIL {
        let mut progressed = false;
        if lo > 0 {
            lo -= 1;
            let (w, t) = term(lo);
            mass += w;
            total += t;
            progressed |= w > 0.0;
        }
        hi += 1;
        let (w, t) = term(hi);
        mass += w;
        total += t;
        progressed |= w > 0.0;
        if !progressed && hi > mode + 10 {
            break;
        }
    }
    total.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_values() {
        assert!((chi2_sf(3.841458820694124, 1.0) - 0.05).abs() < 1e-12);
        assert!((chi2_upper_quantile(0.05, 1.0) - 3.841458820694124).abs() < 1e-8);
        assert!((chi2_upper_quantile(0.1, 1.0) - 2.705543454095404).abs() < 1e-8);
        assert_eq!(chi2_sf(0.0, 2.0), 1.0);
    }

    #[test]
    fn noncentral_reduces_to_central() {
        assert_eq!(noncentral_chi2_sf(2.0, 3.0, 0.0), chi2_sf(2.0, 3.0));
    }

    #[test]
    fn noncentral_one_df_closed_form() {
        // chi2_1(ncp) > x  <=>  |Z + sqrt(ncp)| > sqrt(x)
        use statrs::distribution::Normal;
        let n = Normal::new(0.0, 1.0).unwrap();
        for &(x, ncp) in &[(1.0, 0.5), (3.84, 4.0), (10.0, 25.0), (0.2, 300.0)] {
            let r = f64::sqrt(x);
            let m = f64::sqrt(ncp);
            let exact = n.sf(r - m) + n.cdf(-r - m);
            assert!((noncentral_chi2_sf(x, 1.0, ncp) - exact).abs() < 1e-10, "{x} {ncp}");
        }
    }

    #[test]
    fn cdf_and_sf_complement() {
        for &(x, df, ncp) in &[(3.0, 2.5, 1.2), (7.0, 1.0, 9.0), (0.5, 4.0, 0.1)] {
            let s = noncentral_chi2_sf(x, df, ncp) + noncentral_chi2_cdf(x, df, ncp);
            assert!((s - 1.0).abs() < 1e-10);
        }
    }
}
