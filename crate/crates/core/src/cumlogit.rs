//! Cell probabilities of a cumulative-logit model and their derivatives.
//!
//! An observation at level `y` has probability `F(a) - F(b)` with
//! `a = alpha_y + eta` (absent at the top level) and `b = alpha_{y-1} + eta`
//! (absent at level 0), where `F` is the logistic CDF.

#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-likelihood of one cell and its derivatives in the two cut-point
/// arguments. Missing arguments contribute zero derivatives.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Cell {
    pub logp: f64,
    pub da: f64,
    pub db: f64,
    pub daa: f64,
    pub dbb: f64,
    pub dab: f64,
}

impl Cell {
    /// `d/d eta` when both arguments shift with the linear predictor.
    pub fn deta(&self) -> f64 {
        self.da + self.db
    }

    pub fn deta2(&self) -> f64 {
        self.daa + self.dbb + 2.0 * self.dab
    }
}

/// Treats infinite cut points as absent: `+inf` above, `-inf` below.
pub(crate) fn cell(a: Option<f64>, b: Option<f64>) -> Cell {
    let a = a.filter(|x| *x < f64::INFINITY);
    let b = b.filter(|x| *x > f64::NEG_INFINITY);
    let (fa_cdf, fa) = a.map_or((1.0, 0.0), |x| {
        let f = logistic(x);
        (f, f * (1.0 - f))
    });
    let (fb_cdf, fb) = b.map_or((0.0, 0.0), |x| {
        let f = logistic(x);
        (f, f * (1.0 - f))
    });
    let p = match (a, b) {
        (Some(x), Some(y)) if x > 0.0 && y > 0.0 => logistic(-y) - logistic(-x),
        (None, Some(y)) => logistic(-y),
        _ => fa_cdf - fb_cdf,
    }
    .max(f64::MIN_POSITIVE);
    let big_a = fa / p;
    let big_b = fb / p;
    let a_prime = fa * (1.0 - 2.0 * fa_cdf) / p;
    let b_prime = fb * (1.0 - 2.0 * fb_cdf) / p;
    Cell {
        logp: p.ln(),
        da: big_a,
        db: -big_b,
        daa: a_prime - big_a * big_a,
        dbb: -b_prime - big_b * big_b,
        dab: big_a * big_b,
    }
}

/// Cell for level `y` given cut points `alpha` (length `levels - 1`) and the
/// linear predictor `eta`.
#[inline]
pub(crate) fn level_cell(alpha: &[f64], y: usize, eta: f64) -> Cell {
    let a = (y < alpha.len()).then(|| alpha[y] + eta);
    let b = (y > 0).then(|| alpha[y - 1] + eta);
    cell(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logp(a: Option<f64>, b: Option<f64>) -> f64 {
        cell(a, b).logp
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for &(a, b) in &[(0.3, -1.2), (2.5, 2.0), (-0.5, -3.0), (8.0, 7.5)] {
            let c = cell(Some(a), Some(b));
            let fd_a = (logp(Some(a + h), Some(b)) - logp(Some(a - h), Some(b))) / (2.0 * h);
            let fd_b = (logp(Some(a), Some(b + h)) - logp(Some(a), Some(b - h))) / (2.0 * h);
            assert!((c.da - fd_a).abs() < 1e-6, "{a} {b}");
            assert!((c.db - fd_b).abs() < 1e-6, "{a} {b}");
            let fd_aa = (cell(Some(a + h), Some(b)).da - cell(Some(a - h), Some(b)).da) / (2.0 * h);
            let fd_ab = (cell(Some(a), Some(b + h)).da - cell(Some(a), Some(b - h)).da) / (2.0 * h);
            let fd_bb = (cell(Some(a), Some(b + h)).db - cell(Some(a), Some(b - h)).db) / (2.0 * h);
            assert!((c.daa - fd_aa).abs() < 1e-5);
            assert!((c.dab - fd_ab).abs() < 1e-5);
            assert!((c.dbb - fd_bb).abs() < 1e-5);
        }
        for &x in &[-2.0, 0.0, 3.0] {
            let lo = cell(Some(x), None);
            assert!((lo.logp - logistic(x).ln()).abs() < 1e-14);
            assert!((lo.da - (1.0 - logistic(x))).abs() < 1e-14);
            let hi = cell(None, Some(x));
            assert!((hi.logp - (1.0 - logistic(x)).ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let alpha = [-1.0, 0.4, 2.2];
        for &eta in &[-3.0, 0.0, 1.7] {
            let s: f64 = (0..4).map(|y| level_cell(&alpha, y, eta).logp.exp()).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }
}
