//! Maximum-likelihood fitting of proportional-odds (cumulative logit) models
//!
//! `logit P(y <= k | z) = alpha_k + delta'z` for levels `0..L`, with
//! `L - 1` nondecreasing cut points. Fitting runs damped Newton iterations
//! on `(alpha_0, log(alpha_k - alpha_{k-1}), delta)` so every iterate keeps the
//! cut points ordered.

use nalgebra::{DMatrix, DVector};

use crate::cumlogit::{level_cell, logistic};
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
/// A coefficient whose per-standard-deviation effect exceeds this magnitude
/// is taken as separation.
pub const SEPARATION_BOUND: f64 = 30.0;
/// Same, for the per-standard-deviation standard error at convergence.
pub const SEPARATION_SE: f64 = 1e3;

#[derive(Clone, Debug, PartialEq)]
pub struct PropOddsFit {
    /// Cut points `alpha_0..alpha_{L-2}`. Levels below the lowest observed
    /// one get `-inf`; a cut point inside a run of unobserved levels repeats
    /// the one below it.
    pub alpha: Vec<f64>,
    pub delta: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Standard errors of `delta` from the observed information.
    pub delta_se: Vec<f64>,
}

impl PropOddsFit {
    pub fn levels(&self) -> usize {
        self.alpha.len() + 1
    }

    pub fn linear_predictor(&self, z: &[f64]) -> f64 {
        self.delta.iter().zip(z).map(|(d, x)| d * x).sum()
    }

    /// Fitted `P(y <= k | z)`, with `gamma_hat(-1) = 0` and
    /// `gamma_hat(L-1) = 1`.
    pub fn gamma_hat(&self, k: isize, z: &[f64]) -> f64 {
        if k < 0 {
            0.0
        } else if k as usize >= self.alpha.len() {
            1.0
        } else {
            logistic(self.alpha[k as usize] + self.linear_predictor(z))
        }
    }

    /// Fitted `P(y = level | z)`.
    pub fn cell_probability(&self, level: usize, z: &[f64]) -> f64 {
        let k = level as isize;
        self.gamma_hat(k, z) - self.gamma_hat(k - 1, z)
    }
}

/// Log-likelihood at `(alpha, delta)`.
pub fn cumulative_logit_loglik(alpha: &[f64], delta: &[f64], y: &[usize], z: &DMatrix<f64>) -> f64 {
    (0..y.len())
        .map(|i| level_cell(alpha, y[i], eta(delta, z, i)).logp)
        .sum()
}

/// Gradient in `(alpha, delta)` at the given point.
pub fn cumulative_logit_gradient(
    alpha: &[f64],
    delta: &[f64],
    y: &[usize],
    z: &DMatrix<f64>,
) -> (Vec<f64>, Vec<f64>) {
    let nat = natural_derivatives(alpha, delta, y, z, false);
    (nat.g_alpha, nat.g_delta)
}

fn eta(delta: &[f64], z: &DMatrix<f64>, i: usize) -> f64 {
    delta.iter().enumerate().map(|(j, d)| d * z[(i, j)]).sum()
}

struct Natural {
    loglik: f64,
    g_alpha: Vec<f64>,
    g_delta: Vec<f64>,
    /// Hessian in `(alpha, delta)` order.
    hess: DMatrix<f64>,
}

fn natural_derivatives(alpha: &[f64], delta: &[f64], y: &[usize], z: &DMatrix<f64>, hessian: bool) -> Natural {
    let na = alpha.len();
    let q = delta.len();
    let mut g_alpha = vec![0.0; na];
    let mut g_delta = vec![0.0; q];
    let mut hess = DMatrix::zeros(if hessian { na + q } else { 0 }, if hessian { na + q } else { 0 });
    let mut loglik = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let c = level_cell(alpha, yi, eta(delta, z, i));
        loglik += c.logp;
        let up = (yi < na).then_some(yi);
        let lo = (yi > 0).then(|| yi - 1);
        if let Some(u) = up {
            g_alpha[u] += c.da;
        }
        if let Some(l) = lo {
            g_alpha[l] += c.db;
        }
        let de = c.deta();
        for j in 0..q {
            g_delta[j] += de * z[(i, j)];
        }
        if !hessian {
            continue;
        }
        if let Some(u) = up {
            hess[(u, u)] += c.daa;
        }
        if let Some(l) = lo {
            hess[(l, l)] += c.dbb;
        }
        if let (Some(u), Some(l)) = (up, lo) {
            hess[(u, l)] += c.dab;
            hess[(l, u)] += c.dab;
        }
        let de2 = c.deta2();
        for j in 0..q {
            let zj = z[(i, j)];
            if let Some(u) = up {
                let v = (c.daa + c.dab) * zj;
                hess[(u, na + j)] += v;
                hess[(na + j, u)] += v;
            }
            if let Some(l) = lo {
                let v = (c.dab + c.dbb) * zj;
                hess[(l, na + j)] += v;
                hess[(na + j, l)] += v;
            }
            for k in 0..q {
                hess[(na + j, na + k)] += de2 * zj * z[(i, k)];
            }
        }
    }
    Natural {
        loglik,
        g_alpha,
        g_delta,
        hess,
    }
}

/// Cut points from the working parameterization.
pub(crate) fn alpha_of(psi: &[f64], na: usize) -> Vec<f64> {
    let mut alpha = Vec::with_capacity(na);
    for k in 0..na {
        alpha.push(if k == 0 { psi[0] } else { alpha[k - 1] + psi[k].exp() });
    }
    alpha
}

/// Loglik, gradient and Hessian in the working parameterization.
fn working_derivatives(psi: &[f64], na: usize, y: &[usize], z: &DMatrix<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
    let alpha = alpha_of(psi, na);
    let delta = &psi[na..];
    let q = delta.len();
    let nat = natural_derivatives(&alpha, delta, y, z, true);
    let d = na + q;
    // Jacobian of (alpha, delta) with respect to psi
    let mut jac = DMatrix::<f64>::identity(d, d);
    for k in 0..na {
        for j in 0..na {
            jac[(k, j)] = match j {
                0 => 1.0,
                _ if j <= k => psi[j].exp(),
                _ => 0.0,
            };
        }
    }
    let g_nat = DVector::from_iterator(d, nat.g_alpha.iter().chain(&nat.g_delta).copied());
    let grad = jac.transpose() * &g_nat;
    let mut hess = jac.transpose() * &nat.hess * &jac;
    for j in 1..na {
        let tail: f64 = nat.g_alpha[j..].iter().sum();
        hess[(j, j)] += psi[j].exp() * tail;
    }
    (nat.loglik, grad, hess)
}

/// Newton direction for maximization, regularized until `-H + lambda I` is
/// positive definite.
pub(crate) fn ascent_direction(grad: &DVector<f64>, hess: &DMatrix<f64>) -> DVector<f64> {
    let d = grad.len();
    let neg = -hess;
    let scale = (0..d).map(|i| neg[(i, i)].abs()).fold(1e-12, f64::max);
    let mut lambda = 0.0;
    loop {
        let m = &neg + DMatrix::<f64>::identity(d, d) * lambda;
        if let Some(ch) = m.cholesky() {
            return ch.solve(grad);
        }
        lambda = if lambda == 0.0 { scale * 1e-8 } else { lambda * 10.0 };
        if lambda > scale * 1e12 {
            return grad.clone();
        }
    }
}

/// Fits `logit P(y <= k | z) = alpha_k + delta'z` by maximum likelihood.
/// `y` holds levels `0..L` with `L = max(y) + 1`; `z` has one row per
/// observation and may have zero columns.
pub fn fit_cumulative_logit(y: &[usize], z: &DMatrix<f64>) -> Result<PropOddsFit> {
    if z.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: z.nrows(),
        });
    }
    let levels = y.iter().max().map_or(0, |m| m + 1);
    let mut observed: Vec<usize> = y.to_vec();
    observed.sort_unstable();
    observed.dedup();
    if observed.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            have: observed.len(),
        });
    }
    let m = observed.len();
    let yc: Vec<usize> = y
        .iter()
        .map(|v| observed.binary_search(v).unwrap_or(0))
        .collect();
    let na = m - 1;
    let q = z.ncols();

    // start at the empirical cumulative logits with delta = 0
    let n = y.len() as f64;
    let mut counts = vec![0.0; m];
    for &v in &yc {
        counts[v] += 1.0;
    }
    let mut psi = vec![0.0; na + q];
    let mut cum = 0.0;
    let mut prev = 0.0;
    for k in 0..na {
        cum += counts[k];
        let p = cum / n;
        let a = (p / (1.0 - p)).ln();
        psi[k] = if k == 0 { a } else { (a - prev).ln() };
        prev = a;
    }

    let z_sd: Vec<f64> = z
        .column_iter()
        .map(|c| {
            let mean = c.mean();
            let var = c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            if var > 0.0 { var.sqrt() } else { 1.0 }
        })
        .collect();
    let mut iterations = 0;
    let (mut ll, mut grad, mut hess) = working_derivatives(&psi, na, &yc, z);
    let converged = loop {
        let gmax = grad.amax();
        if gmax < GRADIENT_TOLERANCE {
            break true;
        }
        if iterations >= MAX_ITERATIONS {
            return Err(Error::NonConvergence {
                iterations,
                grad_norm: gmax,
            });
        }
        iterations += 1;
        let dir = ascent_direction(&grad, &hess);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = psi.iter().zip(dir.iter()).map(|(p, d)| p + step * d).collect();
            let alpha = alpha_of(&trial, na);
            let trial_ll = cumulative_logit_loglik(&alpha, &trial[na..], &yc, z);
            if trial_ll.is_finite() && trial_ll >= ll - 1e-12 * ll.abs() {
                psi = trial;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if let Some((index, value)) = psi[na..]
            .iter()
            .enumerate()
            .find(|&(j, d)| (d * z_sd[j]).abs() > SEPARATION_BOUND)
        {
            return Err(Error::Separation {
                index,
                value: *value,
            });
        }
        (ll, grad, hess) = working_derivatives(&psi, na, &yc, z);
        if !accepted {
            // no ascent possible at machine precision
            break grad.amax() < 1e-6 * n.max(1.0);
        }
    };
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            grad_norm: grad.amax(),
        });
    }

    let alpha_c = alpha_of(&psi, na);
    let delta = psi[na..].to_vec();
    let nat = natural_derivatives(&alpha_c, &delta, &yc, z, true);
    let delta_se = match (-&nat.hess).try_inverse() {
        Some(cov) => (0..q).map(|j| cov[(na + j, na + j)].max(0.0).sqrt()).collect(),
        None => vec![f64::NAN; q],
    };
    // a flat likelihood ridge toward infinity shows up as a vanishing
    // information even when the gradient test has already passed
    if let Some(index) = (0..q).find(|&j| delta_se[j] * z_sd[j] > SEPARATION_SE) {
        return Err(Error::Separation {
            index,
            value: delta[index],
        });
    }

    let alpha = (0..levels - 1)
        .map(|k| match observed.iter().rposition(|&o| o <= k) {
            None => f64::NEG_INFINITY,
            Some(j) => alpha_c[j],
        })
        .collect();

    Ok(PropOddsFit {
        alpha,
        delta,
        loglik: ll,
        converged,
        iterations,
        delta_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    fn simulate(n: usize, alpha: &[f64], delta: &[f64], seed: u64) -> (Vec<usize>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = delta.len();
        let z = DMatrix::from_fn(n, q, |_, j| if j == 0 { rng.random::<f64>() * 2.0 - 1.0 } else { f64::from(rng.random_bool(0.5)) });
        let y = (0..n)
            .map(|i| {
                let e: f64 = (0..q).map(|j| delta[j] * z[(i, j)]).sum();
                let u: f64 = rng.random();
                alpha.iter().position(|a| u <= logistic(a + e)).unwrap_or(alpha.len())
            })
            .collect();
        (y, z)
    }

    #[test]
    fn intercept_only_closed_form() {
        let y: Vec<usize> = [0usize; 25].iter().chain(&[1; 50]).chain(&[2; 25]).copied().collect();
        let z = DMatrix::zeros(100, 0);
        let fit = fit_cumulative_logit(&y, &z).unwrap();
        assert!((fit.alpha[0] - logit(0.25)).abs() < 1e-10);
        assert!((fit.alpha[1] - logit(0.75)).abs() < 1e-10);
        assert!((fit.alpha[0] + 1.09861).abs() < 1e-5);
        assert!(fit.converged);
        assert_eq!(fit.gamma_hat(-1, &[]), 0.0);
        assert_eq!(fit.gamma_hat(2, &[]), 1.0);
        assert!((fit.gamma_hat(0, &[]) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn intercept_only_score_equations() {
        let y = vec![0, 0, 1, 3, 3, 3, 1, 2, 0, 3, 2];
        let fit = fit_cumulative_logit(&y, &DMatrix::zeros(y.len(), 0)).unwrap();
        for level in 0..4 {
            let freq = y.iter().filter(|&&v| v == level).count() as f64 / y.len() as f64;
            assert!((fit.cell_probability(level, &[]) - freq).abs() < 1e-10);
        }
    }

    #[test]
    fn unobserved_levels_are_handled() {
        // level 0 and 2 unobserved out of 0..=3
        let y = vec![1, 1, 3, 3, 3, 1];
        let fit = fit_cumulative_logit(&y, &DMatrix::zeros(6, 0)).unwrap();
        assert_eq!(fit.levels(), 4);
        assert_eq!(fit.alpha[0], f64::NEG_INFINITY);
        assert_eq!(fit.alpha[1], fit.alpha[2]);
        assert!((fit.cell_probability(1, &[]) - 0.5).abs() < 1e-10);
        assert_eq!(fit.cell_probability(0, &[]), 0.0);
        assert_eq!(fit.cell_probability(2, &[]), 0.0);
    }

    #[test]
    fn mle_dominates_truth() {
        let alpha = [-0.5, 1.0];
        let delta = [0.0, 0.8];
        let (y, z) = simulate(200, &alpha, &delta, 7);
        // binary covariate only
        let zb = z.columns(1, 1).into_owned();
        let fit = fit_cumulative_logit(&y, &zb).unwrap();
        let at_truth = cumulative_logit_loglik(&alpha, &delta[1..], &y, &zb);
        assert!(fit.loglik >= at_truth);
    }

    #[test]
    fn fewer_than_two_levels() {
        let err = fit_cumulative_logit(&[2, 2, 2], &DMatrix::zeros(3, 0)).unwrap_err();
        assert!(matches!(err, Error::InsufficientData { .. }));
    }

    #[test]
    fn separation_reported() {
        let y = vec![0, 0, 0, 1, 1, 1];
        let z = DMatrix::from_column_slice(6, 1, &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        let err = fit_cumulative_logit(&y, &z).unwrap_err();
        assert!(matches!(err, Error::Separation { .. }), "{err}");
    }

    #[test]
    fn matches_grid_search_oracle() {
        let (y, z) = simulate(50, &[-0.7, 0.9], &[1.2], 11);
        let fit = fit_cumulative_logit(&y, &z).unwrap();
        // coarse-to-fine grid over (alpha0, alpha1 - alpha0, delta)
        let f = |p: [f64; 3]| -> f64 {
            if p[1] <= 0.0 {
                return f64::NEG_INFINITY;
            }
            cumulative_logit_loglik(&[p[0], p[0] + p[1]], &[p[2]], &y, &z)
        };
        let mut centre = [0.0, 1.0, 0.0];
        let mut width = [4.0, 3.9, 4.0];
        let pts = 20;
        for _ in 0..30 {
            let mut best = (f64::NEG_INFINITY, centre);
            for i in 0..=pts {
                for j in 0..=pts {
                    for k in 0..=pts {
                        let p = [
                            centre[0] - width[0] + 2.0 * width[0] * i as f64 / pts as f64,
                            centre[1] - width[1] + 2.0 * width[1] * j as f64 / pts as f64,
                            centre[2] - width[2] + 2.0 * width[2] * k as f64 / pts as f64,
                        ];
                        let v = f(p);
                        if v > best.0 {
                            best = (v, p);
                        }
                    }
                }
            }
            centre = best.1;
            for w in &mut width {
                *w *= 0.3;
            }
        }
        assert!((fit.alpha[0] - centre[0]).abs() < 1e-4);
        assert!((fit.alpha[1] - (centre[0] + centre[1])).abs() < 1e-4);
        assert!((fit.delta[0] - centre[2]).abs() < 1e-4);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (y, z) = simulate(80, &[-1.0, 0.2, 1.5], &[0.7, -0.4], 3);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10 {
            let a0: f64 = rng.random_range(-2.0..0.0);
            let alpha = [a0, a0 + rng.random_range(0.1..1.5), a0 + rng.random_range(1.6..3.0)];
            let delta = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let (ga, gd) = cumulative_logit_gradient(&alpha, &delta, &y, &z);
            let h = 1e-5;
            let mut params: Vec<f64> = alpha.iter().chain(&delta).copied().collect();
            let analytic: Vec<f64> = ga.iter().chain(&gd).copied().collect();
            for k in 0..params.len() {
                let orig = params[k];
                params[k] = orig + h;
                let up = cumulative_logit_loglik(&params[..3], &params[3..], &y, &z);
                params[k] = orig - h;
                let down = cumulative_logit_loglik(&params[..3], &params[3..], &y, &z);
                params[k] = orig;
                let fd = (up - down) / (2.0 * h);
                let rel = (fd - analytic[k]).abs() / analytic[k].abs().max(1e-3);
                assert!(rel < 1e-4, "param {k}: fd {fd} analytic {}", analytic[k]);
            }
        }
    }

    #[test]
    fn fitted_cells_sum_to_one_and_gamma_monotone() {
        let (y, z) = simulate(150, &[-1.0, 0.0, 1.0], &[0.5, -0.5], 5);
        let fit = fit_cumulative_logit(&y, &z).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let zz = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let s: f64 = (0..fit.levels()).map(|l| fit.cell_probability(l, &zz)).sum();
            assert!((s - 1.0).abs() < 1e-12);
            for k in 0..fit.levels() as isize {
                assert!(fit.gamma_hat(k, &zz) - fit.gamma_hat(k - 1, &zz) >= 0.0);
            }
        }
        assert!(fit.alpha.windows(2).all(|w| w[0] <= w[1]));
    }
}
