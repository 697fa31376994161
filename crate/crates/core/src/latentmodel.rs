//! Ordinal latent-variable segregation model for pedigrees.
//!
//! Given latent variables `U`, member `j` of a family has
//! `logit P(Y_j <= k | U) = x_j'beta + alpha_k + a_j'gamma` with
//! `a_j = (U1, b1 + b2, b1 * b2)`: a family-wide environment switch `U1 ~
//! Bern(theta1)` and the member's two latent allele bits `(b1, b2)`. Founder
//! bits are iid `Bern(theta2)`; each nonfounder inherits one bit from each
//! parent, picked by a fair coin `U3` per parent-offspring pair.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::cumlogit::{level_cell, logistic, Cell};
use crate::error::{Error, Result};
use crate::pedigree::{Individual, Pedigree, Sex};
use crate::propodds::{alpha_of, ascent_direction};

/// Default penalty weight on `log theta + log(1 - theta)` for both thetas.
pub const PENALTY_EPSILON: f64 = 1e-2;
/// Penalty weight of the modified likelihood-ratio test for `gamma1`.
pub const LRT_PENALTY: f64 = 1.0;
/// Largest latent space enumerated, as a power of two.
pub const MAX_LATENT_BITS: u32 = 24;
/// Upper 5% point of the 50:50 mixture of chi2_0 and chi2_1.
pub const LRT_CRITICAL_05: f64 = 2.705543454095404;
pub const N_STARTS: usize = 5;
pub const MAX_ITERATIONS: usize = 500;
/// Stop once a Newton step improves the penalized log-likelihood by less.
pub const LOGLIK_TOLERANCE: f64 = 1e-7;
const GRADIENT_TOLERANCE: f64 = 1e-6;
const JITTER_SEED: u64 = 0x6a17_5eed;

#[derive(Clone, Debug, PartialEq)]
pub struct LatentParams {
    pub theta1: f64,
    pub theta2: f64,
    pub beta: Vec<f64>,
    pub gamma: [f64; 3],
    /// Cut points `alpha_0 <= ... <= alpha_{K-2}` of a `K`-level trait.
    pub alpha: Vec<f64>,
}

impl LatentParams {
    pub fn levels(&self) -> usize {
        self.alpha.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        let open = |t: f64| t > 0.0 && t < 1.0;
        if !open(self.theta1) || !open(self.theta2) {
            return Err(Error::InvalidArgument(format!(
                "theta1 and theta2 must lie in (0,1), got {} and {}",
                self.theta1, self.theta2
            )));
        }
        if self.alpha.is_empty() || self.alpha.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("alpha must be non-empty and nondecreasing".into()));
        }
        Ok(())
    }

    fn collapsed(&self) -> bool {
        self.gamma[1] == 0.0 && self.gamma[2] == 0.0
    }
}

/// One draw of every latent variable of a family.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatentConfiguration {
    pub u1: bool,
    /// Both allele bits of every member, founders drawn and nonfounders
    /// inherited.
    pub u2: Vec<[bool; 2]>,
    /// Transmission coins, two per nonfounder (from father, from mother) in
    /// member order.
    pub u3: Vec<bool>,
}

impl LatentConfiguration {
    /// `a_j = (U1, b1 + b2, b1 * b2)`.
    pub fn design(&self, member: usize) -> [f64; 3] {
        let [b1, b2] = self.u2[member];
        [
            f64::from(u8::from(self.u1)),
            f64::from(u8::from(b1) + u8::from(b2)),
            f64::from(u8::from(b1 && b2)),
        ]
    }
}

/// Traits and covariates of one family.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilyData {
    pub pedigree: Pedigree,
    /// Covariates per member; every row has the same length.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
}

impl FamilyData {
    /// Same family with covariates dropped.
    pub fn without_covariates(&self) -> FamilyData {
        FamilyData {
            pedigree: self.pedigree.clone(),
            x: vec![Vec::new(); self.y.len()],
            y: self.y.clone(),
        }
    }
}

/// Which parameters a fit estimates; the others stay at their initial values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamMask {
    pub theta1: bool,
    pub theta2: bool,
    pub beta: bool,
    pub gamma: [bool; 3],
    pub alpha: bool,
}

impl ParamMask {
    pub fn all() -> Self {
        ParamMask {
            theta1: true,
            theta2: true,
            beta: true,
            gamma: [true; 3],
            alpha: true,
        }
    }

    /// Environment effect only: `gamma2 = gamma3 = 0` held fixed.
    pub fn environment_only() -> Self {
        ParamMask {
            gamma: [true, false, false],
            ..Self::all()
        }
    }

    /// No latent effects at all.
    pub fn no_latent() -> Self {
        ParamMask {
            gamma: [false; 3],
            ..Self::all()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub params: LatentParams,
    pub loglik: f64,
    pub penalized_loglik: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// `eps * [log th1 + log(1-th1) + log th2 + log(1-th2)]`, never positive.
pub fn penalty(params: &LatentParams, epsilon: f64) -> f64 {
    let t = |x: f64| x.ln() + (1.0 - x).ln();
    epsilon * (t(params.theta1) + t(params.theta2))
}

fn latent_bits(ped: &Pedigree) -> u32 {
    let founders = ped.founders().len() as u32;
    let nonfounders = (ped.n() as u32) - founders;
    1 + 2 * founders + 2 * nonfounders
}

/// Draws every latent variable of a family.
pub fn generate_latent(ped: &Pedigree, params: &LatentParams, rng: &mut impl Rng) -> LatentConfiguration {
    let u1 = rng.random_bool(params.theta1);
    generate_latent_given_u1(ped, params, u1, rng)
}

fn generate_latent_given_u1(
    ped: &Pedigree,
    params: &LatentParams,
    u1: bool,
    rng: &mut impl Rng,
) -> LatentConfiguration {
    let mut u2 = vec![[false; 2]; ped.n()];
    let mut u3 = vec![false; 2 * (ped.n() - ped.founders().len())];
    let coin_slot = coin_slots(ped);
    for &j in ped.topological_order() {
        match ped.parents_of(j) {
            None => {
                u2[j] = [rng.random_bool(params.theta2), rng.random_bool(params.theta2)];
            }
            Some((f, m)) => {
                let cf = rng.random_bool(0.5);
                let cm = rng.random_bool(0.5);
                u3[coin_slot[j]] = cf;
                u3[coin_slot[j] + 1] = cm;
                u2[j] = [inherit(u2[f], cf), inherit(u2[m], cm)];
            }
        }
    }
    LatentConfiguration { u1, u2, u3 }
}

/// `U2_{2k-1} U3 + U2_{2k} (1 - U3)`.
#[inline]
fn inherit(parent: [bool; 2], coin: bool) -> bool {
    if coin {
        parent[0]
    } else {
        parent[1]
    }
}

/// Index of each nonfounder's first coin in the `u3` vector.
fn coin_slots(ped: &Pedigree) -> Vec<usize> {
    let mut slots = vec![usize::MAX; ped.n()];
    let mut next = 0;
    for (j, slot) in slots.iter_mut().enumerate() {
        if !ped.is_founder(j) {
            *slot = next;
            next += 2;
        }
    }
    slots
}

/// Inverse-CDF draw of a level given a uniform `u`.
pub fn sample_level(alpha: &[f64], eta: f64, u: f64) -> usize {
    alpha
        .iter()
        .position(|&a| u <= logistic(a + eta))
        .unwrap_or(alpha.len())
}

/// Traits of every member given the latent draw.
pub fn sample_traits(
    x: &[Vec<f64>],
    params: &LatentParams,
    latent: &LatentConfiguration,
    rng: &mut impl Rng,
) -> Vec<usize> {
    (0..latent.u2.len())
        .map(|j| {
            let eta = linear_predictor(&x[j], params, latent.design(j));
            sample_level(&params.alpha, eta, rng.random::<f64>())
        })
        .collect()
}

fn linear_predictor(x: &[f64], params: &LatentParams, a: [f64; 3]) -> f64 {
    let xb: f64 = x.iter().zip(&params.beta).map(|(x, b)| x * b).sum();
    xb + a.iter().zip(&params.gamma).map(|(a, g)| a * g).sum::<f64>()
}

/// Traits for every member of `ped` under the model.
pub fn generate_family(ped: &Pedigree, x: &[Vec<f64>], params: &LatentParams, rng: &mut impl Rng) -> Vec<usize> {
    let latent = generate_latent(ped, params, rng);
    sample_traits(x, params, &latent, rng)
}

/// A set of latent configurations sharing every member's allele-bit sum and
/// the number of founder bits set to one. `log_coef` is the log of the
/// number of such configurations times `2^-coins`.
#[derive(Clone, Debug)]
struct GeneticClass {
    sums: Vec<u8>,
    founder_ones: u32,
    log_coef: f64,
}

/// Groups all `2^(founder bits + coins)` configurations of a pedigree.
fn genetic_classes(ped: &Pedigree) -> Result<Vec<GeneticClass>> {
    let bits = latent_bits(ped);
    if bits > MAX_LATENT_BITS {
        return Err(Error::LatentSpaceTooLarge {
            bits,
            limit: MAX_LATENT_BITS,
        });
    }
    let n = ped.n();
    let founders = ped.founders();
    let nf = founders.len();
    let coins = 2 * (n - nf);
    let coin_slot = coin_slots(ped);
    let mut counts: BTreeMap<(Vec<u8>, u32), u64> = BTreeMap::new();
    let mut u2 = vec![[false; 2]; n];
    for config in 0u64..(1u64 << (2 * nf + coins)) {
        for (f, &j) in founders.iter().enumerate() {
            u2[j] = [config >> (2 * f) & 1 == 1, config >> (2 * f + 1) & 1 == 1];
        }
        let coin_bits = config >> (2 * nf);
        for &j in ped.topological_order() {
            if let Some((f, m)) = ped.parents_of(j) {
                let s = coin_slot[j];
                u2[j] = [
                    inherit(u2[f], coin_bits >> s & 1 == 1),
                    inherit(u2[m], coin_bits >> (s + 1) & 1 == 1),
                ];
            }
        }
        let ones = (config & ((1u64 << (2 * nf)) - 1)).count_ones();
        let sums = u2.iter().map(|b| u8::from(b[0]) + u8::from(b[1])).collect();
        *counts.entry((sums, ones)).or_default() += 1;
    }
    let log_half = -(coins as f64) * std::f64::consts::LN_2;
    Ok(counts
        .into_iter()
        .map(|((sums, founder_ones), c)| GeneticClass {
            sums,
            founder_ones,
            log_coef: (c as f64).ln() + log_half,
        })
        .collect())
}

/// Log-likelihood of one family by summing the conditional likelihood over
/// every one of the `2^(1 + 2 * founders + coins)` latent configurations.
pub fn loglik_enumerated(fam: &FamilyData, params: &LatentParams) -> Result<f64> {
    let ped = &fam.pedigree;
    let bits = latent_bits(ped);
    if bits > MAX_LATENT_BITS {
        return Err(Error::LatentSpaceTooLarge {
            bits,
            limit: MAX_LATENT_BITS,
        });
    }
    let n = ped.n();
    let founders = ped.founders();
    let nf = founders.len();
    let coin_slot = coin_slots(ped);
    let (lt1, lf1) = (params.theta1.ln(), (1.0 - params.theta1).ln());
    let (lt2, lf2) = (params.theta2.ln(), (1.0 - params.theta2).ln());
    let mut acc = LogSumExp::default();
    let mut latent = LatentConfiguration {
        u1: false,
        u2: vec![[false; 2]; n],
        u3: vec![false; 2 * (n - nf)],
    };
    for config in 0u64..(1u64 << bits) {
        latent.u1 = config & 1 == 1;
        let mut lp = if latent.u1 { lt1 } else { lf1 };
        for (f, &j) in founders.iter().enumerate() {
            let b = [config >> (1 + 2 * f) & 1 == 1, config >> (2 + 2 * f) & 1 == 1];
            lp += b.iter().map(|&x| if x { lt2 } else { lf2 }).sum::<f64>();
            latent.u2[j] = b;
        }
        for (s, coin) in latent.u3.iter_mut().enumerate() {
            *coin = config >> (1 + 2 * nf + s) & 1 == 1;
            lp -= std::f64::consts::LN_2;
        }
        for &j in ped.topological_order() {
            if let Some((f, m)) = ped.parents_of(j) {
                let s = coin_slot[j];
                latent.u2[j] = [inherit(latent.u2[f], latent.u3[s]), inherit(latent.u2[m], latent.u3[s + 1])];
            }
        }
        for j in 0..n {
            let eta = linear_predictor(&fam.x[j], params, latent.design(j));
            lp += level_cell(&params.alpha, fam.y[j], eta).logp;
        }
        acc.add(lp);
    }
    Ok(acc.value())
}

#[derive(Clone, Copy, Debug)]
struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl LogSumExp {
    fn add(&mut self, x: f64) {
        if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

/// A family ready for likelihood evaluation: its mixture components and how
/// many identical families it stands for.
#[derive(Clone, Debug)]
struct PreparedFamily {
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
    /// Empty on the collapsed path.
    classes: Vec<GeneticClass>,
    founder_bits: u32,
    multiplicity: f64,
}

/// Builds the evaluation units. On the collapsed path a family enters only
/// through the multiset of its members' `(x, y)`, so identical multisets are
/// merged.
fn prepare(families: &[FamilyData], collapsed: bool) -> Result<Vec<PreparedFamily>> {
    // member covariates as bit patterns, with the trait level
    type MemberKey = (Vec<u64>, usize);
    if collapsed {
        let mut groups: BTreeMap<Vec<MemberKey>, (usize, f64)> = BTreeMap::new();
        for (i, fam) in families.iter().enumerate() {
            let mut key: Vec<MemberKey> = fam
                .x
                .iter()
                .zip(&fam.y)
                .map(|(x, &y)| (x.iter().map(|v| v.to_bits()).collect(), y))
                .collect();
            key.sort_unstable();
            groups.entry(key).or_insert((i, 0.0)).1 += 1.0;
        }
        let mut out: Vec<(usize, f64)> = groups.into_values().collect();
        out.sort_unstable_by_key(|&(i, _)| i);
        return Ok(out
            .into_iter()
            .map(|(i, m)| PreparedFamily {
                x: families[i].x.clone(),
                y: families[i].y.clone(),
                classes: Vec::new(),
                founder_bits: 0,
                multiplicity: m,
            })
            .collect());
    }
    let mut cache: HashMap<Vec<Option<(usize, usize)>>, Vec<GeneticClass>> = HashMap::new();
    families
        .iter()
        .map(|fam| {
            let ped = &fam.pedigree;
            let shape: Vec<_> = (0..ped.n()).map(|j| ped.parents_of(j)).collect();
            let classes = match cache.get(&shape) {
                Some(c) => c.clone(),
                None => {
                    let c = genetic_classes(ped)?;
                    cache.insert(shape, c.clone());
                    c
                }
            };
            Ok(PreparedFamily {
                x: fam.x.clone(),
                y: fam.y.clone(),
                classes,
                founder_bits: 2 * ped.founders().len() as u32,
                multiplicity: 1.0,
            })
        })
        .collect()
}

/// Index layout of the natural parameter vector:
/// `[logit theta1, logit theta2, beta, gamma, alpha]`.
#[derive(Clone, Copy, Debug)]
struct Layout {
    p: usize,
    na: usize,
}

impl Layout {
    fn dim(&self) -> usize {
        5 + self.p + self.na
    }
    fn beta(&self) -> usize {
        2
    }
    fn gamma(&self) -> usize {
        2 + self.p
    }
    fn alpha(&self) -> usize {
        5 + self.p
    }
}

struct Derivs {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

fn check_data(families: &[FamilyData], params: &LatentParams) -> Result<()> {
    let levels = params.levels();
    for fam in families {
        let n = fam.pedigree.n();
        if fam.y.len() != n || fam.x.len() != n {
            return Err(Error::LengthMismatch {
                left: fam.y.len().min(fam.x.len()),
                right: n,
            });
        }
        if let Some(row) = fam.x.iter().find(|r| r.len() != params.beta.len()) {
            return Err(Error::LengthMismatch {
                left: row.len(),
                right: params.beta.len(),
            });
        }
        if let Some(&y) = fam.y.iter().find(|&&y| y >= levels) {
            return Err(Error::InvalidArgument(format!(
                "trait level {y} outside 0..{levels}"
            )));
        }
    }
    Ok(())
}

/// Log-likelihood and, if asked, its gradient and Hessian in the natural
/// layout, for one prepared family. Derivatives use the mixture identities
/// `grad = E[g]` and `hess = E[H] + E[g g'] - grad grad'` over the posterior
/// of the latent components.
fn family_derivs(fam: &PreparedFamily, params: &LatentParams, layout: Layout, derivs: bool) -> Derivs {
    const STATES: usize = 6;
    let n = fam.y.len();
    let d = layout.dim();
    let (t1, t2) = (params.theta1, params.theta2);
    let m = f64::from(fam.founder_bits);
    let collapsed = fam.classes.is_empty();
    let n_class = fam.classes.len().max(1);
    let n_comp = 2 * n_class;
    // member state = u1 * 3 + allele-bit sum
    let design = |state: usize| {
        let s = state % 3;
        [(state / 3) as f64, s as f64, f64::from(u8::from(s == 2))]
    };
    let mut cells = vec![Cell::default(); n * STATES];
    for j in 0..n {
        for st in 0..STATES {
            if collapsed && st % 3 != 0 {
                continue;
            }
            let eta = linear_predictor(&fam.x[j], params, design(st));
            cells[j * STATES + st] = level_cell(&params.alpha, fam.y[j], eta);
        }
    }
    let state_of = |c: usize, j: usize| -> usize {
        let u1 = c / n_class;
        if collapsed {
            u1 * 3
        } else {
            u1 * 3 + fam.classes[c % n_class].sums[j] as usize
        }
    };
    let mut logs = Vec::with_capacity(n_comp);
    let mut lse = LogSumExp::default();
    for c in 0..n_comp {
        let mut t = if c / n_class == 1 { t1.ln() } else { (1.0 - t1).ln() };
        if !collapsed {
            let cl = &fam.classes[c % n_class];
            let k = f64::from(cl.founder_ones);
            t += cl.log_coef + k * t2.ln() + (m - k) * (1.0 - t2).ln();
        }
        for j in 0..n {
            t += cells[j * STATES + state_of(c, j)].logp;
        }
        lse.add(t);
        logs.push(t);
    }
    let value = lse.value();
    if !derivs {
        return Derivs {
            value,
            grad: DVector::zeros(0),
            hess: DMatrix::zeros(0, 0),
        };
    }

    let (ib, ig, ia) = (layout.beta(), layout.gamma(), layout.alpha());
    // complete-data gradient of each member in each state
    let mut mgrad = vec![0.0; n * STATES * d];
    for j in 0..n {
        for st in 0..STATES {
            if collapsed && st % 3 != 0 {
                continue;
            }
            let ce = &cells[j * STATES + st];
            let g = &mut mgrad[(j * STATES + st) * d..(j * STATES + st + 1) * d];
            let de = ce.deta();
            for (k, x) in fam.x[j].iter().enumerate() {
                g[ib + k] = de * x;
            }
            for (k, a) in design(st).iter().enumerate() {
                g[ig + k] = de * a;
            }
            let y = fam.y[j];
            if y < layout.na {
                g[ia + y] += ce.da;
            }
            if y > 0 {
                g[ia + y - 1] += ce.db;
            }
        }
    }

    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    let mut member_weight = vec![0.0; n * STATES];
    let mut gc = vec![0.0; d];
    for (c, &t) in logs.iter().enumerate() {
        let w = (t - value).exp();
        if w == 0.0 {
            continue;
        }
        gc.iter_mut().for_each(|x| *x = 0.0);
        gc[0] = (c / n_class) as f64 - t1;
        if !collapsed {
            gc[1] = f64::from(fam.classes[c % n_class].founder_ones) - m * t2;
        }
        for j in 0..n {
            let st = state_of(c, j);
            member_weight[j * STATES + st] += w;
            let g = &mgrad[(j * STATES + st) * d..(j * STATES + st + 1) * d];
            gc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        for r in 0..d {
            grad[r] += w * gc[r];
            let wr = w * gc[r];
            if wr != 0.0 {
                for (h, g) in hess[r * d..(r + 1) * d].iter_mut().zip(&gc) {
                    *h += wr * g;
                }
            }
        }
    }
    for r in 0..d {
        for c in 0..d {
            hess[r * d + c] -= grad[r] * grad[c];
        }
    }
    hess[0] -= t1 * (1.0 - t1);
    hess[d + 1] -= m * t2 * (1.0 - t2);

    // expected complete-data Hessian from member-state posterior weights
    let mut v: Vec<(usize, f64)> = Vec::with_capacity(layout.p + 3);
    for j in 0..n {
        for st in 0..STATES {
            let w = member_weight[j * STATES + st];
            if w == 0.0 {
                continue;
            }
            let ce = &cells[j * STATES + st];
            v.clear();
            v.extend(fam.x[j].iter().enumerate().map(|(k, &x)| (ib + k, x)));
            v.extend(design(st).iter().enumerate().map(|(k, &a)| (ig + k, a)));
            let de2 = w * ce.deta2();
            for &(r, vr) in &v {
                for &(c, vc) in &v {
                    hess[r * d + c] += de2 * vr * vc;
                }
            }
            let y = fam.y[j];
            let top = (y < layout.na).then(|| ia + y);
            let bottom = (y > 0).then(|| ia + y - 1);
            if let Some(a) = top {
                hess[a * d + a] += w * ce.daa;
                for &(r, vr) in &v {
                    let x = w * (ce.daa + ce.dab) * vr;
                    hess[r * d + a] += x;
                    hess[a * d + r] += x;
                }
            }
            if let Some(b) = bottom {
                hess[b * d + b] += w * ce.dbb;
                for &(r, vr) in &v {
                    let x = w * (ce.dab + ce.dbb) * vr;
                    hess[r * d + b] += x;
                    hess[b * d + r] += x;
                }
            }
            if let (Some(a), Some(b)) = (top, bottom) {
                hess[a * d + b] += w * ce.dab;
                hess[b * d + a] += w * ce.dab;
            }
        }
    }
    Derivs {
        value,
        grad: DVector::from_vec(grad),
        hess: DMatrix::from_row_slice(d, d, &hess),
    }
}

fn total_derivs(prepared: &[PreparedFamily], params: &LatentParams, layout: Layout, derivs: bool) -> Derivs {
    let d = if derivs { layout.dim() } else { 0 };
    let mut total = Derivs {
        value: 0.0,
        grad: DVector::zeros(d),
        hess: DMatrix::zeros(d, d),
    };
    for fam in prepared {
        let f = family_derivs(fam, params, layout, derivs);
        total.value += fam.multiplicity * f.value;
        if derivs {
            total.grad.axpy(fam.multiplicity, &f.grad, 1.0);
            total.hess += f.hess * fam.multiplicity;
        }
    }
    total
}

/// Exact marginal log-likelihood of one family. Only `U1` is enumerated when
/// `gamma2 = gamma3 = 0`; otherwise every latent configuration is.
pub fn family_loglik(fam: &FamilyData, params: &LatentParams) -> Result<f64> {
    loglik(std::slice::from_ref(fam), params)
}

/// Sum of [`family_loglik`] over families.
pub fn loglik(families: &[FamilyData], params: &LatentParams) -> Result<f64> {
    params.validate()?;
    check_data(families, params)?;
    let prepared = prepare(families, params.collapsed())?;
    let layout = Layout {
        p: params.beta.len(),
        na: params.alpha.len(),
    };
    Ok(total_derivs(&prepared, params, layout, false).value)
}

/// Log-likelihood through the full genetic enumeration even when the
/// collapsed form applies.
pub fn loglik_full(families: &[FamilyData], params: &LatentParams) -> Result<f64> {
    params.validate()?;
    check_data(families, params)?;
    let prepared = prepare(families, false)?;
    let layout = Layout {
        p: params.beta.len(),
        na: params.alpha.len(),
    };
    Ok(total_derivs(&prepared, params, layout, false).value)
}

/// Working parameters: thetas on the logit scale, cut points as the first
/// value plus log increments.
fn to_working(params: &LatentParams) -> Vec<f64> {
    let logit = |t: f64| (t / (1.0 - t)).ln();
    let mut psi = vec![logit(params.theta1), logit(params.theta2)];
    psi.extend(&params.beta);
    psi.extend(params.gamma);
    for (k, &a) in params.alpha.iter().enumerate() {
        psi.push(if k == 0 { a } else { (a - params.alpha[k - 1]).max(1e-8).ln() });
    }
    psi
}

fn from_working(psi: &[f64], layout: Layout) -> LatentParams {
    LatentParams {
        theta1: logistic(psi[0]),
        theta2: logistic(psi[1]),
        beta: psi[layout.beta()..layout.gamma()].to_vec(),
        gamma: [psi[layout.gamma()], psi[layout.gamma() + 1], psi[layout.gamma() + 2]],
        alpha: alpha_of(&psi[layout.alpha()..], layout.na),
    }
}

struct Objective<'a> {
    prepared: &'a [PreparedFamily],
    layout: Layout,
    free: Vec<usize>,
    epsilon: f64,
}

impl Objective<'_> {
    fn value(&self, psi: &[f64]) -> (f64, f64) {
        let params = from_working(psi, self.layout);
        let ll = total_derivs(self.prepared, &params, self.layout, false).value;
        (ll, ll + penalty(&params, self.epsilon))
    }

    /// Penalized value, gradient and Hessian over the free working
    /// parameters.
    fn derivs(&self, psi: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let layout = self.layout;
        let params = from_working(psi, layout);
        let nat = total_derivs(self.prepared, &params, layout, true);
        let d = layout.dim();
        let mut g = nat.grad;
        let mut h = nat.hess;
        for (idx, t) in [(0, params.theta1), (1, params.theta2)] {
            g[idx] += self.epsilon * (1.0 - 2.0 * t);
            h[(idx, idx)] -= 2.0 * self.epsilon * t * (1.0 - t);
        }
        // chain rule for the cut-point increments
        let a0 = layout.alpha();
        let mut jac = DMatrix::<f64>::identity(d, d);
        for k in 0..layout.na {
            jac[(a0 + k, a0)] = 1.0;
            for m in 1..=k {
                jac[(a0 + k, a0 + m)] = psi[a0 + m].exp();
            }
        }
        let gw = jac.transpose() * &g;
        let mut hw = jac.transpose() * &h * &jac;
        for m in 1..layout.na {
            let tail: f64 = (m..layout.na).map(|k| g[a0 + k]).sum();
            hw[(a0 + m, a0 + m)] += psi[a0 + m].exp() * tail;
        }
        let f = self.free.len();
        let gf = DVector::from_fn(f, |i, _| gw[self.free[i]]);
        let hf = DMatrix::from_fn(f, f, |i, j| hw[(self.free[i], self.free[j])]);
        (nat.value + penalty(&params, self.epsilon), gf, hf)
    }

    fn newton(&self, mut psi: Vec<f64>) -> (Vec<f64>, bool, usize) {
        let (mut f, mut g, mut h) = self.derivs(&psi);
        for it in 0..MAX_ITERATIONS {
            if !f.is_finite() {
                return (psi, false, it);
            }
            if g.amax() < GRADIENT_TOLERANCE {
                return (psi, true, it);
            }
            let dir = ascent_direction(&g, &h);
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let mut trial = psi.clone();
                for (i, &k) in self.free.iter().enumerate() {
                    trial[k] += step * dir[i];
                }
                let (_, ft) = self.value(&trial);
                if ft.is_finite() && ft >= f - 1e-12 * f.abs() {
                    accepted = Some((trial, ft));
                    break;
                }
                step *= 0.5;
            }
            let Some((trial, ft)) = accepted else {
                return (psi, g.amax() < 1e-4, it + 1);
            };
            let gain = ft - f;
            psi = trial;
            (f, g, h) = self.derivs(&psi);
            if gain.abs() < LOGLIK_TOLERANCE && step == 1.0 && g.amax() < 1e-3 {
                return (psi, true, it + 1);
            }
        }
        (psi, false, MAX_ITERATIONS)
    }
}

/// Penalized maximum likelihood from `init` and [`N_STARTS`]` - 1` jittered
/// copies, keeping the best converged optimum. Parameters outside `mask`
/// stay at their values in `init`.
pub fn fit(families: &[FamilyData], mask: ParamMask, init: &LatentParams) -> Result<FitResult> {
    fit_penalized(families, mask, init, PENALTY_EPSILON)
}

/// [`fit`] with penalty weight `epsilon`.
pub fn fit_penalized(
    families: &[FamilyData],
    mask: ParamMask,
    init: &LatentParams,
    epsilon: f64,
) -> Result<FitResult> {
    init.validate()?;
    check_data(families, init)?;
    let collapsed = !mask.gamma[1] && !mask.gamma[2] && init.collapsed();
    let mut init = init.clone();
    if collapsed {
        // theta2 no longer enters the likelihood; the penalty alone puts it here
        init.theta2 = 0.5;
    }
    let layout = Layout {
        p: init.beta.len(),
        na: init.alpha.len(),
    };
    let prepared = prepare(families, collapsed)?;
    let mut free = Vec::new();
    if mask.theta1 {
        free.push(0);
    }
    if mask.theta2 && !collapsed {
        free.push(1);
    }
    if mask.beta {
        free.extend(layout.beta()..layout.gamma());
    }
    for k in 0..3 {
        if mask.gamma[k] {
            free.push(layout.gamma() + k);
        }
    }
    if mask.alpha {
        free.extend(layout.alpha()..layout.dim());
    }
    let objective = Objective {
        prepared: &prepared,
        layout,
        free,
        epsilon,
    };

    let psi0 = to_working(&init);
    let mut rng = ChaCha8Rng::seed_from_u64(JITTER_SEED);
    let mut starts = vec![psi0.clone()];
    // without latent effects the objective is concave and one start suffices
    let n_starts = if mask.gamma.iter().any(|&g| g) { N_STARTS } else { 1 };
    for _ in 1..n_starts {
        let mut psi = psi0.clone();
        for &k in &objective.free {
            let scale = if k < 2 || (layout.gamma()..layout.alpha()).contains(&k) {
                1.0
            } else {
                0.3
            };
            let z: f64 = rng.sample(StandardNormal);
            psi[k] += scale * z;
        }
        starts.push(psi);
    }

    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    let mut last_iterations = 0;
    for start in starts {
        let (psi, converged, iterations) = objective.newton(start);
        last_iterations = iterations;
        if !converged {
            continue;
        }
        let (_, pen) = objective.value(&psi);
        if best.as_ref().is_none_or(|(b, _, _)| pen > *b) {
            best = Some((pen, psi, iterations));
        }
    }
    let (_, psi, iterations) = best.ok_or(Error::NonConvergence {
        iterations: last_iterations,
        grad_norm: f64::NAN,
    })?;
    let (ll, pen) = objective.value(&psi);
    Ok(FitResult {
        params: from_working(&psi, layout),
        loglik: ll,
        penalized_loglik: pen,
        converged: true,
        iterations,
    })
}

/// Starting values: no latent or covariate effects, thetas at 1/2, cut
/// points at the empirical cumulative logits.
pub fn default_init(families: &[FamilyData], levels: usize, p: usize) -> LatentParams {
    let mut counts = vec![1.0; levels];
    for fam in families {
        for &y in &fam.y {
            if y < levels {
                counts[y] += 1.0;
            }
        }
    }
    let total: f64 = counts.iter().sum();
    let mut cum = 0.0;
    let alpha = (0..levels - 1)
        .map(|k| {
            cum += counts[k];
            let q = cum / total;
            (q / (1.0 - q)).ln()
        })
        .collect();
    LatentParams {
        theta1: 0.5,
        theta2: 0.5,
        beta: vec![0.0; p],
        gamma: [0.0; 3],
        alpha,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrtOptions {
    /// Adjust for the families' covariates; otherwise they are ignored.
    pub include_covariates: bool,
    /// Penalty weight applied to both fits.
    pub epsilon: f64,
}

impl Default for LrtOptions {
    fn default() -> Self {
        LrtOptions {
            include_covariates: false,
            epsilon: LRT_PENALTY,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LrtResult {
    pub stat: f64,
    pub reject: bool,
    pub null: FitResult,
    pub alternative: FitResult,
}

/// Modified likelihood-ratio test of `gamma1 = 0` with `gamma2 = gamma3 =
/// 0`: twice the gain in penalized log-likelihood, floored at zero and
/// compared with [`LRT_CRITICAL_05`]. The penalty holds `theta1` away from
/// the boundary, where it is not identified under the null.
pub fn lrt_gamma1(families: &[FamilyData], levels: usize, opts: &LrtOptions) -> Result<LrtResult> {
    let stripped;
    let data: &[FamilyData] = if opts.include_covariates {
        families
    } else {
        stripped = families.iter().map(FamilyData::without_covariates).collect::<Vec<_>>();
        &stripped
    };
    let p = data.first().map_or(0, |f| f.x.first().map_or(0, Vec::len));
    let init = default_init(data, levels, p);
    let null = fit_penalized(data, ParamMask::no_latent(), &init, opts.epsilon)?;
    let mut alt_init = null.params.clone();
    alt_init.gamma = [0.5, 0.0, 0.0];
    let alternative = fit_penalized(data, ParamMask::environment_only(), &alt_init, opts.epsilon)?;
    let stat = 2.0 * (alternative.penalized_loglik.max(null.penalized_loglik) - null.penalized_loglik);
    Ok(LrtResult {
        stat,
        reject: stat > LRT_CRITICAL_05,
        null,
        alternative,
    })
}

/// Parametric-bootstrap upper `level` point of the LRT under the fitted
/// null, reusing the pedigrees and covariates of `families`.
pub fn calibrate_lrt_threshold(
    families: &[FamilyData],
    levels: usize,
    opts: &LrtOptions,
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<f64> {
    let observed = lrt_gamma1(families, levels, opts)?;
    let null = observed.null.params;
    let mut stats: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let sim: Vec<FamilyData> = families
                .iter()
                .map(|fam| {
                    let x = if opts.include_covariates {
                        fam.x.clone()
                    } else {
                        vec![Vec::new(); fam.y.len()]
                    };
                    let y = generate_family(&fam.pedigree, &x, &null, &mut rng);
                    FamilyData {
                        pedigree: fam.pedigree.clone(),
                        x,
                        y,
                    }
                })
                .collect();
            lrt_gamma1(&sim, levels, opts).map(|r| r.stat)
        })
        .collect::<Result<_>>()?;
    stats.sort_unstable_by(f64::total_cmp);
    let idx = (((1.0 - level) * replicates as f64).ceil() as usize).clamp(1, replicates) - 1;
    Ok(stats[idx])
}

/// Family layouts used by the simulators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyShape {
    /// Two parents and one child.
    Trio,
    /// Two parents, three children, one child's spouse and their child:
    /// 7 members, 3 founders.
    Seven,
    /// Two parents, four children, one child's spouse and their child:
    /// 8 members, 3 founders.
    Eight,
}

impl FamilyShape {
    pub fn build(self, family_id: &str) -> Pedigree {
        let id = |s: &str| format!("{family_id}_{s}");
        let founder = |s: &str, sex| Individual::founder(family_id, &id(s), sex);
        let child = |s: &str, f: &str, m: &str, sex| Individual::child(family_id, &id(s), &id(f), &id(m), sex);
        let members = match self {
            FamilyShape::Trio => vec![
                founder("fa", Sex::Male),
                founder("mo", Sex::Female),
                child("c1", "fa", "mo", Sex::Unknown),
            ],
            FamilyShape::Seven | FamilyShape::Eight => {
                let mut m = vec![
                    founder("fa", Sex::Male),
                    founder("mo", Sex::Female),
                    child("c1", "fa", "mo", Sex::Male),
                    child("c2", "fa", "mo", Sex::Female),
                    child("c3", "fa", "mo", Sex::Male),
                ];
                if self == FamilyShape::Eight {
                    m.push(child("c4", "fa", "mo", Sex::Female));
                }
                m.push(founder("sp", Sex::Female));
                m.push(child("gc", "c1", "sp", Sex::Unknown));
                m
            }
        };
        Pedigree::new(family_id, members).expect("fixed family layout is valid")
    }

    pub fn size(self) -> usize {
        match self {
            FamilyShape::Trio => 3,
            FamilyShape::Seven => 7,
            FamilyShape::Eight => 8,
        }
    }
}

/// Grid and settings of the covariate-omission study.
#[derive(Clone, Debug, PartialEq)]
pub struct OmissionStudyConfig {
    pub replicates: usize,
    pub seed: u64,
    pub families: usize,
    pub shape: FamilyShape,
    pub theta1: f64,
    pub alpha: Vec<f64>,
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Subtracted from every covariate value before it enters the model.
    pub covariate_center: f64,
    /// Penalty weight of the likelihood-ratio test.
    pub penalty: f64,
}

impl Default for OmissionStudyConfig {
    fn default() -> Self {
        OmissionStudyConfig {
            replicates: 10_000,
            seed: 7919,
            families: 200,
            shape: FamilyShape::Seven,
            theta1: 0.3,
            alpha: vec![-1.0, 1.0],
            betas: vec![0.0, 1.0, 5.0, 10.0],
            gammas: vec![0.0, 1.0, 2.0],
            covariate_center: 0.55,
            penalty: LRT_PENALTY,
        }
    }
}

/// Rejection rates, `rates[beta index][gamma1 index]`.
#[derive(Clone, Debug, PartialEq)]
pub struct OmissionStudy {
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Rejection rates at `critical`.
    pub rates: Vec<Vec<f64>>,
    pub critical: f64,
    pub replicates: usize,
    /// Replicates whose fits failed, per cell; counted as non-rejections.
    pub failures: Vec<Vec<usize>>,
    /// LRT statistics per cell, `NaN` for failed fits.
    pub stats: Vec<Vec<Vec<f64>>>,
}

impl OmissionStudy {
    /// Rejection rates at another critical value.
    pub fn rates_at(&self, critical: f64) -> Vec<Vec<f64>> {
        self.stats
            .iter()
            .map(|row| {
                row.iter()
                    .map(|cell| cell.iter().filter(|&&t| t > critical).count() as f64 / cell.len() as f64)
                    .collect()
            })
            .collect()
    }
}

/// Random draws of one replicate, shared by every cell of the grid.
struct ReplicateDraws {
    u1: Vec<bool>,
    x: Vec<Vec<f64>>,
    uniforms: Vec<Vec<f64>>,
}

fn replicate_draws(cfg: &OmissionStudyConfig, replicate: usize) -> ReplicateDraws {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(replicate as u64);
    let n = cfg.shape.size();
    let mut draws = ReplicateDraws {
        u1: Vec::with_capacity(cfg.families),
        x: Vec::with_capacity(cfg.families),
        uniforms: Vec::with_capacity(cfg.families),
    };
    for _ in 0..cfg.families {
        let r1: f64 = rng.random();
        draws.u1.push(r1 > cfg.theta1);
        draws.x.push((0..n).map(|_| 0.9 * rng.random::<f64>() + 0.2 * r1 - cfg.covariate_center).collect());
        draws.uniforms.push((0..n).map(|_| rng.random::<f64>()).collect());
    }
    draws
}

/// Covariate-omission study: for every `(beta, gamma1)` cell, simulate
/// families with `x = 0.9 r2 + 0.2 r1 - center` and `U1 = [r1 > theta1]`, then test
/// `gamma1 = 0` ignoring `x`. Cells of one replicate share their random
/// draws.
pub fn omission_study(cfg: &OmissionStudyConfig) -> Result<OmissionStudy> {
    if cfg.replicates == 0 || cfg.families == 0 {
        return Err(Error::InvalidArgument("replicates and families must be positive".into()));
    }
    let (nb, ng) = (cfg.betas.len(), cfg.gammas.len());
    let peds: Vec<Pedigree> = (0..cfg.families).map(|i| cfg.shape.build(&format!("F{i}"))).collect();
    let levels = cfg.alpha.len() + 1;
    let opts = LrtOptions {
        include_covariates: false,
        epsilon: cfg.penalty,
    };
    let outcomes: Vec<Vec<f64>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|rep| {
            let draws = replicate_draws(cfg, rep);
            let mut out = Vec::with_capacity(nb * ng);
            for &beta in &cfg.betas {
                for &gamma1 in &cfg.gammas {
                    let families: Vec<FamilyData> = (0..cfg.families)
                        .map(|i| {
                            let u1 = f64::from(u8::from(draws.u1[i]));
                            let y = draws.x[i]
                                .iter()
                                .zip(&draws.uniforms[i])
                                .map(|(&x, &u)| sample_level(&cfg.alpha, beta * x + gamma1 * u1, u))
                                .collect();
                            FamilyData {
                                pedigree: peds[i].clone(),
                                x: vec![Vec::new(); peds[i].n()],
                                y,
                            }
                        })
                        .collect();
                    out.push(lrt_gamma1(&families, levels, &opts).map_or(f64::NAN, |r| r.stat));
                }
            }
            out
        })
        .collect();
    let mut stats = vec![vec![Vec::with_capacity(cfg.replicates); ng]; nb];
    for rep in &outcomes {
        for (cell, &t) in rep.iter().enumerate() {
            stats[cell / ng][cell % ng].push(t);
        }
    }
    let failures = stats
        .iter()
        .map(|row| row.iter().map(|c| c.iter().filter(|t| t.is_nan()).count()).collect())
        .collect();
    let mut table = OmissionStudy {
        betas: cfg.betas.clone(),
        gammas: cfg.gammas.clone(),
        rates: Vec::new(),
        critical: LRT_CRITICAL_05,
        replicates: cfg.replicates,
        failures,
        stats,
    };
    table.rates = table.rates_at(table.critical);
    Ok(table)
}
