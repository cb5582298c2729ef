//! Belief-based logical consistency between fine and coarse predictions.
//!
//! For every fine focal set `A` and coarse focal set `B` the pair score is
//!
//! ```text
//! s(A, B) = w_f(A) · w_c(B) · κ(A, B) · T(m_f(A), μ(m_c(B)))
//! ```
//!
//! with κ the partial inclusion of `Π(A)` in `B` and `w` the specificity
//! weights. `Cons` is the feasibility-masked sum of scores divided by the
//! masked sum of κ; the loss is the batch mean of `1 - Cons`.
//!
//! Masses are clamped to `[0, 1]` before scoring and gradients are zero at
//! active clamps.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::Serialize;

use crate::belief::{FocalFamily, FocalSet};
use crate::error::{Error, Result};
use crate::fuzzy::{MembershipFn, TNorm};
use crate::hierarchy::{Hierarchy, Level};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsistencyConfig {
    pub tnorm: TNorm,
    pub membership: MembershipFn,
    /// Fine specificity exponent.
    pub tau_f: f64,
    /// Coarse specificity exponent.
    pub tau_c: f64,
    /// Rescale the specificity weights of each level to mean 1.
    pub normalize_weights: bool,
    /// Drop sets equal to the whole label space from both sums.
    pub exclude_omega: bool,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            tnorm: TNorm::Product,
            membership: MembershipFn::Gaussian { sigma: 1.0 },
            tau_f: 0.5,
            tau_c: 0.5,
            normalize_weights: true,
            exclude_omega: true,
        }
    }
}

impl ConsistencyConfig {
    /// Settings of the flowers walkthrough: product t-norm, gaussian σ = 1,
    /// τ = 1 and raw weights.
    pub fn worked_example() -> Self {
        Self {
            tnorm: TNorm::Product,
            membership: MembershipFn::Gaussian { sigma: 1.0 },
            tau_f: 1.0,
            tau_c: 1.0,
            normalize_weights: false,
            exclude_omega: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.membership.validated()?;
        if !(self.tau_f.is_finite() && self.tau_c.is_finite()) || self.tau_f < 0.0 || self.tau_c < 0.0 {
            return Err(Error::Config(format!(
                "specificity exponents must be finite and >= 0, got ({}, {})",
                self.tau_f, self.tau_c
            )));
        }
        Ok(())
    }
}

/// One feasible, retained (A, B) pair with its constant coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ActivePair {
    fine: usize,
    coarse: usize,
    /// w_f(A) · w_c(B) · κ(A, B)
    coef: f64,
}

/// Precomputed feasibility mask, partial inclusion and specificity weights.
#[derive(Debug)]
pub struct ConsistencyTables {
    n_fine: usize,
    n_coarse: usize,
    feasibility: Vec<bool>,
    kappa: Vec<f64>,
    w_f: Vec<f64>,
    w_c: Vec<f64>,
    retained_f: Vec<bool>,
    retained_c: Vec<bool>,
    projections: Vec<FocalSet>,
    active: Vec<ActivePair>,
    denominator: f64,
    degenerate: AtomicUsize,
}

impl Clone for ConsistencyTables {
    fn clone(&self) -> Self {
        Self {
            n_fine: self.n_fine,
            n_coarse: self.n_coarse,
            feasibility: self.feasibility.clone(),
            kappa: self.kappa.clone(),
            w_f: self.w_f.clone(),
            w_c: self.w_c.clone(),
            retained_f: self.retained_f.clone(),
            retained_c: self.retained_c.clone(),
            projections: self.projections.clone(),
            active: self.active.clone(),
            denominator: self.denominator,
            degenerate: AtomicUsize::new(self.degenerate.load(Ordering::Relaxed)),
        }
    }
}

fn specificity_weights(fam: &FocalFamily, tau: f64, retained: &[bool], normalize: bool) -> Vec<f64> {
    let mut w: Vec<f64> = fam
        .sets()
        .iter()
        .zip(retained)
        .map(|(s, &keep)| if keep { (1.0 / s.len() as f64).powf(tau) } else { 0.0 })
        .collect();
    let kept = retained.iter().filter(|&&k| k).count();
    if normalize && kept > 0 {
        let mean = w.iter().sum::<f64>() / kept as f64;
        w.iter_mut().for_each(|x| *x /= mean);
    }
    w
}

pub fn build_tables(
    fine: &FocalFamily,
    coarse: &FocalFamily,
    h: &Hierarchy,
    cfg: &ConsistencyConfig,
) -> Result<ConsistencyTables> {
    cfg.validate()?;
    if fine.space().level() != Level::Fine || coarse.space().level() != Level::Coarse {
        return Err(Error::Shape("expected a fine family and a coarse family".into()));
    }
    if fine.space().size() != h.fine().size() || coarse.space().size() != h.coarse().size() {
        return Err(Error::Shape(format!(
            "families over ({}, {}) labels, hierarchy has ({}, {})",
            fine.space().size(),
            coarse.space().size(),
            h.fine().size(),
            h.coarse().size()
        )));
    }
    let retained_f: Vec<bool> = fine.sets().iter().map(|s| !(cfg.exclude_omega && s.is_full())).collect();
    let retained_c: Vec<bool> = coarse.sets().iter().map(|s| !(cfg.exclude_omega && s.is_full())).collect();
    let w_f = specificity_weights(fine, cfg.tau_f, &retained_f, cfg.normalize_weights);
    let w_c = specificity_weights(coarse, cfg.tau_c, &retained_c, cfg.normalize_weights);

    let projections: Vec<FocalSet> = fine.sets().iter().map(|a| h.project_set(a)).collect::<Result<_>>()?;
    let (nf, nc) = (fine.len(), coarse.len());
    let mut feasibility = vec![false; nf * nc];
    let mut kappa = vec![0.0; nf * nc];
    let mut active = Vec::new();
    let mut denominator = 0.0;
    for (a, proj) in projections.iter().enumerate() {
        for (b, bset) in coarse.sets().iter().enumerate() {
            let inter = proj.intersection_len(bset);
            let k = inter as f64 / proj.len().max(1) as f64;
            feasibility[a * nc + b] = inter > 0;
            kappa[a * nc + b] = k;
            if inter > 0 && retained_f[a] && retained_c[b] {
                denominator += k;
                active.push(ActivePair {
                    fine: a,
                    coarse: b,
                    coef: w_f[a] * w_c[b] * k,
                });
            }
        }
    }
    Ok(ConsistencyTables {
        n_fine: nf,
        n_coarse: nc,
        feasibility,
        kappa,
        w_f,
        w_c,
        retained_f,
        retained_c,
        projections,
        active,
        denominator,
        degenerate: AtomicUsize::new(0),
    })
}

impl ConsistencyTables {
    pub fn n_fine_sets(&self) -> usize {
        self.n_fine
    }

    pub fn n_coarse_sets(&self) -> usize {
        self.n_coarse
    }

    /// M^fc(A, B).
    pub fn feasible(&self, a: usize, b: usize) -> bool {
        self.feasibility[a * self.n_coarse + b]
    }

    pub fn kappa(&self, a: usize, b: usize) -> f64 {
        self.kappa[a * self.n_coarse + b]
    }

    pub fn w_f(&self) -> &[f64] {
        &self.w_f
    }

    pub fn w_c(&self) -> &[f64] {
        &self.w_c
    }

    pub fn retained_fine(&self) -> &[bool] {
        &self.retained_f
    }

    pub fn retained_coarse(&self) -> &[bool] {
        &self.retained_c
    }

    /// Π(A) for every fine set.
    pub fn projections(&self) -> &[FocalSet] {
        &self.projections
    }

    /// Σ M^fc · κ over retained pairs.
    pub fn denominator(&self) -> f64 {
        self.denominator
    }

    /// Whether no feasible retained pair exists.
    pub fn is_degenerate(&self) -> bool {
        self.denominator <= 0.0
    }

    /// Number of `Cons` evaluations that hit a zero denominator.
    pub fn degenerate_count(&self) -> usize {
        self.degenerate.load(Ordering::Relaxed)
    }

    fn check_row(&self, mf: &[f64], mc: &[f64]) -> Result<()> {
        if mf.len() != self.n_fine || mc.len() != self.n_coarse {
            return Err(Error::Shape(format!(
                "mass rows of length ({}, {}), tables expect ({}, {})",
                mf.len(),
                mc.len(),
                self.n_fine,
                self.n_coarse
            )));
        }
        Ok(())
    }
}

fn unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

fn clamp_pass(x: f64) -> f64 {
    if (0.0..=1.0).contains(&x) {
        1.0
    } else {
        0.0
    }
}

/// `w_f · w_c · κ · T(m_f, μ(m_c))` with both masses clamped to `[0, 1]`.
pub fn pair_score(mf_a: f64, mc_b: f64, w_f: f64, w_c: f64, kappa: f64, cfg: &ConsistencyConfig) -> f64 {
    let mu = cfg.membership.degree_unit(unit(mc_b));
    w_f * w_c * kappa * cfg.tnorm.apply_unit(unit(mf_a), mu)
}

/// `Cons(m_f, m_c)`; 0 when no feasible pair is retained.
pub fn cons_score(mf: &[f64], mc: &[f64], tables: &ConsistencyTables, cfg: &ConsistencyConfig) -> Result<f64> {
    tables.check_row(mf, mc)?;
    if tables.is_degenerate() {
        tables.degenerate.fetch_add(1, Ordering::Relaxed);
        return Ok(0.0);
    }
    let mu: Vec<f64> = mc.iter().map(|&m| cfg.membership.degree_unit(unit(m))).collect();
    let num: f64 = tables
        .active
        .iter()
        .map(|p| p.coef * cfg.tnorm.apply_unit(unit(mf[p.fine]), mu[p.coarse]))
        .sum();
    Ok(num / tables.denominator)
}

fn check_batch(batch_mf: &[Vec<f64>], batch_mc: &[Vec<f64>]) -> Result<()> {
    if batch_mf.is_empty() {
        return Err(Error::EmptyInput("consistency loss over an empty batch".into()));
    }
    if batch_mf.len() != batch_mc.len() {
        return Err(Error::Shape(format!(
            "{} fine rows but {} coarse rows",
            batch_mf.len(),
            batch_mc.len()
        )));
    }
    Ok(())
}

/// `(1/N) Σ_i (1 - Cons_i)`.
pub fn consistency_loss(
    batch_mf: &[Vec<f64>],
    batch_mc: &[Vec<f64>],
    tables: &ConsistencyTables,
    cfg: &ConsistencyConfig,
) -> Result<f64> {
    check_batch(batch_mf, batch_mc)?;
    let mut total = 0.0;
    for (mf, mc) in batch_mf.iter().zip(batch_mc) {
        total += 1.0 - cons_score(mf, mc, tables, cfg)?;
    }
    Ok(total / batch_mf.len() as f64)
}

/// Per-sample mass gradients of [`consistency_loss`].
pub type MassGrads = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Gradients of [`consistency_loss`] with respect to fine and coarse masses.
pub fn consistency_grads(
    batch_mf: &[Vec<f64>],
    batch_mc: &[Vec<f64>],
    tables: &ConsistencyTables,
    cfg: &ConsistencyConfig,
) -> Result<MassGrads> {
    check_batch(batch_mf, batch_mc)?;
    let n = batch_mf.len();
    let mut gf = Vec::with_capacity(n);
    let mut gc = Vec::with_capacity(n);
    for (mf, mc) in batch_mf.iter().zip(batch_mc) {
        tables.check_row(mf, mc)?;
        let mut df = vec![0.0; tables.n_fine];
        let mut dc = vec![0.0; tables.n_coarse];
        if !tables.is_degenerate() {
            let scale = -1.0 / (n as f64 * tables.denominator);
            let mu: Vec<f64> = mc.iter().map(|&m| cfg.membership.degree_unit(unit(m))).collect();
            let dmu: Vec<f64> = mc
                .iter()
                .map(|&m| cfg.membership.grad_unit(unit(m)) * clamp_pass(m))
                .collect();
            for p in &tables.active {
                let (ta, tb) = cfg.tnorm.grads_unit(unit(mf[p.fine]), mu[p.coarse]);
                df[p.fine] += scale * p.coef * ta;
                dc[p.coarse] += scale * p.coef * tb * dmu[p.coarse];
            }
            for (d, &m) in df.iter_mut().zip(mf) {
                *d *= clamp_pass(m);
            }
        }
        gf.push(df);
        gc.push(dc);
    }
    Ok((gf, gc))
}

/// Log-parametrised loss weights; α = exp(log_alpha) and so on.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossWeights {
    pub log_alpha: f64,
    pub log_beta: f64,
    pub log_gamma: f64,
}

impl LossWeights {
    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn beta(&self) -> f64 {
        self.log_beta.exp()
    }

    pub fn gamma(&self) -> f64 {
        self.log_gamma.exp()
    }
}

/// Unweighted loss terms for one batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossComponents {
    pub bce_f: f64,
    pub bce_c: f64,
    pub r_mass_f: f64,
    pub r_mass_c: f64,
    pub r_sum_f: f64,
    pub r_sum_c: f64,
    pub l_cons: f64,
}

/// The total and its addends as logged per epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub bce_f: f64,
    pub bce_c: f64,
    pub r_mass: f64,
    pub r_sum: f64,
    pub l_cons: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// `L = bce_f + bce_c + α(R_mass) + β(R_sum) + γ L_cons`. During warm-up only
/// the BCE terms contribute.
pub fn total_loss(c: &LossComponents, w: &LossWeights, warmup: bool) -> LossBreakdown {
    let r_mass = c.r_mass_f + c.r_mass_c;
    let r_sum = c.r_sum_f + c.r_sum_c;
    let mut total = c.bce_f + c.bce_c;
    if !warmup {
        total += w.alpha() * r_mass + w.beta() * r_sum + w.gamma() * c.l_cons;
    }
    LossBreakdown {
        total,
        bce_f: c.bce_f,
        bce_c: c.bce_c,
        r_mass,
        r_sum,
        l_cons: c.l_cons,
        alpha: w.alpha(),
        beta: w.beta(),
        gamma: w.gamma(),
    }
}

/// `∂L/∂(log_alpha, log_beta, log_gamma)`.
pub fn total_loss_weight_grads(c: &LossComponents, w: &LossWeights, warmup: bool) -> [f64; 3] {
    if warmup {
        return [0.0; 3];
    }
    [
        w.alpha() * (c.r_mass_f + c.r_mass_c),
        w.beta() * (c.r_sum_f + c.r_sum_c),
        w.gamma() * c.l_cons,
    ]
}

/// Every intermediate quantity of one pair score.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTrace {
    pub fine: usize,
    pub coarse: usize,
    pub feasible: bool,
    pub retained: bool,
    pub kappa: f64,
    pub w_f: f64,
    pub w_c: f64,
    pub mf: f64,
    pub mc: f64,
    pub mu: f64,
    pub t: f64,
    pub score: f64,
}

/// Step-by-step derivation of `Cons` for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyTrace {
    pub projections: Vec<FocalSet>,
    pub pairs: Vec<PairTrace>,
    pub numerator: f64,
    pub denominator: f64,
    pub cons: f64,
    pub loss: f64,
}

#[allow(clippy::needless_range_loop)]
pub fn trace(mf: &[f64], mc: &[f64], tables: &ConsistencyTables, cfg: &ConsistencyConfig) -> Result<ConsistencyTrace> {
    tables.check_row(mf, mc)?;
    let mut pairs = Vec::new();
    let mut numerator = 0.0;
    for a in 0..tables.n_fine {
        for b in 0..tables.n_coarse {
            let feasible = tables.feasible(a, b);
            let retained = tables.retained_f[a] && tables.retained_c[b];
            let mu = cfg.membership.degree_unit(unit(mc[b]));
            let t = cfg.tnorm.apply_unit(unit(mf[a]), mu);
            let score = pair_score(mf[a], mc[b], tables.w_f[a], tables.w_c[b], tables.kappa(a, b), cfg);
            if feasible && retained {
                numerator += score;
            }
            pairs.push(PairTrace {
                fine: a,
                coarse: b,
                feasible,
                retained,
                kappa: tables.kappa(a, b),
                w_f: tables.w_f[a],
                w_c: tables.w_c[b],
                mf: mf[a],
                mc: mc[b],
                mu,
                t,
                score,
            });
        }
    }
    let cons = cons_score(mf, mc, tables, cfg)?;
    Ok(ConsistencyTrace {
        projections: tables.projections.clone(),
        pairs,
        numerator,
        denominator: tables.denominator,
        cons,
        loss: 1.0 - cons,
    })
}
