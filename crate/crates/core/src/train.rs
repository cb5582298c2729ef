//! Desk-scale training of the two linear focal-set heads.
//!
//! The heads map precomputed embeddings to belief logits over the fine and
//! coarse families. Gradients of the full objective are composed by hand:
//! consistency and penalty gradients with respect to masses are pulled back
//! through the Möbius transpose and the sigmoid, then added to the BCE
//! gradient on the logits. Parameters are updated with Adam
//! (β1 = 0.9, β2 = 0.999, ε = 1e-8).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::belief::{
    belief_to_mass, focal_bce, focal_bce_grad, logistic, mass_grad_to_belief_grad, mass_penalty,
    mass_penalty_grad, sum_penalty, sum_penalty_grad, FocalFamily,
};
use crate::budget::LabeledEmbeddings;
use crate::consistency::{
    consistency_grads, consistency_loss, total_loss, total_loss_weight_grads, ConsistencyConfig,
    ConsistencyTables, LossBreakdown, LossComponents, LossWeights,
};
use crate::error::{parse_err, Error, Result};
use crate::hierarchy::Hierarchy;
use crate::predictions::{PredictionRecord, Predictions};

/// Per-sample rows of per-set logits.
pub type Logits = Vec<Vec<f64>>;

/// Two affine heads plus the loss log-weights.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadModel {
    /// `|O^f| × d`
    pub w_f: Vec<Vec<f64>>,
    pub b_f: Vec<f64>,
    /// `|O^c| × d`
    pub w_c: Vec<Vec<f64>>,
    pub b_c: Vec<f64>,
    pub loss_weights: LossWeights,
}

impl HeadModel {
    pub fn zeros(n_fine_sets: usize, n_coarse_sets: usize, dim: usize) -> Self {
        Self {
            w_f: vec![vec![0.0; dim]; n_fine_sets],
            b_f: vec![0.0; n_fine_sets],
            w_c: vec![vec![0.0; dim]; n_coarse_sets],
            b_c: vec![0.0; n_coarse_sets],
            loss_weights: LossWeights::default(),
        }
    }

    /// Weights uniform in `±1/√d`, zero biases and log-weights.
    pub fn init(n_fine_sets: usize, n_coarse_sets: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (dim.max(1) as f64).sqrt();
        let mut m = Self::zeros(n_fine_sets, n_coarse_sets, dim);
        for row in m.w_f.iter_mut().chain(m.w_c.iter_mut()) {
            for v in row.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.w_f.first().or(self.w_c.first()).map_or(0, Vec::len)
    }

    pub fn n_params(&self) -> usize {
        let d = self.dim();
        (self.b_f.len() + self.b_c.len()) * (d + 1) + 3
    }

    /// Flattened as `w_f, b_f, w_c, b_c, log_alpha, log_beta, log_gamma`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        self.w_f.iter().for_each(|r| out.extend_from_slice(r));
        out.extend_from_slice(&self.b_f);
        self.w_c.iter().for_each(|r| out.extend_from_slice(r));
        out.extend_from_slice(&self.b_c);
        out.extend([
            self.loss_weights.log_alpha,
            self.loss_weights.log_beta,
            self.loss_weights.log_gamma,
        ]);
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let mut it = flat.iter().copied();
        for r in self.w_f.iter_mut() {
            r.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        self.b_f.iter_mut().for_each(|v| *v = it.next().unwrap());
        for r in self.w_c.iter_mut() {
            r.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        self.b_c.iter_mut().for_each(|v| *v = it.next().unwrap());
        self.loss_weights.log_alpha = it.next().unwrap();
        self.loss_weights.log_beta = it.next().unwrap();
        self.loss_weights.log_gamma = it.next().unwrap();
    }

    /// Belief logits of both heads for a batch of embeddings.
    pub fn forward(&self, batch: &[Vec<f64>]) -> Result<(Logits, Logits)> {
        let d = self.dim();
        if let Some(bad) = batch.iter().find(|x| x.len() != d) {
            return Err(Error::Shape(format!(
                "embedding of width {} for heads of width {d}",
                bad.len()
            )));
        }
        let affine = |w: &[Vec<f64>], b: &[f64], x: &[f64]| -> Vec<f64> {
            w.iter()
                .zip(b)
                .map(|(row, bias)| row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + bias)
                .collect()
        };
        let f = batch.iter().map(|x| affine(&self.w_f, &self.b_f, x)).collect();
        let c = batch.iter().map(|x| affine(&self.w_c, &self.b_c, x)).collect();
        Ok((f, c))
    }

    /// `param_name index value` rows behind a shape comment.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# fine_sets={} coarse_sets={} dim={}\n",
            self.b_f.len(),
            self.b_c.len(),
            self.dim()
        );
        let mut emit = |name: &str, vals: &mut dyn Iterator<Item = f64>| {
            for (i, v) in vals.enumerate() {
                out.push_str(&format!("{name} {i} {v}\n"));
            }
        };
        emit("w_f", &mut self.w_f.iter().flatten().copied());
        emit("b_f", &mut self.b_f.iter().copied());
        emit("w_c", &mut self.w_c.iter().flatten().copied());
        emit("b_c", &mut self.b_c.iter().copied());
        emit("log_alpha", &mut std::iter::once(self.loss_weights.log_alpha));
        emit("log_beta", &mut std::iter::once(self.loss_weights.log_beta));
        emit("log_gamma", &mut std::iter::once(self.loss_weights.log_gamma));
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty model file"))?;
        let mut dims = [None; 3];
        for tok in header.trim_start_matches('#').split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| parse_err(1, "bad shape header"))?;
            let v: usize = v.parse().map_err(|_| parse_err(1, "bad shape header"))?;
            match k {
                "fine_sets" => dims[0] = Some(v),
                "coarse_sets" => dims[1] = Some(v),
                "dim" => dims[2] = Some(v),
                _ => return Err(parse_err(1, format!("unknown shape key `{k}`"))),
            }
        }
        let [Some(nf), Some(nc), Some(d)] = dims else {
            return Err(parse_err(1, "shape header needs fine_sets, coarse_sets and dim"));
        };
        let mut m = Self::zeros(nf, nc, d);
        let mut seen = 0usize;
        for (line_no, line) in lines {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(parse_err(line_no, "expected `name index value`"));
            }
            let idx: usize = toks[1].parse().map_err(|_| parse_err(line_no, "bad index"))?;
            let val: f64 = toks[2].parse().map_err(|_| parse_err(line_no, "bad value"))?;
            let slot = match toks[0] {
                "w_f" if idx < nf * d => &mut m.w_f[idx / d][idx % d],
                "b_f" if idx < nf => &mut m.b_f[idx],
                "w_c" if idx < nc * d => &mut m.w_c[idx / d][idx % d],
                "b_c" if idx < nc => &mut m.b_c[idx],
                "log_alpha" if idx == 0 => &mut m.loss_weights.log_alpha,
                "log_beta" if idx == 0 => &mut m.loss_weights.log_beta,
                "log_gamma" if idx == 0 => &mut m.loss_weights.log_gamma,
                other => return Err(parse_err(line_no, format!("unknown parameter `{other} {idx}`"))),
            };
            *slot = val;
            seen += 1;
        }
        if seen != m.n_params() {
            return Err(parse_err(0, format!("expected {} parameters, found {seen}", m.n_params())));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Leading epochs that optimise only the two BCE terms.
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Post-warm-up epochs without validation improvement before stopping.
    pub early_stop_patience: usize,
    /// Keep γ at zero for the whole run (BCE plus mass penalties only).
    pub disable_consistency: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            warmup_epochs: 5,
            batch_size: 64,
            learning_rate: 0.05,
            seed: 42,
            early_stop_patience: 5,
            disable_consistency: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_epochs > self.epochs {
            return Err(Error::Config(format!(
                "warmup_epochs {} exceeds epochs {}",
                self.warmup_epochs, self.epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!("bad learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Embeddings with both label levels attached.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y_fine: Vec<usize>,
    pub y_coarse: Vec<usize>,
}

impl Dataset {
    pub fn from_embeddings(e: &LabeledEmbeddings, h: &Hierarchy) -> Result<Self> {
        let y_coarse = e.labels.iter().map(|&y| h.parent(y)).collect::<Result<_>>()?;
        Ok(Self {
            x: e.rows.clone(),
            y_fine: e.labels.clone(),
            y_coarse,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    fn subset(&self, idx: &[usize]) -> Self {
        Self {
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y_fine: idx.iter().map(|&i| self.y_fine[i]).collect(),
            y_coarse: idx.iter().map(|&i| self.y_coarse[i]).collect(),
        }
    }

    /// Seeded shuffle split into (train, validation).
    pub fn split(&self, val_fraction: f64, seed: u64) -> (Self, Self) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_val = ((self.len() as f64) * val_fraction.clamp(0.0, 1.0)).round() as usize;
        let n_val = n_val.min(self.len().saturating_sub(1));
        let (val, train) = idx.split_at(n_val);
        let mut train = train.to_vec();
        let mut val = val.to_vec();
        train.sort_unstable();
        val.sort_unstable();
        (self.subset(&train), self.subset(&val))
    }
}

/// Families, tables and the consistency configuration shared by a run.
pub struct Objective<'a> {
    pub fine: &'a FocalFamily,
    pub coarse: &'a FocalFamily,
    pub tables: &'a ConsistencyTables,
    pub cons: &'a ConsistencyConfig,
}

struct HeadPass {
    logits: Vec<Vec<f64>>,
    beliefs: Vec<Vec<f64>>,
    masses: Vec<Vec<f64>>,
}

fn head_pass(logits: Vec<Vec<f64>>, fam: &FocalFamily) -> Result<HeadPass> {
    let beliefs: Vec<Vec<f64>> = logits.iter().map(|r| r.iter().map(|&z| logistic(z)).collect()).collect();
    let masses = beliefs.iter().map(|b| belief_to_mass(b, fam)).collect::<Result<_>>()?;
    Ok(HeadPass {
        logits,
        beliefs,
        masses,
    })
}

fn mean_of(rows: &[Vec<f64>], f: impl Fn(&[f64]) -> f64) -> f64 {
    rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64
}

/// Loss of one batch and, if requested, its gradient in [`HeadModel::to_flat`] order.
///
/// Penalties are averaged over the batch. `warmup` drops every term but the
/// BCEs; `gamma_off` drops the consistency term only.
#[allow(clippy::too_many_arguments)]
pub fn batch_objective(
    model: &HeadModel,
    x: &[Vec<f64>],
    y_fine: &[usize],
    y_coarse: &[usize],
    obj: &Objective<'_>,
    warmup: bool,
    gamma_off: bool,
    want_grad: bool,
) -> Result<(LossBreakdown, Option<Vec<f64>>)> {
    let (lf, lc) = model.forward(x)?;
    let f = head_pass(lf, obj.fine)?;
    let c = head_pass(lc, obj.coarse)?;
    let comps = LossComponents {
        bce_f: focal_bce(&f.logits, y_fine, obj.fine)?,
        bce_c: focal_bce(&c.logits, y_coarse, obj.coarse)?,
        r_mass_f: mean_of(&f.masses, mass_penalty),
        r_mass_c: mean_of(&c.masses, mass_penalty),
        r_sum_f: mean_of(&f.masses, sum_penalty),
        r_sum_c: mean_of(&c.masses, sum_penalty),
        l_cons: if gamma_off {
            0.0
        } else {
            consistency_loss(&f.masses, &c.masses, obj.tables, obj.cons)?
        },
    };
    let breakdown = total_loss(&comps, &model.loss_weights, warmup);
    if !want_grad {
        return Ok((breakdown, None));
    }

    let n = x.len() as f64;
    let w = &model.loss_weights;
    let mut dlog_f = focal_bce_grad(&f.logits, y_fine, obj.fine)?;
    let mut dlog_c = focal_bce_grad(&c.logits, y_coarse, obj.coarse)?;
    let mut log_w_grad = total_loss_weight_grads(&comps, w, warmup);
    if gamma_off {
        log_w_grad[2] = 0.0;
    }
    if !warmup {
        let (cons_f, cons_c) = if gamma_off {
            (
                vec![vec![0.0; obj.fine.len()]; x.len()],
                vec![vec![0.0; obj.coarse.len()]; x.len()],
            )
        } else {
            consistency_grads(&f.masses, &c.masses, obj.tables, obj.cons)?
        };
        let (alpha, beta, gamma) = (w.alpha(), w.beta(), w.gamma());
        for (pass, cons, dlog, fam) in [
            (&f, &cons_f, &mut dlog_f, obj.fine),
            (&c, &cons_c, &mut dlog_c, obj.coarse),
        ] {
            for i in 0..x.len() {
                let dm_mass = mass_penalty_grad(&pass.masses[i]);
                let dm_sum = sum_penalty_grad(&pass.masses[i]);
                let dm: Vec<f64> = (0..fam.len())
                    .map(|a| alpha * dm_mass[a] / n + beta * dm_sum[a] / n + gamma * cons[i][a])
                    .collect();
                let dbel = mass_grad_to_belief_grad(&dm, fam)?;
                for (a, g) in dbel.iter().enumerate() {
                    let s = pass.beliefs[i][a];
                    dlog[i][a] += g * s * (1.0 - s);
                }
            }
        }
    }

    let d = model.dim();
    let mut grad = Vec::with_capacity(model.n_params());
    for (dlog, n_sets) in [(&dlog_f, obj.fine.len()), (&dlog_c, obj.coarse.len())] {
        let mut gw = vec![0.0; n_sets * d];
        let mut gb = vec![0.0; n_sets];
        for (row, xi) in dlog.iter().zip(x) {
            for (a, &g) in row.iter().enumerate() {
                gb[a] += g;
                for (k, &v) in xi.iter().enumerate() {
                    gw[a * d + k] += g * v;
                }
            }
        }
        grad.extend(gw);
        grad.extend(gb);
    }
    grad.extend(log_w_grad);
    Ok((breakdown, Some(grad)))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, frozen_tail: usize) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t);
        let bc2 = 1.0 - Self::BETA2.powi(self.t);
        let live = params.len() - frozen_tail;
        for i in 0..live {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + Self::EPS);
        }
    }
}

/// One line of the per-epoch loss log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub warmup: bool,
    #[serde(flatten)]
    pub train: LossBreakdown,
    pub val_loss: f64,
    pub best_val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: HeadModel,
    pub log: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
}

/// Mini-batch training with Adam.
///
/// Warm-up epochs optimise the BCE terms only and leave the log-weights
/// untouched. Checkpoint selection and early stopping start after warm-up;
/// the returned model has the lowest post-warm-up validation loss (or is the
/// final model of a warm-up-only run).
pub fn train(
    init: HeadModel,
    train_set: &Dataset,
    val_set: &Dataset,
    obj: &Objective<'_>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training set is empty".into()));
    }
    let val = if val_set.is_empty() { train_set } else { val_set };
    let mut model = init;
    if cfg.disable_consistency {
        model.loss_weights.log_gamma = f64::NEG_INFINITY;
    }
    let mut params = model.to_flat();
    let mut adam = Adam::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    let mut stale = 0usize;
    for epoch in 0..cfg.epochs {
        let warmup = epoch < cfg.warmup_epochs;
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 6];
        let mut n_batches = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let x: Vec<Vec<f64>> = chunk.iter().map(|&i| train_set.x[i].clone()).collect();
            let yf: Vec<usize> = chunk.iter().map(|&i| train_set.y_fine[i]).collect();
            let yc: Vec<usize> = chunk.iter().map(|&i| train_set.y_coarse[i]).collect();
            model.set_flat(&params);
            let (b, grad) = batch_objective(&model, &x, &yf, &yc, obj, warmup, cfg.disable_consistency, true)?;
            let grad = grad.expect("gradient requested");
            if !b.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    batch: bi,
                    msg: format!("loss {}", b.total),
                });
            }
            let frozen = if warmup || cfg.disable_consistency { 3 } else { 0 };
            adam.step(&mut params, &grad, cfg.learning_rate, frozen);
            if cfg.disable_consistency && !warmup {
                // α and β still learn; γ stays pinned at zero
                let n = params.len();
                let g = &grad[n - 3..n - 1];
                adam_tail_step(&mut adam, &mut params, g, cfg.learning_rate);
            }
            for (s, v) in sums.iter_mut().zip([b.total, b.bce_f, b.bce_c, b.r_mass, b.r_sum, b.l_cons]) {
                *s += v;
            }
            n_batches += 1;
        }
        model.set_flat(&params);
        let (vb, _) = batch_objective(&model, &val.x, &val.y_fine, &val.y_coarse, obj, warmup, cfg.disable_consistency, false)?;
        if !vb.total.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: n_batches,
                msg: format!("validation loss {}", vb.total),
            });
        }
        let mut stop = false;
        if !warmup {
            if best.as_ref().is_none_or(|(bl, _, _)| vb.total < *bl) {
                best = Some((vb.total, params.clone(), epoch));
                stale = 0;
            } else {
                stale += 1;
                stop = stale >= cfg.early_stop_patience.max(1);
            }
        }
        let k = n_batches.max(1) as f64;
        log.push(EpochLog {
            epoch,
            warmup,
            train: LossBreakdown {
                total: sums[0] / k,
                bce_f: sums[1] / k,
                bce_c: sums[2] / k,
                r_mass: sums[3] / k,
                r_sum: sums[4] / k,
                l_cons: sums[5] / k,
                alpha: model.loss_weights.alpha(),
                beta: model.loss_weights.beta(),
                gamma: model.loss_weights.gamma(),
            },
            val_loss: vb.total,
            best_val_loss: best.as_ref().map(|b| b.0),
        });
        if stop {
            break;
        }
    }
    let best_epoch = best.as_ref().map(|b| b.2);
    if let Some((_, p, _)) = best {
        model.set_flat(&p);
    }
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
    })
}

/// Adam update for `log_alpha` and `log_beta` only.
fn adam_tail_step(adam: &mut Adam, params: &mut [f64], grad: &[f64], lr: f64) {
    let n = params.len();
    let bc1 = 1.0 - Adam::BETA1.powi(adam.t);
    let bc2 = 1.0 - Adam::BETA2.powi(adam.t);
    for (j, &g) in grad.iter().enumerate() {
        let i = n - 3 + j;
        adam.m[i] = Adam::BETA1 * adam.m[i] + (1.0 - Adam::BETA1) * g;
        adam.v[i] = Adam::BETA2 * adam.v[i] + (1.0 - Adam::BETA2) * g * g;
        params[i] -= lr * (adam.m[i] / bc1) / ((adam.v[i] / bc2).sqrt() + Adam::EPS);
    }
}

/// Belief predictions of a trained model in the interchange format.
pub fn predict(model: &HeadModel, data: &Dataset, fine: &FocalFamily, coarse: &FocalFamily) -> Result<Predictions> {
    let (lf, lc) = model.forward(&data.x)?;
    let sig = |r: &Vec<f64>| r.iter().map(|&z| logistic(z)).collect::<Vec<f64>>();
    let records = lf
        .iter()
        .zip(&lc)
        .enumerate()
        .map(|(i, (f, c))| PredictionRecord {
            true_fine: data.y_fine[i],
            true_coarse: data.y_coarse[i],
            fine_beliefs: sig(f),
            coarse_beliefs: sig(c),
        })
        .collect();
    Ok(Predictions {
        n_fine_sets: fine.len(),
        n_coarse_sets: coarse.len(),
        records,
    })
}

/// Gaussian-blob stand-in for frozen backbone features.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub hierarchy: Hierarchy,
    pub train: LabeledEmbeddings,
    pub test: LabeledEmbeddings,
}

/// Fine label `f` belongs to coarse block `f · n_coarse / n_fine`. Coarse
/// centres sit at radius 10 and at least 8 apart where possible; each fine
/// mean is offset from its coarse centre by `3 / (1 + overlap)` in a random
/// direction, and points get isotropic noise of standard deviation 0.5. A
/// large `overlap` therefore pulls siblings into one blob while the coarse
/// groups stay apart.
pub fn generate_synthetic(
    n_per_class: usize,
    n_test_per_class: usize,
    n_fine: usize,
    n_coarse: usize,
    overlap: f64,
    dim: usize,
    seed: u64,
) -> Result<Synthetic> {
    if n_coarse < 2 || n_fine < n_coarse || dim == 0 || n_per_class == 0 {
        return Err(Error::Config(format!(
            "need n_fine >= n_coarse >= 2, dim >= 1 and points per class; got n_fine={n_fine} n_coarse={n_coarse} dim={dim} n={n_per_class}"
        )));
    }
    if !(overlap.is_finite() && overlap >= 0.0) {
        return Err(Error::Config(format!("overlap must be >= 0, got {overlap}")));
    }
    let parent: Vec<usize> = (0..n_fine).map(|f| f * n_coarse / n_fine).collect();
    let hierarchy = Hierarchy::from_parents(parent.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let unit = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-9 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    };
    let mut centres: Vec<Vec<f64>> = Vec::with_capacity(n_coarse);
    while centres.len() < n_coarse {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..200 {
            let c: Vec<f64> = unit(&mut rng).into_iter().map(|x| 10.0 * x).collect();
            let gap = centres
                .iter()
                .map(|o| o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
                .fold(f64::INFINITY, f64::min);
            if gap >= 8.0 {
                best = Some((gap, c));
                break;
            }
            if best.as_ref().is_none_or(|(g, _)| gap > *g) {
                best = Some((gap, c));
            }
        }
        centres.push(best.expect("at least one candidate").1);
    }
    let offset = 3.0 / (1.0 + overlap);
    let means: Vec<Vec<f64>> = (0..n_fine)
        .map(|f| {
            let u = unit(&mut rng);
            centres[parent[f]].iter().zip(u).map(|(c, x)| c + offset * x).collect()
        })
        .collect();
    let spread = 0.5;
    let sample = |per_class: usize, rng: &mut ChaCha8Rng| {
        let mut labels = Vec::with_capacity(per_class * n_fine);
        let mut rows = Vec::with_capacity(per_class * n_fine);
        for _ in 0..per_class {
            for (f, mean) in means.iter().enumerate() {
                labels.push(f);
                rows.push(
                    mean.iter()
                        .map(|m| {
                            let z: f64 = StandardNormal.sample(rng);
                            m + spread * z
                        })
                        .collect(),
                );
            }
        }
        LabeledEmbeddings { labels, rows }
    };
    let train = sample(n_per_class, &mut rng);
    let test = sample(n_test_per_class, &mut rng);
    Ok(Synthetic {
        hierarchy,
        train,
        test,
    })
}
