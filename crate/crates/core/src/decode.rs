//! Constrained coarse decoding.
//!
//! The coarse argmax is replaced by the parent of the fine argmax only when
//! the fine head is confident (`q_f ≥ τ_f`) and the coarse head gives that
//! parent too little pignistic probability (`q_c < τ_c`). Ties in either
//! argmax go to the lowest index.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;

/// Threshold grid swept by `--tau-grid`.
pub const TAU_GRID: [f64; 3] = [0.4, 0.5, 0.6];

const DIST_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecodeConfig {
    pub tau_f: f64,
    pub tau_c: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { tau_f: 0.5, tau_c: 0.5 }
    }
}

impl DecodeConfig {
    pub fn new(tau_f: f64, tau_c: f64) -> Result<Self> {
        let open = |t: f64| t > 0.0 && t < 1.0;
        if !open(tau_f) || !open(tau_c) {
            return Err(Error::Config(format!(
                "decode thresholds must lie in (0, 1), got ({tau_f}, {tau_c})"
            )));
        }
        Ok(Self { tau_f, tau_c })
    }

    /// The 3×3 grid, τ_f outer ascending, τ_c inner ascending.
    pub fn grid() -> Vec<DecodeConfig> {
        TAU_GRID
            .iter()
            .flat_map(|&f| TAU_GRID.iter().map(move |&c| DecodeConfig { tau_f: f, tau_c: c }))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecodedSample {
    pub fine_pred: usize,
    pub fine_conf: f64,
    pub coarse_base: usize,
    pub coarse_pred: usize,
    pub overridden: bool,
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    if row.is_empty() {
        return Err(Error::Domain(format!("{what} is empty")));
    }
    if row.iter().any(|&p| !p.is_finite() || p < 0.0) {
        return Err(Error::Domain(format!("{what} has negative or non-finite entries")));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > DIST_TOL {
        return Err(Error::Domain(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

pub fn decode(betp_f: &[f64], betp_c: &[f64], h: &Hierarchy, cfg: &DecodeConfig) -> Result<DecodedSample> {
    check_distribution(betp_f, "fine BetP")?;
    check_distribution(betp_c, "coarse BetP")?;
    if betp_f.len() != h.fine().size() || betp_c.len() != h.coarse().size() {
        return Err(Error::Shape(format!(
            "BetP rows of length ({}, {}) for a ({}, {}) hierarchy",
            betp_f.len(),
            betp_c.len(),
            h.fine().size(),
            h.coarse().size()
        )));
    }
    let fine_pred = argmax(betp_f);
    let fine_conf = betp_f[fine_pred];
    let parent = h.parents()[fine_pred];
    let q_c = betp_c[parent];
    let coarse_base = argmax(betp_c);
    let overridden = fine_conf >= cfg.tau_f && q_c < cfg.tau_c;
    Ok(DecodedSample {
        fine_pred,
        fine_conf,
        coarse_base,
        coarse_pred: if overridden { parent } else { coarse_base },
        overridden,
    })
}

pub fn decode_batch(
    betp_f: &[Vec<f64>],
    betp_c: &[Vec<f64>],
    h: &Hierarchy,
    cfg: &DecodeConfig,
) -> Result<Vec<DecodedSample>> {
    if betp_f.len() != betp_c.len() {
        return Err(Error::Shape(format!(
            "{} fine rows but {} coarse rows",
            betp_f.len(),
            betp_c.len()
        )));
    }
    betp_f
        .iter()
        .zip(betp_c)
        .map(|(f, c)| decode(f, c, h, cfg))
        .collect()
}
