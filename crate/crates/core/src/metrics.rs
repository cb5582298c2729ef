//! Evaluation metrics over pignistic probabilities and decoded predictions.

use serde::Serialize;

use crate::belief::{BeliefState, FocalFamily};
use crate::decode::{argmax, check_distribution, DecodedSample};
use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;

pub const DEFAULT_ECE_BINS: usize = 15;

fn check_rows(probs: &[Vec<f64>]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::EmptyInput("no probability rows".into()));
    }
    for (i, row) in probs.iter().enumerate() {
        check_distribution(row, &format!("row {i}"))?;
    }
    Ok(())
}

/// Bin of a confidence value: bin `b` holds `(b/B, (b+1)/B]`, bin 0 also holds 0.
fn confidence_bin(conf: f64, bins: usize) -> usize {
    ((conf * bins as f64).ceil() as usize).saturating_sub(1).min(bins - 1)
}

/// Expected calibration error with equal-width bins on the max probability.
pub fn ece(probs: &[Vec<f64>], labels: &[usize], bins: usize) -> Result<f64> {
    if bins == 0 {
        return Err(Error::Config("ECE needs at least one bin".into()));
    }
    check_rows(probs)?;
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", probs.len(), labels.len())));
    }
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut correct = vec![0usize; bins];
    for (row, &y) in probs.iter().zip(labels) {
        if y >= row.len() {
            return Err(Error::InvalidLabel(format!("label {y} for a row of {}", row.len())));
        }
        let pred = argmax(row);
        let b = confidence_bin(row[pred], bins);
        count[b] += 1;
        conf_sum[b] += row[pred];
        if pred == y {
            correct[b] += 1;
        }
    }
    let n = probs.len() as f64;
    let mut total = 0.0;
    for b in 0..bins {
        if count[b] == 0 {
            continue;
        }
        let nb = count[b] as f64;
        total += nb / n * (correct[b] as f64 / nb - conf_sum[b] / nb).abs();
    }
    Ok(total)
}

/// Mean Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn mean_entropy(probs: &[Vec<f64>]) -> Result<f64> {
    check_rows(probs)?;
    let total: f64 = probs
        .iter()
        .map(|row| row.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum::<f64>())
        .sum();
    Ok(total / probs.len() as f64)
}

/// Fraction of samples whose coarse prediction is the parent of the fine one.
pub fn logical_consistency(decoded: &[DecodedSample], h: &Hierarchy) -> Result<f64> {
    if decoded.is_empty() {
        return Err(Error::EmptyInput("logical consistency of no samples".into()));
    }
    let mut agree = 0usize;
    for d in decoded {
        if h.parent(d.fine_pred)? == d.coarse_pred {
            agree += 1;
        }
    }
    Ok(agree as f64 / decoded.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Macro precision, recall and F1 over the classes present in `truths`.
/// Per-class ratios with an empty denominator count as 0.
pub fn macro_prf(preds: &[usize], truths: &[usize], n_classes: usize) -> Result<Prf> {
    if preds.len() != truths.len() {
        return Err(Error::Shape(format!("{} predictions but {} truths", preds.len(), truths.len())));
    }
    if truths.is_empty() {
        return Err(Error::EmptyInput("macro PRF of no samples".into()));
    }
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fn_ = vec![0usize; n_classes];
    let mut present = vec![false; n_classes];
    for (&p, &t) in preds.iter().zip(truths) {
        for l in [p, t] {
            if l >= n_classes {
                return Err(Error::InvalidLabel(format!("class {l} out of range for {n_classes}")));
            }
        }
        present[t] = true;
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
    let (mut ps, mut rs, mut fs) = (0.0, 0.0, 0.0);
    let classes: Vec<usize> = (0..n_classes).filter(|&c| present[c]).collect();
    for &c in &classes {
        let p = ratio(tp[c], fp[c]);
        let r = ratio(tp[c], fn_[c]);
        ps += p;
        rs += r;
        fs += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    }
    let k = classes.len() as f64;
    Ok(Prf {
        precision: ps / k,
        recall: rs / k,
        f1: fs / k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coverage {
    /// Coverage over samples whose predicted set is not Ω.
    pub cov_excl: f64,
    /// Coverage over all samples, Ω counting as covering.
    pub cov_incl: f64,
    pub omega_rate: f64,
    pub mean_omega_mass: f64,
    /// Set when every sample predicted Ω, so `cov_excl` has no denominator.
    pub excl_empty: bool,
}

/// Set-valued coverage. Each sample predicts its largest-mass focal set
/// (lowest index on ties), or Ω when the Ω mass exceeds every set mass. A
/// family member equal to the full space also counts as predicting Ω.
pub fn coverage_and_omega(
    masses: &[Vec<f64>],
    omega_masses: &[f64],
    truths: &[usize],
    fam: &FocalFamily,
) -> Result<Coverage> {
    if masses.len() != omega_masses.len() || masses.len() != truths.len() {
        return Err(Error::Shape(format!(
            "{} mass rows, {} Ω masses, {} truths",
            masses.len(),
            omega_masses.len(),
            truths.len()
        )));
    }
    if masses.is_empty() {
        return Err(Error::EmptyInput("coverage of no samples".into()));
    }
    let (mut omega_count, mut covered_incl, mut covered_excl) = (0usize, 0usize, 0usize);
    for ((row, &om), &y) in masses.iter().zip(omega_masses).zip(truths) {
        if row.len() != fam.len() {
            return Err(Error::Shape(format!("mass row of {} for {} sets", row.len(), fam.len())));
        }
        fam.space().check_label(y)?;
        let best = argmax(row);
        let is_omega = om > row[best] || fam.sets()[best].is_full();
        if is_omega {
            omega_count += 1;
            covered_incl += 1;
        } else if fam.sets()[best].contains(y) {
            covered_incl += 1;
            covered_excl += 1;
        }
    }
    let n = masses.len();
    let non_omega = n - omega_count;
    Ok(Coverage {
        cov_excl: if non_omega == 0 { 0.0 } else { covered_excl as f64 / non_omega as f64 },
        cov_incl: covered_incl as f64 / n as f64,
        omega_rate: omega_count as f64 / n as f64,
        mean_omega_mass: omega_masses.iter().sum::<f64>() / n as f64,
        excl_empty: non_omega == 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub n: usize,
    pub acc_f: f64,
    pub acc_c: f64,
    pub betp_acc_f: f64,
    pub betp_acc_c: f64,
    pub ece_f: f64,
    pub ece_c: f64,
    pub entropy_f: f64,
    pub entropy_c: f64,
    pub logical_consistency: f64,
    pub prf_f: Prf,
    pub prf_c: Prf,
    pub coverage_excl_f: f64,
    pub coverage_excl_c: f64,
    pub coverage_incl_f: f64,
    pub coverage_incl_c: f64,
    pub coverage_excl_empty_f: bool,
    pub coverage_excl_empty_c: bool,
    pub omega_rate_f: f64,
    pub omega_rate_c: f64,
    pub omega_mass_f: f64,
    pub omega_mass_c: f64,
}

/// Everything needed to score one prediction file.
pub struct EvalInputs<'a> {
    pub fine: &'a [BeliefState],
    pub coarse: &'a [BeliefState],
    pub true_fine: &'a [usize],
    pub true_coarse: &'a [usize],
    pub decoded: &'a [DecodedSample],
    pub hierarchy: &'a Hierarchy,
    pub fine_family: &'a FocalFamily,
    pub coarse_family: &'a FocalFamily,
    pub ece_bins: usize,
}

fn accuracy(preds: impl Iterator<Item = usize>, truths: &[usize]) -> f64 {
    let hits = preds.zip(truths).filter(|(p, t)| p == *t).count();
    hits as f64 / truths.len() as f64
}

pub fn evaluate(inp: &EvalInputs<'_>) -> Result<MetricsReport> {
    let n = inp.decoded.len();
    if n == 0 {
        return Err(Error::EmptyInput("nothing to evaluate".into()));
    }
    if [inp.fine.len(), inp.coarse.len(), inp.true_fine.len(), inp.true_coarse.len()]
        .iter()
        .any(|&l| l != n)
    {
        return Err(Error::Shape("evaluation inputs have different lengths".into()));
    }
    let betp_f: Vec<Vec<f64>> = inp.fine.iter().map(|s| s.pignistic.clone()).collect();
    let betp_c: Vec<Vec<f64>> = inp.coarse.iter().map(|s| s.pignistic.clone()).collect();
    let fine_preds: Vec<usize> = inp.decoded.iter().map(|d| d.fine_pred).collect();
    let coarse_preds: Vec<usize> = inp.decoded.iter().map(|d| d.coarse_pred).collect();

    let mass_f: Vec<Vec<f64>> = inp.fine.iter().map(|s| s.masses.clone()).collect();
    let mass_c: Vec<Vec<f64>> = inp.coarse.iter().map(|s| s.masses.clone()).collect();
    let om_f: Vec<f64> = inp.fine.iter().map(|s| s.omega_mass).collect();
    let om_c: Vec<f64> = inp.coarse.iter().map(|s| s.omega_mass).collect();
    let cov_f = coverage_and_omega(&mass_f, &om_f, inp.true_fine, inp.fine_family)?;
    let cov_c = coverage_and_omega(&mass_c, &om_c, inp.true_coarse, inp.coarse_family)?;

    Ok(MetricsReport {
        n,
        acc_f: accuracy(fine_preds.iter().copied(), inp.true_fine),
        acc_c: accuracy(coarse_preds.iter().copied(), inp.true_coarse),
        betp_acc_f: accuracy(betp_f.iter().map(|r| argmax(r)), inp.true_fine),
        betp_acc_c: accuracy(betp_c.iter().map(|r| argmax(r)), inp.true_coarse),
        ece_f: ece(&betp_f, inp.true_fine, inp.ece_bins)?,
        ece_c: ece(&betp_c, inp.true_coarse, inp.ece_bins)?,
        entropy_f: mean_entropy(&betp_f)?,
        entropy_c: mean_entropy(&betp_c)?,
        logical_consistency: logical_consistency(inp.decoded, inp.hierarchy)?,
        prf_f: macro_prf(&fine_preds, inp.true_fine, inp.hierarchy.fine().size())?,
        prf_c: macro_prf(&coarse_preds, inp.true_coarse, inp.hierarchy.coarse().size())?,
        coverage_excl_f: cov_f.cov_excl,
        coverage_excl_c: cov_c.cov_excl,
        coverage_incl_f: cov_f.cov_incl,
        coverage_incl_c: cov_c.cov_incl,
        coverage_excl_empty_f: cov_f.excl_empty,
        coverage_excl_empty_c: cov_c.excl_empty,
        omega_rate_f: cov_f.omega_rate,
        omega_rate_c: cov_c.omega_rate,
        omega_mass_f: cov_f.mean_omega_mass,
        omega_mass_c: cov_c.mean_omega_mass,
    })
}

/// Column header of [`MetricsReport::table_row`].
pub const TABLE_HEADER: &str =
    "  tau_f  tau_c | Acc (f/c)     | Log. Cons. | PRF Coarse (P/R/F1)  | ECE (f/c)     | Entropy (f/c)";

/// Notes printed above the table describing the coverage and Ω columns.
pub const REPORT_NOTES: &str = "\
# coverage: predicted set = largest-mass focal set, or Ω if the Ω remainder exceeds every set mass\n\
# coverage incl Ω: truth in predicted set, Ω counts as covering; excl Ω: same over non-Ω samples only\n\
# Ω rate: fraction of samples predicting Ω; Ω mass: mean Ω remainder per sample; entropy in nats\n";

impl MetricsReport {
    pub fn table_row(&self, tau_f: f64, tau_c: f64) -> String {
        format!(
            "  {:>5.2}  {:>5.2} | {:.4}/{:.4} | {:>10.4} | {:.4}/{:.4}/{:.4} | {:.4}/{:.4} | {:.4}/{:.4}",
            tau_f,
            tau_c,
            self.acc_f,
            self.acc_c,
            self.logical_consistency,
            self.prf_c.precision,
            self.prf_c.recall,
            self.prf_c.f1,
            self.ece_f,
            self.ece_c,
            self.entropy_f,
            self.entropy_c
        )
    }
}
