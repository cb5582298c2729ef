//! Metrics and decoding against independent re-implementations and hand counts.

use hierbelief::belief::{BeliefState, FocalFamily, FocalSet};
use hierbelief::consistency::{build_tables, cons_score, ConsistencyConfig};
use hierbelief::decode::{decode_batch, DecodeConfig};
use hierbelief::fuzzy::{MembershipFn, TNorm};
use hierbelief::hierarchy::{Hierarchy, LabelSpace, Level};
use hierbelief::metrics::{
    coverage_and_omega, ece, evaluate, logical_consistency, macro_prf, mean_entropy, EvalInputs,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

/// Two passes: collect bin members by interval test, then average.
fn ece_oracle(probs: &[Vec<f64>], labels: &[usize], bins: usize) -> f64 {
    let mut members: Vec<Vec<(f64, bool)>> = vec![Vec::new(); bins];
    for (row, &y) in probs.iter().zip(labels) {
        let mut best = 0;
        for i in 1..row.len() {
            if row[i] > row[best] {
                best = i;
            }
        }
        let conf = row[best];
        let b = (0..bins)
            .find(|&b| {
                let lo = b as f64 / bins as f64;
                let hi = (b + 1) as f64 / bins as f64;
                (conf > lo && conf <= hi) || (b == 0 && conf == 0.0)
            })
            .unwrap_or(bins - 1);
        members[b].push((conf, best == y));
    }
    let n = probs.len() as f64;
    members
        .iter()
        .filter(|m| !m.is_empty())
        .map(|m| {
            let k = m.len() as f64;
            let acc = m.iter().filter(|(_, c)| *c).count() as f64 / k;
            let conf = m.iter().map(|(c, _)| c).sum::<f64>() / k;
            k / n * (acc - conf).abs()
        })
        .sum()
}

#[test]
fn ece_matches_two_pass_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let probs: Vec<Vec<f64>> = (0..50).map(|_| random_distribution(&mut rng, 4)).collect();
        let labels: Vec<usize> = (0..50).map(|_| rng.random_range(0..4)).collect();
        for bins in [1, 10, 15] {
            let got = ece(&probs, &labels, bins).unwrap();
            assert!((got - ece_oracle(&probs, &labels, bins)).abs() <= 1e-12);
        }
    }
}

#[test]
fn ece_hand_counted() {
    // bin (0.6, 2/3]: conf 0.65 wrong → |0 − 0.65|; bin (13/15, 14/15]: two at 0.9, one right → |0.5 − 0.9|
    let probs = vec![vec![0.65, 0.35], vec![0.9, 0.1], vec![0.1, 0.9]];
    let labels = vec![1, 0, 0];
    let expected = (1.0 / 3.0) * 0.65 + (2.0 / 3.0) * 0.4;
    assert!((ece(&probs, &labels, 15).unwrap() - expected).abs() <= 1e-12);
}

#[test]
fn entropy_examples() {
    for n in [2, 3, 7, 100] {
        let uniform = vec![vec![1.0 / n as f64; n]];
        assert!((mean_entropy(&uniform).unwrap() - (n as f64).ln()).abs() <= 1e-12);
    }
    let rows = vec![vec![0.5, 0.25, 0.25], vec![1.0, 0.0, 0.0]];
    assert!((mean_entropy(&rows).unwrap() - 0.75 * 2f64.ln()).abs() <= 1e-12);
}

#[test]
fn macro_prf_hand_counted() {
    let preds = [0, 0, 1, 1, 2, 2, 0];
    let truths = [0, 1, 1, 1, 2, 0, 2];
    let prf = macro_prf(&preds, &truths, 3).unwrap();
    assert!((prf.precision - 11.0 / 18.0).abs() <= 1e-12);
    assert!((prf.recall - 5.0 / 9.0).abs() <= 1e-12);
    assert!((prf.f1 - 1.7 / 3.0).abs() <= 1e-12);
}

#[test]
fn macro_prf_matches_confusion_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..50 {
        let n_classes = 5;
        let truths: Vec<usize> = (0..40).map(|_| rng.random_range(0..4)).collect();
        let preds: Vec<usize> = (0..40).map(|_| rng.random_range(0..5)).collect();
        let mut cm = vec![vec![0usize; n_classes]; n_classes];
        for (&p, &t) in preds.iter().zip(&truths) {
            cm[t][p] += 1;
        }
        let present: Vec<usize> = (0..n_classes).filter(|&c| cm[c].iter().sum::<usize>() > 0).collect();
        let (mut ps, mut rs, mut fs) = (0.0, 0.0, 0.0);
        for &c in &present {
            let col: usize = (0..n_classes).map(|t| cm[t][c]).sum();
            let row: usize = cm[c].iter().sum();
            let p = if col == 0 { 0.0 } else { cm[c][c] as f64 / col as f64 };
            let r = cm[c][c] as f64 / row as f64;
            ps += p;
            rs += r;
            fs += if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        }
        let k = present.len() as f64;
        let prf = macro_prf(&preds, &truths, n_classes).unwrap();
        assert!((prf.precision - ps / k).abs() <= 1e-12);
        assert!((prf.recall - rs / k).abs() <= 1e-12);
        assert!((prf.f1 - fs / k).abs() <= 1e-12);
    }
}

fn three_label_family() -> FocalFamily {
    FocalFamily::canonical(
        LabelSpace::new(Level::Fine, 3).unwrap(),
        vec![FocalSet::from_indices(3, [0, 1]).unwrap(), FocalSet::from_indices(3, [1, 2]).unwrap()],
    )
    .unwrap()
}

#[test]
fn coverage_matches_oracle_on_random_samples() {
    let fam = three_label_family();
    let members: Vec<Vec<usize>> = fam.sets().iter().map(|s| s.to_vec()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let masses: Vec<Vec<f64>> = (0..20).map(|_| (0..fam.len()).map(|_| rng.random_range(-0.1..0.5)).collect()).collect();
    let omega: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..0.6)).collect();
    let truths: Vec<usize> = (0..20).map(|_| rng.random_range(0..3)).collect();

    let (mut n_omega, mut incl, mut excl) = (0, 0, 0);
    for i in 0..20 {
        let top = masses[i].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let best = masses[i].iter().position(|&m| m == top).unwrap();
        if omega[i] > top {
            n_omega += 1;
            incl += 1;
        } else if members[best].contains(&truths[i]) {
            incl += 1;
            excl += 1;
        }
    }
    let cov = coverage_and_omega(&masses, &omega, &truths, &fam).unwrap();
    assert!(n_omega > 0 && n_omega < 20, "fixture should mix Ω and set predictions");
    assert!((cov.omega_rate - n_omega as f64 / 20.0).abs() <= 1e-12);
    assert!((cov.cov_incl - incl as f64 / 20.0).abs() <= 1e-12);
    assert!((cov.cov_excl - excl as f64 / (20 - n_omega) as f64).abs() <= 1e-12);
    assert!((cov.mean_omega_mass - omega.iter().sum::<f64>() / 20.0).abs() <= 1e-12);
}

#[test]
fn coverage_hand_counted() {
    let fam = three_label_family();
    // sets in canonical order: {0}, {1}, {2}, {0,1}, {1,2}
    let masses = vec![
        vec![0.1, 0.0, 0.0, 0.6, 0.1], // {0,1}, truth 1 → covered
        vec![0.1, 0.0, 0.0, 0.0, 0.5], // {1,2}, truth 0 → missed
        vec![0.1, 0.1, 0.1, 0.1, 0.1], // Ω mass 0.5 wins
        vec![0.0, 0.0, 0.7, 0.0, 0.0], // {2}, truth 2 → covered
    ];
    let omega = vec![0.2, 0.4, 0.5, 0.3];
    let cov = coverage_and_omega(&masses, &omega, &[1, 0, 1, 2], &fam).unwrap();
    assert_eq!(cov.omega_rate, 0.25);
    assert_eq!(cov.cov_incl, 0.75);
    assert!((cov.cov_excl - 2.0 / 3.0).abs() <= 1e-12);
    assert!((cov.mean_omega_mass - 0.35).abs() <= 1e-12);
}

struct ScalarDecode {
    fine_pred: usize,
    coarse_pred: usize,
    overridden: bool,
}

fn scalar_decode(f: &[f64], c: &[f64], parents: &[usize], tau_f: f64, tau_c: f64) -> ScalarDecode {
    let first_max = |v: &[f64]| {
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        v.iter().position(|&x| x == m).unwrap()
    };
    let yf = first_max(f);
    let g = parents[yf];
    let overridden = f[yf] >= tau_f && c[g] < tau_c;
    ScalarDecode {
        fine_pred: yf,
        coarse_pred: if overridden { g } else { first_max(c) },
        overridden,
    }
}

#[test]
fn decode_grid_matches_scalar_rule_and_is_monotone() {
    let h = Hierarchy::from_parents(vec![0, 0, 1, 1, 1, 2]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let bf: Vec<Vec<f64>> = (0..200).map(|_| random_distribution(&mut rng, 6)).collect();
    let bc: Vec<Vec<f64>> = (0..200).map(|_| random_distribution(&mut rng, 3)).collect();
    let grid = DecodeConfig::grid();
    let mut overrides = [[0usize; 3]; 3];
    let mut consistency = [[0.0f64; 3]; 3];
    for (k, cfg) in grid.iter().enumerate() {
        let decoded = decode_batch(&bf, &bc, &h, cfg).unwrap();
        for (i, d) in decoded.iter().enumerate() {
            let s = scalar_decode(&bf[i], &bc[i], h.parents(), cfg.tau_f, cfg.tau_c);
            assert_eq!((d.fine_pred, d.coarse_pred, d.overridden), (s.fine_pred, s.coarse_pred, s.overridden));
        }
        overrides[k / 3][k % 3] = decoded.iter().filter(|d| d.overridden).count();
        consistency[k / 3][k % 3] = logical_consistency(&decoded, &h).unwrap();
    }
    for i in 0..3 {
        for j in 0..2 {
            // τ_c up: more overrides, never less consistent
            assert!(overrides[i][j] <= overrides[i][j + 1]);
            assert!(consistency[i][j] <= consistency[i][j + 1]);
            // τ_f up: fewer overrides, never more consistent
            assert!(overrides[j][i] >= overrides[j + 1][i]);
            assert!(consistency[j][i] >= consistency[j + 1][i]);
        }
    }
    assert!(overrides[0][2] > overrides[2][0], "fixture should exercise the override branch");
}

#[test]
fn fully_overriding_decode_is_consistent() {
    let h = Hierarchy::from_parents(vec![0, 0, 1, 2]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let bf: Vec<Vec<f64>> = (0..50).map(|_| random_distribution(&mut rng, 4)).collect();
    let bc: Vec<Vec<f64>> = (0..50).map(|_| random_distribution(&mut rng, 3)).collect();
    // τ_f tiny and τ_c at its open upper end override every sample whose parent mass is < 0.999999
    let cfg = DecodeConfig::new(1e-9, 1.0 - 1e-9).unwrap();
    let decoded = decode_batch(&bf, &bc, &h, &cfg).unwrap();
    assert!(decoded.iter().all(|d| d.overridden));
    assert_eq!(logical_consistency(&decoded, &h).unwrap(), 1.0);
}

#[test]
fn one_hot_predictions_score_perfectly() {
    let h = Hierarchy::from_parents(vec![0, 0, 1, 2]).unwrap();
    let of = FocalFamily::singletons(h.fine().clone());
    let oc = FocalFamily::singletons(h.coarse().clone());
    let true_fine = vec![0, 1, 2, 3, 1, 0];
    let true_coarse: Vec<usize> = true_fine.iter().map(|&y| h.parents()[y]).collect();
    let one_hot = |n: usize, y: usize| (0..n).map(|i| if i == y { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    let fine: Vec<BeliefState> = true_fine.iter().map(|&y| BeliefState::from_beliefs(one_hot(4, y), &of).unwrap()).collect();
    let coarse: Vec<BeliefState> = true_coarse.iter().map(|&y| BeliefState::from_beliefs(one_hot(3, y), &oc).unwrap()).collect();
    let bf: Vec<Vec<f64>> = fine.iter().map(|s| s.pignistic.clone()).collect();
    let bc: Vec<Vec<f64>> = coarse.iter().map(|s| s.pignistic.clone()).collect();
    let decoded = decode_batch(&bf, &bc, &h, &DecodeConfig::default()).unwrap();
    let r = evaluate(&EvalInputs {
        fine: &fine,
        coarse: &coarse,
        true_fine: &true_fine,
        true_coarse: &true_coarse,
        decoded: &decoded,
        hierarchy: &h,
        fine_family: &of,
        coarse_family: &oc,
        ece_bins: 15,
    })
    .unwrap();
    assert_eq!((r.acc_f, r.acc_c, r.logical_consistency), (1.0, 1.0, 1.0));
    assert_eq!((r.ece_f, r.ece_c), (0.0, 0.0));
    assert_eq!((r.entropy_f, r.entropy_c), (0.0, 0.0));
    assert_eq!((r.coverage_incl_f, r.coverage_excl_f, r.omega_rate_f), (1.0, 1.0, 0.0));
    assert_eq!(r.prf_c.f1, 1.0);
}

#[test]
fn cons_score_stays_in_unit_interval_on_random_instances() {
    let h = Hierarchy::from_parents(vec![0, 0, 1, 1, 2, 2, 2]).unwrap();
    let sets = |n: usize, v: &[&[usize]]| v.iter().map(|s| FocalSet::from_indices(n, s.iter().copied()).unwrap()).collect();
    let of = FocalFamily::canonical(h.fine().clone(), sets(7, &[&[0, 1], &[1, 2], &[4, 5, 6], &[0, 3, 6]])).unwrap();
    let oc = FocalFamily::canonical(h.coarse().clone(), sets(3, &[&[0, 1], &[1, 2]])).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let mut max_seen: f64 = 0.0;
    for i in 0..10_000 {
        let cfg = ConsistencyConfig {
            tnorm: TNorm::ALL[i % 3],
            membership: [MembershipFn::default(), MembershipFn::Triangular { a: 0.0 }, MembershipFn::Trapezoidal { a: 0.0, b: 0.5 }][(i / 3) % 3],
            tau_f: rng.random_range(0.0..2.0),
            tau_c: rng.random_range(0.0..2.0),
            normalize_weights: i % 2 == 0,
            exclude_omega: true,
        };
        let t = build_tables(&of, &oc, &h, &cfg).unwrap();
        let mf: Vec<f64> = (0..of.len()).map(|_| rng.random_range(-0.5..1.5)).collect();
        let mc: Vec<f64> = (0..oc.len()).map(|_| rng.random_range(-0.5..1.5)).collect();
        let c = cons_score(&mf, &mc, &t, &cfg).unwrap();
        assert!((0.0..=1.0).contains(&c), "instance {i}: cons {c}");
        max_seen = max_seen.max(c);
    }
    assert!(max_seen > 0.3);
}
