//! Analytic gradients against central finite differences at random interior points.

use hierbelief::belief::{
    focal_bce, focal_bce_grad, mass_penalty, mass_penalty_grad, sum_penalty, sum_penalty_grad, FocalFamily, FocalSet,
};
use hierbelief::consistency::{
    build_tables, consistency_grads, consistency_loss, ConsistencyConfig, ConsistencyTables,
};
use hierbelief::fuzzy::{MembershipFn, TNorm};
use hierbelief::hierarchy::{Hierarchy, LabelSpace, Level};
use hierbelief::train::{batch_objective, HeadModel, Objective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const POINTS: usize = 100;

/// Relative agreement, with an absolute floor for gradients that vanish.
fn close(analytic: f64, numeric: f64, rel: f64) -> bool {
    let d = (analytic - numeric).abs();
    d <= rel * analytic.abs().max(numeric.abs()) || d <= 1e-9
}

fn central(f: &mut dyn FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

fn family(n: usize, level: Level, extra: &[&[usize]]) -> FocalFamily {
    let sets = extra.iter().map(|s| FocalSet::from_indices(n, s.iter().copied()).unwrap()).collect();
    FocalFamily::canonical(LabelSpace::new(level, n).unwrap(), sets).unwrap()
}

fn memberships() -> [MembershipFn; 3] {
    [
        MembershipFn::Gaussian { sigma: 0.7 },
        MembershipFn::Triangular { a: 0.2 },
        MembershipFn::Trapezoidal { a: 0.1, b: 0.7 },
    ]
}

/// Distance from the nearest kink of `T(m_f, μ(m_c))` or of the mass clamps.
fn kink_distance(mf: f64, mc: f64, cfg: &ConsistencyConfig) -> f64 {
    let mut d = [mf, 1.0 - mf, mc, 1.0 - mc].iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    match cfg.membership {
        MembershipFn::Triangular { a } => d = d.min((mc - a).abs()),
        MembershipFn::Trapezoidal { a, b } => d = d.min((mc - a).abs()).min((mc - b).abs()),
        MembershipFn::Gaussian { .. } => {}
    }
    if !(0.0..=1.0).contains(&mf) && !(0.0..=1.0).contains(&mc) {
        // both arguments clamped: T∘μ is locally constant
        return d;
    }
    let mu = cfg.membership.degree(mc.clamp(0.0, 1.0)).unwrap();
    let mf = mf.clamp(0.0, 1.0);
    match cfg.tnorm {
        TNorm::Godel => d.min((mf - mu).abs()),
        TNorm::Lukasiewicz => d.min((mf + mu - 1.0).abs()),
        TNorm::Product => d,
    }
}

#[test]
fn focal_bce_matches_finite_differences() {
    let fam = family(4, Level::Fine, &[&[0, 1], &[1, 2, 3]]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..POINTS {
        let logits: Vec<Vec<f64>> = (0..5).map(|_| (0..fam.len()).map(|_| rng.random_range(-4.0..4.0)).collect()).collect();
        let labels: Vec<usize> = (0..5).map(|_| rng.random_range(0..4)).collect();
        let g = focal_bce_grad(&logits, &labels, &fam).unwrap();
        for i in 0..5 {
            for a in 0..fam.len() {
                let mut f = |v: f64| {
                    let mut l = logits.clone();
                    l[i][a] = v;
                    focal_bce(&l, &labels, &fam).unwrap()
                };
                let num = central(&mut f, logits[i][a], 1e-6);
                assert!(close(g[i][a], num, 1e-6), "bce ({i},{a}): {} vs {num}", g[i][a]);
            }
        }
    }
}

#[test]
fn penalties_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    while checked < POINTS {
        let m: Vec<f64> = (0..5).map(|_| rng.random_range(-0.5..0.8)).collect();
        let s: f64 = m.iter().sum();
        if m.iter().any(|v| v.abs() < 1e-3) || (s - 1.0).abs() < 1e-3 {
            continue;
        }
        checked += 1;
        let gm = mass_penalty_grad(&m);
        let gs = sum_penalty_grad(&m);
        for a in 0..m.len() {
            let at = |v: f64| {
                let mut x = m.clone();
                x[a] = v;
                x
            };
            let nm = central(&mut |v| mass_penalty(&at(v)), m[a], 1e-6);
            let ns = central(&mut |v| sum_penalty(&at(v)), m[a], 1e-6);
            assert!(close(gm[a], nm, 1e-6), "mass penalty {a}: {} vs {nm}", gm[a]);
            assert!(close(gs[a], ns, 1e-6), "sum penalty {a}: {} vs {ns}", gs[a]);
        }
    }
}

fn consistency_fixture(cfg: &ConsistencyConfig) -> (FocalFamily, FocalFamily, ConsistencyTables) {
    let h = Hierarchy::from_parents(vec![0, 0, 1, 1, 2, 2]).unwrap();
    let of = family(6, Level::Fine, &[&[0, 1], &[1, 2], &[3, 4, 5]]);
    let oc = family(3, Level::Coarse, &[&[0, 1], &[1, 2]]);
    let t = build_tables(&of, &oc, &h, cfg).unwrap();
    (of, oc, t)
}

#[test]
fn consistency_loss_matches_finite_differences_for_every_tnorm_and_membership() {
    for tnorm in TNorm::ALL {
        for membership in memberships() {
            let cfg = ConsistencyConfig {
                tnorm,
                membership,
                ..ConsistencyConfig::default()
            };
            let (of, oc, t) = consistency_fixture(&cfg);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut checked = 0;
            while checked < POINTS {
                let mf: Vec<Vec<f64>> = (0..3).map(|_| (0..of.len()).map(|_| rng.random_range(0.02..0.98)).collect()).collect();
                let mc: Vec<Vec<f64>> = (0..3).map(|_| (0..oc.len()).map(|_| rng.random_range(0.02..0.98)).collect()).collect();
                let interior = mf.iter().zip(&mc).all(|(f, c)| {
                    f.iter().all(|&a| c.iter().all(|&b| kink_distance(a, b, &cfg) > 1e-3))
                });
                if !interior {
                    continue;
                }
                checked += 1;
                let (gf, gc) = consistency_grads(&mf, &mc, &t, &cfg).unwrap();
                for i in 0..3 {
                    for a in 0..of.len() {
                        let num = central(
                            &mut |v| {
                                let mut x = mf.clone();
                                x[i][a] = v;
                                consistency_loss(&x, &mc, &t, &cfg).unwrap()
                            },
                            mf[i][a],
                            1e-6,
                        );
                        assert!(close(gf[i][a], num, 1e-5), "{tnorm} {membership:?} fine ({i},{a}): {} vs {num}", gf[i][a]);
                    }
                    for b in 0..oc.len() {
                        let num = central(
                            &mut |v| {
                                let mut x = mc.clone();
                                x[i][b] = v;
                                consistency_loss(&mf, &x, &t, &cfg).unwrap()
                            },
                            mc[i][b],
                            1e-6,
                        );
                        assert!(close(gc[i][b], num, 1e-5), "{tnorm} {membership:?} coarse ({i},{b}): {} vs {num}", gc[i][b]);
                    }
                }
            }
        }
    }
}

#[test]
fn consistency_gradient_at_zero_masses_is_right_derivative() {
    for tnorm in [TNorm::Product, TNorm::Godel] {
        let cfg = ConsistencyConfig {
            tnorm,
            ..ConsistencyConfig::default()
        };
        let (of, oc, t) = consistency_fixture(&cfg);
        let mf = vec![vec![0.0; of.len()]];
        let mc = vec![vec![0.0; oc.len()]];
        let (gf, _) = consistency_grads(&mf, &mc, &t, &cfg).unwrap();
        let base = consistency_loss(&mf, &mc, &t, &cfg).unwrap();
        for a in 0..of.len() {
            let h = 1e-7;
            let mut x = mf.clone();
            x[0][a] = h;
            let fwd = (consistency_loss(&x, &mc, &t, &cfg).unwrap() - base) / h;
            assert!((gf[0][a] - fwd).abs() < 1e-6, "{tnorm} fine {a}: {} vs {fwd}", gf[0][a]);
        }
    }
}

#[test]
fn membership_and_tnorm_grads_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for mu in memberships() {
        let mut checked = 0;
        while checked < POINTS {
            let x: f64 = rng.random_range(0.01..0.99);
            let kinks: &[f64] = match mu {
                MembershipFn::Triangular { ref a } => std::slice::from_ref(a),
                MembershipFn::Trapezoidal { .. } => &[0.1, 0.7],
                MembershipFn::Gaussian { .. } => &[],
            };
            if kinks.iter().any(|k| (x - k).abs() <= 1e-3) {
                continue;
            }
            checked += 1;
            let num = central(&mut |v| mu.degree(v).unwrap(), x, 1e-6);
            assert!((mu.grad(x).unwrap() - num).abs() < 1e-6, "{mu:?} at {x}");
        }
    }
    for tn in TNorm::ALL {
        let mut checked = 0;
        while checked < POINTS {
            let (a, b): (f64, f64) = (rng.random_range(0.01..0.99), rng.random_range(0.01..0.99));
            let kink = match tn {
                TNorm::Godel => (a - b).abs(),
                TNorm::Lukasiewicz => (a + b - 1.0).abs(),
                TNorm::Product => 1.0,
            };
            if kink <= 1e-3 {
                continue;
            }
            checked += 1;
            let (ga, gb) = tn.grads(a, b).unwrap();
            let na = central(&mut |v| tn.apply(v, b).unwrap(), a, 1e-6);
            let nb = central(&mut |v| tn.apply(a, v).unwrap(), b, 1e-6);
            assert!((ga - na).abs() < 1e-6 && (gb - nb).abs() < 1e-6, "{tn} at ({a}, {b})");
        }
    }
}

struct EndToEnd {
    h: Hierarchy,
    of: FocalFamily,
    oc: FocalFamily,
}

fn three_two() -> EndToEnd {
    EndToEnd {
        h: Hierarchy::from_parents(vec![0, 0, 1]).unwrap(),
        of: family(3, Level::Fine, &[&[0, 1], &[1, 2]]),
        // includes Ω = {0, 1}
        oc: family(2, Level::Coarse, &[&[0, 1]]),
    }
}

fn random_model(rng: &mut ChaCha8Rng, nf: usize, nc: usize, d: usize) -> HeadModel {
    let mut m = HeadModel::zeros(nf, nc, d);
    let flat: Vec<f64> = (0..m.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
    m.set_flat(&flat);
    m
}

#[test]
fn total_loss_gradient_covers_heads_and_log_weights() {
    let e = three_two();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < POINTS {
        let cfg = ConsistencyConfig {
            tnorm: TNorm::ALL[checked % 3],
            membership: memberships()[(checked / 3) % 3],
            ..ConsistencyConfig::default()
        };
        let tables = build_tables(&e.of, &e.oc, &e.h, &cfg).unwrap();
        let obj = Objective {
            fine: &e.of,
            coarse: &e.oc,
            tables: &tables,
            cons: &cfg,
        };
        let model = random_model(&mut rng, e.of.len(), e.oc.len(), 4);
        let x: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
        let yf: Vec<usize> = (0..5).map(|_| rng.random_range(0..3)).collect();
        let yc: Vec<usize> = yf.iter().map(|&y| e.h.parents()[y]).collect();

        // reject points within reach of a kink in penalties, clamps or T∘μ
        let (lf, lc) = model.forward(&x).unwrap();
        let masses = |l: &[f64], fam: &FocalFamily| {
            let b: Vec<f64> = l.iter().map(|&z| 1.0 / (1.0 + (-z).exp())).collect();
            hierbelief::belief::belief_to_mass(&b, fam).unwrap()
        };
        let interior = lf.iter().zip(&lc).all(|(f, c)| {
            let mf = masses(f, &e.of);
            let mc = masses(c, &e.oc);
            let sums_ok = (mf.iter().sum::<f64>() - 1.0).abs() > 1e-3 && (mc.iter().sum::<f64>() - 1.0).abs() > 1e-3;
            sums_ok
                && mf.iter().chain(&mc).all(|m| m.abs() > 1e-3 && (m - 1.0).abs() > 1e-3)
                && mf.iter().all(|&a| mc.iter().all(|&b| kink_distance(a, b, &cfg) > 1e-3))
        });
        if !interior {
            continue;
        }
        checked += 1;

        let (_, g) = batch_objective(&model, &x, &yf, &yc, &obj, false, false, true).unwrap();
        let g = g.unwrap();
        let flat = model.to_flat();
        for k in 0..flat.len() {
            let num = central(
                &mut |v| {
                    let mut p = flat.clone();
                    p[k] = v;
                    let mut m = model.clone();
                    m.set_flat(&p);
                    batch_objective(&m, &x, &yf, &yc, &obj, false, false, false).unwrap().0.total
                },
                flat[k],
                1e-5,
            );
            assert!(close(g[k], num, 1e-4), "param {k} ({}): {} vs {num}", cfg.tnorm, g[k]);
        }
    }
}

#[test]
fn warmup_gradient_leaves_log_weights_alone() {
    let e = three_two();
    let cfg = ConsistencyConfig::default();
    let tables = build_tables(&e.of, &e.oc, &e.h, &cfg).unwrap();
    let obj = Objective {
        fine: &e.of,
        coarse: &e.oc,
        tables: &tables,
        cons: &cfg,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let model = random_model(&mut rng, e.of.len(), e.oc.len(), 4);
    let x: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
    let yf = vec![0, 1, 2, 0, 1];
    let yc = vec![0, 0, 1, 0, 0];
    let (b, g) = batch_objective(&model, &x, &yf, &yc, &obj, true, false, true).unwrap();
    let g = g.unwrap();
    assert_eq!(&g[g.len() - 3..], &[0.0, 0.0, 0.0]);
    assert_eq!(b.total, b.bce_f + b.bce_c);
}
