//! Data-driven focal-set budgets.
//!
//! Embeddings are clustered with k-means; every cluster proposes the set of
//! fine labels that make up a sizeable share of its points. Sets that are
//! too large, or single labels, are dropped, and all singletons are added.
//! The coarse family is the deduplicated projection of the fine one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::belief::{FocalFamily, FocalSet};
use crate::error::{parse_err, Error, Result};
use crate::hierarchy::{Hierarchy, LabelSpace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetConfig {
    /// Number of clusters.
    pub k: usize,
    /// Induced sets larger than this are discarded.
    pub max_cardinality: usize,
    /// Minimum share of a cluster's points for a label to join its set.
    pub min_label_frequency: f64,
    pub seed: u64,
    pub max_iterations: usize,
}

impl BudgetConfig {
    /// Defaults for a fine space of `n_fine` labels: `k = n_fine`,
    /// `max_cardinality = max(2, ⌈n_fine / 4⌉)`, 5% label frequency, seed 42.
    pub fn for_space(n_fine: usize) -> Self {
        Self {
            k: n_fine,
            max_cardinality: n_fine.div_ceil(4).max(2),
            min_label_frequency: 0.05,
            seed: 42,
            max_iterations: 100,
        }
    }

    pub fn validate(&self, space_size: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.max_cardinality < 2 || self.max_cardinality >= space_size {
            return Err(Error::Config(format!(
                "max_cardinality must satisfy 2 <= c < {space_size}, got {}",
                self.max_cardinality
            )));
        }
        if !(0.0..=1.0).contains(&self.min_label_frequency) {
            return Err(Error::Config(format!(
                "min_label_frequency {} outside [0, 1]",
                self.min_label_frequency
            )));
        }
        Ok(())
    }
}

/// Labelled feature rows, as read from an embeddings file.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbeddings {
    pub labels: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
}

impl LabeledEmbeddings {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Parses `n=<points> d=<dim>` followed by `label v1 … vd` rows.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "missing `n=... d=...` header"))?;
        let (mut n, mut d) = (None, None);
        for tok in header.split_whitespace() {
            let parse_num = |v: &str| v.parse::<usize>().map_err(|_| parse_err(hline, format!("bad header value `{v}`")));
            if let Some(v) = tok.strip_prefix("n=") {
                n = Some(parse_num(v)?);
            } else if let Some(v) = tok.strip_prefix("d=") {
                d = Some(parse_num(v)?);
            } else {
                return Err(parse_err(hline, format!("unexpected header token `{tok}`")));
            }
        }
        let n = n.ok_or_else(|| parse_err(hline, "header lacks n="))?;
        let d = d.ok_or_else(|| parse_err(hline, "header lacks d="))?;
        let mut labels = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n);
        for (line_no, line) in lines {
            let mut toks = line.split_whitespace();
            let label_tok = toks.next().expect("nonempty line");
            let label: usize = label_tok
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad label `{label_tok}`")))?;
            let row: Vec<f64> = toks
                .map(|t| {
                    t.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| parse_err(line_no, format!("bad value `{t}`")))
                })
                .collect::<Result<_>>()?;
            if row.len() != d {
                return Err(parse_err(line_no, format!("expected {d} values, found {}", row.len())));
            }
            labels.push(label);
            rows.push(row);
        }
        if rows.len() != n {
            return Err(parse_err(hline, format!("header says {n} points, file has {}", rows.len())));
        }
        Ok(Self { labels, rows })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("n={} d={}\n", self.len(), self.dim());
        for (y, row) in self.labels.iter().zip(&self.rows) {
            out.push_str(&y.to_string());
            for v in row {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Lloyd iterations of the selected restart.
    pub iterations: usize,
    /// Sum of squared distances to the assigned centroids.
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = sq_dist(point, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Index drawn with probability proportional to `weights`; falls back to the
/// first index when all weights are zero.
fn weighted_pick(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return 0;
    }
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Number of k-means++ restarts; the run with the lowest inertia is kept.
pub const KMEANS_RESTARTS: usize = 10;

/// Lloyd's algorithm with k-means++ seeding, restarted [`KMEANS_RESTARTS`]
/// times from one seeded stream. Empty clusters are re-seeded at the point
/// farthest from its current centroid. Ties in inertia keep the earlier run.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iterations: usize) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::Config(format!("{} points cannot form {k} clusters", points.len())));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::Shape("points have inconsistent dimensionality".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = lloyd(points, k, d, max_iterations, &mut rng);
    for _ in 1..KMEANS_RESTARTS {
        let run = lloyd(points, k, d, max_iterations, &mut rng);
        if run.inertia < best.inertia {
            best = run;
        }
    }
    Ok(best)
}

fn lloyd(points: &[Vec<f64>], k: usize, d: usize, max_iterations: usize, rng: &mut ChaCha8Rng) -> KMeansResult {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let next = weighted_pick(&dist, rng);
        centroids.push(points[next].clone());
        for (p, dp) in points.iter().zip(dist.iter_mut()) {
            *dp = dp.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }

    let mut assignments = vec![usize::MAX; points.len()];
    let mut iterations = 0;
    while iterations < max_iterations.max(1) {
        iterations += 1;
        let mut changed = false;
        for (p, a) in points.iter().zip(assignments.iter_mut()) {
            let (c, _) = nearest(p, &centroids);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.len())
                    .max_by(|&i, &j| {
                        let di = sq_dist(&points[i], &centroids[assignments[i]]);
                        let dj = sq_dist(&points[j], &centroids[assignments[j]]);
                        di.total_cmp(&dj).then(j.cmp(&i))
                    })
                    .expect("nonempty");
                centroids[c] = points[far].clone();
                assignments[far] = c;
                changed = true;
            } else {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = points.iter().zip(&assignments).map(|(p, &a)| sq_dist(p, &centroids[a])).sum();
    KMeansResult {
        assignments,
        centroids,
        iterations,
        inertia,
    }
}

/// Builds the fine focal family from cluster memberships.
pub fn induce_family(
    assignments: &[usize],
    labels: &[usize],
    space: &LabelSpace,
    cfg: &BudgetConfig,
) -> Result<FocalFamily> {
    if assignments.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} assignments but {} labels",
            assignments.len(),
            labels.len()
        )));
    }
    for &y in labels {
        space.check_label(y)?;
    }
    let n_clusters = assignments.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![vec![0usize; space.size()]; n_clusters];
    let mut sizes = vec![0usize; n_clusters];
    for (&c, &y) in assignments.iter().zip(labels) {
        counts[c][y] += 1;
        sizes[c] += 1;
    }
    let mut sets = Vec::new();
    for (c, row) in counts.iter().enumerate() {
        if sizes[c] == 0 {
            continue;
        }
        let members = row
            .iter()
            .enumerate()
            .filter(|&(_, &n)| n > 0 && n as f64 / sizes[c] as f64 >= cfg.min_label_frequency)
            .map(|(y, _)| y);
        let set = FocalSet::from_indices(space.size(), members)?;
        if set.len() >= 2 && set.len() <= cfg.max_cardinality {
            sets.push(set);
        }
    }
    FocalFamily::canonical(space.clone(), sets)
}

/// `{Π(A) : A ∈ O^f}` plus every coarse singleton, deduplicated.
pub fn project_family(fine: &FocalFamily, h: &Hierarchy) -> Result<FocalFamily> {
    if fine.space().size() != h.fine().size() {
        return Err(Error::Shape(format!(
            "fine family over {} labels, hierarchy has {}",
            fine.space().size(),
            h.fine().size()
        )));
    }
    let projected = fine.sets().iter().map(|a| h.project_set(a)).collect::<Result<Vec<_>>>()?;
    FocalFamily::canonical(h.coarse().clone(), projected)
}
