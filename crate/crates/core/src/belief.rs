//! Focal sets and the belief/mass machinery on top of them.
//!
//! A head predicts one belief value per focal set (`σ(logit)`). Masses come
//! from restricted Möbius inversion over the family, whatever is left below 1
//! goes to the ignorance set Ω, and the pignistic transform spreads each
//! mass uniformly over its members to get a distribution over labels.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{parse_err, Error, Result};
use crate::hierarchy::{LabelSpace, Level};

/// Probabilities entering a log are clamped to `[BCE_EPS, 1 - BCE_EPS]`.
pub const BCE_EPS: f64 = 1e-12;

const WORD: usize = 64;

/// A subset of a label space stored as a fixed-width bit set.
///
/// The value itself may be empty (e.g. the projection of ∅); families only
/// accept nonempty sets.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FocalSet {
    universe: usize,
    words: Vec<u64>,
}

impl FocalSet {
    pub fn empty(universe: usize) -> Self {
        Self {
            universe,
            words: vec![0; universe.div_ceil(WORD)],
        }
    }

    pub fn singleton(universe: usize, label: usize) -> Self {
        let mut s = Self::empty(universe);
        s.insert(label);
        s
    }

    pub fn full(universe: usize) -> Self {
        let mut s = Self::empty(universe);
        for i in 0..universe {
            s.insert(i);
        }
        s
    }

    pub fn from_indices(universe: usize, labels: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut s = Self::empty(universe);
        for l in labels {
            if l >= universe {
                return Err(Error::InvalidLabel(format!(
                    "label {l} out of range for size {universe}"
                )));
            }
            s.insert(l);
        }
        Ok(s)
    }

    /// Panics if `label` is outside the universe.
    pub fn insert(&mut self, label: usize) {
        assert!(label < self.universe, "label {label} outside universe {}", self.universe);
        self.words[label / WORD] |= 1u64 << (label % WORD);
    }

    pub fn contains(&self, label: usize) -> bool {
        label < self.universe && self.words[label / WORD] & (1u64 << (label % WORD)) != 0
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.universe
    }

    pub fn is_subset_of(&self, other: &FocalSet) -> bool {
        debug_assert_eq!(self.universe, other.universe);
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn intersection_len(&self, other: &FocalSet) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn intersects(&self, other: &FocalSet) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    pub fn union(&self, other: &FocalSet) -> FocalSet {
        debug_assert_eq!(self.universe, other.universe);
        FocalSet {
            universe: self.universe,
            words: self.words.iter().zip(&other.words).map(|(a, b)| a | b).collect(),
        }
    }

    /// Members in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    None
                } else {
                    let tz = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    Some(wi * WORD + tz)
                }
            })
        })
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }

    /// Family ordering: cardinality first, then members lexicographically.
    pub fn canonical_cmp(&self, other: &FocalSet) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.iter().cmp(other.iter()))
    }
}

impl fmt::Debug for FocalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// One term of the restricted Möbius sum: `sets[subset] ⊆ sets[superset]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetPair {
    pub superset: usize,
    pub subset: usize,
    /// (-1)^(|superset| - |subset|)
    pub sign: f64,
}

/// An ordered budget of distinct focal sets over one label space.
#[derive(Debug, Clone, PartialEq)]
pub struct FocalFamily {
    space: LabelSpace,
    sets: Vec<FocalSet>,
    subset_pairs: Vec<SubsetPair>,
    omega_index: Option<usize>,
    partial: bool,
}

impl FocalFamily {
    /// A family that must contain every singleton of the space.
    pub fn new(space: LabelSpace, sets: Vec<FocalSet>) -> Result<Self> {
        let fam = Self::build(space, sets, false)?;
        let size = fam.space.size();
        let mut seen = vec![false; size];
        for s in &fam.sets {
            if s.len() == 1 {
                seen[s.iter().next().unwrap()] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|&b| !b) {
            return Err(Error::Config(format!(
                "{} family is missing singleton {{{missing}}}",
                fam.space.level()
            )));
        }
        Ok(fam)
    }

    /// A family without the singleton-completeness requirement, for hand-built
    /// examples. Sets must still be nonempty and distinct.
    pub fn partial(space: LabelSpace, sets: Vec<FocalSet>) -> Result<Self> {
        Self::build(space, sets, true)
    }

    pub fn singletons(space: LabelSpace) -> Self {
        let sets = (0..space.size()).map(|i| FocalSet::singleton(space.size(), i)).collect();
        Self::build(space, sets, false).expect("singletons form a valid family")
    }

    /// Sorts into canonical order (singletons ascending, then by cardinality
    /// and members), drops duplicates and adds any missing singleton.
    pub fn canonical(space: LabelSpace, mut sets: Vec<FocalSet>) -> Result<Self> {
        for i in 0..space.size() {
            sets.push(FocalSet::singleton(space.size(), i));
        }
        sets.sort_by(FocalSet::canonical_cmp);
        sets.dedup();
        Self::new(space, sets)
    }

    fn build(space: LabelSpace, sets: Vec<FocalSet>, partial: bool) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::EmptyInput("focal family has no sets".into()));
        }
        let size = space.size();
        for (i, s) in sets.iter().enumerate() {
            if s.universe() != size {
                return Err(Error::Shape(format!(
                    "focal set {i} is over {} labels, family space has {size}",
                    s.universe()
                )));
            }
            if s.is_empty() {
                return Err(Error::Config(format!("focal set {i} is empty")));
            }
        }
        let mut sorted: Vec<&FocalSet> = sets.iter().collect();
        sorted.sort_by(|a, b| a.canonical_cmp(b));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("focal family contains duplicate sets".into()));
        }
        let mut subset_pairs = Vec::new();
        for (i, big) in sets.iter().enumerate() {
            for (j, small) in sets.iter().enumerate() {
                if small.is_subset_of(big) {
                    let diff = big.len() - small.len();
                    subset_pairs.push(SubsetPair {
                        superset: i,
                        subset: j,
                        sign: if diff % 2 == 0 { 1.0 } else { -1.0 },
                    });
                }
            }
        }
        let omega_index = sets.iter().position(FocalSet::is_full);
        Ok(Self {
            space,
            sets,
            subset_pairs,
            omega_index,
            partial,
        })
    }

    pub fn space(&self) -> &LabelSpace {
        &self.space
    }

    pub fn sets(&self) -> &[FocalSet] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn subset_pairs(&self) -> &[SubsetPair] {
        &self.subset_pairs
    }

    pub fn contains_omega(&self) -> bool {
        self.omega_index.is_some()
    }

    pub fn omega_index(&self) -> Option<usize> {
        self.omega_index
    }

    pub fn is_partial(&self) -> bool {
        self.partial
    }

    /// Belief targets `1{label ∈ A}` for every set.
    pub fn targets(&self, label: usize) -> Result<Vec<f64>> {
        self.space.check_label(label)?;
        Ok(self
            .sets
            .iter()
            .map(|s| if s.contains(label) { 1.0 } else { 0.0 })
            .collect())
    }

    /// Parses the focal-family text format:
    ///
    /// ```text
    /// level=fine size=6
    /// 0
    /// 1
    /// 2 3
    /// ```
    ///
    /// A trailing `partial` token on the header skips the singleton check.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing `level=... size=...` header"))?;
        let mut level = None;
        let mut size = None;
        let mut partial = false;
        for tok in header.split_whitespace() {
            if let Some(v) = tok.strip_prefix("level=") {
                level = Some(v.parse::<Level>().map_err(|e| parse_err(hline, e.to_string()))?);
            } else if let Some(v) = tok.strip_prefix("size=") {
                size = Some(
                    v.parse::<usize>()
                        .map_err(|_| parse_err(hline, format!("bad size `{v}`")))?,
                );
            } else if tok == "partial" {
                partial = true;
            } else {
                return Err(parse_err(hline, format!("unexpected header token `{tok}`")));
            }
        }
        let level = level.ok_or_else(|| parse_err(hline, "header lacks level="))?;
        let size = size.ok_or_else(|| parse_err(hline, "header lacks size="))?;
        let space = LabelSpace::new(level, size).map_err(|e| parse_err(hline, e.to_string()))?;
        let mut sets = Vec::new();
        for (line_no, line) in lines {
            let mut members = Vec::new();
            for tok in line.split_whitespace() {
                let v: usize = tok
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad label `{tok}`")))?;
                if v >= size {
                    return Err(parse_err(line_no, format!("label {v} out of range for size {size}")));
                }
                if members.last().is_some_and(|&prev| prev >= v) {
                    return Err(parse_err(line_no, "labels must be strictly ascending"));
                }
                members.push(v);
            }
            sets.push(FocalSet::from_indices(size, members).expect("range checked"));
        }
        if partial {
            Self::partial(space, sets)
        } else {
            Self::new(space, sets)
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("level={} size={}", self.space.level(), self.space.size());
        if self.partial {
            out.push_str(" partial");
        }
        out.push('\n');
        for s in &self.sets {
            let members: Vec<String> = s.iter().map(|m| m.to_string()).collect();
            out.push_str(&members.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(logit: f64) -> Result<f64> {
    if !logit.is_finite() {
        return Err(Error::Domain(format!("sigmoid of non-finite value {logit}")));
    }
    Ok(logistic(logit))
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_len(values: &[f64], fam: &FocalFamily, what: &str) -> Result<()> {
    if values.len() != fam.len() {
        return Err(Error::Shape(format!(
            "{what} has {} entries, family has {} sets",
            values.len(),
            fam.len()
        )));
    }
    Ok(())
}

/// Restricted Möbius inversion `m(A) = Σ_{B ⊆ A, B ∈ family} (-1)^{|A|-|B|} Bel(B)`.
pub fn belief_to_mass(beliefs: &[f64], fam: &FocalFamily) -> Result<Vec<f64>> {
    check_len(beliefs, fam, "belief vector")?;
    let mut masses = vec![0.0; fam.len()];
    for p in &fam.subset_pairs {
        masses[p.superset] += p.sign * beliefs[p.subset];
    }
    Ok(masses)
}

/// Pulls a gradient with respect to masses back to beliefs (transpose of
/// the Möbius matrix).
pub fn mass_grad_to_belief_grad(mass_grad: &[f64], fam: &FocalFamily) -> Result<Vec<f64>> {
    check_len(mass_grad, fam, "mass gradient")?;
    let mut out = vec![0.0; fam.len()];
    for p in &fam.subset_pairs {
        out[p.subset] += p.sign * mass_grad[p.superset];
    }
    Ok(out)
}

/// Mass left for Ω: `max(0, 1 - Σ m)`, or 0 when Ω is itself a family member.
pub fn omega_remainder(masses: &[f64], fam: &FocalFamily) -> f64 {
    if fam.contains_omega() {
        return 0.0;
    }
    (1.0 - masses.iter().sum::<f64>()).max(0.0)
}

/// `Σ max(0, -m(A))`.
pub fn mass_penalty(masses: &[f64]) -> f64 {
    masses.iter().map(|&m| (-m).max(0.0)).sum()
}

pub fn mass_penalty_grad(masses: &[f64]) -> Vec<f64> {
    masses.iter().map(|&m| if m < 0.0 { -1.0 } else { 0.0 }).collect()
}

/// `max(0, Σ m - 1)`.
pub fn sum_penalty(masses: &[f64]) -> f64 {
    (masses.iter().sum::<f64>() - 1.0).max(0.0)
}

/// Subgradient of [`sum_penalty`]; zero at Σ m = 1.
pub fn sum_penalty_grad(masses: &[f64]) -> Vec<f64> {
    let g = if masses.iter().sum::<f64>() > 1.0 { 1.0 } else { 0.0 };
    vec![g; masses.len()]
}

/// Pignistic transform. Negative masses are clamped to zero, Ω's mass is
/// spread uniformly, and the result is renormalised to sum to one (uniform if
/// no mass is left at all).
pub fn pignistic(masses: &[f64], omega_mass: f64, fam: &FocalFamily) -> Result<Vec<f64>> {
    check_len(masses, fam, "mass vector")?;
    let n = fam.space().size();
    let omega_share = omega_mass.max(0.0) / n as f64;
    let mut betp = vec![omega_share; n];
    for (set, &m) in fam.sets().iter().zip(masses) {
        let m = m.max(0.0);
        if m == 0.0 {
            continue;
        }
        let share = m / set.len() as f64;
        for y in set.iter() {
            betp[y] += share;
        }
    }
    let total: f64 = betp.iter().sum();
    if total > 0.0 && total.is_finite() {
        betp.iter_mut().for_each(|p| *p /= total);
    } else {
        betp.iter_mut().for_each(|p| *p = 1.0 / n as f64);
    }
    Ok(betp)
}

/// Beliefs, masses, Ω mass and pignistic probabilities for one sample at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    pub beliefs: Vec<f64>,
    pub masses: Vec<f64>,
    pub omega_mass: f64,
    pub pignistic: Vec<f64>,
}

impl BeliefState {
    pub fn from_beliefs(beliefs: Vec<f64>, fam: &FocalFamily) -> Result<Self> {
        let masses = belief_to_mass(&beliefs, fam)?;
        let omega_mass = omega_remainder(&masses, fam);
        let pignistic = pignistic(&masses, omega_mass, fam)?;
        Ok(Self {
            beliefs,
            masses,
            omega_mass,
            pignistic,
        })
    }

    pub fn from_logits(logits: &[f64], fam: &FocalFamily) -> Result<Self> {
        let beliefs = logits.iter().map(|&l| sigmoid(l)).collect::<Result<Vec<_>>>()?;
        Self::from_beliefs(beliefs, fam)
    }
}

fn check_batch(logits: &[Vec<f64>], labels: &[usize], fam: &FocalFamily) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::EmptyInput("focal BCE over an empty batch".into()));
    }
    if logits.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} logit rows but {} labels",
            logits.len(),
            labels.len()
        )));
    }
    for row in logits {
        check_len(row, fam, "logit row")?;
    }
    for &y in labels {
        fam.space().check_label(y)?;
    }
    Ok(())
}

/// Binary cross-entropy between `σ(logit_A)` and `1{y ∈ A}`, averaged over
/// sets and then over samples.
pub fn focal_bce(logits: &[Vec<f64>], labels: &[usize], fam: &FocalFamily) -> Result<f64> {
    check_batch(logits, labels, fam)?;
    let mut total = 0.0;
    for (row, &y) in logits.iter().zip(labels) {
        let mut sample = 0.0;
        for (set, &z) in fam.sets().iter().zip(row) {
            let p = logistic(z).clamp(BCE_EPS, 1.0 - BCE_EPS);
            sample -= if set.contains(y) { p.ln() } else { (1.0 - p).ln() };
        }
        total += sample / fam.len() as f64;
    }
    Ok(total / logits.len() as f64)
}

/// `∂L/∂logit = (σ(logit) - target) / (N · |family|)`.
pub fn focal_bce_grad(logits: &[Vec<f64>], labels: &[usize], fam: &FocalFamily) -> Result<Vec<Vec<f64>>> {
    check_batch(logits, labels, fam)?;
    let scale = 1.0 / (logits.len() * fam.len()) as f64;
    Ok(logits
        .iter()
        .zip(labels)
        .map(|(row, &y)| {
            fam.sets()
                .iter()
                .zip(row)
                .map(|(set, &z)| {
                    let t = if set.contains(y) { 1.0 } else { 0.0 };
                    (logistic(z) - t) * scale
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(n: usize) -> LabelSpace {
        LabelSpace::new(Level::Fine, n).unwrap()
    }

    fn set(n: usize, m: &[usize]) -> FocalSet {
        FocalSet::from_indices(n, m.iter().copied()).unwrap()
    }

    #[test]
    fn bitset_basics_beyond_one_word() {
        let mut s = FocalSet::empty(130);
        s.insert(3);
        s.insert(64);
        s.insert(129);
        assert_eq!(s.to_vec(), vec![3, 64, 129]);
        assert_eq!(s.len(), 3);
        let t = set(130, &[3, 64, 100, 129]);
        assert!(s.is_subset_of(&t));
        assert!(!t.is_subset_of(&s));
        assert_eq!(s.intersection_len(&t), 3);
        assert!(FocalSet::full(130).is_full());
    }

    #[test]
    fn family_precomputes_signed_subset_pairs() {
        let fam = FocalFamily::new(space(2), vec![set(2, &[0]), set(2, &[1]), set(2, &[0, 1])]).unwrap();
        assert!(fam.contains_omega());
        let mut pairs: Vec<(usize, usize, f64)> = fam
            .subset_pairs()
            .iter()
            .map(|p| (p.superset, p.subset, p.sign))
            .collect();
        pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(
            pairs,
            vec![(0, 0, 1.0), (1, 1, 1.0), (2, 0, -1.0), (2, 1, -1.0), (2, 2, 1.0)]
        );
    }

    #[test]
    fn family_rejects_missing_singletons_and_duplicates() {
        assert!(FocalFamily::new(space(3), vec![set(3, &[0]), set(3, &[1])]).is_err());
        assert!(FocalFamily::partial(space(3), vec![set(3, &[0]), set(3, &[0])]).is_err());
        assert!(FocalFamily::partial(space(3), vec![FocalSet::empty(3)]).is_err());
        assert!(FocalFamily::partial(space(3), vec![set(3, &[0]), set(3, &[0, 1])]).is_ok());
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(0.0).unwrap(), 0.5);
        let s = sigmoid(50.0).unwrap();
        assert!((1.0 - s).abs() < 1e-15);
        assert!(sigmoid(-800.0).unwrap() >= 0.0);
        assert!((sigmoid(-(3f64.ln())).unwrap() - 0.25).abs() < 1e-15);
        assert!(sigmoid(f64::NAN).is_err());
        assert!(sigmoid(f64::INFINITY).is_err());
    }

    #[test]
    fn mobius_hand_example() {
        let fam = FocalFamily::new(space(2), vec![set(2, &[0]), set(2, &[1]), set(2, &[0, 1])]).unwrap();
        let m = belief_to_mass(&[0.3, 0.2, 1.0], &fam).unwrap();
        for (a, b) in m.iter().zip([0.3, 0.2, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(matches!(belief_to_mass(&[0.3], &fam), Err(Error::Shape(_))));
    }

    #[test]
    fn mobius_on_singletons_is_identity() {
        let fam = FocalFamily::singletons(space(5));
        let bel = [0.1, 0.9, 0.4, 0.0, 0.33];
        assert_eq!(belief_to_mass(&bel, &fam).unwrap(), bel.to_vec());
    }

    #[test]
    fn omega_remainder_examples() {
        let fam = FocalFamily::singletons(space(3));
        assert!((omega_remainder(&[0.5, 0.2, 0.1], &fam) - 0.2).abs() < 1e-15);
        assert_eq!(omega_remainder(&[0.5, 0.5, 0.1], &fam), 0.0);
        assert!((omega_remainder(&[0.6, 0.2, 0.0], &fam) - 0.2).abs() < 1e-15);
        let with_omega = FocalFamily::new(space(2), vec![set(2, &[0]), set(2, &[1]), set(2, &[0, 1])]).unwrap();
        assert_eq!(omega_remainder(&[0.1, 0.1, 0.1], &with_omega), 0.0);
    }

    #[test]
    fn penalties() {
        assert_eq!(mass_penalty(&[0.1, 0.0, 0.7]), 0.0);
        assert!((mass_penalty(&[-0.1, 0.3, -0.2]) - 0.3).abs() < 1e-15);
        assert_eq!(mass_penalty_grad(&[-0.1, 0.3, 0.0]), vec![-1.0, 0.0, 0.0]);
        assert_eq!(sum_penalty(&[0.5, 0.4]), 0.0);
        assert!((sum_penalty(&[0.75, 0.5]) - 0.25).abs() < 1e-15);
        assert_eq!(sum_penalty_grad(&[0.5, 0.5]), vec![0.0, 0.0]);
        assert_eq!(sum_penalty_grad(&[0.75, 0.5]), vec![1.0, 1.0]);
    }

    #[test]
    fn pignistic_examples() {
        let fam = FocalFamily::new(space(2), vec![set(2, &[0]), set(2, &[1]), set(2, &[0, 1])]).unwrap();
        let p = pignistic(&[0.5, 0.0, 0.5], 0.0, &fam).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15);

        let fam4 = FocalFamily::singletons(space(4));
        let p = pignistic(&[0.0; 4], 1.0, &fam4).unwrap();
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        let p = pignistic(&[0.0; 4], 0.0, &fam4).unwrap();
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        let p = pignistic(&[0.0, 1.0, 0.0, 0.0], 0.0, &fam4).unwrap();
        assert_eq!(p, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn pignistic_clamps_negative_mass() {
        let fam = FocalFamily::new(
            space(3),
            vec![set(3, &[0]), set(3, &[1]), set(3, &[2]), set(3, &[0, 1])],
        )
        .unwrap();
        let raw = [0.4, -0.1, 0.2, 0.3];
        let got = pignistic(&raw, 0.2, &fam).unwrap();
        // explicit clamp-then-renormalise oracle
        let clamped = [0.4, 0.0, 0.2, 0.3];
        let mut expect = [0.2 / 3.0; 3];
        expect[0] += clamped[0] + clamped[3] / 2.0;
        expect[1] += clamped[1] + clamped[3] / 2.0;
        expect[2] += clamped[2];
        let tot: f64 = expect.iter().sum();
        for (g, e) in got.iter().zip(expect) {
            assert!((g - e / tot).abs() < 1e-15);
        }
    }

    #[test]
    fn bce_examples() {
        let fam = FocalFamily::new(space(2), vec![set(2, &[0]), set(2, &[1]), set(2, &[0, 1])]).unwrap();
        let perfect = vec![vec![40.0, -40.0, 40.0], vec![-40.0, 40.0, 40.0]];
        assert!(focal_bce(&perfect, &[0, 1], &fam).unwrap() <= 1e-6);

        let zero = vec![vec![0.0; 3]; 2];
        assert!((focal_bce(&zero, &[0, 1], &fam).unwrap() - 2f64.ln()).abs() < 1e-15);

        let g = focal_bce_grad(&zero, &[0, 1], &fam).unwrap();
        assert!((g[0][0] + 0.5 / 6.0).abs() < 1e-15);
        assert!((g[0][1] - 0.5 / 6.0).abs() < 1e-15);

        assert!(matches!(focal_bce(&zero, &[0, 2], &fam), Err(Error::InvalidLabel(_))));
        assert!(matches!(focal_bce(&[], &[], &fam), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn bce_matches_scalar_oracle() {
        let fam = FocalFamily::new(space(2), vec![set(2, &[0]), set(2, &[1]), set(2, &[0, 1])]).unwrap();
        let logits = vec![vec![0.3, -1.2, 2.0], vec![-0.7, 0.1, 1.5]];
        let labels = [1usize, 0];
        let targets = [[0.0, 1.0, 1.0], [1.0, 0.0, 1.0]];
        let mut acc = 0.0;
        for i in 0..2 {
            for a in 0..3 {
                let p = 1.0 / (1.0 + (-logits[i][a] as f64).exp());
                let t = targets[i][a];
                acc += -(t * p.ln() + (1.0 - t) * (1.0 - p).ln());
            }
        }
        let oracle = acc / 6.0;
        assert!((focal_bce(&logits, &labels, &fam).unwrap() - oracle).abs() < 1e-14);
    }

    #[test]
    fn family_file_roundtrip_and_errors() {
        let fam = FocalFamily::canonical(space(4), vec![set(4, &[2, 3]), set(4, &[0, 1, 2])]).unwrap();
        let text = fam.to_text();
        assert_eq!(text, "level=fine size=4\n0\n1\n2\n3\n2 3\n0 1 2\n");
        assert_eq!(FocalFamily::parse(&text).unwrap(), fam);

        assert!(matches!(
            FocalFamily::parse("level=fine size=3\n0\n1\n"),
            Err(Error::Config(_))
        ));
        assert_eq!(
            FocalFamily::parse("level=fine size=3\n0\n1\n2 1\n").unwrap_err(),
            Error::Parse {
                line: 4,
                msg: "labels must be strictly ascending".into()
            }
        );
        assert!(FocalFamily::parse("size=3\n0\n").is_err());
        let partial = FocalFamily::parse("level=coarse size=3 partial\n0\n0 1\n").unwrap();
        assert!(partial.is_partial());
        assert_eq!(partial.len(), 2);
    }
}
