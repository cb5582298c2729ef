//! Two-level label hierarchy.
//!
//! Labels are dense 0-based indices. A [`Hierarchy`] stores the total map from
//! fine labels to their coarse parent; the same map is used to lift focal sets
//! (`project_set`) and to decode singleton predictions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::belief::FocalSet;
use crate::error::{parse_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Fine,
    Coarse,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Fine => f.write_str("fine"),
            Level::Coarse => f.write_str("coarse"),
        }
    }
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fine" => Ok(Level::Fine),
            "coarse" => Ok(Level::Coarse),
            other => Err(Error::Config(format!("unknown level `{other}`"))),
        }
    }
}

/// One level of labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpace {
    level: Level,
    size: usize,
    names: Option<Vec<String>>,
}

impl LabelSpace {
    pub fn new(level: Level, size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::Config(format!(
                "{level} label space needs at least 2 labels, got {size}"
            )));
        }
        Ok(Self {
            level,
            size,
            names: None,
        })
    }

    pub fn with_names(level: Level, names: Vec<String>) -> Result<Self> {
        let mut space = Self::new(level, names.len())?;
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::Config(format!("duplicate {level} label name `{n}`")));
            }
        }
        space.names = Some(names);
        Ok(space)
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Human-readable name, falling back to the index.
    pub fn name(&self, index: usize) -> String {
        match &self.names {
            Some(names) if index < names.len() => names[index].clone(),
            _ => index.to_string(),
        }
    }

    pub fn check_label(&self, index: usize) -> Result<()> {
        if index < self.size {
            Ok(())
        } else {
            Err(Error::InvalidLabel(format!(
                "{} label {index} out of range for size {}",
                self.level, self.size
            )))
        }
    }
}

/// A violated hierarchy invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    ParentOutOfRange { fine: usize },
    Childless { coarse: usize },
    ParentMapLength { expected: usize, found: usize },
    SpaceTooSmall { level: Level, size: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ParentOutOfRange { fine } => write!(f, "fine {fine} parent out of range"),
            Violation::Childless { coarse } => write!(f, "coarse {coarse} childless"),
            Violation::ParentMapLength { expected, found } => {
                write!(f, "parent map has {found} entries, expected {expected}")
            }
            Violation::SpaceTooSmall { level, size } => {
                write!(f, "{level} space has {size} labels, needs at least 2")
            }
        }
    }
}

/// Checks the hierarchy invariants on raw parts. An empty result means the
/// parts form a valid [`Hierarchy`].
pub fn validate_hierarchy(fine_size: usize, coarse_size: usize, parent: &[usize]) -> Vec<Violation> {
    let mut out = Vec::new();
    if fine_size < 2 {
        out.push(Violation::SpaceTooSmall {
            level: Level::Fine,
            size: fine_size,
        });
    }
    if coarse_size < 2 {
        out.push(Violation::SpaceTooSmall {
            level: Level::Coarse,
            size: coarse_size,
        });
    }
    if parent.len() != fine_size {
        out.push(Violation::ParentMapLength {
            expected: fine_size,
            found: parent.len(),
        });
    }
    let mut children = vec![0usize; coarse_size];
    for (fine, &p) in parent.iter().enumerate() {
        if p >= coarse_size {
            out.push(Violation::ParentOutOfRange { fine });
        } else {
            children[p] += 1;
        }
    }
    for (coarse, &n) in children.iter().enumerate() {
        if n == 0 {
            out.push(Violation::Childless { coarse });
        }
    }
    out
}

/// Fine and coarse label spaces linked by a total parent map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hierarchy {
    fine: LabelSpace,
    coarse: LabelSpace,
    parent: Vec<usize>,
}

impl Hierarchy {
    pub fn new(fine: LabelSpace, coarse: LabelSpace, parent: Vec<usize>) -> Result<Self> {
        if fine.level != Level::Fine || coarse.level != Level::Coarse {
            return Err(Error::Config("hierarchy spaces must be (fine, coarse)".into()));
        }
        let violations = validate_hierarchy(fine.size, coarse.size, &parent);
        if !violations.is_empty() {
            let msgs: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(Error::Config(format!("invalid hierarchy: {}", msgs.join("; "))));
        }
        Ok(Self {
            fine,
            coarse,
            parent,
        })
    }

    /// Unnamed hierarchy from a parent map; the coarse size is `max(parent) + 1`.
    pub fn from_parents(parent: Vec<usize>) -> Result<Self> {
        let n_coarse = parent.iter().max().map_or(0, |m| m + 1);
        Self::new(
            LabelSpace::new(Level::Fine, parent.len())?,
            LabelSpace::new(Level::Coarse, n_coarse)?,
            parent,
        )
    }

    /// Re-checks the invariants. Always empty for a constructed value.
    pub fn validate(&self) -> Vec<Violation> {
        validate_hierarchy(self.fine.size, self.coarse.size, &self.parent)
    }

    pub fn fine(&self) -> &LabelSpace {
        &self.fine
    }

    pub fn coarse(&self) -> &LabelSpace {
        &self.coarse
    }

    pub fn parents(&self) -> &[usize] {
        &self.parent
    }

    /// π(y), also used as g(y) when decoding.
    pub fn parent(&self, fine: usize) -> Result<usize> {
        self.fine.check_label(fine)?;
        Ok(self.parent[fine])
    }

    pub fn children(&self, coarse: usize) -> Vec<usize> {
        (0..self.fine.size).filter(|&f| self.parent[f] == coarse).collect()
    }

    /// Π(A) = {π(y) : y ∈ A}.
    pub fn project_set(&self, set: &FocalSet) -> Result<FocalSet> {
        if set.universe() != self.fine.size {
            return Err(Error::Shape(format!(
                "set over {} labels projected through a hierarchy with {} fine labels",
                set.universe(),
                self.fine.size
            )));
        }
        let mut out = FocalSet::empty(self.coarse.size);
        for y in set.iter() {
            out.insert(self.parent[y]);
        }
        Ok(out)
    }

    /// Parses the `fine_index,coarse_index[,fine_name,coarse_name]` format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut parents: BTreeMap<usize, usize> = BTreeMap::new();
        let mut fine_names: BTreeMap<usize, String> = BTreeMap::new();
        let mut coarse_names: BTreeMap<usize, String> = BTreeMap::new();
        let mut named_rows = 0usize;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 2 && fields.len() != 4 {
                return Err(parse_err(line_no, format!("expected 2 or 4 fields, found {}", fields.len())));
            }
            let fine: usize = fields[0]
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad fine index `{}`", fields[0])))?;
            let coarse: usize = fields[1]
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad coarse index `{}`", fields[1])))?;
            if parents.insert(fine, coarse).is_some() {
                return Err(parse_err(line_no, format!("duplicate fine index {fine}")));
            }
            if fields.len() == 4 {
                named_rows += 1;
                fine_names.insert(fine, fields[2].to_string());
                if let Some(prev) = coarse_names.get(&coarse) {
                    if prev != fields[3] {
                        return Err(parse_err(
                            line_no,
                            format!("coarse {coarse} named both `{prev}` and `{}`", fields[3]),
                        ));
                    }
                } else {
                    coarse_names.insert(coarse, fields[3].to_string());
                }
            }
        }
        let n_fine = parents.len();
        if let Some((&last, _)) = parents.iter().next_back() {
            if last + 1 != n_fine {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("fine indices are not dense 0..{n_fine}"),
                });
            }
        }
        let parent: Vec<usize> = parents.into_values().collect();
        let n_coarse = parent.iter().max().map_or(0, |m| m + 1);
        let (fine, coarse) = if named_rows == 0 {
            (
                LabelSpace::new(Level::Fine, n_fine)?,
                LabelSpace::new(Level::Coarse, n_coarse)?,
            )
        } else {
            if named_rows != n_fine || coarse_names.len() != n_coarse {
                return Err(Error::Parse {
                    line: 0,
                    msg: "names must be given on every row or on none".into(),
                });
            }
            (
                LabelSpace::with_names(Level::Fine, fine_names.into_values().collect())?,
                LabelSpace::with_names(Level::Coarse, coarse_names.into_values().collect())?,
            )
        };
        Self::new(fine, coarse, parent)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# fine_index,coarse_index[,fine_name,coarse_name]\n");
        for (f, &c) in self.parent.iter().enumerate() {
            match (&self.fine.names, &self.coarse.names) {
                (Some(fnames), Some(cnames)) => {
                    out.push_str(&format!("{f},{c},{},{}\n", fnames[f], cnames[c]));
                }
                _ => out.push_str(&format!("{f},{c}\n")),
            }
        }
        out
    }
}
