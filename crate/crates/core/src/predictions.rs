//! The belief prediction file exchanged between `train` and `eval`.
//!
//! ```text
//! n=2 f=3 c=2
//! 0 0 | 0.9 0.1 0.95 | 0.97 0.2
//! 1 0 | 0.2 0.8 0.9 | 0.9 0.1
//! ```
//!
//! Each row carries the true fine and coarse labels, then the sigmoid belief
//! of every fine focal set, then every coarse focal set.

use crate::error::{parse_err, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub true_fine: usize,
    pub true_coarse: usize,
    pub fine_beliefs: Vec<f64>,
    pub coarse_beliefs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub n_fine_sets: usize,
    pub n_coarse_sets: usize,
    pub records: Vec<PredictionRecord>,
}

fn parse_beliefs(part: &str, expected: usize, line: usize, what: &str) -> Result<Vec<f64>> {
    let vals: Vec<f64> = part
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| (0.0..=1.0).contains(v))
                .ok_or_else(|| parse_err(line, format!("bad {what} belief `{t}`")))
        })
        .collect::<Result<_>>()?;
    if vals.len() != expected {
        return Err(parse_err(
            line,
            format!("expected {expected} {what} beliefs, found {}", vals.len()),
        ));
    }
    Ok(vals)
}

impl Predictions {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing `n=... f=... c=...` header"))?;
        let (mut n, mut f, mut c) = (None, None, None);
        for tok in header.split_whitespace() {
            let (key, val) = tok
                .split_once('=')
                .ok_or_else(|| parse_err(hline, format!("unexpected header token `{tok}`")))?;
            let v: usize = val
                .parse()
                .map_err(|_| parse_err(hline, format!("bad header value `{val}`")))?;
            match key {
                "n" => n = Some(v),
                "f" => f = Some(v),
                "c" => c = Some(v),
                _ => return Err(parse_err(hline, format!("unknown header key `{key}`"))),
            }
        }
        let (n, f, c) = match (n, f, c) {
            (Some(n), Some(f), Some(c)) => (n, f, c),
            _ => return Err(parse_err(hline, "header needs n=, f= and c=")),
        };
        let mut records = Vec::with_capacity(n);
        for (line_no, line) in lines {
            let parts: Vec<&str> = line.split('|').collect();
            if parts.len() != 3 {
                return Err(parse_err(line_no, "expected `labels | fine beliefs | coarse beliefs`"));
            }
            let labels: Vec<usize> = parts[0]
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| parse_err(line_no, format!("bad label `{t}`"))))
                .collect::<Result<_>>()?;
            if labels.len() != 2 {
                return Err(parse_err(line_no, "expected `true_fine true_coarse`"));
            }
            records.push(PredictionRecord {
                true_fine: labels[0],
                true_coarse: labels[1],
                fine_beliefs: parse_beliefs(parts[1], f, line_no, "fine")?,
                coarse_beliefs: parse_beliefs(parts[2], c, line_no, "coarse")?,
            });
        }
        if records.len() != n {
            return Err(parse_err(hline, format!("header says {n} samples, file has {}", records.len())));
        }
        Ok(Self {
            n_fine_sets: f,
            n_coarse_sets: c,
            records,
        })
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
        let mut out = format!(
            "n={} f={} c={}\n",
            self.records.len(),
            self.n_fine_sets,
            self.n_coarse_sets
        );
        for r in &self.records {
            out.push_str(&format!(
                "{} {} | {} | {}\n",
                r.true_fine,
                r.true_coarse,
                join(&r.fine_beliefs),
                join(&r.coarse_beliefs)
            ));
        }
        out
    }
}
