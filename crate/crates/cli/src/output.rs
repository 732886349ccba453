//! Plain-text reports and trajectory CSV.

use std::fmt::{self, Write as _};

use nonholo_core::Trajectory;

#[derive(Debug, Clone, PartialEq)]
pub enum Line {
    /// An asserted check.
    Check { name: String, pass: bool, value: String },
    /// A reported value with no assertion attached.
    Info { name: String, value: String },
    Note(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub title: String,
    pub lines: Vec<Line>,
}

pub fn sci(v: f64) -> String {
    format!("{v:.6e}")
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Self { title: title.into(), lines: Vec::new() }
    }

    /// Asserts `value <= limit`. NaN fails.
    pub fn at_most(&mut self, name: &str, value: f64, limit: f64) {
        self.lines.push(Line::Check {
            name: name.into(),
            pass: value <= limit,
            value: format!("{} (limit {})", sci(value), sci(limit)),
        });
    }

    pub fn at_least(&mut self, name: &str, value: f64, limit: f64) {
        self.lines.push(Line::Check {
            name: name.into(),
            pass: value >= limit,
            value: format!("{} (limit {})", sci(value), sci(limit)),
        });
    }

    pub fn check(&mut self, name: &str, pass: bool, value: impl Into<String>) {
        self.lines.push(Line::Check { name: name.into(), pass, value: value.into() });
    }

    pub fn info(&mut self, name: &str, value: impl Into<String>) {
        self.lines.push(Line::Info { name: name.into(), value: value.into() });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.lines.push(Line::Note(text.into()));
    }

    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| !matches!(l, Line::Check { pass: false, .. }))
    }

    pub fn checks(&self) -> impl Iterator<Item = (&str, bool)> {
        self.lines.iter().filter_map(|l| match l {
            Line::Check { name, pass, .. } => Some((name.as_str(), *pass)),
            _ => None,
        })
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# {}", self.title)?;
        for line in &self.lines {
            match line {
                Line::Check { name, pass, value } => {
                    writeln!(f, "{}: {name}: {value}", if *pass { "PASS" } else { "FAIL" })?
                }
                Line::Info { name, value } => writeln!(f, "INFO: {name}: {value}")?,
                Line::Note(text) => writeln!(f, "NOTE: {text}")?,
            }
        }
        Ok(())
    }
}

/// Columns `t, x_1..x_n, y_1..y_r, E`, then `f_1..f_k` when integrals are
/// attached. Values carry 17 significant digits.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::new();
    let Some(first) = traj.states.first() else {
        return out;
    };
    let (n, r) = (first.x.len(), first.y.len());
    let k = traj.integrals.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=r).map(|i| format!("y_{i}")));
    header.push("E".into());
    header.extend((1..=k).map(|i| format!("f_{i}")));
    out.push_str(&header.join(","));
    out.push('\n');
    for (idx, s) in traj.states.iter().enumerate() {
        let mut row = vec![traj.times[idx]];
        row.extend(s.x.iter());
        row.extend(s.y.iter());
        row.push(traj.energy[idx]);
        if k > 0 {
            row.extend(&traj.integrals[idx]);
        }
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v:.16e}");
        }
        out.push('\n');
    }
    out
}
