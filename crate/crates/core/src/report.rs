//! Structured test reports.
//!
//! A [`TestReport`] serializes to deterministic JSON: rows keep insertion
//! order and nothing time-dependent is recorded.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One line of a report's statistic table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub label: String,
    /// Non-finite values serialize as `null` and read back as NaN.
    #[serde(deserialize_with = "nullable")]
    pub value: f64,
    #[serde(deserialize_with = "nullable")]
    pub threshold: f64,
    pub pass: bool,
}

fn nullable<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub scenario: String,
    pub test: String,
    pub verdict: Verdict,
    pub statistics: Vec<Statistic>,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl TestReport {
    /// An empty report; passes until a failing row is pushed.
    pub fn new(scenario: impl Into<String>, test: impl Into<String>) -> Self {
        Self {
            scenario: scenario.into(),
            test: test.into(),
            verdict: Verdict::Pass,
            statistics: Vec::new(),
            seeds: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Adds a row. `value <= threshold` passes, so thresholds are upper bounds.
    pub fn check(&mut self, label: impl Into<String>, value: f64, threshold: f64) -> bool {
        let pass = value <= threshold;
        self.push(label, value, threshold, pass);
        pass
    }

    /// Adds a row with an explicit outcome.
    pub fn push(&mut self, label: impl Into<String>, value: f64, threshold: f64, pass: bool) {
        if !pass {
            self.verdict = Verdict::Reject;
        }
        self.statistics.push(Statistic { label: label.into(), value, threshold, pass });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds.push(seed);
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Appends every row, seed and note of `other`, prefixing its labels.
    pub fn absorb(&mut self, other: TestReport) {
        for s in other.statistics {
            self.push(format!("{}/{}", other.test, s.label), s.value, s.threshold, s.pass);
        }
        for seed in other.seeds {
            if !self.seeds.contains(&seed) {
                self.seeds.push(seed);
            }
        }
        self.notes.extend(other.notes.into_iter().map(|n| format!("{}: {n}", other.test)));
    }

    /// The first failing row, else the row with the largest value relative
    /// to its threshold.
    pub fn worst(&self) -> Option<&Statistic> {
        if let Some(s) = self.statistics.iter().find(|s| !s.pass) {
            return Some(s);
        }
        self.statistics.iter().max_by(|a, b| {
            let r = |s: &Statistic| if s.threshold > 0.0 { s.value / s.threshold } else { s.value };
            r(a).total_cmp(&r(b))
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| crate::Error::Io(e.to_string()))
    }
}

impl fmt::Display for TestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}:{}", self.scenario, self.test)?;
        if let Some(w) = self.worst() {
            write!(f, " (worst {} = {:.4} vs {:.4})", w.label, w.value, w.threshold)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_tracks_rows() {
        let mut r = TestReport::new("s", "t");
        assert!(r.passed());
        assert!(r.check("a", 1.0, 2.0));
        assert!(r.passed());
        assert!(!r.check("b", 3.0, 2.0));
        assert!(!r.passed());
        assert_eq!(r.worst().unwrap().label, "b");
    }

    #[test]
    fn nan_never_passes() {
        let mut r = TestReport::new("s", "t");
        assert!(!r.check("nan", f64::NAN, 1.0));
    }

    #[test]
    fn json_is_deterministic_and_roundtrips() {
        let mut r = TestReport::new("brownian", "ecf").with_seed(7);
        r.check("max", 0.5, 3.0);
        r.note("n = 10");
        let a = r.to_json().unwrap();
        assert_eq!(a, r.clone().to_json().unwrap());
        let back: TestReport = serde_json::from_str(&a).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn absorb_prefixes_and_propagates() {
        let mut all = TestReport::new("s", "all");
        let mut part = TestReport::new("s", "part").with_seed(3);
        part.check("x", 5.0, 1.0);
        all.absorb(part);
        assert!(!all.passed());
        assert_eq!(all.statistics[0].label, "part/x");
        assert_eq!(all.seeds, vec![3]);
    }
}
