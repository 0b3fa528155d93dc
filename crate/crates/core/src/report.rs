//! Machine-readable outcomes of inequality and hypothesis checks.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
    NotApplicable,
    ExponentDivergent,
}

impl Verdict {
    pub fn is_fail(&self) -> bool {
        matches!(self, Verdict::Fail)
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
            Verdict::NotApplicable => "not_applicable",
            Verdict::ExponentDivergent => "exponent_divergent",
        };
        f.write_str(s)
    }
}

/// Outcome of a single check: the two sides of the inequality, the slack
/// `rhs - lhs`, the statistical tolerance that was applied and the verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictReport {
    pub check_id: String,
    pub description: String,
    pub inputs: serde_json::Value,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub se: f64,
    pub verdict: Verdict,
}

impl VerdictReport {
    pub fn new(
        check_id: impl Into<String>,
        description: impl Into<String>,
        inputs: serde_json::Value,
        lhs: f64,
        rhs: f64,
        se: f64,
        verdict: Verdict,
    ) -> VerdictReport {
        VerdictReport {
            check_id: check_id.into(),
            description: description.into(),
            inputs,
            lhs,
            rhs,
            slack: rhs - lhs,
            se,
            verdict,
        }
    }

    /// One CSV row: `check_id,lhs,rhs,slack,se,verdict`.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{}",
            self.check_id, self.lhs, self.rhs, self.slack, self.se, self.verdict
        )
    }
}
