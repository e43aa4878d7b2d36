//! Pass/fail reports shared by the hypothesis checks.

use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Measured or computed quantity, when the check has one.
    pub value: Option<f64>,
    /// The bound the value was compared against.
    pub bound: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        name: impl Into<String>,
        passed: bool,
        value: Option<f64>,
        bound: Option<f64>,
        detail: impl Into<String>,
    ) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            value,
            bound,
            detail: detail.into(),
        });
    }

    /// Informational line that never fails.
    pub fn note(&mut self, name: impl Into<String>, value: Option<f64>, detail: impl Into<String>) {
        self.push(name, true, value, None, detail);
    }

    pub fn extend(&mut self, prefix: &str, other: ValidationReport) {
        for mut c in other.checks {
            c.name = format!("{prefix}{}", c.name);
            self.checks.push(c);
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6e}"),
        None => "-".to_string(),
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
        writeln!(
            f,
            "{:<width$}  {:<6}  {:>13}  {:>13}  detail",
            "check", "status", "value", "bound"
        )?;
        for c in &self.checks {
            writeln!(
                f,
                "{:<width$}  {:<6}  {:>13}  {:>13}  {}",
                c.name,
                if c.passed { "ok" } else { "FAIL" },
                fmt_opt(c.value),
                fmt_opt(c.bound),
                c.detail
            )?;
        }
        write!(f, "overall: {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}
