//! Named residual checks with tolerances, rendered one per line.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Ordered checks plus free-form `info` lines. Names are unique.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub title: String,
    pub checks: Vec<Check>,
    pub info: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(title: &str) -> Self {
        Report {
            title: title.to_string(),
            ..Default::default()
        }
    }

    fn push(&mut self, name: &str, value: f64, tol: f64, pass: bool) -> &mut Self {
        assert!(
            self.check_named(name).is_none(),
            "duplicate check name {name}"
        );
        self.checks.push(Check {
            name: name.to_string(),
            value,
            tol,
            pass,
        });
        self
    }

    /// Passes when `value <= tol`; NaN fails.
    pub fn check(&mut self, name: &str, value: f64, tol: f64) -> &mut Self {
        self.push(name, value, tol, value <= tol)
    }

    /// Passes when `|value - target| <= tol`; the recorded value is the gap.
    pub fn check_near(&mut self, name: &str, value: f64, target: f64, tol: f64) -> &mut Self {
        let gap = (value - target).abs();
        self.push(name, gap, tol, gap <= tol)
    }

    /// Records 0 for true and 1 for false against tolerance 0.
    pub fn check_flag(&mut self, name: &str, ok: bool) -> &mut Self {
        self.push(name, if ok { 0.0 } else { 1.0 }, 0.0, ok)
    }

    pub fn info(&mut self, key: &str, value: impl fmt::Display) -> &mut Self {
        self.info.push((key.to_string(), value.to_string()));
        self
    }

    pub fn warn(&mut self, msg: impl Into<String>) -> &mut Self {
        self.warnings.push(msg.into());
        self
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    /// Appends another report's lines with names prefixed by `prefix.`.
    pub fn absorb(&mut self, prefix: &str, other: Report) {
        for c in other.checks {
            self.push(&format!("{prefix}.{}", c.name), c.value, c.tol, c.pass);
        }
        for (k, v) in other.info {
            self.info.push((format!("{prefix}.{k}"), v));
        }
        for w in other.warnings {
            self.warnings.push(format!("{prefix}: {w}"));
        }
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# hslag report: {}", self.title)?;
        for (k, v) in &self.info {
            writeln!(f, "info = {k}, {v}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning = {w}")?;
        }
        for c in &self.checks {
            writeln!(
                f,
                "check = {}, {:.16e}, {:.16e}, {}",
                c.name,
                c.value,
                c.tol,
                if c.pass { "pass" } else { "fail" }
            )?;
        }
        writeln!(f, "result = {}", if self.passed() { "pass" } else { "fail" })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render() {
        let mut r = Report::new("t");
        r.check("a", 0.25, 0.5).check("b", f64::NAN, 1.0).check_near("c", 4.1, 4.0, 0.5);
        let s = r.to_string();
        assert!(s.contains("check = a, 2.5000000000000000e-1, 5.0000000000000000e-1, pass"));
        assert!(s.contains("check = b, NaN"));
        assert!(s.ends_with("result = fail\n"));
        assert_eq!(r.failures().len(), 1);
    }

    #[test]
    #[should_panic]
    fn duplicate_names_panic() {
        let mut r = Report::new("t");
        r.check("a", 0.0, 1.0).check("a", 0.0, 1.0);
    }
}
