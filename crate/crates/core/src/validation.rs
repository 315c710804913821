use std::fmt;

/// A single problem found while checking a model or an array.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Location of the offending field, e.g. `parameters.p_HS1` or
    /// `strategies[Strategy B].transitions[S1 -> S2, cycle 3]`.
    pub path: String,
    pub message: String,
}

/// Outcome of a validation pass. Empty means pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }

    /// Re-roots every violation of `other` under `prefix`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: ValidationReport) {
        for v in other.violations {
            self.violations.push(Violation {
                path: format!("{prefix}.{}", v.path),
                message: v.message,
            });
        }
    }

    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    /// True if any violation path or message contains `needle`.
    pub fn mentions(&self, needle: &str) -> bool {
        self.violations
            .iter()
            .any(|v| v.path.contains(needle) || v.message.contains(needle))
    }

    pub fn into_result<T>(self, ok: T) -> crate::Result<T> {
        if self.is_pass() {
            Ok(ok)
        } else {
            Err(crate::Error::InvalidSpec(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "pass");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  {}: {}", v.path, v.message)?;
        }
        Ok(())
    }
}
