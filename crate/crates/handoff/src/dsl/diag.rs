//! Located parse diagnostics for `.machine` and `.scenario` documents.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagSeverity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseDiagnostic {
    /// 1-based line number within the source document.
    pub line: usize,
    /// 1-based column number.
    pub column: usize,
    pub severity: DiagSeverity,
    pub message: String,
}

impl ParseDiagnostic {
    pub fn error(line: usize, column: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            column,
            severity: DiagSeverity::Error,
            message: message.into(),
        }
    }

    pub fn warning(line: usize, column: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            column,
            severity: DiagSeverity::Warning,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            DiagSeverity::Error => "error",
            DiagSeverity::Warning => "warning",
        };
        write!(f, "{}:{}: {tag}: {}", self.line, self.column, self.message)
    }
}

pub fn has_error_diags(diags: &[ParseDiagnostic]) -> bool {
    diags.iter().any(|d| d.severity == DiagSeverity::Error)
}
