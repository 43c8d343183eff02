//! Line-level lexing shared by both document parsers.
//!
//! The format is line-oriented and indentation-free: every significant
//! line is `key: value`, `#` starts a comment, blank lines separate
//! sections visually. See `docs/format.md`.

use super::diag::ParseDiagnostic;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyLine {
    /// 1-based source line.
    pub line: usize,
    /// 1-based column of the key.
    pub key_col: usize,
    /// 1-based column of the value (end-of-line column when empty).
    pub value_col: usize,
    pub key: String,
    pub value: String,
}

/// Splits a document into key/value lines, reporting malformed lines.
/// Never fails: bad lines become diagnostics and are skipped.
pub fn lex(text: &str, diags: &mut Vec<ParseDiagnostic>) -> Vec<KeyLine> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed_start = raw.trim_start();
        let key_col = raw.chars().count() - trimmed_start.chars().count() + 1;
        let content = match trimmed_start.find('#') {
            Some(pos) => &trimmed_start[..pos],
            None => trimmed_start,
        };
        let content = content.trim_end();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once(':') else {
            diags.push(ParseDiagnostic::error(
                line_no,
                key_col,
                format!("expected 'key: value', got {content:?}"),
            ));
            continue;
        };
        let key_trimmed = key.trim();
        if key_trimmed.is_empty() || key_trimmed != key {
            diags.push(ParseDiagnostic::error(
                line_no,
                key_col,
                "malformed key before ':'",
            ));
            continue;
        }
        let value_trimmed = value.trim();
        let value_col = key_col + key.chars().count() + 1 + leading_ws(value);
        lines.push(KeyLine {
            line: line_no,
            key_col,
            value_col,
            key: key_trimmed.to_string(),
            value: value_trimmed.to_string(),
        });
    }
    lines
}

fn leading_ws(s: &str) -> usize {
    s.chars().take_while(|c| c.is_whitespace()).count() + 1
}

/// Decodes document bytes, turning invalid UTF-8 into a located
/// diagnostic instead of a panic.
pub fn decode_utf8(bytes: &[u8]) -> Result<&str, ParseDiagnostic> {
    std::str::from_utf8(bytes).map_err(|e| {
        let prefix = &bytes[..e.valid_up_to()];
        let text = std::str::from_utf8(prefix).expect("valid prefix");
        let line = text.lines().count().max(1);
        let column = text.lines().last().map(|l| l.chars().count() + 1).unwrap_or(1);
        ParseDiagnostic::error(line, column, "document is not valid UTF-8")
    })
}

pub fn parse_u64(line: &KeyLine, what: &str, diags: &mut Vec<ParseDiagnostic>) -> Option<u64> {
    match line.value.parse::<u64>() {
        Ok(v) => Some(v),
        Err(_) => {
            diags.push(ParseDiagnostic::error(
                line.line,
                line.value_col,
                format!("{what} must be a non-negative integer, got {:?}", line.value),
            ));
            None
        }
    }
}

pub fn parse_i64_token(
    token: &str,
    line: usize,
    column: usize,
    what: &str,
    diags: &mut Vec<ParseDiagnostic>,
) -> Option<i64> {
    match token.parse::<i64>() {
        Ok(v) => Some(v),
        Err(_) => {
            diags.push(ParseDiagnostic::error(
                line,
                column,
                format!("{what} must be an integer, got {token:?}"),
            ));
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lex_basics() {
        let mut diags = Vec::new();
        let lines = lex("version: 1\n\n# comment\nname: x # trailing\nbroken line\n", &mut diags);
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].key, "version");
        assert_eq!(lines[0].value, "1");
        assert_eq!(lines[1].line, 4);
        assert_eq!(lines[1].value, "x");
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].line, 5);
    }

    #[test]
    fn decode_invalid_utf8_locates_error() {
        let bytes = b"version: 1\nname: \xff\xfe";
        let err = decode_utf8(bytes).unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.column >= 1);
    }
}
