use std::fmt;
use std::path::PathBuf;

use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    /// Every problem found in the configuration.
    Config(Vec<String>),
    /// Bad command line.
    Usage(String),
    /// A required input was not configured.
    MissingInput(String),
    Io { path: PathBuf, source: std::io::Error },
    Core(subtype_core::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        use subtype_core::Error as E;
        match self {
            CliError::Config(_) => "config",
            CliError::Usage(_) => "usage",
            CliError::MissingInput(_) => "missing_input",
            CliError::Io { .. } => "io",
            CliError::Core(e) => match e {
                E::Io { .. } => "io",
                E::Parse { .. } => "parse",
                E::Validation(_) => "validation",
                E::Shape { .. } => "shape",
                E::InvalidArgument(_) => "invalid_argument",
                E::Numerical(_) => "numerical",
                E::NonFiniteLoss { .. } => "non_finite_loss",
                E::Serde(_) => "serialization",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// Single-line JSON object for stderr.
    pub fn to_json_line(&self) -> String {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        if let CliError::Config(problems) = self {
            v["problems"] = json!(problems);
        }
        v.to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(p) => write!(f, "{} configuration problem(s): {}", p.len(), p.join("; ")),
            CliError::Usage(m) => f.write_str(m),
            CliError::MissingInput(m) => f.write_str(m),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<subtype_core::Error> for CliError {
    fn from(e: subtype_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(subtype_core::Error::Serde(e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_line_has_no_newlines() {
        let e = CliError::Config(vec!["a.b: bad\nvalue".into(), "c.d: unknown key".into()]);
        let line = e.to_json_line();
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["error"], "config");
        assert_eq!(v["problems"].as_array().unwrap().len(), 2);
    }
}
