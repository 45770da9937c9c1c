//! Scenario files: TOML in, validated `ScenarioConfig` out.

use std::fmt;
use std::path::Path;

use cpsbed_core::scenario::ScenarioConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io(String),
    /// Malformed text, an unknown key or a wrongly typed value.
    Parse {
        line: Option<usize>,
        path: String,
        message: String,
    },
    /// Semantic problems, all of them.
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "cannot read scenario: {}", e),
            ConfigError::Parse { line, path, message } => {
                write!(f, "parse error")?;
                if let Some(l) = line {
                    write!(f, " at line {}", l)?;
                }
                if !path.is_empty() && path != "." {
                    write!(f, " in `{}`", path)?;
                }
                write!(f, ": {}", message)
            }
            ConfigError::Invalid(errs) => {
                write!(f, "{} configuration error(s):", errs.len())?;
                for e in errs {
                    write!(f, "\n  - {}", e)?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

/// Parse without semantic validation.
pub fn parse_unchecked(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Parse {
        line: e.span().map(|s| line_of(text, s.start)),
        path: String::new(),
        message: e.message().to_string(),
    })?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ConfigError::Parse {
            line: inner.span().map(|s| line_of(text, s.start)),
            path,
            message: inner.message().to_string(),
        }
    })
}

pub fn parse_str(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let cfg = parse_unchecked(text)?;
    cfg.validate().map_err(ConfigError::Invalid)?;
    Ok(cfg)
}

pub fn parse_scenario(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {}", path.display(), e)))?;
    parse_str(&text)
}

pub fn emit(cfg: &ScenarioConfig) -> String {
    toml::to_string(cfg).expect("scenario configs always serialize")
}
