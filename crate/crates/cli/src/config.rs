use crate::error::CliError;
use qseq::bench::RunConfig;
use qseq::models::ModelKind;
use serde_path_to_error::{Path as FieldPath, Segment};
use std::path::{Path, PathBuf};

pub const OUT_DIR_ENV: &str = "QSEQ_OUT_DIR";

/// Renders a deserialization path as a JSON pointer (`/train/lr`).
fn pointer(path: &FieldPath) -> String {
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        CliError::usage(format!(
            "invalid config at {}: {}",
            pointer(e.path()),
            e.inner()
        ))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// The default document when `path` is absent.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
            parse_config(&text).map_err(|e| CliError {
                message: format!("{}: {}", p.display(), e.message),
                ..e
            })
        }
    }
}

/// `--out`, then the environment, then `fallback`.
pub fn out_dir(flag: Option<&Path>, fallback: &Path) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => fallback.to_path_buf(),
    }
}

/// `--out FILE`, else `name` inside the default output directory.
pub fn out_file(flag: Option<&Path>, name: &str) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => out_dir(None, Path::new(".")).join(name),
    }
}

pub fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse()
        .map_err(|e: qseq::models::UnknownModel| e.to_string())
}
