//! File outputs. Each one carries the library version and the full run spec.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::spec::RunSpec;
use crate::CliError;

/// `# fracgreen <version>` and `# spec <json>` ahead of the CSV body.
pub fn csv_document(spec: &RunSpec, body: &str) -> String {
    format!("# fracgreen {}\n# spec {}\n{body}", fracgreen::VERSION, spec.to_json())
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'static str,
    spec: &'a RunSpec,
    result: &'a T,
}

pub fn json_document<T: Serialize>(spec: &RunSpec, result: &T) -> String {
    let env = Envelope {
        version: fracgreen::VERSION,
        spec,
        result,
    };
    let mut s = serde_json::to_string_pretty(&env).expect("results serialize");
    s.push('\n');
    s
}

/// `path` with `ext` as extension.
pub fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

/// `run.csv`, `0.25` → `run_s0.25.csv`.
pub fn per_order(path: &Path, s: f64) -> PathBuf {
    let stem = path.file_stem().and_then(|x| x.to_str()).unwrap_or("out");
    let name = match path.extension().and_then(|x| x.to_str()) {
        Some(ext) => format!("{stem}_s{s}.{ext}"),
        None => format!("{stem}_s{s}"),
    };
    path.with_file_name(name)
}

/// Writes to `path`, or to stdout when there is none.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text)?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_order_names() {
        assert_eq!(per_order(Path::new("a/run.csv"), 0.25), PathBuf::from("a/run_s0.25.csv"));
        assert_eq!(per_order(Path::new("run"), 0.5), PathBuf::from("run_s0.5"));
    }
}
