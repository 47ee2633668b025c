use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::{ExperimentConfig, CONFIG_BEGIN, CONFIG_END};
use crate::error::{CliError, Result};

/// One CSV file: `#` metadata lines, a header row and numeric rows.
/// `None` cells are written empty.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvArtifact {
    pub file_name: String,
    pub metadata: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

/// Shortest round-trip text, switching to exponent form for very small or
/// large magnitudes.
pub fn format_number(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e6).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

impl CsvArtifact {
    pub fn new(file_name: String, header: &[&str]) -> Self {
        Self {
            file_name,
            metadata: Vec::new(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<Option<f64>>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Standard metadata block followed by the embedded configuration.
    pub fn describe(&mut self, cfg: &ExperimentConfig, run: &str, extra: &[String]) {
        let mut m = vec![
            format!("qsync-cli {}", env!("CARGO_PKG_VERSION")),
            format!("experiment: {}", cfg.experiment),
            format!("run: {run}"),
            format!("units: rates and times in units of {}", cfg.model.time_unit()),
            "log base: e (entropies and mutual information in nats)".to_string(),
        ];
        m.extend(extra.iter().cloned());
        self.metadata = m;
        self.metadata.push(CONFIG_BEGIN.trim_start_matches("# ").to_string());
        self.metadata.extend(cfg.to_config_text().lines().map(str::to_string));
        self.metadata.push(CONFIG_END.trim_start_matches("# ").to_string());
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for m in &self.metadata {
            if m.is_empty() {
                s.push_str("#\n");
            } else {
                let _ = writeln!(s, "# {m}");
            }
        }
        let _ = writeln!(s, "{}", self.header.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.map(format_number).unwrap_or_default()).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    pub fn write_to(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
        let path = dir.join(&self.file_name);
        std::fs::write(&path, self.render()).map_err(|source| CliError::Io { path: path.clone(), source })?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(-0.25), "-0.25");
        assert_eq!(format_number(1e-9), "1e-9");
        assert_eq!(format_number(123456789.0), "1.23456789e8");
        for x in [1e-300, 0.1 + 0.2, -7.5e-5, 3.0] {
            assert_eq!(format_number(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn render_layout() {
        let mut a = CsvArtifact::new("x.csv".into(), &["t", "v"]);
        a.metadata = vec!["note".into(), String::new()];
        a.push_row(vec![Some(0.0), None]);
        a.push_row(vec![Some(0.5), Some(2.0)]);
        assert_eq!(a.render(), "# note\n#\nt,v\n0,\n0.5,2\n");
        assert_eq!(a.column("v").unwrap(), [None, Some(2.0)]);
    }
}
