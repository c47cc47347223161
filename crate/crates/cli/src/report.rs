//! Result tables: `results.csv` and a Markdown rendering with the columns
//! Technique, Model, Accuracy, Precision, F1.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub technique: String,
    pub model: String,
    pub task: String,
    pub classes: usize,
    pub runs: usize,
    #[serde(with = "fixed6")]
    pub accuracy: f64,
    #[serde(with = "fixed6")]
    pub precision: f64,
    #[serde(with = "fixed6")]
    pub f1: f64,
}

/// Metrics are written with six decimals so the CSV is stable text.
mod fixed6 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:.6}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn write_csv(rows: &[ResultRow], path: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(CliError::data)?;
    }
    w.flush().map_err(CliError::data)
}

pub fn read_csv(path: &Path) -> CliResult<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::Data(format!("reading {}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| CliError::Data(format!("{}: {e}", path.display()))))
        .collect()
}

/// One table per (task, class count), in first-appearance order.
pub fn render_markdown(rows: &[ResultRow]) -> String {
    let mut groups: Vec<(&str, usize)> = Vec::new();
    for r in rows {
        if !groups.contains(&(r.task.as_str(), r.classes)) {
            groups.push((&r.task, r.classes));
        }
    }
    let mut out = String::new();
    for (task, classes) in groups {
        let _ = writeln!(out, "### Results For {classes} Categories ({task})\n");
        out.push_str("| Technique | Model | Accuracy | Precision | F1 |\n");
        out.push_str("|---|---|---|---|---|\n");
        for r in rows.iter().filter(|r| r.task == task && r.classes == classes) {
            let _ = writeln!(
                out,
                "| {} | {} | {:.3} | {:.3} | {:.3} |",
                r.technique, r.model, r.accuracy, r.precision, r.f1
            );
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(technique: &str, acc: f64) -> ResultRow {
        ResultRow {
            technique: technique.into(),
            model: "MeanPool".into(),
            task: "broad".into(),
            classes: 15,
            runs: 5,
            accuracy: acc,
            precision: 0.5,
            f1: 0.25,
        }
    }

    #[test]
    fn csv_roundtrip_and_markdown() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        let rows = vec![row("Stride-64", 0.8), row("Concat-512", 0.123456789)];
        write_csv(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("technique,model,task,classes,runs,accuracy,precision,f1\n"));
        assert!(text.contains("Concat-512,MeanPool,broad,15,5,0.123457,0.500000,0.250000"));
        let back = read_csv(&path).unwrap();
        assert_eq!(back[0], rows[0]);

        let md = render_markdown(&rows);
        assert!(md.contains("### Results For 15 Categories"));
        assert!(md.contains("| Technique | Model | Accuracy | Precision | F1 |"));
        assert!(md.contains("| Stride-64 | MeanPool | 0.800 | 0.500 | 0.250 |"));
    }
}
