//! Machine-readable experiment reports: a summary table, per-epoch curves,
//! and run provenance.
//!
//! `summary.csv` and `curves.csv` are byte-stable functions of the report
//! contents; wall-clock time appears only in `provenance.txt`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::lstm::TrainHistory;

/// One completed run, mirroring the comparison-table columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub dataset: String,
    pub n_samples: usize,
    pub augmentation: String,
    pub train_acc: f64,
    pub test_acc: f64,
}

/// Per-epoch curves for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunCurves {
    pub run: String,
    pub history: TrainHistory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunProvenance {
    pub run: String,
    pub config_hash: u64,
    pub seed: u64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<RunRow>,
    pub curves: Vec<RunCurves>,
    pub provenance: Vec<RunProvenance>,
}

/// FNV-1a over the canonical config text; stable across runs and platforms.
pub fn config_hash(canonical: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in canonical.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn validate(report: &MetricsReport) -> Result<()> {
    for row in &report.rows {
        for acc in [row.train_acc, row.test_acc] {
            if !(0.0..=1.0).contains(&acc) {
                return Err(Error::Range(format!(
                    "accuracy {acc} out of [0,1] in run '{}'",
                    row.augmentation
                )));
            }
        }
    }
    if report.rows.len() != report.provenance.len() {
        return Err(Error::Config(format!(
            "{} summary rows but {} provenance entries",
            report.rows.len(),
            report.provenance.len()
        )));
    }
    Ok(())
}

fn write_file(path: &PathBuf, contents: &str) -> Result<()> {
    fs::write(path, contents)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Writes summary.csv, curves.csv, and provenance.txt into `dir`. Returns
/// the paths written. Accuracies are fractions formatted to 6 decimals.
pub fn emit_report(report: &MetricsReport, dir: &Path) -> Result<Vec<PathBuf>> {
    validate(report)?;
    fs::create_dir_all(dir)?;

    let mut summary = String::from("dataset,n_samples,augmentation,train_accuracy,test_accuracy\n");
    for r in &report.rows {
        summary.push_str(&format!(
            "{},{},{},{:.6},{:.6}\n",
            r.dataset, r.n_samples, r.augmentation, r.train_acc, r.test_acc
        ));
    }

    let mut curves = String::from("run,epoch,train_loss,train_acc,val_acc\n");
    for c in &report.curves {
        for rec in &c.history.records {
            let val = rec.val_acc.map_or(String::new(), |v| format!("{v:.6}"));
            curves.push_str(&format!(
                "{},{},{:.6},{:.6},{}\n",
                c.run, rec.epoch, rec.train_loss, rec.train_acc, val
            ));
        }
    }

    let mut prov = String::new();
    for p in &report.provenance {
        prov.push_str(&format!(
            "run={} config_hash={:016x} seed={} wall_time_s={:.3}\n",
            p.run, p.config_hash, p.seed, p.wall_time_s
        ));
    }

    let paths = vec![
        dir.join("summary.csv"),
        dir.join("curves.csv"),
        dir.join("provenance.txt"),
    ];
    let result = write_file(&paths[0], &summary)
        .and_then(|_| write_file(&paths[1], &curves))
        .and_then(|_| write_file(&paths[2], &prov));
    if let Err(e) = result {
        for p in &paths {
            let _ = fs::remove_file(p);
        }
        return Err(e);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::EpochRecord;

    fn sample_report() -> MetricsReport {
        MetricsReport {
            rows: vec![RunRow {
                dataset: "mnist/lstm".into(),
                n_samples: 900,
                augmentation: "superposition".into(),
                train_acc: 0.94,
                test_acc: 0.941,
            }],
            curves: vec![RunCurves {
                run: "superposition".into(),
                history: TrainHistory {
                    records: vec![
                        EpochRecord {
                            epoch: 0,
                            train_loss: 2.1,
                            train_acc: 0.3,
                            val_acc: Some(0.25),
                        },
                        EpochRecord {
                            epoch: 1,
                            train_loss: 1.4,
                            train_acc: 0.6,
                            val_acc: None,
                        },
                    ],
                },
            }],
            provenance: vec![RunProvenance {
                run: "superposition".into(),
                config_hash: config_hash("dataset=mnist\n"),
                seed: 42,
                wall_time_s: 1.25,
            }],
        }
    }

    #[test]
    fn identical_reports_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let report = sample_report();
        emit_report(&report, dir.path()).unwrap();
        let first = std::fs::read(dir.path().join("summary.csv")).unwrap();
        let first_curves = std::fs::read(dir.path().join("curves.csv")).unwrap();
        emit_report(&report, dir.path()).unwrap();
        assert_eq!(first, std::fs::read(dir.path().join("summary.csv")).unwrap());
        assert_eq!(
            first_curves,
            std::fs::read(dir.path().join("curves.csv")).unwrap()
        );
    }

    #[test]
    fn summary_column_order_fixed() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&sample_report(), dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "dataset,n_samples,augmentation,train_accuracy,test_accuracy"
        );
        assert_eq!(
            lines.next().unwrap(),
            "mnist/lstm,900,superposition,0.940000,0.941000"
        );
    }

    #[test]
    fn curves_blank_val_when_absent() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&sample_report(), dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
        assert!(text.contains("superposition,0,2.100000,0.300000,0.250000"));
        assert!(text.contains("superposition,1,1.400000,0.600000,\n"));
    }

    #[test]
    fn empty_report_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&MetricsReport::default(), dir.path()).unwrap();
        let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 1);
        let curves = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
        assert_eq!(curves.lines().count(), 1);
    }

    #[test]
    fn out_of_range_accuracy_rejected() {
        let mut report = sample_report();
        report.rows[0].test_acc = 1.2;
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            emit_report(&report, dir.path()),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn fnv_hash_known_values() {
        // Published FNV-1a test vectors.
        assert_eq!(config_hash(""), 0xcbf29ce484222325);
        assert_eq!(config_hash("a"), 0xaf63dc4c8601ec8c);
        assert_ne!(config_hash("dataset=mnist"), config_hash("dataset=smfx"));
    }
}
