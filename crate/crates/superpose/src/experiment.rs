//! Config-driven experiment runner: load data, optionally augment, train the
//! selected model, evaluate on the held-out original test split, and
//! assemble a metrics report.

use std::path::PathBuf;
use std::time::Instant;

use crate::augment::{
    build_augmented_dataset, build_augmented_frames, AugmentOptions, AugmentedDataset,
    PairPolicy, SoftLabel,
};
use crate::config::{DatasetKind, ExperimentConfig, Method, ModelKind};
use crate::data::{self, Dataset, MfccParams};
use crate::error::{Error, Result};
use crate::hmm;
use crate::lstm::{self, LstmConfig, LstmParams, TrainHistory};
use crate::numeric::Matrix;
use crate::report::{config_hash, MetricsReport, RunCurves, RunProvenance, RunRow};
use crate::rng::SeededRng;

/// Seed offsets so the validation split, pair sampling, and model
/// initialization draw from unrelated streams.
const VAL_SPLIT_SEED_OFFSET: u64 = 1;
const AUGMENT_SEED_OFFSET: u64 = 2;

/// Loads the configured dataset and returns (train, test) with the sample
/// cap already applied to the training portion.
pub fn load_splits(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let (train, test) = match cfg.dataset {
        DatasetKind::Mnist => {
            let dir = &cfg.data_path;
            let train = data::load_mnist_idx(
                &dir.join("train-images-idx3-ubyte"),
                &dir.join("train-labels-idx1-ubyte"),
            )?;
            let test = data::load_mnist_idx(
                &dir.join("t10k-images-idx3-ubyte"),
                &dir.join("t10k-labels-idx1-ubyte"),
            )?;
            let train = match cfg.sample_cap {
                Some(n) => data::take_first(&train, n)?,
                None => train,
            };
            (train, test)
        }
        DatasetKind::AudioDir => {
            let all = data::load_audio_dir(&cfg.data_path, &MfccParams::default(), cfg.n_classes)?;
            let all = match cfg.sample_cap {
                Some(n) => data::take_first(&all, n)?,
                None => all,
            };
            data::split(&all, cfg.split_fraction, cfg.seed)?
        }
        DatasetKind::Smfx => {
            let all = data::load_features(&cfg.data_path)?;
            let all = match cfg.sample_cap {
                Some(n) => data::take_first(&all, n)?,
                None => all,
            };
            data::split(&all, cfg.split_fraction, cfg.seed)?
        }
    };
    if train.is_empty() {
        return Err(Error::Config("empty training split".into()));
    }
    if test.is_empty() {
        return Err(Error::Config("empty test split".into()));
    }
    Ok((train, test))
}

fn lstm_config(cfg: &ExperimentConfig, train: &Dataset) -> LstmConfig {
    let input_dim = train[0].features.cols();
    let seq_len = cfg
        .seq_len
        .unwrap_or_else(|| train.iter().map(|s| s.features.rows()).max().unwrap_or(1));
    LstmConfig {
        input_dim,
        hidden: cfg.hidden,
        embed_dim: cfg.embed_dim,
        n_classes: cfg.n_classes,
        seq_len,
        learning_rate: cfg.learning_rate,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        clip_norm: cfg.clip_norm,
    }
}

fn to_pairs(ds: &Dataset) -> Vec<(Matrix, SoftLabel)> {
    ds.iter()
        .map(|s| (s.features.clone(), s.label.clone()))
        .collect()
}

fn to_hard(ds: &Dataset) -> Vec<(Matrix, usize)> {
    ds.iter().map(|s| (s.features.clone(), s.class())).collect()
}

fn augment_options(cfg: &ExperimentConfig) -> Result<AugmentOptions> {
    let mix = cfg
        .method
        .mix_method()
        .ok_or_else(|| Error::Config("method=none has no mixing formula".into()))?;
    Ok(AugmentOptions {
        method: mix,
        lambda_set: cfg.lambda_set()?,
        policy: cfg.pair_policy,
        pairs_per_lambda: cfg.pairs_per_lambda,
        include_originals: cfg.include_originals,
        allow_self_pairs: true,
    })
}

/// Builds the augmented training set for the configured method; routes
/// square matrices through the squared-matrix formulas and frame sequences
/// through the framewise variant.
pub fn augment_training_set(
    cfg: &ExperimentConfig,
    train: &Dataset,
) -> Result<AugmentedDataset> {
    let source = to_hard(train);
    let opts = augment_options(cfg)?;
    let mut rng = SeededRng::new(cfg.seed.wrapping_add(AUGMENT_SEED_OFFSET));
    let square = source
        .iter()
        .all(|(m, _)| m.is_square() && m.rows() == source[0].0.rows());
    if square {
        build_augmented_dataset(&source, cfg.n_classes, &opts, &mut rng)
    } else {
        let (ds, _substituted) =
            build_augmented_frames(&source, cfg.n_classes, &opts, &mut rng)?;
        Ok(ds)
    }
}

struct RunOutput {
    train_acc: f64,
    test_acc: f64,
    history: Option<TrainHistory>,
}

fn run_lstm(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    written: &mut Vec<PathBuf>,
) -> Result<RunOutput> {
    let (train_core, val) = if cfg.val_fraction > 0.0 {
        data::split(train, cfg.val_fraction, cfg.seed.wrapping_add(VAL_SPLIT_SEED_OFFSET))?
    } else {
        (train.to_vec(), Vec::new())
    };
    let net_cfg = lstm_config(cfg, train);
    let val_pairs = to_pairs(&val);
    let test_pairs = to_pairs(test);

    match cfg.method {
        Method::None | Method::Mixup | Method::QuantumMix | Method::Superposition => {
            let train_pairs = if cfg.method == Method::None {
                to_pairs(&train_core)
            } else {
                augment_training_set(cfg, &train_core)?.samples
            };
            let (params, history) = lstm::train(&net_cfg, &train_pairs, &val_pairs)?;
            let ckpt = cfg.output_dir.join("model.ckpt");
            lstm::save_checkpoint(&ckpt, &net_cfg, &params)?;
            written.push(ckpt);
            let test_acc = lstm::evaluate(&params, &net_cfg, &test_pairs)?;
            let train_acc = history.records.last().map_or(0.0, |r| r.train_acc);
            Ok(RunOutput {
                train_acc,
                test_acc,
                history: Some(history),
            })
        }
        Method::Density => {
            // Stage 1: plain model whose penultimate activations define the
            // state vectors.
            let (stage1, _) = lstm::train(&net_cfg, &to_pairs(&train_core), &val_pairs)?;
            let s1_path = cfg.output_dir.join("stage1.ckpt");
            lstm::save_checkpoint(&s1_path, &net_cfg, &stage1)?;
            written.push(s1_path);

            let densities = densify(&stage1, &net_cfg, &train_core)?;
            let opts = augment_options(cfg)?;
            let mut rng = SeededRng::new(cfg.seed.wrapping_add(AUGMENT_SEED_OFFSET));
            let stage2_set =
                build_augmented_dataset(&densities, cfg.n_classes, &opts, &mut rng)?;

            // Stage 2 consumes embed_dim x embed_dim density matrices.
            let mut stage2_cfg = net_cfg.clone();
            stage2_cfg.input_dim = cfg.embed_dim;
            stage2_cfg.seq_len = cfg.embed_dim;
            let stage2_val = densify_pairs(&stage1, &net_cfg, &val)?;
            let (stage2, history) = lstm::train(&stage2_cfg, &stage2_set.samples, &stage2_val)?;
            let ckpt = cfg.output_dir.join("model.ckpt");
            lstm::save_checkpoint(&ckpt, &stage2_cfg, &stage2)?;
            written.push(ckpt);

            let stage2_test = densify_pairs(&stage1, &net_cfg, test)?;
            let test_acc = lstm::evaluate(&stage2, &stage2_cfg, &stage2_test)?;
            let train_acc = history.records.last().map_or(0.0, |r| r.train_acc);
            Ok(RunOutput {
                train_acc,
                test_acc,
                history: Some(history),
            })
        }
    }
}

/// Density matrices (with hard labels) from stage-1 embeddings.
fn densify(
    stage1: &LstmParams,
    net_cfg: &LstmConfig,
    ds: &Dataset,
) -> Result<Vec<(Matrix, usize)>> {
    let features: Vec<Matrix> = ds.iter().map(|s| s.features.clone()).collect();
    let embeddings = lstm::extract_embeddings(stage1, net_cfg, &features)?;
    embeddings
        .iter()
        .zip(ds)
        .map(|(e, s)| {
            Ok((
                crate::augment::density_from_embedding(e)?.into_matrix(),
                s.class(),
            ))
        })
        .collect()
}

fn densify_pairs(
    stage1: &LstmParams,
    net_cfg: &LstmConfig,
    ds: &Dataset,
) -> Result<Vec<(Matrix, SoftLabel)>> {
    densify(stage1, net_cfg, ds)?
        .into_iter()
        .zip(ds)
        .map(|((m, _), s)| Ok((m, s.label.clone())))
        .collect()
}

fn run_hmm(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    written: &mut Vec<PathBuf>,
) -> Result<RunOutput> {
    let training: Vec<(Matrix, SoftLabel)> = if cfg.method == Method::None {
        to_pairs(train)
    } else {
        if cfg.pair_policy != PairPolicy::IntraClass {
            return Err(Error::Config(
                "HMM augmentation requires intra-class pairs".into(),
            ));
        }
        let source = to_hard(train);
        let opts = augment_options(cfg)?;
        let mut rng = SeededRng::new(cfg.seed.wrapping_add(AUGMENT_SEED_OFFSET));
        let (ds, _) = build_augmented_frames(&source, cfg.n_classes, &opts, &mut rng)?;
        ds.samples
    };
    // Per-class fits need unambiguous class assignments.
    let mut grouped: Vec<Vec<Matrix>> = vec![Vec::new(); cfg.n_classes];
    for (m, label) in &training {
        if !label.is_one_hot() {
            return Err(Error::Config(
                "HMM training requires one-hot labels".into(),
            ));
        }
        grouped[label.class()].push(m.clone());
    }
    let clf = hmm::train_classifier(&grouped, cfg.n_states, cfg.hmm_iters, cfg.hmm_tol)?;
    let bank = cfg.output_dir.join("model.hmm");
    hmm::save_bank(&clf, &bank)?;
    written.push(bank);

    let accuracy = |ds: &Dataset| -> Result<f64> {
        let mut correct = 0usize;
        for s in ds {
            if clf.classify(&s.features)?.0 == s.class() {
                correct += 1;
            }
        }
        Ok(correct as f64 / ds.len() as f64)
    };
    Ok(RunOutput {
        train_acc: accuracy(train)?,
        test_acc: accuracy(test)?,
        history: None,
    })
}

/// Runs one experiment end to end. Checkpoints are written into the config's
/// output directory; on failure any files this run created are removed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    let started = Instant::now();
    let (train, test) = load_splits(cfg)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    let outcome = match cfg.model {
        ModelKind::Lstm => run_lstm(cfg, &train, &test, &mut written),
        ModelKind::Hmm => run_hmm(cfg, &train, &test, &mut written),
    };
    let out = match outcome {
        Ok(out) => out,
        Err(e) => {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            return Err(e);
        }
    };
    let run = cfg.method.name().to_string();
    let mut report = MetricsReport::default();
    report.rows.push(RunRow {
        dataset: format!("{}/{}", cfg.dataset.name(), cfg.model.name()),
        n_samples: train.len(),
        augmentation: run.clone(),
        train_acc: out.train_acc,
        test_acc: out.test_acc,
    });
    if let Some(history) = out.history {
        report.curves.push(RunCurves {
            run: run.clone(),
            history,
        });
    }
    report.provenance.push(RunProvenance {
        run,
        config_hash: config_hash(&cfg.canonical_string()),
        seed: cfg.seed,
        wall_time_s: started.elapsed().as_secs_f64(),
    });
    Ok(report)
}

/// Runs one config per method with a shared base seed plus a per-run offset,
/// and merges the reports in method order. Each run keeps its checkpoints in
/// a method-named subdirectory.
pub fn run_compare(base: &ExperimentConfig, methods: &[Method]) -> Result<MetricsReport> {
    if methods.is_empty() {
        return Err(Error::Config("compare needs at least one method".into()));
    }
    let mut merged = MetricsReport::default();
    for (k, &method) in methods.iter().enumerate() {
        if method == Method::Density && base.model == ModelKind::Hmm {
            return Err(Error::Config(
                "compare matrix includes density on model=hmm".into(),
            ));
        }
        let mut cfg = base.clone();
        cfg.method = method;
        cfg.seed = base.seed.wrapping_add(k as u64);
        cfg.output_dir = base.output_dir.join(method.name());
        if base.model == ModelKind::Hmm && method != Method::None {
            cfg.pair_policy = PairPolicy::IntraClass;
        }
        let report = run_experiment(&cfg)?;
        merged.rows.extend(report.rows);
        merged.curves.extend(report.curves);
        merged.provenance.extend(report.provenance);
    }
    Ok(merged)
}

/// Loads the model saved by a previous run of `cfg` and re-evaluates it on
/// the same test split. Returns the test accuracy.
pub fn evaluate_saved(cfg: &ExperimentConfig) -> Result<f64> {
    let (_, test) = load_splits(cfg)?;
    match cfg.model {
        ModelKind::Hmm => {
            let clf = hmm::load_bank(&cfg.output_dir.join("model.hmm"))?;
            let mut correct = 0usize;
            for s in &test {
                if clf.classify(&s.features)?.0 == s.class() {
                    correct += 1;
                }
            }
            Ok(correct as f64 / test.len() as f64)
        }
        ModelKind::Lstm => {
            let (net_cfg, params) = lstm::load_checkpoint(&cfg.output_dir.join("model.ckpt"))?;
            if cfg.method == Method::Density {
                let (s1_cfg, stage1) =
                    lstm::load_checkpoint(&cfg.output_dir.join("stage1.ckpt"))?;
                let transformed = densify_pairs(&stage1, &s1_cfg, &test)?;
                lstm::evaluate(&params, &net_cfg, &transformed)
            } else {
                lstm::evaluate(&params, &net_cfg, &to_pairs(&test))
            }
        }
    }
}

/// Builds and saves an augmented dataset (the `augment` subcommand): the
/// training split is augmented per the config and written as an SMFX file,
/// plus a `.provenance.txt` sidecar with one `method,i,j,lambda_sq` record
/// per sample.
pub fn export_augmented(cfg: &ExperimentConfig, out: &std::path::Path) -> Result<usize> {
    if cfg.method == Method::None {
        return Err(Error::Config("method=none produces no augmented data".into()));
    }
    if cfg.method == Method::Density {
        return Err(Error::Config(
            "density samples are produced inside the two-stage run, not exported".into(),
        ));
    }
    let (train, _) = load_splits(cfg)?;
    let augmented = augment_training_set(cfg, &train)?;
    let dataset: Dataset = augmented
        .samples
        .iter()
        .zip(&augmented.provenance)
        .enumerate()
        .map(|(k, ((m, label), p))| data::LabeledSample {
            id: format!("{}-{k}-{}-{}", p.method, p.i, p.j),
            features: m.clone(),
            label: label.clone(),
        })
        .collect();
    data::save_features(&dataset, out)?;
    let mut sidecar = String::new();
    for p in &augmented.provenance {
        sidecar.push_str(&format!("{},{},{},{}\n", p.method, p.i, p.j, p.lambda_sq));
    }
    let sidecar_path = out.with_extension("provenance.txt");
    if let Err(e) = std::fs::write(&sidecar_path, sidecar) {
        let _ = std::fs::remove_file(out);
        return Err(e.into());
    }
    Ok(dataset.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;
    use crate::data::LabeledSample;

    /// Small synthetic sequence dataset written as SMFX: class k drifts with
    /// slope determined by k, so both models can separate it quickly.
    fn write_smfx(dir: &std::path::Path, n: usize, n_classes: usize, square: bool) -> PathBuf {
        let mut rng = SeededRng::new(99);
        let ds: Dataset = (0..n)
            .map(|i| {
                let class = i % n_classes;
                let rows = if square { 6 } else { 5 + (i % 3) };
                let cols = 6;
                let mut data = Vec::with_capacity(rows * cols);
                for t in 0..rows {
                    for d in 0..cols {
                        let base = (class as f64 + 1.0) * 0.3 * (t as f64 - d as f64);
                        data.push(base.sin() + rng.normal(0.0, 0.05));
                    }
                }
                LabeledSample {
                    id: format!("s{i}"),
                    features: Matrix::from_vec(rows, cols, data).unwrap(),
                    label: SoftLabel::one_hot(class, n_classes).unwrap(),
                }
            })
            .collect();
        let path = dir.join("toy.smfx");
        data::save_features(&ds, &path).unwrap();
        path
    }

    fn toy_config(dir: &std::path::Path, data: &std::path::Path, extra: &str) -> ExperimentConfig {
        parse_config_str(&format!(
            "dataset=smfx\ndata_path={}\noutput_dir={}\nn_classes=2\n\
             hidden=6,6,6\nembed_dim=64\nepochs=3\nbatch_size=8\nseed=7\n{extra}",
            data.display(),
            dir.display()
        ))
        .unwrap()
    }

    #[test]
    fn baseline_run_produces_one_row_and_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let data = write_smfx(dir.path(), 24, 2, false);
        let cfg = toy_config(dir.path(), &data, "method=none\n");
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].augmentation, "none");
        assert_eq!(report.rows[0].dataset, "smfx/lstm");
        assert!(report.rows[0].test_acc >= 0.0 && report.rows[0].test_acc <= 1.0);
        assert!(cfg.output_dir.join("model.ckpt").exists());
        assert_eq!(report.curves.len(), 1);
        assert_eq!(report.curves[0].history.records.len(), 3);
        assert!(!report.provenance.is_empty());
    }

    #[test]
    fn run_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let data = write_smfx(dir.path(), 20, 2, false);
        let cfg = toy_config(dir.path(), &data, "method=mixup\npairs_per_lambda=4\n");
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.curves, b.curves);
    }

    #[test]
    fn sample_cap_zero_or_oversize_rejected_before_training() {
        let dir = tempfile::tempdir().unwrap();
        let data = write_smfx(dir.path(), 10, 2, false);
        let mut cfg = toy_config(dir.path(), &data, "method=none\n");
        cfg.sample_cap = Some(0);
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
        cfg.sample_cap = Some(10_000);
        assert!(matches!(run_experiment(&cfg), Err(Error::Range(_))));
        assert!(!cfg.output_dir.join("model.ckpt").exists());
    }

    #[test]
    fn hmm_superposition_run_keeps_labels_one_hot() {
        let dir = tempfile::tempdir().unwrap();
        let data = write_smfx(dir.path(), 24, 2, false);
        let cfg = toy_config(
            dir.path(),
            &data,
            "method=superposition\nmodel=hmm\nn_states=2\nhmm_iters=3\npairs_per_lambda=4\n",
        );
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!(report.curves.is_empty());
        assert!(cfg.output_dir.join("model.hmm").exists());
    }

    #[test]
    fn density_run_trains_two_stages() {
        let dir = tempfile::tempdir().unwrap();
        let data = write_smfx(dir.path(), 16, 2, false);
        let cfg = toy_config(
            dir.path(),
            &data,
            "method=density\npairs_per_lambda=4\nclip_norm=5\n",
        );
        let report = run_experiment(&cfg).unwrap();
        assert!(cfg.output_dir.join("stage1.ckpt").exists());
        assert!(cfg.output_dir.join("model.ckpt").exists());
        // Stage 2 consumes embed_dim x embed_dim inputs.
        let (stage2_cfg, _) =
            lstm::load_checkpoint(&cfg.output_dir.join("model.ckpt")).unwrap();
        assert_eq!(stage2_cfg.input_dim, 64);
        assert_eq!(stage2_cfg.seq_len, 64);
        assert_eq!(report.rows.len(), 1);
    }

    #[test]
    fn evaluate_saved_matches_report() {
        let dir = tempfile::tempdir().unwrap();
        let data = write_smfx(dir.path(), 24, 2, false);
        let cfg = toy_config(dir.path(), &data, "method=none\n");
        let report = run_experiment(&cfg).unwrap();
        let again = evaluate_saved(&cfg).unwrap();
        assert_eq!(report.rows[0].test_acc, again);
    }

    #[test]
    fn compare_merges_rows_in_method_order() {
        let dir = tempfile::tempdir().unwrap();
        let data = write_smfx(dir.path(), 20, 2, false);
        let cfg = toy_config(dir.path(), &data, "method=none\npairs_per_lambda=3\n");
        let methods = [Method::None, Method::Mixup, Method::Superposition];
        let report = run_compare(&cfg, &methods).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert_eq!(report.rows[0].augmentation, "none");
        assert_eq!(report.rows[1].augmentation, "mixup");
        assert_eq!(report.rows[2].augmentation, "superposition");
        // Per-run seed offsets recorded in provenance.
        assert_eq!(report.provenance[0].seed, cfg.seed);
        assert_eq!(report.provenance[1].seed, cfg.seed + 1);
        assert_eq!(report.provenance[2].seed, cfg.seed + 2);
    }

    #[test]
    fn export_augmented_writes_loadable_smfx() {
        let dir = tempfile::tempdir().unwrap();
        let data = write_smfx(dir.path(), 20, 2, false);
        let cfg = toy_config(dir.path(), &data, "method=mixup\npairs_per_lambda=3\n");
        let out = dir.path().join("aug.smfx");
        let n = export_augmented(&cfg, &out).unwrap();
        let loaded = data::load_features(&out).unwrap();
        assert_eq!(loaded.len(), n);
        // 4 lambdas x 3 pairs + originals (16 train samples after splits).
        assert!(n > 12);
        let sidecar = std::fs::read_to_string(out.with_extension("provenance.txt")).unwrap();
        let lines: Vec<&str> = sidecar.lines().collect();
        assert_eq!(lines.len(), n);
        assert!(lines[0].starts_with("mixup,"));
        assert_eq!(lines[0].split(',').count(), 4);
        let none_cfg = toy_config(dir.path(), &data, "method=none\n");
        assert!(export_augmented(&none_cfg, &out).is_err());
    }
}
