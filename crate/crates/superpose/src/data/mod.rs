//! Dataset ingestion: MNIST IDX files, WAV audio with MFCC features, the
//! SMFX feature container, deterministic splits, and label handling.

mod idx;
mod mfcc;
mod smfx;
mod wav;

pub use idx::{load_mnist_idx, write_idx_images, write_idx_labels};
pub use mfcc::{mfcc, MfccParams};
pub use smfx::{load_features, save_features};
pub use wav::{load_wav, write_wav_pcm16};

use std::path::Path;

use crate::augment::SoftLabel;
use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// One sample: a feature matrix (sequence rows x feature columns, or a 28x28
/// image) with a soft-label target and a stable identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub id: String,
    pub features: Matrix,
    pub label: SoftLabel,
}

impl LabeledSample {
    /// Dominant class index of the target.
    pub fn class(&self) -> usize {
        self.label.class()
    }
}

pub type Dataset = Vec<LabeledSample>;

/// First `n` samples in file order. An empty selection is rejected.
pub fn take_first(dataset: &[LabeledSample], n: usize) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Config("take_first(0): empty training set".into()));
    }
    if n > dataset.len() {
        return Err(Error::Range(format!(
            "take_first({n}) exceeds dataset size {}",
            dataset.len()
        )));
    }
    Ok(dataset[..n].to_vec())
}

/// Seeded shuffle, then partition with test size = round(n * fraction).
pub fn split(
    dataset: &[LabeledSample],
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    crate::rng::SeededRng::new(seed).shuffle(&mut indices);
    let test_size = (dataset.len() as f64 * test_fraction).round() as usize;
    let test: Dataset = indices[..test_size]
        .iter()
        .map(|&i| dataset[i].clone())
        .collect();
    let train: Dataset = indices[test_size..]
        .iter()
        .map(|&i| dataset[i].clone())
        .collect();
    Ok((train, test))
}

/// Loads a directory of `<class>_<id>.wav` files and extracts MFCC features.
/// Files are processed in sorted name order so the dataset order is stable.
pub fn load_audio_dir(dir: &Path, params: &MfccParams, n_classes: usize) -> Result<Dataset> {
    let mut names: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.to_lowercase().ends_with(".wav") {
            names.push(name);
        }
    }
    if names.is_empty() {
        return Err(Error::Config(format!("no .wav files in {}", dir.display())));
    }
    names.sort();
    let mut dataset = Vec::with_capacity(names.len());
    for name in names {
        let class: usize = name
            .split('_')
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                Error::Format(format!("file name {name} is not <class>_<id>.wav"))
            })?;
        let (samples, rate) = load_wav(&dir.join(&name))?;
        let features = mfcc(&samples, rate, params)?;
        dataset.push(LabeledSample {
            id: name,
            features,
            label: SoftLabel::one_hot(class, n_classes)?,
        });
    }
    Ok(dataset)
}
