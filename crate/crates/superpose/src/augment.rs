//! Sample mixing: superposition with and without interference, classical
//! mix-up, density-matrix construction, soft labels, pair sampling, and
//! augmented-dataset assembly.
//!
//! The three superposition flavors all mix two matrices under a coefficient
//! parameterized by lambda^2:
//!
//! * with interference:  l^2 A^2 + (1-l^2) B^2 + l*sqrt(1-l^2) (AB + BA),
//!   which equals (l A + sqrt(1-l^2) B)^2,
//! * without interference ("quantum mix-up"): l A^2 + sqrt(1-l^2) B^2,
//! * classical mix-up: l A + (1-l) B elementwise.

use crate::error::{Error, Result};
use crate::numeric::{argmax, l2_norm, mat_square, matmul, Matrix};
use crate::rng::SeededRng;

/// Mixing coefficient, parameterized by lambda^2 in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixCoefficient {
    lambda_sq: f64,
}

impl MixCoefficient {
    pub fn new(lambda_sq: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda_sq) || !lambda_sq.is_finite() {
            return Err(Error::Domain(format!(
                "lambda_sq {lambda_sq} outside [0, 1]"
            )));
        }
        Ok(MixCoefficient { lambda_sq })
    }

    /// The paper's fixed grid of lambda^2 values.
    pub fn paper_grid() -> Vec<MixCoefficient> {
        [1.0, 0.2, 0.5, 0.8]
            .iter()
            .map(|&l| MixCoefficient::new(l).unwrap())
            .collect()
    }

    pub fn lambda_sq(&self) -> f64 {
        self.lambda_sq
    }

    pub fn lambda(&self) -> f64 {
        self.lambda_sq.sqrt()
    }

    /// sqrt(1 - lambda^2).
    pub fn complement(&self) -> f64 {
        (1.0 - self.lambda_sq).sqrt()
    }
}

/// Probability vector over classes; mixing puts mass on at most two entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabel {
    probs: Vec<f64>,
}

impl SoftLabel {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Shape("empty label vector".into()));
        }
        if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::Domain("label entries outside [0, 1]".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("label sums to {sum}, not 1")));
        }
        Ok(SoftLabel { probs })
    }

    pub fn one_hot(class: usize, n_classes: usize) -> Result<Self> {
        if class >= n_classes {
            return Err(Error::Range(format!(
                "class {class} out of range for {n_classes} classes"
            )));
        }
        let mut probs = vec![0.0; n_classes];
        probs[class] = 1.0;
        Ok(SoftLabel { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_classes(&self) -> usize {
        self.probs.len()
    }

    /// Dominant class; ties resolve to the lowest index.
    pub fn class(&self) -> usize {
        argmax(&self.probs)
    }

    pub fn is_one_hot(&self) -> bool {
        self.probs.iter().filter(|&&p| p > 0.0).count() == 1
    }
}

/// Symmetric positive-semidefinite trace-1 matrix built from an embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: Matrix,
}

impl DensityMatrix {
    /// L2-normalizes `v` and forms the pure-state outer product v v^T.
    pub fn from_embedding(v: &[f64]) -> Result<Self> {
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("embedding must be non-empty and finite".into()));
        }
        let norm = l2_norm(v);
        if norm == 0.0 {
            return Err(Error::DegenerateEmbedding);
        }
        let unit: Vec<f64> = v.iter().map(|x| x / norm).collect();
        Ok(DensityMatrix {
            mat: Matrix::outer(&unit, &unit),
        })
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.mat
    }

    pub fn into_matrix(self) -> Matrix {
        self.mat
    }
}

/// Convenience wrapper for [`DensityMatrix::from_embedding`].
pub fn density_from_embedding(v: &[f64]) -> Result<DensityMatrix> {
    DensityMatrix::from_embedding(v)
}

fn superpose_matrices(a: &Matrix, b: &Matrix, c: MixCoefficient) -> Result<Matrix> {
    if !a.is_square() || !b.is_square() {
        return Err(Error::Shape("superposition requires square matrices".into()));
    }
    if a.rows() != b.rows() {
        return Err(Error::Shape(format!(
            "superposition dim mismatch: {} vs {}",
            a.rows(),
            b.rows()
        )));
    }
    let (l, comp) = (c.lambda(), c.complement());
    let mut out = mat_square(a)?.scale(c.lambda_sq());
    out.axpy(1.0 - c.lambda_sq(), &mat_square(b)?)?;
    let cross = matmul(a, b)?.add(&matmul(b, a)?)?;
    out.axpy(l * comp, &cross)?;
    Ok(out)
}

/// Superposition with interference on density matrices:
/// l^2 D_i^2 + (1-l^2) D_j^2 + l*sqrt(1-l^2) (D_i D_j + D_j D_i).
pub fn superpose_density(
    d_i: &DensityMatrix,
    d_j: &DensityMatrix,
    c: MixCoefficient,
) -> Result<Matrix> {
    superpose_matrices(d_i.matrix(), d_j.matrix(), c)
}

/// Superposition with interference on raw sample matrices.
pub fn superpose_sample(s_i: &Matrix, s_j: &Matrix, c: MixCoefficient) -> Result<Matrix> {
    superpose_matrices(s_i, s_j, c)
}

/// Superposition without interference: l S_i^2 + sqrt(1-l^2) S_j^2.
///
/// The coefficients do not sum to 1 in general; this is the printed form.
/// See [`quantum_mix_normalized`] for the convex-rescaled variant.
pub fn quantum_mix(s_i: &Matrix, s_j: &Matrix, c: MixCoefficient) -> Result<Matrix> {
    if !s_i.is_square() || !s_j.is_square() {
        return Err(Error::Shape("quantum_mix requires square matrices".into()));
    }
    if s_i.rows() != s_j.rows() {
        return Err(Error::Shape(format!(
            "quantum_mix dim mismatch: {} vs {}",
            s_i.rows(),
            s_j.rows()
        )));
    }
    let mut out = mat_square(s_i)?.scale(c.lambda());
    out.axpy(c.complement(), &mat_square(s_j)?)?;
    Ok(out)
}

/// Quantum mix rescaled by 1 / (l + sqrt(1-l^2)) so the coefficients sum to 1.
pub fn quantum_mix_normalized(s_i: &Matrix, s_j: &Matrix, c: MixCoefficient) -> Result<Matrix> {
    let scale = 1.0 / (c.lambda() + c.complement());
    Ok(quantum_mix(s_i, s_j, c)?.scale(scale))
}

/// Classical mix-up: l S_i + (1-l) S_j, elementwise. Works on any shape.
pub fn mixup(s_i: &Matrix, s_j: &Matrix, lambda: f64) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Domain(format!("mixup lambda {lambda} outside [0, 1]")));
    }
    let mut out = s_i.scale(lambda);
    out.axpy(1.0 - lambda, s_j)?;
    Ok(out)
}

/// Soft label putting `weight_i` on class `y_i` and the rest on `y_j`.
/// Equal classes collapse to a one-hot target.
pub fn mix_labels(
    y_i: usize,
    y_j: usize,
    weight_i: f64,
    n_classes: usize,
) -> Result<SoftLabel> {
    if !(0.0..=1.0).contains(&weight_i) {
        return Err(Error::Domain(format!("weight {weight_i} outside [0, 1]")));
    }
    if y_i >= n_classes || y_j >= n_classes {
        return Err(Error::Range(format!(
            "class index out of range: {y_i}/{y_j} vs {n_classes} classes"
        )));
    }
    let mut probs = vec![0.0; n_classes];
    probs[y_i] += weight_i;
    probs[y_j] += 1.0 - weight_i;
    Ok(SoftLabel { probs })
}

/// Which label relationships a sampled pair must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairPolicy {
    /// label(i) == label(j); the paper's "apparent pure states".
    IntraClass,
    /// label(i) != label(j).
    InterClass,
    /// Any pair.
    Both,
}

impl PairPolicy {
    fn admits(&self, a: usize, b: usize) -> bool {
        match self {
            PairPolicy::IntraClass => a == b,
            PairPolicy::InterClass => a != b,
            PairPolicy::Both => true,
        }
    }
}

/// All unordered index pairs (i < j) allowed by the policy. With
/// `allow_self`, a self-pair (i, i) is added only for classes holding a
/// single sample, so single-sample classes stay usable under intra-class.
pub fn enumerate_pairs(
    labels: &[usize],
    policy: PairPolicy,
    allow_self: bool,
) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..labels.len() {
        for j in (i + 1)..labels.len() {
            if policy.admits(labels[i], labels[j]) {
                pairs.push((i, j));
            }
        }
    }
    if allow_self && policy != PairPolicy::InterClass {
        for i in 0..labels.len() {
            let singleton = labels.iter().filter(|&&l| l == labels[i]).count() == 1;
            if singleton {
                pairs.push((i, i));
            }
        }
        pairs.sort();
    }
    pairs
}

/// `count` pairs drawn uniformly with replacement from the admissible set.
pub fn sample_pairs(
    labels: &[usize],
    policy: PairPolicy,
    count: usize,
    allow_self: bool,
    rng: &mut SeededRng,
) -> Result<Vec<(usize, usize)>> {
    if labels.is_empty() {
        return Err(Error::Config("pair sampling over an empty dataset".into()));
    }
    let pool = enumerate_pairs(labels, policy, allow_self);
    if pool.is_empty() {
        return Err(Error::PolicyUnsatisfiable(format!(
            "no valid pair under {policy:?} for {} samples",
            labels.len()
        )));
    }
    Ok((0..count).map(|_| pool[rng.index(pool.len())]).collect())
}

/// The four mixing formulas selectable during dataset assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixMethod {
    Mixup,
    QuantumMix,
    SuperposeSample,
    SuperposeDensity,
}

impl MixMethod {
    pub fn name(&self) -> &'static str {
        match self {
            MixMethod::Mixup => "mixup",
            MixMethod::QuantumMix => "quantum_mix",
            MixMethod::SuperposeSample => "superposition",
            MixMethod::SuperposeDensity => "density",
        }
    }
}

/// Where an augmented sample came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub method: String,
    pub i: usize,
    pub j: usize,
    pub lambda_sq: f64,
}

/// Mixed samples plus per-sample provenance, in deterministic order.
#[derive(Debug, Clone)]
pub struct AugmentedDataset {
    pub samples: Vec<(Matrix, SoftLabel)>,
    pub provenance: Vec<Provenance>,
}

impl AugmentedDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Options for [`build_augmented_dataset`].
#[derive(Debug, Clone)]
pub struct AugmentOptions {
    pub method: MixMethod,
    pub lambda_set: Vec<MixCoefficient>,
    pub policy: PairPolicy,
    /// Pairs drawn per lambda value; 0 means one pass over the source set.
    pub pairs_per_lambda: usize,
    pub include_originals: bool,
    pub allow_self_pairs: bool,
}

/// Applies the chosen mixing formula over sampled pairs for every lambda in
/// the grid. Label weight on class i is lambda for mix-up and lambda^2 for
/// the superposition methods. Originals are appended at the end when
/// requested. Output order is (lambda index, pair index), so the result is
/// fully determined by the seed and options.
pub fn build_augmented_dataset(
    source: &[(Matrix, usize)],
    n_classes: usize,
    opts: &AugmentOptions,
    rng: &mut SeededRng,
) -> Result<AugmentedDataset> {
    if source.is_empty() {
        return Err(Error::Config("empty source dataset".into()));
    }
    if opts.lambda_set.is_empty() {
        return Err(Error::Config("empty lambda set".into()));
    }
    let labels: Vec<usize> = source.iter().map(|(_, l)| *l).collect();
    let per_lambda = if opts.pairs_per_lambda == 0 {
        source.len()
    } else {
        opts.pairs_per_lambda
    };
    let mut samples = Vec::new();
    let mut provenance = Vec::new();
    for c in &opts.lambda_set {
        let pairs = sample_pairs(&labels, opts.policy, per_lambda, opts.allow_self_pairs, rng)?;
        for (i, j) in pairs {
            let (s_i, y_i) = &source[i];
            let (s_j, y_j) = &source[j];
            let (mixed, weight) = match opts.method {
                MixMethod::Mixup => (mixup(s_i, s_j, c.lambda())?, c.lambda()),
                MixMethod::QuantumMix => (quantum_mix(s_i, s_j, *c)?, c.lambda_sq()),
                MixMethod::SuperposeSample | MixMethod::SuperposeDensity => {
                    (superpose_matrices(s_i, s_j, *c)?, c.lambda_sq())
                }
            };
            if !mixed.all_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite augmented sample from pair ({i}, {j})"
                )));
            }
            samples.push((mixed, mix_labels(*y_i, *y_j, weight, n_classes)?));
            provenance.push(Provenance {
                method: opts.method.name().to_string(),
                i,
                j,
                lambda_sq: c.lambda_sq(),
            });
        }
    }
    if opts.include_originals {
        for (idx, (s, y)) in source.iter().enumerate() {
            samples.push((s.clone(), SoftLabel::one_hot(*y, n_classes)?));
            provenance.push(Provenance {
                method: "original".to_string(),
                i: idx,
                j: idx,
                lambda_sq: 1.0,
            });
        }
    }
    if samples.is_empty() {
        return Err(Error::Config("augmentation produced an empty dataset".into()));
    }
    Ok(AugmentedDataset { samples, provenance })
}

/// [`build_augmented_dataset`] for frame-sequence data: same pair sampling
/// and (lambda index, pair index) output order, but each pair is combined
/// with [`mix_frames`] so non-square sequences are handled. Returns the
/// dataset plus how many samples used the substituted elementwise mix.
pub fn build_augmented_frames(
    source: &[(Matrix, usize)],
    n_classes: usize,
    opts: &AugmentOptions,
    rng: &mut SeededRng,
) -> Result<(AugmentedDataset, usize)> {
    if source.is_empty() {
        return Err(Error::Config("empty source dataset".into()));
    }
    if opts.lambda_set.is_empty() {
        return Err(Error::Config("empty lambda set".into()));
    }
    let labels: Vec<usize> = source.iter().map(|(_, l)| *l).collect();
    let per_lambda = if opts.pairs_per_lambda == 0 {
        source.len()
    } else {
        opts.pairs_per_lambda
    };
    let mut samples = Vec::new();
    let mut provenance = Vec::new();
    let mut substituted = 0usize;
    for c in &opts.lambda_set {
        let pairs = sample_pairs(&labels, opts.policy, per_lambda, opts.allow_self_pairs, rng)?;
        for (i, j) in pairs {
            let (s_i, y_i) = &source[i];
            let (s_j, y_j) = &source[j];
            let (mixed, was_substituted) = mix_frames(s_i, s_j, *c, opts.method)?;
            if was_substituted {
                substituted += 1;
            }
            if !mixed.all_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite augmented sample from pair ({i}, {j})"
                )));
            }
            let weight = match opts.method {
                MixMethod::Mixup => c.lambda(),
                _ => c.lambda_sq(),
            };
            samples.push((mixed, mix_labels(*y_i, *y_j, weight, n_classes)?));
            provenance.push(Provenance {
                method: opts.method.name().to_string(),
                i,
                j,
                lambda_sq: c.lambda_sq(),
            });
        }
    }
    if opts.include_originals {
        for (idx, (s, y)) in source.iter().enumerate() {
            samples.push((s.clone(), SoftLabel::one_hot(*y, n_classes)?));
            provenance.push(Provenance {
                method: "original".to_string(),
                i: idx,
                j: idx,
                lambda_sq: 1.0,
            });
        }
    }
    Ok((AugmentedDataset { samples, provenance }, substituted))
}

/// Framewise mix of two (possibly non-square) frame-sequence matrices, used
/// by the HMM pipeline where the squared-matrix formulas are only defined
/// for square inputs. Both sequences are truncated to the shorter length.
/// For the superposition methods a square pair uses the printed formula;
/// otherwise the normalized elementwise mix l A + sqrt(1-l^2) B rescaled by
/// 1/(l + sqrt(1-l^2)) stands in, and `substituted` is reported as true.
pub fn mix_frames(
    a: &Matrix,
    b: &Matrix,
    c: MixCoefficient,
    method: MixMethod,
) -> Result<(Matrix, bool)> {
    if a.cols() != b.cols() {
        return Err(Error::Shape(format!(
            "frame dim mismatch: {} vs {}",
            a.cols(),
            b.cols()
        )));
    }
    let t = a.rows().min(b.rows());
    if t == 0 {
        return Err(Error::Shape("empty frame sequence".into()));
    }
    let truncate = |m: &Matrix| {
        Matrix::from_vec(t, m.cols(), m.as_slice()[..t * m.cols()].to_vec()).unwrap()
    };
    let (ta, tb) = (truncate(a), truncate(b));
    match method {
        MixMethod::Mixup => Ok((mixup(&ta, &tb, c.lambda())?, false)),
        MixMethod::QuantumMix | MixMethod::SuperposeSample => {
            if ta.is_square() {
                let mixed = match method {
                    MixMethod::QuantumMix => quantum_mix(&ta, &tb, c)?,
                    _ => superpose_matrices(&ta, &tb, c)?,
                };
                Ok((mixed, false))
            } else {
                let scale = 1.0 / (c.lambda() + c.complement());
                let mut out = ta.scale(c.lambda());
                out.axpy(c.complement(), &tb)?;
                Ok((out.scale(scale), true))
            }
        }
        MixMethod::SuperposeDensity => Err(Error::Config(
            "density method is not defined for frame sequences".into(),
        )),
    }
}
