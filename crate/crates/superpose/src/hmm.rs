//! Diagonal-covariance Gaussian HMM with log-space forward scoring and
//! Baum-Welch fitting, plus a one-model-per-class digit classifier.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::rng::SeededRng;

/// Smallest admissible emission variance.
pub const VAR_FLOOR: f64 = 1e-4;

/// Ergodic HMM with one diagonal Gaussian per state.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    /// Initial state probabilities, length n_states.
    pub pi: Vec<f64>,
    /// Row-stochastic transition matrix, n_states x n_states.
    pub trans: Matrix,
    /// Emission means, n_states x dim.
    pub means: Matrix,
    /// Diagonal emission variances, n_states x dim, each >= VAR_FLOOR.
    pub vars: Matrix,
}

impl HmmModel {
    pub fn n_states(&self) -> usize {
        self.pi.len()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    fn check_frames(&self, frames: &Matrix) -> Result<()> {
        if frames.cols() != self.dim() {
            return Err(Error::Shape(format!(
                "frame dim {} vs model dim {}",
                frames.cols(),
                self.dim()
            )));
        }
        if frames.rows() == 0 {
            return Err(Error::Shape("empty frame sequence".into()));
        }
        Ok(())
    }

    /// log N(x | mean_s, diag(vars_s)).
    pub fn log_emission(&self, state: usize, x: &[f64]) -> f64 {
        let mean = self.means.row(state);
        let var = self.vars.row(state);
        let mut acc = 0.0;
        for d in 0..x.len() {
            let diff = x[d] - mean[d];
            acc += -0.5 * (2.0 * std::f64::consts::PI * var[d]).ln()
                - diff * diff / (2.0 * var[d]);
        }
        acc
    }

    /// T x S matrix of per-frame, per-state emission log-probabilities.
    fn log_emissions(&self, frames: &Matrix) -> Matrix {
        let (t_len, s_len) = (frames.rows(), self.n_states());
        let mut out = Matrix::zeros(t_len, s_len);
        for t in 0..t_len {
            let x = frames.row(t);
            for s in 0..s_len {
                out.set(t, s, self.log_emission(s, x));
            }
        }
        out
    }

    /// log P(frames | model) via the forward algorithm in log space.
    pub fn log_forward(&self, frames: &Matrix) -> Result<f64> {
        self.check_frames(frames)?;
        let log_b = self.log_emissions(frames);
        let alpha = self.log_alpha(&log_b);
        Ok(log_sum_exp(alpha.row(alpha.rows() - 1)))
    }

    fn log_alpha(&self, log_b: &Matrix) -> Matrix {
        let (t_len, s_len) = (log_b.rows(), self.n_states());
        let mut alpha = Matrix::zeros(t_len, s_len);
        for s in 0..s_len {
            alpha.set(0, s, self.pi[s].ln() + log_b.get(0, s));
        }
        let mut buf = vec![0.0; s_len];
        for t in 1..t_len {
            for j in 0..s_len {
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = alpha.get(t - 1, i) + self.trans.get(i, j).ln();
                }
                alpha.set(t, j, log_sum_exp(&buf) + log_b.get(t, j));
            }
        }
        alpha
    }

    fn log_beta(&self, log_b: &Matrix) -> Matrix {
        let (t_len, s_len) = (log_b.rows(), self.n_states());
        let mut beta = Matrix::zeros(t_len, s_len); // last row = ln 1 = 0
        let mut buf = vec![0.0; s_len];
        for t in (0..t_len.saturating_sub(1)).rev() {
            for i in 0..s_len {
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = self.trans.get(i, j).ln() + log_b.get(t + 1, j) + beta.get(t + 1, j);
                }
                beta.set(t, i, log_sum_exp(&buf));
            }
        }
        beta
    }

    /// EM re-estimation over a set of sequences. Returns the refit model and
    /// the per-iteration total log-likelihood trace (evaluated before each
    /// update, so the trace is non-decreasing up to numerical tolerance).
    pub fn baum_welch_fit(
        mut self,
        sequences: &[Matrix],
        max_iters: usize,
        tol: f64,
    ) -> Result<(HmmModel, Vec<f64>)> {
        if sequences.is_empty() {
            return Err(Error::Config("no training sequences".into()));
        }
        for seq in sequences {
            self.check_frames(seq)?;
        }
        let (s_len, dim) = (self.n_states(), self.dim());
        let mut trace = Vec::new();
        for _ in 0..max_iters {
            let mut pi_acc = vec![0.0; s_len];
            let mut trans_num = Matrix::zeros(s_len, s_len);
            let mut trans_den = vec![0.0; s_len];
            let mut mean_num = Matrix::zeros(s_len, dim);
            let mut sq_num = Matrix::zeros(s_len, dim);
            let mut gamma_sum = vec![0.0; s_len];
            let mut total_ll = 0.0;

            for seq in sequences {
                let log_b = self.log_emissions(seq);
                let alpha = self.log_alpha(&log_b);
                let beta = self.log_beta(&log_b);
                let ll = log_sum_exp(alpha.row(alpha.rows() - 1));
                if !ll.is_finite() {
                    return Err(Error::Divergence("non-finite sequence likelihood".into()));
                }
                total_ll += ll;
                let t_len = seq.rows();
                for t in 0..t_len {
                    let x = seq.row(t);
                    for s in 0..s_len {
                        let g = (alpha.get(t, s) + beta.get(t, s) - ll).exp();
                        if t == 0 {
                            pi_acc[s] += g;
                        }
                        gamma_sum[s] += g;
                        if t + 1 < t_len {
                            trans_den[s] += g;
                        }
                        for (d, &xv) in x.iter().enumerate() {
                            mean_num.set(s, d, mean_num.get(s, d) + g * xv);
                            sq_num.set(s, d, sq_num.get(s, d) + g * xv * xv);
                        }
                    }
                }
                for t in 0..t_len.saturating_sub(1) {
                    for i in 0..s_len {
                        for j in 0..s_len {
                            let xi = (alpha.get(t, i)
                                + self.trans.get(i, j).ln()
                                + log_b.get(t + 1, j)
                                + beta.get(t + 1, j)
                                - ll)
                                .exp();
                            trans_num.set(i, j, trans_num.get(i, j) + xi);
                        }
                    }
                }
            }

            trace.push(total_ll);
            if trace.len() >= 2 {
                let improvement = trace[trace.len() - 1] - trace[trace.len() - 2];
                if improvement < tol {
                    break;
                }
            }

            // M-step.
            let pi_total: f64 = pi_acc.iter().sum();
            for (p, acc) in self.pi.iter_mut().zip(&pi_acc) {
                *p = acc / pi_total;
            }
            for (i, &den) in trans_den.iter().enumerate() {
                if den > 0.0 {
                    for j in 0..s_len {
                        self.trans.set(i, j, trans_num.get(i, j) / den);
                    }
                }
            }
            for (s, &gs) in gamma_sum.iter().enumerate() {
                if gs > 0.0 {
                    for d in 0..dim {
                        let mean = mean_num.get(s, d) / gs;
                        let var = sq_num.get(s, d) / gs - mean * mean;
                        self.means.set(s, d, mean);
                        self.vars.set(s, d, var.max(VAR_FLOOR));
                    }
                }
            }
        }
        Ok((self, trace))
    }

    /// Generative draw of `t_len` frames; oracle for classifier tests.
    pub fn sample_sequence(&self, t_len: usize, rng: &mut SeededRng) -> Matrix {
        let mut frames = Matrix::zeros(t_len, self.dim());
        let mut state = pick_categorical(&self.pi, rng);
        for t in 0..t_len {
            for d in 0..self.dim() {
                frames.set(
                    t,
                    d,
                    rng.normal(self.means.get(state, d), self.vars.get(state, d).sqrt()),
                );
            }
            state = pick_categorical(self.trans.row(state), rng);
        }
        frames
    }
}

fn pick_categorical(probs: &[f64], rng: &mut SeededRng) -> usize {
    let u = rng.next_f64();
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    probs.len() - 1
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// One HMM per class; classification is maximum likelihood (uniform prior).
#[derive(Debug, Clone, PartialEq)]
pub struct HmmClassifier {
    pub models: Vec<HmmModel>,
}

impl HmmClassifier {
    pub fn n_classes(&self) -> usize {
        self.models.len()
    }

    /// Argmax over per-class forward log-likelihoods; ties resolve to the
    /// lowest class index.
    pub fn classify(&self, frames: &Matrix) -> Result<(usize, Vec<f64>)> {
        let scores: Vec<f64> = self
            .models
            .iter()
            .map(|m| m.log_forward(frames))
            .collect::<Result<_>>()?;
        Ok((crate::numeric::argmax(&scores), scores))
    }
}

/// Deterministic k-means-free init: state means sit at evenly spaced
/// quantiles of the pooled frames, pi and transitions uniform, unit variances.
pub fn init_model(sequences: &[Matrix], n_states: usize) -> Result<HmmModel> {
    if sequences.is_empty() {
        return Err(Error::Config("no sequences for initialization".into()));
    }
    let dim = sequences[0].cols();
    let mut means = Matrix::zeros(n_states, dim);
    for d in 0..dim {
        let mut col: Vec<f64> = sequences
            .iter()
            .flat_map(|seq| (0..seq.rows()).map(move |t| seq.get(t, d)))
            .collect();
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for s in 0..n_states {
            let q = (s as f64 + 0.5) / n_states as f64;
            let idx = ((col.len() as f64 * q) as usize).min(col.len() - 1);
            means.set(s, d, col[idx]);
        }
    }
    Ok(HmmModel {
        pi: vec![1.0 / n_states as f64; n_states],
        trans: Matrix::from_vec(
            n_states,
            n_states,
            vec![1.0 / n_states as f64; n_states * n_states],
        )?,
        means,
        vars: Matrix::from_vec(n_states, dim, vec![1.0; n_states * dim])?,
    })
}

/// Fits one HMM per class. `grouped[k]` holds class k's training sequences.
pub fn train_classifier(
    grouped: &[Vec<Matrix>],
    n_states: usize,
    max_iters: usize,
    tol: f64,
) -> Result<HmmClassifier> {
    let mut models = Vec::with_capacity(grouped.len());
    for (class, sequences) in grouped.iter().enumerate() {
        if sequences.is_empty() {
            return Err(Error::Config(format!("class {class} has no sequences")));
        }
        let init = init_model(sequences, n_states)?;
        let (model, _) = init.baum_welch_fit(sequences, max_iters, tol)?;
        models.push(model);
    }
    Ok(HmmClassifier { models })
}

const BANK_MAGIC: &[u8; 4] = b"HMMB";
const BANK_VERSION: u32 = 1;

/// Serializes the model bank (magic, version, n_classes, per-model blocks of
/// little-endian f64s).
pub fn save_bank(clf: &HmmClassifier, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(BANK_MAGIC)?;
    w.write_u32::<LittleEndian>(BANK_VERSION)?;
    w.write_u32::<LittleEndian>(clf.models.len() as u32)?;
    for m in &clf.models {
        w.write_u32::<LittleEndian>(m.n_states() as u32)?;
        w.write_u32::<LittleEndian>(m.dim() as u32)?;
        for &x in &m.pi {
            w.write_f64::<LittleEndian>(x)?;
        }
        for mat in [&m.trans, &m.means, &m.vars] {
            for &x in mat.as_slice() {
                w.write_f64::<LittleEndian>(x)?;
            }
        }
    }
    Ok(())
}

pub fn load_bank(path: &Path) -> Result<HmmClassifier> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| truncated(path))?;
    if &magic != BANK_MAGIC {
        return Err(Error::Format(format!("{}: bad magic", path.display())));
    }
    let version = r.read_u32::<LittleEndian>().map_err(|_| truncated(path))?;
    if version != BANK_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let n_models = r.read_u32::<LittleEndian>().map_err(|_| truncated(path))? as usize;
    let mut models = Vec::with_capacity(n_models);
    for _ in 0..n_models {
        let n_states = r.read_u32::<LittleEndian>().map_err(|_| truncated(path))? as usize;
        let dim = r.read_u32::<LittleEndian>().map_err(|_| truncated(path))? as usize;
        let mut read_vec = |len: usize| -> Result<Vec<f64>> {
            let mut v = vec![0.0; len];
            for x in v.iter_mut() {
                *x = r.read_f64::<LittleEndian>().map_err(|_| truncated(path))?;
            }
            Ok(v)
        };
        let pi = read_vec(n_states)?;
        let trans = Matrix::from_vec(n_states, n_states, read_vec(n_states * n_states)?)?;
        let means = Matrix::from_vec(n_states, dim, read_vec(n_states * dim)?)?;
        let vars = Matrix::from_vec(n_states, dim, read_vec(n_states * dim)?)?;
        models.push(HmmModel {
            pi,
            trans,
            means,
            vars,
        });
    }
    Ok(HmmClassifier { models })
}

fn truncated(path: &Path) -> Error {
    Error::Format(format!("{}: truncated HMM bank", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_state_standard_normal() -> HmmModel {
        HmmModel {
            pi: vec![1.0],
            trans: Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
            means: Matrix::from_vec(1, 1, vec![0.0]).unwrap(),
            vars: Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
        }
    }

    #[test]
    fn log_forward_standard_normal_at_zero() {
        let m = single_state_standard_normal();
        let ll = m
            .log_forward(&Matrix::from_vec(1, 1, vec![0.0]).unwrap())
            .unwrap();
        let expect = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((ll - expect).abs() < 1e-9, "{ll} vs {expect}");
        let ll2 = m
            .log_forward(&Matrix::from_vec(2, 1, vec![0.0, 0.0]).unwrap())
            .unwrap();
        assert!((ll2 - 2.0 * expect).abs() < 1e-9);
    }

    #[test]
    fn log_forward_translation_invariance() {
        let mut rng = SeededRng::new(3);
        let mut m = random_model(&mut rng, 3, 2);
        let frames = Matrix::from_vec(4, 2, rng.normal_vec(8, 0.0, 1.0)).unwrap();
        let base = m.log_forward(&frames).unwrap();
        let shift = 2.75;
        let shifted_frames = frames.map(|x| x + shift);
        m.means = m.means.map(|x| x + shift);
        let moved = m.log_forward(&shifted_frames).unwrap();
        assert!((base - moved).abs() < 1e-9);
    }

    fn random_model(rng: &mut SeededRng, n_states: usize, dim: usize) -> HmmModel {
        let mut pi: Vec<f64> = (0..n_states).map(|_| 0.2 + rng.next_f64()).collect();
        let sum: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= sum);
        let mut trans = Matrix::zeros(n_states, n_states);
        for i in 0..n_states {
            let row: Vec<f64> = (0..n_states).map(|_| 0.2 + rng.next_f64()).collect();
            let s: f64 = row.iter().sum();
            for (j, v) in row.iter().enumerate() {
                trans.set(i, j, v / s);
            }
        }
        HmmModel {
            pi,
            trans,
            means: Matrix::from_vec(n_states, dim, rng.normal_vec(n_states * dim, 0.0, 2.0))
                .unwrap(),
            vars: Matrix::from_vec(
                n_states,
                dim,
                (0..n_states * dim).map(|_| 0.5 + rng.next_f64()).collect(),
            )
            .unwrap(),
        }
    }

    /// Brute-force path enumeration: log sum over all state paths of
    /// pi(s0) b(s0) prod a(s_{t-1}, s_t) b(s_t).
    fn brute_force_log_forward(m: &HmmModel, frames: &Matrix) -> f64 {
        let (t_len, s_len) = (frames.rows(), m.n_states());
        let n_paths = s_len.pow(t_len as u32);
        let mut terms = Vec::with_capacity(n_paths);
        for code in 0..n_paths {
            let mut c = code;
            let mut path = Vec::with_capacity(t_len);
            for _ in 0..t_len {
                path.push(c % s_len);
                c /= s_len;
            }
            let mut lp = m.pi[path[0]].ln() + m.log_emission(path[0], frames.row(0));
            for t in 1..t_len {
                lp += m.trans.get(path[t - 1], path[t]).ln()
                    + m.log_emission(path[t], frames.row(t));
            }
            terms.push(lp);
        }
        log_sum_exp(&terms)
    }

    #[test]
    fn forward_matches_brute_force_enumeration() {
        let mut rng = SeededRng::new(44);
        for n_states in 1..=3 {
            for t_len in 1..=5 {
                let m = random_model(&mut rng, n_states, 2);
                let frames =
                    Matrix::from_vec(t_len, 2, rng.normal_vec(t_len * 2, 0.0, 1.5)).unwrap();
                let fast = m.log_forward(&frames).unwrap();
                let slow = brute_force_log_forward(&m, &frames);
                assert!(
                    (fast - slow).abs() < 1e-8,
                    "S={n_states} T={t_len}: {fast} vs {slow}"
                );
            }
        }
    }

    #[test]
    fn baum_welch_degenerate_constant_data() {
        let m = single_state_standard_normal();
        let seqs = vec![Matrix::from_vec(10, 1, vec![1.0; 10]).unwrap()];
        let (fit, _) = m.baum_welch_fit(&seqs, 30, 1e-12).unwrap();
        assert!((fit.means.get(0, 0) - 1.0).abs() < 1e-6);
        assert_eq!(fit.vars.get(0, 0), VAR_FLOOR);
    }

    #[test]
    fn baum_welch_monotone_loglik_on_random_data() {
        let mut rng = SeededRng::new(7);
        let init = random_model(&mut rng, 3, 2);
        let seqs: Vec<Matrix> = (0..4)
            .map(|_| Matrix::from_vec(12, 2, rng.normal_vec(24, 0.0, 1.0)).unwrap())
            .collect();
        let (fit, trace) = init.baum_welch_fit(&seqs, 20, -1.0).unwrap();
        assert_eq!(trace.len(), 20);
        for w in trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "log-lik decreased: {} -> {}", w[0], w[1]);
        }
        // Stochasticity preserved.
        assert!((fit.pi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in 0..3 {
            assert!((fit.trans.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(fit.vars.as_slice().iter().all(|&v| v >= VAR_FLOOR));
    }

    #[test]
    fn refit_at_fixed_point_stops_immediately() {
        let mut rng = SeededRng::new(15);
        let init = random_model(&mut rng, 2, 2);
        let seqs: Vec<Matrix> = (0..3)
            .map(|_| Matrix::from_vec(8, 2, rng.normal_vec(16, 0.0, 1.0)).unwrap())
            .collect();
        let tol = 1e-7;
        let (fit, _) = init.baum_welch_fit(&seqs, 60, tol).unwrap();
        let (_, trace) = fit.baum_welch_fit(&seqs, 10, tol).unwrap();
        assert!(trace.len() <= 2, "refit kept improving: {trace:?}");
    }

    #[test]
    fn classify_tie_breaks_low_and_is_shift_invariant() {
        let m = single_state_standard_normal();
        let clf = HmmClassifier {
            models: vec![m.clone(), m],
        };
        let frames = Matrix::from_vec(3, 1, vec![0.1, -0.2, 0.4]).unwrap();
        let (class, scores) = clf.classify(&frames).unwrap();
        assert_eq!(class, 0);
        assert!((scores[0] - scores[1]).abs() < 1e-12);
    }

    #[test]
    fn train_classifier_single_class_always_wins() {
        let mut rng = SeededRng::new(2);
        let seqs: Vec<Matrix> = (0..5)
            .map(|_| Matrix::from_vec(10, 2, rng.normal_vec(20, 1.0, 0.5)).unwrap())
            .collect();
        let clf = train_classifier(&[seqs], 2, 5, 1e-4).unwrap();
        assert_eq!(clf.n_classes(), 1);
        let probe = Matrix::from_vec(4, 2, rng.normal_vec(8, 0.0, 1.0)).unwrap();
        assert_eq!(clf.classify(&probe).unwrap().0, 0);
    }

    #[test]
    fn train_classifier_deterministic() {
        let mut rng = SeededRng::new(5);
        let grouped: Vec<Vec<Matrix>> = (0..3)
            .map(|k| {
                (0..4)
                    .map(|_| {
                        Matrix::from_vec(8, 2, rng.normal_vec(16, k as f64 * 3.0, 0.6)).unwrap()
                    })
                    .collect()
            })
            .collect();
        let a = train_classifier(&grouped, 3, 8, 1e-5).unwrap();
        let b = train_classifier(&grouped, 3, 8, 1e-5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bank_round_trip() {
        let mut rng = SeededRng::new(91);
        let clf = HmmClassifier {
            models: (0..4).map(|_| random_model(&mut rng, 3, 5)).collect(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.hmm");
        save_bank(&clf, &path).unwrap();
        assert_eq!(load_bank(&path).unwrap(), clf);
    }
}
