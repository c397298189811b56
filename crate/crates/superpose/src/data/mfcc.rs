//! MFCC front end: Hamming-windowed frames, power spectrum, HTK-scale
//! triangular mel filterbank, floored log, orthonormal DCT-II.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::numeric::Matrix;

#[derive(Debug, Clone)]
pub struct MfccParams {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub log_floor: f64,
}

impl Default for MfccParams {
    fn default() -> Self {
        MfccParams {
            frame_ms: 25.0,
            hop_ms: 10.0,
            n_mels: 26,
            n_coeffs: 13,
            log_floor: 1e-10,
        }
    }
}

impl MfccParams {
    fn validate(&self) -> Result<()> {
        if self.n_coeffs > self.n_mels {
            return Err(Error::Config(format!(
                "n_coeffs {} exceeds n_mels {}",
                self.n_coeffs, self.n_mels
            )));
        }
        if self.frame_ms <= self.hop_ms {
            return Err(Error::Config("frame length must exceed hop".into()));
        }
        Ok(())
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filterbank over FFT bins, filters equally spaced on the mel
/// scale from 0 Hz to Nyquist. Returned as n_mels rows of bin weights.
fn mel_filterbank(n_mels: usize, fft_size: usize, rate: f64) -> Vec<Vec<f64>> {
    let n_bins = fft_size / 2 + 1;
    let mel_max = hz_to_mel(rate / 2.0);
    let points: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = rate / fft_size as f64;
    let mut bank = vec![vec![0.0; n_bins]; n_mels];
    for m in 0..n_mels {
        let (lo, mid, hi) = (points[m], points[m + 1], points[m + 2]);
        for (b, w) in bank[m].iter_mut().enumerate() {
            let f = b as f64 * bin_hz;
            if f > lo && f < mid {
                *w = (f - lo) / (mid - lo);
            } else if f >= mid && f < hi {
                *w = (hi - f) / (hi - mid);
            }
        }
    }
    bank
}

/// Extracts a T x n_coeffs MFCC matrix. T = floor((N - frame) / hop) + 1.
pub fn mfcc(samples: &[f64], rate: u32, params: &MfccParams) -> Result<Matrix> {
    params.validate()?;
    let rate_f = rate as f64;
    let frame = (params.frame_ms * rate_f / 1000.0).round() as usize;
    let hop = (params.hop_ms * rate_f / 1000.0).round() as usize;
    if samples.len() < frame {
        return Err(Error::Range(format!(
            "{} samples shorter than one {frame}-sample frame",
            samples.len()
        )));
    }
    let fft_size = frame.next_power_of_two();
    let n_frames = (samples.len() - frame) / hop + 1;

    let window: Vec<f64> = (0..frame)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (frame - 1) as f64).cos())
        .collect();
    let bank = mel_filterbank(params.n_mels, fft_size, rate_f);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);

    let mut out = Matrix::zeros(n_frames, params.n_coeffs);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    for t in 0..n_frames {
        let start = t * hop;
        for (i, c) in buf.iter_mut().enumerate() {
            *c = if i < frame {
                Complex::new(samples[start + i] * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..fft_size / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr())
            .collect();
        let log_mels: Vec<f64> = bank
            .iter()
            .map(|filt| {
                let e: f64 = filt.iter().zip(&power).map(|(w, p)| w * p).sum();
                e.max(params.log_floor).ln()
            })
            .collect();
        // Orthonormal DCT-II, first n_coeffs coefficients.
        let n = params.n_mels as f64;
        let row = out.row_mut(t);
        for (k, c) in row.iter_mut().enumerate() {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            *c = scale
                * log_mels
                    .iter()
                    .enumerate()
                    .map(|(m, &x)| {
                        x * (std::f64::consts::PI * k as f64 * (2.0 * m as f64 + 1.0) / (2.0 * n))
                            .cos()
                    })
                    .sum::<f64>();
        }
    }
    Ok(out)
}
