//! Seeded random number generation.
//!
//! The generator is xoshiro256++ seeded through SplitMix64, so a 64-bit seed
//! reproduces the same stream on every platform. Normal draws use the
//! Box-Muller transform on two uniform draws, with the second variate cached.

/// Deterministic 64-bit RNG (xoshiro256++, SplitMix64 seeding).
#[derive(Debug, Clone)]
pub struct SeededRng {
    state: [u64; 4],
    spare_normal: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        // SplitMix64 expansion of the seed into the xoshiro state.
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_add(0x9E3779B97F4A7C15);
            let mut z = s;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
            z ^ (z >> 31)
        };
        SeededRng {
            state: [next(), next(), next(), next()],
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform index in [0, n). Uses the 128-bit multiply reduction.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index() requires n > 0");
        (((self.next_u64() as u128) * (n as u128)) >> 64) as usize
    }

    /// One N(mean, std^2) draw via Box-Muller.
    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        if std == 0.0 {
            return mean;
        }
        if let Some(z) = self.spare_normal.take() {
            return mean + std * z;
        }
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        mean + std * r * theta.cos()
    }

    /// `n` draws from N(mean, std^2). With std == 0 this returns `n` copies
    /// of `mean` without consuming generator state.
    pub fn normal_vec(&mut self, n: usize, mean: f64, std: f64) -> Vec<f64> {
        assert!(std >= 0.0, "normal_vec() requires std >= 0");
        if std == 0.0 {
            return vec![mean; n];
        }
        (0..n).map(|_| self.normal(mean, std)).collect()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SeededRng::new(7);
        let mut b = SeededRng::new(7);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let va = SeededRng::new(99).normal_vec(64, 1.5, 2.0);
        let vb = SeededRng::new(99).normal_vec(64, 1.5, 2.0);
        assert_eq!(va, vb);
    }

    #[test]
    fn zero_std_returns_mean_copies() {
        let v = SeededRng::new(1).normal_vec(5, 3.25, 0.0);
        assert_eq!(v, vec![3.25; 5]);
    }

    #[test]
    fn normal_sample_mean_near_zero() {
        // Law-of-large-numbers check: 1e5 standard normals.
        let v = SeededRng::new(42).normal_vec(100_000, 0.0, 1.0);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 0.02, "sample mean {mean} too far from 0");
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64;
        assert!((var - 1.0).abs() < 0.05, "sample variance {var} too far from 1");
    }

    #[test]
    fn index_covers_range_uniformly() {
        let mut rng = SeededRng::new(3);
        let mut counts = [0usize; 4];
        for _ in 0..4000 {
            counts[rng.index(4)] += 1;
        }
        for c in counts {
            assert!(c > 800 && c < 1200, "count {c} outside loose uniform band");
        }
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut v: Vec<u32> = (0..100).collect();
        SeededRng::new(5).shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        assert_ne!(v, (0..100).collect::<Vec<_>>());
    }
}
