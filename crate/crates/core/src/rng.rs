//! Deterministic, splittable random streams.
//!
//! Stream `(seed, index)` is a ChaCha8 generator whose 256-bit key is the
//! SplitMix64 expansion of `seed` and whose 64-bit stream id is `index`.
//! Streams are independent of the order in which they are created or
//! consumed, so parallel sampling reproduces serial sampling bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::hermite::C64;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The ChaCha8 generator for stream `index` under `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Standard complex Gaussians with density `(1/π) e^{−|z|²}`.
#[derive(Debug, Clone)]
pub struct ComplexGaussianStream {
    seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

impl ComplexGaussianStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        Self {
            seed,
            stream_index,
            rng: stream_rng(seed, stream_index),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Real and imaginary parts are independent N(0, 1/2).
    pub fn next_gaussian(&mut self) -> C64 {
        let re: f64 = self.rng.sample(StandardNormal);
        let im: f64 = self.rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_pairs_reproduce() {
        let mut a = ComplexGaussianStream::new(7, 3);
        let mut b = ComplexGaussianStream::new(7, 3);
        for _ in 0..100 {
            assert_eq!(a.next_gaussian(), b.next_gaussian());
        }
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = ComplexGaussianStream::new(7, 3);
        let mut b = ComplexGaussianStream::new(7, 4);
        let mut c = ComplexGaussianStream::new(8, 3);
        let x = a.next_gaussian();
        assert_ne!(x, b.next_gaussian());
        assert_ne!(x, c.next_gaussian());
    }

    #[test]
    fn moments_of_complex_gaussian() {
        let mut s = ComplexGaussianStream::new(11, 0);
        let n = 200_000;
        let (mut re2, mut im2, mut cross, mut abs2) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let z = s.next_gaussian();
            re2 += z.re * z.re;
            im2 += z.im * z.im;
            cross += z.re * z.im;
            abs2 += z.norm_sqr();
        }
        let nf = n as f64;
        assert!((re2 / nf - 0.5).abs() < 0.01);
        assert!((im2 / nf - 0.5).abs() < 0.01);
        assert!((cross / nf).abs() < 0.01);
        assert!((abs2 / nf - 1.0).abs() < 0.01);
    }
}
