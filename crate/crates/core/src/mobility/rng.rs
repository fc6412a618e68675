use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

/// Seeded generator used by every sampler. A stream is a pure function of
/// its seed; substreams let sample `i` of a batch be drawn independently of
/// how the batch is scheduled.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream for item `index` under `master`.
    pub fn substream(master: u64, index: u64) -> Self {
        Self::new(splitmix64(splitmix64(master) ^ index))
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform over `0..n`. `n` must be positive.
    pub fn uniform_index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Gamma(shape, 1) variate; `shape > 0`.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        Gamma::new(shape, 1.0).expect("positive gamma shape").sample(&mut self.inner)
    }

    /// Index drawn with probability proportional to `weights` (non-negative,
    /// positive total).
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let target = self.uniform() * total;
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if target < acc {
                return i;
            }
        }
        // Rounding can leave target == total; take the last positive weight.
        weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1)
    }

    /// Probability vector from Dirichlet(alphas), via normalised gamma variates.
    pub fn dirichlet(&mut self, alphas: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = alphas.iter().map(|&a| self.gamma(a)).collect();
        let total: f64 = g.iter().sum();
        if total > 0.0 {
            g.iter_mut().for_each(|x| *x /= total);
        } else {
            // All variates underflowed; fall back to the Dirichlet mean.
            let a: f64 = alphas.iter().sum();
            g.iter_mut().zip(alphas).for_each(|(x, al)| *x = al / a);
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_draws() {
        let mut a = RngStream::new(42);
        let mut b = RngStream::new(42);
        for _ in 0..100 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
            assert_eq!(a.gamma(2.5).to_bits(), b.gamma(2.5).to_bits());
        }
        let mut s1 = RngStream::substream(7, 3);
        let mut s2 = RngStream::substream(7, 3);
        let mut s3 = RngStream::substream(7, 4);
        let x = s1.uniform();
        assert_eq!(x, s2.uniform());
        assert_ne!(x, s3.uniform());
    }

    #[test]
    fn dirichlet_is_a_distribution() {
        let mut r = RngStream::new(1);
        for _ in 0..100 {
            let p = r.dirichlet(&[1.0, 5.0, 0.5, 101.0]);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn categorical_skips_zero_weights() {
        let mut r = RngStream::new(2);
        for _ in 0..1000 {
            let i = r.categorical(&[0.0, 1.0, 0.0, 3.0, 0.0]);
            assert!(i == 1 || i == 3);
        }
    }
}
