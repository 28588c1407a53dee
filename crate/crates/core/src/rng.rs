//! Seeded randomness. Everything random in the crate goes through [`Rng`], a
//! ChaCha8 stream keyed by a `u64` seed, so runs are bit-reproducible across
//! platforms.

use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StandardUniform};

use crate::tensor::{axpy, dot, norm, Matrix};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for sub-task `index`. Depends only on this
    /// generator's seed, never on how much of its stream has been consumed,
    /// so parallel work can derive children in any order.
    pub fn child(&self, index: u64) -> Rng {
        Rng::new(mix(self.seed ^ mix(index.wrapping_add(0x9e37_79b9_7f4a_7c15))))
    }

    pub fn gaussian(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        StandardUniform.sample(&mut self.inner)
    }

    /// Uniform integer in `0..bound`. `bound` must be positive.
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "below() needs a positive bound");
        // Lemire's multiply-shift; the bias is below 2^-32 for our sizes.
        ((u128::from(self.inner.next_u64()) * bound as u128) >> 64) as usize
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn gaussian_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.gaussian()).collect()
    }

    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        let data = self.gaussian_vec(rows * cols);
        Matrix::from_vec(rows, cols, data).expect("gaussian draws are finite")
    }

    /// Random unit vector, uniform on the sphere.
    pub fn unit_vector(&mut self, d: usize) -> Vec<f64> {
        loop {
            let mut v = self.gaussian_vec(d);
            let n = norm(&v);
            if n > 1e-12 {
                v.iter_mut().for_each(|x| *x /= n);
                return v;
            }
        }
    }
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `n` i.i.d. draws from `N(mean, std^2)`.
pub fn gauss_sample(rng: &mut Rng, n: usize, mean: f64, std: f64) -> Result<Vec<f64>> {
    if !(std >= 0.0) || !std.is_finite() || !mean.is_finite() {
        return Err(Error::param("gauss_sample needs a finite mean and std >= 0"));
    }
    Ok((0..n).map(|_| mean + std * rng.gaussian()).collect())
}

/// A `d_r x d` matrix with orthonormal rows, built by Gram-Schmidt (two
/// passes per row) over Gaussian draws.
pub fn orthogonal_init(rng: &mut Rng, d_r: usize, d: usize) -> Result<Matrix> {
    if d_r > d {
        return Err(Error::param(alloc::format!(
            "orthogonal_init needs d_r <= d, got d_r = {d_r}, d = {d}"
        )));
    }
    let mut p = Matrix::zeros(d_r, d);
    let mut i = 0;
    while i < d_r {
        let mut v = rng.gaussian_vec(d);
        let start = norm(&v);
        for _pass in 0..2 {
            for j in 0..i {
                let coef = dot(p.row(j), &v);
                axpy(-coef, p.row(j), &mut v);
            }
        }
        let n = norm(&v);
        // a draw almost inside the span so far; take another
        if n < 1e-6 * start {
            continue;
        }
        for (dst, x) in p.row_mut(i).iter_mut().zip(&v) {
            *dst = x / n;
        }
        i += 1;
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram_error(p: &Matrix) -> f64 {
        let g = p.matmul(&p.transpose()).unwrap();
        g.max_abs_diff(&Matrix::identity(p.rows()))
    }

    #[test]
    fn same_seed_same_stream() {
        let a = gauss_sample(&mut Rng::new(42), 16, 0.0, 1.0).unwrap();
        let b = gauss_sample(&mut Rng::new(42), 16, 0.0, 1.0).unwrap();
        assert_eq!(a, b);
        let c = gauss_sample(&mut Rng::new(43), 16, 0.0, 1.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_std_is_constant() {
        let v = gauss_sample(&mut Rng::new(1), 10, 3.5, 0.0).unwrap();
        assert!(v.iter().all(|&x| x == 3.5));
    }

    #[test]
    fn negative_std_rejected() {
        assert!(gauss_sample(&mut Rng::new(1), 3, 0.0, -1.0).is_err());
    }

    #[test]
    fn sample_mean_converges() {
        let v = gauss_sample(&mut Rng::new(7), 1_000_000, 0.0, 1.0).unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 0.01, "mean = {mean}");
    }

    #[test]
    fn children_do_not_depend_on_parent_consumption() {
        let parent = Rng::new(5);
        let mut used = parent.clone();
        used.gaussian();
        assert_eq!(parent.child(3).gaussian(), used.child(3).gaussian());
        assert_ne!(parent.child(3).gaussian(), parent.child(4).gaussian());
    }

    #[test]
    fn orthogonal_rank_8_of_64() {
        let p = orthogonal_init(&mut Rng::new(0), 8, 64).unwrap();
        assert_eq!(p.shape(), (8, 64));
        assert!(gram_error(&p) < 1e-10);
        for r in p.row_iter() {
            assert!((norm(r) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_rejects_wide_rank() {
        assert!(orthogonal_init(&mut Rng::new(0), 5, 4).is_err());
    }

    #[test]
    fn below_stays_in_range() {
        let mut rng = Rng::new(9);
        for _ in 0..1000 {
            assert!(rng.below(7) < 7);
        }
    }
}
