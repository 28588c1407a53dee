//! Single-head scaled dot-product attention with an additive per-key bias.
//!
//! For query row `i` and key `j` the logit is
//! `q_i . k_j / sqrt(d) + bias[j] + mask[i][j]`. The bias is indexed by the
//! attended (key) position: a bias that depended only on the query row would
//! be a row constant and cancel in the softmax.

use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{dot, entropy, softmax_in_place, Matrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AttentionInput<'a> {
    pub q: &'a Matrix,
    pub k: &'a Matrix,
    pub v: &'a Matrix,
    pub bias: Option<&'a [f64]>,
    pub mask: Option<&'a Matrix>,
}

impl<'a> AttentionInput<'a> {
    pub fn new(q: &'a Matrix, k: &'a Matrix, v: &'a Matrix) -> Self {
        Self {
            q,
            k,
            v,
            bias: None,
            mask: None,
        }
    }

    pub fn with_bias(mut self, bias: &'a [f64]) -> Self {
        self.bias = Some(bias);
        self
    }

    pub fn with_mask(mut self, mask: &'a Matrix) -> Self {
        self.mask = Some(mask);
        self
    }

    fn validate(&self) -> Result<()> {
        let (n, d) = self.q.shape();
        let mismatch = |what, expected, found| Error::DimensionMismatch {
            what,
            expected,
            found,
        };
        if self.k.cols() != d {
            return Err(mismatch("key width", d, self.k.cols()));
        }
        if self.v.rows() != self.k.rows() {
            return Err(mismatch("value rows", self.k.rows(), self.v.rows()));
        }
        if self.k.rows() == 0 {
            return Err(Error::Empty("keys"));
        }
        if let Some(bias) = self.bias {
            if bias.len() != self.k.rows() {
                return Err(mismatch("bias length", self.k.rows(), bias.len()));
            }
            if bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::NonFinite("bias"));
            }
        }
        if let Some(mask) = self.mask {
            if mask.shape() != (n, self.k.rows()) {
                return Err(mismatch("mask rows", n, mask.rows()));
            }
            if mask.as_slice().iter().any(|&m| m.is_nan() || m == f64::INFINITY) {
                return Err(Error::NonFinite("mask"));
            }
        }
        if !(self.q.is_finite() && self.k.is_finite() && self.v.is_finite()) {
            return Err(Error::NonFinite("attention inputs"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub output: Matrix,
    pub weights: Matrix,
}

pub fn attend(input: &AttentionInput<'_>) -> Result<AttentionOutput> {
    input.validate()?;
    let n = input.q.rows();
    let m = input.k.rows();
    let mut weights = Matrix::zeros(n, m);
    let mut output = Matrix::zeros(n, input.v.cols());
    for i in 0..n {
        let w = weights.row_mut(i);
        row_logits(input, i, w);
        softmax_in_place(w)?;
        weighted_sum(w, input.v, output.row_mut(i));
    }
    Ok(AttentionOutput { output, weights })
}

/// Attention weights and output for a single query row. Avoids the `n x n`
/// weight matrix when only one position (e.g. the generation position)
/// matters.
pub fn attend_row(input: &AttentionInput<'_>, row: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    input.validate()?;
    if row >= input.q.rows() {
        return Err(Error::DimensionMismatch {
            what: "query row index",
            expected: input.q.rows(),
            found: row,
        });
    }
    let mut w = vec![0.0; input.k.rows()];
    row_logits(input, row, &mut w);
    softmax_in_place(&mut w)?;
    let mut out = vec![0.0; input.v.cols()];
    weighted_sum(&w, input.v, &mut out);
    Ok((w, out))
}

fn row_logits(input: &AttentionInput<'_>, i: usize, out: &mut [f64]) {
    let scale = 1.0 / libm::sqrt(input.q.cols().max(1) as f64);
    let q = input.q.row(i);
    let mask = input.mask.map(|m| m.row(i));
    for (j, logit) in out.iter_mut().enumerate() {
        if mask.is_some_and(|m| m[j] == f64::NEG_INFINITY) {
            *logit = f64::NEG_INFINITY;
            continue;
        }
        let mut x = dot(q, input.k.row(j)) * scale;
        if let Some(bias) = input.bias {
            x += bias[j];
        }
        if let Some(m) = mask {
            x += m[j];
        }
        *logit = x;
    }
}

fn weighted_sum(weights: &[f64], v: &Matrix, out: &mut [f64]) {
    for (&w, vj) in weights.iter().zip(v.row_iter()) {
        if w == 0.0 {
            continue;
        }
        for (o, x) in out.iter_mut().zip(vj) {
            *o += w * x;
        }
    }
}

/// Entropy (nats) of each row of an attention weight matrix.
pub fn row_entropies(weights: &Matrix) -> Result<Vec<f64>> {
    weights.row_iter().map(entropy).collect()
}

/// Decoder mask: position `i` may attend `j` iff `j <= i`.
pub fn causal_mask(n: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::Empty("causal mask size"));
    }
    let mut mask = Matrix::mask_filled(n, n, f64::NEG_INFINITY);
    for i in 0..n {
        for j in 0..=i {
            mask[(i, j)] = 0.0;
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rng;

    fn random_qkv(rng: &mut Rng, n: usize, d: usize) -> (Matrix, Matrix, Matrix) {
        (
            rng.gaussian_matrix(n, d),
            rng.gaussian_matrix(n, d),
            rng.gaussian_matrix(n, d),
        )
    }

    #[test]
    fn zero_bias_matches_no_bias() {
        let (q, k, v) = random_qkv(&mut Rng::new(1), 5, 4);
        let plain = attend(&AttentionInput::new(&q, &k, &v)).unwrap();
        let zeros = [0.0; 5];
        let biased = attend(&AttentionInput::new(&q, &k, &v).with_bias(&zeros)).unwrap();
        assert!(plain.weights.max_abs_diff(&biased.weights) <= 1e-15);
        assert!(plain.output.max_abs_diff(&biased.output) <= 1e-15);
    }

    #[test]
    fn ln3_bias_forces_quarter_split() {
        let q = Matrix::zeros(2, 1);
        let k = Matrix::zeros(2, 1);
        let v = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let bias = [0.0, libm::log(3.0)];
        let out = attend(&AttentionInput::new(&q, &k, &v).with_bias(&bias)).unwrap();
        for r in out.weights.row_iter() {
            assert!((r[0] - 0.25).abs() < 1e-15);
            assert!((r[1] - 0.75).abs() < 1e-15);
        }
        assert!((out.output[(0, 0)] - 1.75).abs() < 1e-15);
    }

    #[test]
    fn causal_mask_shapes() {
        assert_eq!(causal_mask(1).unwrap().as_slice(), &[0.0]);
        let m = causal_mask(3).unwrap();
        assert_eq!(m.row(0), &[0.0, f64::NEG_INFINITY, f64::NEG_INFINITY]);
        assert!(causal_mask(0).is_err());
    }

    #[test]
    fn causal_weights_are_lower_triangular() {
        let (q, k, v) = random_qkv(&mut Rng::new(2), 6, 3);
        let mask = causal_mask(6).unwrap();
        let out = attend(&AttentionInput::new(&q, &k, &v).with_mask(&mask)).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                if j > i {
                    assert_eq!(out.weights[(i, j)], 0.0);
                } else {
                    assert!(out.weights[(i, j)] > 0.0);
                }
            }
        }
        assert_eq!(out.weights[(0, 0)], 1.0);
    }

    #[test]
    fn fully_masked_row_is_an_error() {
        let (q, k, v) = random_qkv(&mut Rng::new(3), 2, 2);
        let mut mask = causal_mask(2).unwrap();
        mask[(0, 0)] = f64::NEG_INFINITY;
        let err = attend(&AttentionInput::new(&q, &k, &v).with_mask(&mask)).unwrap_err();
        assert_eq!(err, Error::FullyMasked);
    }

    #[test]
    fn dimension_errors() {
        let (q, k, v) = random_qkv(&mut Rng::new(4), 3, 2);
        let short = [0.0; 2];
        assert!(attend(&AttentionInput::new(&q, &k, &v).with_bias(&short)).is_err());
        let wide = Matrix::zeros(3, 5);
        assert!(attend(&AttentionInput::new(&q, &wide, &v)).is_err());
        let mask = causal_mask(2).unwrap();
        assert!(attend(&AttentionInput::new(&q, &k, &v).with_mask(&mask)).is_err());
    }

    #[test]
    fn attend_row_matches_full() {
        let (q, k, v) = random_qkv(&mut Rng::new(5), 7, 4);
        let bias: Vec<f64> = (0..7).map(|j| j as f64 * 0.3).collect();
        let mask = causal_mask(7).unwrap();
        let input = AttentionInput::new(&q, &k, &v).with_bias(&bias).with_mask(&mask);
        let full = attend(&input).unwrap();
        for i in 0..7 {
            let (w, o) = attend_row(&input, i).unwrap();
            assert_eq!(w.as_slice(), full.weights.row(i));
            assert_eq!(o.as_slice(), full.output.row(i));
        }
    }

    #[test]
    fn row_entropy_anchors() {
        let uniform = Matrix::from_vec(2, 4, vec![0.25; 8]).unwrap();
        for h in row_entropies(&uniform).unwrap() {
            assert!((h - libm::log(4.0)).abs() < 1e-15);
        }
        assert_eq!(row_entropies(&Matrix::identity(3)).unwrap(), vec![0.0; 3]);
        let w = Matrix::from_rows(&[vec![0.25, 0.75]]).unwrap();
        assert!((row_entropies(&w).unwrap()[0] - 0.562_335_144_618_808_8).abs() < 1e-15);
        let bad = Matrix::from_rows(&[vec![0.5, 0.4]]).unwrap();
        assert!(row_entropies(&bad).is_err());
    }
}
