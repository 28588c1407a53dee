//! Parallel-context attention masks.
//!
//! Each document attends only to the shared prefix and to itself, so scores
//! computed for it cannot be contaminated by other documents, while query
//! tokens attend to everything before them. Documents share one position
//! range (every window restarts right after the prefix), which makes their
//! processing independent of the order they were retrieved in.

use alloc::format;
use alloc::vec::Vec;

use crate::attention::{attend, causal_mask, AttentionInput};
use crate::balancing::ChunkLayout;
use crate::tensor::Matrix;
use crate::{Error, Result};

/// Largest deviation [`verify_isolation`] accepts.
pub const ISOLATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Region {
    Prefix,
    Chunk(usize),
    Query,
}

fn regions(layout: &ChunkLayout, total_len: usize) -> Result<Vec<Region>> {
    layout.validate(total_len)?;
    if !layout.is_contiguous(total_len) {
        return Err(Error::layout(format!(
            "parallel masks need prefix, chunks and query to tile all {total_len} tokens"
        )));
    }
    let mut out = Vec::with_capacity(total_len);
    out.extend((0..layout.prefix_len()).map(|_| Region::Prefix));
    for k in 0..layout.num_chunks() {
        out.extend((0..layout.chunk_len(k)).map(|_| Region::Chunk(k)));
    }
    out.resize(total_len, Region::Query);
    Ok(out)
}

/// Additive mask (0 or `-inf`): prefix tokens see the earlier prefix, a
/// document token sees the prefix and earlier tokens of its own document,
/// and query tokens see every earlier token.
pub fn build_parallel_mask(layout: &ChunkLayout, total_len: usize) -> Result<Matrix> {
    let region = regions(layout, total_len)?;
    let mut mask = Matrix::mask_filled(total_len, total_len, f64::NEG_INFINITY);
    for i in 0..total_len {
        for j in 0..=i {
            let visible = match (region[i], region[j]) {
                (Region::Query, _) => true,
                (Region::Prefix, Region::Prefix) => true,
                (Region::Chunk(_), Region::Prefix) => true,
                (Region::Chunk(a), Region::Chunk(b)) => a == b,
                _ => false,
            };
            if visible {
                mask[(i, j)] = 0.0;
            }
        }
    }
    Ok(mask)
}

/// Positions for parallel windows: the prefix counts `0..prefix_len`, every
/// document restarts at `prefix_len`, and the query continues after the
/// longest document.
pub fn assign_parallel_positions(layout: &ChunkLayout, total_len: usize) -> Result<Vec<usize>> {
    let region = regions(layout, total_len)?;
    let prefix = layout.prefix_len();
    let longest = (0..layout.num_chunks()).map(|k| layout.chunk_len(k)).max().unwrap_or(0);
    let mut next_query = prefix + longest;
    Ok(region
        .iter()
        .enumerate()
        .map(|(i, r)| match *r {
            Region::Prefix => i,
            Region::Chunk(k) => prefix + (i - layout.chunks()[k].0),
            Region::Query => {
                next_query += 1;
                next_query - 1
            }
        })
        .collect())
}

/// Adds sinusoidal position encodings (`sin` on even, `cos` on odd columns).
pub fn add_sinusoidal_positions(x: &Matrix, positions: &[usize]) -> Result<Matrix> {
    if positions.len() != x.rows() {
        return Err(Error::DimensionMismatch {
            what: "positions",
            expected: x.rows(),
            found: positions.len(),
        });
    }
    let d = x.cols();
    let mut out = x.clone();
    for (i, &pos) in positions.iter().enumerate() {
        for (c, v) in out.row_mut(i).iter_mut().enumerate() {
            let pair = (c / 2) as f64;
            let freq = libm::pow(10_000.0, -2.0 * pair / d.max(1) as f64);
            let angle = pos as f64 * freq;
            *v += if c % 2 == 0 { libm::sin(angle) } else { libm::cos(angle) };
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationReport {
    /// Max absolute output deviation over each document's rows.
    pub per_chunk: Vec<f64>,
    pub max_deviation: f64,
    pub passed: bool,
}

/// Compares each document's attention outputs under the parallel mask with a
/// run over only the prefix and that document.
pub fn verify_isolation(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    layout: &ChunkLayout,
) -> Result<IsolationReport> {
    let mask = build_parallel_mask(layout, q.rows())?;
    verify_isolation_with_mask(q, k, v, layout, &mask)
}

/// [`verify_isolation`] against an arbitrary full-sequence mask, e.g. a
/// deliberately corrupted one.
pub fn verify_isolation_with_mask(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    layout: &ChunkLayout,
    mask: &Matrix,
) -> Result<IsolationReport> {
    let total = q.rows();
    if k.rows() != total || v.rows() != total {
        return Err(Error::DimensionMismatch {
            what: "key/value rows",
            expected: total,
            found: if k.rows() != total { k.rows() } else { v.rows() },
        });
    }
    let positions = assign_parallel_positions(layout, total)?;
    let qp = add_sinusoidal_positions(q, &positions)?;
    let kp = add_sinusoidal_positions(k, &positions)?;
    let full = attend(&AttentionInput::new(&qp, &kp, v).with_mask(mask))?;

    let prefix: Vec<usize> = (0..layout.prefix_len()).collect();
    let mut per_chunk = Vec::with_capacity(layout.num_chunks());
    for &(start, end) in layout.chunks() {
        let rows: Vec<usize> = prefix.iter().copied().chain(start..end).collect();
        let local_pos: Vec<usize> = (0..rows.len()).collect();
        let qs = add_sinusoidal_positions(&q.select_rows(&rows), &local_pos)?;
        let ks = add_sinusoidal_positions(&k.select_rows(&rows), &local_pos)?;
        let vs = v.select_rows(&rows);
        let cm = causal_mask(rows.len())?;
        let isolated = attend(&AttentionInput::new(&qs, &ks, &vs).with_mask(&cm))?;
        let mut dev: f64 = 0.0;
        for (local, global) in (prefix.len()..rows.len()).zip(start..end) {
            for (a, b) in isolated.output.row(local).iter().zip(full.output.row(global)) {
                dev = dev.max(libm::fabs(a - b));
            }
        }
        per_chunk.push(dev);
    }
    let max_deviation = per_chunk.iter().copied().fold(0.0, f64::max);
    Ok(IsolationReport {
        per_chunk,
        max_deviation,
        passed: max_deviation <= ISOLATION_TOL,
    })
}

/// Flips one `-inf` entry in a document row to 0, preferring an entry that
/// lets a later document see an earlier one. Returns the flipped `(row, col)`,
/// or `None` if every document row is already fully visible.
pub fn corrupt_mask(mask: &mut Matrix, layout: &ChunkLayout) -> Option<(usize, usize)> {
    if layout.num_chunks() >= 2 {
        let (i, _) = layout.chunks()[1];
        let (j, _) = layout.chunks()[0];
        mask[(i, j)] = 0.0;
        return Some((i, j));
    }
    for &(start, end) in layout.chunks() {
        for i in start..end {
            for j in 0..mask.cols() {
                if mask[(i, j)] == f64::NEG_INFINITY {
                    mask[(i, j)] = 0.0;
                    return Some((i, j));
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rng;
    use alloc::vec;

    #[test]
    fn single_window_is_causal() {
        let layout = ChunkLayout::contiguous(0, &[5], 0).unwrap();
        assert_eq!(build_parallel_mask(&layout, 5).unwrap(), causal_mask(5).unwrap());
    }

    #[test]
    fn documents_never_see_each_other() {
        let layout = ChunkLayout::contiguous(2, &[3, 4], 2).unwrap();
        let mask = build_parallel_mask(&layout, 11).unwrap();
        for i in 2..5 {
            for j in 5..9 {
                assert_eq!(mask[(i, j)], f64::NEG_INFINITY);
                assert_eq!(mask[(j, i)], f64::NEG_INFINITY);
            }
        }
        // document rows see the prefix
        assert_eq!(mask[(6, 0)], 0.0);
        // last query token sees everything before it
        assert!(mask.row(10).iter().all(|&m| m == 0.0));
        // prefix does not look ahead
        assert_eq!(mask[(0, 1)], f64::NEG_INFINITY);
    }

    #[test]
    fn rejects_gappy_layouts() {
        let layout = ChunkLayout::new(0, vec![(1, 3)], (3, 4)).unwrap();
        assert!(build_parallel_mask(&layout, 4).is_err());
        let layout = ChunkLayout::contiguous(0, &[3], 1).unwrap();
        assert!(build_parallel_mask(&layout, 6).is_err());
    }

    #[test]
    fn positions_restart_per_window() {
        let layout = ChunkLayout::contiguous(2, &[3, 5], 2).unwrap();
        let pos = assign_parallel_positions(&layout, 12).unwrap();
        assert_eq!(pos, vec![0, 1, 2, 3, 4, 2, 3, 4, 5, 6, 7, 8]);
        let single = ChunkLayout::contiguous(0, &[4], 0).unwrap();
        assert_eq!(assign_parallel_positions(&single, 4).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn single_chunk_isolation_is_exact() {
        let mut rng = Rng::new(3);
        let layout = ChunkLayout::contiguous(2, &[6], 2).unwrap();
        let (q, k, v) = (
            rng.gaussian_matrix(10, 8),
            rng.gaussian_matrix(10, 8),
            rng.gaussian_matrix(10, 8),
        );
        let report = verify_isolation(&q, &k, &v, &layout).unwrap();
        assert_eq!(report.max_deviation, 0.0);
        assert!(report.passed);
    }

    #[test]
    fn corruption_is_detected() {
        let mut rng = Rng::new(4);
        let layout = ChunkLayout::contiguous(1, &[4, 4, 4], 1).unwrap();
        let (q, k, v) = (
            rng.gaussian_matrix(14, 16),
            rng.gaussian_matrix(14, 16),
            rng.gaussian_matrix(14, 16),
        );
        let mut mask = build_parallel_mask(&layout, 14).unwrap();
        assert!(verify_isolation_with_mask(&q, &k, &v, &layout, &mask).unwrap().passed);
        assert_eq!(corrupt_mask(&mut mask, &layout), Some((5, 1)));
        let report = verify_isolation_with_mask(&q, &k, &v, &layout, &mask).unwrap();
        assert!(report.max_deviation > 1e-6);
        assert!(!report.passed);
    }

    #[test]
    fn sinusoidal_at_zero() {
        let x = Matrix::zeros(1, 4);
        let p = add_sinusoidal_positions(&x, &[0]).unwrap();
        assert_eq!(p.row(0), &[0.0, 1.0, 0.0, 1.0]);
        assert!(add_sinusoidal_positions(&x, &[0, 1]).is_err());
    }
}
