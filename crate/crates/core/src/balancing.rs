//! From raw document importance scores to per-token balancing factors.
//!
//! Raw scores come from any scorer (lexical overlap, a remote critic model,
//! gold labels). [`normalize_scores`] standardizes them and rescales to the
//! target `N(mu, sigma^2)` moments; [`expand_to_tokens`] then copies each
//! document's factor onto every token of its chunk.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::stable_sum;
use crate::theory::BalancingTarget;
use crate::{Error, Result};

/// Token spans of a retrieval-augmented prompt: a shared prefix, the
/// documents (chunks), then the query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkLayout {
    prefix_len: usize,
    chunks: Vec<(usize, usize)>,
    query_span: (usize, usize),
}

impl ChunkLayout {
    /// Spans are half-open `[start, end)`.
    pub fn new(
        prefix_len: usize,
        chunks: Vec<(usize, usize)>,
        query_span: (usize, usize),
    ) -> Result<Self> {
        let mut cursor = prefix_len;
        for (k, &(start, end)) in chunks.iter().enumerate() {
            if start >= end {
                return Err(Error::layout(format!("chunk {k} span [{start}, {end}) is empty")));
            }
            if start < cursor {
                return Err(Error::layout(format!(
                    "chunk {k} starts at {start}, before the end of the prefix or previous chunk ({cursor})"
                )));
            }
            cursor = end;
        }
        let (qs, qe) = query_span;
        if qs > qe {
            return Err(Error::layout(format!("query span [{qs}, {qe}) is reversed")));
        }
        if qs < cursor {
            return Err(Error::layout(format!(
                "query span starts at {qs}, before the last chunk ends ({cursor})"
            )));
        }
        Ok(Self {
            prefix_len,
            chunks,
            query_span,
        })
    }

    /// Prefix, back-to-back chunks of the given lengths, then the query.
    pub fn contiguous(prefix_len: usize, chunk_lens: &[usize], query_len: usize) -> Result<Self> {
        let mut chunks = Vec::with_capacity(chunk_lens.len());
        let mut cursor = prefix_len;
        for &len in chunk_lens {
            chunks.push((cursor, cursor + len));
            cursor += len;
        }
        Self::new(prefix_len, chunks, (cursor, cursor + query_len))
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix_len
    }

    pub fn chunks(&self) -> &[(usize, usize)] {
        &self.chunks
    }

    pub fn num_chunks(&self) -> usize {
        self.chunks.len()
    }

    pub fn query_span(&self) -> (usize, usize) {
        self.query_span
    }

    /// One past the last token the layout mentions.
    pub fn end(&self) -> usize {
        self.query_span.1
    }

    /// Checks the layout fits a sequence of `total_len` tokens.
    pub fn validate(&self, total_len: usize) -> Result<()> {
        if self.end() > total_len || self.prefix_len > total_len {
            return Err(Error::layout(format!(
                "layout covers {} tokens but the sequence has {total_len}",
                self.end().max(self.prefix_len)
            )));
        }
        Ok(())
    }

    /// True when prefix, chunks and query tile `0..total_len` with no gaps.
    pub fn is_contiguous(&self, total_len: usize) -> bool {
        let mut cursor = self.prefix_len;
        for &(start, end) in &self.chunks {
            if start != cursor {
                return false;
            }
            cursor = end;
        }
        self.query_span.0 == cursor && self.query_span.1 == total_len
    }

    pub fn chunk_of(&self, token: usize) -> Option<usize> {
        let k = self.chunks.partition_point(|&(_, end)| end <= token);
        match self.chunks.get(k) {
            Some(&(start, _)) if start <= token => Some(k),
            _ => None,
        }
    }

    pub fn chunk_len(&self, k: usize) -> usize {
        let (s, e) = self.chunks[k];
        e - s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreSource {
    Lexical,
    Remote,
    Gold,
    External,
}

impl ScoreSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreSource::Lexical => "lexical",
            ScoreSource::Remote => "remote",
            ScoreSource::Gold => "gold",
            ScoreSource::External => "external",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRecord {
    pub chunk_index: usize,
    pub raw_score: f64,
    pub source: ScoreSource,
}

impl ScoreRecord {
    pub fn new(chunk_index: usize, raw_score: f64, source: ScoreSource) -> Self {
        Self {
            chunk_index,
            raw_score,
            source,
        }
    }
}

/// One balancing factor per chunk, indexed by chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancingFactors {
    pub per_chunk: Vec<f64>,
    pub target: BalancingTarget,
}

/// Standardizes raw scores (population std) and rescales them to the target
/// mean and std: `beta_k = mu + sigma * (s_k - mean) / std`.
///
/// A single record, or scores that are all equal, map every factor to `mu`.
/// Records may arrive in any order but their chunk indices must cover
/// `0..len` exactly once.
pub fn normalize_scores(raw: &[ScoreRecord], target: BalancingTarget) -> Result<BalancingFactors> {
    if raw.is_empty() {
        return Err(Error::Empty("score records"));
    }
    BalancingTarget::new(target.mu, target.sigma)?;
    if raw.iter().any(|r| !r.raw_score.is_finite()) {
        return Err(Error::NonFinite("raw score"));
    }
    let mut seen = vec![false; raw.len()];
    for r in raw {
        match seen.get_mut(r.chunk_index) {
            Some(slot) if !*slot => *slot = true,
            _ => {
                return Err(Error::param(format!(
                    "chunk index {} is out of range or repeated",
                    r.chunk_index
                )))
            }
        }
    }

    let count = raw.len() as f64;
    let mean = stable_sum(raw.iter().map(|r| r.raw_score)) / count;
    let var = stable_sum(raw.iter().map(|r| (r.raw_score - mean) * (r.raw_score - mean))) / count;
    let std = libm::sqrt(var);
    let scale = raw.iter().fold(0.0_f64, |m, r| m.max(libm::fabs(r.raw_score)));
    // spread at rounding level means the scores are equal
    let degenerate = std <= 8.0 * f64::EPSILON * scale || std == 0.0;

    let mut per_chunk = vec![target.mu; raw.len()];
    if !degenerate {
        for r in raw {
            per_chunk[r.chunk_index] = target.mu + target.sigma * (r.raw_score - mean) / std;
        }
    }
    Ok(BalancingFactors { per_chunk, target })
}

/// What tokens outside every chunk (prefix, query, gaps) receive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutsideFill {
    /// No bias on non-document tokens.
    #[default]
    Zero,
    /// Shift non-document tokens by the target mean instead.
    Mu,
}

pub fn expand_to_tokens(
    factors: &BalancingFactors,
    layout: &ChunkLayout,
    total_len: usize,
) -> Result<Vec<f64>> {
    expand_to_tokens_with(factors, layout, total_len, OutsideFill::Zero)
}

pub fn expand_to_tokens_with(
    factors: &BalancingFactors,
    layout: &ChunkLayout,
    total_len: usize,
    fill: OutsideFill,
) -> Result<Vec<f64>> {
    if factors.per_chunk.len() != layout.num_chunks() {
        return Err(Error::DimensionMismatch {
            what: "balancing factors per chunk",
            expected: layout.num_chunks(),
            found: factors.per_chunk.len(),
        });
    }
    layout.validate(total_len)?;
    let outside = match fill {
        OutsideFill::Zero => 0.0,
        OutsideFill::Mu => factors.target.mu,
    };
    let mut out = vec![outside; total_len];
    for (&(start, end), &beta) in layout.chunks().iter().zip(&factors.per_chunk) {
        out[start..end].fill(beta);
    }
    Ok(out)
}

/// Fraction of the query's unique tokens that also occur in the document.
pub fn lexical_score<T: Ord>(query_tokens: &[T], doc_tokens: &[T]) -> Result<f64> {
    let query: BTreeSet<&T> = query_tokens.iter().collect();
    if query.is_empty() {
        return Err(Error::Empty("query tokens"));
    }
    let doc: BTreeSet<&T> = doc_tokens.iter().collect();
    let overlap = query.intersection(&doc).count();
    Ok(overlap as f64 / query.len() as f64)
}

/// Reduces per-layer early-decoding scores to one raw score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LayerReducer {
    /// Mean over the last quarter of layers (at least one).
    #[default]
    LastQuarterMean,
    Last,
    Mean,
    Max,
}

impl LayerReducer {
    pub fn reduce(self, per_layer: &[f64]) -> Result<f64> {
        if per_layer.is_empty() {
            return Err(Error::Empty("per-layer scores"));
        }
        if per_layer.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("per-layer scores"));
        }
        let mean = |xs: &[f64]| stable_sum(xs.iter().copied()) / xs.len() as f64;
        Ok(match self {
            LayerReducer::LastQuarterMean => {
                let take = per_layer.len().div_ceil(4).max(1);
                mean(&per_layer[per_layer.len() - take..])
            }
            LayerReducer::Last => per_layer[per_layer.len() - 1],
            LayerReducer::Mean => mean(per_layer),
            LayerReducer::Max => per_layer.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

pub const DEFAULT_CRITIC_QUESTION: &str = "Does the passage support the answer to the question?";
pub const DEFAULT_CRITIC_TOKEN: &str = "yes";

/// Prompt appended to a document so that a model's probability of the
/// critic token scores the document's relevance to the query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CriticPrompt {
    pub question: String,
    pub critic_token: String,
}

impl Default for CriticPrompt {
    fn default() -> Self {
        Self {
            question: DEFAULT_CRITIC_QUESTION.into(),
            critic_token: DEFAULT_CRITIC_TOKEN.into(),
        }
    }
}

impl CriticPrompt {
    pub fn render(&self, query: &str, document: &str) -> Result<String> {
        if query.trim().is_empty() {
            return Err(Error::Empty("query text"));
        }
        if document.trim().is_empty() {
            return Err(Error::Empty("document text"));
        }
        Ok(format!(
            "Passage: {}\nQuestion: {}\n{}\nAnswer:",
            document.trim(),
            query.trim(),
            self.question
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(raw: &[f64]) -> Vec<ScoreRecord> {
        raw.iter()
            .enumerate()
            .map(|(i, &s)| ScoreRecord::new(i, s, ScoreSource::External))
            .collect()
    }

    #[test]
    fn normalize_one_two_three() {
        let f = normalize_scores(&records(&[1.0, 2.0, 3.0]), BalancingTarget::new(0.0, 1.0).unwrap())
            .unwrap();
        // (s - 2) / sqrt(2/3)
        let expected = [-1.224_744_871_391_589, 0.0, 1.224_744_871_391_589];
        for (b, e) in f.per_chunk.iter().zip(expected) {
            assert!((b - e).abs() < 1e-12, "{b} vs {e}");
        }
    }

    #[test]
    fn normalize_degenerate_cases() {
        let t = BalancingTarget::new(0.3, 2.0).unwrap();
        assert_eq!(normalize_scores(&records(&[5.0; 3]), t).unwrap().per_chunk, vec![0.3; 3]);
        assert_eq!(normalize_scores(&records(&[0.1; 7]), t).unwrap().per_chunk, vec![0.3; 7]);
        assert_eq!(normalize_scores(&records(&[-4.0]), t).unwrap().per_chunk, vec![0.3]);
        let flat = BalancingTarget::new(-1.5, 0.0).unwrap();
        let f = normalize_scores(&records(&[1.0, 9.0, 2.0]), flat).unwrap();
        assert!(f.per_chunk.iter().all(|&b| b == -1.5));
    }

    #[test]
    fn normalize_errors() {
        let t = BalancingTarget::vanilla();
        assert!(normalize_scores(&[], t).is_err());
        assert!(normalize_scores(&records(&[1.0, f64::NAN]), t).is_err());
        let dup = [
            ScoreRecord::new(0, 1.0, ScoreSource::Gold),
            ScoreRecord::new(0, 2.0, ScoreSource::Gold),
        ];
        assert!(normalize_scores(&dup, t).is_err());
    }

    #[test]
    fn normalize_places_by_chunk_index() {
        let recs = [
            ScoreRecord::new(1, 10.0, ScoreSource::Remote),
            ScoreRecord::new(0, 0.0, ScoreSource::Remote),
        ];
        let f = normalize_scores(&recs, BalancingTarget::new(0.0, 1.0).unwrap()).unwrap();
        assert_eq!(f.per_chunk, vec![-1.0, 1.0]);
    }

    #[test]
    fn expand_examples() {
        let target = BalancingTarget::vanilla();
        let layout = ChunkLayout::contiguous(2, &[2, 3], 1).unwrap();
        assert_eq!(layout.chunks(), &[(2, 4), (4, 7)]);
        assert_eq!(layout.query_span(), (7, 8));
        let f = BalancingFactors {
            per_chunk: vec![1.0, -1.0],
            target,
        };
        assert_eq!(
            expand_to_tokens(&f, &layout, 8).unwrap(),
            vec![0.0, 0.0, 1.0, 1.0, -1.0, -1.0, -1.0, 0.0]
        );

        let single = ChunkLayout::new(0, vec![(0, 4)], (4, 4)).unwrap();
        let f = BalancingFactors {
            per_chunk: vec![0.7],
            target,
        };
        assert_eq!(expand_to_tokens(&f, &single, 4).unwrap(), vec![0.7; 4]);

        let empty = ChunkLayout::new(0, vec![], (0, 0)).unwrap();
        let f = BalancingFactors {
            per_chunk: vec![],
            target,
        };
        assert_eq!(expand_to_tokens(&f, &empty, 5).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn expand_mu_fill() {
        let layout = ChunkLayout::contiguous(1, &[2], 1).unwrap();
        let f = BalancingFactors {
            per_chunk: vec![2.0],
            target: BalancingTarget::new(0.5, 1.0).unwrap(),
        };
        assert_eq!(
            expand_to_tokens_with(&f, &layout, 4, OutsideFill::Mu).unwrap(),
            vec![0.5, 2.0, 2.0, 0.5]
        );
    }

    #[test]
    fn expand_mismatch() {
        let layout = ChunkLayout::contiguous(0, &[2, 2], 0).unwrap();
        let f = BalancingFactors {
            per_chunk: vec![1.0],
            target: BalancingTarget::vanilla(),
        };
        assert!(expand_to_tokens(&f, &layout, 4).is_err());
        let f = BalancingFactors {
            per_chunk: vec![1.0, 2.0],
            target: BalancingTarget::vanilla(),
        };
        assert!(expand_to_tokens(&f, &layout, 3).is_err());
    }

    #[test]
    fn layout_validation() {
        assert!(ChunkLayout::new(3, vec![(2, 5)], (5, 6)).is_err());
        assert!(ChunkLayout::new(0, vec![(0, 3), (2, 5)], (5, 6)).is_err());
        assert!(ChunkLayout::new(0, vec![(0, 3)], (2, 4)).is_err());
        assert!(ChunkLayout::new(0, vec![(1, 1)], (2, 4)).is_err());
        let gappy = ChunkLayout::new(1, vec![(2, 4), (5, 6)], (7, 9)).unwrap();
        assert!(!gappy.is_contiguous(9));
        assert_eq!(gappy.chunk_of(1), None);
        assert_eq!(gappy.chunk_of(3), Some(0));
        assert_eq!(gappy.chunk_of(4), None);
        assert_eq!(gappy.chunk_of(5), Some(1));
        assert_eq!(gappy.chunk_of(8), None);
        assert!(ChunkLayout::contiguous(2, &[3, 4], 2).unwrap().is_contiguous(11));
    }

    #[test]
    fn lexical_examples() {
        assert_eq!(lexical_score(&["a", "b"], &["b", "a", "a"]).unwrap(), 1.0);
        assert_eq!(lexical_score(&["a", "b"], &["c"]).unwrap(), 0.0);
        assert_eq!(lexical_score(&["a", "b", "c", "d"], &["x", "b", "d"]).unwrap(), 0.5);
        assert!(lexical_score::<&str>(&[], &["a"]).is_err());
    }

    #[test]
    fn layer_reducers() {
        let layers = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        assert_eq!(LayerReducer::LastQuarterMean.reduce(&layers).unwrap(), 6.5);
        assert_eq!(LayerReducer::LastQuarterMean.reduce(&[2.0]).unwrap(), 2.0);
        assert_eq!(LayerReducer::Last.reduce(&layers).unwrap(), 7.0);
        assert_eq!(LayerReducer::Mean.reduce(&layers).unwrap(), 3.5);
        assert_eq!(LayerReducer::Max.reduce(&[1.0, 3.0, 2.0]).unwrap(), 3.0);
        assert!(LayerReducer::Mean.reduce(&[]).is_err());
    }

    #[test]
    fn critic_prompt_rendering() {
        let p = CriticPrompt::default();
        let text = p.render("who wrote it?", "It was written by Ada.").unwrap();
        assert!(text.contains("It was written by Ada."));
        assert!(text.contains("who wrote it?"));
        assert!(text.contains(DEFAULT_CRITIC_QUESTION));
        assert_eq!(p.critic_token, "yes");
        assert!(p.render(" ", "doc").is_err());
        assert!(p.render("q", "").is_err());
    }
}
