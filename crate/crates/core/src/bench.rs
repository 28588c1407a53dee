//! Synthetic needle-in-documents benchmark.
//!
//! A context holds `n_docs` documents of `doc_len` tokens followed by one
//! query token. The query row points along a random unit direction `u`; the
//! keys of the gold document carry `snr * u` on top of Gaussian noise, all
//! other keys are pure noise. Each document also has a bag of token ids, and
//! the query's ids are planted in the gold document, which gives the lexical
//! scorer something to find.
//!
//! For every grid cell and variant the benchmark records the entropy of the
//! query row's attention, the attention mass on the gold document, and
//! whether the single most attended key lies in it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::attention::{attend_row, AttentionInput};
use crate::balancing::{
    expand_to_tokens, lexical_score, normalize_scores, ChunkLayout, ScoreRecord, ScoreSource,
};
use crate::tensor::{entropy, stable_sum, Matrix};
use crate::theory::{solve_sigma, BalancingTarget};
use crate::{Error, Result, Rng};

pub const VOCAB_SIZE: u32 = 256;
pub const QUERY_TOKENS: usize = 4;
pub const DEFAULT_SNR: f64 = 1.0;
pub const DEFAULT_TRIALS: usize = 200;
pub const DEFAULT_DOC_LEN: usize = 16;
pub const DEFAULT_DIM: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct NeedleInstance {
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    /// No prefix, `n_docs` chunks, one query token at the end.
    pub layout: ChunkLayout,
    pub gold_chunk: usize,
    pub seed: u64,
    pub query_tokens: Vec<u32>,
    pub doc_tokens: Vec<Vec<u32>>,
}

impl NeedleInstance {
    pub fn context_len(&self) -> usize {
        self.q.rows()
    }

    pub fn query_row(&self) -> usize {
        self.q.rows() - 1
    }
}

/// Draws one instance from `rng` (whose seed is recorded).
pub fn gen_needle(n_docs: usize, doc_len: usize, d: usize, snr: f64, rng: &mut Rng) -> Result<NeedleInstance> {
    if n_docs < 2 {
        return Err(Error::param("the needle benchmark needs at least two documents"));
    }
    if doc_len == 0 || d == 0 {
        return Err(Error::param("document length and dimension must be positive"));
    }
    if !(snr >= 0.0) || !snr.is_finite() {
        return Err(Error::param("snr must be finite and >= 0"));
    }
    let seed = rng.seed();
    let n = n_docs * doc_len + 1;
    let layout = ChunkLayout::contiguous(0, &vec![doc_len; n_docs], 1)?;
    let gold_chunk = rng.below(n_docs);
    let u = rng.unit_vector(d);

    let mut q = rng.gaussian_matrix(n, d);
    let scale = libm::sqrt(d as f64);
    for (x, ui) in q.row_mut(n - 1).iter_mut().zip(&u) {
        *x = scale * ui;
    }
    let mut k = rng.gaussian_matrix(n, d);
    let (start, end) = layout.chunks()[gold_chunk];
    for row in start..end {
        for (x, ui) in k.row_mut(row).iter_mut().zip(&u) {
            *x += snr * ui;
        }
    }
    let v = rng.gaussian_matrix(n, d);

    let query_tokens: Vec<u32> = (0..QUERY_TOKENS).map(|_| rng.below(VOCAB_SIZE as usize) as u32).collect();
    let mut doc_tokens: Vec<Vec<u32>> = (0..n_docs)
        .map(|_| (0..doc_len).map(|_| rng.below(VOCAB_SIZE as usize) as u32).collect())
        .collect();
    let gold_doc = &mut doc_tokens[gold_chunk];
    let mut slots: Vec<usize> = (0..doc_len).collect();
    rng.shuffle(&mut slots);
    for (&slot, &tok) in slots.iter().zip(&query_tokens) {
        gold_doc[slot] = tok;
    }

    Ok(NeedleInstance {
        q,
        k,
        v,
        layout,
        gold_chunk,
        seed,
        query_tokens,
        doc_tokens,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    /// No balancing factors.
    Vanilla,
    /// Factors from the true gold label.
    BeeGold,
    /// Factors from lexical overlap with the query tokens.
    BeeScored,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Vanilla, Variant::BeeGold, Variant::BeeScored];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::BeeGold => "bee-gold",
            Variant::BeeScored => "bee-scored",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::param(format!("unknown variant {s:?} (vanilla, bee-gold, bee-scored)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub docs_grid: Vec<usize>,
    pub doc_len: usize,
    pub dim: usize,
    pub snr: f64,
    pub mu: f64,
    pub variants: Vec<Variant>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            docs_grid: vec![4, 16, 64],
            doc_len: DEFAULT_DOC_LEN,
            dim: DEFAULT_DIM,
            snr: DEFAULT_SNR,
            mu: 0.0,
            variants: Variant::ALL.to_vec(),
            trials: DEFAULT_TRIALS,
            seed: 0,
        }
    }
}

impl BenchConfig {
    fn validate(&self) -> Result<()> {
        if self.docs_grid.is_empty() {
            return Err(Error::Empty("document grid"));
        }
        if self.variants.is_empty() {
            return Err(Error::Empty("variants"));
        }
        if self.trials == 0 {
            return Err(Error::param("the benchmark needs at least one trial"));
        }
        if !self.mu.is_finite() {
            return Err(Error::NonFinite("mu"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n_docs: usize,
    pub context_len: usize,
    pub variant: Variant,
    /// Target σ of the factors (0 for vanilla).
    pub sigma: f64,
    pub mean_entropy: f64,
    pub entropy_stderr: f64,
    pub gold_mass: f64,
    pub gold_mass_stderr: f64,
    pub argmax_accuracy: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, n_docs: usize, variant: Variant) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.n_docs == n_docs && r.variant == variant)
    }
}

/// Per-token factors for one instance under `variant`.
pub fn variant_bias(inst: &NeedleInstance, variant: Variant, target: BalancingTarget) -> Result<Vec<f64>> {
    let n_docs = inst.layout.num_chunks();
    let records: Vec<ScoreRecord> = match variant {
        Variant::Vanilla => return Ok(vec![0.0; inst.context_len()]),
        Variant::BeeGold => (0..n_docs)
            .map(|c| ScoreRecord::new(c, if c == inst.gold_chunk { 1.0 } else { 0.0 }, ScoreSource::Gold))
            .collect(),
        Variant::BeeScored => inst
            .doc_tokens
            .iter()
            .enumerate()
            .map(|(c, doc)| Ok(ScoreRecord::new(c, lexical_score(&inst.query_tokens, doc)?, ScoreSource::Lexical)))
            .collect::<Result<_>>()?,
    };
    let factors = normalize_scores(&records, target)?;
    expand_to_tokens(&factors, &inst.layout, inst.context_len())
}

/// Query-row entropy, gold mass, and whether the argmax is in the gold chunk.
pub fn measure(inst: &NeedleInstance, bias: &[f64]) -> Result<(f64, f64, bool)> {
    let input = AttentionInput::new(&inst.q, &inst.k, &inst.v).with_bias(bias);
    let (w, _) = attend_row(&input, inst.query_row())?;
    let h = entropy(&w)?;
    let (start, end) = inst.layout.chunks()[inst.gold_chunk];
    let mass = stable_sum(w[start..end].iter().copied());
    let argmax = w
        .iter()
        .enumerate()
        .fold(0, |best, (i, &x)| if x > w[best] { i } else { best });
    Ok((h, mass, (start..end).contains(&argmax)))
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = stable_sum(xs.iter().copied()) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss = stable_sum(xs.iter().map(|x| (x - mean) * (x - mean)));
    (mean, libm::sqrt(ss / (n - 1.0) / n))
}

/// Rows for one grid cell. Trial `t` draws its instance from
/// `Rng::new(seed).child(n_docs).child(t)`, so a cell's rows do not depend on
/// the rest of the grid; all variants share the instance.
pub fn run_cell(config: &BenchConfig, n_docs: usize) -> Result<Vec<BenchRow>> {
    config.validate()?;
    let context_len = n_docs * config.doc_len + 1;
    let sigma = solve_sigma(context_len as f64, config.mu)?;
    let target = BalancingTarget::new(config.mu, sigma)?;
    let cell_rng = Rng::new(config.seed).child(n_docs as u64);

    let k = config.variants.len();
    let mut entropies = vec![Vec::with_capacity(config.trials); k];
    let mut masses = vec![Vec::with_capacity(config.trials); k];
    let mut hits = vec![0usize; k];
    for t in 0..config.trials {
        let inst = gen_needle(n_docs, config.doc_len, config.dim, config.snr, &mut cell_rng.child(t as u64))?;
        for (i, &variant) in config.variants.iter().enumerate() {
            let bias = variant_bias(&inst, variant, target)?;
            let (h, mass, hit) = measure(&inst, &bias)?;
            entropies[i].push(h);
            masses[i].push(mass);
            hits[i] += hit as usize;
        }
    }
    Ok(config
        .variants
        .iter()
        .enumerate()
        .map(|(i, &variant)| {
            let (mean_entropy, entropy_stderr) = mean_and_stderr(&entropies[i]);
            let (gold_mass, gold_mass_stderr) = mean_and_stderr(&masses[i]);
            BenchRow {
                n_docs,
                context_len,
                variant,
                sigma: if variant == Variant::Vanilla { 0.0 } else { sigma },
                mean_entropy,
                entropy_stderr,
                gold_mass,
                gold_mass_stderr,
                argmax_accuracy: hits[i] as f64 / config.trials as f64,
                trials: config.trials,
                seed: config.seed,
            }
        })
        .collect())
}

/// Runs every cell in grid order.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let mut rows = Vec::new();
    for &n_docs in &config.docs_grid {
        rows.extend(run_cell(config, n_docs)?);
    }
    Ok(BenchReport {
        config: config.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instance_shape_and_determinism() {
        let a = gen_needle(4, 8, 16, 1.0, &mut Rng::new(5)).unwrap();
        assert_eq!(a.context_len(), 33);
        assert_eq!(a.layout.num_chunks(), 4);
        assert_eq!(a.layout.query_span(), (32, 33));
        assert_eq!(a, gen_needle(4, 8, 16, 1.0, &mut Rng::new(5)).unwrap());
        let gold = &a.doc_tokens[a.gold_chunk];
        assert!(a.query_tokens.iter().all(|t| gold.contains(t)));
    }

    #[test]
    fn rejects_bad_sizes() {
        let mut rng = Rng::new(0);
        assert!(gen_needle(1, 8, 16, 1.0, &mut rng).is_err());
        assert!(gen_needle(4, 0, 16, 1.0, &mut rng).is_err());
        assert!(gen_needle(4, 8, 16, -1.0, &mut rng).is_err());
    }

    #[test]
    fn strong_signal_finds_gold() {
        let mut hits = 0;
        for t in 0..50 {
            let inst = gen_needle(8, 4, 16, 50.0, &mut Rng::new(1).child(t)).unwrap();
            let (_, mass, hit) = measure(&inst, &[0.0; 33]).unwrap();
            hits += hit as usize;
            assert!(mass > 0.9);
        }
        assert_eq!(hits, 50);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("bee".parse::<Variant>().is_err());
    }

    #[test]
    fn gold_factors_peak_on_gold() {
        let inst = gen_needle(4, 2, 8, 1.0, &mut Rng::new(2)).unwrap();
        let bias = variant_bias(&inst, Variant::BeeGold, BalancingTarget::new(0.0, 1.0).unwrap()).unwrap();
        let (s, _) = inst.layout.chunks()[inst.gold_chunk];
        let max = bias.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(bias[s], max);
        assert_eq!(bias[8], 0.0);
        // sqrt(n_docs - 1) standard deviations above the mean
        assert!((max - libm::sqrt(3.0)).abs() < 1e-12);
    }

    #[test]
    fn small_bench_orderings() {
        let config = BenchConfig {
            docs_grid: vec![4, 16],
            doc_len: 4,
            dim: 8,
            trials: 40,
            ..BenchConfig::default()
        };
        let report = run_bench(&config).unwrap();
        assert_eq!(report.rows.len(), 6);
        for n in [4, 16] {
            let van = report.row(n, Variant::Vanilla).unwrap();
            let gold = report.row(n, Variant::BeeGold).unwrap();
            assert!(gold.gold_mass > van.gold_mass);
            assert!(gold.mean_entropy < van.mean_entropy);
            assert!((0.0..=1.0).contains(&van.argmax_accuracy));
        }
        assert_eq!(report, run_bench(&config).unwrap());
        // a cell does not depend on the rest of the grid
        let alone = run_cell(&config, 16).unwrap();
        assert_eq!(alone.as_slice(), &report.rows[3..]);
    }
}
