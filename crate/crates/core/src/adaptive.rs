//! Learned balancing factors.
//!
//! A document (or query) span is summarized by its first and last token
//! vectors through a low-rank projection `P` (`d_r x d`):
//!
//! ```text
//! s = v_b + v_e + Pᵀ (P v_b - P v_e)
//! ```
//!
//! A document's factor is the inner product of its sentence vector with the
//! query's. Factors whose magnitude exceeds a threshold `tau` are rescaled
//! uniformly, and `P` starts from an orthogonal initialization; both keep the
//! factors from blowing up during training.
//!
//! [`loss_and_grad`] gives the exact gradient of a cross-entropy objective
//! (the gold document should get the largest factor) with respect to `P`,
//! and [`train`] runs cosine-decayed gradient descent on it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::rng::orthogonal_init;
use crate::tensor::{dot, softmax_in_place, Matrix};
use crate::{Error, Result, Rng};

pub const DEFAULT_TAU: f64 = 5.0;
pub const DEFAULT_LR: f64 = 5e-4;
pub const DEFAULT_RANK: usize = 8;
pub const MAX_STEPS: usize = 500;
pub const DIVERGENCE_FACTOR: f64 = 10.0;

/// Trainable `d_r x d` projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    p: Matrix,
}

impl Projection {
    /// Orthonormal rows, `P Pᵀ = I`.
    pub fn orthogonal(rng: &mut Rng, d_r: usize, d: usize) -> Result<Self> {
        Ok(Self {
            p: orthogonal_init(rng, d_r, d)?,
        })
    }

    pub fn zeros(d_r: usize, d: usize) -> Result<Self> {
        Self::from_matrix(Matrix::zeros(d_r, d))
    }

    pub fn from_matrix(p: Matrix) -> Result<Self> {
        if p.rows() > p.cols() {
            return Err(Error::param(format!(
                "projection rank {} exceeds model dimension {}",
                p.rows(),
                p.cols()
            )));
        }
        if !p.is_finite() {
            return Err(Error::NonFinite("projection"));
        }
        Ok(Self { p })
    }

    pub fn rank(&self) -> usize {
        self.p.rows()
    }

    pub fn dim(&self) -> usize {
        self.p.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.p
    }

    /// `max |P Pᵀ - I|`.
    pub fn orthogonality_error(&self) -> f64 {
        let gram = self.p.matmul(&self.p.transpose()).expect("square product");
        gram.max_abs_diff(&Matrix::identity(self.rank()))
    }

    fn step(&mut self, grad: &Matrix, lr: f64) {
        for (p, g) in self.p.as_mut_slice().iter_mut().zip(grad.as_slice()) {
            *p -= lr * g;
        }
    }
}

fn check_dim(what: &'static str, v: &[f64], d: usize) -> Result<()> {
    if v.len() != d {
        return Err(Error::DimensionMismatch {
            what,
            expected: d,
            found: v.len(),
        });
    }
    Ok(())
}

/// Sentence vector `v_b + v_e + PᵀP (v_b - v_e)`.
pub fn sentence_vector(v_b: &[f64], v_e: &[f64], proj: &Projection) -> Result<Vec<f64>> {
    check_dim("span start vector", v_b, proj.dim())?;
    check_dim("span end vector", v_e, proj.dim())?;
    Ok(Span::new(v_b, v_e, proj).sentence)
}

pub fn beta_from_vectors(q_doc: &[f64], k_query: &[f64]) -> Result<f64> {
    check_dim("query-side vector", k_query, q_doc.len())?;
    Ok(dot(q_doc, k_query))
}

/// Rescales `betas` by `tau / max|beta|` when that maximum exceeds `tau`.
pub fn clip_betas(betas: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::param("clip threshold tau must be positive"));
    }
    let mut out = betas.to_vec();
    if let Some((_, m)) = max_abs(betas) {
        if m > tau {
            let s = tau / m;
            out.iter_mut().for_each(|b| *b *= s);
        }
    }
    Ok(out)
}

/// Index and value of the largest `|x|` (first on ties).
fn max_abs(xs: &[f64]) -> Option<(usize, f64)> {
    xs.iter()
        .map(|x| libm::fabs(*x))
        .enumerate()
        .fold(None, |best, (i, a)| match best {
            Some((_, b)) if b >= a => best,
            _ => Some((i, a)),
        })
}

/// First and last token vectors of a span.
#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    pub begin: Vec<f64>,
    pub end: Vec<f64>,
}

impl Boundary {
    pub fn new(begin: Vec<f64>, end: Vec<f64>) -> Self {
        Self { begin, end }
    }

    fn scaled(&self, factor: f64) -> Self {
        Self {
            begin: self.begin.iter().map(|x| x * factor).collect(),
            end: self.end.iter().map(|x| x * factor).collect(),
        }
    }
}

/// One supervised example: document spans, the query span, and which
/// document is relevant.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTask {
    pub chunks: Vec<Boundary>,
    pub query: Boundary,
    pub gold: usize,
}

impl ToyTask {
    pub fn dim(&self) -> usize {
        self.query.begin.len()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.chunks.len() < 2 {
            return Err(Error::param("a task needs at least two chunks"));
        }
        if self.gold >= self.chunks.len() {
            return Err(Error::param(format!(
                "gold index {} out of range for {} chunks",
                self.gold,
                self.chunks.len()
            )));
        }
        for b in self.chunks.iter().chain(core::iter::once(&self.query)) {
            check_dim("boundary vector", &b.begin, d)?;
            check_dim("boundary vector", &b.end, d)?;
            if b.begin.iter().chain(&b.end).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("boundary vector"));
            }
        }
        Ok(())
    }

    /// Multiplies every boundary vector by `factor`.
    pub fn scaled(&self, factor: f64) -> ToyTask {
        ToyTask {
            chunks: self.chunks.iter().map(|b| b.scaled(factor)).collect(),
            query: self.query.scaled(factor),
            gold: self.gold,
        }
    }
}

/// Intermediate values for one span: `diff = v_b - v_e`, `pd = P diff`, and
/// the sentence vector.
struct Span {
    diff: Vec<f64>,
    pd: Vec<f64>,
    sentence: Vec<f64>,
}

impl Span {
    fn new(v_b: &[f64], v_e: &[f64], proj: &Projection) -> Self {
        let diff: Vec<f64> = v_b.iter().zip(v_e).map(|(b, e)| b - e).collect();
        let pd = proj.p.mul_vec(&diff).expect("dimension checked");
        let back = proj.p.t_mul_vec(&pd).expect("dimension checked");
        let sentence = v_b
            .iter()
            .zip(v_e)
            .zip(back)
            .map(|((b, e), r)| b + e + r)
            .collect();
        Self { diff, pd, sentence }
    }

    /// Adds `d/dP` of `upstream . s` to `grad`:
    /// `(P diff) upstreamᵀ + (P upstream) diffᵀ`.
    fn backprop(&self, upstream: &[f64], proj: &Projection, grad: &mut Matrix) {
        let pu = proj.p.mul_vec(upstream).expect("dimension checked");
        for (r, (&a, &b)) in self.pd.iter().zip(&pu).enumerate() {
            for ((g, &u), &df) in grad.row_mut(r).iter_mut().zip(upstream).zip(&self.diff) {
                *g += a * u + b * df;
            }
        }
    }
}

/// Raw (unclipped) factors and the spans they came from.
fn forward(task: &ToyTask, proj: &Projection) -> Result<(Vec<Span>, Span, Vec<f64>)> {
    task.validate(proj.dim())?;
    let query = Span::new(&task.query.begin, &task.query.end, proj);
    let chunks: Vec<Span> = task
        .chunks
        .iter()
        .map(|b| Span::new(&b.begin, &b.end, proj))
        .collect();
    let betas = chunks.iter().map(|c| dot(&c.sentence, &query.sentence)).collect();
    Ok((chunks, query, betas))
}

/// One factor per chunk; clipped at `tau` when given.
pub fn task_betas(task: &ToyTask, proj: &Projection, tau: Option<f64>) -> Result<Vec<f64>> {
    let (_, _, betas) = forward(task, proj)?;
    match tau {
        Some(t) => clip_betas(&betas, t),
        None => Ok(betas),
    }
}

/// Cross-entropy `-ln softmax(beta)[gold]` and its exact gradient with
/// respect to the projection. With `tau`, the gradient goes through the
/// clip's scaling Jacobian when the clip is active.
pub fn loss_and_grad(task: &ToyTask, proj: &Projection, tau: Option<f64>) -> Result<(f64, Matrix)> {
    if let Some(t) = tau {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::param("clip threshold tau must be positive"));
        }
    }
    let (chunks, query, raw) = forward(task, proj)?;

    let (argmax, m) = max_abs(&raw).expect("at least two chunks");
    let clip = tau.filter(|&t| m > t);
    let betas: Vec<f64> = match clip {
        Some(t) => raw.iter().map(|b| b * t / m).collect(),
        None => raw.clone(),
    };

    let mut probs = betas.clone();
    softmax_in_place(&mut probs)?;
    let loss = cross_entropy(&betas, task.gold);

    // dL/dbeta (post-clip), then back through the clip
    let mut g: Vec<f64> = probs;
    g[task.gold] -= 1.0;
    if let Some(t) = clip {
        let coupling: f64 = g.iter().zip(&raw).map(|(gi, bi)| gi * bi).sum();
        let sign = if raw[argmax] >= 0.0 { 1.0 } else { -1.0 };
        g.iter_mut().for_each(|gi| *gi *= t / m);
        g[argmax] -= sign * t / (m * m) * coupling;
    }

    let mut grad = Matrix::zeros(proj.rank(), proj.dim());
    let mut query_upstream = vec![0.0; proj.dim()];
    for (span, &gk) in chunks.iter().zip(&g) {
        let upstream: Vec<f64> = query.sentence.iter().map(|x| gk * x).collect();
        span.backprop(&upstream, proj, &mut grad);
        for (qu, s) in query_upstream.iter_mut().zip(&span.sentence) {
            *qu += gk * s;
        }
    }
    query.backprop(&query_upstream, proj, &mut grad);
    Ok((loss, grad))
}

/// `-ln softmax(betas)[gold]`. When the gold factor is the largest the loss
/// is written as `ln(1 + sum e^{b_k - b_gold})`, which keeps full relative
/// precision as the loss approaches zero.
fn cross_entropy(betas: &[f64], gold: usize) -> f64 {
    let top = betas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let g = betas[gold];
    if g >= top {
        let rest: f64 = betas
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != gold)
            .map(|(_, b)| libm::exp(b - g))
            .sum();
        libm::log1p(rest)
    } else {
        top - g + libm::log(betas.iter().map(|b| libm::exp(b - top)).sum::<f64>())
    }
}

/// Fraction of tasks whose gold chunk gets the (first) largest factor.
pub fn accuracy(tasks: &[ToyTask], proj: &Projection, tau: Option<f64>) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::Empty("tasks"));
    }
    let mut hits = 0usize;
    for task in tasks {
        let betas = task_betas(task, proj, tau)?;
        let best = betas
            .iter()
            .enumerate()
            .fold(0, |best, (i, &b)| if b > betas[best] { i } else { best });
        if best == task.gold {
            hits += 1;
        }
    }
    Ok(hits as f64 / tasks.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub steps: usize,
    pub rank: usize,
    /// `None` disables clipping.
    pub tau: Option<f64>,
    pub seed: u64,
    /// Abort once the loss exceeds this multiple of the first step's loss.
    pub divergence_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: DEFAULT_LR,
            steps: MAX_STEPS,
            rank: DEFAULT_RANK,
            tau: Some(DEFAULT_TAU),
            seed: 0,
            divergence_factor: DIVERGENCE_FACTOR,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::param("learning rate must be finite and >= 0"));
        }
        if self.steps == 0 || self.steps > MAX_STEPS {
            return Err(Error::param(format!("steps must be in 1..={MAX_STEPS}")));
        }
        if self.rank == 0 {
            return Err(Error::param("projection rank must be positive"));
        }
        if let Some(t) = self.tau {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::param("clip threshold tau must be positive"));
            }
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::param("divergence factor must exceed 1"));
        }
        Ok(())
    }

    /// Cosine-decayed learning rate for `step` (0-based).
    pub fn lr_at(&self, step: usize) -> f64 {
        let progress = step as f64 / self.steps as f64;
        self.lr * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * progress))
    }
}

/// One row of the training log. `loss` and `grad_norm` are measured before
/// the step's update; `max_beta` is the largest unclipped `|beta|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub max_beta: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub projection: Projection,
    pub initial_orthogonality_error: f64,
    pub final_loss: f64,
    pub final_accuracy: f64,
    pub log: Vec<StepLog>,
}

pub fn train(tasks: &[ToyTask], config: &TrainConfig) -> Result<TrainOutcome> {
    train_observed(tasks, config, |_| {})
}

/// [`train`], calling `observe` after each step. On divergence the observer
/// has already seen every completed step.
pub fn train_observed(
    tasks: &[ToyTask],
    config: &TrainConfig,
    mut observe: impl FnMut(&StepLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    let first = tasks.first().ok_or(Error::Empty("tasks"))?;
    let d = first.dim();
    for task in tasks {
        task.validate(d)?;
    }
    let mut proj = Projection::orthogonal(&mut Rng::new(config.seed), config.rank, d)?;
    let initial_orthogonality_error = proj.orthogonality_error();

    let mut log = Vec::with_capacity(config.steps);
    let mut initial_loss = None;
    for step in 0..config.steps {
        let (loss, grad, max_beta) = batch(tasks, &proj, config.tau)?;
        let initial = *initial_loss.get_or_insert(loss);
        if !loss.is_finite() || loss > config.divergence_factor * initial.max(1e-8) {
            return Err(Error::Diverged {
                step,
                loss,
                initial_loss: initial,
                factor: config.divergence_factor,
            });
        }
        let lr = config.lr_at(step);
        let entry = StepLog {
            step,
            loss,
            grad_norm: grad.frobenius_norm(),
            max_beta,
            lr,
        };
        observe(&entry);
        log.push(entry);
        proj.step(&grad, lr);
        if !proj.matrix().is_finite() {
            return Err(Error::Diverged {
                step,
                loss: f64::INFINITY,
                initial_loss: initial,
                factor: config.divergence_factor,
            });
        }
    }
    let (final_loss, _, _) = batch(tasks, &proj, config.tau)?;
    let final_accuracy = accuracy(tasks, &proj, config.tau)?;
    Ok(TrainOutcome {
        projection: proj,
        initial_orthogonality_error,
        final_loss,
        final_accuracy,
        log,
    })
}

/// Mean loss and gradient over the tasks, reduced in task order.
fn batch(tasks: &[ToyTask], proj: &Projection, tau: Option<f64>) -> Result<(f64, Matrix, f64)> {
    let mut total = 0.0;
    let mut grad = Matrix::zeros(proj.rank(), proj.dim());
    let mut max_beta: f64 = 0.0;
    for task in tasks {
        let (loss, g) = loss_and_grad(task, proj, tau)?;
        total += loss;
        for (acc, x) in grad.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *acc += x;
        }
        let raw = task_betas(task, proj, None)?;
        max_beta = raw.iter().fold(max_beta, |m, b| m.max(libm::fabs(*b)));
    }
    let inv = 1.0 / tasks.len() as f64;
    grad.scale(inv);
    Ok((total * inv, grad, max_beta))
}

/// How learned factors combine with factors from normalized scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BetaComposition {
    /// Use the learned factors alone.
    #[default]
    Replace,
    /// Sum learned and score-derived factors.
    Add,
}

pub fn compose_betas(learned: &[f64], scored: &[f64], mode: BetaComposition) -> Result<Vec<f64>> {
    if learned.len() != scored.len() {
        return Err(Error::DimensionMismatch {
            what: "factor lists",
            expected: learned.len(),
            found: scored.len(),
        });
    }
    Ok(match mode {
        BetaComposition::Replace => learned.to_vec(),
        BetaComposition::Add => learned.iter().zip(scored).map(|(a, b)| a + b).collect(),
    })
}

/// Parameters of the synthetic, separable task family used to exercise the
/// trainer.
///
/// Two fixed orthogonal subspaces are drawn: a signal subspace and a nuisance
/// subspace. Each task draws a unit direction `u` from the first and `z` from
/// the second. A span carrying `w` has `+w` at its first token and `-w` at its
/// last, so `w` only shows up in the difference the projection acts on. The
/// query carries `alpha u + gamma z`, the gold document `alpha u`, and every
/// other document `gamma z`; all tokens get isotropic noise. A random
/// projection sees both subspaces and often ranks a distractor first, so the
/// trainer has to learn to keep the signal and drop the nuisance. Tasks that
/// projecting onto the signal subspace cannot separate with the given margin
/// are redrawn.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub chunks: usize,
    pub signal_rank: usize,
    pub nuisance_rank: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub noise: f64,
    pub margin: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            dim: 16,
            chunks: 4,
            signal_rank: 2,
            nuisance_rank: 2,
            alpha: 3.0,
            gamma: 4.0,
            noise: 0.3,
            margin: 1.0,
        }
    }
}

pub fn synthetic_tasks(count: usize, spec: &SyntheticSpec, rng: &mut Rng) -> Result<Vec<ToyTask>> {
    if spec.chunks < 2 {
        return Err(Error::param("synthetic tasks need at least two chunks"));
    }
    if spec.signal_rank == 0 || spec.signal_rank + spec.nuisance_rank > spec.dim {
        return Err(Error::param(
            "need signal rank >= 1 and signal + nuisance rank <= dim",
        ));
    }
    let finite = spec.alpha.is_finite() && spec.gamma.is_finite() && spec.margin.is_finite();
    if !(spec.noise >= 0.0) || !spec.noise.is_finite() || !finite {
        return Err(Error::param("synthetic spec needs finite alpha, gamma, margin and noise >= 0"));
    }
    let d = spec.dim;
    let basis = orthogonal_init(rng, spec.signal_rank + spec.nuisance_rank, d)?;
    let rows_of = |range: core::ops::Range<usize>| -> Result<Matrix> {
        Matrix::from_rows(&range.map(|r| basis.row(r).to_vec()).collect::<Vec<_>>())
    };
    let signal = Projection::from_matrix(rows_of(0..spec.signal_rank)?)?;
    let nuisance = rows_of(spec.signal_rank..spec.signal_rank + spec.nuisance_rank)?;

    let mut tasks = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while tasks.len() < count {
        attempts += 1;
        if attempts > 1000 * count.max(1) {
            return Err(Error::param("synthetic spec rejects almost every task; lower the margin"));
        }
        let u = signal.matrix().t_mul_vec(&rng.unit_vector(spec.signal_rank))?;
        let z = if spec.nuisance_rank > 0 {
            nuisance.t_mul_vec(&rng.unit_vector(spec.nuisance_rank))?
        } else {
            vec![0.0; d]
        };
        let span = |a: f64, c: f64, rng: &mut Rng| -> Boundary {
            let w: Vec<f64> = (0..d).map(|i| a * spec.alpha * u[i] + c * spec.gamma * z[i]).collect();
            let begin = w.iter().map(|x| x + spec.noise * rng.gaussian()).collect();
            let end = w.iter().map(|x| -x + spec.noise * rng.gaussian()).collect();
            Boundary::new(begin, end)
        };
        let query = span(1.0, 1.0, rng);
        let gold = rng.below(spec.chunks);
        let chunks = (0..spec.chunks)
            .map(|k| if k == gold { span(1.0, 0.0, rng) } else { span(0.0, 1.0, rng) })
            .collect();
        let task = ToyTask { chunks, query, gold };
        let ideal = task_betas(&task, &signal, None)?;
        let runner_up = ideal
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != gold)
            .fold(f64::NEG_INFINITY, |m, (_, &b)| m.max(b));
        if ideal[gold] - runner_up >= spec.margin {
            tasks.push(task);
        }
    }
    Ok(tasks)
}
