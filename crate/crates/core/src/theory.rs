//! Entropy of attention over Gaussian logits with a Gaussian balancing bias.
//!
//! Model: logits are `xi_j + beta_j` with `xi ~ N(0, 1)` and
//! `beta ~ N(mu, sigma^2)` independent. For large `n` the row entropy is
//! approximately
//!
//! ```text
//! H(n, mu, sigma) = ln n + 1/2 + mu + sigma^2/2
//!     - [e^{1/2} + mu e^{1/2} + (mu + sigma^2) e^{mu + sigma^2/2}] / e^{mu + sigma^2/2 + 1/2}
//! ```
//!
//! Holding it fixed as `n` grows means choosing `(mu, sigma)` on the zero set
//! of [`constraint_residual`], which works out to `H(n, mu, sigma) - 1/2`.
//! [`solve_sigma`] finds that root for fixed `mu`; [`mc_entropy`] samples the
//! model directly to check the approximation.

use alloc::vec;
use alloc::vec::Vec;

use crate::balancing::ChunkLayout;
use crate::tensor::{entropy_unchecked, softmax_in_place, stable_sum};
use crate::{Error, Result, Rng};

/// Largest exponent accepted before `exp` is considered out of range.
pub const MAX_EXPONENT: f64 = 700.0;

/// Convergence target for [`solve_sigma`]: `|residual| < SOLVER_TOL`.
pub const SOLVER_TOL: f64 = 1e-10;

pub const MAX_BISECTION_ITERS: usize = 200;

/// Default Monte Carlo trial count.
pub const DEFAULT_TRIALS: usize = 2000;

// e^{-1/2} - 1/2: the large-sigma slope of the residual is -(this) per unit sigma^2.
fn tail_slope() -> f64 {
    libm::exp(-0.5) - 0.5
}

/// Target distribution `N(mu, sigma^2)` for balancing factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalancingTarget {
    pub mu: f64,
    pub sigma: f64,
}

impl BalancingTarget {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::param("balancing target needs finite mu and sigma >= 0"));
        }
        Ok(Self { mu, sigma })
    }

    pub fn vanilla() -> Self {
        Self { mu: 0.0, sigma: 0.0 }
    }
}

fn check_inputs(n: f64, mu: f64, sigma: f64) -> Result<()> {
    if !(n >= 1.0) || !n.is_finite() {
        return Err(Error::param("context length n must be a finite value >= 1"));
    }
    if !mu.is_finite() || !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::param("need finite mu and sigma >= 0"));
    }
    let exponent = mu + 0.5 * sigma * sigma + 0.5;
    if libm::fabs(exponent) > MAX_EXPONENT {
        return Err(Error::Overflow { exponent });
    }
    Ok(())
}

/// `mu + sigma^2/2 - ratio`, the part shared by the closed form and the
/// residual. Evaluated term by term as the formula is printed.
fn shared_terms(mu: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let half_e = libm::exp(0.5);
    let e_beta = libm::exp(mu + 0.5 * s2);
    let numerator = half_e + mu * half_e + (mu + s2) * e_beta;
    let denominator = libm::exp(mu + 0.5 * s2 + 0.5);
    mu + 0.5 * s2 - numerator / denominator
}

/// Closed-form approximate attention entropy in nats.
pub fn closed_form_entropy(n: f64, mu: f64, sigma: f64) -> Result<f64> {
    check_inputs(n, mu, sigma)?;
    Ok(libm::log(n) + 0.5 + shared_terms(mu, sigma))
}

/// Invariance residual `ln n + g(mu, sigma)`; zero when the constraint holds.
/// Algebraically equal to `closed_form_entropy(n, mu, sigma) - 1/2`.
pub fn constraint_residual(n: f64, mu: f64, sigma: f64) -> Result<f64> {
    check_inputs(n, mu, sigma)?;
    Ok(libm::log(n) + shared_terms(mu, sigma))
}

/// `sigma^2` at which the residual peaks for this `mu`. Beyond it the residual
/// decreases monotonically to `-inf`; that is the branch the solver uses.
fn branch_start(mu: f64) -> f64 {
    // d/dt residual = 1/2 + (1 + mu)/2 e^{-mu - t/2} - e^{-1/2}, t = sigma^2
    if 1.0 + mu <= 0.0 {
        return 0.0;
    }
    let t = -2.0 * (mu + libm::log(2.0 * tail_slope() / (1.0 + mu)));
    t.max(0.0)
}

/// Smallest context length for which [`solve_sigma`] has a root at this `mu`.
pub fn min_feasible_n(mu: f64) -> Result<f64> {
    let peak = libm::sqrt(branch_start(mu));
    let g = constraint_residual(1.0, mu, peak)?;
    Ok(libm::exp(-g).max(1.0))
}

/// Solves the invariance constraint for `sigma` at fixed `n` and `mu`.
///
/// Returns 0 when `sigma = 0` already satisfies the constraint. Otherwise the
/// root on the branch where the residual decreases in `sigma` (the large-sigma
/// branch), so that `sigma*(n)` is nondecreasing in `n`. Found by bisection on
/// `sigma^2` with upper-bracket doubling.
pub fn solve_sigma(n: f64, mu: f64) -> Result<f64> {
    let r0 = constraint_residual(n, mu, 0.0)?;
    if libm::fabs(r0) < SOLVER_TOL {
        return Ok(0.0);
    }
    let residual_t = |t: f64| constraint_residual(n, mu, libm::sqrt(t));

    let mut lo = branch_start(mu);
    if residual_t(lo)? < 0.0 {
        return Err(Error::NoRoot {
            n,
            mu,
            min_feasible_n: min_feasible_n(mu)?,
        });
    }
    let mut hi = (4.0 * libm::log(n) / tail_slope()).max(lo + 1.0);
    let mut expansions = 0;
    while residual_t(hi)? > 0.0 {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 64 {
            return Err(Error::NoRoot {
                n,
                mu,
                min_feasible_n: min_feasible_n(mu)?,
            });
        }
    }

    let mut best = hi;
    for _ in 0..MAX_BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        let r = residual_t(mid)?;
        best = mid;
        if r == 0.0 || libm::fabs(r) < 1e-13 || hi - lo <= f64::EPSILON * hi {
            break;
        }
        if r > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let sigma = libm::sqrt(best);
    let r = constraint_residual(n, mu, sigma)?;
    if libm::fabs(r) >= SOLVER_TOL {
        return Err(Error::NoRoot {
            n,
            mu,
            min_feasible_n: min_feasible_n(mu)?,
        });
    }
    Ok(sigma)
}

/// One row of a [`sigma_curve`].
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPoint {
    pub n: f64,
    pub mu: f64,
    /// `None` when the constraint has no root at this `n`.
    pub sigma: Option<f64>,
    /// Residual at the returned sigma, or at the branch peak when unsolved.
    pub residual: f64,
}

impl SigmaPoint {
    pub fn solved(&self) -> bool {
        self.sigma.is_some()
    }
}

/// Solves the constraint over an ascending grid of context lengths. Points
/// without a root are kept and flagged (`sigma == None`).
pub fn sigma_curve(n_grid: &[f64], mu: f64) -> Result<Vec<SigmaPoint>> {
    if n_grid.is_empty() {
        return Err(Error::Empty("n grid"));
    }
    if n_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::param("n grid must be strictly ascending"));
    }
    n_grid
        .iter()
        .map(|&n| match solve_sigma(n, mu) {
            Ok(sigma) => Ok(SigmaPoint {
                n,
                mu,
                sigma: Some(sigma),
                residual: constraint_residual(n, mu, sigma)?,
            }),
            Err(Error::NoRoot { .. }) => Ok(SigmaPoint {
                n,
                mu,
                sigma: None,
                residual: constraint_residual(n, mu, libm::sqrt(branch_start(mu)))?,
            }),
            Err(e) => Err(e),
        })
        .collect()
}

/// Monte Carlo estimate of the mean row entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    pub n: usize,
    pub target: BalancingTarget,
    pub estimate: f64,
    pub stderr: f64,
    pub trials: usize,
    pub chunked: bool,
    pub seed: u64,
}

/// Samples `xi_j ~ N(0,1)` and `beta_j ~ N(mu, sigma^2)` for `n` positions,
/// takes the softmax entropy, and averages over `trials`.
///
/// With a layout, one beta is drawn per chunk and shared by its tokens;
/// tokens outside every chunk get beta = 0. Trial `t` uses
/// `Rng::new(seed).child(t)`, so the estimate does not depend on evaluation
/// order.
pub fn mc_entropy(
    n: usize,
    target: BalancingTarget,
    trials: usize,
    seed: u64,
    chunked: Option<&ChunkLayout>,
) -> Result<EntropyReport> {
    if trials == 0 {
        return Err(Error::param("mc_entropy needs at least one trial"));
    }
    if n == 0 {
        return Err(Error::Empty("context length"));
    }
    BalancingTarget::new(target.mu, target.sigma)?;
    if let Some(layout) = chunked {
        layout.validate(n)?;
    }

    let root = Rng::new(seed);
    let mut logits = vec![0.0; n];
    let mut betas = vec![0.0; chunked.map_or(0, |l| l.num_chunks())];
    let samples: Vec<f64> = (0..trials)
        .map(|t| {
            let mut rng = root.child(t as u64);
            for x in logits.iter_mut() {
                *x = rng.gaussian();
            }
            match chunked {
                None => {
                    for x in logits.iter_mut() {
                        *x += target.mu + target.sigma * rng.gaussian();
                    }
                }
                Some(layout) => {
                    for b in betas.iter_mut() {
                        *b = target.mu + target.sigma * rng.gaussian();
                    }
                    for (k, &(start, end)) in layout.chunks().iter().enumerate() {
                        for x in &mut logits[start..end] {
                            *x += betas[k];
                        }
                    }
                }
            }
            softmax_in_place(&mut logits).expect("finite logits");
            entropy_unchecked(&logits)
        })
        .collect();

    let estimate = stable_sum(samples.iter().copied()) / trials as f64;
    let stderr = if trials > 1 {
        let ss = stable_sum(samples.iter().map(|h| (h - estimate) * (h - estimate)));
        libm::sqrt(ss / (trials - 1) as f64 / trials as f64)
    } else {
        0.0
    };
    Ok(EntropyReport {
        n,
        target,
        estimate,
        stderr,
        trials,
        chunked: chunked.is_some(),
        seed,
    })
}
