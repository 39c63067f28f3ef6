//! Simple random sampling over permutations.
//!
//! One permutation yields a marginal contribution for every player: scanning
//! the order left to right with a running coalition costs `n + 1` oracle
//! calls per permutation. Sample sizes and error bounds come from Chebyshev's
//! inequality (known variance) or Hoeffding's inequality (known range).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Result};
use crate::exact::CompensatedSum;
use crate::game::{Coalition, Game};
use crate::rng::{self, StreamRng};

/// Permutations per independently seeded chunk.
pub const SRS_CHUNK: u64 = 1024;

/// A joining order of the players.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn order(&self) -> &[usize] {
        &self.0
    }

    /// Players preceding `player` in this order.
    pub fn predecessors(&self, player: usize) -> Coalition {
        self.0
            .iter()
            .take_while(|&&p| p != player)
            .fold(Coalition::EMPTY, |c, &p| c.with(p))
    }

    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.0.len()];
        self.0
            .iter()
            .all(|&p| p < seen.len() && !std::mem::replace(&mut seen[p], true))
    }
}

/// Uniformly random permutation of `0..n` (Fisher-Yates).
pub fn random_permutation(n: usize, rng: &mut StreamRng) -> Permutation {
    let mut perm = Permutation::identity(n);
    rng::partial_shuffle(&mut perm.0, n, rng);
    perm
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMethod {
    Chebyshev,
    Hoeffding,
    /// Normal-approximation interval. Carries no finite-sample guarantee.
    CltBaseline,
    Stratified,
}

impl BoundMethod {
    pub fn label(self) -> &'static str {
        match self {
            BoundMethod::Chebyshev => "chebyshev",
            BoundMethod::Hoeffding => "hoeffding",
            BoundMethod::CltBaseline => "clt-baseline (no finite-sample guarantee)",
            BoundMethod::Stratified => "stratified",
        }
    }

    pub fn has_guarantee(self) -> bool {
        !matches!(self, BoundMethod::CltBaseline)
    }
}

/// The quantity each method was fed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundInputs {
    Variance { sigma2: f64 },
    Range { r: f64 },
    SampleStdDev { s: f64 },
    Linear { a: f64, b: f64, d: f64, beta: f64 },
}

/// `Pr(|φ̂ − φ| >= epsilon) <= delta`, for every method except the CLT baseline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub epsilon: f64,
    pub delta: f64,
    pub method: BoundMethod,
    pub inputs: BoundInputs,
}

/// Per-player SRS estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub per_player: Vec<f64>,
    pub samples_used: u64,
    pub seed: u64,
    pub bound: Option<ErrorBound>,
}

impl Estimate {
    pub fn with_bound(mut self, bound: ErrorBound) -> Self {
        self.bound = Some(bound);
        self
    }
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(())
}

fn check_nonnegative(name: &str, x: f64) -> Result<()> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(invalid(format!("{name} must be finite and >= 0, got {x}")));
    }
    Ok(())
}

fn check_samples(m: u64) -> Result<()> {
    if m < 1 {
        return Err(invalid("at least one sample is required"));
    }
    Ok(())
}

/// Ceiling that ignores floating-point noise just above an integer.
pub(crate) fn ceil_samples(x: f64) -> u64 {
    let nearest = x.round();
    let value = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) { nearest } else { x.ceil() };
    (value as u64).max(1)
}

/// `max(1, ⌈σ²/(δ·ε²)⌉)`.
pub fn chebyshev_sample_size(sigma2: f64, epsilon: f64, delta: f64) -> Result<u64> {
    check_nonnegative("sigma2", sigma2)?;
    check_epsilon(epsilon)?;
    check_delta(delta)?;
    Ok(ceil_samples(sigma2 / (delta * epsilon * epsilon)))
}

/// `max(1, ⌈ln(2/δ)·r²/(2ε²)⌉)`.
pub fn hoeffding_sample_size(r: f64, epsilon: f64, delta: f64) -> Result<u64> {
    check_nonnegative("r", r)?;
    check_epsilon(epsilon)?;
    check_delta(delta)?;
    Ok(ceil_samples((2.0 / delta).ln() * r * r / (2.0 * epsilon * epsilon)))
}

/// `σ/√(m·δ)`.
pub fn chebyshev_error_bound(sigma2: f64, m: u64, delta: f64) -> Result<f64> {
    check_nonnegative("sigma2", sigma2)?;
    check_samples(m)?;
    check_delta(delta)?;
    Ok(sigma2.sqrt() / (m as f64 * delta).sqrt())
}

/// `r·√(ln(2/δ)/(2m))`.
pub fn hoeffding_error_bound(r: f64, m: u64, delta: f64) -> Result<f64> {
    check_nonnegative("r", r)?;
    check_samples(m)?;
    check_delta(delta)?;
    Ok(r * ((2.0 / delta).ln() / (2.0 * m as f64)).sqrt())
}

/// Draws `m` permutations in fixed-size chunks and folds each chunk's
/// per-player marginal contributions into an accumulator. Chunk `c` uses
/// stream `c` of `seed`; accumulators come back in chunk order.
fn fold_permutation_chunks<G, T, I, F>(game: &G, m: u64, seed: u64, init: I, fold: F) -> Vec<T>
where
    G: Game + ?Sized,
    T: Send,
    I: Fn() -> T + Sync,
    F: Fn(&mut T, &[f64]) + Sync,
{
    let n = game.players();
    let chunks = m.div_ceil(SRS_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = rng::stream(seed, chunk);
            let mut acc = init();
            let mut contributions = vec![0.0; n];
            let draws = SRS_CHUNK.min(m - chunk * SRS_CHUNK);
            for _ in 0..draws {
                let perm = random_permutation(n, &mut rng);
                let mut coalition = Coalition::EMPTY;
                let mut previous = game.worth(coalition);
                for &p in perm.order() {
                    coalition = coalition.with(p);
                    let current = game.worth(coalition);
                    contributions[p] = current - previous;
                    previous = current;
                }
                fold(&mut acc, &contributions);
            }
            acc
        })
        .collect()
}

/// Estimates every player's Shapley value from `m` random permutations.
///
/// Deterministic in `(game, m, seed)` regardless of thread count.
pub fn estimate_srs<G: Game + ?Sized>(game: &G, m: u64, seed: u64) -> Result<Estimate> {
    check_samples(m)?;
    let n = game.players();
    let partials = fold_permutation_chunks(
        game,
        m,
        seed,
        || vec![CompensatedSum::default(); n],
        |sums, contributions| {
            for (s, &x) in sums.iter_mut().zip(contributions) {
                s.add(x);
            }
        },
    );
    let mut totals = vec![CompensatedSum::default(); n];
    for part in &partials {
        for (t, p) in totals.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    Ok(Estimate {
        per_player: totals.iter().map(|t| t.value() / m as f64).collect(),
        samples_used: m,
        seed,
        bound: None,
    })
}

/// The `m` marginal contributions of `player` drawn by [`estimate_srs`] with the same seed.
pub fn srs_marginal_samples<G: Game + ?Sized>(game: &G, player: usize, m: u64, seed: u64) -> Result<Vec<f64>> {
    check_samples(m)?;
    if player >= game.players() {
        return Err(invalid(format!("player {player} out of range")));
    }
    let chunks = fold_permutation_chunks(game, m, seed, Vec::new, |xs, contributions| {
        xs.push(contributions[player])
    });
    Ok(chunks.concat())
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p)
}

/// `z_{1−δ/2}·s/√m` with `s` the sample standard deviation (divisor `m − 1`).
pub fn clt_interval_halfwidth(samples: &[f64], delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if samples.len() < 2 {
        return Err(invalid("the CLT interval needs at least two samples"));
    }
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    let s = (ss / (m - 1.0)).sqrt();
    Ok(normal_quantile(1.0 - delta / 2.0) * s / m.sqrt())
}
