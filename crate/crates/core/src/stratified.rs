//! Stratified sampling over coalition sizes.
//!
//! For player `i`, stratum `S_k` holds the coalitions of size `k` that do not
//! contain `i`. The Shapley value is the plain average of the `n` stratum
//! means, so each stratum is estimated independently and the range of its
//! marginal contributions is capped by `d·(k + 1)`. The budget is split in
//! proportion to `(k + 1)^(2/3)`, which minimises the aggregate Hoeffding
//! bound over fractional allocations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, ShapleyError};
use crate::exact::{binomial, insert_gap, subsets_of_size, linear_bounds_closed_form, linear_bounds_exact, CompensatedSum, LinearBounds};
use crate::game::{Coalition, Game};
use crate::rng::{self, StreamRng};
use crate::srs::{check_delta, hoeffding_error_bound, BoundInputs, BoundMethod, ErrorBound};

/// Per-stratum sample counts for one player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrataPlan {
    pub n: usize,
    pub budget: u64,
    pub counts: Vec<u64>,
    pub fractional: Vec<f64>,
}

/// Splits `m` samples over `n` strata: floor the optimal fractional
/// allocation, then hand out the leftovers one at a time from `k = 0` upward.
pub fn allocate_samples(m: u64, n: usize) -> Result<StrataPlan> {
    if n == 0 {
        return Err(invalid("at least one stratum is required"));
    }
    if m < n as u64 {
        return Err(ShapleyError::BudgetTooSmall { budget: m, strata: n });
    }
    let weights: Vec<f64> = (0..n).map(|k| ((k + 1) as f64).powf(2.0 / 3.0)).collect();
    let total: f64 = weights.iter().sum();
    let fractional: Vec<f64> = weights.iter().map(|w| m as f64 * w / total).collect();
    let mut counts: Vec<u64> = fractional.iter().map(|f| f.floor() as u64).collect();

    // rounding in the fractional shares can overshoot by a sample at most
    let mut assigned: u64 = counts.iter().sum();
    for count in counts.iter_mut().rev() {
        if assigned <= m {
            break;
        }
        if *count > 0 {
            *count -= 1;
            assigned -= 1;
        }
    }
    for k in (0..n).cycle() {
        if assigned >= m {
            break;
        }
        counts[k] += 1;
        assigned += 1;
    }
    Ok(StrataPlan {
        n,
        budget: m,
        counts,
        fractional,
    })
}

/// Uniform random size-`k` coalition drawn from `N ∖ {excluded}`.
pub fn sample_k_subset(n: usize, excluded: usize, k: usize, rng: &mut StreamRng) -> Result<Coalition> {
    if excluded >= n {
        return Err(invalid(format!("player {excluded} out of range 0..{n}")));
    }
    if k >= n {
        return Err(invalid(format!("stratum {k} out of range 0..{n}")));
    }
    let mut eligible: Vec<usize> = (0..n).filter(|&p| p != excluded).collect();
    rng::partial_shuffle(&mut eligible, k, rng);
    Ok(Coalition::from_members(eligible[..k].iter().copied()))
}

/// `√(r_k²·ln(2/δ)/(2m_k))`, the Hoeffding bound for one stratum.
pub fn per_stratum_error_bound(r_k: f64, m_k: u64, delta: f64) -> Result<f64> {
    hoeffding_error_bound(r_k, m_k, delta)
}

/// Per-stratum confidence `δ = 1 − (1 − β)^(1/n)` giving overall confidence `1 − β`.
pub fn per_stratum_delta(beta: f64, n: usize) -> Result<f64> {
    check_delta(beta)?;
    if n == 0 {
        return Err(invalid("at least one stratum is required"));
    }
    // -expm1(ln(1-β)/n) avoids cancellation when β is small
    Ok(-((-beta).ln_1p() / n as f64).exp_m1())
}

/// Aggregate bound `d·√(−ln(δ/2))/√m · (n + 1)/2` holding with probability `>= 1 − β`.
pub fn stratified_error_bound(d: f64, m: u64, n: usize, beta: f64) -> Result<f64> {
    if !(d >= 0.0 && d.is_finite()) {
        return Err(invalid(format!("d must be finite and >= 0, got {d}")));
    }
    if m < 1 {
        return Err(invalid("at least one sample is required"));
    }
    let delta = per_stratum_delta(beta, n)?;
    Ok(d * (-(delta / 2.0).ln()).sqrt() / (m as f64).sqrt() * (n + 1) as f64 / 2.0)
}

/// Hoeffding bound for SRS over all `m` samples with the global range
/// `d·n`; never below `d·√(n·ln(2/δ))`.
pub fn srs_error_floor(d: f64, n: usize, beta: f64) -> Result<f64> {
    let delta = per_stratum_delta(beta, n)?;
    Ok(d * (n as f64 * (2.0 / delta).ln()).sqrt())
}

/// True iff `m > (n + 1)²/4`, where the stratified bound beats the SRS floor.
pub fn stratified_beats_srs(m: u64, n: usize) -> bool {
    let n1 = n as u128 + 1;
    4 * m as u128 > n1 * n1
}

/// Smallest budget `m >= n` whose stratified bound is at most `epsilon`.
pub fn stratified_sample_size(d: f64, n: usize, beta: f64, epsilon: f64) -> Result<u64> {
    if !(epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let unit = stratified_error_bound(d, 1, n, beta)?;
    let mut m = crate::srs::ceil_samples((unit / epsilon).powi(2)).max(n as u64);
    while stratified_error_bound(d, m, n, beta)? > epsilon {
        m += 1;
    }
    Ok(m)
}

/// Where the linear bounds feeding `d` came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsSource {
    Exact,
    ClosedForm,
    Metadata,
    UserSupplied,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourcedBounds {
    pub bounds: LinearBounds,
    pub source: BoundsSource,
}

impl From<LinearBounds> for SourcedBounds {
    fn from(bounds: LinearBounds) -> Self {
        SourcedBounds {
            bounds,
            source: BoundsSource::UserSupplied,
        }
    }
}

/// Linear bounds from the family closed form, then attached metadata, then enumeration.
pub fn resolve_linear_bounds<G: Game + ?Sized>(game: &G) -> Result<SourcedBounds> {
    if let Ok(bounds) = linear_bounds_closed_form(game) {
        return Ok(SourcedBounds {
            bounds,
            source: BoundsSource::ClosedForm,
        });
    }
    if let Some(bounds) = game.facts().and_then(|f| f.linear_bounds) {
        return Ok(SourcedBounds {
            bounds,
            source: BoundsSource::Metadata,
        });
    }
    Ok(SourcedBounds {
        bounds: linear_bounds_exact(game)?,
        source: BoundsSource::Exact,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratifiedOptions {
    /// Enumerate a stratum outright when its allocation reaches its size.
    pub exhaust_saturated: bool,
}

impl Default for StratifiedOptions {
    fn default() -> Self {
        StratifiedOptions { exhaust_saturated: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratifiedEstimate {
    pub player: usize,
    pub per_stratum: Vec<f64>,
    pub plan: StrataPlan,
    /// Marginal contributions actually evaluated per stratum.
    pub drawn: Vec<u64>,
    /// Strata that were enumerated instead of sampled.
    pub exhausted: Vec<bool>,
    pub global_estimate: f64,
    pub bound: ErrorBound,
    pub beta: f64,
    pub delta_per_stratum: f64,
    pub bounds_source: BoundsSource,
    pub seed: u64,
}

impl StratifiedEstimate {
    pub fn oracle_calls(&self) -> u64 {
        2 * self.drawn.iter().sum::<u64>()
    }
}

/// RNG stream for stratum `k` of `player`.
fn stratum_stream(seed: u64, player: usize, k: usize) -> StreamRng {
    rng::stream(seed, ((player as u64) << 32) | k as u64)
}

/// Stratified estimate of one player's Shapley value with budget `m`.
pub fn estimate_stratified<G, B>(game: &G, player: usize, m: u64, beta: f64, bounds: B, seed: u64) -> Result<StratifiedEstimate>
where
    G: Game + ?Sized,
    B: Into<SourcedBounds>,
{
    estimate_stratified_with(game, player, m, beta, bounds, seed, StratifiedOptions::default())
}

pub fn estimate_stratified_with<G, B>(
    game: &G,
    player: usize,
    m: u64,
    beta: f64,
    bounds: B,
    seed: u64,
    options: StratifiedOptions,
) -> Result<StratifiedEstimate>
where
    G: Game + ?Sized,
    B: Into<SourcedBounds>,
{
    let n = game.players();
    if player >= n {
        return Err(ShapleyError::InvalidCoalition { player, n });
    }
    let sourced = bounds.into();
    let epsilon = stratified_error_bound(sourced.bounds.d, m, n, beta)?;
    let plan = allocate_samples(m, n)?;

    let strata: Vec<(f64, u64, bool)> = plan
        .counts
        .par_iter()
        .enumerate()
        .map(|(k, &count)| {
            let contribution = |c: Coalition| game.worth(c.with(player)) - game.worth(c);
            let mut sum = CompensatedSum::default();
            let size = binomial(n - 1, k);
            if options.exhaust_saturated && count as f64 >= size {
                let mut visited = 0u64;
                for mask in subsets_of_size(n - 1, k) {
                    sum.add(contribution(insert_gap(mask, player)));
                    visited += 1;
                }
                (sum.value() / visited as f64, visited, true)
            } else {
                let mut rng = stratum_stream(seed, player, k);
                for _ in 0..count {
                    let c = sample_k_subset(n, player, k, &mut rng).expect("stratum in range");
                    sum.add(contribution(c));
                }
                (sum.value() / count as f64, count, false)
            }
        })
        .collect();

    let per_stratum: Vec<f64> = strata.iter().map(|s| s.0).collect();
    let mut total = CompensatedSum::default();
    for &x in &per_stratum {
        total.add(x);
    }
    let LinearBounds { a, b, d } = sourced.bounds;
    Ok(StratifiedEstimate {
        player,
        global_estimate: total.value() / n as f64,
        drawn: strata.iter().map(|s| s.1).collect(),
        exhausted: strata.iter().map(|s| s.2).collect(),
        per_stratum,
        plan,
        bound: ErrorBound {
            epsilon,
            delta: beta,
            method: BoundMethod::Stratified,
            inputs: BoundInputs::Linear { a, b, d, beta },
        },
        beta,
        delta_per_stratum: per_stratum_delta(beta, n)?,
        bounds_source: sourced.source,
        seed,
    })
}

/// Stratified estimates for every player, each with budget `m`.
pub fn estimate_stratified_all<G, B>(game: &G, m: u64, beta: f64, bounds: B, seed: u64) -> Result<Vec<StratifiedEstimate>>
where
    G: Game + ?Sized,
    B: Into<SourcedBounds>,
{
    let sourced = bounds.into();
    (0..game.players())
        .map(|i| estimate_stratified(game, i, m, beta, sourced, seed))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{make_additive, make_majority, CountingGame};

    #[test]
    fn allocation_examples() {
        let plan = allocate_samples(100, 4).unwrap();
        assert_eq!(plan.counts, vec![14, 23, 28, 35]);
        // independent route: 100·(k+1)^(2/3) / Σ_j (j+1)^(2/3), evaluated with cube roots
        let w: Vec<f64> = (1..=4).map(|x: i32| f64::cbrt((x * x) as f64)).collect();
        let total: f64 = w.iter().sum();
        for (f, wk) in plan.fractional.iter().zip(&w) {
            assert!((f - 100.0 * wk / total).abs() < 1e-12);
        }
        let quoted = [13.913, 22.086, 28.941, 35.058];
        for (f, e) in plan.fractional.iter().zip(quoted) {
            assert!((f - e).abs() < 2e-3, "{:?}", plan.fractional);
        }
        assert_eq!(allocate_samples(5, 1).unwrap().counts, vec![5]);
        let plan = allocate_samples(10, 2).unwrap();
        assert_eq!(plan.counts, vec![4, 6]);
        assert!((plan.fractional[0] - 3.865).abs() < 1e-3);
        assert!((plan.fractional[1] - 6.135).abs() < 1e-3);
    }

    #[test]
    fn allocation_rejects_small_budgets() {
        assert_eq!(allocate_samples(3, 4), Err(ShapleyError::BudgetTooSmall { budget: 3, strata: 4 }));
        assert!(allocate_samples(3, 0).is_err());
    }

    #[test]
    fn trivial_subsets() {
        let mut rng = rng::stream(5, 0);
        for _ in 0..20 {
            assert_eq!(sample_k_subset(6, 2, 0, &mut rng).unwrap(), Coalition::EMPTY);
            assert_eq!(
                sample_k_subset(6, 2, 5, &mut rng).unwrap(),
                Coalition::grand(6).without(2)
            );
        }
        assert!(sample_k_subset(6, 2, 6, &mut rng).is_err());
    }

    #[test]
    fn bound_examples() {
        let b = stratified_error_bound(1.0, 100, 4, 0.05).unwrap();
        assert!((b - 0.56215).abs() < 1e-4, "{b}");
        assert!((per_stratum_delta(0.05, 4).unwrap() - 0.012_741_5).abs() < 1e-7);
        assert_eq!(stratified_error_bound(0.0, 100, 4, 0.05).unwrap(), 0.0);
        // one stratum: δ = β and the factor (n + 1)/2 is 1
        let single = stratified_error_bound(2.0, 50, 1, 0.1).unwrap();
        assert!((single - 2.0 * (2.0f64 / 0.1).ln().sqrt() / 50f64.sqrt()).abs() < 1e-14);
        assert!(stratified_error_bound(1.0, 100, 4, 1.0).is_err());
        assert!(stratified_error_bound(-1.0, 100, 4, 0.5).is_err());
    }

    #[test]
    fn per_stratum_bound_matches_hoeffding() {
        let b = per_stratum_error_bound(1.0, 185, 0.05).unwrap();
        assert!((b - 0.099_849).abs() < 1e-6);
        assert_eq!(b.to_bits(), hoeffding_error_bound(1.0, 185, 0.05).unwrap().to_bits());
        assert_eq!(per_stratum_error_bound(0.0, 3, 0.2).unwrap(), 0.0);
        assert!(per_stratum_error_bound(1.0, 3, 0.0).is_err());
    }

    #[test]
    fn comparison_examples() {
        assert!(stratified_beats_srs(100, 4));
        assert!(!stratified_beats_srs(2, 3));
        assert!(!stratified_beats_srs(4, 3));
        assert!(stratified_beats_srs(5, 3));
    }

    #[test]
    fn additive_is_exact_in_every_stratum() {
        let g = make_additive(vec![1.0, 2.0, 3.0]).unwrap();
        let bounds = linear_bounds_exact(&g).unwrap();
        for m in [3, 4, 50, 1000] {
            for options in [StratifiedOptions::default(), StratifiedOptions { exhaust_saturated: false }] {
                let est = estimate_stratified_with(&g, 1, m, 0.05, bounds, 11, options).unwrap();
                assert_eq!(est.global_estimate, 2.0);
            }
        }
    }

    #[test]
    fn majority_estimate_within_bound() {
        let g = make_majority(3).unwrap();
        let bounds = linear_bounds_exact(&g).unwrap();
        assert_eq!(bounds.d, 1.0);
        for options in [StratifiedOptions::default(), StratifiedOptions { exhaust_saturated: false }] {
            let est = estimate_stratified_with(&g, 0, 3000, 0.05, bounds, 7, options).unwrap();
            assert!((est.global_estimate - 1.0 / 3.0).abs() <= est.bound.epsilon);
            let mean = est.per_stratum.iter().sum::<f64>() / 3.0;
            assert_eq!(mean, est.global_estimate);
        }
    }

    #[test]
    fn saturated_strata_are_enumerated() {
        let g = CountingGame::new(make_majority(3).unwrap());
        let bounds = linear_bounds_exact(&g).unwrap();
        g.reset();
        let est = estimate_stratified(&g, 0, 3000, 0.05, bounds, 7).unwrap();
        assert_eq!(est.exhausted, vec![true, true, true]);
        assert_eq!(est.drawn, vec![1, 2, 1]);
        assert_eq!(est.per_stratum, vec![0.0, 1.0, 0.0]);
        assert_eq!(g.calls(), est.oracle_calls());
    }

    #[test]
    fn sampled_strata_cost_two_calls_each() {
        let g = CountingGame::new(make_majority(9).unwrap());
        let bounds = linear_bounds_exact(&g).unwrap();
        g.reset();
        let options = StratifiedOptions { exhaust_saturated: false };
        let est = estimate_stratified_with(&g, 4, 500, 0.05, bounds, 1, options).unwrap();
        assert_eq!(est.drawn.iter().sum::<u64>(), 500);
        assert_eq!(g.calls(), 1000);
    }

    #[test]
    fn delta_per_stratum_is_within_beta() {
        for n in 1..100 {
            let d = per_stratum_delta(0.05, n).unwrap();
            assert!(d > 0.0 && d <= 0.05);
        }
        assert_eq!(per_stratum_delta(0.3, 1).unwrap(), 0.3);
    }

    #[test]
    fn sample_size_meets_target() {
        for (d, n, eps) in [(1.0, 3, 0.1), (2.0, 8, 0.5), (0.5, 20, 0.05)] {
            let m = stratified_sample_size(d, n, 0.05, eps).unwrap();
            assert!(stratified_error_bound(d, m, n, 0.05).unwrap() <= eps);
            assert!(m == n as u64 || stratified_error_bound(d, m - 1, n, 0.05).unwrap() > eps);
        }
    }
}
