//! Brute-force ground truth: Shapley values by enumeration, per-stratum
//! expected marginal contributions, and the linear coalition bounds `(a, b)`.
//!
//! All enumerations visit coalitions in ascending bitmask order and use
//! compensated summation, so results are bit-reproducible.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, ShapleyError};
use crate::game::{Coalition, Family, Game};

/// Largest `n` for coalition enumeration (2^(n-1) coalitions per player).
pub const COALITION_ENUMERATION_LIMIT: usize = 25;

/// Largest `n` for permutation enumeration (n! orders).
pub const PERMUTATION_ENUMERATION_LIMIT: usize = 10;

/// Constants with `a·|C| <= v(C) <= b·|C|` for every nonempty coalition.
///
/// `d = 2(b − a)` caps the range of marginal contributions in stratum `k`
/// at `d·(k + 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearBounds {
    pub a: f64,
    pub b: f64,
    pub d: f64,
}

impl LinearBounds {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a <= b) {
            return Err(invalid(format!("linear bounds need finite a <= b, got a = {a}, b = {b}")));
        }
        Ok(LinearBounds { a, b, d: 2.0 * (b - a) })
    }

    /// Bounds carrying only the range constant, for callers who know `d` but not `a`, `b`.
    pub fn from_d(d: f64) -> Result<Self> {
        if !(d.is_finite() && d >= 0.0) {
            return Err(invalid(format!("d must be finite and >= 0, got {d}")));
        }
        Ok(LinearBounds { a: 0.0, b: d / 2.0, d })
    }

    /// Upper bound on the range of marginal contributions within stratum `k`.
    pub fn stratum_range_bound(&self, k: usize) -> f64 {
        self.d * (k + 1) as f64
    }
}

/// Exact statistics of one player's marginal contributions within one stratum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumStats {
    pub k: usize,
    pub mean: f64,
    pub range: f64,
    pub count: u64,
}

/// Exact distribution summary of a player's marginal contribution under a
/// uniformly random permutation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalMoments {
    pub mean: f64,
    pub variance: f64,
    pub min: f64,
    pub max: f64,
}

impl MarginalMoments {
    pub fn range(&self) -> f64 {
        self.max - self.min
    }
}

/// Neumaier compensated sum.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

fn check_player<G: Game + ?Sized>(game: &G, player: usize) -> Result<usize> {
    let n = game.players();
    if player >= n {
        return Err(ShapleyError::InvalidCoalition { player, n });
    }
    Ok(n)
}

fn check_limit(what: &'static str, n: usize, limit: usize) -> Result<()> {
    if n > limit {
        return Err(ShapleyError::Infeasible { what, n, limit });
    }
    Ok(())
}

/// Spreads the bits of `mask` (over `n - 1` positions) around a zero at `player`.
#[inline]
pub(crate) fn insert_gap(mask: u64, player: usize) -> Coalition {
    let low = mask & ((1u64 << player) - 1);
    let high = (mask >> player) << (player + 1);
    Coalition::from_mask(low | high)
}

/// `|C|!(n−|C|−1)!/n!` for `|C| = 0..n`, built by running products.
pub fn coalition_weights(n: usize) -> Vec<f64> {
    let mut weights = Vec::with_capacity(n);
    let mut w = 1.0 / n as f64;
    for k in 0..n {
        if k > 0 {
            w *= k as f64 / (n - k) as f64;
        }
        weights.push(w);
    }
    weights
}

/// `C(n, k)` as a float, exact for the sizes used here.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64).round()
}

const CHUNK_BITS: usize = 16;

/// Per-size sums of marginal contributions of `player` over all `C ⊆ N∖{player}`.
fn size_sums<G: Game + ?Sized>(game: &G, player: usize) -> Vec<CompensatedSum> {
    let n = game.players();
    let total: u64 = 1 << (n - 1);
    let chunk: u64 = 1 << CHUNK_BITS.min(n - 1);
    let chunks = total / chunk;
    let partials: Vec<Vec<CompensatedSum>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut sums = vec![CompensatedSum::default(); n];
            for mask in c * chunk..(c + 1) * chunk {
                let coalition = insert_gap(mask, player);
                let mc = game.worth(coalition.with(player)) - game.worth(coalition);
                sums[coalition.size()].add(mc);
            }
            sums
        })
        .collect();
    let mut sums = vec![CompensatedSum::default(); n];
    for part in &partials {
        for (s, p) in sums.iter_mut().zip(part) {
            s.merge(p);
        }
    }
    sums
}

/// Shapley value of `player` as the weighted sum of marginal contributions over coalitions.
pub fn shapley_exact_coalitions<G: Game + ?Sized>(game: &G, player: usize) -> Result<f64> {
    let n = check_player(game, player)?;
    check_limit("coalition enumeration", n, COALITION_ENUMERATION_LIMIT)?;
    let weights = coalition_weights(n);
    let mut total = CompensatedSum::default();
    for (k, s) in size_sums(game, player).iter().enumerate() {
        total.add(weights[k] * s.value());
    }
    Ok(total.value())
}

/// Shapley values of all players by coalition enumeration.
pub fn shapley_exact<G: Game + ?Sized>(game: &G) -> Result<Vec<f64>> {
    (0..game.players())
        .map(|i| shapley_exact_coalitions(game, i))
        .collect()
}

/// Calls `visit` once per permutation of `0..n` (Heap's algorithm).
fn for_each_permutation(n: usize, mut visit: impl FnMut(&[usize])) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut stack = vec![0usize; n];
    visit(&order);
    let mut i = 1;
    while i < n {
        if stack[i] < i {
            if i % 2 == 0 {
                order.swap(0, i);
            } else {
                order.swap(stack[i], i);
            }
            visit(&order);
            stack[i] += 1;
            i = 1;
        } else {
            stack[i] = 0;
            i += 1;
        }
    }
}

/// Shapley value of `player` as the average marginal contribution to its
/// predecessors over all `n!` orders.
pub fn shapley_exact_permutations<G: Game + ?Sized>(game: &G, player: usize) -> Result<f64> {
    let n = check_player(game, player)?;
    check_limit("permutation enumeration", n, PERMUTATION_ENUMERATION_LIMIT)?;
    let mut total = CompensatedSum::default();
    let mut count = 0u64;
    for_each_permutation(n, |order| {
        let predecessors = order
            .iter()
            .take_while(|&&p| p != player)
            .fold(Coalition::EMPTY, |c, &p| c.with(p));
        total.add(game.worth(predecessors.with(player)) - game.worth(predecessors));
        count += 1;
    });
    Ok(total.value() / count as f64)
}

/// Iterates `k`-subsets of `0..m` as bitmasks in ascending order (Gosper's hack).
pub(crate) fn subsets_of_size(m: usize, k: usize) -> impl Iterator<Item = u64> {
    let limit = 1u64 << m;
    let mut next = if k <= m { Some((1u64 << k) - 1) } else { None };
    std::iter::from_fn(move || {
        let current = next?;
        next = if current == 0 {
            None
        } else {
            let low = current & current.wrapping_neg();
            let ripple = current + low;
            let candidate = (((ripple ^ current) >> 2) / low) | ripple;
            (candidate < limit).then_some(candidate)
        };
        Some(current)
    })
}

/// Mean and range of `player`'s marginal contributions over coalitions of size `k`.
pub fn stratum_mean_exact<G: Game + ?Sized>(game: &G, player: usize, k: usize) -> Result<StratumStats> {
    let n = check_player(game, player)?;
    if k >= n {
        return Err(invalid(format!("stratum {k} out of range 0..{n}")));
    }
    check_limit("stratum enumeration", n, COALITION_ENUMERATION_LIMIT)?;
    let mut sum = CompensatedSum::default();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut count = 0u64;
    for mask in subsets_of_size(n - 1, k) {
        let coalition = insert_gap(mask, player);
        let mc = game.worth(coalition.with(player)) - game.worth(coalition);
        sum.add(mc);
        min = min.min(mc);
        max = max.max(mc);
        count += 1;
    }
    Ok(StratumStats {
        k,
        mean: sum.value() / count as f64,
        range: max - min,
        count,
    })
}

/// Mean, variance and extremes of `player`'s marginal contribution under a random order.
pub fn marginal_moments_exact<G: Game + ?Sized>(game: &G, player: usize) -> Result<MarginalMoments> {
    let n = check_player(game, player)?;
    check_limit("coalition enumeration", n, COALITION_ENUMERATION_LIMIT)?;
    let weights = coalition_weights(n);
    let contributions = |mask: u64| {
        let c = insert_gap(mask, player);
        (c.size(), game.worth(c.with(player)) - game.worth(c))
    };
    let mut mean = CompensatedSum::default();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for mask in 0..1u64 << (n - 1) {
        let (size, mc) = contributions(mask);
        mean.add(weights[size] * mc);
        min = min.min(mc);
        max = max.max(mc);
    }
    let mean = mean.value();
    let mut variance = CompensatedSum::default();
    for mask in 0..1u64 << (n - 1) {
        let (size, mc) = contributions(mask);
        variance.add(weights[size] * (mc - mean) * (mc - mean));
    }
    Ok(MarginalMoments {
        mean,
        variance: variance.value().max(0.0),
        min,
        max,
    })
}

/// `σ²`: max over players of the exact marginal-contribution variance.
pub fn variance_bound_exact<G: Game + ?Sized>(game: &G) -> Result<f64> {
    (0..game.players()).try_fold(0.0f64, |acc, i| Ok(acc.max(marginal_moments_exact(game, i)?.variance)))
}

/// `r`: max over players of the exact marginal-contribution range.
pub fn range_bound_exact<G: Game + ?Sized>(game: &G) -> Result<f64> {
    (0..game.players()).try_fold(0.0f64, |acc, i| Ok(acc.max(marginal_moments_exact(game, i)?.range())))
}

/// `a` and `b` by enumerating every nonempty coalition. The empty coalition is
/// excluded since `v(∅)/|∅|` is undefined.
pub fn linear_bounds_exact<G: Game + ?Sized>(game: &G) -> Result<LinearBounds> {
    let n = game.players();
    check_limit("coalition enumeration", n, COALITION_ENUMERATION_LIMIT)?;
    let (a, b) = (1..1u64 << n)
        .map(|mask| {
            let c = Coalition::from_mask(mask);
            game.worth(c) / c.size() as f64
        })
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
    LinearBounds::new(a, b)
}

/// `a` and `b` from the family parameters, without enumeration.
pub fn linear_bounds_closed_form<G: Game + ?Sized>(game: &G) -> Result<LinearBounds> {
    let unsupported = |name: &str| ShapleyError::UnsupportedFamily(name.to_string());
    let family = game.family().ok_or_else(|| unsupported("custom"))?;
    let extremes = |xs: &mut dyn Iterator<Item = f64>| {
        xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
    };
    let (a, b) = match family {
        // the mean weight of any coalition lies between the extreme single weights
        Family::Additive { weights } => extremes(&mut weights.iter().copied()),
        Family::Symmetric { size_values } => extremes(
            &mut size_values
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, f)| f / k as f64),
        ),
        Family::Airport { costs } => {
            // for size s the cheapest ratio takes the s smallest costs
            let mut sorted = costs.clone();
            sorted.sort_by(f64::total_cmp);
            let a = extremes(&mut sorted.iter().enumerate().map(|(j, c)| c / (j + 1) as f64)).0;
            (a, *sorted.last().expect("nonempty game"))
        }
        other => return Err(unsupported(other.name())),
    };
    LinearBounds::new(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{make_additive, make_airport, make_majority, make_symmetric, make_weighted_voting, FnGame};

    const THIRD: f64 = 1.0 / 3.0;

    #[test]
    fn coalition_formula_examples() {
        let majority = make_majority(3).unwrap();
        assert!((shapley_exact_coalitions(&majority, 0).unwrap() - THIRD).abs() < 1e-15);
        let additive = make_additive(vec![1.0, 2.0, 3.0]).unwrap();
        assert!((shapley_exact_coalitions(&additive, 1).unwrap() - 2.0).abs() < 1e-15);
        let voting = make_weighted_voting(vec![3.0, 2.0, 1.0], 4.0).unwrap();
        let phi = shapley_exact(&voting).unwrap();
        let expected = [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0];
        for (p, e) in phi.iter().zip(expected) {
            assert!((p - e).abs() < 1e-15, "{phi:?}");
        }
    }

    #[test]
    fn permutation_formula_examples() {
        let single = FnGame::new(1, |c: Coalition| if c.is_empty() { 0.0 } else { 5.0 });
        assert_eq!(shapley_exact_permutations(&single, 0).unwrap(), 5.0);
        let majority = make_majority(3).unwrap();
        assert!((shapley_exact_permutations(&majority, 2).unwrap() - THIRD).abs() < 1e-15);
    }

    #[test]
    fn weighted_voting_pivot_count() {
        // independent route: count pivotal positions over the 6 orders by hand-rolled loop
        let weights = [3.0, 2.0, 1.0];
        let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut pivots = [0usize; 3];
        for order in orders {
            let mut acc = 0.0;
            for p in order {
                let before = acc;
                acc += weights[p];
                if before < 4.0 && acc >= 4.0 {
                    pivots[p] += 1;
                }
            }
        }
        assert_eq!(pivots, [4, 1, 1]);
        let voting = make_weighted_voting(weights.to_vec(), 4.0).unwrap();
        for i in 0..3 {
            let exact = shapley_exact_permutations(&voting, i).unwrap();
            assert!((exact - pivots[i] as f64 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn enumeration_caps() {
        let big = make_majority(11).unwrap();
        assert!(matches!(
            shapley_exact_permutations(&big, 0),
            Err(ShapleyError::Infeasible { limit: 10, .. })
        ));
        let huge = make_majority(26).unwrap();
        assert!(matches!(
            shapley_exact_coalitions(&huge, 0),
            Err(ShapleyError::Infeasible { limit: 25, .. })
        ));
        assert!(linear_bounds_exact(&huge).is_err());
    }

    #[test]
    fn stratum_examples() {
        let majority = make_majority(3).unwrap();
        let means: Vec<f64> = (0..3).map(|k| stratum_mean_exact(&majority, 0, k).unwrap().mean).collect();
        assert_eq!(means, vec![0.0, 1.0, 0.0]);
        let counts: Vec<u64> = (0..3).map(|k| stratum_mean_exact(&majority, 0, k).unwrap().count).collect();
        assert_eq!(counts, vec![1, 2, 1]);
        assert!((means.iter().sum::<f64>() / 3.0 - shapley_exact_coalitions(&majority, 0).unwrap()).abs() < 1e-15);

        let additive = make_additive(vec![1.0, 2.0, 3.0]).unwrap();
        for k in 0..3 {
            let s = stratum_mean_exact(&additive, 0, k).unwrap();
            assert_eq!((s.mean, s.range), (1.0, 0.0));
        }
        assert!(stratum_mean_exact(&additive, 0, 3).is_err());
    }

    #[test]
    fn gosper_enumerates_every_subset_once() {
        for m in 0..8 {
            for k in 0..=m {
                let subsets: Vec<u64> = subsets_of_size(m, k).collect();
                assert_eq!(subsets.len() as f64, binomial(m, k));
                assert!(subsets.windows(2).all(|w| w[0] < w[1]));
                assert!(subsets.iter().all(|s| s.count_ones() as usize == k && *s < 1 << m));
            }
        }
    }

    #[test]
    fn weights_match_factorials() {
        let fact = |x: usize| (1..=x).product::<usize>() as f64;
        for n in 1..=10 {
            for (k, w) in coalition_weights(n).iter().enumerate() {
                let expected = fact(k) * fact(n - k - 1) / fact(n);
                assert!((w - expected).abs() < 1e-15 * expected.max(1.0));
            }
        }
    }

    #[test]
    fn linear_bounds_examples() {
        let additive = make_additive(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(linear_bounds_exact(&additive).unwrap(), LinearBounds { a: 1.0, b: 3.0, d: 4.0 });
        assert_eq!(linear_bounds_closed_form(&additive).unwrap(), LinearBounds { a: 1.0, b: 3.0, d: 4.0 });

        let majority = make_majority(3).unwrap();
        assert_eq!(linear_bounds_exact(&majority).unwrap(), LinearBounds { a: 0.0, b: 0.5, d: 1.0 });

        let identity = make_symmetric((0..=5).map(|k| k as f64).collect()).unwrap();
        assert_eq!(linear_bounds_exact(&identity).unwrap(), LinearBounds { a: 1.0, b: 1.0, d: 0.0 });

        // ratios f(k)/k are 0, 1/2, 1/3, so the minimum is 0 at k = 1
        let sym = make_symmetric(vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(linear_bounds_closed_form(&sym).unwrap(), linear_bounds_exact(&sym).unwrap());
        assert_eq!(linear_bounds_closed_form(&sym).unwrap().a, 0.0);

        let airport = make_airport(vec![1.0, 1.0, 4.0]).unwrap();
        assert_eq!(linear_bounds_closed_form(&airport).unwrap(), linear_bounds_exact(&airport).unwrap());
    }

    #[test]
    fn closed_form_rejects_other_families() {
        let voting = make_weighted_voting(vec![1.0, 1.0], 1.0).unwrap();
        assert_eq!(
            linear_bounds_closed_form(&voting),
            Err(ShapleyError::UnsupportedFamily("weighted_voting".into()))
        );
        let custom = FnGame::new(2, |c: Coalition| c.size() as f64);
        assert!(linear_bounds_closed_form(&custom).is_err());
    }

    #[test]
    fn majority_moments() {
        let majority = make_majority(3).unwrap();
        let m = marginal_moments_exact(&majority, 0).unwrap();
        assert!((m.mean - THIRD).abs() < 1e-15);
        assert!((m.variance - 2.0 / 9.0).abs() < 1e-15);
        assert_eq!(m.range(), 1.0);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..10 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 10.0);
    }
}
