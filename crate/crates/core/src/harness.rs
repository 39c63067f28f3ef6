//! Experiment drivers: game files, coverage experiments, error curves and the
//! CLT under-coverage demonstration.

use std::collections::BTreeSet;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapleyError};
use crate::exact::{range_bound_exact, shapley_exact_coalitions, variance_bound_exact, COALITION_ENUMERATION_LIMIT};
use crate::game::{self, Coalition, Family, FamilyGame, Game, KnownFacts};
use crate::rng;
use crate::srs::{self, BoundMethod};
use crate::stratified::{self, StratifiedOptions};

// ---------------------------------------------------------------------------
// Game files
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameFile {
    family: String,
    n: usize,
    params: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    facts: Option<KnownFacts>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightedVotingParams {
    weights: Vec<f64>,
    quota: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsParams {
    weights: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SymmetricParams {
    size_values: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AirportParams {
    costs: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableEntry {
    mask: u64,
    value: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableParams {
    entries: Vec<TableEntry>,
}

fn params<T: for<'de> Deserialize<'de>>(family: &str, value: serde_json::Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| ShapleyError::Parse(format!("bad {family} params: {e}")))
}

fn expect_len(what: &str, len: usize, n: usize) -> Result<()> {
    if len != n {
        return Err(ShapleyError::Parse(format!("{what} has {len} entries but n = {n}")));
    }
    Ok(())
}

/// Parses a game definition:
/// `{"family": ..., "n": ..., "params": {...}}`, with an optional `"facts"` object.
pub fn parse_game(text: &str) -> Result<FamilyGame> {
    let file: GameFile = serde_json::from_str(text).map_err(|e| ShapleyError::Parse(e.to_string()))?;
    let n = file.n;
    let game = match file.family.as_str() {
        "weighted_voting" => {
            let p: WeightedVotingParams = params(&file.family, file.params)?;
            expect_len("weights", p.weights.len(), n)?;
            game::make_weighted_voting(p.weights, p.quota)?
        }
        "additive" => {
            let p: WeightsParams = params(&file.family, file.params)?;
            expect_len("weights", p.weights.len(), n)?;
            game::make_additive(p.weights)?
        }
        "symmetric" => {
            let p: SymmetricParams = params(&file.family, file.params)?;
            expect_len("size_values", p.size_values.len(), n + 1)?;
            game::make_symmetric(p.size_values)?
        }
        "airport" => {
            let p: AirportParams = params(&file.family, file.params)?;
            expect_len("costs", p.costs.len(), n)?;
            game::make_airport(p.costs)?
        }
        "table" => {
            let p: TableParams = params(&file.family, file.params)?;
            if n == 0 || n > game::MAX_TABLE_PLAYERS {
                return Err(ShapleyError::Parse(format!(
                    "table games need 1 <= n <= {}, got {n}",
                    game::MAX_TABLE_PLAYERS
                )));
            }
            let mut values = vec![None; 1 << n];
            for entry in &p.entries {
                let slot = values
                    .get_mut(entry.mask as usize)
                    .ok_or_else(|| ShapleyError::Parse(format!("mask {} exceeds 2^{n}", entry.mask)))?;
                if slot.replace(entry.value).is_some() {
                    return Err(ShapleyError::Parse(format!("mask {} listed twice", entry.mask)));
                }
            }
            let values: Option<Vec<f64>> = values.into_iter().collect();
            let values = values.ok_or_else(|| {
                ShapleyError::Parse(format!("table lists {} of {} coalitions", p.entries.len(), 1u64 << n))
            })?;
            game::table_from_values(n, values)?
        }
        other => return Err(ShapleyError::Parse(format!("unknown family {other:?}"))),
    };
    match file.facts {
        Some(facts) => game.with_facts(facts),
        None => Ok(game),
    }
}

/// Renders a game in the format read by [`parse_game`].
pub fn game_to_json(game: &FamilyGame) -> String {
    let n = game.players();
    let family = game.family().expect("family games carry their family");
    let params = match family {
        Family::WeightedVoting { weights, quota } => serde_json::json!({ "weights": weights, "quota": quota }),
        Family::Additive { weights } => serde_json::json!({ "weights": weights }),
        Family::Symmetric { size_values } => serde_json::json!({ "size_values": size_values }),
        Family::Airport { costs } => serde_json::json!({ "costs": costs }),
        Family::Table { values } => {
            let entries: Vec<TableEntry> = values
                .iter()
                .enumerate()
                .map(|(mask, &value)| TableEntry { mask: mask as u64, value })
                .collect();
            serde_json::json!({ "entries": entries })
        }
    };
    let file = GameFile {
        family: family.name().to_string(),
        n,
        params,
        facts: None,
    };
    serde_json::to_string_pretty(&file).expect("game files serialize")
}

// ---------------------------------------------------------------------------
// Test beds
// ---------------------------------------------------------------------------

/// Random table game with values uniform in `[-1, 1]` (and `v(∅) = 0`).
pub fn random_table_game(n: usize, seed: u64) -> Result<FamilyGame> {
    let mut rng = rng::stream(seed, 0);
    let values = (0..1u64 << n)
        .map(|mask| {
            if mask == 0 {
                0.0
            } else {
                (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            }
        })
        .collect();
    game::table_from_values(n, values)
}

/// Airport game with costs `1/n, 2/n, ..., 1`.
pub fn staircase_airport(n: usize) -> Result<FamilyGame> {
    game::make_airport((1..=n).map(|j| j as f64 / n as f64).collect())
}

/// Player of interest in [`clt_demo_game`].
pub const CLT_DEMO_PLAYER: usize = 0;
pub const CLT_DEMO_PLAYERS: usize = 10;
pub const CLT_DEMO_SAMPLES: u64 = 30;
pub const CLT_DEMO_DELTA: f64 = 0.05;

/// Ten-player game where player 0 contributes 1 only when its predecessors are
/// exactly `{1, .., 5}` (probability 1/1260) and 0 otherwise.
pub fn clt_demo_game() -> FamilyGame {
    let target = Coalition::from_members(0..=5);
    let values = (0..1u64 << CLT_DEMO_PLAYERS)
        .map(|mask| if mask == target.mask() { 1.0 } else { 0.0 })
        .collect();
    game::table_from_values(CLT_DEMO_PLAYERS, values).expect("valid demo table")
}

// ---------------------------------------------------------------------------
// Ground truth and game constants
// ---------------------------------------------------------------------------

/// Exact Shapley value of `player`, from metadata or by enumeration.
pub fn ground_truth<G: Game + ?Sized>(game: &G, player: usize) -> Result<f64> {
    if let Some(phi) = game.facts().and_then(|f| f.exact_shapley.as_ref()) {
        return phi
            .get(player)
            .copied()
            .ok_or(ShapleyError::InvalidCoalition { player, n: game.players() });
    }
    if game.players() > COALITION_ENUMERATION_LIMIT {
        return Err(ShapleyError::NoGroundTruth(format!(
            "n = {} exceeds the enumeration limit and no exact values are attached",
            game.players()
        )));
    }
    shapley_exact_coalitions(game, player)
}

/// `σ²` from metadata, else by enumeration.
pub fn resolve_variance_bound<G: Game + ?Sized>(game: &G) -> Result<f64> {
    match game.facts().and_then(|f| f.variance_bound) {
        Some(v) => Ok(v),
        None => variance_bound_exact(game),
    }
}

/// `r` from metadata, else by enumeration.
pub fn resolve_range_bound<G: Game + ?Sized>(game: &G) -> Result<f64> {
    match game.facts().and_then(|f| f.range_bound) {
        Some(r) => Ok(r),
        None => range_bound_exact(game),
    }
}

// ---------------------------------------------------------------------------
// Coverage
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverageMethod {
    /// SRS with `m` sized by Chebyshev from `σ²`.
    Chebyshev,
    /// SRS with `m` sized by Hoeffding from `r`.
    Hoeffding,
    /// Stratified sampling with `m` sized so the aggregate bound is `ε`.
    Stratified { exhaust_saturated: bool },
    /// SRS with a fixed `m`; each trial is judged against its own CLT half-width.
    CltBaseline { m: u64 },
}

impl CoverageMethod {
    pub fn bound_method(self) -> BoundMethod {
        match self {
            CoverageMethod::Chebyshev => BoundMethod::Chebyshev,
            CoverageMethod::Hoeffding => BoundMethod::Hoeffding,
            CoverageMethod::Stratified { .. } => BoundMethod::Stratified,
            CoverageMethod::CltBaseline { .. } => BoundMethod::CltBaseline,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub method: BoundMethod,
    pub player: usize,
    pub exact: f64,
    pub samples_per_trial: u64,
    pub trials: u64,
    /// Trials with `|φ̂ − φ| > ε` (ε is the trial's half-width for the CLT baseline).
    pub misses: u64,
    pub empirical_miss_rate: f64,
    /// `δ` for SRS methods, `β` for stratified sampling.
    pub guaranteed_delta: f64,
    /// Requested `ε`; `None` for the CLT baseline.
    pub epsilon: Option<f64>,
    pub per_trial_errors: Vec<f64>,
    pub per_trial_bounds: Vec<f64>,
}

impl CoverageReport {
    fn from_trials(
        method: BoundMethod,
        player: usize,
        exact: f64,
        samples_per_trial: u64,
        guaranteed_delta: f64,
        epsilon: Option<f64>,
        trials: Vec<(f64, f64)>,
    ) -> Self {
        let (per_trial_errors, per_trial_bounds): (Vec<f64>, Vec<f64>) = trials.into_iter().unzip();
        let misses = per_trial_errors
            .iter()
            .zip(&per_trial_bounds)
            .filter(|(e, b)| e > b)
            .count() as u64;
        let count = per_trial_errors.len() as u64;
        CoverageReport {
            method,
            player,
            exact,
            samples_per_trial,
            trials: count,
            misses,
            empirical_miss_rate: misses as f64 / count as f64,
            guaranteed_delta,
            epsilon,
            per_trial_errors,
            per_trial_bounds,
        }
    }

    /// Binomial three-sigma allowance `3·√(δ(1−δ)/T)` above the guaranteed rate.
    pub fn slack(&self) -> f64 {
        let d = self.guaranteed_delta;
        3.0 * (d * (1.0 - d) / self.trials as f64).sqrt()
    }

    pub fn within_guarantee(&self) -> bool {
        self.empirical_miss_rate <= self.guaranteed_delta + self.slack()
    }
}

/// Seed of trial `t`.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    seed.wrapping_add(trial)
}

/// Runs `trials` independent estimations of `player`'s value and counts how
/// often the error exceeds the claimed bound.
pub fn coverage_experiment<G: Game + ?Sized>(
    game: &G,
    player: usize,
    method: CoverageMethod,
    epsilon: f64,
    delta_or_beta: f64,
    trials: u64,
    seed: u64,
) -> Result<CoverageReport> {
    if trials == 0 {
        return Err(ShapleyError::InvalidArgument("at least one trial is required".into()));
    }
    let n = game.players();
    if player >= n {
        return Err(ShapleyError::InvalidCoalition { player, n });
    }
    let exact = ground_truth(game, player)?;
    let run_srs = |m: u64| -> Result<Vec<(f64, f64)>> {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let est = srs::estimate_srs(game, m, trial_seed(seed, t))?;
                Ok(((est.per_player[player] - exact).abs(), epsilon))
            })
            .collect()
    };
    let method_tag = method.bound_method();
    let report = match method {
        CoverageMethod::Chebyshev => {
            let m = srs::chebyshev_sample_size(resolve_variance_bound(game)?, epsilon, delta_or_beta)?;
            CoverageReport::from_trials(method_tag, player, exact, m, delta_or_beta, Some(epsilon), run_srs(m)?)
        }
        CoverageMethod::Hoeffding => {
            let m = srs::hoeffding_sample_size(resolve_range_bound(game)?, epsilon, delta_or_beta)?;
            CoverageReport::from_trials(method_tag, player, exact, m, delta_or_beta, Some(epsilon), run_srs(m)?)
        }
        CoverageMethod::Stratified { exhaust_saturated } => {
            let bounds = stratified::resolve_linear_bounds(game)?;
            let m = stratified::stratified_sample_size(bounds.bounds.d, n, delta_or_beta, epsilon)?;
            let options = StratifiedOptions { exhaust_saturated };
            let results: Result<Vec<(f64, f64)>> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let est = stratified::estimate_stratified_with(
                        game,
                        player,
                        m,
                        delta_or_beta,
                        bounds,
                        trial_seed(seed, t),
                        options,
                    )?;
                    Ok(((est.global_estimate - exact).abs(), est.bound.epsilon))
                })
                .collect();
            CoverageReport::from_trials(method_tag, player, exact, m, delta_or_beta, Some(epsilon), results?)
        }
        CoverageMethod::CltBaseline { m } => {
            let results: Result<Vec<(f64, f64)>> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let xs = srs::srs_marginal_samples(game, player, m, trial_seed(seed, t))?;
                    let mean = xs.iter().sum::<f64>() / m as f64;
                    Ok(((mean - exact).abs(), srs::clt_interval_halfwidth(&xs, delta_or_beta)?))
                })
                .collect();
            CoverageReport::from_trials(method_tag, player, exact, m, delta_or_beta, None, results?)
        }
    };
    Ok(report)
}

/// The CLT baseline and the Hoeffding bound judged on the same trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltComparison {
    pub clt: CoverageReport,
    pub hoeffding: CoverageReport,
}

/// Draws `trials` SRS estimates of `player` with `m` samples each and scores
/// every one against both the CLT half-width and the Hoeffding bound for `r`.
pub fn clt_comparison<G: Game + ?Sized>(
    game: &G,
    player: usize,
    m: u64,
    delta: f64,
    trials: u64,
    seed: u64,
) -> Result<CltComparison> {
    let exact = ground_truth(game, player)?;
    let epsilon = srs::hoeffding_error_bound(resolve_range_bound(game)?, m, delta)?;
    let rows: Result<Vec<(f64, f64)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let xs = srs::srs_marginal_samples(game, player, m, trial_seed(seed, t))?;
            let mean = xs.iter().sum::<f64>() / m as f64;
            Ok(((mean - exact).abs(), srs::clt_interval_halfwidth(&xs, delta)?))
        })
        .collect();
    let rows = rows?;
    let hoeffding_rows = rows.iter().map(|&(err, _)| (err, epsilon)).collect();
    Ok(CltComparison {
        clt: CoverageReport::from_trials(BoundMethod::CltBaseline, player, exact, m, delta, None, rows),
        hoeffding: CoverageReport::from_trials(BoundMethod::Hoeffding, player, exact, m, delta, Some(epsilon), hoeffding_rows),
    })
}

/// The `clt-demo` preset: a rare-event game where the CLT interval collapses.
pub fn clt_demo(trials: u64, seed: u64) -> Result<CltComparison> {
    clt_comparison(&clt_demo_game(), CLT_DEMO_PLAYER, CLT_DEMO_SAMPLES, CLT_DEMO_DELTA, trials, seed)
}

// ---------------------------------------------------------------------------
// Error curves
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveMethod {
    /// SRS, bound column from Hoeffding with the game's `r`.
    Hoeffding,
    /// SRS, bound column from Chebyshev with the game's `σ²`.
    Chebyshev,
    /// Stratified sampling, bound column from the aggregate stratified bound.
    Stratified,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub m: u64,
    pub mean_abs_error: f64,
    pub bound: f64,
}

/// Mean absolute error over `seeds_per_point` runs at each budget in `m_grid`,
/// beside the method's `(1 − δ)` error bound at that budget.
pub fn error_curve<G: Game + ?Sized>(
    game: &G,
    player: usize,
    method: CurveMethod,
    m_grid: &[u64],
    seeds_per_point: u64,
    delta: f64,
    seed: u64,
) -> Result<Vec<CurveRow>> {
    if seeds_per_point == 0 {
        return Err(ShapleyError::InvalidArgument("at least one seed per point is required".into()));
    }
    let exact = ground_truth(game, player)?;
    let n = game.players();
    let bounds = match method {
        CurveMethod::Stratified => Some(stratified::resolve_linear_bounds(game)?),
        _ => None,
    };
    let constant = match method {
        CurveMethod::Hoeffding => resolve_range_bound(game)?,
        CurveMethod::Chebyshev => resolve_variance_bound(game)?,
        CurveMethod::Stratified => 0.0,
    };
    m_grid
        .iter()
        .enumerate()
        .map(|(point, &m)| {
            let errors: Result<Vec<f64>> = (0..seeds_per_point)
                .into_par_iter()
                .map(|s| {
                    let run_seed = trial_seed(seed, point as u64 * seeds_per_point + s);
                    let estimate = match bounds {
                        Some(b) => stratified::estimate_stratified(game, player, m, delta, b, run_seed)?.global_estimate,
                        None => srs::estimate_srs(game, m, run_seed)?.per_player[player],
                    };
                    Ok((estimate - exact).abs())
                })
                .collect();
            let errors = errors?;
            let bound = match (method, bounds) {
                (CurveMethod::Hoeffding, _) => srs::hoeffding_error_bound(constant, m, delta)?,
                (CurveMethod::Chebyshev, _) => srs::chebyshev_error_bound(constant, m, delta)?,
                (CurveMethod::Stratified, Some(b)) => stratified::stratified_error_bound(b.bounds.d, m, n, delta)?,
                (CurveMethod::Stratified, None) => unreachable!("bounds resolved above"),
            };
            Ok(CurveRow {
                m,
                mean_abs_error: errors.iter().sum::<f64>() / errors.len() as f64,
                bound,
            })
        })
        .collect()
}

/// Players whose marginal contributions coincide with `player`'s on every
/// coalition excluding both.
pub fn interchangeable_with<G: Game + ?Sized>(game: &G, player: usize) -> BTreeSet<usize> {
    let n = game.players();
    (0..n)
        .filter(|&j| {
            j == player
                || (0..1u64 << n).map(Coalition::from_mask).all(|c| {
                    c.contains(player)
                        || c.contains(j)
                        || game.worth(c.with(player)) == game.worth(c.with(j))
                })
        })
        .collect()
}
