//! Characteristic-function games.
//!
//! A game is a player count plus a deterministic oracle mapping coalitions to
//! real values. Every oracle in this crate satisfies `v(∅) = 0`; explicit
//! tables that violate it are shifted at construction time and the shift is
//! recorded on the game.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapleyError};
use crate::exact::LinearBounds;

/// Largest player count representable by a [`Coalition`] bitmask.
pub const MAX_PLAYERS: usize = 63;

/// Largest player count accepted by the explicit table family (2^20 entries).
pub const MAX_TABLE_PLAYERS: usize = 20;

/// A subset of players stored as a bitmask; bit `i` set means player `i` is a member.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coalition(u64);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub const fn from_mask(mask: u64) -> Self {
        Coalition(mask)
    }

    pub fn from_members<I: IntoIterator<Item = usize>>(members: I) -> Self {
        members
            .into_iter()
            .fold(Coalition::EMPTY, |c, i| c.with(i))
    }

    /// The grand coalition `{0, .., n-1}`.
    pub fn grand(n: usize) -> Self {
        debug_assert!(n <= MAX_PLAYERS);
        if n == 0 {
            Coalition::EMPTY
        } else {
            Coalition(u64::MAX >> (64 - n))
        }
    }

    pub const fn mask(self) -> u64 {
        self.0
    }

    pub const fn contains(self, player: usize) -> bool {
        player < 64 && self.0 & (1 << player) != 0
    }

    #[must_use]
    pub const fn with(self, player: usize) -> Self {
        Coalition(self.0 | (1 << player))
    }

    #[must_use]
    pub const fn without(self, player: usize) -> Self {
        Coalition(self.0 & !(1 << player))
    }

    pub const fn size(self) -> usize {
        self.0.count_ones() as usize
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// True when every member index is below `n`.
    pub const fn fits(self, n: usize) -> bool {
        n >= 64 || self.0 >> n == 0
    }

    /// True when `self ⊆ other`.
    pub const fn is_subset_of(self, other: Coalition) -> bool {
        self.0 & !other.0 == 0
    }

    /// Member indices in ascending order.
    pub fn members(self) -> impl Iterator<Item = usize> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let i = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(i)
            }
        })
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (pos, i) in self.members().enumerate() {
            if pos > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
        }
        f.write_str("}")
    }
}

/// Analytically known facts about a game, used to size samples and check results.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KnownFacts {
    /// Max over players of the variance of marginal contributions.
    pub variance_bound: Option<f64>,
    /// Max over players of the range of marginal contributions.
    pub range_bound: Option<f64>,
    pub linear_bounds: Option<LinearBounds>,
    pub exact_shapley: Option<Vec<f64>>,
}

impl KnownFacts {
    /// Checks the invariants against the game's grand-coalition value.
    pub fn validate(&self, n: usize, grand_value: f64) -> Result<()> {
        for (name, v) in [("variance_bound", self.variance_bound), ("range_bound", self.range_bound)] {
            if let Some(v) = v {
                if !(v >= 0.0) {
                    return Err(ShapleyError::Construction(format!("{name} must be >= 0, got {v}")));
                }
            }
        }
        if let Some(lb) = &self.linear_bounds {
            if !(lb.a <= lb.b) {
                return Err(ShapleyError::Construction(format!(
                    "linear bounds need a <= b, got a = {}, b = {}",
                    lb.a, lb.b
                )));
            }
        }
        if let Some(phi) = &self.exact_shapley {
            if phi.len() != n {
                return Err(ShapleyError::Construction(format!(
                    "exact_shapley has {} entries for {n} players",
                    phi.len()
                )));
            }
            let total: f64 = phi.iter().sum();
            if (total - grand_value).abs() > 1e-9 {
                return Err(ShapleyError::Construction(format!(
                    "exact_shapley sums to {total}, but v(N) = {grand_value}"
                )));
            }
        }
        Ok(())
    }
}

/// A cooperative game in characteristic-function form.
///
/// Oracles must be pure: the same coalition always yields the same value, and
/// calls may come from several threads at once.
pub trait Game: Sync {
    fn players(&self) -> usize;

    /// Value of `coalition`. Callers guarantee every member is below `players()`.
    fn worth(&self, coalition: Coalition) -> f64;

    fn facts(&self) -> Option<&KnownFacts> {
        None
    }

    fn family(&self) -> Option<&Family> {
        None
    }
}

impl<G: Game + ?Sized> Game for &G {
    fn players(&self) -> usize {
        (**self).players()
    }
    fn worth(&self, coalition: Coalition) -> f64 {
        (**self).worth(coalition)
    }
    fn facts(&self) -> Option<&KnownFacts> {
        (**self).facts()
    }
    fn family(&self) -> Option<&Family> {
        (**self).family()
    }
}

/// Checked oracle call.
pub fn value<G: Game + ?Sized>(game: &G, coalition: Coalition) -> Result<f64> {
    let n = game.players();
    if !coalition.fits(n) {
        let player = coalition.members().find(|&i| i >= n).unwrap_or(n);
        return Err(ShapleyError::InvalidCoalition { player, n });
    }
    Ok(game.worth(coalition))
}

/// `v(C ∪ {i}) − v(C)` for a player outside `C`.
pub fn marginal_contribution<G: Game + ?Sized>(game: &G, coalition: Coalition, player: usize) -> Result<f64> {
    let n = game.players();
    if player >= n {
        return Err(ShapleyError::InvalidCoalition { player, n });
    }
    if coalition.contains(player) {
        return Err(ShapleyError::InvalidArgument(format!(
            "player {player} is already a member of {coalition}"
        )));
    }
    Ok(value(game, coalition.with(player))? - value(game, coalition)?)
}

/// Parametric definition of a built-in game family.
#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    /// `v(C) = 1` when the members' weight reaches the quota (ties win), else 0.
    WeightedVoting { weights: Vec<f64>, quota: f64 },
    /// `v(C) = Σ_{i∈C} w_i`.
    Additive { weights: Vec<f64> },
    /// `v(C) = f(|C|)`; `size_values[k] = f(k)`.
    Symmetric { size_values: Vec<f64> },
    /// `v(C) = max_{i∈C} c_i`, 0 for the empty coalition.
    Airport { costs: Vec<f64> },
    /// Explicit table indexed by coalition mask.
    Table { values: Vec<f64> },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::WeightedVoting { .. } => "weighted_voting",
            Family::Additive { .. } => "additive",
            Family::Symmetric { .. } => "symmetric",
            Family::Airport { .. } => "airport",
            Family::Table { .. } => "table",
        }
    }
}

/// A game from one of the built-in families together with whatever is known about it.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilyGame {
    n: usize,
    family: Family,
    facts: KnownFacts,
    normalization_shift: f64,
}

impl FamilyGame {
    pub fn family_name(&self) -> &'static str {
        self.family.name()
    }

    /// Amount subtracted from every table entry to force `v(∅) = 0`; zero for
    /// parametric families.
    pub fn normalization_shift(&self) -> f64 {
        self.normalization_shift
    }

    pub fn known_facts(&self) -> &KnownFacts {
        &self.facts
    }

    /// Replaces the attached facts after validating them.
    pub fn with_facts(mut self, facts: KnownFacts) -> Result<Self> {
        facts.validate(self.n, self.worth(Coalition::grand(self.n)))?;
        self.facts = facts;
        Ok(self)
    }
}

impl Game for FamilyGame {
    fn players(&self) -> usize {
        self.n
    }

    fn worth(&self, coalition: Coalition) -> f64 {
        match &self.family {
            Family::WeightedVoting { weights, quota } => {
                let weight: f64 = coalition.members().map(|i| weights[i]).sum();
                if weight >= *quota {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Additive { weights } => coalition.members().map(|i| weights[i]).sum(),
            Family::Symmetric { size_values } => size_values[coalition.size()],
            Family::Airport { costs } => coalition
                .members()
                .map(|i| costs[i])
                .fold(0.0, f64::max),
            Family::Table { values } => values[coalition.mask() as usize],
        }
    }

    fn facts(&self) -> Option<&KnownFacts> {
        Some(&self.facts)
    }

    fn family(&self) -> Option<&Family> {
        Some(&self.family)
    }
}

fn check_player_count(n: usize, limit: usize) -> Result<()> {
    if n == 0 {
        return Err(ShapleyError::Construction("a game needs at least one player".into()));
    }
    if n > limit {
        return Err(ShapleyError::Construction(format!(
            "{n} players exceeds the limit of {limit}"
        )));
    }
    Ok(())
}

fn check_nonnegative(label: &str, xs: &[f64]) -> Result<()> {
    match xs.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
        Some(i) => Err(ShapleyError::Construction(format!(
            "{label}[{i}] = {} must be finite and nonnegative",
            xs[i]
        ))),
        None => Ok(()),
    }
}

fn build(n: usize, family: Family, facts: KnownFacts) -> Result<FamilyGame> {
    let game = FamilyGame {
        n,
        family,
        facts: KnownFacts::default(),
        normalization_shift: 0.0,
    };
    game.with_facts(facts)
}

/// Weighted voting game; a coalition wins when its total weight is `>= quota`.
pub fn make_weighted_voting(weights: Vec<f64>, quota: f64) -> Result<FamilyGame> {
    check_player_count(weights.len(), MAX_PLAYERS)?;
    check_nonnegative("weights", &weights)?;
    if !(quota.is_finite() && quota > 0.0) {
        return Err(ShapleyError::Construction(format!(
            "quota must be positive so the empty coalition loses, got {quota}"
        )));
    }
    build(weights.len(), Family::WeightedVoting { weights, quota }, KnownFacts::default())
}

/// Additive game; the Shapley value of each player is its own weight.
pub fn make_additive(weights: Vec<f64>) -> Result<FamilyGame> {
    check_player_count(weights.len(), MAX_PLAYERS)?;
    check_nonnegative("weights", &weights)?;
    let facts = KnownFacts {
        variance_bound: Some(0.0),
        range_bound: Some(0.0),
        exact_shapley: Some(weights.clone()),
        ..KnownFacts::default()
    };
    build(weights.len(), Family::Additive { weights }, facts)
}

/// Symmetric game `v(C) = f(|C|)`; every player receives `f(n)/n`.
pub fn make_symmetric(size_values: Vec<f64>) -> Result<FamilyGame> {
    let n = size_values.len().saturating_sub(1);
    check_player_count(n, MAX_PLAYERS)?;
    if let Some(i) = size_values.iter().position(|x| !x.is_finite()) {
        return Err(ShapleyError::Construction(format!("size_values[{i}] is not finite")));
    }
    if size_values[0] != 0.0 {
        return Err(ShapleyError::Construction(format!(
            "size_values[0] must be 0, got {}",
            size_values[0]
        )));
    }
    let share = size_values[n] / n as f64;
    let facts = KnownFacts {
        exact_shapley: Some(vec![share; n]),
        ..KnownFacts::default()
    };
    build(n, Family::Symmetric { size_values }, facts)
}

/// Airport game: a coalition pays for the longest runway any member needs.
pub fn make_airport(costs: Vec<f64>) -> Result<FamilyGame> {
    check_player_count(costs.len(), MAX_PLAYERS)?;
    check_nonnegative("costs", &costs)?;
    build(costs.len(), Family::Airport { costs }, KnownFacts::default())
}

/// Explicit game from a table covering all `2^n` coalitions.
///
/// If `table[∅] != 0` every entry is shifted by `-table[∅]`; see
/// [`FamilyGame::normalization_shift`].
pub fn make_table_game(n: usize, table: &BTreeMap<Coalition, f64>) -> Result<FamilyGame> {
    check_player_count(n, MAX_TABLE_PLAYERS)?;
    let size = 1usize << n;
    if let Some(c) = table.keys().find(|c| !c.fits(n)) {
        return Err(ShapleyError::Construction(format!(
            "table entry {c} names a player outside 0..{n}"
        )));
    }
    if table.len() != size {
        return Err(ShapleyError::Construction(format!(
            "table has {} entries but a {n}-player game needs {size}",
            table.len()
        )));
    }
    table_from_values(n, table.values().copied().collect())
}

/// Explicit game from values indexed by coalition mask.
pub fn table_from_values(n: usize, mut values: Vec<f64>) -> Result<FamilyGame> {
    check_player_count(n, MAX_TABLE_PLAYERS)?;
    if values.len() != 1 << n {
        return Err(ShapleyError::Construction(format!(
            "table has {} entries but a {n}-player game needs {}",
            values.len(),
            1usize << n
        )));
    }
    if let Some(mask) = values.iter().position(|x| !x.is_finite()) {
        return Err(ShapleyError::Construction(format!("table value at mask {mask} is not finite")));
    }
    let shift = values[0];
    if shift != 0.0 {
        for v in &mut values {
            *v -= shift;
        }
    }
    let mut game = build(n, Family::Table { values }, KnownFacts::default())?;
    game.normalization_shift = shift;
    Ok(game)
}

/// `v(C) = 1` iff `|C| > n/2`.
pub fn make_majority(n: usize) -> Result<FamilyGame> {
    make_symmetric((0..=n).map(|k| if 2 * k > n { 1.0 } else { 0.0 }).collect())
}

/// `v(C) = 1` iff `C` is the grand coalition.
pub fn make_unanimity(n: usize) -> Result<FamilyGame> {
    make_symmetric((0..=n).map(|k| if k == n { 1.0 } else { 0.0 }).collect())
}

/// A game given by a closure over coalitions.
pub struct FnGame<F> {
    n: usize,
    oracle: F,
}

impl<F: Fn(Coalition) -> f64 + Sync> FnGame<F> {
    pub fn new(n: usize, oracle: F) -> Self {
        assert!((1..=MAX_PLAYERS).contains(&n), "player count out of range");
        FnGame { n, oracle }
    }
}

impl<F: Fn(Coalition) -> f64 + Sync> Game for FnGame<F> {
    fn players(&self) -> usize {
        self.n
    }
    fn worth(&self, coalition: Coalition) -> f64 {
        (self.oracle)(coalition)
    }
}

/// Wraps a game and counts oracle calls.
pub struct CountingGame<G> {
    inner: G,
    calls: AtomicU64,
}

impl<G: Game> CountingGame<G> {
    pub fn new(inner: G) -> Self {
        CountingGame {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }
}

impl<G: Game> Game for CountingGame<G> {
    fn players(&self) -> usize {
        self.inner.players()
    }
    fn worth(&self, coalition: Coalition) -> f64 {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.worth(coalition)
    }
    fn facts(&self) -> Option<&KnownFacts> {
        self.inner.facts()
    }
    fn family(&self) -> Option<&Family> {
        self.inner.family()
    }
}
