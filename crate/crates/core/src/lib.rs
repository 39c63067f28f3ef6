//! Shapley value estimation for characteristic-function games.
//!
//! * [`game`]: the game abstraction and built-in families.
//! * [`exact`]: brute-force ground truth, stratum means and linear bounds.
//! * [`srs`]: permutation sampling with Chebyshev, Hoeffding and CLT intervals.
//! * [`stratified`]: size-stratified sampling with the aggregate Hoeffding bound.
//! * [`harness`]: coverage experiments, error curves and game files.
//! * [`output`]: CSV/JSON tables with fixed-precision numbers.

pub mod error;
pub mod exact;
pub mod game;
pub mod harness;
pub mod output;
pub mod rng;
pub mod srs;
pub mod stratified;

pub use error::{Result, ShapleyError};
pub use exact::{LinearBounds, StratumStats};
pub use game::{Coalition, FamilyGame, Game, KnownFacts};
pub use srs::{BoundMethod, ErrorBound, Estimate};
pub use stratified::{StrataPlan, StratifiedEstimate};
