//! Reward–KL frontier estimation for KL-regularized policy tilting.
//!
//! Given samples from a base policy scored by one or more reward channels,
//! this crate estimates the trade-off curve between expected reward gain and
//! KL divergence from the base that is attainable by exponentially tilting
//! the base distribution — together with exact references on small discrete
//! models, best-of-n comparisons, proxy-reward mis-specification diagnostics,
//! and reward-ensemble experiments.
//!
//! Overview of the modules:
//!
//! - [`types`]: validated sample records, reward channels, and the `Lambda`
//!   regularization strength.
//! - [`oracle`]: exact computations on small discrete outcome models — tilted
//!   distributions, KL divergences, algebraic identity checks, and exact
//!   best-of-n values.
//! - [`estimators`]: self-normalized importance-weighting estimators of
//!   reward gain and both KL directions from base-policy samples, plus a
//!   percentile bootstrap.
//! - [`frontier`]: sweeping a grid of `lambda` values into frontier tables,
//!   aggregation across prompts, interpolation, and convergence studies.
//! - [`bon`]: empirical and exact best-of-n reward curves.
//! - [`hacking`]: proxy-reward construction, the gold-reward gap between
//!   gold-aligned and proxy-aligned tilts, over-optimization sweeps, and
//!   ensemble-size experiments.
//! - [`io`]: NDJSON sample streams, checkpoint logs, CSV/JSON tables, and
//!   atomic file writes.
//!
//! # Example
//!
//! ```
//! use klfront::oracle::DiscreteModel;
//! use klfront::frontier::{frontier_exact, LambdaGrid};
//!
//! let model = DiscreteModel::new(
//!     vec!["lose".into(), "win".into()],
//!     vec![0.5, 0.5],
//!     [("score".to_string(), vec![0.0, 1.0])],
//! )?;
//! let grid = LambdaGrid::log_spaced(0.1, 10.0, 7)?;
//! let table = frontier_exact(&model, "score", &grid)?;
//! // Stronger tilts (smaller lambda) buy more reward at more KL.
//! assert!(table.points[0].gain.value > table.points[6].gain.value);
//! assert!(table.points[0].kl.value > table.points[6].kl.value);
//! # Ok::<(), klfront::Error>(())
//! ```

pub mod bon;
pub mod error;
pub mod estimators;
pub mod frontier;
pub mod hacking;
pub mod io;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod types;

pub use error::{Error, Result};
pub use estimators::{BootstrapConfig, Statistic};
pub use frontier::{FrontierTable, LambdaGrid};
pub use oracle::DiscreteModel;
pub use types::{Estimate, Lambda, PromptSamples, RewardChannel, SampleRecord};
