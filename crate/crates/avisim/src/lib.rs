//! Event-driven variational integration with asynchronous penalty contact.
//!
//! Bodies move ballistically between events; every force — material
//! potentials like gravity and springs, and an unbounded family of nested
//! contact penalty layers — integrates on its own fixed time step through a
//! single global event queue. Contact pairs that are far apart hold
//! *certificates*: separating slabs whose guaranteed-safe horizon replaces
//! any polling for proximity. The scheme conserves energy over long
//! horizons, resolves stiff impacts by activating however many layers the
//! approach speed demands, and is deterministic for a given scene.
//!
//! Entry points: [`scene::parse_scene`] / [`scene::SceneConfig`] describe a
//! system, [`Simulation`] runs it, [`diagnostics::write_csv`] serializes the
//! recorded energy/momentum series. The `avisim` binary wraps all of this
//! behind a command line.

pub mod certificates;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod math;
pub mod potentials;
pub mod queue;
pub mod scene;
pub mod scheduler;
pub mod state;

pub use error::{Result, SimError};
pub use scene::SceneConfig;
pub use scheduler::Simulation;
