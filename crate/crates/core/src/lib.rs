#![no_std]

//! Symbolic explanation and steering for reinforcement-learning agents.
//!
//! Raw agent trajectories are converted into first-order-logic terms
//! ([`term`]) using streaming quartile labels ([`p2`]) by the
//! [`symbolizer`]. Symbolic experiences are indexed in an
//! [`store::ExperienceStore`] together with a [`kg::KnowledgeGraph`] of
//! symbolic-action transitions; [`explain`] turns symbolic traces into
//! distributions, density maps and graph exports, and [`steering`] rewrites
//! agent actions at runtime from recorded rewards and [`intent`]s.
//!
//! The crate only needs `alloc`. File formats, the simulator and the command
//! line live in the `symxrl` crate.

extern crate alloc;

pub mod explain;
pub mod intent;
pub mod kg;
pub mod model;
pub mod p2;
pub mod steering;
pub mod store;
pub mod symbolizer;
pub mod term;

pub use model::{Action, MimoAction, Observation, Schema, SchemaA1, SchemaA2, Step, Trajectory};
pub use p2::{P2Estimator, QuartileTracker};
pub use term::{Effect, Quartile, SymbolicTerm, TermSet};
