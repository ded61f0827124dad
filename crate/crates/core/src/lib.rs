//! Deterministic simulator for federated learning under Byzantine attack.
//!
//! The server aggregates client updates with a robust rule, optionally
//! sampled each round from a candidate set ([`defense`]). Malicious clients
//! upload crafted vectors ([`attacks`]); benign clients run local momentum
//! SGD ([`learning`]). [`theory`] evaluates the robustness conditions and
//! convergence bound, and [`harness`] runs whole experiments with logged,
//! reproducible metrics.

pub mod aggregation;
pub mod attacks;
pub mod defense;
pub mod error;
pub mod harness;
pub mod learning;
pub mod probability;
pub mod rng;
pub mod theory;
pub mod vector;

pub use aggregation::{AggregationRule, RuleKind};
pub use attacks::{AdversaryKnowledge, AttackKind, AttackSpec, Perturbation, Visibility};
pub use defense::{defend_round, DefenseMode, DefenseStrategy};
pub use error::{Error, Result};
pub use harness::{run_experiment, ExperimentConfig, MetricsLog};
pub use vector::UpdateVector;
