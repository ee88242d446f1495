//! Core library for synthesizing driving behaviors from natural-language
//! descriptions: a deterministic 2D driving simulator, a guard-expression
//! DSL, state-chart abstraction with visit histories, FSM primary rewards
//! plus clamped auxiliary rewards, a multi-agent advantage actor-critic
//! trainer, and behavioral-diversity metrics.

pub mod dsl;
pub mod reward;
pub mod sim;
pub mod statechart;

pub use sim::{Action, Scene, SceneKind, TrajectoryLog, VehicleState};
