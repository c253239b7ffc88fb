//! Driving risk models for importance filtering.
//!
//! Scores every surrounding agent of an ego vehicle with one of nine risk
//! models, filters unimportant agents by thresholding, and evaluates filters
//! against a survival-analysis baseline on synthetic intersection scenarios.

pub mod eval;
pub mod filter;
pub mod geometry;
pub mod prediction;
pub mod risk_models;
pub mod scenario;

pub use geometry::{Crossing, PathPrefix, Point2, PolylinePath};
pub use prediction::{PredictionConfig, Trajectory, UncertaintyConfig};
pub use risk_models::{RiskConfig, RiskError, RiskModel, RiskScore, SurvivalConfig};
pub use scenario::{AgentState, GeneratorConfig, Scenario};
