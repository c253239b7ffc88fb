//! The nine risk models behind one scoring interface.
//!
//! Distance and time models map a distance `d` to `ε / (ε + d)`, so the
//! largest possible risk is one. The Gaussian model reports the raw overlap
//! density (1/m²) and survival analysis reports an event probability.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{find_crossing, min_path_distance, min_prefix_distance};
use crate::prediction::{
    circle_offsets, gaussian_at, predict, PredictionConfig, PredictionError, Trajectory,
    UncertaintyConfig,
};
use crate::scenario::{AgentState, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RiskModel {
    #[serde(rename = "current_distance")]
    CurrentDistance,
    #[serde(rename = "path_distance")]
    PathDistance,
    #[serde(rename = "trajectory_distance")]
    TrajectoryDistance,
    #[serde(rename = "closest_encounter")]
    ClosestEncounter,
    #[serde(rename = "encounter_headway")]
    EncounterHeadway,
    #[serde(rename = "encounter_2d_headway")]
    Encounter2dHeadway,
    #[serde(rename = "circle")]
    Circle,
    #[serde(rename = "gaussian")]
    Gaussian,
    #[serde(rename = "survival")]
    Survival,
}

impl RiskModel {
    pub const ALL: [RiskModel; 9] = [
        RiskModel::CurrentDistance,
        RiskModel::PathDistance,
        RiskModel::TrajectoryDistance,
        RiskModel::ClosestEncounter,
        RiskModel::EncounterHeadway,
        RiskModel::Encounter2dHeadway,
        RiskModel::Circle,
        RiskModel::Gaussian,
        RiskModel::Survival,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RiskModel::CurrentDistance => "current_distance",
            RiskModel::PathDistance => "path_distance",
            RiskModel::TrajectoryDistance => "trajectory_distance",
            RiskModel::ClosestEncounter => "closest_encounter",
            RiskModel::EncounterHeadway => "encounter_headway",
            RiskModel::Encounter2dHeadway => "encounter_2d_headway",
            RiskModel::Circle => "circle",
            RiskModel::Gaussian => "gaussian",
            RiskModel::Survival => "survival",
        }
    }

    /// Whether scores live on the probability-density scale rather than in (0, 1].
    pub fn is_density_scale(self) -> bool {
        matches!(self, RiskModel::Gaussian | RiskModel::Survival)
    }

    pub fn valid_names() -> String {
        Self::ALL.map(RiskModel::name).join(", ")
    }
}

impl fmt::Display for RiskModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("unknown model `{0}` (valid: {valid})", valid = RiskModel::valid_names())]
pub struct UnknownModel(pub String);

impl FromStr for RiskModel {
    type Err = UnknownModel;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RiskModel::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| UnknownModel(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiskError {
    #[error(transparent)]
    Prediction(#[from] PredictionError),
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurvivalConfig {
    /// Rate of events that end the hazard without a collision, 1/s.
    pub escape_rate: f64,
    /// Time step converting an overlap into an event rate, seconds.
    pub dt: f64,
}

impl Default for SurvivalConfig {
    fn default() -> Self {
        Self {
            escape_rate: 0.2,
            dt: PredictionConfig::default().step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiskConfig {
    /// Shared offset of the inverse-distance maps, meters.
    pub epsilon: f64,
    pub prediction: PredictionConfig,
    pub uncertainty: UncertaintyConfig,
    pub survival: SurvivalConfig,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            prediction: PredictionConfig::default(),
            uncertainty: UncertaintyConfig::default(),
            survival: SurvivalConfig::default(),
        }
    }
}

impl RiskConfig {
    pub fn validate(&self) -> Result<(), RiskError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(RiskError::InvalidConfig {
                field: "epsilon",
                reason: "must be positive".into(),
            });
        }
        self.prediction.validate()?;
        self.uncertainty.validate()?;
        if !(self.survival.escape_rate >= 0.0) {
            return Err(RiskError::InvalidConfig {
                field: "survival.escape_rate",
                reason: "must be non-negative".into(),
            });
        }
        if !(self.survival.dt > 0.0 && self.survival.dt.is_finite()) {
            return Err(RiskError::InvalidConfig {
                field: "survival.dt",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }

    /// Copy with a different prediction step; the survival rate step follows it.
    pub fn with_step(&self, step: f64) -> Self {
        let mut cfg = self.clone();
        cfg.prediction.step = step;
        cfg.survival.dt = step;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskScore {
    pub value: f64,
    pub model: RiskModel,
    pub ego: String,
    pub other: String,
}

pub fn inverse_distance(epsilon: f64, d: f64) -> f64 {
    epsilon / (epsilon + d)
}

/// Both trajectories on the shared prediction grid.
#[derive(Debug, Clone)]
pub struct TrajectoryPair<'a> {
    pub ego: Trajectory<'a>,
    pub other: Trajectory<'a>,
}

impl<'a> TrajectoryPair<'a> {
    pub fn predict(ego: &'a AgentState, other: &'a AgentState, cfg: &PredictionConfig) -> Self {
        Self {
            ego: predict(ego, cfg),
            other: predict(other, cfg),
        }
    }

    pub fn distances(&self) -> impl Iterator<Item = f64> + '_ {
        self.ego
            .positions()
            .iter()
            .zip(self.other.positions())
            .map(|(a, b)| a.distance(*b))
    }
}

pub fn risk_current_distance(ego: &AgentState, other: &AgentState, cfg: &RiskConfig) -> f64 {
    inverse_distance(cfg.epsilon, ego.position.distance(other.position))
}

pub fn risk_path_distance(ego: &AgentState, other: &AgentState, cfg: &RiskConfig) -> f64 {
    inverse_distance(cfg.epsilon, min_path_distance(&ego.path, &other.path))
}

/// Path distance restricted to the stretch each agent covers within the horizon.
pub fn trajectory_distance(ego: &AgentState, other: &AgentState, cfg: &RiskConfig) -> f64 {
    let horizon = cfg.prediction.horizon;
    let a = ego.path.cut(ego.speed * horizon);
    let b = other.path.cut(other.speed * horizon);
    min_prefix_distance(&a, &b)
}

pub fn risk_trajectory_distance(ego: &AgentState, other: &AgentState, cfg: &RiskConfig) -> f64 {
    inverse_distance(cfg.epsilon, trajectory_distance(ego, other, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Encounter {
    /// Minimum predicted distance, meters.
    pub distance: f64,
    /// Earliest time at which it occurs, seconds.
    pub time: f64,
}

pub fn closest_encounter_of(pair: &TrajectoryPair<'_>) -> Encounter {
    let mut best = (f64::INFINITY, 0usize);
    for (k, d) in pair.distances().enumerate() {
        if d < best.0 {
            best = (d, k);
        }
    }
    Encounter {
        distance: best.0,
        time: pair.ego.time(best.1),
    }
}

pub fn closest_encounter(ego: &AgentState, other: &AgentState, cfg: &RiskConfig) -> Encounter {
    closest_encounter_of(&TrajectoryPair::predict(ego, other, &cfg.prediction))
}

pub fn encounter_risk(encounter: Encounter, cfg: &RiskConfig) -> f64 {
    if encounter.time < cfg.prediction.s_max {
        inverse_distance(cfg.epsilon, encounter.distance)
    } else {
        0.0
    }
}

pub fn risk_closest_encounter(ego: &AgentState, other: &AgentState, cfg: &RiskConfig) -> f64 {
    encounter_risk(closest_encounter(ego, other, cfg), cfg)
}

/// Agents closer than this to the ego path count as travelling on it, meters.
pub const SAME_PATH_TOL: f64 = 1e-6;

/// Longitudinal gap `l₂ − l₁` along the ego path when the other agent is on
/// the ego path, heading the same way. The ego sits at arc length 0.
pub fn same_path_gap(ego: &AgentState, other: &AgentState) -> Option<f64> {
    let proj = ego.path.project(other.position);
    if proj.distance > SAME_PATH_TOL {
        return None;
    }
    let heading = ego.path.tangent_at(proj.arclen).dot(other.path.tangent_at(0.0));
    (heading > 0.0).then_some(proj.arclen)
}

/// Normalized inverse headway `1 / (1 + Δl / v₁)`; zero when the gap is not
/// ahead of the ego or the ego is stopped.
pub fn headway_risk(gap: f64, ego_speed: f64) -> f64 {
    if gap > 0.0 && ego_speed > 0.0 {
        1.0 / (1.0 + gap / ego_speed)
    } else {
        0.0
    }
}

pub fn risk_headway(ego: &AgentState, other: &AgentState) -> f64 {
    same_path_gap(ego, other).map_or(0.0, |gap| headway_risk(gap, ego.speed))
}

/// Headway after projecting a crossing agent onto the ego path so that both
/// keep their remaining distance to the crossing point.
pub fn risk_headway_2d(ego: &AgentState, other: &AgentState) -> f64 {
    if let Some(gap) = same_path_gap(ego, other) {
        return headway_risk(gap, ego.speed);
    }
    match find_crossing(&ego.path, &other.path) {
        Some(c) => headway_risk(c.arclen_ego - c.arclen_other, ego.speed),
        None => 0.0,
    }
}

pub fn risk_encounter_plus_headway(
    ego: &AgentState,
    other: &AgentState,
    cfg: &RiskConfig,
    two_d: bool,
) -> f64 {
    let encounter = risk_closest_encounter(ego, other, cfg);
    let headway = if two_d {
        risk_headway_2d(ego, other)
    } else {
        risk_headway(ego, other)
    };
    encounter.max(headway)
}

/// Smallest gap between the ego circle and any circle of the other agent over
/// the prediction grid, floored at zero.
pub fn circle_distance(pair: &TrajectoryPair<'_>, ucfg: &UncertaintyConfig) -> f64 {
    let other = &pair.other;
    let mut best = f64::INFINITY;
    for (k, &ego_pos) in pair.ego.positions().iter().enumerate() {
        let s = pair.ego.time(k);
        let sigma = ucfg.sigma_at(s);
        let along = other.speed() * s;
        for offset in circle_offsets(ucfg.k_circles, sigma) {
            let center = other.path().point_at(along + offset);
            let gap = (center.distance(ego_pos) - 2.0 * sigma).max(0.0);
            best = best.min(gap);
        }
        if best == 0.0 {
            break;
        }
    }
    best
}

pub fn risk_circle(ego: &AgentState, other: &AgentState, cfg: &RiskConfig) -> f64 {
    let pair = TrajectoryPair::predict(ego, other, &cfg.prediction);
    inverse_distance(cfg.epsilon, circle_distance(&pair, &cfg.uncertainty))
}

/// Overlap density `P_o(s)` at every grid sample.
pub fn overlap_series(
    pair: &TrajectoryPair<'_>,
    ucfg: &UncertaintyConfig,
) -> Result<Vec<f64>, RiskError> {
    (0..pair.ego.len())
        .map(|k| {
            let s = pair.ego.time(k);
            let a = gaussian_at(&pair.ego, s, ucfg);
            let b = gaussian_at(&pair.other, s, ucfg);
            Ok(a.overlap(&b)?)
        })
        .collect()
}

pub fn risk_gaussian(ego: &AgentState, other: &AgentState, cfg: &RiskConfig) -> Result<f64, RiskError> {
    let pair = TrajectoryPair::predict(ego, other, &cfg.prediction);
    Ok(overlap_series(&pair, &cfg.uncertainty)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Probability of a collision event before the end of the grid in a Poisson
/// model with collision rate `P_o(s) / dt` and a constant escape rate.
///
/// On each grid interval the rate is held at the mean of its endpoint values
/// and integrated exactly, so a constant rate `r` without escape gives
/// `1 − exp(−r·H)`. The survival function at every interval start is
/// re-accumulated from s = 0.
pub fn survival_risk_from_overlaps(overlaps: &[f64], step: f64, scfg: &SurvivalConfig) -> f64 {
    if overlaps.len() < 2 {
        return 0.0;
    }
    let rates: Vec<f64> = overlaps
        .windows(2)
        .map(|w| 0.5 * (w[0] + w[1]) / scfg.dt)
        .collect();
    let mut risk = 0.0;
    for (k, &event_rate) in rates.iter().enumerate() {
        let exposure: f64 = rates[..k]
            .iter()
            .map(|&r| (r + scfg.escape_rate) * step)
            .sum();
        let survival = (-exposure).exp();
        let total = event_rate + scfg.escape_rate;
        let hit = if total * step < 1e-12 {
            event_rate * step
        } else {
            event_rate / total * (-(-total * step).exp_m1())
        };
        risk += survival * hit;
    }
    risk.clamp(0.0, 1.0)
}

pub fn risk_survival(ego: &AgentState, other: &AgentState, cfg: &RiskConfig) -> Result<f64, RiskError> {
    let pair = TrajectoryPair::predict(ego, other, &cfg.prediction);
    let overlaps = overlap_series(&pair, &cfg.uncertainty)?;
    Ok(survival_risk_from_overlaps(
        &overlaps,
        cfg.prediction.step,
        &cfg.survival,
    ))
}

/// Scores one (ego, other) pair with `model`.
pub fn score_pair(
    model: RiskModel,
    ego: &AgentState,
    other: &AgentState,
    cfg: &RiskConfig,
) -> Result<f64, RiskError> {
    Ok(match model {
        RiskModel::CurrentDistance => risk_current_distance(ego, other, cfg),
        RiskModel::PathDistance => risk_path_distance(ego, other, cfg),
        RiskModel::TrajectoryDistance => risk_trajectory_distance(ego, other, cfg),
        RiskModel::ClosestEncounter => risk_closest_encounter(ego, other, cfg),
        RiskModel::EncounterHeadway => risk_encounter_plus_headway(ego, other, cfg, false),
        RiskModel::Encounter2dHeadway => risk_encounter_plus_headway(ego, other, cfg, true),
        RiskModel::Circle => risk_circle(ego, other, cfg),
        RiskModel::Gaussian => risk_gaussian(ego, other, cfg)?,
        RiskModel::Survival => risk_survival(ego, other, cfg)?,
    })
}

/// One score per other agent, ordered by agent id.
pub fn score_scenario(
    scenario: &Scenario,
    model: RiskModel,
    cfg: &RiskConfig,
) -> Result<Vec<RiskScore>, RiskError> {
    let mut others: Vec<&AgentState> = scenario.others.iter().collect();
    others.sort_by(|a, b| a.id.cmp(&b.id));
    others
        .into_iter()
        .map(|other| {
            Ok(RiskScore {
                value: score_pair(model, &scenario.ego, other, cfg)?,
                model,
                ego: scenario.ego.id.clone(),
                other: other.id.clone(),
            })
        })
        .collect()
}
