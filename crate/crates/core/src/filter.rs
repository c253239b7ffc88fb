//! Threshold filtering, FN-bounded threshold calibration, and the stacked
//! filter pipeline that sorts its final survivors into importance tiers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{scenario_scores, ImportanceLabel};
use crate::risk_models::{score_pair, RiskConfig, RiskError, RiskModel, RiskScore};
use crate::scenario::{AgentState, Scenario};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("calibration set is empty")]
    EmptyCalibrationSet,
    #[error("invalid pipeline: {0}")]
    InvalidPipeline(String),
    #[error("max_fn_rate must lie in [0, 1], got {0}")]
    InvalidFnRate(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterStage {
    pub model: RiskModel,
    /// On the model's own score scale; agents scoring below it are dropped.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pipeline {
    pub stages: Vec<FilterStage>,
    pub tier_model: RiskModel,
    /// Strictly decreasing; tier `j` holds scores in `[t_j, t_{j-1})`.
    pub tier_thresholds: Vec<f64>,
}

/// Tier thresholds on the survival scale used by [`Pipeline::recommended`].
pub const DEFAULT_TIER_THRESHOLDS: [f64; 3] = [2e-2, 2e-3, 1e-25];

impl Pipeline {
    /// Path distance, then trajectory distance, then the Gaussian overlap,
    /// with survival tiers. Stage thresholds start at 0 (keep all) until
    /// calibrated.
    pub fn recommended() -> Self {
        Self {
            stages: [
                RiskModel::PathDistance,
                RiskModel::TrajectoryDistance,
                RiskModel::Gaussian,
            ]
            .into_iter()
            .map(|model| FilterStage {
                model,
                threshold: 0.0,
            })
            .collect(),
            tier_model: RiskModel::Survival,
            tier_thresholds: DEFAULT_TIER_THRESHOLDS.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        if self.stages.is_empty() {
            return Err(FilterError::InvalidPipeline("no stages".into()));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if !(s.threshold >= 0.0) {
                return Err(FilterError::InvalidPipeline(format!(
                    "stage {i} threshold must be >= 0, got {}",
                    s.threshold
                )));
            }
        }
        if self.tier_thresholds.iter().any(|t| !(*t >= 0.0)) {
            return Err(FilterError::InvalidPipeline(
                "tier thresholds must be >= 0".into(),
            ));
        }
        if self.tier_thresholds.windows(2).any(|w| w[0] <= w[1]) {
            return Err(FilterError::InvalidPipeline(
                "tier_thresholds must be strictly decreasing".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, FilterError> {
        let p: Pipeline = serde_json::from_slice(bytes)
            .map_err(|e| FilterError::InvalidPipeline(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("pipeline serialization is infallible")
    }
}

/// Splits agents into kept (`score >= threshold`) and dropped ids.
pub fn apply_threshold(scores: &[RiskScore], threshold: f64) -> (Vec<String>, Vec<String>) {
    let (kept, dropped): (Vec<&RiskScore>, Vec<&RiskScore>) =
        scores.iter().partition(|s| s.value >= threshold);
    (
        kept.into_iter().map(|s| s.other.clone()).collect(),
        dropped.into_iter().map(|s| s.other.clone()).collect(),
    )
}

/// Largest threshold whose aggregate FN rate over `(score, important)` pairs
/// stays within `max_fn_rate`.
///
/// Returns 0 when the threshold would not drop any agent, or when there are
/// no important agents to bound the rate with.
pub fn calibrate_scores(samples: &[(f64, bool)], max_fn_rate: f64) -> Result<f64, FilterError> {
    if samples.is_empty() {
        return Err(FilterError::EmptyCalibrationSet);
    }
    if !(0.0..=1.0).contains(&max_fn_rate) {
        return Err(FilterError::InvalidFnRate(max_fn_rate));
    }
    let mut positives: Vec<f64> = samples
        .iter()
        .filter(|(_, important)| *important)
        .map(|(s, _)| *s)
        .collect();
    if positives.is_empty() {
        return Ok(0.0);
    }
    positives.sort_by(f64::total_cmp);
    let allowed_misses = (max_fn_rate * positives.len() as f64 + 1e-9).floor() as usize;
    if allowed_misses >= positives.len() {
        return Ok(f64::MAX);
    }
    let threshold = positives[allowed_misses];
    let lowest = samples
        .iter()
        .map(|(s, _)| *s)
        .fold(f64::INFINITY, f64::min);
    Ok(if threshold <= lowest { 0.0 } else { threshold })
}

/// Calibrates a stage threshold for `model` on labeled scenarios.
pub fn calibrate(
    model: RiskModel,
    cfg: &RiskConfig,
    scenarios: &[Scenario],
    labels: &[Vec<ImportanceLabel>],
    max_fn_rate: f64,
) -> Result<f64, FilterError> {
    use rayon::prelude::*;
    if scenarios.is_empty() {
        return Err(FilterError::EmptyCalibrationSet);
    }
    let scores = scenarios
        .par_iter()
        .map(|s| scenario_scores(s, model, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let samples: Vec<(f64, bool)> = scores
        .iter()
        .zip(labels)
        .flat_map(|(s, l)| {
            debug_assert_eq!(s.len(), l.len());
            s.iter().zip(l).map(|((_, v), l)| (*v, l.important))
        })
        .collect();
    calibrate_scores(&samples, max_fn_rate)
}

/// Returns a copy of `pipeline` with every stage threshold calibrated.
pub fn calibrate_pipeline(
    pipeline: &Pipeline,
    cfg: &RiskConfig,
    scenarios: &[Scenario],
    labels: &[Vec<ImportanceLabel>],
    max_fn_rate: f64,
) -> Result<Pipeline, FilterError> {
    let mut out = pipeline.clone();
    for stage in &mut out.stages {
        stage.threshold = calibrate(stage.model, cfg, scenarios, labels, max_fn_rate)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTrace {
    pub model: RiskModel,
    pub threshold: f64,
    /// `(id, score)` for every agent this stage scored.
    pub scores: Vec<(String, f64)>,
    pub survivors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterTrace {
    pub input: usize,
    pub stages: Vec<StageTrace>,
    /// Tier model scores of the final survivors.
    pub tier_scores: Vec<(String, f64)>,
    /// Highest-risk tier first; the last tier holds scores below every threshold.
    pub tiers: Vec<Vec<String>>,
}

impl FilterTrace {
    pub fn survivors(&self) -> &[String] {
        self.stages.last().map(|s| &s.survivors[..]).unwrap_or(&[])
    }

    pub fn stage_counts(&self) -> Vec<usize> {
        std::iter::once(self.input)
            .chain(self.stages.iter().map(|s| s.survivors.len()))
            .collect()
    }

    /// Total number of scoring calls, tiering included.
    pub fn scoring_calls(&self) -> usize {
        self.stages.iter().map(|s| s.scores.len()).sum::<usize>() + self.tier_scores.len()
    }
}

/// Index of the tier for `score` given strictly decreasing thresholds.
pub fn tier_index(score: f64, thresholds: &[f64]) -> usize {
    thresholds
        .iter()
        .position(|&t| score >= t)
        .unwrap_or(thresholds.len())
}

/// Runs the stages in order, each scoring only the previous stage's survivors.
pub fn run_pipeline(
    scenario: &Scenario,
    pipeline: &Pipeline,
    cfg: &RiskConfig,
) -> Result<FilterTrace, FilterError> {
    pipeline.validate()?;
    let mut alive: Vec<&AgentState> = scenario.others.iter().collect();
    alive.sort_by(|a, b| a.id.cmp(&b.id));
    let input = alive.len();
    let mut stages = Vec::with_capacity(pipeline.stages.len());
    for stage in &pipeline.stages {
        let mut scores = Vec::with_capacity(alive.len());
        let mut next = Vec::with_capacity(alive.len());
        for &agent in &alive {
            let v = score_pair(stage.model, &scenario.ego, agent, cfg)?;
            scores.push((agent.id.clone(), v));
            if v >= stage.threshold {
                next.push(agent);
            }
        }
        alive = next;
        stages.push(StageTrace {
            model: stage.model,
            threshold: stage.threshold,
            scores,
            survivors: alive.iter().map(|a| a.id.clone()).collect(),
        });
    }
    let mut tiers = vec![Vec::new(); pipeline.tier_thresholds.len() + 1];
    let mut tier_scores = Vec::with_capacity(alive.len());
    for &agent in &alive {
        let v = score_pair(pipeline.tier_model, &scenario.ego, agent, cfg)?;
        tiers[tier_index(v, &pipeline.tier_thresholds)].push(agent.id.clone());
        tier_scores.push((agent.id.clone(), v));
    }
    Ok(FilterTrace {
        input,
        stages,
        tier_scores,
        tiers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(values: &[f64]) -> Vec<RiskScore> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| RiskScore {
                value: v,
                model: RiskModel::CurrentDistance,
                ego: "ego".into(),
                other: format!("a{i}"),
            })
            .collect()
    }

    #[test]
    fn threshold_examples() {
        let s = scores(&[0.1, 0.5, 0.9]);
        let (kept, dropped) = apply_threshold(&s, 0.0);
        assert_eq!((kept.len(), dropped.len()), (3, 0));
        let (kept, _) = apply_threshold(&s, 0.95);
        assert!(kept.is_empty());
        let (kept, dropped) = apply_threshold(&s, 0.5);
        assert_eq!(kept, vec!["a1", "a2"]);
        assert_eq!(dropped, vec!["a0"]);
    }

    #[test]
    fn calibration_examples() {
        let separable = [(0.1, false), (0.3, false), (0.7, true), (0.9, true)];
        let t = calibrate_scores(&separable, 0.0).unwrap();
        assert!(t > 0.3 && t <= 0.7, "{t}");

        let constant = [(0.4, false), (0.4, true), (0.4, true)];
        assert_eq!(calibrate_scores(&constant, 0.0).unwrap(), 0.0);

        // Allowing half the positives to be missed moves the threshold up.
        let mixed = [(0.2, true), (0.5, false), (0.6, true), (0.8, true), (0.9, true)];
        assert_eq!(calibrate_scores(&mixed, 0.0).unwrap(), 0.0);
        assert_eq!(calibrate_scores(&mixed, 0.5).unwrap(), 0.8);

        assert_eq!(
            calibrate_scores(&[], 0.0),
            Err(FilterError::EmptyCalibrationSet)
        );
        assert!(calibrate_scores(&separable, 1.5).is_err());
        assert_eq!(calibrate_scores(&[(0.3, false)], 0.0).unwrap(), 0.0);
    }

    #[test]
    fn tier_indexing() {
        let t = DEFAULT_TIER_THRESHOLDS;
        assert_eq!(tier_index(0.5, &t), 0);
        assert_eq!(tier_index(2e-2, &t), 0);
        assert_eq!(tier_index(1e-2, &t), 1);
        assert_eq!(tier_index(2e-3, &t), 1);
        assert_eq!(tier_index(1e-20, &t), 2);
        assert_eq!(tier_index(1e-25, &t), 2);
        assert_eq!(tier_index(1e-30, &t), 3);
    }

    #[test]
    fn pipeline_validation() {
        let mut p = Pipeline::recommended();
        assert!(p.validate().is_ok());
        p.tier_thresholds = vec![1e-25, 1e-5];
        assert!(p.validate().is_err());
        p.tier_thresholds = vec![];
        p.stages.clear();
        assert!(p.validate().is_err());
        let json = br#"{"stages":[{"model":"path_distance","threshold":0.5}],
                        "tier_model":"survival","tier_thresholds":[1e-5,1e-25]}"#;
        let p = Pipeline::from_json(json).unwrap();
        assert_eq!(p.stages[0].model, RiskModel::PathDistance);
        assert_eq!(Pipeline::from_json(&p.to_json()).unwrap(), p);
    }
}
