//! Evaluation against the survival-analysis baseline: labels, confusion
//! counts, macro-averaged ROC sweeps, AUC and per-pair timing.

use std::collections::{HashMap, HashSet};
use std::hint::black_box;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::risk_models::{inverse_distance, score_pair, RiskConfig, RiskError, RiskModel};
use crate::scenario::{AgentState, Scenario};

/// Survival risk at or above this marks an agent as important.
pub const BASELINE_THRESHOLD: f64 = 1e-25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("kept id `{0}` has no label")]
    UnknownAgent(String),
    #[error("no scenarios to evaluate")]
    NoScenarios,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImportanceLabel {
    pub agent: String,
    pub important: bool,
}

/// Scores every other agent with `model`, in id order. Returns `(id, score)`.
pub fn scenario_scores(
    scenario: &Scenario,
    model: RiskModel,
    cfg: &RiskConfig,
) -> Result<Vec<(String, f64)>, RiskError> {
    let mut others: Vec<&AgentState> = scenario.others.iter().collect();
    others.sort_by(|a, b| a.id.cmp(&b.id));
    others
        .into_iter()
        .map(|o| Ok((o.id.clone(), score_pair(model, &scenario.ego, o, cfg)?)))
        .collect()
}

pub fn labels_from_scores(scores: &[(String, f64)], threshold: f64) -> Vec<ImportanceLabel> {
    scores
        .iter()
        .map(|(id, s)| ImportanceLabel {
            agent: id.clone(),
            important: *s >= threshold,
        })
        .collect()
}

/// Baseline importance: survival risk at or above [`BASELINE_THRESHOLD`].
pub fn label_baseline(scenario: &Scenario, cfg: &RiskConfig) -> Result<Vec<ImportanceLabel>, RiskError> {
    let scores = scenario_scores(scenario, RiskModel::Survival, cfg)?;
    Ok(labels_from_scores(&scores, BASELINE_THRESHOLD))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.fp + self.tn
    }

    /// `None` when there are no positives.
    pub fn tpr(&self) -> Option<f64> {
        (self.positives() > 0).then(|| self.tp as f64 / self.positives() as f64)
    }

    /// `None` when there are no negatives.
    pub fn fpr(&self) -> Option<f64> {
        (self.negatives() > 0).then(|| self.fp as f64 / self.negatives() as f64)
    }

    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.tp += rhs.tp;
        self.fp += rhs.fp;
        self.tn += rhs.tn;
        self.fn_ += rhs.fn_;
    }
}

/// Confusion counts of a kept set against baseline labels.
pub fn confusion<'a>(
    kept: impl IntoIterator<Item = &'a str>,
    labels: &[ImportanceLabel],
) -> Result<ConfusionCounts, EvalError> {
    let known: HashMap<&str, bool> = labels
        .iter()
        .map(|l| (l.agent.as_str(), l.important))
        .collect();
    let mut kept_set = HashSet::new();
    for id in kept {
        if !known.contains_key(id) {
            return Err(EvalError::UnknownAgent(id.to_string()));
        }
        kept_set.insert(id);
    }
    let mut c = ConfusionCounts::default();
    for l in labels {
        match (kept_set.contains(l.agent.as_str()), l.important) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// One scenario's model scores aligned with its baseline labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScores {
    pub scores: Vec<f64>,
    pub important: Vec<bool>,
}

impl LabeledScores {
    pub fn new(scores: &[(String, f64)], labels: &[ImportanceLabel]) -> Self {
        debug_assert!(scores.iter().zip(labels).all(|(s, l)| s.0 == l.agent));
        Self {
            scores: scores.iter().map(|s| s.1).collect(),
            important: labels.iter().map(|l| l.important).collect(),
        }
    }

    /// Counts when keeping every agent with score >= `threshold`.
    pub fn counts(&self, threshold: f64) -> ConfusionCounts {
        let mut c = ConfusionCounts::default();
        for (&s, &imp) in self.scores.iter().zip(&self.important) {
            match (s >= threshold, imp) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }
}

/// How scenarios without positives (or without negatives) enter the averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegenerateRates {
    /// No positives gives TPR = 1, no negatives gives FPR = 0; both are counted.
    Perfect,
    /// Leave such scenarios out of the corresponding average.
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub mean_tpr: f64,
    pub std_tpr: f64,
    pub mean_fpr: f64,
    pub std_fpr: f64,
    /// Counts summed over all scenarios.
    pub pooled: ConfusionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    pub model: RiskModel,
    /// Ascending thresholds, including 0 and +inf.
    pub points: Vec<RocPoint>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Sorted thresholds with both ROC endpoints present.
pub fn with_endpoints(thresholds: &[f64]) -> Vec<f64> {
    let mut t: Vec<f64> = thresholds
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .chain([0.0, f64::INFINITY])
        .collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

/// Macro-averaged ROC: rates per scenario, then mean and population std-dev.
pub fn roc_from_scores(
    model: RiskModel,
    data: &[LabeledScores],
    thresholds: &[f64],
    policy: DegenerateRates,
) -> RocCurve {
    let points = with_endpoints(thresholds)
        .into_iter()
        .map(|threshold| {
            let mut tprs = Vec::with_capacity(data.len());
            let mut fprs = Vec::with_capacity(data.len());
            let mut pooled = ConfusionCounts::default();
            for d in data {
                let c = d.counts(threshold);
                pooled += c;
                match (c.tpr(), policy) {
                    (Some(v), _) => tprs.push(v),
                    (None, DegenerateRates::Perfect) => tprs.push(1.0),
                    (None, DegenerateRates::Exclude) => {}
                }
                match (c.fpr(), policy) {
                    (Some(v), _) => fprs.push(v),
                    (None, DegenerateRates::Perfect) => fprs.push(0.0),
                    (None, DegenerateRates::Exclude) => {}
                }
            }
            let (mean_tpr, std_tpr) = mean_std(&tprs);
            let (mean_fpr, std_fpr) = mean_std(&fprs);
            RocPoint {
                threshold,
                mean_tpr,
                std_tpr,
                mean_fpr,
                std_fpr,
                pooled,
            }
        })
        .collect();
    RocCurve { model, points }
}

/// Scores every scenario with `model` (scenario-parallel, order preserved).
pub fn score_dataset(
    scenarios: &[Scenario],
    model: RiskModel,
    cfg: &RiskConfig,
) -> Result<Vec<Vec<(String, f64)>>, RiskError> {
    scenarios
        .par_iter()
        .map(|s| scenario_scores(s, model, cfg))
        .collect()
}

/// Baseline labels for every scenario.
pub fn label_dataset(
    scenarios: &[Scenario],
    cfg: &RiskConfig,
) -> Result<Vec<Vec<ImportanceLabel>>, RiskError> {
    Ok(score_dataset(scenarios, RiskModel::Survival, cfg)?
        .iter()
        .map(|s| labels_from_scores(s, BASELINE_THRESHOLD))
        .collect())
}

pub fn align(
    scores: &[Vec<(String, f64)>],
    labels: &[Vec<ImportanceLabel>],
) -> Vec<LabeledScores> {
    scores
        .iter()
        .zip(labels)
        .map(|(s, l)| LabeledScores::new(s, l))
        .collect()
}

/// Sweeps `thresholds` for `model` against the survival baseline.
pub fn roc_sweep(
    model: RiskModel,
    scenarios: &[Scenario],
    thresholds: &[f64],
    cfg: &RiskConfig,
) -> Result<RocCurve, EvalError> {
    if scenarios.is_empty() {
        return Err(EvalError::NoScenarios);
    }
    let labels = label_dataset(scenarios, cfg)?;
    let scores = score_dataset(scenarios, model, cfg)?;
    Ok(roc_from_scores(
        model,
        &align(&scores, &labels),
        thresholds,
        DegenerateRates::Perfect,
    ))
}

/// Default sweep grid for a model's score scale.
///
/// Inverse-distance and headway models: `ε/(ε+d)` for 20 log-spaced `d` in
/// [0.1, 100] m. Density-scale models: `10^e` for `e = -300, -295, ..., -5`.
pub fn default_thresholds(model: RiskModel, cfg: &RiskConfig) -> Vec<f64> {
    if model.is_density_scale() {
        // Parsed rather than computed so that 1e-25 is bit-identical to the baseline.
        (-60..=-1)
            .map(|i| format!("1e{}", 5 * i).parse().expect("valid float literal"))
            .collect()
    } else {
        let (lo, hi) = (0.1f64.ln(), 100f64.ln());
        let mut t: Vec<f64> = (0..20)
            .map(|i| {
                let d = (lo + (hi - lo) * i as f64 / 19.0).exp();
                inverse_distance(cfg.epsilon, d)
            })
            .collect();
        t.sort_by(f64::total_cmp);
        t
    }
}

/// Area under the (FPR, TPR) polyline, closed with (0,0) and (1,1).
pub fn auc(curve: &RocCurve) -> f64 {
    let mut pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .map(|p| (p.mean_fpr, p.mean_tpr))
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    pts.push((0.0, 0.0));
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Point with the highest pooled F1 score; ties go to the larger threshold.
pub fn best_f1_point(curve: &RocCurve) -> &RocPoint {
    curve
        .points
        .iter()
        .rev()
        .max_by(|a, b| a.pooled.f1().total_cmp(&b.pooled.f1()))
        .expect("curves always carry their endpoints")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub model: RiskModel,
    pub median_ns: f64,
    pub p95_ns: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    /// Number of timed samples.
    pub samples: usize,
    /// Target duration of one timed batch; short calls are repeated to reach it.
    pub batch_ns: f64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            samples: 10_000,
            batch_ns: 2_000.0,
        }
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

/// Wall-clock cost of one (ego, other) scoring call, over every pair of the
/// scenarios cycled until `opts.samples` batches were timed.
pub fn bench_with(
    model: RiskModel,
    scenarios: &[Scenario],
    cfg: &RiskConfig,
    opts: &BenchOptions,
) -> Result<BenchResult, EvalError> {
    let pairs: Vec<(&AgentState, &AgentState)> = scenarios
        .iter()
        .flat_map(|s| s.others.iter().map(move |o| (&s.ego, o)))
        .collect();
    if pairs.is_empty() {
        return Err(EvalError::NoScenarios);
    }
    // Warm-up, also used to size the batches.
    let warm = pairs.len().min(1_000);
    let start = Instant::now();
    for &(e, o) in &pairs[..warm] {
        black_box(score_pair(model, black_box(e), black_box(o), cfg)?);
    }
    let per_call = start.elapsed().as_nanos() as f64 / warm as f64;
    let reps = ((opts.batch_ns / per_call.max(1.0)).ceil() as usize).clamp(1, 10_000);

    let mut times = Vec::with_capacity(opts.samples);
    for &(e, o) in pairs.iter().cycle().take(opts.samples) {
        let t = Instant::now();
        for _ in 0..reps {
            black_box(score_pair(model, black_box(e), black_box(o), cfg)?);
        }
        times.push(t.elapsed().as_nanos() as f64 / reps as f64);
    }
    times.sort_by(f64::total_cmp);
    Ok(BenchResult {
        model,
        median_ns: percentile(&times, 0.5).max(f64::MIN_POSITIVE),
        p95_ns: percentile(&times, 0.95).max(f64::MIN_POSITIVE),
        pairs: times.len(),
    })
}

pub fn bench(model: RiskModel, scenarios: &[Scenario], cfg: &RiskConfig) -> Result<BenchResult, EvalError> {
    bench_with(model, scenarios, cfg, &BenchOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(flags: &[(&str, bool)]) -> Vec<ImportanceLabel> {
        flags
            .iter()
            .map(|&(a, important)| ImportanceLabel {
                agent: a.into(),
                important,
            })
            .collect()
    }

    #[test]
    fn confusion_examples() {
        let l = labels(&[("a", true), ("b", true), ("c", false), ("d", false)]);
        let perfect = confusion(["a", "b"], &l).unwrap();
        assert_eq!((perfect.fn_, perfect.fp), (0, 0));
        let all = confusion(["a", "b", "c", "d"], &l).unwrap();
        assert_eq!(all.fn_, 0);
        assert_eq!(all.fpr(), Some(1.0));
        assert!(matches!(
            confusion(["zz"], &l),
            Err(EvalError::UnknownAgent(_))
        ));
        let c = ConfusionCounts {
            tp: 8,
            fn_: 2,
            ..Default::default()
        };
        assert_eq!(c.tpr(), Some(0.8));
    }

    #[test]
    fn auc_examples() {
        let mk = |pts: &[(f64, f64)]| RocCurve {
            model: RiskModel::CurrentDistance,
            points: pts
                .iter()
                .map(|&(fpr, tpr)| RocPoint {
                    threshold: 0.0,
                    mean_tpr: tpr,
                    std_tpr: 0.0,
                    mean_fpr: fpr,
                    std_fpr: 0.0,
                    pooled: ConfusionCounts::default(),
                })
                .collect(),
        };
        assert_eq!(auc(&mk(&[(0.0, 1.0)])), 1.0);
        assert_eq!(auc(&mk(&[(0.5, 0.5)])), 0.5);
        // (0,0) -> (0.2,0.6) -> (0.5,0.8) -> (1,1):
        // 0.2*0.3 + 0.3*0.7 + 0.5*0.9 = 0.06 + 0.21 + 0.45
        let v = auc(&mk(&[(0.5, 0.8), (0.2, 0.6)]));
        assert!((v - 0.72).abs() < 1e-12);
    }

    #[test]
    fn roc_endpoints_and_degenerate_policy() {
        let data = vec![
            LabeledScores {
                scores: vec![0.9, 0.2, 0.5],
                important: vec![true, false, true],
            },
            LabeledScores {
                scores: vec![0.1, 0.3],
                important: vec![false, false],
            },
        ];
        let c = roc_from_scores(RiskModel::CurrentDistance, &data, &[0.4], DegenerateRates::Perfect);
        assert_eq!(c.points.len(), 3);
        let first = &c.points[0];
        assert_eq!((first.mean_tpr, first.mean_fpr), (1.0, 1.0));
        let mid = &c.points[1];
        assert_eq!(mid.mean_tpr, 1.0);
        assert_eq!(mid.mean_fpr, 0.0);
        let last = c.points.last().unwrap();
        // Second scenario has no positives and counts as TPR = 1.
        assert_eq!(last.mean_tpr, 0.5);
        assert_eq!(last.mean_fpr, 0.0);
        let ex = roc_from_scores(RiskModel::CurrentDistance, &data, &[0.4], DegenerateRates::Exclude);
        assert_eq!(ex.points.last().unwrap().mean_tpr, 0.0);
    }

    #[test]
    fn density_grid_contains_baseline_threshold() {
        let g = default_thresholds(RiskModel::Gaussian, &RiskConfig::default());
        assert_eq!(g.len(), 60);
        assert!(g.contains(&BASELINE_THRESHOLD));
        assert_eq!(g[0], 1e-300);
        let d = default_thresholds(RiskModel::PathDistance, &RiskConfig::default());
        assert_eq!(d.len(), 20);
        assert!((d[19] - 1.0 / 1.1).abs() < 1e-12);
        assert!((d[0] - 1.0 / 101.0).abs() < 1e-12);
    }

    #[test]
    fn percentile_picks_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.5), 50.0);
        assert_eq!(percentile(&v, 0.95), 95.0);
        assert_eq!(percentile(&[3.0], 0.95), 3.0);
    }
}
