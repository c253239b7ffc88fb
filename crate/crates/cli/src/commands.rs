use std::collections::HashSet;
use std::path::Path;

use anyhow::Result;
use rayon::prelude::*;
use risk_sieve::eval::{
    align, auc, bench_with, best_f1_point, default_thresholds, label_dataset, roc_from_scores,
    score_dataset, BenchOptions, DegenerateRates, ImportanceLabel,
};
use risk_sieve::filter::{calibrate_pipeline, run_pipeline, FilterTrace, Pipeline};
use risk_sieve::scenario::{self, GeneratorConfig, Scenario};
use risk_sieve::{RiskConfig, RiskModel};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{self, sibling, Csv, Run};
use crate::UsageError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub risk: RiskConfig,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let cfg = match path {
        None => RunConfig::default(),
        Some(p) => {
            let bytes = output::read(p)?;
            serde_json::from_slice(&bytes)
                .map_err(|e| UsageError(format!("config {}: {e}", p.display())))?
        }
    };
    cfg.risk
        .validate()
        .map_err(|e| UsageError(format!("config: risk: {e}")))?;
    Ok(cfg)
}

fn load_scenarios(path: &Path) -> Result<Vec<Scenario>> {
    let bytes = output::read(path)?;
    scenario::load(&bytes).map_err(|e| {
        let msg = format!("{}: {e}", path.display());
        match e {
            scenario::LoadError::Parse { .. } | scenario::LoadError::UnsupportedVersion(_) => {
                UsageError(msg).into()
            }
            _ => anyhow::anyhow!(msg),
        }
    })
}

fn load_pipeline(path: Option<&Path>) -> Result<Pipeline> {
    match path {
        None => Ok(Pipeline::recommended()),
        Some(p) => {
            let bytes = output::read(p)?;
            Pipeline::from_json(&bytes)
                .map_err(|e| UsageError(format!("pipeline {}: {e}", p.display())).into())
        }
    }
}

fn all_if_empty(models: &[RiskModel]) -> Vec<RiskModel> {
    if models.is_empty() {
        RiskModel::ALL.to_vec()
    } else {
        models.to_vec()
    }
}

/// Shortest round-trip text, in exponent form for very large or small magnitudes.
fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn generate(
    config: Option<&Path>,
    seed: u64,
    n_scenarios: Option<usize>,
    out: &Path,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(n) = n_scenarios {
        cfg.generator.n_scenarios = n;
    }
    cfg.generator
        .validate()
        .map_err(|e| UsageError(format!("config: generator: {e}")))?;
    let inputs: Vec<&Path> = config.into_iter().collect();
    let mut run = Run::start("generate", &inputs);
    let scenarios = scenario::generate(&cfg.generator, seed)
        .map_err(|e| UsageError(format!("config: generator: {e}")))?;
    run.write(out, &scenario::save(&scenarios))?;
    let agents: usize = scenarios.iter().map(Scenario::agent_count).sum();
    let summary = json!({ "scenarios": scenarios.len(), "agents": agents });
    run.finish(json!(cfg.generator), Some(seed), Some(summary))?;
    println!("wrote {} scenarios ({agents} agents) to {}", scenarios.len(), out.display());
    Ok(())
}

pub fn score(config: Option<&Path>, input: &Path, models: &[RiskModel], out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let scenarios = load_scenarios(input)?;
    let mut run = Run::start("score", &[input]);
    let mut csv = Csv::with_header(&["scenario_id", "agent_id", "model", "risk"]);
    for &model in models {
        let scores = score_dataset(&scenarios, model, &cfg.risk)?;
        for (i, rows) in scores.iter().enumerate() {
            for (agent, v) in rows {
                csv.row([i.to_string(), agent.clone(), model.to_string(), num(*v)]);
            }
        }
    }
    run.write(out, &csv.into_bytes())?;
    run.finish(json!({ "risk": cfg.risk, "models": models }), None, None)?;
    Ok(())
}

pub fn roc(
    config: Option<&Path>,
    input: &Path,
    models: &[RiskModel],
    exclude_degenerate: bool,
    out: &Path,
) -> Result<()> {
    let cfg = load_config(config)?;
    let models = all_if_empty(models);
    let scenarios = load_scenarios(input)?;
    if scenarios.is_empty() {
        anyhow::bail!("{}: no scenarios", input.display());
    }
    let policy = if exclude_degenerate {
        DegenerateRates::Exclude
    } else {
        DegenerateRates::Perfect
    };
    let mut run = Run::start("roc", &[input]);
    let labels = label_dataset(&scenarios, &cfg.risk)?;
    let mut csv = Csv::with_header(&["model", "threshold", "mean_tpr", "std_tpr", "mean_fpr", "std_fpr"]);
    let mut summary = Vec::new();
    for &model in &models {
        let scores = score_dataset(&scenarios, model, &cfg.risk)?;
        let curve = roc_from_scores(
            model,
            &align(&scores, &labels),
            &default_thresholds(model, &cfg.risk),
            policy,
        );
        for p in &curve.points {
            csv.row([
                model.to_string(),
                num(p.threshold),
                num(p.mean_tpr),
                num(p.std_tpr),
                num(p.mean_fpr),
                num(p.std_fpr),
            ]);
        }
        let best = best_f1_point(&curve);
        summary.push(json!({
            "model": model,
            "auc": auc(&curve),
            "best_f1": {
                "threshold": best.threshold,
                "f1": best.pooled.f1(),
                "mean_tpr": best.mean_tpr,
                "std_tpr": best.std_tpr,
                "mean_fpr": best.mean_fpr,
                "std_fpr": best.std_fpr,
            },
        }));
    }
    let positives: usize = labels
        .iter()
        .map(|l| l.iter().filter(|x| x.important).count())
        .sum();
    let agents: usize = labels.iter().map(Vec::len).sum();
    let auc_json = json!({
        "scenarios": scenarios.len(),
        "agents": agents,
        "important": positives,
        "degenerate": if exclude_degenerate { "exclude" } else { "perfect" },
        "models": summary,
    });
    run.write(out, &csv.into_bytes())?;
    run.write(&sibling(out, "auc.json"), &serde_json::to_vec_pretty(&auc_json)?)?;
    run.finish(
        json!({ "risk": cfg.risk, "models": models, "exclude_degenerate": exclude_degenerate }),
        None,
        None,
    )?;
    for m in auc_json["models"].as_array().into_iter().flatten() {
        println!("{:<22} auc {:.4}", m["model"].as_str().unwrap_or(""), m["auc"]);
    }
    Ok(())
}

fn run_all(scenarios: &[Scenario], pipeline: &Pipeline, cfg: &RiskConfig) -> Result<Vec<FilterTrace>> {
    Ok(scenarios
        .par_iter()
        .map(|s| run_pipeline(s, pipeline, cfg))
        .collect::<Result<Vec<_>, _>>()?)
}

/// `(missed important agents, important agents)` summed over scenarios.
fn false_negatives(traces: &[FilterTrace], labels: &[Vec<ImportanceLabel>]) -> (usize, usize) {
    let mut missed = 0;
    let mut positives = 0;
    for (trace, labels) in traces.iter().zip(labels) {
        let kept: HashSet<&str> = trace.survivors().iter().map(String::as_str).collect();
        for l in labels.iter().filter(|l| l.important) {
            positives += 1;
            if !kept.contains(l.agent.as_str()) {
                missed += 1;
            }
        }
    }
    (missed, positives)
}

pub fn calibrate(
    config: Option<&Path>,
    input: &Path,
    pipeline: Option<&Path>,
    fn_rate: f64,
    split: f64,
    out: &Path,
) -> Result<()> {
    let cfg = load_config(config)?;
    if !(0.0..=1.0).contains(&fn_rate) {
        return Err(UsageError(format!("--fn-rate must lie in [0, 1], got {fn_rate}")).into());
    }
    if !(split > 0.0 && split <= 1.0) {
        return Err(UsageError(format!("--split must lie in (0, 1], got {split}")).into());
    }
    let base = load_pipeline(pipeline)?;
    let scenarios = load_scenarios(input)?;
    if scenarios.is_empty() {
        anyhow::bail!("{}: no scenarios", input.display());
    }
    let mut inputs = vec![input];
    inputs.extend(pipeline);
    let mut run = Run::start("calibrate", &inputs);

    let n_cal = ((split * scenarios.len() as f64).round() as usize).clamp(1, scenarios.len());
    let (cal, holdout) = scenarios.split_at(n_cal);
    let cal_labels = label_dataset(cal, &cfg.risk)?;
    let calibrated = calibrate_pipeline(&base, &cfg.risk, cal, &cal_labels, fn_rate)?;

    let (cal_fn, cal_pos) = false_negatives(&run_all(cal, &calibrated, &cfg.risk)?, &cal_labels);
    let holdout_labels = label_dataset(holdout, &cfg.risk)?;
    let (hold_fn, hold_pos) =
        false_negatives(&run_all(holdout, &calibrated, &cfg.risk)?, &holdout_labels);
    let summary = json!({
        "calibration": { "scenarios": cal.len(), "important": cal_pos, "false_negatives": cal_fn },
        "holdout": { "scenarios": holdout.len(), "important": hold_pos, "false_negatives": hold_fn },
        "thresholds": calibrated.stages.iter().map(|s| json!({ "model": s.model, "threshold": s.threshold })).collect::<Vec<_>>(),
    });
    run.write(out, &calibrated.to_json())?;
    run.finish(
        json!({ "risk": cfg.risk, "fn_rate": fn_rate, "split": split, "pipeline": base }),
        None,
        Some(summary),
    )?;
    for s in &calibrated.stages {
        println!("{:<22} threshold {}", s.model, num(s.threshold));
    }
    println!("false negatives: calibration {cal_fn}/{cal_pos}, holdout {hold_fn}/{hold_pos}");
    Ok(())
}

pub fn pipeline(config: Option<&Path>, input: &Path, pipeline: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let pipe = load_pipeline(pipeline)?;
    let scenarios = load_scenarios(input)?;
    if scenarios.is_empty() {
        anyhow::bail!("{}: no scenarios", input.display());
    }
    let mut inputs = vec![input];
    inputs.extend(pipeline);
    let mut run = Run::start("pipeline", &inputs);
    let traces = run_all(&scenarios, &pipe, &cfg.risk)?;

    let n = traces.len() as f64;
    let mut stage_sums = vec![0usize; pipe.stages.len() + 1];
    let mut tier_sums = vec![0usize; pipe.tier_thresholds.len() + 1];
    let mut calls = 0usize;
    let per_scenario: Vec<_> = traces
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let counts = t.stage_counts();
            let tier_sizes: Vec<usize> = t.tiers.iter().map(Vec::len).collect();
            for (acc, c) in stage_sums.iter_mut().zip(&counts) {
                *acc += c;
            }
            for (acc, c) in tier_sums.iter_mut().zip(&tier_sizes) {
                *acc += c;
            }
            calls += t.scoring_calls();
            json!({
                "scenario_id": i,
                "stage_counts": counts,
                "tier_sizes": tier_sizes,
                "trace": t,
            })
        })
        .collect();
    let stage_names = std::iter::once("input".to_string())
        .chain(pipe.stages.iter().map(|s| s.model.to_string()));
    let summary = json!({
        "scenarios": traces.len(),
        "mean_stage_counts": stage_names
            .zip(&stage_sums)
            .map(|(name, &s)| json!({ "stage": name, "mean_count": s as f64 / n }))
            .collect::<Vec<_>>(),
        "mean_tier_sizes": tier_sums.iter().map(|&s| s as f64 / n).collect::<Vec<_>>(),
        "mean_scoring_calls": calls as f64 / n,
    });
    let doc = json!({
        "pipeline": pipe,
        "scenarios": per_scenario,
        "summary": summary,
    });
    run.write(out, &serde_json::to_vec(&doc)?)?;
    run.finish(json!({ "risk": cfg.risk, "pipeline": pipe }), None, Some(summary.clone()))?;
    for s in summary["mean_stage_counts"].as_array().into_iter().flatten() {
        println!("{:<22} mean {:.2}", s["stage"].as_str().unwrap_or(""), s["mean_count"]);
    }
    println!("mean tier sizes {}", summary["mean_tier_sizes"]);
    Ok(())
}

pub fn bench(
    config: Option<&Path>,
    input: &Path,
    models: &[RiskModel],
    samples: usize,
    out: &Path,
) -> Result<()> {
    let cfg = load_config(config)?;
    if samples == 0 {
        return Err(UsageError("--samples must be at least 1".into()).into());
    }
    let models = all_if_empty(models);
    let scenarios = load_scenarios(input)?;
    let mut run = Run::start("bench", &[input]);
    let opts = BenchOptions {
        samples,
        ..BenchOptions::default()
    };
    let mut csv = Csv::with_header(&["model", "median_ns", "p95_ns", "pairs"]);
    for &model in &models {
        let r = bench_with(model, &scenarios, &cfg.risk, &opts)?;
        println!("{:<22} median {:>12.1} ns  p95 {:>12.1} ns", model, r.median_ns, r.p95_ns);
        csv.row([
            model.to_string(),
            format!("{:.1}", r.median_ns),
            format!("{:.1}", r.p95_ns),
            r.pairs.to_string(),
        ]);
    }
    run.write(out, &csv.into_bytes())?;
    run.finish(json!({ "risk": cfg.risk, "models": models, "samples": samples }), None, None)?;
    Ok(())
}
