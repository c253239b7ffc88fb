//! Median survival scoring time per pair as the prediction grid is refined.

use risk_sieve::eval::{bench_with, BenchOptions};
use risk_sieve::scenario::{generate, GeneratorConfig};
use risk_sieve::{RiskConfig, RiskModel};

fn main() {
    let gen = GeneratorConfig {
        n_scenarios: 20,
        ..Default::default()
    };
    let scenarios = generate(&gen, 42).expect("generate");
    let opts = BenchOptions {
        samples: 2_000,
        ..Default::default()
    };
    let mut previous: Option<f64> = None;
    for step in [0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625] {
        let cfg = RiskConfig::default().with_step(step);
        let r = bench_with(RiskModel::Survival, &scenarios, &cfg, &opts).expect("bench");
        let factor = previous.map(|p| r.median_ns / p);
        println!(
            "step {step:<8} n {:<6} median {:>12.0} ns  factor {}",
            cfg.prediction.sample_count(),
            r.median_ns,
            factor.map_or("-".into(), |f| format!("{f:.2}"))
        );
        previous = Some(r.median_ns);
    }
}
