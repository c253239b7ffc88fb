//! Prints AUC, best-F1 robustness and class balance for every model.

use risk_sieve::eval::{align, auc, best_f1_point, default_thresholds, label_dataset, roc_from_scores, score_dataset, DegenerateRates};
use risk_sieve::scenario::{generate, GeneratorConfig};
use risk_sieve::{RiskConfig, RiskModel};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let n: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(500);
    let gen = GeneratorConfig {
        n_scenarios: n,
        ..Default::default()
    };
    let scenarios = generate(&gen, seed).expect("generate");
    let cfg = RiskConfig::default();
    let labels = label_dataset(&scenarios, &cfg).expect("labels");
    let pos: usize = labels.iter().map(|l| l.iter().filter(|x| x.important).count()).sum();
    let tot: usize = labels.iter().map(|l| l.len()).sum();
    let zero_pos = labels.iter().filter(|l| !l.iter().any(|x| x.important)).count();
    println!("important {pos}/{tot}, zero-positive scenarios {zero_pos}");
    for model in RiskModel::ALL {
        let scores = score_dataset(&scenarios, model, &cfg).expect("scores");
        let data = align(&scores, &labels);
        let curve = roc_from_scores(model, &data, &default_thresholds(model, &cfg), DegenerateRates::Perfect);
        let best = best_f1_point(&curve);
        println!(
            "{:<22} auc {:.4}  bestF1 {:.3} thr {:.3e} tpr {:.3} fpr {:.3} std_tpr {:.3}",
            model.name(), auc(&curve), best.pooled.f1(), best.threshold, best.mean_tpr, best.mean_fpr, best.std_tpr
        );
    }
}
