//! Imbalanced damage classes end to end: a baseline GBDT on the raw split,
//! then a synthesizer-augmented pool searched for under-sampling counts and
//! tree shape, both scored on the same held-out real rows.
//!
//! Usage: `cargo run --release --example imbalance_pipeline [epochs]`

use stormdamage::fixtures::{make_imbalanced_tabular, FixtureSpec};
use stormdamage::gbdt::{train, TrainConfig};
use stormdamage::metrics::EvaluationReport;
use stormdamage::synth::SynthConfig;
use stormdamage::tuning::{augment_and_search, stratified_split, AugmentProtocol, IntRange, SearchSpace};

fn summary(name: &str, report: &EvaluationReport) {
    let recall: Vec<String> = report.recall.iter().map(|r| format!("{:.3}", r.value)).collect();
    println!("{name}: accuracy {:.3} mAP {:.3} recall {:?}", report.accuracy, report.map, recall);
}

fn main() -> stormdamage::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(150);
    let data = make_imbalanced_tabular(&FixtureSpec::imbalanced(5000, 0.9, 1))?;
    let split = stratified_split(data.require_labels()?, 0.8, 1)?;
    let (real_train, test) = (data.subset(&split.train), data.subset(&split.test));
    println!("train class counts {:?}", real_train.class_counts(3));

    let baseline = train(&real_train, real_train.require_labels()?, 3, &TrainConfig::default())?;
    let report = EvaluationReport::new(&baseline.predict_proba_batch(&test)?, test.require_labels()?, 3)?;
    summary("baseline", &report);

    let synth = SynthConfig {
        max_epochs: epochs,
        checkpoint_every: epochs,
        seed: 1,
        ..SynthConfig::default()
    };
    let protocol = AugmentProtocol {
        n_samples: 10_000,
        ..AugmentProtocol::default()
    };
    let space = SearchSpace {
        class_counts: vec![IntRange::new(1000, 6000), IntRange::new(500, 2000), IntRange::new(500, 2000)],
        ..SearchSpace::default()
    };
    let out = augment_and_search(&real_train, &test, 3, &synth, &protocol, &space, 8, 1)?;
    println!("synthetic class counts {:?}", out.synthetic.class_counts(3));
    if let (Some(best), Some(model)) = (out.search.best_trial(), &out.search.best_model) {
        println!("best trial #{}: {:?}", best.index, best.params);
        let report = EvaluationReport::new(&model.predict_proba_batch(&test)?, test.require_labels()?, 3)?;
        summary("augmented", &report);
    }
    Ok(())
}
