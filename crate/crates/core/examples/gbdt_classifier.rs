//! Train the histogram GBDT on an imbalanced planted-signal table, inspect
//! predictions and split importance, and round-trip the model through JSON.

use stormdamage::fixtures::{make_imbalanced_tabular, FixtureSpec};
use stormdamage::gbdt::{split_importance, train, GbdtModel, TrainConfig};
use stormdamage::metrics::EvaluationReport;
use stormdamage::tuning::stratified_split;

fn main() -> stormdamage::Result<()> {
    let data = make_imbalanced_tabular(&FixtureSpec::imbalanced(5000, 0.9, 3))?;
    let split = stratified_split(data.require_labels()?, 0.8, 3)?;
    let (train_rows, test_rows) = (data.subset(&split.train), data.subset(&split.test));

    let config = TrainConfig {
        num_leaves: 41,
        max_depth: 9,
        min_data_in_leaf: 51,
        seed: 3,
        ..TrainConfig::default()
    };
    let model = train(&train_rows, train_rows.require_labels()?, 3, &config)?;
    let probs = model.predict_proba_batch(&test_rows)?;
    print!("{}", EvaluationReport::new(&probs, test_rows.require_labels()?, 3)?.to_text());

    let counts = split_importance(&model);
    let mut ranked: Vec<(&str, usize)> = data.schema().names().zip(counts).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    println!("split importance: {ranked:?}");

    let path = std::env::temp_dir().join("stormdamage_gbdt_example.json");
    model.save(&path)?;
    let reloaded = GbdtModel::load(&path)?;
    assert_eq!(reloaded.predict_proba_batch(&test_rows)?, probs);
    println!("model saved to and reloaded from {}", path.display());
    Ok(())
}
