//! Random search over under-sampling counts and tree shape, scored by mAP on
//! held-out real rows.

use stormdamage::fixtures::{make_imbalanced_tabular, FixtureSpec};
use stormdamage::gbdt::TrainConfig;
use stormdamage::tuning::{random_search, stratified_split, write_trials, IntRange, SearchSpace};

fn main() -> stormdamage::Result<()> {
    let data = make_imbalanced_tabular(&FixtureSpec::imbalanced(6000, 0.9, 2))?;
    let split = stratified_split(data.require_labels()?, 0.8, 2)?;
    let (pool, eval) = (data.subset(&split.train), data.subset(&split.test));
    println!("pool class counts {:?}", pool.class_counts(3));

    let space = SearchSpace {
        class_counts: vec![IntRange::new(200, 4000), IntRange::new(10, 38), IntRange::new(30, 134)],
        ..SearchSpace::default()
    };
    let fixed = TrainConfig {
        num_trees: 50,
        ..TrainConfig::default()
    };
    let result = random_search(&pool, &eval, &space, 12, &fixed, 2)?;
    write_trials(std::io::stdout(), &result.trials)?;
    if let Some(best) = result.best_trial() {
        println!("best trial #{} mAP {:.4}: {:?}", best.index, best.map_eval.unwrap(), best.params);
    }
    Ok(())
}
