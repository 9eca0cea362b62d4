//! Fit the conditional GAN on a three-class Gaussian mixture and sample a
//! class-balanced synthetic table.
//!
//! `cargo run --release --example synth_augmentation -- [epochs]` (default 200).

use stormdamage::fixtures::make_gaussian_mixture;
use stormdamage::metrics::marginal_similarity;
use stormdamage::synth::{fit, SynthConfig};

fn main() -> stormdamage::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(200);
    let real = make_gaussian_mixture(2000, &[0.5, 0.25, 0.25], 4, 1)?;
    let config = SynthConfig {
        max_epochs: epochs,
        checkpoint_every: epochs.min(50),
        seed: 1,
        ..SynthConfig::default()
    };
    let fitted = fit(&real, 3, &config)?;
    let log = &fitted.model.log;
    println!(
        "{} epochs, final losses gen {:.4} disc {:.4}",
        log.epochs(),
        log.gen_loss.last().unwrap(),
        log.disc_loss.last().unwrap()
    );

    let synthetic = fitted.model.sample(5000, &[0.6, 0.2, 0.2], 1)?;
    println!("sampled class counts {:?}", synthetic.class_counts(3));
    for c in 0..3 {
        let pick = |d: &stormdamage::dataset::TabularDataset| {
            let idx: Vec<usize> = (0..d.n_rows()).filter(|&i| d.labels().unwrap()[i] == c).collect();
            d.subset(&idx)
        };
        let (per_feature, mean) = marginal_similarity(&pick(&real), &pick(&synthetic))?;
        let shown: Vec<String> = per_feature.iter().map(|s| format!("{s:.3}")).collect();
        println!("class {c}: similarity {mean:.3} per feature {shown:?}");
    }
    Ok(())
}
