//! Precision-recall curves, average precision, mAP, and the confusion matrix
//! for a hand-written score table.

use stormdamage::metrics::{average_precision, EvaluationReport, PrCurve};

fn main() -> stormdamage::Result<()> {
    let scores = [0.9, 0.8, 0.8, 0.6, 0.4, 0.3, 0.2, 0.1];
    let positives = [true, false, true, true, false, false, true, false];
    let curve = PrCurve::from_scores(&scores, &positives)?;
    for p in &curve.points {
        println!("threshold {:.2}: recall {:.3} precision {:.3}", p.threshold, p.recall, p.precision);
    }
    println!("AP = {:.4}", average_precision(&scores, &positives)?);
    curve.write_csv(std::io::stdout())?;

    let probs = vec![
        vec![0.7, 0.2, 0.1],
        vec![0.6, 0.3, 0.1],
        vec![0.2, 0.5, 0.3],
        vec![0.1, 0.2, 0.7],
        vec![0.5, 0.1, 0.4],
        vec![0.3, 0.3, 0.4],
    ];
    let labels = [0, 0, 1, 2, 2, 1];
    print!("{}", EvaluationReport::new(&probs, &labels, 3)?.to_text());
    Ok(())
}
