//! Claims to grid cells to damage classes.
//!
//! Builds a synthetic claim set, merges the two sources, caps and normalizes
//! amounts, sums them per grid cell, and labels cells by 1-D k-means. Prints
//! the elbow curve and the class sizes.

use stormdamage::dataset::{aggregate_to_grid, merge_claims, normalize_claims, GridSpec, DEFAULT_CAP_PERCENTILE};
use stormdamage::fixtures::make_claim_fixture;
use stormdamage::labeling::{elbow_curve, label_cells_with};

fn main() -> stormdamage::Result<()> {
    let grid = GridSpec::new(0.0, 0.0, 500.0, 20, 20)?;
    let hotspots = [(3, 4), (3, 5), (10, 10), (15, 2), (16, 2)];
    let (nfip, ia) = make_claim_fixture(&grid, &hotspots, 1500, 7)?;
    let merged = merge_claims(&nfip, &ia)?;
    println!("{} NFIP + {} IA claims -> {} after merge", nfip.len(), ia.len(), merged.len());

    let normalized = normalize_claims(&merged, DEFAULT_CAP_PERCENTILE)?;
    let points: Vec<_> = normalized.iter().map(|c| ((c.x, c.y), c.normalized)).collect();
    let cells = aggregate_to_grid(&points, &grid)?;
    let total: f64 = cells.iter().map(|c| c.claim_sum).sum();
    println!("{} cells, total normalized mass {total:.3}", cells.len());

    let sums: Vec<f64> = cells.iter().map(|c| c.claim_sum).collect();
    println!("elbow:");
    for (k, wcss) in elbow_curve(&sums, 1..=6, 10, 7)? {
        println!("  k={k} wcss={wcss:.3}");
    }

    let (labels, fit) = label_cells_with(&cells, 3, 10, 7)?;
    let mut sizes = [0usize; 3];
    for &(_, class) in &labels {
        sizes[class] += 1;
    }
    println!("centroids {:?}", fit.centroids);
    println!("cells per class {sizes:?}");
    Ok(())
}
