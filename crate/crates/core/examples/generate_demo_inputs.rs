//! Write a demo claims file, feature table, and pipeline config.
//!
//! `cargo run --example generate_demo_inputs -- <dir> [seed]`, then run the
//! CLI stages against `<dir>/pipeline.toml`.

fn main() -> stormdamage::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| "demo".to_string());
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let config = stormdamage::fixtures::write_demo_inputs(std::path::Path::new(&dir), seed)?;
    println!("wrote {}", config.display());
    println!("next: stormdamage ingest --config {}", config.display());
    Ok(())
}
