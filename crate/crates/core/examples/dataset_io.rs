//! Write a dataset in the on-disk layout and read it back.
//!
//!     cargo run --example dataset_io [out_dir]

use std::path::PathBuf;

use anyhow::{ensure, Result};
use mstcn::data::{
    features_path, generate_synthetic, labels_path, load_feature_file, load_split, write_dataset,
    SynthConfig,
};

fn main() -> Result<()> {
    let root: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("mstcn_dataset_io"));
    let synth = SynthConfig::with_random_structure(5, 12, 6, 150.0, 20.0, 1.0, 1.0, 11)?;
    let (mapping, samples) = generate_synthetic(&synth)?;
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    write_dataset(&root, &mapping, &samples, &[("train", ids[..4].to_vec()), ("test", ids[4..].to_vec())])?;

    let first = &samples[0];
    let bytes = std::fs::metadata(features_path(&root, &first.id))?.len();
    println!("{}: {} x {} features, {bytes} bytes", first.id, first.feature_dim(), first.len());
    println!("labels at {}", labels_path(&root, &first.id).display());

    let x = load_feature_file(features_path(&root, &first.id))?;
    let exact = x.data().iter().zip(first.features.data()).all(|(a, b)| a.to_bits() == b.to_bits());
    ensure!(exact, "features changed on disk");

    let (m, test) = load_split(&root, "test")?;
    ensure!(m == mapping);
    for s in &test {
        let orig = samples.iter().find(|o| o.id == s.id).unwrap();
        ensure!(s.labels == orig.labels, "{} labels differ", s.id);
    }
    println!("test split: {} videos read back unchanged from {}", test.len(), root.display());
    Ok(())
}
