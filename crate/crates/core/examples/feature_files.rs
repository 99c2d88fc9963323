//! Writes and reads an FFB1 feature file: the exchange format between an
//! external image encoder and the annotator.
//!
//! ```sh
//! cargo run --example feature_files
//! ```

use fairface::features::{read_features, write_features, FeatureMatrix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ids = vec!["a".to_string(), "b".to_string(), "c".to_string()];
    let data: Vec<f32> = (0..12).map(|i| i as f32 * 0.25).collect();
    let fm = FeatureMatrix::new(ids, 4, data)?;
    let path = std::env::temp_dir().join("fairface-example.ffb");
    write_features(&fm, &path)?;
    let back = read_features(&path)?;
    assert_eq!(back, fm);
    println!("{} rows x {} dims round-tripped through {}", back.n(), back.d, path.display());
    println!("row b = {:?}", back.row(1));
    Ok(())
}
