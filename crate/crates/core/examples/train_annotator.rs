//! Trains the fair annotator on an imbalanced synthetic feature set and
//! compares it with a plain cross-entropy baseline.
//!
//! ```sh
//! cargo run --release --example train_annotator
//! ```

use fairface::annotator::{predict_rows, train, TrainConfig};
use fairface::synthetic::{balanced_accuracy, gaussian_set, GaussianSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = gaussian_set(&GaussianSpec { n: 2000, ..GaussianSpec::default() });
    let test = gaussian_set(&GaussianSpec { n: 2000, seed: 99, ..GaussianSpec::default() });
    let vocab = vec!["majority".to_string(), "minority".to_string()];

    let fair = TrainConfig { epochs: 8, ..TrainConfig::default() };
    let plain = TrainConfig { kappa: 0.0, rho: 0.0, lambda: 0.0, ..fair.clone() };
    for (name, cfg) in [("fair", &fair), ("plain CE", &plain)] {
        let model = train(data.x.view(), &data.labels, &data.attrs, vocab.clone(), cfg)?;
        let pred: Vec<usize> = predict_rows(&model, test.x.view())?.iter().map(|p| p.class).collect();
        let (bal, recall) = balanced_accuracy(&pred, &test.labels, 2);
        println!("{name:>8}: balanced accuracy {bal:.4}, minority recall {:.4}", recall[1]);
    }
    Ok(())
}
