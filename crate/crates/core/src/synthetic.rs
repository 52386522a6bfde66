//! Seeded synthetic datasets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;

pub const BLOBS2_SEED: u64 = 42;
pub const BLOBS2_ROWS_PER_CLASS: usize = 300;
pub const BLOBS2_FEATURES: usize = 8;
pub const BLOBS2_LABEL_COLUMN: &str = "class";

/// Two isotropic unit-variance Gaussian clusters in 8 dimensions. Class `0`
/// is centred at -1.5 and class `1` at +1.5 on the first three coordinates,
/// 0 elsewhere. Rows alternate between the classes (row `i` has class
/// `i % 2`); each row draws its 8 coordinates in order from one ChaCha8
/// stream seeded with `seed`.
pub fn blobs2(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * BLOBS2_ROWS_PER_CLASS;
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let centre = if class == 0 { -1.5 } else { 1.5 };
        let row = (0..BLOBS2_FEATURES)
            .map(|j| {
                let z: f64 = StandardNormal.sample(&mut rng);
                Some(if j < 3 { centre + z } else { z })
            })
            .collect();
        rows.push(row);
        labels.push(class);
    }
    let names = (0..BLOBS2_FEATURES).map(|j| format!("f{j}")).collect();
    Dataset::new(names, rows, labels, vec!["0".into(), "1".into()])
        .expect("generated blobs are valid")
}
