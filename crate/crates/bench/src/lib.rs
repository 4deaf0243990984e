//! Fixtures shared by the benchmarks.

use alconf_core::{generate_blobs, BlobConfig, Dataset};

/// Default two-class blobs with the usual 80/20 split.
pub fn blobs() -> Dataset {
    generate_blobs(&BlobConfig::default())
        .expect("default blob config is valid")
        .dataset
        .split(0.2, 0)
        .expect("split of generated blobs")
}

/// The first `labeled` train rows as labeled set, the rest as pool.
pub fn labeled_and_pool(ds: &Dataset, labeled: usize) -> (Vec<usize>, Vec<usize>) {
    let train = ds.train_indices();
    (train[..labeled].to_vec(), train[labeled..].to_vec())
}
