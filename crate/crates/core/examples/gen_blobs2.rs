//! Regenerates the bundled `data/blobs2.csv`.
//!
//! ```text
//! cargo run --example gen_blobs2 > crates/core/data/blobs2.csv
//! ```

use protolens::data::write_csv;
use protolens::synthetic::{blobs2, BLOBS2_LABEL_COLUMN, BLOBS2_SEED};

fn main() {
    let ds = blobs2(BLOBS2_SEED);
    write_csv(&ds, std::io::stdout().lock(), BLOBS2_LABEL_COLUMN).expect("write to stdout");
}
