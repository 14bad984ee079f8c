//! Level-1 and level-2 CSV parsing against a fixed schema.
//!
//! The input is split at the first NUL byte: level-1 text before it,
//! level-2 text after it.

#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use ordmi::data::{read_dataset, write_dataset, Schema};

fn schema() -> &'static Schema {
    static SCHEMA: OnceLock<Schema> = OnceLock::new();
    SCHEMA.get_or_init(|| {
        Schema::from_toml_str(
            r#"
cluster = "cluster"
response = "y"
x = ["x1"]
z = ["z1"]
items = [
  { name = "q1", categories = 4 },
  { name = "b1", categories = 2, kind = "binary" },
]
"#,
        )
        .unwrap()
    })
}

fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let (level1, level2) = (&data[..split], data.get(split + 1..).unwrap_or(&[]));
    let Ok(ds) = read_dataset(level1, level2, schema()) else {
        return;
    };
    // Whatever parses must satisfy the dataset invariants and survive a
    // write/read cycle.
    assert_eq!(ds.cluster_of_row().len(), ds.n());
    assert_eq!(ds.cluster_sizes().iter().sum::<usize>(), ds.n());
    assert!(ds.cluster_sizes().iter().all(|&s| s > 0));
    let dir = std::env::temp_dir().join(format!("ordmi-fuzz-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let (a, b) = (dir.join("l1.csv"), dir.join("l2.csv"));
    write_dataset(&ds, &a, &b).unwrap();
    let back = ordmi::data::load_dataset(&a, &b, schema()).unwrap();
    assert_eq!(back, ds);
});
