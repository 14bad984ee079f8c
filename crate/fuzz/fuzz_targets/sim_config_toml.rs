#![no_main]

use libfuzzer_sys::fuzz_target;
use ordmi::simgen::{generate, SimConfig};

fuzz_target!(|data: &str| {
    let Ok(cfg) = SimConfig::from_toml_str(data) else {
        return;
    };
    // Keep generation cheap; larger configs only exercise the parser.
    let rows = cfg.n_clusters.saturating_mul(cfg.cluster_size_max);
    if rows <= 2_000 && cfg.items.len() <= 8 {
        if let Ok(sim) = generate(&cfg) {
            assert_eq!(sim.dataset.n_clusters(), cfg.n_clusters);
        }
    }
});
