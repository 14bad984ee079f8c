#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use ordmi::config::PipelineConfig;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = PipelineConfig::from_toml_str(data, Path::new("/base")) {
        cfg.settings().validate().expect("accepted config has valid settings");
        assert!(cfg.data.level1.is_absolute());
        assert!(cfg.output.dir.is_absolute());
    }
});
