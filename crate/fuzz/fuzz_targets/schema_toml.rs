#![no_main]

use libfuzzer_sys::fuzz_target;
use ordmi::data::Schema;

fuzz_target!(|data: &str| {
    if let Ok(schema) = Schema::from_toml_str(data) {
        // Accepted schemas yield valid item specs and re-validate.
        let specs = schema.item_specs().expect("validated schema");
        assert_eq!(specs.len(), schema.items.len());
        schema.validate().unwrap();
    }
});
