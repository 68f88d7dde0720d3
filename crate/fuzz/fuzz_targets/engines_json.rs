#![no_main]

use libfuzzer_sys::fuzz_target;

use std::collections::BTreeMap;

use linebench::engines::EngineSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(specs) = serde_json::from_slice::<BTreeMap<String, EngineSpec>>(data) {
        for spec in specs.values() {
            if let EngineSpec::External { .. } = spec {
                let _ = spec.load(std::path::Path::new("/nonexistent"));
            }
        }
    }
});
