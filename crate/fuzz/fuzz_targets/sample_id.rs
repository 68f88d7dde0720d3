#![no_main]

use libfuzzer_sys::fuzz_target;

use linebench::dataset::{IdPattern, SampleId};

fuzz_target!(|data: &str| {
    if let Some(id) = SampleId::parse(data, IdPattern::default()) {
        assert_eq!(id.as_str(), data);
    }
});
