#![no_main]

use libfuzzer_sys::fuzz_target;

use linebench::dataset::{IdPattern, Registry};

fuzz_target!(|data: &str| {
    if let Ok(samples) = Registry::parse_manifest(data, IdPattern::default()) {
        let mut reg = Registry::new("/");
        for s in samples {
            reg.insert(s).expect("parsed samples are insertable");
        }
        let again = Registry::parse_manifest(&reg.to_manifest(), IdPattern::default()).expect("re-parse");
        assert_eq!(again.len(), reg.len());
    }
});
