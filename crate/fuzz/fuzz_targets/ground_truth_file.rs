#![no_main]

use libfuzzer_sys::fuzz_target;

use linebench::textnorm::{validate_charset, Charset};
use linebench::GroundTruth;

fuzz_target!(|data: &[u8]| {
    if let Ok(gt) = GroundTruth::from_file_bytes(data) {
        let again = GroundTruth::from_file_bytes(gt.to_file_string().as_bytes()).expect("re-parse");
        assert_eq!(again, gt);
        let _ = validate_charset(&gt, &Charset::default());
    }
});
