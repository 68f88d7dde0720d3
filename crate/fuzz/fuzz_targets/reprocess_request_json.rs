#![no_main]

use libfuzzer_sys::fuzz_target;

use linebench_review::api::ReprocessRequest;

fuzz_target!(|data: &[u8]| {
    if let Ok(req) = ReprocessRequest::from_json(data) {
        assert!(req.blur_k.is_none_or(|k| (1..=64).contains(&k)));
        assert!(req.threshold.is_none_or(|t| (0..=255).contains(&t)));
    }
});
