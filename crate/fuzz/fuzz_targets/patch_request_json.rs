#![no_main]

use libfuzzer_sys::fuzz_target;

use linebench_review::api::PatchRequest;

fuzz_target!(|data: &[u8]| {
    if let Ok(req) = PatchRequest::from_json(data) {
        assert!(req.ground_truth.is_some() || req.status.is_some());
    }
});
