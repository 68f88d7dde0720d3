#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = linebench::synth::parse_boxes_jsonl(data);
});
