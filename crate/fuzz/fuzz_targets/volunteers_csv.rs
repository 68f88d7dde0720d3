#![no_main]

use libfuzzer_sys::fuzz_target;

use linebench::dataset::{parse_volunteers, write_volunteers};

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = parse_volunteers(data) {
        let text = write_volunteers(&records);
        assert_eq!(parse_volunteers(text.as_bytes()).expect("re-parse"), records);
    }
});
