#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(t) = linebench::formkit::TemplateDescriptor::from_json(data) {
        let again = linebench::formkit::TemplateDescriptor::from_json(&t.to_json()).expect("re-parse");
        assert_eq!(again, t);
    }
});
