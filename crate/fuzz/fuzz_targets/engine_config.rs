#![no_main]

use libfuzzer_sys::fuzz_target;

use linebench::engines::EngineConfig;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = EngineConfig::parse(data) {
        if cfg.validate().is_ok() {
            assert_eq!(EngineConfig::parse(&cfg.to_config_file()).expect("re-parse"), cfg);
        }
    }
});
