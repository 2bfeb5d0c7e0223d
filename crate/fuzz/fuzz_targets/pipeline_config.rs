#![no_main]
use libfuzzer_sys::fuzz_target;
use todo_core::harness::PipelineConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(cfg) = PipelineConfig::from_toml_str(s) {
            let text = cfg.to_toml();
            if !text.is_empty() {
                let again = PipelineConfig::from_toml_str(&text).expect("reparse");
                assert_eq!(again.to_toml(), text);
            }
        }
    }
});
