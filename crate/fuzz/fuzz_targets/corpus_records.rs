#![no_main]
use libfuzzer_sys::fuzz_target;
use todo_core::corpus::parse_corpus;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let strict = parse_corpus(s, true);
        if let Ok(lenient) = parse_corpus(s, false) {
            if let Ok(strict) = strict {
                assert_eq!(strict.instances.len(), lenient.instances.len());
            }
        }
    }
});
