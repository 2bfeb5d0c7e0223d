#![no_main]
use libfuzzer_sys::fuzz_target;
use todo_core::text::Vocabulary;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(v) = Vocabulary::from_text(s) {
            let text = v.to_text();
            let again = Vocabulary::from_text(&text).expect("reparse");
            assert_eq!(again.to_text(), text);
        }
    }
});
