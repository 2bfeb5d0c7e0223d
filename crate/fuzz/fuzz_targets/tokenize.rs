#![no_main]
use libfuzzer_sys::fuzz_target;
use todo_core::text::{split_sentences, tokenize};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        for t in tokenize(s) {
            assert!(!t.is_empty());
            assert!(!t.chars().any(char::is_whitespace));
        }
        for sent in split_sentences(s) {
            assert!(!sent.trim().is_empty());
        }
    }
});
