#![no_main]
use libfuzzer_sys::fuzz_target;
use todo_core::selection::WordVectorTable;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(t) = WordVectorTable::parse(s) {
            let text = t.to_text();
            let again = WordVectorTable::parse(&text).expect("reparse");
            assert_eq!(again.to_text(), text);
        }
    }
});
