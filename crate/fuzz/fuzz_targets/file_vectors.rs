#![no_main]
use libfuzzer_sys::fuzz_target;
use todo_core::selection::FileVectorProvider;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = FileVectorProvider::parse(s);
    }
});
