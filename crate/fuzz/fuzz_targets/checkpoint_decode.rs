#![no_main]
use libfuzzer_sys::fuzz_target;
use todo_numeric::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::decode(data) {
        let bytes = ckpt.encode();
        let again = Checkpoint::decode(&bytes).expect("re-decode");
        assert_eq!(again.encode(), bytes);
    }
});
