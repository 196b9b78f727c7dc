#![no_main]

use gcnn::checkpoint::{decode, encode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = decode(data) {
        let bytes = encode(&c.model, c.optimizer.as_ref()).expect("decoded checkpoint re-encodes");
        let again = decode(&bytes).expect("re-encoded checkpoint decodes");
        assert_eq!(again.model.tensors(), c.model.tensors());
    }
});
