#![no_main]

use gcnn::data::{parse_amat, PIXELS};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(d) = parse_amat(data) {
        for i in 0..d.len() {
            assert_eq!(d.pixels(i).len(), PIXELS);
            assert!(d.labels()[i] <= 9);
        }
    }
});
