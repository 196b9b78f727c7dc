#![no_main]

use gcnn::group::{from_matrix, Mat3};
use gcnn::GroupId;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&tag, rest)) = data.split_first() else { return };
    if rest.len() < 72 {
        return;
    }
    let group = [GroupId::Z2, GroupId::P4, GroupId::P4M][tag as usize % 3];
    let mut m = [[0i64; 3]; 3];
    for (k, chunk) in rest[..72].chunks_exact(8).enumerate() {
        m[k / 3][k % 3] = i64::from_le_bytes(chunk.try_into().unwrap());
    }
    let mat = Mat3(m);
    if let Ok(g) = from_matrix(&mat, group) {
        assert_eq!(g.group(), group);
        assert_eq!(g.to_matrix(), mat);
    }
});
