#![allow(dead_code)]

use gcnn::gconv::{GFilterBank, LayerKind};
use gcnn::{GStack, GroupId, PlanarStack};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ints(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-4i32..=4) as f64).collect()
}

pub fn reals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn planar(rng: &mut ChaCha8Rng, k: usize, h: usize, w: usize) -> PlanarStack<f64> {
    PlanarStack::new(k, h, w, ints(rng, k * h * w)).unwrap()
}

pub fn gstack(rng: &mut ChaCha8Rng, group: GroupId, k: usize, h: usize, w: usize) -> GStack<f64> {
    let n = k * group.stabilizer_size() * h * w;
    GStack::new(group, k, h, w, ints(rng, n)).unwrap()
}

pub fn bank(
    rng: &mut ChaCha8Rng,
    group: GroupId,
    kind: LayerKind,
    k_out: usize,
    k_in: usize,
    n: usize,
) -> GFilterBank<f64> {
    let z = GFilterBank::<f64>::zeros(group, kind, k_out, k_in, n).unwrap();
    let len = z.data().len();
    GFilterBank::new(group, kind, k_out, k_in, n, ints(rng, len)).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
