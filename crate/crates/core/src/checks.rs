//! Executable property suites behind `gcnn check` and `gcnn bench`:
//! equivariance identities, finite-difference gradient checks, timings.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gconv::{
    build_transform_index_table, gcorr_backward_filter, gcorr_backward_input, gcorr_direct_window,
    gcorr_fast, gcorr_first_layer_direct, gcorr_full_direct, planar_correlate,
    planar_correlate_backward_filter, planar_correlate_backward_input, transform_filters,
    transform_filters_backward, ExpandedFilters, GFilterBank, LayerKind, PlanarFilters, Window,
};
use crate::gfunc::{involution, left_transform_g, left_transform_planar, GStack, PlanarStack};
use crate::group::{make_element, stabilizer_elements, GroupElement, GroupId};
use crate::layers::{
    add_bias, add_bias_backward, batch_norm_g, batch_norm_g_backward, coset_pool_stabilizer, dropout,
    dropout_backward, max_pool_backward, pool_nonstrided, relu, relu_backward, residual_add,
    spatial_max_pool, subsample_subgroup, subsample_subgroup_backward, zero_pad, zero_pad_backward,
    Mode, PoolSpec, RunningStats, Subgroup,
};

/// Outcome of checking the group axioms on a finite set of elements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupLawReport {
    pub group: GroupId,
    pub elements: usize,
    pub checks: usize,
    pub failures: usize,
}

/// Closure, associativity, identity and inverse over every stabilizer
/// element composed with every translation in `[-radius, radius]²`.
/// Closure is judged against the plain integer matrix product.
pub fn group_law_suite(group: GroupId, radius: i64) -> GroupLawReport {
    let mut elements = Vec::new();
    for s in stabilizer_elements(group) {
        for u in -radius..=radius {
            for v in -radius..=radius {
                elements.push(GroupElement::translation(group, u, v).compose(&s).expect("same group"));
            }
        }
    }
    let e = GroupElement::identity(group);
    let (mut checks, mut failures) = (0, 0);
    let mut check = |ok: bool| {
        checks += 1;
        if !ok {
            failures += 1;
        }
    };
    for a in &elements {
        check(e.compose(a).ok() == Some(*a) && a.compose(&e).ok() == Some(*a));
        let inv = a.inverse();
        check(a.compose(&inv).ok() == Some(e) && inv.compose(a).ok() == Some(e));
        for b in &elements {
            let ab = a.compose(b);
            check(ab.as_ref().is_ok_and(|ab| ab.to_matrix() == a.to_matrix().mul(&b.to_matrix())));
            let Ok(ab) = ab else { continue };
            for c in &elements {
                let left = ab.compose(c);
                let right = b.compose(c).and_then(|bc| a.compose(&bc));
                check(matches!((left, right), (Ok(l), Ok(r)) if l == r));
            }
        }
    }
    GroupLawReport {
        group,
        elements: elements.len(),
        checks,
        failures,
    }
}

/// Fast path against the direct sums on random integer instances.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub group: GroupId,
    pub kind: LayerKind,
    pub instances: usize,
    pub max_abs_diff: f64,
}

pub fn oracle_suite(group: GroupId, kind: LayerKind, instances: usize, seed: u64) -> Result<OracleReport> {
    let mut d = Draw::new(seed, Values::Integer);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = [1, 3, 5][d.rng.random_range(0..3)];
        let (h, w) = (d.rng.random_range(n..n + 6), d.rng.random_range(n..n + 6));
        let (k_in, k_out) = (d.rng.random_range(1..4), d.rng.random_range(1..4));
        let bank = d.bank(group, kind, k_out, k_in, n)?;
        let table = build_transform_index_table(group, bank.input_slices(), n)?;
        let (fast, direct) = match kind {
            LayerKind::FirstLayer => {
                let f = PlanarStack::new(k_in, h, w, d.vec(k_in * h * w))?;
                (gcorr_fast(&f, &bank, &table)?, gcorr_first_layer_direct(&f, &bank)?)
            }
            LayerKind::Full => {
                let len = k_in * group.stabilizer_size() * h * w;
                let f = GStack::new(group, k_in, h, w, d.vec(len))?;
                (gcorr_fast(&f, &bank, &table)?, gcorr_full_direct(&f, &bank)?)
            }
        };
        worst = worst.max(violation(fast.data(), direct.data(), Values::Integer));
        if fast.origin() != direct.origin() {
            worst = f64::INFINITY;
        }
    }
    Ok(OracleReport {
        group,
        kind,
        instances,
        max_abs_diff: worst,
    })
}

/// How random test inputs are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Values {
    /// Integers in `[-4, 4]`: every identity must hold exactly.
    Integer,
    /// Uniform reals in `[-1, 1)`: identities hold up to rounding.
    Real,
}

impl Values {
    pub fn name(self) -> &'static str {
        match self {
            Values::Integer => "integer",
            Values::Real => "real",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentityReport {
    pub name: &'static str,
    pub values: Values,
    pub trials: usize,
    /// Absolute for integer inputs, relative to the largest magnitude for reals.
    pub max_violation: f64,
}

struct Draw {
    rng: ChaCha8Rng,
    values: Values,
}

impl Draw {
    fn new(seed: u64, values: Values) -> Self {
        Draw {
            rng: ChaCha8Rng::seed_from_u64(seed),
            values,
        }
    }

    fn value(&mut self) -> f64 {
        match self.values {
            Values::Integer => self.rng.random_range(-4i32..=4) as f64,
            Values::Real => self.rng.random_range(-1.0..1.0),
        }
    }

    fn vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.value()).collect()
    }

    /// Square window of odd `size` centred on the origin, non-zero only
    /// within `radius` of it.
    fn planar(&mut self, channels: usize, size: usize, radius: i64) -> PlanarStack<f64> {
        let mut f = PlanarStack::zeros(channels, size, size);
        for k in 0..channels {
            for i in 0..size {
                for j in 0..size {
                    let (u, v) = f.coord(i, j);
                    if u.abs() <= radius && v.abs() <= radius {
                        let x = self.value();
                        f.set(k, i, j, x);
                    }
                }
            }
        }
        f
    }

    fn gstack(&mut self, group: GroupId, channels: usize, size: usize, radius: i64) -> GStack<f64> {
        let mut f = GStack::zeros(group, channels, size, size);
        for k in 0..channels {
            for s in 0..group.stabilizer_size() {
                for i in 0..size {
                    for j in 0..size {
                        let (u, v) = f.coord(i, j);
                        if u.abs() <= radius && v.abs() <= radius {
                            let x = self.value();
                            f.set(k, s, i, j, x);
                        }
                    }
                }
            }
        }
        f
    }

    fn bank(&mut self, group: GroupId, kind: LayerKind, k_out: usize, k_in: usize, n: usize) -> Result<GFilterBank<f64>> {
        let mut b = GFilterBank::zeros(group, kind, k_out, k_in, n)?;
        for w in b.data_mut() {
            *w = self.value();
        }
        Ok(b)
    }

    fn element(&mut self, group: GroupId, shift: i64) -> Result<GroupElement> {
        let stab = stabilizer_elements(group);
        let s = stab[self.rng.random_range(0..stab.len())];
        let t = GroupElement::translation(
            group,
            self.rng.random_range(-shift..=shift),
            self.rng.random_range(-shift..=shift),
        );
        t.compose(&s)
    }

    fn rotation(&mut self) -> Result<GroupElement> {
        make_element(GroupId::P4M, self.rng.random_range(0..2), self.rng.random_range(0..4), 0, 0)
    }
}

fn violation(a: &[f64], b: &[f64], values: Values) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    match values {
        Values::Integer => diff,
        Values::Real => {
            let scale = a.iter().chain(b).fold(0.0f64, |m, x| m.max(x.abs()));
            if scale == 0.0 {
                diff
            } else {
                diff / scale
            }
        }
    }
}

const SIZE: usize = 15;
const RADIUS: i64 = 3;
const SHIFT: i64 = 2;

fn planar_filters(d: &mut Draw, k_out: usize, k_in: usize, n: usize) -> Result<PlanarFilters<f64>> {
    PlanarFilters::new(k_out, k_in, n, d.vec(k_out * k_in * n * n))
}

fn transform_planar_filters(g: &GroupElement, f: &PlanarFilters<f64>) -> Result<PlanarFilters<f64>> {
    let n = f.size();
    let per = f.in_channels() * n * n;
    let mut data = Vec::with_capacity(f.data().len());
    for o in 0..f.out_channels() {
        let psi = PlanarStack::new(f.in_channels(), n, n, f.data()[o * per..(o + 1) * per].to_vec())?;
        data.extend_from_slice(left_transform_planar(g, &psi).data());
    }
    PlanarFilters::new(f.out_channels(), f.in_channels(), n, data)
}

/// Run every equivariance identity `trials` times on `group`.
///
/// Inputs live on a 15×15 window and vanish outside radius 3, so zero-filled
/// transforms lose nothing and all identities are exact up to rounding.
pub fn equivariance_suite(group: GroupId, trials: usize, values: Values, seed: u64) -> Result<Vec<IdentityReport>> {
    let mut d = Draw::new(seed, values);
    let mut worst = [0.0f64; 8];
    let names = [
        "translation (planar correlation)",
        "rotation (planar correlation)",
        "first-layer G-correlation",
        "full G-correlation",
        "involution relation",
        "pointwise nonlinearity",
        "subgroup pooling",
        "coset pooling",
    ];
    let n = 3;
    let first_table = build_transform_index_table(group, 1, n)?;
    let full_table = build_transform_index_table(group, group.stabilizer_size(), n)?;
    let u_spec = {
        let mut dom = Vec::new();
        for s in stabilizer_elements(group).iter().take(2) {
            for (u, v) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                dom.push(GroupElement::translation(group, u, v).compose(s)?);
            }
        }
        PoolSpec::new(dom, Subgroup::default())?
    };
    for _ in 0..trials {
        // translation of the plane commutes with planar correlation
        let f = d.planar(2, SIZE, RADIUS);
        let psi = planar_filters(&mut d, 3, 2, n)?;
        let (tu, tv) = (d.rng.random_range(-SHIFT..=SHIFT), d.rng.random_range(-SHIFT..=SHIFT));
        let t = GroupElement::translation(GroupId::Z2, tu, tv);
        let lhs = planar_correlate(&left_transform_planar(&t, &f), &psi)?;
        let rhs = left_transform_planar(&t, &planar_correlate(&f, &psi)?);
        worst[0] = worst[0].max(violation(lhs.data(), rhs.data(), values));

        // rotating the input equals rotating the output of a rotated filter
        let r = d.rotation()?;
        let lhs = planar_correlate(&left_transform_planar(&r, &f), &psi)?;
        let inner = planar_correlate(&f, &transform_planar_filters(&r.inverse(), &psi)?)?;
        let rhs = left_transform_planar(&r, &inner);
        worst[1] = worst[1].max(violation(lhs.data(), rhs.data(), values));

        let g = d.element(group, SHIFT)?;

        let bank = d.bank(group, LayerKind::FirstLayer, 2, 2, n)?;
        let lhs = gcorr_fast(&left_transform_planar(&g, &f), &bank, &first_table)?;
        let rhs = left_transform_g(&g, &gcorr_fast(&f, &bank, &first_table)?)?;
        worst[2] = worst[2].max(violation(lhs.data(), rhs.data(), values));

        let fg = d.gstack(group, 2, SIZE, RADIUS);
        let bank = d.bank(group, LayerKind::Full, 2, 2, n)?;
        let lhs = gcorr_fast(&left_transform_g(&g, &fg)?, &bank, &full_table)?;
        let rhs = left_transform_g(&g, &gcorr_fast(&fg, &bank, &full_table)?)?;
        worst[3] = worst[3].max(violation(lhs.data(), rhs.data(), values));

        let small = d.gstack(group, 2, 5, 2);
        let filt = d.gstack(group, 2, 3, 1);
        let window = Window {
            height: 7,
            width: 7,
            origin: (3, 3),
        };
        let lhs = gcorr_direct_window(&small, std::slice::from_ref(&filt), window)?;
        let rhs = involution(&gcorr_direct_window(&filt, std::slice::from_ref(&small), window)?)?;
        worst[4] = worst[4].max(violation(lhs.data(), rhs.data(), values));

        let lhs = relu(&left_transform_g(&g, &fg)?);
        let rhs = left_transform_g(&g, &relu(&fg))?;
        worst[5] = worst[5].max(violation(lhs.data(), rhs.data(), values));

        let lhs = pool_nonstrided(&left_transform_g(&g, &fg)?, &u_spec)?.output;
        let rhs = left_transform_g(&g, &pool_nonstrided(&fg, &u_spec)?.output)?;
        worst[6] = worst[6].max(violation(lhs.data(), rhs.data(), values));

        if group != GroupId::Z2 {
            let lhs = coset_pool_stabilizer(&left_transform_g(&g, &fg)?)?.output;
            let rhs = left_transform_planar(&g, &coset_pool_stabilizer(&fg)?.output);
            worst[7] = worst[7].max(violation(lhs.data(), rhs.data(), values));
        }
    }
    let count = if group == GroupId::Z2 { 7 } else { 8 };
    Ok(names
        .iter()
        .zip(worst)
        .take(count)
        .map(|(&name, max_violation)| IdentityReport {
            name,
            values,
            trials,
            max_violation,
        })
        .collect())
}

/// Which kind of gradient test a report row comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientCheck {
    /// Analytic gradient against central differences.
    FiniteDifference,
    /// `⟨A x, y⟩ = ⟨x, Aᵀ y⟩` for a linear map and its backward pass.
    Adjoint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientReport {
    pub name: String,
    pub check: GradientCheck,
    pub max_error: f64,
}

pub const FD_STEP: f64 = 1e-4;

/// Relative error of an analytic gradient against a numeric one. The floor
/// `1e-3 · max|numeric|` keeps coordinates with negligible gradient from
/// dominating.
pub fn gradient_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = (1e-3 * scale).max(1e-8);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Central differences of a scalar function at `x`.
pub fn numeric_gradient(x: &[f64], mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
    let mut p = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        p[i] = x[i] + FD_STEP;
        let up = f(&p)?;
        p[i] = x[i] - FD_STEP;
        let down = f(&p)?;
        p[i] = x[i];
        out.push((up - down) / (2.0 * FD_STEP));
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn adjoint_error(lhs: f64, rhs: f64) -> f64 {
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).abs() / scale
    }
}

/// Real values with pairwise gaps far larger than the difference step, so
/// max-pooling decisions and ReLU gates do not flip under perturbation.
fn separated(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|i| (i as f64 - n as f64 / 2.0 + 0.5) * 0.01 + 0.003)
        .collect();
    v.shuffle(rng);
    v
}

struct Recorder {
    rows: Vec<GradientReport>,
}

impl Recorder {
    fn record(&mut self, name: &str, check: GradientCheck, err: f64) {
        match self.rows.iter_mut().find(|r| r.name == name) {
            Some(r) => r.max_error = r.max_error.max(err),
            None => self.rows.push(GradientReport {
                name: name.to_string(),
                check,
                max_error: err,
            }),
        }
    }

    fn fd(&mut self, name: &str, analytic: &[f64], numeric: &[f64]) {
        self.record(name, GradientCheck::FiniteDifference, gradient_error(analytic, numeric));
    }

    fn adjoint(&mut self, name: &str, lhs: f64, rhs: f64) {
        self.record(name, GradientCheck::Adjoint, adjoint_error(lhs, rhs));
    }
}

/// Every backward pass against central differences, plus adjointness of the
/// linear maps, over `trials` random instances.
pub fn gradient_suite(trials: usize, seed: u64) -> Result<Vec<GradientReport>> {
    let mut rec = Recorder { rows: Vec::new() };
    let mut d = Draw::new(seed, Values::Real);
    for _ in 0..trials {
        planar_gradients(&mut d, &mut rec)?;
        for group in [GroupId::P4, GroupId::P4M] {
            for kind in [LayerKind::FirstLayer, LayerKind::Full] {
                gconv_gradients(&mut d, &mut rec, group, kind)?;
            }
        }
        layer_gradients(&mut d, &mut rec)?;
    }
    Ok(rec.rows)
}

fn planar_gradients(d: &mut Draw, rec: &mut Recorder) -> Result<()> {
    let f = PlanarStack::new(2, 6, 6, d.vec(72))?;
    let psi = planar_filters(d, 3, 2, 3)?;
    let out = planar_correlate(&f, &psi)?;
    let w = d.vec(out.data().len());
    let dout = PlanarStack::with_origin(3, 4, 4, out.origin().0, out.origin().1, w.clone())?;
    let dx = planar_correlate_backward_input(&dout, &psi)?;
    let dpsi = planar_correlate_backward_filter(&dout, &f)?;
    let num = numeric_gradient(f.data(), |x| {
        Ok(dot(planar_correlate(&PlanarStack::new(2, 6, 6, x.to_vec())?, &psi)?.data(), &w))
    })?;
    rec.fd("planar correlation: input", dx.data(), &num);
    let num = numeric_gradient(psi.data(), |x| {
        Ok(dot(planar_correlate(&f, &PlanarFilters::new(3, 2, 3, x.to_vec())?)?.data(), &w))
    })?;
    rec.fd("planar correlation: filters", dpsi.data(), &num);
    rec.adjoint("planar correlation: input adjoint", dot(out.data(), &w), dot(f.data(), dx.data()));
    Ok(())
}

fn gconv_gradients(d: &mut Draw, rec: &mut Recorder, group: GroupId, kind: LayerKind) -> Result<()> {
    let n = 3;
    let (k_in, k_out, size) = (2, 2, 5);
    let label = format!("{group} {} G-correlation", kind.name());
    let bank = d.bank(group, kind, k_out, k_in, n)?;
    let table = build_transform_index_table(group, bank.input_slices(), n)?;
    let input = match kind {
        LayerKind::FirstLayer => GStack::new(GroupId::Z2, k_in, size, size, d.vec(k_in * size * size))?,
        LayerKind::Full => {
            let len = k_in * group.stabilizer_size() * size * size;
            GStack::new(group, k_in, size, size, d.vec(len))?
        }
    };
    let out = gcorr_fast(&input, &bank, &table)?;
    let w = d.vec(out.data().len());
    let dout = out.like(w.clone())?;
    let dx = gcorr_backward_input(&dout, &bank, &table)?;
    let dbank = gcorr_backward_filter(&dout, &input, &table)?;

    let num = numeric_gradient(input.data(), |x| Ok(dot(gcorr_fast(&input.like(x.to_vec())?, &bank, &table)?.data(), &w)))?;
    rec.fd(&format!("{label}: input"), dx.data(), &num);
    let num = numeric_gradient(bank.data(), |x| {
        let b = GFilterBank::new(group, kind, k_out, k_in, n, x.to_vec())?;
        Ok(dot(gcorr_fast(&input, &b, &table)?.data(), &w))
    })?;
    rec.fd(&format!("{label}: filters"), dbank.data(), &num);
    rec.adjoint(&format!("{label}: input adjoint"), dot(out.data(), &w), dot(input.data(), dx.data()));
    rec.adjoint(&format!("{label}: filter adjoint"), dot(out.data(), &w), dot(bank.data(), dbank.data()));

    // the filter transformation itself is a gather; its backward a scatter-add
    let expanded = transform_filters(&bank, &table)?;
    let g = d.vec(expanded.data.len());
    let gexp = ExpandedFilters {
        data: g.clone(),
        ..expanded.clone()
    };
    let back = transform_filters_backward(&gexp, &table)?;
    let num = numeric_gradient(bank.data(), |x| {
        let b = GFilterBank::new(group, kind, k_out, k_in, n, x.to_vec())?;
        Ok(dot(&transform_filters(&b, &table)?.data, &g))
    })?;
    rec.fd(&format!("{group} {} filter transformation", kind.name()), back.data(), &num);
    rec.adjoint(
        &format!("{group} {} filter transformation adjoint", kind.name()),
        dot(&expanded.data, &g),
        dot(bank.data(), back.data()),
    );
    Ok(())
}

fn layer_gradients(d: &mut Draw, rec: &mut Recorder) -> Result<()> {
    let group = GroupId::P4;
    let (k, size) = (2, 4);
    let len = k * group.stabilizer_size() * size * size;
    let x = GStack::new(group, k, size, size, d.vec(len))?;
    let w = d.vec(len);

    // bias
    let bias = d.vec(k);
    let dout = x.like(w.clone())?;
    let num = numeric_gradient(&bias, |b| Ok(dot(add_bias(&x, b)?.data(), &w)))?;
    rec.fd("bias: bias", &add_bias_backward(&dout), &num);
    let num = numeric_gradient(x.data(), |v| Ok(dot(add_bias(&x.like(v.to_vec())?, &bias)?.data(), &w)))?;
    rec.fd("bias: input", dout.data(), &num);

    // batch norm over a batch of two, train and eval mode
    let batch = [x.clone(), x.like(d.vec(len))?];
    let ws = [w.clone(), d.vec(len)];
    let gamma: Vec<f64> = d.vec(k).iter().map(|g| 0.5 + g.abs()).collect();
    let beta = d.vec(k);
    let mut eval_stats = RunningStats::new(k);
    eval_stats.mean = d.vec(k);
    eval_stats.var = d.vec(k).iter().map(|v| 0.5 + v.abs()).collect();
    for mode in [Mode::Train, Mode::Eval] {
        let label = match mode {
            Mode::Train => "batch norm (train)",
            Mode::Eval => "batch norm (eval)",
        };
        let run = |xs: &[GStack<f64>], g: &[f64], b: &[f64]| -> Result<f64> {
            let mut stats = eval_stats.clone();
            let (ys, _) = batch_norm_g(xs, g, b, 1e-5, mode, &mut stats)?;
            Ok(ys.iter().zip(&ws).map(|(y, w)| dot(y.data(), w)).sum())
        };
        let mut stats = eval_stats.clone();
        let (_, cache) = batch_norm_g(&batch, &gamma, &beta, 1e-5, mode, &mut stats)?;
        let grads = [x.like(ws[0].clone())?, x.like(ws[1].clone())?];
        let (dx, dgamma, dbeta) = batch_norm_g_backward(&grads, &gamma, &cache)?;
        let flat: Vec<f64> = batch.iter().flat_map(|b| b.data().to_vec()).collect();
        let num = numeric_gradient(&flat, |v| {
            run(&[x.like(v[..len].to_vec())?, x.like(v[len..].to_vec())?], &gamma, &beta)
        })?;
        let analytic: Vec<f64> = dx.iter().flat_map(|b| b.data().to_vec()).collect();
        rec.fd(&format!("{label}: input"), &analytic, &num);
        let num = numeric_gradient(&gamma, |g| run(&batch, g, &beta))?;
        rec.fd(&format!("{label}: scale"), &dgamma, &num);
        let num = numeric_gradient(&beta, |b| run(&batch, &gamma, b))?;
        rec.fd(&format!("{label}: shift"), &dbeta, &num);
    }

    // piecewise-linear layers on well-separated values
    let xs = x.like(separated(&mut d.rng, len))?;
    let dout = xs.like(w.clone())?;
    let num = numeric_gradient(xs.data(), |v| Ok(dot(relu(&xs.like(v.to_vec())?).data(), &w)))?;
    rec.fd("relu", relu_backward(&xs, &dout)?.data(), &num);

    let spec = PoolSpec::square(group, 2, 1)?;
    let pooled = pool_nonstrided(&xs, &spec)?;
    let num = numeric_gradient(xs.data(), |v| Ok(dot(pool_nonstrided(&xs.like(v.to_vec())?, &spec)?.output.data(), &w)))?;
    rec.fd("subgroup max pooling", &max_pool_backward(&w, &pooled.argmax, len), &num);

    let pooled = spatial_max_pool(&xs, 2, 2)?;
    let wp = d.vec(pooled.output.data().len());
    let num = numeric_gradient(xs.data(), |v| Ok(dot(spatial_max_pool(&xs.like(v.to_vec())?, 2, 2)?.output.data(), &wp)))?;
    rec.fd("spatial max pooling", &max_pool_backward(&wp, &pooled.argmax, len), &num);

    let pooled = coset_pool_stabilizer(&xs)?;
    let wc = d.vec(pooled.output.data().len());
    let num = numeric_gradient(xs.data(), |v| Ok(dot(coset_pool_stabilizer(&xs.like(v.to_vec())?)?.output.data(), &wc)))?;
    rec.fd("coset pooling", &max_pool_backward(&wc, &pooled.argmax, len), &num);

    // linear reshaping layers
    let sub = Subgroup {
        stride: 2,
        rotations: true,
    };
    let s = subsample_subgroup(&x, sub)?;
    let ws = d.vec(s.data().len());
    let back = subsample_subgroup_backward(&s.like(ws.clone())?, &x, sub)?;
    let num = numeric_gradient(x.data(), |v| Ok(dot(subsample_subgroup(&x.like(v.to_vec())?, sub)?.data(), &ws)))?;
    rec.fd("subsampling", back.data(), &num);
    rec.adjoint("subsampling adjoint", dot(s.data(), &ws), dot(x.data(), back.data()));

    let padded = zero_pad(&x, 1);
    let wz = d.vec(padded.data().len());
    let back = zero_pad_backward(&padded.like(wz.clone())?, 1)?;
    let num = numeric_gradient(x.data(), |v| Ok(dot(zero_pad(&x.like(v.to_vec())?, 1).data(), &wz)))?;
    rec.fd("zero padding", back.data(), &num);
    rec.adjoint("zero padding adjoint", dot(padded.data(), &wz), dot(x.data(), back.data()));

    let other = x.like(d.vec(len))?;
    let num = numeric_gradient(x.data(), |v| Ok(dot(residual_add(&x.like(v.to_vec())?, &other)?.data(), &w)))?;
    rec.fd("residual sum", &w, &num);

    let mask_seed = d.rng.random::<u64>();
    let (_, mask) = dropout(&x, 0.3, &mut ChaCha8Rng::seed_from_u64(mask_seed), Mode::Train)?;
    let back = dropout_backward(&dout, mask.as_deref())?;
    let num = numeric_gradient(x.data(), |v| {
        let (y, _) = dropout(&x.like(v.to_vec())?, 0.3, &mut ChaCha8Rng::seed_from_u64(mask_seed), Mode::Train)?;
        Ok(dot(y.data(), &w))
    })?;
    rec.fd("dropout", back.data(), &num);
    Ok(())
}

/// One timing row of `gcnn bench gconv`, in nanoseconds per call.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub group: GroupId,
    pub kind: LayerKind,
    pub k_in: usize,
    pub k_out: usize,
    pub n: usize,
    pub height: usize,
    pub direct_ns: u128,
    pub fast_ns: u128,
    /// Planar correlation with the already expanded bank.
    pub planar_ns: u128,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str = "group,kind,K_in,K_out,n,H,direct_ns,fast_ns,planar_ns";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.group,
            self.kind.name(),
            self.k_in,
            self.k_out,
            self.n,
            self.height,
            self.direct_ns,
            self.fast_ns,
            self.planar_ns
        )
    }

    /// Fast path relative to the planar correlation it reduces to.
    pub fn overhead(&self) -> f64 {
        self.fast_ns as f64 / self.planar_ns.max(1) as f64
    }
}

fn median_ns(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<u128> {
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        f()?;
        times.push(t.elapsed().as_nanos());
    }
    times.sort_unstable();
    Ok(times[times.len() / 2])
}

/// Time direct summation, the fast path (filter transformation included) and
/// plain planar correlation with the expanded bank on `H × H` inputs.
pub fn bench_gconv(group: GroupId, sizes: &[usize], k_in: usize, k_out: usize, n: usize, reps: usize) -> Result<Vec<BenchRow>> {
    let mut d = Draw::new(7, Values::Real);
    let kinds: &[LayerKind] = if group == GroupId::Z2 {
        &[LayerKind::FirstLayer]
    } else {
        &[LayerKind::FirstLayer, LayerKind::Full]
    };
    let mut rows = Vec::new();
    for &h in sizes {
        for &kind in kinds {
            let bank = d.bank(group, kind, k_out, k_in, n)?;
            let table = build_transform_index_table(group, bank.input_slices(), n)?;
            let input = match kind {
                LayerKind::FirstLayer => GStack::new(GroupId::Z2, k_in, h, h, d.vec(k_in * h * h))?,
                LayerKind::Full => GStack::new(group, k_in, h, h, d.vec(k_in * group.stabilizer_size() * h * h))?,
            };
            let direct_ns = median_ns(reps, || {
                match kind {
                    LayerKind::FirstLayer => gcorr_first_layer_direct(&input.clone().into_planar()?, &bank)?,
                    LayerKind::Full => gcorr_full_direct(&input, &bank)?,
                };
                Ok(())
            })?;
            let fast_ns = median_ns(reps, || gcorr_fast(&input, &bank, &table).map(|_| ()))?;
            let planar_filters = transform_filters(&bank, &table)?.into_planar();
            let planar_input = PlanarStack::new(
                input.channels() * input.stabilizer_size(),
                h,
                h,
                input.data().to_vec(),
            )?;
            let planar_ns = median_ns(reps, || planar_correlate(&planar_input, &planar_filters).map(|_| ()))?;
            rows.push(BenchRow {
                group,
                kind,
                k_in,
                k_out,
                n,
                height: h,
                direct_ns,
                fast_ns,
                planar_ns,
            });
        }
    }
    Ok(rows)
}
