use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gfunc::{GStack, PlanarStack};
use crate::group::{stabilizer_elements, GroupElement, GroupId};
use crate::real::Real;

/// Planar filter bank, shape `K_out × K_in × n × n`. `n` may be even; the
/// filter origin sits at index `(n−1)/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarFilters<T> {
    out_channels: usize,
    in_channels: usize,
    size: usize,
    data: Vec<T>,
}

impl<T: Real> PlanarFilters<T> {
    pub fn new(out_channels: usize, in_channels: usize, size: usize, data: Vec<T>) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 || size == 0 {
            return Err(Error::shape("filter dimensions must be at least 1"));
        }
        if data.len() != out_channels * in_channels * size * size {
            return Err(Error::shape(format!(
                "filter bank {out_channels}x{in_channels}x{size}x{size} needs {} values, got {}",
                out_channels * in_channels * size * size,
                data.len()
            )));
        }
        Ok(PlanarFilters {
            out_channels,
            in_channels,
            size,
            data,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }
}

/// Whether a G-correlation layer reads a planar input (`S_in = 1`) or a
/// function on the group (`S_in = |stabilizer|`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    FirstLayer,
    Full,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::FirstLayer => "first",
            LayerKind::Full => "full",
        }
    }
}

/// Filters `F` of shape `K_out × K_in × S_in × n × n`.
#[derive(Clone, Debug, PartialEq)]
pub struct GFilterBank<T> {
    group: GroupId,
    kind: LayerKind,
    out_channels: usize,
    in_channels: usize,
    size: usize,
    data: Vec<T>,
}

fn input_slices(group: GroupId, kind: LayerKind) -> usize {
    match kind {
        LayerKind::FirstLayer => 1,
        LayerKind::Full => group.stabilizer_size(),
    }
}

impl<T: Real> GFilterBank<T> {
    /// Z² banks are always [`LayerKind::FirstLayer`]: both kinds coincide there.
    /// Filters that get rotated must have odd `size`.
    pub fn new(
        group: GroupId,
        kind: LayerKind,
        out_channels: usize,
        in_channels: usize,
        size: usize,
        data: Vec<T>,
    ) -> Result<Self> {
        let kind = if group == GroupId::Z2 {
            LayerKind::FirstLayer
        } else {
            kind
        };
        if group != GroupId::Z2 && size.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "{group} filters need odd spatial size, got {size}"
            )));
        }
        if out_channels == 0 || in_channels == 0 || size == 0 {
            return Err(Error::shape("filter dimensions must be at least 1"));
        }
        let s_in = input_slices(group, kind);
        let expected = out_channels * in_channels * s_in * size * size;
        if data.len() != expected {
            return Err(Error::shape(format!(
                "filter bank {out_channels}x{in_channels}x{s_in}x{size}x{size} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(GFilterBank {
            group,
            kind,
            out_channels,
            in_channels,
            size,
            data,
        })
    }

    pub fn zeros(
        group: GroupId,
        kind: LayerKind,
        out_channels: usize,
        in_channels: usize,
        size: usize,
    ) -> Result<Self> {
        let n = out_channels * in_channels * input_slices(group, kind) * size * size;
        Self::new(group, kind, out_channels, in_channels, size, vec![T::zero(); n])
    }

    pub fn group(&self) -> GroupId {
        self.group
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn input_slices(&self) -> usize {
        input_slices(self.group, self.kind)
    }

    pub fn output_slices(&self) -> usize {
        self.group.stabilizer_size()
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn shape(&self) -> [usize; 5] {
        [
            self.out_channels,
            self.in_channels,
            self.input_slices(),
            self.size,
            self.size,
        ]
    }

    pub fn offset(&self, o: usize, k: usize, s: usize, a: usize, b: usize) -> usize {
        (((o * self.in_channels + k) * self.input_slices() + s) * self.size + a) * self.size + b
    }

    pub fn get(&self, o: usize, k: usize, s: usize, a: usize, b: usize) -> T {
        self.data[self.offset(o, k, s, a, b)]
    }

    pub fn set(&mut self, o: usize, k: usize, s: usize, a: usize, b: usize, value: T) {
        let idx = self.offset(o, k, s, a, b);
        self.data[idx] = value;
    }

    /// Filter `o` of a first-layer bank as a centred planar stack with `K_in` channels.
    pub fn planar_filter(&self, o: usize) -> Result<PlanarStack<T>> {
        if self.kind != LayerKind::FirstLayer {
            return Err(Error::shape("planar_filter needs a first-layer bank"));
        }
        let len = self.in_channels * self.size * self.size;
        PlanarStack::new(
            self.in_channels,
            self.size,
            self.size,
            self.data[o * len..(o + 1) * len].to_vec(),
        )
    }

    /// Filter `o` of a full bank as a centred function on G with `K_in` channels.
    pub fn group_filter(&self, o: usize) -> Result<GStack<T>> {
        if self.kind != LayerKind::Full {
            return Err(Error::shape("group_filter needs a full bank"));
        }
        let len = self.in_channels * self.input_slices() * self.size * self.size;
        GStack::new(
            self.group,
            self.in_channels,
            self.size,
            self.size,
            self.data[o * len..(o + 1) * len].to_vec(),
        )
    }
}

/// Precomputed gather indices realising `L_s` on every filter, for every
/// output stabilizer element `s`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransformIndexTable {
    group: GroupId,
    kind: LayerKind,
    output_slices: usize,
    input_slices: usize,
    size: usize,
    // flat offset into an `S_in × n × n` block, indexed by (s_out, s_in, i, j)
    source: Vec<u32>,
}

impl TransformIndexTable {
    pub fn group(&self) -> GroupId {
        self.group
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn output_slices(&self) -> usize {
        self.output_slices
    }

    pub fn input_slices(&self) -> usize {
        self.input_slices
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Source index `(s̄, ī, j̄)` feeding cell `(s_in, i, j)` of slice `s_out`.
    pub fn source(&self, s_out: usize, s_in: usize, i: usize, j: usize) -> (usize, usize, usize) {
        let n = self.size;
        let flat = self.source[((s_out * self.input_slices + s_in) * n + i) * n + j] as usize;
        (flat / (n * n), (flat / n) % n, flat % n)
    }

    fn block(&self, s_out: usize) -> &[u32] {
        let len = self.input_slices * self.size * self.size;
        &self.source[s_out * len..(s_out + 1) * len]
    }

    fn matches<T: Real>(&self, bank: &GFilterBank<T>) -> Result<()> {
        if bank.group != self.group {
            return Err(Error::mismatch(self.group, bank.group));
        }
        if bank.size != self.size || bank.input_slices() != self.input_slices {
            return Err(Error::shape(format!(
                "index table for S_in={} n={} does not fit bank with S_in={} n={}",
                self.input_slices,
                self.size,
                bank.input_slices(),
                bank.size
            )));
        }
        Ok(())
    }
}

/// For each `(s_out, s_in, i, j)` stores the index of
/// `stabilizer[s_out]⁻¹ · g(s_in, i, j)`. Planar filters (`S_in = 1`) only
/// carry the point part.
pub fn build_transform_index_table(
    group: GroupId,
    input_slices: usize,
    size: usize,
) -> Result<TransformIndexTable> {
    if size == 0 || (size.is_multiple_of(2) && group != GroupId::Z2) {
        return Err(Error::InvalidArgument(format!(
            "filter size must be odd, got {size}"
        )));
    }
    let s_total = group.stabilizer_size();
    let kind = if input_slices == 1 {
        LayerKind::FirstLayer
    } else if input_slices == s_total {
        LayerKind::Full
    } else {
        return Err(Error::InvalidArgument(format!(
            "{group} filters have 1 or {s_total} input slices, got {input_slices}"
        )));
    };
    let stab = stabilizer_elements(group);
    let c = (size as i64 - 1) / 2;
    let n = size;
    let mut source = Vec::with_capacity(s_total * input_slices * n * n);
    for s_prime in &stab {
        let s_inv = s_prime.inverse();
        for s_in in 0..input_slices {
            for i in 0..n {
                for j in 0..n {
                    let (u, v) = (j as i64 - c, i as i64 - c);
                    let (s_bar, p) = if kind == LayerKind::FirstLayer {
                        (0, s_inv.act((u, v)))
                    } else {
                        let h = GroupElement::translation(group, u, v).compose(&stab[s_in])?;
                        let k = s_inv.compose(&h)?;
                        (k.stabilizer_index(), (k.u(), k.v()))
                    };
                    let (ii, jj) = (p.1 + c, p.0 + c);
                    debug_assert!(ii >= 0 && jj >= 0 && (ii as usize) < n && (jj as usize) < n);
                    source.push(((s_bar * n + ii as usize) * n + jj as usize) as u32);
                }
            }
        }
    }
    Ok(TransformIndexTable {
        group,
        kind,
        output_slices: s_total,
        input_slices,
        size,
        source,
    })
}

/// The augmented bank `F⁺` of shape `K_out × S_out × K_in × S_in × n × n`.
/// Its memory layout doubles as a planar bank with `S_out·K_out` outputs and
/// `S_in·K_in` inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpandedFilters<T> {
    pub out_channels: usize,
    pub output_slices: usize,
    pub in_channels: usize,
    pub input_slices: usize,
    pub size: usize,
    pub data: Vec<T>,
}

impl<T: Real> ExpandedFilters<T> {
    pub fn get(&self, o: usize, s_out: usize, k: usize, s_in: usize, a: usize, b: usize) -> T {
        let n = self.size;
        self.data[((((o * self.output_slices + s_out) * self.in_channels + k) * self.input_slices
            + s_in)
            * n
            + a)
            * n
            + b]
    }

    pub fn into_planar(self) -> PlanarFilters<T> {
        PlanarFilters::new(
            self.out_channels * self.output_slices,
            self.in_channels * self.input_slices,
            self.size,
            self.data,
        )
        .expect("consistent expanded shape")
    }
}

/// `F⁺[o, s', k, s, i, j] = F[o, k, s̄, ī, j̄]`, a pure gather.
pub fn transform_filters<T: Real>(
    bank: &GFilterBank<T>,
    table: &TransformIndexTable,
) -> Result<ExpandedFilters<T>> {
    table.matches(bank)?;
    let block = table.input_slices * table.size * table.size;
    let mut data = Vec::with_capacity(bank.out_channels * table.output_slices * bank.in_channels * block);
    for o in 0..bank.out_channels {
        for s_out in 0..table.output_slices {
            let idx = table.block(s_out);
            for k in 0..bank.in_channels {
                let src = &bank.data[(o * bank.in_channels + k) * block..][..block];
                data.extend(idx.iter().map(|&p| src[p as usize]));
            }
        }
    }
    Ok(ExpandedFilters {
        out_channels: bank.out_channels,
        output_slices: table.output_slices,
        in_channels: bank.in_channels,
        input_slices: table.input_slices,
        size: table.size,
        data,
    })
}

/// Adjoint of [`transform_filters`]: every cell of `F` receives the sum of
/// the gradients of the `F⁺` cells that read it. Fixed iteration order.
pub fn transform_filters_backward<T: Real>(
    grad_expanded: &ExpandedFilters<T>,
    table: &TransformIndexTable,
) -> Result<GFilterBank<T>> {
    let g = grad_expanded;
    if g.output_slices != table.output_slices
        || g.input_slices != table.input_slices
        || g.size != table.size
    {
        return Err(Error::shape("expanded gradient does not fit the index table"));
    }
    let mut bank = GFilterBank::zeros(table.group, table.kind, g.out_channels, g.in_channels, g.size)?;
    let block = table.input_slices * table.size * table.size;
    for o in 0..g.out_channels {
        for s_out in 0..table.output_slices {
            let idx = table.block(s_out);
            for k in 0..g.in_channels {
                let src = &g.data[((o * g.output_slices + s_out) * g.in_channels + k) * block..][..block];
                let dst = &mut bank.data[(o * g.in_channels + k) * block..][..block];
                for (&p, &v) in idx.iter().zip(src) {
                    dst[p as usize] += v;
                }
            }
        }
    }
    Ok(bank)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z2_and_identity_slices_are_identity() {
        for n in [1, 3, 4, 5] {
            let t = build_transform_index_table(GroupId::Z2, 1, n).unwrap();
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(t.source(0, 0, i, j), (0, i, j));
                }
            }
        }
        for group in [GroupId::P4, GroupId::P4M] {
            for s_in in [1, group.stabilizer_size()] {
                let t = build_transform_index_table(group, s_in, 3).unwrap();
                for s in 0..s_in {
                    for i in 0..3 {
                        for j in 0..3 {
                            assert_eq!(t.source(0, s, i, j), (s, i, j));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn quarter_turn_source() {
        let t = build_transform_index_table(GroupId::P4, 1, 3).unwrap();
        // filter coordinate (u, v) = (0, 1) is cell (i, j) = (2, 1); source (1, 0) is (1, 2)
        assert_eq!(t.source(1, 0, 2, 1), (0, 1, 2));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(
            build_transform_index_table(GroupId::P4, 1, 4),
            Err(Error::InvalidArgument(_))
        ));
        assert!(build_transform_index_table(GroupId::P4, 2, 3).is_err());
        assert!(GFilterBank::<f64>::zeros(GroupId::P4, LayerKind::Full, 1, 1, 2).is_err());
    }

    #[test]
    fn every_slice_is_a_permutation() {
        for group in [GroupId::Z2, GroupId::P4, GroupId::P4M] {
            for s_in in [1, group.stabilizer_size()] {
                for n in [1, 3, 5] {
                    let t = build_transform_index_table(group, s_in, n).unwrap();
                    for s_out in 0..t.output_slices() {
                        let mut seen: Vec<u32> = t.block(s_out).to_vec();
                        seen.sort_unstable();
                        let expect: Vec<u32> = (0..(s_in * n * n) as u32).collect();
                        assert_eq!(seen, expect);
                    }
                }
            }
        }
    }

    #[test]
    fn transform_examples() {
        let t = build_transform_index_table(GroupId::P4, 1, 3).unwrap();
        let mut f = GFilterBank::<f64>::zeros(GroupId::P4, LayerKind::FirstLayer, 1, 1, 3).unwrap();
        f.set(0, 0, 0, 1, 2, 1.0); // (u, v) = (1, 0)
        let fp = transform_filters(&f, &t).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(fp.get(0, 0, 0, 0, a, b), f.get(0, 0, 0, a, b));
                let expect = if (a, b) == (2, 1) { 1.0 } else { 0.0 };
                assert_eq!(fp.get(0, 1, 0, 0, a, b), expect);
            }
        }
        let c = GFilterBank::new(GroupId::P4M, LayerKind::Full, 2, 3, 3, vec![2.5; 2 * 3 * 8 * 9]).unwrap();
        let t = build_transform_index_table(GroupId::P4M, 8, 3).unwrap();
        assert!(transform_filters(&c, &t).unwrap().data.iter().all(|&x| x == 2.5));
    }
}
