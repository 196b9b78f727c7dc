//! The split-group algorithm: transform the filters once, fold the stabilizer
//! axes into channels, and run one planar correlation.

use crate::error::{Error, Result};
use crate::gconv::filters::{
    transform_filters, transform_filters_backward, ExpandedFilters, GFilterBank, LayerKind,
    PlanarFilters, TransformIndexTable,
};
use crate::gconv::kernel::{
    correlate_valid, correlate_valid_backward_filter, correlate_valid_backward_input, Dims,
};
use crate::gfunc::{GStack, PlanarStack};
use crate::group::GroupId;
use crate::real::Real;

/// Anything that can be read as `K·S` planar slices: planar stacks (`S = 1`)
/// and G-stacks.
pub trait FeatureInput<T> {
    fn group(&self) -> GroupId;
    fn channels(&self) -> usize;
    fn slices(&self) -> usize;
    fn height(&self) -> usize;
    fn width(&self) -> usize;
    fn origin(&self) -> (i64, i64);
    fn values(&self) -> &[T];
}

impl<T: Real> FeatureInput<T> for PlanarStack<T> {
    fn group(&self) -> GroupId {
        GroupId::Z2
    }
    fn channels(&self) -> usize {
        PlanarStack::channels(self)
    }
    fn slices(&self) -> usize {
        1
    }
    fn height(&self) -> usize {
        PlanarStack::height(self)
    }
    fn width(&self) -> usize {
        PlanarStack::width(self)
    }
    fn origin(&self) -> (i64, i64) {
        PlanarStack::origin(self)
    }
    fn values(&self) -> &[T] {
        self.data()
    }
}

impl<T: Real> FeatureInput<T> for GStack<T> {
    fn group(&self) -> GroupId {
        GStack::group(self)
    }
    fn channels(&self) -> usize {
        GStack::channels(self)
    }
    fn slices(&self) -> usize {
        self.stabilizer_size()
    }
    fn height(&self) -> usize {
        GStack::height(self)
    }
    fn width(&self) -> usize {
        GStack::width(self)
    }
    fn origin(&self) -> (i64, i64) {
        GStack::origin(self)
    }
    fn values(&self) -> &[T] {
        self.data()
    }
}

fn half(n: usize) -> i64 {
    (n as i64 - 1) / 2
}

/// Valid-mode `[f ⋆ ψ](x) = Σ_y Σ_k f_k(y) ψ_k(y − x)`.
pub fn planar_correlate<T: Real>(
    f: &PlanarStack<T>,
    filters: &PlanarFilters<T>,
) -> Result<PlanarStack<T>> {
    let n = filters.size();
    if f.channels() != filters.in_channels() {
        return Err(Error::shape(format!(
            "input has {} channels, filters expect {}",
            f.channels(),
            filters.in_channels()
        )));
    }
    if n > f.height() || n > f.width() {
        return Err(Error::shape(format!(
            "{n}x{n} filter does not fit a {}x{} input",
            f.height(),
            f.width()
        )));
    }
    let out = correlate_valid(
        f.data(),
        Dims::new(f.channels(), f.height(), f.width()),
        filters.data(),
        filters.out_channels(),
        n,
        n,
    );
    let (r, c) = f.origin();
    PlanarStack::with_origin(
        filters.out_channels(),
        f.height() - n + 1,
        f.width() - n + 1,
        r - half(n),
        c - half(n),
        out,
    )
}

/// Gradient of [`planar_correlate`] with respect to its input.
pub fn planar_correlate_backward_input<T: Real>(
    grad_out: &PlanarStack<T>,
    filters: &PlanarFilters<T>,
) -> Result<PlanarStack<T>> {
    let n = filters.size();
    if grad_out.channels() != filters.out_channels() {
        return Err(Error::shape("gradient channels do not match filter outputs"));
    }
    let grad = correlate_valid_backward_input(
        grad_out.data(),
        Dims::new(grad_out.channels(), grad_out.height(), grad_out.width()),
        filters.data(),
        filters.in_channels(),
        n,
        n,
    );
    let (r, c) = grad_out.origin();
    PlanarStack::with_origin(
        filters.in_channels(),
        grad_out.height() + n - 1,
        grad_out.width() + n - 1,
        r + half(n),
        c + half(n),
        grad,
    )
}

/// Gradient of [`planar_correlate`] with respect to its filters.
pub fn planar_correlate_backward_filter<T: Real>(
    grad_out: &PlanarStack<T>,
    input: &PlanarStack<T>,
) -> Result<PlanarFilters<T>> {
    let (fh, fw) = (
        (input.height() + 1).checked_sub(grad_out.height()),
        (input.width() + 1).checked_sub(grad_out.width()),
    );
    let (Some(fh), Some(fw)) = (fh, fw) else {
        return Err(Error::shape("gradient larger than input"));
    };
    if fh != fw || fh == 0 {
        return Err(Error::shape("filters must be square"));
    }
    let grad = correlate_valid_backward_filter(
        input.data(),
        Dims::new(input.channels(), input.height(), input.width()),
        grad_out.data(),
        Dims::new(grad_out.channels(), grad_out.height(), grad_out.width()),
    );
    PlanarFilters::new(grad_out.channels(), input.channels(), fh, grad)
}

fn check_input<T: Real, I: FeatureInput<T>>(f: &I, bank_group: GroupId, kind: LayerKind, k_in: usize, n: usize) -> Result<()> {
    match kind {
        LayerKind::FirstLayer => {
            if f.slices() != 1 {
                return Err(Error::shape(format!(
                    "first-layer correlation needs a planar input, got {} slices",
                    f.slices()
                )));
            }
        }
        LayerKind::Full => {
            if f.group() != bank_group {
                return Err(Error::mismatch(bank_group, f.group()));
            }
        }
    }
    if f.channels() != k_in {
        return Err(Error::shape(format!(
            "input has {} channels, filters expect {k_in}",
            f.channels()
        )));
    }
    if n > f.height() || n > f.width() {
        return Err(Error::shape(format!(
            "{n}x{n} filter does not fit a {}x{} input",
            f.height(),
            f.width()
        )));
    }
    Ok(())
}

/// G-correlation through the augmented bank: expand `F` with `table`, fold
/// `K_out × S_out` and `K_in × S_in` into planar channels, correlate.
pub fn gcorr_fast<T: Real, I: FeatureInput<T>>(
    f: &I,
    bank: &GFilterBank<T>,
    table: &TransformIndexTable,
) -> Result<GStack<T>> {
    check_input(f, bank.group(), bank.kind(), bank.in_channels(), bank.size())?;
    let expanded = transform_filters(bank, table)?;
    Ok(correlate_expanded(f, &expanded, bank.group()))
}

/// Forward pass with an already expanded bank.
pub(crate) fn correlate_expanded<T: Real, I: FeatureInput<T>>(
    f: &I,
    expanded: &ExpandedFilters<T>,
    group: GroupId,
) -> GStack<T> {
    let n = expanded.size;
    let out = correlate_valid(
        f.values(),
        Dims::new(f.channels() * f.slices(), f.height(), f.width()),
        &expanded.data,
        expanded.out_channels * expanded.output_slices,
        n,
        n,
    );
    let (r, c) = f.origin();
    GStack::with_origin(
        group,
        expanded.out_channels,
        f.height() - n + 1,
        f.width() - n + 1,
        r - half(n),
        c - half(n),
        out,
    )
    .expect("consistent output shape")
}

/// Input gradient with an already expanded bank. The result lives on the
/// input's domain: a Z² stack for first-layer banks.
pub(crate) fn backward_input_expanded<T: Real>(
    grad_out: &GStack<T>,
    expanded: &ExpandedFilters<T>,
    input_group: GroupId,
) -> GStack<T> {
    let n = expanded.size;
    let grad = correlate_valid_backward_input(
        grad_out.data(),
        Dims::new(grad_out.planes(), grad_out.height(), grad_out.width()),
        &expanded.data,
        expanded.in_channels * expanded.input_slices,
        n,
        n,
    );
    let (r, c) = grad_out.origin();
    GStack::with_origin(
        input_group,
        expanded.in_channels,
        grad_out.height() + n - 1,
        grad_out.width() + n - 1,
        r + half(n),
        c + half(n),
        grad,
    )
    .expect("consistent input shape")
}

/// Gradient with respect to `F⁺`, before the scatter-add through the table.
pub(crate) fn backward_expanded_filter<T: Real, I: FeatureInput<T>>(
    grad_out: &GStack<T>,
    f: &I,
    table: &TransformIndexTable,
) -> ExpandedFilters<T> {
    let data = correlate_valid_backward_filter(
        f.values(),
        Dims::new(f.channels() * f.slices(), f.height(), f.width()),
        grad_out.data(),
        Dims::new(grad_out.planes(), grad_out.height(), grad_out.width()),
    );
    ExpandedFilters {
        out_channels: grad_out.channels(),
        output_slices: table.output_slices(),
        in_channels: f.channels(),
        input_slices: table.input_slices(),
        size: table.size(),
        data,
    }
}

fn check_grad_out<T: Real>(grad_out: &GStack<T>, group: GroupId) -> Result<()> {
    if grad_out.group() != group {
        return Err(Error::mismatch(group, grad_out.group()));
    }
    Ok(())
}

/// `∂L/∂f` for `out = gcorr_fast(f, F, T)`, given `∂L/∂out`.
pub fn gcorr_backward_input<T: Real>(
    grad_out: &GStack<T>,
    bank: &GFilterBank<T>,
    table: &TransformIndexTable,
) -> Result<GStack<T>> {
    check_grad_out(grad_out, bank.group())?;
    if grad_out.channels() != bank.out_channels() {
        return Err(Error::shape("gradient channels do not match filter outputs"));
    }
    let expanded = transform_filters(bank, table)?;
    let input_group = match bank.kind() {
        LayerKind::FirstLayer => GroupId::Z2,
        LayerKind::Full => bank.group(),
    };
    Ok(backward_input_expanded(grad_out, &expanded, input_group))
}

/// `∂L/∂F` for `out = gcorr_fast(f, F, T)`: the planar filter gradient with
/// respect to `F⁺`, scatter-added back through the index table.
pub fn gcorr_backward_filter<T: Real, I: FeatureInput<T>>(
    grad_out: &GStack<T>,
    input: &I,
    table: &TransformIndexTable,
) -> Result<GFilterBank<T>> {
    check_grad_out(grad_out, table.group())?;
    check_input(input, table.group(), table.kind(), input.channels(), table.size())?;
    let n = table.size();
    if grad_out.height() + n - 1 != input.height() || grad_out.width() + n - 1 != input.width() {
        return Err(Error::shape("gradient and input windows are inconsistent"));
    }
    let expanded = backward_expanded_filter(grad_out, input, table);
    transform_filters_backward(&expanded, table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gconv::build_transform_index_table;

    #[test]
    fn planar_examples() {
        let f = PlanarStack::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let ones = PlanarFilters::new(1, 1, 2, vec![1.0; 4]).unwrap();
        assert_eq!(planar_correlate(&f, &ones).unwrap().data(), &[10.0]);

        let f = PlanarStack::new(1, 3, 3, vec![1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0]).unwrap();
        let mut c = vec![0.0; 9];
        c[4] = 1.0;
        let centre = PlanarFilters::new(1, 1, 3, c).unwrap();
        let out = planar_correlate(&f, &centre).unwrap();
        assert_eq!(out.data(), &[2.0]);
        assert_eq!(out.origin(), (0, 0));

        let id = PlanarFilters::new(1, 1, 1, vec![1.0]).unwrap();
        assert_eq!(planar_correlate(&f, &id).unwrap(), f);

        let two = PlanarFilters::new(1, 2, 1, vec![1.0, 1.0]).unwrap();
        assert!(matches!(planar_correlate(&f, &two), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn z2_fast_is_planar() {
        let data: Vec<f64> = (0..2 * 5 * 6).map(|x| ((x * 7) % 11) as f64).collect();
        let f = PlanarStack::new(2, 5, 6, data).unwrap();
        let w: Vec<f64> = (0..3 * 2 * 9).map(|x| ((x * 5) % 7) as f64 - 3.0).collect();
        let bank = GFilterBank::new(GroupId::Z2, LayerKind::FirstLayer, 3, 2, 3, w.clone()).unwrap();
        let table = build_transform_index_table(GroupId::Z2, 1, 3).unwrap();
        let fast = gcorr_fast(&f, &bank, &table).unwrap().into_planar().unwrap();
        let planar = planar_correlate(&f, &PlanarFilters::new(3, 2, 3, w).unwrap()).unwrap();
        assert_eq!(fast, planar);
    }

    #[test]
    fn zero_gradient_in_zero_gradient_out() {
        let table = build_transform_index_table(GroupId::P4, 4, 3).unwrap();
        let bank = GFilterBank::new(GroupId::P4, LayerKind::Full, 2, 1, 3, vec![1.5; 2 * 4 * 9]).unwrap();
        let f = GStack::new(GroupId::P4, 1, 5, 5, vec![0.5; 4 * 25]).unwrap();
        let out = gcorr_fast(&f, &bank, &table).unwrap();
        let g = out.like(vec![0.0; out.data().len()]).unwrap();
        let gi = gcorr_backward_input(&g, &bank, &table).unwrap();
        assert_eq!(gi.height(), 5);
        assert_eq!(gi.origin(), f.origin());
        assert!(gi.data().iter().all(|&x| x == 0.0));
        let gf = gcorr_backward_filter(&g, &f, &table).unwrap();
        assert_eq!(gf.shape(), bank.shape());
        assert!(gf.data().iter().all(|&x| x == 0.0));
    }
}
