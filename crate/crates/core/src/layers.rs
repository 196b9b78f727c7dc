//! Equivariant layers other than convolution, each with its backward pass.

use rand::Rng;

use crate::error::{Error, Result};
use crate::gfunc::{group_to_index, index_to_group, GStack, PlanarStack};
use crate::group::{compose, GroupElement, GroupId};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

const NONE: u32 = u32::MAX;

fn same_shape<T: Real>(a: &GStack<T>, b: &GStack<T>) -> bool {
    a.group() == b.group()
        && a.channels() == b.channels()
        && a.height() == b.height()
        && a.width() == b.width()
}

fn plane_len<T: Real>(f: &GStack<T>) -> usize {
    f.height() * f.width()
}

/// One bias per G-feature map.
pub fn add_bias<T: Real>(f: &GStack<T>, bias: &[T]) -> Result<GStack<T>> {
    if bias.len() != f.channels() {
        return Err(Error::shape(format!(
            "{} biases for {} channels",
            bias.len(),
            f.channels()
        )));
    }
    let per_channel = f.stabilizer_size() * plane_len(f);
    let mut out = f.clone();
    for (chunk, &b) in out.data_mut().chunks_exact_mut(per_channel).zip(bias) {
        chunk.iter_mut().for_each(|x| *x += b);
    }
    Ok(out)
}

/// Bias gradient: the output gradient summed over each G-feature map.
pub fn add_bias_backward<T: Real>(grad: &GStack<T>) -> Vec<T> {
    let per_channel = grad.stabilizer_size() * plane_len(grad);
    grad.data()
        .chunks_exact(per_channel)
        .map(|c| c.iter().copied().sum())
        .collect()
}

/// Exponential moving averages used by batch norm in eval mode.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub momentum: f64,
}

impl<T: Real> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            momentum: 0.1,
        }
    }
}

/// What batch-norm backward needs from the forward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    normalized: Vec<Vec<T>>,
    inv_std: Vec<T>,
    mode: Mode,
}

/// Batch normalisation with one scale and one shift per G-feature map:
/// statistics pool over batch, stabilizer and space.
pub fn batch_norm_g<T: Real>(
    batch: &[GStack<T>],
    gamma: &[T],
    beta: &[T],
    eps: f64,
    mode: Mode,
    running: &mut RunningStats<T>,
) -> Result<(Vec<GStack<T>>, BatchNormCache<T>)> {
    let first = batch
        .first()
        .ok_or_else(|| Error::shape("batch norm needs a non-empty batch"))?;
    let channels = first.channels();
    if batch.iter().any(|f| !same_shape(f, first)) {
        return Err(Error::shape("batch items differ in shape"));
    }
    if gamma.len() != channels || beta.len() != channels || running.mean.len() != channels {
        return Err(Error::shape("batch norm parameters do not match channels"));
    }
    if eps <= 0.0 {
        return Err(Error::InvalidArgument("batch norm epsilon must be positive".into()));
    }
    let per_channel = first.stabilizer_size() * plane_len(first);
    let count = (per_channel * batch.len()) as f64;

    let (mean, var): (Vec<T>, Vec<T>) = match mode {
        Mode::Train => {
            let mut mean = vec![0.0f64; channels];
            let mut var = vec![0.0f64; channels];
            for f in batch {
                for (k, chunk) in f.data().chunks_exact(per_channel).enumerate() {
                    mean[k] += chunk.iter().map(|x| x.as_f64()).sum::<f64>();
                }
            }
            mean.iter_mut().for_each(|m| *m /= count);
            for f in batch {
                for (k, chunk) in f.data().chunks_exact(per_channel).enumerate() {
                    var[k] += chunk
                        .iter()
                        .map(|x| (x.as_f64() - mean[k]).powi(2))
                        .sum::<f64>();
                }
            }
            var.iter_mut().for_each(|v| *v /= count);
            let mom = running.momentum;
            for k in 0..channels {
                let unbiased = if count > 1.0 { var[k] * count / (count - 1.0) } else { var[k] };
                running.mean[k] = T::of((1.0 - mom) * running.mean[k].as_f64() + mom * mean[k]);
                running.var[k] = T::of((1.0 - mom) * running.var[k].as_f64() + mom * unbiased);
            }
            (
                mean.into_iter().map(T::of).collect(),
                var.into_iter().map(T::of).collect(),
            )
        }
        Mode::Eval => (running.mean.clone(), running.var.clone()),
    };
    let inv_std: Vec<T> = var
        .iter()
        .map(|v| T::one() / (*v + T::of(eps)).sqrt())
        .collect();

    let mut outs = Vec::with_capacity(batch.len());
    let mut normalized = Vec::with_capacity(batch.len());
    for f in batch {
        let mut xhat = f.data().to_vec();
        for (k, chunk) in xhat.chunks_exact_mut(per_channel).enumerate() {
            chunk
                .iter_mut()
                .for_each(|x| *x = (*x - mean[k]) * inv_std[k]);
        }
        let mut y = xhat.clone();
        for (k, chunk) in y.chunks_exact_mut(per_channel).enumerate() {
            chunk.iter_mut().for_each(|x| *x = gamma[k] * *x + beta[k]);
        }
        outs.push(f.like(y)?);
        normalized.push(xhat);
    }
    Ok((
        outs,
        BatchNormCache {
            normalized,
            inv_std,
            mode,
        },
    ))
}

/// Returns `(∂L/∂x per item, ∂L/∂γ, ∂L/∂β)`.
pub fn batch_norm_g_backward<T: Real>(
    grads: &[GStack<T>],
    gamma: &[T],
    cache: &BatchNormCache<T>,
) -> Result<(Vec<GStack<T>>, Vec<T>, Vec<T>)> {
    let first = grads
        .first()
        .ok_or_else(|| Error::shape("empty gradient batch"))?;
    if grads.len() != cache.normalized.len() {
        return Err(Error::shape("gradient batch does not match the forward batch"));
    }
    let channels = first.channels();
    let per_channel = first.stabilizer_size() * plane_len(first);
    let count = T::of((per_channel * grads.len()) as f64);

    let mut dgamma = vec![T::zero(); channels];
    let mut dbeta = vec![T::zero(); channels];
    for (g, xhat) in grads.iter().zip(&cache.normalized) {
        for (k, (gc, xc)) in g
            .data()
            .chunks_exact(per_channel)
            .zip(xhat.chunks_exact(per_channel))
            .enumerate()
        {
            for (&dy, &x) in gc.iter().zip(xc) {
                dbeta[k] += dy;
                dgamma[k] += dy * x;
            }
        }
    }
    let mut dxs = Vec::with_capacity(grads.len());
    for (g, xhat) in grads.iter().zip(&cache.normalized) {
        let mut dx = g.data().to_vec();
        for (k, (dc, xc)) in dx
            .chunks_exact_mut(per_channel)
            .zip(xhat.chunks_exact(per_channel))
            .enumerate()
        {
            let scale = gamma[k] * cache.inv_std[k];
            match cache.mode {
                Mode::Train => {
                    for (d, &x) in dc.iter_mut().zip(xc) {
                        *d = scale * (*d - dbeta[k] / count - x * dgamma[k] / count);
                    }
                }
                Mode::Eval => dc.iter_mut().for_each(|d| *d *= scale),
            }
        }
        dxs.push(g.like(dx)?);
    }
    Ok((dxs, dgamma, dbeta))
}

pub fn relu<T: Real>(f: &GStack<T>) -> GStack<T> {
    let mut out = f.clone();
    out.data_mut()
        .iter_mut()
        .for_each(|x| *x = x.max(T::zero()));
    out
}

/// Gates the gradient by `x > 0`; the subgradient at 0 is 0.
pub fn relu_backward<T: Real>(input: &GStack<T>, grad: &GStack<T>) -> Result<GStack<T>> {
    if !same_shape(input, grad) {
        return Err(Error::shape("relu gradient shape differs from input"));
    }
    let data = input
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    grad.like(data)
}

/// Subgroup used for subsampling: translations by multiples of `stride`,
/// with or without the stabilizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Subgroup {
    pub stride: usize,
    pub rotations: bool,
}

impl Default for Subgroup {
    fn default() -> Self {
        Subgroup {
            stride: 1,
            rotations: true,
        }
    }
}

/// Pooling domain `U` around the identity plus the subsampling subgroup.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolSpec {
    domain: Vec<GroupElement>,
    subgroup: Subgroup,
}

impl PoolSpec {
    pub fn new(domain: Vec<GroupElement>, subgroup: Subgroup) -> Result<Self> {
        let first = domain.first().ok_or(Error::EmptyDomain)?;
        if domain.iter().any(|u| u.group() != first.group()) {
            return Err(Error::GroupMismatch("pooling domain mixes groups".into()));
        }
        if subgroup.stride == 0 {
            return Err(Error::InvalidArgument("stride must be at least 1".into()));
        }
        Ok(PoolSpec { domain, subgroup })
    }

    /// A pooling domain that is itself a subgroup, for coset pooling.
    pub fn coset(domain: Vec<GroupElement>) -> Result<Self> {
        let spec = Self::new(domain, Subgroup::default())?;
        for a in &spec.domain {
            if !spec.domain.contains(&a.inverse()) {
                return Err(Error::InvalidArgument(format!(
                    "coset domain is not closed under inverse ({a})"
                )));
            }
            for b in &spec.domain {
                if !spec.domain.contains(&compose(a, b)?) {
                    return Err(Error::InvalidArgument(format!(
                        "coset domain is not closed under composition ({a} ∘ {b})"
                    )));
                }
            }
        }
        Ok(spec)
    }

    /// `size × size` block of translations anchored at the identity.
    pub fn square(group: GroupId, size: usize, stride: usize) -> Result<Self> {
        let domain = (0..size as i64)
            .flat_map(|v| (0..size as i64).map(move |u| GroupElement::translation(group, u, v)))
            .collect();
        Self::new(
            domain,
            Subgroup {
                stride,
                rotations: true,
            },
        )
    }

    pub fn domain(&self) -> &[GroupElement] {
        &self.domain
    }

    pub fn subgroup(&self) -> Subgroup {
        self.subgroup
    }
}

/// Output of a max pooling step: values plus the input offset each came from.
#[derive(Clone, Debug)]
pub struct Pooled<S> {
    pub output: S,
    pub argmax: Vec<u32>,
    pub input_len: usize,
}

/// Scatter each output gradient to its argmax; cells without a source get nothing.
pub fn max_pool_backward<T: Real>(grad: &[T], argmax: &[u32], input_len: usize) -> Vec<T> {
    let mut out = vec![T::zero(); input_len];
    for (&g, &src) in grad.iter().zip(argmax) {
        if src != NONE {
            out[src as usize] += g;
        }
    }
    out
}

/// `P f(g) = max_{u ∈ U} f(g·u)`, reads outside the window excluded. Ties go to
/// the first maximum in `U`'s order. Cells whose whole window lies outside
/// hold 0 and pass no gradient.
pub fn pool_nonstrided<T: Real>(f: &GStack<T>, spec: &PoolSpec) -> Result<Pooled<GStack<T>>> {
    if spec.domain[0].group() != f.group() {
        return Err(Error::mismatch(f.group(), spec.domain[0].group()));
    }
    let s_count = f.stabilizer_size();
    let plane = plane_len(f);
    let mut out = f.like(vec![T::zero(); f.data().len()])?;
    let mut argmax = vec![NONE; f.data().len()];
    let mut sources = Vec::with_capacity(spec.domain.len());
    for s in 0..s_count {
        for i in 0..f.height() {
            for j in 0..f.width() {
                let g = index_to_group(f, s, i, j)?;
                sources.clear();
                for u in &spec.domain {
                    let gu = compose(&g, u)?;
                    if let Some((ss, si, sj)) = group_to_index(f, &gu) {
                        sources.push((ss * f.height() + si) * f.width() + sj);
                    }
                }
                for k in 0..f.channels() {
                    let base = k * s_count * plane;
                    let mut best: Option<(T, usize)> = None;
                    for &src in &sources {
                        let x = f.data()[base + src];
                        if best.is_none_or(|(b, _)| x > b) {
                            best = Some((x, base + src));
                        }
                    }
                    if let Some((x, src)) = best {
                        let o = f.offset(k, s, i, j);
                        out.data_mut()[o] = x;
                        argmax[o] = src as u32;
                    }
                }
            }
        }
    }
    Ok(Pooled {
        output: out,
        argmax,
        input_len: f.data().len(),
    })
}

/// Keep cells whose translation coordinates are multiples of the stride
/// (origin-anchored); coordinates of the result are divided by the stride.
/// Without `rotations` only the identity slice survives and the result is a
/// Z² stack.
pub fn subsample_subgroup<T: Real>(f: &GStack<T>, subgroup: Subgroup) -> Result<GStack<T>> {
    let (rows, cols) = subsample_axes(f, subgroup.stride)?;
    let (group, slices) = if subgroup.rotations {
        (f.group(), f.stabilizer_size())
    } else {
        (GroupId::Z2, 1)
    };
    let st = subgroup.stride as i64;
    let mut data = Vec::with_capacity(f.channels() * slices * rows.len() * cols.len());
    for k in 0..f.channels() {
        for s in 0..slices {
            for &i in &rows {
                for &j in &cols {
                    data.push(f.get(k, s, i, j));
                }
            }
        }
    }
    let first_u = f.coord(0, cols[0]).0;
    let first_v = f.coord(rows[0], 0).1;
    GStack::with_origin(
        group,
        f.channels(),
        rows.len(),
        cols.len(),
        -(first_v / st),
        -(first_u / st),
        data,
    )
}

pub fn subsample_subgroup_backward<T: Real>(
    grad: &GStack<T>,
    input: &GStack<T>,
    subgroup: Subgroup,
) -> Result<GStack<T>> {
    let (rows, cols) = subsample_axes(input, subgroup.stride)?;
    let slices = if subgroup.rotations {
        input.stabilizer_size()
    } else {
        1
    };
    let mut out = input.like(vec![T::zero(); input.data().len()])?;
    let mut it = grad.data().iter();
    for k in 0..input.channels() {
        for s in 0..slices {
            for &i in &rows {
                for &j in &cols {
                    out.set(k, s, i, j, *it.next().ok_or_else(|| Error::shape("gradient too short"))?);
                }
            }
        }
    }
    Ok(out)
}

fn subsample_axes<T: Real>(f: &GStack<T>, stride: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    let st = stride as i64;
    let rows: Vec<usize> = (0..f.height())
        .filter(|&i| f.coord(i, 0).1.rem_euclid(st) == 0)
        .collect();
    let cols: Vec<usize> = (0..f.width())
        .filter(|&j| f.coord(0, j).0.rem_euclid(st) == 0)
        .collect();
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::shape("subsampling leaves no cells"));
    }
    Ok((rows, cols))
}

/// Max over the stabilizer axis at each position: a function on G/stabilizer ≅ Z².
pub fn coset_pool_stabilizer<T: Real>(f: &GStack<T>) -> Result<Pooled<PlanarStack<T>>> {
    if f.group() == GroupId::Z2 {
        return Err(Error::GroupMismatch(
            "coset pooling over the stabilizer needs p4 or p4m".into(),
        ));
    }
    let s_count = f.stabilizer_size();
    let plane = plane_len(f);
    let mut data = Vec::with_capacity(f.channels() * plane);
    let mut argmax = Vec::with_capacity(f.channels() * plane);
    for k in 0..f.channels() {
        for p in 0..plane {
            let mut best = (f.data()[k * s_count * plane + p], k * s_count * plane + p);
            for s in 1..s_count {
                let idx = (k * s_count + s) * plane + p;
                if f.data()[idx] > best.0 {
                    best = (f.data()[idx], idx);
                }
            }
            data.push(best.0);
            argmax.push(best.1 as u32);
        }
    }
    let (r, c) = f.origin();
    Ok(Pooled {
        output: PlanarStack::with_origin(f.channels(), f.height(), f.width(), r, c, data)?,
        argmax,
        input_len: f.data().len(),
    })
}

/// Standard `size × size` block max pooling with `stride`, applied to every
/// planar slice independently; blocks are anchored at array index 0 and the
/// result has the centred origin. Commutes with the 90° rotations of the
/// window about its centre whenever the blocks tile it.
pub fn spatial_max_pool<T: Real>(f: &GStack<T>, size: usize, stride: usize) -> Result<Pooled<GStack<T>>> {
    if size == 0 || stride == 0 || size > f.height() || size > f.width() {
        return Err(Error::shape(format!(
            "{size}x{size} pooling (stride {stride}) does not fit {}x{}",
            f.height(),
            f.width()
        )));
    }
    let oh = (f.height() - size) / stride + 1;
    let ow = (f.width() - size) / stride + 1;
    let (h, w) = (f.height(), f.width());
    let mut data = Vec::with_capacity(f.planes() * oh * ow);
    let mut argmax = Vec::with_capacity(f.planes() * oh * ow);
    for p in 0..f.planes() {
        let plane = &f.data()[p * h * w..(p + 1) * h * w];
        for oi in 0..oh {
            for oj in 0..ow {
                let (i0, j0) = (oi * stride, oj * stride);
                let mut best = (plane[i0 * w + j0], i0 * w + j0);
                for a in 0..size {
                    for b in 0..size {
                        let idx = (i0 + a) * w + j0 + b;
                        if plane[idx] > best.0 {
                            best = (plane[idx], idx);
                        }
                    }
                }
                data.push(best.0);
                argmax.push((p * h * w + best.1) as u32);
            }
        }
    }
    Ok(Pooled {
        output: GStack::new(f.group(), f.channels(), oh, ow, data)?,
        argmax,
        input_len: f.data().len(),
    })
}

/// Grow the window by `p` zero cells on every side; plane coordinates are kept.
pub fn zero_pad<T: Real>(f: &GStack<T>, p: usize) -> GStack<T> {
    let (h, w) = (f.height() + 2 * p, f.width() + 2 * p);
    let mut data = vec![T::zero(); f.planes() * h * w];
    for plane in 0..f.planes() {
        for i in 0..f.height() {
            let src = &f.data()[(plane * f.height() + i) * f.width()..][..f.width()];
            data[(plane * h + i + p) * w + p..][..f.width()].copy_from_slice(src);
        }
    }
    let (r, c) = f.origin();
    GStack::with_origin(f.group(), f.channels(), h, w, r + p as i64, c + p as i64, data)
        .expect("consistent padded shape")
}

pub fn zero_pad_planar<T: Real>(f: &PlanarStack<T>, p: usize) -> PlanarStack<T> {
    zero_pad(&f.clone().into_gstack(), p)
        .into_planar()
        .expect("Z² stack")
}

/// Adjoint of [`zero_pad`]: crop the border.
pub fn zero_pad_backward<T: Real>(grad: &GStack<T>, p: usize) -> Result<GStack<T>> {
    if grad.height() <= 2 * p || grad.width() <= 2 * p {
        return Err(Error::shape("gradient smaller than the padding"));
    }
    let (h, w) = (grad.height() - 2 * p, grad.width() - 2 * p);
    let mut data = Vec::with_capacity(grad.planes() * h * w);
    for plane in 0..grad.planes() {
        for i in 0..h {
            data.extend_from_slice(&grad.data()[(plane * grad.height() + i + p) * grad.width() + p..][..w]);
        }
    }
    let (r, c) = grad.origin();
    GStack::with_origin(grad.group(), grad.channels(), h, w, r - p as i64, c - p as i64, data)
}

pub fn residual_add<T: Real>(a: &GStack<T>, b: &GStack<T>) -> Result<GStack<T>> {
    if !same_shape(a, b) || a.origin() != b.origin() {
        return Err(Error::shape("residual branches differ in shape"));
    }
    a.like(a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect())
}

/// Inverted dropout. Returns the output and, in train mode, the per-cell
/// multiplier (0 or `1/(1−p)`) needed by the backward pass.
pub fn dropout<T: Real, R: Rng>(
    f: &GStack<T>,
    p_drop: f64,
    rng: &mut R,
    mode: Mode,
) -> Result<(GStack<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&p_drop) {
        return Err(Error::InvalidArgument(format!(
            "dropout probability must lie in [0, 1), got {p_drop}"
        )));
    }
    if mode == Mode::Eval || p_drop == 0.0 {
        return Ok((f.clone(), None));
    }
    let keep = T::of(1.0 / (1.0 - p_drop));
    let mask: Vec<T> = (0..f.data().len())
        .map(|_| if rng.random::<f64>() < p_drop { T::zero() } else { keep })
        .collect();
    let out = f.like(f.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect())?;
    Ok((out, Some(mask)))
}

pub fn dropout_backward<T: Real>(grad: &GStack<T>, mask: Option<&[T]>) -> Result<GStack<T>> {
    match mask {
        None => Ok(grad.clone()),
        Some(m) => grad.like(grad.data().iter().zip(m).map(|(&g, &k)| g * k).collect()),
    }
}
