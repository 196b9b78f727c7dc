//! Feature maps as functions on Z² and on a group G.
//!
//! Array index `(i, j)` holds plane coordinate `(u, v) = (j - origin_col, i - origin_row)`;
//! rows grow downward. A [`GStack`] adds a stabilizer axis: cell `(k, s, i, j)` is the value of
//! channel `k` at the group element `t(u, v) · stabilizer[s]`.
//!
//! Everything outside the stored window reads as zero.

use crate::error::{Error, Result};
use crate::group::{compose, stabilizer_elements, GroupElement, GroupId};
use crate::real::Real;

fn centered(extent: usize) -> i64 {
    (extent as i64 - 1) / 2
}

/// Multi-channel map on Z², shape `K × H × W`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarStack<T> {
    channels: usize,
    height: usize,
    width: usize,
    origin_row: i64,
    origin_col: i64,
    data: Vec<T>,
}

impl<T: Real> PlanarStack<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        Self::with_origin(
            channels,
            height,
            width,
            centered(height),
            centered(width),
            data,
        )
    }

    pub fn with_origin(
        channels: usize,
        height: usize,
        width: usize,
        origin_row: i64,
        origin_col: i64,
        data: Vec<T>,
    ) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::shape("planar stack dimensions must be at least 1"));
        }
        if data.len() != channels * height * width {
            return Err(Error::shape(format!(
                "planar stack {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(PlanarStack {
            channels,
            height,
            width,
            origin_row,
            origin_col,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::new(
            channels,
            height,
            width,
            vec![T::zero(); channels * height * width],
        )
        .expect("valid dimensions")
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn origin(&self) -> (i64, i64) {
        (self.origin_row, self.origin_col)
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

    pub fn get(&self, k: usize, i: usize, j: usize) -> T {
        self.data[(k * self.height + i) * self.width + j]
    }

    pub fn set(&mut self, k: usize, i: usize, j: usize, value: T) {
        self.data[(k * self.height + i) * self.width + j] = value;
    }

    /// Plane coordinate of array cell `(i, j)`.
    pub fn coord(&self, i: usize, j: usize) -> (i64, i64) {
        (j as i64 - self.origin_col, i as i64 - self.origin_row)
    }

    /// Array cell of plane coordinate `(u, v)`, if stored.
    pub fn cell(&self, p: (i64, i64)) -> Option<(usize, usize)> {
        let i = p.1 + self.origin_row;
        let j = p.0 + self.origin_col;
        (i >= 0 && j >= 0 && (i as usize) < self.height && (j as usize) < self.width)
            .then_some((i as usize, j as usize))
    }

    /// Value at plane coordinate `p`, zero outside the window.
    pub fn at(&self, k: usize, p: (i64, i64)) -> T {
        self.cell(p).map_or(T::zero(), |(i, j)| self.get(k, i, j))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// View as a Z² G-stack (one stabilizer slice).
    pub fn into_gstack(self) -> GStack<T> {
        GStack {
            group: GroupId::Z2,
            channels: self.channels,
            height: self.height,
            width: self.width,
            origin_row: self.origin_row,
            origin_col: self.origin_col,
            data: self.data,
        }
    }
}

/// Multi-channel map on G, shape `K × S × H × W`.
#[derive(Clone, Debug, PartialEq)]
pub struct GStack<T> {
    group: GroupId,
    channels: usize,
    height: usize,
    width: usize,
    origin_row: i64,
    origin_col: i64,
    data: Vec<T>,
}

impl<T: Real> GStack<T> {
    pub fn new(
        group: GroupId,
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<T>,
    ) -> Result<Self> {
        Self::with_origin(
            group,
            channels,
            height,
            width,
            centered(height),
            centered(width),
            data,
        )
    }

    pub fn with_origin(
        group: GroupId,
        channels: usize,
        height: usize,
        width: usize,
        origin_row: i64,
        origin_col: i64,
        data: Vec<T>,
    ) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::shape("G-stack dimensions must be at least 1"));
        }
        let s = group.stabilizer_size();
        if data.len() != channels * s * height * width {
            return Err(Error::shape(format!(
                "{group} stack {channels}x{s}x{height}x{width} needs {} values, got {}",
                channels * s * height * width,
                data.len()
            )));
        }
        Ok(GStack {
            group,
            channels,
            height,
            width,
            origin_row,
            origin_col,
            data,
        })
    }

    pub fn zeros(group: GroupId, channels: usize, height: usize, width: usize) -> Self {
        let n = channels * group.stabilizer_size() * height * width;
        Self::new(group, channels, height, width, vec![T::zero(); n]).expect("valid dimensions")
    }

    /// Same shape, group and origin, different values.
    pub fn like(&self, data: Vec<T>) -> Result<Self> {
        Self::with_origin(
            self.group,
            self.channels,
            self.height,
            self.width,
            self.origin_row,
            self.origin_col,
            data,
        )
    }

    pub fn group(&self) -> GroupId {
        self.group
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn stabilizer_size(&self) -> usize {
        self.group.stabilizer_size()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn origin(&self) -> (i64, i64) {
        (self.origin_row, self.origin_col)
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

    /// Number of planar slices, `K · S`.
    pub fn planes(&self) -> usize {
        self.channels * self.stabilizer_size()
    }

    #[inline]
    pub fn offset(&self, k: usize, s: usize, i: usize, j: usize) -> usize {
        ((k * self.stabilizer_size() + s) * self.height + i) * self.width + j
    }

    pub fn get(&self, k: usize, s: usize, i: usize, j: usize) -> T {
        self.data[self.offset(k, s, i, j)]
    }

    pub fn set(&mut self, k: usize, s: usize, i: usize, j: usize, value: T) {
        let o = self.offset(k, s, i, j);
        self.data[o] = value;
    }

    pub fn coord(&self, i: usize, j: usize) -> (i64, i64) {
        (j as i64 - self.origin_col, i as i64 - self.origin_row)
    }

    pub fn cell(&self, p: (i64, i64)) -> Option<(usize, usize)> {
        let i = p.1 + self.origin_row;
        let j = p.0 + self.origin_col;
        (i >= 0 && j >= 0 && (i as usize) < self.height && (j as usize) < self.width)
            .then_some((i as usize, j as usize))
    }

    /// Value of channel `k` at group element `g`, zero outside the window.
    pub fn at(&self, k: usize, g: &GroupElement) -> T {
        group_to_index(self, g).map_or(T::zero(), |(s, i, j)| self.get(k, s, i, j))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Reinterpret a Z² G-stack as a planar stack.
    pub fn into_planar(self) -> Result<PlanarStack<T>> {
        if self.group != GroupId::Z2 {
            return Err(Error::mismatch(GroupId::Z2, self.group));
        }
        Ok(PlanarStack {
            channels: self.channels,
            height: self.height,
            width: self.width,
            origin_row: self.origin_row,
            origin_col: self.origin_col,
            data: self.data,
        })
    }
}

/// The group element stored at index `(s, i, j)`: `t(u, v) · stabilizer[s]`.
pub fn index_to_group<T: Real>(
    stack: &GStack<T>,
    s: usize,
    i: usize,
    j: usize,
) -> Result<GroupElement> {
    if s >= stack.stabilizer_size() || i >= stack.height || j >= stack.width {
        return Err(Error::IndexOutOfRange { s, i, j });
    }
    let (u, v) = stack.coord(i, j);
    let t = GroupElement::translation(stack.group, u, v);
    compose(&t, &stabilizer_elements(stack.group)[s])
}

/// Inverse of [`index_to_group`]; `None` when `g` lies outside the window.
pub fn group_to_index<T: Real>(stack: &GStack<T>, g: &GroupElement) -> Option<(usize, usize, usize)> {
    if g.group() != stack.group {
        return None;
    }
    let (i, j) = stack.cell((g.u(), g.v()))?;
    Some((g.stabilizer_index(), i, j))
}

/// The element `t·s` that applies the stabilizer element `s` about the
/// geometric centre of an `height × width` window instead of the origin.
/// Requires a square window unless `s` is a translation-free identity.
pub fn center_transform(
    s: &GroupElement,
    height: usize,
    width: usize,
    origin: (i64, i64),
) -> Result<GroupElement> {
    if s.u() != 0 || s.v() != 0 {
        return Err(Error::InvalidArgument(
            "center_transform expects a stabilizer element".into(),
        ));
    }
    // twice the centre, in plane coordinates
    let c2 = (width as i64 - 1 - 2 * origin.1, height as i64 - 1 - 2 * origin.0);
    let sc2 = s.act(c2);
    let (du, dv) = (c2.0 - sc2.0, c2.1 - sc2.1);
    if du % 2 != 0 || dv % 2 != 0 {
        return Err(Error::shape(format!(
            "{height}x{width} window has no lattice symmetry {s} about its centre"
        )));
    }
    Ok(GroupElement::translation(s.group(), du / 2, dv / 2)
        .compose(s)
        .expect("same group"))
}

/// `[L_g f](x) = f(g⁻¹x)` on the same window, zero-filled.
pub fn left_transform_planar<T: Real>(g: &GroupElement, f: &PlanarStack<T>) -> PlanarStack<T> {
    let g_inv = g.inverse();
    let mut out = f.clone();
    for i in 0..f.height {
        for j in 0..f.width {
            let src = f.cell(g_inv.act(f.coord(i, j)));
            for k in 0..f.channels {
                let value = src.map_or(T::zero(), |(si, sj)| f.get(k, si, sj));
                out.set(k, i, j, value);
            }
        }
    }
    out
}

/// `[L_g f](h) = f(g⁻¹h)` for a function on G, same window, zero-filled.
pub fn left_transform_g<T: Real>(g: &GroupElement, f: &GStack<T>) -> Result<GStack<T>> {
    if g.group() != f.group {
        return Err(Error::mismatch(f.group, g.group()));
    }
    let g_inv = g.inverse();
    let mut out = f.clone();
    for s in 0..f.stabilizer_size() {
        for i in 0..f.height {
            for j in 0..f.width {
                let h = index_to_group(f, s, i, j)?;
                let src = compose(&g_inv, &h)?;
                let src = group_to_index(f, &src);
                for k in 0..f.channels {
                    let value = src.map_or(T::zero(), |(ss, si, sj)| f.get(k, ss, si, sj));
                    out.set(k, s, i, j, value);
                }
            }
        }
    }
    Ok(out)
}

/// `f*(g) = f(g⁻¹)`. The output keeps the array shape with the origin moved so
/// that it holds exactly the inverses of the input window; fails when that set
/// is not a rectangle of the same shape (e.g. non-square p4 windows).
pub fn involution<T: Real>(f: &GStack<T>) -> Result<GStack<T>> {
    let mut inverses = Vec::with_capacity(f.stabilizer_size() * f.height * f.width);
    let (mut umin, mut umax, mut vmin, mut vmax) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
    for s in 0..f.stabilizer_size() {
        for i in 0..f.height {
            for j in 0..f.width {
                let g = index_to_group(f, s, i, j)?.inverse();
                umin = umin.min(g.u());
                umax = umax.max(g.u());
                vmin = vmin.min(g.v());
                vmax = vmax.max(g.v());
                inverses.push((s, i, j, g));
            }
        }
    }
    if (umax - umin + 1) as usize != f.width || (vmax - vmin + 1) as usize != f.height {
        return Err(Error::shape(
            "inverse of the stored window is not a window of the same shape",
        ));
    }
    let mut out = GStack::with_origin(
        f.group,
        f.channels,
        f.height,
        f.width,
        -vmin,
        -umin,
        vec![T::zero(); f.data.len()],
    )?;
    for (s, i, j, g) in inverses {
        let (os, oi, oj) = group_to_index(&out, &g).expect("inverse lies in the output window");
        for k in 0..f.channels {
            out.set(k, os, oi, oj, f.get(k, s, i, j));
        }
    }
    Ok(out)
}
