//! Reference G-correlation by direct summation over the group.
//!
//! These routines evaluate the defining sums with group arithmetic only
//! (no index tables, no reshaping) and serve as the oracle for the fast path.

use crate::error::{Error, Result};
use crate::gconv::filters::{GFilterBank, LayerKind};
use crate::gfunc::{index_to_group, GStack, PlanarStack};
use crate::group::{compose, stabilizer_elements, GroupElement, GroupId};
use crate::real::Real;

/// Output window: `height × width` cells with the given array origin.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub height: usize,
    pub width: usize,
    pub origin: (i64, i64),
}

impl Window {
    fn coord(&self, i: usize, j: usize) -> (i64, i64) {
        (j as i64 - self.origin.1, i as i64 - self.origin.0)
    }
}

fn valid_window(height: usize, width: usize, origin: (i64, i64), n: usize) -> Result<Window> {
    if n > height || n > width {
        return Err(Error::shape(format!(
            "{n}x{n} filter does not fit a {height}x{width} input"
        )));
    }
    let c = (n as i64 - 1) / 2;
    Ok(Window {
        height: height - n + 1,
        width: width - n + 1,
        origin: (origin.0 - c, origin.1 - c),
    })
}

/// `[f ⋆ ψ](g) = Σ_y Σ_k f_k(y) ψ_k(g⁻¹y)` for planar `f` and planar filters,
/// evaluated at every `g = t·s` with `t` in `window`. Computed as
/// `Σ_z Σ_k f_k(g z) ψ_k(z)` over the filter support.
pub fn gcorr_planar_direct_window<T: Real>(
    f: &PlanarStack<T>,
    filters: &[PlanarStack<T>],
    group: GroupId,
    window: Window,
) -> Result<GStack<T>> {
    let stab = stabilizer_elements(group);
    let s_count = stab.len();
    let mut out = GStack::with_origin(
        group,
        filters.len(),
        window.height,
        window.width,
        window.origin.0,
        window.origin.1,
        vec![T::zero(); filters.len() * s_count * window.height * window.width],
    )?;
    for (o, psi) in filters.iter().enumerate() {
        if psi.channels() != f.channels() {
            return Err(Error::shape("filter and input channel counts differ"));
        }
        let taps: Vec<(usize, (i64, i64), T)> = (0..psi.channels())
            .flat_map(|k| {
                (0..psi.height()).flat_map(move |a| {
                    (0..psi.width()).map(move |b| (k, psi.coord(a, b), psi.get(k, a, b)))
                })
            })
            .filter(|&(_, _, w)| w != T::zero())
            .collect();
        for (s, s_el) in stab.iter().enumerate() {
            for i in 0..window.height {
                for j in 0..window.width {
                    let (u, v) = window.coord(i, j);
                    let g = GroupElement::translation(group, u, v).compose(s_el)?;
                    let mut acc = T::zero();
                    for &(k, z, w) in &taps {
                        acc += f.at(k, g.act(z)) * w;
                    }
                    out.set(o, s, i, j, acc);
                }
            }
        }
    }
    Ok(out)
}

/// `[f ⋆ ψ](g) = Σ_h Σ_k f_k(h) ψ_k(g⁻¹h)` for `f` and filters on G, evaluated at
/// every `g` of `window`. Computed as `Σ_h' Σ_k f_k(g h') ψ_k(h')` over the
/// filter support.
pub fn gcorr_direct_window<T: Real>(
    f: &GStack<T>,
    filters: &[GStack<T>],
    window: Window,
) -> Result<GStack<T>> {
    let group = f.group();
    let stab = stabilizer_elements(group);
    let mut out = GStack::with_origin(
        group,
        filters.len(),
        window.height,
        window.width,
        window.origin.0,
        window.origin.1,
        vec![T::zero(); filters.len() * stab.len() * window.height * window.width],
    )?;
    for (o, psi) in filters.iter().enumerate() {
        if psi.group() != group {
            return Err(Error::mismatch(group, psi.group()));
        }
        if psi.channels() != f.channels() {
            return Err(Error::shape("filter and input channel counts differ"));
        }
        let mut taps: Vec<(usize, GroupElement, T)> = Vec::new();
        for k in 0..psi.channels() {
            for s in 0..psi.stabilizer_size() {
                for a in 0..psi.height() {
                    for b in 0..psi.width() {
                        let w = psi.get(k, s, a, b);
                        if w != T::zero() {
                            taps.push((k, index_to_group(psi, s, a, b)?, w));
                        }
                    }
                }
            }
        }
        for (s, s_el) in stab.iter().enumerate() {
            for i in 0..window.height {
                for j in 0..window.width {
                    let (u, v) = window.coord(i, j);
                    let g = GroupElement::translation(group, u, v).compose(s_el)?;
                    let mut acc = T::zero();
                    for (k, h, w) in &taps {
                        acc += f.at(*k, &compose(&g, h)?) * *w;
                    }
                    out.set(o, s, i, j, acc);
                }
            }
        }
    }
    Ok(out)
}

/// First-layer G-correlation of a planar input over the valid window.
pub fn gcorr_first_layer_direct<T: Real>(
    f: &PlanarStack<T>,
    bank: &GFilterBank<T>,
) -> Result<GStack<T>> {
    if bank.kind() != LayerKind::FirstLayer {
        return Err(Error::shape("expected a first-layer filter bank"));
    }
    if f.channels() != bank.in_channels() {
        return Err(Error::shape(format!(
            "input has {} channels, filters expect {}",
            f.channels(),
            bank.in_channels()
        )));
    }
    let window = valid_window(f.height(), f.width(), f.origin(), bank.size())?;
    let filters = (0..bank.out_channels())
        .map(|o| bank.planar_filter(o))
        .collect::<Result<Vec<_>>>()?;
    gcorr_planar_direct_window(f, &filters, bank.group(), window)
}

/// Full G-correlation of a function on G over the valid window.
pub fn gcorr_full_direct<T: Real>(f: &GStack<T>, bank: &GFilterBank<T>) -> Result<GStack<T>> {
    if f.group() != bank.group() {
        return Err(Error::mismatch(bank.group(), f.group()));
    }
    if bank.group() == GroupId::Z2 {
        let planar = f.clone().into_planar()?;
        return gcorr_first_layer_direct(&planar, bank);
    }
    if bank.kind() != LayerKind::Full {
        return Err(Error::shape("expected a full filter bank"));
    }
    if f.channels() != bank.in_channels() {
        return Err(Error::shape(format!(
            "input has {} channels, filters expect {}",
            f.channels(),
            bank.in_channels()
        )));
    }
    let window = valid_window(f.height(), f.width(), f.origin(), bank.size())?;
    let filters = (0..bank.out_channels())
        .map(|o| bank.group_filter(o))
        .collect::<Result<Vec<_>>>()?;
    gcorr_direct_window(f, &filters, window)
}
