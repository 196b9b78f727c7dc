//! Valid-mode multi-channel planar correlation on raw slices.
//!
//! Every forward and backward pass in the crate goes through
//! [`correlate_valid`]: the input gradient correlates the zero-padded output
//! gradient with the point-reflected filters, and the filter gradient
//! correlates each input plane with the output-gradient planes.

use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Dims {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `out[o][i][j] = Σ_c Σ_a Σ_b input[c][i+a][j+b] · filters[o][c][a][b]`.
///
/// `filters` has shape `out_channels × input.channels × fh × fw`; the output has
/// shape `out_channels × (H−fh+1) × (W−fw+1)`. Sums run channel-major, then
/// filter row, then filter column (long rows in fixed interleaved partial
/// sums), so results are reproducible bit for bit.
pub fn correlate_valid<T: Real>(
    input: &[T],
    dims: Dims,
    filters: &[T],
    out_channels: usize,
    fh: usize,
    fw: usize,
) -> Vec<T> {
    assert!(fh <= dims.height && fw <= dims.width, "filter exceeds input");
    assert_eq!(input.len(), dims.len());
    assert_eq!(filters.len(), out_channels * dims.channels * fh * fw);
    let (h, w) = (dims.height, dims.width);
    let (oh, ow) = (h - fh + 1, w - fw + 1);
    let mut out = vec![T::zero(); out_channels * oh * ow];
    let plane = h * w;
    let taps = fh * fw;

    if taps <= oh * ow {
        // small filter: one axpy over each output row per tap
        for (o, out_plane) in out.chunks_exact_mut(oh * ow).enumerate() {
            for c in 0..dims.channels {
                let src = &input[c * plane..(c + 1) * plane];
                let filt = &filters[(o * dims.channels + c) * taps..][..taps];
                for a in 0..fh {
                    for b in 0..fw {
                        let wv = filt[a * fw + b];
                        if wv == T::zero() {
                            continue;
                        }
                        for i in 0..oh {
                            let row = &src[(i + a) * w + b..][..ow];
                            let dst = &mut out_plane[i * ow..][..ow];
                            for (d, &x) in dst.iter_mut().zip(row) {
                                *d += wv * x;
                            }
                        }
                    }
                }
            }
        }
    } else {
        // large filter, small output: dot products along filter rows
        for (o, out_plane) in out.chunks_exact_mut(oh * ow).enumerate() {
            for c in 0..dims.channels {
                let src = &input[c * plane..(c + 1) * plane];
                let filt = &filters[(o * dims.channels + c) * taps..][..taps];
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = T::zero();
                        for a in 0..fh {
                            acc += dot(&src[(i + a) * w + j..][..fw], &filt[a * fw..][..fw]);
                        }
                        out_plane[i * ow + j] += acc;
                    }
                }
            }
        }
    }
    out
}

/// Dot product with eight interleaved partial sums, combined in a fixed order.
fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    let mut lanes = [T::zero(); 8];
    let mut xs = x.chunks_exact(8);
    let mut ys = y.chunks_exact(8);
    for (cx, cy) in (&mut xs).zip(&mut ys) {
        for l in 0..8 {
            lanes[l] += cx[l] * cy[l];
        }
    }
    let mut tail = T::zero();
    for (&a, &b) in xs.remainder().iter().zip(ys.remainder()) {
        tail += a * b;
    }
    let quads = [lanes[0] + lanes[4], lanes[1] + lanes[5], lanes[2] + lanes[6], lanes[3] + lanes[7]];
    (quads[0] + quads[2]) + (quads[1] + quads[3]) + tail
}

/// Gradient of [`correlate_valid`] with respect to its input.
pub fn correlate_valid_backward_input<T: Real>(
    grad_out: &[T],
    out_dims: Dims,
    filters: &[T],
    in_channels: usize,
    fh: usize,
    fw: usize,
) -> Vec<T> {
    let (oh, ow) = (out_dims.height, out_dims.width);
    let k_out = out_dims.channels;
    assert_eq!(grad_out.len(), out_dims.len());
    assert_eq!(filters.len(), k_out * in_channels * fh * fw);

    let (ph, pw) = (oh + 2 * (fh - 1), ow + 2 * (fw - 1));
    let mut padded = vec![T::zero(); k_out * ph * pw];
    for o in 0..k_out {
        for i in 0..oh {
            let src = &grad_out[(o * oh + i) * ow..][..ow];
            padded[(o * ph + i + fh - 1) * pw + fw - 1..][..ow].copy_from_slice(src);
        }
    }
    // reflected filters with input/output channels swapped
    let taps = fh * fw;
    let mut reflected = vec![T::zero(); filters.len()];
    for o in 0..k_out {
        for c in 0..in_channels {
            let src = &filters[(o * in_channels + c) * taps..][..taps];
            let dst = &mut reflected[(c * k_out + o) * taps..][..taps];
            for (t, d) in dst.iter_mut().enumerate() {
                *d = src[taps - 1 - t];
            }
        }
    }
    correlate_valid(&padded, Dims::new(k_out, ph, pw), &reflected, in_channels, fh, fw)
}

/// Gradient of [`correlate_valid`] with respect to its filters, shape
/// `grad_out.channels × input.channels × fh × fw`.
pub fn correlate_valid_backward_filter<T: Real>(
    input: &[T],
    dims: Dims,
    grad_out: &[T],
    out_dims: Dims,
) -> Vec<T> {
    let fh = dims.height + 1 - out_dims.height;
    let fw = dims.width + 1 - out_dims.width;
    let taps = fh * fw;
    let plane = dims.height * dims.width;
    let k_out = out_dims.channels;
    let mut grad = vec![T::zero(); k_out * dims.channels * taps];
    for c in 0..dims.channels {
        let per_out = correlate_valid(
            &input[c * plane..(c + 1) * plane],
            Dims::new(1, dims.height, dims.width),
            grad_out,
            k_out,
            out_dims.height,
            out_dims.width,
        );
        for o in 0..k_out {
            grad[(o * dims.channels + c) * taps..][..taps]
                .copy_from_slice(&per_out[o * taps..][..taps]);
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(input: &[f64], d: Dims, f: &[f64], k_out: usize, fh: usize, fw: usize) -> Vec<f64> {
        let (oh, ow) = (d.height - fh + 1, d.width - fw + 1);
        let mut out = vec![0.0; k_out * oh * ow];
        for o in 0..k_out {
            for i in 0..oh {
                for j in 0..ow {
                    let mut s = 0.0;
                    for c in 0..d.channels {
                        for a in 0..fh {
                            for b in 0..fw {
                                s += input[(c * d.height + i + a) * d.width + j + b]
                                    * f[((o * d.channels + c) * fh + a) * fw + b];
                            }
                        }
                    }
                    out[(o * oh + i) * ow + j] = s;
                }
            }
        }
        out
    }

    fn ramp(n: usize, seed: u64) -> Vec<f64> {
        (0..n)
            .map(|x| (((x as u64 * 2654435761 + seed) % 17) as f64) - 8.0)
            .collect()
    }

    #[test]
    fn both_loop_orders_match_naive() {
        let d = Dims::new(3, 7, 6);
        let x = ramp(d.len(), 3);
        for &(fh, fw) in &[(1, 1), (3, 3), (2, 4), (6, 5), (7, 6)] {
            let f = ramp(2 * 3 * fh * fw, 11);
            assert_eq!(correlate_valid(&x, d, &f, 2, fh, fw), naive(&x, d, &f, 2, fh, fw));
        }
    }

    #[test]
    fn sum_of_entries() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let out = correlate_valid(&x, Dims::new(1, 2, 2), &[1.0; 4], 1, 2, 2);
        assert_eq!(out, vec![10.0]);
    }

    #[test]
    fn backward_kernels_are_adjoint() {
        let d = Dims::new(2, 6, 5);
        let (fh, fw, k_out) = (3, 2, 3);
        let od = Dims::new(k_out, d.height - fh + 1, d.width - fw + 1);
        let x = ramp(d.len(), 1);
        let f = ramp(k_out * 2 * fh * fw, 5);
        let y = ramp(od.len(), 9);
        let fwd = correlate_valid(&x, d, &f, k_out, fh, fw);
        let lhs: f64 = fwd.iter().zip(&y).map(|(a, b)| a * b).sum();
        let gx = correlate_valid_backward_input(&y, od, &f, 2, fh, fw);
        let gf = correlate_valid_backward_filter(&x, d, &y, od);
        let rx: f64 = gx.iter().zip(&x).map(|(a, b)| a * b).sum();
        let rf: f64 = gf.iter().zip(&f).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rx);
        assert_eq!(lhs, rf);
    }
}
