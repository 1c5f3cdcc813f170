//! Slice-level numeric kernels shared by tensor methods and graph ops.

use crate::Float;

/// Row-major contiguous strides for `shape`.
pub fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![0; shape.len()];
    let mut acc = 1;
    for (s, &d) in strides.iter_mut().zip(shape).rev() {
        *s = acc;
        acc *= d;
    }
    strides
}

/// Strides of `shape` viewed as broadcast to `out` (right aligned). Broadcast
/// axes get stride zero.
pub(crate) fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let own = contiguous_strides(shape);
    let offset = out.len() - shape.len();
    (0..out.len())
        .map(|i| {
            if i < offset {
                0
            } else {
                let j = i - offset;
                if shape[j] == 1 && out[i] != 1 {
                    0
                } else {
                    own[j]
                }
            }
        })
        .collect()
}

/// Drops unit axes and merges neighbouring axes that stay contiguous for
/// every stride set. Keeps at least one axis.
pub(crate) fn collapse(dims: &[usize], strides: &[Vec<usize>]) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut out_dims: Vec<usize> = Vec::with_capacity(dims.len());
    let mut out_strides: Vec<Vec<usize>> = vec![Vec::with_capacity(dims.len()); strides.len()];
    for (i, &d) in dims.iter().enumerate() {
        if d == 1 {
            continue;
        }
        if let Some(&last) = out_dims.last() {
            let mergeable = strides
                .iter()
                .zip(&out_strides)
                .all(|(s, os)| *os.last().unwrap() == s[i] * d);
            if mergeable {
                let n = out_dims.len() - 1;
                out_dims[n] = last * d;
                for (s, os) in strides.iter().zip(out_strides.iter_mut()) {
                    let m = os.len() - 1;
                    os[m] = s[i];
                }
                continue;
            }
        }
        out_dims.push(d);
        for (s, os) in strides.iter().zip(out_strides.iter_mut()) {
            os.push(s[i]);
        }
    }
    if out_dims.is_empty() {
        out_dims.push(1);
        for os in out_strides.iter_mut() {
            os.push(0);
        }
    }
    (out_dims, out_strides)
}

/// Visits every element of an iteration space of `dims`, passing the running
/// linear position plus one offset per stride set.
#[inline]
pub(crate) fn for_each_offset2<F: FnMut(usize, usize, usize)>(dims: &[usize], sa: &[usize], sb: &[usize], mut f: F) {
    let rank = dims.len();
    let inner = dims[rank - 1];
    let (ia, ib) = (sa[rank - 1], sb[rank - 1]);
    let outer: usize = dims[..rank - 1].iter().product();
    let mut idx = vec![0usize; rank.saturating_sub(1)];
    let (mut oa, mut ob) = (0usize, 0usize);
    let mut pos = 0usize;
    for _ in 0..outer {
        let (mut a, mut b) = (oa, ob);
        for _ in 0..inner {
            f(pos, a, b);
            pos += 1;
            a += ia;
            b += ib;
        }
        // odometer increment over the outer axes
        let mut ax = rank - 1;
        while ax > 0 {
            ax -= 1;
            idx[ax] += 1;
            oa += sa[ax];
            ob += sb[ax];
            if idx[ax] < dims[ax] {
                break;
            }
            oa -= sa[ax] * dims[ax];
            ob -= sb[ax] * dims[ax];
            idx[ax] = 0;
        }
    }
}

#[inline]
pub(crate) fn for_each_offset1<F: FnMut(usize, usize)>(dims: &[usize], s: &[usize], mut f: F) {
    let zeros = vec![0usize; dims.len()];
    for_each_offset2(dims, s, &zeros, |pos, a, _| f(pos, a));
}

/// Safe wrapper around the strided GEMM: `c = alpha * a * b + beta * c`.
///
/// Strides are `(row_stride, col_stride)` in elements.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Float>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    a_strides: (usize, usize),
    b: &[T],
    b_strides: (usize, usize),
    beta: T,
    c: &mut [T],
    c_strides: (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, (rs, cs): (usize, usize)| (rows - 1) * rs + (cols - 1) * cs;
    assert!(last(m, n, c_strides) < c.len(), "gemm: c out of bounds");
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let v = &mut c[i * c_strides.0 + j * c_strides.1];
                *v = if beta == T::zero() { T::zero() } else { *v * beta };
            }
        }
        return;
    }
    assert!(last(m, k, a_strides) < a.len(), "gemm: a out of bounds");
    assert!(last(k, n, b_strides) < b.len(), "gemm: b out of bounds");
    // SAFETY: bounds checked above; `c` is uniquely borrowed.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            c_strides.0 as isize,
            c_strides.1 as isize,
        )
    }
}

/// Geometry of a 3-D convolution (depth, height, width). 2-D convolutions use
/// a depth of one with unit kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

impl ConvGeometry {
    pub fn output(&self) -> Option<[usize; 3]> {
        let mut out = [0; 3];
        for i in 0..3 {
            let padded = self.input[i] + 2 * self.pad[i];
            if padded < self.kernel[i] || self.stride[i] == 0 {
                return None;
            }
            out[i] = (padded - self.kernel[i]) / self.stride[i] + 1;
        }
        Some(out)
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel.iter().product::<usize>()
    }

    pub fn is_pointwise(&self) -> bool {
        self.kernel == [1, 1, 1] && self.stride == [1, 1, 1] && self.pad == [0, 0, 0]
    }
}

/// Unfolds one image `[C, D, H, W]` into `cols` laid out `[C*kd*kh*kw, D'*H'*W']`.
pub fn im2col<T: Float>(x: &[T], g: &ConvGeometry, cols: &mut [T]) {
    let out = g.output().expect("valid geometry");
    let [id, ih, iw] = g.input;
    let [kd, kh, kw] = g.kernel;
    let [sd, sh, sw] = g.stride;
    let [pd, ph, pw] = g.pad;
    let [od, oh, ow] = out;
    let plane = od * oh * ow;
    let mut row = 0;
    for c in 0..g.channels {
        let xc = &x[c * id * ih * iw..(c + 1) * id * ih * iw];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let dst = &mut cols[row * plane..(row + 1) * plane];
                    let mut p = 0;
                    for zo in 0..od {
                        let z = (zo * sd + a) as isize - pd as isize;
                        for yo in 0..oh {
                            let y = (yo * sh + b) as isize - ph as isize;
                            let line = &mut dst[p..p + ow];
                            p += ow;
                            if z < 0 || z >= id as isize || y < 0 || y >= ih as isize {
                                line.fill(T::zero());
                                continue;
                            }
                            let base = (z as usize * ih + y as usize) * iw;
                            if sw == 1 {
                                // valid output columns satisfy 0 <= xo + e - pw < iw
                                let lo = pw.saturating_sub(e).min(ow);
                                let hi = (iw + pw).saturating_sub(e).min(ow).max(lo);
                                line[..lo].fill(T::zero());
                                line[hi..].fill(T::zero());
                                if hi > lo {
                                    let start = base + lo + e - pw;
                                    line[lo..hi].copy_from_slice(&xc[start..start + (hi - lo)]);
                                }
                            } else {
                                for (xo, v) in line.iter_mut().enumerate() {
                                    let xi = (xo * sw + e) as isize - pw as isize;
                                    *v = if xi < 0 || xi >= iw as isize {
                                        T::zero()
                                    } else {
                                        xc[base + xi as usize]
                                    };
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `cols` back into the image gradient `dx`.
pub fn col2im<T: Float>(cols: &[T], g: &ConvGeometry, dx: &mut [T]) {
    let out = g.output().expect("valid geometry");
    let [id, ih, iw] = g.input;
    let [kd, kh, kw] = g.kernel;
    let [sd, sh, sw] = g.stride;
    let [pd, ph, pw] = g.pad;
    let [od, oh, ow] = out;
    let plane = od * oh * ow;
    let mut row = 0;
    for c in 0..g.channels {
        let xc = &mut dx[c * id * ih * iw..(c + 1) * id * ih * iw];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let src = &cols[row * plane..(row + 1) * plane];
                    let mut p = 0;
                    for zo in 0..od {
                        let z = (zo * sd + a) as isize - pd as isize;
                        for yo in 0..oh {
                            let y = (yo * sh + b) as isize - ph as isize;
                            let line = &src[p..p + ow];
                            p += ow;
                            if z < 0 || z >= id as isize || y < 0 || y >= ih as isize {
                                continue;
                            }
                            let base = (z as usize * ih + y as usize) * iw;
                            for (xo, &v) in line.iter().enumerate() {
                                let xi = (xo * sw + e) as isize - pw as isize;
                                if xi >= 0 && xi < iw as isize {
                                    xc[base + xi as usize] += v;
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Batched convolution forward. `x` is `[B, C, D, H, W]`, `w` is
/// `[Co, C, kd, kh, kw]`, the result `[B, Co, D', H', W']`.
pub fn conv_forward<T: Float>(
    x: &[T],
    batch: usize,
    w: &[T],
    bias: Option<&[T]>,
    out_channels: usize,
    g: &ConvGeometry,
) -> Vec<T> {
    let od = g.output().expect("valid geometry");
    let plane: usize = od.iter().product();
    let in_len = g.channels * g.input.iter().product::<usize>();
    let rows = g.col_rows();
    let mut out = vec![T::zero(); batch * out_channels * plane];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); rows * plane]
    };
    for bi in 0..batch {
        let xb = &x[bi * in_len..(bi + 1) * in_len];
        let src: &[T] = if g.is_pointwise() {
            xb
        } else {
            im2col(xb, g, &mut cols);
            &cols
        };
        let ob = &mut out[bi * out_channels * plane..(bi + 1) * out_channels * plane];
        gemm(
            out_channels,
            rows,
            plane,
            T::one(),
            w,
            (rows, 1),
            src,
            (plane, 1),
            T::zero(),
            ob,
            (plane, 1),
        );
        if let Some(bias) = bias {
            for (co, chunk) in ob.chunks_mut(plane).enumerate() {
                let v = bias[co];
                chunk.iter_mut().for_each(|o| *o += v);
            }
        }
    }
    out
}

/// Gradients of [`conv_forward`] with respect to input, weight and bias.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<T: Float>(
    x: &[T],
    batch: usize,
    w: &[T],
    out_channels: usize,
    g: &ConvGeometry,
    dy: &[T],
    want_dx: bool,
    want_dw: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>, Vec<T>) {
    let od = g.output().expect("valid geometry");
    let plane: usize = od.iter().product();
    let in_len = g.channels * g.input.iter().product::<usize>();
    let rows = g.col_rows();
    let mut dx = want_dx.then(|| vec![T::zero(); x.len()]);
    let mut dw = want_dw.then(|| vec![T::zero(); w.len()]);
    let mut db = vec![T::zero(); out_channels];
    let pointwise = g.is_pointwise();
    let mut cols = if pointwise {
        Vec::new()
    } else {
        vec![T::zero(); rows * plane]
    };
    let mut dcols = if pointwise || !want_dx {
        Vec::new()
    } else {
        vec![T::zero(); rows * plane]
    };
    for bi in 0..batch {
        let xb = &x[bi * in_len..(bi + 1) * in_len];
        let dyb = &dy[bi * out_channels * plane..(bi + 1) * out_channels * plane];
        for (co, chunk) in dyb.chunks(plane).enumerate() {
            db[co] += chunk.iter().copied().sum::<T>();
        }
        if let Some(dw) = dw.as_mut() {
            let src: &[T] = if pointwise {
                xb
            } else {
                im2col(xb, g, &mut cols);
                &cols
            };
            // dW[Co, rows] += dY[Co, P] * cols^T[P, rows]
            gemm(
                out_channels,
                plane,
                rows,
                T::one(),
                dyb,
                (plane, 1),
                src,
                (1, plane),
                T::one(),
                dw,
                (rows, 1),
            );
        }
        if let Some(dx) = dx.as_mut() {
            let dxb = &mut dx[bi * in_len..(bi + 1) * in_len];
            if pointwise {
                gemm(
                    rows,
                    out_channels,
                    plane,
                    T::one(),
                    w,
                    (1, rows),
                    dyb,
                    (plane, 1),
                    T::zero(),
                    dxb,
                    (plane, 1),
                );
            } else {
                gemm(
                    rows,
                    out_channels,
                    plane,
                    T::one(),
                    w,
                    (1, rows),
                    dyb,
                    (plane, 1),
                    T::zero(),
                    &mut dcols,
                    (plane, 1),
                );
                col2im(&dcols, g, dxb);
            }
        }
    }
    (dx, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &[f64], w: &[f64], co: usize, g: &ConvGeometry) -> Vec<f64> {
        let [od, oh, ow] = g.output().unwrap();
        let [id, ih, iw] = g.input;
        let [kd, kh, kw] = g.kernel;
        let mut out = vec![0.0; co * od * oh * ow];
        for o in 0..co {
            for z in 0..od {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut acc = 0.0;
                        for c in 0..g.channels {
                            for a in 0..kd {
                                for b in 0..kh {
                                    for e in 0..kw {
                                        let zi = (z * g.stride[0] + a) as isize - g.pad[0] as isize;
                                        let yi = (y * g.stride[1] + b) as isize - g.pad[1] as isize;
                                        let xi = (xx * g.stride[2] + e) as isize - g.pad[2] as isize;
                                        if zi < 0
                                            || yi < 0
                                            || xi < 0
                                            || zi >= id as isize
                                            || yi >= ih as isize
                                            || xi >= iw as isize
                                        {
                                            continue;
                                        }
                                        let xv = x[((c * id + zi as usize) * ih + yi as usize) * iw + xi as usize];
                                        let wv = w[(((o * g.channels + c) * kd + a) * kh + b) * kw + e];
                                        acc += xv * wv;
                                    }
                                }
                            }
                        }
                        out[((o * od + z) * oh + y) * ow + xx] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_loops() {
        let geoms = [
            ConvGeometry {
                channels: 2,
                input: [1, 5, 4],
                kernel: [1, 3, 3],
                stride: [1, 1, 1],
                pad: [0, 1, 1],
            },
            ConvGeometry {
                channels: 3,
                input: [3, 4, 6],
                kernel: [3, 3, 3],
                stride: [1, 2, 2],
                pad: [1, 1, 1],
            },
            ConvGeometry {
                channels: 2,
                input: [1, 8, 8],
                kernel: [1, 4, 4],
                stride: [1, 4, 4],
                pad: [0, 0, 0],
            },
        ];
        for g in geoms {
            let xn = g.channels * g.input.iter().product::<usize>();
            let x: Vec<f64> = (0..xn).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
            let co = 3;
            let w: Vec<f64> = (0..co * g.col_rows())
                .map(|i| ((i * 13 % 7) as f64) * 0.25 - 0.5)
                .collect();
            let fast = conv_forward(&x, 1, &w, None, co, &g);
            let slow = naive_conv(&x, &w, co, &g);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn collapse_merges_contiguous_axes() {
        let (d, s) = collapse(&[2, 3, 4], &[vec![12, 4, 1], vec![0, 0, 1]]);
        assert_eq!(d, vec![6, 4]);
        assert_eq!(s, vec![vec![4, 1], vec![0, 1]]);
    }
}
