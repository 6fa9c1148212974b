//! Valid (unpadded) convolution kernels over one group of planes
//! (`C × h × w`, row-major). Padding happens before these are called.

use crate::scalar::Scalar;

#[inline]
pub(crate) fn out_extent(input: usize, k: usize, stride: usize) -> usize {
    (input - k) / stride + 1
}

#[inline]
fn row_taps<T: Scalar>(dst: &mut [T], src: &[T], w: &[T], stride: usize) {
    match (w.len(), stride) {
        (3, 1) => {
            let (w0, w1, w2) = (w[0], w[1], w[2]);
            let n = dst.len();
            let (a, b, c) = (&src[..n], &src[1..n + 1], &src[2..n + 2]);
            for i in 0..n {
                dst[i] += w0 * a[i] + w1 * b[i] + w2 * c[i];
            }
        }
        (1, 1) => {
            let w0 = w[0];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += w0 * s;
            }
        }
        _ => {
            for (x, d) in dst.iter_mut().enumerate() {
                let base = x * stride;
                let mut acc = T::zero();
                for (t, &wt) in w.iter().enumerate() {
                    acc += wt * src[base + t];
                }
                *d += acc;
            }
        }
    }
}

#[inline]
fn axpy_strided<T: Scalar>(dst: &mut [T], offset: usize, stride: usize, a: T, src: &[T]) {
    if stride == 1 {
        for (d, &s) in dst[offset..offset + src.len()].iter_mut().zip(src) {
            *d += a * s;
        }
    } else {
        for (x, &s) in src.iter().enumerate() {
            dst[offset + x * stride] += a * s;
        }
    }
}

#[inline]
fn dot_strided<T: Scalar>(a: &[T], b: &[T], offset: usize, stride: usize) -> T {
    if stride == 1 {
        let b = &b[offset..offset + a.len()];
        let mut acc = [T::zero(); 8];
        let chunks = a.len() / 8;
        for c in 0..chunks {
            for l in 0..8 {
                acc[l] += a[c * 8 + l] * b[c * 8 + l];
            }
        }
        let mut s = acc.iter().fold(T::zero(), |s, &v| s + v);
        for i in chunks * 8..a.len() {
            s += a[i] * b[i];
        }
        s
    } else {
        a.iter()
            .enumerate()
            .fold(T::zero(), |s, (x, &v)| s + v * b[offset + x * stride])
    }
}

/// Adds the valid 3×3 correlation of plane `xp` (row length `iw`) with `wk`
/// to `yp` (row length `ow = iw - 2`).
#[inline]
fn taps3x3<T: Scalar>(yp: &mut [T], xp: &[T], iw: usize, ow: usize, wk: &[T]) {
    let w: [T; 9] = core::array::from_fn(|i| wk[i]);
    for (oy, dst) in yp.chunks_exact_mut(ow).enumerate() {
        let r0 = &xp[oy * iw..oy * iw + ow + 2];
        let r1 = &xp[(oy + 1) * iw..(oy + 1) * iw + ow + 2];
        let r2 = &xp[(oy + 2) * iw..(oy + 2) * iw + ow + 2];
        let (a0, a1, a2) = (&r0[..ow], &r0[1..ow + 1], &r0[2..ow + 2]);
        let (b0, b1, b2) = (&r1[..ow], &r1[1..ow + 1], &r1[2..ow + 2]);
        let (c0, c1, c2) = (&r2[..ow], &r2[1..ow + 1], &r2[2..ow + 2]);
        for i in 0..ow {
            dst[i] += w[0] * a0[i]
                + w[1] * a1[i]
                + w[2] * a2[i]
                + w[3] * b0[i]
                + w[4] * b1[i]
                + w[5] * b2[i]
                + w[6] * c0[i]
                + w[7] * c1[i]
                + w[8] * c2[i];
        }
    }
}

/// Planes with even and odd columns stored apart: row `r` of plane `c` is
/// `[x[r][0], x[r][2], …, x[r][1], x[r][3], …]`, each half `iw / 2` long.
struct Split<T> {
    data: alloc::vec::Vec<T>,
    ip: usize,
    half: usize,
}

impl<T: Scalar> Split<T> {
    fn new(x: &[T], c: usize, ih: usize, iw: usize) -> Self {
        let half = iw / 2;
        let mut data = alloc::vec![T::zero(); c * ih * iw];
        for (src, dst) in x.chunks_exact(iw).zip(data.chunks_exact_mut(iw)) {
            let (e, o) = dst.split_at_mut(half);
            for j in 0..half {
                e[j] = src[2 * j];
                o[j] = src[2 * j + 1];
            }
        }
        Split {
            data,
            ip: ih * iw,
            half,
        }
    }

    fn zeros(c: usize, ih: usize, iw: usize) -> Self {
        Split {
            data: alloc::vec![T::zero(); c * ih * iw],
            ip: ih * iw,
            half: iw / 2,
        }
    }

    fn plane(&self, c: usize) -> SplitPlane<'_, T> {
        SplitPlane {
            data: &self.data[c * self.ip..(c + 1) * self.ip],
            half: self.half,
        }
    }

    fn plane_mut(&mut self, c: usize) -> &mut [T] {
        &mut self.data[c * self.ip..(c + 1) * self.ip]
    }

    /// Interleaves back, adding into `x`.
    fn add_into(&self, x: &mut [T]) {
        let iw = 2 * self.half;
        for (src, dst) in self.data.chunks_exact(iw).zip(x.chunks_exact_mut(iw)) {
            let (e, o) = src.split_at(self.half);
            for j in 0..self.half {
                dst[2 * j] += e[j];
                dst[2 * j + 1] += o[j];
            }
        }
    }
}

#[derive(Clone, Copy)]
struct SplitPlane<'a, T> {
    data: &'a [T],
    half: usize,
}

impl<'a, T> SplitPlane<'a, T> {
    fn row(&self, r: usize) -> (&'a [T], &'a [T]) {
        let w = 2 * self.half;
        self.data[r * w..(r + 1) * w].split_at(self.half)
    }
}

/// Stride-2 3×3 taps on a column-split plane: `out[i] = w0·e[i] + w1·o[i] + w2·e[i+1]` per row.
#[inline]
fn taps3x3_s2<T: Scalar>(yp: &mut [T], xs: SplitPlane<'_, T>, ow: usize, wk: &[T]) {
    let w: [T; 9] = core::array::from_fn(|i| wk[i]);
    for (oy, dst) in yp.chunks_exact_mut(ow).enumerate() {
        let (e0, o0) = xs.row(2 * oy);
        let (e1, o1) = xs.row(2 * oy + 1);
        let (e2, o2) = xs.row(2 * oy + 2);
        let (a0, a1, a2) = (&e0[..ow], &o0[..ow], &e0[1..ow + 1]);
        let (b0, b1, b2) = (&e1[..ow], &o1[..ow], &e1[1..ow + 1]);
        let (c0, c1, c2) = (&e2[..ow], &o2[..ow], &e2[1..ow + 1]);
        for i in 0..ow {
            dst[i] += w[0] * a0[i]
                + w[1] * a1[i]
                + w[2] * a2[i]
                + w[3] * b0[i]
                + w[4] * b1[i]
                + w[5] * b2[i]
                + w[6] * c0[i]
                + w[7] * c1[i]
                + w[8] * c2[i];
        }
    }
}

/// Weight gradient of a stride-2 3×3 tap on a column-split plane.
fn corr3x3_s2<T: Scalar>(gyp: &[T], ow: usize, xs: SplitPlane<'_, T>) -> [T; 9] {
    let mut acc = [[T::zero(); 8]; 9];
    let mut tail = [T::zero(); 9];
    let chunks = ow / 8;
    for (oy, gr) in gyp.chunks_exact(ow).enumerate() {
        for ky in 0..3 {
            let (e, o) = xs.row(2 * oy + ky);
            let a = &mut acc[ky * 3..ky * 3 + 3];
            for c in 0..chunks {
                let b = c * 8;
                let gs = &gr[b..b + 8];
                let es = &e[b..b + 9];
                let os = &o[b..b + 8];
                for l in 0..8 {
                    a[0][l] += gs[l] * es[l];
                    a[1][l] += gs[l] * os[l];
                    a[2][l] += gs[l] * es[l + 1];
                }
            }
            for i in chunks * 8..ow {
                tail[ky * 3] += gr[i] * e[i];
                tail[ky * 3 + 1] += gr[i] * o[i];
                tail[ky * 3 + 2] += gr[i] * e[i + 1];
            }
        }
    }
    core::array::from_fn(|k| acc[k].iter().fold(tail[k], |s, &v| s + v))
}

/// Stride-2 3×3 case of [`conv_backward`] on column-split planes.
#[allow(clippy::too_many_arguments)]
fn conv3x3_s2_backward<T: Scalar>(
    x: &[T],
    ih: usize,
    iw: usize,
    weight: &[T],
    cin: usize,
    cout: usize,
    gy: &[T],
    gx: &mut [T],
    gw: &mut [T],
    gb: &mut [T],
) {
    let (oh, ow) = (out_extent(ih, 3, 2), out_extent(iw, 3, 2));
    let op = oh * ow;
    let half = iw / 2;
    let xs = Split::new(x, cin, ih, iw);
    let mut gs = Split::<T>::zeros(cin, ih, iw);
    for co in 0..cout {
        let gyp = &gy[co * op..(co + 1) * op];
        gb[co] += gyp.iter().copied().sum::<T>();
        for ci in 0..cin {
            let widx = (co * cin + ci) * 9;
            let w: [T; 9] = core::array::from_fn(|i| weight[widx + i]);
            let g = corr3x3_s2(gyp, ow, xs.plane(ci));
            let gp = gs.plane_mut(ci);
            for oy in 0..oh {
                let gr = &gyp[oy * ow..(oy + 1) * ow];
                for ky in 0..3 {
                    let r = 2 * oy + ky;
                    let (ge, go) = gp[r * iw..(r + 1) * iw].split_at_mut(half);
                    let (w0, w1, w2) = (w[ky * 3], w[ky * 3 + 1], w[ky * 3 + 2]);
                    ge[0] += w0 * gr[0];
                    for i in 1..ow {
                        ge[i] += w0 * gr[i] + w2 * gr[i - 1];
                    }
                    ge[ow] += w2 * gr[ow - 1];
                    for i in 0..ow {
                        go[i] += w1 * gr[i];
                    }
                }
            }
            for (i, v) in g.iter().enumerate() {
                gw[widx + i] += *v;
            }
        }
    }
    gs.add_into(gx);
}

/// Weight gradient of a stride-1 3×3 tap: `g[ky·3+kx] = Σ gy[oy][i]·x[oy+ky][i+kx]`.
/// Lane accumulators live across the whole plane.
fn corr3x3<T: Scalar>(gyp: &[T], ow: usize, xp: &[T], iw: usize) -> [T; 9] {
    let mut acc = [[T::zero(); 8]; 9];
    let mut tail = [T::zero(); 9];
    let chunks = ow / 8;
    for (oy, gr) in gyp.chunks_exact(ow).enumerate() {
        for ky in 0..3 {
            let xr = &xp[(oy + ky) * iw..(oy + ky) * iw + ow + 2];
            let a = &mut acc[ky * 3..ky * 3 + 3];
            for c in 0..chunks {
                let b = c * 8;
                let gs = &gr[b..b + 8];
                let xs = &xr[b..b + 10];
                for l in 0..8 {
                    a[0][l] += gs[l] * xs[l];
                    a[1][l] += gs[l] * xs[l + 1];
                    a[2][l] += gs[l] * xs[l + 2];
                }
            }
            for i in chunks * 8..ow {
                for kx in 0..3 {
                    tail[ky * 3 + kx] += gr[i] * xr[i + kx];
                }
            }
        }
    }
    core::array::from_fn(|k| acc[k].iter().fold(tail[k], |s, &v| s + v))
}

/// `Σ a·b` with lane-split accumulators.
#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ac, at) = (a.chunks_exact(8), &a[a.len() / 8 * 8..]);
    for (x, y) in ac.zip(b.chunks_exact(8)) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let bt = &b[a.len() / 8 * 8..a.len()];
    at.iter()
        .zip(bt)
        .fold(acc.iter().fold(T::zero(), |s, &v| s + v), |s, (&x, &y)| s + x * y)
}

#[inline]
fn axpy<T: Scalar>(y: &mut [T], alpha: T, x: &[T]) {
    for (d, &v) in y.iter_mut().zip(x) {
        *d += alpha * v;
    }
}

/// `y[co] = bias[co] + Σ_ci w[co,ci] ⋆ x[ci]`, `y` overwritten.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_forward<T: Scalar>(
    x: &[T],
    ih: usize,
    iw: usize,
    weight: &[T],
    bias: &[T],
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    y: &mut [T],
) {
    let (oh, ow) = (out_extent(ih, k, stride), out_extent(iw, k, stride));
    let ip = ih * iw;
    let op = oh * ow;
    debug_assert_eq!(x.len(), cin * ip);
    debug_assert_eq!(y.len(), cout * op);
    let split = (k == 3 && stride == 2 && iw.is_multiple_of(2)).then(|| Split::new(x, cin, ih, iw));
    for co in 0..cout {
        let yp = &mut y[co * op..(co + 1) * op];
        yp.fill(bias[co]);
        if k == 3 && stride == 1 {
            for ci in 0..cin {
                let wk = &weight[(co * cin + ci) * 9..(co * cin + ci + 1) * 9];
                taps3x3(yp, &x[ci * ip..(ci + 1) * ip], iw, ow, wk);
            }
            continue;
        }
        if k == 1 && stride == 1 {
            for ci in 0..cin {
                axpy(yp, weight[co * cin + ci], &x[ci * ip..(ci + 1) * ip]);
            }
            continue;
        }
        if let Some(split) = &split {
            for ci in 0..cin {
                let wk = &weight[(co * cin + ci) * 9..(co * cin + ci + 1) * 9];
                taps3x3_s2(yp, split.plane(ci), ow, wk);
            }
            continue;
        }
        for ci in 0..cin {
            let xp = &x[ci * ip..(ci + 1) * ip];
            let wk = &weight[(co * cin + ci) * k * k..(co * cin + ci + 1) * k * k];
            for oy in 0..oh {
                let dst = &mut yp[oy * ow..(oy + 1) * ow];
                for ky in 0..k {
                    let iy = oy * stride + ky;
                    row_taps(dst, &xp[iy * iw..(iy + 1) * iw], &wk[ky * k..(ky + 1) * k], stride);
                }
            }
        }
    }
}

/// Accumulates input, weight and bias gradients of [`conv_forward`].
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Scalar>(
    x: &[T],
    ih: usize,
    iw: usize,
    weight: &[T],
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    gy: &[T],
    gx: &mut [T],
    gw: &mut [T],
    gb: &mut [T],
) {
    let (oh, ow) = (out_extent(ih, k, stride), out_extent(iw, k, stride));
    let ip = ih * iw;
    let op = oh * ow;
    if k == 3 && stride == 1 {
        return conv3x3_backward(x, ih, iw, weight, cin, cout, gy, gx, gw, gb);
    }
    if k == 3 && stride == 2 && iw.is_multiple_of(2) {
        return conv3x3_s2_backward(x, ih, iw, weight, cin, cout, gy, gx, gw, gb);
    }
    if k == 1 && stride == 1 {
        for co in 0..cout {
            let gyp = &gy[co * op..(co + 1) * op];
            gb[co] += gyp.iter().copied().sum::<T>();
            for ci in 0..cin {
                let wi = co * cin + ci;
                gw[wi] += dot(gyp, &x[ci * ip..(ci + 1) * ip]);
                axpy(&mut gx[ci * ip..(ci + 1) * ip], weight[wi], gyp);
            }
        }
        return;
    }
    for co in 0..cout {
        let gyp = &gy[co * op..(co + 1) * op];
        gb[co] += gyp.iter().copied().sum::<T>();
        for ci in 0..cin {
            let xp = &x[ci * ip..(ci + 1) * ip];
            let gxp = &mut gx[ci * ip..(ci + 1) * ip];
            let widx = (co * cin + ci) * k * k;
            for ky in 0..k {
                for oy in 0..oh {
                    let gyr = &gyp[oy * ow..(oy + 1) * ow];
                    let iy = oy * stride + ky;
                    let xr = &xp[iy * iw..(iy + 1) * iw];
                    let gxr = &mut gxp[iy * iw..(iy + 1) * iw];
                    for kx in 0..k {
                        let wi = widx + ky * k + kx;
                        gw[wi] += dot_strided(gyr, xr, kx, stride);
                        axpy_strided(gxr, kx, stride, weight[wi], gyr);
                    }
                }
            }
        }
    }
}

/// Stride-1 3×3 case of [`conv_backward`]. The input gradient is the valid
/// correlation of `gy` zero-padded by 2 with the kernel rotated by 180°.
#[allow(clippy::too_many_arguments)]
fn conv3x3_backward<T: Scalar>(
    x: &[T],
    ih: usize,
    iw: usize,
    weight: &[T],
    cin: usize,
    cout: usize,
    gy: &[T],
    gx: &mut [T],
    gw: &mut [T],
    gb: &mut [T],
) {
    let (oh, ow) = (ih - 2, iw - 2);
    let (ip, op) = (ih * iw, oh * ow);
    let (ph, pw) = (oh + 4, ow + 4);
    let mut padded = alloc::vec![T::zero(); ph * pw];
    for co in 0..cout {
        let gyp = &gy[co * op..(co + 1) * op];
        gb[co] += gyp.iter().copied().sum::<T>();
        for oy in 0..oh {
            padded[(oy + 2) * pw + 2..(oy + 2) * pw + 2 + ow].copy_from_slice(&gyp[oy * ow..(oy + 1) * ow]);
        }
        for ci in 0..cin {
            let widx = (co * cin + ci) * 9;
            let mut rot = [T::zero(); 9];
            for (i, r) in rot.iter_mut().enumerate() {
                *r = weight[widx + 8 - i];
            }
            taps3x3(&mut gx[ci * ip..(ci + 1) * ip], &padded, pw, iw, &rot);
            let g = corr3x3(gyp, ow, &x[ci * ip..(ci + 1) * ip], iw);
            for (i, v) in g.iter().enumerate() {
                gw[widx + i] += *v;
            }
        }
    }
}

pub(crate) fn maxpool2_forward<T: Scalar>(x: &[T], h: usize, w: usize, y: &mut [T], argmax: &mut [u32]) {
    let ow = w / 2;
    for oy in 0..h / 2 {
        for ox in 0..ow {
            let mut best = 2 * oy * w + 2 * ox;
            for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                let i = (2 * oy + dy) * w + 2 * ox + dx;
                if x[i] > x[best] {
                    best = i;
                }
            }
            y[oy * ow + ox] = x[best];
            argmax[oy * ow + ox] = best as u32;
        }
    }
}
