//! Raw compute kernels over contiguous `f32` buffers.
//!
//! All spatial buffers are a single batch item laid out as `[channels, height, width]`.
//! Convolutions lower to a single matrix product per item through `im2col`.

/// `C = alpha * A * B + beta * C` with arbitrary row/column strides.
///
/// `a` is `m x k`, `b` is `k x n`, `c` is `m x n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f32,
    a: &[f32],
    rsa: usize,
    csa: usize,
    b: &[f32],
    rsb: usize,
    csb: usize,
    beta: f32,
    c: &mut [f32],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(
        k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa,
        "gemm: A too short"
    );
    assert!(
        k == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb,
        "gemm: B too short"
    );
    assert!(c.len() > (m - 1) * rsc + (n - 1) * csc, "gemm: C too short");
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Unfolds a `[c, h, w]` item into a `[c*k*k, h*w]` patch matrix for a stride-1,
/// size-preserving convolution with odd kernel `k`.
pub fn im2col(x: &[f32], c: usize, h: usize, w: usize, k: usize, col: &mut [f32]) {
    let pad = k / 2;
    let plane = h * w;
    debug_assert_eq!(col.len(), c * k * k * plane);
    for ci in 0..c {
        let src = &x[ci * plane..(ci + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut col[row * plane..(row + 1) * plane];
                let (x_lo, x_hi) = valid_range(w, kx, pad);
                for y in 0..h {
                    let out = &mut dst[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                        out.fill(0.0);
                        continue;
                    }
                    let sy = sy as usize;
                    out[..x_lo].fill(0.0);
                    out[x_hi..].fill(0.0);
                    let sx0 = x_lo + kx - pad;
                    out[x_lo..x_hi]
                        .copy_from_slice(&src[sy * w + sx0..sy * w + sx0 + (x_hi - x_lo)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters a patch matrix back, accumulating into `dx`.
pub fn col2im(col: &[f32], c: usize, h: usize, w: usize, k: usize, dx: &mut [f32]) {
    let pad = k / 2;
    let plane = h * w;
    for ci in 0..c {
        let dst = &mut dx[ci * plane..(ci + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &col[row * plane..(row + 1) * plane];
                let (x_lo, x_hi) = valid_range(w, kx, pad);
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    let sx0 = x_lo + kx - pad;
                    let d = &mut dst[sy * w + sx0..sy * w + sx0 + (x_hi - x_lo)];
                    for (d, s) in d.iter_mut().zip(&src[y * w + x_lo..y * w + x_hi]) {
                        *d += *s;
                    }
                }
            }
        }
    }
}

/// Output columns `[lo, hi)` whose input column `x + kx - pad` is in bounds.
fn valid_range(w: usize, kx: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kx);
    let hi = (w + pad).saturating_sub(kx).min(w);
    (lo, hi.max(lo))
}

/// Stride-1 same-padded convolution of one item. `weight` is `[cout, cin, k, k]`.
#[allow(clippy::too_many_arguments)]
pub fn conv_forward(
    x: &[f32],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f32],
    bias: &[f32],
    cout: usize,
    k: usize,
    y: &mut [f32],
    scratch: &mut Vec<f32>,
) {
    let plane = h * w;
    let kk = cin * k * k;
    let patches: &[f32] = if k == 1 {
        x
    } else {
        scratch.resize(kk * plane, 0.0);
        im2col(x, cin, h, w, k, scratch);
        scratch
    };
    gemm(
        cout, kk, plane, 1.0, weight, kk, 1, patches, plane, 1, 0.0, y, plane, 1,
    );
    for (co, b) in bias.iter().enumerate() {
        for v in &mut y[co * plane..(co + 1) * plane] {
            *v += *b;
        }
    }
}

/// Gradients of [`conv_forward`] for one item; accumulates into `dw`, `db` and (optionally) `dx`.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward(
    x: &[f32],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f32],
    cout: usize,
    k: usize,
    dy: &[f32],
    dw: &mut [f32],
    db: &mut [f32],
    dx: Option<&mut [f32]>,
    scratch: &mut Vec<f32>,
) {
    let plane = h * w;
    let kk = cin * k * k;
    for (co, g) in db.iter_mut().enumerate() {
        *g += dy[co * plane..(co + 1) * plane].iter().sum::<f32>();
    }
    if k == 1 {
        gemm(
            cout, plane, kk, 1.0, dy, plane, 1, x, 1, plane, 1.0, dw, kk, 1,
        );
        if let Some(dx) = dx {
            gemm(
                kk, cout, plane, 1.0, weight, 1, kk, dy, plane, 1, 1.0, dx, plane, 1,
            );
        }
        return;
    }
    scratch.resize(kk * plane, 0.0);
    im2col(x, cin, h, w, k, scratch);
    gemm(
        cout, plane, kk, 1.0, dy, plane, 1, scratch, 1, plane, 1.0, dw, kk, 1,
    );
    if let Some(dx) = dx {
        gemm(
            kk, cout, plane, 1.0, weight, 1, kk, dy, plane, 1, 0.0, scratch, plane, 1,
        );
        col2im(scratch, cin, h, w, k, dx);
    }
}

/// 2x2 stride-2 transposed convolution of one item. `weight` is `[cin, cout, 2, 2]`;
/// the output is `[cout, 2h, 2w]`.
#[allow(clippy::too_many_arguments)]
pub fn conv_t_forward(
    x: &[f32],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f32],
    bias: &[f32],
    cout: usize,
    y: &mut [f32],
    scratch: &mut Vec<f32>,
) {
    let plane = h * w;
    let rows = cout * 4;
    scratch.resize(rows * plane, 0.0);
    gemm(
        rows, cin, plane, 1.0, weight, 1, rows, x, plane, 1, 0.0, scratch, plane, 1,
    );
    let ow = 2 * w;
    let oplane = 4 * plane;
    for co in 0..cout {
        let out = &mut y[co * oplane..(co + 1) * oplane];
        for a in 0..2 {
            for b in 0..2 {
                let src = &scratch[(co * 4 + a * 2 + b) * plane..][..plane];
                for yy in 0..h {
                    let orow = &mut out[(2 * yy + a) * ow..][..ow];
                    for xx in 0..w {
                        orow[2 * xx + b] = src[yy * w + xx] + bias[co];
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn conv_t_backward(
    x: &[f32],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f32],
    cout: usize,
    dy: &[f32],
    dw: &mut [f32],
    db: &mut [f32],
    dx: Option<&mut [f32]>,
    scratch: &mut Vec<f32>,
) {
    let plane = h * w;
    let rows = cout * 4;
    let ow = 2 * w;
    let oplane = 4 * plane;
    scratch.resize(rows * plane, 0.0);
    for co in 0..cout {
        let g = &dy[co * oplane..(co + 1) * oplane];
        db[co] += g.iter().sum::<f32>();
        for a in 0..2 {
            for b in 0..2 {
                let dst = &mut scratch[(co * 4 + a * 2 + b) * plane..][..plane];
                for yy in 0..h {
                    let grow = &g[(2 * yy + a) * ow..][..ow];
                    for xx in 0..w {
                        dst[yy * w + xx] = grow[2 * xx + b];
                    }
                }
            }
        }
    }
    gemm(
        cin, plane, rows, 1.0, x, plane, 1, scratch, 1, plane, 1.0, dw, rows, 1,
    );
    if let Some(dx) = dx {
        gemm(
            cin, rows, plane, 1.0, weight, rows, 1, scratch, plane, 1, 1.0, dx, plane, 1,
        );
    }
}

/// Non-overlapping `k x k` max-pool of one item. Writes item-relative argmax indices.
pub fn max_pool_forward(
    x: &[f32],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    y: &mut [f32],
    argmax: &mut [u32],
) {
    let (oh, ow) = (h / k, w / k);
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f32::NEG_INFINITY;
                let mut best_idx = 0usize;
                for dy in 0..k {
                    let row = ci * h * w + (oy * k + dy) * w + ox * k;
                    for dx in 0..k {
                        let v = x[row + dx];
                        if v > best || v.is_nan() || (dy == 0 && dx == 0) {
                            best = v;
                            best_idx = row + dx;
                        }
                    }
                }
                let o = (ci * oh + oy) * ow + ox;
                y[o] = best;
                argmax[o] = best_idx as u32;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution used as an oracle for the im2col path.
    #[allow(clippy::too_many_arguments)]
    fn naive_conv(
        x: &[f32],
        cin: usize,
        h: usize,
        w: usize,
        wt: &[f32],
        b: &[f32],
        cout: usize,
        k: usize,
    ) -> Vec<f32> {
        let p = (k / 2) as isize;
        let mut y = vec![0.0; cout * h * w];
        for co in 0..cout {
            for yy in 0..h {
                for xx in 0..w {
                    let mut acc = b[co];
                    for ci in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let sy = yy as isize + ky as isize - p;
                                let sx = xx as isize + kx as isize - p;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                acc += wt[((co * cin + ci) * k + ky) * k + kx]
                                    * x[(ci * h + sy as usize) * w + sx as usize];
                            }
                        }
                    }
                    y[(co * h + yy) * w + xx] = acc;
                }
            }
        }
        y
    }

    fn ramp(n: usize, scale: f32) -> Vec<f32> {
        (0..n)
            .map(|i| ((i * 37 % 23) as f32 - 11.0) * scale)
            .collect()
    }

    #[test]
    fn im2col_conv_matches_direct_loops() {
        for &(cin, cout, h, w, k) in &[
            (2, 3, 5, 4, 3),
            (1, 2, 3, 3, 1),
            (3, 2, 1, 6, 3),
            (2, 2, 4, 4, 5),
        ] {
            let x = ramp(cin * h * w, 0.1);
            let wt = ramp(cout * cin * k * k, 0.05);
            let b: Vec<f32> = (0..cout).map(|i| i as f32 * 0.3).collect();
            let mut y = vec![0.0; cout * h * w];
            let mut scratch = Vec::new();
            conv_forward(&x, cin, h, w, &wt, &b, cout, k, &mut y, &mut scratch);
            let want = naive_conv(&x, cin, h, w, &wt, &b, cout, k);
            for (a, b) in y.iter().zip(&want) {
                assert!((a - b).abs() < 1e-4, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let (c, h, w, k) = (2, 4, 5, 3);
        let x = ramp(c * h * w, 0.2);
        let g = ramp(c * k * k * h * w, 0.07);
        let mut col = vec![0.0; g.len()];
        im2col(&x, c, h, w, k, &mut col);
        let lhs: f64 = col
            .iter()
            .zip(&g)
            .map(|(a, b)| (*a as f64) * (*b as f64))
            .sum();
        let mut back = vec![0.0; x.len()];
        col2im(&g, c, h, w, k, &mut back);
        let rhs: f64 = x
            .iter()
            .zip(&back)
            .map(|(a, b)| (*a as f64) * (*b as f64))
            .sum();
        assert!((lhs - rhs).abs() < 1e-6 * lhs.abs().max(1.0));
    }

    #[test]
    fn transposed_conv_places_kernel_taps() {
        // One input pixel, one channel: the output is the 2x2 kernel plus bias.
        let x = [2.0];
        let wt = [1.0, 2.0, 3.0, 4.0];
        let mut y = vec![0.0; 4];
        let mut scratch = Vec::new();
        conv_t_forward(&x, 1, 1, 1, &wt, &[0.5], 1, &mut y, &mut scratch);
        assert_eq!(y, vec![2.5, 4.5, 6.5, 8.5]);
    }

    #[test]
    fn max_pool_picks_window_maximum() {
        let x = [1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 9.0, 1.0];
        let mut y = vec![0.0; 2];
        let mut arg = vec![0u32; 2];
        max_pool_forward(&x, 1, 2, 4, 2, &mut y, &mut arg);
        assert_eq!(y, vec![5.0, 9.0]);
        assert_eq!(arg, vec![1, 6]);
    }
}
