//! Raw numeric kernels shared by the graph ops and the spectral transforms.

/// `c = alpha * op(a) * op(b) + beta * c` where `op(a)` is `m x k` and
/// `op(b)` is `k x n`, all row-major. `trans_*` means the stored matrix is
/// the transpose of the logical operand.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths checked above; strides describe dense row-major
    // (or transposed) storage that stays in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a 2-D convolution window over one input plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn out_len(&self) -> usize {
        self.out_height() * self.out_width()
    }
}

/// Unfold a batch `[B, C, H, W]` into columns `[C*k*k, B*Ho*Wo]`.
pub(crate) fn im2col(x: &[f64], batch: usize, g: ConvGeom) -> Vec<f64> {
    let (ho, wo) = (g.out_height(), g.out_width());
    let l = ho * wo;
    let ncols = batch * l;
    let plane = g.height * g.width;
    let mut cols = vec![0.0; g.col_rows() * ncols];
    for c in 0..g.channels {
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for b in 0..batch {
                    let src = &x[(b * g.channels + c) * plane..][..plane];
                    for oy in 0..ho {
                        let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                        if iy < 0 || iy >= g.height as isize {
                            continue;
                        }
                        let iy = iy as usize;
                        for ox in 0..wo {
                            let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                            if ix < 0 || ix >= g.width as isize {
                                continue;
                            }
                            dst[b * l + oy * wo + ox] = src[iy * g.width + ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: fold columns back, summing overlaps.
pub(crate) fn col2im(cols: &[f64], batch: usize, g: ConvGeom) -> Vec<f64> {
    let (ho, wo) = (g.out_height(), g.out_width());
    let l = ho * wo;
    let ncols = batch * l;
    let plane = g.height * g.width;
    let mut x = vec![0.0; batch * g.channels * plane];
    for c in 0..g.channels {
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for b in 0..batch {
                    let dst = &mut x[(b * g.channels + c) * plane..][..plane];
                    for oy in 0..ho {
                        let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                        if iy < 0 || iy >= g.height as isize {
                            continue;
                        }
                        let iy = iy as usize;
                        for ox in 0..wo {
                            let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                            if ix < 0 || ix >= g.width as isize {
                                continue;
                            }
                            dst[iy * g.width + ix as usize] += src[b * l + oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

/// `[B, C, L]` -> `[C, B*L]`.
pub(crate) fn batch_to_channel_major(x: &[f64], batch: usize, channels: usize, l: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for b in 0..batch {
        for c in 0..channels {
            out[c * batch * l + b * l..][..l].copy_from_slice(&x[(b * channels + c) * l..][..l]);
        }
    }
    out
}

/// `[C, B*L]` -> `[B, C, L]`.
pub(crate) fn channel_to_batch_major(x: &[f64], batch: usize, channels: usize, l: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for b in 0..batch {
        for c in 0..channels {
            out[(b * channels + c) * l..][..l].copy_from_slice(&x[c * batch * l + b * l..][..l]);
        }
    }
    out
}

/// Apply `left * X * right^T` to each trailing `rows x cols` plane of `x`.
/// `left` is `out_rows x rows`, `right` is `out_cols x cols`.
pub(crate) fn separable(
    x: &[f64],
    planes: usize,
    rows: usize,
    cols: usize,
    left: &[f64],
    out_rows: usize,
    right: &[f64],
    out_cols: usize,
) -> Vec<f64> {
    // X * right^T for all planes in one product: [planes*rows, cols] x [cols, out_cols]
    let mut tmp = vec![0.0; planes * rows * out_cols];
    gemm(planes * rows, cols, out_cols, x, false, right, true, 0.0, &mut tmp);
    let mut out = vec![0.0; planes * out_rows * out_cols];
    for p in 0..planes {
        gemm(
            out_rows,
            rows,
            out_cols,
            left,
            false,
            &tmp[p * rows * out_cols..(p + 1) * rows * out_cols],
            false,
            0.0,
            &mut out[p * out_rows * out_cols..(p + 1) * out_rows * out_cols],
        );
    }
    out
}

/// Adjoint of [`separable`]: `left^T * G * right` per plane.
pub(crate) fn separable_adjoint(
    g: &[f64],
    planes: usize,
    rows: usize,
    cols: usize,
    left: &[f64],
    out_rows: usize,
    right: &[f64],
    out_cols: usize,
) -> Vec<f64> {
    let mut tmp = vec![0.0; planes * out_rows * cols];
    gemm(planes * out_rows, out_cols, cols, g, false, right, false, 0.0, &mut tmp);
    let mut out = vec![0.0; planes * rows * cols];
    for p in 0..planes {
        gemm(
            rows,
            out_rows,
            cols,
            left,
            true,
            &tmp[p * out_rows * cols..(p + 1) * out_rows * cols],
            false,
            0.0,
            &mut out[p * rows * cols..(p + 1) * rows * cols],
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(r: usize, c: usize, a: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = a[i * c + j];
            }
        }
        t
    }

    #[test]
    fn gemm_transposes_match_naive() {
        let (m, k, n) = (3, 5, 4);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.91).cos()).collect();
        let want = naive(m, k, n, &a, &b);
        let at = transpose(m, k, &a);
        let bt = transpose(k, n, &b);
        for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
            let mut c = vec![0.0; m * n];
            let aa = if ta { &at } else { &a };
            let bb = if tb { &bt } else { &b };
            gemm(m, k, n, aa, ta, bb, tb, 0.0, &mut c);
            for (x, y) in c.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeom { channels: 2, height: 6, width: 6, kernel: 4, stride: 2, padding: 1 };
        let batch = 2;
        let x: Vec<f64> = (0..batch * 2 * 36).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
        let cols = im2col(&x, batch, g);
        let y: Vec<f64> = (0..cols.len()).map(|i| ((i * 5 % 11) as f64) - 5.0).collect();
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let back = col2im(&y, batch, g);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }
}
