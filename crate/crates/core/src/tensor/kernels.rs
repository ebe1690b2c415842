//! Inner loops. All reductions accumulate in f64 in a fixed sequential order.

use crate::scalar::Scalar;

/// `out[i*n + j] += sum_p a[i*k + p] * b[j*k + p]`, i.e. A·Bᵀ with both operands row-major.
pub(crate) fn gemm_nt_acc<T: Scalar>(
    a: &[T],
    b: &[T],
    m: usize,
    k: usize,
    n: usize,
    out: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let col = &b[j * k..(j + 1) * k];
            let mut acc = 0.0f64;
            for p in 0..k {
                acc += row[p].widen() * col[p].widen();
            }
            out[i * n + j] += acc;
        }
    }
}

pub(crate) fn gemm_nt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![0.0f64; m * n];
    gemm_nt_acc(a, b, m, k, n, &mut out);
    narrow_all(&out)
}

pub(crate) fn transpose<T: Copy>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(a.len());
    for c in 0..cols {
        for r in 0..rows {
            out.push(a[r * cols + c]);
        }
    }
    out
}

pub(crate) fn narrow_all<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::narrow(x)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn patch(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    pub fn positions(&self) -> usize {
        self.oh * self.ow
    }
}

/// Rows are output positions, columns are (channel, ky, kx) patch entries.
pub(crate) fn im2col_t<T: Scalar>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let k = g.patch();
    let mut out = vec![T::zero(); g.positions() * k];
    for oy in 0..g.oh {
        for ox in 0..g.ow {
            let row = &mut out[(oy * g.ow + ox) * k..(oy * g.ow + ox + 1) * k];
            for c in 0..g.c_in {
                for ky in 0..g.kh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix < 0 || ix >= g.w as isize {
                            continue;
                        }
                        row[(c * g.kh + ky) * g.kw + kx] =
                            x[(c * g.h + iy as usize) * g.w + ix as usize];
                    }
                }
            }
        }
    }
    out
}

/// Scatter-add a transposed column matrix back onto an input-shaped f64 buffer.
pub(crate) fn col2im_t_acc(col_t: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let k = g.patch();
    for oy in 0..g.oh {
        for ox in 0..g.ow {
            let row = &col_t[(oy * g.ow + ox) * k..(oy * g.ow + ox + 1) * k];
            for c in 0..g.c_in {
                for ky in 0..g.kh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix < 0 || ix >= g.w as isize {
                            continue;
                        }
                        dx[(c * g.h + iy as usize) * g.w + ix as usize] +=
                            row[(c * g.kh + ky) * g.kw + kx];
                    }
                }
            }
        }
    }
}
