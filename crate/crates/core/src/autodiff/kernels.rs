//! Forward and backward kernels on raw row-major buffers.
//!
//! Convolution is lowered to im2col + GEMM per sample; the batch axis is
//! processed in parallel when the `parallel` feature is on. Per-sample
//! partial weight gradients are reduced in sample order, so results do not
//! depend on the number of worker threads.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use super::Float;
use crate::error::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::par::map_indices;

/// C = alpha * op(A) * op(B) + beta * C, with A: m×k and B: k×n after the
/// optional transposes.
#[allow(clippy::too_many_arguments)]
fn gemm<T: Float>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    trans_a: bool,
    b: &[T],
    trans_b: bool,
    beta: T,
    c: &mut [T],
) {
    let a = if trans_a {
        ArrayView2::from_shape((k, m), a).unwrap().reversed_axes()
    } else {
        ArrayView2::from_shape((m, k), a).unwrap()
    };
    let b = if trans_b {
        ArrayView2::from_shape((n, k), b).unwrap().reversed_axes()
    } else {
        ArrayView2::from_shape((k, n), b).unwrap()
    };
    let mut c = ArrayViewMut2::from_shape((m, n), c).unwrap();
    general_mat_mul(T::one(), &a, &b, beta, &mut c);
}

fn for_each_chunk<T: Float>(
    buf: &mut [T],
    chunk: usize,
    f: impl Fn(usize, &mut [T]) + Sync + Send,
) {
    if chunk == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    buf.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
    #[cfg(not(feature = "parallel"))]
    buf.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Shape bookkeeping for a 2-D convolution over NCHW input and OIKK kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeom {
    pub fn new(
        input: &[usize],
        kernel: &[usize],
        bias: &[usize],
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if input.len() != 4 || kernel.len() != 4 {
            return Err(Error::shape(
                "conv2d",
                format!("expected NCHW input and OIKK kernel, got {input:?} and {kernel:?}"),
            ));
        }
        let (n, c, h, w) = (input[0], input[1], input[2], input[3]);
        let (o, ci, kh, kw) = (kernel[0], kernel[1], kernel[2], kernel[3]);
        if ci != c {
            return Err(Error::shape(
                "conv2d",
                format!("input has {c} channels but kernel expects {ci}"),
            ));
        }
        if kh != kw {
            return Err(Error::shape(
                "conv2d",
                format!("non-square kernel {kh}x{kw}"),
            ));
        }
        if bias != [o] {
            return Err(Error::shape(
                "conv2d",
                format!("bias shape {bias:?} does not match {o} output channels"),
            ));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d stride must be >= 1".into()));
        }
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {kh} larger than padded input {h}x{w} (padding {padding})"),
            ));
        }
        Ok(Self {
            batch: n,
            in_channels: c,
            height: h,
            width: w,
            out_channels: o,
            kernel: kh,
            stride,
            padding,
            out_height: (h + 2 * padding - kh) / stride + 1,
            out_width: (w + 2 * padding - kw) / stride + 1,
        })
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [
            self.batch,
            self.out_channels,
            self.out_height,
            self.out_width,
        ]
    }

    fn col_rows(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn col_cols(&self) -> usize {
        self.out_height * self.out_width
    }

    fn in_plane(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    fn out_plane(&self) -> usize {
        self.out_channels * self.out_height * self.out_width
    }

    fn im2col<T: Float>(&self, x: &[T], cols: &mut [T]) {
        let (k, s, p) = (self.kernel, self.stride, self.padding as isize);
        let (h, w) = (self.height as isize, self.width as isize);
        let ncols = self.col_cols();
        for c in 0..self.in_channels {
            let plane = &x[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let dst = &mut cols[row * ncols..(row + 1) * ncols];
                    for oh in 0..self.out_height {
                        let ih = (oh * s + ki) as isize - p;
                        let line = &mut dst[oh * self.out_width..(oh + 1) * self.out_width];
                        if ih < 0 || ih >= h {
                            line.fill(T::zero());
                            continue;
                        }
                        let src = &plane[ih as usize * self.width..(ih as usize + 1) * self.width];
                        for (ow, v) in line.iter_mut().enumerate() {
                            let iw = (ow * s + kj) as isize - p;
                            *v = if iw < 0 || iw >= w {
                                T::zero()
                            } else {
                                src[iw as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Float>(&self, cols: &[T], dx: &mut [T]) {
        let (k, s, p) = (self.kernel, self.stride, self.padding as isize);
        let (h, w) = (self.height as isize, self.width as isize);
        let ncols = self.col_cols();
        for c in 0..self.in_channels {
            let plane = &mut dx[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let src = &cols[row * ncols..(row + 1) * ncols];
                    for oh in 0..self.out_height {
                        let ih = (oh * s + ki) as isize - p;
                        if ih < 0 || ih >= h {
                            continue;
                        }
                        let line = &src[oh * self.out_width..(oh + 1) * self.out_width];
                        let dst =
                            &mut plane[ih as usize * self.width..(ih as usize + 1) * self.width];
                        for (ow, &v) in line.iter().enumerate() {
                            let iw = (ow * s + kj) as isize - p;
                            if iw >= 0 && iw < w {
                                dst[iw as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Float>(g: &ConvGeom, x: &[T], kernel: &[T], bias: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); g.batch * g.out_plane()];
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    for_each_chunk(&mut out, g.out_plane(), |n, y| {
        let mut cols = vec![T::zero(); rows * ncols];
        g.im2col(&x[n * g.in_plane()..(n + 1) * g.in_plane()], &mut cols);
        for (o, chunk) in y.chunks_mut(ncols).enumerate() {
            chunk.fill(bias[o]);
        }
        gemm(
            g.out_channels,
            rows,
            ncols,
            kernel,
            false,
            &cols,
            false,
            T::one(),
            y,
        );
    });
    out
}

pub struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub kernel: Vec<T>,
    pub bias: Vec<T>,
}

pub fn conv2d_backward<T: Float>(
    g: &ConvGeom,
    x: &[T],
    kernel: &[T],
    dout: &[T],
    need_input: bool,
) -> ConvGrads<T> {
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let mut dx = need_input.then(|| vec![T::zero(); g.batch * g.in_plane()]);
    if let Some(dx) = dx.as_mut() {
        for_each_chunk(dx, g.in_plane(), |n, dxn| {
            let dy = &dout[n * g.out_plane()..(n + 1) * g.out_plane()];
            let mut dcols = vec![T::zero(); rows * ncols];
            gemm(
                rows,
                g.out_channels,
                ncols,
                kernel,
                true,
                dy,
                false,
                T::zero(),
                &mut dcols,
            );
            g.col2im(&dcols, dxn);
        });
    }
    let partials = map_indices(g.batch, |n| {
        let dy = &dout[n * g.out_plane()..(n + 1) * g.out_plane()];
        let mut cols = vec![T::zero(); rows * ncols];
        g.im2col(&x[n * g.in_plane()..(n + 1) * g.in_plane()], &mut cols);
        let mut dk = vec![T::zero(); g.out_channels * rows];
        gemm(
            g.out_channels,
            ncols,
            rows,
            dy,
            false,
            &cols,
            true,
            T::zero(),
            &mut dk,
        );
        let db: Vec<T> = dy.chunks(ncols).map(|c| c.iter().copied().sum()).collect();
        (dk, db)
    });
    let mut dk = vec![T::zero(); g.out_channels * rows];
    let mut db = vec![T::zero(); g.out_channels];
    for (pk, pb) in partials {
        dk.iter_mut().zip(pk).for_each(|(a, b)| *a += b);
        db.iter_mut().zip(pb).for_each(|(a, b)| *a += b);
    }
    ConvGrads {
        input: dx,
        kernel: dk,
        bias: db,
    }
}

/// Max pooling; returns the pooled values and, per output element, the flat
/// input index of the first maximum in scan order.
pub fn maxpool2d_forward<T: Float>(
    shape: &[usize],
    x: &[T],
    window: usize,
    stride: usize,
) -> Result<(Vec<usize>, Vec<T>, Vec<usize>)> {
    let [n, c, h, w] = nchw("maxpool2d", shape)?;
    if window == 0 || stride == 0 {
        return Err(Error::InvalidArgument(
            "maxpool2d window and stride must be >= 1".into(),
        ));
    }
    if window > h || window > w {
        return Err(Error::shape(
            "maxpool2d",
            format!("window {window} larger than input {h}x{w}"),
        ));
    }
    let (ho, wo) = ((h - window) / stride + 1, (w - window) / stride + 1);
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut arg = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oh in 0..ho {
            for ow in 0..wo {
                let mut best = base + oh * stride * w + ow * stride;
                for i in 0..window {
                    for j in 0..window {
                        let idx = base + (oh * stride + i) * w + ow * stride + j;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    Ok((vec![n, c, ho, wo], out, arg))
}

/// Bin boundaries `[floor(i*len/grid), floor((i+1)*len/grid))`.
pub fn adaptive_bins(len: usize, grid: usize) -> Vec<(usize, usize)> {
    (0..grid)
        .map(|i| (i * len / grid, (i + 1) * len / grid))
        .collect()
}

pub fn adaptive_avg_pool_forward<T: Float>(
    shape: &[usize],
    x: &[T],
    grid: usize,
) -> Result<(Vec<usize>, Vec<T>)> {
    let [n, c, h, w] = nchw("adaptive_avg_pool_grid", shape)?;
    if grid == 0 || grid > h || grid > w {
        return Err(Error::shape(
            "adaptive_avg_pool_grid",
            format!("grid {grid} does not fit input {h}x{w}"),
        ));
    }
    let (rows, cols) = (adaptive_bins(h, grid), adaptive_bins(w, grid));
    let mut out = Vec::with_capacity(n * c * grid * grid);
    for plane in 0..n * c {
        let p = &x[plane * h * w..(plane + 1) * h * w];
        for &(r0, r1) in &rows {
            for &(c0, c1) in &cols {
                let mut acc = T::zero();
                for r in r0..r1 {
                    for v in &p[r * w + c0..r * w + c1] {
                        acc += *v;
                    }
                }
                out.push(acc / T::of(((r1 - r0) * (c1 - c0)) as f64));
            }
        }
    }
    Ok((vec![n, c, grid, grid], out))
}

pub fn adaptive_avg_pool_backward<T: Float>(shape: &[usize], dout: &[T], grid: usize) -> Vec<T> {
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let (rows, cols) = (adaptive_bins(h, grid), adaptive_bins(w, grid));
    let mut dx = vec![T::zero(); n * c * h * w];
    for plane in 0..n * c {
        let d = &mut dx[plane * h * w..(plane + 1) * h * w];
        let g = &dout[plane * grid * grid..(plane + 1) * grid * grid];
        for (bi, &(r0, r1)) in rows.iter().enumerate() {
            for (bj, &(c0, c1)) in cols.iter().enumerate() {
                let share = g[bi * grid + bj] / T::of(((r1 - r0) * (c1 - c0)) as f64);
                for r in r0..r1 {
                    for v in &mut d[r * w + c0..r * w + c1] {
                        *v += share;
                    }
                }
            }
        }
    }
    dx
}

/// y = x·W + b for x: n×d, W: d×m.
pub fn linear_forward<T: Float>(
    n: usize,
    d: usize,
    m: usize,
    x: &[T],
    weight: &[T],
    bias: &[T],
) -> Vec<T> {
    let mut y: Vec<T> = (0..n).flat_map(|_| bias.iter().copied()).collect();
    gemm(n, d, m, x, false, weight, false, T::one(), &mut y);
    y
}

pub struct LinearGrads<T> {
    pub input: Vec<T>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

pub fn linear_backward<T: Float>(
    n: usize,
    d: usize,
    m: usize,
    x: &[T],
    weight: &[T],
    dy: &[T],
) -> LinearGrads<T> {
    let mut dx = vec![T::zero(); n * d];
    gemm(n, m, d, dy, false, weight, true, T::zero(), &mut dx);
    let mut dw = vec![T::zero(); d * m];
    gemm(d, n, m, x, true, dy, false, T::zero(), &mut dw);
    let mut db = vec![T::zero(); m];
    for row in dy.chunks(m.max(1)) {
        db.iter_mut().zip(row).for_each(|(a, b)| *a += *b);
    }
    LinearGrads {
        input: dx,
        weight: dw,
        bias: db,
    }
}

fn nchw(op: &'static str, shape: &[usize]) -> Result<[usize; 4]> {
    match shape {
        &[n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(Error::shape(
            op,
            format!("expected NCHW input, got {shape:?}"),
        )),
    }
}
