//! Stride-1 2-D convolution (cross-correlation) kernels used by the tape.
//!
//! Forward and backward are im2col + GEMM. Reflect padding keeps the output
//! the same size as the input; valid padding shrinks it. Large inference
//! forwards run in fixed-size row blocks in parallel; every output element is
//! accumulated in the same order regardless of thread count, so results are
//! bitwise reproducible.

use rayon::prelude::*;

use crate::autodiff::tensor::{Element, Shape, Tensor};
use crate::error::{FusionError, Result};

/// How the input is padded before the kernel slides over it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Mirror the interior across each border (no edge repeat); output keeps
    /// the input's spatial size. Requires odd kernels.
    Reflect,
    /// No padding; output shrinks by kernel-1 in each dimension.
    Valid,
}

/// Resolved geometry for one convolution call.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub h: usize,
    pub w: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn resolve(input: Shape, weight: Shape, bias: Shape, padding: Padding) -> Result<Self> {
        let (out_ch, in_ch, kh, kw) = (weight.batch, weight.channels, weight.height, weight.width);
        if input.channels != in_ch {
            return Err(FusionError::InvalidShape(format!(
                "conv2d: input has {} channels but weight expects {}",
                input.channels, in_ch
            )));
        }
        if bias != Shape::new(1, out_ch, 1, 1) {
            return Err(FusionError::InvalidShape(format!(
                "conv2d: bias shape {} does not broadcast over {} output channels",
                bias, out_ch
            )));
        }
        if kh == 0 || kw == 0 || out_ch == 0 || in_ch == 0 {
            return Err(FusionError::InvalidShape(format!(
                "conv2d: degenerate weight shape {}",
                weight
            )));
        }
        let (h, w) = (input.height, input.width);
        let (pad_h, pad_w, out_h, out_w) = match padding {
            Padding::Reflect => {
                if kh % 2 == 0 || kw % 2 == 0 {
                    return Err(FusionError::InvalidShape(format!(
                        "conv2d: reflect padding requires odd kernels, got {}x{}",
                        kh, kw
                    )));
                }
                let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
                // Reflection without edge repeat needs pad < size.
                if ph >= h || pw >= w {
                    return Err(FusionError::InvalidShape(format!(
                        "conv2d: kernel {}x{} larger than padded {}x{} input",
                        kh, kw, h, w
                    )));
                }
                (ph, pw, h, w)
            }
            Padding::Valid => {
                if kh > h || kw > w {
                    return Err(FusionError::InvalidShape(format!(
                        "conv2d: kernel {}x{} larger than {}x{} input",
                        kh, kw, h, w
                    )));
                }
                (0, 0, h - kh + 1, w - kw + 1)
            }
        };
        Ok(ConvGeom {
            batch: input.batch,
            in_ch,
            h,
            w,
            out_ch,
            kh,
            kw,
            pad_h,
            pad_w,
            out_h,
            out_w,
        })
    }

    fn cols_rows(&self) -> usize {
        self.in_ch * self.kh * self.kw
    }

    fn padded_h(&self) -> usize {
        self.h + 2 * self.pad_h
    }

    fn padded_w(&self) -> usize {
        self.w + 2 * self.pad_w
    }
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if i < 0 {
        (-i) as usize
    } else if (i as usize) < n {
        i as usize
    } else {
        2 * (n - 1) - i as usize
    }
}

/// Copies one batch item into a (in_ch, h+2p, w+2p) buffer with reflected
/// borders (identity copy when pad is zero).
fn pad_batch_item<T: Element>(geom: &ConvGeom, input: &[T], b: usize, out: &mut [T]) {
    let (h, w) = (geom.h, geom.w);
    let (hp, wp) = (geom.padded_h(), geom.padded_w());
    let src_base = b * geom.in_ch * h * w;
    for c in 0..geom.in_ch {
        let src = &input[src_base + c * h * w..src_base + (c + 1) * h * w];
        let dst = &mut out[c * hp * wp..(c + 1) * hp * wp];
        for py in 0..hp {
            let sy = reflect(py as isize - geom.pad_h as isize, h);
            for px in 0..wp {
                let sx = reflect(px as isize - geom.pad_w as isize, w);
                dst[py * wp + px] = src[sy * w + sx];
            }
        }
    }
}

/// Writes im2col rows for output rows `y0..y1` of one padded batch item.
/// Layout: cols[(ic*kh + ky)*kw + kx][ (y-y0)*out_w + x ].
fn im2col_rows<T: Element>(geom: &ConvGeom, padded: &[T], y0: usize, y1: usize, cols: &mut [T]) {
    let wp = geom.padded_w();
    let hp = geom.padded_h();
    let n = (y1 - y0) * geom.out_w;
    let fill_row = |kk: usize, row: &mut [T]| {
        let kx = kk % geom.kw;
        let ky = (kk / geom.kw) % geom.kh;
        let ic = kk / (geom.kw * geom.kh);
        let plane = &padded[ic * hp * wp..(ic + 1) * hp * wp];
        for y in y0..y1 {
            let src = &plane[(y + ky) * wp + kx..(y + ky) * wp + kx + geom.out_w];
            row[(y - y0) * geom.out_w..(y - y0 + 1) * geom.out_w].copy_from_slice(src);
        }
    };
    if cols.len() >= 1 << 20 {
        cols.par_chunks_mut(n).enumerate().for_each(|(kk, row)| fill_row(kk, row));
    } else {
        for (kk, row) in cols.chunks_mut(n).enumerate() {
            fill_row(kk, row);
        }
    }
}

/// Scatter-adds im2col-layout gradients back onto the padded image.
fn col2im_add<T: Element>(geom: &ConvGeom, dcols: &[T], dpadded: &mut [T]) {
    let wp = geom.padded_w();
    let hp = geom.padded_h();
    let n = geom.out_h * geom.out_w;
    let mut kk = 0;
    for ic in 0..geom.in_ch {
        let plane = &mut dpadded[ic * hp * wp..(ic + 1) * hp * wp];
        for ky in 0..geom.kh {
            for kx in 0..geom.kw {
                let row = &dcols[kk * n..(kk + 1) * n];
                for y in 0..geom.out_h {
                    let dst = &mut plane[(y + ky) * wp + kx..(y + ky) * wp + kx + geom.out_w];
                    let src = &row[y * geom.out_w..(y + 1) * geom.out_w];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d = *d + *s;
                    }
                }
                kk += 1;
            }
        }
    }
}

/// Folds a padded gradient back onto the source image, accumulating every
/// reflected position into the interior pixel it mirrors.
fn unpad_add<T: Element>(geom: &ConvGeom, dpadded: &[T], dinput: &mut [T], b: usize) {
    let (h, w) = (geom.h, geom.w);
    let (hp, wp) = (geom.padded_h(), geom.padded_w());
    let dst_base = b * geom.in_ch * h * w;
    for c in 0..geom.in_ch {
        let src = &dpadded[c * hp * wp..(c + 1) * hp * wp];
        let dst = &mut dinput[dst_base + c * h * w..dst_base + (c + 1) * h * w];
        for py in 0..hp {
            let sy = reflect(py as isize - geom.pad_h as isize, h);
            for px in 0..wp {
                let sx = reflect(px as isize - geom.pad_w as isize, w);
                dst[sy * w + sx] = dst[sy * w + sx] + src[py * wp + px];
            }
        }
    }
}

/// Output rows per parallel block; fixed so results never depend on the
/// machine's thread count.
const ROW_BLOCK: usize = 8;
/// Below this much GEMM work the blocked/parallel path is not worth it.
const PARALLEL_MIN_FLOPS: usize = 1 << 22;

/// Row-major `c = a(m×k)·b(k×n) + beta·c`, split into two fixed column
/// halves on separate threads when the work is large. The split never
/// changes any element's accumulation order, so results are bitwise
/// identical to the serial call.
pub(crate) fn par_gemm<T: Element>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    b: &[T],
    beta: T,
    c: &mut [T],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if 2 * m * k * n < PARALLEL_MIN_FLOPS || n < 2 {
        T::gemm(m, k, n, a, b, beta, c);
        return;
    }
    let half = n / 2;
    let a_ptr = SendConstPtr(a.as_ptr());
    let b_ptr = SendConstPtr(b.as_ptr());
    let c_ptr = SendMutPtr(c.as_mut_ptr());
    rayon::join(
        || unsafe {
            T::gemm_raw(
                m, k, half,
                a_ptr.get(), k as isize, 1,
                b_ptr.get(), n as isize, 1,
                beta,
                c_ptr.get(), n as isize, 1,
            );
        },
        || unsafe {
            T::gemm_raw(
                m, k, n - half,
                a_ptr.get(), k as isize, 1,
                b_ptr.get().add(half), n as isize, 1,
                beta,
                c_ptr.get().add(half), n as isize, 1,
            );
        },
    );
}

struct SendConstPtr<T>(*const T);
unsafe impl<T> Send for SendConstPtr<T> {}
unsafe impl<T> Sync for SendConstPtr<T> {}
impl<T> SendConstPtr<T> {
    fn get(&self) -> *const T {
        self.0
    }
}

struct SendMutPtr<T>(*mut T);
unsafe impl<T> Send for SendMutPtr<T> {}
unsafe impl<T> Sync for SendMutPtr<T> {}
impl<T> SendMutPtr<T> {
    fn get(&self) -> *mut T {
        self.0
    }
}

/// Forward convolution. When `keep_cols` is set the per-batch im2col
/// matrices are returned for reuse by the weight-gradient GEMM.
pub(crate) fn conv2d_forward<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    padding: Padding,
    keep_cols: bool,
) -> Result<(Tensor<T>, Option<Vec<Vec<T>>>)> {
    let geom = ConvGeom::resolve(input.shape(), weight.shape(), bias.shape(), padding)?;
    let k = geom.cols_rows();
    let n = geom.out_h * geom.out_w;
    let mut out = Tensor::zeros(Shape::new(geom.batch, geom.out_ch, geom.out_h, geom.out_w));
    let mut kept: Option<Vec<Vec<T>>> = keep_cols.then(Vec::new);

    let padded_len = geom.in_ch * geom.padded_h() * geom.padded_w();
    for b in 0..geom.batch {
        let out_slice = &mut out.data_mut()[b * geom.out_ch * n..(b + 1) * geom.out_ch * n];
        T::with_scratch(1, padded_len, |padded| {
            pad_batch_item(&geom, input.data(), b, padded);
            if keep_cols {
                // These columns outlive the call (reused by the weight
                // gradient), so they get their own allocation.
                let mut cols = vec![T::zero(); k * n];
                im2col_rows(&geom, padded, 0, geom.out_h, &mut cols);
                par_gemm(geom.out_ch, k, n, weight.data(), &cols, T::zero(), out_slice);
                kept.as_mut().unwrap().push(cols);
            } else if 2 * geom.out_ch * k * n >= PARALLEL_MIN_FLOPS {
                let blocks: Vec<(usize, usize)> = (0..geom.out_h)
                    .step_by(ROW_BLOCK)
                    .map(|y0| (y0, (y0 + ROW_BLOCK).min(geom.out_h)))
                    .collect();
                let padded_ref = &*padded;
                let w_ptr = SendConstPtr(weight.data().as_ptr());
                let out_ptr = SendMutPtr(out_slice.as_mut_ptr());
                // Blocks cover disjoint output rows within every channel
                // plane; the strided write targets never overlap.
                blocks.par_iter().for_each(|&(y0, y1)| {
                    let bn = (y1 - y0) * geom.out_w;
                    T::with_scratch(0, k * bn, |cols| {
                        im2col_rows(&geom, padded_ref, y0, y1, cols);
                        unsafe {
                            T::gemm_raw(
                                geom.out_ch,
                                k,
                                bn,
                                w_ptr.get(),
                                k as isize,
                                1,
                                cols.as_ptr(),
                                bn as isize,
                                1,
                                T::zero(),
                                out_ptr.get().add(y0 * geom.out_w),
                                n as isize,
                                1,
                            );
                        }
                    });
                });
            } else {
                T::with_scratch(0, k * n, |cols| {
                    im2col_rows(&geom, padded, 0, geom.out_h, cols);
                    T::gemm(geom.out_ch, k, n, weight.data(), cols, T::zero(), out_slice);
                });
            }
        });
        for c in 0..geom.out_ch {
            let bv = bias.data()[c];
            for v in &mut out_slice[c * n..(c + 1) * n] {
                *v = *v + bv;
            }
        }
    }
    Ok((out, kept))
}

pub(crate) struct ConvGrads<T: Element> {
    pub input: Option<Vec<T>>,
    pub weight: Option<Vec<T>>,
    pub bias: Option<Vec<T>>,
}

/// Backward convolution. `cols` must be the forward's im2col matrices when a
/// weight gradient is requested; the input gradient never needs them.
pub(crate) fn conv2d_backward<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    padding: Padding,
    grad_out: &[T],
    cols: Option<&[Vec<T>]>,
    want: (bool, bool, bool),
) -> Result<ConvGrads<T>> {
    let geom = ConvGeom::resolve(input.shape(), weight.shape(), bias.shape(), padding)?;
    let k = geom.cols_rows();
    let n = geom.out_h * geom.out_w;
    let (want_dx, want_dw, want_db) = want;

    let mut dinput = want_dx.then(|| vec![T::zero(); input.numel()]);
    let mut dweight = want_dw.then(|| vec![T::zero(); weight.numel()]);
    let mut dbias = want_db.then(|| vec![T::zero(); geom.out_ch]);

    let mut own_cols = Vec::new();
    let cols: Option<&[Vec<T>]> = if want_dw {
        match cols {
            Some(c) => Some(c),
            // Recompute when the forward did not keep them.
            None => {
                let mut padded = vec![T::zero(); geom.in_ch * geom.padded_h() * geom.padded_w()];
                for b in 0..geom.batch {
                    pad_batch_item(&geom, input.data(), b, &mut padded);
                    let mut c = vec![T::zero(); k * n];
                    im2col_rows(&geom, &padded, 0, geom.out_h, &mut c);
                    own_cols.push(c);
                }
                Some(&own_cols)
            }
        }
    } else {
        None
    };

    let dpadded_len = geom.in_ch * geom.padded_h() * geom.padded_w();
    for b in 0..geom.batch {
        let dy = &grad_out[b * geom.out_ch * n..(b + 1) * geom.out_ch * n];

        if let Some(db) = dbias.as_mut() {
            for c in 0..geom.out_ch {
                let mut acc = T::zero();
                for v in &dy[c * n..(c + 1) * n] {
                    acc = acc + *v;
                }
                db[c] = db[c] + acc;
            }
        }

        if let Some(dw) = dweight.as_mut() {
            // dW(out_ch × k) += dY(out_ch × n) · colsᵀ(n × k)
            let x = &cols.unwrap()[b];
            let split = 2 * geom.out_ch * n * k >= PARALLEL_MIN_FLOPS && k >= 2;
            let half = k / 2;
            let dy_ptr = SendConstPtr(dy.as_ptr());
            let x_ptr = SendConstPtr(x.as_ptr());
            let dw_ptr = SendMutPtr(dw.as_mut_ptr());
            let run = |col0: usize, cols_n: usize| unsafe {
                T::gemm_raw(
                    geom.out_ch,
                    n,
                    cols_n,
                    dy_ptr.get(),
                    n as isize,
                    1,
                    x_ptr.get().add(col0 * n),
                    1,
                    n as isize,
                    T::one(),
                    dw_ptr.get().add(col0),
                    k as isize,
                    1,
                );
            };
            if split {
                rayon::join(|| run(0, half), || run(half, k - half));
            } else {
                run(0, k);
            }
        }

        if let Some(dx) = dinput.as_mut() {
            // dCols(k × n) = Wᵀ(k × out_ch) · dY(out_ch × n)
            T::with_scratch(0, k * n, |dc| {
                let split = 2 * k * geom.out_ch * n >= PARALLEL_MIN_FLOPS && n >= 2;
                let half = n / 2;
                let w_ptr = SendConstPtr(weight.data().as_ptr());
                let dy_ptr = SendConstPtr(dy.as_ptr());
                let dc_ptr = SendMutPtr(dc.as_mut_ptr());
                let run = |col0: usize, cols_n: usize| unsafe {
                    T::gemm_raw(
                        k,
                        geom.out_ch,
                        cols_n,
                        w_ptr.get(),
                        1,
                        k as isize,
                        dy_ptr.get().add(col0),
                        n as isize,
                        1,
                        T::zero(),
                        dc_ptr.get().add(col0),
                        n as isize,
                        1,
                    );
                };
                if split {
                    rayon::join(|| run(0, half), || run(half, n - half));
                } else {
                    run(0, n);
                }
                T::with_scratch(1, dpadded_len, |dpadded| {
                    for v in dpadded.iter_mut() {
                        *v = T::zero();
                    }
                    col2im_add(&geom, dc, dpadded);
                    unpad_add(&geom, dpadded, dx, b);
                });
            });
        }
    }

    Ok(ConvGrads {
        input: dinput,
        weight: dweight,
        bias: dbias,
    })
}

/// 2-D Gaussian window of odd size that sums to one.
pub fn gaussian_window<T: Element>(size: usize, sigma: f64) -> Result<Tensor<T>> {
    if size < 3 || size % 2 == 0 {
        return Err(FusionError::InvalidArgument(format!(
            "gaussian window size must be odd and >= 3, got {}",
            size
        )));
    }
    if !(sigma > 0.0) {
        return Err(FusionError::InvalidArgument(format!(
            "gaussian window sigma must be positive, got {}",
            sigma
        )));
    }
    let half = (size / 2) as f64;
    let mut line = Vec::with_capacity(size);
    let mut sum = 0.0;
    for i in 0..size {
        let d = i as f64 - half;
        let v = (-d * d / (2.0 * sigma * sigma)).exp();
        line.push(v);
        sum += v;
    }
    for v in &mut line {
        *v /= sum;
    }
    let mut data = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            data.push(T::from_f64(line[y] * line[x]));
        }
    }
    Tensor::new(Shape::new(1, 1, size, size), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_conv_reflect(
        input: &Tensor<f64>,
        weight: &Tensor<f64>,
        bias: &Tensor<f64>,
    ) -> Tensor<f64> {
        let (is, ws) = (input.shape(), weight.shape());
        let (ph, pw) = ((ws.height - 1) / 2, (ws.width - 1) / 2);
        let mut out = Tensor::zeros(Shape::new(is.batch, ws.batch, is.height, is.width));
        for b in 0..is.batch {
            for oc in 0..ws.batch {
                for y in 0..is.height {
                    for x in 0..is.width {
                        let mut acc = bias.data()[oc];
                        for ic in 0..ws.channels {
                            for ky in 0..ws.height {
                                for kx in 0..ws.width {
                                    let sy = reflect(y as isize + ky as isize - ph as isize, is.height);
                                    let sx = reflect(x as isize + kx as isize - pw as isize, is.width);
                                    acc += input.at(b, ic, sy, sx) * weight.at(oc, ic, ky, kx);
                                }
                            }
                        }
                        let off = out.shape().offset(b, oc, y, x);
                        out.data_mut()[off] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn reflect_indexing() {
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(0, 5), 0);
        assert_eq!(reflect(4, 5), 4);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(6, 5), 2);
    }

    #[test]
    fn ones_kernel_on_ones_image_center_is_nine() {
        let input = Tensor::filled(Shape::new(1, 1, 3, 3), 1.0f64);
        let weight = Tensor::filled(Shape::new(1, 1, 3, 3), 1.0);
        let bias = Tensor::zeros(Shape::new(1, 1, 1, 1));
        let (out, _) = conv2d_forward(&input, &weight, &bias, Padding::Reflect, false).unwrap();
        assert_eq!(out.at(0, 0, 1, 1), 9.0);
        // Reflection of an all-ones image is all ones, so every pixel is 9.
        assert!(out.data().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn one_by_one_conv_is_affine() {
        let input = Tensor::new(Shape::new(1, 1, 1, 1), vec![3.0f64]).unwrap();
        let weight = Tensor::new(Shape::new(1, 1, 1, 1), vec![2.0]).unwrap();
        let bias = Tensor::new(Shape::new(1, 1, 1, 1), vec![0.5]).unwrap();
        let (out, _) = conv2d_forward(&input, &weight, &bias, Padding::Valid, false).unwrap();
        assert_eq!(out.data(), &[6.5]);
    }

    #[test]
    fn gemm_path_matches_scalar_loop() {
        use rand::prelude::*;
        use rand_chacha::ChaCha12Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let input = Tensor::new(
            Shape::new(2, 3, 7, 6),
            (0..2 * 3 * 7 * 6).map(|_| rng.random::<f64>() - 0.5).collect(),
        )
        .unwrap();
        let weight = Tensor::new(
            Shape::new(4, 3, 5, 3),
            (0..4 * 3 * 5 * 3).map(|_| rng.random::<f64>() - 0.5).collect(),
        )
        .unwrap();
        let bias = Tensor::new(
            Shape::new(1, 4, 1, 1),
            (0..4).map(|_| rng.random::<f64>() - 0.5).collect(),
        )
        .unwrap();
        let (fast, _) = conv2d_forward(&input, &weight, &bias, Padding::Reflect, false).unwrap();
        let slow = scalar_conv_reflect(&input, &weight, &bias);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn keep_cols_path_matches_blocked_path() {
        use rand::prelude::*;
        use rand_chacha::ChaCha12Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let input = Tensor::new(
            Shape::new(1, 2, 40, 40),
            (0..2 * 40 * 40).map(|_| rng.random::<f64>()).collect(),
        )
        .unwrap();
        let weight = Tensor::new(
            Shape::new(8, 2, 3, 3),
            (0..8 * 2 * 9).map(|_| rng.random::<f64>() - 0.5).collect(),
        )
        .unwrap();
        let bias = Tensor::zeros(Shape::new(1, 8, 1, 1));
        let (a, cols) = conv2d_forward(&input, &weight, &bias, Padding::Reflect, true).unwrap();
        let (b, _) = conv2d_forward(&input, &weight, &bias, Padding::Reflect, false).unwrap();
        assert!(cols.is_some());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn valid_padding_shrinks_output() {
        let input = Tensor::filled(Shape::new(1, 1, 8, 8), 1.0f64);
        let weight = Tensor::filled(Shape::new(1, 1, 3, 3), 1.0);
        let bias = Tensor::zeros(Shape::new(1, 1, 1, 1));
        let (out, _) = conv2d_forward(&input, &weight, &bias, Padding::Valid, false).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 1, 6, 6));
        assert!(out.data().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn oversized_kernel_is_invalid_shape() {
        let input = Tensor::filled(Shape::new(1, 1, 4, 4), 1.0f64);
        let weight = Tensor::filled(Shape::new(1, 1, 9, 9), 1.0);
        let bias = Tensor::zeros(Shape::new(1, 1, 1, 1));
        for padding in [Padding::Reflect, Padding::Valid] {
            let err = conv2d_forward(&input, &weight, &bias, padding, false).unwrap_err();
            assert!(matches!(err, FusionError::InvalidShape(_)));
        }
    }

    #[test]
    fn channel_mismatch_is_invalid_shape() {
        let input = Tensor::filled(Shape::new(1, 2, 8, 8), 1.0f64);
        let weight = Tensor::filled(Shape::new(1, 3, 3, 3), 1.0);
        let bias = Tensor::zeros(Shape::new(1, 1, 1, 1));
        let err = conv2d_forward(&input, &weight, &bias, Padding::Reflect, false).unwrap_err();
        assert!(matches!(err, FusionError::InvalidShape(_)));
    }

    #[test]
    fn gaussian_window_rejects_even_size() {
        assert!(gaussian_window::<f64>(4, 1.5).is_err());
        assert!(gaussian_window::<f64>(11, 0.0).is_err());
    }

    #[test]
    fn gaussian_window_near_uniform_for_huge_sigma() {
        let w = gaussian_window::<f64>(3, 1e6).unwrap();
        for &v in w.data() {
            assert!((v - 1.0 / 9.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_window_11_sigma_1_5() {
        let w = gaussian_window::<f64>(11, 1.5).unwrap();
        let sum: f64 = w.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        // Independent direct evaluation of the normalized separable Gaussian.
        let mut line = [0.0f64; 11];
        for (i, v) in line.iter_mut().enumerate() {
            let d = i as f64 - 5.0;
            *v = (-d * d / (2.0 * 1.5 * 1.5)).exp();
        }
        let s: f64 = line.iter().sum();
        let center = (line[5] / s) * (line[5] / s);
        assert!((w.at(0, 0, 5, 5) - center).abs() < 1e-15);
        assert!((w.at(0, 0, 5, 5) - 0.0708).abs() < 2e-4);
        // Flip symmetry.
        for y in 0..11 {
            for x in 0..11 {
                assert_eq!(w.at(0, 0, y, x), w.at(0, 0, 10 - y, x));
                assert_eq!(w.at(0, 0, y, x), w.at(0, 0, y, 10 - x));
            }
        }
    }
}
