//! 2-D convolution (cross-correlation) over NCHW tensors via im2col + GEMM,
//! and nearest-neighbour upsampling.

use crate::error::{Result, TensorError};
use crate::ops::gemm_raw;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.n * self.ho * self.wo
    }
}

/// Unfolds `x` into a `(C*kh*kw, N*Ho*Wo)` matrix.
fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let cols = g.cols();
    let mut out = vec![0.0; g.rows() * cols];
    let hw_out = g.ho * g.wo;
    for c in 0..g.c {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst_row = &mut out[row * cols..(row + 1) * cols];
                for n in 0..g.n {
                    let src = &x[(n * g.c + c) * g.h * g.w..(n * g.c + c + 1) * g.h * g.w];
                    let dst = &mut dst_row[n * hw_out..(n + 1) * hw_out];
                    for oy in 0..g.ho {
                        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let src_row = &src[iy as usize * g.w..(iy as usize + 1) * g.w];
                        for ox in 0..g.wo {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && (ix as usize) < g.w {
                                dst[oy * g.wo + ox] = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`].
fn col2im(cols_buf: &[f64], g: &ConvGeom) -> Vec<f64> {
    let cols = g.cols();
    let mut x = vec![0.0; g.n * g.c * g.h * g.w];
    let hw_out = g.ho * g.wo;
    for c in 0..g.c {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src_row = &cols_buf[row * cols..(row + 1) * cols];
                for n in 0..g.n {
                    let dst = &mut x[(n * g.c + c) * g.h * g.w..(n * g.c + c + 1) * g.h * g.w];
                    let src = &src_row[n * hw_out..(n + 1) * hw_out];
                    for oy in 0..g.ho {
                        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        for ox in 0..g.wo {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && (ix as usize) < g.w {
                                dst[iy as usize * g.w + ix as usize] += src[oy * g.wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

/// Cross-correlation of `x: (N,C,H,W)` with `weight: (O,C,kh,kw)` plus an
/// optional `bias: (O)`. Output spatial size is
/// `(H + 2·pad − kh)/stride + 1`, which for a 3×3 kernel with pad 1 is
/// `ceil(H/stride)`.
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>, stride: usize, pad: usize) -> Result<Tensor> {
    let (xs, ws) = (x.shape().to_vec(), weight.shape().to_vec());
    if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] {
        return Err(TensorError::shape("conv2d", &xs, &ws));
    }
    if stride == 0 {
        return Err(TensorError::invalid("conv2d", "stride must be positive"));
    }
    let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
    let (o, kh, kw) = (ws[0], ws[2], ws[3]);
    if h + 2 * pad < kh || w + 2 * pad < kw {
        return Err(TensorError::invalid("conv2d", "kernel larger than padded input"));
    }
    if let Some(b) = bias {
        if b.shape() != [o] {
            return Err(TensorError::shape("conv2d bias", b.shape(), &[o]));
        }
    }
    let g = ConvGeom {
        n,
        c,
        h,
        w,
        kh,
        kw,
        stride,
        pad,
        ho: (h + 2 * pad - kh) / stride + 1,
        wo: (w + 2 * pad - kw) / stride + 1,
    };
    let (rows, cols) = (g.rows(), g.cols());
    let hw_out = g.ho * g.wo;

    let cols_buf = im2col(&x.data(), &g);
    // (O, rows) x (rows, N*Ho*Wo)
    let mut y = vec![0.0; o * cols];
    gemm_raw(
        o,
        rows,
        cols,
        &weight.data(),
        rows,
        1,
        &cols_buf,
        cols,
        1,
        &mut y,
        cols,
        1,
        0.0,
    );
    drop(cols_buf);
    // Reorder (O, N, HW) -> (N, O, HW) and add bias.
    let mut out = vec![0.0; n * o * hw_out];
    {
        let bias_data = bias.map(|b| b.to_vec());
        for oc in 0..o {
            let bv = bias_data.as_ref().map_or(0.0, |b| b[oc]);
            for ni in 0..n {
                let src = &y[oc * cols + ni * hw_out..oc * cols + (ni + 1) * hw_out];
                let dst = &mut out[(ni * o + oc) * hw_out..(ni * o + oc + 1) * hw_out];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = s + bv;
                }
            }
        }
    }

    let (tx, tw) = (x.clone(), weight.clone());
    let has_bias = bias.is_some();
    let mut inputs: Vec<&Tensor> = vec![x, weight];
    if let Some(b) = bias {
        inputs.push(b);
    }
    Tensor::from_op("conv2d", out, vec![n, o, g.ho, g.wo], &inputs, move |gout, _| {
        // (N, O, HW) -> (O, N*HW)
        let mut gm = vec![0.0; o * cols];
        for ni in 0..n {
            for oc in 0..o {
                let src = &gout[(ni * o + oc) * hw_out..(ni * o + oc + 1) * hw_out];
                gm[oc * cols + ni * hw_out..oc * cols + (ni + 1) * hw_out].copy_from_slice(src);
            }
        }
        let need_w = tw.requires_grad();
        let need_x = tx.requires_grad();
        let cols_buf = if need_w { Some(im2col(&tx.data(), &g)) } else { None };
        let gw = cols_buf.as_ref().map(|cb| {
            // dW = G (O, cols) · cols^T (cols, rows)
            let mut gw = vec![0.0; o * rows];
            gemm_raw(o, cols, rows, &gm, cols, 1, cb, 1, cols, &mut gw, rows, 1, 0.0);
            gw
        });
        let gx = need_x.then(|| {
            // dcols = W^T (rows, O) · G (O, cols)
            let mut dcols = vec![0.0; rows * cols];
            gemm_raw(
                rows,
                o,
                cols,
                &tw.data(),
                1,
                rows,
                &gm,
                cols,
                1,
                &mut dcols,
                cols,
                1,
                0.0,
            );
            col2im(&dcols, &g)
        });
        let mut grads = vec![gx, gw];
        if has_bias {
            let gb: Vec<f64> = (0..o).map(|oc| gm[oc * cols..(oc + 1) * cols].iter().sum()).collect();
            grads.push(Some(gb));
        }
        grads
    })
}

/// Nearest-neighbour upsampling of `(N,C,H,W)` by an integer factor.
pub fn upsample_nearest(x: &Tensor, factor: usize) -> Result<Tensor> {
    let s = x.shape().to_vec();
    if s.len() != 4 || factor == 0 {
        return Err(TensorError::invalid(
            "upsample_nearest",
            format!("shape {s:?}, factor {factor}"),
        ));
    }
    let (nc, h, w) = (s[0] * s[1], s[2], s[3]);
    let (h2, w2) = (h * factor, w * factor);
    let mut out = vec![0.0; nc * h2 * w2];
    {
        let src = x.data();
        for p in 0..nc {
            for y in 0..h2 {
                for xx in 0..w2 {
                    out[(p * h2 + y) * w2 + xx] = src[(p * h + y / factor) * w + xx / factor];
                }
            }
        }
    }
    Tensor::from_op("upsample_nearest", out, vec![s[0], s[1], h2, w2], &[x], move |g, _| {
        let mut gi = vec![0.0; nc * h * w];
        for p in 0..nc {
            for y in 0..h2 {
                for xx in 0..w2 {
                    gi[(p * h + y / factor) * w + xx / factor] += g[(p * h2 + y) * w2 + xx];
                }
            }
        }
        vec![Some(gi)]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_reproduces_input() {
        let data: Vec<f64> = (0..2 * 5 * 4).map(|v| v as f64 * 0.3 - 2.0).collect();
        let x = Tensor::new(data.clone(), &[1, 2, 5, 4]).unwrap();
        // Per-channel identity: out channel o copies in channel o.
        let mut k = vec![0.0; 2 * 2 * 9];
        k[4] = 1.0;
        k[(1 * 2 + 1) * 9 + 4] = 1.0;
        let w = Tensor::new(k, &[2, 2, 3, 3]).unwrap();
        let y = conv2d(&x, &w, None, 1, 1).unwrap();
        assert_eq!(y.shape(), &[1, 2, 5, 4]);
        assert_eq!(y.to_vec(), data);
    }

    #[test]
    fn ones_kernel_on_constant_gives_nine_c_inside() {
        let x = Tensor::full(&[1, 1, 6, 6], 2.5);
        let w = Tensor::ones(&[1, 1, 3, 3]);
        let y = conv2d(&x, &w, None, 1, 1).unwrap().to_vec();
        for r in 1..5 {
            for c in 1..5 {
                assert!((y[r * 6 + c] - 22.5).abs() < 1e-12);
            }
        }
        // corners see 4 taps
        assert!((y[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn strided_output_size_is_ceil() {
        for h in [4usize, 5, 8, 16] {
            let x = Tensor::zeros(&[1, 1, h, h]);
            let w = Tensor::zeros(&[3, 1, 3, 3]);
            let y = conv2d(&x, &w, None, 2, 1).unwrap();
            assert_eq!(y.shape(), &[1, 3, h.div_ceil(2), h.div_ceil(2)]);
        }
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let x = Tensor::zeros(&[1, 2, 4, 4]);
        let w = Tensor::zeros(&[1, 3, 3, 3]);
        assert!(conv2d(&x, &w, None, 1, 1).is_err());
    }

    #[test]
    fn upsample_repeats_pixels() {
        let x = Tensor::new(vec![1.0, 2.0, 3.0, 4.0], &[1, 1, 2, 2]).unwrap();
        let y = upsample_nearest(&x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 4, 4]);
        assert_eq!(&y.to_vec()[..4], &[1.0, 1.0, 2.0, 2.0]);
    }
}
