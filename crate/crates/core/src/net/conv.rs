//! Direct convolution through an explicit patch matrix.
//!
//! Image activations for a batch of `M` samples are stored as a
//! `C x (M*H*W)` matrix: row `c` holds channel `c` of every sample, sample
//! after sample, each in row-major `H x W` order.

use crate::linalg::{gemm_nn, gemm_nt, gemm_tn, Matrix, Real};

#[derive(Clone, Copy, Debug)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub height: usize,
    pub width: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeometry {
    fn patch_rows(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// Input coordinate for output position `o` and kernel offset `k`, if inside the image.
    #[inline]
    fn source(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }
}

/// Patch matrix `(C_in*k*k) x (M*H_out*W_out)`; row `(c, ky, kx)`, column `(m, oy, ox)`.
pub fn im2col<T: Real>(input: &Matrix<T>, geo: &ConvGeometry, batch: usize) -> Matrix<T> {
    let (h, w) = (geo.height, geo.width);
    let (oh, ow) = (geo.out_height, geo.out_width);
    let k = geo.kernel;
    let cols = batch * oh * ow;
    let mut patches = Matrix::zeros(geo.patch_rows(), cols);
    for c in 0..geo.in_channels {
        let src = input.row(c);
        for ky in 0..k {
            for kx in 0..k {
                let row = patches.row_mut((c * k + ky) * k + kx);
                for m in 0..batch {
                    let img = &src[m * h * w..(m + 1) * h * w];
                    for oy in 0..oh {
                        let Some(iy) = geo.source(oy, ky, h) else {
                            continue;
                        };
                        let dst = &mut row[(m * oh + oy) * ow..(m * oh + oy + 1) * ow];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            if let Some(ix) = geo.source(ox, kx, w) {
                                *d = img[iy * w + ix];
                            }
                        }
                    }
                }
            }
        }
    }
    patches
}

/// Scatters patch-matrix gradients back onto the input layout (adjoint of [`im2col`]).
pub fn col2im<T: Real>(dpatches: &Matrix<T>, geo: &ConvGeometry, batch: usize) -> Matrix<T> {
    let (h, w) = (geo.height, geo.width);
    let (oh, ow) = (geo.out_height, geo.out_width);
    let k = geo.kernel;
    let mut out = Matrix::zeros(geo.in_channels, batch * h * w);
    for c in 0..geo.in_channels {
        let dst = out.row_mut(c);
        for ky in 0..k {
            for kx in 0..k {
                let row = dpatches.row((c * k + ky) * k + kx);
                for m in 0..batch {
                    let img = &mut dst[m * h * w..(m + 1) * h * w];
                    for oy in 0..oh {
                        let Some(iy) = geo.source(oy, ky, h) else {
                            continue;
                        };
                        let src = &row[(m * oh + oy) * ow..(m * oh + oy + 1) * ow];
                        for (ox, &v) in src.iter().enumerate() {
                            if let Some(ix) = geo.source(ox, kx, w) {
                                img[iy * w + ix] += v;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns the output activation and the patch matrix kept for the backward pass.
pub fn conv2d_forward<T: Real>(
    input: &Matrix<T>,
    weight: &[T],
    bias: &[T],
    geo: &ConvGeometry,
    batch: usize,
) -> (Matrix<T>, Matrix<T>) {
    let patches = im2col(input, geo, batch);
    let n = patches.cols();
    let mut out = Matrix::zeros(geo.out_channels, n);
    for (o, &b) in bias.iter().enumerate() {
        out.row_mut(o).fill(b);
    }
    gemm_nn(
        geo.out_channels,
        geo.patch_rows(),
        n,
        weight,
        patches.as_slice(),
        out.as_mut_slice(),
    );
    (out, patches)
}

/// Accumulates weight and bias gradients; returns the input gradient when asked for.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<T: Real>(
    grad_out: &Matrix<T>,
    patches: &Matrix<T>,
    weight: &[T],
    grad_weight: &mut [T],
    grad_bias: &mut [T],
    geo: &ConvGeometry,
    batch: usize,
    input_grad: bool,
) -> Option<Matrix<T>> {
    let n = patches.cols();
    let kk = geo.patch_rows();
    gemm_nt(
        geo.out_channels,
        n,
        kk,
        grad_out.as_slice(),
        patches.as_slice(),
        grad_weight,
    );
    for (o, gb) in grad_bias.iter_mut().enumerate() {
        *gb += grad_out.row(o).iter().copied().sum::<T>();
    }
    if !input_grad {
        return None;
    }
    let mut dpatches = Matrix::zeros(kk, n);
    gemm_tn(
        kk,
        geo.out_channels,
        n,
        weight,
        grad_out.as_slice(),
        dpatches.as_mut_slice(),
    );
    Some(col2im(&dpatches, geo, batch))
}
