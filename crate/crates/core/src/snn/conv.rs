//! Same-padded 2-D convolution through im2col + GEMM.
//!
//! Activations are stored channel-major with time folded into the spatial
//! axis: `[channel][frame][y][x]`. A convolution never mixes frames, so all
//! `T` timesteps of a layer go through one GEMM.

use super::real::{gemm, MatRef, Real};

/// Geometry of one activation tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl Geometry {
    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    /// Columns per channel: frames x plane.
    pub fn span(&self) -> usize {
        self.frames * self.plane()
    }
}

/// Unfolds `[ch][frames][h][w]` into a `(ch*k*k) x (frames*h*w)` matrix.
pub fn im2col<F: Real>(input: &[F], ch: usize, g: Geometry, k: usize, col: &mut Vec<F>) {
    let (h, w) = (g.height, g.width);
    let plane = g.plane();
    let span = g.span();
    debug_assert_eq!(input.len(), ch * span);
    let r = (k / 2) as isize;
    col.clear();
    col.resize(ch * k * k * span, F::zero());
    for c in 0..ch {
        let src_ch = &input[c * span..(c + 1) * span];
        for ky in 0..k {
            let dy = ky as isize - r;
            for kx in 0..k {
                let dx = kx as isize - r;
                let row = (c * k + ky) * k + kx;
                let dst = &mut col[row * span..(row + 1) * span];
                let (x0, x1) = valid_range(w, dx);
                for f in 0..g.frames {
                    let src = &src_ch[f * plane..(f + 1) * plane];
                    let dst = &mut dst[f * plane..(f + 1) * plane];
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize || x0 >= x1 {
                            continue;
                        }
                        let s = sy as usize * w;
                        let d = &mut dst[y * w + x0..y * w + x1];
                        let sx0 = (x0 as isize + dx) as usize;
                        d.copy_from_slice(&src[s + sx0..s + sx0 + (x1 - x0)]);
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back onto `[ch][frames][h][w]`.
pub fn col2im<F: Real>(col: &[F], ch: usize, g: Geometry, k: usize, out: &mut [F]) {
    let (h, w) = (g.height, g.width);
    let plane = g.plane();
    let span = g.span();
    debug_assert_eq!(out.len(), ch * span);
    let r = (k / 2) as isize;
    for c in 0..ch {
        let dst_ch = &mut out[c * span..(c + 1) * span];
        for ky in 0..k {
            let dy = ky as isize - r;
            for kx in 0..k {
                let dx = kx as isize - r;
                let row = (c * k + ky) * k + kx;
                let src = &col[row * span..(row + 1) * span];
                let (x0, x1) = valid_range(w, dx);
                for f in 0..g.frames {
                    let src = &src[f * plane..(f + 1) * plane];
                    let dst = &mut dst_ch[f * plane..(f + 1) * plane];
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize || x0 >= x1 {
                            continue;
                        }
                        let s = sy as usize * w;
                        let sx0 = (x0 as isize + dx) as usize;
                        let d = &mut dst[s + sx0..s + sx0 + (x1 - x0)];
                        for (acc, &v) in d.iter_mut().zip(&src[y * w + x0..y * w + x1]) {
                            *acc += v;
                        }
                    }
                }
            }
        }
    }
}

/// Output columns `x` for which `x + dx` stays inside `[0, w)`.
fn valid_range(w: usize, dx: isize) -> (usize, usize) {
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as isize - dx.max(0)).max(0) as usize;
    (x0.min(w), x1.min(w))
}

/// `out[o][n] = bias[o] + sum_i weight[o][i] * col[i][n]`.
pub fn conv_forward<F: Real>(
    weight: &[F],
    bias: &[F],
    col: &[F],
    out_ch: usize,
    span: usize,
    out: &mut Vec<F>,
) {
    let kdim = weight.len() / out_ch;
    out.clear();
    out.reserve(out_ch * span);
    for &b in bias {
        out.extend(std::iter::repeat(b).take(span));
    }
    gemm(
        F::one(),
        MatRef::row_major(weight, out_ch, kdim),
        MatRef::row_major(col, kdim, span),
        F::one(),
        out,
    );
}

/// Accumulates weight and bias gradients from `d_out` (`out_ch x span`).
pub fn conv_backward_params<F: Real>(
    d_out: &[F],
    col: &[F],
    out_ch: usize,
    span: usize,
    d_weight: &mut [F],
    d_bias: &mut [F],
) {
    let kdim = d_weight.len() / out_ch;
    gemm(
        F::one(),
        MatRef::row_major(d_out, out_ch, span),
        MatRef::row_major(col, kdim, span).t(),
        F::one(),
        d_weight,
    );
    for (o, db) in d_bias.iter_mut().enumerate() {
        *db += d_out[o * span..(o + 1) * span].iter().copied().sum::<F>();
    }
}

/// Column-space input gradient `W^T d_out`.
pub fn conv_backward_input<F: Real>(
    weight: &[F],
    d_out: &[F],
    out_ch: usize,
    span: usize,
    d_col: &mut Vec<F>,
) {
    let kdim = weight.len() / out_ch;
    d_col.clear();
    d_col.resize(kdim * span, F::zero());
    gemm(
        F::one(),
        MatRef::row_major(weight, out_ch, kdim).t(),
        MatRef::row_major(d_out, out_ch, span),
        F::zero(),
        d_col,
    );
}
