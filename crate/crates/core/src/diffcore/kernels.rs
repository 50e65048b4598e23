//! Dense NHWC kernels shared by the forward ops and their adjoints.

use crate::diffcore::Real;
use crate::error::{Error, Result};

pub(crate) use super::scalar::matmul;

/// Interpret a rank-3 `[H, W, C]` or rank-4 `[N, H, W, C]` shape.
pub(crate) fn nhwc(shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match *shape {
        [h, w, c] => Ok((1, h, w, c)),
        [n, h, w, c] => Ok((n, h, w, c)),
        _ => Err(Error::shape(format!(
            "expected [H, W, C] or [N, H, W, C], got {shape:?}"
        ))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub k: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
    pub cout: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.k * self.k * self.cin
    }

    fn out_pixels(&self) -> usize {
        self.oh * self.ow
    }
}

fn im2col<F: Real>(g: &ConvGeom, x: &[F], cols: &mut [F]) {
    let kc = g.patch();
    for oy in 0..g.oh {
        for ox in 0..g.ow {
            let row = &mut cols[(oy * g.ow + ox) * kc..][..kc];
            for ky in 0..g.k {
                let iy = (oy + ky) as isize - g.pad as isize;
                for kx in 0..g.k {
                    let ix = (ox + kx) as isize - g.pad as isize;
                    let dst = &mut row[(ky * g.k + kx) * g.cin..][..g.cin];
                    if iy < 0 || ix < 0 || iy >= g.h as isize || ix >= g.w as isize {
                        dst.fill(F::zero());
                    } else {
                        let src = (iy as usize * g.w + ix as usize) * g.cin;
                        dst.copy_from_slice(&x[src..src + g.cin]);
                    }
                }
            }
        }
    }
}

fn col2im<F: Real>(g: &ConvGeom, cols: &[F], dx: &mut [F]) {
    let kc = g.patch();
    for oy in 0..g.oh {
        for ox in 0..g.ow {
            let row = &cols[(oy * g.ow + ox) * kc..][..kc];
            for ky in 0..g.k {
                let iy = (oy + ky) as isize - g.pad as isize;
                if iy < 0 || iy >= g.h as isize {
                    continue;
                }
                for kx in 0..g.k {
                    let ix = (ox + kx) as isize - g.pad as isize;
                    if ix < 0 || ix >= g.w as isize {
                        continue;
                    }
                    let src = &row[(ky * g.k + kx) * g.cin..][..g.cin];
                    let dst = &mut dx[(iy as usize * g.w + ix as usize) * g.cin..][..g.cin];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Stride-1 cross-correlation, one image at a time through im2col + GEMM.
pub(crate) fn conv2d_forward<F: Real>(
    g: &ConvGeom,
    x: &[F],
    w: &[F],
    bias: Option<&[F]>,
    out: &mut [F],
) {
    let kc = g.patch();
    let pix = g.out_pixels();
    let mut cols = vec![F::zero(); pix * kc];
    for n in 0..g.n {
        im2col(g, &x[n * g.h * g.w * g.cin..][..g.h * g.w * g.cin], &mut cols);
        let o = &mut out[n * pix * g.cout..][..pix * g.cout];
        matmul(&cols, false, w, false, o, pix, kc, g.cout, false);
        if let Some(b) = bias {
            for row in o.chunks_mut(g.cout) {
                for (v, &bi) in row.iter_mut().zip(b) {
                    *v += bi;
                }
            }
        }
    }
}

/// Adjoint of [`conv2d_forward`] with respect to input and kernel. Columns are
/// rebuilt per image rather than kept from the forward pass.
pub(crate) fn conv2d_backward<F: Real>(
    g: &ConvGeom,
    x: &[F],
    w: &[F],
    gout: &[F],
    mut gx: Option<&mut [F]>,
    mut gw: Option<&mut [F]>,
) {
    let kc = g.patch();
    let pix = g.out_pixels();
    let img = g.h * g.w * g.cin;
    let mut cols = vec![F::zero(); pix * kc];
    for n in 0..g.n {
        let go = &gout[n * pix * g.cout..][..pix * g.cout];
        if let Some(gw) = gw.as_deref_mut() {
            im2col(g, &x[n * img..][..img], &mut cols);
            matmul(&cols, true, go, false, gw, kc, pix, g.cout, true);
        }
        if let Some(gx) = gx.as_deref_mut() {
            matmul(go, false, w, true, &mut cols, pix, g.cout, kc, false);
            col2im(g, &cols, &mut gx[n * img..][..img]);
        }
    }
}

/// Index of the first maximum (row-major order) among `idx`.
#[inline]
pub(crate) fn first_argmax<F: Real>(x: &[F], idx: impl Iterator<Item = usize>) -> usize {
    let mut best = usize::MAX;
    for i in idx {
        if best == usize::MAX || x[i] > x[best] {
            best = i;
        }
    }
    best
}
