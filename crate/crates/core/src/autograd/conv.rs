//! im2col lowering for 2-D convolution.

use super::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }


    /// True when the column matrix is the input itself.
    pub fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }

    /// Output columns `[lo, hi)` whose input column `ow*stride + kj - pad` is in range.
    fn valid_out_range(&self, offset: usize, out_len: usize, in_len: usize) -> (usize, usize) {
        // input index = ow * stride + offset - padding
        let s = self.stride;
        let lo = if offset >= self.padding {
            0
        } else {
            (self.padding - offset).div_ceil(s)
        };
        // ow*s + offset - pad <= in_len - 1  =>  ow <= (in_len - 1 + pad - offset) / s
        let hi = if in_len + self.padding < offset + 1 {
            0
        } else {
            ((in_len - 1 + self.padding - offset) / s + 1).min(out_len)
        };
        (lo.min(hi), hi)
    }
}

/// Lower one `C×H×W` sample into a `(C·k·k) × (Ho·Wo)` column matrix.
pub fn im2col<T: Scalar>(x: &[T], g: &ConvGeometry, cols: &mut [T]) {
    let (ho, wo) = (g.out_height(), g.out_width());
    let p = ho * wo;
    debug_assert_eq!(cols.len(), g.rows() * p);
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            let (oh_lo, oh_hi) = g.valid_out_range(ki, ho, g.height);
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                let (ow_lo, ow_hi) = g.valid_out_range(kj, wo, g.width);
                for oh in 0..ho {
                    let line = &mut dst[oh * wo..(oh + 1) * wo];
                    if oh < oh_lo || oh >= oh_hi || ow_lo >= ow_hi {
                        line.fill(T::zero());
                        continue;
                    }
                    let ih = oh * g.stride + ki - g.padding;
                    let src = &plane[ih * g.width..(ih + 1) * g.width];
                    line[..ow_lo].fill(T::zero());
                    line[ow_hi..].fill(T::zero());
                    if g.stride == 1 {
                        let iw0 = ow_lo + kj - g.padding;
                        line[ow_lo..ow_hi].copy_from_slice(&src[iw0..iw0 + (ow_hi - ow_lo)]);
                    } else {
                        for ow in ow_lo..ow_hi {
                            line[ow] = src[ow * g.stride + kj - g.padding];
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add a column matrix back onto a `C×H×W` sample (adjoint of [`im2col`]).
pub fn col2im<T: Scalar>(cols: &[T], g: &ConvGeometry, x: &mut [T]) {
    let (ho, wo) = (g.out_height(), g.out_width());
    let p = ho * wo;
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &mut x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            let (oh_lo, oh_hi) = g.valid_out_range(ki, ho, g.height);
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * p..(row + 1) * p];
                let (ow_lo, ow_hi) = g.valid_out_range(kj, wo, g.width);
                if ow_lo >= ow_hi {
                    continue;
                }
                for oh in oh_lo..oh_hi {
                    let ih = oh * g.stride + ki - g.padding;
                    let line = &src[oh * wo..(oh + 1) * wo];
                    let dst = &mut plane[ih * g.width..(ih + 1) * g.width];
                    for ow in ow_lo..ow_hi {
                        dst[ow * g.stride + kj - g.padding] += line[ow];
                    }
                }
            }
        }
    }
}
