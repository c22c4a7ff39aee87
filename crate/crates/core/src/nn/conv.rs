//! Convolution geometry and the im2col / col2im lowering used by every
//! convolutional layer in the crate. Feature maps are NHWC.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Same,
    Valid,
}

/// Shape bookkeeping for a square-kernel 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeometry {
    pub fn new(in_h: usize, in_w: usize, in_c: usize, kernel: usize, stride: usize, padding: Padding) -> Self {
        assert!(kernel > 0 && stride > 0, "kernel and stride must be positive");
        match padding {
            Padding::Same => {
                let out_h = in_h.div_ceil(stride);
                let out_w = in_w.div_ceil(stride);
                // TensorFlow convention: the odd pixel of padding goes bottom/right.
                let pad_h = ((out_h - 1) * stride + kernel).saturating_sub(in_h);
                let pad_w = ((out_w - 1) * stride + kernel).saturating_sub(in_w);
                Self { in_h, in_w, in_c, out_h, out_w, kernel, stride, pad_top: pad_h / 2, pad_left: pad_w / 2 }
            }
            Padding::Valid => {
                assert!(in_h >= kernel && in_w >= kernel, "valid convolution larger than its input");
                Self {
                    in_h,
                    in_w,
                    in_c,
                    out_h: (in_h - kernel) / stride + 1,
                    out_w: (in_w - kernel) / stride + 1,
                    kernel,
                    stride,
                    pad_top: 0,
                    pad_left: 0,
                }
            }
        }
    }

    /// Length of one im2col row: `kernel * kernel * in_c`.
    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.in_c
    }

    pub fn out_positions(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn in_len(&self) -> usize {
        self.in_h * self.in_w * self.in_c
    }
}

/// Lowers `n` NHWC images into a `(n * out_h * out_w) x patch_len` matrix.
/// Patch columns are ordered `(kh, kw, channel)`.
pub fn im2col(g: &ConvGeometry, input: &[f32], n: usize) -> Vec<f32> {
    assert_eq!(input.len(), n * g.in_len(), "im2col: input length mismatch");
    let patch = g.patch_len();
    let row_chunk = g.kernel * g.in_c;
    let mut cols = vec![0.0f32; n * g.out_positions() * patch];
    let mut row = 0;
    for b in 0..n {
        let image = &input[b * g.in_len()..(b + 1) * g.in_len()];
        for oh in 0..g.out_h {
            for ow in 0..g.out_w {
                let dst = &mut cols[row * patch..(row + 1) * patch];
                for kh in 0..g.kernel {
                    let ih = (oh * g.stride + kh) as isize - g.pad_top as isize;
                    if ih < 0 || ih >= g.in_h as isize {
                        continue;
                    }
                    let line = &image[ih as usize * g.in_w * g.in_c..];
                    let dst_line = &mut dst[kh * row_chunk..(kh + 1) * row_chunk];
                    for kw in 0..g.kernel {
                        let iw = (ow * g.stride + kw) as isize - g.pad_left as isize;
                        if iw < 0 || iw >= g.in_w as isize {
                            continue;
                        }
                        let src = &line[iw as usize * g.in_c..(iw as usize + 1) * g.in_c];
                        dst_line[kw * g.in_c..(kw + 1) * g.in_c].copy_from_slice(src);
                    }
                }
                row += 1;
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters-and-adds patch rows back onto images.
pub fn col2im(g: &ConvGeometry, cols: &[f32], n: usize) -> Vec<f32> {
    let patch = g.patch_len();
    assert_eq!(cols.len(), n * g.out_positions() * patch, "col2im: column length mismatch");
    let row_chunk = g.kernel * g.in_c;
    let mut out = vec![0.0f32; n * g.in_len()];
    let mut row = 0;
    for b in 0..n {
        let image = &mut out[b * g.in_len()..(b + 1) * g.in_len()];
        for oh in 0..g.out_h {
            for ow in 0..g.out_w {
                let src = &cols[row * patch..(row + 1) * patch];
                for kh in 0..g.kernel {
                    let ih = (oh * g.stride + kh) as isize - g.pad_top as isize;
                    if ih < 0 || ih >= g.in_h as isize {
                        continue;
                    }
                    let src_line = &src[kh * row_chunk..(kh + 1) * row_chunk];
                    let base = ih as usize * g.in_w * g.in_c;
                    for kw in 0..g.kernel {
                        let iw = (ow * g.stride + kw) as isize - g.pad_left as isize;
                        if iw < 0 || iw >= g.in_w as isize {
                            continue;
                        }
                        let at = base + iw as usize * g.in_c;
                        for (d, s) in image[at..at + g.in_c].iter_mut().zip(&src_line[kw * g.in_c..(kw + 1) * g.in_c]) {
                            *d += s;
                        }
                    }
                }
                row += 1;
            }
        }
    }
    out
}
