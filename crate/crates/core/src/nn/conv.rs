use rand::Rng;

use crate::scalar::{axpy, dot, Scalar};

use super::{Param, Parameterized};

/// 2-D convolution over channel-major (`C x H x W`) feature maps, computed
/// through an explicit im2col buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `[out, in * k * k]`
    pub weight: Param<T>,
    pub bias: Param<T>,
}

/// Activations a convolution keeps for its backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    pub cols: Vec<T>,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: Param::normal("weight", &[out_channels, fan_in], fan_in, gain, rng),
            bias: Param::uniform_bias("bias", out_channels, fan_in, rng),
        }
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.padding - self.kernel) / self.stride + 1,
            (w + 2 * self.padding - self.kernel) / self.stride + 1,
        )
    }

    fn im2col(&self, x: &[T], h: usize, w: usize, oh: usize, ow: usize) -> Vec<T> {
        let k = self.kernel;
        let plane = oh * ow;
        let mut cols = vec![T::zero(); self.in_channels * k * k * plane];
        for ci in 0..self.in_channels {
            let src = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let r = (ci * k + ky) * k + kx;
                    let row = &mut cols[r * plane..(r + 1) * plane];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src_row = &src[iy as usize * w..(iy as usize + 1) * w];
                        let dst = &mut row[oy * ow..(oy + 1) * ow];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix >= 0 && ix < w as isize {
                                *d = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    pub fn forward(&self, x: &[T], h: usize, w: usize) -> (Vec<T>, ConvCache<T>) {
        assert_eq!(x.len(), self.in_channels * h * w, "conv input shape");
        let (oh, ow) = self.output_size(h, w);
        let plane = oh * ow;
        let cols = self.im2col(x, h, w, oh, ow);
        let rows = self.in_channels * self.kernel * self.kernel;
        let mut y = vec![T::zero(); self.out_channels * plane];
        for co in 0..self.out_channels {
            let out = &mut y[co * plane..(co + 1) * plane];
            out.iter_mut().for_each(|v| *v = self.bias.value[co]);
            let wrow = &self.weight.value[co * rows..(co + 1) * rows];
            for (r, &wv) in wrow.iter().enumerate() {
                axpy(out, wv, &cols[r * plane..(r + 1) * plane]);
            }
        }
        (
            y,
            ConvCache {
                cols,
                in_h: h,
                in_w: w,
                out_h: oh,
                out_w: ow,
            },
        )
    }

    pub fn backward(&mut self, cache: &ConvCache<T>, dy: &[T], want_dx: bool) -> Option<Vec<T>> {
        let plane = cache.out_h * cache.out_w;
        let rows = self.in_channels * self.kernel * self.kernel;
        assert_eq!(dy.len(), self.out_channels * plane, "conv output gradient shape");
        for co in 0..self.out_channels {
            let g = &dy[co * plane..(co + 1) * plane];
            self.bias.grad[co] += g.iter().copied().sum::<T>();
            let wgrad = &mut self.weight.grad[co * rows..(co + 1) * rows];
            for (r, wg) in wgrad.iter_mut().enumerate() {
                *wg += dot(g, &cache.cols[r * plane..(r + 1) * plane]);
            }
        }
        if !want_dx {
            return None;
        }
        let mut dcols = vec![T::zero(); rows * plane];
        for co in 0..self.out_channels {
            let g = &dy[co * plane..(co + 1) * plane];
            for r in 0..rows {
                let wv = self.weight.value[co * rows + r];
                axpy(&mut dcols[r * plane..(r + 1) * plane], wv, g);
            }
        }
        let (h, w, k) = (cache.in_h, cache.in_w, self.kernel);
        let mut dx = vec![T::zero(); self.in_channels * h * w];
        for ci in 0..self.in_channels {
            let dst = &mut dx[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let r = (ci * k + ky) * k + kx;
                    let row = &dcols[r * plane..(r + 1) * plane];
                    for oy in 0..cache.out_h {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..cache.out_w {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[iy as usize * w + ix as usize] += row[oy * cache.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
        Some(dx)
    }
}

impl<T: Scalar> Parameterized<T> for Conv2d<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Max pooling; padded positions never win.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone)]
pub struct PoolCache {
    pub argmax: Vec<usize>,
    pub in_len: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl MaxPool2d {
    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.padding - self.kernel) / self.stride + 1,
            (w + 2 * self.padding - self.kernel) / self.stride + 1,
        )
    }

    pub fn forward<T: Scalar>(&self, x: &[T], c: usize, h: usize, w: usize) -> (Vec<T>, PoolCache) {
        let (oh, ow) = self.output_size(h, w);
        let mut y = Vec::with_capacity(c * oh * ow);
        let mut argmax = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut best_i = usize::MAX;
                    for ky in 0..self.kernel {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..self.kernel {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let i = ch * h * w + iy as usize * w + ix as usize;
                            if x[i] > best || best_i == usize::MAX {
                                best = x[i];
                                best_i = i;
                            }
                        }
                    }
                    y.push(best);
                    argmax.push(best_i);
                }
            }
        }
        (
            y,
            PoolCache {
                argmax,
                in_len: x.len(),
                out_h: oh,
                out_w: ow,
            },
        )
    }

    pub fn backward<T: Scalar>(&self, cache: &PoolCache, dy: &[T]) -> Vec<T> {
        let mut dx = vec![T::zero(); cache.in_len];
        for (&i, &g) in cache.argmax.iter().zip(dy) {
            dx[i] += g;
        }
        dx
    }
}

/// Non-overlapping `factor x factor` average pooling (parameter-free).
pub fn avg_pool<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, factor: usize) -> Vec<T> {
    if factor == 1 {
        return x.to_vec();
    }
    let (oh, ow) = (h / factor, w / factor);
    let norm = T::one() / T::of((factor * factor) as f64);
    let mut y = vec![T::zero(); c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = T::zero();
                for dy in 0..factor {
                    let row = ch * h * w + (oy * factor + dy) * w + ox * factor;
                    for dx in 0..factor {
                        s += x[row + dx];
                    }
                }
                y[ch * oh * ow + oy * ow + ox] = s * norm;
            }
        }
    }
    y
}
