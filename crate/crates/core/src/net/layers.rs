//! Convolution and batch normalization with explicit backward passes.

use super::scalar::{Scalar, Tensor};

/// Upper bound on the im2col tile, in elements.
const TILE_ELEMS: usize = 1 << 22;

/// `k × k` convolution, stride 1, zero "same" padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    /// `[cout][cin][k][k]`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn zeros(cin: usize, cout: usize, k: usize) -> Self {
        Self {
            cin,
            cout,
            k,
            weight: vec![T::zero(); cout * cin * k * k],
            bias: vec![T::zero(); cout],
        }
    }

    fn kdim(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn rows_per_tile(&self, w: usize) -> usize {
        (TILE_ELEMS / (self.kdim() * w).max(1)).max(1)
    }

    /// Fills `cols` (`[cin·k·k] × [(r1−r0)·w]`) from rows `r0..r1`.
    fn im2col(&self, x: &Tensor<T>, r0: usize, r1: usize, cols: &mut [T]) {
        let (h, w, k) = (x.h, x.w, self.k);
        let p = k / 2;
        let n = (r1 - r0) * w;
        for ci in 0..self.cin {
            let plane = x.plane(ci);
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut cols[row * n..(row + 1) * n];
                    for r in r0..r1 {
                        let d = &mut dst[(r - r0) * w..(r - r0 + 1) * w];
                        let sr = r as isize + ky as isize - p as isize;
                        if sr < 0 || sr >= h as isize {
                            d.fill(T::zero());
                            continue;
                        }
                        let src = &plane[sr as usize * w..(sr as usize + 1) * w];
                        let off = kx as isize - p as isize;
                        for (c, v) in d.iter_mut().enumerate() {
                            let sc = c as isize + off;
                            *v = if sc < 0 || sc >= w as isize {
                                T::zero()
                            } else {
                                src[sc as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im_add(&self, cols: &[T], r0: usize, r1: usize, dx: &mut Tensor<T>) {
        let (h, w, k) = (dx.h, dx.w, self.k);
        let p = k / 2;
        let n = (r1 - r0) * w;
        for ci in 0..self.cin {
            let plane = dx.plane_mut(ci);
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &cols[row * n..(row + 1) * n];
                    for r in r0..r1 {
                        let sr = r as isize + ky as isize - p as isize;
                        if sr < 0 || sr >= h as isize {
                            continue;
                        }
                        let s = &src[(r - r0) * w..(r - r0 + 1) * w];
                        let dst = &mut plane[sr as usize * w..(sr as usize + 1) * w];
                        let off = kx as isize - p as isize;
                        for (c, &v) in s.iter().enumerate() {
                            let sc = c as isize + off;
                            if sc >= 0 && sc < w as isize {
                                dst[sc as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.c, self.cin, "conv input channels");
        let (h, w) = (x.h, x.w);
        let hw = h * w;
        let kd = self.kdim();
        let mut y: Tensor<T> = Tensor::zeros(self.cout, h, w);
        let tile = self.rows_per_tile(w);
        let mut cols = vec![T::zero(); kd * tile.min(h) * w];
        for r0 in (0..h).step_by(tile) {
            let r1 = (r0 + tile).min(h);
            let n = (r1 - r0) * w;
            self.im2col(x, r0, r1, &mut cols[..kd * n]);
            // y[:, r0..r1] = W · cols
            unsafe {
                T::gemm(
                    self.cout,
                    kd,
                    n,
                    self.weight.as_ptr(),
                    kd as isize,
                    1,
                    cols.as_ptr(),
                    n as isize,
                    1,
                    T::zero(),
                    y.data.as_mut_ptr().add(r0 * w),
                    hw as isize,
                    1,
                );
            }
        }
        for co in 0..self.cout {
            let b = self.bias[co];
            y.plane_mut(co).iter_mut().for_each(|v| *v += b);
        }
        y
    }

    /// Accumulates parameter gradients into `gw`, `gb` and returns the input
    /// gradient when `need_dx`.
    pub fn backward(
        &self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        gw: &mut [T],
        gb: &mut [T],
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let (h, w) = (x.h, x.w);
        let hw = h * w;
        let kd = self.kdim();
        for co in 0..self.cout {
            let s = dy.plane(co).iter().fold(T::zero(), |a, &v| a + v);
            gb[co] += s;
        }
        let mut dx = need_dx.then(|| Tensor::zeros(self.cin, h, w));
        let tile = self.rows_per_tile(w);
        let mut cols = vec![T::zero(); kd * tile.min(h) * w];
        let mut dcols = if need_dx {
            vec![T::zero(); kd * tile.min(h) * w]
        } else {
            Vec::new()
        };
        for r0 in (0..h).step_by(tile) {
            let r1 = (r0 + tile).min(h);
            let n = (r1 - r0) * w;
            self.im2col(x, r0, r1, &mut cols[..kd * n]);
            unsafe {
                // gW += dY_tile · colsᵀ
                T::gemm(
                    self.cout,
                    n,
                    kd,
                    dy.data.as_ptr().add(r0 * w),
                    hw as isize,
                    1,
                    cols.as_ptr(),
                    1,
                    n as isize,
                    T::one(),
                    gw.as_mut_ptr(),
                    kd as isize,
                    1,
                );
            }
            if let Some(dx) = dx.as_mut() {
                unsafe {
                    // dcols = Wᵀ · dY_tile
                    T::gemm(
                        kd,
                        self.cout,
                        n,
                        self.weight.as_ptr(),
                        1,
                        kd as isize,
                        dy.data.as_ptr().add(r0 * w),
                        hw as isize,
                        1,
                        T::zero(),
                        dcols.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
                self.col2im_add(&dcols[..kd * n], r0, r1, dx);
            }
        }
        dx
    }
}

/// Per-channel batch normalization over the spatial extent of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
}

/// Values kept from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(c: usize) -> Self {
        Self {
            gamma: vec![T::one(); c],
            beta: vec![T::zero(); c],
            running_mean: vec![T::zero(); c],
            running_var: vec![T::one(); c],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    /// Normalizes with batch statistics and updates the running estimates.
    pub fn forward_train(&mut self, x: &Tensor<T>) -> (Tensor<T>, BnCache<T>) {
        let n = x.h * x.w;
        let mut y = Tensor::zeros(x.c, x.h, x.w);
        let mut xhat = Tensor::zeros(x.c, x.h, x.w);
        let mut inv_std = Vec::with_capacity(x.c);
        let m = self.momentum;
        for ch in 0..x.c {
            let p = x.plane(ch);
            let mean = p.iter().map(|v| v.f64()).sum::<f64>() / n as f64;
            let var = p.iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std.push(T::of(is));
            let (g, b) = (self.gamma[ch], self.beta[ch]);
            let (mean_t, is_t) = (T::of(mean), T::of(is));
            let xh = xhat.plane_mut(ch);
            for (o, &v) in xh.iter_mut().zip(p) {
                *o = (v - mean_t) * is_t;
            }
            for (o, &v) in y.plane_mut(ch).iter_mut().zip(xhat.plane(ch)) {
                *o = g * v + b;
            }
            let unbiased = if n > 1 { var * n as f64 / (n - 1) as f64 } else { var };
            self.running_mean[ch] = T::of((1.0 - m) * self.running_mean[ch].f64() + m * mean);
            self.running_var[ch] = T::of((1.0 - m) * self.running_var[ch].f64() + m * unbiased);
        }
        (y, BnCache { xhat, inv_std })
    }

    /// Normalizes with the stored running statistics.
    pub fn forward_eval(&self, x: &Tensor<T>) -> Tensor<T> {
        let mut y = Tensor::zeros(x.c, x.h, x.w);
        for ch in 0..x.c {
            let is = 1.0 / (self.running_var[ch].f64() + self.eps).sqrt();
            let scale = T::of(self.gamma[ch].f64() * is);
            let shift = T::of(self.beta[ch].f64() - self.gamma[ch].f64() * self.running_mean[ch].f64() * is);
            for (o, &v) in y.plane_mut(ch).iter_mut().zip(x.plane(ch)) {
                *o = scale * v + shift;
            }
        }
        y
    }

    pub fn backward(&self, cache: &BnCache<T>, dy: &Tensor<T>, gg: &mut [T], gbeta: &mut [T]) -> Tensor<T> {
        let n = dy.h * dy.w;
        let nf = n as f64;
        let mut dx = Tensor::zeros(dy.c, dy.h, dy.w);
        for ch in 0..dy.c {
            let d = dy.plane(ch);
            let xh = cache.xhat.plane(ch);
            let sum_dy: f64 = d.iter().map(|v| v.f64()).sum();
            let sum_dy_xh: f64 = d.iter().zip(xh).map(|(a, b)| a.f64() * b.f64()).sum();
            gg[ch] += T::of(sum_dy_xh);
            gbeta[ch] += T::of(sum_dy);
            let k = self.gamma[ch].f64() * cache.inv_std[ch].f64() / nf;
            let (a, b) = (T::of(sum_dy), T::of(sum_dy_xh));
            let (kt, nt) = (T::of(k), T::of(nf));
            for ((o, &g), &x) in dx.plane_mut(ch).iter_mut().zip(d).zip(xh) {
                *o = kt * (nt * g - a - x * b);
            }
        }
        dx
    }
}
