//! Channel-major 1-D tensors and the few layers the network needs.

/// `channels x len`, stored channel by channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub len: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, len: usize) -> Self {
        Self {
            channels,
            len,
            data: vec![0.0; channels * len],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let len = rows.first().map_or(0, Vec::len);
        Self {
            channels: rows.len(),
            len,
            data: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn row_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Weight layout `[out][in][k]`, zero padding `(k - 1) / 2` on both sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1d {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub w_off: usize,
    pub b_off: usize,
}

impl Conv1d {
    pub fn num_params(&self) -> usize {
        self.cout * self.cin * self.kernel + self.cout
    }

    pub fn out_len(&self, len: usize) -> usize {
        (len - 1) / self.stride + 1
    }

    fn pad(&self) -> isize {
        ((self.kernel - 1) / 2) as isize
    }

    /// Output index range `[lo, hi)` for which input `t * stride + j - pad`
    /// is inside `[0, len)`.
    fn valid(&self, j: usize, len: usize, out_len: usize) -> (usize, usize) {
        let off = j as isize - self.pad();
        let s = self.stride as isize;
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        let hi = ((len as isize - 1 - off).div_euclid(s) + 1).clamp(0, out_len as isize);
        (lo as usize, (hi as usize).max(lo as usize))
    }

    pub fn forward(&self, p: &[f64], x: &Tensor) -> Tensor {
        debug_assert_eq!(x.channels, self.cin);
        let n = self.out_len(x.len);
        let mut y = Tensor::zeros(self.cout, n);
        let w = &p[self.w_off..self.w_off + self.cout * self.cin * self.kernel];
        let b = &p[self.b_off..self.b_off + self.cout];
        for co in 0..self.cout {
            let yr = y.row_mut(co);
            yr.fill(b[co]);
            for ci in 0..self.cin {
                let xr = x.row(ci);
                for j in 0..self.kernel {
                    let wv = w[(co * self.cin + ci) * self.kernel + j];
                    let (lo, hi) = self.valid(j, x.len, n);
                    if lo >= hi {
                        continue;
                    }
                    let off = j as isize - self.pad();
                    if self.stride == 1 {
                        let start = (lo as isize + off) as usize;
                        for (yv, xv) in yr[lo..hi].iter_mut().zip(&xr[start..start + (hi - lo)]) {
                            *yv += wv * xv;
                        }
                    } else {
                        for t in lo..hi {
                            yr[t] += wv * xr[(t as isize * self.stride as isize + off) as usize];
                        }
                    }
                }
            }
        }
        y
    }

    /// Accumulates parameter gradients into `g` and returns the input
    /// gradient.
    pub fn backward(&self, p: &[f64], x: &Tensor, dy: &Tensor, g: &mut [f64]) -> Tensor {
        let n = dy.len;
        let mut dx = Tensor::zeros(self.cin, x.len);
        let w = &p[self.w_off..self.w_off + self.cout * self.cin * self.kernel];
        for co in 0..self.cout {
            let dyr = dy.row(co);
            g[self.b_off + co] += dyr.iter().sum::<f64>();
            for ci in 0..self.cin {
                let xr = x.row(ci);
                for j in 0..self.kernel {
                    let wi = (co * self.cin + ci) * self.kernel + j;
                    let wv = w[wi];
                    let (lo, hi) = self.valid(j, x.len, n);
                    if lo >= hi {
                        continue;
                    }
                    let off = j as isize - self.pad();
                    let mut gw = 0.0;
                    let dxr = dx.row_mut(ci);
                    if self.stride == 1 {
                        let start = (lo as isize + off) as usize;
                        let xs = &xr[start..start + (hi - lo)];
                        let dxs = &mut dxr[start..start + (hi - lo)];
                        for ((d, xv), dxv) in dyr[lo..hi].iter().zip(xs).zip(dxs) {
                            gw += d * xv;
                            *dxv += wv * d;
                        }
                    } else {
                        for t in lo..hi {
                            let ti = (t as isize * self.stride as isize + off) as usize;
                            gw += dyr[t] * xr[ti];
                            dxr[ti] += wv * dyr[t];
                        }
                    }
                    g[self.w_off + wi] += gw;
                }
            }
        }
        dx
    }
}

pub fn relu(x: &mut Tensor) {
    for v in &mut x.data {
        *v = v.max(0.0);
    }
}

/// Zeroes gradient entries where the activation was clipped.
pub fn relu_backward(activated: &Tensor, dy: &mut Tensor) {
    for (d, a) in dy.data.iter_mut().zip(&activated.data) {
        if *a <= 0.0 {
            *d = 0.0;
        }
    }
}

/// Nearest-neighbor upsampling to `len` (at most twice the input).
pub fn upsample2(x: &Tensor, len: usize) -> Tensor {
    let mut y = Tensor::zeros(x.channels, len);
    for c in 0..x.channels {
        let (xr, yr) = (x.row(c), y.row_mut(c));
        for (t, v) in yr.iter_mut().enumerate() {
            *v = xr[t / 2];
        }
    }
    y
}

pub fn upsample2_backward(dy: &Tensor, len: usize) -> Tensor {
    let mut dx = Tensor::zeros(dy.channels, len);
    for c in 0..dy.channels {
        let dyr = dy.row(c);
        let dxr = dx.row_mut(c);
        for (t, d) in dyr.iter().enumerate() {
            dxr[t / 2] += d;
        }
    }
    dx
}

/// Affine map `y = W x + b`, weight layout `[out][in]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub cin: usize,
    pub cout: usize,
    pub w_off: usize,
    pub b_off: usize,
}

impl Linear {
    pub fn num_params(&self) -> usize {
        self.cout * self.cin + self.cout
    }

    pub fn forward(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        (0..self.cout)
            .map(|o| {
                let w = &p[self.w_off + o * self.cin..self.w_off + (o + 1) * self.cin];
                p[self.b_off + o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    pub fn backward(&self, p: &[f64], x: &[f64], dy: &[f64], g: &mut [f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.cin];
        for o in 0..self.cout {
            g[self.b_off + o] += dy[o];
            for i in 0..self.cin {
                g[self.w_off + o * self.cin + i] += dy[o] * x[i];
                dx[i] += dy[o] * p[self.w_off + o * self.cin + i];
            }
        }
        dx
    }
}
