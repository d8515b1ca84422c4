//! Network primitives with cached forward state and hand-written backward
//! passes. Layers cache what their backward pass needs only in train mode.

use crate::rng::CounterRng;

use super::real::{gemm, MatRef, Real};
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A named-by-position parameter or buffer. Buffers (BN running statistics)
/// are not trainable and carry no gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub value: Vec<T>,
    pub grad: Vec<T>,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

impl<T: Real> Param<T> {
    fn new(shape: Vec<usize>, value: Vec<T>) -> Self {
        let n = value.len();
        debug_assert_eq!(n, shape.iter().product::<usize>());
        Param {
            value,
            grad: vec![T::zero(); n],
            shape,
            trainable: true,
        }
    }

    fn buffer(shape: Vec<usize>, fill: T) -> Self {
        Param {
            value: vec![fill; shape.iter().product()],
            grad: Vec::new(),
            shape,
            trainable: false,
        }
    }

    fn he_normal(shape: Vec<usize>, fan_in: usize, seed: u64) -> Self {
        let std = (2.0 / fan_in as f64).sqrt();
        let mut draws = vec![0.0; shape.iter().product()];
        CounterRng::new(seed).fill_normal(&mut draws);
        let value = draws.into_iter().map(|z| T::from_f64(std * z)).collect();
        Param::new(shape, value)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

pub(crate) type Visitor<'a, T> = dyn FnMut(String, &Param<T>) + 'a;
pub(crate) type VisitorMut<'a, T> = dyn FnMut(String, &mut Param<T>) + 'a;

/// Zero-padded, stride-1 convolution with a square odd kernel (1 or 3).
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    cin: usize,
    cout: usize,
    k: usize,
    cols: Vec<Vec<T>>,
    in_shape: [usize; 4],
}

impl<T: Real> Conv2d<T> {
    pub fn new(cin: usize, cout: usize, k: usize, bias: bool, seed: u64) -> Self {
        assert!(k == 1 || k == 3, "only 1x1 and 3x3 convolutions are supported");
        let fan_in = cin * k * k;
        Conv2d {
            weight: Param::he_normal(vec![cout, cin, k, k], fan_in, seed),
            bias: bias.then(|| Param::new(vec![cout], vec![T::zero(); cout])),
            cin,
            cout,
            k,
            cols: Vec::new(),
            in_shape: [0; 4],
        }
    }

    fn col_rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn lower(&self, sample: &[T], h: usize, w: usize, col: &mut Vec<T>) {
        if self.k == 1 {
            col.clear();
            col.extend_from_slice(sample);
        } else {
            col.resize(self.col_rows() * h * w, T::zero());
            im2col3(sample, self.cin, h, w, col);
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let [n, c, h, w] = x.shape();
        assert_eq!(c, self.cin, "conv input channels");
        let hw = h * w;
        let kdim = self.col_rows();
        let mut out = Tensor::zeros([n, self.cout, h, w]);
        let sample_out = self.cout * hw;
        self.cols.clear();
        let mut scratch = Vec::new();
        for s in 0..n {
            let mut col = std::mem::take(&mut scratch);
            self.lower(x.sample_slice(s), h, w, &mut col);
            let dst = &mut out.data_mut()[s * sample_out..(s + 1) * sample_out];
            gemm(
                self.cout,
                kdim,
                hw,
                MatRef::row_major(&self.weight.value, kdim),
                MatRef::row_major(&col, hw),
                T::zero(),
                dst,
            );
            if let Some(b) = &self.bias {
                for (o, &bv) in b.value.iter().enumerate() {
                    dst[o * hw..(o + 1) * hw].iter_mut().for_each(|v| *v += bv);
                }
            }
            if mode == Mode::Train {
                self.cols.push(col);
            } else {
                scratch = col;
            }
        }
        self.in_shape = x.shape();
        out
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let [n, _, h, w] = self.in_shape;
        assert_eq!(self.cols.len(), n, "conv backward without a train-mode forward");
        assert_eq!(dy.shape(), [n, self.cout, h, w], "conv output gradient shape");
        let hw = h * w;
        let kdim = self.col_rows();
        let mut dx = Tensor::zeros(self.in_shape);
        let mut dcol = vec![T::zero(); kdim * hw];
        let sample_in = self.cin * hw;
        for s in 0..n {
            let g = dy.sample_slice(s);
            gemm(
                self.cout,
                hw,
                kdim,
                MatRef::row_major(g, hw),
                MatRef::transposed(&self.cols[s], hw),
                T::one(),
                &mut self.weight.grad,
            );
            if let Some(b) = &mut self.bias {
                for (o, gb) in b.grad.iter_mut().enumerate() {
                    *gb += g[o * hw..(o + 1) * hw].iter().copied().sum::<T>();
                }
            }
            gemm(
                kdim,
                self.cout,
                hw,
                MatRef::transposed(&self.weight.value, kdim),
                MatRef::row_major(g, hw),
                T::zero(),
                &mut dcol,
            );
            let dst = &mut dx.data_mut()[s * sample_in..(s + 1) * sample_in];
            if self.k == 1 {
                dst.copy_from_slice(&dcol);
            } else {
                col2im3(&dcol, self.cin, h, w, dst);
            }
        }
        self.cols.clear();
        dx
    }

    pub(crate) fn visit(&self, prefix: &str, f: &mut Visitor<'_, T>) {
        f(format!("{prefix}.weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(format!("{prefix}.bias"), b);
        }
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_, T>) {
        f(format!("{prefix}.weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(format!("{prefix}.bias"), b);
        }
    }
}

fn im2col3<T: Real>(x: &[T], c: usize, h: usize, w: usize, col: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((ci * 3 + ky) * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let dst = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

fn col2im3<T: Real>(col: &[T], c: usize, h: usize, w: usize, dx: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((ci * 3 + ky) * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&src[1..]).for_each(|(d, s)| *d += *s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d += *s),
                        _ => dst[1..].iter_mut().zip(&src[..w - 1]).for_each(|(d, s)| *d += *s),
                    }
                }
            }
        }
    }
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization. Running variance uses the biased batch
/// variance, so eval mode reproduces train mode once the statistics settle.
#[derive(Clone, Debug)]
pub struct BatchNorm2d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    xhat: Vec<T>,
    inv_std: Vec<f64>,
    shape: [usize; 4],
}

impl<T: Real> BatchNorm2d<T> {
    pub fn new(c: usize) -> Self {
        BatchNorm2d {
            gamma: Param::new(vec![c], vec![T::one(); c]),
            beta: Param::new(vec![c], vec![T::zero(); c]),
            running_mean: Param::buffer(vec![c], T::zero()),
            running_var: Param::buffer(vec![c], T::one()),
            xhat: Vec::new(),
            inv_std: Vec::new(),
            shape: [0; 4],
        }
    }

    /// Normalized activations of the last train-mode forward.
    pub fn normalized(&self) -> &[T] {
        &self.xhat
    }

    pub fn forward(&mut self, mut x: Tensor<T>, mode: Mode) -> Tensor<T> {
        let [n, c, h, w] = x.shape();
        assert_eq!(c, self.gamma.len(), "batch-norm channels");
        let hw = h * w;
        let count = (n * hw) as f64;
        self.shape = x.shape();
        let data = x.data_mut();
        match mode {
            Mode::Train => {
                self.xhat.resize(data.len(), T::zero());
                self.inv_std.resize(c, 0.0);
                for ch in 0..c {
                    let idx = |s: usize| (s * c + ch) * hw;
                    let mut sum = 0.0;
                    for s in 0..n {
                        sum += data[idx(s)..idx(s) + hw].iter().map(|v| v.as_f64()).sum::<f64>();
                    }
                    let mean = sum / count;
                    let mut sq = 0.0;
                    for s in 0..n {
                        sq += data[idx(s)..idx(s) + hw]
                            .iter()
                            .map(|v| (v.as_f64() - mean).powi(2))
                            .sum::<f64>();
                    }
                    let var = sq / count;
                    let inv_std = 1.0 / (var + BN_EPS).sqrt();
                    self.inv_std[ch] = inv_std;
                    let rm = &mut self.running_mean.value[ch];
                    *rm = T::from_f64((1.0 - BN_MOMENTUM) * rm.as_f64() + BN_MOMENTUM * mean);
                    let rv = &mut self.running_var.value[ch];
                    *rv = T::from_f64((1.0 - BN_MOMENTUM) * rv.as_f64() + BN_MOMENTUM * var);
                    let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
                    let (mean, inv_std) = (T::from_f64(mean), T::from_f64(inv_std));
                    for s in 0..n {
                        let range = idx(s)..idx(s) + hw;
                        for (v, xh) in data[range.clone()].iter_mut().zip(&mut self.xhat[range]) {
                            *xh = (*v - mean) * inv_std;
                            *v = g * *xh + b;
                        }
                    }
                }
            }
            Mode::Eval => {
                for ch in 0..c {
                    let inv_std = 1.0 / (self.running_var.value[ch].as_f64() + BN_EPS).sqrt();
                    let scale = T::from_f64(self.gamma.value[ch].as_f64() * inv_std);
                    let shift = T::from_f64(
                        self.beta.value[ch].as_f64()
                            - self.running_mean.value[ch].as_f64() * scale.as_f64(),
                    );
                    for s in 0..n {
                        let start = (s * c + ch) * hw;
                        data[start..start + hw]
                            .iter_mut()
                            .for_each(|v| *v = *v * scale + shift);
                    }
                }
            }
        }
        x
    }

    pub fn backward(&mut self, mut dy: Tensor<T>) -> Tensor<T> {
        let [n, c, h, w] = self.shape;
        assert_eq!(dy.shape(), self.shape, "batch-norm gradient shape");
        assert_eq!(self.xhat.len(), dy.data().len(), "batch-norm backward without train forward");
        let hw = h * w;
        let count = (n * hw) as f64;
        let data = dy.data_mut();
        for ch in 0..c {
            let idx = |s: usize| (s * c + ch) * hw;
            let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
            for s in 0..n {
                let r = idx(s)..idx(s) + hw;
                for (g, xh) in data[r.clone()].iter().zip(&self.xhat[r]) {
                    sum_dy += g.as_f64();
                    sum_dy_xhat += g.as_f64() * xh.as_f64();
                }
            }
            self.gamma.grad[ch] += T::from_f64(sum_dy_xhat);
            self.beta.grad[ch] += T::from_f64(sum_dy);
            let k = self.gamma.value[ch].as_f64() * self.inv_std[ch] / count;
            let (mean_dy, mean_dy_xhat) = (sum_dy / count, sum_dy_xhat / count);
            for s in 0..n {
                let r = idx(s)..idx(s) + hw;
                for (g, xh) in data[r.clone()].iter_mut().zip(&self.xhat[r]) {
                    let v = k * count * (g.as_f64() - mean_dy - xh.as_f64() * mean_dy_xhat);
                    *g = T::from_f64(v);
                }
            }
        }
        self.xhat.clear();
        dy
    }

    pub(crate) fn visit(&self, prefix: &str, f: &mut Visitor<'_, T>) {
        f(format!("{prefix}.gamma"), &self.gamma);
        f(format!("{prefix}.beta"), &self.beta);
        f(format!("{prefix}.running_mean"), &self.running_mean);
        f(format!("{prefix}.running_var"), &self.running_var);
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_, T>) {
        f(format!("{prefix}.gamma"), &mut self.gamma);
        f(format!("{prefix}.beta"), &mut self.beta);
        f(format!("{prefix}.running_mean"), &mut self.running_mean);
        f(format!("{prefix}.running_var"), &mut self.running_var);
    }
}

#[derive(Clone, Debug, Default)]
pub struct Relu {
    mask: Vec<bool>,
}

impl Relu {
    pub fn forward<T: Real>(&mut self, mut x: Tensor<T>, mode: Mode) -> Tensor<T> {
        if mode == Mode::Train {
            self.mask = x.data().iter().map(|v| *v > T::zero()).collect();
        }
        x.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
        x
    }

    pub fn backward<T: Real>(&mut self, mut dy: Tensor<T>) -> Tensor<T> {
        assert_eq!(self.mask.len(), dy.data().len(), "relu backward without train forward");
        dy.data_mut()
            .iter_mut()
            .zip(&self.mask)
            .for_each(|(g, &keep)| {
                if !keep {
                    *g = T::zero();
                }
            });
        dy
    }
}

/// 2x2 max-pooling with stride 2; ties go to the first element in raster order.
#[derive(Clone, Debug, Default)]
pub struct MaxPool2 {
    argmax: Vec<u32>,
    in_shape: [usize; 4],
}

impl MaxPool2 {
    pub fn forward<T: Real>(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let [n, c, h, w] = x.shape();
        assert!(h % 2 == 0 && w % 2 == 0, "max-pool needs even spatial dims");
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Tensor::zeros([n, c, oh, ow]);
        let src = x.data();
        let mut argmax = Vec::with_capacity(if mode == Mode::Train { n * c * oh * ow } else { 0 });
        for (p, dst) in out.data_mut().chunks_mut(oh * ow).enumerate() {
            let base = p * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let i0 = base + 2 * oy * w + 2 * ox;
                    let mut best = i0;
                    for i in [i0 + 1, i0 + w, i0 + w + 1] {
                        if src[i] > src[best] {
                            best = i;
                        }
                    }
                    dst[oy * ow + ox] = src[best];
                    if mode == Mode::Train {
                        argmax.push(best as u32);
                    }
                }
            }
        }
        self.argmax = argmax;
        self.in_shape = x.shape();
        out
    }

    pub fn backward<T: Real>(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        assert_eq!(self.argmax.len(), dy.data().len(), "max-pool backward without train forward");
        let mut dx = Tensor::zeros(self.in_shape);
        let d = dx.data_mut();
        for (&i, &g) in self.argmax.iter().zip(dy.data()) {
            d[i as usize] += g;
        }
        dx
    }
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    let mut out = Tensor::zeros([n, c, 2 * h, 2 * w]);
    let src = x.data();
    for (p, dst) in out.data_mut().chunks_mut(4 * h * w).enumerate() {
        let plane = &src[p * h * w..(p + 1) * h * w];
        for y in 0..2 * h {
            for xx in 0..2 * w {
                dst[y * 2 * w + xx] = plane[(y / 2) * w + xx / 2];
            }
        }
    }
    out
}

pub fn upsample2_backward<T: Real>(dy: &Tensor<T>) -> Tensor<T> {
    let [n, c, h2, w2] = dy.shape();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut dx = Tensor::zeros([n, c, h, w]);
    let src = dy.data();
    for (p, dst) in dx.data_mut().chunks_mut(h * w).enumerate() {
        let plane = &src[p * h2 * w2..(p + 1) * h2 * w2];
        for y in 0..h2 {
            for x in 0..w2 {
                dst[(y / 2) * w + x / 2] += plane[y * w2 + x];
            }
        }
    }
    dx
}

/// Channel concatenation `[a, b]`.
pub fn concat_channels<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let [n, ca, h, w] = a.shape();
    let [nb, cb, hb, wb] = b.shape();
    assert!(n == nb && h == hb && w == wb, "concat shape mismatch");
    let mut data = Vec::with_capacity(n * (ca + cb) * h * w);
    for s in 0..n {
        data.extend_from_slice(a.sample_slice(s));
        data.extend_from_slice(b.sample_slice(s));
    }
    Tensor::new([n, ca + cb, h, w], data).expect("sizes add up")
}

/// Inverse of [`concat_channels`] for gradients.
pub fn split_channels<T: Real>(d: &Tensor<T>, ca: usize) -> (Tensor<T>, Tensor<T>) {
    let [n, c, h, w] = d.shape();
    let hw = h * w;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for s in 0..n {
        let sample = d.sample_slice(s);
        a.extend_from_slice(&sample[..ca * hw]);
        b.extend_from_slice(&sample[ca * hw..]);
    }
    (
        Tensor::new([n, ca, h, w], a).expect("sizes add up"),
        Tensor::new([n, c - ca, h, w], b).expect("sizes add up"),
    )
}

/// conv3x3 -> BN -> ReLU -> conv3x3 -> BN, plus an identity or 1x1 projection
/// skip, followed by ReLU.
#[derive(Clone, Debug)]
pub struct ResidualBlock<T> {
    conv1: Conv2d<T>,
    bn1: BatchNorm2d<T>,
    relu1: Relu,
    conv2: Conv2d<T>,
    bn2: BatchNorm2d<T>,
    proj: Option<Conv2d<T>>,
    relu_out: Relu,
}

impl<T: Real> ResidualBlock<T> {
    pub fn new(cin: usize, cout: usize, seeds: &mut impl FnMut() -> u64) -> Self {
        ResidualBlock {
            conv1: Conv2d::new(cin, cout, 3, false, seeds()),
            bn1: BatchNorm2d::new(cout),
            relu1: Relu::default(),
            conv2: Conv2d::new(cout, cout, 3, false, seeds()),
            bn2: BatchNorm2d::new(cout),
            proj: (cin != cout).then(|| Conv2d::new(cin, cout, 1, true, seeds())),
            relu_out: Relu::default(),
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let h = self.conv1.forward(x, mode);
        let h = self.bn1.forward(h, mode);
        let h = self.relu1.forward(h, mode);
        let h = self.conv2.forward(&h, mode);
        let mut h = self.bn2.forward(h, mode);
        match &mut self.proj {
            Some(p) => h.add_assign(&p.forward(x, mode)),
            None => h.add_assign(x),
        }
        self.relu_out.forward(h, mode)
    }

    pub fn backward(&mut self, dy: Tensor<T>) -> Tensor<T> {
        let d = self.relu_out.backward(dy);
        let dskip = match &mut self.proj {
            Some(p) => p.backward(&d),
            None => d.clone(),
        };
        let d = self.bn2.backward(d);
        let d = self.conv2.backward(&d);
        let d = self.relu1.backward(d);
        let d = self.bn1.backward(d);
        let mut dx = self.conv1.backward(&d);
        dx.add_assign(&dskip);
        dx
    }

    pub fn first_norm(&self) -> &BatchNorm2d<T> {
        &self.bn1
    }

    pub(crate) fn visit(&self, prefix: &str, f: &mut Visitor<'_, T>) {
        self.conv1.visit(&format!("{prefix}.conv1"), f);
        self.bn1.visit(&format!("{prefix}.bn1"), f);
        self.conv2.visit(&format!("{prefix}.conv2"), f);
        self.bn2.visit(&format!("{prefix}.bn2"), f);
        if let Some(p) = &self.proj {
            p.visit(&format!("{prefix}.proj"), f);
        }
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_, T>) {
        self.conv1.visit_mut(&format!("{prefix}.conv1"), f);
        self.bn1.visit_mut(&format!("{prefix}.bn1"), f);
        self.conv2.visit_mut(&format!("{prefix}.conv2"), f);
        self.bn2.visit_mut(&format!("{prefix}.bn2"), f);
        if let Some(p) = &mut self.proj {
            p.visit_mut(&format!("{prefix}.proj"), f);
        }
    }
}
