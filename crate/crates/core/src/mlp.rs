//! Residual rectifier MLP with hand-written backpropagation and Adam.
//!
//! Layer list (all dense, row-major `in × out` weights followed by biases):
//!
//! ```text
//! input  : Linear(n_in → h), ReLU
//! block 1: Linear(h → h), ReLU, Linear(h → h), ReLU, + skip
//! block 2: Linear(h → h), ReLU, Linear(h → h), ReLU, + skip
//! output : Linear(h → n_out)
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

const N_LAYERS: usize = 6;
const N_BLOCKS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    n_in: usize,
    hidden: usize,
    n_out: usize,
    params: Vec<f64>,
}

/// Activations kept from the forward pass for backpropagation.
struct Cache {
    batch: usize,
    x: Vec<f64>,
    /// Residual stream before each block and after the last one.
    stream: Vec<Vec<f64>>,
    /// Inner activations of each block.
    inner: Vec<(Vec<f64>, Vec<f64>)>,
}

/// `c (m×n) = op(a) (m×k) · op(b) (k×n) + beta·c`, with row-major storage.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64], beta: f64) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices have exactly the extents implied by the dimensions and strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Zeroes gradient entries whose rectified activation was zero.
fn mask_by(grad: &mut [f64], act: &[f64]) {
    for (g, a) in grad.iter_mut().zip(act) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}

fn add_bias(out: &mut [f64], bias: &[f64]) {
    for row in out.chunks_exact_mut(bias.len()) {
        for (o, b) in row.iter_mut().zip(bias) {
            *o += b;
        }
    }
}

fn column_sums(m: &[f64], cols: usize, into: &mut [f64]) {
    into.fill(0.0);
    for row in m.chunks_exact(cols) {
        for (s, v) in into.iter_mut().zip(row) {
            *s += v;
        }
    }
}

impl Mlp {
    /// He-initialized network with zero biases.
    pub fn new(n_in: usize, hidden: usize, n_out: usize, seed: u64) -> Result<Self> {
        if n_in == 0 || hidden == 0 || n_out == 0 {
            return Err(Error::InvalidInput("layer widths must be positive".into()));
        }
        let mut mlp = Mlp {
            n_in,
            hidden,
            n_out,
            params: vec![0.0; param_count(n_in, hidden, n_out)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..N_LAYERS {
            let (fan_in, _) = mlp.shape(l);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
            let (w, _) = mlp.layer_ranges(l);
            for p in &mut mlp.params[w] {
                *p = normal.sample(&mut rng);
            }
        }
        Ok(mlp)
    }

    pub fn from_params(n_in: usize, hidden: usize, n_out: usize, params: Vec<f64>) -> Result<Self> {
        let expected = param_count(n_in, hidden, n_out);
        if params.len() != expected {
            return Err(Error::InvalidInput(format!(
                "expected {expected} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("parameters must be finite".into()));
        }
        Ok(Mlp {
            n_in,
            hidden,
            n_out,
            params,
        })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn shape(&self, layer: usize) -> (usize, usize) {
        match layer {
            0 => (self.n_in, self.hidden),
            l if l == N_LAYERS - 1 => (self.hidden, self.n_out),
            _ => (self.hidden, self.hidden),
        }
    }

    fn layer_ranges(&self, layer: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let mut off = 0;
        for l in 0..layer {
            let (i, o) = self.shape(l);
            off += i * o + o;
        }
        let (i, o) = self.shape(layer);
        (off..off + i * o, off + i * o..off + i * o + o)
    }

    fn linear(&self, layer: usize, x: &[f64], batch: usize) -> Vec<f64> {
        let (i, o) = self.shape(layer);
        let (w, b) = self.layer_ranges(layer);
        let mut out = vec![0.0; batch * o];
        gemm(batch, i, o, x, false, &self.params[w], false, &mut out, 0.0);
        add_bias(&mut out, &self.params[b]);
        out
    }

    fn forward_cached(&self, x: &[f64], batch: usize) -> (Vec<f64>, Cache) {
        let mut a = self.linear(0, x, batch);
        relu_in_place(&mut a);
        let mut stream = vec![a];
        let mut inner = Vec::with_capacity(N_BLOCKS);
        for blk in 0..N_BLOCKS {
            let a = stream.last().expect("stream is non-empty");
            let mut u = self.linear(1 + 2 * blk, a, batch);
            relu_in_place(&mut u);
            let mut v = self.linear(2 + 2 * blk, &u, batch);
            relu_in_place(&mut v);
            let next: Vec<f64> = a.iter().zip(&v).map(|(p, q)| p + q).collect();
            inner.push((u, v));
            stream.push(next);
        }
        let out = self.linear(N_LAYERS - 1, stream.last().expect("stream is non-empty"), batch);
        (
            out,
            Cache {
                batch,
                x: x.to_vec(),
                stream,
                inner,
            },
        )
    }

    /// Batched inference on row-major `batch × n_in` inputs.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() % self.n_in != 0 {
            return Err(Error::InvalidInput(format!(
                "input length {} is not a multiple of {}",
                x.len(),
                self.n_in
            )));
        }
        Ok(self.forward_cached(x, x.len() / self.n_in).0)
    }

    /// Gradient of a loss with respect to the parameters, given the loss's
    /// gradient `d_out` with respect to the network outputs.
    fn backward(&self, cache: &Cache, d_out: &[f64]) -> Vec<f64> {
        let bsz = cache.batch;
        let h = self.hidden;
        let mut grad = vec![0.0; self.params.len()];

        let grad_layer = |grad: &mut [f64], layer: usize, input: &[f64], d: &[f64]| {
            let (i, o) = self.shape(layer);
            let (w, b) = self.layer_ranges(layer);
            gemm(i, bsz, o, input, true, d, false, &mut grad[w], 0.0);
            column_sums(d, o, &mut grad[b]);
        };
        let back_through = |layer: usize, d: &[f64]| {
            let (i, o) = self.shape(layer);
            let (w, _) = self.layer_ranges(layer);
            let mut dx = vec![0.0; bsz * i];
            gemm(bsz, o, i, d, false, &self.params[w], true, &mut dx, 0.0);
            dx
        };

        let last = cache.stream.last().expect("stream is non-empty");
        grad_layer(&mut grad, N_LAYERS - 1, last, d_out);
        let mut d_stream = back_through(N_LAYERS - 1, d_out);

        for blk in (0..N_BLOCKS).rev() {
            let (u, v) = &cache.inner[blk];
            let a = &cache.stream[blk];
            let mut dv = d_stream.clone();
            mask_by(&mut dv, v);
            grad_layer(&mut grad, 2 + 2 * blk, u, &dv);
            let mut du = back_through(2 + 2 * blk, &dv);
            mask_by(&mut du, u);
            grad_layer(&mut grad, 1 + 2 * blk, a, &du);
            let da = back_through(1 + 2 * blk, &du);
            for (s, g) in d_stream.iter_mut().zip(&da) {
                *s += g;
            }
        }

        mask_by(&mut d_stream, &cache.stream[0]);
        debug_assert_eq!(d_stream.len(), bsz * h);
        grad_layer(&mut grad, 0, &cache.x, &d_stream);
        grad
    }

    /// Weighted mean squared error and its parameter gradient.
    ///
    /// The loss is `Σ w_k² (out_k − y_k)² / (batch · n_out)`, so with `w`
    /// set to the target standard deviations it is the squared error in
    /// target units.
    pub fn loss_and_grad(&self, x: &[f64], y: &[f64], weights: &[f64]) -> Result<(f64, Vec<f64>)> {
        if x.len() % self.n_in != 0 {
            return Err(Error::InvalidInput("input shape mismatch".into()));
        }
        let batch = x.len() / self.n_in;
        let (out, cache) = self.forward_cached(x, batch);
        if y.len() != out.len() || weights.len() != self.n_out {
            return Err(Error::InvalidInput("target or weight shape mismatch".into()));
        }
        let norm = 1.0 / (batch * self.n_out) as f64;
        let mut loss = 0.0;
        let mut d_out = vec![0.0; out.len()];
        for (k, ((o, t), d)) in out.iter().zip(y).zip(&mut d_out).enumerate() {
            let w2 = weights[k % self.n_out].powi(2);
            let r = o - t;
            loss += w2 * r * r;
            *d = 2.0 * w2 * r * norm;
        }
        Ok((loss * norm, self.backward(&cache, &d_out)))
    }

    /// Loss only, for finite-difference checks.
    pub fn loss(&self, x: &[f64], y: &[f64], weights: &[f64]) -> Result<f64> {
        let out = self.forward(x)?;
        let norm = 1.0 / out.len() as f64;
        Ok(out
            .iter()
            .zip(y)
            .enumerate()
            .map(|(k, (o, t))| weights[k % self.n_out].powi(2) * (o - t).powi(2))
            .sum::<f64>()
            * norm)
    }
}

/// Exact parameter count of the network for the given widths.
pub fn param_count(n_in: usize, hidden: usize, n_out: usize) -> usize {
    (n_in + 1) * hidden + 2 * N_BLOCKS * (hidden + 1) * hidden + (hidden + 1) * n_out
}

/// Adam optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}
