use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Dot product with four independent accumulators.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, ra) = (a.chunks_exact(4), a.chunks_exact(4).remainder());
    let cb = b.chunks_exact(4);
    let rb = cb.remainder();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let e = (-2.0 * x.abs()).exp();
                ((1.0 - e) / (1.0 + e)).copysign(x)
            }
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Parameter and input gradients of `upstream · output`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

/// Fully connected feedforward network with tanh hidden layers.
///
/// Parameters live in one flat vector. Layer `l` occupies a weight block of
/// `out * in` entries (row-major, one row per output unit) followed by `out`
/// biases.
#[derive(Clone, Debug)]
pub struct DenseNet {
    sizes: Vec<usize>,
    output_activation: Activation,
    params: Vec<f64>,
    offsets: Vec<usize>,
    // Per-layer outputs of the last training forward pass, one row per input;
    // index 0 holds the inputs.
    acts: Vec<Vec<f64>>,
    batch: usize,
    cached: bool,
}

impl DenseNet {
    /// Zero-initialized network. `sizes` lists the input width followed by the
    /// width of every layer.
    pub fn new(sizes: &[usize], output_activation: Activation) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config(format!(
                "a dense net needs at least one layer, got sizes {sizes:?}"
            )));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config(format!(
                "layer sizes must be positive, got {sizes:?}"
            )));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for w in sizes.windows(2) {
            offsets.push(total);
            total += w[0] * w[1] + w[1];
        }
        offsets.push(total);
        Ok(Self {
            sizes: sizes.to_vec(),
            output_activation,
            params: vec![0.0; total],
            offsets,
            acts: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            batch: 1,
            cached: false,
        })
    }

    pub fn from_params(
        sizes: &[usize],
        output_activation: Activation,
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut net = Self::new(sizes, output_activation)?;
        check_dim("dense parameters", net.params.len(), params.len())?;
        net.params = params;
        Ok(net)
    }

    /// Orthogonal initialization: every weight block is a scaled
    /// (semi-)orthogonal matrix, biases start at zero.
    pub fn init_orthogonal<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        hidden_gain: f64,
        output_gain: f64,
    ) {
        let n_layers = self.num_layers();
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let gain = if l + 1 == n_layers {
                output_gain
            } else {
                hidden_gain
            };
            let q = orthogonal(rng, fan_out, fan_in);
            let start = self.offsets[l];
            for (dst, src) in self.params[start..start + fan_in * fan_out]
                .iter_mut()
                .zip(&q)
            {
                *dst = gain * src;
            }
            self.params[start + fan_in * fan_out..self.offsets[l + 1]].fill(0.0);
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Index range of layer `l` (weights and biases) inside the flat vector.
    pub fn layer_range(&self, l: usize) -> Range<usize> {
        self.offsets[l]..self.offsets[l + 1]
    }

    fn activation(&self, l: usize) -> Activation {
        if l + 1 == self.num_layers() {
            self.output_activation
        } else {
            Activation::Tanh
        }
    }

    fn weights_and_biases(&self, l: usize) -> (&[f64], &[f64]) {
        let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
        let start = self.offsets[l];
        self.params[start..self.offsets[l + 1]].split_at(fan_in * fan_out)
    }

    /// Applies layer `l` to the `n` row-major inputs in `x`.
    fn layer_forward(&self, l: usize, x: &[f64], y: &mut [f64]) {
        let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
        let (weights, biases) = self.weights_and_biases(l);
        let act = self.activation(l);
        for (xr, yr) in x.chunks_exact(fan_in).zip(y.chunks_exact_mut(fan_out)) {
            for ((out, row), b) in yr.iter_mut().zip(weights.chunks_exact(fan_in)).zip(biases) {
                *out = act.apply(dot(row, xr) + b);
            }
        }
    }

    /// Pure forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_dim("dense forward input", self.input_dim(), input.len())?;
        let mut x = input.to_vec();
        for l in 0..self.num_layers() {
            let mut y = vec![0.0; self.sizes[l + 1]];
            self.layer_forward(l, &x, &mut y);
            x = y;
        }
        Ok(x)
    }

    /// Forward pass that keeps the activations needed by [`DenseNet::backward`].
    pub fn forward_train(&mut self, input: &[f64]) -> Result<&[f64]> {
        check_dim("dense forward input", self.input_dim(), input.len())?;
        self.forward_batch_train(input, 1)
    }

    /// Forward pass over `n` inputs stored row-major in `inputs`, caching
    /// activations for [`DenseNet::backward_batch_into`]. Returns the `n`
    /// outputs row-major.
    pub fn forward_batch_train(&mut self, inputs: &[f64], n: usize) -> Result<&[f64]> {
        check_dim("dense batch input", self.input_dim() * n, inputs.len())?;
        let mut acts = std::mem::take(&mut self.acts);
        for (a, &s) in acts.iter_mut().zip(&self.sizes) {
            a.resize(s * n, 0.0);
        }
        acts[0].copy_from_slice(inputs);
        for l in 0..self.num_layers() {
            let (head, tail) = acts.split_at_mut(l + 1);
            self.layer_forward(l, &head[l], &mut tail[0]);
        }
        self.acts = acts;
        self.batch = n;
        self.cached = true;
        Ok(self.acts.last().unwrap())
    }

    /// Backpropagates `upstream` through the cached forward pass, adding the
    /// parameter gradient into `grad` and returning the input gradient. The
    /// cache is consumed.
    pub fn backward_into(&mut self, upstream: &[f64], grad: &mut [f64]) -> Result<Vec<f64>> {
        self.backward_batch_into(upstream, grad)
    }

    /// Batched [`DenseNet::backward_into`]: `upstream` holds one row per
    /// cached input, the parameter gradient is summed over rows.
    pub fn backward_batch_into(&mut self, upstream: &[f64], grad: &mut [f64]) -> Result<Vec<f64>> {
        if !self.cached {
            return Err(Error::Usage(
                "backward called without a preceding forward_train".into(),
            ));
        }
        let n = self.batch;
        check_dim("dense backward upstream", self.output_dim() * n, upstream.len())?;
        check_dim("dense gradient buffer", self.params.len(), grad.len())?;
        self.cached = false;

        let mut delta = upstream.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let act = self.activation(l);
            let x = &self.acts[l];
            for (d, &y) in delta.iter_mut().zip(&self.acts[l + 1]) {
                *d *= act.derivative_from_output(y);
            }
            let start = self.offsets[l];
            let (gw, gb) = grad[start..self.offsets[l + 1]].split_at_mut(fan_in * fan_out);
            for (j, (g_row, gb_j)) in gw.chunks_exact_mut(fan_in).zip(gb.iter_mut()).enumerate() {
                let d_col = |k: usize| delta[k * fan_out + j];
                let mut k = 0;
                while k + 4 <= n {
                    let (d0, d1, d2, d3) = (d_col(k), d_col(k + 1), d_col(k + 2), d_col(k + 3));
                    let xs = &x[k * fan_in..(k + 4) * fan_in];
                    let (x0, rest) = xs.split_at(fan_in);
                    let (x1, rest) = rest.split_at(fan_in);
                    let (x2, x3) = rest.split_at(fan_in);
                    let g_row = &mut g_row[..fan_in];
                    let (x0, x1, x2, x3) = (&x0[..fan_in], &x1[..fan_in], &x2[..fan_in], &x3[..fan_in]);
                    for i in 0..fan_in {
                        g_row[i] += (d0 * x0[i] + d1 * x1[i]) + (d2 * x2[i] + d3 * x3[i]);
                    }
                    *gb_j += (d0 + d1) + (d2 + d3);
                    k += 4;
                }
                for k in k..n {
                    let d = d_col(k);
                    for (g, xi) in g_row.iter_mut().zip(&x[k * fan_in..(k + 1) * fan_in]) {
                        *g += d * xi;
                    }
                    *gb_j += d;
                }
            }
            let (weights, _) = self.weights_and_biases(l);
            let mut delta_in = vec![0.0; fan_in * n];
            for (din, dr) in delta_in.chunks_exact_mut(fan_in).zip(delta.chunks_exact(fan_out)) {
                let mut rows = weights.chunks_exact(fan_in * 4);
                let mut ds = dr.chunks_exact(4);
                for (w4, d4) in (&mut rows).zip(&mut ds) {
                    let (w0, rest) = w4.split_at(fan_in);
                    let (w1, rest) = rest.split_at(fan_in);
                    let (w2, w3) = rest.split_at(fan_in);
                    let din = &mut din[..fan_in];
                    let (w0, w1, w2, w3) = (&w0[..fan_in], &w1[..fan_in], &w2[..fan_in], &w3[..fan_in]);
                    let (e0, e1, e2, e3) = (d4[0], d4[1], d4[2], d4[3]);
                    for i in 0..fan_in {
                        din[i] += (e0 * w0[i] + e1 * w1[i]) + (e2 * w2[i] + e3 * w3[i]);
                    }
                }
                for (row, &d) in rows.remainder().chunks_exact(fan_in).zip(ds.remainder()) {
                    for (di, w) in din.iter_mut().zip(row) {
                        *di += d * w;
                    }
                }
            }
            delta = delta_in;
        }
        Ok(delta)
    }

    /// Gradient of `upstream · output` for the cached forward pass.
    pub fn backward(&mut self, upstream: &[f64]) -> Result<Gradient> {
        let mut params = vec![0.0; self.params.len()];
        let input = self.backward_into(upstream, &mut params)?;
        Ok(Gradient { params, input })
    }
}

/// `rows x cols` row-major matrix with orthonormal rows or columns, whichever
/// is shorter.
fn orthogonal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Vec<f64> {
    let (k, n) = (rows.min(cols), rows.max(cols));
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for q in &basis {
            let proj: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= proj * qi;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-10 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = if rows <= cols { basis[r][c] } else { basis[c][r] };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(sizes: &[usize], seed: u64) -> DenseNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = DenseNet::new(sizes, Activation::Identity).unwrap();
        for p in net.params_mut() {
            *p = rng.random_range(-1.0..1.0);
        }
        net
    }

    // Independent re-implementation of the forward recurrence.
    fn oracle_forward(net: &DenseNet, x: &[f64]) -> Vec<f64> {
        let sizes = net.sizes();
        let p = net.params();
        let mut off = 0;
        let mut h = x.to_vec();
        for l in 0..sizes.len() - 1 {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let mut next = vec![0.0; n_out];
            for j in 0..n_out {
                let mut z = p[off + n_in * n_out + j];
                for i in 0..n_in {
                    z += p[off + j * n_in + i] * h[i];
                }
                next[j] = if l + 2 == sizes.len() { z } else { z.tanh() };
            }
            off += n_in * n_out + n_out;
            h = next;
        }
        h
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = DenseNet::new(&[3, 5, 2], Activation::Identity).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut net = DenseNet::new(&[3, 3], Activation::Identity).unwrap();
        for i in 0..3 {
            net.params_mut()[i * 3 + i] = 1.0;
        }
        let x = [0.3, -1.5, 7.0];
        assert_eq!(net.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn forward_matches_oracle() {
        let net = random_net(&[4, 6, 5, 2], 11);
        let x = [0.2, -0.7, 1.3, 0.05];
        let got = net.forward(&x).unwrap();
        let want = oracle_forward(&net, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12 * w.abs().max(1e-300), "{g} vs {w}");
        }
    }

    #[test]
    fn forward_train_agrees_with_forward_bitwise() {
        let mut net = random_net(&[3, 8, 1], 4);
        let x = [0.1, 0.2, -0.3];
        let a = net.forward(&x).unwrap();
        let b = net.forward_train(&x).unwrap().to_vec();
        assert_eq!(a, b);
        assert_eq!(a, net.forward(&x).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let net = DenseNet::new(&[3, 2], Activation::Identity).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn backward_without_forward_is_a_usage_error() {
        let mut net = DenseNet::new(&[2, 2], Activation::Identity).unwrap();
        assert!(matches!(net.backward(&[1.0, 1.0]), Err(Error::Usage(_))));
        net.forward_train(&[1.0, 2.0]).unwrap();
        net.backward(&[1.0, 1.0]).unwrap();
        assert!(matches!(net.backward(&[1.0, 1.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn linear_gradient_is_outer_product() {
        let mut net = random_net(&[3, 2], 9);
        let x = [1.0, -2.0, 0.5];
        let g = [0.7, -1.1];
        net.forward_train(&x).unwrap();
        let grad = net.backward(&g).unwrap();
        for j in 0..2 {
            for i in 0..3 {
                assert_eq!(grad.params[j * 3 + i], g[j] * x[i]);
            }
            assert_eq!(grad.params[6 + j], g[j]);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut net = random_net(&[3, 4, 2], 2);
        net.forward_train(&[0.1, 0.2, 0.3]).unwrap();
        let grad = net.backward(&[0.0, 0.0]).unwrap();
        assert!(grad.params.iter().all(|&g| g == 0.0));
        assert!(grad.input.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn orthogonal_init_has_orthonormal_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = orthogonal(&mut rng, 4, 7);
        for a in 0..4 {
            for b in 0..4 {
                let dot: f64 = (0..7).map(|i| q[a * 7 + i] * q[b * 7 + i]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
        let q = orthogonal(&mut rng, 6, 3);
        for a in 0..3 {
            for b in 0..3 {
                let dot: f64 = (0..6).map(|r| q[r * 3 + a] * q[r * 3 + b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }
}
