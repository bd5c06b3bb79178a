//! One-hidden-layer ReLU networks with hand-written backpropagation.
//!
//! Parameters live in one flat vector laid out as `W1 (hidden x input, row
//! major) | b1 (hidden) | W2 (output x hidden, row major) | b2 (output)`, which
//! is also the order the optimizer and the gradient checker see.

use rand::Rng;

use super::features::{SampleFeatures, DISC_INPUT_DIM, GEN_INPUT_DIM, OUTPUT_DIM};
use super::config::TrainConfig;
use super::loss::{sigmoid, weight_fn};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayer {
    input: usize,
    hidden: usize,
    output: usize,
    params: Vec<f64>,
}

impl TwoLayer {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        let n = hidden * input + hidden + output * hidden + output;
        Self {
            input,
            hidden,
            output,
            params: vec![0.0; n],
        }
    }

    pub fn from_params(input: usize, hidden: usize, output: usize, params: Vec<f64>) -> Result<Self> {
        let expected = hidden * input + hidden + output * hidden + output;
        if params.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{input}x{hidden}x{output} network needs {expected} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self {
            input,
            hidden,
            output,
            params,
        })
    }

    /// He-uniform first layer, Glorot-uniform second layer, zero biases.
    pub fn random<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let mut net = Self::zeros(input, hidden, output);
        let a1 = (6.0 / input as f64).sqrt();
        let a2 = (6.0 / (hidden + output) as f64).sqrt();
        let (w1_end, w2_start, w2_end) = net.offsets();
        for p in &mut net.params[..w1_end] {
            *p = rng.gen_range(-a1..a1);
        }
        for p in &mut net.params[w2_start..w2_end] {
            *p = rng.gen_range(-a2..a2);
        }
        net
    }

    pub(crate) fn offsets(&self) -> (usize, usize, usize) {
        let w1_end = self.hidden * self.input;
        let w2_start = w1_end + self.hidden;
        (w1_end, w2_start, w2_start + self.output * self.hidden)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.input, self.hidden, self.output)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn w1(&self) -> &[f64] {
        &self.params[..self.offsets().0]
    }

    pub fn b1(&self) -> &[f64] {
        let (w1_end, w2_start, _) = self.offsets();
        &self.params[w1_end..w2_start]
    }

    pub fn w2(&self) -> &[f64] {
        let (_, w2_start, w2_end) = self.offsets();
        &self.params[w2_start..w2_end]
    }

    pub fn b2(&self) -> &[f64] {
        &self.params[self.offsets().2..]
    }

    pub fn b2_mut(&mut self) -> &mut [f64] {
        let start = self.offsets().2;
        &mut self.params[start..]
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Forward pass. `pre` receives the hidden pre-activations, `out` the outputs.
    pub fn forward_into(&self, x: &[f64], pre: &mut [f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.input);
        let (w1, b1, w2, b2) = (self.w1(), self.b1(), self.w2(), self.b2());
        for (j, (p, row)) in pre.iter_mut().zip(w1.chunks_exact(self.input)).enumerate() {
            *p = b1[j] + dot(row, x);
        }
        let act: Vec<f64> = pre.iter().map(|a| a.max(0.0)).collect();
        for ((o, row), &b) in out.iter_mut().zip(w2.chunks_exact(self.hidden)).zip(b2) {
            *o = b + dot(row, &act);
        }
    }

    /// Accumulate parameter gradients into `grad` given the output gradient
    /// `dout` and the cached pre-activations from [`forward_into`](Self::forward_into).
    pub fn backward_into(&self, x: &[f64], pre: &[f64], dout: &[f64], dhidden: &mut [f64], grad: &mut [f64]) {
        let (w1_end, w2_start, w2_end) = self.offsets();
        let (h, n_in) = (self.hidden, self.input);
        let w2 = self.w2();
        let act: Vec<f64> = pre.iter().map(|a| a.max(0.0)).collect();
        dhidden.fill(0.0);
        {
            let (g_w2, g_b2) = grad[w2_start..].split_at_mut(w2_end - w2_start);
            let rows = w2.chunks_exact(h).zip(g_w2.chunks_exact_mut(h));
            for ((&g, gb), (w_row, g_row)) in dout.iter().zip(g_b2.iter_mut()).zip(rows) {
                if g == 0.0 {
                    continue;
                }
                *gb += g;
                axpy(g, &act, g_row);
                axpy(g, w_row, dhidden);
            }
        }
        let (g_w1, rest) = grad.split_at_mut(w1_end);
        let g_b1 = &mut rest[..h];
        for (j, g_row) in g_w1.chunks_exact_mut(n_in).enumerate() {
            if pre[j] <= 0.0 {
                continue;
            }
            g_b1[j] += dhidden[j];
            axpy(dhidden[j], x, g_row);
        }
    }

    /// Batched [`forward_into`](Self::forward_into) as two matrix products.
    /// `pre` is `B x hidden` and `out` is `B x output`, row-major.
    pub fn forward_batch(&self, xs: &[&[f64]], pre: &mut [f64], out: &mut [f64]) {
        let (n_in, h, o, b) = (self.input, self.hidden, self.output, xs.len());
        let x = stack_rows(xs, n_in);
        for row in pre.chunks_exact_mut(h) {
            row.copy_from_slice(self.b1());
        }
        // pre += X W1^T
        gemm(b, n_in, h, &x, (n_in, 1), self.w1(), (1, n_in), 1.0, pre, (h, 1));
        let act: Vec<f64> = pre.iter().map(|a| a.max(0.0)).collect();
        for row in out.chunks_exact_mut(o) {
            row.copy_from_slice(self.b2());
        }
        // out += A W2^T
        gemm(b, h, o, &act, (h, 1), self.w2(), (1, h), 1.0, out, (o, 1));
    }

    /// Batched [`backward_into`](Self::backward_into) with `dout` laid out
    /// like the `out` of [`forward_batch`](Self::forward_batch).
    pub fn backward_batch(&self, xs: &[&[f64]], pre: &[f64], dout: &[f64], grad: &mut [f64]) {
        let (w1_end, w2_start, w2_end) = self.offsets();
        let (n_in, h, o, b) = (self.input, self.hidden, self.output, xs.len());
        let x = stack_rows(xs, n_in);
        let act: Vec<f64> = pre.iter().map(|a| a.max(0.0)).collect();
        let (g_w1, rest) = grad.split_at_mut(w1_end);
        let (g_b1, rest) = rest.split_at_mut(h);
        let (g_w2, g_b2) = rest[w2_start - w1_end - h..].split_at_mut(w2_end - w2_start);
        for row in dout.chunks_exact(o) {
            for (g, &d) in g_b2.iter_mut().zip(row) {
                *g += d;
            }
        }
        // dW2 += dZ^T A
        gemm(o, b, h, dout, (1, o), &act, (h, 1), 1.0, g_w2, (h, 1));
        // dPre = (dZ W2) masked by the ReLU
        let mut dpre = vec![0.0; b * h];
        gemm(b, o, h, dout, (o, 1), self.w2(), (h, 1), 0.0, &mut dpre, (h, 1));
        for (d, &p) in dpre.iter_mut().zip(pre) {
            if p <= 0.0 {
                *d = 0.0;
            }
        }
        for row in dpre.chunks_exact(h) {
            for (g, &d) in g_b1.iter_mut().zip(row) {
                *g += d;
            }
        }
        // dW1 += dPre^T X
        gemm(h, b, n_in, &dpre, (1, h), &x, (n_in, 1), 1.0, g_w1, (n_in, 1));
    }
}

fn stack_rows(xs: &[&[f64]], width: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(xs.len() * width);
    for row in xs {
        assert_eq!(row.len(), width, "input width");
        x.extend_from_slice(row);
    }
    x
}

/// `C = A B + beta C` for an `m x k` by `k x n` product; each matrix is
/// given with its (row, column) strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols.max(1) - 1) * cs;
    if k > 0 {
        assert!(last(m, k, rsa, csa) < a.len() && last(k, n, rsb, csb) < b.len());
    }
    assert!(last(m, n, rsc, csc) < c.len());
    // SAFETY: every index the kernel touches was bounds-checked above and
    // `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// `y += a * x`.
#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (y, &x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four independent accumulators so the loop vectorizes
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        let (x, y): (&[f64; 4], &[f64; 4]) = (x.try_into().unwrap(), y.try_into().unwrap());
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Heatmap generator: `[image ; text]` features to 32x32 logits.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams(pub TwoLayer);

impl GeneratorParams {
    pub fn zeros(hidden: usize) -> Self {
        Self(TwoLayer::zeros(GEN_INPUT_DIM, hidden, OUTPUT_DIM))
    }

    pub fn random<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Self {
        Self(TwoLayer::random(GEN_INPUT_DIM, hidden, OUTPUT_DIM, rng))
    }

    pub fn from_net(net: TwoLayer) -> Result<Self> {
        let (i, _, o) = net.dims();
        if (i, o) != (GEN_INPUT_DIM, OUTPUT_DIM) {
            return Err(Error::ShapeMismatch(format!("generator needs {GEN_INPUT_DIM}->{OUTPUT_DIM}, got {i}->{o}")));
        }
        Ok(Self(net))
    }

    pub fn hidden(&self) -> usize {
        self.0.hidden
    }

    pub fn net(&self) -> &TwoLayer {
        &self.0
    }

    pub fn forward(&self, feat: &SampleFeatures) -> Result<Vec<f64>> {
        if !self.0.is_finite() {
            return Err(Error::NonFiniteParams);
        }
        let mut pre = vec![0.0; self.0.hidden];
        let mut out = vec![0.0; OUTPUT_DIM];
        self.0.forward_into(feat.generator_input(), &mut pre, &mut out);
        Ok(out)
    }
}

/// Label-quality discriminator over `[image ; text ; label]` features.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorParams(pub TwoLayer);

impl DiscriminatorParams {
    pub fn zeros(hidden: usize) -> Self {
        Self(TwoLayer::zeros(DISC_INPUT_DIM, hidden, 1))
    }

    pub fn random<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Self {
        Self(TwoLayer::random(DISC_INPUT_DIM, hidden, 1, rng))
    }

    pub fn from_net(net: TwoLayer) -> Result<Self> {
        let (i, _, o) = net.dims();
        if (i, o) != (DISC_INPUT_DIM, 1) {
            return Err(Error::ShapeMismatch(format!("discriminator needs {DISC_INPUT_DIM}->1, got {i}->{o}")));
        }
        Ok(Self(net))
    }

    /// Zero network whose output is `sigmoid(bias)` for every input.
    pub fn constant(hidden: usize, bias: f64) -> Self {
        let mut d = Self::zeros(hidden);
        d.0.b2_mut()[0] = bias;
        d
    }

    pub fn net(&self) -> &TwoLayer {
        &self.0
    }

    pub fn hidden(&self) -> usize {
        self.0.hidden
    }

    /// Pre-sigmoid score.
    pub fn logit(&self, feat: &SampleFeatures) -> Result<f64> {
        if !self.0.is_finite() {
            return Err(Error::NonFiniteParams);
        }
        let mut pre = vec![0.0; self.0.hidden];
        let mut out = [0.0];
        self.0.forward_into(feat.discriminator_input(), &mut pre, &mut out);
        Ok(out[0])
    }

    /// `d(x_img, x_txt, H)`, strictly inside `(0, 1)`.
    pub fn forward(&self, feat: &SampleFeatures) -> Result<f64> {
        Ok(clamp_open_unit(sigmoid(self.logit(feat)?)))
    }

    /// Loss weight `f(d)`. The open-interval guard of [`Self::forward`] is
    /// skipped so a saturated discriminator yields exactly `f_ceil`.
    pub fn weight(&self, feat: &SampleFeatures, cfg: &TrainConfig) -> Result<f64> {
        Ok(weight_fn(sigmoid(self.logit(feat)?), cfg))
    }
}

/// Keep a probability strictly inside `(0, 1)`.
#[inline]
pub(crate) fn clamp_open_unit(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}
