//! Minimal dense-network machinery with hand-written backpropagation.
//!
//! Everything is f64. Point networks share a per-point trunk, pool with
//! concatenated max and mean, and finish with a dense head. The mean pool
//! uses an exactly rounded sum so network outputs are bit-identical under
//! any permutation of the input points.

use rand::Rng;

/// Exactly rounded sum of a sequence (Shewchuk partials, fsum-style
/// final rounding). The result is independent of summand order.
pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut used = 0;
        for k in 0..partials.len() {
            let mut y = partials[k];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[used] = lo;
                used += 1;
            }
            x = hi;
        }
        partials.truncate(used);
        partials.push(x);
    }
    let mut n = partials.len();
    let mut hi = 0.0;
    if n > 0 {
        n -= 1;
        hi = partials[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = partials[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // Half-even rounding correction across remaining partials.
        if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
    }
    hi
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Activation> {
        match tag {
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Dense layer: weights are (out x in) row major.
#[derive(Clone, Debug)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl Layer {
    fn forward(&self, x: &[f64], n: usize) -> Vec<f64> {
        debug_assert_eq!(x.len(), n * self.in_dim);
        let mut out = vec![0.0; n * self.out_dim];
        for i in 0..n {
            let x_row = &x[i * self.in_dim..(i + 1) * self.in_dim];
            let out_row = &mut out[i * self.out_dim..(i + 1) * self.out_dim];
            for (o, slot) in out_row.iter_mut().enumerate() {
                let w_row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                let mut acc = self.biases[o];
                for (w, xv) in w_row.iter().zip(x_row) {
                    acc += w * xv;
                }
                *slot = match self.activation {
                    Activation::Tanh => acc.tanh(),
                    Activation::Identity => acc,
                };
            }
        }
        out
    }
}

/// A stack of dense layers.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Per-layer post-activation values for one forward pass, plus the input.
pub struct MlpCache {
    input: Vec<f64>,
    activations: Vec<Vec<f64>>,
    n: usize,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().unwrap_or(&self.input)
    }
}

/// Gradients shaped like an [`Mlp`]'s parameters.
#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> MlpGrads {
        MlpGrads {
            layers: mlp
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
                .collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (w, b) in &mut self.layers {
            for v in w.iter_mut() {
                *v *= s;
            }
            for v in b.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn add(&mut self, other: &MlpGrads) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            for (v, o) in w.iter_mut().zip(ow) {
                *v += o;
            }
            for (v, o) in b.iter_mut().zip(ob) {
                *v += o;
            }
        }
    }
}

impl Mlp {
    /// Glorot-uniform initialization over the given layer widths.
    pub fn glorot<R: Rng + ?Sized>(dims: &[usize], activations: &[Activation], rng: &mut R) -> Mlp {
        assert_eq!(dims.len(), activations.len() + 1);
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    weights: (0..fan_in * fan_out)
                        .map(|_| rng.random_range(-bound..bound))
                        .collect(),
                    biases: vec![0.0; fan_out],
                    in_dim: fan_in,
                    out_dim: fan_out,
                    activation,
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map(|l| l.in_dim).unwrap_or(0)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    /// Forward `n` rows, caching activations for backward.
    pub fn forward(&self, input: &[f64], n: usize) -> MlpCache {
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut current = input;
        for layer in &self.layers {
            let next = layer.forward(current, n);
            activations.push(next);
            current = activations.last().unwrap();
        }
        MlpCache { input: input.to_vec(), activations, n }
    }

    /// Backpropagate `d_out` (n x out, d loss / d output), accumulating
    /// parameter gradients and returning d loss / d input (n x in).
    pub fn backward(&self, cache: &MlpCache, d_out: &[f64], grads: &mut MlpGrads) -> Vec<f64> {
        let n = cache.n;
        let mut upstream = d_out.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let post = &cache.activations[idx];
            let input: &[f64] = if idx == 0 { &cache.input } else { &cache.activations[idx - 1] };
            // d pre-activation.
            let mut dpre = upstream;
            if layer.activation == Activation::Tanh {
                for (g, y) in dpre.iter_mut().zip(post) {
                    *g *= 1.0 - y * y;
                }
            }
            let (gw, gb) = &mut grads.layers[idx];
            let mut dx = vec![0.0; n * layer.in_dim];
            for i in 0..n {
                let x_row = &input[i * layer.in_dim..(i + 1) * layer.in_dim];
                let dpre_row = &dpre[i * layer.out_dim..(i + 1) * layer.out_dim];
                let dx_row = &mut dx[i * layer.in_dim..(i + 1) * layer.in_dim];
                for (o, &g) in dpre_row.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    gb[o] += g;
                    let w_row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    let gw_row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for ((dxj, wj), (gwj, xj)) in dx_row
                        .iter_mut()
                        .zip(w_row)
                        .zip(gw_row.iter_mut().zip(x_row))
                    {
                        *dxj += g * wj;
                        *gwj += g * xj;
                    }
                }
            }
            upstream = dx;
        }
        upstream
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }
}

/// Shared per-point trunk, concatenated max+mean pooling, dense head.
#[derive(Clone, Debug)]
pub struct PointNet {
    pub trunk: Mlp,
    pub head: Mlp,
}

pub struct PointNetCache {
    trunk: MlpCache,
    pooled: Vec<f64>,
    argmax: Vec<usize>,
    head: MlpCache,
    n: usize,
}

#[derive(Clone, Debug)]
pub struct PointNetGrads {
    pub trunk: MlpGrads,
    pub head: MlpGrads,
}

impl PointNetGrads {
    pub fn zeros_like(net: &PointNet) -> PointNetGrads {
        PointNetGrads {
            trunk: MlpGrads::zeros_like(&net.trunk),
            head: MlpGrads::zeros_like(&net.head),
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.trunk.scale(s);
        self.head.scale(s);
    }

    pub fn add(&mut self, o: &PointNetGrads) {
        self.trunk.add(&o.trunk);
        self.head.add(&o.head);
    }
}

/// Default per-point trunk widths and head hidden width.
pub const TRUNK_WIDTHS: [usize; 2] = [64, 128];
pub const HEAD_HIDDEN: usize = 128;

impl PointNet {
    /// Standard architecture: trunk in -> 64 -> 128 (tanh), pooled 256,
    /// head 256 -> 128 (tanh) -> out (linear).
    pub fn standard<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> PointNet {
        let trunk = Mlp::glorot(
            &[in_dim, TRUNK_WIDTHS[0], TRUNK_WIDTHS[1]],
            &[Activation::Tanh, Activation::Tanh],
            rng,
        );
        let pooled = 2 * TRUNK_WIDTHS[1];
        let head = Mlp::glorot(
            &[pooled, HEAD_HIDDEN, out_dim],
            &[Activation::Tanh, Activation::Identity],
            rng,
        );
        PointNet { trunk, head }
    }

    pub fn in_dim(&self) -> usize {
        self.trunk.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.head.out_dim()
    }

    /// Forward `n` point feature rows to the head output.
    pub fn forward(&self, features: &[f64], n: usize) -> (Vec<f64>, PointNetCache) {
        assert!(n > 0);
        let trunk = self.trunk.forward(features, n);
        let channels = self.trunk.out_dim();
        let u = trunk.output();
        let mut pooled = vec![0.0; 2 * channels];
        let mut argmax = vec![0usize; channels];
        for c in 0..channels {
            let mut best = f64::NEG_INFINITY;
            let mut best_i = 0;
            for i in 0..n {
                let v = u[i * channels + c];
                if v > best {
                    best = v;
                    best_i = i;
                }
            }
            pooled[c] = best;
            argmax[c] = best_i;
            pooled[channels + c] =
                exact_sum((0..n).map(|i| u[i * channels + c])) / n as f64;
        }
        let head = self.head.forward(&pooled, 1);
        let out = head.output().to_vec();
        (out, PointNetCache { trunk, pooled, argmax, head, n })
    }

    /// Backward from d loss / d output; accumulates parameter gradients
    /// and returns d loss / d features (n x in).
    pub fn backward(
        &self,
        cache: &PointNetCache,
        d_out: &[f64],
        grads: &mut PointNetGrads,
    ) -> Vec<f64> {
        let d_pooled = self.head.backward(&cache.head, d_out, &mut grads.head);
        let channels = self.trunk.out_dim();
        let n = cache.n;
        let mut d_u = vec![0.0; n * channels];
        for c in 0..channels {
            d_u[cache.argmax[c] * channels + c] += d_pooled[c];
            let g_mean = d_pooled[channels + c] / n as f64;
            if g_mean != 0.0 {
                for i in 0..n {
                    d_u[i * channels + c] += g_mean;
                }
            }
        }
        self.trunk.backward(&cache.trunk, &d_u, &mut grads.trunk)
    }

    pub fn param_count(&self) -> usize {
        self.trunk.param_count() + self.head.param_count()
    }

    pub fn pooled(&self, cache: &PointNetCache) -> Vec<f64> {
        cache.pooled.clone()
    }
}

/// Mutable views over every parameter tensor, fixed order.
pub fn mlp_tensors_mut(mlp: &mut Mlp) -> Vec<&mut [f64]> {
    mlp.layers
        .iter_mut()
        .flat_map(|l| [l.weights.as_mut_slice(), l.biases.as_mut_slice()])
        .collect()
}

pub fn mlp_grad_tensors(grads: &MlpGrads) -> Vec<&[f64]> {
    grads
        .layers
        .iter()
        .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
        .collect()
}

/// Relative error used by the gradient checker.
pub fn gradient_rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Central-difference check of analytic gradients on randomly probed
/// parameters. `loss` must be a deterministic function of the parameters.
/// Returns the maximum relative error over the probes.
pub fn grad_check_tensors<M, R: Rng + ?Sized>(
    model: &mut M,
    tensors_mut: impl Fn(&mut M) -> Vec<&mut [f64]>,
    loss: impl Fn(&M) -> f64,
    analytic: &[Vec<f64>],
    probes: usize,
    step: f64,
    rng: &mut R,
) -> f64 {
    let shapes: Vec<usize> = tensors_mut(model).iter().map(|t| t.len()).collect();
    assert_eq!(shapes.len(), analytic.len());
    let mut max_err = 0.0f64;
    for _ in 0..probes {
        let t = rng.random_range(0..shapes.len());
        if shapes[t] == 0 {
            continue;
        }
        let i = rng.random_range(0..shapes[t]);
        let original = tensors_mut(model)[t][i];
        tensors_mut(model)[t][i] = original + step;
        let plus = loss(model);
        tensors_mut(model)[t][i] = original - step;
        let minus = loss(model);
        tensors_mut(model)[t][i] = original;
        let numeric = (plus - minus) / (2.0 * step);
        max_err = max_err.max(gradient_rel_error(analytic[t][i], numeric));
    }
    max_err
}
