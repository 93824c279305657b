//! Kolmogorov-Arnold network for binary probability estimation.
//!
//! Every edge `i -> o` of a layer carries the univariate map
//! `base_weight * silu(x) + sum_c coeff_c * B_c(x)` where `B_c` are cubic
//! (by default) B-splines on a fixed grid over standardized inputs. A node
//! sums its incoming edges. The last layer has a single output, read as a
//! logit.
//!
//! Training is full-batch: binary cross-entropy on `sigmoid(logit)` plus a
//! weighted spline regularizer, minimized with AdamW for a fixed number of
//! steps. Gradients are computed by hand-written backpropagation through
//! the silu and spline terms.

pub mod adamw;

use ndarray::Array2;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

pub use adamw::{adamw_step, AdamWConfig, AdamWState};

use crate::error::{Error, Result};
use crate::numeric::{clip_probability, sigmoid, silu, silu_grad, softplus};
use crate::rng;
use crate::spline::{BasisEvaluator, SplineGrid};
use crate::Scalar;

/// Spline domain on standardized inputs; values outside are clamped.
pub const GRID_RANGE: (f64, f64) = (-3.0, 3.0);

const SPLINE_INIT_SD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct KanConfig {
    pub hidden_width: usize,
    pub grid_size: usize,
    pub spline_order: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub reg_strength: f64,
    pub seed: u64,
}

impl Default for KanConfig {
    fn default() -> Self {
        Self {
            hidden_width: 16,
            grid_size: 4,
            spline_order: 3,
            steps: 25,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            reg_strength: 1e-4,
            seed: 0,
        }
    }
}

impl KanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 || self.grid_size == 0 || self.spline_order == 0 || self.steps == 0 {
            return Err(Error::Config("KAN widths, grid size, order and steps must be positive".into()));
        }
        let rates = [self.learning_rate, self.weight_decay, self.reg_strength];
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) || self.learning_rate == 0.0 {
            return Err(Error::Config("KAN rates must be finite, learning rate positive".into()));
        }
        Ok(())
    }

    fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KanLayer<T> {
    in_dim: usize,
    out_dim: usize,
    /// `[out][in][basis]`, row-major.
    spline_coeffs: Vec<T>,
    /// `[out][in]`, row-major.
    base_weights: Vec<T>,
    grid: SplineGrid<T>,
}

impl<T: Scalar> KanLayer<T> {
    pub fn zeros(in_dim: usize, out_dim: usize, grid: SplineGrid<T>) -> Self {
        let nb = grid.n_basis();
        Self {
            in_dim,
            out_dim,
            spline_coeffs: vec![T::zero(); out_dim * in_dim * nb],
            base_weights: vec![T::zero(); out_dim * in_dim],
            grid,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn grid(&self) -> &SplineGrid<T> {
        &self.grid
    }

    pub fn n_edges(&self) -> usize {
        self.in_dim * self.out_dim
    }

    /// Spline coefficients of edge `input -> output`.
    pub fn edge_coeffs(&self, output: usize, input: usize) -> &[T] {
        let nb = self.grid.n_basis();
        let start = (output * self.in_dim + input) * nb;
        &self.spline_coeffs[start..start + nb]
    }

    pub fn edge_coeffs_mut(&mut self, output: usize, input: usize) -> &mut [T] {
        let nb = self.grid.n_basis();
        let start = (output * self.in_dim + input) * nb;
        &mut self.spline_coeffs[start..start + nb]
    }

    pub fn base_weight(&self, output: usize, input: usize) -> T {
        self.base_weights[output * self.in_dim + input]
    }

    pub fn set_base_weight(&mut self, output: usize, input: usize, value: T) {
        self.base_weights[output * self.in_dim + input] = value;
    }

    fn n_params(&self) -> usize {
        self.spline_coeffs.len() + self.base_weights.len()
    }

    /// `(L1 term, entropy term)` of the spline regularizer for this layer.
    fn reg_terms(&self) -> (T, T) {
        let nb = T::from_count(self.grid.n_basis());
        let m: Vec<T> = self
            .spline_coeffs
            .chunks(self.grid.n_basis())
            .map(|c| c.iter().map(|v| v.abs()).sum::<T>() / nb)
            .collect();
        let total: T = m.iter().copied().sum();
        if total <= T::zero() {
            return (T::zero(), T::zero());
        }
        let l1 = total / T::from_count(m.len());
        let entropy = m
            .iter()
            .filter(|&&v| v > T::zero())
            .map(|&v| {
                let p = v / total;
                -p * p.ln()
            })
            .sum();
        (l1, entropy)
    }

    /// Adds `scale * d(reg)/d(coeff)` into `grad` (spline block of this layer).
    fn add_reg_grad(&self, scale: T, grad: &mut [T]) {
        let nb = self.grid.n_basis();
        let nbt = T::from_count(nb);
        let m: Vec<T> = self
            .spline_coeffs
            .chunks(nb)
            .map(|c| c.iter().map(|v| v.abs()).sum::<T>() / nbt)
            .collect();
        let total: T = m.iter().copied().sum();
        if total <= T::zero() {
            return;
        }
        let edges = T::from_count(m.len());
        let entropy: T = m
            .iter()
            .filter(|&&v| v > T::zero())
            .map(|&v| {
                let p = v / total;
                -p * p.ln()
            })
            .sum();
        for (e, &me) in m.iter().enumerate() {
            if me <= T::zero() {
                continue;
            }
            let p = me / total;
            let d_me = T::one() / edges + (-p.ln() - entropy) / total;
            for c in 0..nb {
                let w = self.spline_coeffs[e * nb + c];
                let sign = if w > T::zero() {
                    T::one()
                } else if w < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                };
                grad[e * nb + c] = grad[e * nb + c] + scale * d_me * sign / nbt;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KanModel<T> {
    layers: Vec<KanLayer<T>>,
    config: KanConfig,
}

/// Per-layer buffers for one sample's forward/backward pass.
#[derive(Debug, Clone)]
struct LayerScratch<T> {
    silu: Vec<T>,
    silu_grad: Vec<T>,
    basis: Vec<T>,
    basis_grad: Vec<T>,
    out: Vec<T>,
    grad_out: Vec<T>,
}

impl<T: Scalar> LayerScratch<T> {
    fn new(layer: &KanLayer<T>) -> Self {
        let nb = layer.grid.n_basis();
        Self {
            silu: vec![T::zero(); layer.in_dim],
            silu_grad: vec![T::zero(); layer.in_dim],
            basis: vec![T::zero(); layer.in_dim * nb],
            basis_grad: vec![T::zero(); layer.in_dim * nb],
            out: vec![T::zero(); layer.out_dim],
            grad_out: vec![T::zero(); layer.out_dim],
        }
    }
}

impl<T: Scalar> KanModel<T> {
    /// Model with widths `[in_dim, hidden_width, 1]` and all parameters zero.
    pub fn zeros(in_dim: usize, config: &KanConfig) -> Result<Self> {
        Self::zeros_with_widths(&[in_dim, config.hidden_width, 1], config)
    }

    pub fn zeros_with_widths(widths: &[usize], config: &KanConfig) -> Result<Self> {
        config.validate()?;
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config("KAN needs at least two positive layer widths".into()));
        }
        if *widths.last().unwrap() != 1 {
            return Err(Error::Config("final KAN width must be 1".into()));
        }
        let grid = SplineGrid::new(T::lit(GRID_RANGE.0), T::lit(GRID_RANGE.1), config.grid_size, config.spline_order)?;
        let layers = widths.windows(2).map(|w| KanLayer::zeros(w[0], w[1], grid)).collect();
        Ok(Self { layers, config: config.clone() })
    }

    /// Random initialization: spline coefficients `N(0, 0.1^2)`, base
    /// weights `N(0, 1/in_dim)`.
    pub fn random(widths: &[usize], config: &KanConfig) -> Result<Self> {
        let mut model = Self::zeros_with_widths(widths, config)?;
        let mut rng = rng::stream(config.seed, "kan-init", &[]);
        let spline = Normal::new(0.0, SPLINE_INIT_SD).expect("valid sd");
        for layer in &mut model.layers {
            let base = Normal::new(0.0, 1.0 / (layer.in_dim as f64).sqrt()).expect("valid sd");
            for c in &mut layer.spline_coeffs {
                *c = T::lit(spline.sample(&mut rng));
            }
            for b in &mut layer.base_weights {
                *b = T::lit(base.sample(&mut rng));
            }
        }
        Ok(model)
    }

    pub fn layers(&self) -> &[KanLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [KanLayer<T>] {
        &mut self.layers
    }

    pub fn config(&self) -> &KanConfig {
        &self.config
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(KanLayer::n_params).sum()
    }

    /// Flat parameter vector: per layer, spline coefficients then base weights.
    pub fn parameters(&self) -> Vec<T> {
        let mut p = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            p.extend_from_slice(&l.spline_coeffs);
            p.extend_from_slice(&l.base_weights);
        }
        p
    }

    pub fn set_parameters(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", self.n_params(), params.len())));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let ns = l.spline_coeffs.len();
            l.spline_coeffs.copy_from_slice(&params[off..off + ns]);
            off += ns;
            let nw = l.base_weights.len();
            l.base_weights.copy_from_slice(&params[off..off + nw]);
            off += nw;
        }
        Ok(())
    }

    /// Pre-sigmoid logit for one (already standardized) input vector.
    pub fn forward(&self, x: &[T]) -> Result<T> {
        if x.len() != self.in_dim() {
            return Err(Error::Shape(format!("input has {} features, model expects {}", x.len(), self.in_dim())));
        }
        let mut evals: Vec<BasisEvaluator<T>> = self.layers.iter().map(|l| BasisEvaluator::new(l.grid)).collect();
        let mut scratch: Vec<LayerScratch<T>> = self.layers.iter().map(LayerScratch::new).collect();
        Ok(self.forward_with(x, &mut evals, &mut scratch, false))
    }

    fn forward_with(
        &self,
        x: &[T],
        evals: &mut [BasisEvaluator<T>],
        scratch: &mut [LayerScratch<T>],
        with_grad: bool,
    ) -> T {
        for l in 0..self.layers.len() {
            let (done, rest) = scratch.split_at_mut(l);
            let input: &[T] = if l == 0 { x } else { &done[l - 1].out };
            let s = &mut rest[0];
            self.layers[l].fill_features(input, &mut evals[l], s, with_grad);
            self.layers[l].combine(s);
        }
        scratch.last().expect("at least one layer").out[0]
    }

    /// Spline regularizer summed over layers.
    pub fn reg_loss(&self) -> T {
        self.layers.iter().map(|l| {
            let (a, b) = l.reg_terms();
            a + b
        }).sum()
    }

    /// Mean binary cross-entropy of `sigmoid(forward(x))` plus
    /// `reg_strength * reg_loss`, and its gradient in [`Self::parameters`]
    /// layout. `features` must already be standardized.
    pub fn loss_and_grad(&self, features: &Array2<T>, targets: &[u8], reg_strength: T) -> Result<(T, Vec<T>)> {
        let cache = InputCache::build(self, features)?;
        Ok(self.loss_and_grad_cached(&cache, targets, reg_strength))
    }

    pub fn loss(&self, features: &Array2<T>, targets: &[u8], reg_strength: T) -> Result<T> {
        Ok(self.loss_and_grad(features, targets, reg_strength)?.0)
    }

    fn loss_and_grad_cached(&self, cache: &InputCache<T>, targets: &[u8], reg_strength: T) -> (T, Vec<T>) {
        let n = cache.n;
        let nt = T::from_count(n);
        let mut grad = vec![T::zero(); self.n_params()];
        let offsets = self.param_offsets();
        let mut evals: Vec<BasisEvaluator<T>> = self.layers.iter().map(|l| BasisEvaluator::new(l.grid)).collect();
        let mut scratch: Vec<LayerScratch<T>> = self.layers.iter().map(LayerScratch::new).collect();
        let mut data_loss = T::zero();
        let last = self.layers.len() - 1;

        for i in 0..n {
            // layer 0 features come from the cache
            {
                let s = &mut scratch[0];
                let in0 = self.layers[0].in_dim;
                let nb0 = self.layers[0].grid.n_basis();
                s.silu.copy_from_slice(&cache.silu[i * in0..(i + 1) * in0]);
                s.basis.copy_from_slice(&cache.basis[i * in0 * nb0..(i + 1) * in0 * nb0]);
                self.layers[0].combine(s);
            }
            for l in 1..self.layers.len() {
                let (done, rest) = scratch.split_at_mut(l);
                self.layers[l].fill_features(&done[l - 1].out, &mut evals[l], &mut rest[0], true);
                self.layers[l].combine(&mut rest[0]);
            }
            let logit = scratch[last].out[0];
            let y = if targets[i] == 1 { T::one() } else { T::zero() };
            data_loss = data_loss + softplus(logit) - y * logit;
            scratch[last].grad_out[0] = (sigmoid(logit) - y) / nt;

            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let (spline_off, base_off) = offsets[l];
                let nb = layer.grid.n_basis();
                let (lower, upper) = scratch.split_at_mut(l);
                let s = &upper[0];
                for o in 0..layer.out_dim {
                    let g = s.grad_out[o];
                    if g == T::zero() {
                        continue;
                    }
                    for j in 0..layer.in_dim {
                        let e = o * layer.in_dim + j;
                        grad[base_off + e] = grad[base_off + e] + g * s.silu[j];
                        let gs = &mut grad[spline_off + e * nb..spline_off + (e + 1) * nb];
                        for (gc, &b) in gs.iter_mut().zip(&s.basis[j * nb..(j + 1) * nb]) {
                            *gc = *gc + g * b;
                        }
                    }
                }
                if l > 0 {
                    let prev = &mut lower[l - 1];
                    for j in 0..layer.in_dim {
                        let db = &s.basis_grad[j * nb..(j + 1) * nb];
                        let mut acc = T::zero();
                        for o in 0..layer.out_dim {
                            let g = s.grad_out[o];
                            let e = o * layer.in_dim + j;
                            let mut local = layer.base_weights[e] * s.silu_grad[j];
                            for (c, &d) in layer.spline_coeffs[e * nb..(e + 1) * nb].iter().zip(db) {
                                local = local + *c * d;
                            }
                            acc = acc + g * local;
                        }
                        prev.grad_out[j] = acc;
                    }
                }
            }
        }

        let mut loss = data_loss / nt;
        if reg_strength != T::zero() {
            loss = loss + reg_strength * self.reg_loss();
            for (l, layer) in self.layers.iter().enumerate() {
                let (spline_off, base_off) = offsets[l];
                layer.add_reg_grad(reg_strength, &mut grad[spline_off..base_off]);
            }
        }
        (loss, grad)
    }

    /// `(spline offset, base-weight offset)` of each layer in the flat layout.
    fn param_offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.layers
            .iter()
            .map(|l| {
                let s = off;
                let b = s + l.spline_coeffs.len();
                off = b + l.base_weights.len();
                (s, b)
            })
            .collect()
    }
}

impl<T: Scalar> KanLayer<T> {
    fn fill_features(&self, input: &[T], eval: &mut BasisEvaluator<T>, s: &mut LayerScratch<T>, with_grad: bool) {
        let nb = self.grid.n_basis();
        for (j, &a) in input.iter().enumerate() {
            s.silu[j] = silu(a);
            let b = &mut s.basis[j * nb..(j + 1) * nb];
            if with_grad {
                s.silu_grad[j] = silu_grad(a);
                eval.eval_with_derivative(a, b, &mut s.basis_grad[j * nb..(j + 1) * nb]);
            } else {
                eval.eval(a, b);
            }
        }
    }

    fn combine(&self, s: &mut LayerScratch<T>) {
        let nb = self.grid.n_basis();
        for o in 0..self.out_dim {
            let mut acc = T::zero();
            for j in 0..self.in_dim {
                let e = o * self.in_dim + j;
                acc = acc + self.base_weights[e] * s.silu[j];
                for (c, &b) in self.spline_coeffs[e * nb..(e + 1) * nb].iter().zip(&s.basis[j * nb..(j + 1) * nb]) {
                    acc = acc + *c * b;
                }
            }
            s.out[o] = acc;
        }
    }
}

/// First-layer silu and basis values for every training row; they do not
/// change during training.
struct InputCache<T> {
    n: usize,
    silu: Vec<T>,
    basis: Vec<T>,
}

impl<T: Scalar> InputCache<T> {
    fn build(model: &KanModel<T>, features: &Array2<T>) -> Result<Self> {
        let layer = &model.layers[0];
        if features.ncols() != layer.in_dim {
            return Err(Error::Shape(format!(
                "features have {} columns, model expects {}",
                features.ncols(),
                layer.in_dim
            )));
        }
        let n = features.nrows();
        let nb = layer.grid.n_basis();
        let mut eval = BasisEvaluator::new(layer.grid);
        let mut silu_v = Vec::with_capacity(n * layer.in_dim);
        let mut basis = vec![T::zero(); n * layer.in_dim * nb];
        for (i, row) in features.rows().into_iter().enumerate() {
            for (j, &a) in row.iter().enumerate() {
                silu_v.push(silu(a));
                let start = (i * layer.in_dim + j) * nb;
                eval.eval(a, &mut basis[start..start + nb]);
            }
        }
        Ok(Self { n, silu: silu_v, basis })
    }
}

/// Per-column standardization learned on a training set. Constant columns
/// map to 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Standardizer<T> {
    mean: Vec<T>,
    scale: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    pub fn fit(features: &Array2<T>) -> Self {
        let n = T::from_count(features.nrows().max(1));
        let mut mean = Vec::with_capacity(features.ncols());
        let mut scale = Vec::with_capacity(features.ncols());
        for col in features.columns() {
            let m = col.iter().copied().sum::<T>() / n;
            let var = col.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / n;
            mean.push(m);
            scale.push(var.sqrt());
        }
        Self { mean, scale }
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn scale(&self) -> &[T] {
        &self.scale
    }

    pub fn transform(&self, features: &Array2<T>) -> Result<Array2<T>> {
        if features.ncols() != self.mean.len() {
            return Err(Error::Shape(format!(
                "features have {} columns, standardizer expects {}",
                features.ncols(),
                self.mean.len()
            )));
        }
        let mut out = features.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.mean[j], self.scale[j]);
            col.mapv_inplace(|v| if s > T::zero() { (v - m) / s } else { T::zero() });
        }
        Ok(out)
    }
}

/// Trained network, its input standardization and the loss at every step
/// (`steps + 1` entries: before the first update and after each update).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedKan<T> {
    pub model: KanModel<T>,
    pub standardizer: Standardizer<T>,
    pub loss_trace: Vec<T>,
}

impl<T: Scalar> FittedKan<T> {
    /// Debug dump: knots, coefficients, base weights and standardization.
    pub fn to_json(&self) -> serde_json::Value {
        let layers: Vec<serde_json::Value> = self
            .model
            .layers
            .iter()
            .map(|l| {
                serde_json::json!({
                    "in_dim": l.in_dim,
                    "out_dim": l.out_dim,
                    "knots": l.grid.knots().iter().map(|k| k.as_f64()).collect::<Vec<_>>(),
                    "spline_coeffs": l.spline_coeffs.iter().map(|v| v.as_f64()).collect::<Vec<_>>(),
                    "base_weights": l.base_weights.iter().map(|v| v.as_f64()).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({
            "config": self.model.config,
            "layers": layers,
            "standardizer": {
                "mean": self.standardizer.mean.iter().map(|v| v.as_f64()).collect::<Vec<_>>(),
                "scale": self.standardizer.scale.iter().map(|v| v.as_f64()).collect::<Vec<_>>(),
            },
        })
    }
}

/// Trains a `[d, hidden_width, 1]` network on binary targets.
pub fn kan_fit<T: Scalar>(features: &Array2<T>, targets: &[u8], config: &KanConfig) -> Result<FittedKan<T>> {
    config.validate()?;
    if features.nrows() == 0 {
        return Err(Error::Input("cannot train a KAN on an empty training set".into()));
    }
    if targets.len() != features.nrows() {
        return Err(Error::Shape(format!("{} targets for {} rows", targets.len(), features.nrows())));
    }
    if targets.iter().any(|&t| t > 1) {
        return Err(Error::Validation("KAN targets must be 0 or 1".into()));
    }
    let standardizer = Standardizer::fit(features);
    let x = standardizer.transform(features)?;
    let mut model = KanModel::random(&[features.ncols(), config.hidden_width, 1], config)?;
    let cache = InputCache::build(&model, &x)?;
    let reg = T::lit(config.reg_strength);
    let opt = config.adamw();
    let mut params = model.parameters();
    let mut state = AdamWState::new(params.len());
    let mut loss_trace = Vec::with_capacity(config.steps + 1);
    for _ in 0..config.steps {
        let (loss, grad) = model.loss_and_grad_cached(&cache, targets, reg);
        loss_trace.push(loss);
        adamw_step(&mut params, &grad, &mut state, &opt)?;
        model.set_parameters(&params)?;
    }
    loss_trace.push(model.loss_and_grad_cached(&cache, targets, reg).0);
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Validation("KAN training produced non-finite parameters".into()));
    }
    Ok(FittedKan { model, standardizer, loss_trace })
}

/// Clipped probabilities `sigmoid(forward(standardize(x)))` for every row.
pub fn kan_predict_proba<T: Scalar>(fit: &FittedKan<T>, features: &Array2<T>) -> Result<Vec<T>> {
    let x = fit.standardizer.transform(features)?;
    predict_standardized(&fit.model, &x)
}

/// Clipped probabilities for inputs that are already standardized.
pub fn predict_standardized<T: Scalar>(model: &KanModel<T>, x: &Array2<T>) -> Result<Vec<T>> {
    if x.ncols() != model.in_dim() {
        return Err(Error::Shape(format!("features have {} columns, model expects {}", x.ncols(), model.in_dim())));
    }
    let mut evals: Vec<BasisEvaluator<T>> = model.layers.iter().map(|l| BasisEvaluator::new(l.grid)).collect();
    let mut scratch: Vec<LayerScratch<T>> = model.layers.iter().map(LayerScratch::new).collect();
    Ok(x.rows()
        .into_iter()
        .map(|row| {
            let row: Vec<T> = row.to_vec();
            clip_probability(sigmoid(model.forward_with(&row, &mut evals, &mut scratch, false)))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::bspline_basis;
    use ndarray::Array2;
    use rand::Rng;

    fn small_config(seed: u64) -> KanConfig {
        KanConfig { seed, ..KanConfig::default() }
    }

    /// Direct double loop over layers and edges, with no shared buffers.
    fn reference_forward(model: &KanModel<f64>, x: &[f64]) -> f64 {
        let mut a = x.to_vec();
        for l in model.layers() {
            let mut out = vec![0.0; l.out_dim()];
            for (o, v) in out.iter_mut().enumerate() {
                for (j, &aj) in a.iter().enumerate() {
                    let b = bspline_basis(aj, l.grid());
                    let spline: f64 = l.edge_coeffs(o, j).iter().zip(&b).map(|(c, b)| c * b).sum();
                    *v += l.base_weight(o, j) * aj / (1.0 + (-aj).exp()) + spline;
                }
            }
            a = out;
        }
        a[0]
    }

    #[test]
    fn zero_network_outputs_zero() {
        let m = KanModel::<f64>::zeros(3, &small_config(0)).unwrap();
        assert_eq!(m.forward(&[0.4, -2.0, 7.0]).unwrap(), 0.0);
        let x = Array2::from_shape_vec((2, 3), vec![0.1, 0.2, 0.3, -1.0, 4.0, 2.0]).unwrap();
        assert_eq!(predict_standardized(&m, &x).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn single_edge_silu_at_zero() {
        let mut m = KanModel::<f64>::zeros_with_widths(&[1, 1], &small_config(0)).unwrap();
        m.layers_mut()[0].set_base_weight(0, 0, 1.0);
        assert_eq!(m.forward(&[0.0]).unwrap(), 0.0);
        assert!((m.forward(&[1.0]).unwrap() - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn forward_matches_reference_loop() {
        let m = KanModel::<f64>::random(&[2, 3, 1], &small_config(11)).unwrap();
        let mut rng = rng::stream(5, "test", &[]);
        for _ in 0..20 {
            let x = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
            assert!((m.forward(&x).unwrap() - reference_forward(&m, &x)).abs() < 1e-10);
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let m = KanModel::<f64>::zeros(3, &small_config(0)).unwrap();
        assert!(matches!(m.forward(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn reg_loss_cases() {
        let mut m = KanModel::<f64>::zeros_with_widths(&[2, 2, 1], &small_config(0)).unwrap();
        assert_eq!(m.reg_loss(), 0.0);
        // one nonzero edge among the 4 edges of layer 0
        m.layers_mut()[0].edge_coeffs_mut(1, 0).copy_from_slice(&[0.7, -0.7, 0.7, -0.7, 0.7, -0.7, 0.7]);
        assert!((m.reg_loss() - 0.7 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn reg_loss_matches_formula_on_random_model() {
        let m = KanModel::<f64>::random(&[3, 4, 1], &small_config(3)).unwrap();
        let mut expected = 0.0;
        for l in m.layers() {
            let mut means = Vec::new();
            for o in 0..l.out_dim() {
                for j in 0..l.in_dim() {
                    let c = l.edge_coeffs(o, j);
                    means.push(c.iter().map(|v| v.abs()).sum::<f64>() / c.len() as f64);
                }
            }
            let s: f64 = means.iter().sum();
            expected += s / means.len() as f64;
            expected -= means.iter().map(|m| (m / s) * (m / s).ln()).sum::<f64>();
        }
        assert!((m.reg_loss() - expected).abs() < 1e-12);
    }

    fn toy_data(n: usize, d: usize, seed: u64) -> (Array2<f64>, Vec<u8>) {
        let mut rng = rng::stream(seed, "toy", &[]);
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.5..2.5));
        let y = x.rows().into_iter().map(|r| u8::from(r.sum() + rng.random_range(-1.0..1.0) > 0.0)).collect();
        (x, y)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let model = KanModel::<f64>::random(&[2, 3, 1], &small_config(21)).unwrap();
        let (x, y) = toy_data(40, 2, 8);
        let reg = 0.05;
        let (_, grad) = model.loss_and_grad(&x, &y, reg).unwrap();
        let params = model.parameters();
        let mut rng = rng::stream(2, "pick", &[]);
        let h = 1e-5;
        for _ in 0..5 {
            let k = rng.random_range(0..params.len());
            let mut plus = model.clone();
            let mut p = params.clone();
            p[k] += h;
            plus.set_parameters(&p).unwrap();
            let mut minus = model.clone();
            p[k] -= 2.0 * h;
            minus.set_parameters(&p).unwrap();
            let fd = (plus.loss(&x, &y, reg).unwrap() - minus.loss(&x, &y, reg).unwrap()) / (2.0 * h);
            let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-8);
            assert!(rel <= 1e-4, "param {k}: fd {fd} vs analytic {}", grad[k]);
        }
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let (x, y) = toy_data(120, 3, 4);
        let a = kan_fit(&x, &y, &small_config(9)).unwrap();
        let b = kan_fit(&x, &y, &small_config(9)).unwrap();
        assert_eq!(a.model.parameters(), b.model.parameters());
        assert_eq!(a.loss_trace.len(), 26);
        assert!(a.loss_trace[25] <= a.loss_trace[0]);
    }

    #[test]
    fn all_zero_targets_push_probabilities_down() {
        let (x, _) = toy_data(100, 2, 6);
        let y = vec![0u8; 100];
        let fit = kan_fit(&x, &y, &small_config(1)).unwrap();
        let p = kan_predict_proba(&fit, &x).unwrap();
        assert!(p.iter().all(|&v| v <= 0.5), "max {:?}", p.iter().cloned().fold(0.0, f64::max));
        assert!(fit.loss_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn standardizer_leaves_constant_columns_at_zero() {
        let x = Array2::from_shape_vec((3, 2), vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0]).unwrap();
        let s = Standardizer::fit(&x);
        let t = s.transform(&x).unwrap();
        assert!(t.column(1).iter().all(|&v| v == 0.0));
        let s0: f64 = t.column(0).sum();
        assert!(s0.abs() < 1e-15);
    }

    #[test]
    fn predictions_are_clipped_and_pure() {
        let mut m = KanModel::<f64>::zeros_with_widths(&[1, 1], &small_config(0)).unwrap();
        m.layers_mut()[0].set_base_weight(0, 0, 1e6);
        let x = Array2::from_shape_vec((2, 1), vec![2.0, 2.0]).unwrap();
        let p = predict_standardized(&m, &x).unwrap();
        assert_eq!(p, vec![0.999, 0.999]);
        assert_eq!(p, predict_standardized(&m, &x).unwrap());
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let x = Array2::<f64>::zeros((0, 2));
        assert!(matches!(kan_fit(&x, &[], &small_config(0)), Err(Error::Input(_))));
    }

    #[test]
    fn works_in_single_precision() {
        let (x, y) = toy_data(60, 2, 3);
        let x32 = x.mapv(|v| v as f32);
        let fit = kan_fit(&x32, &y, &small_config(2)).unwrap();
        let p = kan_predict_proba(&fit, &x32).unwrap();
        assert!(p.iter().all(|v| (0.001..=0.999).contains(v)));
    }

    #[test]
    fn separable_line_is_learned() {
        let x = Array2::from_shape_fn((200, 1), |(i, _)| -2.0 + 4.0 * (i as f64 + 0.5) / 200.0);
        let y: Vec<u8> = x.column(0).iter().map(|&v| u8::from(v >= 0.0)).collect();
        let config = KanConfig { steps: 200, learning_rate: 1e-2, ..small_config(3) };
        let fit = kan_fit(&x, &y, &config).unwrap();
        let p = kan_predict_proba(&fit, &x).unwrap();
        let acc = p.iter().zip(&y).filter(|(p, &t)| u8::from(**p >= 0.5) == t).count() as f64 / 200.0;
        println!("separable accuracy {acc}");
        assert!(acc >= 0.95, "accuracy {acc}");
    }
}
