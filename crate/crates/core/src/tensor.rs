//! Dense row-major matrices, feed-forward MLPs with exact reverse-mode
//! gradients, the Adam optimizer and a central-difference gradient oracle.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FairadError, Result};

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix[{}x{}]", self.rows, self.cols)?;
        if self.data.len() <= 64 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major data; rejects bad lengths and non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(FairadError::shape(
                "Matrix::from_vec",
                format!("{rows}x{cols}"),
                format!("len {}", data.len()),
            ));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(FairadError::NonFinite {
                context: format!("matrix entry ({}, {})", k / cols.max(1), k % cols.max(1)),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(FairadError::shape(
                    "Matrix::from_rows",
                    format!("row 0 has {cols} cols"),
                    format!("row {i} has {} cols", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub(crate) fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rows `idx` in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Contiguous row range `[start, end)`.
    pub fn row_range(&self, start: usize, end: usize) -> Matrix {
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Concatenates matrices vertically.
    pub fn vstack(parts: &[&Matrix]) -> Result<Matrix> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for m in parts {
            if m.cols != cols {
                return Err(FairadError::shape("vstack", format!("{cols} cols"), m.shape_str()));
            }
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(FairadError::shape("matmul", self.shape_str(), other.shape_str()));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * other^T`; `other` is stored as `[out x in]` like a weight matrix.
    fn matmul_transposed(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.cols, other.cols);
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                let b = other.row(j);
                out.data[i * other.rows + j] = a.iter().zip(b).map(|(x, y)| x * y).sum();
            }
        }
        out
    }

    /// Sum of squared entries.
    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative evaluated at the pre-activation `x`.
    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One affine layer followed by an elementwise activation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `[out x in]`
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weight.cols
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows
    }
}

/// A feed-forward network as an ordered stack of layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// Validates that adjacent layer dimensions chain.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(FairadError::InvalidInput("an MLP needs at least one layer".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.output_dim() {
                return Err(FairadError::shape(
                    "MlpParams::new",
                    format!("layer {l} weight {}", layer.weight.shape_str()),
                    format!("bias len {}", layer.bias.len()),
                ));
            }
            if l > 0 && layers[l - 1].output_dim() != layer.input_dim() {
                return Err(FairadError::shape(
                    "MlpParams::new",
                    format!("layer {} output {}", l - 1, layers[l - 1].output_dim()),
                    format!("layer {l} input {}", layer.input_dim()),
                ));
            }
        }
        Ok(MlpParams { layers })
    }

    /// Uniform `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` weights and biases.
    /// `dims` lists every width including input and output.
    pub fn init<R: Rng + ?Sized>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(FairadError::InvalidInput(format!(
                "MLP dims must have >= 2 positive entries, got {dims:?}"
            )));
        }
        let n_layers = dims.len() - 1;
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weight: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            let bias: Vec<f64> = (0..fan_out).map(|_| rng.random_range(-bound..bound)).collect();
            layers.push(Layer {
                weight: Matrix::from_vec(fan_out, fan_in, weight)?,
                bias,
                activation: if l + 1 == n_layers { output } else { hidden },
            });
        }
        MlpParams::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data.len() + l.bias.len())
            .sum()
    }

    /// Flattens parameters layer by layer: weight (row-major) then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weight.data);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Inverse of [`MlpParams::to_flat`].
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(FairadError::shape(
                "MlpParams::set_flat",
                self.num_params(),
                flat.len(),
            ));
        }
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.weight.data.len();
            l.weight.data.copy_from_slice(&flat[k..k + nw]);
            k += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[k..k + nb]);
            k += nb;
        }
        Ok(())
    }
}

/// Per-layer values saved by [`mlp_forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input to each layer (`inputs[0]` is the batch).
    pub inputs: Vec<Matrix>,
    /// Pre-activation of each layer.
    pub pre_activations: Vec<Matrix>,
}

/// Gradients with the same layout as [`MlpParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        MlpGrads {
            weights: params
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.weight.rows, l.weight.cols))
                .collect(),
            biases: params.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(&w.data);
            out.extend_from_slice(b);
        }
        out
    }

    /// `self += other`
    pub fn accumulate(&mut self, other: &MlpGrads) {
        for (w, ow) in self.weights.iter_mut().zip(&other.weights) {
            for (a, b) in w.data.iter_mut().zip(&ow.data) {
                *a += b;
            }
        }
        for (bias, ob) in self.biases.iter_mut().zip(&other.biases) {
            for (a, b) in bias.iter_mut().zip(ob) {
                *a += b;
            }
        }
    }
}

/// Runs the network on a batch (`n x d_in`).
pub fn mlp_forward(params: &MlpParams, batch: &Matrix) -> Result<(Matrix, ForwardCache)> {
    if batch.cols != params.input_dim() {
        return Err(FairadError::shape(
            "mlp_forward",
            format!("batch {}", batch.shape_str()),
            format!("first layer {}", params.layers[0].weight.shape_str()),
        ));
    }
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut pre_activations = Vec::with_capacity(params.layers.len());
    let mut current = batch.clone();
    for layer in &params.layers {
        let mut z = current.matmul_transposed(&layer.weight);
        for i in 0..z.rows {
            for (v, b) in z.row_mut(i).iter_mut().zip(&layer.bias) {
                *v += b;
            }
        }
        let mut a = z.clone();
        for v in a.data.iter_mut() {
            *v = layer.activation.apply(*v);
        }
        inputs.push(std::mem::replace(&mut current, a));
        pre_activations.push(z);
    }
    Ok((
        current,
        ForwardCache {
            inputs,
            pre_activations,
        },
    ))
}

/// Forward pass that discards the cache.
pub fn mlp_apply(params: &MlpParams, batch: &Matrix) -> Result<Matrix> {
    mlp_forward(params, batch).map(|(out, _)| out)
}

/// Gradients of `sum(upstream ⊙ output)` with respect to every parameter and the input.
pub fn mlp_backward(
    params: &MlpParams,
    cache: &ForwardCache,
    upstream: &Matrix,
) -> Result<(MlpGrads, Matrix)> {
    let n_layers = params.layers.len();
    if cache.inputs.len() != n_layers || cache.pre_activations.len() != n_layers {
        return Err(FairadError::shape(
            "mlp_backward",
            format!("{n_layers} layers"),
            format!("cache with {} layers", cache.inputs.len()),
        ));
    }
    for (l, layer) in params.layers.iter().enumerate() {
        let (x, z) = (&cache.inputs[l], &cache.pre_activations[l]);
        if x.cols != layer.input_dim() || z.cols != layer.output_dim() || x.rows != z.rows {
            return Err(FairadError::shape(
                "mlp_backward (stale cache)",
                format!("layer {l} weight {}", layer.weight.shape_str()),
                format!("cached input {} / pre {}", x.shape_str(), z.shape_str()),
            ));
        }
    }
    let last = &cache.pre_activations[n_layers - 1];
    if upstream.shape() != last.shape() {
        return Err(FairadError::shape(
            "mlp_backward",
            format!("output {}", last.shape_str()),
            format!("upstream {}", upstream.shape_str()),
        ));
    }

    let mut grads = MlpGrads::zeros_like(params);
    let mut delta = upstream.clone();
    for l in (0..n_layers).rev() {
        let layer = &params.layers[l];
        let z = &cache.pre_activations[l];
        let x = &cache.inputs[l];
        for (d, zv) in delta.data.iter_mut().zip(&z.data) {
            *d *= layer.activation.derivative(*zv);
        }
        // dW = delta^T x, db = column sums of delta
        let gw = &mut grads.weights[l];
        let gb = &mut grads.biases[l];
        for i in 0..delta.rows {
            let drow = delta.row(i);
            let xrow = x.row(i);
            for (o, &dv) in drow.iter().enumerate() {
                if dv == 0.0 {
                    continue;
                }
                gb[o] += dv;
                let wrow = &mut gw.data[o * x.cols..(o + 1) * x.cols];
                for (g, xv) in wrow.iter_mut().zip(xrow) {
                    *g += dv * xv;
                }
            }
        }
        delta = delta.matmul(&layer.weight)?;
    }
    Ok((grads, delta))
}

/// Adam moments and hyperparameters for one parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Fresh state with the usual defaults (`beta1=0.9, beta2=0.999, eps=1e-8`).
    pub fn new(params: &MlpParams, learning_rate: f64) -> Self {
        Self::with_len(params.num_params(), learning_rate)
    }

    pub fn with_len(n: usize, learning_rate: f64) -> Self {
        AdamState {
            step: 0,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// Bias-corrected Adam update of a flat parameter vector.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(FairadError::shape(
                "adam_step",
                format!("{} accumulators / {} params", self.first_moment.len(), params.len()),
                format!("{} grads", grads.len()),
            ));
        }
        if let Some(k) = grads.iter().position(|g| !g.is_finite()) {
            return Err(FairadError::NonFinite {
                context: format!("gradient of parameter {k}"),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for k in 0..params.len() {
            let g = grads[k];
            let m = self.beta1 * self.first_moment[k] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.second_moment[k] + (1.0 - self.beta2) * g * g;
            self.first_moment[k] = m;
            self.second_moment[k] = v;
            let m_hat = m / c1;
            let v_hat = v / c2;
            params[k] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// One Adam step on an MLP.
pub fn adam_step(params: &mut MlpParams, state: &mut AdamState, grads: &MlpGrads) -> Result<()> {
    let mut flat = params.to_flat();
    state.update(&mut flat, &grads.to_flat())?;
    params.set_flat(&flat)
}

/// Central-difference gradient `(f(θ+εe_k) − f(θ−εe_k)) / 2ε` for every coordinate.
pub fn finite_diff_grad<F>(mut loss: F, params: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(eps > 0.0) {
        return Err(FairadError::InvalidInput(format!("eps must be > 0, got {eps}")));
    }
    let base = loss(params);
    if !base.is_finite() {
        return Err(FairadError::NonFinite {
            context: "loss at the expansion point".into(),
        });
    }
    let mut theta = params.to_vec();
    let mut grads = Vec::with_capacity(params.len());
    for k in 0..params.len() {
        let orig = theta[k];
        theta[k] = orig + eps;
        let up = loss(&theta);
        theta[k] = orig - eps;
        let down = loss(&theta);
        theta[k] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(FairadError::NonFinite {
                context: format!("loss perturbed along coordinate {k}"),
            });
        }
        grads.push((up - down) / (2.0 * eps));
    }
    Ok(grads)
}
