//! Neural guiding field: dense multi-resolution feature grids feeding a small MLP.
//!
//! All trainable values live in one flat `Vec<f64>` so the optimizer and the
//! checkpoint code treat them uniformly. Matrices are stored input-major
//! (`w[i * out + o]`), so every layer is a sequence of axpy updates.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{Rect, Vec2};
use crate::spherical::{output_len, Dim, UnnormParams};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid field config: {0}")]
    Config(String),
    #[error("activation record is from parameter version {record}, field is at {field}")]
    StaleRecord { record: u64, field: u64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    /// Lattice points per axis for each level.
    pub resolutions: Vec<usize>,
    pub features: usize,
    pub hidden: usize,
    pub k: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            resolutions: vec![16, 32, 64, 128],
            features: 4,
            hidden: 64,
            k: 8,
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<(), FieldError> {
        if self.resolutions.is_empty() {
            return Err(FieldError::Config(
                "at least one grid level is required".into(),
            ));
        }
        if let Some(r) = self.resolutions.iter().find(|&&r| r < 2) {
            return Err(FieldError::Config(format!(
                "grid resolution {r} is below 2"
            )));
        }
        if self.features == 0 || self.hidden == 0 || self.k == 0 {
            return Err(FieldError::Config(
                "features, hidden and k must be positive".into(),
            ));
        }
        if !(self.lr > 0.0)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
        {
            return Err(FieldError::Config(
                "optimizer hyperparameters out of range".into(),
            ));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.resolutions.len() * self.features
    }

    pub fn output_len(&self) -> usize {
        output_len(Dim::Two, self.k)
    }
}

/// Offsets of each parameter block inside the flat vector.
#[derive(Clone, Debug, PartialEq)]
struct Layout {
    levels: Vec<usize>,
    w: [usize; 3],
    b: [usize; 3],
    dims: [usize; 4],
    total: usize,
}

impl Layout {
    fn new(cfg: &FieldConfig) -> Self {
        let mut off = 0;
        let mut levels = Vec::with_capacity(cfg.resolutions.len());
        for &r in &cfg.resolutions {
            levels.push(off);
            off += r * r * cfg.features;
        }
        let dims = [cfg.input_len(), cfg.hidden, cfg.hidden, cfg.output_len()];
        let mut w = [0; 3];
        let mut b = [0; 3];
        for l in 0..3 {
            w[l] = off;
            off += dims[l] * dims[l + 1];
            b[l] = off;
            off += dims[l + 1];
        }
        Layout {
            levels,
            w,
            b,
            dims,
            total: off,
        }
    }
}

/// The four lattice corners and bilinear weights of one level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Corners {
    pub index: [usize; 4],
    pub weight: [f64; 4],
}

/// Bilinear lookup on a `res x res` lattice spanning the unit square.
pub fn bilinear_corners(u: Vec2, res: usize) -> Corners {
    let scale = (res - 1) as f64;
    let px = u.x.clamp(0.0, 1.0) * scale;
    let py = u.y.clamp(0.0, 1.0) * scale;
    let ix = (px.floor() as usize).min(res - 2);
    let iy = (py.floor() as usize).min(res - 2);
    let fx = px - ix as f64;
    let fy = py - iy as f64;
    let i00 = iy * res + ix;
    Corners {
        index: [i00, i00 + 1, i00 + res, i00 + res + 1],
        weight: [
            (1.0 - fx) * (1.0 - fy),
            fx * (1.0 - fy),
            (1.0 - fx) * fy,
            fx * fy,
        ],
    }
}

/// Intermediate values of one forward pass, needed for backpropagation.
#[derive(Clone, Debug)]
pub struct Activations {
    version: u64,
    corners: Vec<Corners>,
    input: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct GuidingField {
    config: FieldConfig,
    bbox: Rect,
    layout: Layout,
    params: Vec<f64>,
    grad: Vec<f64>,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    step: u64,
    version: u64,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: u32,
    config: FieldConfig,
    bbox: Rect,
    step: u64,
    params: Vec<f64>,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
}

const CHECKPOINT_FORMAT: u32 = 1;

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

impl GuidingField {
    pub fn new(config: FieldConfig, bbox: Rect) -> Result<Self, FieldError> {
        config.validate()?;
        let ext = bbox.extent();
        if !(ext.x > 0.0 && ext.y > 0.0) {
            return Err(FieldError::Config(
                "field bbox must have positive extent".into(),
            ));
        }
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let emb_end = layout.w[0];
        for p in &mut params[..emb_end] {
            *p = rng.gen_range(-1e-4..1e-4);
        }
        for l in 0..3 {
            let a = 1.0 / (layout.dims[l] as f64).sqrt();
            let n = layout.dims[l] * layout.dims[l + 1];
            for p in &mut params[layout.w[l]..layout.w[l] + n] {
                *p = rng.gen_range(-a..a);
            }
        }
        let n = layout.total;
        Ok(GuidingField {
            config,
            bbox,
            layout,
            params,
            grad: vec![0.0; n],
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            step: 0,
            version: 0,
        })
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn adam_moments(&self) -> (&[f64], &[f64]) {
        (&self.adam_m, &self.adam_v)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Range of the flat parameter vector holding grid embeddings.
    pub fn embedding_range(&self) -> std::ops::Range<usize> {
        0..self.layout.w[0]
    }

    fn to_unit(&self, x: Vec2) -> Vec2 {
        let e = self.bbox.extent();
        Vec2::new((x.x - self.bbox.min.x) / e.x, (x.y - self.bbox.min.y) / e.y)
    }

    fn corners(&self, x: Vec2) -> Vec<Corners> {
        let u = self.to_unit(x);
        self.config
            .resolutions
            .iter()
            .map(|&r| bilinear_corners(u, r))
            .collect()
    }

    fn forward_impl(&self, x: Vec2, keep: bool) -> (UnnormParams, Option<Activations>) {
        let f = self.config.features;
        let corners = self.corners(x);
        let [d0, d1, d2, d3] = self.layout.dims;
        let mut input = vec![0.0; d0];
        for (l, c) in corners.iter().enumerate() {
            let base = self.layout.levels[l];
            let dst = &mut input[l * f..(l + 1) * f];
            for q in 0..4 {
                let src = base + c.index[q] * f;
                axpy(dst, c.weight[q], &self.params[src..src + f]);
            }
        }
        let h1 = self.dense(0, &input, d1, true);
        let h2 = self.dense(1, &h1, d2, true);
        let out = self.dense(2, &h2, d3, false);
        let acts = keep.then(|| Activations {
            version: self.version,
            corners,
            input,
            h1,
            h2,
        });
        (UnnormParams::new(Dim::Two, self.config.k, out), acts)
    }

    fn dense(&self, l: usize, x: &[f64], n_out: usize, relu: bool) -> Vec<f64> {
        let b = self.layout.b[l];
        let w = self.layout.w[l];
        let mut y = self.params[b..b + n_out].to_vec();
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(&mut y, xi, &self.params[w + i * n_out..w + (i + 1) * n_out]);
            }
        }
        if relu {
            y.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        y
    }

    /// Raw network outputs at `x` (clamped into the field's bbox).
    pub fn eval(&self, x: Vec2) -> UnnormParams {
        self.forward_impl(x, false).0
    }

    /// Evaluates many points; each row equals `eval` of that point exactly.
    pub fn eval_batch(&self, xs: &[Vec2]) -> Vec<UnnormParams> {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            if xs.len() >= 256 {
                return xs
                    .par_iter()
                    .with_min_len(64)
                    .map(|&x| self.eval(x))
                    .collect();
            }
        }
        xs.iter().map(|&x| self.eval(x)).collect()
    }

    /// Forward pass that also returns the activation record for `backward`.
    pub fn forward(&self, x: Vec2) -> (UnnormParams, Activations) {
        let (out, acts) = self.forward_impl(x, true);
        (out, acts.expect("activations requested"))
    }

    /// Accumulates `dOut^T dOut/dPhi` into the gradient buffer.
    pub fn backward(&mut self, acts: &Activations, d_out: &[f64]) -> Result<(), FieldError> {
        let mut g = std::mem::take(&mut self.grad);
        let r = self.backward_into(acts, d_out, &mut g);
        self.grad = g;
        r
    }

    /// Like `backward`, but into a caller-owned buffer shaped like the parameters.
    pub fn backward_into(
        &self,
        acts: &Activations,
        d_out: &[f64],
        grad: &mut [f64],
    ) -> Result<(), FieldError> {
        if acts.version != self.version {
            return Err(FieldError::StaleRecord {
                record: acts.version,
                field: self.version,
            });
        }
        assert_eq!(d_out.len(), self.layout.dims[3]);
        assert_eq!(grad.len(), self.layout.total);
        if d_out.iter().all(|&d| d == 0.0) {
            return Ok(());
        }
        let d_h2 = self.dense_backward(2, &acts.h2, d_out, grad);
        let d_h2: Vec<f64> = d_h2
            .iter()
            .zip(&acts.h2)
            .map(|(d, h)| if *h > 0.0 { *d } else { 0.0 })
            .collect();
        let d_h1 = self.dense_backward(1, &acts.h1, &d_h2, grad);
        let d_h1: Vec<f64> = d_h1
            .iter()
            .zip(&acts.h1)
            .map(|(d, h)| if *h > 0.0 { *d } else { 0.0 })
            .collect();
        let d_in = self.dense_backward(0, &acts.input, &d_h1, grad);
        let f = self.config.features;
        for (l, c) in acts.corners.iter().enumerate() {
            let base = self.layout.levels[l];
            let src = &d_in[l * f..(l + 1) * f];
            for q in 0..4 {
                let dst = base + c.index[q] * f;
                axpy(&mut grad[dst..dst + f], c.weight[q], src);
            }
        }
        Ok(())
    }

    /// Gradient of one dense layer; returns the gradient with respect to its input.
    fn dense_backward(&self, l: usize, x: &[f64], d_y: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let n_out = d_y.len();
        let b = self.layout.b[l];
        let w = self.layout.w[l];
        for (g, d) in grad[b..b + n_out].iter_mut().zip(d_y) {
            *g += d;
        }
        let mut d_x = vec![0.0; x.len()];
        for (i, &xi) in x.iter().enumerate() {
            let row = w + i * n_out;
            if xi != 0.0 {
                axpy(&mut grad[row..row + n_out], xi, d_y);
            }
            let wr = &self.params[row..row + n_out];
            d_x[i] = wr.iter().zip(d_y).map(|(a, b)| a * b).sum();
        }
        d_x
    }

    /// Adds an externally accumulated gradient (e.g. a worker shard) into the buffer.
    pub fn add_grad(&mut self, g: &[f64], scale: f64) {
        axpy(&mut self.grad, scale, g);
    }

    /// Adam update with bias correction using the configured hyperparameters; clears the gradient.
    pub fn adam_step(&mut self) {
        let FieldConfig {
            lr,
            beta1,
            beta2,
            eps,
            ..
        } = self.config;
        self.adam_step_with(lr, beta1, beta2, eps);
    }

    pub fn adam_step_with(&mut self, lr: f64, beta1: f64, beta2: f64, eps: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for i in 0..self.params.len() {
            let g = self.grad[i];
            let m = beta1 * self.adam_m[i] + (1.0 - beta1) * g;
            let v = beta2 * self.adam_v[i] + (1.0 - beta2) * g * g;
            self.adam_m[i] = m;
            self.adam_v[i] = v;
            if m != 0.0 {
                self.params[i] -= lr * (m / c1) / ((v / c2).sqrt() + eps);
            }
            self.grad[i] = 0.0;
        }
        self.version += 1;
    }

    pub fn to_json(&self) -> String {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT,
            config: self.config.clone(),
            bbox: self.bbox,
            step: self.step,
            params: self.params.clone(),
            adam_m: self.adam_m.clone(),
            adam_v: self.adam_v.clone(),
        };
        serde_json::to_string(&ck).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, FieldError> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| FieldError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(FieldError::Checkpoint(format!(
                "unsupported format {}",
                ck.format
            )));
        }
        let mut field = GuidingField::new(ck.config, ck.bbox)?;
        let n = field.params.len();
        if ck.params.len() != n || ck.adam_m.len() != n || ck.adam_v.len() != n {
            return Err(FieldError::Checkpoint(format!("expected {n} parameters")));
        }
        field.params = ck.params;
        field.adam_m = ck.adam_m;
        field.adam_v = ck.adam_v;
        field.step = ck.step;
        Ok(field)
    }

    pub fn save(&self, path: &Path) -> Result<(), FieldError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FieldError> {
        GuidingField::from_json(&fs::read_to_string(path)?)
    }
}
