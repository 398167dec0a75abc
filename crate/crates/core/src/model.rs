//! Attention architecture with structural mixing: the attention matrix of
//! each head is blended with the hypergraph Laplacian,
//! `A = gamma * M + (1 - gamma) * L`, so one matrix-vector pass carries both
//! the learned global similarities and the local hypergraph structure.
//! `gamma` and `L` are shared across all layers and heads.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng64;
use crate::tensor::{Params, Tape, Tensor, TensorError};
use crate::Real;

/// Epsilon used by every layer-norm in the model.
pub const LN_EPS: Real = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("gamma {0} outside [0, 1]")]
    GammaOutOfRange(Real),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Architecture and optimizer hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    /// Mixing coefficient: 0 = pure Laplacian (local), 1 = pure attention
    /// (global).
    pub gamma: Real,
    pub num_layers: usize,
    pub num_heads: usize,
    /// Hidden width of the layer stack.
    pub d_h: usize,
    /// Query/key projection width.
    pub d_k: usize,
    /// Value projection width.
    pub d_q: usize,
    pub dropout_p: Real,
    pub use_residual: bool,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub seed: u64,
    pub lr: Real,
    pub weight_decay: Real,
    pub epochs: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            gamma: 0.3,
            num_layers: 2,
            num_heads: 4,
            d_h: 64,
            d_k: 16,
            d_q: 16,
            dropout_p: 0.5,
            use_residual: true,
            num_classes: 2,
            feature_dim: 1,
            seed: 0,
            lr: 0.01,
            weight_decay: 5e-4,
            epochs: 200,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(ModelError::GammaOutOfRange(self.gamma));
        }
        for (name, v) in [
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("d_h", self.d_h),
            ("d_k", self.d_k),
            ("d_q", self.d_q),
            ("num_classes", self.num_classes),
            ("feature_dim", self.feature_dim),
        ] {
            if v == 0 {
                return Err(ModelError::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(ModelError::InvalidConfig(format!(
                "dropout_p {} outside [0, 1)",
                self.dropout_p
            )));
        }
        Ok(())
    }
}

/// Per-head projection views for one layer.
pub struct AttentionHead {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
}

/// Parameter views for one layer: per-head projections, the output
/// projection, and the layer-norm affine pair.
pub struct LayerParams {
    pub heads: Vec<AttentionHead>,
    pub w_z: Tensor,
    pub ln_scale: Tensor,
    pub ln_shift: Tensor,
}

/// Parameter views for the whole model.
pub struct ModelView {
    pub embed_w: Tensor,
    pub embed_b: Tensor,
    pub prelu_slope: Tensor,
    pub layers: Vec<LayerParams>,
    pub out_w: Tensor,
    pub out_b: Tensor,
}

/// `softmax(Z W_Q (Z W_K)^T / sqrt(d_k))`: every row sums to 1.
pub fn attention_matrix(z: &Tensor, w_q: &Tensor, w_k: &Tensor) -> Result<Tensor, ModelError> {
    let q = z.matmul(w_q)?;
    let k = z.matmul(w_k)?;
    scaled_attention(&q, &k)
}

fn scaled_attention(q: &Tensor, k: &Tensor) -> Result<Tensor, ModelError> {
    let alpha = 1.0 / (q.cols() as Real).sqrt();
    Ok(q.matmul_nt_scaled(k, alpha)?.softmax_rows()?)
}

/// `(gamma * M + (1 - gamma) * L) V` where `M = softmax(Q K^T / sqrt(d_k))`.
/// The mixed matrix is used as-is; its rows are not re-normalized.
pub fn laplacian_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    lap: &Tensor,
    gamma: Real,
) -> Result<Tensor, ModelError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(ModelError::GammaOutOfRange(gamma));
    }
    let n = q.rows();
    if lap.shape() != (n, n) {
        return Err(ModelError::Tensor(TensorError::ShapeMismatch {
            op: "laplacian_attention",
            lhs: (n, n),
            rhs: lap.shape(),
        }));
    }
    let m = scaled_attention(q, k)?;
    let mixed = m.mix(lap, gamma)?;
    Ok(mixed.matmul(v)?)
}

/// Concatenate the per-head attention outputs and project back to `d_h`.
pub fn multi_head(
    z: &Tensor,
    lap: &Tensor,
    gamma: Real,
    layer: &LayerParams,
) -> Result<Tensor, ModelError> {
    let mut heads = Vec::with_capacity(layer.heads.len());
    for head in &layer.heads {
        let q = z.matmul(&head.w_q)?;
        let k = z.matmul(&head.w_k)?;
        let v = z.matmul(&head.w_v)?;
        heads.push(laplacian_attention(&q, &k, &v, lap, gamma)?);
    }
    let joined = Tensor::concat_cols(&heads)?;
    Ok(joined.matmul(&layer.w_z)?)
}

/// One layer: `LN(MultiHead(Z)) + Z` (the residual add is skipped in
/// ablation mode), then dropout on the layer output in training mode.
#[allow(clippy::too_many_arguments)]
pub fn layer_forward(
    z: &Tensor,
    lap: &Tensor,
    gamma: Real,
    layer: &LayerParams,
    use_residual: bool,
    dropout_p: Real,
    training: bool,
    rng: &mut Rng64,
) -> Result<Tensor, ModelError> {
    let mh = multi_head(z, lap, gamma, layer)?;
    let normed = mh.layer_norm(&layer.ln_scale, &layer.ln_shift, LN_EPS)?;
    let out = if use_residual { normed.add(z)? } else { normed };
    Ok(out.dropout(dropout_p, training, rng)?)
}

/// Full forward pass: affine embedding with PReLU and dropout, the layer
/// stack sharing `lap` and `gamma`, then a dense head producing logits
/// (softmax is applied by the loss / prediction ops).
pub fn model_forward(
    x: &Tensor,
    lap: &Tensor,
    cfg: &ModelConfig,
    view: &ModelView,
    training: bool,
    rng: &mut Rng64,
) -> Result<Tensor, ModelError> {
    if x.rows() != lap.rows() {
        return Err(ModelError::Tensor(TensorError::ShapeMismatch {
            op: "model_forward",
            lhs: x.shape(),
            rhs: lap.shape(),
        }));
    }
    let mut z = x
        .matmul(&view.embed_w)?
        .add_row(&view.embed_b)?
        .prelu(&view.prelu_slope)?
        .dropout(cfg.dropout_p, training, rng)?;
    for layer in &view.layers {
        z = layer_forward(
            &z,
            lap,
            cfg.gamma,
            layer,
            cfg.use_residual,
            cfg.dropout_p,
            training,
            rng,
        )?;
    }
    Ok(z.matmul(&view.out_w)?.add_row(&view.out_b)?)
}

/// Model = config + named parameters.
pub struct Model {
    pub cfg: ModelConfig,
    pub params: Params,
}

fn xavier(rows: usize, cols: usize, rng: &mut Rng64) -> Tensor {
    let bound = (6.0 / (rows + cols) as Real).sqrt();
    Tensor::uniform(rows, cols, -bound, bound, rng)
}

impl Model {
    /// Initialize from the config's own seed.
    pub fn init(cfg: &ModelConfig) -> Result<Model, ModelError> {
        Model::init_with_seed(cfg, cfg.seed)
    }

    /// Initialize with an explicit seed (fold runners derive one per fold).
    ///
    /// Projection matrices are uniform Xavier; biases and layer-norm shifts
    /// start at zero, layer-norm scales at one, the PReLU slope at 0.25.
    /// Random draws happen in a fixed order, so a seed pins every weight.
    pub fn init_with_seed(cfg: &ModelConfig, seed: u64) -> Result<Model, ModelError> {
        cfg.validate()?;
        let mut rng = Rng64::new(seed);
        let mut params = Params::new();
        params.insert("embed.w", xavier(cfg.feature_dim, cfg.d_h, &mut rng));
        params.insert("embed.b", Tensor::zeros(1, cfg.d_h));
        params.insert("embed.prelu", Tensor::from_vec(1, 1, vec![0.25]));
        for l in 0..cfg.num_layers {
            for h in 0..cfg.num_heads {
                params.insert(
                    &format!("layer{l:02}.head{h:02}.w_q"),
                    xavier(cfg.d_h, cfg.d_k, &mut rng),
                );
                params.insert(
                    &format!("layer{l:02}.head{h:02}.w_k"),
                    xavier(cfg.d_h, cfg.d_k, &mut rng),
                );
                params.insert(
                    &format!("layer{l:02}.head{h:02}.w_v"),
                    xavier(cfg.d_h, cfg.d_q, &mut rng),
                );
            }
            params.insert(
                &format!("layer{l:02}.w_z"),
                xavier(cfg.num_heads * cfg.d_q, cfg.d_h, &mut rng),
            );
            params.insert(&format!("layer{l:02}.ln_scale"), Tensor::ones(1, cfg.d_h));
            params.insert(&format!("layer{l:02}.ln_shift"), Tensor::zeros(1, cfg.d_h));
        }
        params.insert("out.w", xavier(cfg.d_h, cfg.num_classes, &mut rng));
        params.insert("out.b", Tensor::zeros(1, cfg.num_classes));
        Ok(Model {
            cfg: cfg.clone(),
            params,
        })
    }

    /// Structured view of the parameters, watched on `tape` when given.
    pub fn view(&self, tape: Option<&Tape>) -> ModelView {
        Self::view_of(&self.params, &self.cfg, tape)
    }

    /// Build a view from any parameter set with this model's layout.
    pub fn view_of(params: &Params, cfg: &ModelConfig, tape: Option<&Tape>) -> ModelView {
        let mut map: BTreeMap<String, Tensor> = params.view(tape);
        let mut take = |name: &str| -> Tensor {
            map.remove(name)
                .unwrap_or_else(|| panic!("parameter '{name}' missing from layout"))
        };
        let embed_w = take("embed.w");
        let embed_b = take("embed.b");
        let prelu_slope = take("embed.prelu");
        let mut layers = Vec::with_capacity(cfg.num_layers);
        for l in 0..cfg.num_layers {
            let mut heads = Vec::with_capacity(cfg.num_heads);
            for h in 0..cfg.num_heads {
                heads.push(AttentionHead {
                    w_q: take(&format!("layer{l:02}.head{h:02}.w_q")),
                    w_k: take(&format!("layer{l:02}.head{h:02}.w_k")),
                    w_v: take(&format!("layer{l:02}.head{h:02}.w_v")),
                });
            }
            layers.push(LayerParams {
                heads,
                w_z: take(&format!("layer{l:02}.w_z")),
                ln_scale: take(&format!("layer{l:02}.ln_scale")),
                ln_shift: take(&format!("layer{l:02}.ln_shift")),
            });
        }
        let out_w = take("out.w");
        let out_b = take("out.b");
        ModelView {
            embed_w,
            embed_b,
            prelu_slope,
            layers,
            out_w,
            out_b,
        }
    }

    /// Training-mode forward with parameters watched on `tape`.
    pub fn forward_train(
        &self,
        x: &Tensor,
        lap: &Tensor,
        tape: &Tape,
        rng: &mut Rng64,
    ) -> Result<Tensor, ModelError> {
        let view = self.view(Some(tape));
        model_forward(x, lap, &self.cfg, &view, true, rng)
    }

    /// Gradient-free, dropout-free forward.
    pub fn forward_eval(&self, x: &Tensor, lap: &Tensor) -> Result<Tensor, ModelError> {
        let view = self.view(None);
        let mut rng = Rng64::new(0); // unused in eval mode
        model_forward(x, lap, &self.cfg, &view, false, &mut rng)
    }

    /// Eval-mode class probabilities (softmax over logits).
    pub fn predict_proba(&self, x: &Tensor, lap: &Tensor) -> Result<Tensor, ModelError> {
        Ok(self.forward_eval(x, lap)?.softmax_rows()?)
    }

    /// Eval-mode argmax predictions; ties break to the lowest class index.
    pub fn predict(&self, x: &Tensor, lap: &Tensor) -> Result<Vec<usize>, ModelError> {
        let logits = self.forward_eval(x, lap)?;
        Ok((0..logits.rows()).map(|i| argmax(logits.row(i))).collect())
    }
}

/// Index of the largest value; the first maximum wins on ties.
pub fn argmax(row: &[Real]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}
