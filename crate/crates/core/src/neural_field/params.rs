use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::hash_grid::{HashGrid, HashGridConfig};
use super::mlp::{LayerShape, Mlp, MlpCache};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub encoding: HashGridConfig,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub leaky_relu_slope: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig { encoding: HashGridConfig::default(), hidden_layers: 5, hidden_width: 256, leaky_relu_slope: 0.01 }
    }
}

/// Every trainable value in one flat vector: hash tables first, then the
/// dense layers (weights row-major `fan_out x fan_in`, then biases).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldParams<T: Real> {
    dim: usize,
    outputs: usize,
    config: FieldConfig,
    grid: HashGrid,
    mlp: Mlp,
    data: Vec<T>,
}

/// Intermediate results of a batched forward pass, reused by `backward`.
pub struct ForwardCache<T> {
    inputs: Vec<T>,
    mlp: MlpCache<T>,
}

impl<T: Real> FieldParams<T> {
    /// Zero-initialized parameters for a field over `[0,1]^dim` with `outputs` logits.
    pub fn zeros(dim: usize, outputs: usize, config: FieldConfig) -> Result<Self> {
        if outputs == 0 {
            return Err(Error::InvalidConfig("field needs at least one output".into()));
        }
        if config.encoding.levels == 0 || config.encoding.features_per_level == 0 || config.hidden_width == 0 {
            return Err(Error::InvalidConfig("empty encoding or hidden layer".into()));
        }
        let grid = HashGrid::new(dim, &config.encoding);
        let mut widths = vec![grid.output_dim()];
        widths.extend(std::iter::repeat_n(config.hidden_width, config.hidden_layers));
        widths.push(outputs);
        let mlp = Mlp::new(&widths, config.leaky_relu_slope, grid.len());
        let data = vec![T::zero(); grid.len() + mlp.len()];
        Ok(FieldParams { dim, outputs, config, grid, mlp, data })
    }

    /// Tables uniform in `+-1e-4`, weights and biases uniform in `+-1/sqrt(fan_in)`.
    pub fn random(dim: usize, outputs: usize, config: FieldConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(dim, outputs, config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid_len = p.grid.len();
        for v in &mut p.data[..grid_len] {
            *v = T::lit(rng.random_range(-1e-4..1e-4));
        }
        for l in p.mlp.layers().to_vec() {
            let bound = 1.0 / (l.fan_in as f64).sqrt();
            for v in &mut p.data[l.offset..l.offset + l.len()] {
                *v = T::lit(rng.random_range(-bound..bound));
            }
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn set_data(&mut self, data: Vec<T>) -> Result<()> {
        if data.len() != self.data.len() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", self.data.len(), data.len())));
        }
        self.data = data;
        Ok(())
    }

    pub fn encoding_len(&self) -> usize {
        self.grid.len()
    }

    pub fn layer_shapes(&self) -> &[LayerShape] {
        self.mlp.layers()
    }

    pub fn cast<U: Real>(&self) -> FieldParams<U> {
        FieldParams {
            dim: self.dim,
            outputs: self.outputs,
            config: self.config.clone(),
            grid: self.grid.clone(),
            mlp: self.mlp.clone(),
            data: self.data.iter().map(|x| U::lit(x.as_f64())).collect(),
        }
    }

    fn encode(&self, x: &[T]) -> Vec<T> {
        let rows = x.len() / self.dim;
        let mut enc = vec![T::zero(); rows * self.grid.output_dim()];
        self.grid.encode(&self.data[..self.grid.len()], x, &mut enc);
        enc
    }

    /// Raw logits for `n` points in the unit box (`x` is `n x d`, output `n x outputs`).
    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let rows = x.len() / self.dim;
        self.mlp.forward(&self.data, &self.encode(x), rows)
    }

    pub fn forward_cached(&self, x: &[T]) -> (Vec<T>, ForwardCache<T>) {
        let rows = x.len() / self.dim;
        let (out, mlp) = self.mlp.forward_cached(&self.data, self.encode(x), rows);
        (out, ForwardCache { inputs: x.to_vec(), mlp })
    }

    /// Accumulates `d loss / d params` given `d loss / d logits`.
    pub fn backward(&self, cache: &ForwardCache<T>, d_out: &[T], grad: &mut [T]) {
        assert_eq!(grad.len(), self.data.len());
        let d_enc = self.mlp.backward(&self.data, &cache.mlp, d_out, grad);
        let gl = self.grid.len();
        self.grid.backward(&cache.inputs, &d_enc, &mut grad[..gl]);
    }
}
