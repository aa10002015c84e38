//! Fully connected network with LeakyReLU hidden activations and a linear
//! output layer, with explicit reverse-mode differentiation.

use crate::scalar::dense;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Offset of the `fan_out x fan_in` weight block; biases follow it.
    pub offset: usize,
}

impl LayerShape {
    pub fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.fan_in * self.fan_out
    }

    pub fn biases(&self) -> std::ops::Range<usize> {
        let w = self.offset + self.fan_in * self.fan_out;
        w..w + self.fan_out
    }

    pub fn len(&self) -> usize {
        self.fan_out * (self.fan_in + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<LayerShape>,
    slope: f64,
}

/// Activations kept from a forward pass; entry 0 is the input.
pub struct MlpCache<T> {
    rows: usize,
    activations: Vec<Vec<T>>,
}

impl Mlp {
    /// `widths` lists every layer width, input first; parameters start at `offset`.
    pub fn new(widths: &[usize], slope: f64, offset: usize) -> Self {
        let mut off = offset;
        let layers = widths
            .windows(2)
            .map(|w| {
                let l = LayerShape { fan_in: w[0], fan_out: w[1], offset: off };
                off += l.len();
                l
            })
            .collect();
        Mlp { layers, slope }
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(LayerShape::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().fan_out
    }

    fn affine<T: Real>(&self, l: &LayerShape, params: &[T], input: &[T], rows: usize, out: &mut [T]) {
        let b = &params[l.biases()];
        for row in out.chunks_exact_mut(l.fan_out) {
            row.copy_from_slice(b);
        }
        dense::gemm_bt(rows, l.fan_in, l.fan_out, input, &params[l.weights()], T::one(), out);
    }

    fn activate<T: Real>(&self, z: &mut [T]) {
        let s = T::lit(self.slope);
        for v in z {
            if *v < T::zero() {
                *v *= s;
            }
        }
    }

    /// Forward pass over `rows` inputs without keeping activations.
    pub fn forward<T: Real>(&self, params: &[T], input: &[T], rows: usize) -> Vec<T> {
        let mut cur = input.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            let mut next = vec![T::zero(); rows * l.fan_out];
            self.affine(l, params, &cur, rows, &mut next);
            if i + 1 < self.layers.len() {
                self.activate(&mut next);
            }
            cur = next;
        }
        cur
    }

    pub fn forward_cached<T: Real>(&self, params: &[T], input: Vec<T>, rows: usize) -> (Vec<T>, MlpCache<T>) {
        let mut activations = vec![input];
        let n = self.layers.len();
        for (i, l) in self.layers.iter().enumerate() {
            let mut next = vec![T::zero(); rows * l.fan_out];
            self.affine(l, params, activations.last().unwrap(), rows, &mut next);
            if i + 1 < n {
                self.activate(&mut next);
                activations.push(next);
            } else {
                return (next, MlpCache { rows, activations });
            }
        }
        unreachable!("network has at least one layer")
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the network input.
    pub fn backward<T: Real>(&self, params: &[T], cache: &MlpCache<T>, d_out: &[T], grad: &mut [T]) -> Vec<T> {
        let rows = cache.rows;
        let slope = T::lit(self.slope);
        let mut delta = d_out.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let input = &cache.activations[i];
            dense::gemm_at(l.fan_out, rows, l.fan_in, &delta, input, T::one(), &mut grad[l.weights()]);
            let gb = &mut grad[l.biases()];
            for row in delta.chunks_exact(l.fan_out) {
                for (g, &v) in gb.iter_mut().zip(row) {
                    *g += v;
                }
            }
            let mut d_in = vec![T::zero(); rows * l.fan_in];
            dense::gemm(rows, l.fan_out, l.fan_in, &delta, &params[l.weights()], T::zero(), &mut d_in);
            if i > 0 {
                // LeakyReLU keeps the sign, so the stored activation tells the branch
                for (g, &a) in d_in.iter_mut().zip(input) {
                    if a < T::zero() {
                        *g *= slope;
                    }
                }
            }
            delta = d_in;
        }
        delta
    }
}
