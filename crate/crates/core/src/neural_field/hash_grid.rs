//! Multiresolution hash-grid encoding with smoothstep-weighted multilinear
//! interpolation.

use serde::{Deserialize, Serialize};

use crate::Real;

const PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashGridConfig {
    pub levels: usize,
    pub features_per_level: usize,
    pub log2_table_size: u32,
    pub base_resolution: usize,
    pub growth_factor: f64,
}

impl Default for HashGridConfig {
    fn default() -> Self {
        HashGridConfig { levels: 16, features_per_level: 4, log2_table_size: 15, base_resolution: 16, growth_factor: 1.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Level {
    resolution: usize,
    /// Number of table rows; dense levels store every grid vertex.
    rows: usize,
    dense: bool,
    offset: usize,
}

/// Level layout of an encoding over `[0, 1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct HashGrid {
    dim: usize,
    features: usize,
    levels: Vec<Level>,
    len: usize,
}

#[inline]
fn smoothstep<T: Real>(t: T) -> T {
    t * t * (T::lit(3.0) - T::lit(2.0) * t)
}

impl HashGrid {
    pub fn new(dim: usize, cfg: &HashGridConfig) -> Self {
        let max_rows = 1usize << cfg.log2_table_size;
        let mut offset = 0;
        let levels = (0..cfg.levels)
            .map(|l| {
                let resolution = (cfg.base_resolution as f64 * cfg.growth_factor.powi(l as i32)).floor() as usize;
                let dense_rows = (resolution + 1).checked_pow(dim as u32).unwrap_or(usize::MAX);
                let (rows, dense) = if dense_rows <= max_rows { (dense_rows, true) } else { (max_rows, false) };
                let level = Level { resolution: resolution.max(1), rows, dense, offset };
                offset += rows * cfg.features_per_level;
                level
            })
            .collect();
        HashGrid { dim, features: cfg.features_per_level, levels, len: offset }
    }

    /// Number of table parameters.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn output_dim(&self) -> usize {
        self.levels.len() * self.features
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Calls `f(row_offset, weight)` for the `2^d` corners of `x` on `level`.
    #[inline]
    fn corners<T: Real>(&self, level: &Level, x: &[T], mut f: impl FnMut(usize, T)) {
        let d = self.dim;
        let res = level.resolution;
        let mut cell = [0usize; 3];
        let mut w = [[T::zero(); 2]; 3];
        for c in 0..d {
            let xc = x[c].max(T::zero()).min(T::one()) * T::lit(res as f64);
            let fl = xc.floor().to_usize().unwrap_or(0).min(res - 1);
            let t = smoothstep(xc - T::lit(fl as f64));
            cell[c] = fl;
            w[c] = [T::one() - t, t];
        }
        for corner in 0..(1usize << d) {
            let mut weight = T::one();
            let mut idx: usize;
            if level.dense {
                idx = 0;
                let mut stride = 1;
                for c in 0..d {
                    let bit = (corner >> c) & 1;
                    weight *= w[c][bit];
                    idx += (cell[c] + bit) * stride;
                    stride *= res + 1;
                }
            } else {
                let mut h = 0u32;
                for c in 0..d {
                    let bit = (corner >> c) & 1;
                    weight *= w[c][bit];
                    h ^= ((cell[c] + bit) as u32).wrapping_mul(PRIMES[c]);
                }
                idx = h as usize & (level.rows - 1);
            }
            f(level.offset + idx * self.features, weight);
        }
    }

    /// Encodes `n` points (`x` is `n x d`) into `out` (`n x output_dim`).
    pub fn encode<T: Real>(&self, table: &[T], x: &[T], out: &mut [T]) {
        let d = self.dim;
        let fdim = self.features;
        let width = self.output_dim();
        for (p, row) in x.chunks_exact(d).zip(out.chunks_exact_mut(width)) {
            row.iter_mut().for_each(|v| *v = T::zero());
            for (l, level) in self.levels.iter().enumerate() {
                let dst = &mut row[l * fdim..(l + 1) * fdim];
                self.corners(level, p, |off, w| {
                    for (o, &t) in dst.iter_mut().zip(&table[off..off + fdim]) {
                        *o += w * t;
                    }
                });
            }
        }
    }

    /// Accumulates table gradients from `d_out` (`n x output_dim`).
    pub fn backward<T: Real>(&self, x: &[T], d_out: &[T], grad: &mut [T]) {
        let d = self.dim;
        let fdim = self.features;
        let width = self.output_dim();
        for (p, row) in x.chunks_exact(d).zip(d_out.chunks_exact(width)) {
            for (l, level) in self.levels.iter().enumerate() {
                let src = &row[l * fdim..(l + 1) * fdim];
                if src.iter().all(|v| *v == T::zero()) {
                    continue;
                }
                self.corners(level, p, |off, w| {
                    for (g, &s) in grad[off..off + fdim].iter_mut().zip(src) {
                        *g += w * s;
                    }
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> HashGridConfig {
        HashGridConfig { levels: 3, features_per_level: 2, log2_table_size: 6, base_resolution: 2, growth_factor: 2.0 }
    }

    #[test]
    fn layout_mixes_dense_and_hashed_levels() {
        let g = HashGrid::new(2, &small());
        // resolutions 2, 4, 8: 9 and 25 dense rows, then 81 > 64 hashed rows
        assert_eq!(g.len(), (9 + 25 + 64) * 2);
        assert_eq!(g.output_dim(), 6);
    }

    #[test]
    fn interpolation_reproduces_grid_values_and_is_continuous() {
        let g = HashGrid::new(2, &small());
        let table: Vec<f64> = (0..g.len()).map(|i| ((i * 7919) % 101) as f64 / 101.0 - 0.5).collect();
        let mut a = vec![0.0; 6];
        let mut b = vec![0.0; 6];
        // either side of a level-0 cell edge at x = 0.5
        g.encode(&table, &[0.5 - 1e-9, 0.3], &mut a);
        g.encode(&table, &[0.5 + 1e-9, 0.3], &mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-6);
        }
        // at a level-0 grid vertex the first level returns the stored row
        g.encode(&table, &[0.5, 0.5], &mut a);
        let row = 1 + 3; // (1, 1) in the 3x3 dense grid
        assert!((a[0] - table[row * 2]).abs() < 1e-12 && (a[1] - table[row * 2 + 1]).abs() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let g = HashGrid::new(3, &small());
        let mut table: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = [0.31, 0.77, 0.05, 0.9, 0.12, 0.61];
        let d_out: Vec<f64> = (0..12).map(|i| (i as f64 * 1.3).cos()).collect();
        let loss = |t: &[f64]| {
            let mut out = vec![0.0; 12];
            g.encode(t, &x, &mut out);
            out.iter().zip(&d_out).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut grad = vec![0.0; g.len()];
        g.backward(&x, &d_out, &mut grad);
        for i in (0..g.len()).step_by(5) {
            let orig = table[i];
            table[i] = orig + 1e-6;
            let lp = loss(&table);
            table[i] = orig - 1e-6;
            let lm = loss(&table);
            table[i] = orig;
            assert!(((lp - lm) / 2e-6 - grad[i]).abs() < 1e-7);
        }
    }
}
