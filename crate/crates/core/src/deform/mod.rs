//! Cage-driven deformation: applying coordinates, ARAP fine-tuning and
//! inverse cage recovery.

pub mod arap;
pub mod inverse;
pub mod rotation;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use arap::{arap_energy, arap_finetune, arap_sample, fit_rotations, ArapConfig, ArapReport};
pub use inverse::{inverse_energy, inverse_solve, InverseConfig, InverseReport, SurfaceSamples};

use crate::geometry::{Cage, Normalization};
use crate::neural_field::BakedWeights;
use crate::{Error, Real, Result};

/// Deformed cage as a similarity transform applied to per-vertex local
/// positions: `v'_i = s R(w) l_i + t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformedCage {
    /// Log rotation: one angle in 2D, an axis-angle vector in 3D.
    pub global_rotation: Vec<f64>,
    pub global_scale: f64,
    pub global_translation: Vec<f64>,
    pub local_vertices: Vec<Vec<f64>>,
}

impl DeformedCage {
    /// The rest pose of `cage`, with local positions centred on the vertex
    /// centroid.
    pub fn rest<T: Real>(cage: &Cage<T>) -> Self {
        let d = cage.dim();
        let k = cage.num_vertices();
        let c: Vec<f64> = (0..d).map(|a| (0..k).map(|i| cage.vertex(i)[a].as_f64()).sum::<f64>() / k as f64).collect();
        DeformedCage {
            global_rotation: vec![0.0; rotation::log_dim(d)],
            global_scale: 1.0,
            global_translation: c.clone(),
            local_vertices: (0..k).map(|i| (0..d).map(|a| cage.vertex(i)[a].as_f64() - c[a]).collect()).collect(),
        }
    }

    /// Identity similarity around explicit vertex positions.
    pub fn from_vertices(dim: usize, coords: &[f64]) -> Self {
        DeformedCage {
            global_rotation: vec![0.0; rotation::log_dim(dim)],
            global_scale: 1.0,
            global_translation: vec![0.0; dim],
            local_vertices: coords.chunks(dim).map(|c| c.to_vec()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.global_translation.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.local_vertices.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d != 2 && d != 3 {
            return Err(Error::Parse(format!("deformed cage translation has {d} components")));
        }
        if self.global_rotation.len() != rotation::log_dim(d) {
            return Err(Error::Parse(format!(
                "global_rotation needs {} components in {d}D, got {}",
                rotation::log_dim(d),
                self.global_rotation.len()
            )));
        }
        if let Some(bad) = self.local_vertices.iter().position(|v| v.len() != d) {
            return Err(Error::Parse(format!("local vertex {bad} does not have {d} coordinates")));
        }
        let finite = self.global_rotation.iter().chain(&self.global_translation).chain(self.local_vertices.iter().flatten());
        if !self.global_scale.is_finite() || finite.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::Parse("deformed cage has non-finite entries".into()));
        }
        Ok(())
    }

    /// World-space vertex positions (`K x d`, row-major).
    pub fn vertices<T: Real>(&self) -> Vec<T> {
        let d = self.dim();
        let w: Vec<T> = self.global_rotation.iter().map(|&x| T::lit(x)).collect();
        let r = rotation::exp(d, &w);
        let s = T::lit(self.global_scale);
        let mut out = Vec::with_capacity(self.num_vertices() * d);
        for l in &self.local_vertices {
            let l: Vec<T> = l.iter().map(|&x| T::lit(x)).collect();
            let y = rotation::apply(d, &r, &l);
            for a in 0..d {
                out.push(s * y[a] + T::lit(self.global_translation[a]));
            }
        }
        out
    }

    /// Re-expresses the cage under `x -> (x - offset) * scale`; rotation and
    /// global scale are unchanged.
    pub fn transformed(&self, norm: &Normalization) -> Self {
        let s = norm.scale;
        DeformedCage {
            global_rotation: self.global_rotation.clone(),
            global_scale: self.global_scale,
            global_translation: self.global_translation.iter().zip(&norm.offset).map(|(t, o)| (t - o) * s).collect(),
            local_vertices: self.local_vertices.iter().map(|l| l.iter().map(|x| x * s).collect()).collect(),
        }
    }

    /// Inverse of [`DeformedCage::transformed`].
    pub fn untransformed(&self, norm: &Normalization) -> Self {
        let s = norm.scale;
        DeformedCage {
            global_rotation: self.global_rotation.clone(),
            global_scale: self.global_scale,
            global_translation: self.global_translation.iter().zip(&norm.offset).map(|(t, o)| t / s + o).collect(),
            local_vertices: self.local_vertices.iter().map(|l| l.iter().map(|x| x / s).collect()).collect(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let c: DeformedCage = serde_json::from_str(s).map_err(|e| Error::Parse(format!("deformed cage: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// `phi(x_n) = sum_k W[n, k] v'_k` for every baked point (`n x d`).
pub fn apply_deformation(weights: &BakedWeights, deformed: &DeformedCage) -> Result<Vec<f64>> {
    deformed.validate()?;
    if weights.k != deformed.num_vertices() {
        return Err(Error::Shape(format!(
            "weights have {} columns but the deformed cage has {} vertices",
            weights.k,
            deformed.num_vertices()
        )));
    }
    Ok(deform_points(&weights.data, weights.k, &deformed.vertices::<f64>(), deformed.dim()))
}

/// Row-major `(n x K) * (K x d)`.
pub fn deform_points<T: Real>(weights: &[T], k: usize, vertices: &[T], dim: usize) -> Vec<T> {
    let n = weights.len().checked_div(k).unwrap_or(0);
    let mut out = vec![T::zero(); n * dim];
    for (row, o) in weights.chunks(k).zip(out.chunks_mut(dim)) {
        for (kk, &w) in row.iter().enumerate() {
            for a in 0..dim {
                o[a] += w * vertices[kk * dim + a];
            }
        }
    }
    out
}

/// Euclidean distance per vertex between two `n x d` arrays.
pub fn vertex_errors<T: Real>(a: &[T], b: &[T], dim: usize) -> Vec<f64> {
    a.chunks(dim)
        .zip(b.chunks(dim))
        .map(|(p, q)| p.iter().zip(q).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum::<f64>().sqrt())
        .collect()
}

pub fn rms(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

pub fn write_vertex_errors_csv(mut w: impl Write, errors: &[f64]) -> Result<()> {
    writeln!(w, "vertex,error")?;
    for (i, e) in errors.iter().enumerate() {
        writeln!(w, "{i},{e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;

    #[test]
    fn rest_pose_reproduces_the_cage() {
        let cage = shapes::star::<f64>(5, 0.45);
        let rest = DeformedCage::rest(&cage);
        let v = rest.vertices::<f64>();
        for (a, b) in v.iter().zip(cage.coords()) {
            assert!((a - b).abs() < 1e-12);
        }
        let back = DeformedCage::from_json_str(&serde_json::to_string(&rest).unwrap()).unwrap();
        assert_eq!(back, rest);
    }

    #[test]
    fn similarity_is_applied_in_order() {
        let c = DeformedCage {
            global_rotation: vec![std::f64::consts::FRAC_PI_2],
            global_scale: 2.0,
            global_translation: vec![1.0, 0.0],
            local_vertices: vec![vec![1.0, 0.0]],
        };
        let v = c.vertices::<f64>();
        assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn malformed_deformed_cages_are_rejected() {
        let bad = r#"{"global_rotation":[0,0],"global_scale":1,"global_translation":[0,0],"local_vertices":[[0,0]]}"#;
        assert!(matches!(DeformedCage::from_json_str(bad), Err(Error::Parse(_))));
        let bad = r#"{"global_rotation":[0],"global_scale":1,"global_translation":[0,0],"local_vertices":[[0,0,0]]}"#;
        assert!(DeformedCage::from_json_str(bad).is_err());
    }

    #[test]
    fn apply_checks_shapes_and_multiplies() {
        let w = BakedWeights::new(2, 2, vec![1.0, 0.0, 0.25, 0.75]).unwrap();
        let c = DeformedCage::from_vertices(2, &[0.0, 0.0, 4.0, 8.0]);
        assert_eq!(apply_deformation(&w, &c).unwrap(), vec![0.0, 0.0, 3.0, 6.0]);
        let c3 = DeformedCage::from_vertices(2, &[0.0; 6]);
        assert!(matches!(apply_deformation(&w, &c3), Err(Error::Shape(_))));
    }

    #[test]
    fn transform_commutes_with_vertices() {
        let c = DeformedCage {
            global_rotation: vec![0.4],
            global_scale: 1.3,
            global_translation: vec![2.0, -1.0],
            local_vertices: vec![vec![1.0, 0.5], vec![-0.25, 3.0], vec![0.0, -2.0]],
        };
        let norm = Normalization { offset: vec![-3.0, 1.5], scale: 0.2 };
        let moved = c.transformed(&norm).vertices::<f64>();
        for (m, v) in moved.chunks(2).zip(c.vertices::<f64>().chunks(2)) {
            let want = norm.apply(v);
            assert!((m[0] - want[0]).abs() < 1e-12 && (m[1] - want[1]).abs() < 1e-12);
        }
        let back = c.transformed(&norm).untransformed(&norm);
        for (a, b) in back.vertices::<f64>().iter().zip(c.vertices::<f64>()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn deformation_is_affine_equivariant() {
        // Rows sum to one, so an affine map of the cage maps every point.
        let w = BakedWeights::new(3, 3, vec![0.2, 0.3, 0.5, 1.0, 0.0, 0.0, 0.1, 0.1, 0.8]).unwrap();
        let v = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        let a = [[1.5, -0.3], [0.7, 2.0]];
        let b = [0.4, -1.1];
        let map = |p: &[f64]| [a[0][0] * p[0] + a[0][1] * p[1] + b[0], a[1][0] * p[0] + a[1][1] * p[1] + b[1]];
        let mapped: Vec<f64> = v.chunks(2).flat_map(map).collect();
        let rest = apply_deformation(&w, &DeformedCage::from_vertices(2, &v)).unwrap();
        let out = apply_deformation(&w, &DeformedCage::from_vertices(2, &mapped)).unwrap();
        for (o, r) in out.chunks(2).zip(rest.chunks(2)) {
            let want = map(r);
            assert!((o[0] - want[0]).abs() < 1e-12 && (o[1] - want[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn moving_a_vertex_only_moves_its_column_support() {
        let w = BakedWeights::new(3, 3, vec![0.5, 0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.3, 0.7]).unwrap();
        let v = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        let rest = apply_deformation(&w, &DeformedCage::from_vertices(2, &v)).unwrap();
        let mut dragged = v;
        dragged[0] += 0.5;
        dragged[1] -= 0.25;
        let out = apply_deformation(&w, &DeformedCage::from_vertices(2, &dragged)).unwrap();
        for n in 0..3 {
            let moved = out[2 * n] != rest[2 * n] || out[2 * n + 1] != rest[2 * n + 1];
            assert_eq!(moved, w.row(n)[0] != 0.0, "point {n}");
        }
    }
}
