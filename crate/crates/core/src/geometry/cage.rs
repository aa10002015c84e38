use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{dist2, dist2_point_facet};
use crate::{Error, Real, Result};

/// On-disk cage description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CageJson {
    pub d: usize,
    pub vertices: Vec<Vec<f64>>,
    pub facets: Vec<Vec<usize>>,
}

/// Affine map `x -> (x - offset) * scale` that fits a cage into the unit box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub offset: Vec<f64>,
    pub scale: f64,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Normalization { offset: vec![0.0; dim], scale: 1.0 }
    }

    pub fn apply<T: Real>(&self, p: &[T]) -> Vec<T> {
        p.iter().zip(&self.offset).map(|(&x, &o)| (x - T::lit(o)) * T::lit(self.scale)).collect()
    }

    pub fn invert<T: Real>(&self, p: &[T]) -> Vec<T> {
        p.iter().zip(&self.offset).map(|(&x, &o)| x / T::lit(self.scale) + T::lit(o)).collect()
    }
}

/// Closed boundary polytope: vertices plus boundary facets (edges in 2D,
/// triangles in 3D).
#[derive(Debug, Clone, PartialEq)]
pub struct Cage<T: Real> {
    dim: usize,
    coords: Vec<T>,
    facets: Vec<Vec<usize>>,
}

impl<T: Real> Cage<T> {
    pub fn new(dim: usize, coords: Vec<T>, facets: Vec<Vec<usize>>) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidCage(format!("dimension {dim} not supported")));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::InvalidCage("coordinate count not a multiple of d".into()));
        }
        let k = coords.len() / dim;
        if k < dim + 1 {
            return Err(Error::InvalidCage(format!("{k} vertices, need at least {}", dim + 1)));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidCage("non-finite vertex coordinate".into()));
        }
        for f in &facets {
            if f.len() != dim {
                return Err(Error::InvalidCage(format!("facet {f:?} must have {dim} vertices")));
            }
            if f.iter().any(|&i| i >= k) {
                return Err(Error::InvalidCage(format!("facet {f:?} references a missing vertex")));
            }
        }
        let cage = Cage { dim, coords, facets };
        cage.check_closed()?;
        Ok(cage)
    }

    /// Every directed boundary edge (2D: vertex) must be matched by its reverse.
    fn check_closed(&self) -> Result<()> {
        if self.facets.is_empty() {
            return Err(Error::InvalidCage("no boundary facets".into()));
        }
        let mut balance: HashMap<(usize, usize), i32> = HashMap::new();
        if self.dim == 2 {
            let mut deg: HashMap<usize, i32> = HashMap::new();
            for f in &self.facets {
                *deg.entry(f[0]).or_default() += 1;
                *deg.entry(f[1]).or_default() -= 1;
            }
            if deg.values().any(|&v| v != 0) {
                return Err(Error::InvalidCage("boundary polyline is not closed and consistently oriented".into()));
            }
            return Ok(());
        }
        for f in &self.facets {
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                *balance.entry(key).or_default() += if a < b { 1 } else { -1 };
            }
        }
        if balance.values().any(|&v| v != 0) {
            return Err(Error::InvalidCage("boundary surface is not closed and consistently oriented".into()));
        }
        Ok(())
    }

    pub fn from_json(json: &CageJson) -> Result<Self> {
        let mut coords = Vec::with_capacity(json.vertices.len() * json.d);
        for v in &json.vertices {
            if v.len() != json.d {
                return Err(Error::InvalidCage(format!("vertex {v:?} does not have {} coordinates", json.d)));
            }
            coords.extend(v.iter().map(|&x| T::lit(x)));
        }
        Cage::new(json.d, coords, json.facets.clone())
    }

    pub fn to_json(&self) -> CageJson {
        CageJson {
            d: self.dim,
            vertices: (0..self.num_vertices()).map(|i| self.vertex(i).iter().map(|x| x.as_f64()).collect()).collect(),
            facets: self.facets.clone(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let json: CageJson = serde_json::from_str(&text)?;
        Cage::from_json(&json)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_json())?)?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn vertex(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn facets(&self) -> &[Vec<usize>] {
        &self.facets
    }

    pub fn bbox(&self) -> (Vec<T>, Vec<T>) {
        let mut lo = vec![T::infinity(); self.dim];
        let mut hi = vec![T::neg_infinity(); self.dim];
        for i in 0..self.num_vertices() {
            for (c, &x) in self.vertex(i).iter().enumerate() {
                lo[c] = lo[c].min(x);
                hi[c] = hi[c].max(x);
            }
        }
        (lo, hi)
    }

    /// Largest bounding box extent.
    pub fn scale(&self) -> T {
        let (lo, hi) = self.bbox();
        lo.iter().zip(&hi).map(|(&a, &b)| b - a).fold(T::zero(), T::max)
    }

    /// Uniform rescale and shift into the unit box, aspect ratio preserved.
    pub fn normalization(&self) -> Normalization {
        let (lo, _) = self.bbox();
        let s = self.scale();
        Normalization { offset: lo.iter().map(|x| x.as_f64()).collect(), scale: 1.0 / s.as_f64() }
    }

    pub fn transformed(&self, norm: &Normalization) -> Cage<T> {
        let coords = (0..self.num_vertices()).flat_map(|i| norm.apply(self.vertex(i))).collect();
        Cage { dim: self.dim, coords, facets: self.facets.clone() }
    }

    pub fn normalized(&self) -> (Cage<T>, Normalization) {
        let norm = self.normalization();
        (self.transformed(&norm), norm)
    }

    /// Same cage with replaced vertex positions.
    pub fn with_vertices(&self, coords: Vec<T>) -> Result<Cage<T>> {
        if coords.len() != self.coords.len() {
            return Err(Error::Shape(format!("expected {} coordinates, got {}", self.coords.len(), coords.len())));
        }
        Ok(Cage { dim: self.dim, coords, facets: self.facets.clone() })
    }

    pub fn cast<U: Real>(&self) -> Cage<U> {
        Cage { dim: self.dim, coords: self.coords.iter().map(|x| U::lit(x.as_f64())).collect(), facets: self.facets.clone() }
    }

    /// Even-odd ray casting against the boundary facets.
    pub fn is_inside(&self, p: &[T]) -> bool {
        match self.dim {
            2 => self.inside_2d(p),
            _ => self.inside_3d(p),
        }
    }

    fn inside_2d(&self, p: &[T]) -> bool {
        let (px, py) = (p[0], p[1]);
        let mut inside = false;
        for f in &self.facets {
            let a = self.vertex(f[0]);
            let b = self.vertex(f[1]);
            if (a[1] > py) != (b[1] > py) {
                let x = a[0] + (py - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if px < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    fn inside_3d(&self, p: &[T]) -> bool {
        // irrational-ish direction keeps the ray away from edges of axis-aligned meshes
        let dir = [T::lit(0.5773502691896258), T::lit(0.5773526918962581), T::lit(0.5773478464858789)];
        let mut hits = 0usize;
        for f in &self.facets {
            let (a, b, c) = (self.vertex(f[0]), self.vertex(f[1]), self.vertex(f[2]));
            if ray_hits_triangle(p, &dir, a, b, c) {
                hits += 1;
            }
        }
        hits % 2 == 1
    }

    /// Unsigned distance to the nearest boundary facet.
    pub fn boundary_distance(&self, p: &[T]) -> T {
        let mut best = T::infinity();
        for f in &self.facets {
            let verts: Vec<&[T]> = f.iter().map(|&i| self.vertex(i)).collect();
            best = best.min(dist2_point_facet(p, &verts));
        }
        best.sqrt()
    }

    /// Enclosed area (2D) or volume (3D) from the oriented boundary.
    pub fn volume(&self) -> T {
        let mut acc = T::zero();
        for f in &self.facets {
            if self.dim == 2 {
                let (a, b) = (self.vertex(f[0]), self.vertex(f[1]));
                acc += a[0] * b[1] - b[0] * a[1];
            } else {
                let (a, b, c) = (self.vertex(f[0]), self.vertex(f[1]), self.vertex(f[2]));
                acc += a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0]);
            }
        }
        let denom = if self.dim == 2 { T::lit(2.0) } else { T::lit(6.0) };
        (acc / denom).abs()
    }

    pub fn closest_vertex(&self, p: &[T]) -> usize {
        (0..self.num_vertices())
            .min_by(|&a, &b| dist2(p, self.vertex(a)).partial_cmp(&dist2(p, self.vertex(b))).unwrap().then(a.cmp(&b)))
            .unwrap()
    }
}

/// Moller-Trumbore test for the half-open ray `o + t dir`, `t > 0`.
fn ray_hits_triangle<T: Real>(o: &[T], dir: &[T; 3], a: &[T], b: &[T], c: &[T]) -> bool {
    let e1 = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let e2 = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let pv = cross(dir, &e2);
    let det = e1[0] * pv[0] + e1[1] * pv[1] + e1[2] * pv[2];
    if det == T::zero() {
        return false;
    }
    let inv = T::one() / det;
    let tv = [o[0] - a[0], o[1] - a[1], o[2] - a[2]];
    let u = (tv[0] * pv[0] + tv[1] * pv[1] + tv[2] * pv[2]) * inv;
    if u < T::zero() || u > T::one() {
        return false;
    }
    let qv = cross(&tv, &e1);
    let v = (dir[0] * qv[0] + dir[1] * qv[1] + dir[2] * qv[2]) * inv;
    if v < T::zero() || u + v > T::one() {
        return false;
    }
    let t = (e2[0] * qv[0] + e2[1] * qv[1] + e2[2] * qv[2]) * inv;
    t > T::zero()
}

fn cross<T: Real>(a: &[T], b: &[T]) -> [T; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}
