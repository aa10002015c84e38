use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use super::{Cage, Normalization};
use crate::{Error, Real, Result};

/// Triangle mesh living inside a cage: a 2D domain mesh or a 3D surface.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorMesh<T: Real> {
    dim: usize,
    coords: Vec<T>,
    triangles: Vec<[usize; 3]>,
    adjacency: Vec<Vec<usize>>,
}

impl<T: Real> InteriorMesh<T> {
    pub fn new(dim: usize, coords: Vec<T>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if dim == 0 || !coords.len().is_multiple_of(dim) {
            return Err(Error::Shape("mesh coordinates do not match dimension".into()));
        }
        let n = coords.len() / dim;
        if triangles.iter().flatten().any(|&i| i >= n) {
            return Err(Error::Shape("triangle references a missing vertex".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        for t in &triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        for nb in &mut adjacency {
            nb.sort_unstable();
            nb.dedup();
        }
        Ok(InteriorMesh { dim, coords, triangles, adjacency })
    }

    /// Structured triangulation of the box `[lo, hi]` with `nx x ny` cells.
    pub fn grid(lo: [f64; 2], hi: [f64; 2], nx: usize, ny: usize) -> Self {
        let mut coords = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                coords.push(T::lit(lo[0] + (hi[0] - lo[0]) * i as f64 / nx as f64));
                coords.push(T::lit(lo[1] + (hi[1] - lo[1]) * j as f64 / ny as f64));
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut tris = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                tris.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                tris.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        InteriorMesh::new(2, coords, tris).expect("grid mesh")
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

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn with_coords(&self, coords: Vec<T>) -> Result<Self> {
        if coords.len() != self.coords.len() {
            return Err(Error::Shape(format!("expected {} coordinates, got {}", self.coords.len(), coords.len())));
        }
        Ok(InteriorMesh { coords, ..self.clone() })
    }

    pub fn transformed(&self, norm: &Normalization) -> Self {
        let coords = (0..self.num_vertices()).flat_map(|i| norm.apply(self.vertex(i))).collect();
        InteriorMesh { coords, ..self.clone() }
    }

    pub fn cast<U: Real>(&self) -> InteriorMesh<U> {
        InteriorMesh {
            dim: self.dim,
            coords: self.coords.iter().map(|x| U::lit(x.as_f64())).collect(),
            triangles: self.triangles.clone(),
            adjacency: self.adjacency.clone(),
        }
    }

    /// Indices of vertices that are not strictly inside `cage`.
    pub fn vertices_outside(&self, cage: &Cage<T>) -> Vec<usize> {
        (0..self.num_vertices())
            .filter(|&i| {
                let p = self.vertex(i);
                !(cage.is_inside(p) && cage.boundary_distance(p) > T::zero())
            })
            .collect()
    }

    pub fn triangle_area_of(&self, coords: &[T], t: &[usize; 3]) -> T {
        let d = self.dim;
        let p = |i: usize| &coords[t[i] * d..(t[i] + 1) * d];
        let (a, b, c) = (p(0), p(1), p(2));
        let u: Vec<T> = (0..d).map(|k| b[k] - a[k]).collect();
        let v: Vec<T> = (0..d).map(|k| c[k] - a[k]).collect();
        if d == 2 {
            ((u[0] * v[1] - u[1] * v[0]) * T::lit(0.5)).abs()
        } else {
            let cx = u[1] * v[2] - u[2] * v[1];
            let cy = u[2] * v[0] - u[0] * v[2];
            let cz = u[0] * v[1] - u[1] * v[0];
            (cx * cx + cy * cy + cz * cz).sqrt() * T::lit(0.5)
        }
    }

    /// Total triangle area of the rest mesh.
    pub fn area(&self) -> T {
        self.triangles.iter().map(|t| self.triangle_area_of(&self.coords, t)).sum()
    }

    /// Uniform graph Laplacian `x_i - mean_{j in n(i)} x_j` of per-vertex positions.
    pub fn uniform_laplacian(&self, positions: &[T]) -> Vec<T> {
        let d = self.dim;
        let mut out = vec![T::zero(); positions.len()];
        for i in 0..self.num_vertices() {
            let nb = &self.adjacency[i];
            if nb.is_empty() {
                continue;
            }
            let inv = T::one() / T::lit(nb.len() as f64);
            for c in 0..d {
                let mean: T = nb.iter().map(|&j| positions[j * d + c]).sum::<T>() * inv;
                out[i * d + c] = positions[i * d + c] - mean;
            }
        }
        out
    }

    /// Area-weighted uniform samples: triangle index and barycentric weights.
    pub fn sample_surface<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<(usize, [T; 3])> {
        let areas: Vec<f64> = self.triangles.iter().map(|t| self.triangle_area_of(&self.coords, t).as_f64()).collect();
        let total: f64 = areas.iter().sum();
        let mut cdf = Vec::with_capacity(areas.len());
        let mut acc = 0.0;
        for a in &areas {
            acc += a / total;
            cdf.push(acc);
        }
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let t = cdf.partition_point(|&c| c < u).min(areas.len() - 1);
                let (mut r1, mut r2): (f64, f64) = (rng.random(), rng.random());
                if r1 + r2 > 1.0 {
                    r1 = 1.0 - r1;
                    r2 = 1.0 - r2;
                }
                (t, [T::lit(1.0 - r1 - r2), T::lit(r1), T::lit(r2)])
            })
            .collect()
    }

    /// Barycentric interpolation of a per-vertex field with `width` channels.
    pub fn interpolate(&self, values: &[T], width: usize, tri: usize, w: &[T; 3]) -> Vec<T> {
        let t = &self.triangles[tri];
        (0..width).map(|c| (0..3).map(|k| w[k] * values[t[k] * width + c]).sum()).collect()
    }

    pub fn load_obj(path: impl AsRef<Path>, dim: usize) -> Result<Self> {
        Self::parse_obj(&std::fs::read_to_string(path)?, dim)
    }

    /// Parses `v` and `f` records; polygons are fan-triangulated and in 2D the
    /// third coordinate is dropped.
    pub fn parse_obj(text: &str, dim: usize) -> Result<Self> {
        let mut coords = Vec::new();
        let mut tris = Vec::new();
        let mut nverts = 0usize;
        for (lineno, line) in text.lines().enumerate() {
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => {
                    let vals: Vec<f64> = it
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
                    if vals.len() < dim {
                        return Err(Error::Parse(format!("line {}: vertex needs {dim} coordinates", lineno + 1)));
                    }
                    coords.extend(vals[..dim].iter().map(|&x| T::lit(x)));
                    nverts += 1;
                }
                Some("f") => {
                    let ids: Vec<usize> = it
                        .map(|s| {
                            let head = s.split('/').next().unwrap_or("");
                            let i: i64 = head.parse().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
                            let idx = if i < 0 { nverts as i64 + i } else { i - 1 };
                            if idx < 0 {
                                return Err(Error::Parse(format!("line {}: bad index {i}", lineno + 1)));
                            }
                            Ok(idx as usize)
                        })
                        .collect::<Result<_>>()?;
                    if ids.len() < 3 {
                        return Err(Error::Parse(format!("line {}: face with fewer than 3 vertices", lineno + 1)));
                    }
                    for k in 1..ids.len() - 1 {
                        tris.push([ids[0], ids[k], ids[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        InteriorMesh::new(dim, coords, tris)
    }

    pub fn to_obj_with(&self, coords: &[T]) -> String {
        let d = self.dim;
        let mut s = String::new();
        for p in coords.chunks(d) {
            let z = if d == 3 { p[2].as_f64() } else { 0.0 };
            let _ = writeln!(s, "v {} {} {}", p[0].as_f64(), p[1].as_f64(), z);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }

    pub fn to_obj(&self) -> String {
        self.to_obj_with(&self.coords)
    }
}

/// Writes a point set (no faces) as OBJ.
pub fn points_to_obj<T: Real>(coords: &[T], dim: usize) -> String {
    let mut s = String::new();
    for p in coords.chunks(dim) {
        let z = if dim == 3 { p[2].as_f64() } else { 0.0 };
        let _ = writeln!(s, "v {} {} {}", p[0].as_f64(), p[1].as_f64(), z);
    }
    s
}
