//! Independent reference computations used to check the engine.

pub mod lp;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Cage, Simplex, SimplexFrame};
use crate::simplex_enum::enumerate_all;
use crate::{Error, Real, Result};

/// Worst violations of the barycentric constraints over a set of points.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub n_points: usize,
    /// Most negative coordinate (0 when all are non-negative).
    pub min_coordinate: f64,
    /// `max |sum_i alpha_i - 1|`
    pub partition_error: f64,
    /// `max |sum_i alpha_i v_i - p|`
    pub reproduction_error: f64,
}

impl ConstraintReport {
    pub fn satisfies(&self, neg_tol: f64, pou_tol: f64, repro_tol: f64) -> bool {
        self.min_coordinate >= -neg_tol && self.partition_error <= pou_tol && self.reproduction_error <= repro_tol
    }
}

/// Checks `alphas` (`n x K`) at `points` (`n x d`) against `cage`.
pub fn check_constraints<T: Real>(cage: &Cage<T>, points: &[T], alphas: &[T]) -> Result<ConstraintReport> {
    let d = cage.dim();
    let k = cage.num_vertices();
    let n = points.len() / d;
    if alphas.len() != n * k {
        return Err(Error::Shape(format!("{} coordinates for {n} points and {k} cage vertices", alphas.len())));
    }
    let mut rep = ConstraintReport { n_points: n, ..Default::default() };
    for (p, a) in points.chunks(d).zip(alphas.chunks(k)) {
        let a: Vec<f64> = a.iter().map(|x| x.as_f64()).collect();
        rep.min_coordinate = rep.min_coordinate.min(a.iter().cloned().fold(0.0, f64::min));
        rep.partition_error = rep.partition_error.max((a.iter().sum::<f64>() - 1.0).abs());
        let err: f64 = (0..d)
            .map(|c| {
                let r: f64 = (0..k).map(|i| a[i] * cage.vertex(i)[c].as_f64()).sum::<f64>() - p[c].as_f64();
                r * r
            })
            .sum::<f64>()
            .sqrt();
        rep.reproduction_error = rep.reproduction_error.max(err);
    }
    Ok(rep)
}

/// Pointwise constraint evaluation of one coordinate vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityCertificate {
    pub point: Vec<f64>,
    pub coordinates: Vec<f64>,
    pub feasible: bool,
    /// Largest violation among non-negativity, partition of unity and
    /// reproduction.
    pub max_violation: f64,
}

/// Checks non-negativity, partition of unity and reproduction of `alpha`
/// at `p` with a common tolerance.
pub fn feasibility_check<T: Real>(p: &[T], alpha: &[T], cage: &Cage<T>, tol: f64) -> Result<FeasibilityCertificate> {
    let rep = check_constraints(cage, p, alpha)?;
    let max_violation = (-rep.min_coordinate).max(rep.partition_error).max(rep.reproduction_error);
    Ok(FeasibilityCertificate {
        point: p.iter().map(|x| x.as_f64()).collect(),
        coordinates: alpha.iter().map(|x| x.as_f64()).collect(),
        feasible: max_violation <= tol,
        max_violation,
    })
}

/// Constraint rows `A x = b` of the coordinate polytope at `p`:
/// reproduction (d rows) and partition of unity.
fn polytope_rows(cage: &Cage<f64>, p: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let d = cage.dim();
    let k = cage.num_vertices();
    let mut a: Vec<Vec<f64>> = (0..d).map(|c| (0..k).map(|i| cage.vertex(i)[c]).collect()).collect();
    let mut b: Vec<f64> = p.to_vec();
    a.push(vec![1.0; k]);
    b.push(1.0);
    (a, b)
}

/// Whether any valid coordinate vector exists at `p`.
pub fn polytope_nonempty(cage: &Cage<f64>, p: &[f64]) -> bool {
    let (a, b) = polytope_rows(cage, p);
    lp::feasible_point(&a, &b).is_some()
}

/// Vertices of the coordinate polytope at `p` found by minimizing random
/// linear objectives (plus the coordinate directions).
pub fn polytope_vertices<R: Rng>(cage: &Cage<f64>, p: &[f64], random_objectives: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let k = cage.num_vertices();
    let (a, b) = polytope_rows(cage, p);
    let mut objectives: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| if i == j { -1.0 } else { 0.0 }).collect()).collect();
    objectives.extend((0..random_objectives).map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()));
    let mut out: Vec<Vec<f64>> = Vec::new();
    for c in objectives {
        if let lp::LpOutcome::Optimal { x, .. } = lp::minimize(&c, &a, &b) {
            if !out.iter().any(|y| y.iter().zip(&x).all(|(u, v)| (u - v).abs() < 1e-9)) {
                out.push(x);
            }
        }
    }
    out
}

fn mix_vertices<R: Rng>(verts: &[Vec<f64>], k: usize, rng: &mut R) -> Option<Vec<f64>> {
    if verts.is_empty() {
        return None;
    }
    // flat Dirichlet weights
    let w: Vec<f64> = verts.iter().map(|_| -rng.random_range(f64::EPSILON..1.0).ln()).collect();
    let total: f64 = w.iter().sum();
    Some((0..k).map(|i| verts.iter().zip(&w).map(|(v, wv)| v[i] * wv / total).sum()).collect())
}

/// Random point of the coordinate polytope: a Dirichlet-weighted
/// combination of its vertices.
pub fn random_feasible_coordinates<R: Rng>(cage: &Cage<f64>, p: &[f64], rng: &mut R) -> Option<Vec<f64>> {
    let verts = polytope_vertices(cage, p, 4 * cage.num_vertices(), rng);
    mix_vertices(&verts, cage.num_vertices(), rng)
}

/// Barycentric coordinates (as K-vectors) of every non-degenerate simplex
/// of the full, unpruned set that contains `p`.
pub fn containing_simplex_coordinates(cage: &Cage<f64>, p: &[f64]) -> Result<Vec<(Simplex, Vec<f64>)>> {
    let d = cage.dim();
    let k = cage.num_vertices();
    let (_, all) = enumerate_all(cage);
    let mut cols = Vec::new();
    for s in all {
        let f = match SimplexFrame::new(&s, cage) {
            Ok(f) => f,
            Err(Error::DegenerateSimplex(_)) => continue,
            Err(e) => return Err(e),
        };
        if !f.contains(p, 1e-12) {
            continue;
        }
        let lam = f.bary_array(p);
        let mut col = vec![0.0; k];
        for (i, &v) in f.ids().iter().enumerate().take(d + 1) {
            col[v] = lam[i].max(0.0);
        }
        cols.push((s, col));
    }
    Ok(cols)
}

/// Weights over the unpruned simplices containing `p` that mix their
/// barycentric coordinates into `target`, if such a mixture exists.
pub fn decompose(cage: &Cage<f64>, p: &[f64], target: &[f64]) -> Result<Option<Vec<(Simplex, f64)>>> {
    let k = cage.num_vertices();
    let cols = containing_simplex_coordinates(cage, p)?;
    if cols.is_empty() {
        return Ok(None);
    }
    // sum_j w_j lambda^j = target, sum_j w_j = 1, w >= 0
    let mut a: Vec<Vec<f64>> = (0..k).map(|i| cols.iter().map(|(_, c)| c[i]).collect()).collect();
    a.push(vec![1.0; cols.len()]);
    let mut b = target.to_vec();
    b.push(1.0);
    Ok(lp::feasible_point(&a, &b).map(|w| cols.into_iter().map(|(s, _)| s).zip(w).filter(|(_, w)| *w > 1e-12).collect()))
}

/// Outcome of the representability check at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversalityReport {
    pub polytope_vertices: usize,
    /// Polytope vertices with more than `d + 1` non-zeros or matching no
    /// simplex's coordinates.
    pub bad_vertices: Vec<Vec<f64>>,
    pub trials: usize,
    /// Random feasible vectors that no simplex mixture reproduces.
    pub counterexamples: Vec<Vec<f64>>,
}

impl UniversalityReport {
    pub fn passed(&self) -> bool {
        self.polytope_vertices > 0 && self.bad_vertices.is_empty() && self.counterexamples.is_empty()
    }
}

/// Every vertex of the coordinate polytope at `p` must be the coordinate
/// vector of a containing simplex, and `trials` random feasible vectors
/// must decompose into a mixture of those.
pub fn universality_check<R: Rng>(p: &[f64], cage: &Cage<f64>, trials: usize, rng: &mut R) -> Result<UniversalityReport> {
    let d = cage.dim();
    let k = cage.num_vertices();
    let verts = polytope_vertices(cage, p, 4 * k, rng);
    let cols = containing_simplex_coordinates(cage, p)?;
    let bad_vertices = verts
        .iter()
        .filter(|v| {
            let nnz = v.iter().filter(|&&x| x > 1e-9).count();
            nnz > d + 1 || !cols.iter().any(|(_, c)| c.iter().zip(v.iter()).all(|(a, b)| (a - b).abs() < 1e-7))
        })
        .cloned()
        .collect();
    let mut counterexamples = Vec::new();
    for _ in 0..trials {
        let Some(beta) = mix_vertices(&verts, k, rng) else { break };
        if decompose(cage, p, &beta)?.is_none() {
            counterexamples.push(beta);
        }
    }
    Ok(UniversalityReport { polytope_vertices: verts.len(), bad_vertices, trials, counterexamples })
}

/// Mean value coordinates of `p` for a 2D polygon cage.
pub fn mean_value_coordinates(cage: &Cage<f64>, p: &[f64]) -> Result<Vec<f64>> {
    if cage.dim() != 2 {
        return Err(Error::Shape("mean value coordinates are implemented for polygons".into()));
    }
    let k = cage.num_vertices();
    let s: Vec<[f64; 2]> = (0..k).map(|i| [cage.vertex(i)[0] - p[0], cage.vertex(i)[1] - p[1]]).collect();
    let r: Vec<f64> = s.iter().map(|v| v[0].hypot(v[1])).collect();
    let scale = cage.scale();
    if r.iter().any(|&x| x <= 1e-12 * scale) {
        return Err(Error::BoundaryPoint);
    }
    let mut tan_half = vec![0.0; k];
    for i in 0..k {
        let (a, b) = (s[i], s[(i + 1) % k]);
        let cross = a[0] * b[1] - a[1] * b[0];
        let dot = a[0] * b[0] + a[1] * b[1];
        if cross.abs() <= 1e-12 * r[i] * r[(i + 1) % k] && dot < 0.0 {
            return Err(Error::BoundaryPoint);
        }
        // tan(theta / 2) = sin / (1 + cos)
        tan_half[i] = cross / (r[i] * r[(i + 1) % k] + dot);
    }
    let w: Vec<f64> = (0..k).map(|i| (tan_half[(i + k - 1) % k] + tan_half[i]) / r[i]).collect();
    let total: f64 = w.iter().sum();
    Ok(w.iter().map(|x| x / total).collect())
}

/// TV energy of the barycentric coordinates of a single simplex:
/// `sum_i Vol / h_i`.
pub fn analytic_simplex_tv<T: Real>(frame: &SimplexFrame<T>) -> f64 {
    let vol = frame.volume().as_f64();
    (0..=frame.dim()).map(|i| vol / frame.altitude(i).as_f64()).sum()
}

/// Dirichlet energy of the same: `sum_i Vol / h_i^2`.
pub fn analytic_simplex_dirichlet<T: Real>(frame: &SimplexFrame<T>) -> f64 {
    let vol = frame.volume().as_f64();
    (0..=frame.dim()).map(|i| vol / frame.altitude(i).as_f64().powi(2)).sum()
}
