//! As-rigid-as-possible energy of the deformation map on an interior mesh,
//! and fine-tuning of a trained field against it.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::deform_points;
use super::rotation::{self, Mat};
use crate::energies::LossRecord;
use crate::geometry::InteriorMesh;
use crate::neural_field::CoordinateField;
use crate::training::{adam_step, AdamState, LrDecay};
use crate::{Error, Real, Result};

fn edge_residual<T: Real>(mesh: &InteriorMesh<T>, phi: &[T], r: &Mat<T>, i: usize, j: usize) -> [T; 3] {
    let d = mesh.dim();
    let e: Vec<T> = (0..d).map(|a| mesh.vertex(i)[a] - mesh.vertex(j)[a]).collect();
    let re = rotation::apply(d, r, &e);
    let mut out = [T::zero(); 3];
    for a in 0..d {
        out[a] = phi[i * d + a] - phi[j * d + a] - re[a];
    }
    out
}

fn norm2<T: Real>(v: &[T; 3]) -> T {
    v.iter().map(|&x| x * x).sum()
}

/// Best-fit rotation per vertex between rest one-ring edges and their images
/// under `phi`. Vertices whose covariance does not determine a rotation get
/// the identity; their count is returned alongside.
pub fn fit_rotations<T: Real>(mesh: &InteriorMesh<T>, phi: &[T]) -> (Vec<Mat<T>>, usize) {
    let d = mesh.dim();
    let mut fallbacks = 0;
    let rots = (0..mesh.num_vertices())
        .map(|i| {
            let mut m = [[0.0f64; 3]; 3];
            for &j in mesh.neighbors(i) {
                for a in 0..d {
                    let de = (phi[i * d + a] - phi[j * d + a]).as_f64();
                    for b in 0..d {
                        m[a][b] += de * (mesh.vertex(i)[b] - mesh.vertex(j)[b]).as_f64();
                    }
                }
            }
            match rotation::closest_rotation(d, &m) {
                Some(r) => r.map(|row| row.map(T::lit)),
                None => {
                    fallbacks += 1;
                    rotation::exp(d, &vec![T::zero(); rotation::log_dim(d)])
                }
            }
        })
        .collect();
    (rots, fallbacks)
}

/// Per-vertex term `sum_{j in n(i)} |(phi_i - phi_j) - R_i (x_i - x_j)|^2`.
pub fn arap_vertex_energy<T: Real>(mesh: &InteriorMesh<T>, phi: &[T], rotations: &[Mat<T>], i: usize) -> T {
    mesh.neighbors(i).iter().map(|&j| norm2(&edge_residual(mesh, phi, &rotations[i], i, j))).sum()
}

/// Full energy; vertices without neighbours contribute nothing.
pub fn arap_energy<T: Real>(mesh: &InteriorMesh<T>, phi: &[T], rotations: &[Mat<T>]) -> T {
    (0..mesh.num_vertices()).map(|i| arap_vertex_energy(mesh, phi, rotations, i)).sum()
}

/// One-draw unbiased estimate of the energy of vertex `i`: a uniformly
/// drawn neighbour's edge term scaled by the neighbourhood size.
pub fn arap_vertex_sample<T: Real, R: Rng>(mesh: &InteriorMesh<T>, phi: &[T], rotations: &[Mat<T>], i: usize, rng: &mut R) -> T {
    let nb = mesh.neighbors(i);
    if nb.is_empty() {
        return T::zero();
    }
    let j = nb[rng.random_range(0..nb.len())];
    T::lit(nb.len() as f64) * norm2(&edge_residual(mesh, phi, &rotations[i], i, j))
}

/// One-draw unbiased estimate of the full energy (uniform vertex, uniform
/// neighbour).
pub fn arap_sample<T: Real, R: Rng>(mesh: &InteriorMesh<T>, phi: &[T], rotations: &[Mat<T>], rng: &mut R) -> T {
    let n = mesh.num_vertices();
    let i = rng.random_range(0..n);
    T::lit(n as f64) * arap_vertex_sample(mesh, phi, rotations, i, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArapConfig {
    pub steps: usize,
    pub rotation_lr: f64,
    pub network_lr: f64,
    pub lr_decay: Option<LrDecay>,
    /// Edge draws per step.
    pub samples_per_step: usize,
    pub rng_seed: u64,
}

impl Default for ArapConfig {
    fn default() -> Self {
        ArapConfig {
            steps: 1200,
            rotation_lr: 0.1,
            network_lr: 1e-3,
            lr_decay: Some(LrDecay { factor: 0.8, every_n_steps: 150 }),
            samples_per_step: 3000,
            rng_seed: 0,
        }
    }
}

impl ArapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_step == 0 {
            return Err(Error::InvalidConfig("samples_per_step must be positive".into()));
        }
        if !(self.rotation_lr >= 0.0 && self.network_lr >= 0.0) {
            return Err(Error::InvalidConfig("learning rates must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArapReport {
    /// Energy with best-fit rotations before and after fine-tuning.
    pub energy_before: f64,
    pub energy_after: f64,
    /// Per-step stochastic objective.
    pub history: Vec<LossRecord>,
    /// Log rotations per mesh vertex at the end.
    pub rotations: Vec<Vec<f64>>,
    pub rotation_fallbacks: usize,
    pub skipped_updates: u64,
}

/// Current deformation `phi` at the rest mesh vertices.
pub fn deformed_mesh<T: Real>(field: &CoordinateField<T>, mesh: &InteriorMesh<T>, cage_vertices: &[T]) -> Result<Vec<T>> {
    let w = field.evaluate_batch(mesh.coords())?;
    Ok(deform_points(&w, field.num_cage_vertices(), cage_vertices, field.dim()))
}

/// Jointly optimizes the network and one rotation per mesh vertex to
/// reduce the ARAP energy of the map induced by `cage_vertices`.
pub fn arap_finetune<T: Real>(
    field: &mut CoordinateField<T>,
    mesh: &InteriorMesh<T>,
    cage_vertices: &[T],
    cfg: &ArapConfig,
) -> Result<ArapReport> {
    cfg.validate()?;
    let d = field.dim();
    let k = field.num_cage_vertices();
    if mesh.dim() != d || cage_vertices.len() != k * d {
        return Err(Error::Shape(format!(
            "mesh is {}D and the deformed cage has {} coordinates; expected {d}D and {}",
            mesh.dim(),
            cage_vertices.len(),
            k * d
        )));
    }
    let nodes: Vec<usize> = (0..mesh.num_vertices()).filter(|&i| !mesh.neighbors(i).is_empty()).collect();
    if nodes.is_empty() {
        return Err(Error::Shape("mesh has no edges".into()));
    }
    let phi0 = deformed_mesh(field, mesh, cage_vertices)?;
    let (r0, fallbacks) = fit_rotations(mesh, &phi0);
    let energy_before = arap_energy(mesh, &phi0, &r0).as_f64();
    let ld = rotation::log_dim(d);
    let mut logs: Vec<T> = r0.iter().flat_map(|r| rotation::log(d, r)).collect();
    let mut adam_net = AdamState::new(field.params.len());
    let mut adam_rot = AdamState::new(logs.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let scale = T::lit(nodes.len() as f64 / cfg.samples_per_step as f64);
    let mut history = Vec::with_capacity(cfg.steps);
    let start = Instant::now();
    let mut slot = vec![usize::MAX; mesh.num_vertices()];
    for step in 0..cfg.steps {
        // draw edges, then evaluate the field once per distinct endpoint
        let mut rows: Vec<usize> = Vec::new();
        let pairs: Vec<(usize, usize)> = (0..cfg.samples_per_step)
            .map(|_| {
                let i = nodes[rng.random_range(0..nodes.len())];
                let nb = mesh.neighbors(i);
                (i, nb[rng.random_range(0..nb.len())])
            })
            .collect();
        for &(i, j) in &pairs {
            for v in [i, j] {
                if slot[v] == usize::MAX {
                    slot[v] = rows.len();
                    rows.push(v);
                }
            }
        }
        let pts: Vec<T> = rows.iter().flat_map(|&v| mesh.vertex(v).iter().copied()).collect();
        let tape = field.evaluate_batch_taped(&pts)?;
        let phi_rows = deform_points(&tape.alpha, k, cage_vertices, d);
        let mut d_phi = vec![T::zero(); phi_rows.len()];
        let mut d_logs = vec![T::zero(); logs.len()];
        let mut loss = T::zero();
        for &(i, j) in &pairs {
            let (si, sj) = (slot[i], slot[j]);
            let w = &logs[i * ld..(i + 1) * ld];
            let r = rotation::exp(d, w);
            let e: Vec<T> = (0..d).map(|a| mesh.vertex(i)[a] - mesh.vertex(j)[a]).collect();
            let re = rotation::apply(d, &r, &e);
            let c = scale * T::lit(mesh.neighbors(i).len() as f64);
            let mut res = [T::zero(); 3];
            for a in 0..d {
                res[a] = phi_rows[si * d + a] - phi_rows[sj * d + a] - re[a];
            }
            loss += c * norm2(&res);
            for a in 0..d {
                let g = T::lit(2.0) * c * res[a];
                d_phi[si * d + a] += g;
                d_phi[sj * d + a] -= g;
            }
            for (q, dr) in rotation::exp_derivatives(d, w).iter().enumerate() {
                let dre = rotation::apply(d, dr, &e);
                let g: T = (0..d).map(|a| res[a] * dre[a]).sum();
                d_logs[i * ld + q] -= T::lit(2.0) * c * g;
            }
        }
        for &v in &rows {
            slot[v] = usize::MAX;
        }
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("non-finite ARAP objective at step {step}")));
        }
        history.push(LossRecord { step, loss: loss.as_f64(), wall_clock: start.elapsed().as_secs_f64() });
        let mut d_alpha = vec![T::zero(); rows.len() * k];
        for (n, row) in d_alpha.chunks_mut(k).enumerate() {
            for (kk, g) in row.iter_mut().enumerate() {
                *g = (0..d).map(|a| d_phi[n * d + a] * cage_vertices[kk * d + a]).sum();
            }
        }
        let mut grad = vec![T::zero(); field.params.len()];
        field.backward_batch(&tape, &d_alpha, &mut grad);
        let decay = |base| LrDecay::rate_at(cfg.lr_decay.as_ref(), base, step);
        adam_step(field.params.data_mut(), &grad, &mut adam_net, decay(cfg.network_lr))?;
        adam_step(&mut logs, &d_logs, &mut adam_rot, decay(cfg.rotation_lr))?;
    }
    let phi1 = deformed_mesh(field, mesh, cage_vertices)?;
    let (r1, _) = fit_rotations(mesh, &phi1);
    Ok(ArapReport {
        energy_before,
        energy_after: arap_energy(mesh, &phi1, &r1).as_f64(),
        history,
        rotations: logs.chunks(ld).map(|w| w.iter().map(|x| x.as_f64()).collect()).collect(),
        rotation_fallbacks: fallbacks,
        skipped_updates: adam_net.skipped + adam_rot.skipped,
    })
}
