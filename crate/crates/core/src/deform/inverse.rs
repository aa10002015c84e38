//! Recovering a deformed cage (and optionally adjusting the field) so that
//! the induced map matches a target mesh with the same connectivity.
//!
//! The deformed surface is the piecewise-linear interpolation of the mapped
//! mesh vertices; the energy is a surface integral estimated with fixed
//! area-weighted samples on the target:
//! `E = A/S * sum_s |phi_s - x'_s| + lambda (|L phi|_s - |L x'|_s)^2`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rotation;
use super::{deform_points, rms, vertex_errors, DeformedCage};
use crate::geometry::InteriorMesh;
use crate::neural_field::CoordinateField;
use crate::training::{adam_step, AdamState, LrDecay};
use crate::{Error, Real, Result};

/// Fixed quadrature for the surface integral.
#[derive(Debug, Clone)]
pub struct SurfaceSamples<T> {
    pub samples: Vec<(usize, [T; 3])>,
    /// Area of the surface the samples are drawn from.
    pub area: T,
}

impl<T: Real> SurfaceSamples<T> {
    pub fn draw(surface: &InteriorMesh<T>, n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SurfaceSamples { samples: surface.sample_surface(n, &mut rng), area: surface.area() }
    }
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// `(L^T g)` for the uniform Laplacian of `mesh`.
fn laplacian_transpose<T: Real>(mesh: &InteriorMesh<T>, g: &[T]) -> Vec<T> {
    let d = mesh.dim();
    let mut out = vec![T::zero(); g.len()];
    for i in 0..mesh.num_vertices() {
        let nb = mesh.neighbors(i);
        if nb.is_empty() {
            continue;
        }
        let inv = T::one() / T::lit(nb.len() as f64);
        for a in 0..d {
            out[i * d + a] += g[i * d + a];
            for &j in nb {
                out[j * d + a] -= g[i * d + a] * inv;
            }
        }
    }
    out
}

/// Energy of mapped vertex positions `phi` against `target` (both `n x d`)
/// and, when requested, its gradient with respect to `phi`.
pub fn inverse_energy_and_grad<T: Real>(
    mesh: &InteriorMesh<T>,
    phi: &[T],
    target: &[T],
    samples: &SurfaceSamples<T>,
    lambda: f64,
    want_grad: bool,
) -> (T, Option<Vec<T>>) {
    let d = mesh.dim();
    let lam = T::lit(lambda);
    let w = samples.area / T::lit(samples.samples.len().max(1) as f64);
    let diff: Vec<T> = phi.iter().zip(target).map(|(a, b)| *a - *b).collect();
    let lp = mesh.uniform_laplacian(phi);
    let lt = mesh.uniform_laplacian(target);
    let mut e = T::zero();
    let mut g_phi = vec![T::zero(); if want_grad { phi.len() } else { 0 }];
    let mut g_lap = vec![T::zero(); g_phi.len()];
    for (tri, b) in &samples.samples {
        let t = mesh.triangles()[*tri];
        let r = mesh.interpolate(&diff, d, *tri, b);
        let rn = norm(&r);
        let lps = mesh.interpolate(&lp, d, *tri, b);
        let lpn = norm(&lps);
        let gap = lpn - norm(&mesh.interpolate(&lt, d, *tri, b));
        e += w * (rn + lam * gap * gap);
        if want_grad {
            for (c, &v) in t.iter().enumerate() {
                for a in 0..d {
                    if rn > T::zero() {
                        g_phi[v * d + a] += w * b[c] * r[a] / rn;
                    }
                    if lpn > T::zero() {
                        g_lap[v * d + a] += w * lam * T::lit(2.0) * gap * b[c] * lps[a] / lpn;
                    }
                }
            }
        }
    }
    if !want_grad {
        return (e, None);
    }
    for (g, l) in g_phi.iter_mut().zip(laplacian_transpose(mesh, &g_lap)) {
        *g += l;
    }
    (e, Some(g_phi))
}

pub fn inverse_energy<T: Real>(mesh: &InteriorMesh<T>, phi: &[T], target: &[T], samples: &SurfaceSamples<T>, lambda: f64) -> T {
    inverse_energy_and_grad(mesh, phi, target, samples, lambda, false).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseConfig {
    #[serde(rename = "laplacian_weight")]
    pub lambda: f64,
    pub n_samples: usize,
    pub global_steps: usize,
    pub global_lr: f64,
    pub local_steps: usize,
    pub cage_lr: f64,
    pub field_lr: f64,
    pub lr_decay: Option<LrDecay>,
    /// Also fine-tune the network during the local stage.
    pub optimize_field: bool,
    /// Consecutive energy increases in the global stage treated as divergence.
    pub divergence_patience: usize,
    /// A rise only counts once the energy is this far (relative) above the
    /// best value so far, so momentum overshoot near the optimum is ignored.
    #[serde(default = "divergence_tolerance_default")]
    pub divergence_tolerance: f64,
    pub rng_seed: u64,
}

fn divergence_tolerance_default() -> f64 {
    1e-2
}

impl Default for InverseConfig {
    fn default() -> Self {
        InverseConfig {
            lambda: 1e-4,
            n_samples: 2000,
            global_steps: 500,
            global_lr: 5e-3,
            local_steps: 3000,
            cage_lr: 5e-3,
            field_lr: 5e-4,
            lr_decay: Some(LrDecay { factor: 0.8, every_n_steps: 200 }),
            optimize_field: true,
            divergence_patience: 10,
            divergence_tolerance: divergence_tolerance_default(),
            rng_seed: 0,
        }
    }
}

impl InverseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig("n_samples must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.global_lr >= 0.0 && self.cage_lr >= 0.0 && self.field_lr >= 0.0) {
            return Err(Error::InvalidConfig("weights and learning rates must be non-negative".into()));
        }
        if !(self.divergence_tolerance >= 0.0) {
            return Err(Error::InvalidConfig("divergence_tolerance must be non-negative".into()));
        }
        if self.divergence_patience == 0 {
            return Err(Error::InvalidConfig("divergence_patience must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseReport {
    pub cage: DeformedCage,
    pub global_energies: Vec<f64>,
    pub local_energies: Vec<f64>,
    /// `|phi(x_i) - x'_i|` per mesh vertex after the solve.
    pub vertex_errors: Vec<f64>,
    pub rms_error: f64,
}

struct Similarity<T> {
    w: Vec<T>,
    s: T,
    t: Vec<T>,
}

impl<T: Real> Similarity<T> {
    fn apply(&self, dim: usize, local: &[T]) -> Vec<T> {
        let r = rotation::exp(dim, &self.w);
        let mut out = Vec::with_capacity(local.len());
        for l in local.chunks(dim) {
            let y = rotation::apply(dim, &r, l);
            for a in 0..dim {
                out.push(self.s * y[a] + self.t[a]);
            }
        }
        out
    }
}

/// Two-stage solve: a global similarity of the rest cage, then free cage
/// vertices (and, if configured, the network) with the similarity fixed.
/// Counts consecutive energy increases that also sit above the running best
/// by a relative tolerance.
struct RiseMonitor {
    tolerance: f64,
    best: f64,
    prev: f64,
    rises: usize,
}

impl RiseMonitor {
    fn new(tolerance: f64) -> Self {
        RiseMonitor { tolerance, best: f64::INFINITY, prev: f64::INFINITY, rises: 0 }
    }

    fn push(&mut self, e: f64) -> usize {
        self.best = self.best.min(e);
        if e > self.prev && e > self.best * (1.0 + self.tolerance) {
            self.rises += 1;
        } else {
            self.rises = 0;
        }
        self.prev = e;
        self.rises
    }
}

pub fn inverse_solve<T: Real>(
    field: &mut CoordinateField<T>,
    mesh: &InteriorMesh<T>,
    target: &InteriorMesh<T>,
    cfg: &InverseConfig,
) -> Result<InverseReport> {
    cfg.validate()?;
    let d = field.dim();
    let k = field.num_cage_vertices();
    if mesh.dim() != d || target.dim() != d {
        return Err(Error::Shape(format!("meshes must be {d}D")));
    }
    if mesh.num_vertices() != target.num_vertices() || mesh.triangles() != target.triangles() {
        return Err(Error::Shape("target mesh must share the rest mesh's connectivity".into()));
    }
    let samples = SurfaceSamples::draw(target, cfg.n_samples, cfg.rng_seed);
    let goal = target.coords();
    let rest = DeformedCage::rest(field.cage());
    let local0: Vec<T> = rest.local_vertices.iter().flatten().map(|&x| T::lit(x)).collect();
    let mut sim = Similarity {
        w: vec![T::zero(); rotation::log_dim(d)],
        s: T::one(),
        t: rest.global_translation.iter().map(|&x| T::lit(x)).collect(),
    };
    let ld = sim.w.len();

    // Stage 1: similarity of the rest cage with the field fixed.
    let w_rest = field.evaluate_batch(mesh.coords())?;
    let mut global = Vec::with_capacity(cfg.global_steps);
    let mut flat: Vec<T> = sim.w.iter().copied().chain([sim.s]).chain(sim.t.iter().copied()).collect();
    let mut adam = AdamState::new(flat.len());
    let mut monitor = RiseMonitor::new(cfg.divergence_tolerance);
    for step in 0..cfg.global_steps {
        let verts = sim.apply(d, &local0);
        let phi = deform_points(&w_rest, k, &verts, d);
        let (e, g) = inverse_energy_and_grad(mesh, &phi, goal, &samples, cfg.lambda, true);
        let e = e.as_f64();
        if !e.is_finite() {
            return Err(Error::Diverged(format!("non-finite energy at global step {step}")));
        }
        let rises = monitor.push(e);
        if rises >= cfg.divergence_patience {
            return Err(Error::Diverged(format!(
                "global stage energy rose {rises} times in a row (step {step}, energy {e:.6e}, scale {:.4})",
                sim.s.as_f64()
            )));
        }
        global.push(e);
        let g_v = weights_transpose(&w_rest, k, &g.expect("gradient requested"), d);
        let r = rotation::exp(d, &sim.w);
        let dr = rotation::exp_derivatives(d, &sim.w);
        let mut grad = vec![T::zero(); flat.len()];
        for (kk, l) in local0.chunks(d).enumerate() {
            let gv = &g_v[kk * d..(kk + 1) * d];
            let rl = rotation::apply(d, &r, l);
            for (q, m) in dr.iter().enumerate() {
                let y = rotation::apply(d, m, l);
                grad[q] += sim.s * (0..d).map(|a| gv[a] * y[a]).sum::<T>();
            }
            grad[ld] += (0..d).map(|a| gv[a] * rl[a]).sum::<T>();
            for a in 0..d {
                grad[ld + 1 + a] += gv[a];
            }
        }
        adam_step(&mut flat, &grad, &mut adam, LrDecay::rate_at(cfg.lr_decay.as_ref(), cfg.global_lr, step))?;
        sim.w = flat[..ld].to_vec();
        sim.s = flat[ld];
        sim.t = flat[ld + 1..].to_vec();
    }

    // Stage 2: free local vertices, optionally the network.
    let mut local = local0.clone();
    let mut adam_cage = AdamState::new(local.len());
    let mut adam_net = AdamState::new(field.params.len());
    let mut local_energies = Vec::with_capacity(cfg.local_steps);
    let r = rotation::exp(d, &sim.w);
    for step in 0..cfg.local_steps {
        let verts = sim.apply(d, &local);
        let tape = if cfg.optimize_field { Some(field.evaluate_batch_taped(mesh.coords())?) } else { None };
        let w_now = tape.as_ref().map_or(&w_rest, |t| &t.alpha);
        let phi = deform_points(w_now, k, &verts, d);
        let (e, g) = inverse_energy_and_grad(mesh, &phi, goal, &samples, cfg.lambda, true);
        if !e.is_finite() {
            return Err(Error::Diverged(format!("non-finite energy at local step {step}")));
        }
        local_energies.push(e.as_f64());
        let g = g.expect("gradient requested");
        let g_v = weights_transpose(w_now, k, &g, d);
        let mut g_local = vec![T::zero(); local.len()];
        for kk in 0..k {
            for b in 0..d {
                // d v / d l = s R
                g_local[kk * d + b] = (0..d).map(|a| g_v[kk * d + a] * r[a][b]).sum::<T>() * sim.s;
            }
        }
        let decay = |base| LrDecay::rate_at(cfg.lr_decay.as_ref(), base, step);
        if let Some(tape) = &tape {
            let n = mesh.num_vertices();
            let mut d_alpha = vec![T::zero(); n * k];
            for (i, row) in d_alpha.chunks_mut(k).enumerate() {
                for (kk, x) in row.iter_mut().enumerate() {
                    *x = (0..d).map(|a| g[i * d + a] * verts[kk * d + a]).sum();
                }
            }
            let mut grad = vec![T::zero(); field.params.len()];
            field.backward_batch(tape, &d_alpha, &mut grad);
            adam_step(field.params.data_mut(), &grad, &mut adam_net, decay(cfg.field_lr))?;
        }
        adam_step(&mut local, &g_local, &mut adam_cage, decay(cfg.cage_lr))?;
    }

    let verts = sim.apply(d, &local);
    let phi = deform_points(&field.evaluate_batch(mesh.coords())?, k, &verts, d);
    let errors = vertex_errors(&phi, goal, d);
    Ok(InverseReport {
        cage: DeformedCage {
            global_rotation: sim.w.iter().map(|x| x.as_f64()).collect(),
            global_scale: sim.s.as_f64(),
            global_translation: sim.t.iter().map(|x| x.as_f64()).collect(),
            local_vertices: local.chunks(d).map(|l| l.iter().map(|x| x.as_f64()).collect()).collect(),
        },
        global_energies: global,
        local_energies,
        rms_error: rms(&errors),
        vertex_errors: errors,
    })
}

/// `W^T G` for `W` (`n x K`) and `G` (`n x d`).
fn weights_transpose<T: Real>(w: &[T], k: usize, g: &[T], dim: usize) -> Vec<T> {
    let mut out = vec![T::zero(); k * dim];
    for (row, gr) in w.chunks(k).zip(g.chunks(dim)) {
        for (kk, &x) in row.iter().enumerate() {
            for a in 0..dim {
                out[kk * dim + a] += x * gr[a];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh() -> InteriorMesh<f64> {
        InteriorMesh::grid([0.1, 0.1], [0.9, 0.6], 6, 4)
    }

    #[test]
    fn rise_monitor_ignores_overshoot_near_the_best() {
        let mut m = RiseMonitor::new(1e-2);
        for e in [1.0, 0.5, 0.3] {
            assert_eq!(m.push(e), 0);
        }
        // small rebound within 1% of the best never counts
        for e in [0.3005, 0.301, 0.3015, 0.302] {
            assert_eq!(m.push(e), 0);
        }
        let counts: Vec<usize> = [0.31, 0.4, 0.5, 0.45, 0.6].iter().map(|&e| m.push(e)).collect();
        assert_eq!(counts, vec![1, 2, 3, 0, 1]);
    }

    #[test]
    fn matching_target_has_zero_energy() {
        let m = mesh();
        let phi: Vec<f64> = m.coords().iter().map(|x| x * 1.3 + 0.2).collect();
        let s = SurfaceSamples::draw(&m, 500, 3);
        assert_eq!(inverse_energy(&m, &phi, &phi, &s, 1e-4), 0.0);
    }

    #[test]
    fn translated_target_costs_area_times_offset() {
        let m = mesh();
        let phi = m.coords().to_vec();
        let target: Vec<f64> = phi.chunks(2).flat_map(|p| [p[0] + 0.03, p[1] - 0.04]).collect();
        let tm = m.with_coords(target.clone()).unwrap();
        let s = SurfaceSamples::draw(&tm, 700, 1);
        let e = inverse_energy(&m, &phi, &target, &s, 1e-4);
        assert!((e - tm.area() * 0.05).abs() < 1e-12, "{e}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = mesh();
        let phi: Vec<f64> = m.coords().chunks(2).flat_map(|p| [p[0] + 0.1 * p[1] * p[1], p[1] * 0.9]).collect();
        let target: Vec<f64> = m.coords().chunks(2).flat_map(|p| [p[0] * 1.1, p[1] + 0.05 * p[0]]).collect();
        let s = SurfaceSamples::draw(&m, 300, 2);
        let (_, g) = inverse_energy_and_grad(&m, &phi, &target, &s, 0.5, true);
        let g = g.unwrap();
        for idx in [0, 5, 17, phi.len() - 1] {
            let mut p = phi.clone();
            p[idx] += 1e-7;
            let ep = inverse_energy(&m, &p, &target, &s, 0.5);
            p[idx] -= 2e-7;
            let em = inverse_energy(&m, &p, &target, &s, 0.5);
            let fd = (ep - em) / 2e-7;
            assert!((fd - g[idx]).abs() < 1e-6, "{idx}: {fd} vs {}", g[idx]);
        }
    }
}
