//! Smoothness energies of the mollified field estimated with central finite
//! differences: total variation, distance-weighted total variation and a
//! Dirichlet-type energy.
//!
//! Each simplex indicator is replaced by a normalized logistic ramp of the
//! signed distance to the simplex boundary. Finite differences of the
//! resulting smooth surrogate see the jumps between neighboring simplices as
//! steep but finite slopes, so the plain stencil estimator accounts for the
//! discontinuity terms as well as the interior gradient.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::geometry::dist;
use crate::neural_field::{CoordinateField, Mixture};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifierParams {
    #[serde(rename = "smoothing_radius")]
    pub radius: f64,
    #[serde(rename = "smoothing_sharpness")]
    pub sharpness: f64,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

fn enabled_default() -> bool {
    true
}

impl MollifierParams {
    pub fn defaults_2d() -> Self {
        MollifierParams { radius: 5e-3, sharpness: 3000.0, enabled: true }
    }

    pub fn defaults_3d() -> Self {
        MollifierParams { radius: 8e-3, sharpness: 1000.0, enabled: true }
    }

    pub fn defaults_for(dim: usize) -> Self {
        if dim == 3 {
            Self::defaults_3d()
        } else {
            Self::defaults_2d()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.enabled && !(self.radius > 0.0 && self.sharpness > 0.0) {
            return Err(Error::InvalidConfig("smoothing radius and sharpness must be positive".into()));
        }
        Ok(())
    }
}

/// Normalized logistic ramp of a signed distance: 0 at `d <= -r`, 1/2 at
/// `d = 0`, 1 at `d >= r`.
pub fn ramp_factor<T: Real>(d: T, r: T, sharpness: T) -> T {
    let ramp = (d / r).max(-T::one()).min(T::one());
    let s = |x: T| T::one() / (T::one() + (-sharpness * x).exp());
    let lo = s(-T::one());
    let hi = s(T::one());
    ((s(ramp) - lo) / (hi - lo)).max(T::zero()).min(T::one())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FDConfig {
    #[serde(rename = "fd_spacing")]
    pub spacing: f64,
}

impl Default for FDConfig {
    fn default() -> Self {
        FDConfig { spacing: 2.5e-2 }
    }
}

/// `Psi(t) = c + (1 - c) t^2`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightingFunction {
    pub c: f64,
}

impl Default for WeightingFunction {
    fn default() -> Self {
        WeightingFunction { c: 0.1 }
    }
}

impl WeightingFunction {
    pub fn eval<T: Real>(&self, t: T) -> T {
        let c = T::lit(self.c);
        c + (T::one() - c) * t * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LossKind {
    Tv,
    WeightedTv { c: f64 },
    Dirichlet,
}

impl LossKind {
    pub fn weighted_default() -> Self {
        LossKind::WeightedTv { c: WeightingFunction::default().c }
    }
}

/// Central-difference Jacobian of the mollified coordinates, `K x d` row-major.
pub fn fd_gradient<T: Real>(field: &CoordinateField<T>, p: &[T], h: T, moll: &MollifierParams) -> Vec<T> {
    let d = field.dim();
    let k = field.num_cage_vertices();
    let mut g = vec![T::zero(); k * d];
    let mut q = p.to_vec();
    for a in 0..d {
        q[a] = p[a] + h;
        let plus = field.evaluate_mollified_with(&q, moll);
        q[a] = p[a] - h;
        let minus = field.evaluate_mollified_with(&q, moll);
        q[a] = p[a];
        for i in 0..k {
            g[i * d + a] = (plus[i] - minus[i]) / (h + h);
        }
    }
    g
}

/// The center and all stencil points lie inside the cage, at least `r` away from its boundary.
pub fn stencil_ok<T: Real>(field: &CoordinateField<T>, p: &[T], h: T, r: T) -> bool {
    let cage = field.cage();
    let ok = |q: &[T]| cage.is_inside(q) && cage.boundary_distance(q) >= r;
    if !ok(p) {
        return false;
    }
    let mut q = p.to_vec();
    for a in 0..p.len() {
        for s in [h, -h] {
            q[a] = p[a] + s;
            if !ok(&q) {
                return false;
            }
        }
        q[a] = p[a];
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEval<T> {
    pub loss: T,
    pub used: usize,
}

/// Monte Carlo loss estimate over `batch` (`n x d`) and, if requested, its
/// gradient with respect to the field parameters.
pub fn loss_and_grad<T: Real>(
    field: &CoordinateField<T>,
    batch: &[T],
    kind: LossKind,
    fd: &FDConfig,
    moll: &MollifierParams,
    want_grad: bool,
) -> Result<(LossEval<T>, Option<Vec<T>>)> {
    moll.validate()?;
    let d = field.dim();
    let k = field.num_cage_vertices();
    let nj = field.frames().len();
    let h = T::lit(fd.spacing);
    let r = T::lit(moll.radius);
    let centers: Vec<&[T]> = batch.chunks_exact(d).filter(|p| stencil_ok(field, p, h, r)).collect();
    let per = 2 * d;
    let mut rows = Vec::with_capacity(centers.len() * per * d);
    for c in &centers {
        for a in 0..d {
            for s in [h, -h] {
                let start = rows.len();
                rows.extend_from_slice(c);
                rows[start + a] += s;
            }
        }
    }
    let (logits, cache) = if want_grad {
        let (l, c) = field.params.forward_cached(&rows);
        (l, Some(c))
    } else {
        (field.params.forward(&rows), None)
    };
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::Diverged("non-finite network output".into()));
    }
    let nrows = rows.len() / d;
    let mixes: Vec<Mixture<T>> =
        (0..nrows).map(|i| field.mixture(&rows[i * d..(i + 1) * d], &logits[i * nj..(i + 1) * nj], Some(moll))).collect();
    let usable: Vec<bool> = (0..centers.len()).map(|s| mixes[s * per..(s + 1) * per].iter().all(|m| m.total > T::zero())).collect();
    let used = usable.iter().filter(|&&u| u).count();
    if used == 0 {
        return Err(Error::EmptyBatch);
    }
    let mut alphas = vec![T::zero(); nrows * k];
    for (i, m) in mixes.iter().enumerate() {
        field.scatter(m, &mut alphas[i * k..(i + 1) * k]);
    }
    let psi = match kind {
        LossKind::WeightedTv { c } => Some(WeightingFunction { c }),
        _ => None,
    };
    let scale = field.cage().volume() / T::lit(used as f64);
    let inv2h = T::one() / (h + h);
    let mut total = T::zero();
    let mut d_alpha = if want_grad { vec![T::zero(); nrows * k] } else { Vec::new() };
    let mut g = vec![T::zero(); d];
    for (s, c) in centers.iter().enumerate() {
        if !usable[s] {
            continue;
        }
        let mut term = T::zero();
        for i in 0..k {
            for a in 0..d {
                let plus = alphas[(s * per + 2 * a) * k + i];
                let minus = alphas[(s * per + 2 * a + 1) * k + i];
                g[a] = (plus - minus) * inv2h;
            }
            let n2: T = g.iter().map(|&x| x * x).sum();
            let weight = psi.map(|w| w.eval(dist(c, field.cage().vertex(i)))).unwrap_or_else(T::one);
            let (value, dscale) = match kind {
                LossKind::Dirichlet => (n2, T::lit(2.0)),
                _ => {
                    let n = n2.sqrt();
                    let ds = if n > T::zero() { weight / n } else { T::zero() };
                    (weight * n, ds)
                }
            };
            term += value;
            if want_grad && dscale != T::zero() {
                for a in 0..d {
                    let dg = scale * dscale * g[a] * inv2h;
                    d_alpha[(s * per + 2 * a) * k + i] += dg;
                    d_alpha[(s * per + 2 * a + 1) * k + i] -= dg;
                }
            }
        }
        total += term;
    }
    let loss = total * scale;
    let grad = if let Some(cache) = cache {
        let mut d_logits = vec![T::zero(); nrows * nj];
        for (i, m) in mixes.iter().enumerate() {
            if !usable[i / per] {
                continue;
            }
            field.mixture_backward(m, &logits[i * nj..(i + 1) * nj], &d_alpha[i * k..(i + 1) * k], &mut d_logits[i * nj..(i + 1) * nj]);
        }
        let mut grad = vec![T::zero(); field.params.len()];
        field.params.backward(&cache, &d_logits, &mut grad);
        Some(grad)
    } else {
        None
    };
    Ok((LossEval { loss, used }, grad))
}

pub fn tv_loss<T: Real>(field: &CoordinateField<T>, batch: &[T], fd: &FDConfig, moll: &MollifierParams) -> Result<T> {
    Ok(loss_and_grad(field, batch, LossKind::Tv, fd, moll, false)?.0.loss)
}

pub fn weighted_tv_loss<T: Real>(
    field: &CoordinateField<T>,
    batch: &[T],
    fd: &FDConfig,
    moll: &MollifierParams,
    psi: &WeightingFunction,
) -> Result<T> {
    Ok(loss_and_grad(field, batch, LossKind::WeightedTv { c: psi.c }, fd, moll, false)?.0.loss)
}

pub fn dirichlet_loss<T: Real>(field: &CoordinateField<T>, batch: &[T], fd: &FDConfig, moll: &MollifierParams) -> Result<T> {
    Ok(loss_and_grad(field, batch, LossKind::Dirichlet, fd, moll, false)?.0.loss)
}

/// One row of a loss curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
    pub wall_clock: f64,
}

pub fn write_loss_csv(mut w: impl Write, records: &[LossRecord]) -> Result<()> {
    writeln!(w, "step,loss,wall_clock")?;
    for r in records {
        writeln!(w, "{},{},{}", r.step, r.loss, r.wall_clock)?;
    }
    Ok(())
}

pub fn read_loss_csv(text: &str) -> Result<Vec<LossRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Parse(format!("loss csv line {}", i + 1));
        if f.len() != 3 {
            return Err(bad());
        }
        out.push(LossRecord {
            step: f[0].trim().parse().map_err(|_| bad())?,
            loss: f[1].trim().parse().map_err(|_| bad())?,
            wall_clock: f[2].trim().parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}
