use rand::Rng;

use super::Cage;
use crate::{Error, Real, Result};

/// Rejection budget per requested point.
pub const MAX_ATTEMPTS_PER_POINT: usize = 1000;

fn sample_where<T: Real, R: Rng>(cage: &Cage<T>, n: usize, rng: &mut R, keep: impl Fn(&[T]) -> bool) -> Result<Vec<T>> {
    let d = cage.dim();
    let (lo, hi) = cage.bbox();
    let budget = n * MAX_ATTEMPTS_PER_POINT + 1000;
    let mut out = Vec::with_capacity(n * d);
    let mut p = vec![T::zero(); d];
    let mut attempts = 0;
    while out.len() < n * d {
        if attempts >= budget {
            return Err(Error::SamplingExhausted { attempts, found: out.len() / d, wanted: n });
        }
        attempts += 1;
        for c in 0..d {
            let u: f64 = rng.random();
            p[c] = lo[c] + (hi[c] - lo[c]) * T::lit(u);
        }
        if keep(&p) {
            out.extend_from_slice(&p);
        }
    }
    Ok(out)
}

/// `n` uniform points strictly inside the cage (flat, `n * d` values).
pub fn sample_inside<T: Real, R: Rng>(cage: &Cage<T>, n: usize, rng: &mut R) -> Result<Vec<T>> {
    sample_where(cage, n, rng, |p| cage.is_inside(p) && cage.boundary_distance(p) > T::zero())
}

/// `n` uniform points of the bounding box strictly outside the cage.
pub fn sample_outside<T: Real, R: Rng>(cage: &Cage<T>, n: usize, rng: &mut R) -> Result<Vec<T>> {
    sample_where(cage, n, rng, |p| !cage.is_inside(p) && cage.boundary_distance(p) > T::zero())
}
