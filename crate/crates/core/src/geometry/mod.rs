//! Floating point computational geometry: simplex coordinates, containment,
//! signed distances, cage and mesh containers, rejection sampling.

mod cage;
mod mesh;
mod sampling;
pub mod shapes;
mod simplex;

pub use cage::{Cage, CageJson, Normalization};
pub use mesh::{points_to_obj, InteriorMesh};
pub use sampling::{sample_inside, sample_outside, MAX_ATTEMPTS_PER_POINT};
pub use simplex::{contains, signed_distance_to_boundary, simplex_bary, Simplex, SimplexFrame};

use crate::Real;

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
pub(crate) fn dist2<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn dist<T: Real>(a: &[T], b: &[T]) -> T {
    dist2(a, b).sqrt()
}

/// Squared distance from `p` to the segment `[a, b]` in any dimension.
pub(crate) fn dist2_point_segment<T: Real>(p: &[T], a: &[T], b: &[T]) -> T {
    let mut ab2 = T::zero();
    let mut ap_ab = T::zero();
    for i in 0..p.len() {
        let e = b[i] - a[i];
        ab2 += e * e;
        ap_ab += (p[i] - a[i]) * e;
    }
    let t = if ab2 > T::zero() { (ap_ab / ab2).max(T::zero()).min(T::one()) } else { T::zero() };
    (0..p.len())
        .map(|i| {
            let q = a[i] + t * (b[i] - a[i]);
            (p[i] - q) * (p[i] - q)
        })
        .sum()
}

/// Squared distance from `p` to the triangle `abc` in any dimension
/// (closest-point region walk on the triangle's Voronoi features).
pub(crate) fn dist2_point_triangle<T: Real>(p: &[T], a: &[T], b: &[T], c: &[T]) -> T {
    let n = p.len();
    let sub = |x: &[T], y: &[T]| -> Vec<T> { (0..n).map(|i| x[i] - y[i]).collect::<Vec<T>>() };
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(&ab, &ap);
    let d2 = dot(&ac, &ap);
    if d1 <= T::zero() && d2 <= T::zero() {
        return dist2(p, a);
    }
    let bp = sub(p, b);
    let d3 = dot(&ab, &bp);
    let d4 = dot(&ac, &bp);
    if d3 >= T::zero() && d4 <= d3 {
        return dist2(p, b);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= T::zero() && d1 >= T::zero() && d3 <= T::zero() {
        return dist2_point_segment(p, a, b);
    }
    let cp = sub(p, c);
    let d5 = dot(&ab, &cp);
    let d6 = dot(&ac, &cp);
    if d6 >= T::zero() && d5 <= d6 {
        return dist2(p, c);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= T::zero() && d2 >= T::zero() && d6 <= T::zero() {
        return dist2_point_segment(p, a, c);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= T::zero() && (d4 - d3) >= T::zero() && (d5 - d6) >= T::zero() {
        return dist2_point_segment(p, b, c);
    }
    let denom = T::one() / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (0..n)
        .map(|i| {
            let q = a[i] + ab[i] * v + ac[i] * w;
            (p[i] - q) * (p[i] - q)
        })
        .sum()
}

/// Squared distance from `p` to the simplex facet spanned by `verts`
/// (a segment in 2D, a triangle in 3D).
pub(crate) fn dist2_point_facet<T: Real>(p: &[T], verts: &[&[T]]) -> T {
    match verts.len() {
        1 => dist2(p, verts[0]),
        2 => dist2_point_segment(p, verts[0], verts[1]),
        3 => dist2_point_triangle(p, verts[0], verts[1], verts[2]),
        n => panic!("unsupported facet with {n} vertices"),
    }
}
