use serde::{Deserialize, Serialize};

use super::{dist, dist2_point_facet, Cage};
use crate::{Error, Real, Result};

/// Maximum supported ambient dimension.
pub const MAX_DIM: usize = 3;
const MAX_VERTS: usize = MAX_DIM + 1;

/// A virtual simplex: `d + 1` distinct cage vertex indices, stored ascending.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Simplex(pub Vec<usize>);

impl Simplex {
    pub fn new(mut ids: Vec<usize>) -> Self {
        ids.sort_unstable();
        Simplex(ids)
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn has_vertex(&self, v: usize) -> bool {
        self.0.contains(&v)
    }
}

impl From<&[usize]> for Simplex {
    fn from(ids: &[usize]) -> Self {
        Simplex::new(ids.to_vec())
    }
}

/// Precomputed affine frame of a non-degenerate simplex.
///
/// Barycentric coordinates are an affine function of the query point, so
/// they reduce to a `(d+1) x (d+1)` matrix-vector product once the inverse
/// of the vertex matrix is known.
#[derive(Debug, Clone)]
pub struct SimplexFrame<T: Real> {
    dim: usize,
    ids: [usize; MAX_VERTS],
    verts: [[T; MAX_DIM]; MAX_VERTS],
    inv: [[T; MAX_VERTS]; MAX_VERTS],
    altitude: [T; MAX_VERTS],
    longest_edge: T,
}

impl<T: Real> SimplexFrame<T> {
    /// Builds the frame for `s`, failing when the vertex matrix determinant
    /// falls under `1e-12 * scale^d`.
    pub fn new(simplex: &Simplex, cage: &Cage<T>) -> Result<Self> {
        let points: Vec<&[T]> = simplex.ids().iter().map(|&i| cage.vertex(i)).collect();
        Self::from_points(simplex.ids(), &points, cage.scale())
    }

    pub fn from_points(ids: &[usize], points: &[&[T]], scale: T) -> Result<Self> {
        let n = points.len();
        let dim = n - 1;
        if dim == 0 || dim > MAX_DIM || points.iter().any(|p| p.len() != dim) {
            return Err(Error::Shape(format!("simplex with {n} vertices in dimension {dim}")));
        }
        let mut verts = [[T::zero(); MAX_DIM]; MAX_VERTS];
        let mut idarr = [usize::MAX; MAX_VERTS];
        for (k, p) in points.iter().enumerate() {
            verts[k][..dim].copy_from_slice(p);
            idarr[k] = ids.get(k).copied().unwrap_or(k);
        }
        // vertex matrix: column k = [v_k; 1]
        let mut m = [[T::zero(); MAX_VERTS]; MAX_VERTS];
        for k in 0..n {
            for r in 0..dim {
                m[r][k] = verts[k][r];
            }
            m[dim][k] = T::one();
        }
        let (inv, det) = invert(&m, n).ok_or_else(|| Error::DegenerateSimplex(ids.to_vec()))?;
        let threshold = T::lit(1e-12) * scale.powi(dim as i32);
        if !(det.abs() >= threshold) {
            return Err(Error::DegenerateSimplex(ids.to_vec()));
        }
        let mut altitude = [T::zero(); MAX_VERTS];
        for k in 0..n {
            let g: T = (0..dim).map(|c| inv[k][c] * inv[k][c]).sum();
            altitude[k] = T::one() / g.sqrt();
        }
        let mut longest_edge = T::zero();
        for a in 0..n {
            for b in a + 1..n {
                longest_edge = longest_edge.max(dist(&verts[a][..dim], &verts[b][..dim]));
            }
        }
        Ok(SimplexFrame { dim, ids: idarr, verts, inv, altitude, longest_edge })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cage vertex indices of the corners.
    pub fn ids(&self) -> &[usize] {
        &self.ids[..=self.dim]
    }

    pub fn vertex(&self, k: usize) -> &[T] {
        &self.verts[k][..self.dim]
    }

    /// Distance from corner `k` to the opposite facet's hyperplane.
    pub fn altitude(&self, k: usize) -> T {
        self.altitude[k]
    }

    pub fn longest_edge(&self) -> T {
        self.longest_edge
    }

    /// Unsigned volume (area in 2D).
    pub fn volume(&self) -> T {
        // h_k * |facet_k| / d = vol; compute via determinant of edge vectors instead
        let d = self.dim;
        let mut m = [[T::zero(); MAX_VERTS]; MAX_VERTS];
        for k in 0..=d {
            for r in 0..d {
                m[r][k] = self.verts[k][r];
            }
            m[d][k] = T::one();
        }
        let det = invert(&m, d + 1).map(|(_, det)| det).unwrap_or_else(T::zero);
        let fact: T = (1..=d).map(|i| T::lit(i as f64)).fold(T::one(), |a, b| a * b);
        det.abs() / fact
    }

    /// Barycentric coordinates of `p`; only the first `d + 1` entries are used.
    #[inline]
    pub fn bary_array(&self, p: &[T]) -> [T; MAX_VERTS] {
        let d = self.dim;
        let mut out = [T::zero(); MAX_VERTS];
        for (k, lam) in out.iter_mut().enumerate().take(d + 1) {
            let row = &self.inv[k];
            let mut acc = row[d];
            for c in 0..d {
                acc += row[c] * p[c];
            }
            *lam = acc;
        }
        out
    }

    pub fn bary(&self, p: &[T]) -> Vec<T> {
        self.bary_array(p)[..=self.dim].to_vec()
    }

    /// Gradient of the barycentric coordinate of corner `k` (constant).
    pub fn bary_gradient(&self, k: usize) -> Vec<T> {
        self.inv[k][..self.dim].to_vec()
    }

    #[inline]
    pub fn contains(&self, p: &[T], tol: T) -> bool {
        let lam = self.bary_array(p);
        lam[..=self.dim].iter().all(|&l| l >= -tol)
    }

    /// Signed plane distance `min_k lambda_k h_k`. Equals the signed distance
    /// inside the simplex and is an upper bound on it outside.
    #[inline]
    pub fn plane_distance(&self, lam: &[T; MAX_VERTS]) -> T {
        let mut m = T::infinity();
        for k in 0..=self.dim {
            m = m.min(lam[k] * self.altitude[k]);
        }
        m
    }

    /// Euclidean distance to the boundary, positive inside and negative outside.
    pub fn signed_distance(&self, p: &[T]) -> T {
        let lam = self.bary_array(p);
        let pd = self.plane_distance(&lam);
        if pd >= T::zero() {
            pd
        } else {
            -self.outside_distance(p)
        }
    }

    /// Unsigned distance from an exterior point to the simplex.
    pub fn outside_distance(&self, p: &[T]) -> T {
        let d = self.dim;
        let mut best = T::infinity();
        let lam = self.bary_array(p);
        for skip in 0..=d {
            // only facets whose supporting plane separates p can hold the closest point
            if lam[skip] >= T::zero() {
                continue;
            }
            let facet: Vec<&[T]> = (0..=d).filter(|&k| k != skip).map(|k| self.vertex(k)).collect();
            best = best.min(dist2_point_facet(p, &facet));
        }
        best.sqrt()
    }
}

/// Gauss-Jordan inverse with partial pivoting of the leading `n x n` block.
fn invert<T: Real>(m: &[[T; MAX_VERTS]; MAX_VERTS], n: usize) -> Option<([[T; MAX_VERTS]; MAX_VERTS], T)> {
    let mut a = *m;
    let mut inv = [[T::zero(); MAX_VERTS]; MAX_VERTS];
    for (i, row) in inv.iter_mut().enumerate().take(n) {
        row[i] = T::one();
    }
    let mut det = T::one();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col] == T::zero() {
            return None;
        }
        if piv != col {
            a.swap(piv, col);
            inv.swap(piv, col);
            det = -det;
        }
        let p = a[col][col];
        det *= p;
        let ip = T::one() / p;
        for c in 0..n {
            a[col][c] *= ip;
            inv[col][c] *= ip;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r][col];
            if f == T::zero() {
                continue;
            }
            for c in 0..n {
                a[r][c] -= f * a[col][c];
                inv[r][c] -= f * inv[col][c];
            }
        }
    }
    Some((inv, det))
}

/// Barycentric coordinates of `p` with respect to `s`.
///
/// Entries sum to one and reproduce `p`; they go negative outside `s`.
pub fn simplex_bary<T: Real>(p: &[T], s: &Simplex, cage: &Cage<T>) -> Result<Vec<T>> {
    Ok(SimplexFrame::new(s, cage)?.bary(p))
}

/// Closed containment with tolerance; degenerate simplices contain nothing.
pub fn contains<T: Real>(p: &[T], s: &Simplex, cage: &Cage<T>, tol: T) -> bool {
    SimplexFrame::new(s, cage).map(|f| f.contains(p, tol)).unwrap_or(false)
}

/// Signed Euclidean distance from `p` to the boundary of `s`.
pub fn signed_distance_to_boundary<T: Real>(p: &[T], s: &Simplex, cage: &Cage<T>) -> Result<T> {
    Ok(SimplexFrame::new(s, cage)?.signed_distance(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tri_cage(pts: [[f64; 2]; 3]) -> Cage<f64> {
        Cage::new(2, pts.iter().flatten().copied().collect(), vec![vec![0, 1], vec![1, 2], vec![2, 0]]).unwrap()
    }

    fn tri() -> Simplex {
        Simplex::new(vec![0, 1, 2])
    }

    #[test]
    fn vertex_and_centroid_coordinates() {
        let cage = tri_cage([[0.1, 0.2], [0.9, 0.3], [0.4, 0.8]]);
        let l = simplex_bary(&[0.9, 0.3], &tri(), &cage).unwrap();
        assert!((l[0]).abs() < 1e-14 && (l[1] - 1.0).abs() < 1e-14 && l[2].abs() < 1e-14);
        let c = [(0.1 + 0.9 + 0.4) / 3.0, (0.2 + 0.3 + 0.8) / 3.0];
        let l = simplex_bary(&c, &tri(), &cage).unwrap();
        for x in l {
            assert!((x - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_simplex_is_rejected() {
        let cage = tri_cage([[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]]);
        assert!(matches!(simplex_bary(&[0.2, 0.2], &tri(), &cage), Err(Error::DegenerateSimplex(_))));
        assert!(!contains(&[0.5, 0.5], &tri(), &cage, 1e-9));
    }

    #[test]
    fn containment_of_centroid_reflection_and_edge_midpoint() {
        let cage = tri_cage([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!(contains(&[1.0 / 3.0, 1.0 / 3.0], &tri(), &cage, 1e-9));
        // centroid reflected through the hypotenuse midpoint
        assert!(!contains(&[2.0 / 3.0, 2.0 / 3.0], &tri(), &cage, 1e-9));
        assert!(contains(&[0.5, 0.5], &tri(), &cage, 1e-9));
        assert!(contains(&[0.5, 0.0], &tri(), &cage, 1e-9));
    }

    #[test]
    fn signed_distance_matches_inradius_and_vanishes_on_boundary() {
        let h = 3f64.sqrt() / 2.0;
        let cage = tri_cage([[0.0, 0.0], [1.0, 0.0], [0.5, h]]);
        let c = [0.5, h / 3.0];
        let d = signed_distance_to_boundary(&c, &tri(), &cage).unwrap();
        assert!((d - 1.0 / (2.0 * 3f64.sqrt())).abs() < 1e-14);
        assert!(signed_distance_to_boundary(&[0.25, 0.0], &tri(), &cage).unwrap().abs() < 1e-14);
        assert!(signed_distance_to_boundary(&[1.0, 0.0], &tri(), &cage).unwrap().abs() < 1e-14);
        // beyond the right vertex the nearest feature is the vertex itself
        let d = signed_distance_to_boundary(&[2.0, 0.0], &tri(), &cage).unwrap();
        assert!((d + 1.0).abs() < 1e-14);
        let d = signed_distance_to_boundary(&[0.5, -0.25], &tri(), &cage).unwrap();
        assert!((d + 0.25).abs() < 1e-14);
    }

    #[test]
    fn tetrahedron_frame() {
        let pts: Vec<[f64; 3]> = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let f = SimplexFrame::from_points(&[0, 1, 2, 3], &refs, 1.0).unwrap();
        let l = f.bary(&[0.1, 0.2, 0.3]);
        assert!((l[0] - 0.4).abs() < 1e-14 && (l[3] - 0.3).abs() < 1e-14);
        assert!((f.volume() - 1.0 / 6.0).abs() < 1e-14);
        assert!((f.altitude(0) - 1.0 / 3f64.sqrt()).abs() < 1e-14);
        assert!((f.signed_distance(&[0.0, 0.0, -0.5]) + 0.5).abs() < 1e-14);
        assert!((f.signed_distance(&[0.1, 0.1, 0.1]) - 0.1).abs() < 1e-14);
    }

    fn rand_triangle() -> impl Strategy<Value = [[f64; 2]; 3]> {
        prop::array::uniform3(prop::array::uniform2(-1.0f64..1.0))
    }

    proptest! {
        #[test]
        fn bary_reconstructs_point(t in rand_triangle(), p in prop::array::uniform2(-2.0f64..2.0)) {
            let cage = tri_cage(t);
            if let Ok(f) = SimplexFrame::new(&tri(), &cage) {
                let vol = f.volume();
                prop_assume!(vol > 1e-3);
                let l = f.bary(&p);
                let s: f64 = l.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-10);
                for c in 0..2 {
                    let r: f64 = (0..3).map(|k| l[k] * t[k][c]).sum();
                    prop_assert!((r - p[c]).abs() < 1e-8);
                }
            }
        }

        #[test]
        fn containment_invariant_under_rigid_motion(
            t in rand_triangle(),
            p in prop::array::uniform2(-1.0f64..1.0),
            angle in 0.0f64..std::f64::consts::TAU,
            shift in prop::array::uniform2(-3.0f64..3.0),
        ) {
            let cage = tri_cage(t);
            let Ok(f) = SimplexFrame::new(&tri(), &cage) else { return Ok(()) };
            prop_assume!(f.volume() > 1e-3);
            let d = f.signed_distance(&p);
            prop_assume!(d.abs() > 1e-7);
            let (s, c) = angle.sin_cos();
            let mv = |q: [f64; 2]| [c * q[0] - s * q[1] + shift[0], s * q[0] + c * q[1] + shift[1]];
            let moved = tri_cage([mv(t[0]), mv(t[1]), mv(t[2])]);
            let g = SimplexFrame::new(&tri(), &moved).unwrap();
            prop_assert_eq!(f.contains(&p, 1e-9), g.contains(&mv(p), 1e-9));
            prop_assert!((g.signed_distance(&mv(p)) - d).abs() < 1e-9);
            // sign agrees with containment away from the boundary
            prop_assert_eq!(d > 0.0, f.contains(&p, 1e-9));
        }
    }
}
