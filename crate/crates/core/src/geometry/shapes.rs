//! Procedural cages used by the CLI fixtures and the test suites. Every
//! constructor returns a cage already normalized to the unit box.

use std::f64::consts::PI;

use rand::Rng;

use super::Cage;
use crate::Real;

fn polygon<T: Real>(pts: &[[f64; 2]]) -> Cage<T> {
    let k = pts.len();
    let coords = pts.iter().flat_map(|p| [T::lit(p[0]), T::lit(p[1])]).collect();
    let facets = (0..k).map(|i| vec![i, (i + 1) % k]).collect();
    Cage::new(2, coords, facets).expect("valid polygon").normalized().0
}

pub fn triangle<T: Real>() -> Cage<T> {
    polygon(&[[0.0, 0.0], [1.0, 0.1], [0.35, 0.9]])
}

pub fn unit_square<T: Real>() -> Cage<T> {
    polygon(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
}

/// Counter-clockwise regular polygon with `k` vertices.
pub fn regular_polygon<T: Real>(k: usize) -> Cage<T> {
    let pts: Vec<[f64; 2]> = (0..k)
        .map(|i| {
            let a = PI / 2.0 + 2.0 * PI * i as f64 / k as f64;
            [a.cos(), a.sin()]
        })
        .collect();
    polygon(&pts)
}

/// Star with `points` tips and `2 * points` vertices; `inner` is the ratio of
/// the inner to the outer radius.
pub fn star<T: Real>(points: usize, inner: f64) -> Cage<T> {
    let pts: Vec<[f64; 2]> = (0..2 * points)
        .map(|i| {
            let r = if i % 2 == 0 { 1.0 } else { inner };
            let a = PI / 2.0 + PI * i as f64 / points as f64;
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    polygon(&pts)
}

/// The 12-vertex six-pointed star used as the concave reference cage.
pub fn star12<T: Real>() -> Cage<T> {
    star(6, 0.5)
}

/// L-shaped hexagon with its reflex corner at `(1, 1)`.
pub fn l_shape<T: Real>() -> Cage<T> {
    polygon(&[[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]])
}

/// Axis-aligned bar `length x 1` with `segments + 1` vertices on each long side.
pub fn bar<T: Real>(segments: usize, length: f64) -> Cage<T> {
    let mut pts = Vec::new();
    for i in 0..=segments {
        pts.push([length * i as f64 / segments as f64, 0.0]);
    }
    for i in (0..=segments).rev() {
        pts.push([length * i as f64 / segments as f64, 1.0]);
    }
    polygon(&pts)
}

/// Random convex polygon: sorted random angles on a jittered circle.
pub fn random_convex_polygon<T: Real, R: Rng>(k: usize, rng: &mut R) -> Cage<T> {
    loop {
        let mut angles: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let gaps_ok = (0..k).all(|i| {
            let next = if i + 1 < k { angles[i + 1] } else { angles[0] + 2.0 * PI };
            let gap = next - angles[i];
            gap > 0.15 && gap < PI - 0.15
        });
        if !gaps_ok {
            continue;
        }
        let pts: Vec<[f64; 2]> = angles.iter().map(|a| [a.cos(), a.sin()]).collect();
        return polygon(&pts);
    }
}

fn polyhedron<T: Real>(pts: &[[f64; 3]], tris: &[[usize; 3]]) -> Cage<T> {
    let coords = pts.iter().flat_map(|p| p.iter().map(|&x| T::lit(x))).collect();
    let facets = tris.iter().map(|t| t.to_vec()).collect();
    Cage::new(3, coords, facets).expect("valid polyhedron").normalized().0
}

pub fn unit_cube<T: Real>() -> Cage<T> {
    let pts = [
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [1.0, 1.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 1.0],
        [1.0, 1.0, 1.0],
        [0.0, 1.0, 1.0],
    ];
    let tris = [
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    polyhedron(&pts, &tris)
}

pub fn tetrahedron<T: Real>() -> Cage<T> {
    let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.2, 1.0, 0.0], [0.3, 0.3, 0.9]];
    let tris = [[0, 2, 1], [0, 1, 3], [1, 2, 3], [2, 0, 3]];
    polyhedron(&pts, &tris)
}

pub fn octahedron<T: Real>() -> Cage<T> {
    let pts = [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0]];
    let tris = [[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4], [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]];
    polyhedron(&pts, &tris)
}
