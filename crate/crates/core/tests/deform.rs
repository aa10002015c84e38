use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vbc_core::deform::arap::arap_vertex_energy;
use vbc_core::deform::rotation::{exp, Mat};
use vbc_core::deform::{arap_energy, fit_rotations};
use vbc_core::geometry::InteriorMesh;

fn identity() -> Mat<f64> {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

fn mesh_2d() -> InteriorMesh<f64> {
    InteriorMesh::grid([0.1, 0.2], [0.9, 0.7], 6, 4)
}

/// The 2D grid lifted onto a gently curved surface.
fn mesh_3d() -> InteriorMesh<f64> {
    let m = mesh_2d();
    let coords = m.coords().chunks(2).flat_map(|p| [p[0], p[1], 0.2 * (3.0 * p[0]).sin() * p[1]]).collect();
    InteriorMesh::new(3, coords, m.triangles().to_vec()).unwrap()
}

#[test]
fn uniform_scale_matches_the_closed_form() {
    for mesh in [mesh_2d(), mesh_3d()] {
        let d = mesh.dim();
        let s = 1.7;
        let phi: Vec<f64> = mesh.coords().iter().enumerate().map(|(i, x)| s * x + 0.3 * (i % d) as f64).collect();
        let rots = vec![identity(); mesh.num_vertices()];
        let want: f64 = (0..mesh.num_vertices())
            .flat_map(|i| mesh.neighbors(i).iter().map(move |&j| (i, j)))
            .map(|(i, j)| {
                let (a, b) = (mesh.vertex(i), mesh.vertex(j));
                (s - 1.0).powi(2) * (0..d).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>()
            })
            .sum();
        let got = arap_energy(&mesh, &phi, &rots);
        assert!((got - want).abs() < 1e-12 * want, "{d}D: {got} vs {want}");
    }
}

#[test]
fn fitted_rotations_beat_random_rotations() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for mesh in [mesh_2d(), mesh_3d()] {
        let d = mesh.dim();
        let phi: Vec<f64> = mesh.coords().iter().map(|x| x + 0.03 * (rng.random::<f64>() - 0.5)).collect();
        let (fitted, fallbacks) = fit_rotations(&mesh, &phi);
        assert_eq!(fallbacks, 0);
        for i in 0..mesh.num_vertices() {
            let best = arap_vertex_energy(&mesh, &phi, &fitted, i);
            for _ in 0..100 {
                let w: Vec<f64> = (0..if d == 2 { 1 } else { 3 }).map(|_| rng.random_range(-3.2..3.2)).collect();
                let mut rots = fitted.clone();
                rots[i] = exp(d, &w);
                assert!(best <= arap_vertex_energy(&mesh, &phi, &rots, i) + 1e-15, "{d}D vertex {i}");
            }
        }
    }
}

#[test]
fn rigid_motion_is_recovered_exactly() {
    for mesh in [mesh_2d(), mesh_3d()] {
        let d = mesh.dim();
        let w: Vec<f64> = if d == 2 { vec![0.7] } else { vec![0.3, -0.5, 0.2] };
        let q = exp(d, &w);
        let phi: Vec<f64> = mesh
            .coords()
            .chunks(d)
            .flat_map(|p| (0..d).map(|a| (0..d).map(|b| q[a][b] * p[b]).sum::<f64>() + 0.5).collect::<Vec<_>>())
            .collect();
        let (fitted, _) = fit_rotations(&mesh, &phi);
        for r in &fitted {
            for a in 0..d {
                for b in 0..d {
                    assert!((r[a][b] - q[a][b]).abs() < 1e-10);
                }
            }
        }
        assert!(arap_energy(&mesh, &phi, &fitted) < 1e-20);
    }
}
