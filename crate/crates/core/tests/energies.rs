use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vbc_core::energies::{
    dirichlet_loss, loss_and_grad, tv_loss, weighted_tv_loss, FDConfig, LossKind, MollifierParams, WeightingFunction,
};
use vbc_core::geometry::{sample_inside, shapes, Cage, SimplexFrame};
use vbc_core::neural_field::{CoordinateField, FieldConfig, HashGridConfig};
use vbc_core::simplex_enum::{prune, PruningConfig};
use vbc_core::training::{train, TrainConfig};
use vbc_core::Error;

fn tiny() -> FieldConfig {
    FieldConfig {
        encoding: HashGridConfig { levels: 4, features_per_level: 2, log2_table_size: 10, base_resolution: 4, growth_factor: 1.5 },
        hidden_layers: 2,
        hidden_width: 16,
        leaky_relu_slope: 0.01,
    }
}

fn field_on(cage: Cage<f64>, seed: u64) -> CoordinateField<f64> {
    let vss = prune(&cage, &PruningConfig::defaults_2d(), None).unwrap();
    CoordinateField::random(cage, vss, tiny(), seed).unwrap()
}

fn scalene() -> Cage<f64> {
    Cage::new(2, vec![0.0, 0.0, 1.0, 0.0, 0.3, 0.9], vec![vec![0, 1], vec![1, 2], vec![2, 0]]).unwrap()
}

fn small_train(steps: usize) -> TrainConfig {
    TrainConfig { steps, batch_size: 128, heldout_size: 128, checkpoint_every: 2, ..TrainConfig::defaults_2d() }
}

#[test]
fn weighted_tv_with_unit_constant_is_tv_bitwise() {
    let field = field_on(shapes::star12::<f64>(), 2);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let batch = sample_inside(field.cage(), 256, &mut rng).unwrap();
    let (fd, moll) = (FDConfig::default(), MollifierParams::defaults_2d());
    let tv = tv_loss(&field, &batch, &fd, &moll).unwrap();
    let wtv = weighted_tv_loss(&field, &batch, &fd, &moll, &WeightingFunction { c: 1.0 }).unwrap();
    assert_eq!(tv.to_bits(), wtv.to_bits());
}

#[test]
fn losses_are_permutation_invariant_finite_and_nonnegative() {
    let field = field_on(shapes::l_shape::<f64>(), 4);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch = sample_inside(field.cage(), 200, &mut rng).unwrap();
    let mut reversed: Vec<f64> = batch.chunks(2).rev().flatten().copied().collect();
    reversed.rotate_left(2 * 17);
    let (fd, moll) = (FDConfig::default(), MollifierParams::defaults_2d());
    for kind in [LossKind::Tv, LossKind::weighted_default(), LossKind::Dirichlet] {
        let a = loss_and_grad(&field, &batch, kind, &fd, &moll, false).unwrap().0.loss;
        let b = loss_and_grad(&field, &reversed, kind, &fd, &moll, false).unwrap().0.loss;
        assert!(a.is_finite() && a >= 0.0, "{kind:?}: {a}");
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{kind:?}: {a} vs {b}");
    }
}

#[test]
fn triangle_dirichlet_matches_area_over_squared_altitudes() {
    let cage = scalene();
    let field = field_on(cage.clone(), 5);
    let frame = SimplexFrame::from_points(&[0, 1, 2], &[cage.vertex(0), cage.vertex(1), cage.vertex(2)], 1.0).unwrap();
    let want: f64 = (0..3).map(|i| frame.volume() / frame.altitude(i).powi(2)).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch = sample_inside(&cage, 400, &mut rng).unwrap();
    let got = dirichlet_loss(&field, &batch, &FDConfig::default(), &MollifierParams::defaults_2d()).unwrap();
    assert!((got - want).abs() < 1e-8 * want, "{got} vs {want}");
}

/// P1 finite-element Dirichlet energy of the evaluated coordinates on a
/// subdivision of the cage.
fn fem_dirichlet(field: &CoordinateField<f64>, n: usize) -> f64 {
    let cage = field.cage();
    let (a, b, c) = (cage.vertex(0), cage.vertex(1), cage.vertex(2));
    let node = |i: usize, j: usize| -> Vec<f64> {
        let (u, v) = (i as f64 / n as f64, j as f64 / n as f64);
        // stay a hair inside so every node is covered
        let (u, v) = (1e-9 + u * (1.0 - 3e-9), 1e-9 + v * (1.0 - 3e-9));
        (0..2).map(|x| (1.0 - u - v) * a[x] + u * b[x] + v * c[x]).collect()
    };
    let mut tris = Vec::new();
    for i in 0..n {
        for j in 0..n - i {
            tris.push([(i, j), (i + 1, j), (i, j + 1)]);
            if j + 1 < n - i {
                tris.push([(i + 1, j), (i + 1, j + 1), (i, j + 1)]);
            }
        }
    }
    let mut energy = 0.0;
    for t in tris {
        let p: Vec<Vec<f64>> = t.iter().map(|&(i, j)| node(i, j)).collect();
        let vals: Vec<Vec<f64>> = p.iter().map(|q| field.evaluate(q).unwrap()).collect();
        let (e1, e2) = ([p[1][0] - p[0][0], p[1][1] - p[0][1]], [p[2][0] - p[0][0], p[2][1] - p[0][1]]);
        let det = e1[0] * e2[1] - e1[1] * e2[0];
        let area = det.abs() / 2.0;
        for k in 0..3 {
            let (d1, d2) = (vals[1][k] - vals[0][k], vals[2][k] - vals[0][k]);
            // solve [e1; e2] g = [d1; d2]
            let g = [(d1 * e2[1] - d2 * e1[1]) / det, (e1[0] * d2 - e2[0] * d1) / det];
            energy += area * (g[0] * g[0] + g[1] * g[1]);
        }
    }
    energy
}

#[test]
fn dirichlet_estimate_matches_fem_assembly() {
    // one simplex, so the distribution is constant over the whole region
    let field = field_on(scalene(), 6);
    let fem = fem_dirichlet(&field, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let batch = sample_inside(field.cage(), 500, &mut rng).unwrap();
    let mc = dirichlet_loss(&field, &batch, &FDConfig::default(), &MollifierParams::defaults_2d()).unwrap();
    assert!((mc - fem).abs() < 0.02 * fem, "{mc} vs {fem}");
}

#[test]
fn zero_steps_leave_params_bitwise() {
    let mut field = field_on(shapes::unit_square::<f64>(), 7);
    let before = field.params.data().to_vec();
    let rep = train(&mut field, &small_train(0)).unwrap();
    assert!(rep.history.is_empty());
    assert_eq!(field.params.data(), &before[..]);
}

#[test]
fn same_seed_gives_identical_history() {
    let run = || {
        let mut field = field_on(shapes::l_shape::<f64>(), 8).cast::<f32>();
        let rep = train(&mut field, &small_train(4)).unwrap();
        (rep.history.iter().map(|r| (r.step, r.loss.to_bits())).collect::<Vec<_>>(), field.params.data().to_vec())
    };
    let (a, pa) = run();
    let (b, pb) = run();
    assert_eq!(a.len(), 4);
    assert_eq!(a, b);
    assert_eq!(pa, pb);
}

#[test]
fn blow_up_is_divergence_and_restores_the_last_checkpoint() {
    let mut field = field_on(shapes::unit_square::<f64>(), 9);
    let before = field.params.data().to_vec();
    let cfg = TrainConfig { learning_rate: 1e300, checkpoint_every: 1000, ..small_train(5) };
    let err = train(&mut field, &cfg).unwrap_err();
    assert!(matches!(err, Error::Diverged(_)), "{err}");
    assert_eq!(field.params.data(), &before[..]);
}
