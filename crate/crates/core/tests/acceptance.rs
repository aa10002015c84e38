//! Acceptance suite: one test per headline criterion, each printing a
//! `PASS`/`FAIL` line with the measured values before asserting.

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vbc_core::deform::arap::{arap_vertex_energy, arap_vertex_sample, deformed_mesh};
use vbc_core::deform::{arap_energy, arap_finetune, arap_sample, deform_points, fit_rotations, inverse_solve, ArapConfig, InverseConfig};
use vbc_core::energies::{loss_and_grad, ramp_factor, tv_loss, FDConfig, LossKind, MollifierParams};
use vbc_core::geometry::{sample_inside, shapes, Cage, InteriorMesh, Simplex, SimplexFrame};
use vbc_core::neural_field::{CoordinateField, FieldConfig, HashGridConfig};
use vbc_core::oracle::{analytic_simplex_tv, check_constraints, universality_check};
use vbc_core::simplex_enum::{binomial, enumerate_all, prune, prune_with_stats, PruningConfig};
use vbc_core::training::{train, TrainConfig};
use vbc_core::{Field32, Mesh32};

fn report(name: &str, ok: bool, detail: String) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
}

fn random_field<T: vbc_core::Real>(cage: Cage<T>, seed: u64) -> CoordinateField<T> {
    let vss = prune(&cage, &PruningConfig::defaults_2d(), None).unwrap();
    CoordinateField::random(cage, vss, FieldConfig::default(), seed).unwrap()
}

/// Points inside `cage` within `radius` of vertex `v`.
fn points_near_vertex(cage: &Cage<f64>, v: usize, radius: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let c = cage.vertex(v).to_vec();
    let mut out = Vec::with_capacity(2 * n);
    while out.len() < 2 * n {
        let (a, t): (f64, f64) = (rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..1.0));
        let p = [c[0] + radius * t.sqrt() * a.cos(), c[1] + radius * t.sqrt() * a.sin()];
        if cage.is_inside(&p) && cage.boundary_distance(&p) > 0.0 {
            out.extend_from_slice(&p);
        }
    }
    out
}

#[test]
fn constraint_suite() {
    let start = Instant::now();
    let cages: [(&str, Cage<f64>); 3] =
        [("triangle", shapes::triangle()), ("hexagon", shapes::regular_polygon(6)), ("star12", shapes::star12())];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut all_ok = true;
    for (seed, (name, cage)) in cages.iter().enumerate() {
        let field = random_field(cage.clone(), seed as u64 + 1);
        let pts = sample_inside(cage, 10_000, &mut rng).unwrap();
        let alpha = field.evaluate_batch(&pts).unwrap();
        let rep = check_constraints(cage, &pts, &alpha).unwrap();
        let ok = rep.satisfies(1e-7, 1e-6, 1e-5);
        // the f32 evaluator must meet the same bounds
        let field32 = field.cast::<f32>();
        let pts32: Vec<f32> = pts.iter().map(|&x| x as f32).collect();
        let a32 = field32.evaluate_batch(&pts32).unwrap();
        let rep32 = check_constraints(&cage.cast::<f32>(), &pts32, &a32).unwrap();
        let ok32 = rep32.satisfies(1e-7, 1e-6, 1e-5);
        let mut lagrange_min = f64::INFINITY;
        for v in 0..cage.num_vertices() {
            let near = points_near_vertex(cage, v, 1e-4, 50, &mut rng);
            let a = field.evaluate_batch(&near).unwrap();
            for row in a.chunks(cage.num_vertices()) {
                lagrange_min = lagrange_min.min(row[v]);
            }
        }
        let lag_ok = lagrange_min >= 0.999;
        report(
            &format!("constraints/{name}"),
            ok && ok32 && lag_ok,
            format!(
                "f64 min {:.2e} pou {:.2e} repro {:.2e}; f32 min {:.2e} pou {:.2e} repro {:.2e}; lagrange min {lagrange_min:.6}",
                rep.min_coordinate,
                rep.partition_error,
                rep.reproduction_error,
                rep32.min_coordinate,
                rep32.partition_error,
                rep32.reproduction_error
            ),
        );
        all_ok &= ok && ok32 && lag_ok;
    }
    let secs = start.elapsed().as_secs_f64();
    report("constraints/runtime", secs < 60.0, format!("{secs:.1} s"));
    assert!(all_ok && secs < 60.0);
}

#[test]
fn combinatorics() {
    let star = shapes::star12::<f64>();
    let (candidates, _) = enumerate_all(&star);
    let cfg = PruningConfig::defaults_2d();
    let (vss, stats) = prune_with_stats(&star, &cfg, None).unwrap();
    let k34 = binomial(34, 3);
    let bound = star.num_vertices() * cfg.max_per_vertex;
    let ok = candidates == 220 && binomial(12, 3) == 220 && k34 == 5984 && vss.len() <= bound;
    report(
        "combinatorics",
        ok,
        format!("K=12 -> {candidates}, K=34 -> {k34}, star used {} <= {bound} (interior {})", vss.len(), stats.interior),
    );
    assert!(ok);
}

#[test]
fn universality() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut failures = 0;
    let mut checked = 0;
    for k in 3..=8 {
        let regular = shapes::regular_polygon::<f64>(k);
        let random = shapes::random_convex_polygon::<f64, _>(k, &mut rng);
        for cage in [regular, random] {
            let pts = sample_inside(&cage, 50, &mut rng).unwrap();
            for p in pts.chunks(2) {
                let rep = universality_check(p, &cage, 3, &mut rng).unwrap();
                checked += 1;
                if !rep.passed() {
                    failures += 1;
                }
            }
        }
    }
    report("universality", failures == 0, format!("{checked} points on 12 convex cages, {failures} failures"));
    assert_eq!(failures, 0);
}

/// Two-segment 1D construction: `f1` on `[0, x0]`, `f2` on `[x0, 1]`, each
/// indicator replaced by its ramp and the masses renormalized.
fn blend_1d(x: f64, x0: f64, f: [f64; 2], r: f64, delta: f64) -> f64 {
    let d1 = (x0 - x).min(x);
    let d2 = (x - x0).min(1.0 - x);
    let (m1, m2) = (ramp_factor(d1, r, delta), ramp_factor(d2, r, delta));
    (m1 * f[0] + m2 * f[1]) / (m1 + m2)
}

#[test]
fn mollified_tv_fidelity() {
    let (r, x0, f): (f64, f64, [f64; 2]) = (5e-3, 0.5, [0.2, 1.0]);
    let h = r / 2.0;
    let jump = (f[1] - f[0]).abs();
    let n = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (lo, hi) = (r + h, 1.0 - r - h);
    let xs: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    let mut errs = Vec::new();
    let mut estimates = Vec::new();
    for delta in [300.0, 1000.0, 3000.0] {
        let vals: Vec<f64> =
            xs.iter().map(|&x| (blend_1d(x + h, x0, f, r, delta) - blend_1d(x - h, x0, f, r, delta)).abs() / (2.0 * h)).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let est = (hi - lo) * mean;
        let sigma = (hi - lo) * (var / n as f64).sqrt();
        estimates.push((delta, est, sigma));
        errs.push(((est - jump).abs(), sigma));
    }
    let (_, est3000, _) = estimates[2];
    let rel = (est3000 - jump).abs() / jump;
    let monotone = errs.windows(2).all(|w| w[1].0 <= w[0].0 + 3.0 * w[0].1.max(w[1].1));
    report("mollified_tv/1d_jump", rel <= 0.05 && monotone, format!("|jump| {jump}; estimates {estimates:?}; rel err at 3000 {rel:.4}"));

    let cage = shapes::triangle::<f64>();
    let field = random_field(cage.clone(), 3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let batch = sample_inside(&cage, 20_000, &mut rng).unwrap();
    let moll = MollifierParams::defaults_2d();
    let tv = tv_loss(&field, &batch, &FDConfig::default(), &moll).unwrap();
    let frame = SimplexFrame::new(&Simplex::new(vec![0, 1, 2]), &cage).unwrap();
    let oracle = analytic_simplex_tv(&frame);
    let rel_tri = (tv - oracle).abs() / oracle;
    report("mollified_tv/triangle", rel_tri <= 0.02, format!("estimate {tv:.6} vs sum Area/h_i {oracle:.6} ({rel_tri:.2e})"));
    assert!(rel <= 0.05 && monotone && rel_tri <= 0.02);
}

#[test]
fn training_descent() {
    let cage = shapes::star12::<f32>();
    let cfg = TrainConfig::defaults_2d();
    // determinism on a short prefix of the same configuration
    let short = TrainConfig { steps: 5, checkpoint_every: 5, ..cfg.clone() };
    let mut a = random_field(cage.clone(), 0);
    let mut b = random_field(cage.clone(), 0);
    let (ra, rb) = (train(&mut a, &short).unwrap(), train(&mut b, &short).unwrap());
    let same_history = ra.history.iter().map(|r| r.loss.to_bits()).eq(rb.history.iter().map(|r| r.loss.to_bits()));
    let deterministic = same_history && a.params.data() == b.params.data();

    let mut field = random_field(cage.clone(), 0);
    let start = Instant::now();
    let rep = train(&mut field, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let (init, fin) = (rep.initial_heldout().unwrap(), rep.final_heldout().unwrap());
    let ratio = fin / init;
    let pairs: Vec<bool> = rep.checkpoints.windows(2).map(|w| w[1].heldout_loss <= w[0].heldout_loss).collect();
    let monotone = pairs.iter().filter(|&&x| x).count() as f64 / pairs.len() as f64;
    let curve: Vec<String> = rep.checkpoints.iter().map(|c| format!("{}:{:.4}", c.step, c.heldout_loss)).collect();
    // trained evaluator keeps every constraint
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pts = sample_inside(&cage, 2000, &mut rng).unwrap();
    let valid = check_constraints(&cage, &pts, &field.evaluate_batch(&pts).unwrap()).unwrap().satisfies(1e-7, 1e-6, 1e-5);
    report("training/deterministic", deterministic, format!("histories identical: {same_history}"));
    report("training/runtime", secs <= 900.0, format!("{secs:.0} s for {} steps", cfg.steps));
    report("training/checkpoint_descent", monotone >= 0.9, format!("{:.0}% of checkpoint pairs non-increasing", 100.0 * monotone));
    report("training/constraints_after", valid, "post-training constraint check".into());
    report("training/half_loss", ratio < 0.5, format!("held-out {init:.4} -> {fin:.4}, ratio {ratio:.3}; curve {}", curve.join(" ")));
    assert!(deterministic && secs <= 900.0 && valid);
    assert!(ratio < 0.5 && monotone >= 0.9, "held-out loss ratio {ratio}, checkpoint descent {monotone}");
}

/// Bar cage, interior grid and the 90-degree bend used by the deformation
/// criteria.
struct BarScene {
    field: Field32,
    mesh: Mesh32,
}

const BAR_HEIGHT: f64 = 0.25;

fn bend(p: &[f64], angle: f64) -> [f64; 2] {
    // centreline y = h/2 maps to an arc of the same length
    let mid = BAR_HEIGHT / 2.0;
    let radius = 1.0 / angle;
    let theta = p[0] * angle;
    let rho = radius + mid - p[1];
    [rho * theta.sin(), mid + radius - rho * theta.cos()]
}

fn bar_scene() -> &'static BarScene {
    static SCENE: OnceLock<BarScene> = OnceLock::new();
    SCENE.get_or_init(|| {
        let cage = shapes::bar::<f32>(4, 4.0);
        let mesh = InteriorMesh::<f64>::grid([0.01, 0.01], [0.99, BAR_HEIGHT - 0.01], 40, 10).cast::<f32>();
        let vss = prune(&cage, &PruningConfig::defaults_2d(), Some(mesh.coords())).unwrap();
        let mut field = CoordinateField::random(cage, vss, FieldConfig::default(), 7).unwrap();
        let cfg = TrainConfig {
            steps: 300,
            batch_size: 1000,
            loss: LossKind::weighted_default(),
            heldout_size: 1000,
            ..TrainConfig::defaults_2d()
        };
        train(&mut field, &cfg).unwrap();
        BarScene { field, mesh }
    })
}

fn bent_cage(cage: &Cage<f32>, angle: f64) -> Vec<f32> {
    cage.coords().chunks(2).flat_map(|p| bend(&[p[0] as f64, p[1] as f64], angle).map(|x| x as f32)).collect()
}

#[test]
fn arap_finetuning() {
    let scene = bar_scene();
    let mut field = scene.field.clone();
    let target = bent_cage(field.cage(), std::f64::consts::FRAC_PI_2);
    let cfg = ArapConfig::default();
    let start = Instant::now();
    let rep = arap_finetune(&mut field, &scene.mesh, &target, &cfg).unwrap();
    let ok = rep.energy_after < rep.energy_before;
    report(
        "arap/bent_bar",
        ok,
        format!(
            "energy {:.6e} -> {:.6e} after {} steps ({:.0} s)",
            rep.energy_before,
            rep.energy_after,
            cfg.steps,
            start.elapsed().as_secs_f64()
        ),
    );

    // estimator vs exhaustive sums, in f64 on the weighted-TV deformation
    let mesh = scene.mesh.cast::<f64>();
    let f64_field = scene.field.cast::<f64>();
    let verts: Vec<f64> = target.iter().map(|&x| x as f64).collect();
    let phi = deformed_mesh(&f64_field, &mesh, &verts).unwrap();
    let (rots, _) = fit_rotations(&mesh, &phi);
    let exact = arap_energy(&mesh, &phi, &rots);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let draws = 100_000;
    let mean = (0..draws).map(|_| arap_sample(&mesh, &phi, &rots, &mut rng)).sum::<f64>() / draws as f64;
    let rel = (mean - exact).abs() / exact;
    let mut worst_vertex = 0.0f64;
    for i in [0, 17, 205, mesh.num_vertices() - 1] {
        let e = arap_vertex_energy(&mesh, &phi, &rots, i);
        let m = (0..draws).map(|_| arap_vertex_sample(&mesh, &phi, &rots, i, &mut rng)).sum::<f64>() / draws as f64;
        worst_vertex = worst_vertex.max((m - e).abs() / e);
    }
    let est_ok = rel <= 0.01 && worst_vertex <= 0.01;
    report(
        "arap/estimator",
        est_ok,
        format!("mean of {draws} draws {mean:.6e} vs exhaustive {exact:.6e} ({rel:.2e}); worst per-vertex {worst_vertex:.2e}"),
    );
    assert!(ok && est_ok);
}

#[test]
fn inverse_solve_recovery() {
    let scene = bar_scene();
    let angle = std::f64::consts::FRAC_PI_6;
    let mut known = bent_cage(scene.field.cage(), angle);
    // plus a global similarity so both stages have work to do
    let (c, s) = (0.3f32.cos(), 0.3f32.sin());
    for p in known.chunks_mut(2) {
        let (x, y) = (p[0], p[1]);
        p[0] = 0.9 * (c * x - s * y) + 0.05;
        p[1] = 0.9 * (s * x + c * y) - 0.02;
    }
    let target_coords =
        deform_points(&scene.field.evaluate_batch(scene.mesh.coords()).unwrap(), scene.field.num_cage_vertices(), &known, 2);
    let target = scene.mesh.with_coords(target_coords).unwrap();
    let cfg = InverseConfig::default();
    let mut field = scene.field.clone();
    let start = Instant::now();
    let rep = inverse_solve(&mut field, &scene.mesh, &target, &cfg).unwrap();
    let ok = rep.rms_error < 1e-3;
    report("inverse/known_cage", ok, format!("rms {:.3e} ({:.0} s)", rep.rms_error, start.elapsed().as_secs_f64()));

    // analytic bend of the mesh itself: joint vs cage-only on the same budget
    let bent: Vec<f32> = scene
        .mesh
        .coords()
        .chunks(2)
        .flat_map(|p| bend(&[p[0] as f64, p[1] as f64], std::f64::consts::FRAC_PI_2).map(|x| x as f32))
        .collect();
    let target = scene.mesh.with_coords(bent).unwrap();
    let mut joint_field = scene.field.clone();
    let joint = inverse_solve(&mut joint_field, &scene.mesh, &target, &cfg).unwrap();
    let mut cage_field = scene.field.clone();
    let cage_only = inverse_solve(&mut cage_field, &scene.mesh, &target, &InverseConfig { optimize_field: false, ..cfg.clone() }).unwrap();
    let mean = |e: &[f64]| e.iter().sum::<f64>() / e.len() as f64;
    let (ej, ec) = (mean(&joint.vertex_errors), mean(&cage_only.vertex_errors));
    let joint_ok = ej <= ec;
    report("inverse/joint_vs_cage_only", joint_ok, format!("mean abs error joint {ej:.4e} vs cage-only {ec:.4e}"));
    assert!(ok && joint_ok);
}

#[test]
fn gradient_check() {
    let cage = shapes::star12::<f64>();
    let cfg = FieldConfig {
        encoding: HashGridConfig { levels: 8, features_per_level: 2, log2_table_size: 12, base_resolution: 4, growth_factor: 1.5 },
        hidden_layers: 3,
        hidden_width: 32,
        leaky_relu_slope: 0.01,
    };
    let vss = prune(&cage, &PruningConfig::defaults_2d(), None).unwrap();
    let mut field = CoordinateField::random(cage.clone(), vss, cfg, 13).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let batch = sample_inside(&cage, 64, &mut rng).unwrap();
    let moll = MollifierParams::defaults_2d();
    let fd = FDConfig::default();
    let mut worst = 0.0f64;
    let mut nonzero = 0;
    for kind in [LossKind::Tv, LossKind::weighted_default(), LossKind::Dirichlet] {
        let (_, g) = loss_and_grad(&field, &batch, kind, &fd, &moll, true).unwrap();
        let g = g.unwrap();
        // half the probes on parameters the batch actually touches
        let touched: Vec<usize> = (0..g.len()).filter(|&i| g[i] != 0.0).collect();
        let probes: Vec<usize> =
            (0..34).map(|n| if n % 2 == 0 { touched[rng.random_range(0..touched.len())] } else { rng.random_range(0..g.len()) }).collect();
        for idx in probes {
            let orig = field.params.data()[idx];
            let step = 1e-4 * orig.abs().max(1.0);
            let mut loss_at = |v: f64| {
                field.params.data_mut()[idx] = v;
                loss_and_grad(&field, &batch, kind, &fd, &moll, false).unwrap().0.loss
            };
            let fdv = (loss_at(orig + step) - loss_at(orig - step)) / (2.0 * step);
            field.params.data_mut()[idx] = orig;
            // relative error with an absolute floor far above the FD noise
            let rel = (fdv - g[idx]).abs() / fdv.abs().max(g[idx].abs()).max(1e-6);
            if g[idx] != 0.0 {
                nonzero += 1;
            }
            if rel > 1e-4 {
                println!("  probe {kind:?} #{idx}: backprop {:.6e} fd {fdv:.6e} rel {rel:.2e}", g[idx]);
            }
            worst = worst.max(rel);
        }
    }
    let ok = worst <= 1e-3;
    report("gradient_check", ok, format!("102 coordinates ({nonzero} non-zero), worst relative error {worst:.2e}"));
    assert!(ok);
}
