use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use vbc_core::deform::{
    apply_deformation, arap_finetune, deform_points, inverse_solve, write_vertex_errors_csv, ArapConfig, DeformedCage, InverseConfig,
};
use vbc_core::energies::{read_loss_csv, write_loss_csv, LossKind, MollifierParams, WeightingFunction};
use vbc_core::geometry::{points_to_obj, sample_inside, Cage, InteriorMesh, Normalization};
use vbc_core::neural_field::{load_params, save_params, BakedWeights, CoordinateField, FieldConfig};
use vbc_core::oracle::{check_constraints, feasibility_check, mean_value_coordinates, universality_check};
use vbc_core::simplex_enum::{enumerate_all, prune_with_stats, PruningConfig, VirtualSimplexSet};
use vbc_core::training::{train_with, TrainConfig};
use vbc_core::{Error, Real};

use crate::config::{manifest_path_for, ConfigFile, RunManifest};
use crate::{
    ArapArgs, BakeArgs, DeformArgs, FieldInputs, InverseArgs, LossArg, PruneArgs, ReportArgs, ReportFormat, TrainArgs, VerifyArgs,
};

/// Tolerance of every feasibility check the CLI performs.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// A constraint suite found violations.
#[derive(Debug)]
pub struct ConstraintFailure(pub String);

impl fmt::Display for ConstraintFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "constraint check failed: {}", self.0)
    }
}

impl std::error::Error for ConstraintFailure {}

/// 1 malformed input, 2 constraint failure, 3 divergence.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|c| c.is::<ConstraintFailure>()) {
        return 2;
    }
    if err.chain().any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Diverged(_)))) {
        return 3;
    }
    1
}

fn print_json(v: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Cage loaded in world coordinates and normalized into the unit box.
struct LoadedCage<T: Real> {
    cage: Cage<T>,
    norm: Normalization,
}

fn load_cage<T: Real>(path: &Path, manifest: &mut RunManifest) -> Result<LoadedCage<T>> {
    manifest.input("cage", path)?;
    let world = Cage::<T>::load(path).with_context(|| format!("loading cage {}", path.display()))?;
    let (cage, norm) = world.normalized();
    Ok(LoadedCage { cage, norm })
}

fn load_mesh<T: Real>(key: &str, path: &Path, dim: usize, norm: &Normalization, manifest: &mut RunManifest) -> Result<InteriorMesh<T>> {
    manifest.input(key, path)?;
    let mesh = InteriorMesh::<T>::load_obj(path, dim).with_context(|| format!("loading mesh {}", path.display()))?;
    Ok(mesh.transformed(norm))
}

fn load_simplices<T: Real>(path: &Path, cage: &Cage<T>, manifest: &mut RunManifest) -> Result<VirtualSimplexSet> {
    manifest.input("simplices", path)?;
    let vss = VirtualSimplexSet::load(path).with_context(|| format!("loading simplices {}", path.display()))?;
    vss.check_cage(cage)?;
    Ok(vss)
}

/// Cage, simplex set and checkpoint named by `inputs` (or the config file).
fn load_field<T: Real>(inputs: &FieldInputs, file: &ConfigFile, manifest: &mut RunManifest) -> Result<(CoordinateField<T>, Normalization)> {
    let loaded = load_cage::<T>(&file.require(inputs.cage.as_ref(), "cage")?, manifest)?;
    let vss = load_simplices(&file.require(inputs.simplices.as_ref(), "simplices")?, &loaded.cage, manifest)?;
    let ckpt = file.require(inputs.checkpoint.as_ref(), "checkpoint")?;
    manifest.input("checkpoint", &ckpt)?;
    let params = load_params::<T>(&ckpt, Some(&vss.hash())).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    let moll = MollifierParams::defaults_for(loaded.cage.dim());
    Ok((CoordinateField::new(loaded.cage, vss, params, moll)?, loaded.norm))
}

pub fn prune(a: &PruneArgs) -> Result<()> {
    let file = ConfigFile::load(a.config.as_deref())?;
    let cage_path = file.require(a.cage.as_ref(), "cage")?;
    let out = file.require(a.out.as_ref(), "out")?;
    let mut manifest = RunManifest::new("prune", 0);
    let loaded = load_cage::<f64>(&cage_path, &mut manifest)?;
    let mut cfg = file.settings(&PruningConfig::defaults_for(loaded.cage.dim()), None)?;
    if let Some(s) = a.seed {
        cfg.rng_seed = s;
    }
    cfg.validate()?;
    let interior = match file.path(a.mesh.as_ref(), "mesh")? {
        Some(p) => Some(load_mesh::<f64>("mesh", &p, loaded.cage.dim(), &loaded.norm, &mut manifest)?),
        None => None,
    };
    let (vss, stats) = prune_with_stats(&loaded.cage, &cfg, interior.as_ref().map(|m| m.coords()))?;
    vss.save(&out).with_context(|| format!("writing {}", out.display()))?;
    let (possible, _) = enumerate_all(&loaded.cage);
    let summary = json!({
        "cage_vertices": loaded.cage.num_vertices(),
        "candidates": possible,
        "interior": stats.interior,
        "after_per_vertex": stats.after_per_vertex,
        "used": stats.used,
        "simplex_set_hash": vss.hash(),
    });
    manifest.seed = cfg.rng_seed;
    manifest.settings(&cfg, None)?;
    manifest.output("out", &out);
    manifest.metrics = summary.clone();
    manifest.save(&a.manifest.clone().unwrap_or_else(|| manifest_path_for(&out)))?;
    print_json(&summary)
}

fn loss_kind(arg: LossArg, c: Option<f64>, current: LossKind) -> LossKind {
    match arg {
        LossArg::Tv => LossKind::Tv,
        LossArg::Dirichlet => LossKind::Dirichlet,
        LossArg::Wtv => {
            let base = match current {
                LossKind::WeightedTv { c } => c,
                _ => WeightingFunction::default().c,
            };
            LossKind::WeightedTv { c: c.unwrap_or(base) }
        }
    }
}

/// Constraint suite on `n` seeded interior points, in double precision.
fn constraint_gate<T: Real>(field: &CoordinateField<T>, n: usize, seed: u64) -> Result<vbc_core::oracle::ConstraintReport> {
    let field = field.cast::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = sample_inside(field.cage(), n, &mut rng)?;
    let alphas = field.evaluate_batch(&points)?;
    Ok(check_constraints(field.cage(), &points, &alphas)?)
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let file = ConfigFile::load(a.config.as_deref())?;
    let out_dir = file.require(a.out_dir.as_ref(), "out_dir")?;
    let mut manifest = RunManifest::new("train", 0);
    let loaded = load_cage::<f32>(&file.require(a.cage.as_ref(), "cage")?, &mut manifest)?;
    let vss = load_simplices(&file.require(a.simplices.as_ref(), "simplices")?, &loaded.cage, &mut manifest)?;
    let d = loaded.cage.dim();
    let mut cfg = file.settings(&TrainConfig::defaults_for(d), None)?;
    let field_cfg = file.settings(&FieldConfig::default(), Some("field"))?;
    if let Some(l) = a.loss {
        cfg.loss = loss_kind(l, a.weight_c, cfg.loss);
    } else if let (Some(c), LossKind::WeightedTv { .. }) = (a.weight_c, cfg.loss) {
        cfg.loss = LossKind::WeightedTv { c };
    }
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    if let Some(s) = a.seed {
        cfg.rng_seed = s;
    }
    cfg.validate()?;
    let ckpt_dir = out_dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir).with_context(|| format!("creating {}", ckpt_dir.display()))?;

    let hash = vss.hash();
    let mut field = CoordinateField::random(loaded.cage, vss, field_cfg.clone(), cfg.rng_seed)?;
    field.mollifier = cfg.mollifier.clone();
    let mut saved: Vec<(usize, f64, PathBuf)> = Vec::new();
    let result = train_with(&mut field, &cfg, |step, f, loss| {
        let path = ckpt_dir.join(format!("step_{step:06}.bin"));
        save_params(&path, &f.params, &hash, Some(step))?;
        saved.push((step, loss, path));
        Ok(())
    });
    manifest.seed = cfg.rng_seed;
    manifest.settings(&cfg, None)?;
    manifest.settings(&field_cfg, Some("field"))?;
    manifest.set("out_dir", Value::String(std::path::absolute(&out_dir)?.display().to_string()));
    for (_, _, p) in &saved {
        manifest.outputs.push(p.display().to_string());
    }
    let final_path = out_dir.join("final.bin");
    let manifest_path = out_dir.join("manifest.json");
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            // keep what was written so far, and say why it stopped
            save_params(&final_path, &field.params, &hash, saved.last().map(|s| s.0))?;
            manifest.metrics = json!({ "error": e.to_string() });
            manifest.save(&manifest_path)?;
            return Err(e.into());
        }
    };
    save_params(&final_path, &field.params, &hash, Some(cfg.steps))?;
    manifest.outputs.push(final_path.display().to_string());
    let loss_path = out_dir.join("loss.csv");
    write_loss_csv(BufWriter::new(File::create(&loss_path)?), &report.history)?;
    manifest.outputs.push(loss_path.display().to_string());

    let gate = constraint_gate(&field, 2000, cfg.rng_seed ^ 0x5eed)?;
    let passed = gate.satisfies(FEASIBILITY_TOL, FEASIBILITY_TOL, FEASIBILITY_TOL);
    let summary = json!({
        "steps": cfg.steps,
        "initial_heldout_loss": report.initial_heldout(),
        "final_heldout_loss": report.final_heldout(),
        "checkpoints": saved.iter().map(|(s, l, _)| json!({"step": s, "heldout_loss": l})).collect::<Vec<_>>(),
        "skipped_updates": report.skipped_updates,
        "wall_clock": report.history.last().map(|r| r.wall_clock),
        "constraints": gate,
        "constraints_passed": passed,
    });
    manifest.metrics = summary.clone();
    manifest.save(&manifest_path)?;
    print_json(&summary)?;
    if !passed {
        return Err(ConstraintFailure(format!("trained field violates the constraints: {gate:?}")).into());
    }
    Ok(())
}

pub fn finetune_arap(a: &ArapArgs) -> Result<()> {
    let file = ConfigFile::load(a.config.as_deref())?;
    let out = file.require(a.out.as_ref(), "out")?;
    let mut manifest = RunManifest::new("finetune-arap", 0);
    let (mut field, norm) = load_field::<f32>(&a.field, &file, &mut manifest)?;
    let d = field.dim();
    let mesh = load_mesh::<f32>("mesh", &file.require(a.mesh.as_ref(), "mesh")?, d, &norm, &mut manifest)?;
    let dc_path = file.require(a.deformed_cage.as_ref(), "deformed_cage")?;
    manifest.input("deformed_cage", &dc_path)?;
    let deformed = DeformedCage::load(&dc_path).with_context(|| format!("loading {}", dc_path.display()))?;
    check_cage_size(&deformed, field.num_cage_vertices())?;
    let mut cfg = file.settings(&ArapConfig::default(), None)?;
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    if let Some(s) = a.seed {
        cfg.rng_seed = s;
    }
    let target: Vec<f32> = deformed.transformed(&norm).vertices();
    let rep = arap_finetune(&mut field, &mesh, &target, &cfg)?;
    let hash = field.simplex_set().hash();
    save_params(&out, &field.params, &hash, Some(cfg.steps))?;
    manifest.output("out", &out);
    if let Some(p) = file.path(a.out_mesh.as_ref(), "out_mesh")? {
        let w = field.evaluate_batch(mesh.coords())?;
        let world: Vec<f32> = deformed.vertices();
        write_text(&p, &mesh.to_obj_with(&deform_points(&w, field.num_cage_vertices(), &world, d)))?;
        manifest.output("out_mesh", &p);
    }
    // energies are reported in world units
    let s2 = norm.scale * norm.scale;
    let summary = json!({
        "steps": cfg.steps,
        "energy_before": rep.energy_before / s2,
        "energy_after": rep.energy_after / s2,
        "rotation_fallbacks": rep.rotation_fallbacks,
        "skipped_updates": rep.skipped_updates,
    });
    manifest.seed = cfg.rng_seed;
    manifest.settings(&cfg, None)?;
    manifest.metrics = summary.clone();
    manifest.save(&a.manifest.clone().unwrap_or_else(|| manifest_path_for(&out)))?;
    print_json(&summary)
}

fn check_cage_size(deformed: &DeformedCage, k: usize) -> Result<()> {
    if deformed.num_vertices() != k {
        return Err(Error::Shape(format!("deformed cage has {} vertices, the cage has {k}", deformed.num_vertices())).into());
    }
    Ok(())
}

pub fn inverse(a: &InverseArgs) -> Result<()> {
    let file = ConfigFile::load(a.config.as_deref())?;
    let out_cage = file.require(a.out_cage.as_ref(), "out_cage")?;
    let mut manifest = RunManifest::new("inverse", 0);
    let (mut field, norm) = load_field::<f32>(&a.field, &file, &mut manifest)?;
    let d = field.dim();
    let mesh = load_mesh::<f32>("mesh", &file.require(a.mesh.as_ref(), "mesh")?, d, &norm, &mut manifest)?;
    let target = load_mesh::<f32>("target", &file.require(a.target.as_ref(), "target")?, d, &norm, &mut manifest)?;
    let mut cfg = file.settings(&InverseConfig::default(), None)?;
    if a.cage_only {
        cfg.optimize_field = false;
    }
    if let Some(s) = a.seed {
        cfg.rng_seed = s;
    }
    let rep = inverse_solve(&mut field, &mesh, &target, &cfg)?;
    let world = rep.cage.untransformed(&norm);
    world.save(&out_cage).with_context(|| format!("writing {}", out_cage.display()))?;
    manifest.output("out_cage", &out_cage);
    let errors: Vec<f64> = rep.vertex_errors.iter().map(|e| e / norm.scale).collect();
    if let Some(p) = file.path(a.errors.as_ref(), "errors")? {
        write_vertex_errors_csv(BufWriter::new(File::create(&p)?), &errors)?;
        manifest.output("errors", &p);
    }
    if let Some(p) = file.path(a.out_checkpoint.as_ref(), "out_checkpoint")? {
        save_params(&p, &field.params, &field.simplex_set().hash(), None)?;
        manifest.output("out_checkpoint", &p);
    }
    if let Some(p) = file.path(a.out_mesh.as_ref(), "out_mesh")? {
        let w = field.evaluate_batch(mesh.coords())?;
        let verts: Vec<f32> = world.vertices();
        write_text(&p, &mesh.to_obj_with(&deform_points(&w, field.num_cage_vertices(), &verts, d)))?;
        manifest.output("out_mesh", &p);
    }
    let mean = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
    let summary = json!({
        "global_steps": rep.global_energies.len(),
        "local_steps": rep.local_energies.len(),
        "final_global_energy": rep.global_energies.last(),
        "final_local_energy": rep.local_energies.last(),
        "mean_abs_error": mean,
        "rms_error": rep.rms_error / norm.scale,
        "optimize_field": cfg.optimize_field,
    });
    manifest.seed = cfg.rng_seed;
    manifest.settings(&cfg, None)?;
    manifest.metrics = summary.clone();
    manifest.save(&a.manifest.clone().unwrap_or_else(|| manifest_path_for(&out_cage)))?;
    print_json(&summary)
}

pub fn bake(a: &BakeArgs) -> Result<()> {
    let file = ConfigFile::load(a.config.as_deref())?;
    let out = file.require(a.out.as_ref(), "out")?;
    let mut manifest = RunManifest::new("bake", 0);
    let (field, norm) = load_field::<f64>(&a.field, &file, &mut manifest)?;
    let points = load_mesh::<f64>("points", &file.require(a.points.as_ref(), "points")?, field.dim(), &norm, &mut manifest)?;
    let weights = field.bake(points.coords())?;
    let d = field.dim();
    let mut worst = 0.0f64;
    let mut failed = Vec::new();
    for i in 0..weights.n_points {
        let cert = feasibility_check(&points.coords()[i * d..(i + 1) * d], weights.row(i), field.cage(), FEASIBILITY_TOL)?;
        worst = worst.max(cert.max_violation);
        if !cert.feasible {
            failed.push(i);
        }
    }
    if !failed.is_empty() {
        return Err(ConstraintFailure(format!(
            "{} of {} rows infeasible (first {:?}, worst violation {worst:.3e}); nothing written",
            failed.len(),
            weights.n_points,
            &failed[..failed.len().min(10)]
        ))
        .into());
    }
    weights.save_auto(&out).with_context(|| format!("writing {}", out.display()))?;
    let summary = json!({ "n_points": weights.n_points, "K": weights.k, "max_violation": worst });
    manifest.output("out", &out);
    manifest.metrics = summary.clone();
    manifest.save(&a.manifest.clone().unwrap_or_else(|| manifest_path_for(&out)))?;
    print_json(&summary)
}

pub fn deform(a: &DeformArgs) -> Result<()> {
    let file = ConfigFile::load(a.config.as_deref())?;
    let out = file.require(a.out.as_ref(), "out")?;
    let mut manifest = RunManifest::new("deform", 0);
    let wpath = file.require(a.weights.as_ref(), "weights")?;
    manifest.input("weights", &wpath)?;
    let weights = BakedWeights::load_auto(&wpath).with_context(|| format!("loading weights {}", wpath.display()))?;
    let dc_path = file.require(a.deformed_cage.as_ref(), "deformed_cage")?;
    manifest.input("deformed_cage", &dc_path)?;
    let deformed = DeformedCage::load(&dc_path).with_context(|| format!("loading {}", dc_path.display()))?;
    let d = deformed.dim();
    let pts = apply_deformation(&weights, &deformed)?;
    let text = match file.path(a.mesh.as_ref(), "mesh")? {
        Some(p) => {
            manifest.input("mesh", &p)?;
            let mesh = InteriorMesh::<f64>::load_obj(&p, d).with_context(|| format!("loading mesh {}", p.display()))?;
            if mesh.num_vertices() != weights.n_points {
                return Err(
                    Error::Shape(format!("mesh has {} vertices, weights have {} rows", mesh.num_vertices(), weights.n_points)).into()
                );
            }
            mesh.to_obj_with(&pts)
        }
        None => points_to_obj(&pts, d),
    };
    write_text(&out, &text)?;
    manifest.output("out", &out);
    manifest.metrics = json!({ "n_points": weights.n_points, "K": weights.k });
    manifest.save(&a.manifest.clone().unwrap_or_else(|| manifest_path_for(&out)))?;
    print_json(&manifest.metrics)
}

#[derive(Debug, Serialize)]
struct Suite {
    name: &'static str,
    passed: bool,
    detail: Value,
}

/// Largest cage for which the unpruned universality oracle is run.
const UNIVERSALITY_MAX_K: usize = 8;

pub fn verify(a: &VerifyArgs) -> Result<()> {
    let file = ConfigFile::load(a.config.as_deref())?;
    let mut manifest = RunManifest::new("verify", a.seed.unwrap_or(0));
    let n = a.points.unwrap_or(10_000);
    let seed = a.seed.unwrap_or(0);
    let loaded = load_cage::<f64>(&file.require(a.field.cage.as_ref(), "cage")?, &mut manifest)?;
    let cage = loaded.cage;
    let d = cage.dim();
    let k = cage.num_vertices();
    let vss = match file.path(a.field.simplices.as_ref(), "simplices")? {
        Some(p) => load_simplices(&p, &cage, &mut manifest)?,
        None => prune_with_stats(&cage, &file.settings(&PruningConfig::defaults_for(d), Some("pruning"))?, None)?.0,
    };
    let moll = MollifierParams::defaults_for(d);
    let (field, source) = match file.path(a.field.checkpoint.as_ref(), "checkpoint")? {
        Some(p) => {
            manifest.input("checkpoint", &p)?;
            let params = load_params::<f64>(&p, Some(&vss.hash()))?;
            (CoordinateField::new(cage.clone(), vss, params, moll)?, "checkpoint")
        }
        None => {
            let cfg = file.settings(&FieldConfig::default(), Some("field"))?;
            (CoordinateField::random(cage.clone(), vss, cfg, seed)?, "random initialization")
        }
    };

    let mut suites = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = sample_inside(&cage, n, &mut rng)?;
    let alphas = field.evaluate_batch(&points)?;
    let rep = check_constraints(&cage, &points, &alphas)?;
    let infeasible = (0..n)
        .map(|i| feasibility_check(&points[i * d..(i + 1) * d], &alphas[i * k..(i + 1) * k], &cage, FEASIBILITY_TOL))
        .collect::<vbc_core::Result<Vec<_>>>()?
        .iter()
        .filter(|c| !c.feasible)
        .count();
    suites.push(Suite {
        name: "feasibility",
        passed: infeasible == 0,
        detail: json!({ "points": n, "infeasible": infeasible, "report": rep }),
    });

    let mut worst = 0.0f64;
    for i in 0..k {
        let alpha = field.evaluate(cage.vertex(i))?;
        for (j, &x) in alpha.iter().enumerate() {
            worst = worst.max((x - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    suites.push(Suite { name: "lagrange", passed: worst <= FEASIBILITY_TOL, detail: json!({ "max_error": worst }) });

    if k <= UNIVERSALITY_MAX_K {
        let m = n.min(50);
        let mut bad = 0;
        for p in points.chunks(d).take(m) {
            if !universality_check(p, &cage, 3, &mut rng)?.passed() {
                bad += 1;
            }
        }
        suites.push(Suite { name: "universality", passed: bad == 0, detail: json!({ "points": m, "failures": bad }) });
    }

    if d == 2 && k == 3 {
        let mut diff = 0.0f64;
        for (p, alpha) in points.chunks(d).zip(alphas.chunks(k)) {
            let mvc = mean_value_coordinates(&cage, p)?;
            diff = diff.max(mvc.iter().zip(alpha).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
        suites.push(Suite { name: "mvc_agreement", passed: diff <= 1e-9, detail: json!({ "max_difference": diff }) });
    }

    let passed = suites.iter().all(|s| s.passed);
    let summary = json!({ "field": source, "cage_vertices": k, "dim": d, "seed": seed, "passed": passed, "suites": suites });
    if let Some(p) = &a.out {
        write_text(p, &serde_json::to_string_pretty(&summary)?)?;
    }
    print_json(&summary)?;
    if !passed {
        let names: Vec<&str> = suites.iter().filter(|s| !s.passed).map(|s| s.name).collect();
        return Err(ConstraintFailure(format!("failed suites: {}", names.join(", "))).into());
    }
    Ok(())
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let mut summary = serde_json::Map::new();
    let mut passed = true;
    if let Some(p) = &a.loss {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let recs = read_loss_csv(&text)?;
        let min = recs.iter().map(|r| r.loss).fold(f64::INFINITY, f64::min);
        summary.insert(
            "loss".into(),
            json!({
                "steps": recs.len(),
                "initial": recs.first().map(|r| r.loss),
                "final": recs.last().map(|r| r.loss),
                "min": if recs.is_empty() { None } else { Some(min) },
                "wall_clock": recs.last().map(|r| r.wall_clock),
            }),
        );
    }
    let mut runs = Vec::new();
    for p in &a.manifest {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("manifest {}: {e}", p.display())))?;
        if m.metrics.get("constraints_passed") == Some(&Value::Bool(false)) {
            passed = false;
        }
        runs.push(json!({ "command": m.command, "seed": m.seed, "metrics": m.metrics, "inputs": m.inputs }));
    }
    if !runs.is_empty() {
        summary.insert("runs".into(), Value::Array(runs));
    }
    if let Some(p) = &a.verify {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("verify summary {}: {e}", p.display())))?;
        let ok = v.get("passed").and_then(Value::as_bool).ok_or_else(|| Error::Parse("verify summary has no \"passed\" flag".into()))?;
        passed &= ok;
        summary.insert("verify".into(), v);
    }
    summary.insert("passed".into(), Value::Bool(passed));
    let summary = Value::Object(summary);
    let text = match a.format {
        ReportFormat::Json => serde_json::to_string_pretty(&summary)?,
        ReportFormat::Csv => {
            let mut rows = vec!["metric,value".to_string()];
            flatten("", &summary, &mut rows);
            rows.join("\n") + "\n"
        }
    };
    match &a.out {
        Some(p) => write_text(p, &text)?,
        None => print!("{text}"),
    }
    if a.format == ReportFormat::Json && a.out.is_none() {
        println!();
    }
    if !passed {
        return Err(ConstraintFailure("conformance summary reports failures".into()).into());
    }
    Ok(())
}

/// Dotted-path rows for every scalar in `v`.
fn flatten(prefix: &str, v: &Value, rows: &mut Vec<String>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, v)| flatten(&key(k), v, rows)),
        Value::Array(a) => a.iter().enumerate().for_each(|(i, v)| flatten(&key(&i.to_string()), v, rows)),
        Value::String(s) => rows.push(format!("{prefix},\"{}\"", s.replace('"', "\"\""))),
        other => rows.push(format!("{prefix},{other}")),
    }
}
