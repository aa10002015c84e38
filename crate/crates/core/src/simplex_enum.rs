//! Candidate virtual simplices and their pruning.
//!
//! Every `(d+1)`-subset of cage vertices is a candidate. Pruning removes
//! degenerate simplices and simplices that reach outside the cage or swallow
//! another cage vertex, keeps the shortest-longest-edge simplices per cage
//! vertex, and finally patches interior regions left uncovered.

use std::collections::BTreeSet;
use std::path::Path;

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::{sample_inside, sample_outside, Cage, Simplex, SimplexFrame};
use crate::{Error, Real, Result};

/// Barycentric slack used by every containment test during pruning.
pub const PRUNE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningConfig {
    /// `M_p`
    #[serde(rename = "max_simplices_per_cage_vertex")]
    pub max_per_vertex: usize,
    /// `M_c`; zero disables the coverage pass.
    #[serde(rename = "max_simplices_per_interior_point")]
    pub max_per_interior_point: usize,
    pub n_outside: usize,
    pub n_inside: usize,
    pub rng_seed: u64,
}

impl PruningConfig {
    pub fn defaults_2d() -> Self {
        PruningConfig { max_per_vertex: 28, max_per_interior_point: 5, n_outside: 4096, n_inside: 4096, rng_seed: 0 }
    }

    pub fn defaults_3d() -> Self {
        PruningConfig { max_per_vertex: 80, max_per_interior_point: 5, n_outside: 32768, n_inside: 32768, rng_seed: 0 }
    }

    pub fn defaults_for(dim: usize) -> Self {
        if dim == 3 {
            Self::defaults_3d()
        } else {
            Self::defaults_2d()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_per_vertex == 0 {
            return Err(Error::InvalidConfig("max_simplices_per_cage_vertex must be at least 1".into()));
        }
        if self.n_outside == 0 || self.n_inside == 0 {
            return Err(Error::InvalidConfig("sample counts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Counts reported by a pruning run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneStats {
    pub possible: u64,
    /// Non-degenerate candidates that passed the exterior and cage-vertex tests.
    pub interior: usize,
    /// After the per-vertex cut, before coverage.
    pub after_per_vertex: usize,
    pub used: usize,
}

/// The retained simplices with a per-vertex incidence index.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualSimplexSet {
    dim: usize,
    num_cage_vertices: usize,
    simplices: Vec<Simplex>,
    per_vertex: Vec<Vec<usize>>,
    config: Option<PruningConfig>,
}

#[derive(Serialize, Deserialize)]
struct SetJson {
    d: usize,
    num_cage_vertices: usize,
    simplices: Vec<Simplex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<PruningConfig>,
}

impl VirtualSimplexSet {
    pub fn new(dim: usize, num_cage_vertices: usize, mut simplices: Vec<Simplex>) -> Result<Self> {
        for s in &simplices {
            let ids = s.ids();
            if ids.len() != dim + 1 || ids.windows(2).any(|w| w[0] >= w[1]) || ids.iter().any(|&i| i >= num_cage_vertices) {
                return Err(Error::Shape(format!("simplex {ids:?} invalid for d={dim}, K={num_cage_vertices}")));
            }
        }
        simplices.sort();
        simplices.dedup();
        let mut per_vertex = vec![Vec::new(); num_cage_vertices];
        for (j, s) in simplices.iter().enumerate() {
            for &v in s.ids() {
                per_vertex[v].push(j);
            }
        }
        Ok(VirtualSimplexSet { dim, num_cage_vertices, simplices, per_vertex, config: None })
    }

    /// Every candidate, unpruned (degenerates included).
    pub fn all(cage_dim: usize, k: usize) -> Self {
        let simplices = (0..k).combinations(cage_dim + 1).map(Simplex).collect();
        Self::new(cage_dim, k, simplices).expect("combinations are valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_cage_vertices(&self) -> usize {
        self.num_cage_vertices
    }

    pub fn len(&self) -> usize {
        self.simplices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.simplices.is_empty()
    }

    pub fn simplices(&self) -> &[Simplex] {
        &self.simplices
    }

    /// Indices of simplices having cage vertex `v` as a corner.
    pub fn incident(&self, v: usize) -> &[usize] {
        &self.per_vertex[v]
    }

    pub fn config(&self) -> Option<&PruningConfig> {
        self.config.as_ref()
    }

    pub fn frames<T: Real>(&self, cage: &Cage<T>) -> Result<Vec<SimplexFrame<T>>> {
        self.check_cage(cage)?;
        self.simplices.iter().map(|s| SimplexFrame::new(s, cage)).collect()
    }

    pub fn check_cage<T: Real>(&self, cage: &Cage<T>) -> Result<()> {
        if cage.dim() != self.dim || cage.num_vertices() != self.num_cage_vertices {
            return Err(Error::Shape(format!(
                "simplex set built for d={}, K={}; cage has d={}, K={}",
                self.dim,
                self.num_cage_vertices,
                cage.dim(),
                cage.num_vertices()
            )));
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        let json = SetJson {
            d: self.dim,
            num_cage_vertices: self.num_cage_vertices,
            simplices: self.simplices.clone(),
            config: self.config.clone(),
        };
        Ok(serde_json::to_string_pretty(&json)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let json: SetJson = serde_json::from_str(text)?;
        let mut set = Self::new(json.d, json.num_cage_vertices, json.simplices)?;
        set.config = json.config;
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 over the ordered simplex list; ties checkpoints to their set.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("d={};K={};", self.dim, self.num_cage_vertices));
        for s in &self.simplices {
            h.update(s.ids().iter().map(|i| i.to_string()).join(","));
            h.update(";");
        }
        hex::encode(h.finalize())
    }
}

/// `C(n, k)` without overflow for the sizes of interest.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Number of candidates and an iterator over all `(d+1)`-subsets.
pub fn enumerate_all<T: Real>(cage: &Cage<T>) -> (u64, impl Iterator<Item = Simplex>) {
    let k = cage.num_vertices();
    let d = cage.dim();
    (binomial(k as u64, d as u64 + 1), (0..k).combinations(d + 1).map(Simplex))
}

struct Candidate {
    simplex: Simplex,
    frame: SimplexFrame<f64>,
}

fn sort_key(c: &Candidate) -> (f64, &[usize]) {
    (c.frame.longest_edge(), c.simplex.ids())
}

fn smallest(cands: &mut [&Candidate], m: usize) -> Vec<Simplex> {
    cands.sort_by(|a, b| {
        let (la, ia) = sort_key(a);
        let (lb, ib) = sort_key(b);
        la.partial_cmp(&lb).unwrap().then_with(|| ia.cmp(ib))
    });
    cands.iter().take(m).map(|c| c.simplex.clone()).collect()
}

/// Step (a): keeps candidates that are non-degenerate, contain no exterior
/// sample strictly, and contain no other cage vertex (closed test, so a
/// vertex lying on an edge of the simplex also disqualifies it).
fn admissible(cage: &Cage<f64>, candidates: &[Simplex], outside: &[f64]) -> Vec<Candidate> {
    let d = cage.dim();
    candidates
        .par_iter()
        .filter_map(|s| {
            let frame = SimplexFrame::new(s, cage).ok()?;
            let hits_exterior = outside.chunks(d).any(|p| {
                let lam = frame.bary_array(p);
                lam[..=d].iter().all(|&l| l > PRUNE_TOL)
            });
            if hits_exterior {
                return None;
            }
            let swallows_vertex = (0..cage.num_vertices()).filter(|v| !s.has_vertex(*v)).any(|v| frame.contains(cage.vertex(v), PRUNE_TOL));
            if swallows_vertex {
                return None;
            }
            Some(Candidate { simplex: s.clone(), frame })
        })
        .collect()
}

/// Runs the pruning algorithm over an explicit candidate list.
///
/// `interior` overrides the random interior samples of the coverage pass
/// (e.g. with the vertices of an interior mesh).
pub fn prune_candidates<T: Real>(
    cage: &Cage<T>,
    cfg: &PruningConfig,
    candidates: &[Simplex],
    interior: Option<&[T]>,
) -> Result<(VirtualSimplexSet, PruneStats)> {
    cfg.validate()?;
    let cage = cage.cast::<f64>();
    let d = cage.dim();
    let k = cage.num_vertices();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let outside = match sample_outside(&cage, cfg.n_outside, &mut rng) {
        Ok(p) => p,
        // a box-shaped cage has no exterior inside its bounding box
        Err(Error::SamplingExhausted { .. }) => Vec::new(),
        Err(e) => return Err(e),
    };
    let admissible = admissible(&cage, candidates, &outside);

    let mut kept: BTreeSet<Simplex> = BTreeSet::new();
    for v in 0..k {
        let mut inc: Vec<&Candidate> = admissible.iter().filter(|c| c.simplex.has_vertex(v)).collect();
        kept.extend(smallest(&mut inc, cfg.max_per_vertex));
    }
    let after_per_vertex = kept.len();

    if cfg.max_per_interior_point > 0 {
        let samples: Vec<f64> = match interior {
            Some(pts) => pts.iter().map(|x| x.as_f64()).collect(),
            None => sample_inside(&cage, cfg.n_inside, &mut rng)?,
        };
        let by_simplex = |s: &Simplex| admissible.iter().find(|c| &c.simplex == s).map(|c| &c.frame);
        let mut kept_frames: Vec<SimplexFrame<f64>> = kept.iter().filter_map(by_simplex).cloned().collect();
        for p in samples.chunks(d) {
            if kept_frames.iter().any(|f| f.contains(p, PRUNE_TOL)) {
                continue;
            }
            let closest = cage.closest_vertex(p);
            let containing: Vec<&Candidate> = admissible.iter().filter(|c| c.frame.contains(p, PRUNE_TOL)).collect();
            let mut cands: Vec<&Candidate> = containing.iter().copied().filter(|c| c.simplex.has_vertex(closest)).collect();
            if cands.is_empty() {
                // the closest vertex may not see p in a strongly concave cage
                cands = containing;
            }
            if cands.is_empty() {
                return Err(Error::UncoverableRegion { location: p.to_vec() });
            }
            for s in smallest(&mut cands, cfg.max_per_interior_point) {
                if kept.insert(s.clone()) {
                    kept_frames.push(by_simplex(&s).expect("admissible").clone());
                }
            }
        }
    }

    let mut set = VirtualSimplexSet::new(d, k, kept.into_iter().collect())?;
    set.config = Some(cfg.clone());
    let stats = PruneStats { possible: binomial(k as u64, d as u64 + 1), interior: admissible.len(), after_per_vertex, used: set.len() };
    Ok((set, stats))
}

/// Prunes all candidates of `cage`.
pub fn prune<T: Real>(cage: &Cage<T>, cfg: &PruningConfig, interior: Option<&[T]>) -> Result<VirtualSimplexSet> {
    prune_with_stats(cage, cfg, interior).map(|(s, _)| s)
}

pub fn prune_with_stats<T: Real>(cage: &Cage<T>, cfg: &PruningConfig, interior: Option<&[T]>) -> Result<(VirtualSimplexSet, PruneStats)> {
    let (_, iter) = enumerate_all(cage);
    let all: Vec<Simplex> = iter.collect();
    prune_candidates(cage, cfg, &all, interior)
}

/// Indices of retained simplices containing `p`.
pub fn valid_at<T: Real>(p: &[T], vss: &VirtualSimplexSet, cage: &Cage<T>) -> Result<Vec<usize>> {
    let tol = T::lit(T::CONTAINMENT_TOL);
    let out: Vec<usize> =
        vss.simplices().iter().enumerate().filter(|(_, s)| crate::geometry::contains(p, s, cage, tol)).map(|(j, _)| j).collect();
    if out.is_empty() {
        return Err(Error::NotCovered { location: p.iter().map(|x| x.as_f64()).collect() });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 3), 4);
        assert_eq!(binomial(12, 3), 220);
        assert_eq!(binomial(34, 3), 5984);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(110, 4), 5773185);
    }

    #[test]
    fn square_keeps_all_four_triangles() {
        let cage = shapes::unit_square::<f64>();
        let (set, stats) = prune_with_stats(&cage, &PruningConfig::defaults_2d(), None).unwrap();
        assert_eq!(stats.possible, 4);
        assert_eq!(set.len(), 4);
        assert_eq!(set.incident(0).len(), 3);
    }

    #[test]
    fn valid_at_square_center_and_corner() {
        let cage = shapes::unit_square::<f64>();
        let set = prune(&cage, &PruningConfig::defaults_2d(), None).unwrap();
        // the center lies on both diagonals, so all four triangles hold it
        assert_eq!(valid_at(&[0.5, 0.5], &set, &cage).unwrap().len(), 4);
        // off the diagonals, one triangle of each diagonal split: 012 and 013
        let near = valid_at(&[0.05, 0.01], &set, &cage).unwrap();
        let ids: Vec<&[usize]> = near.iter().map(|&j| set.simplices()[j].ids()).collect();
        assert_eq!(ids, vec![&[0, 1, 2][..], &[0, 1, 3][..]]);
        assert!(matches!(valid_at(&[1.5, 0.5], &set, &cage), Err(Error::NotCovered { .. })));
    }

    #[test]
    fn json_round_trip_and_hash() {
        let cage = shapes::regular_polygon::<f64>(5);
        let set = prune(&cage, &PruningConfig::defaults_2d(), None).unwrap();
        let back = VirtualSimplexSet::from_json_str(&set.to_json_string().unwrap()).unwrap();
        assert_eq!(set, back);
        assert_eq!(set.hash(), back.hash());
        let other = VirtualSimplexSet::new(2, 5, set.simplices()[1..].to_vec()).unwrap();
        assert_ne!(set.hash(), other.hash());
    }

    #[test]
    fn invalid_config_rejected() {
        let cage = shapes::unit_square::<f64>();
        let cfg = PruningConfig { max_per_vertex: 0, ..PruningConfig::defaults_2d() };
        assert!(matches!(prune(&cage, &cfg, None), Err(Error::InvalidConfig(_))));
    }
}
