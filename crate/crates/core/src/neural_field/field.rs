use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FieldConfig, FieldParams};
use crate::energies::{ramp_factor, MollifierParams};
use crate::geometry::{Cage, SimplexFrame};
use crate::simplex_enum::VirtualSimplexSet;
use crate::{Error, Real, Result};

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// One simplex participating in the mixture at a point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Term<T> {
    pub j: usize,
    /// Indicator (1) or mollified ramp factor in `(0, 1]`.
    pub mask: T,
    /// `softplus(logit) * mask`
    pub mass: T,
    pub lambda: [T; 4],
}

/// Active simplices at a point and their total mass.
#[derive(Debug, Clone)]
pub(crate) struct Mixture<T> {
    pub terms: Vec<Term<T>>,
    pub total: T,
}

/// Cage, pruned simplex set and network parameters.
#[derive(Debug, Clone)]
pub struct CoordinateField<T: Real> {
    cage: Cage<T>,
    vss: VirtualSimplexSet,
    frames: Vec<SimplexFrame<T>>,
    pub params: FieldParams<T>,
    pub mollifier: MollifierParams,
}

impl<T: Real> CoordinateField<T> {
    pub fn new(cage: Cage<T>, vss: VirtualSimplexSet, params: FieldParams<T>, mollifier: MollifierParams) -> Result<Self> {
        let frames = vss.frames(&cage)?;
        if params.outputs() != vss.len() {
            return Err(Error::Shape(format!("network has {} outputs for {} simplices", params.outputs(), vss.len())));
        }
        if params.dim() != cage.dim() {
            return Err(Error::Shape("network and cage dimension differ".into()));
        }
        Ok(CoordinateField { cage, vss, frames, params, mollifier })
    }

    /// Field with freshly initialized parameters.
    pub fn random(cage: Cage<T>, vss: VirtualSimplexSet, config: FieldConfig, seed: u64) -> Result<Self> {
        let params = FieldParams::random(cage.dim(), vss.len(), config, seed)?;
        let moll = MollifierParams::defaults_for(cage.dim());
        Self::new(cage, vss, params, moll)
    }

    pub fn cage(&self) -> &Cage<T> {
        &self.cage
    }

    pub fn simplex_set(&self) -> &VirtualSimplexSet {
        &self.vss
    }

    pub fn frames(&self) -> &[SimplexFrame<T>] {
        &self.frames
    }

    pub fn dim(&self) -> usize {
        self.cage.dim()
    }

    pub fn num_cage_vertices(&self) -> usize {
        self.cage.num_vertices()
    }

    pub fn cast<U: Real>(&self) -> CoordinateField<U> {
        CoordinateField::new(self.cage.cast(), self.vss.clone(), self.params.cast(), self.mollifier.clone())
            .expect("cast keeps a valid field")
    }

    /// Field over a cage with moved vertices but the same network.
    pub fn with_cage(&self, cage: Cage<T>) -> Result<Self> {
        CoordinateField::new(cage, self.vss.clone(), self.params.clone(), self.mollifier.clone())
    }

    /// Indices of retained simplices containing `p`.
    pub fn valid_at(&self, p: &[T]) -> Result<Vec<usize>> {
        let tol = T::lit(T::CONTAINMENT_TOL);
        let v: Vec<usize> = (0..self.frames.len()).filter(|&j| self.frames[j].contains(p, tol)).collect();
        if v.is_empty() {
            return Err(Error::NotCovered { location: p.iter().map(|x| x.as_f64()).collect() });
        }
        Ok(v)
    }

    /// Cage vertex coinciding with `p`, if any. Such queries are well defined
    /// (every valid simplex returns the unit vector there) but flagged since
    /// they sit on the boundary of the domain.
    pub fn cage_vertex_at(&self, p: &[T]) -> Option<usize> {
        let tol = T::lit(T::CONTAINMENT_TOL) * self.cage.scale();
        (0..self.cage.num_vertices()).find(|&i| crate::geometry::dist(p, self.cage.vertex(i)) <= tol)
    }

    /// Raw logits at `n` points (`x` is `n x d`).
    pub fn logits(&self, x: &[T]) -> Vec<T> {
        self.params.forward(x)
    }

    pub(crate) fn mixture(&self, p: &[T], logits: &[T], moll: Option<&MollifierParams>) -> Mixture<T> {
        let d = self.dim();
        let tol = T::lit(T::CONTAINMENT_TOL);
        let mut terms = Vec::new();
        for (j, f) in self.frames.iter().enumerate() {
            let mut lambda = f.bary_array(p);
            let mask = match moll {
                None => {
                    if lambda[..=d].iter().any(|&l| l < -tol) {
                        continue;
                    }
                    // snap facet-tolerance negatives so non-negativity is exact
                    let mut s = T::zero();
                    for l in &mut lambda[..=d] {
                        *l = l.max(T::zero());
                        s += *l;
                    }
                    for l in &mut lambda[..=d] {
                        *l /= s;
                    }
                    T::one()
                }
                Some(m) => {
                    let r = T::lit(m.radius);
                    let pd = f.plane_distance(&lambda);
                    if pd <= -r {
                        continue;
                    }
                    let dist = if pd >= T::zero() { pd } else { -f.outside_distance(p) };
                    let m = ramp_factor(dist, r, T::lit(m.sharpness));
                    if m <= T::zero() {
                        continue;
                    }
                    m
                }
            };
            terms.push(Term { j, mask, mass: softplus(logits[j]) * mask, lambda });
        }
        let mut total: T = terms.iter().map(|t| t.mass).sum();
        if total <= T::zero() && moll.is_none() && !terms.is_empty() {
            // every softplus underflowed: fall back to uniform weights
            for t in &mut terms {
                t.mass = T::one();
            }
            total = T::lit(terms.len() as f64);
        }
        Mixture { terms, total }
    }

    pub(crate) fn scatter(&self, mix: &Mixture<T>, alpha: &mut [T]) {
        alpha.iter_mut().for_each(|a| *a = T::zero());
        if mix.total <= T::zero() {
            return;
        }
        let d = self.dim();
        for t in &mix.terms {
            let w = t.mass / mix.total;
            for (k, &v) in self.frames[t.j].ids().iter().enumerate().take(d + 1) {
                alpha[v] += w * t.lambda[k];
            }
        }
    }

    /// Gradient of a loss through the mixture: `d_alpha` (length K) to
    /// `d_logits` (length J, accumulated).
    pub(crate) fn mixture_backward(&self, mix: &Mixture<T>, logits: &[T], d_alpha: &[T], d_logits: &mut [T]) {
        if mix.total <= T::zero() {
            return;
        }
        let d = self.dim();
        let g: Vec<T> = mix
            .terms
            .iter()
            .map(|t| self.frames[t.j].ids().iter().enumerate().take(d + 1).map(|(k, &v)| d_alpha[v] * t.lambda[k]).sum())
            .collect();
        let mean: T = mix.terms.iter().zip(&g).map(|(t, &gj)| t.mass / mix.total * gj).sum();
        for (t, &gj) in mix.terms.iter().zip(&g) {
            let du = (gj - mean) / mix.total;
            d_logits[t.j] += du * t.mask * sigmoid(logits[t.j]);
        }
    }

    /// Masked, normalized softplus distribution over the retained simplices.
    pub fn simplex_distribution(&self, p: &[T]) -> Result<Vec<T>> {
        let logits = self.logits(p);
        let mix = self.mixture(p, &logits, None);
        if mix.terms.is_empty() {
            return Err(Error::NotCovered { location: p.iter().map(|x| x.as_f64()).collect() });
        }
        let mut w = vec![T::zero(); self.frames.len()];
        for t in &mix.terms {
            w[t.j] = t.mass / mix.total;
        }
        Ok(w)
    }

    /// Coordinates `alpha(p)` (length K).
    pub fn evaluate(&self, p: &[T]) -> Result<Vec<T>> {
        let mut out = self.evaluate_batch(p).map_err(|e| match e {
            Error::NotCoveredAt { .. } => Error::NotCovered { location: p.iter().map(|x| x.as_f64()).collect() },
            e => e,
        })?;
        out.truncate(self.num_cage_vertices());
        Ok(out)
    }

    /// Coordinates at `n` points (`n x K`, row-major).
    pub fn evaluate_batch(&self, points: &[T]) -> Result<Vec<T>> {
        let d = self.dim();
        let k = self.num_cage_vertices();
        let j = self.frames.len();
        let logits = self.logits(points);
        let n = points.len() / d;
        let mut out = vec![T::zero(); n * k];
        let missing: Vec<usize> = out
            .par_chunks_mut(k)
            .enumerate()
            .filter_map(|(i, row)| {
                let p = &points[i * d..(i + 1) * d];
                let mix = self.mixture(p, &logits[i * j..(i + 1) * j], None);
                if mix.terms.is_empty() {
                    return Some(i);
                }
                self.scatter(&mix, row);
                None
            })
            .collect();
        if !missing.is_empty() {
            return Err(Error::NotCoveredAt { indices: missing });
        }
        Ok(out)
    }

    /// [`evaluate_batch`](Self::evaluate_batch) keeping what
    /// [`backward_batch`](Self::backward_batch) needs.
    pub fn evaluate_batch_taped(&self, points: &[T]) -> Result<BatchTape<T>> {
        let d = self.dim();
        let k = self.num_cage_vertices();
        let j = self.frames.len();
        let (logits, cache) = self.params.forward_cached(points);
        let n = points.len() / d;
        let mixes: Vec<Mixture<T>> =
            (0..n).into_par_iter().map(|i| self.mixture(&points[i * d..(i + 1) * d], &logits[i * j..(i + 1) * j], None)).collect();
        let missing: Vec<usize> = (0..n).filter(|&i| mixes[i].terms.is_empty()).collect();
        if !missing.is_empty() {
            return Err(Error::NotCoveredAt { indices: missing });
        }
        let mut alpha = vec![T::zero(); n * k];
        alpha.par_chunks_mut(k).zip(&mixes).for_each(|(row, mix)| self.scatter(mix, row));
        Ok(BatchTape { alpha, logits, cache, mixes })
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d alpha`
    /// (`n x K`) for a taped batch.
    pub fn backward_batch(&self, tape: &BatchTape<T>, d_alpha: &[T], grad: &mut [T]) {
        let k = self.num_cage_vertices();
        let j = self.frames.len();
        let mut d_logits = vec![T::zero(); tape.logits.len()];
        d_logits
            .par_chunks_mut(j)
            .enumerate()
            .for_each(|(i, dl)| self.mixture_backward(&tape.mixes[i], &tape.logits[i * j..(i + 1) * j], &d_alpha[i * k..(i + 1) * k], dl));
        self.params.backward(&tape.cache, &d_logits, grad);
    }

    /// Training surrogate with every simplex indicator replaced by its ramp.
    pub fn evaluate_mollified(&self, p: &[T]) -> Vec<T> {
        self.evaluate_mollified_with(p, &self.mollifier)
    }

    pub fn evaluate_mollified_with(&self, p: &[T], moll: &MollifierParams) -> Vec<T> {
        let logits = self.logits(p);
        let mix = self.mixture(p, &logits, Some(moll));
        let mut alpha = vec![T::zero(); self.num_cage_vertices()];
        self.scatter(&mix, &mut alpha);
        alpha
    }

    /// Dense weight matrix at the query points.
    pub fn bake(&self, points: &[T]) -> Result<BakedWeights> {
        let w = self.evaluate_batch(points)?;
        Ok(BakedWeights { n_points: points.len() / self.dim(), k: self.num_cage_vertices(), data: w.iter().map(|x| x.as_f64()).collect() })
    }
}

/// Forward state of a batch evaluation.
pub struct BatchTape<T> {
    /// `n x K` coordinates.
    pub alpha: Vec<T>,
    logits: Vec<T>,
    cache: super::ForwardCache<T>,
    mixes: Vec<Mixture<T>>,
}

#[derive(Serialize, Deserialize)]
struct WeightsHeader {
    format: String,
    n_points: usize,
    #[serde(rename = "K")]
    k: usize,
}

#[derive(Serialize, Deserialize)]
struct WeightsJson {
    #[serde(flatten)]
    header: WeightsHeader,
    weights: Vec<f64>,
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

pub const WEIGHTS_FORMAT: &str = "vbc-baked-weights-v1";

/// `n_points x K` row-major coordinate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BakedWeights {
    pub n_points: usize,
    pub k: usize,
    pub data: Vec<f64>,
}

impl BakedWeights {
    pub fn new(n_points: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_points * k {
            return Err(Error::Shape(format!("{} values for {n_points} x {k} weights", data.len())));
        }
        Ok(BakedWeights { n_points, k, data })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    /// JSON header line, then little-endian `f32` values.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let header = WeightsHeader { format: WEIGHTS_FORMAT.into(), n_points: self.n_points, k: self.k };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for &v in &self.data {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        let nl = buf.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Parse("missing weights header".into()))?;
        let header: WeightsHeader = serde_json::from_slice(&buf[..nl]).map_err(|e| Error::Parse(format!("weights header: {e}")))?;
        if header.format != WEIGHTS_FORMAT {
            return Err(Error::Parse(format!("unknown weights format {:?}", header.format)));
        }
        let body = &buf[nl + 1..];
        let expected = header.n_points.checked_mul(header.k).and_then(|x| x.checked_mul(4));
        if expected != Some(body.len()) {
            return Err(Error::Parse(format!(
                "weights body has {} bytes, header promises {} x {} floats",
                body.len(),
                header.n_points,
                header.k
            )));
        }
        let data = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
        BakedWeights::new(header.n_points, header.k, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    /// Same header as the binary form plus a row-major `weights` array.
    pub fn to_json_string(&self) -> Result<String> {
        let json = WeightsJson {
            header: WeightsHeader { format: WEIGHTS_FORMAT.into(), n_points: self.n_points, k: self.k },
            weights: self.data.clone(),
        };
        Ok(serde_json::to_string(&json)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let json: WeightsJson = serde_json::from_str(text).map_err(|e| Error::Parse(format!("weights json: {e}")))?;
        if json.header.format != WEIGHTS_FORMAT {
            return Err(Error::Parse(format!("unknown weights format {:?}", json.header.format)));
        }
        BakedWeights::new(json.header.n_points, json.header.k, json.weights).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Writes JSON for a `.json` path and the binary form otherwise.
    pub fn save_auto(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if is_json(path) {
            std::fs::write(path, self.to_json_string()?)?;
            Ok(())
        } else {
            self.save(path)
        }
    }

    pub fn load_auto(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if is_json(path) {
            Self::from_json_str(&std::fs::read_to_string(path)?)
        } else {
            Self::load(path)
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
