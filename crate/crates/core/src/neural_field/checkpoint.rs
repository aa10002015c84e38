//! Parameter checkpoints: one JSON header line followed by the flat
//! parameter vector as little-endian `f32`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FieldConfig, FieldParams};
use crate::{Error, Real, Result};

pub const CHECKPOINT_FORMAT: &str = "vbc-field-params-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub dim: usize,
    pub outputs: usize,
    pub config: FieldConfig,
    pub encoding_params: usize,
    /// `[fan_out, fan_in]` per dense layer.
    pub layer_shapes: Vec<[usize; 2]>,
    pub n_params: usize,
    pub simplex_set_hash: String,
    #[serde(default)]
    pub step: Option<usize>,
}

pub fn write_params<T: Real>(mut w: impl Write, params: &FieldParams<T>, simplex_set_hash: &str, step: Option<usize>) -> Result<()> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        dim: params.dim(),
        outputs: params.outputs(),
        config: params.config().clone(),
        encoding_params: params.encoding_len(),
        layer_shapes: params.layer_shapes().iter().map(|l| [l.fan_out, l.fan_in]).collect(),
        n_params: params.len(),
        simplex_set_hash: simplex_set_hash.to_string(),
        step,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    let mut bytes = Vec::with_capacity(params.len() * 4);
    for v in params.data() {
        bytes.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_params<T: Real>(mut r: impl Read) -> Result<(FieldParams<T>, CheckpointHeader)> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let nl = buf.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Parse("missing checkpoint header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&buf[..nl]).map_err(|e| Error::Parse(format!("checkpoint header: {e}")))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::Parse(format!("unknown checkpoint format {:?}", header.format)));
    }
    let mut params = FieldParams::<T>::zeros(header.dim, header.outputs, header.config.clone())?;
    let shapes: Vec<[usize; 2]> = params.layer_shapes().iter().map(|l| [l.fan_out, l.fan_in]).collect();
    if shapes != header.layer_shapes || params.len() != header.n_params || params.encoding_len() != header.encoding_params {
        return Err(Error::Parse("checkpoint header does not match its own configuration".into()));
    }
    let body = &buf[nl + 1..];
    if body.len() != header.n_params * 4 {
        return Err(Error::Parse(format!("checkpoint body has {} bytes, expected {}", body.len(), header.n_params * 4)));
    }
    let data = body.chunks_exact(4).map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)).collect();
    params.set_data(data)?;
    Ok((params, header))
}

pub fn save_params<T: Real>(path: impl AsRef<Path>, params: &FieldParams<T>, simplex_set_hash: &str, step: Option<usize>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_params(std::io::BufWriter::new(f), params, simplex_set_hash, step)
}

/// Loads a checkpoint and, when given, checks it belongs to `expected_hash`.
pub fn load_params<T: Real>(path: impl AsRef<Path>, expected_hash: Option<&str>) -> Result<FieldParams<T>> {
    let (params, header) = read_params(std::io::BufReader::new(std::fs::File::open(path)?))?;
    if let Some(h) = expected_hash {
        if h != header.simplex_set_hash {
            return Err(Error::Shape(format!("checkpoint was trained for simplex set {}, not {h}", header.simplex_set_hash)));
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural_field::HashGridConfig;

    #[test]
    fn round_trip_is_bitwise_for_f32() {
        let cfg = FieldConfig {
            encoding: HashGridConfig { levels: 2, features_per_level: 2, log2_table_size: 6, base_resolution: 4, growth_factor: 2.0 },
            hidden_layers: 1,
            hidden_width: 8,
            leaky_relu_slope: 0.01,
        };
        let p = FieldParams::<f32>::random(2, 5, cfg, 9).unwrap();
        let mut buf = Vec::new();
        write_params(&mut buf, &p, "abc", Some(250)).unwrap();
        let (q, h) = read_params::<f32>(&buf[..]).unwrap();
        assert_eq!(p, q);
        assert_eq!(h.simplex_set_hash, "abc");
        assert_eq!(h.step, Some(250));
        assert!(read_params::<f32>(&buf[..buf.len() - 4]).is_err());
    }
}
