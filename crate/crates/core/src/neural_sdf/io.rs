//! Weight persistence: a short self-describing text header (magic,
//! architecture config, value count) followed by every parameter as raw
//! little-endian f32 in flatten order.

use super::model::{GateSdfModel, NetConfig};
use crate::geometry::RngStream;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &str = "gate-sdf-weights v1";

#[derive(Debug, thiserror::Error)]
pub enum WeightsError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed weight file: {0}")]
    Format(String),
}

pub fn save_weights(path: &Path, model: &GateSdfModel) -> Result<(), WeightsError> {
    let flat = model.flatten();
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{MAGIC}")?;
    let cfg = serde_json::to_string(&model.cfg)
        .map_err(|e| WeightsError::Format(format!("config serialization: {e}")))?;
    writeln!(w, "config {cfg}")?;
    writeln!(w, "values {}", flat.len())?;
    for v in &flat {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<GateSdfModel, WeightsError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(WeightsError::Format(format!("bad magic line {:?}", line.trim_end())));
    }
    line.clear();
    r.read_line(&mut line)?;
    let cfg_json = line
        .strip_prefix("config ")
        .ok_or_else(|| WeightsError::Format("missing config line".into()))?;
    let cfg: NetConfig = serde_json::from_str(cfg_json.trim_end())
        .map_err(|e| WeightsError::Format(format!("config parse: {e}")))?;
    line.clear();
    r.read_line(&mut line)?;
    let count: usize = line
        .trim_end()
        .strip_prefix("values ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| WeightsError::Format("missing values line".into()))?;

    // structure from the declared architecture, then overwrite parameters
    let mut model = GateSdfModel::init(cfg, &mut RngStream::new(0, 0));
    if count != model.param_count() {
        return Err(WeightsError::Format(format!(
            "header declares {count} values, architecture needs {}",
            model.param_count()
        )));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 4 {
        return Err(WeightsError::Format(format!(
            "payload is {} bytes, expected {}",
            bytes.len(),
            count * 4
        )));
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if let Some(bad) = flat.iter().find(|v| !v.is_finite()) {
        return Err(WeightsError::Format(format!("non-finite parameter {bad}")));
    }
    model.unflatten(&flat);
    Ok(model)
}
