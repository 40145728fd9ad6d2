use super::camera::DepthImage;
use crate::geometry::RngStream;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Synthesized hardware-noise model for the sim-to-"real" split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Additive Gaussian std (m).
    pub additive_std: f64,
    /// Additional std proportional to depth (m per m).
    pub proportional_std: f64,
    /// Per-pixel dropout probability.
    pub dropout: f64,
    /// Chebyshev radius (px) of deterministic erosion around depth
    /// discontinuities.
    pub erosion_radius: usize,
    /// Discontinuity threshold (m) that triggers erosion.
    pub edge_threshold: f64,
    /// Quantization step (m); 0 disables.
    pub quantization: f64,
    /// Upper clamp after perturbation (m).
    pub max_range: f64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            additive_std: 0.0,
            proportional_std: 0.0,
            dropout: 0.0,
            erosion_radius: 0,
            edge_threshold: 0.3,
            quantization: 0.0,
            max_range: 10.0,
        }
    }

    /// Mild artifacts representative of a stereo depth sensor.
    pub fn sensor_default() -> Self {
        Self {
            additive_std: 0.01,
            proportional_std: 0.004,
            dropout: 0.08,
            erosion_radius: 1,
            edge_threshold: 0.3,
            quantization: 0.005,
            max_range: 10.0,
        }
    }

    /// Harsher profile standing in for a different physical sensor, used
    /// by the fine-tuning stage.
    pub fn sensor_harsh() -> Self {
        Self {
            additive_std: 0.04,
            proportional_std: 0.012,
            dropout: 0.25,
            erosion_radius: 1,
            edge_threshold: 0.3,
            quantization: 0.02,
            max_range: 10.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.dropout) {
            return Err("dropout must lie in [0, 1]".into());
        }
        if self.additive_std < 0.0 || self.proportional_std < 0.0 || self.quantization < 0.0 {
            return Err("noise magnitudes must be non-negative".into());
        }
        Ok(())
    }
}

/// Whether a pixel sits on a depth discontinuity within the erosion radius.
fn near_edge(img: &DepthImage, u: usize, v: usize, radius: usize, threshold: f64) -> bool {
    let d = img.at(u, v) as f64;
    let r = radius as isize;
    for dv in -r..=r {
        for du in -r..=r {
            let (nu, nv) = (u as isize + du, v as isize + dv);
            if nu < 0 || nv < 0 || nu >= img.width as isize || nv >= img.height as isize {
                continue;
            }
            let n = img.at(nu as usize, nv as usize) as f64;
            if n == 0.0 || (n - d).abs() > threshold {
                return true;
            }
        }
    }
    false
}

/// Corrupt a clean depth frame: deterministic edge erosion, additive
/// (depth-proportional) Gaussian noise, dropout, quantization. Invalid
/// pixels stay invalid and no new returns are invented.
pub fn apply_noise(img: &DepthImage, model: &NoiseModel, rng: &mut RngStream) -> DepthImage {
    let mut out = img.clone();
    for v in 0..img.height {
        for u in 0..img.width {
            let d = img.at(u, v) as f64;
            if d <= 0.0 {
                continue;
            }
            if model.erosion_radius > 0
                && near_edge(img, u, v, model.erosion_radius, model.edge_threshold)
            {
                out.set(u, v, 0.0);
                continue;
            }
            if model.dropout > 0.0 && rng.gen::<f64>() < model.dropout {
                out.set(u, v, 0.0);
                continue;
            }
            let mut value = d;
            let std = model.additive_std + model.proportional_std * d;
            if std > 0.0 {
                let n: f64 = StandardNormal.sample(rng);
                value += std * n;
            }
            if model.quantization > 0.0 {
                value = (value / model.quantization).round() * model.quantization;
            }
            out.set(u, v, value.clamp(1e-3, model.max_range) as f32);
        }
    }
    out
}
