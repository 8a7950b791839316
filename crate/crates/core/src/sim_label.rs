//! Dense labels from simulation geometry: soft contact probability from
//! signed distance and force fields spread from sparse contact manifolds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ContactField, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftContactConfig {
    /// Shape exponent of the decay.
    pub k_sharpness: f64,
    /// Clearance at which the probability falls to one half (m).
    pub half_prob_depth: f64,
}

impl Default for SoftContactConfig {
    fn default() -> Self {
        Self {
            k_sharpness: 1.7,
            half_prob_depth: 0.005,
        }
    }
}

impl SoftContactConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_sharpness > 0.0) || !(self.half_prob_depth > 0.0) {
            return Err(Error::config(
                "k_sharpness and half_prob_depth must be positive",
            ));
        }
        Ok(())
    }

    /// Length scale that puts `c = 0.5` at `half_prob_depth`.
    pub fn length_scale(&self) -> f64 {
        self.half_prob_depth / std::f64::consts::LN_2.powf(1.0 / self.k_sharpness)
    }
}

/// `c(d) = exp(-(max(d, 0) / lambda)^k)`: one at or below the surface,
/// decaying with clearance.
pub fn soft_contact_prob(distances: &[f64], cfg: &SoftContactConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let lambda = cfg.length_scale();
    Ok(distances
        .iter()
        .map(|d| {
            let x = d.max(0.0) / lambda;
            (-x.powf(cfg.k_sharpness)).exp()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseContact {
    pub position: [f64; 3],
    pub normal: [f64; 3],
    pub magnitude: f64,
}

impl SparseContact {
    pub fn new(position: Vec3, normal: Vec3, magnitude: f64) -> Self {
        Self {
            position: position.into(),
            normal: normal.into(),
            magnitude,
        }
    }

    pub fn position(&self) -> Vec3 {
        Vec3::from(self.position)
    }

    pub fn normal(&self) -> Vec3 {
        Vec3::from(self.normal)
    }

    pub fn validate(&self) -> Result<()> {
        if (self.normal().norm() - 1.0).abs() > 1e-6 {
            return Err(Error::validation("contact normal must be unit"));
        }
        if !(self.magnitude >= 0.0) {
            return Err(Error::validation("contact magnitude must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationConfig {
    /// Kernel locality (1/m).
    pub lambda_dist: f64,
    /// Clearance at which the depth modulation reaches zero (m).
    pub d_thresh: f64,
    /// Magnitude percentile used to clip spikes; `None` disables clipping.
    pub clip_percentile: Option<f64>,
}

impl Default for ExtrapolationConfig {
    fn default() -> Self {
        Self {
            lambda_dist: 50.0,
            d_thresh: 0.005,
            clip_percentile: Some(98.0),
        }
    }
}

impl ExtrapolationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_dist > 0.0) || !(self.d_thresh > 0.0) {
            return Err(Error::config("lambda_dist and d_thresh must be positive"));
        }
        if let Some(p) = self.clip_percentile {
            if !(p > 0.0 && p <= 100.0) {
                return Err(Error::config(format!("clip percentile {p} outside (0, 100]")));
            }
        }
        Ok(())
    }
}

/// Depth modulation: one at or below the surface, falling to zero at
/// `d_thresh` clearance.
pub fn depth_modulation(d: f64, d_thresh: f64) -> f64 {
    (1.0 - d.max(0.0) / d_thresh).max(0.0).sqrt()
}

/// Linear-interpolated percentile of `values` (sorted copy), `p` in [0, 100].
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let rank = p / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (rank - lo as f64)
}

/// Spreads sparse contact forces over the tool cloud with an inverse-square
/// kernel, tapered by clearance, then clips magnitudes above the configured
/// percentile of the nonzero magnitudes (direction kept).
pub fn extrapolate_forces(
    tool_points: &[Vec3],
    distances: &[f64],
    contacts: &[SparseContact],
    cfg: &ExtrapolationConfig,
) -> Result<Vec<Vec3>> {
    cfg.validate()?;
    if tool_points.len() != distances.len() {
        return Err(Error::validation(format!(
            "{} points but {} distances",
            tool_points.len(),
            distances.len()
        )));
    }
    for c in contacts {
        c.validate()?;
    }
    if contacts.is_empty() {
        return Ok(vec![Vec3::zeros(); tool_points.len()]);
    }
    let mut forces: Vec<Vec3> = tool_points
        .iter()
        .zip(distances)
        .map(|(p, d)| {
            let s = depth_modulation(*d, cfg.d_thresh);
            if s == 0.0 {
                return Vec3::zeros();
            }
            let mut num = Vec3::zeros();
            let mut den = 0.0;
            for c in contacts {
                let r = cfg.lambda_dist * (c.position() - p).norm();
                let w = 1.0 / (1.0 + r * r);
                num += c.normal() * (w * c.magnitude);
                den += w;
            }
            if den < 1e-12 {
                Vec3::zeros()
            } else {
                num * (s / den)
            }
        })
        .collect();

    if let Some(pct) = cfg.clip_percentile {
        let mags: Vec<f64> = forces.iter().map(|f| f.norm()).filter(|m| *m > 0.0).collect();
        if !mags.is_empty() {
            let cap = percentile(&mags, pct);
            for f in &mut forces {
                let m = f.norm();
                if m > cap {
                    *f *= cap / m;
                }
            }
        }
    }
    Ok(forces)
}

/// Full simulation label for one frame.
pub fn label_frame(
    tool_points: &[Vec3],
    distances: &[f64],
    contacts: &[SparseContact],
    soft: &SoftContactConfig,
    extra: &ExtrapolationConfig,
) -> Result<ContactField> {
    Ok(ContactField {
        prob: soft_contact_prob(distances, soft)?,
        force: extrapolate_forces(tool_points, distances, contacts, extra)?,
    })
}
