//! Network-input assembly: the object/environment/tactile composite cloud
//! with per-point type and marker-history features, plus training-time
//! augmentation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Frame, Vec3, HISTORY_SCALARS};

/// Width of the per-point feature vector: one type scalar plus history.
pub const FEATURE_WIDTH: usize = 1 + HISTORY_SCALARS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointSource {
    Object,
    Environment,
    Tactile,
}

impl PointSource {
    pub fn code(self) -> f64 {
        match self {
            PointSource::Object => 0.0,
            PointSource::Environment => 1.0,
            PointSource::Tactile => 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeInput {
    pub points: Vec<Vec3>,
    pub features: Vec<[f64; FEATURE_WIDTH]>,
    /// (object, environment, tactile) row counts, in that order.
    pub counts: (usize, usize, usize),
    /// Set when a source had fewer points than requested and rows repeat.
    pub repeated: bool,
}

impl CompositeInput {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn tactile_rows(&self) -> std::ops::Range<usize> {
        let start = self.counts.0 + self.counts.1;
        start..start + self.counts.2
    }
}

/// Farthest-point sampling. Returns `count` indices into `points`; when the
/// cloud is smaller than `count`, the full FPS order is cycled.
pub fn farthest_point_sample(points: &[Vec3], count: usize, seed: u64) -> Vec<usize> {
    if points.is_empty() || count == 0 {
        return Vec::new();
    }
    let n = points.len();
    let take = count.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(count);
    let mut dist = vec![f64::INFINITY; n];
    let mut current = rng.gen_range(0..n);
    for _ in 0..take {
        chosen.push(current);
        let p = points[current];
        let mut best = (0usize, -1.0f64);
        for (i, q) in points.iter().enumerate() {
            let d = (q - p).norm_squared();
            if d < dist[i] {
                dist[i] = d;
            }
            if dist[i] > best.1 {
                best = (i, dist[i]);
            }
        }
        current = best.0;
    }
    for k in take..count {
        chosen.push(chosen[k % take]);
    }
    chosen
}

/// Builds the composite input for one frame. Object and environment clouds
/// are farthest-point sampled with a seed derived from the frame time; every
/// tactile marker is kept.
pub fn assemble_composite(
    frame: &Frame,
    sample_obj: usize,
    sample_env: usize,
) -> Result<CompositeInput> {
    if sample_obj == 0 || sample_env == 0 {
        return Err(Error::config("sample counts must be at least 1"));
    }
    if frame.tool_points.is_empty() || frame.env_points.is_empty() {
        return Err(Error::validation(
            "frame needs at least one tool and one environment point",
        ));
    }
    let seed = frame.time.to_bits();
    let obj_idx = farthest_point_sample(&frame.tool_points, sample_obj, seed);
    let env_idx = farthest_point_sample(&frame.env_points, sample_env, seed.rotate_left(17));
    let repeated = frame.tool_points.len() < sample_obj || frame.env_points.len() < sample_env;
    if repeated {
        log::warn!(
            "frame t={}: fewer points than requested ({} obj, {} env); repeating",
            frame.time,
            frame.tool_points.len(),
            frame.env_points.len()
        );
    }

    let tac = &frame.tactile;
    let n = obj_idx.len() + env_idx.len() + tac.marker_count();
    let mut points = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n);

    let type_row = |code: f64| {
        let mut row = [0.0; FEATURE_WIDTH];
        row[0] = code;
        row
    };
    for &i in &obj_idx {
        points.push(frame.tool_points[i]);
        features.push(type_row(PointSource::Object.code()));
    }
    for &i in &env_idx {
        points.push(frame.env_points[i]);
        features.push(type_row(PointSource::Environment.code()));
    }
    for (p, hist) in tac.marker_positions.iter().zip(&tac.displacement_history) {
        points.push(*p);
        let mut row = type_row(PointSource::Tactile.code());
        row[1..].copy_from_slice(hist);
        features.push(row);
    }

    Ok(CompositeInput {
        points,
        features,
        counts: (obj_idx.len(), env_idx.len(), tac.marker_count()),
        repeated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub max_translation: f64,
    pub max_rotation_z: f64,
    pub jitter_sigma: f64,
    pub tactile_noise_sigma: f64,
    pub rng_seed: u64,
}

impl AugmentConfig {
    pub fn none() -> Self {
        Self {
            max_translation: 0.0,
            max_rotation_z: 0.0,
            jitter_sigma: 0.0,
            tactile_noise_sigma: 0.0,
            rng_seed: 0,
        }
    }

    /// Real-world fine-tuning ranges: ±5 cm, ±15° about Z, σ 0.01 jitter,
    /// σ 0.001 tactile noise.
    pub fn real_stage(seed: u64) -> Self {
        Self {
            max_translation: 0.05,
            max_rotation_z: 15f64.to_radians(),
            jitter_sigma: 0.01,
            tactile_noise_sigma: 0.001,
            rng_seed: seed,
        }
    }

    /// Simulation pre-training ranges: ±10 cm, ±30° about Z.
    pub fn sim_stage(seed: u64) -> Self {
        Self {
            max_translation: 0.1,
            max_rotation_z: 30f64.to_radians(),
            jitter_sigma: 0.01,
            tactile_noise_sigma: 0.001,
            rng_seed: seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("max_translation", self.max_translation),
            ("max_rotation_z", self.max_rotation_z),
            ("jitter_sigma", self.jitter_sigma),
            ("tactile_noise_sigma", self.tactile_noise_sigma),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Applies `p -> Rz(angle) p + translation` to every point.
pub fn apply_rigid_z(input: &CompositeInput, angle: f64, translation: Vec3) -> CompositeInput {
    let (s, c) = angle.sin_cos();
    let mut out = input.clone();
    for p in &mut out.points {
        let x = c * p.x - s * p.y;
        let y = s * p.x + c * p.y;
        *p = Vec3::new(x, y, p.z) + translation;
    }
    out
}

/// Random shared rigid transform, per-point jitter and tactile-channel
/// noise. Deterministic in `cfg.rng_seed`.
pub fn augment(input: &CompositeInput, cfg: &AugmentConfig) -> Result<CompositeInput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut uniform = |half: f64| {
        if half > 0.0 {
            rng.gen_range(-half..=half)
        } else {
            0.0
        }
    };
    let t = Vec3::new(
        uniform(cfg.max_translation),
        uniform(cfg.max_translation),
        uniform(cfg.max_translation),
    );
    let angle = uniform(cfg.max_rotation_z);
    let mut out = apply_rigid_z(input, angle, t);

    if cfg.jitter_sigma > 0.0 {
        let jitter = Normal::new(0.0, cfg.jitter_sigma).expect("sigma validated");
        for p in &mut out.points {
            *p += Vec3::new(
                jitter.sample(&mut rng),
                jitter.sample(&mut rng),
                jitter.sample(&mut rng),
            );
        }
    }
    if cfg.tactile_noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.tactile_noise_sigma).expect("sigma validated");
        for row in &mut out.features[input.tactile_rows()] {
            for v in &mut row[1..] {
                *v += noise.sample(&mut rng);
            }
        }
    }
    Ok(out)
}
