//! Procedural episodes with exact ground truth: a tool held by a two-finger
//! gripper approaches a table, presses into it and slides. Tactile markers
//! are synthesized by inverting the gel model so that the measured wrench
//! equals the injected contact wrench.

use nalgebra::UnitQuaternion;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{batch_distance, SdfPrimitive, SdfScene};
use crate::model::{
    rebuild_history, ContactField, Frame, Pose, TactileState, Vec3, GRID_COLS, GRID_ROWS,
};
use crate::sim_label::{label_frame, ExtrapolationConfig, SoftContactConfig, SparseContact};
use crate::tactile::{markers_for_wrench, CalibrationScale, FrameId, Wrench};

/// Marker pitch on the gel (m).
pub const MARKER_PITCH: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    /// Thin blade box under a handle box.
    Scraper,
    /// Capsule held tip down.
    Crayon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolConfig {
    pub kind: ToolKind,
    pub blade_length: f64,
    pub blade_height: f64,
    pub blade_thickness: f64,
    pub handle_length: f64,
    pub handle_width: f64,
    pub handle_thickness: f64,
    pub crayon_length: f64,
    pub crayon_radius: f64,
    /// Target spacing of surface samples (m).
    pub point_spacing: f64,
}

impl Default for ToolConfig {
    fn default() -> Self {
        Self {
            kind: ToolKind::Scraper,
            blade_length: 0.08,
            blade_height: 0.04,
            blade_thickness: 0.003,
            handle_length: 0.1,
            handle_width: 0.02,
            handle_thickness: 0.012,
            crayon_length: 0.08,
            crayon_radius: 0.005,
            point_spacing: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    /// Final penetration of the tool tip below the table (m).
    pub approach_depth: f64,
    pub slide_length: f64,
    pub n_frames: usize,
    /// Magnitude of the net contact force (N).
    pub press_force: f64,
    /// Tangential to normal force ratio while sliding.
    pub friction: f64,
    pub dt: f64,
    /// Points within this height above the table count as touching (m).
    pub contact_tolerance: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            approach_depth: 0.0025,
            slide_length: 0.05,
            n_frames: 30,
            press_force: 5.0,
            friction: 0.3,
            dt: 1.0 / 30.0,
            contact_tolerance: 0.001,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Gaussian position noise on tool and environment points (m).
    pub point_sigma: f64,
    /// Relative Gaussian noise on each marker displacement and depth.
    pub marker_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub tool: ToolConfig,
    pub episode: EpisodeConfig,
    pub table_z: f64,
    pub noise: NoiseConfig,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            tool: ToolConfig::default(),
            episode: EpisodeConfig::default(),
            table_z: 0.0,
            noise: NoiseConfig::default(),
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.tool;
        let dims = [
            t.blade_length,
            t.blade_height,
            t.blade_thickness,
            t.handle_length,
            t.handle_width,
            t.handle_thickness,
            t.crayon_length,
            t.crayon_radius,
            t.point_spacing,
        ];
        if dims.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::config("tool dimensions must be positive"));
        }
        let e = &self.episode;
        if e.n_frames < 3 {
            return Err(Error::config("an episode needs at least 3 frames"));
        }
        if !(e.approach_depth > 0.0) || !(e.dt > 0.0) || !(e.contact_tolerance > 0.0) {
            return Err(Error::config("approach_depth, dt and contact_tolerance must be positive"));
        }
        if !(e.slide_length >= 0.0) || !(e.press_force >= 0.0) {
            return Err(Error::config("slide_length and press_force must be non-negative"));
        }
        if !(0.0..3f64.sqrt()).contains(&e.friction) {
            return Err(Error::config("friction must lie in [0, sqrt 3) to stay inside the cone"));
        }
        let reach = match t.kind {
            ToolKind::Scraper => t.blade_height,
            ToolKind::Crayon => t.crayon_radius,
        };
        if e.approach_depth > reach {
            return Err(Error::config(format!(
                "approach depth {} exceeds the tool tip height {reach}",
                e.approach_depth
            )));
        }
        if !(self.noise.point_sigma >= 0.0) || !(self.noise.marker_sigma >= 0.0) {
            return Err(Error::config("noise levels must be non-negative"));
        }
        if !self.table_z.is_finite() {
            return Err(Error::config("table_z must be finite"));
        }
        Ok(())
    }
}

/// Tool surface samples in the gripper frame with inward unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolCloud {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    /// Lowest point of the tool in the gripper frame (z).
    pub tip_z: f64,
}

/// Interior nodes `k L / (m + 1)`, `k = 1..=m`, centered on zero.
fn face_nodes(length: f64, spacing: f64) -> Vec<f64> {
    let m = ((length / spacing).round() as usize).saturating_sub(1).max(1);
    (1..=m)
        .map(|k| -0.5 * length + k as f64 * length / (m + 1) as f64)
        .collect()
}

fn sample_box(center: Vec3, half: Vec3, spacing: f64) -> Vec<(Vec3, Vec3)> {
    let mut out = Vec::new();
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for sign in [-1.0, 1.0] {
            for a in face_nodes(2.0 * half[u], spacing) {
                for b in face_nodes(2.0 * half[v], spacing) {
                    let mut p = center;
                    p[axis] += sign * half[axis];
                    p[u] += a;
                    p[v] += b;
                    let mut n = Vec3::zeros();
                    n[axis] = -sign;
                    out.push((p, n));
                }
            }
        }
    }
    out
}

fn sample_capsule(a: Vec3, b: Vec3, radius: f64, spacing: f64) -> Vec<(Vec3, Vec3)> {
    // axis along -z from a to b
    let len = (b - a).norm();
    let ring = ((2.0 * std::f64::consts::PI * radius / spacing).round() as usize).max(8);
    let mut out = Vec::new();
    let mut push_ring = |c: Vec3, z_off: f64, r: f64| {
        for k in 0..ring {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / ring as f64;
            let p = c + Vec3::new(r * phi.cos(), r * phi.sin(), z_off);
            out.push(p);
        }
    };
    for s in face_nodes(len, spacing) {
        push_ring(a + (b - a) * (0.5 + s / len), 0.0, radius);
    }
    for theta in [std::f64::consts::FRAC_PI_6, std::f64::consts::FRAC_PI_3] {
        push_ring(a, radius * theta.sin(), radius * theta.cos());
        push_ring(b, -radius * theta.sin(), radius * theta.cos());
    }
    out.push(a + Vec3::new(0.0, 0.0, radius));
    out.push(b - Vec3::new(0.0, 0.0, radius));
    out.into_iter()
        .map(|p| {
            let t = ((p - a).dot(&(b - a)) / (len * len)).clamp(0.0, 1.0);
            let axis_point = a + (b - a) * t;
            (p, (axis_point - p).normalize())
        })
        .collect()
}

/// Samples the configured tool around the grip point at the gripper origin.
pub fn tool_cloud(cfg: &ToolConfig) -> ToolCloud {
    match cfg.kind {
        ToolKind::Scraper => {
            let handle_c = Vec3::zeros();
            let handle_h = Vec3::new(cfg.handle_width, cfg.handle_thickness, cfg.handle_length) * 0.5;
            let blade_c = Vec3::new(0.0, 0.0, -0.5 * cfg.handle_length - 0.5 * cfg.blade_height);
            let blade_h = Vec3::new(cfg.blade_length, cfg.blade_thickness, cfg.blade_height) * 0.5;
            let handle = SdfPrimitive::Box {
                center: handle_c.into(),
                half_extents: handle_h.into(),
                rotation: [1.0, 0.0, 0.0, 0.0],
            };
            let blade = SdfPrimitive::Box {
                center: blade_c.into(),
                half_extents: blade_h.into(),
                rotation: [1.0, 0.0, 0.0, 0.0],
            };
            // drop samples on the interface where the boxes meet
            let mut samples: Vec<(Vec3, Vec3)> = sample_box(handle_c, handle_h, cfg.point_spacing)
                .into_iter()
                .filter(|(p, _)| blade.distance(p) > 1e-9)
                .collect();
            samples.extend(
                sample_box(blade_c, blade_h, cfg.point_spacing)
                    .into_iter()
                    .filter(|(p, _)| handle.distance(p) > 1e-9),
            );
            let (points, normals) = samples.into_iter().unzip();
            ToolCloud {
                points,
                normals,
                tip_z: blade_c.z - blade_h.z,
            }
        }
        ToolKind::Crayon => {
            let top = Vec3::new(0.0, 0.0, 0.5 * cfg.handle_length.min(cfg.crayon_length));
            let bottom = top - Vec3::new(0.0, 0.0, cfg.crayon_length);
            let (points, normals) = sample_capsule(top, bottom, cfg.crayon_radius, cfg.point_spacing)
                .into_iter()
                .unzip();
            ToolCloud {
                points,
                normals,
                tip_z: bottom.z - cfg.crayon_radius,
            }
        }
    }
}

/// Gripper-frame marker positions for two opposing gels on the jaws.
pub fn marker_layout(jaw_offset: f64) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(2 * GRID_ROWS * GRID_COLS);
    for sensor in 0..2 {
        let y = if sensor == 0 { -jaw_offset } else { jaw_offset };
        for r in 0..GRID_ROWS {
            for c in 0..GRID_COLS {
                out.push(Vec3::new(
                    (c as f64 - 0.5 * (GRID_COLS - 1) as f64) * MARKER_PITCH,
                    y,
                    (0.5 * (GRID_ROWS - 1) as f64 - r as f64) * MARKER_PITCH,
                ));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Approach,
    Press,
    Slide,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthEpisode {
    /// Frames carry the ground-truth field in `labels`.
    pub frames: Vec<Frame>,
    pub ground_truth: Vec<ContactField>,
    /// World-frame contact forces; `normal` holds the force direction.
    pub contacts: Vec<Vec<SparseContact>>,
    /// Indices of tool points touching the table, per frame.
    pub contact_sets: Vec<Vec<usize>>,
    /// Injected wrench in the gripper frame, per frame.
    pub wrenches: Vec<Wrench>,
    pub phases: Vec<Phase>,
}

fn phase_counts(n: usize) -> (usize, usize, usize) {
    let approach = ((0.3 * n as f64).round() as usize).max(1);
    let press = ((0.2 * n as f64).round() as usize).max(1);
    (approach, press, n - approach - press)
}

pub fn generate_episode(cfg: &SynthConfig) -> Result<SynthEpisode> {
    cfg.validate()?;
    let ep = &cfg.episode;
    let cloud = tool_cloud(&cfg.tool);
    let jaw = 0.5 * match cfg.tool.kind {
        ToolKind::Scraper => cfg.tool.handle_thickness,
        ToolKind::Crayon => 2.0 * cfg.tool.crayon_radius,
    };
    let markers = marker_layout(jaw);
    let table = SdfScene::new(vec![SdfPrimitive::table(cfg.table_z)])?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let env_local: Vec<Vec3> = (-10..=10)
        .flat_map(|i| (-10..=10).map(move |j| Vec3::new(i as f64 * 0.01, j as f64 * 0.01, 0.0)))
        .collect();

    let (n_a, n_p, _) = phase_counts(ep.n_frames);
    let mut out = SynthEpisode {
        frames: Vec::with_capacity(ep.n_frames),
        ground_truth: Vec::new(),
        contacts: Vec::new(),
        contact_sets: Vec::new(),
        wrenches: Vec::new(),
        phases: Vec::new(),
    };

    for k in 0..ep.n_frames {
        // height of the tool tip above the table and slide offset
        let (phase, tip_h, x) = if k < n_a {
            let s = if n_a == 1 { 1.0 } else { k as f64 / (n_a - 1) as f64 };
            (Phase::Approach, 0.030 + (0.005 - 0.030) * s, 0.0)
        } else if k < n_a + n_p {
            let s = (k - n_a + 1) as f64 / n_p as f64;
            (Phase::Press, -ep.approach_depth * s, 0.0)
        } else {
            let n_s = ep.n_frames - n_a - n_p;
            let s = (k - n_a - n_p + 1) as f64 / n_s as f64;
            (Phase::Slide, -ep.approach_depth, ep.slide_length * s)
        };
        let pose = Pose::new(
            Vec3::new(x, 0.0, cfg.table_z + tip_h - cloud.tip_z),
            UnitQuaternion::identity(),
        );
        let world: Vec<Vec3> = cloud.points.iter().map(|p| pose.gripper_to_world_point(p)).collect();
        let normals: Vec<Vec3> = cloud.normals.iter().map(|n| pose.orientation * n).collect();

        let contact_set: Vec<usize> = world
            .iter()
            .enumerate()
            .filter(|(_, p)| p.z <= cfg.table_z + ep.contact_tolerance)
            .map(|(i, _)| i)
            .collect();

        // share the press force by how far each point sits below the band top
        let weights: Vec<f64> = contact_set
            .iter()
            .map(|&i| cfg.table_z + ep.contact_tolerance - world[i].z)
            .collect();
        let total_w: f64 = weights.iter().sum();
        let tangent = if phase == Phase::Slide { -Vec3::x() * ep.friction } else { Vec3::zeros() };
        let dir = (Vec3::z() + tangent).normalize();
        let mut contacts = Vec::new();
        let mut wrench = Wrench::zero(FrameId::Gripper);
        if ep.press_force > 0.0 && total_w > 0.0 {
            for (&i, w) in contact_set.iter().zip(&weights) {
                let f = dir * (ep.press_force * w / total_w);
                contacts.push(SparseContact::new(world[i], dir, f.norm()));
                let f_g = pose.world_to_gripper_vector(&f);
                wrench.force += f_g;
                wrench.torque += cloud.points[i].cross(&f_g);
            }
        }

        let mut tactile = TactileState::at_rest(2);
        tactile.marker_positions = markers.iter().map(|m| pose.gripper_to_world_point(m)).collect();
        let (disp, depth) = markers_for_wrench(&tactile, &pose, &wrench, CalibrationScale::identity())?;
        tactile.marker_displacements = disp;
        tactile.depth = Some(depth);
        if cfg.noise.marker_sigma > 0.0 {
            let s = cfg.noise.marker_sigma;
            for d in tactile.marker_displacements.iter_mut() {
                for c in d.iter_mut() {
                    *c *= 1.0 + s * unit.sample(&mut rng);
                }
            }
            for d in tactile.depth.as_mut().expect("set above").iter_mut() {
                *d *= 1.0 + s * unit.sample(&mut rng);
            }
        }

        let distances = batch_distance(&table, &world);
        let gt = label_frame(
            &world,
            &distances,
            &contacts,
            &SoftContactConfig::default(),
            &ExtrapolationConfig::default(),
        )?;

        let mut tool_points = world;
        let mut env_points: Vec<Vec3> = env_local
            .iter()
            .map(|p| Vec3::new(p.x + pose.position.x, p.y + pose.position.y, cfg.table_z))
            .collect();
        if cfg.noise.point_sigma > 0.0 {
            let s = cfg.noise.point_sigma;
            for p in tool_points.iter_mut().chain(env_points.iter_mut()) {
                for c in p.iter_mut() {
                    *c += s * unit.sample(&mut rng);
                }
            }
        }

        out.frames.push(Frame {
            time: k as f64 * ep.dt,
            tool_points,
            tool_normals: Some(normals),
            env_points,
            tactile,
            gripper_pose: pose,
            table_z: Some(cfg.table_z),
            labels: Some(gt.clone()),
        });
        out.ground_truth.push(gt);
        out.contacts.push(contacts);
        out.contact_sets.push(contact_set);
        out.wrenches.push(wrench);
        out.phases.push(phase);
    }
    rebuild_history(&mut out.frames);
    Ok(out)
}
