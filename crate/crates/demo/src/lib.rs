//! Browser bindings for the contact-field labeler. Every export returns a
//! JSON string; the page in `www/` draws it on a canvas.

use contact_field::eval::Confusion;
use contact_field::force_opt::cone_project;
use contact_field::real_label::{label_episode_real, HeuristicConfig};
use contact_field::sim_label::{soft_contact_prob, SoftContactConfig};
use contact_field::synth::{generate_episode, NoiseConfig, Phase, SynthConfig};
use contact_field::tactile::FilterConfig;
use contact_field::{CalibrationScale, FrameId, Vec3, Wrench};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct Curve {
    pub depth_mm: Vec<f64>,
    pub prob: Vec<f64>,
    pub length_scale_mm: f64,
}

/// Samples the soft-contact probability on `[0, max_mm]` millimetres.
pub fn curve(k: f64, half_mm: f64, max_mm: f64, samples: usize) -> Result<Curve, String> {
    let cfg = SoftContactConfig { k_sharpness: k, half_prob_depth: half_mm * 1e-3 };
    let n = samples.max(2);
    let depth_mm: Vec<f64> = (0..n).map(|i| max_mm * i as f64 / (n - 1) as f64).collect();
    let d: Vec<f64> = depth_mm.iter().map(|v| v * 1e-3).collect();
    let prob = soft_contact_prob(&d, &cfg).map_err(|e| e.to_string())?;
    Ok(Curve { depth_mm, prob, length_scale_mm: cfg.length_scale() * 1e3 })
}

#[derive(Debug, Serialize)]
pub struct Projection {
    pub input: [f64; 2],
    pub projected: [f64; 2],
    pub inside: bool,
    pub distance: f64,
}

/// Projects `(tangent, normal)` onto the friction cone about the normal axis.
pub fn project(tangent: f64, normal: f64) -> Projection {
    let v = Vec3::new(tangent, 0.0, normal);
    let p = cone_project(&v, &Vec3::z());
    Projection {
        input: [tangent, normal],
        projected: [p.x, p.z],
        inside: p == v,
        distance: (p - v).norm(),
    }
}

#[derive(Debug, Serialize)]
pub struct PointLabel {
    pub x: f64,
    pub z: f64,
    pub prob: f64,
    pub truth: bool,
    pub fx: f64,
    pub fz: f64,
}

#[derive(Debug, Serialize)]
pub struct FrameView {
    pub frames: usize,
    pub frame: usize,
    pub phase: &'static str,
    pub table_z: f64,
    pub points: Vec<PointLabel>,
    pub f1: f64,
    pub wrench_norm: f64,
    pub wrench_residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ScrapeParams {
    pub press_force: f64,
    pub friction: f64,
    pub point_sigma_mm: f64,
    pub marker_noise: f64,
    pub lambda: f64,
    pub seed: u64,
}

/// Generates a scraping episode, labels it from the table and the tactile
/// wrench, and returns one frame in world coordinates (x, z).
pub fn scrape(params: ScrapeParams, frame: usize) -> Result<FrameView, String> {
    let mut cfg = SynthConfig { rng_seed: params.seed, ..Default::default() };
    cfg.episode.press_force = params.press_force;
    cfg.episode.friction = params.friction;
    cfg.noise = NoiseConfig {
        point_sigma: params.point_sigma_mm * 1e-3,
        marker_sigma: params.marker_noise,
    };
    let ep = generate_episode(&cfg).map_err(|e| e.to_string())?;
    let labels = label_episode_real(
        &ep.frames,
        &FilterConfig::disabled(),
        &HeuristicConfig::default(),
        CalibrationScale::identity(),
        params.lambda,
        1e-3,
    )
    .map_err(|e| e.to_string())?;

    let k = frame.min(ep.frames.len() - 1);
    let fr = &ep.frames[k];
    let field = &labels.fields[k];
    let mut truth = vec![false; fr.tool_points.len()];
    for &i in &ep.contact_sets[k] {
        truth[i] = true;
    }
    let f1 = Confusion::from_scores(&field.prob, &truth, 0.5).map_err(|e| e.to_string())?.f1();

    let pose = &fr.gripper_pose;
    let (mut force, mut torque) = (Vec3::zeros(), Vec3::zeros());
    for (p, f) in fr.tool_points.iter().zip(&field.force) {
        let fg = pose.world_to_gripper_vector(f);
        force += fg;
        torque += pose.world_to_gripper_point(p).cross(&fg);
    }
    let target = ep.wrenches[k];
    let residual = Wrench::new(force - target.force, torque - target.torque, FrameId::Gripper);

    let points = fr
        .tool_points
        .iter()
        .zip(&field.prob)
        .zip(&field.force)
        .zip(&truth)
        .map(|(((p, c), f), t)| PointLabel { x: p.x, z: p.z, prob: *c, truth: *t, fx: f.x, fz: f.z })
        .collect();
    Ok(FrameView {
        frames: ep.frames.len(),
        frame: k,
        phase: match ep.phases[k] {
            Phase::Approach => "approach",
            Phase::Press => "press",
            Phase::Slide => "slide",
        },
        table_z: cfg.table_z,
        points,
        f1,
        wrench_norm: target.scaled_norm(),
        wrench_residual: residual.scaled_norm(),
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn soft_contact_curve(k: f64, half_mm: f64, max_mm: f64, samples: usize) -> Result<String, JsError> {
    to_json(&curve(k, half_mm, max_mm, samples).map_err(|e| JsError::new(&e))?)
}

#[wasm_bindgen]
pub fn project_onto_cone(tangent: f64, normal: f64) -> Result<String, JsError> {
    to_json(&project(tangent, normal))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn label_scrape(
    press_force: f64,
    friction: f64,
    point_sigma_mm: f64,
    marker_noise: f64,
    lambda: f64,
    seed: u32,
    frame: usize,
) -> Result<String, JsError> {
    let params = ScrapeParams { press_force, friction, point_sigma_mm, marker_noise, lambda, seed: seed as u64 };
    to_json(&scrape(params, frame).map_err(|e| JsError::new(&e))?)
}
