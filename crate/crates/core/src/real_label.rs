//! Pseudo ground truth for recorded episodes: heuristic contact from the
//! table plane, gated by the tactile signal, with forces recovered by the
//! cone-constrained solver.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::force_opt::{self, Candidate, SocpProblem, SolverConfig};
use crate::geometry::{estimate_normals, DEFAULT_NORMAL_NEIGHBORS};
use crate::model::{ContactField, Frame, Vec3};
use crate::tactile::{
    compute_wrench, contact_gate, filter_episode, CalibrationScale, FilterConfig, GateConfig,
    Wrench,
};

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicConfig {
    /// Height band above the table that counts as potential contact (m).
    pub epsilon_height: f64,
    pub gate: GateConfig,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            epsilon_height: 0.004,
            gate: GateConfig::default(),
        }
    }
}

impl HeuristicConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_height > 0.0) {
            return Err(Error::config("epsilon_height must be positive"));
        }
        Ok(())
    }
}

/// Probability ramp from one at the table to zero at `epsilon_height`
/// above it; everything is zero when the gate is closed.
pub fn heuristic_contact(
    frame: &Frame,
    cfg: &HeuristicConfig,
    gated_in_contact: bool,
) -> Result<ContactField> {
    cfg.validate()?;
    let table_z = frame
        .table_z
        .ok_or_else(|| Error::validation(format!("frame at t={} has no table height", frame.time)))?;
    let mut field = ContactField::zeros(frame.tool_points.len());
    if !gated_in_contact {
        return Ok(field);
    }
    for (c, p) in field.prob.iter_mut().zip(&frame.tool_points) {
        let h = p.z - table_z;
        if h < cfg.epsilon_height {
            *c = (1.0 - h / cfg.epsilon_height).clamp(0.0, 1.0);
        }
    }
    Ok(field)
}

/// Solver problem over the points with nonzero probability, in the gripper
/// frame. Returns the problem and, per candidate, its tool-point index.
pub fn build_socp(
    frame: &Frame,
    probs: &ContactField,
    wrench: Wrench,
    reg_lambda: f64,
    reg_eps: f64,
) -> Result<(SocpProblem, Vec<usize>)> {
    if probs.len() != frame.tool_points.len() {
        return Err(Error::validation(format!(
            "{} probabilities for {} tool points",
            probs.len(),
            frame.tool_points.len()
        )));
    }
    if probs.prob.iter().all(|c| *c <= 0.0) {
        return Err(Error::EmptyProblem);
    }
    let normals: Vec<Option<Vec3>> = match &frame.tool_normals {
        Some(n) => n.iter().copied().map(Some).collect(),
        None => estimate_normals(&frame.tool_points, DEFAULT_NORMAL_NEIGHBORS)?,
    };
    let pose = &frame.gripper_pose;
    let mut candidates = Vec::new();
    let mut index = Vec::new();
    for (i, (c, p)) in probs.prob.iter().zip(&frame.tool_points).enumerate() {
        if *c <= 0.0 {
            continue;
        }
        let Some(n) = normals[i] else { continue };
        if (n.norm() - 1.0).abs() > 1e-6 {
            continue;
        }
        candidates.push(Candidate {
            position: pose.world_to_gripper_point(p),
            normal: pose.world_to_gripper_vector(&n).normalize(),
            prob: *c,
        });
        index.push(i);
    }
    if candidates.is_empty() {
        return Err(Error::EmptyProblem);
    }
    let problem = SocpProblem {
        candidates,
        target: wrench,
        reg_lambda,
        reg_eps,
    };
    problem.validate()?;
    Ok((problem, index))
}

/// Per-frame record of what the labeler did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDiagnostics {
    pub t: f64,
    pub gated: bool,
    pub candidates: usize,
    /// Why the solver was not run on a gated frame.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    pub wrench_norm: f64,
    pub objective: f64,
    pub wrench_residual: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl FrameDiagnostics {
    fn idle(t: f64, gated: bool) -> Self {
        Self {
            t,
            gated,
            candidates: 0,
            skipped: None,
            wrench_norm: 0.0,
            objective: 0.0,
            wrench_residual: 0.0,
            kkt_residual: 0.0,
            iterations: 0,
            converged: true,
        }
    }
}

/// Fields are in the world frame, like the tool points they label.
#[derive(Debug, Clone, PartialEq)]
pub struct RealLabels {
    pub fields: Vec<ContactField>,
    pub diagnostics: Vec<FrameDiagnostics>,
}

/// Labels an episode with the default solver settings.
pub fn label_episode_real(
    frames: &[Frame],
    filter_cfg: &FilterConfig,
    heur_cfg: &HeuristicConfig,
    cal: CalibrationScale,
    reg_lambda: f64,
    reg_eps: f64,
) -> Result<RealLabels> {
    label_episode_real_with(
        frames,
        filter_cfg,
        heur_cfg,
        cal,
        reg_lambda,
        reg_eps,
        &SolverConfig::default(),
    )
}

pub fn label_episode_real_with(
    frames: &[Frame],
    filter_cfg: &FilterConfig,
    heur_cfg: &HeuristicConfig,
    cal: CalibrationScale,
    reg_lambda: f64,
    reg_eps: f64,
    solver: &SolverConfig,
) -> Result<RealLabels> {
    heur_cfg.validate()?;
    solver.validate()?;
    let mut filtered = frames.to_vec();
    filter_episode(&mut filtered, filter_cfg)?;
    let states: Vec<_> = filtered.iter().map(|f| f.tactile.clone()).collect();
    let gates = contact_gate(&states, &heur_cfg.gate)?;

    let results: Vec<Result<(ContactField, FrameDiagnostics)>> = filtered
        .par_iter()
        .zip(gates.par_iter())
        .map(|(frame, &gated)| {
            let mut field = heuristic_contact(frame, heur_cfg, gated)?;
            let mut diag = FrameDiagnostics::idle(frame.time, gated);
            if !gated {
                return Ok((field, diag));
            }
            let wrench = compute_wrench(&frame.tactile, &frame.gripper_pose, cal)?;
            diag.wrench_norm = wrench.scaled_norm();
            let (problem, index) = match build_socp(frame, &field, wrench, reg_lambda, reg_eps) {
                Ok(v) => v,
                Err(Error::EmptyProblem) => {
                    log::info!("t={}: gated in contact but no candidates", frame.time);
                    diag.skipped = Some("no contact candidates".into());
                    return Ok((field, diag));
                }
                Err(e) => return Err(e),
            };
            let sol = force_opt::solve(&problem, solver)?;
            if !sol.converged {
                log::warn!("t={}: force solve did not converge", frame.time);
            }
            for (k, &i) in index.iter().enumerate() {
                field.force[i] = frame.gripper_pose.orientation * sol.forces[k];
            }
            diag.candidates = index.len();
            diag.objective = sol.objective;
            diag.wrench_residual = sol.wrench_residual;
            diag.kkt_residual = sol.kkt_residual;
            diag.iterations = sol.iterations;
            diag.converged = sol.converged;
            Ok((field, diag))
        })
        .collect();

    let mut fields = Vec::with_capacity(results.len());
    let mut diagnostics = Vec::with_capacity(results.len());
    for r in results {
        let (f, d) = r?;
        fields.push(f);
        diagnostics.push(d);
    }
    Ok(RealLabels { fields, diagnostics })
}
