//! Training losses for contact fields and the evaluation metrics reported
//! on predicted labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ContactField, Vec3};

const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub gamma: f64,
    pub alpha_pos: f64,
    /// Ground-truth force magnitude below which direction is ignored (N).
    pub tau_dir: f64,
    pub w_clip: [f64; 2],
    pub lambda_prob: f64,
    pub lambda_force: f64,
    pub lambda_mag: f64,
    pub lambda_dir: f64,
    pub w_scale: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            gamma: 0.75,
            alpha_pos: 0.9,
            tau_dir: 0.005,
            w_clip: [1.0, 3.0],
            lambda_prob: 1.0,
            lambda_force: 2.0,
            lambda_mag: 1.5,
            lambda_dir: 1.0,
            w_scale: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) {
            return Err(Error::config("gamma must be non-negative"));
        }
        if !(self.alpha_pos > 0.0 && self.alpha_pos < 1.0) {
            return Err(Error::config("alpha_pos must lie in (0, 1)"));
        }
        if !(self.w_clip[0] <= self.w_clip[1]) {
            return Err(Error::config("w_clip lower bound exceeds upper bound"));
        }
        let weights = [self.lambda_prob, self.lambda_force, self.lambda_mag, self.lambda_dir];
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::config("loss weights must be non-negative"));
        }
        Ok(())
    }
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::validation(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Mean focal loss of binary targets (values >= 0.5 count as positive).
pub fn focal_loss(pred: &[f64], target: &[f64], cfg: &LossConfig) -> Result<f64> {
    same_len(pred.len(), target.len())?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            let (pt, at) = if *t >= 0.5 {
                (p, cfg.alpha_pos)
            } else {
                (1.0 - p, 1.0 - cfg.alpha_pos)
            };
            -at * (1.0 - pt).powf(cfg.gamma) * pt.ln()
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Squared magnitude error weighted by the clipped log of the true magnitude.
pub fn magnitude_loss(pred: &[Vec3], gt: &[Vec3], cfg: &LossConfig) -> Result<f64> {
    same_len(pred.len(), gt.len())?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            let w = (cfg.w_scale * g.norm().ln_1p()).clamp(cfg.w_clip[0], cfg.w_clip[1]);
            w * (p.norm() - g.norm()).powi(2)
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Mean cosine distance over points whose true force exceeds `tau_dir`.
pub fn direction_loss(pred: &[Vec3], gt: &[Vec3], cfg: &LossConfig) -> Result<f64> {
    same_len(pred.len(), gt.len())?;
    let (sum, count) = pred
        .iter()
        .zip(gt)
        .filter(|(_, g)| g.norm() > cfg.tau_dir)
        .fold((0.0, 0usize), |(s, n), (p, g)| {
            let denom = (p.norm() * g.norm()).max(1e-8);
            (s + 1.0 - p.dot(g) / denom, n + 1)
        });
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub prob: f64,
    pub mag: f64,
    pub dir: f64,
}

/// `lambda_prob * prob + lambda_force * (lambda_mag * mag + lambda_dir * dir)`.
pub fn combine_losses(prob: f64, mag: f64, dir: f64, cfg: &LossConfig) -> LossBreakdown {
    LossBreakdown {
        total: cfg.lambda_prob * prob
            + cfg.lambda_force * (cfg.lambda_mag * mag + cfg.lambda_dir * dir),
        prob,
        mag,
        dir,
    }
}

/// Full training objective between a predicted and a target field.
/// Target probabilities are binarized at 0.5.
pub fn composite_loss(pred: &ContactField, gt: &ContactField, cfg: &LossConfig) -> Result<LossBreakdown> {
    cfg.validate()?;
    let prob = focal_loss(&pred.prob, &gt.prob, cfg)?;
    let mag = magnitude_loss(&pred.force, &gt.force, cfg)?;
    let dir = direction_loss(&pred.force, &gt.force, cfg)?;
    Ok(combine_losses(prob, mag, dir, cfg))
}

/// Confusion counts of thresholded predictions against binary truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_scores(pred: &[f64], gt: &[bool], threshold: f64) -> Result<Self> {
        same_len(pred.len(), gt.len())?;
        let mut c = Self::default();
        c.accumulate(pred, gt, threshold);
        Ok(c)
    }

    fn accumulate(&mut self, pred: &[f64], gt: &[bool], threshold: f64) {
        for (p, g) in pred.iter().zip(gt) {
            match (*p >= threshold, *g) {
                (true, true) => self.tp += 1,
                (true, false) => self.fp += 1,
                (false, true) => self.fn_ += 1,
                (false, false) => {}
            }
        }
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }

    /// F1, with a prediction of no positives against no positives scored 1.
    pub fn f1(&self) -> f64 {
        if self.tp + self.fp + self.fn_ == 0 {
            return 1.0;
        }
        2.0 * self.tp as f64 / (2 * self.tp + self.fp + self.fn_) as f64
    }
}

pub fn f1_score(pred: &[f64], gt: &[bool], threshold: f64) -> Result<f64> {
    Ok(Confusion::from_scores(pred, gt, threshold)?.f1())
}

/// Mean squared error over all `3N` force components.
pub fn force_mse(pred: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    same_len(pred.len(), gt.len())?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred.iter().zip(gt).map(|(p, g)| (p - g).norm_squared()).sum();
    Ok(sum / (3 * pred.len()) as f64)
}

/// Efficiency normalized by the tool's relative blade length, capped at one.
pub fn eff_norm(eff: f64, blade_len: f64, max_blade_len: f64) -> Result<f64> {
    if !(blade_len > 0.0) || !(blade_len <= max_blade_len) {
        return Err(Error::validation(format!(
            "blade length {blade_len} must lie in (0, {max_blade_len}]"
        )));
    }
    Ok((eff / (blade_len / max_blade_len)).min(1.0))
}

/// Episode-level comparison of predicted and reference fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: usize,
    pub points: usize,
    pub f1: f64,
    pub force_mse: f64,
    pub loss: LossBreakdown,
}

/// Pools all points of all frames; losses are point-weighted means.
pub fn evaluate_fields(
    pred: &[ContactField],
    gt: &[ContactField],
    threshold: f64,
    cfg: &LossConfig,
) -> Result<EvalReport> {
    same_len(pred.len(), gt.len())?;
    let mut conf = Confusion::default();
    let (mut sq, mut points) = (0.0, 0usize);
    let (mut lp, mut lm, mut dir_sum, mut dir_n) = (0.0, 0.0, 0.0, 0usize);
    for (p, g) in pred.iter().zip(gt) {
        p.validate()?;
        g.validate()?;
        same_len(p.len(), g.len())?;
        let truth: Vec<bool> = g.prob.iter().map(|c| *c >= threshold).collect();
        conf.accumulate(&p.prob, &truth, threshold);
        let n = p.len();
        if n == 0 {
            continue;
        }
        points += n;
        sq += force_mse(&p.force, &g.force)? * (3 * n) as f64;
        lp += focal_loss(&p.prob, &g.prob, cfg)? * n as f64;
        lm += magnitude_loss(&p.force, &g.force, cfg)? * n as f64;
        let k = g.force.iter().filter(|f| f.norm() > cfg.tau_dir).count();
        dir_sum += direction_loss(&p.force, &g.force, cfg)? * k as f64;
        dir_n += k;
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    Ok(EvalReport {
        frames: pred.len(),
        points,
        f1: conf.f1(),
        force_mse: mean(sq, 3 * points),
        loss: combine_losses(mean(lp, points), mean(lm, points), mean(dir_sum, dir_n), cfg),
    })
}
