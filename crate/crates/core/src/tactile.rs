//! Tactile marker post-processing and wrench estimation.
//!
//! The filtering chain is spatial Gaussian smoothing over each sensor's
//! marker grid, a temporal Savitzky-Golay filter per marker channel, and
//! contact-phase ramps that flatten drift before first and after last
//! contact.

use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix6x3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{rebuild_history, Frame, Pose, TactileState, Vec3};

/// Shear force per meter of in-plane marker displacement (N/m).
pub const SHEAR_GAIN: f64 = 20.0;
/// Normal force per meter of indentation (N/m).
pub const NORMAL_GAIN: f64 = 500.0;
/// Length used to put torques on the same footing as forces (m).
pub const CHARACTERISTIC_LENGTH: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseMethod {
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub spatial_enabled: bool,
    pub spatial_sigma: f64,
    pub temporal_enabled: bool,
    pub sg_window: usize,
    pub sg_polyorder: usize,
    pub precontact_smoothing: bool,
    pub postcontact_smoothing: bool,
    pub phase_method: PhaseMethod,
    pub depth_threshold: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            spatial_enabled: true,
            spatial_sigma: 0.25,
            temporal_enabled: true,
            sg_window: 7,
            sg_polyorder: 1,
            precontact_smoothing: true,
            postcontact_smoothing: true,
            phase_method: PhaseMethod::Linear,
            depth_threshold: -0.002,
        }
    }
}

impl FilterConfig {
    /// Every stage switched off; filtering becomes the identity.
    pub fn disabled() -> Self {
        Self {
            spatial_enabled: false,
            temporal_enabled: false,
            precontact_smoothing: false,
            postcontact_smoothing: false,
            ..Self::default()
        }
    }

    pub fn phase_smoothing_enabled(&self) -> bool {
        self.precontact_smoothing || self.postcontact_smoothing
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spatial_sigma > 0.0) {
            return Err(Error::config("spatial sigma must be positive"));
        }
        check_sg(self.sg_window, self.sg_polyorder)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateConfig {
    /// Frames known to be contact-free, used to estimate the noise floor.
    pub noise_window: Range<usize>,
    pub k_sigma: f64,
    pub threshold_override: Option<f64>,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            noise_window: 0..3,
            k_sigma: 3.0,
            threshold_override: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameId {
    Gripper,
    World,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
    pub frame: FrameId,
}

impl Wrench {
    pub fn zero(frame: FrameId) -> Self {
        Self {
            force: Vec3::zeros(),
            torque: Vec3::zeros(),
            frame,
        }
    }

    pub fn new(force: Vec3, torque: Vec3, frame: FrameId) -> Self {
        Self {
            force,
            torque,
            frame,
        }
    }

    /// `[force, torque / CHARACTERISTIC_LENGTH]`.
    pub fn scaled(&self) -> [f64; 6] {
        let t = self.torque / CHARACTERISTIC_LENGTH;
        [self.force.x, self.force.y, self.force.z, t.x, t.y, t.z]
    }

    /// Norm of the unit-balanced 6-vector.
    pub fn scaled_norm(&self) -> f64 {
        self.scaled().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.torque.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationScale(f64);

impl CalibrationScale {
    pub fn new(scale: f64) -> Result<Self> {
        if scale > 0.0 && scale.is_finite() {
            Ok(Self(scale))
        } else {
            Err(Error::Calibration(format!("scale must be positive, got {scale}")))
        }
    }

    pub fn identity() -> Self {
        Self(1.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

// ---------------------------------------------------------------------------
// Spatial filtering

fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m >= n {
        period as usize - 1 - m
    } else {
        m
    }
}

/// Normalized 1-D Gaussian taps for offsets `-r..=r`, `r = ceil(4 sigma)`.
pub fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let r = (4.0 * sigma).ceil().max(1.0) as isize;
    let mut w: Vec<f64> = (-r..=r)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Gaussian blur of one `rows x cols` channel (row-major) with reflect
/// boundaries (edge sample repeated). The kernel is symmetric, so the
/// operator is doubly stochastic and preserves both constants and sums.
pub fn spatial_filter(grid: &[f64], rows: usize, cols: usize, sigma: f64) -> Result<Vec<f64>> {
    if grid.len() != rows * cols {
        return Err(Error::validation(format!(
            "grid has {} values, expected {rows}x{cols}",
            grid.len()
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::config("spatial sigma must be positive"));
    }
    let taps = gaussian_taps(sigma);
    let r = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; grid.len()];
    for i in 0..rows {
        for j in 0..cols {
            tmp[i * cols + j] = taps
                .iter()
                .enumerate()
                .map(|(k, w)| w * grid[i * cols + reflect(j as isize + k as isize - r, cols)])
                .sum();
        }
    }
    let mut out = vec![0.0; grid.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[i * cols + j] = taps
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[reflect(i as isize + k as isize - r, rows) * cols + j])
                .sum();
        }
    }
    Ok(out)
}

/// Applies [`spatial_filter`] to every displacement component and the depth
/// channel of every sensor.
pub fn spatial_filter_state(state: &mut TactileState, sigma: f64) -> Result<()> {
    let (rows, cols) = state.grid_shape;
    for s in 0..state.sensor_count {
        let range = state.sensor_range(s);
        for c in 0..3 {
            let channel: Vec<f64> = state.marker_displacements[range.clone()]
                .iter()
                .map(|d| d[c])
                .collect();
            let filtered = spatial_filter(&channel, rows, cols, sigma)?;
            for (d, v) in state.marker_displacements[range.clone()].iter_mut().zip(filtered) {
                d[c] = v;
            }
        }
        if let Some(depth) = state.depth.as_mut() {
            let filtered = spatial_filter(&depth[range.clone()], rows, cols, sigma)?;
            depth[range].copy_from_slice(&filtered);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Temporal filtering

fn check_sg(window: usize, polyorder: usize) -> Result<()> {
    if window % 2 == 0 {
        return Err(Error::config(format!("window length {window} must be odd")));
    }
    if window <= polyorder {
        return Err(Error::config(format!(
            "window length {window} must exceed polyorder {polyorder}"
        )));
    }
    Ok(())
}

/// Weights that evaluate the least-squares polynomial through samples at
/// integer offsets `lo..=hi` at offset 0.
fn lsq_eval_weights(lo: isize, hi: isize, order: usize) -> Vec<f64> {
    let n = (hi - lo + 1) as usize;
    let order = order.min(n - 1);
    let scale = lo.unsigned_abs().max(hi.unsigned_abs()).max(1) as f64;
    let a = DMatrix::from_fn(n, order + 1, |i, k| {
        ((lo + i as isize) as f64 / scale).powi(k as i32)
    });
    // first row of the pseudo-inverse picks out the constant coefficient
    let svd = a.svd(true, true);
    let pinv = svd.pseudo_inverse(1e-12).expect("svd computed with U and V");
    pinv.row(0).iter().copied().collect()
}

/// Savitzky-Golay smoothing. Interior samples use the centered window;
/// the first and last `window / 2` samples are fit on the truncated window
/// that fits inside the series.
pub fn savitzky_golay(series: &[f64], window: usize, polyorder: usize) -> Result<Vec<f64>> {
    check_sg(window, polyorder)?;
    if series.len() < window {
        return Err(Error::validation(format!(
            "series of length {} is shorter than window {window}",
            series.len()
        )));
    }
    let half = (window / 2) as isize;
    let n = series.len() as isize;
    let interior = lsq_eval_weights(-half, half, polyorder);
    let mut out = Vec::with_capacity(series.len());
    for i in 0..n {
        let lo = (i - half).max(0);
        let hi = (i + half).min(n - 1);
        let weights = if lo == i - half && hi == i + half {
            std::borrow::Cow::Borrowed(&interior)
        } else {
            std::borrow::Cow::Owned(lsq_eval_weights(lo - i, hi - i, polyorder))
        };
        let v = weights
            .iter()
            .zip(&series[lo as usize..=hi as usize])
            .map(|(w, y)| w * y)
            .sum();
        out.push(v);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Contact-phase smoothing

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Replaces the pre-contact prefix with a ramp from its median to the first
/// contact value, and the post-contact suffix with a ramp from the last
/// contact value to its median. A frame is in contact when its depth is
/// below `cfg.depth_threshold`. With no contact at all the whole series
/// collapses to its median.
pub fn phase_smooth(series: &[f64], depth: &[f64], cfg: &FilterConfig) -> Result<Vec<f64>> {
    if series.len() != depth.len() {
        return Err(Error::validation(format!(
            "series has {} samples but depth has {}",
            series.len(),
            depth.len()
        )));
    }
    let mut out = series.to_vec();
    if series.is_empty() {
        return Ok(out);
    }
    let in_contact = |i: usize| depth[i] < cfg.depth_threshold;
    let first = (0..series.len()).find(|&i| in_contact(i));
    let last = (0..series.len()).rev().find(|&i| in_contact(i));
    let (Some(first), Some(last)) = (first, last) else {
        if cfg.phase_smoothing_enabled() {
            let m = median(series);
            out.iter_mut().for_each(|v| *v = m);
        }
        return Ok(out);
    };

    if cfg.precontact_smoothing && first > 0 {
        let m = median(&series[..first]);
        let target = series[first];
        for (t, v) in out[..first].iter_mut().enumerate() {
            *v = m + (target - m) * t as f64 / first as f64;
        }
    }
    let n = series.len();
    if cfg.postcontact_smoothing && last + 1 < n {
        let m = median(&series[last + 1..]);
        let start = series[last];
        let span = (n - 1 - last) as f64;
        for (k, v) in out[last + 1..].iter_mut().enumerate() {
            *v = start + (m - start) * (k + 1) as f64 / span;
        }
    }
    Ok(out)
}

/// Per-frame minimum signed height of the tool above the table, the contact
/// depth used for phase detection. `None` if any frame lacks `table_z`.
pub fn table_contact_depth(frames: &[Frame]) -> Option<Vec<f64>> {
    frames
        .iter()
        .map(|f| {
            let z = f.table_z?;
            Some(
                f.tool_points
                    .iter()
                    .map(|p| p.z - z)
                    .fold(f64::INFINITY, f64::min),
            )
        })
        .collect()
}

/// Runs the configured filter chain over an episode in place and rebuilds
/// marker histories from the filtered displacements.
pub fn filter_episode(frames: &mut [Frame], cfg: &FilterConfig) -> Result<()> {
    cfg.validate()?;
    if frames.is_empty() {
        return Ok(());
    }
    if cfg.spatial_enabled {
        for f in frames.iter_mut() {
            spatial_filter_state(&mut f.tactile, cfg.spatial_sigma)?;
        }
    }

    let phase_depth = if cfg.phase_smoothing_enabled() {
        let d = table_contact_depth(frames);
        if d.is_none() {
            log::warn!("phase smoothing skipped: frames lack table_z");
        }
        d
    } else {
        None
    };
    let temporal = cfg.temporal_enabled && frames.len() >= cfg.sg_window;
    if cfg.temporal_enabled && !temporal {
        log::warn!(
            "temporal filter skipped: {} frames < window {}",
            frames.len(),
            cfg.sg_window
        );
    }

    let markers = frames[0].tactile.marker_count();
    if frames.iter().any(|f| f.tactile.marker_count() != markers) {
        return Err(Error::validation("marker count changes within episode"));
    }
    let has_depth = frames.iter().all(|f| f.tactile.depth.is_some());

    let process = |series: Vec<f64>| -> Result<Vec<f64>> {
        let mut s = series;
        if temporal {
            s = savitzky_golay(&s, cfg.sg_window, cfg.sg_polyorder)?;
        }
        if let Some(d) = &phase_depth {
            s = phase_smooth(&s, d, cfg)?;
        }
        Ok(s)
    };

    for m in 0..markers {
        for c in 0..3 {
            let series = frames
                .iter()
                .map(|f| f.tactile.marker_displacements[m][c])
                .collect();
            for (f, v) in frames.iter_mut().zip(process(series)?) {
                f.tactile.marker_displacements[m][c] = v;
            }
        }
        if has_depth {
            let series = frames
                .iter()
                .map(|f| f.tactile.depth.as_ref().expect("checked")[m])
                .collect();
            for (f, v) in frames.iter_mut().zip(process(series)?) {
                f.tactile.depth.as_mut().expect("checked")[m] = v;
            }
        }
    }
    rebuild_history(frames);
    Ok(())
}

// ---------------------------------------------------------------------------
// Wrench estimation

/// Gripper-frame force of one marker for the linear gel model.
pub fn marker_force(
    mount: &UnitQuaternion<f64>,
    displacement: &Vec3,
    depth: f64,
    cal: CalibrationScale,
) -> Vec3 {
    let local = Vec3::new(
        SHEAR_GAIN * displacement.x,
        SHEAR_GAIN * displacement.y,
        -NORMAL_GAIN * depth,
    );
    mount * (local * cal.value())
}

/// Linear map from one marker's `(dx, dy, depth)` to its wrench
/// contribution `[force; torque]` about the gripper origin.
pub fn marker_jacobian(
    position: &Vec3,
    mount: &UnitQuaternion<f64>,
    cal: CalibrationScale,
) -> Matrix6x3<f64> {
    let axes = [
        mount * Vec3::x() * (SHEAR_GAIN * cal.value()),
        mount * Vec3::y() * (SHEAR_GAIN * cal.value()),
        mount * Vec3::z() * (-NORMAL_GAIN * cal.value()),
    ];
    let mut j = Matrix6x3::zeros();
    for (c, f) in axes.iter().enumerate() {
        let t = position.cross(f);
        j.fixed_view_mut::<3, 1>(0, c).copy_from(f);
        j.fixed_view_mut::<3, 1>(3, c).copy_from(&t);
    }
    j
}

/// Net wrench the markers report, expressed in the gripper frame about the
/// gripper origin. Marker positions are taken from the world frame through
/// `pose`.
pub fn compute_wrench(tactile: &TactileState, pose: &Pose, cal: CalibrationScale) -> Result<Wrench> {
    let depth = tactile
        .depth
        .as_ref()
        .ok_or_else(|| Error::validation("tactile state has no depth channel"))?;
    let per = tactile.grid_shape.0 * tactile.grid_shape.1;
    let mut w = Wrench::zero(FrameId::Gripper);
    for (i, ((p, d), z)) in tactile
        .marker_positions
        .iter()
        .zip(&tactile.marker_displacements)
        .zip(depth)
        .enumerate()
    {
        let mount = &tactile.mounts[i / per];
        let f = marker_force(mount, d, *z, cal);
        let r = pose.world_to_gripper_point(p);
        w.force += f;
        w.torque += r.cross(&f);
    }
    Ok(w)
}

/// Scale that aligns the observed wrench magnitude with a reference.
pub fn calibrate(observed: &Wrench, reference: &Wrench) -> Result<CalibrationScale> {
    let obs = observed.scaled_norm();
    if !(obs > 0.0) || !obs.is_finite() {
        return Err(Error::Calibration("observed wrench is zero".into()));
    }
    CalibrationScale::new(reference.scaled_norm() / obs)
}

/// Mean marker displacement magnitude, the contact-gating statistic.
pub fn gate_statistic(state: &TactileState) -> f64 {
    let n = state.marker_displacements.len();
    if n == 0 {
        return 0.0;
    }
    state.marker_displacements.iter().map(|d| d.norm()).sum::<f64>() / n as f64
}

/// Threshold implied by `cfg` for a statistic series.
pub fn gate_threshold(stats: &[f64], cfg: &GateConfig) -> Result<f64> {
    if let Some(t) = cfg.threshold_override {
        return Ok(t);
    }
    if !(cfg.k_sigma > 0.0) {
        return Err(Error::config("k_sigma must be positive"));
    }
    let w = &cfg.noise_window;
    if w.is_empty() || w.end > stats.len() {
        return Err(Error::config(format!(
            "noise window {w:?} is empty or exceeds {} frames",
            stats.len()
        )));
    }
    let noise = &stats[w.clone()];
    let mean = noise.iter().sum::<f64>() / noise.len() as f64;
    let var = noise.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / noise.len() as f64;
    Ok(mean + cfg.k_sigma * var.sqrt())
}

/// Flags frames whose statistic strictly exceeds the threshold.
pub fn gate_from_statistics(stats: &[f64], cfg: &GateConfig) -> Result<Vec<bool>> {
    let threshold = gate_threshold(stats, cfg)?;
    Ok(stats.iter().map(|s| *s > threshold).collect())
}

pub fn contact_gate(series: &[TactileState], cfg: &GateConfig) -> Result<Vec<bool>> {
    let stats: Vec<f64> = series.iter().map(gate_statistic).collect();
    gate_from_statistics(&stats, cfg)
}

// ---------------------------------------------------------------------------
// Config file

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct SpatialSection {
    enabled: Option<bool>,
    method: Option<String>,
    sigma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct TemporalSection {
    enabled: Option<bool>,
    window_length: Option<usize>,
    polyorder: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct FilteringSection {
    spatial: SpatialSection,
    temporal: TemporalSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct SmoothingSection {
    precontact_smoothing: Option<bool>,
    postcontact_smoothing: Option<bool>,
    method: Option<PhaseMethod>,
    depth_threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct GatingSection {
    noise_frames: Option<[usize; 2]>,
    k_sigma: Option<f64>,
    threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct ConfigFile {
    #[serde(rename = "Tactile_Filtering")]
    filtering: FilteringSection,
    #[serde(rename = "Contact_Smoothing")]
    smoothing: SmoothingSection,
    #[serde(rename = "Contact_Gating")]
    gating: GatingSection,
}

/// Parses a YAML (or JSON) filter/gate configuration. Missing keys take
/// their defaults.
pub fn parse_filter_config(text: &str) -> Result<(FilterConfig, GateConfig)> {
    let file: ConfigFile = if text.trim().is_empty() {
        ConfigFile::default()
    } else {
        serde_yaml::from_str(text).map_err(|e| Error::config(e.to_string()))?
    };
    if let Some(m) = &file.filtering.spatial.method {
        if m != "gaussian" {
            return Err(Error::config(format!("unsupported spatial method {m:?}")));
        }
    }
    let d = FilterConfig::default();
    let sp = &file.filtering.spatial;
    let tp = &file.filtering.temporal;
    let sm = &file.smoothing;
    let cfg = FilterConfig {
        spatial_enabled: sp.enabled.unwrap_or(d.spatial_enabled),
        spatial_sigma: sp.sigma.unwrap_or(d.spatial_sigma),
        temporal_enabled: tp.enabled.unwrap_or(d.temporal_enabled),
        sg_window: tp.window_length.unwrap_or(d.sg_window),
        sg_polyorder: tp.polyorder.unwrap_or(d.sg_polyorder),
        precontact_smoothing: sm.precontact_smoothing.unwrap_or(d.precontact_smoothing),
        postcontact_smoothing: sm.postcontact_smoothing.unwrap_or(d.postcontact_smoothing),
        phase_method: sm.method.unwrap_or(d.phase_method),
        depth_threshold: sm.depth_threshold.unwrap_or(d.depth_threshold),
    };
    cfg.validate()?;
    let g = GateConfig::default();
    let gate = GateConfig {
        noise_window: file
            .gating
            .noise_frames
            .map(|[a, b]| a..b)
            .unwrap_or(g.noise_window),
        k_sigma: file.gating.k_sigma.unwrap_or(g.k_sigma),
        threshold_override: file.gating.threshold,
    };
    Ok((cfg, gate))
}

pub fn load_filter_config(path: impl AsRef<Path>) -> Result<(FilterConfig, GateConfig)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_filter_config(&text)
}

/// Least-squares marker pattern whose [`compute_wrench`] reproduces
/// `target` exactly (minimum-norm over `(dx, dy, depth)` of every marker).
pub fn markers_for_wrench(
    tactile: &TactileState,
    pose: &Pose,
    target: &Wrench,
    cal: CalibrationScale,
) -> Result<(Vec<Vec3>, Vec<f64>)> {
    let n = tactile.marker_count();
    let per = tactile.grid_shape.0 * tactile.grid_shape.1;
    let mut a = DMatrix::zeros(6, 3 * n);
    for (i, p) in tactile.marker_positions.iter().enumerate() {
        let r = pose.world_to_gripper_point(p);
        let j = marker_jacobian(&r, &tactile.mounts[i / per], cal);
        a.view_mut((0, 3 * i), (6, 3)).copy_from(&j);
    }
    let gram = &a * a.transpose();
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::validation("marker layout cannot express a full wrench"))?;
    let w = DVector::from_column_slice(&[
        target.force.x,
        target.force.y,
        target.force.z,
        target.torque.x,
        target.torque.y,
        target.torque.z,
    ]);
    let x = a.transpose() * chol.solve(&w);
    let disp = (0..n).map(|i| Vec3::new(x[3 * i], x[3 * i + 1], 0.0)).collect();
    let depth = (0..n).map(|i| x[3 * i + 2]).collect();
    Ok((disp, depth))
}
