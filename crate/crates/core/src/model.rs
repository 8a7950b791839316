//! Domain types shared by every stage of the pipeline.
//!
//! All quantities are SI: meters, seconds, Newtons. Points live in the world
//! frame unless a function says otherwise.

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Marker grid rows per sensor.
pub const GRID_ROWS: usize = 7;
/// Marker grid columns per sensor.
pub const GRID_COLS: usize = 9;
pub const MARKERS_PER_SENSOR: usize = GRID_ROWS * GRID_COLS;
/// Number of past displacement samples carried per marker.
pub const HISTORY_LEN: usize = 5;
pub const HISTORY_SCALARS: usize = HISTORY_LEN * 3;

const UNIT_TOL: f64 = 1e-6;

/// Gripper pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    /// Unit quaternion, stored as given so files round-trip exactly.
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vec3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vec3, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    /// Parses `[x, y, z, qw, qx, qy, qz]`.
    pub fn from_array(a: [f64; 7]) -> Result<Self> {
        let q = Quaternion::new(a[3], a[4], a[5], a[6]);
        if !a.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("gripper pose has non-finite entries"));
        }
        if (q.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::validation(format!(
                "gripper quaternion norm {} is not unit",
                q.norm()
            )));
        }
        Ok(Self {
            position: Vec3::new(a[0], a[1], a[2]),
            orientation: UnitQuaternion::new_unchecked(q),
        })
    }

    pub fn to_array(&self) -> [f64; 7] {
        let q = self.orientation.quaternion();
        [
            self.position.x,
            self.position.y,
            self.position.z,
            q.w,
            q.i,
            q.j,
            q.k,
        ]
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    /// Maps a world-frame point into the gripper frame.
    pub fn world_to_gripper_point(&self, p: &Vec3) -> Vec3 {
        self.orientation.inverse_transform_vector(&(p - self.position))
    }

    pub fn world_to_gripper_vector(&self, v: &Vec3) -> Vec3 {
        self.orientation.inverse_transform_vector(v)
    }

    pub fn gripper_to_world_point(&self, p: &Vec3) -> Vec3 {
        self.orientation.transform_vector(p) + self.position
    }
}

/// Marker states of every tactile sensor at one timestep.
///
/// Markers are ordered sensor-major, then row-major inside each 7x9 grid.
/// Displacements and depths are expressed in each sensor's own frame
/// (x/y shear in the gel plane, z along the gel normal); `mounts` rotates
/// a sensor frame into the gripper frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TactileState {
    pub sensor_count: usize,
    pub grid_shape: (usize, usize),
    pub marker_positions: Vec<Vec3>,
    pub marker_displacements: Vec<Vec3>,
    /// Last `HISTORY_LEN` displacement vectors per marker, oldest first.
    pub displacement_history: Vec<[f64; HISTORY_SCALARS]>,
    /// Per-marker depth, negative is indentation. `None` when the sensor
    /// stream carries no depth channel.
    pub depth: Option<Vec<f64>>,
    pub mounts: Vec<UnitQuaternion<f64>>,
}

impl TactileState {
    /// All-zero state with the default two-finger layout centered on the
    /// gripper origin.
    pub fn at_rest(sensor_count: usize) -> Self {
        let n = sensor_count * MARKERS_PER_SENSOR;
        Self {
            sensor_count,
            grid_shape: (GRID_ROWS, GRID_COLS),
            marker_positions: vec![Vec3::zeros(); n],
            marker_displacements: vec![Vec3::zeros(); n],
            displacement_history: vec![[0.0; HISTORY_SCALARS]; n],
            depth: Some(vec![0.0; n]),
            mounts: default_mounts(sensor_count),
        }
    }

    pub fn marker_count(&self) -> usize {
        self.marker_positions.len()
    }

    /// Index range of one sensor's markers.
    pub fn sensor_range(&self, sensor: usize) -> std::ops::Range<usize> {
        let per = self.grid_shape.0 * self.grid_shape.1;
        sensor * per..(sensor + 1) * per
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_shape != (GRID_ROWS, GRID_COLS) {
            return Err(Error::validation(format!(
                "marker grid {:?} is not {GRID_ROWS}x{GRID_COLS}",
                self.grid_shape
            )));
        }
        let n = self.sensor_count * MARKERS_PER_SENSOR;
        if self.marker_positions.len() != n {
            return Err(Error::validation(format!(
                "{} marker positions for {} sensors (expected {n})",
                self.marker_positions.len(),
                self.sensor_count
            )));
        }
        if self.marker_displacements.len() != n {
            return Err(Error::validation(format!(
                "{} marker displacements, expected {n}",
                self.marker_displacements.len()
            )));
        }
        if self.displacement_history.len() != n {
            return Err(Error::validation(format!(
                "{} history rows, expected {n}",
                self.displacement_history.len()
            )));
        }
        if let Some(d) = &self.depth {
            if d.len() != n {
                return Err(Error::validation(format!(
                    "{} depth values, expected {n}",
                    d.len()
                )));
            }
        }
        if self.mounts.len() != self.sensor_count {
            return Err(Error::validation(format!(
                "{} sensor mounts for {} sensors",
                self.mounts.len(),
                self.sensor_count
            )));
        }
        Ok(())
    }
}

/// Two opposing fingers: even sensors sit on the -y jaw with their gel
/// normal along +y, odd sensors mirror them.
pub fn default_mounts(sensor_count: usize) -> Vec<UnitQuaternion<f64>> {
    (0..sensor_count)
        .map(|s| {
            let angle = if s % 2 == 0 {
                -std::f64::consts::FRAC_PI_2
            } else {
                std::f64::consts::FRAC_PI_2
            };
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), angle)
        })
        .collect()
}

/// Per-point contact probability and force over a tool point cloud.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContactField {
    pub prob: Vec<f64>,
    pub force: Vec<Vec3>,
}

impl ContactField {
    pub fn zeros(n: usize) -> Self {
        Self {
            prob: vec![0.0; n],
            force: vec![Vec3::zeros(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.prob.len() != self.force.len() {
            return Err(Error::validation(format!(
                "contact field has {} probabilities but {} forces",
                self.prob.len(),
                self.force.len()
            )));
        }
        if let Some(p) = self
            .prob
            .iter()
            .find(|p| !(0.0..=1.0).contains(*p) || p.is_nan())
        {
            return Err(Error::validation(format!("probability {p} outside [0, 1]")));
        }
        if self.force.iter().any(|f| !f.iter().all(|v| v.is_finite())) {
            return Err(Error::validation("non-finite force entry"));
        }
        Ok(())
    }
}

/// One timestep of an interaction episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub time: f64,
    pub tool_points: Vec<Vec3>,
    /// Inward-pointing unit normals, one per tool point.
    pub tool_normals: Option<Vec<Vec3>>,
    pub env_points: Vec<Vec3>,
    pub tactile: TactileState,
    pub gripper_pose: Pose,
    pub table_z: Option<f64>,
    pub labels: Option<ContactField>,
}

impl Frame {
    pub fn validate(&self) -> Result<()> {
        if !self.time.is_finite() {
            return Err(Error::validation("non-finite timestamp"));
        }
        if let Some(normals) = &self.tool_normals {
            if normals.len() != self.tool_points.len() {
                return Err(Error::validation(format!(
                    "{} tool normals for {} tool points",
                    normals.len(),
                    self.tool_points.len()
                )));
            }
            if let Some((i, n)) = normals
                .iter()
                .enumerate()
                .find(|(_, n)| (n.norm() - 1.0).abs() > UNIT_TOL)
            {
                return Err(Error::validation(format!(
                    "tool normal {i} has norm {}",
                    n.norm()
                )));
            }
        }
        let q = self.gripper_pose.orientation.quaternion();
        if (q.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::validation("gripper quaternion is not unit"));
        }
        self.tactile.validate()?;
        if let Some(labels) = &self.labels {
            if labels.len() != self.tool_points.len() {
                return Err(Error::validation(format!(
                    "{} labels for {} tool points",
                    labels.len(),
                    self.tool_points.len()
                )));
            }
            labels.validate()?;
        }
        Ok(())
    }
}

/// Fills each marker's history ring from the displacement sequence,
/// zero-padding before the first frame.
pub fn rebuild_history(frames: &mut [Frame]) {
    for t in 0..frames.len() {
        let n = frames[t].tactile.marker_count();
        let mut hist = vec![[0.0; HISTORY_SCALARS]; n];
        for (slot, back) in (0..HISTORY_LEN).rev().enumerate() {
            // slot 0 is the oldest sample
            let Some(src) = t.checked_sub(back) else {
                continue;
            };
            let disp = &frames[src].tactile.marker_displacements;
            if disp.len() != n {
                continue;
            }
            for (h, d) in hist.iter_mut().zip(disp) {
                h[slot * 3..slot * 3 + 3].copy_from_slice(d.as_slice());
            }
        }
        frames[t].tactile.displacement_history = hist;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_with_markers(disp: f64) -> Frame {
        let mut tactile = TactileState::at_rest(1);
        for d in &mut tactile.marker_displacements {
            *d = Vec3::new(disp, 0.0, 0.0);
        }
        Frame {
            time: 0.0,
            tool_points: vec![Vec3::zeros()],
            tool_normals: None,
            env_points: vec![],
            tactile,
            gripper_pose: Pose::identity(),
            table_z: None,
            labels: None,
        }
    }

    #[test]
    fn pose_round_trips_through_gripper_frame() {
        let pose = Pose::new(
            Vec3::new(0.1, -0.2, 0.5),
            UnitQuaternion::from_euler_angles(0.3, -0.1, 1.2),
        );
        let p = Vec3::new(0.4, 0.0, -0.3);
        let back = pose.gripper_to_world_point(&pose.world_to_gripper_point(&p));
        assert!((back - p).norm() < 1e-12);
    }

    #[test]
    fn non_unit_quaternion_rejected() {
        assert!(Pose::from_array([0.0, 0.0, 0.0, 1.0, 0.1, 0.0, 0.0]).is_err());
        assert!(Pose::from_array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).is_ok());
    }

    #[test]
    fn label_count_must_match_points() {
        let mut f = frame_with_markers(0.0);
        f.tool_points = vec![Vec3::zeros(); 5];
        f.labels = Some(ContactField::zeros(4));
        assert!(matches!(f.validate(), Err(Error::Validation(_))));
        f.labels = Some(ContactField::zeros(5));
        f.validate().unwrap();
    }

    #[test]
    fn history_is_zero_padded_oldest_first() {
        let mut frames: Vec<Frame> = (0..3)
            .map(|i| {
                let mut f = frame_with_markers(i as f64 + 1.0);
                f.time = i as f64;
                f
            })
            .collect();
        rebuild_history(&mut frames);
        let h = frames[2].tactile.displacement_history[0];
        // slots: [0, 0, 1, 2, 3] on the x component
        let xs: Vec<f64> = (0..HISTORY_LEN).map(|s| h[s * 3]).collect();
        assert_eq!(xs, vec![0.0, 0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn default_mounts_face_each_other() {
        let m = default_mounts(2);
        let z0 = m[0] * Vec3::z();
        let z1 = m[1] * Vec3::z();
        assert!((z0 - Vec3::y()).norm() < 1e-12);
        assert!((z1 + Vec3::y()).norm() < 1e-12);
    }
}
