//! Episode and contact-field file formats.
//!
//! Episodes are JSONL: one frame object per line. Contact fields reuse the
//! frame's `labels` layout (`{"t": .., "labels": {"c": [..], "f": [[..]]}}`).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    default_mounts, rebuild_history, ContactField, Frame, Pose, TactileState, Vec3,
    HISTORY_SCALARS,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelsRecord {
    pub c: Vec<f64>,
    pub f: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkersRecord {
    pub grid: [usize; 2],
    pub sensors: usize,
    pub pos: Vec<[f64; 3]>,
    pub disp: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hist: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mounts: Option<Vec<[f64; 4]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameRecord {
    pub t: f64,
    pub tool_points: Vec<[f64; 3]>,
    pub env_points: Vec<[f64; 3]>,
    pub markers: MarkersRecord,
    pub gripper_pose: [f64; 7],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_normals: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<LabelsRecord>,
}

/// A contact field tagged with its frame time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldRecord {
    pub t: f64,
    pub labels: LabelsRecord,
}

fn v3(a: &[f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn a3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl From<&ContactField> for LabelsRecord {
    fn from(f: &ContactField) -> Self {
        Self {
            c: f.prob.clone(),
            f: f.force.iter().map(a3).collect(),
        }
    }
}

impl From<&LabelsRecord> for ContactField {
    fn from(r: &LabelsRecord) -> Self {
        Self {
            prob: r.c.clone(),
            force: r.f.iter().map(v3).collect(),
        }
    }
}

impl FrameRecord {
    /// Converts to a frame. History is left empty when absent; callers
    /// rebuild it across the episode.
    fn into_frame(self) -> Result<(Frame, bool)> {
        let m = self.markers;
        let n = m.pos.len();
        let mounts = match m.mounts {
            Some(ms) => ms
                .iter()
                .map(|q| {
                    let q = Quaternion::new(q[0], q[1], q[2], q[3]);
                    if (q.norm() - 1.0).abs() > 1e-6 {
                        return Err(Error::validation("sensor mount quaternion is not unit"));
                    }
                    Ok(UnitQuaternion::new_unchecked(q))
                })
                .collect::<Result<Vec<_>>>()?,
            None => default_mounts(m.sensors),
        };
        let (history, has_history) = match m.hist {
            Some(rows) => {
                let hist = rows
                    .iter()
                    .map(|row| {
                        <[f64; HISTORY_SCALARS]>::try_from(row.as_slice()).map_err(|_| {
                            Error::validation(format!(
                                "history row has {} scalars, expected {HISTORY_SCALARS}",
                                row.len()
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                (hist, true)
            }
            None => (vec![[0.0; HISTORY_SCALARS]; n], false),
        };
        let tactile = TactileState {
            sensor_count: m.sensors,
            grid_shape: (m.grid[0], m.grid[1]),
            marker_positions: m.pos.iter().map(v3).collect(),
            marker_displacements: m.disp.iter().map(v3).collect(),
            displacement_history: history,
            depth: m.depth,
            mounts,
        };
        let frame = Frame {
            time: self.t,
            tool_points: self.tool_points.iter().map(v3).collect(),
            tool_normals: self
                .tool_normals
                .map(|ns| ns.iter().map(v3).collect()),
            env_points: self.env_points.iter().map(v3).collect(),
            tactile,
            gripper_pose: Pose::from_array(self.gripper_pose)?,
            table_z: self.table_z,
            labels: self.labels.as_ref().map(ContactField::from),
        };
        Ok((frame, has_history))
    }

    pub fn from_frame(frame: &Frame) -> Self {
        let t = &frame.tactile;
        let default = default_mounts(t.sensor_count);
        let mounts = (t.mounts != default).then(|| {
            t.mounts
                .iter()
                .map(|q| {
                    let q = q.quaternion();
                    [q.w, q.i, q.j, q.k]
                })
                .collect()
        });
        Self {
            t: frame.time,
            tool_points: frame.tool_points.iter().map(a3).collect(),
            env_points: frame.env_points.iter().map(a3).collect(),
            markers: MarkersRecord {
                grid: [t.grid_shape.0, t.grid_shape.1],
                sensors: t.sensor_count,
                pos: t.marker_positions.iter().map(a3).collect(),
                disp: t.marker_displacements.iter().map(a3).collect(),
                depth: t.depth.clone(),
                hist: Some(t.displacement_history.iter().map(|h| h.to_vec()).collect()),
                mounts,
            },
            gripper_pose: frame.gripper_pose.to_array(),
            tool_normals: frame
                .tool_normals
                .as_ref()
                .map(|ns| ns.iter().map(a3).collect()),
            table_z: frame.table_z,
            labels: frame.labels.as_ref().map(LabelsRecord::from),
        }
    }
}

fn for_each_line<R: BufRead>(
    reader: R,
    mut f: impl FnMut(usize, &str) -> Result<()>,
) -> Result<()> {
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        f(i + 1, &line)?;
    }
    Ok(())
}

/// Parses an episode from any reader. See [`read_episode`].
pub fn parse_episode<R: BufRead>(reader: R) -> Result<Vec<Frame>> {
    let mut frames = Vec::new();
    let mut all_have_history = true;
    for_each_line(reader, |line, text| {
        let record: FrameRecord = serde_json::from_str(text).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let (frame, has_hist) = record.into_frame().map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("line {line}: {m}")),
            other => other,
        })?;
        all_have_history &= has_hist;
        frame
            .validate()
            .map_err(|e| Error::Validation(format!("line {line}: {e}")))?;
        if let Some(prev) = frames.last().map(|f: &Frame| f.time) {
            if frame.time <= prev {
                return Err(Error::Validation(format!(
                    "line {line}: timestamp {} does not increase (previous {prev})",
                    frame.time
                )));
            }
        }
        frames.push(frame);
        Ok(())
    })?;
    if !all_have_history {
        rebuild_history(&mut frames);
    }
    Ok(frames)
}

/// Reads a JSONL episode, validating every frame and requiring strictly
/// increasing timestamps. Missing marker histories are rebuilt from the
/// displacement sequence.
pub fn read_episode(path: impl AsRef<Path>) -> Result<Vec<Frame>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_episode(BufReader::new(file))
}

pub fn write_episode_to<W: Write>(mut w: W, frames: &[Frame]) -> Result<()> {
    for frame in frames {
        let line = serde_json::to_string(&FrameRecord::from_frame(frame))
            .map_err(|e| Error::validation(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn write_episode(path: impl AsRef<Path>, frames: &[Frame]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_episode_to(&mut w, frames).map_err(|e| retag_io(e, path))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn retag_io(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { reason, .. } => Error::io(path, reason),
        other => other,
    }
}

/// Reads contact fields from either a field file or an episode whose frames
/// carry `labels`.
pub fn read_fields(path: impl AsRef<Path>) -> Result<Vec<(f64, ContactField)>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for_each_line(BufReader::new(file), |line, text| {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let t = value
            .get("t")
            .and_then(|t| t.as_f64())
            .ok_or_else(|| Error::Parse {
                line,
                message: "missing numeric `t`".into(),
            })?;
        let labels = value.get("labels").ok_or_else(|| Error::Parse {
            line,
            message: "missing `labels`".into(),
        })?;
        let labels: LabelsRecord =
            serde_json::from_value(labels.clone()).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
        let field = ContactField::from(&labels);
        field
            .validate()
            .map_err(|e| Error::Validation(format!("line {line}: {e}")))?;
        out.push((t, field));
        Ok(())
    })?;
    Ok(out)
}

pub fn write_fields_to<W: Write>(mut w: W, fields: &[(f64, ContactField)]) -> Result<()> {
    for (t, field) in fields {
        let rec = FieldRecord {
            t: *t,
            labels: LabelsRecord::from(field),
        };
        let line = serde_json::to_string(&rec).map_err(|e| Error::validation(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn write_fields(path: impl AsRef<Path>, fields: &[(f64, ContactField)]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_fields_to(&mut w, fields).map_err(|e| retag_io(e, path))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// ASCII PLY with per-vertex `prob` and `fx fy fz` properties.
pub fn write_ply_to<W: Write>(mut w: W, points: &[Vec3], field: &ContactField) -> Result<()> {
    if points.len() != field.len() {
        return Err(Error::validation(format!(
            "{} points but {} field entries",
            points.len(),
            field.len()
        )));
    }
    let io = |e| Error::io("<writer>", e);
    write!(
        w,
        "ply\nformat ascii 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property float prob\nproperty float fx\nproperty float fy\nproperty float fz\n\
         end_header\n",
        points.len()
    )
    .map_err(io)?;
    for ((p, c), f) in points.iter().zip(&field.prob).zip(&field.force) {
        writeln!(w, "{} {} {} {} {} {} {}", p.x, p.y, p.z, c, f.x, f.y, f.z).map_err(io)?;
    }
    Ok(())
}

pub fn write_ply(path: impl AsRef<Path>, points: &[Vec3], field: &ContactField) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_ply_to(&mut w, points, field).map_err(|e| retag_io(e, path))?;
    w.flush().map_err(|e| Error::io(path, e))
}
