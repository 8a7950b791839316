//! Analytic signed-distance scenes and point-cloud normals.

use std::path::Path;

use nalgebra::{Matrix3, Quaternion, SymmetricEigen, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Vec3;

pub const DEFAULT_NORMAL_NEIGHBORS: usize = 12;

/// One analytic primitive. Distances are negative inside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SdfPrimitive {
    /// Solid below the plane through `point`; `normal` points out of the solid.
    HalfSpace { point: [f64; 3], normal: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64 },
    Box {
        center: [f64; 3],
        half_extents: [f64; 3],
        /// `[w, x, y, z]`, identity when omitted.
        #[serde(default = "identity_quat")]
        rotation: [f64; 4],
    },
    Capsule { a: [f64; 3], b: [f64; 3], radius: f64 },
}

fn identity_quat() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

fn v(a: &[f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl SdfPrimitive {
    pub fn half_space(point: Vec3, normal: Vec3) -> Self {
        SdfPrimitive::HalfSpace {
            point: point.into(),
            normal: normal.into(),
        }
    }

    /// The table plane `z = height`, solid below.
    pub fn table(height: f64) -> Self {
        Self::half_space(Vec3::new(0.0, 0.0, height), Vec3::z())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SdfPrimitive::HalfSpace { normal, .. } => {
                if (v(normal).norm() - 1.0).abs() > 1e-6 {
                    return Err(Error::validation("half-space normal must be unit"));
                }
            }
            SdfPrimitive::Sphere { radius, .. } | SdfPrimitive::Capsule { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::validation("radius must be positive"));
                }
            }
            SdfPrimitive::Box {
                half_extents,
                rotation,
                ..
            } => {
                if !half_extents.iter().all(|h| *h > 0.0) {
                    return Err(Error::validation("box half-extents must be positive"));
                }
                let q = Quaternion::new(rotation[0], rotation[1], rotation[2], rotation[3]);
                if (q.norm() - 1.0).abs() > 1e-6 {
                    return Err(Error::validation("box rotation must be a unit quaternion"));
                }
            }
        }
        Ok(())
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        match self {
            SdfPrimitive::HalfSpace { point, normal } => (p - v(point)).dot(&v(normal)),
            SdfPrimitive::Sphere { center, radius } => (p - v(center)).norm() - radius,
            SdfPrimitive::Box {
                center,
                half_extents,
                rotation,
            } => {
                let q = UnitQuaternion::new_unchecked(Quaternion::new(
                    rotation[0],
                    rotation[1],
                    rotation[2],
                    rotation[3],
                ));
                let local = q.inverse_transform_vector(&(p - v(center)));
                let d = local.abs() - v(half_extents);
                let outside = d.map(|c| c.max(0.0)).norm();
                let inside = d.max().min(0.0);
                outside + inside
            }
            SdfPrimitive::Capsule { a, b, radius } => {
                let (a, b) = (v(a), v(b));
                let ab = b - a;
                let len2 = ab.norm_squared();
                let t = if len2 > 0.0 {
                    ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                (p - (a + ab * t)).norm() - radius
            }
        }
    }
}

/// Union of primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SdfScene {
    primitives: Vec<SdfPrimitive>,
}

impl SdfScene {
    pub fn new(primitives: Vec<SdfPrimitive>) -> Result<Self> {
        if primitives.is_empty() {
            return Err(Error::validation("scene needs at least one primitive"));
        }
        for p in &primitives {
            p.validate()?;
        }
        Ok(Self { primitives })
    }

    pub fn primitives(&self) -> &[SdfPrimitive] {
        &self.primitives
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let prims: Vec<SdfPrimitive> =
            serde_json::from_str(text).map_err(|e| Error::config(format!("scene: {e}")))?;
        Self::new(prims)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub fn signed_distance(scene: &SdfScene, p: &Vec3) -> f64 {
    scene
        .primitives
        .iter()
        .map(|prim| prim.distance(p))
        .fold(f64::INFINITY, f64::min)
}

pub fn batch_distance(scene: &SdfScene, points: &[Vec3]) -> Vec<f64> {
    points.iter().map(|p| signed_distance(scene, p)).collect()
}

/// Inward unit normals from local plane fits over the `k` nearest
/// neighbors, oriented toward the cloud centroid. Entries are `None` where
/// the neighborhood covariance has rank below two.
pub fn estimate_normals(points: &[Vec3], k: usize) -> Result<Vec<Option<Vec3>>> {
    if k < 3 {
        return Err(Error::config(format!("k = {k} is below the minimum of 3")));
    }
    if points.len() < k + 1 {
        return Err(Error::validation(format!(
            "{} points is too few for k = {k}",
            points.len()
        )));
    }
    let centroid = points.iter().sum::<Vec3>() / points.len() as f64;
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(points.len());
    let normals = points
        .iter()
        .map(|p| {
            order.clear();
            order.extend(points.iter().enumerate().map(|(j, q)| ((q - p).norm_squared(), j)));
            order.select_nth_unstable_by(k, |a, b| a.0.total_cmp(&b.0));
            // the point itself plus its k nearest neighbors
            let hood = &order[..=k];
            let mean = hood.iter().map(|(_, j)| points[*j]).sum::<Vec3>() / hood.len() as f64;
            let mut cov = Matrix3::zeros();
            for (_, j) in hood {
                let d = points[*j] - mean;
                cov += d * d.transpose();
            }
            let eig = SymmetricEigen::new(cov);
            let mut idx = [0usize, 1, 2];
            idx.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
            let (mid, max) = (eig.eigenvalues[idx[1]], eig.eigenvalues[idx[2]]);
            if !(max > 0.0) || mid <= 1e-12 * max {
                return None;
            }
            let mut n: Vec3 = eig.eigenvectors.column(idx[0]).into_owned();
            n.normalize_mut();
            if n.dot(&(centroid - p)) < 0.0 {
                n = -n;
            }
            Some(n)
        })
        .collect();
    Ok(normals)
}
