//! Contact force recovery: find per-point forces inside a 60 degree friction
//! cone whose net wrench explains the tactile measurement, with a ridge
//! penalty that is weaker where contact is likely.
//!
//! The solver is ADMM on the split `f = z`, where the `f` step is an
//! unconstrained quadratic solved through a 6x6 system and the `z` step is a
//! per-candidate cone projection.

use nalgebra::{Cholesky, DMatrix, DVector, Matrix3, Matrix6, Vector6, U6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Vec3;
use crate::tactile::{Wrench, CHARACTERISTIC_LENGTH};

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Gripper-frame position (m).
    pub position: Vec3,
    /// Unit inward normal.
    pub normal: Vec3,
    /// Heuristic contact probability.
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocpProblem {
    pub candidates: Vec<Candidate>,
    pub target: Wrench,
    pub reg_lambda: f64,
    pub reg_eps: f64,
}

impl SocpProblem {
    pub const DEFAULT_LAMBDA: f64 = 0.01;
    pub const DEFAULT_EPS: f64 = 1e-3;

    pub fn new(candidates: Vec<Candidate>, target: Wrench) -> Self {
        Self {
            candidates,
            target,
            reg_lambda: Self::DEFAULT_LAMBDA,
            reg_eps: Self::DEFAULT_EPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::EmptyProblem);
        }
        if !(self.reg_lambda >= 0.0) || !(self.reg_eps > 0.0) {
            return Err(Error::validation("need lambda >= 0 and eps > 0"));
        }
        if !self.target.is_finite() {
            return Err(Error::validation("target wrench is not finite"));
        }
        for (i, c) in self.candidates.iter().enumerate() {
            if (c.normal.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::validation(format!("candidate {i}: normal is not unit")));
            }
            if !(0.0..=1.0).contains(&c.prob) {
                return Err(Error::validation(format!("candidate {i}: prob outside [0, 1]")));
            }
            if !c.position.iter().all(|v| v.is_finite()) {
                return Err(Error::validation(format!("candidate {i}: position not finite")));
            }
        }
        Ok(())
    }

    /// Per-candidate ridge weight `lambda / (c + eps)`.
    pub fn ridge_weights(&self) -> Vec<f64> {
        self.candidates
            .iter()
            .map(|c| self.reg_lambda / (c.prob + self.reg_eps))
            .collect()
    }

    /// `sum_i |f_i|^2 / (c_i + eps)`, the quantity the ridge term penalizes.
    pub fn weighted_norm_sq(&self, forces: &[Vec3]) -> f64 {
        self.candidates
            .iter()
            .zip(forces)
            .map(|(c, f)| f.norm_squared() / (c.prob + self.reg_eps))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub rho: f64,
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub over_relaxation: f64,
    /// Rebalance `rho` when primal and dual residuals drift apart.
    pub adaptive_rho: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iters: 2000,
            tol_primal: 1e-8,
            tol_dual: 1e-8,
            over_relaxation: 1.6,
            adaptive_rho: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(Error::config("rho must be positive"));
        }
        if !(self.tol_primal > 0.0) || !(self.tol_dual > 0.0) {
            return Err(Error::config("tolerances must be positive"));
        }
        if !(1.0..=1.9).contains(&self.over_relaxation) {
            return Err(Error::config("over_relaxation must lie in [1, 1.9]"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocpSolution {
    pub forces: Vec<Vec3>,
    pub objective: f64,
    pub wrench_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub feasibility_gap: f64,
    pub kkt_residual: f64,
    pub wrench_residual: f64,
    pub objective: f64,
}

fn skew(p: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -p.z, p.y, p.z, 0.0, -p.x, -p.y, p.x, 0.0)
}

/// Unscaled grasp matrix: column block `i` is `[I; [p_i]x]`, so
/// `G f = (sum f_i, sum p_i x f_i)`.
pub fn grasp_matrix(positions: &[Vec3]) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(6, 3 * positions.len());
    for (i, p) in positions.iter().enumerate() {
        g.view_mut((0, 3 * i), (3, 3)).copy_from(&Matrix3::identity());
        g.view_mut((3, 3 * i), (3, 3)).copy_from(&skew(p));
    }
    g
}

/// Projects `v` onto `{f : |f| <= 2 f.n}`.
pub fn cone_project(v: &Vec3, n: &Vec3) -> Vec3 {
    let a = v.dot(n);
    let t = v - n * a;
    let b = t.norm();
    if b <= SQRT3 * a {
        *v
    } else if b <= -a / SQRT3 {
        Vec3::zeros()
    } else {
        let a_star = (a + SQRT3 * b) / 4.0;
        n * a_star + t * (SQRT3 * a_star / b)
    }
}

/// `max(0, |f| - 2 f.n)`.
pub fn cone_violation(f: &Vec3, n: &Vec3) -> f64 {
    (f.norm() - 2.0 * f.dot(n)).max(0.0)
}

/// Precomputed scaled blocks `[I; [p]x / L_c]` and the scaled target.
struct Scaled {
    blocks: Vec<Matrix3<f64>>,
    target: Vector6<f64>,
    ridge: Vec<f64>,
}

impl Scaled {
    fn new(problem: &SocpProblem) -> Self {
        Self {
            blocks: problem
                .candidates
                .iter()
                .map(|c| skew(&c.position) / CHARACTERISTIC_LENGTH)
                .collect(),
            target: Vector6::from_column_slice(&problem.target.scaled()),
            ridge: problem.ridge_weights(),
        }
    }

    fn apply(&self, f: &[Vec3]) -> Vector6<f64> {
        let mut out = Vector6::zeros();
        for (s, fi) in self.blocks.iter().zip(f) {
            let t = s * fi;
            out[0] += fi.x;
            out[1] += fi.y;
            out[2] += fi.z;
            out[3] += t.x;
            out[4] += t.y;
            out[5] += t.z;
        }
        out
    }

    fn apply_t(&self, w: &Vector6<f64>, i: usize) -> Vec3 {
        let top = Vec3::new(w[0], w[1], w[2]);
        let bot = Vec3::new(w[3], w[4], w[5]);
        top + self.blocks[i].transpose() * bot
    }

    fn residual(&self, f: &[Vec3]) -> Vector6<f64> {
        self.apply(f) - self.target
    }

    fn objective(&self, f: &[Vec3]) -> f64 {
        let r = self.residual(f);
        r.norm_squared()
            + self
                .ridge
                .iter()
                .zip(f)
                .map(|(w, fi)| w * fi.norm_squared())
                .sum::<f64>()
    }

    fn gradient(&self, f: &[Vec3]) -> Vec<Vec3> {
        let r = self.residual(f);
        (0..f.len())
            .map(|i| self.apply_t(&r, i) * 2.0 + f[i] * (2.0 * self.ridge[i]))
            .collect()
    }

    /// Cholesky of `I/2 + B D^-1 B^T` with `D_i = 2 w_i + rho`.
    fn factor(&self, rho: f64) -> Result<Cholesky<f64, U6>> {
        let mut m = Matrix6::identity() * 0.5;
        for (s, w) in self.blocks.iter().zip(&self.ridge) {
            let dinv = 1.0 / (2.0 * w + rho);
            let mut bi = nalgebra::Matrix6x3::zeros();
            bi.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
            bi.fixed_view_mut::<3, 3>(3, 0).copy_from(s);
            m += bi * bi.transpose() * dinv;
        }
        Cholesky::new(m).ok_or_else(|| Error::Solver("normal equations are not positive definite".into()))
    }

    /// Solves `(D + 2 B^T B) f = r` by the Woodbury identity.
    fn solve_normal(&self, chol: &Cholesky<f64, U6>, rho: f64, r: &[Vec3], out: &mut [Vec3]) {
        let dinv: Vec<f64> = self.ridge.iter().map(|w| 1.0 / (2.0 * w + rho)).collect();
        for i in 0..r.len() {
            out[i] = r[i] * dinv[i];
        }
        let y = chol.solve(&self.apply(out));
        for i in 0..r.len() {
            out[i] -= self.apply_t(&y, i) * dinv[i];
        }
    }
}

fn kkt(scaled: &Scaled, normals: &[Vec3], f: &[Vec3]) -> f64 {
    let g = scaled.gradient(f);
    f.iter()
        .zip(&g)
        .zip(normals)
        .map(|((fi, gi), n)| (fi - cone_project(&(fi - gi), n)).norm_squared())
        .sum::<f64>()
        .sqrt()
}

pub fn solve(problem: &SocpProblem, cfg: &SolverConfig) -> Result<SocpSolution> {
    solve_warm(problem, cfg, None)
}

/// Like [`solve`], starting from `warm` (projected onto the cones first).
pub fn solve_warm(
    problem: &SocpProblem,
    cfg: &SolverConfig,
    warm: Option<&[Vec3]>,
) -> Result<SocpSolution> {
    problem.validate()?;
    cfg.validate()?;
    let n = problem.candidates.len();
    let normals: Vec<Vec3> = problem.candidates.iter().map(|c| c.normal).collect();
    let scaled = Scaled::new(problem);

    let mut z: Vec<Vec3> = match warm {
        Some(w) if w.len() == n => w
            .iter()
            .zip(&normals)
            .map(|(f, nrm)| cone_project(f, nrm))
            .collect(),
        Some(w) => {
            return Err(Error::validation(format!(
                "warm start has {} forces for {n} candidates",
                w.len()
            )))
        }
        None => vec![Vec3::zeros(); n],
    };
    let mut u = vec![Vec3::zeros(); n];
    let mut f = vec![Vec3::zeros(); n];
    let mut rhs = vec![Vec3::zeros(); n];
    let bt_w: Vec<Vec3> = (0..n).map(|i| scaled.apply_t(&scaled.target, i) * 2.0).collect();

    let mut rho = cfg.rho;
    let mut chol = scaled.factor(rho)?;
    let alpha = cfg.over_relaxation;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=cfg.max_iters {
        iterations = it;
        for i in 0..n {
            rhs[i] = bt_w[i] + (z[i] - u[i]) * rho;
        }
        scaled.solve_normal(&chol, rho, &rhs, &mut f);

        let mut primal = 0.0;
        let mut dual = 0.0;
        for i in 0..n {
            let f_hat = f[i] * alpha + z[i] * (1.0 - alpha);
            let z_new = cone_project(&(f_hat + u[i]), &normals[i]);
            u[i] += f_hat - z_new;
            primal += (f[i] - z_new).norm_squared();
            dual += (z_new - z[i]).norm_squared();
            z[i] = z_new;
        }
        let primal = primal.sqrt();
        let dual = rho * dual.sqrt();
        if primal < cfg.tol_primal && dual < cfg.tol_dual {
            converged = true;
            break;
        }

        if cfg.adaptive_rho && it % 25 == 0 {
            let scale = if primal > 10.0 * dual {
                2.0
            } else if dual > 10.0 * primal {
                0.5
            } else {
                1.0
            };
            if scale != 1.0 {
                rho *= scale;
                for ui in u.iter_mut() {
                    *ui /= scale;
                }
                chol = scaled.factor(rho)?;
            }
        }
    }
    if !converged {
        log::warn!("force solve stopped after {iterations} iterations without converging");
    }

    let objective = scaled.objective(&z);
    Ok(SocpSolution {
        wrench_residual: scaled.residual(&z).norm(),
        kkt_residual: kkt(&scaled, &normals, &z),
        forces: z,
        objective,
        iterations,
        converged,
    })
}

/// Recomputes optimality and feasibility certificates for `forces`.
pub fn verify(problem: &SocpProblem, forces: &[Vec3]) -> Result<VerifyReport> {
    problem.validate()?;
    if forces.len() != problem.candidates.len() {
        return Err(Error::validation(format!(
            "{} forces for {} candidates",
            forces.len(),
            problem.candidates.len()
        )));
    }
    let scaled = Scaled::new(problem);
    let normals: Vec<Vec3> = problem.candidates.iter().map(|c| c.normal).collect();
    Ok(VerifyReport {
        feasibility_gap: forces
            .iter()
            .zip(&normals)
            .map(|(f, n)| cone_violation(f, n))
            .fold(0.0, f64::max),
        kkt_residual: kkt(&scaled, &normals, forces),
        wrench_residual: scaled.residual(forces).norm(),
        objective: scaled.objective(forces),
    })
}

/// Net wrench `(sum f_i, sum p_i x f_i)` of forces at the candidates.
pub fn net_wrench(candidates: &[Candidate], forces: &[Vec3]) -> (Vec3, Vec3) {
    candidates
        .iter()
        .zip(forces)
        .fold((Vec3::zeros(), Vec3::zeros()), |(f, t), (c, fi)| {
            (f + fi, t + c.position.cross(fi))
        })
}

/// Gradient of the objective, flattened; exposed for external certificate checks.
pub fn objective_gradient(problem: &SocpProblem, forces: &[Vec3]) -> DVector<f64> {
    let g = Scaled::new(problem).gradient(forces);
    DVector::from_iterator(3 * g.len(), g.iter().flat_map(|v| v.iter().copied()))
}
