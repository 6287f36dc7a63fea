//! Weighted multi-task differential inverse kinematics.
//!
//! Each step solves
//!
//! ```text
//! min_q̇  Σ_tasks ‖J_e q̇ − α_e e‖²_{W_e}   s.t.  lb ≤ q̇ ≤ ub
//! ```
//!
//! where `e = target − current` for every task, so the minimizer drives each
//! residual toward zero at rate `α_e`. The box is the tighter of the joint
//! velocity limits and the distance to the position limits over one step.

use nalgebra::{DMatrix, DVector, Matrix6xX, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose;
use crate::kinematics::{pose_error, ChainModel, Frame, JointVector, KinematicsError};
use crate::qp::{solve_box_qp, QpError};

#[derive(Debug, Error)]
pub enum IkError {
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("invalid IK problem: {0}")]
    InvalidProblem(String),
}

#[derive(Debug, Clone)]
pub enum TaskKind {
    /// Full 6-D pose residual `(p_des − p, log(R_des Rᵀ))`; zero weights
    /// drop components (e.g. position-only targets).
    EndEffector { target: Pose },
    /// Joint-space residual `q_des − q`.
    Regularization { target: JointVector },
}

#[derive(Debug, Clone)]
pub struct Task {
    pub kind: TaskKind,
    /// Diagonal of the (PSD) weight matrix W_e.
    pub weight: DVector<f64>,
    /// Gain α in 1/s.
    pub gain: f64,
}

impl Task {
    pub fn end_effector(target: Pose, weight: [f64; 6], gain: f64) -> Self {
        Self {
            kind: TaskKind::EndEffector { target },
            weight: DVector::from_column_slice(&weight),
            gain,
        }
    }

    pub fn position(target: nalgebra::Vector3<f64>, gain: f64) -> Self {
        Self::end_effector(Pose::from_translation(target), [1.0, 1.0, 1.0, 0.0, 0.0, 0.0], gain)
    }

    pub fn regularization(target: JointVector, weight: DVector<f64>, gain: f64) -> Self {
        Self {
            kind: TaskKind::Regularization { target },
            weight,
            gain,
        }
    }

    fn is_end_effector(&self) -> bool {
        matches!(self.kind, TaskKind::EndEffector { .. })
    }

    /// Residual `e` and the Jacobian of the tracked quantity.
    fn linearize(&self, model: &ChainModel, q: &JointVector) -> Result<(DVector<f64>, DMatrix<f64>), IkError> {
        match &self.kind {
            TaskKind::EndEffector { target } => {
                let current = model.forward_kinematics(q, Frame::EndEffector)?;
                let e: Vector6<f64> = pose_error(target, &current);
                let j: Matrix6xX<f64> = model.jacobian(q, Frame::EndEffector)?;
                let (r, c) = j.shape();
                Ok((
                    DVector::from_column_slice(e.as_slice()),
                    DMatrix::from_column_slice(r, c, j.as_slice()),
                ))
            }
            TaskKind::Regularization { target } => {
                Ok((target - q, DMatrix::identity(q.len(), q.len())))
            }
        }
    }

    /// Norm of the residual over the components with positive weight.
    fn residual_norm(&self, e: &DVector<f64>) -> f64 {
        e.iter()
            .zip(self.weight.iter())
            .filter(|(_, w)| **w > 0.0)
            .map(|(e, _)| e * e)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct IkProblem<'m> {
    pub model: &'m ChainModel,
    pub tasks: Vec<Task>,
    /// Integration step in seconds.
    pub dt: f64,
    pub max_iters: usize,
    /// Convergence threshold on the end-effector residual norm
    /// (meters and radians combined).
    pub tol: f64,
    pub lower: JointVector,
    pub upper: JointVector,
    pub max_velocity: JointVector,
    /// Levenberg-Marquardt factor: `damping · Σ eᵀWe` over the end-effector
    /// tasks is added to the diagonal of H. Vanishes at a solution.
    pub damping: f64,
}

impl<'m> IkProblem<'m> {
    pub fn new(model: &'m ChainModel, tasks: Vec<Task>) -> Self {
        Self {
            model,
            tasks,
            dt: 0.02,
            max_iters: 200,
            tol: 1e-3,
            lower: model.lower(),
            upper: model.upper(),
            max_velocity: model.max_velocity(),
            damping: 0.1,
        }
    }

    /// Pins the listed joints: zero velocity bounds.
    pub fn freeze(mut self, joints: &[usize]) -> Self {
        for &i in joints {
            self.max_velocity[i] = 0.0;
        }
        self
    }

    fn validate(&self) -> Result<(), IkError> {
        let n = self.model.dof();
        let bad = |m: String| Err(IkError::InvalidProblem(m));
        if self.tasks.is_empty() {
            return bad("no tasks".into());
        }
        if !(self.dt > 0.0) || !(self.tol > 0.0) || !(self.damping >= 0.0) {
            return bad(format!("dt {} and tol {} must be positive", self.dt, self.tol));
        }
        for t in &self.tasks {
            let expected = match &t.kind {
                TaskKind::EndEffector { .. } => 6,
                TaskKind::Regularization { target } => {
                    if target.len() != n {
                        return bad(format!("regularization target has {} entries, model {n}", target.len()));
                    }
                    n
                }
            };
            if t.weight.len() != expected {
                return bad(format!("weight has {} entries, expected {expected}", t.weight.len()));
            }
            if t.weight.iter().any(|w| !(*w >= 0.0)) || !(t.gain > 0.0) {
                return bad("weights must be >= 0 and gains > 0".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IkStep {
    pub qdot: JointVector,
    /// Residual norm per task, in task order, at the input configuration.
    pub residuals: Vec<f64>,
}

/// One differential-IK step at `q`.
pub fn ik_step(problem: &IkProblem<'_>, q: &JointVector) -> Result<IkStep, IkError> {
    problem.validate()?;
    let n = problem.model.dof();
    if q.len() != n {
        return Err(KinematicsError::Dimension {
            expected: n,
            actual: q.len(),
        }
        .into());
    }
    let mut h = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    let mut residuals = Vec::with_capacity(problem.tasks.len());
    let mut energy = 0.0;
    for task in &problem.tasks {
        let (e, j) = task.linearize(problem.model, q)?;
        residuals.push(task.residual_norm(&e));
        if task.is_end_effector() {
            energy += e.iter().zip(task.weight.iter()).map(|(e, w)| w * e * e).sum::<f64>();
        }
        // JᵀW without forming diag(W).
        let mut jtw = j.transpose();
        for (c, w) in task.weight.iter().enumerate() {
            jtw.column_mut(c).scale_mut(*w);
        }
        h += &jtw * &j;
        g -= (&jtw * &e) * task.gain;
    }
    for i in 0..n {
        h[(i, i)] += problem.damping * energy;
    }
    let mut lb = DVector::zeros(n);
    let mut ub = DVector::zeros(n);
    for i in 0..n {
        let qi = q[i].clamp(problem.lower[i], problem.upper[i]);
        let v = problem.max_velocity[i];
        lb[i] = (-v).max((problem.lower[i] - qi) / problem.dt).min(0.0);
        ub[i] = v.min((problem.upper[i] - qi) / problem.dt).max(0.0);
    }
    let sol = solve_box_qp(&h, &g, &lb, &ub)?;
    Ok(IkStep {
        qdot: sol.x,
        residuals,
    })
}

#[derive(Debug, Clone)]
pub struct IkSolution {
    pub q: JointVector,
    pub converged: bool,
    pub iterations: usize,
    /// Final convergence residual (end-effector task if present).
    pub residual: f64,
    /// Convergence residual before each iteration, plus the final one.
    pub history: Vec<f64>,
}

fn convergence_residual(problem: &IkProblem<'_>, residuals: &[f64]) -> f64 {
    let ee: Vec<f64> = problem
        .tasks
        .iter()
        .zip(residuals)
        .filter(|(t, _)| t.is_end_effector())
        .map(|(_, r)| *r)
        .collect();
    if ee.is_empty() {
        residuals.iter().copied().fold(0.0, f64::max)
    } else {
        ee.into_iter().fold(0.0, f64::max)
    }
}

fn task_residuals(problem: &IkProblem<'_>, q: &JointVector) -> Result<Vec<f64>, IkError> {
    problem
        .tasks
        .iter()
        .map(|t| t.linearize(problem.model, q).map(|(e, _)| t.residual_norm(&e)))
        .collect()
}

/// Integrates `q ← clamp(q + q̇·dt)` until the end-effector residual drops
/// below `tol` or `max_iters` steps have been taken.
pub fn ik_solve(problem: &IkProblem<'_>, q0: &JointVector) -> Result<IkSolution, IkError> {
    problem.validate()?;
    let mut q = q0.clone();
    for i in 0..q.len().min(problem.lower.len()) {
        q[i] = q[i].clamp(problem.lower[i], problem.upper[i]);
    }
    let mut history = Vec::new();
    for iter in 0..problem.max_iters {
        let step = ik_step(problem, &q)?;
        let r = convergence_residual(problem, &step.residuals);
        history.push(r);
        if r < problem.tol {
            return Ok(IkSolution {
                q,
                converged: true,
                iterations: iter,
                residual: r,
                history,
            });
        }
        q += &step.qdot * problem.dt;
        for i in 0..q.len() {
            q[i] = q[i].clamp(problem.lower[i], problem.upper[i]);
        }
    }
    let r = convergence_residual(problem, &task_residuals(problem, &q)?);
    history.push(r);
    Ok(IkSolution {
        converged: r < problem.tol,
        q,
        iterations: problem.max_iters,
        residual: r,
        history,
    })
}

/// Task weights, gains and integration settings, loadable from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct IkConfig {
    pub ee_weight: [f64; 6],
    pub ee_gain: f64,
    /// Diagonal regularization weights, one per model joint.
    pub reg_weight: Vec<f64>,
    pub reg_gain: f64,
    pub damping: f64,
    pub dt: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub limits: Vec<LimitOverride>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitOverride {
    pub joint: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub max_velocity: Option<f64>,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            ee_weight: [1.0; 6],
            ee_gain: 10.0,
            // Base entries dominate so the arm moves first; arm entries are
            // small enough that the posture pull stays under the tolerance.
            reg_weight: vec![5.0, 5.0, 1e-4, 1e-4, 1e-4, 1e-4, 1e-4, 1e-4],
            reg_gain: 1.0,
            damping: 0.1,
            dt: 0.02,
            tol: 1e-3,
            max_iters: 200,
            limits: Vec::new(),
        }
    }
}

impl IkConfig {
    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// End-effector task toward `target` plus posture regularization toward
    /// `posture`.
    pub fn problem<'m>(
        &self,
        model: &'m ChainModel,
        target: Pose,
        posture: JointVector,
    ) -> Result<IkProblem<'m>, IkError> {
        if self.reg_weight.len() != model.dof() {
            return Err(IkError::InvalidProblem(format!(
                "reg_weight has {} entries, model has {} joints",
                self.reg_weight.len(),
                model.dof()
            )));
        }
        let tasks = vec![
            Task::end_effector(target, self.ee_weight, self.ee_gain),
            Task::regularization(posture, DVector::from_vec(self.reg_weight.clone()), self.reg_gain),
        ];
        let mut p = IkProblem::new(model, tasks);
        p.dt = self.dt;
        p.tol = self.tol;
        p.max_iters = self.max_iters;
        p.damping = self.damping;
        for o in &self.limits {
            let i = model
                .joints
                .iter()
                .position(|j| j.name == o.joint)
                .ok_or_else(|| IkError::InvalidProblem(format!("unknown joint {}", o.joint)))?;
            if let Some(v) = o.lower {
                p.lower[i] = v;
            }
            if let Some(v) = o.upper {
                p.upper[i] = v;
            }
            if let Some(v) = o.max_velocity {
                p.max_velocity[i] = v;
            }
            if !(p.lower[i] < p.upper[i]) {
                return Err(IkError::InvalidProblem(format!("joint {}: lower >= upper", o.joint)));
            }
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::kinematics::{ready_pose, HEIGHT, PITCH};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_q(m: &ChainModel, rng: &mut ChaCha8Rng) -> JointVector {
        m.sample_configuration(rng)
    }

    fn planar_two_link() -> ChainModel {
        ChainModel::from_json(
            r#"{
            "joints": [
              {"name":"j1","type":"revolute","axis":[0,0,1],"lower":-3.1,"upper":3.1,"max_velocity":50},
              {"name":"j2","type":"revolute","axis":[0,0,1],"origin":{"translation":[1.0,0,0]},
               "lower":-3.1,"upper":3.1,"max_velocity":50}
            ],
            "ee_offset": {"translation":[0.8,0,0]}
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn zero_residual_is_fixed_point() {
        let m = ChainModel::nominal();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_q(&m, &mut rng);
        let target = m.forward_kinematics(&q, Frame::EndEffector).unwrap();
        let p = IkConfig::default().problem(&m, target, q.clone()).unwrap();
        let step = ik_step(&p, &q).unwrap();
        assert!(step.qdot.norm() < 1e-9, "{}", step.qdot.norm());
        let sol = ik_solve(&p, &q).unwrap();
        assert!(sol.converged);
        assert!(sol.iterations <= 1);
        assert_eq!(sol.q, q);
    }

    #[test]
    fn two_link_matches_closed_form() {
        let m = planar_two_link();
        let (l1, l2) = (1.0, 0.8);
        for (x, y) in [(1.2, 0.7), (-0.4, 1.1), (0.5, -1.3), (1.6, 0.2)] {
            let mut p = IkProblem::new(&m, vec![Task::position(Vec3::new(x, y, 0.0), 10.0)]);
            p.tol = 1e-9;
            p.max_iters = 2000;
            let q0 = DVector::from_vec(vec![0.3, 0.5]);
            let sol = ik_solve(&p, &q0).unwrap();
            assert!(sol.converged, "target ({x}, {y})");
            let ee = m.forward_kinematics(&sol.q, Frame::EndEffector).unwrap().translation;
            assert!((ee - Vec3::new(x, y, 0.0)).norm() < 1e-6);
            // Analytic two-link inverse kinematics, both elbow branches.
            let c2 = (x * x + y * y - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
            let branches = [c2.acos(), -c2.acos()].map(|q2: f64| {
                let q1 = y.atan2(x) - (l2 * q2.sin()).atan2(l1 + l2 * q2.cos());
                (q1, q2)
            });
            let wrap = |a: f64| (a + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
            let matched = branches
                .iter()
                .any(|(q1, q2)| wrap(sol.q[0] - q1).abs() < 1e-5 && wrap(sol.q[1] - q2).abs() < 1e-5);
            assert!(matched, "q = {:?}, branches {:?}", sol.q, branches);
        }
    }

    #[test]
    fn heavy_base_regularization_keeps_base_still() {
        let m = ChainModel::nominal();
        let cfg = IkConfig {
            ee_weight: [1.0, 1.0, 1.0, 0.0, 0.0, 0.0],
            ..IkConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut checked = 0;
        for _ in 0..20 {
            let mut q0 = ready_pose();
            let sample = random_q(&m, &mut rng);
            q0[HEIGHT] = sample[HEIGHT];
            q0[PITCH] = sample[PITCH];
            let mut qt = random_q(&m, &mut rng);
            qt[HEIGHT] = q0[HEIGHT];
            qt[PITCH] = q0[PITCH];
            let target = m.forward_kinematics(&qt, Frame::EndEffector).unwrap();
            // Oracle: targets the arm alone can reach from q0.
            let frozen = cfg.problem(&m, target, q0.clone()).unwrap().freeze(&[HEIGHT, PITCH]);
            if !ik_solve(&frozen, &q0).unwrap().converged {
                continue;
            }
            let mut p = cfg.problem(&m, target, q0.clone()).unwrap();
            p.tasks[1].weight[HEIGHT] *= 1000.0;
            p.tasks[1].weight[PITCH] *= 1000.0;
            let sol = ik_solve(&p, &q0).unwrap();
            assert!(sol.converged);
            checked += 1;
            assert!((sol.q[HEIGHT] - q0[HEIGHT]).abs() < 1e-3);
            assert!((sol.q[PITCH] - q0[PITCH]).abs() < 1e-3);
        }
        assert!(checked >= 12, "only {checked} arm-reachable targets");
    }

    #[test]
    fn unreachable_target_stays_in_limits() {
        let m = ChainModel::nominal();
        let q0 = ready_pose();
        let target = Pose::from_translation(Vec3::new(10.0, 0.0, 0.5));
        let p = IkConfig::default().problem(&m, target, q0.clone()).unwrap();
        let sol = ik_solve(&p, &q0).unwrap();
        assert!(!sol.converged);
        assert!(m.within_limits(&sol.q, 0.0));
        let tail = &sol.history[sol.history.len() - 11..];
        for w in tail.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", tail);
        }
    }

    #[test]
    fn regularization_alone_reaches_posture() {
        let m = ChainModel::nominal();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let q0 = random_q(&m, &mut rng);
            let qd = random_q(&m, &mut rng);
            let mut p = IkProblem::new(&m, vec![Task::regularization(qd.clone(), DVector::from_element(8, 1.0), 5.0)]);
            p.max_iters = 1000;
            let sol = ik_solve(&p, &q0).unwrap();
            assert!(sol.converged);
            assert!((&sol.q - &qd).amax() < p.tol);
        }
    }

    #[test]
    fn invalid_problems() {
        let m = ChainModel::nominal();
        let p = IkProblem::new(&m, vec![]);
        assert!(matches!(ik_step(&p, &DVector::zeros(8)), Err(IkError::InvalidProblem(_))));
        let mut cfg = IkConfig::default();
        cfg.reg_weight.pop();
        assert!(cfg.problem(&m, Pose::identity(), DVector::zeros(8)).is_err());
        let cfg: IkConfig = serde_json::from_str(r#"{"limits":[{"joint":"nope","lower":0}]}"#).unwrap();
        assert!(cfg.problem(&m, Pose::identity(), DVector::zeros(8)).is_err());
    }

    #[test]
    fn frozen_joints_do_not_move() {
        let m = ChainModel::nominal();
        let q0 = ready_pose();
        let target = Pose::from_translation(Vec3::new(0.6, 0.1, 0.2));
        let p = IkConfig::default()
            .problem(&m, target, q0.clone())
            .unwrap()
            .freeze(&[HEIGHT, PITCH]);
        let sol = ik_solve(&p, &q0).unwrap();
        assert_eq!(sol.q[HEIGHT], q0[HEIGHT]);
        assert_eq!(sol.q[PITCH], q0[PITCH]);
    }
}
