//! Ground-truth closed-architecture system: a hidden inner-loop controller
//! wrapped around the rigid-body plant, plus external disturbances.
//!
//! Outer-loop code talks to the plant exclusively through
//! [`ClosedArchitecture`]: it reads joint measurements and sends kinematic
//! commands `(q_d, dq_d)`, exactly like a commercial controller. The
//! inner-loop gains, structure and applied torques are private to this
//! module. Ground-truth accessors used by the experiment harness for logging
//! and oracle baselines are deliberately `pub(crate)`.

use serde::{Deserialize, Serialize};

use crate::arm::{
    self, forward_kinematics, friction_torque, gravity_vector, jacobian, ArmParams, JointState,
    Mat3, NominalModel, Vec3,
};
use crate::error::{Error, Result};

/// The only surface the outer loop may use.
pub trait ClosedArchitecture {
    fn measure(&self) -> JointState;
    fn command(&mut self, q_d: [f64; 3], dq_d: [f64; 3]);
}

/// Extra structure of the inner loop beyond its derivative term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiVariant {
    PdOnly,
    PdPlusIntegral,
    PdPlusGravityComp,
}

/// Inner-loop controller configuration. These values describe the hidden
/// firmware when building a scenario; nothing in the outer loop reads them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerLoopConfig {
    pub kp: [f64; 3],
    pub kd: [f64; 3],
    pub psi_variant: PsiVariant,
    /// Integral gain, used by `PdPlusIntegral` only.
    pub integral_gain: [f64; 3],
    /// Anti-windup clamp on the integral accumulator [rad s].
    pub integral_clamp: f64,
    /// If set, the controller outputs a voltage and the plant applies
    /// `tau = B v`.
    pub voltage_mode: bool,
}

impl Default for InnerLoopConfig {
    fn default() -> Self {
        Self {
            kp: [1.0, 1.0, 1.0],
            kd: [1.0, 1.0, 1.0],
            psi_variant: PsiVariant::PdOnly,
            integral_gain: [0.0, 0.0, 0.0],
            integral_clamp: 10.0,
            voltage_mode: false,
        }
    }
}

impl InnerLoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kd.iter().any(|&k| k <= 0.0) {
            return Err(Error::InvalidParameter(
                "inner-loop kd must be strictly positive".into(),
            ));
        }
        if self.kp.iter().chain(self.integral_gain.iter()).any(|&k| k < 0.0) {
            return Err(Error::InvalidParameter(
                "inner-loop kp and integral gains must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Deterministic time-dependent 3-vector signal used for disturbances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TimeSignal {
    Zero,
    Constant { value: [f64; 3] },
    Step { t_on: f64, value: [f64; 3] },
    Pulse { t_on: f64, t_off: f64, value: [f64; 3] },
    Sine { amplitude: [f64; 3], omega: f64, phase: f64, offset: [f64; 3] },
}

impl TimeSignal {
    pub fn eval(&self, t: f64) -> Vec3 {
        match self {
            TimeSignal::Zero => Vec3::zeros(),
            TimeSignal::Constant { value } => Vec3::from(*value),
            TimeSignal::Step { t_on, value } => {
                if t >= *t_on {
                    Vec3::from(*value)
                } else {
                    Vec3::zeros()
                }
            }
            TimeSignal::Pulse { t_on, t_off, value } => {
                if t >= *t_on && t < *t_off {
                    Vec3::from(*value)
                } else {
                    Vec3::zeros()
                }
            }
            TimeSignal::Sine { amplitude, omega, phase, offset } => {
                let s = (omega * t + phase).sin();
                Vec3::from(*amplitude) * s + Vec3::from(*offset)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, TimeSignal::Zero)
    }
}

/// External disturbances acting on the true plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceProfile {
    /// Task-space force at the wrist center [N], mapped through `J^T`.
    /// (Only the translational part of a generalized wrench is meaningful
    /// here: the model has no orientation Jacobian.)
    pub f_ext: TimeSignal,
    /// Additive per-joint actuator offset: N m in torque mode, V in voltage
    /// mode (injected before the voltage-to-torque map).
    pub joint_offset: TimeSignal,
}

impl Default for DisturbanceProfile {
    fn default() -> Self {
        Self { f_ext: TimeSignal::Zero, joint_offset: TimeSignal::Zero }
    }
}

/// Inner-loop output: torque, or voltage when `voltage_mode` is set.
/// `integ` is the accumulated position-error integral.
pub(crate) fn inner_loop_output(
    cfg: &InnerLoopConfig,
    meas: &JointState,
    cmd_q_d: &Vec3,
    cmd_dq_d: &Vec3,
    integ: &Vec3,
    params: &ArmParams,
) -> Vec3 {
    let q = meas.q_vec();
    let dq = meas.dq_vec();
    let kp = Mat3::from_diagonal(&Vec3::from(cfg.kp));
    let kd = Mat3::from_diagonal(&Vec3::from(cfg.kd));

    let mut out = -kp * (q - cmd_q_d) - kd * (dq - cmd_dq_d);
    match cfg.psi_variant {
        PsiVariant::PdOnly => {}
        PsiVariant::PdPlusIntegral => {
            let ki = Mat3::from_diagonal(&Vec3::from(cfg.integral_gain));
            out -= ki * integ;
        }
        PsiVariant::PdPlusGravityComp => {
            // Firmware compensates the gravity of the bare arm; an attached
            // payload stays unknown to it.
            let g = gravity_vector(&params.with_payload(0.0), &q);
            if cfg.voltage_mode {
                out += Vec3::from_fn(|i, _| g[i] / params.torque_map_b[i]);
            } else {
                out += g;
            }
        }
    }
    out
}

/// Joint acceleration of the true plant under a given actuator output.
pub(crate) fn plant_accel(
    params: &ArmParams,
    state: &JointState,
    actuator: &Vec3,
    voltage_mode: bool,
    dist: &DisturbanceProfile,
    t: f64,
) -> Result<Vec3> {
    let q = state.q_vec();
    let dq = state.dq_vec();

    let offset = dist.joint_offset.eval(t);
    let tau_applied = if voltage_mode {
        let b = Vec3::from(params.torque_map_b);
        Vec3::from_fn(|i, _| b[i] * (actuator[i] + offset[i]))
    } else {
        actuator + offset
    };

    let mut rhs = tau_applied - arm::coriolis_matrix(params, &q, &dq) * dq
        - gravity_vector(params, &q)
        - friction_torque(params, &dq);
    if !dist.f_ext.is_zero() {
        rhs += jacobian(params, &q).transpose() * dist.f_ext.eval(t);
    }

    let m = arm::mass_matrix(params, &q);
    match m.cholesky() {
        Some(chol) => Ok(chol.solve(&rhs)),
        None => Err(Error::SingularMass { q: state.q }),
    }
}

/// Total disturbance of the nominal acceleration channel: the residual
/// `f = accel - F(dq) - (m_bar^-1 kd_bar) dq_d` evaluated per joint.
pub fn nominal_residual(
    nominal: &NominalModel,
    dq: &Vec3,
    cmd_dq_d: &Vec3,
    accel: &Vec3,
) -> Vec3 {
    accel - nominal.drift(dq) - nominal.input_gain() * cmd_dq_d
}

/// The closed-architecture plant: single-owner mutable state, integrated with
/// RK4 between command updates. The inner loop is evaluated continuously
/// from the instantaneous state at every integration stage, while commands
/// are held between `command` calls.
#[derive(Debug, Clone)]
pub struct Plant {
    params: ArmParams,
    cfg: InnerLoopConfig,
    dist: DisturbanceProfile,
    state: JointState,
    integ: Vec3,
    cmd_q_d: Vec3,
    cmd_dq_d: Vec3,
    t: f64,
    command_calls: usize,
}

impl Plant {
    pub fn new(
        params: ArmParams,
        cfg: InnerLoopConfig,
        dist: DisturbanceProfile,
        initial: JointState,
    ) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        if !initial.is_finite() {
            return Err(Error::InvalidParameter("non-finite initial state".into()));
        }
        let q0 = initial.q_vec();
        Ok(Self {
            params,
            cfg,
            dist,
            state: initial,
            integ: Vec3::zeros(),
            cmd_q_d: q0,
            cmd_dq_d: Vec3::zeros(),
            t: 0.0,
            command_calls: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Number of `command` calls received; lets tests assert the zero-order
    /// hold (one latch per control tick, not per physics step).
    pub fn command_count(&self) -> usize {
        self.command_calls
    }

    pub fn params(&self) -> &ArmParams {
        &self.params
    }

    fn rhs(&self, t: f64, q: &Vec3, dq: &Vec3, integ: &Vec3) -> Result<[Vec3; 3]> {
        let meas = JointState::new([q[0], q[1], q[2]], [dq[0], dq[1], dq[2]]);
        let act = inner_loop_output(
            &self.cfg,
            &meas,
            &self.cmd_q_d,
            &self.cmd_dq_d,
            integ,
            &self.params,
        );
        let ddq = plant_accel(&self.params, &meas, &act, self.cfg.voltage_mode, &self.dist, t)?;
        Ok([*dq, ddq, q - self.cmd_q_d])
    }

    /// Advance the physics by one RK4 step of size `dt`.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        let (q0, dq0, i0) = (self.state.q_vec(), self.state.dq_vec(), self.integ);
        let k1 = self.rhs(self.t, &q0, &dq0, &i0)?;
        let k2 = self.rhs(
            self.t + 0.5 * dt,
            &(q0 + k1[0] * (0.5 * dt)),
            &(dq0 + k1[1] * (0.5 * dt)),
            &(i0 + k1[2] * (0.5 * dt)),
        )?;
        let k3 = self.rhs(
            self.t + 0.5 * dt,
            &(q0 + k2[0] * (0.5 * dt)),
            &(dq0 + k2[1] * (0.5 * dt)),
            &(i0 + k2[2] * (0.5 * dt)),
        )?;
        let k4 = self.rhs(
            self.t + dt,
            &(q0 + k3[0] * dt),
            &(dq0 + k3[1] * dt),
            &(i0 + k3[2] * dt),
        )?;

        let sixth = dt / 6.0;
        let q = q0 + (k1[0] + k2[0] * 2.0 + k3[0] * 2.0 + k4[0]) * sixth;
        let dq = dq0 + (k1[1] + k2[1] * 2.0 + k3[1] * 2.0 + k4[1]) * sixth;
        let mut integ = i0 + (k1[2] + k2[2] * 2.0 + k3[2] * 2.0 + k4[2]) * sixth;
        let c = self.cfg.integral_clamp;
        integ = Vec3::from_fn(|i, _| integ[i].clamp(-c, c));

        self.state = JointState::new([q[0], q[1], q[2]], [dq[0], dq[1], dq[2]]);
        self.integ = integ;
        self.t += dt;
        Ok(())
    }

    /// Acceleration at the current state under the currently held command.
    pub(crate) fn current_accel(&self) -> Result<Vec3> {
        let act = inner_loop_output(
            &self.cfg,
            &self.state,
            &self.cmd_q_d,
            &self.cmd_dq_d,
            &self.integ,
            &self.params,
        );
        plant_accel(
            &self.params,
            &self.state,
            &act,
            self.cfg.voltage_mode,
            &self.dist,
            self.t,
        )
    }

    /// Ground-truth total disturbance of the nominal channel under the
    /// currently held command (harness diagnostics and oracle baselines).
    pub(crate) fn ground_truth_f(&self, nominal: &NominalModel) -> Result<Vec3> {
        Ok(nominal_residual(
            nominal,
            &self.state.dq_vec(),
            &self.cmd_dq_d,
            &self.current_accel()?,
        ))
    }

    /// Residual the nominal channel would see under a hypothetical command
    /// `(q_d, dq_d)` at the current state. Used to evaluate the disturbance
    /// signal just before a new command latches.
    pub(crate) fn ground_truth_f_for_command(
        &self,
        nominal: &NominalModel,
        q_d: &Vec3,
        dq_d: &Vec3,
    ) -> Result<Vec3> {
        let act = inner_loop_output(&self.cfg, &self.state, q_d, dq_d, &self.integ, &self.params);
        let accel = plant_accel(
            &self.params,
            &self.state,
            &act,
            self.cfg.voltage_mode,
            &self.dist,
            self.t,
        )?;
        Ok(nominal_residual(nominal, &self.state.dq_vec(), dq_d, &accel))
    }

    /// Exact affine decomposition of the true acceleration in the velocity
    /// command: `accel(u) = a0 + A u`, where the position command latched
    /// together with `u` is `q_d = qd_base + du_coupling * u` (trapezoidal
    /// command integration makes the position command depend on `u` too).
    pub(crate) fn accel_affine(
        &self,
        qd_base: &Vec3,
        du_coupling: f64,
    ) -> Result<(Vec3, Mat3)> {
        let a0 = {
            let act = inner_loop_output(
                &self.cfg,
                &self.state,
                qd_base,
                &Vec3::zeros(),
                &self.integ,
                &self.params,
            );
            plant_accel(
                &self.params,
                &self.state,
                &act,
                self.cfg.voltage_mode,
                &self.dist,
                self.t,
            )?
        };
        // d(tau)/du = B? * (kd + du_coupling * kp), diagonal
        let b = if self.cfg.voltage_mode {
            Vec3::from(self.params.torque_map_b)
        } else {
            Vec3::new(1.0, 1.0, 1.0)
        };
        let gain_diag =
            Vec3::from_fn(|i, _| b[i] * (self.cfg.kd[i] + du_coupling * self.cfg.kp[i]));
        let m = arm::mass_matrix(&self.params, &self.state.q_vec());
        let chol = m.cholesky().ok_or(Error::SingularMass { q: self.state.q })?;
        let gain = chol.solve(&Mat3::from_diagonal(&gain_diag));
        Ok((a0, gain))
    }

    /// Kinetic plus potential energy of the true plant [J].
    pub fn mechanical_energy(&self) -> f64 {
        let q = self.state.q_vec();
        let dq = self.state.dq_vec();
        let ke = 0.5 * (dq.transpose() * arm::mass_matrix(&self.params, &q) * dq)[0];
        ke + arm::potential_energy(&self.params, &q)
    }

    pub fn wrist_position(&self) -> Vec3 {
        forward_kinematics(&self.params, &self.state.q_vec())
    }
}

impl ClosedArchitecture for Plant {
    fn measure(&self) -> JointState {
        self.state
    }

    fn command(&mut self, q_d: [f64; 3], dq_d: [f64; 3]) {
        self.cmd_q_d = Vec3::from(q_d);
        self.cmd_dq_d = Vec3::from(dq_d);
        self.command_calls += 1;
    }
}

/// Integrate the bare arm with zero actuation (validation helper: energy
/// behaviour of the raw Euler-Lagrange dynamics).
pub fn simulate_unactuated(
    params: &ArmParams,
    initial: JointState,
    duration: f64,
    dt: f64,
) -> Result<JointState> {
    let dist = DisturbanceProfile::default();
    let zero = Vec3::zeros();
    let mut q = initial.q_vec();
    let mut dq = initial.dq_vec();
    let steps = (duration / dt).round() as usize;
    let mut t = 0.0;
    for _ in 0..steps {
        let f = |tt: f64, qq: &Vec3, dd: &Vec3| -> Result<(Vec3, Vec3)> {
            let s = JointState::new([qq[0], qq[1], qq[2]], [dd[0], dd[1], dd[2]]);
            Ok((*dd, plant_accel(params, &s, &zero, false, &dist, tt)?))
        };
        let (k1q, k1v) = f(t, &q, &dq)?;
        let (k2q, k2v) = f(t + 0.5 * dt, &(q + k1q * (0.5 * dt)), &(dq + k1v * (0.5 * dt)))?;
        let (k3q, k3v) = f(t + 0.5 * dt, &(q + k2q * (0.5 * dt)), &(dq + k2v * (0.5 * dt)))?;
        let (k4q, k4v) = f(t + dt, &(q + k3q * dt), &(dq + k3v * dt))?;
        q += (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (dt / 6.0);
        dq += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);
        t += dt;
    }
    Ok(JointState::new([q[0], q[1], q[2]], [dq[0], dq[1], dq[2]]))
}
