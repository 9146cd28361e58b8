//! Analytic kinematics and Lagrangian dynamics of a 3-DOF waist-shoulder-elbow arm.
//!
//! Kinematic convention (fixed for the whole crate):
//!
//! * Base frame: `z` up, gravity pulls along `-z` with magnitude `gravity_accel`.
//! * Joint 1 (waist) rotates about `+z`. Joint 2 (shoulder) and joint 3 (elbow)
//!   are elevation angles in the vertical plane carried around by the waist:
//!   a positive angle lifts the link above the horizontal.
//! * The shoulder sits at height `link_lengths[0]` on the waist axis. At
//!   `q = 0` the arm is fully extended horizontally along `+x`, so the wrist
//!   center is at `(l2 + l3, 0, l1)`.
//!
//! The kinetic-energy model treats each link as a point mass at its center of
//! mass plus an isotropic scalar inertia about that center, and the payload as
//! a point mass rigidly attached at the wrist center. All dynamics terms
//! (`M`, `C`, `G`) are derived in closed form from that one Lagrangian, with
//! the Coriolis matrix assembled from Christoffel symbols so that
//! `dM/dt - 2C` is exactly skew-symmetric.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Ground-truth kinematic and dynamic parameters of the arm.
///
/// The default set is PUMA-scale but not taken from any published
/// identification; it exists so that scenarios are reproducible, and every
/// quantity can be overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmParams {
    /// Column height, upper-arm length, forearm length [m].
    pub link_lengths: [f64; 3],
    /// Center-of-mass distance from each joint along its link [m].
    /// The first entry is inert: the base link's COM lies on the waist axis.
    pub com_offsets: [f64; 3],
    /// Link masses [kg].
    pub masses: [f64; 3],
    /// Isotropic link inertias about each COM [kg m^2].
    pub link_inertias: [f64; 3],
    /// Gravitational acceleration magnitude [m/s^2]; acts along -z.
    pub gravity_accel: f64,
    /// Viscous friction coefficients [N m s/rad].
    pub viscous_friction: [f64; 3],
    /// Coulomb friction magnitudes [N m].
    pub coulomb_friction: [f64; 3],
    /// Velocity scale of the tanh Coulomb smoothing [rad/s], > 0.
    pub coulomb_smoothing: f64,
    /// Point mass attached at the wrist center [kg], >= 0.
    pub payload_mass: f64,
    /// Diagonal voltage-to-torque map B [N m / V] for voltage-mode actuation.
    pub torque_map_b: [f64; 3],
}

impl Default for ArmParams {
    fn default() -> Self {
        Self {
            link_lengths: [0.66, 0.432, 0.433],
            com_offsets: [0.33, 0.216, 0.216],
            masses: [12.0, 17.4, 4.8],
            link_inertias: [0.35, 0.54, 0.09],
            gravity_accel: 9.81,
            viscous_friction: [1.5, 1.5, 1.5],
            coulomb_friction: [0.5, 0.5, 0.5],
            coulomb_smoothing: 0.02,
            payload_mass: 0.0,
            torque_map_b: [20.0, 40.0, 10.0],
        }
    }
}

impl ArmParams {
    pub fn validate(&self) -> Result<()> {
        if self.link_lengths.iter().any(|&l| l <= 0.0) {
            return Err(Error::InvalidParameter("link lengths must be > 0".into()));
        }
        if self.masses.iter().any(|&m| m <= 0.0) {
            return Err(Error::InvalidParameter("masses must be > 0".into()));
        }
        if self.link_inertias.iter().any(|&i| i < 0.0) {
            return Err(Error::InvalidParameter("inertias must be >= 0".into()));
        }
        if self.coulomb_smoothing <= 0.0 {
            return Err(Error::InvalidParameter("coulomb_smoothing must be > 0".into()));
        }
        if self.payload_mass < 0.0 {
            return Err(Error::InvalidParameter("payload_mass must be >= 0".into()));
        }
        if !self
            .link_lengths
            .iter()
            .chain(self.com_offsets.iter())
            .chain(self.viscous_friction.iter())
            .chain(self.coulomb_friction.iter())
            .chain(self.torque_map_b.iter())
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidParameter("non-finite arm parameter".into()));
        }
        Ok(())
    }

    /// Copy with a point-mass payload attached at the wrist center.
    pub fn with_payload(&self, payload_kg: f64) -> Self {
        let mut p = self.clone();
        p.payload_mass = payload_kg;
        p
    }
}

/// Measured joint position and velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub q: [f64; 3],
    pub dq: [f64; 3],
}

impl JointState {
    pub fn new(q: [f64; 3], dq: [f64; 3]) -> Self {
        Self { q, dq }
    }

    pub fn q_vec(&self) -> Vec3 {
        Vec3::from(self.q)
    }

    pub fn dq_vec(&self) -> Vec3 {
        Vec3::from(self.dq)
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.dq.iter()).all(|v| v.is_finite())
    }
}

/// User-visible reduced model: constant `m_bar` and diagonal `kd_bar`, with
/// optional Coriolis and gravity terms (zero in the reduced form).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NominalModel {
    pub m_bar: [[f64; 3]; 3],
    pub c_bar: [[f64; 3]; 3],
    pub g_bar: [f64; 3],
    /// Diagonal of the nominal inner-loop gain (absorbs the nominal
    /// voltage-to-torque map in voltage-mode setups).
    pub kd_bar: [f64; 3],
}

impl NominalModel {
    /// Reduced model with `c_bar = 0`, `g_bar = 0`.
    pub fn reduced(m_bar: Mat3, kd_bar: [f64; 3]) -> Self {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = m_bar[(i, j)];
            }
        }
        Self {
            m_bar: m,
            c_bar: [[0.0; 3]; 3],
            g_bar: [0.0; 3],
            kd_bar,
        }
    }

    /// Reduced model whose `m_bar` is the true inertia frozen at a reference
    /// posture, without payload. The nominal model is deliberately never
    /// updated when the true plant gains a payload.
    pub fn reduced_from_arm(params: &ArmParams, q_ref: [f64; 3], kd_bar: [f64; 3]) -> Self {
        let bare = params.with_payload(0.0);
        Self::reduced(mass_matrix(&bare, &Vec3::from(q_ref)), kd_bar)
    }

    pub fn m_bar_mat(&self) -> Mat3 {
        Mat3::from_fn(|i, j| self.m_bar[i][j])
    }

    pub fn c_bar_mat(&self) -> Mat3 {
        Mat3::from_fn(|i, j| self.c_bar[i][j])
    }

    pub fn g_bar_vec(&self) -> Vec3 {
        Vec3::from(self.g_bar)
    }

    pub fn kd_bar_mat(&self) -> Mat3 {
        Mat3::from_diagonal(&Vec3::from(self.kd_bar))
    }

    pub fn validate(&self) -> Result<()> {
        if self.kd_bar.iter().any(|&k| k <= 0.0) {
            return Err(Error::InvalidModel("kd_bar diagonal must be > 0".into()));
        }
        let m = self.m_bar_mat();
        if (m - m.transpose()).abs().max() > 1e-9 {
            return Err(Error::InvalidModel("m_bar must be symmetric".into()));
        }
        if m.cholesky().is_none() {
            return Err(Error::InvalidModel("m_bar must be positive-definite".into()));
        }
        Ok(())
    }

    /// Drift term of the nominal acceleration channel:
    /// `F = m_bar^-1 (-c_bar dq - g_bar)`.
    pub fn drift(&self, dq: &Vec3) -> Vec3 {
        self.m_bar_mat()
            .cholesky()
            .expect("validated SPD m_bar")
            .solve(&(-self.c_bar_mat() * dq - self.g_bar_vec()))
    }

    /// Input gain of the nominal acceleration channel: `G = m_bar^-1 kd_bar`.
    pub fn input_gain(&self) -> Mat3 {
        self.m_bar_mat()
            .cholesky()
            .expect("validated SPD m_bar")
            .solve(&self.kd_bar_mat())
    }
}

/// Symmetric positive-definite inertia matrix, payload included.
pub fn mass_matrix(params: &ArmParams, q: &Vec3) -> Mat3 {
    let [_, l2, l3] = params.link_lengths;
    let [_, lc2, lc3] = params.com_offsets;
    let [_, m2, m3] = params.masses;
    let [i1, i2, i3] = params.link_inertias;
    let mp = params.payload_mass;

    let (s2, c2) = q[1].sin_cos();
    let (_, c3) = q[2].sin_cos();
    let s23 = (q[1] + q[2]).sin();
    let c23 = (q[1] + q[2]).cos();

    // Horizontal radii of the link-3 COM and of the wrist center.
    let r3 = l2 * c2 + lc3 * c23;
    let re = l2 * c2 + l3 * c23;
    let _ = s2;
    let _ = s23;

    let m11 = i1
        + i2
        + i3
        + m2 * (lc2 * c2) * (lc2 * c2)
        + m3 * r3 * r3
        + mp * re * re;
    let m22 = i2
        + i3
        + m2 * lc2 * lc2
        + m3 * (l2 * l2 + lc3 * lc3 + 2.0 * l2 * lc3 * c3)
        + mp * (l2 * l2 + l3 * l3 + 2.0 * l2 * l3 * c3);
    let m23 = i3 + m3 * (lc3 * lc3 + l2 * lc3 * c3) + mp * (l3 * l3 + l2 * l3 * c3);
    let m33 = i3 + m3 * lc3 * lc3 + mp * l3 * l3;

    Mat3::new(m11, 0.0, 0.0, 0.0, m22, m23, 0.0, m23, m33)
}

/// Partial derivatives of the mass matrix with respect to each joint angle.
/// `M` depends only on `q2` and `q3`; the waist partial is identically zero.
pub(crate) fn mass_matrix_partials(params: &ArmParams, q: &Vec3) -> [Mat3; 3] {
    let [_, l2, l3] = params.link_lengths;
    let [_, lc2, lc3] = params.com_offsets;
    let [_, m2, m3] = params.masses;
    let mp = params.payload_mass;

    let (s2, c2) = q[1].sin_cos();
    let (s3, _) = q[2].sin_cos();
    let s23 = (q[1] + q[2]).sin();
    let c23 = (q[1] + q[2]).cos();

    let r3 = l2 * c2 + lc3 * c23;
    let re = l2 * c2 + l3 * c23;
    let r3_q2 = -(l2 * s2 + lc3 * s23);
    let re_q2 = -(l2 * s2 + l3 * s23);
    let r3_q3 = -lc3 * s23;
    let re_q3 = -l3 * s23;

    let mut d2 = Mat3::zeros();
    d2[(0, 0)] = -2.0 * m2 * lc2 * lc2 * c2 * s2 + 2.0 * m3 * r3 * r3_q2 + 2.0 * mp * re * re_q2;

    let mut d3 = Mat3::zeros();
    d3[(0, 0)] = 2.0 * m3 * r3 * r3_q3 + 2.0 * mp * re * re_q3;
    let k = (m3 * l2 * lc3 + mp * l2 * l3) * s3;
    d3[(1, 1)] = -2.0 * k;
    d3[(1, 2)] = -k;
    d3[(2, 1)] = -k;

    [Mat3::zeros(), d2, d3]
}

/// Coriolis/centrifugal matrix from the Christoffel symbols of `mass_matrix`,
/// so the passivity identity `v^T (dM/dt - 2C) v = 0` holds by construction.
pub fn coriolis_matrix(params: &ArmParams, q: &Vec3, dq: &Vec3) -> Mat3 {
    let dm = mass_matrix_partials(params, q);
    let mut c = Mat3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let mut cij = 0.0;
            for k in 0..3 {
                cij += 0.5 * (dm[k][(i, j)] + dm[j][(i, k)] - dm[i][(j, k)]) * dq[k];
            }
            c[(i, j)] = cij;
        }
    }
    c
}

/// Total gravitational potential energy, payload included [J].
pub fn potential_energy(params: &ArmParams, q: &Vec3) -> f64 {
    let [l1, l2, l3] = params.link_lengths;
    let [_, lc2, lc3] = params.com_offsets;
    let [_, m2, m3] = params.masses;
    let mp = params.payload_mass;
    let g = params.gravity_accel;

    let s2 = q[1].sin();
    let s23 = (q[1] + q[2]).sin();

    let z2 = l1 + lc2 * s2;
    let z3 = l1 + l2 * s2 + lc3 * s23;
    let ze = l1 + l2 * s2 + l3 * s23;
    g * (m2 * z2 + m3 * z3 + mp * ze)
}

/// Gravity torque vector `G(q) = dU/dq`. The waist component is zero because
/// the potential does not depend on the waist angle.
pub fn gravity_vector(params: &ArmParams, q: &Vec3) -> Vec3 {
    let [_, l2, l3] = params.link_lengths;
    let [_, lc2, lc3] = params.com_offsets;
    let [_, m2, m3] = params.masses;
    let mp = params.payload_mass;
    let g = params.gravity_accel;

    let c2 = q[1].cos();
    let c23 = (q[1] + q[2]).cos();

    let g2 = g * (m2 * lc2 * c2 + m3 * (l2 * c2 + lc3 * c23) + mp * (l2 * c2 + l3 * c23));
    let g3 = g * (m3 * lc3 * c23 + mp * l3 * c23);
    Vec3::new(0.0, g2, g3)
}

/// Viscous plus tanh-smoothed Coulomb friction torque; opposes motion.
pub fn friction_torque(params: &ArmParams, dq: &Vec3) -> Vec3 {
    Vec3::from_fn(|i, _| {
        params.viscous_friction[i] * dq[i]
            + params.coulomb_friction[i] * (dq[i] / params.coulomb_smoothing).tanh()
    })
}

/// Wrist-center position in the base frame [m].
pub fn forward_kinematics(params: &ArmParams, q: &Vec3) -> Vec3 {
    let [l1, l2, l3] = params.link_lengths;
    let (s1, c1) = q[0].sin_cos();
    let (s2, c2) = q[1].sin_cos();
    let s23 = (q[1] + q[2]).sin();
    let c23 = (q[1] + q[2]).cos();

    let r = l2 * c2 + l3 * c23;
    Vec3::new(c1 * r, s1 * r, l1 + l2 * s2 + l3 * s23)
}

/// Analytic position Jacobian of the wrist center (3x3; wrist joints that do
/// not move the wrist center are outside the model).
pub fn jacobian(params: &ArmParams, q: &Vec3) -> Mat3 {
    let [_, l2, l3] = params.link_lengths;
    let (s1, c1) = q[0].sin_cos();
    let (s2, c2) = q[1].sin_cos();
    let s23 = (q[1] + q[2]).sin();
    let c23 = (q[1] + q[2]).cos();

    let r = l2 * c2 + l3 * c23;
    let rq2 = -(l2 * s2 + l3 * s23);
    let rq3 = -l3 * s23;
    let zq2 = l2 * c2 + l3 * c23;
    let zq3 = l3 * c23;

    Mat3::new(
        -s1 * r, c1 * rq2, c1 * rq3, //
        c1 * r, s1 * rq2, s1 * rq3, //
        0.0, zq2, zq3,
    )
}

/// Time derivative of one Jacobian row: `d/dt (dzeta_axis/dq)`.
pub fn jacobian_row_rate(params: &ArmParams, q: &Vec3, dq: &Vec3, axis: usize) -> Vec3 {
    assert!(axis < 3, "axis must be 0 (x), 1 (y) or 2 (z)");
    let [_, l2, l3] = params.link_lengths;
    let (s1, c1) = q[0].sin_cos();
    let (s2, c2) = q[1].sin_cos();
    let s23 = (q[1] + q[2]).sin();
    let c23 = (q[1] + q[2]).cos();
    let d23 = dq[1] + dq[2];

    let r = l2 * c2 + l3 * c23;
    let rq2 = -(l2 * s2 + l3 * s23);
    let rq3 = -l3 * s23;
    let r_dot = rq2 * dq[1] + rq3 * dq[2];
    let rq2_dot = -(l2 * c2 * dq[1] + l3 * c23 * d23);
    let rq3_dot = -l3 * c23 * d23;
    let zq2_dot = -(l2 * s2 * dq[1] + l3 * s23 * d23);
    let zq3_dot = -l3 * s23 * d23;

    match axis {
        0 => Vec3::new(
            -c1 * dq[0] * r - s1 * r_dot,
            -s1 * dq[0] * rq2 + c1 * rq2_dot,
            -s1 * dq[0] * rq3 + c1 * rq3_dot,
        ),
        1 => Vec3::new(
            -s1 * dq[0] * r + c1 * r_dot,
            c1 * dq[0] * rq2 + s1 * rq2_dot,
            c1 * dq[0] * rq3 + s1 * rq3_dot,
        ),
        _ => Vec3::new(0.0, zq2_dot, zq3_dot),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0x5EED_A123)
    }

    fn random_q(rng: &mut impl Rng) -> Vec3 {
        Vec3::from_fn(|_, _| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
    }

    fn random_dq(rng: &mut impl Rng) -> Vec3 {
        Vec3::from_fn(|_, _| rng.gen_range(-2.0..2.0))
    }

    fn params_with_payload() -> ArmParams {
        ArmParams {
            payload_mass: 1.5,
            ..ArmParams::default()
        }
    }

    /// Independent kinetic-energy oracle: per-link point-mass COM velocity
    /// plus isotropic scalar inertia, assembled from raw geometry (never from
    /// the mass matrix).
    fn kinetic_energy_oracle(p: &ArmParams, q: &Vec3, dq: &Vec3) -> f64 {
        let [_, l2, l3] = p.link_lengths;
        let [_, lc2, lc3] = p.com_offsets;
        let [_, m2, m3] = p.masses;
        let [i1, i2, i3] = p.link_inertias;

        // COM of link 2, link 3, and the wrist point as explicit positions;
        // velocities by analytic differentiation of (c1*r, s1*r, z).
        let point_vel = |r: f64, r_dot: f64, z_dot: f64| -> f64 {
            // |v|^2 = dq1^2 r^2 + r_dot^2 + z_dot^2 for azimuthal symmetry
            dq[0] * dq[0] * r * r + r_dot * r_dot + z_dot * z_dot
        };
        let (s2, c2) = q[1].sin_cos();
        let s23 = (q[1] + q[2]).sin();
        let c23 = (q[1] + q[2]).cos();
        let d23 = dq[1] + dq[2];

        let v2 = point_vel(lc2 * c2, -lc2 * s2 * dq[1], lc2 * c2 * dq[1]);
        let v3 = point_vel(
            l2 * c2 + lc3 * c23,
            -l2 * s2 * dq[1] - lc3 * s23 * d23,
            l2 * c2 * dq[1] + lc3 * c23 * d23,
        );
        let ve = point_vel(
            l2 * c2 + l3 * c23,
            -l2 * s2 * dq[1] - l3 * s23 * d23,
            l2 * c2 * dq[1] + l3 * c23 * d23,
        );

        let w1 = dq[0] * dq[0];
        let w2 = dq[0] * dq[0] + dq[1] * dq[1];
        let w3 = dq[0] * dq[0] + d23 * d23;

        0.5 * (m2 * v2 + m3 * v3 + p.payload_mass * ve + i1 * w1 + i2 * w2 + i3 * w3)
    }

    #[test]
    fn mass_matrix_symmetric_and_positive_definite() {
        let p = params_with_payload();
        let mut rng = rng();
        for _ in 0..100 {
            let q = random_q(&mut rng);
            let m = mass_matrix(&p, &q);
            assert_eq!(m, m.transpose());
            let eig = m.symmetric_eigenvalues();
            assert!(eig.min() > 0.0, "non-PD mass matrix at q = {q:?}: {eig:?}");
        }
    }

    #[test]
    fn mass_matrix_matches_link_energy_oracle() {
        let p = params_with_payload();
        let mut rng = rng();
        for _ in 0..100 {
            let q = random_q(&mut rng);
            let dq = random_dq(&mut rng);
            let quad = (dq.transpose() * mass_matrix(&p, &q) * dq)[0];
            let twice_ke = 2.0 * kinetic_energy_oracle(&p, &q, &dq);
            assert_relative_eq!(quad, twice_ke, epsilon = 1e-8, max_relative = 1e-10);
        }
    }

    #[test]
    fn coriolis_vanishes_at_zero_velocity() {
        let p = params_with_payload();
        let q = Vec3::new(0.3, -0.7, 1.1);
        let c = coriolis_matrix(&p, &q, &Vec3::zeros());
        assert_eq!(c * Vec3::new(0.0, 0.0, 0.0), Vec3::zeros());
        assert_eq!(c.abs().max(), 0.0);
    }

    #[test]
    fn skew_symmetry_of_mdot_minus_2c() {
        let p = params_with_payload();
        let mut rng = rng();
        let h = 1e-6;
        for _ in 0..200 {
            let q = random_q(&mut rng);
            let dq = random_dq(&mut rng);
            let v = random_dq(&mut rng);
            // dM/dt along dq via central differences
            let m_plus = mass_matrix(&p, &(q + dq * h));
            let m_minus = mass_matrix(&p, &(q - dq * h));
            let m_dot = (m_plus - m_minus) / (2.0 * h);
            let c = coriolis_matrix(&p, &q, &dq);
            let residual = (v.transpose() * (m_dot - 2.0 * c) * v)[0];
            assert!(
                residual.abs() < 1e-6,
                "skew-symmetry violated: {residual} at q={q:?} dq={dq:?}"
            );
        }
    }

    #[test]
    fn coriolis_matches_lagrangian_identity() {
        // C dq must equal d/dt(M dq) - grad_q(KE), both sides by finite
        // differences of the mass matrix only.
        let p = params_with_payload();
        let mut rng = rng();
        let h = 1e-6;
        for _ in 0..100 {
            let q = random_q(&mut rng);
            let dq = random_dq(&mut rng);

            let m_plus = mass_matrix(&p, &(q + dq * h));
            let m_minus = mass_matrix(&p, &(q - dq * h));
            let m_dot = (m_plus - m_minus) / (2.0 * h);

            let mut grad_ke = Vec3::zeros();
            for k in 0..3 {
                let mut qp = q;
                let mut qm = q;
                qp[k] += h;
                qm[k] -= h;
                let ke_p = 0.5 * (dq.transpose() * mass_matrix(&p, &qp) * dq)[0];
                let ke_m = 0.5 * (dq.transpose() * mass_matrix(&p, &qm) * dq)[0];
                grad_ke[k] = (ke_p - ke_m) / (2.0 * h);
            }

            let lhs = coriolis_matrix(&p, &q, &dq) * dq;
            let rhs = m_dot * dq - grad_ke;
            assert!(
                (lhs - rhs).abs().max() < 1e-5,
                "Lagrangian identity violated: {lhs:?} vs {rhs:?}"
            );
        }
    }

    #[test]
    fn gravity_zero_when_disabled_and_waist_component_zero() {
        let mut p = params_with_payload();
        let mut rng = rng();
        for _ in 0..20 {
            let q = random_q(&mut rng);
            assert_eq!(gravity_vector(&p, &q)[0], 0.0);
        }
        p.gravity_accel = 0.0;
        for _ in 0..20 {
            let q = random_q(&mut rng);
            assert_eq!(gravity_vector(&p, &q), Vec3::zeros());
        }
    }

    #[test]
    fn gravity_matches_potential_gradient() {
        let p = params_with_payload();
        let mut rng = rng();
        let h = 1e-6;
        for _ in 0..100 {
            let q = random_q(&mut rng);
            let g = gravity_vector(&p, &q);
            for k in 0..3 {
                let mut qp = q;
                let mut qm = q;
                qp[k] += h;
                qm[k] -= h;
                let fd = (potential_energy(&p, &qp) - potential_energy(&p, &qm)) / (2.0 * h);
                assert!(
                    (g[k] - fd).abs() < 1e-6,
                    "gravity gradient mismatch joint {k}: {} vs {}",
                    g[k],
                    fd
                );
            }
        }
    }

    #[test]
    fn friction_zero_at_rest_and_opposes_motion() {
        let p = ArmParams::default();
        assert_eq!(friction_torque(&p, &Vec3::zeros()), Vec3::zeros());
        let mut rng = rng();
        for _ in 0..50 {
            let dq = random_dq(&mut rng);
            let fr = friction_torque(&p, &dq);
            for i in 0..3 {
                if dq[i] != 0.0 {
                    assert_eq!(fr[i].signum(), dq[i].signum());
                }
            }
        }
    }

    #[test]
    fn friction_linear_case() {
        let p = ArmParams {
            viscous_friction: [1.0, 1.0, 1.0],
            coulomb_friction: [0.0, 0.0, 0.0],
            ..ArmParams::default()
        };
        let fr = friction_torque(&p, &Vec3::new(2.0, -1.0, 0.0));
        assert_eq!(fr, Vec3::new(2.0, -1.0, 0.0));
    }

    #[test]
    fn fk_zero_configuration_closed_form() {
        let p = ArmParams::default();
        let pos = forward_kinematics(&p, &Vec3::zeros());
        let [l1, l2, l3] = p.link_lengths;
        assert_relative_eq!(pos[0], l2 + l3, epsilon = 1e-15);
        assert_relative_eq!(pos[1], 0.0, epsilon = 1e-15);
        assert_relative_eq!(pos[2], l1, epsilon = 1e-15);
    }

    #[test]
    fn fk_waist_half_turn_negates_xy() {
        let p = ArmParams::default();
        let mut rng = rng();
        for _ in 0..20 {
            let q = random_q(&mut rng);
            let mut q_pi = q;
            q_pi[0] += std::f64::consts::PI;
            let a = forward_kinematics(&p, &q);
            let b = forward_kinematics(&p, &q_pi);
            assert_relative_eq!(a[0], -b[0], epsilon = 1e-9);
            assert_relative_eq!(a[1], -b[1], epsilon = 1e-9);
            assert_relative_eq!(a[2], b[2], epsilon = 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = ArmParams::default();
        let mut rng = rng();
        let h = 1e-6;
        for _ in 0..200 {
            let q = random_q(&mut rng);
            let j = jacobian(&p, &q);
            for k in 0..3 {
                let mut qp = q;
                let mut qm = q;
                qp[k] += h;
                qm[k] -= h;
                let col = (forward_kinematics(&p, &qp) - forward_kinematics(&p, &qm)) / (2.0 * h);
                for a in 0..3 {
                    assert!(
                        (j[(a, k)] - col[a]).abs() < 1e-6,
                        "J[{a},{k}] mismatch: {} vs {}",
                        j[(a, k)],
                        col[a]
                    );
                }
            }
        }
    }

    #[test]
    fn jacobian_first_order_displacement() {
        let p = ArmParams::default();
        let mut rng = rng();
        for _ in 0..50 {
            let q = random_q(&mut rng);
            let dqs = random_dq(&mut rng) * 1e-4;
            let moved = forward_kinematics(&p, &(q + dqs));
            let predicted = forward_kinematics(&p, &q) + jacobian(&p, &q) * dqs;
            // second-order remainder scale
            assert!((moved - predicted).norm() < 10.0 * dqs.norm_squared());
        }
    }

    #[test]
    fn jacobian_singular_when_fully_stretched() {
        let p = ArmParams::default();
        // elbow straight (q3 = 0) is the stretch singularity of this chain
        let q = Vec3::new(0.4, 0.3, 0.0);
        let svd = jacobian(&p, &q).svd(false, false);
        assert!(
            svd.singular_values.min() < 1e-12,
            "stretched configuration should be rank-deficient"
        );
    }

    #[test]
    fn jacobian_waist_column_is_horizontal() {
        let p = ArmParams::default();
        let mut rng = rng();
        for _ in 0..50 {
            let q = random_q(&mut rng);
            assert_eq!(jacobian(&p, &q)[(2, 0)], 0.0);
        }
    }

    #[test]
    fn jacobian_row_rate_zero_velocity() {
        let p = ArmParams::default();
        let q = Vec3::new(0.2, 0.4, -0.9);
        for axis in 0..3 {
            assert_eq!(jacobian_row_rate(&p, &q, &Vec3::zeros(), axis), Vec3::zeros());
        }
    }

    #[test]
    fn jacobian_row_rate_matches_directional_difference() {
        let p = ArmParams::default();
        let mut rng = rng();
        let h = 1e-6;
        for _ in 0..200 {
            let q = random_q(&mut rng);
            let dq = random_dq(&mut rng);
            let jp = jacobian(&p, &(q + dq * h));
            let jm = jacobian(&p, &(q - dq * h));
            for axis in 0..3 {
                let rate = jacobian_row_rate(&p, &q, &dq, axis);
                for k in 0..3 {
                    let fd = (jp[(axis, k)] - jm[(axis, k)]) / (2.0 * h);
                    assert!(
                        (rate[k] - fd).abs() < 1e-5,
                        "row rate mismatch axis {axis} col {k}: {} vs {}",
                        rate[k],
                        fd
                    );
                }
            }
        }
    }

    #[test]
    fn row_rate_z_entry_of_x_row_consistent_with_structure() {
        // The z row's first entry is structurally zero, so its rate is zero.
        let p = ArmParams::default();
        let mut rng = rng();
        for _ in 0..20 {
            let q = random_q(&mut rng);
            let dq = random_dq(&mut rng);
            assert_eq!(jacobian_row_rate(&p, &q, &dq, 2)[0], 0.0);
        }
    }

    #[test]
    fn validate_rejects_bad_params() {
        let mut p = ArmParams::default();
        p.coulomb_smoothing = 0.0;
        assert!(p.validate().is_err());
        let mut p2 = ArmParams::default();
        p2.masses[1] = -1.0;
        assert!(p2.validate().is_err());
        assert!(ArmParams::default().validate().is_ok());
    }

    #[test]
    fn nominal_model_validation_and_channel_terms() {
        let p = ArmParams::default();
        let nm = NominalModel::reduced_from_arm(&p, [0.0, 0.5, std::f64::consts::FRAC_PI_2], [1.0; 3]);
        assert!(nm.validate().is_ok());
        // reduced model: drift is zero, gain is m_bar^-1 kd_bar
        assert_eq!(nm.drift(&Vec3::new(1.0, 2.0, 3.0)), Vec3::zeros());
        let g = nm.input_gain();
        let reconstructed = nm.m_bar_mat() * g;
        assert_relative_eq!(
            (reconstructed - nm.kd_bar_mat()).abs().max(),
            0.0,
            epsilon = 1e-12
        );

        let mut bad = nm.clone();
        bad.kd_bar[2] = 0.0;
        assert!(bad.validate().is_err());
    }
}
