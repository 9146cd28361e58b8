//! Per-joint second-order extended state observer and its disturbance
//! estimation error bound.
//!
//! Each joint runs an independent observer on the nominal acceleration
//! channel `d(dq_i)/dt = F_i + (G u)_i + f_i`, treating the total disturbance
//! `f_i` as an extended state:
//!
//! ```text
//! d(xhat2)/dt = F_i + (G u)_i + xhat3 + beta1 (dq_i - xhat2)
//! d(xhat3)/dt =                         beta2 (dq_i - xhat2)
//! ```
//!
//! with both observer poles placed at `-omega_o`. The error bound `Gamma`
//! caps `|f - fhat|` for any disturbance whose rate is bounded by `l_f`; it
//! is evaluated in the discrete-time domain at a small sample time `t_s`
//! through a convolution-kernel series whose tail is controlled by a
//! geometric majorant (the series ratio tends to the discrete pole).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observer gains for one joint. `beta1 = 2 omega_o`, `beta2 = omega_o^2`
/// place a double pole at `-omega_o`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsoGains {
    pub omega_o: f64,
    pub beta1: f64,
    pub beta2: f64,
}

/// Observer state for one joint: velocity estimate and disturbance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsoState {
    pub xhat2: f64,
    pub xhat3: f64,
}

impl EsoState {
    pub fn new(measured_dq: f64) -> Self {
        Self { xhat2: measured_dq, xhat3: 0.0 }
    }
}

/// Inputs of the error-bound computation for one joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSpec {
    /// Bound on the disturbance rate of change `|df/dt|`.
    pub l_f: f64,
    /// Bound-evaluation sample time [s]; should be small (default 1e-4).
    pub t_s: f64,
    /// Relative degree of the measured velocity with respect to the
    /// disturbance in the per-joint subsystem. Velocity is measured here,
    /// so this is 1; the series kernel is implemented for general `r`.
    pub relative_degree: u32,
    /// Observer pole mapped to the discrete-time domain, in (0, 1).
    pub omega_discrete: f64,
}

impl BoundSpec {
    /// Bound spec for one joint from the continuous-time bandwidth.
    pub fn from_bandwidth(omega_o: f64, t_s: f64, l_f: f64) -> Result<Self> {
        Ok(Self {
            l_f,
            t_s,
            relative_degree: 1,
            omega_discrete: discretize_bandwidth(omega_o, t_s)?,
        })
    }
}

/// Result of the error-bound series evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    /// The bound `Gamma = (sum_k p(k)) l_f t_s` on `|f - fhat|`.
    pub gamma: f64,
    /// Number of series terms summed before the tail fell below 1e-12 of
    /// the partial sum.
    pub truncation_terms: usize,
    /// The truncated kernel sum `sum_k p(k)`.
    pub series_sum: f64,
}

/// Place both observer poles at `-omega_o`.
pub fn gains_from_bandwidth(omega_o: f64) -> Result<EsoGains> {
    if !(omega_o > 0.0) || !omega_o.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "observer bandwidth must be > 0, got {omega_o}"
        )));
    }
    Ok(EsoGains { omega_o, beta1: 2.0 * omega_o, beta2: omega_o * omega_o })
}

/// One explicit-Euler step of the per-joint observer.
///
/// `nominal_drift_fi` is the i-th entry of `m_bar^-1 (-c_bar dq - g_bar)` and
/// `nominal_gain_gi_u` the i-th entry of `m_bar^-1 kd_bar u`, both computed by
/// the caller from the nominal model and the applied command.
pub fn eso_step(
    state: EsoState,
    gains: &EsoGains,
    nominal_drift_fi: f64,
    nominal_gain_gi_u: f64,
    measured_dq_i: f64,
    dt: f64,
) -> Result<EsoState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }
    let product = dt * gains.omega_o;
    if product >= 0.5 {
        return Err(Error::StepSize { gain_name: "omega_o", product });
    }
    let innovation = measured_dq_i - state.xhat2;
    Ok(EsoState {
        xhat2: state.xhat2
            + dt * (nominal_drift_fi + nominal_gain_gi_u + state.xhat3 + gains.beta1 * innovation),
        xhat3: state.xhat3 + dt * gains.beta2 * innovation,
    })
}

/// Matched-pole mapping of the observer bandwidth to the discrete domain:
/// `omega_discrete = exp(-omega_o t_s)`.
pub fn discretize_bandwidth(omega_o: f64, t_s: f64) -> Result<f64> {
    if !(omega_o > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "omega_o must be > 0, got {omega_o}"
        )));
    }
    if !(t_s > 0.0) {
        return Err(Error::InvalidParameter(format!("t_s must be > 0, got {t_s}")));
    }
    Ok((-omega_o * t_s).exp())
}

/// Kernel term `p(k)` of the discrete estimation-error convolution, for
/// general relative degree `r`:
///
/// ```text
/// p(k) = 1                                                      1 <= k <= r+1
/// p(k) = sum_{i=1..r+1} (k-1)(k-2)...(k-i+1)/(i-1)!
///        * (1-w)^(i-1) w^(k-i)                                  k >= r+2
/// ```
fn kernel_term(k: usize, r: u32, omega: f64) -> f64 {
    let r = r as usize;
    if k <= r + 1 {
        return 1.0;
    }
    let kf = k as f64;
    let mut total = 0.0;
    for iota in 1..=(r + 1) {
        // falling product (k-1)(k-2)...(k-iota+1); empty for iota = 1
        let mut prod = 1.0;
        for j in 1..iota {
            prod *= kf - j as f64;
        }
        let mut factorial = 1.0;
        for v in 1..iota {
            factorial *= v as f64;
        }
        total += prod / factorial
            * (1.0 - omega).powi(iota as i32 - 1)
            * omega.powi(k as i32 - iota as i32);
    }
    total
}

/// Evaluate the estimation error bound `Gamma_i` for one joint.
///
/// The series is summed until a geometric majorant of the tail (ratio
/// `p(k+1)/p(k)` settles below `(1+w)/2 < 1`) drops under 1e-12 of the
/// partial sum.
pub fn estimation_error_bound(spec: &BoundSpec) -> Result<ErrorBound> {
    if !(spec.omega_discrete > 0.0 && spec.omega_discrete < 1.0) {
        return Err(Error::DivergentSeries { omega: spec.omega_discrete });
    }
    if spec.l_f < 0.0 || !spec.l_f.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "disturbance rate bound must be >= 0, got {}",
            spec.l_f
        )));
    }
    if !(spec.t_s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "t_s must be > 0, got {}",
            spec.t_s
        )));
    }

    let w = spec.omega_discrete;
    let r = spec.relative_degree;
    let ratio_cap = 0.5 * (1.0 + w);

    let mut sum = 0.0;
    let mut k = 0usize;
    let mut prev = f64::NAN;
    let mut settled = 0u32;
    loop {
        k += 1;
        let p = kernel_term(k, r, w);
        sum += p;
        if prev.is_finite() && prev > 0.0 {
            settled = if p / prev <= ratio_cap { settled + 1 } else { 0 };
        }
        prev = p;
        // geometric tail majorant once the ratio has settled below ratio_cap
        if settled >= 3 {
            let tail = p * ratio_cap / (1.0 - ratio_cap);
            if tail < 1e-12 * sum {
                break;
            }
        }
        if k > 50_000_000 {
            return Err(Error::DivergentSeries { omega: w });
        }
    }

    Ok(ErrorBound {
        gamma: sum * spec.l_f * spec.t_s,
        truncation_terms: k,
        series_sum: sum,
    })
}

/// Largest per-sample rate of change observed in a sampled signal:
/// `max_k |x(k+1) - x(k)| / dt`. Used to extract an honest disturbance rate
/// bound from a recorded trace.
pub fn rate_bound_from_samples(samples: &[f64], dt: f64) -> f64 {
    samples
        .windows(2)
        .map(|w| (w[1] - w[0]).abs() / dt)
        .fold(0.0, f64::max)
}
