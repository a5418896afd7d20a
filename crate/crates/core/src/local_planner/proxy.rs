//! Differentiable belief dynamics: evidence magnitude, soft sensor fields, the accumulated
//! confidence recursion and its entropy / sampling surrogates.

use serde::{Deserialize, Serialize};

use super::kinematics::{step_unwrapped, Control};
use crate::scalar::{lit, sigmoid, softplus, Scalar};
use crate::sensors::{DlcSpec, RobotState, ScoutSensorSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct ProxySensorParams<T> {
    /// Range sigmoid steepness (1/m).
    pub gamma_d: T,
    /// Bearing sigmoid steepness.
    pub gamma_a: T,
    /// DLC footprint edge softness (m).
    pub epsilon: T,
    /// DLC verification intensity per step.
    pub eta_down: T,
    /// Sampling saturation rate λ.
    pub lambda_sat: T,
}

impl<T: Scalar> Default for ProxySensorParams<T> {
    fn default() -> Self {
        Self { gamma_d: lit(4.0), gamma_a: lit(8.0), epsilon: lit(0.05), eta_down: lit(1.0), lambda_sat: lit(1.0) }
    }
}

impl<T: Scalar> ProxySensorParams<T> {
    pub fn is_valid(&self) -> bool {
        let z = T::zero();
        self.gamma_d > z && self.gamma_a > z && self.epsilon > z && self.eta_down > z && self.lambda_sat > z
    }
}

/// The three onboard sensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct SensorSuite<T> {
    pub fls: ScoutSensorSpec<T>,
    pub flc: ScoutSensorSpec<T>,
    pub dlc: DlcSpec<T>,
}

impl<T: Scalar> Default for SensorSuite<T> {
    fn default() -> Self {
        Self { fls: ScoutSensorSpec::fls(), flc: ScoutSensorSpec::flc(), dlc: DlcSpec::default() }
    }
}

#[inline]
fn clamped_rate<T: Scalar>(raw: T, slope: T) -> (T, T) {
    let (lo, hi) = (lit::<T>(crate::sensors::PROB_FLOOR), lit::<T>(crate::sensors::PROB_CEIL));
    if raw > hi {
        (hi, T::zero())
    } else if raw < lo {
        (lo, T::zero())
    } else {
        (raw, slope)
    }
}

/// Average evidence magnitude `η(d)` and its derivative in `d`, with rates clamped into
/// `[PROB_FLOOR, PROB_CEIL]`.
#[inline]
pub fn evidence_magnitude_with_grad<T: Scalar>(d: T, spec: &ScoutSensorSpec<T>) -> (T, T) {
    let (tp, dtp) = clamped_rate(spec.p_tp(d), -spec.tp_slope / spec.r_max);
    let (fp, dfp) = clamped_rate(spec.p_fp(d), spec.fp_slope / spec.r_max);
    let one = T::one();
    let l1 = (tp / fp).ln();
    let l2 = ((one - fp) / (one - tp)).ln();
    let dl1 = dtp / tp - dfp / fp;
    let dl2 = -dfp / (one - fp) + dtp / (one - tp);
    let half = lit::<T>(0.5);
    let sgn = |v: T| if v > T::zero() { one } else if v < T::zero() { -one } else { T::zero() };
    (half * (l1.abs() + l2.abs()), half * (sgn(l1) * dl1 + sgn(l2) * dl2))
}

/// `η(d) = ½(|ln(P_TP/P_FP)| + |ln((1−P_FP)/(1−P_TP))|)`.
#[inline]
pub fn evidence_magnitude<T: Scalar>(d: T, spec: &ScoutSensorSpec<T>) -> T {
    let (tp, fp) = spec.clamped_rates(d);
    let one = T::one();
    lit::<T>(0.5) * ((tp / fp).ln().abs() + ((one - fp) / (one - tp)).ln().abs())
}

/// Sigmoid arguments below `-FIELD_CUTOFF` start a cubic fade to exactly zero, reached at
/// `-FIELD_CUTOFF - FIELD_FADE`. The fade keeps the fields C¹ while letting far cells be skipped.
pub const FIELD_CUTOFF: f64 = 10.0;
pub const FIELD_FADE: f64 = 2.0;

/// `σ(a)·τ(a)` and its derivative, `None` where the product is exactly zero.
#[inline]
fn faded_sigmoid<T: Scalar>(a: T) -> Option<(T, T)> {
    let cut = lit::<T>(FIELD_CUTOFF);
    let fade = lit::<T>(FIELD_FADE);
    if a <= -cut - fade {
        return None;
    }
    let s = sigmoid(a);
    let ds = s * (T::one() - s);
    if a >= -cut {
        return Some((s, ds));
    }
    let t = (a + cut + fade) / fade;
    let three = lit::<T>(3.0);
    let two = lit::<T>(2.0);
    let tau = t * t * (three - two * t);
    let dtau = lit::<T>(6.0) * t * (T::one() - t) / fade;
    Some((s * tau, ds * tau + s * dtau))
}

/// Precomputed constants of a scouting sensor's soft sector.
#[derive(Debug, Clone, Copy)]
pub struct ScoutField<T> {
    r_max: T,
    cos_beta: T,
    gamma_d: T,
    gamma_a: T,
    /// Squared distance beyond which the range factor vanishes.
    reach2: T,
}

impl<T: Scalar> ScoutField<T> {
    pub fn new(spec: &ScoutSensorSpec<T>, params: &ProxySensorParams<T>) -> Self {
        let reach = spec.r_max + lit::<T>(FIELD_CUTOFF + FIELD_FADE) / params.gamma_d;
        Self { r_max: spec.r_max, cos_beta: spec.half_fov().cos(), gamma_d: params.gamma_d, gamma_a: params.gamma_a, reach2: reach * reach }
    }

    /// Distance beyond which `α` is exactly zero.
    pub fn reach(&self) -> T {
        self.reach2.sqrt()
    }

    /// `α` for offset `Δp = q − p` and heading `(sin θ, cos θ)`, with distance.
    #[inline]
    pub fn value(&self, dx: T, dy: T, s: T, c: T) -> Option<(T, T)> {
        let r2 = dx * dx + dy * dy;
        if r2 >= self.reach2 {
            return None;
        }
        let r = r2.sqrt();
        let (fa, _) = faded_sigmoid(self.gamma_d * (self.r_max - r))?;
        let cos_phi = if r > lit(1e-12) { (dx * c + dy * s) / r } else { T::one() };
        let (fb, _) = faded_sigmoid(self.gamma_a * (cos_phi - self.cos_beta))?;
        Some((fa * fb, r))
    }

    /// `α`, `∂α/∂(p_x, p_y, θ)` and distance.
    #[inline]
    pub fn value_grad(&self, dx: T, dy: T, s: T, c: T) -> Option<(T, [T; 3], T)> {
        let r2 = dx * dx + dy * dy;
        if r2 >= self.reach2 {
            return None;
        }
        let r = r2.sqrt();
        let (fa, dfa) = faded_sigmoid(self.gamma_d * (self.r_max - r))?;
        let (cos_phi, dcos_p, dcos_th, dr_p) = if r > lit(1e-12) {
            let inv = T::one() / r;
            let proj = dx * c + dy * s;
            let inv3 = inv * inv * inv;
            (
                proj * inv,
                [-c * inv + proj * dx * inv3, -s * inv + proj * dy * inv3],
                (-dx * s + dy * c) * inv,
                [-dx * inv, -dy * inv],
            )
        } else {
            (T::one(), [T::zero(); 2], T::zero(), [T::zero(); 2])
        };
        let (fb, dfb) = faded_sigmoid(self.gamma_a * (cos_phi - self.cos_beta))?;
        let ka = -dfa * fb * self.gamma_d; // ∂α/∂r
        let kb = fa * dfb * self.gamma_a; // ∂α/∂cos φ
        Some((fa * fb, [ka * dr_p[0] + kb * dcos_p[0], ka * dr_p[1] + kb * dcos_p[1], kb * dcos_th], r))
    }
}

/// Precomputed constants of the soft DLC footprint.
#[derive(Debug, Clone, Copy)]
pub struct DlcField<T> {
    half: T,
    inv_eps: T,
    reach: T,
}

impl<T: Scalar> DlcField<T> {
    pub fn new(spec: &DlcSpec<T>, params: &ProxySensorParams<T>) -> Self {
        let half = spec.side_len * lit(0.5);
        Self { half, inv_eps: T::one() / params.epsilon, reach: half + params.epsilon * lit(FIELD_CUTOFF + FIELD_FADE) }
    }

    /// Body-frame half-extent beyond which `α` is exactly zero.
    pub fn reach(&self) -> T {
        self.reach
    }

    #[inline]
    pub fn value(&self, dx: T, dy: T, s: T, c: T) -> Option<T> {
        let lon = c * dx + s * dy;
        let lat = -s * dx + c * dy;
        let (f1, _) = faded_sigmoid((self.half - lon.abs()) * self.inv_eps)?;
        let (f2, _) = faded_sigmoid((self.half - lat.abs()) * self.inv_eps)?;
        Some(f1 * f2)
    }

    #[inline]
    pub fn value_grad(&self, dx: T, dy: T, s: T, c: T) -> Option<(T, [T; 3])> {
        let lon = c * dx + s * dy;
        let lat = -s * dx + c * dy;
        let (f1, df1) = faded_sigmoid((self.half - lon.abs()) * self.inv_eps)?;
        let (f2, df2) = faded_sigmoid((self.half - lat.abs()) * self.inv_eps)?;
        let sgn = |v: T| if v >= T::zero() { T::one() } else { -T::one() };
        let k1 = -df1 * f2 * sgn(lon) * self.inv_eps; // ∂α/∂lon
        let k2 = -f1 * df2 * sgn(lat) * self.inv_eps; // ∂α/∂lat
        // ∂lon/∂p = −(c, s), ∂lon/∂θ = lat; ∂lat/∂p = (s, −c), ∂lat/∂θ = −lon
        Some((f1 * f2, [-k1 * c + k2 * s, -k1 * s - k2 * c, k1 * lat - k2 * lon]))
    }
}

/// Soft sector visibility with its gradient in `(p_x, p_y, θ)` and the cell distance.
pub fn soft_fov_scout_with_grad<T: Scalar>(
    x: &RobotState<T>,
    cell: [T; 2],
    spec: &ScoutSensorSpec<T>,
    params: &ProxySensorParams<T>,
) -> Option<(T, [T; 3], T)> {
    let (s, c) = x.theta.sin_cos();
    ScoutField::new(spec, params).value_grad(cell[0] - x.p[0], cell[1] - x.p[1], s, c)
}

/// Soft footprint mask with its gradient in `(p_x, p_y, θ)`.
pub fn soft_fov_dlc_with_grad<T: Scalar>(
    x: &RobotState<T>,
    cell: [T; 2],
    spec: &DlcSpec<T>,
    params: &ProxySensorParams<T>,
) -> Option<(T, [T; 3])> {
    let (s, c) = x.theta.sin_cos();
    DlcField::new(spec, params).value_grad(cell[0] - x.p[0], cell[1] - x.p[1], s, c)
}

/// Soft sector visibility in `[0, 1]`.
pub fn soft_fov<T: Scalar>(x: &RobotState<T>, cell: [T; 2], spec: &ScoutSensorSpec<T>, params: &ProxySensorParams<T>) -> T {
    soft_fov_scout_with_grad(x, cell, spec, params).map_or(T::zero(), |v| v.0)
}

/// Soft DLC footprint mask in `[0, 1]`.
pub fn soft_footprint<T: Scalar>(x: &RobotState<T>, cell: [T; 2], spec: &DlcSpec<T>, params: &ProxySensorParams<T>) -> T {
    soft_fov_dlc_with_grad(x, cell, spec, params).map_or(T::zero(), |v| v.0)
}

/// `H_proxy(Λ) = ln(1 + e^Λ) − Λσ(Λ)`, evaluated as `ln(1 + e^{−Λ}) + Λ(1 − σ(Λ))` for Λ ≥ 0.
pub fn h_proxy<T: Scalar>(lambda: T) -> T {
    if lambda >= T::zero() {
        let e = (-lambda).exp();
        e.ln_1p() + lambda * e / (T::one() + e)
    } else {
        softplus(lambda) - lambda * sigmoid(lambda)
    }
}

/// `dH_proxy/dΛ = −Λ σ(Λ)(1 − σ(Λ))`.
pub fn h_proxy_prime<T: Scalar>(lambda: T) -> T {
    let s = sigmoid(lambda);
    -lambda * s * (T::one() - s)
}

/// `P_samp(Λ) = 1 − exp(−λΛ)`.
pub fn p_samp<T: Scalar>(lambda_down: T, lambda_sat: T) -> T {
    -(-lambda_sat * lambda_down).exp_m1()
}

pub fn p_samp_prime<T: Scalar>(lambda_down: T, lambda_sat: T) -> T {
    lambda_sat * (-lambda_sat * lambda_down).exp()
}

/// Accumulated confidences per active cell (FLS, FLC) and verification intensity per candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyBeliefState<T> {
    pub lambda_fls: Vec<T>,
    pub lambda_flc: Vec<T>,
    pub lambda_down: Vec<T>,
}

impl<T: Scalar> ProxyBeliefState<T> {
    /// `Λ₀ = |ℓ|` per cell and zero verification intensity.
    pub fn from_log_odds(ell_s: &[T], ell_c: &[T], n_candidates: usize) -> Self {
        Self {
            lambda_fls: ell_s.iter().map(|l| l.abs()).collect(),
            lambda_flc: ell_c.iter().map(|l| l.abs()).collect(),
            lambda_down: vec![T::zero(); n_candidates],
        }
    }
}

/// Indicator used inside the recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldModel {
    /// Differentiable sigmoid fields.
    Soft,
    /// Exact binary visibility of the real sensors.
    Hard,
}

/// Runs `Λ_{k+1} = Λ_k + η(d_k) α(x_k)` for k = 0..H over `cells`, and the same recursion with
/// constant `η_down` over `candidates`. Returns the H + 1 proxy states.
#[allow(clippy::too_many_arguments)]
pub fn rollout_proxy<T: Scalar>(
    x0: &RobotState<T>,
    controls: &[Control<T>],
    dt: T,
    proxy0: &ProxyBeliefState<T>,
    cells: &[[T; 2]],
    candidates: &[[T; 2]],
    sensors: &SensorSuite<T>,
    params: &ProxySensorParams<T>,
    field: FieldModel,
) -> Vec<ProxyBeliefState<T>> {
    assert_eq!(proxy0.lambda_fls.len(), cells.len());
    assert_eq!(proxy0.lambda_flc.len(), cells.len());
    assert_eq!(proxy0.lambda_down.len(), candidates.len());
    let mut out = Vec::with_capacity(controls.len() + 1);
    out.push(proxy0.clone());
    let mut x = *x0;
    for u in controls {
        let mut next = out.last().expect("non-empty").clone();
        for (i, &q) in cells.iter().enumerate() {
            for (spec, lam) in [(&sensors.fls, &mut next.lambda_fls[i]), (&sensors.flc, &mut next.lambda_flc[i])] {
                let alpha = match field {
                    FieldModel::Soft => soft_fov(&x, q, spec, params),
                    FieldModel::Hard => spec.sees(&x, q).map_or(T::zero(), |_| T::one()),
                };
                if alpha > T::zero() {
                    *lam = *lam + evidence_magnitude(x.distance_to(q), spec) * alpha;
                }
            }
        }
        for (j, &q) in candidates.iter().enumerate() {
            let alpha = match field {
                FieldModel::Soft => soft_footprint(&x, q, &sensors.dlc, params),
                FieldModel::Hard => {
                    if sensors.dlc.covers(&x, q) {
                        T::one()
                    } else {
                        T::zero()
                    }
                }
            };
            next.lambda_down[j] = next.lambda_down[j] + params.eta_down * alpha;
        }
        out.push(next);
        x = step_unwrapped(&x, u, dt);
    }
    out
}
