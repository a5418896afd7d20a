//! Observation models: sector-FOV scouting sensors (FLS on substrate, FLC on coral) and the
//! deterministic down-looking verification camera (DLC).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, wrap_angle, Scalar};
use crate::world::{GridSpec, GroundTruth};

/// Probabilities fed to log-odds expressions are kept inside this band so that perfect
/// sensor readings (P_TP(0) = 1) stay finite.
pub const PROB_FLOOR: f64 = 0.01;
pub const PROB_CEIL: f64 = 0.99;

/// Vehicle pose in SE(2): position in meters, heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotState<T> {
    pub p: [T; 2],
    pub theta: T,
}

impl<T: Scalar> RobotState<T> {
    pub fn new(x: T, y: T, theta: T) -> Self {
        Self { p: [x, y], theta: wrap_angle(theta) }
    }

    pub fn distance_to(&self, q: [T; 2]) -> T {
        (q[0] - self.p[0]).hypot(q[1] - self.p[1])
    }

    /// Position in the body frame: `[d_lon, d_lat] = Rᵀ(θ)(q − p)`.
    pub fn to_body(&self, q: [T; 2]) -> [T; 2] {
        let (s, c) = self.theta.sin_cos();
        let dx = q[0] - self.p[0];
        let dy = q[1] - self.p[1];
        [c * dx + s * dy, -s * dx + c * dy]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Substrate,
    Coral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SensorKind {
    Fls,
    Flc,
    Dlc,
}

/// Range-degrading sector sensor with `P_TP(d) = 1 − tp_slope·d/r_max`, `P_FP(d) = fp_slope·d/r_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoutSensorSpec<T> {
    pub r_max: T,
    pub fov_deg: T,
    pub tp_slope: T,
    pub fp_slope: T,
    pub target_layer: Layer,
}

impl<T: Scalar> ScoutSensorSpec<T> {
    /// Forward-looking sonar: 6 m, 90°, slopes 0.1, observes substrate.
    pub fn fls() -> Self {
        Self { r_max: lit(6.0), fov_deg: lit(90.0), tp_slope: lit(0.1), fp_slope: lit(0.1), target_layer: Layer::Substrate }
    }

    /// Front-looking camera: 2.5 m, 60°, slopes 0.15, observes coral.
    pub fn flc() -> Self {
        Self { r_max: lit(2.5), fov_deg: lit(60.0), tp_slope: lit(0.15), fp_slope: lit(0.15), target_layer: Layer::Coral }
    }

    pub fn kind(&self) -> SensorKind {
        match self.target_layer {
            Layer::Substrate => SensorKind::Fls,
            Layer::Coral => SensorKind::Flc,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (zero, one) = (T::zero(), T::one());
        if !(self.r_max > zero) {
            return Err(Error::Config(format!("r_max must be positive, got {}", self.r_max)));
        }
        if !(self.fov_deg > zero && self.fov_deg <= lit(360.0)) {
            return Err(Error::Config(format!("fov_deg must lie in (0, 360], got {}", self.fov_deg)));
        }
        if !(self.tp_slope > zero && self.tp_slope < one && self.fp_slope > zero && self.fp_slope < one) {
            return Err(Error::Config("tp_slope and fp_slope must lie in (0, 1)".into()));
        }
        // P_TP(d) > P_FP(d) on [0, r_max) ⇔ tp_slope + fp_slope ≤ 1
        if self.tp_slope + self.fp_slope > one {
            return Err(Error::Config("profile does not discriminate: tp_slope + fp_slope > 1".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn half_fov(&self) -> T {
        self.fov_deg.to_radians() * lit(0.5)
    }

    #[inline]
    pub fn p_tp(&self, d: T) -> T {
        T::one() - self.tp_slope * d / self.r_max
    }

    #[inline]
    pub fn p_fp(&self, d: T) -> T {
        self.fp_slope * d / self.r_max
    }

    /// `(P_TP, P_FP)` clipped to `[PROB_FLOOR, PROB_CEIL]`.
    #[inline]
    pub fn clamped_rates(&self, d: T) -> (T, T) {
        let (lo, hi) = (lit(PROB_FLOOR), lit(PROB_CEIL));
        (self.p_tp(d).max(lo).min(hi), self.p_fp(d).max(lo).min(hi))
    }

    /// Hard sector test on a relative offset `q − p`.
    pub fn sees(&self, state: &RobotState<T>, q: [T; 2]) -> Option<T> {
        let dx = q[0] - state.p[0];
        let dy = q[1] - state.p[1];
        let d = dx.hypot(dy);
        if d > self.r_max {
            return None;
        }
        if d == T::zero() {
            return Some(d);
        }
        let bearing = wrap_angle(dy.atan2(dx) - state.theta);
        (bearing.abs() <= self.half_fov()).then_some(d)
    }
}

/// Square body-frame footprint of the down-looking camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DlcSpec<T> {
    pub side_len: T,
}

impl<T: Scalar> Default for DlcSpec<T> {
    fn default() -> Self {
        Self { side_len: T::one() }
    }
}

impl<T: Scalar> DlcSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.side_len > T::zero() {
            Ok(())
        } else {
            Err(Error::Config(format!("DLC side length must be positive, got {}", self.side_len)))
        }
    }

    pub fn covers(&self, state: &RobotState<T>, q: [T; 2]) -> bool {
        let half = self.side_len * lit(0.5);
        let [lon, lat] = state.to_body(q);
        lon.abs() <= half && lat.abs() <= half
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation<T> {
    pub cell: usize,
    pub z: bool,
    pub distance: T,
    pub sensor: SensorKind,
}

fn center<T: Scalar>(grid: &GridSpec, i: usize) -> [T; 2] {
    let c = grid.center(i);
    [lit(c[0]), lit(c[1])]
}

fn pos_f64<T: Scalar>(state: &RobotState<T>) -> [f64; 2] {
    [to_f64(state.p[0]), to_f64(state.p[1])]
}

/// Calls `f(cell, distance)` for every cell inside the closed sector.
pub fn for_each_visible<T: Scalar>(state: &RobotState<T>, spec: &ScoutSensorSpec<T>, grid: &GridSpec, mut f: impl FnMut(usize, T)) {
    let (rows, cols) = grid.window(pos_f64(state), to_f64(spec.r_max));
    for r in rows {
        for c in cols.clone() {
            let i = grid.index(r, c);
            if let Some(d) = spec.sees(state, center(grid, i)) {
                f(i, d);
            }
        }
    }
}

/// Cells whose centers lie within `r_max` and `fov/2` of the heading.
pub fn visible_cells_sector<T: Scalar>(state: &RobotState<T>, spec: &ScoutSensorSpec<T>, grid: &GridSpec) -> Vec<usize> {
    let mut out = Vec::new();
    for_each_visible(state, spec, grid, |i, _| out.push(i));
    out
}

/// Cells whose centers fall inside the rotated square footprint (closed boundary).
pub fn footprint_cells<T: Scalar>(state: &RobotState<T>, spec: &DlcSpec<T>, grid: &GridSpec) -> Vec<usize> {
    let radius = to_f64(spec.side_len) * std::f64::consts::FRAC_1_SQRT_2;
    let (rows, cols) = grid.window(pos_f64(state), radius);
    let mut out = Vec::new();
    for r in rows {
        for c in cols.clone() {
            let i = grid.index(r, c);
            if spec.covers(state, center(grid, i)) {
                out.push(i);
            }
        }
    }
    out
}

/// One Bernoulli reading per visible cell, drawn against the sensor's layer of the ground truth.
pub fn sample_scout<T: Scalar, R: Rng + ?Sized>(
    gt: &GroundTruth,
    state: &RobotState<T>,
    spec: &ScoutSensorSpec<T>,
    rng: &mut R,
) -> Vec<Observation<T>> {
    let layer = match spec.target_layer {
        Layer::Substrate => &gt.substrate,
        Layer::Coral => &gt.coral,
    };
    let sensor = spec.kind();
    let mut out = Vec::new();
    for_each_visible(state, spec, &gt.spec, |cell, distance| {
        let p = if layer[cell] { spec.p_tp(distance) } else { spec.p_fp(distance) };
        let z = rng.random::<f64>() < to_f64(p);
        out.push(Observation { cell, z, distance, sensor });
    });
    out
}

/// Noise-free coral readings `z = c_j` over the footprint.
pub fn sample_dlc<T: Scalar>(gt: &GroundTruth, state: &RobotState<T>, spec: &DlcSpec<T>) -> Vec<Observation<T>> {
    footprint_cells(state, spec, &gt.spec)
        .into_iter()
        .map(|cell| Observation { cell, z: gt.coral[cell], distance: state.distance_to(center(&gt.spec, cell)), sensor: SensorKind::Dlc })
        .collect()
}
