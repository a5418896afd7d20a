//! Per-cell log-odds belief over the substrate and coral layers, plus the DLC history mask.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, sigmoid, to_f64, Scalar};
use crate::sensors::{Layer, Observation, ScoutSensorSpec, SensorKind};
use crate::world::GridSpec;

/// Log-odds increment of one scouting reading at distance `d` (probabilities clamped).
pub fn scout_increment<T: Scalar>(spec: &ScoutSensorSpec<T>, d: T, z: bool) -> T {
    let (tp, fp) = spec.clamped_rates(d);
    if z {
        (tp / fp).ln()
    } else {
        ((T::one() - tp) / (T::one() - fp)).ln()
    }
}

/// Binary entropy in nats of a belief given in log-odds form.
pub fn binary_entropy<T: Scalar>(ell: T) -> T {
    // H = softplus(ℓ) − ℓσ(ℓ), symmetric in ℓ
    let a = ell.abs();
    let e = (-a).exp();
    e.ln_1p() + a * e / (T::one() + e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState<T> {
    pub grid: GridSpec,
    pub ell_s: Vec<T>,
    pub ell_c: Vec<T>,
    pub xi: Vec<bool>,
    pub ell_min: T,
    pub ell_max: T,
}

impl<T: Scalar> BeliefState<T> {
    /// Uninformed prior (ℓ = 0 on both layers) with saturation bounds `[ell_min, ell_max]`.
    pub fn new(grid: GridSpec, ell_min: T, ell_max: T) -> Self {
        let n = grid.len();
        Self { grid, ell_s: vec![T::zero(); n], ell_c: vec![T::zero(); n], xi: vec![false; n], ell_min, ell_max }
    }

    pub fn with_default_bounds(grid: GridSpec) -> Self {
        Self::new(grid, lit(-10.0), lit(10.0))
    }

    pub fn layer(&self, layer: Layer) -> &[T] {
        match layer {
            Layer::Substrate => &self.ell_s,
            Layer::Coral => &self.ell_c,
        }
    }

    #[inline]
    fn clamp(&self, v: T) -> T {
        v.max(self.ell_min).min(self.ell_max)
    }

    /// Additive log-odds update for a scouting reading on the spec's layer.
    pub fn update_scout(&mut self, obs: &Observation<T>, spec: &ScoutSensorSpec<T>) -> Result<()> {
        if obs.sensor != spec.kind() {
            return Err(Error::Observation(format!("{:?} reading applied with {:?} model", obs.sensor, spec.kind())));
        }
        if !(obs.distance >= T::zero() && obs.distance <= spec.r_max) {
            return Err(Error::Observation(format!("distance {} beyond range {}", obs.distance, spec.r_max)));
        }
        if obs.cell >= self.grid.len() {
            return Err(Error::Observation(format!("cell {} outside grid", obs.cell)));
        }
        let inc = scout_increment(spec, obs.distance, obs.z);
        let updated = self.layer(spec.target_layer)[obs.cell] + inc;
        let updated = self.clamp(updated);
        match spec.target_layer {
            Layer::Substrate => self.ell_s[obs.cell] = updated,
            Layer::Coral => self.ell_c[obs.cell] = updated,
        }
        Ok(())
    }

    /// Deterministic verification. Returns 1 iff the cell holds coral and had not been verified.
    pub fn update_dlc(&mut self, obs: &Observation<T>) -> Result<usize> {
        if obs.sensor != SensorKind::Dlc {
            return Err(Error::Observation(format!("{:?} reading passed to DLC update", obs.sensor)));
        }
        let i = obs.cell;
        if i >= self.grid.len() {
            return Err(Error::Observation(format!("cell {i} outside grid")));
        }
        self.ell_c[i] = if obs.z { self.ell_max } else { self.ell_min };
        let fresh = obs.z && !self.xi[i];
        self.xi[i] = true;
        Ok(fresh as usize)
    }

    pub fn probability(&self, layer: Layer, i: usize) -> T {
        sigmoid(self.layer(layer)[i])
    }

    pub fn entropy_map(&self, layer: Layer) -> Vec<T> {
        self.layer(layer).iter().map(|&l| binary_entropy(l)).collect()
    }

    pub fn mean_entropy(&self, layer: Layer, cells: &[usize]) -> T {
        if cells.is_empty() {
            return T::zero();
        }
        let ell = self.layer(layer);
        cells.iter().map(|&i| binary_entropy(ell[i])).sum::<T>() / lit(cells.len() as f64)
    }

    /// Flags cells with σ(ℓᶜ) > δ that have not been DLC-verified.
    pub fn extract_candidates(&self, delta: T) -> CandidateMap {
        let flags = self.ell_c.iter().zip(&self.xi).map(|(&l, &x)| !x && sigmoid(l) > delta).collect();
        CandidateMap { flags }
    }

    /// Mean substrate probability and mean Bernoulli variance over `cells`.
    pub fn region_stats(&self, cells: &[usize]) -> Result<(T, T)> {
        if cells.is_empty() {
            return Err(Error::Validation("region_stats on an empty cell set".into()));
        }
        let mut rho = T::zero();
        let mut var = T::zero();
        for &i in cells {
            let b = sigmoid(self.ell_s[i]);
            rho = rho + b;
            var = var + b * (T::one() - b);
        }
        let n: T = lit(cells.len() as f64);
        Ok((rho / n, var / n))
    }

    pub fn sampled_count(&self) -> usize {
        self.xi.iter().zip(&self.ell_c).filter(|(&x, &l)| x && l >= self.ell_max).count()
    }

    /// Writes `<stem>.bin` (ℓˢ then ℓᶜ as little-endian f64, then ξ as bytes) and `<stem>.json`.
    pub fn export_snapshot(&self, dir: impl AsRef<Path>, stem: &str, t: f64) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let bin = dir.join(format!("{stem}.bin"));
        let mut buf = Vec::with_capacity(self.grid.len() * 17);
        for v in self.ell_s.iter().chain(&self.ell_c) {
            buf.extend_from_slice(&to_f64(*v).to_le_bytes());
        }
        buf.extend(self.xi.iter().map(|&x| x as u8));
        fs::File::create(&bin).and_then(|mut f| f.write_all(&buf)).map_err(|e| Error::io(&bin, e))?;
        let header = SnapshotHeader {
            t,
            rows: self.grid.rows,
            cols: self.grid.cols,
            cell_size: self.grid.cell_size,
            layout: vec![
                SnapshotField { name: "ell_s".into(), dtype: "f64le".into(), offset: 0 },
                SnapshotField { name: "ell_c".into(), dtype: "f64le".into(), offset: 8 * self.grid.len() },
                SnapshotField { name: "xi".into(), dtype: "u8".into(), offset: 16 * self.grid.len() },
            ],
            ell_min: to_f64(self.ell_min),
            ell_max: to_f64(self.ell_max),
        };
        let json = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&header).expect("header serializes");
        fs::write(&json, text).map_err(|e| Error::io(&json, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotField {
    pub name: String,
    pub dtype: String,
    pub offset: usize,
}

/// JSON header describing a flat binary belief snapshot. Grids are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub t: f64,
    pub rows: usize,
    pub cols: usize,
    pub cell_size: f64,
    pub layout: Vec<SnapshotField>,
    pub ell_min: f64,
    pub ell_max: f64,
}

/// Per-cell DLC sampling candidates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateMap {
    pub flags: Vec<bool>,
}

impl CandidateMap {
    pub fn indices(&self) -> Vec<usize> {
        self.flags.iter().enumerate().filter_map(|(i, &f)| f.then_some(i)).collect()
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensors::SensorKind;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> GridSpec {
        GridSpec::new(2.0, 2.0, 0.5).unwrap()
    }

    fn fls_obs(cell: usize, z: bool, d: f64) -> Observation<f64> {
        Observation { cell, z, distance: d, sensor: SensorKind::Fls }
    }

    #[test]
    fn fls_positive_reading_at_mid_range() {
        let mut b = BeliefState::with_default_bounds(grid());
        let fls = ScoutSensorSpec::fls();
        b.update_scout(&fls_obs(3, true, 3.0), &fls).unwrap();
        assert!((b.ell_s[3] - 19f64.ln()).abs() < 1e-12);
        assert_eq!(b.ell_s[2], 0.0);
        assert_eq!(b.ell_c[3], 0.0);
        let mut b = BeliefState::with_default_bounds(grid());
        b.update_scout(&fls_obs(3, false, 3.0), &fls).unwrap();
        assert!((b.ell_s[3] + 19f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturates_at_bounds() {
        let mut b = BeliefState::with_default_bounds(grid());
        b.ell_s[0] = 9.5;
        b.update_scout(&fls_obs(0, true, 3.0), &ScoutSensorSpec::fls()).unwrap();
        assert_eq!(b.ell_s[0], 10.0);
    }

    #[test]
    fn out_of_range_and_wrong_sensor_rejected() {
        let mut b = BeliefState::with_default_bounds(grid());
        assert!(b.update_scout(&fls_obs(0, true, 6.5), &ScoutSensorSpec::fls()).is_err());
        assert!(b.update_scout(&fls_obs(0, true, 1.0), &ScoutSensorSpec::flc()).is_err());
        assert!(b.update_dlc(&fls_obs(0, true, 0.0)).is_err());
    }

    #[test]
    fn dlc_counts_first_visit_only() {
        let mut b = BeliefState::<f64>::with_default_bounds(grid());
        let coral = Observation { cell: 5, z: true, distance: 0.1, sensor: SensorKind::Dlc };
        assert_eq!(b.update_dlc(&coral).unwrap(), 1);
        assert!(b.xi[5]);
        assert_eq!(b.ell_c[5], 10.0);
        assert_eq!(b.update_dlc(&coral).unwrap(), 0);
        let empty = Observation { cell: 6, z: false, distance: 0.1, sensor: SensorKind::Dlc };
        assert_eq!(b.update_dlc(&empty).unwrap(), 0);
        assert_eq!(b.ell_c[6], -10.0);
        assert!(b.xi[6]);
        assert_eq!(b.sampled_count(), 1);
    }

    #[test]
    fn entropy_values() {
        assert!((binary_entropy(0.0f64) - std::f64::consts::LN_2).abs() < 1e-15);
        // analytic binary entropy at σ(10)
        let p = 1.0 / (1.0 + (-10.0f64).exp());
        let h = -p * p.ln() - (1.0 - p) * (1.0 - p).ln();
        assert!((binary_entropy(10.0f64) - h).abs() < 1e-15);
        assert!((binary_entropy(10.0f64) - 4.9938e-4).abs() < 1e-8);
        assert!(binary_entropy(800.0f64) < 1e-300);
        assert_eq!(binary_entropy(-7.0f64), binary_entropy(7.0));
        let b = BeliefState::<f32>::with_default_bounds(grid());
        assert!(b.entropy_map(Layer::Coral).iter().all(|&h| (h - std::f32::consts::LN_2).abs() < 1e-6));
    }

    #[test]
    fn candidate_rule() {
        let mut b = BeliefState::<f64>::with_default_bounds(grid());
        b.ell_c[0] = 2.0; // σ = 0.881
        b.ell_c[1] = 0.0;
        b.ell_c[2] = (0.95f64 / 0.05).ln();
        b.xi[2] = true;
        b.ell_c[3] = (0.8f64 / 0.2).ln();
        let c = b.extract_candidates(0.8);
        assert!(c.flags[0]);
        assert!(!c.flags[1] && !c.flags[2] && !c.flags[3]);
        assert_eq!(c.indices(), vec![0]);
    }

    #[test]
    fn region_stats_values() {
        let mut b = BeliefState::<f64>::with_default_bounds(grid());
        let (rho, nu2) = b.region_stats(&[0, 1, 2]).unwrap();
        assert_eq!((rho, nu2), (0.5, 0.25));
        b.ell_s.iter_mut().for_each(|l| *l = 10.0);
        let (rho, nu2) = b.region_stats(&[0, 1]).unwrap();
        assert!((rho - 1.0).abs() < 1e-4 && nu2 < 1e-4);
        b.ell_s[0] = 0.0;
        let (rho, nu2) = b.region_stats(&[0, 1]).unwrap();
        let s = 1.0 / (1.0 + (-10.0f64).exp());
        assert!((rho - (0.5 + s) / 2.0).abs() < 1e-12);
        assert!((nu2 - (0.25 + s * (1.0 - s)) / 2.0).abs() < 1e-12);
        assert!(b.region_stats(&[]).is_err());
    }

    #[test]
    fn neutral_evidence_when_rates_equal() {
        let spec = ScoutSensorSpec { r_max: 6.0, fov_deg: 90.0, tp_slope: 0.5, fp_slope: 0.5, target_layer: Layer::Substrate };
        assert_eq!(scout_increment(&spec, 6.0, true), 0.0);
        assert_eq!(scout_increment(&spec, 6.0, false), 0.0);
    }

    #[test]
    fn repeated_observations_converge() {
        let fls = ScoutSensorSpec::<f64>::fls();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut correct = 0;
        for trial in 0..1000 {
            let truth = trial % 2 == 0;
            let mut b = BeliefState::with_default_bounds(grid());
            for _ in 0..20 {
                let p = if truth { fls.p_tp(3.0) } else { fls.p_fp(3.0) };
                let z = rng.random::<f64>() < p;
                b.update_scout(&fls_obs(0, z, 3.0), &fls).unwrap();
            }
            correct += ((sigmoid(b.ell_s[0]) > 0.5) == truth) as usize;
        }
        assert!(correct >= 990, "{correct}");
    }

    #[test]
    fn snapshot_export_layout() {
        let mut b = BeliefState::<f64>::with_default_bounds(grid());
        b.ell_s[1] = 2.5;
        b.xi[3] = true;
        let dir = tempfile::tempdir().unwrap();
        b.export_snapshot(dir.path(), "snap", 12.5).unwrap();
        let bytes = std::fs::read(dir.path().join("snap.bin")).unwrap();
        assert_eq!(bytes.len(), 16 * 16 + 16);
        assert_eq!(f64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2.5);
        assert_eq!(bytes[16 * 16 + 3], 1);
        let header: SnapshotHeader = serde_json::from_str(&std::fs::read_to_string(dir.path().join("snap.json")).unwrap()).unwrap();
        assert_eq!((header.rows, header.cols, header.t), (4, 4, 12.5));
    }

    proptest! {
        #[test]
        fn update_order_does_not_matter(readings in proptest::collection::vec((any::<bool>(), 0.0f64..6.0), 1..30), seed in any::<u64>()) {
            let fls = ScoutSensorSpec::fls();
            let big = 1e9;
            let mut a = BeliefState::new(grid(), -big, big);
            for &(z, d) in &readings {
                a.update_scout(&fls_obs(0, z, d), &fls).unwrap();
            }
            let mut shuffled = readings.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.random_range(0..=i));
            }
            let mut b = BeliefState::new(grid(), -big, big);
            for &(z, d) in &shuffled {
                b.update_scout(&fls_obs(0, z, d), &fls).unwrap();
            }
            prop_assert!((a.ell_s[0] - b.ell_s[0]).abs() < 1e-9);
        }

        #[test]
        fn log_odds_stay_in_bounds(readings in proptest::collection::vec((any::<bool>(), 0.0f64..2.5), 0..60)) {
            let flc = ScoutSensorSpec::flc();
            let mut b = BeliefState::with_default_bounds(grid());
            for &(z, d) in &readings {
                b.update_scout(&Observation { cell: 1, z, distance: d, sensor: SensorKind::Flc }, &flc).unwrap();
                prop_assert!(b.ell_c[1] >= -10.0 && b.ell_c[1] <= 10.0);
                let p = sigmoid(b.ell_c[1]);
                prop_assert!(p > 0.0 && p < 1.0);
            }
        }
    }
}
