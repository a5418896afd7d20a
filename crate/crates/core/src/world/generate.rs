use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{GridSpec, GroundTruth};
use crate::error::{Error, Result};

const MAX_ATTEMPTS: usize = 16;
const FILL_TOLERANCE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Difficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "hard" => Ok(Difficulty::Hard),
            other => Err(Error::Config(format!("unknown difficulty `{other}` (expected easy|medium|hard)"))),
        }
    }
}

/// Parameters of the synthetic clustered benthic map generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapGenConfig {
    pub seed: u64,
    pub width_m: f64,
    pub height_m: f64,
    pub cell_size: f64,
    pub n_blobs: usize,
    pub blob_radius_mean: f64,
    pub blob_radius_std: f64,
    pub substrate_fill_target: f64,
    pub coral_density: f64,
    pub difficulty: Difficulty,
}

impl MapGenConfig {
    /// Preset for a difficulty tier on a 50 m × 50 m, 0.25 m map. The blob count is
    /// drawn from the tier's range using `seed`.
    pub fn preset(difficulty: Difficulty, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_b10b);
        let (fill, blobs, radius, std, density) = match difficulty {
            Difficulty::Easy => (0.4, rng.random_range(2..=3), 10.0, 2.0, 0.08),
            Difficulty::Medium => (0.3, rng.random_range(4..=6), 6.0, 1.5, 0.05),
            Difficulty::Hard => (0.2, rng.random_range(8..=12), 3.5, 1.0, 0.03),
        };
        Self {
            seed,
            width_m: 50.0,
            height_m: 50.0,
            cell_size: 0.25,
            n_blobs: blobs,
            blob_radius_mean: radius,
            blob_radius_std: std,
            substrate_fill_target: fill,
            coral_density: density,
            difficulty,
        }
    }

    pub fn validate(&self) -> Result<GridSpec> {
        let spec = GridSpec::new(self.width_m, self.height_m, self.cell_size)?;
        if !(self.coral_density >= 0.0 && self.coral_density <= 1.0) {
            return Err(Error::Config(format!("coral_density {} outside [0, 1]", self.coral_density)));
        }
        if !(self.substrate_fill_target > 0.0 && self.substrate_fill_target < 1.0) {
            return Err(Error::Config(format!(
                "substrate_fill_target {} outside (0, 1)",
                self.substrate_fill_target
            )));
        }
        if self.n_blobs == 0 {
            return Err(Error::Config("n_blobs must be at least 1".into()));
        }
        if !(self.blob_radius_mean > 0.0 && self.blob_radius_std >= 0.0) {
            return Err(Error::Config("blob radius mean must be positive and std non-negative".into()));
        }
        Ok(spec)
    }
}

struct Blob {
    center: [f64; 2],
    cos: f64,
    sin: f64,
    inv_a2: f64,
    inv_b2: f64,
}

impl Blob {
    fn eval(&self, p: [f64; 2]) -> f64 {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        let u = self.cos * dx + self.sin * dy;
        let v = -self.sin * dx + self.cos * dy;
        (-0.5 * (u * u * self.inv_a2 + v * v * self.inv_b2)).exp()
    }
}

/// Generates a map as a thresholded union of Gaussian-smoothed elliptical blobs.
///
/// The threshold is the field quantile that yields the target hard-substrate fill; coral
/// cells are then drawn independently with probability `coral_density` on hard cells only.
pub fn generate_map(config: &MapGenConfig) -> Result<GroundTruth> {
    let spec = config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = spec.len();
    let target = (config.substrate_fill_target * n as f64).round() as usize;
    let radius = Normal::new(config.blob_radius_mean, config.blob_radius_std)
        .map_err(|e| Error::Config(format!("blob radius distribution: {e}")))?;
    let min_radius = 2.0 * spec.cell_size;

    for _attempt in 0..MAX_ATTEMPTS {
        let blobs: Vec<Blob> = (0..config.n_blobs)
            .map(|_| {
                let center = [rng.random::<f64>() * spec.width_m, rng.random::<f64>() * spec.height_m];
                let a = radius.sample(&mut rng).max(min_radius);
                let b = a * rng.random_range(0.5..=1.0);
                let angle = rng.random::<f64>() * std::f64::consts::PI;
                Blob { center, cos: angle.cos(), sin: angle.sin(), inv_a2: 1.0 / (a * a), inv_b2: 1.0 / (b * b) }
            })
            .collect();

        let field: Vec<f64> = (0..n)
            .map(|i| {
                let p = spec.center(i);
                blobs.iter().map(|b| b.eval(p)).sum()
            })
            .collect();

        let mut sorted = field.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let threshold = sorted[target.clamp(1, n) - 1];
        if threshold <= 1e-12 {
            continue;
        }
        let substrate: Vec<bool> = field.iter().map(|&f| f >= threshold).collect();
        let fill = substrate.iter().filter(|&&s| s).count() as f64 / n as f64;
        if (fill - config.substrate_fill_target).abs() > FILL_TOLERANCE {
            continue;
        }
        let coral: Vec<bool> = substrate
            .iter()
            .map(|&s| s && config.coral_density > 0.0 && rng.random::<f64>() < config.coral_density)
            .collect();
        let mut gt = GroundTruth::new(spec, substrate, coral)?;
        gt.seed = Some(config.seed);
        gt.difficulty = Some(config.difficulty);
        return Ok(gt);
    }
    Err(Error::InfeasibleMap(format!(
        "{} blobs of radius {}±{} m cannot reach fill {} after {MAX_ATTEMPTS} attempts",
        config.n_blobs, config.blob_radius_mean, config.blob_radius_std, config.substrate_fill_target
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_map() {
        let cfg = MapGenConfig::preset(Difficulty::Medium, 7);
        assert_eq!(generate_map(&cfg).unwrap(), generate_map(&cfg).unwrap());
        let other = MapGenConfig::preset(Difficulty::Medium, 8);
        assert_ne!(generate_map(&cfg).unwrap().substrate, generate_map(&other).unwrap().substrate);
    }

    #[test]
    fn coral_only_on_hard_substrate() {
        for d in Difficulty::ALL {
            for seed in 0..3 {
                let gt = generate_map(&MapGenConfig::preset(d, seed)).unwrap();
                assert!(gt.coral.iter().zip(&gt.substrate).all(|(&c, &s)| !c || s));
                assert!((gt.fill_fraction() - MapGenConfig::preset(d, seed).substrate_fill_target).abs() <= 0.10);
                assert!(gt.coral_count() >= 1);
            }
        }
    }

    #[test]
    fn zero_density_gives_no_coral() {
        let mut cfg = MapGenConfig::preset(Difficulty::Easy, 1);
        cfg.coral_density = 0.0;
        assert_eq!(generate_map(&cfg).unwrap().coral_count(), 0);
    }

    #[test]
    fn coral_count_matches_binomial() {
        let cfg = MapGenConfig { coral_density: 0.05, substrate_fill_target: 0.3, ..MapGenConfig::preset(Difficulty::Medium, 11) };
        let gt = generate_map(&cfg).unwrap();
        let n = gt.hard_count() as f64;
        let mean = 0.05 * n;
        let sd = (n * 0.05 * 0.95).sqrt();
        assert!((gt.coral_count() as f64 - mean).abs() <= 3.0 * sd, "{} vs {mean}±{sd}", gt.coral_count());
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = MapGenConfig::preset(Difficulty::Hard, 3);
        assert!(generate_map(&MapGenConfig { coral_density: 1.5, ..base.clone() }).is_err());
        assert!(generate_map(&MapGenConfig { substrate_fill_target: 1.0, ..base.clone() }).is_err());
        // a single pin-point blob cannot cover 90% of the map
        let tiny = MapGenConfig { n_blobs: 1, blob_radius_mean: 0.1, blob_radius_std: 0.0, substrate_fill_target: 0.9, ..base };
        assert!(matches!(generate_map(&tiny), Err(Error::InfeasibleMap(_))));
    }

    #[test]
    fn difficulty_parses() {
        assert_eq!("hard".parse::<Difficulty>().unwrap(), Difficulty::Hard);
        assert!("extreme".parse::<Difficulty>().is_err());
    }
}
