use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::MctsConfig;
use crate::error::{Error, Result};
use crate::global_planner::GlobalConfig;
use crate::local_planner::{LocalConfig, RobotLimits, SensorSuite};
use crate::world::{generate_map, load_map, Difficulty, GroundTruth, MapGenConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    Himos,
    Boustrophedon,
    Mcts,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 3] = [PlannerKind::Himos, PlannerKind::Boustrophedon, PlannerKind::Mcts];

    pub fn as_str(self) -> &'static str {
        match self {
            PlannerKind::Himos => "himos",
            PlannerKind::Boustrophedon => "boustrophedon",
            PlannerKind::Mcts => "mcts",
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "himos" => Ok(PlannerKind::Himos),
            "boustrophedon" | "lawnmower" => Ok(PlannerKind::Boustrophedon),
            "mcts" => Ok(PlannerKind::Mcts),
            other => Err(Error::Config(format!("unknown planner '{other}' (expected himos, boustrophedon or mcts)"))),
        }
    }
}

/// Where the ground truth comes from. A `file` wins over the generator fields.
///
/// Without a file the preset for `difficulty` is generated with `seed`; `generator`
/// replaces the preset entirely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSource {
    pub file: Option<PathBuf>,
    pub difficulty: Difficulty,
    pub seed: u64,
    pub generator: Option<MapGenConfig>,
}

impl Default for MapSource {
    fn default() -> Self {
        Self { file: None, difficulty: Difficulty::Medium, seed: 0, generator: None }
    }
}

impl MapSource {
    pub fn generated(difficulty: Difficulty, seed: u64) -> Self {
        Self { difficulty, seed, ..Self::default() }
    }

    pub fn gen_config(&self) -> MapGenConfig {
        self.generator.clone().unwrap_or_else(|| MapGenConfig::preset(self.difficulty, self.seed))
    }

    pub fn load(&self) -> Result<GroundTruth> {
        match &self.file {
            Some(path) => load_map(path),
            None => generate_map(&self.gen_config()),
        }
    }

    /// Short label used for run ids and aggregation.
    pub fn label(&self) -> String {
        match &self.file {
            Some(path) => path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "map".into()),
            None => {
                let g = self.gen_config();
                format!("{}-{}", g.difficulty, g.seed)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionParams {
    /// Time budget in seconds.
    pub t_total: f64,
    pub dt: f64,
}

impl Default for MissionParams {
    fn default() -> Self {
        Self { t_total: 2000.0, dt: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeliefParams {
    pub ell_min: f64,
    pub ell_max: f64,
}

impl Default for BeliefParams {
    fn default() -> Self {
        Self { ell_min: -10.0, ell_max: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoustrophedonConfig {
    /// Transect spacing in meters; the DLC side length when absent.
    pub spacing: Option<f64>,
}

/// Complete description of one mission. Every section is optional in the TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionConfig {
    pub seed: u64,
    pub planner: PlannerKind,
    pub map: MapSource,
    pub mission: MissionParams,
    pub robot: RobotLimits<f64>,
    pub sensors: SensorSuite<f64>,
    pub belief: BeliefParams,
    pub global: GlobalConfig,
    pub local: LocalConfig<f64>,
    pub mcts: MctsConfig,
    pub boustrophedon: BoustrophedonConfig,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            planner: PlannerKind::Himos,
            map: MapSource::default(),
            mission: MissionParams::default(),
            robot: RobotLimits::default(),
            sensors: SensorSuite::default(),
            belief: BeliefParams::default(),
            global: GlobalConfig::default(),
            local: LocalConfig::default(),
            mcts: MctsConfig::default(),
            boustrophedon: BoustrophedonConfig::default(),
        }
    }
}

impl MissionConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let (line, offset) = e.span().map(|s| line_offset(text, s.start)).unwrap_or((0, 0));
            Error::Parse { line, offset, msg: e.message().to_string() }
        })
    }

    /// Reads a TOML file; a relative map path is resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { line, offset, msg } => {
                Error::Format { path: path.to_path_buf(), msg: format!("line {line}, offset {offset}: {msg}") }
            }
            other => other,
        })?;
        if let Some(file) = &cfg.map.file {
            if file.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.map.file = Some(dir.join(file));
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    pub fn n_exec(&self) -> usize {
        self.local.n_exec
    }

    /// Number of simulation steps the budget allows.
    pub fn max_steps(&self) -> usize {
        (self.mission.t_total / self.mission.dt + 1e-9).floor() as usize
    }

    pub fn spacing(&self) -> f64 {
        self.boustrophedon.spacing.unwrap_or(self.sensors.dlc.side_len)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.mission;
        if !(m.dt > 0.0 && m.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", m.dt)));
        }
        if !(m.t_total > 0.0 && m.t_total.is_finite()) {
            return Err(Error::Config(format!("t_total must be positive, got {}", m.t_total)));
        }
        if m.t_total < m.dt {
            return Err(Error::Config(format!("t_total {} is shorter than one step of {}", m.t_total, m.dt)));
        }
        if !(self.robot.v_max > 0.0 && self.robot.omega_max > 0.0) {
            return Err(Error::Config("robot limits must be positive".into()));
        }
        let b = &self.belief;
        if !(b.ell_min < 0.0 && b.ell_max > 0.0) {
            return Err(Error::Config(format!("belief bounds must satisfy ell_min < 0 < ell_max, got [{}, {}]", b.ell_min, b.ell_max)));
        }
        self.sensors.fls.validate()?;
        self.sensors.flc.validate()?;
        self.sensors.dlc.validate()?;
        self.global.validate()?;
        self.local.validate()?;
        self.mcts.validate()?;
        if !(self.spacing() > 0.0) {
            return Err(Error::Config(format!("transect spacing must be positive, got {}", self.spacing())));
        }
        if self.map.file.is_none() {
            self.map.gen_config().validate()?;
        }
        Ok(())
    }
}

fn line_offset(text: &str, byte: usize) -> (usize, usize) {
    let before = &text[..byte.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let offset = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1);
    (line, offset)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = MissionConfig::default();
        let text = cfg.to_toml_string().unwrap();
        let back = MissionConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = MissionConfig::from_toml_str(
            "seed = 7\nplanner = \"mcts\"\n[mission]\nt_total = 100.0\n[map]\ndifficulty = \"hard\"\nseed = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.planner, PlannerKind::Mcts);
        assert_eq!(cfg.mission.t_total, 100.0);
        assert_eq!(cfg.mission.dt, 0.5);
        assert_eq!(cfg.map.difficulty, Difficulty::Hard);
        assert_eq!(cfg.local.n_exec, 4);
        assert_eq!(cfg.max_steps(), 200);
        assert_eq!(cfg.spacing(), 1.0);
    }

    #[test]
    fn budget_step_count() {
        let cfg = MissionConfig::default();
        assert_eq!(cfg.max_steps(), 4000);
    }

    #[test]
    fn unknown_key_is_a_parse_error_with_position() {
        let err = MissionConfig::from_toml_str("seed = 1\n[mission]\nbogus = 3\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_values_rejected() {
        let mut cfg = MissionConfig::default();
        cfg.mission.dt = 0.0;
        assert_eq!(cfg.validate().unwrap_err().kind(), "config");
        let mut cfg = MissionConfig::default();
        cfg.local.n_exec = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = MissionConfig::default();
        cfg.mission.t_total = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn planner_names_parse() {
        for p in PlannerKind::ALL {
            assert_eq!(p.as_str().parse::<PlannerKind>().unwrap(), p);
        }
        assert!("astar".parse::<PlannerKind>().is_err());
    }
}
