use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{MapSource, MissionConfig, PlannerKind};
use super::export::{self, export_run, read_series, read_summary, read_timings, SUMMARY_FILE};
use super::log::{MissionOutput, MissionSummary};
use super::run_mission_on;
use crate::error::{Error, Result};
use crate::world::GroundTruth;

/// Tier label used for rows that pool every difficulty.
pub const ALL_TIERS: &str = "all";
const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: MissionConfig,
    pub maps: Vec<MapSource>,
    pub seeds: Vec<u64>,
    pub planners: Vec<PlannerKind>,
    /// Worker threads; 0 uses rayon's default.
    pub jobs: usize,
    /// Width in seconds of the ratio-vs-time bins.
    pub bin_width: f64,
}

impl SweepSpec {
    pub fn new(base: MissionConfig, maps: Vec<MapSource>, seeds: Vec<u64>, planners: Vec<PlannerKind>) -> Self {
        Self { base, maps, seeds, planners, jobs: 0, bin_width: 50.0 }
    }

    fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() || self.planners.is_empty() || self.maps.is_empty() {
            return Err(Error::Config("a sweep needs at least one map, seed and planner".into()));
        }
        if !(self.bin_width > 0.0) {
            return Err(Error::Config(format!("bin width must be positive, got {}", self.bin_width)));
        }
        self.base.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub map: String,
    pub planner: PlannerKind,
    pub seed: u64,
    pub kind: String,
    pub message: String,
}

/// Final confirmation ratio statistics for one (tier, planner) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub difficulty: String,
    pub planner: PlannerKind,
    pub runs: usize,
    pub mean_ratio: f64,
    pub std_ratio: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// Ratio at time `t`, across the runs of one (tier, planner) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBin {
    pub difficulty: String,
    pub planner: PlannerKind,
    pub t: f64,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub planner: String,
    pub solver: String,
    pub count: usize,
    pub mean_s: f64,
    pub p50_s: f64,
    pub p95_s: f64,
    pub max_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub planner: String,
    pub solver: String,
    pub lo_s: f64,
    pub hi_s: f64,
    pub count: usize,
}

/// What aggregation needs from a run, whether it ran in memory or was read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub summary: MissionSummary,
    pub ratio_series: Vec<(f64, Option<f64>)>,
    pub timings: Vec<export::TimingRow>,
}

impl RunRecord {
    pub fn from_output(out: &MissionOutput) -> Self {
        Self {
            summary: out.log.summary.clone(),
            ratio_series: out.log.ratio_series(),
            timings: export::timing_rows(&out.timings),
        }
    }
}

/// Aggregated tables. `rows` and `curves` depend only on the runs' configs and seeds;
/// the timing tables carry wall-clock data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub runs: usize,
    pub rows: Vec<AggregateRow>,
    pub curves: Vec<TimeBin>,
    pub timing_stats: Vec<TimingStats>,
    pub timing_histogram: Vec<HistogramBin>,
    pub failures: Vec<RunFailure>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub outputs: Vec<MissionOutput>,
    pub report: SweepReport,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    (mean, var.sqrt())
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Value of a step series at time `t`: the last entry not later than `t`.
fn value_at(series: &[(f64, Option<f64>)], t: f64) -> Option<f64> {
    let k = series.partition_point(|&(ts, _)| ts <= t + 1e-9);
    k.checked_sub(1).and_then(|k| series[k].1)
}

/// Builds the per-tier tables from finished runs.
pub fn aggregate(runs: &[RunRecord], bin_width: f64, failures: Vec<RunFailure>) -> SweepReport {
    let mut groups: BTreeMap<(String, PlannerKind), Vec<&RunRecord>> = BTreeMap::new();
    for r in runs {
        let tier = r.summary.difficulty.clone().unwrap_or_else(|| "unknown".into());
        groups.entry((tier, r.summary.planner)).or_default().push(r);
        groups.entry((ALL_TIERS.into(), r.summary.planner)).or_default().push(r);
    }

    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for ((tier, planner), members) in &groups {
        let finals: Vec<f64> = members.iter().filter_map(|r| r.summary.ratio).collect();
        let (mean, std) = mean_std(&finals);
        rows.push(AggregateRow {
            difficulty: tier.clone(),
            planner: *planner,
            runs: finals.len(),
            mean_ratio: mean,
            std_ratio: std,
            min_ratio: finals.iter().copied().fold(f64::NAN, f64::min),
            max_ratio: finals.iter().copied().fold(f64::NAN, f64::max),
        });
        let t_end = members.iter().map(|r| r.summary.final_t).fold(0.0, f64::max);
        let n_bins = (t_end / bin_width + 1e-9).floor() as usize;
        for k in 0..=n_bins {
            let t = k as f64 * bin_width;
            let vals: Vec<f64> = members.iter().filter_map(|r| value_at(&r.ratio_series, t)).collect();
            if vals.is_empty() {
                continue;
            }
            let (mean, std) = mean_std(&vals);
            curves.push(TimeBin { difficulty: tier.clone(), planner: *planner, t, runs: vals.len(), mean, std });
        }
    }

    let mut by_solver: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in runs {
        for row in &r.timings {
            by_solver.entry((row.planner.clone(), row.solver.clone())).or_default().push(row.seconds);
        }
    }
    let mut timing_stats = Vec::new();
    let mut timing_histogram = Vec::new();
    for ((planner, solver), mut xs) in by_solver {
        xs.sort_by(f64::total_cmp);
        let max = *xs.last().expect("groups are non-empty");
        timing_stats.push(TimingStats {
            planner: planner.clone(),
            solver: solver.clone(),
            count: xs.len(),
            mean_s: xs.iter().sum::<f64>() / xs.len() as f64,
            p50_s: quantile(&xs, 0.5),
            p95_s: quantile(&xs, 0.95),
            max_s: max,
        });
        let width = if max > 0.0 { max / HISTOGRAM_BINS as f64 } else { 1.0 };
        let mut counts = [0usize; HISTOGRAM_BINS];
        for x in &xs {
            counts[((x / width) as usize).min(HISTOGRAM_BINS - 1)] += 1;
        }
        for (k, count) in counts.into_iter().enumerate() {
            timing_histogram.push(HistogramBin {
                planner: planner.clone(),
                solver: solver.clone(),
                lo_s: k as f64 * width,
                hi_s: (k + 1) as f64 * width,
                count,
            });
        }
    }

    SweepReport { runs: runs.len(), rows, curves, timing_stats, timing_histogram, failures }
}

/// Runs every (map, planner, seed) combination. Maps are built once and shared.
///
/// A failing run is recorded in the report and the sweep continues.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutcome> {
    spec.validate()?;
    let bases: Vec<MissionConfig> = spec
        .maps
        .iter()
        .map(|m| MissionConfig { map: m.clone(), ..spec.base.clone() })
        .collect();
    run_jobs(&bases, &spec.seeds, &spec.planners, spec.jobs, spec.bin_width)
}

/// Like [`run_sweep`] but every config brings its own map and parameters.
pub fn run_sweep_configs(
    configs: &[MissionConfig],
    seeds: &[u64],
    planners: &[PlannerKind],
    jobs: usize,
    bin_width: f64,
) -> Result<SweepOutcome> {
    if configs.is_empty() {
        return Err(Error::Config("a sweep needs at least one config".into()));
    }
    for cfg in configs {
        SweepSpec { bin_width, ..SweepSpec::new(cfg.clone(), vec![cfg.map.clone()], seeds.to_vec(), planners.to_vec()) }
            .validate()?;
    }
    run_jobs(configs, seeds, planners, jobs, bin_width)
}

fn run_jobs(bases: &[MissionConfig], seeds: &[u64], planners: &[PlannerKind], jobs: usize, bin_width: f64) -> Result<SweepOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

    pool.install(|| {
        let maps: Vec<(String, std::result::Result<Arc<GroundTruth>, Error>)> =
            bases.par_iter().map(|b| (b.map.label(), b.map.load().map(Arc::new))).collect();

        let mut jobs = Vec::new();
        for (mi, base) in bases.iter().enumerate() {
            for &planner in planners {
                for &seed in seeds {
                    let mut cfg = base.clone();
                    cfg.planner = planner;
                    cfg.seed = seed;
                    jobs.push((mi, cfg));
                }
            }
        }

        let results: Vec<std::result::Result<MissionOutput, RunFailure>> = jobs
            .par_iter()
            .map(|(mi, cfg)| {
                let (label, map) = &maps[*mi];
                let fail = |e: &Error| RunFailure {
                    map: label.clone(),
                    planner: cfg.planner,
                    seed: cfg.seed,
                    kind: e.kind().into(),
                    message: e.to_string(),
                };
                match map {
                    Ok(gt) => run_mission_on(cfg, gt).map_err(|e| fail(&e)),
                    Err(e) => Err(fail(e)),
                }
            })
            .collect();

        let mut outputs = Vec::new();
        let mut failures = Vec::new();
        for r in results {
            match r {
                Ok(o) => outputs.push(o),
                Err(f) => failures.push(f),
            }
        }
        let records: Vec<RunRecord> = outputs.iter().map(RunRecord::from_output).collect();
        let report = aggregate(&records, bin_width, failures);
        Ok(SweepOutcome { outputs, report })
    })
}

impl SweepReport {
    /// Writes `aggregate.csv`, `curves.csv`, `timing_stats.csv`, `timing_histogram.csv`,
    /// `failures.json` and the whole report as `report.json`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        export::write_table(
            &dir.join("aggregate.csv"),
            &["difficulty", "planner", "runs", "mean_ratio", "std_ratio", "min_ratio", "max_ratio"],
            &self.rows,
        )?;
        export::write_table(&dir.join("curves.csv"), &["difficulty", "planner", "t", "runs", "mean", "std"], &self.curves)?;
        export::write_table(
            &dir.join("timing_stats.csv"),
            &["planner", "solver", "count", "mean_s", "p50_s", "p95_s", "max_s"],
            &self.timing_stats,
        )?;
        export::write_table(
            &dir.join("timing_histogram.csv"),
            &["planner", "solver", "lo_s", "hi_s", "count"],
            &self.timing_histogram,
        )?;
        export::write_json_file(&dir.join("failures.json"), &self.failures)?;
        export::write_json_file(&dir.join("report.json"), self)
    }

    pub fn row(&self, difficulty: &str, planner: PlannerKind) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.difficulty == difficulty && r.planner == planner)
    }
}

impl SweepOutcome {
    /// Writes every run's files and the aggregated tables into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for o in &self.outputs {
            export_run(o, dir)?;
        }
        self.report.write(dir)
    }
}

/// Rebuilds the aggregated report from the per-run files in `dir`.
pub fn report_dir(dir: impl AsRef<Path>, bin_width: f64) -> Result<SweepReport> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut summaries = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(SUMMARY_FILE)) {
            summaries.push(path);
        }
    }
    if summaries.is_empty() {
        return Err(Error::Format { path: dir.to_path_buf(), msg: format!("no *{SUMMARY_FILE} files found") });
    }
    summaries.sort();

    let mut runs = Vec::new();
    for path in summaries {
        let summary = read_summary(&path)?;
        let id = summary.run_id.clone();
        let mut by_t: HashMap<u64, Option<f64>> = HashMap::new();
        let series_path = dir.join(format!("{id}.csv"));
        let mut ratio_series = Vec::new();
        if series_path.exists() {
            for row in read_series(&series_path)? {
                if row.metric == "ratio" && by_t.insert(row.t.to_bits(), row.value).is_none() {
                    ratio_series.push((row.t, row.value));
                }
            }
        }
        ratio_series.sort_by(|a, b| a.0.total_cmp(&b.0));
        let timing_path = dir.join(format!("{id}.timings.csv"));
        let timings = if timing_path.exists() { read_timings(&timing_path)? } else { Vec::new() };
        runs.push(RunRecord { summary, ratio_series, timings });
    }
    let failures_path = dir.join("failures.json");
    let failures = if failures_path.exists() {
        let text = std::fs::read_to_string(&failures_path).map_err(|e| Error::io(&failures_path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format { path: failures_path.clone(), msg: e.to_string() })?
    } else {
        Vec::new()
    };
    Ok(aggregate(&runs, bin_width, failures))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(id: &str, tier: &str, planner: PlannerKind, ratio: Option<f64>) -> MissionSummary {
        MissionSummary {
            run_id: id.into(),
            planner,
            seed: 0,
            map: "m".into(),
            difficulty: Some(tier.into()),
            total_targets: 10,
            sampled: 0,
            ratio,
            final_t: 10.0,
            steps: 20,
            distance: 0.0,
            global_calls: 0,
            local_cycles: 0,
        }
    }

    #[test]
    fn aggregate_statistics() {
        let mk = |id: &str, r: f64| RunRecord {
            summary: summary(id, "easy", PlannerKind::Himos, Some(r)),
            ratio_series: vec![(0.0, Some(0.0)), (5.0, Some(r / 2.0)), (10.0, Some(r))],
            timings: vec![],
        };
        let rep = aggregate(&[mk("a", 0.2), mk("b", 0.4)], 5.0, vec![]);
        let row = rep.row("easy", PlannerKind::Himos).unwrap();
        assert_eq!(row.runs, 2);
        assert!((row.mean_ratio - 0.3).abs() < 1e-12);
        assert!((row.std_ratio - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(rep.row(ALL_TIERS, PlannerKind::Himos).unwrap().runs, 2);
        let bins: Vec<_> = rep.curves.iter().filter(|b| b.difficulty == "easy").collect();
        assert_eq!(bins.len(), 3);
        assert!((bins[1].mean - 0.15).abs() < 1e-12);
        assert_eq!(bins[0].std, 0.0);
    }

    #[test]
    fn null_ratios_are_skipped() {
        let r = RunRecord { summary: summary("a", "hard", PlannerKind::Mcts, None), ratio_series: vec![(0.0, None)], timings: vec![] };
        let rep = aggregate(&[r], 1.0, vec![]);
        assert_eq!(rep.row("hard", PlannerKind::Mcts).unwrap().runs, 0);
        assert!(rep.curves.is_empty());
    }

    #[test]
    fn histogram_counts_every_solve() {
        let timings = (1..=50)
            .map(|k| export::TimingRow { run_id: "a".into(), planner: "himos".into(), solver: "local".into(), seconds: k as f64 * 1e-3 })
            .collect();
        let r = RunRecord { summary: summary("a", "easy", PlannerKind::Himos, Some(0.1)), ratio_series: vec![], timings };
        let rep = aggregate(&[r], 1.0, vec![]);
        assert_eq!(rep.timing_histogram.iter().map(|b| b.count).sum::<usize>(), 50);
        assert_eq!(rep.timing_histogram.len(), HISTOGRAM_BINS);
        assert_eq!(rep.timing_stats[0].count, 50);
        assert!((rep.timing_stats[0].max_s - 0.05).abs() < 1e-15);
    }

    #[test]
    fn step_lookup() {
        let s = vec![(0.0, Some(0.0)), (0.5, Some(0.1)), (1.0, Some(0.2))];
        assert_eq!(value_at(&s, 0.75), Some(0.1));
        assert_eq!(value_at(&s, 1.0), Some(0.2));
        assert_eq!(value_at(&s, -1.0), None);
    }
}
