//! Grid runner: every (strategy, mode, seed) combination over one dataset
//! split, with one trace CSV per run, a summary table and long-format plot
//! data.
//!
//! Files are written as `<name>.partial` and renamed once complete. A run
//! that fails keeps whatever trace it had recorded under the `.partial`
//! name.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, ExperimentError};
use crate::eval;
use crate::ingest::{self, DatasetFormat, SplitConfig};
use crate::simulation::{SimulationConfig, SimulationTrace, Simulator, World};
use crate::strategies::StrategyKind;
use crate::synth;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const PLOT_FILE: &str = "plot_data.csv";
pub const PLOT_HEADER: &str = "strategy,mode,seed,iteration,series,value";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Original,
    EqualRatio,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Original => "original",
            Mode::EqualRatio => "equal-ratio",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "original" => Ok(Mode::Original),
            "equal-ratio" => Ok(Mode::EqualRatio),
            other => Err(format!("unknown mode {other:?} (expected original or equal-ratio)")),
        }
    }
}

/// Experiment configuration, normally read from a TOML file.
///
/// `sim.strategy`, `sim.equal_ratio` and `sim.seed` are ignored: every run
/// of the grid sets them from `strategies`, `modes` and `seeds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset_path: PathBuf,
    pub dataset_format: DatasetFormat,
    pub output_dir: PathBuf,
    pub strategies: Vec<StrategyKind>,
    pub modes: Vec<Mode>,
    pub seeds: Vec<u64>,
    pub split: SplitConfig,
    pub sim: SimulationConfig,
    /// Query size for the personalized strategies. Defaults to
    /// `sim.query_size`.
    pub personalized_query_size: Option<usize>,
    /// Worker threads. `None` leaves the choice to rayon.
    pub threads: Option<usize>,
    /// Iterations reported in the summary table.
    pub checkpoints: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset_path: PathBuf::from("data/ml-1m"),
            dataset_format: DatasetFormat::Ml1m,
            output_dir: PathBuf::from("results"),
            strategies: StrategyKind::ALL.to_vec(),
            modes: vec![Mode::Original],
            seeds: vec![0],
            split: SplitConfig::default(),
            sim: SimulationConfig::default(),
            personalized_query_size: None,
            threads: None,
            checkpoints: (0..=300).step_by(50).collect(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String, ExperimentError> {
        toml::to_string(self).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_string()));
        if self.strategies.is_empty() {
            return bad("strategies must not be empty");
        }
        if self.modes.is_empty() {
            return bad("modes must not be empty");
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.threads == Some(0) {
            return bad("threads must be >= 1");
        }
        if self.personalized_query_size == Some(0) {
            return bad("personalized_query_size must be >= 1");
        }
        let distinct = |n: usize, m: usize| n == m;
        if !distinct(self.strategies.iter().collect::<BTreeSet<_>>().len(), self.strategies.len())
            || !distinct(self.modes.iter().collect::<BTreeSet<_>>().len(), self.modes.len())
            || !distinct(self.seeds.iter().collect::<BTreeSet<_>>().len(), self.seeds.len())
        {
            return bad("strategies, modes and seeds must not contain duplicates");
        }
        self.split.validate()?;
        self.sim.validate()?;
        Ok(())
    }

    /// Every run of the grid, strategy-major.
    pub fn runs(&self) -> Vec<RunKey> {
        let mut out = Vec::new();
        for &strategy in &self.strategies {
            for &mode in &self.modes {
                for &seed in &self.seeds {
                    out.push(RunKey { strategy, mode, seed });
                }
            }
        }
        out
    }

    /// Simulation settings for one run.
    pub fn sim_for(&self, key: &RunKey) -> SimulationConfig {
        let mut sim = self.sim;
        sim.strategy = key.strategy;
        sim.equal_ratio = key.mode == Mode::EqualRatio;
        sim.seed = key.seed;
        if key.strategy.is_personalized() {
            if let Some(q) = self.personalized_query_size {
                sim.query_size = q;
            }
        }
        sim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RunKey {
    pub strategy: StrategyKind,
    pub mode: Mode,
    pub seed: u64,
}

impl RunKey {
    pub fn file_name(&self) -> String {
        format!("{}_{}_seed{}.csv", self.strategy.name(), self.mode.name(), self.seed)
    }
}

impl fmt::Display for RunKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/seed{}", self.strategy.name(), self.mode.name(), self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub key: RunKey,
    pub trace_path: PathBuf,
    /// The trace as read back from `trace_path`.
    pub trace: SimulationTrace,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub runs: Vec<RunOutput>,
    pub summary_path: PathBuf,
    pub plot_path: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Load the configured dataset, split it and run the grid.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary, ExperimentError> {
    cfg.validate()?;
    log::info!("loading {} ({:?})", cfg.dataset_path.display(), cfg.dataset_format);
    let ds = ingest::load_dataset(&cfg.dataset_path, cfg.dataset_format, cfg.split.k_core)?;
    log::info!(
        "{} users, {} items, {} ratings, density {:.4}",
        ds.n_users(),
        ds.n_items(),
        ds.ratings.len(),
        ds.density()
    );
    let world = synth::world_from_dataset(&ds, &cfg.split)?;
    run_grid(&world, cfg)
}

/// Run the grid on an already split world.
pub fn run_grid(world: &World, cfg: &ExperimentConfig) -> Result<ExperimentSummary, ExperimentError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
    let runs = cfg.runs();
    let work = || -> Vec<Result<RunOutput, ExperimentError>> {
        runs.par_iter().map(|key| run_one(world, cfg, key)).collect()
    };
    let results = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ExperimentError::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut outputs = Vec::with_capacity(results.len());
    let mut first_err = None;
    for r in results {
        match r {
            Ok(o) => outputs.push(o),
            Err(e) => {
                log::error!("{e}");
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }

    let summary_path = cfg.output_dir.join(SUMMARY_FILE);
    eval::write_atomic(&summary_path, summary_csv_string(&outputs, &cfg.checkpoints).as_bytes())
        .map_err(io_err(&summary_path))?;
    let plot_path = cfg.output_dir.join(PLOT_FILE);
    let traces: Vec<(RunKey, SimulationTrace)> = outputs.iter().map(|o| (o.key, o.trace.clone())).collect();
    emit_plot_data(&traces, &plot_path)?;
    Ok(ExperimentSummary {
        runs: outputs,
        summary_path,
        plot_path,
    })
}

fn run_one(world: &World, cfg: &ExperimentConfig, key: &RunKey) -> Result<RunOutput, ExperimentError> {
    let path = cfg.output_dir.join(key.file_name());
    log::info!("{key}: start");
    let sim = Simulator::new(world, cfg.sim_for(key))?;
    let (trace, outcome) = sim.run_to_end(|rec| {
        log::debug!(
            "{key}: iteration {} |K| = {} acquired {}",
            rec.iteration,
            rec.state.known.len(),
            rec.kept.len()
        );
    });
    if let Err(e) = outcome {
        let mut partial = path.clone().into_os_string();
        partial.push(".partial");
        let partial = PathBuf::from(partial);
        fs::write(&partial, eval::trace_csv_string(&trace)).map_err(io_err(&partial))?;
        return Err(e.into());
    }
    eval::trace_to_csv(&trace, &path).map_err(|e| match e {
        EvalError::Io(source) => ExperimentError::Io {
            path: path.clone(),
            source,
        },
        other => other.into(),
    })?;
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let trace = eval::parse_trace_csv(&text)?;
    if let Some(p) = trace.last() {
        log::info!(
            "{key}: done after {} iterations, rmse {:.4} (protected {:.4}, unprotected {:.4})",
            p.iteration,
            p.rmse_all,
            p.rmse_protected,
            p.rmse_unprotected
        );
    }
    Ok(RunOutput {
        key: *key,
        trace_path: path,
        trace,
    })
}

/// One row per run and group, one column per checkpoint. Cells carry a `*`
/// when the group difference at that checkpoint is significant, and are
/// empty when the run has no evaluation at that iteration.
pub fn summary_csv_string(runs: &[RunOutput], checkpoints: &[usize]) -> String {
    let mut out = String::from("strategy,mode,seed,group");
    for c in checkpoints {
        out.push_str(&format!(",i={c}"));
    }
    out.push('\n');
    for run in runs {
        for (group, protected) in [("protected", true), ("unprotected", false)] {
            out.push_str(&format!(
                "{},{},{},{group}",
                run.key.strategy.name(),
                run.key.mode.name(),
                run.key.seed
            ));
            for &c in checkpoints {
                out.push(',');
                if let Some(p) = run.trace.at_iteration(c) {
                    let v = if protected { p.rmse_protected } else { p.rmse_unprotected };
                    out.push_str(&format!("{v:.3}"));
                    if p.significant() {
                        out.push('*');
                    }
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn plot_data_string(traces: &[(RunKey, SimulationTrace)]) -> String {
    let mut out = String::from(PLOT_HEADER);
    out.push('\n');
    for (key, trace) in traces {
        let rolling = eval::rolling_rmse(&trace.points);
        for (p, roll) in trace.points.iter().zip(rolling) {
            for (series, value) in [
                ("rmse_all", p.rmse_all),
                ("rmse_protected", p.rmse_protected),
                ("rmse_unprotected", p.rmse_unprotected),
                ("rolling_w10", roll),
            ] {
                out.push_str(&format!(
                    "{},{},{},{},{series},{value:.6}\n",
                    key.strategy.name(),
                    key.mode.name(),
                    key.seed,
                    p.iteration
                ));
            }
        }
    }
    out
}

/// Long-format CSV of every trace, for plotting.
pub fn emit_plot_data(traces: &[(RunKey, SimulationTrace)], path: &Path) -> Result<(), ExperimentError> {
    let text = plot_data_string(traces);
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(text.as_bytes()).map_err(io_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_overrides_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            dataset_path = "/data/ml-100k"
            dataset_format = "ml-100k"
            strategies = ["random", "greedy-extend"]
            modes = ["original", "equal-ratio"]
            seeds = [1, 2]
            checkpoints = [0, 5]

            [sim]
            query_size = 3
            max_iterations = 7

            [sim.hyperparams]
            n_factors = 8
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.dataset_format, DatasetFormat::Ml100k);
        assert_eq!(cfg.strategies, vec![StrategyKind::Random, StrategyKind::GreedyExtend]);
        assert_eq!(cfg.sim.query_size, 3);
        assert_eq!(cfg.sim.max_iterations, Some(7));
        assert_eq!(cfg.sim.hyperparams.n_factors, 8);
        assert_eq!(cfg.sim.hyperparams.n_epochs, 20);
        assert_eq!(cfg.runs().len(), 8);
    }

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_and_names_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("stratgies = [\"random\"]").is_err());
        assert!(ExperimentConfig::from_toml_str("strategies = [\"nope\"]").is_err());
        assert!(ExperimentConfig::from_toml_str("modes = [\"both\"]").is_err());
    }

    #[test]
    fn empty_or_duplicate_grid_is_invalid() {
        let mut cfg = ExperimentConfig {
            seeds: vec![],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.seeds = vec![3, 3];
        assert!(cfg.validate().is_err());
        cfg.seeds = vec![3];
        cfg.strategies.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_checkpoints_match_the_table_grid() {
        assert_eq!(ExperimentConfig::default().checkpoints, vec![0, 50, 100, 150, 200, 250, 300]);
    }

    #[test]
    fn personalized_query_size_only_applies_to_personalized() {
        let cfg = ExperimentConfig {
            personalized_query_size: Some(4),
            ..Default::default()
        };
        let key = |strategy| RunKey {
            strategy,
            mode: Mode::EqualRatio,
            seed: 9,
        };
        let s = cfg.sim_for(&key(StrategyKind::MaxRating));
        assert_eq!((s.query_size, s.equal_ratio, s.seed), (4, true, 9));
        assert_eq!(cfg.sim_for(&key(StrategyKind::Popularity)).query_size, 10);
    }

    #[test]
    fn file_names() {
        let k = RunKey {
            strategy: StrategyKind::PopVariance,
            mode: Mode::EqualRatio,
            seed: 42,
        };
        assert_eq!(k.file_name(), "pop-var_equal-ratio_seed42.csv");
    }

    fn trace_of(n: usize) -> SimulationTrace {
        use crate::simulation::TracePoint;
        SimulationTrace {
            points: (0..n)
                .map(|k| TracePoint {
                    iteration: k,
                    n_known: 10 * k,
                    acq_protected: 1,
                    acq_unprotected: 2,
                    rmse_all: 1.0 - 0.01 * k as f64,
                    rmse_protected: 1.01,
                    rmse_unprotected: 0.99,
                    rmse_diff: 0.02,
                    t_statistic: 3.0,
                    p_value: if k == 0 { 0.001 } else { 0.2 },
                })
                .collect(),
        }
    }

    #[test]
    fn plot_data_rows_and_pass_through() {
        let key = RunKey {
            strategy: StrategyKind::Random,
            mode: Mode::Original,
            seed: 0,
        };
        let trace = trace_of(5);
        let text = plot_data_string(&[(key, trace.clone())]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], PLOT_HEADER);
        assert_eq!(lines.len(), 1 + 20);

        let csv = eval::trace_csv_string(&trace);
        let trace_rolling: Vec<&str> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
        let plot_rolling: Vec<&str> = lines
            .iter()
            .filter(|l| l.contains(",rolling_w10,"))
            .map(|l| l.rsplit(',').next().unwrap())
            .collect();
        assert_eq!(trace_rolling, plot_rolling);

        assert_eq!(plot_data_string(&[]), format!("{PLOT_HEADER}\n"));
    }

    #[test]
    fn empty_plot_data_file_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        emit_plot_data(&[], &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), format!("{PLOT_HEADER}\n"));
    }

    #[test]
    fn summary_marks_significance_and_gaps() {
        let run = RunOutput {
            key: RunKey {
                strategy: StrategyKind::Variance,
                mode: Mode::Original,
                seed: 1,
            },
            trace_path: PathBuf::new(),
            trace: trace_of(3),
        };
        let text = summary_csv_string(&[run], &[0, 2, 50]);
        assert_eq!(
            text,
            "strategy,mode,seed,group,i=0,i=2,i=50\n\
             var,original,1,protected,1.010*,1.010,\n\
             var,original,1,unprotected,0.990*,0.990,\n"
        );
    }
}
