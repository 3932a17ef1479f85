//! Experiment orchestration and metric files.
//!
//! Every run writes `levels.csv` (deterministic for a fixed seed), wall-clock
//! times in `timing.csv`, and a `metadata.json` summary. Randomness flows
//! from the one seed through separate streams per consumer.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use oda_core::baselines::{self, BaselineResult, SvqInit};
use oda_core::model::{LevelRecord, Observation, OdaModel, Schedule};
use oda_core::rl::{
    self, AggregateQ, CartPoleEnv, GridQ, JointEmbedding, QTable, TwoTimescaleSchedule,
};
use oda_core::rng;
use oda_core::tasks::{self, LabeledDataset};
use oda_core::{Divergence, DivergenceKind, ModelSnapshot, TrainOutcome};
use rand::Rng;
use serde::Serialize;

use crate::config::{Aggregation, ExperimentConfig, Mode};
use crate::data::{self, DataError, Standardizer};
use crate::error::CliError;

// Stream ids under the experiment seed.
const DATA_STREAM: u64 = 1;
const MODEL_STREAM: u64 = 2;
const OBS_STREAM: u64 = 3;
const SPLIT_STREAM: u64 = 4;
const BASELINE_STREAM: u64 = 5;
const EPISODE_STREAM: u64 = 6;
const EVAL_STREAM: u64 = 7;
const CHECKPOINT_EVAL_STREAM: u64 = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineSummary {
    pub algorithm: String,
    pub k: usize,
    pub final_distortion: f64,
    pub observations: u64,
    /// First point of the curve within 10% of its final distortion.
    pub obs_to_within_10pct: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Summary {
    pub mode: String,
    pub seed: u64,
    pub divergence: String,
    pub stop: Option<String>,
    pub levels: usize,
    pub observations: u64,
    pub final_k: usize,
    pub final_distortion: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub train_rows: usize,
    pub test_rows: usize,
    pub standardizer: Option<Standardizer>,
    pub eval_mean_steps: Option<f64>,
    /// `(episode, mean greedy episode length)` at each evaluation checkpoint.
    pub eval_checkpoints: Vec<(usize, f64)>,
    pub baselines: Vec<BaselineSummary>,
}

struct Csv {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = self.header.join(",");
        text.push('\n');
        for r in &self.rows {
            text.push_str(&r.join(","));
            text.push('\n');
        }
        write_file(path, &text)
    }
}

fn cell<T: Display>(v: T) -> String {
    v.to_string()
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Output {
        path: path.display().to_string(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    write_file(path, &text)
}

/// Runs `mode` and writes its files under `out`.
pub fn run_experiment(
    mode: Mode,
    config: &ExperimentConfig,
    seed: u64,
    out: &Path,
) -> Result<Summary, CliError> {
    if let Some(m) = config.mode {
        if m != mode {
            return Err(CliError::Config(format!(
                "config mode {} does not match subcommand {}",
                m.name(),
                mode.name()
            )));
        }
    }
    fs::create_dir_all(out).map_err(|source| CliError::Output {
        path: out.display().to_string(),
        source,
    })?;
    let summary = match mode {
        Mode::Cluster => run_cluster(config, seed, out)?,
        Mode::Classify => run_classify(config, seed, out)?,
        Mode::CompareBaselines => run_compare(config, seed, out)?,
        Mode::RlCartpole => run_rl(config, seed, out)?,
    };
    write_json(&out.join("metadata.json"), &summary)?;
    Ok(summary)
}

fn divergence(config: &ExperimentConfig, dimension: usize) -> Result<Divergence, CliError> {
    let kind = match &config.divergence {
        Some(token) => token.parse::<DivergenceKind>()?,
        None => DivergenceKind::SquaredEuclidean,
    };
    Ok(Divergence::new(kind, dimension)?)
}

/// The dataset named by the config: a CSV file or a seeded generator.
pub fn load_dataset(config: &ExperimentConfig, seed: u64) -> Result<LabeledDataset, CliError> {
    let spec = config.data()?;
    match (&spec.path, &spec.synthetic) {
        (Some(path), None) => Ok(data::ingest_csv(path, spec.labeled)?),
        (None, Some(gen)) => Ok(data::synthesize(gen, &mut rng::stream(seed, DATA_STREAM))?),
        _ => Err(CliError::Config(
            "[data] needs exactly one of `path` or `synthetic`".into(),
        )),
    }
}

fn mean_of(data: &LabeledDataset) -> Vec<f64> {
    let n = data.len() as f64;
    let mut m = vec![0.0; data.dimension];
    for r in &data.rows {
        for (a, v) in m.iter_mut().zip(&r.x) {
            *a += v / n;
        }
    }
    m
}

fn schedule_for(
    config: &ExperimentConfig,
    points: &[Vec<f64>],
    div: &Divergence,
) -> Result<Schedule, CliError> {
    let base = if config.train.scale_schedule {
        Schedule::scaled_to(points, div)?
    } else {
        Schedule::default()
    };
    let s = config.schedule.apply(base);
    s.validate()?;
    Ok(s)
}

/// Uniform draws with replacement from `rows`.
fn draw_stream<'a, R: Rng + 'a>(
    rows: &'a [Observation],
    limit: u64,
    mut rng: R,
) -> impl Iterator<Item = Observation> + 'a {
    (0..limit).map(move |_| rows[rng.random_range(0..rows.len())].clone())
}

const LEVEL_HEADER: &[&str] = &[
    "level",
    "temperature",
    "lambda",
    "k",
    "distortion",
    "accuracy",
    "obs",
    "obs_total",
    "forced_cutoff",
];

struct LevelLog {
    levels: Csv,
    timing: Csv,
    /// `(obs_total, distortion)` at each level end.
    curve: Vec<(u64, f64)>,
}

impl LevelLog {
    fn new() -> Self {
        Self {
            levels: Csv::new(LEVEL_HEADER),
            timing: Csv::new(&["level", "wall_ms"]),
            curve: Vec::new(),
        }
    }

    fn push(&mut self, record: &LevelRecord, distortion: f64, accuracy: Option<f64>, obs_total: u64) {
        let level = self.levels.rows.len();
        let t = record.temperature;
        self.levels.push(vec![
            cell(level),
            cell(t),
            cell(1.0 / (t + 1.0)),
            cell(record.k_effective),
            cell(distortion),
            accuracy.map(cell).unwrap_or_default(),
            cell(record.obs_used),
            cell(obs_total),
            cell(record.forced_cutoff as u8),
        ]);
        self.timing.push(vec![
            cell(level),
            cell(format!("{:.3}", record.wall_time.as_secs_f64() * 1e3)),
        ]);
        self.curve.push((obs_total, distortion));
    }

    fn write(&self, out: &Path) -> Result<(), CliError> {
        self.levels.write(&out.join("levels.csv"))?;
        self.timing.write(&out.join("timing.csv"))
    }
}

struct ClusterRun {
    model: OdaModel,
    outcome: TrainOutcome,
    log: LevelLog,
    data: LabeledDataset,
    standardizer: Option<Standardizer>,
}

fn train_clustering(config: &ExperimentConfig, seed: u64) -> Result<ClusterRun, CliError> {
    let mut data = load_dataset(config, seed)?;
    let standardizer = config.data()?.standardize.then(|| Standardizer::fit(&data));
    if let Some(s) = &standardizer {
        s.apply(&mut data);
    }
    // Clustering ignores labels.
    let data = LabeledDataset::from_points(data.points()).map_err(DataError::from_model)?;
    let div = divergence(config, data.dimension)?;
    let points = data.points();
    let schedule = schedule_for(config, &points, &div)?;
    let init = config.train.init.clone().unwrap_or_else(|| mean_of(&data));
    let mut model = OdaModel::clustering(div, schedule, init, rng::derive_seed(seed, MODEL_STREAM))?
        .with_stop(config.stop.criteria());
    let mut log = LevelLog::new();
    let mut failure = None;
    let stream = draw_stream(&data.rows, config.train.max_observations, rng::stream(seed, OBS_STREAM));
    let outcome = oda_core::train_with(&mut model, stream, |m, record| {
        match tasks::average_distortion(m, &data) {
            Ok(d) => log.push(record, d, None, m.obs_count_total),
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    Ok(ClusterRun {
        model,
        outcome,
        log,
        data,
        standardizer,
    })
}

fn base_summary(mode: Mode, seed: u64, model: &OdaModel, outcome: &TrainOutcome) -> Summary {
    Summary {
        mode: mode.name().to_string(),
        seed,
        divergence: model.divergence.kind.token().to_string(),
        stop: Some(format!("{:?}", outcome.stop)),
        levels: model.history.len(),
        observations: model.obs_count_total,
        final_k: model.len(),
        ..Summary::default()
    }
}

fn run_cluster(config: &ExperimentConfig, seed: u64, out: &Path) -> Result<Summary, CliError> {
    let run = train_clustering(config, seed)?;
    run.log.write(out)?;
    write_file(&out.join("model.json"), &ModelSnapshot::of(&run.model).to_json()?)?;
    Ok(Summary {
        final_distortion: Some(tasks::average_distortion(&run.model, &run.data)?),
        train_rows: run.data.len(),
        standardizer: run.standardizer,
        ..base_summary(Mode::Cluster, seed, &run.model, &run.outcome)
    })
}

fn run_classify(config: &ExperimentConfig, seed: u64, out: &Path) -> Result<Summary, CliError> {
    let spec = config.data()?;
    let full = load_dataset(config, seed)?;
    if !full.is_labeled() {
        return Err(CliError::Config(
            "classify needs labeled data (set `labeled = true` for CSV input)".into(),
        ));
    }
    let (mut train, mut test) = data::split(&full, spec.test_fraction, &mut rng::stream(seed, SPLIT_STREAM))?;
    let standardizer = spec.standardize.then(|| Standardizer::fit(&train));
    if let Some(s) = &standardizer {
        s.apply(&mut train);
        s.apply(&mut test);
    }
    let div = divergence(config, train.dimension)?;
    let schedule = schedule_for(config, &train.points(), &div)?;
    let init = config.train.init.clone().unwrap_or_else(|| mean_of(&train));
    let classes = train.classes.iter().map(|c| (init.clone(), c.clone())).collect();
    let mut model = OdaModel::classification(div, schedule, classes, rng::derive_seed(seed, MODEL_STREAM))?
        .with_stop(config.stop.criteria());
    let eval = if test.is_empty() { &train } else { &test };
    let mut log = LevelLog::new();
    let mut failure = None;
    let stream = draw_stream(&train.rows, config.train.max_observations, rng::stream(seed, OBS_STREAM));
    let outcome = oda_core::train_with(&mut model, stream, |m, record| {
        let scored = tasks::average_distortion(m, &train)
            .and_then(|d| Ok((d, tasks::accuracy(m, eval)?)));
        match scored {
            Ok((d, acc)) => log.push(record, d, Some(acc), m.obs_count_total),
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    log.write(out)?;
    write_file(&out.join("model.json"), &ModelSnapshot::of(&model).to_json()?)?;
    Ok(Summary {
        final_distortion: Some(tasks::average_distortion(&model, &train)?),
        test_accuracy: Some(tasks::accuracy(&model, eval)?),
        train_rows: train.len(),
        test_rows: test.len(),
        standardizer,
        ..base_summary(Mode::Classify, seed, &model, &outcome)
    })
}

/// First curve point within 10% of the final value.
pub fn obs_to_within(curve: &[(u64, f64)], fraction: f64) -> u64 {
    let Some(&(_, last)) = curve.last() else {
        return 0;
    };
    curve
        .iter()
        .find(|(_, d)| *d <= last * (1.0 + fraction))
        .map_or(0, |(n, _)| *n)
}

fn write_curve(path: &Path, curve: &[(u64, f64)]) -> Result<(), CliError> {
    let mut csv = Csv::new(&["observations", "distortion"]);
    for (n, d) in curve {
        csv.push(vec![cell(n), cell(d)]);
    }
    csv.write(path)
}

fn baseline_summary(name: &str, k: usize, curve: &[(u64, f64)]) -> BaselineSummary {
    BaselineSummary {
        algorithm: name.to_string(),
        k,
        final_distortion: curve.last().map_or(f64::NAN, |c| c.1),
        observations: curve.last().map_or(0, |c| c.0),
        obs_to_within_10pct: obs_to_within(curve, 0.1),
    }
}

fn run_compare(config: &ExperimentConfig, seed: u64, out: &Path) -> Result<Summary, CliError> {
    let run = train_clustering(config, seed)?;
    run.log.write(out)?;
    write_file(&out.join("model.json"), &ModelSnapshot::of(&run.model).to_json()?)?;
    let div = run.model.divergence;
    let points = run.data.points();
    let k = config.baselines.k.unwrap_or(run.model.len());
    let cfg = &config.baselines;

    let kmeans = baselines::kmeans_best_of(&div, &points, k, rng::derive_seed(seed, BASELINE_STREAM), cfg.kmeans_restarts)?;
    let mut svq_rng = rng::stream(seed, BASELINE_STREAM);
    let stream = (0..cfg.svq_observations).map(|_| points[svq_rng.random_range(0..points.len())].clone());
    let svq = baselines::svq_fit(
        &div,
        stream,
        k,
        |n| 1.0 / (1.0 + n as f64),
        SvqInit::FarthestOfFirst(cfg.svq_init_pool),
        &points,
        cfg.eval_every,
    )?;
    let da = baselines::batch_da_fit(&div, &points, &run.model.schedule, rng::derive_seed(seed, BASELINE_STREAM))?;

    let results: [(&str, usize, &[(u64, f64)], Option<&BaselineResult>); 4] = [
        ("oda", run.model.len(), &run.log.curve, None),
        ("kmeans", k, &kmeans.distortion_curve, Some(&kmeans)),
        ("svq", k, &svq.distortion_curve, Some(&svq)),
        ("batch_da", da.k, &da.distortion_curve, Some(&da)),
    ];
    let mut table = Csv::new(&[
        "algorithm",
        "k",
        "final_distortion",
        "observations",
        "obs_to_within_10pct",
        "wall_ms",
    ]);
    let mut summaries = Vec::new();
    for (name, k, curve, result) in results {
        write_curve(&out.join(format!("curve_{name}.csv")), curve)?;
        let s = baseline_summary(name, k, curve);
        let wall = match result {
            Some(r) => r.wall_time.as_secs_f64() * 1e3,
            None => run.model.history.iter().map(|h| h.wall_time.as_secs_f64() * 1e3).sum(),
        };
        table.push(vec![
            cell(name),
            cell(s.k),
            cell(s.final_distortion),
            cell(s.observations),
            cell(s.obs_to_within_10pct),
            cell(format!("{wall:.3}")),
        ]);
        summaries.push(s);
    }
    table.write(&out.join("summary.csv"))?;
    Ok(Summary {
        final_distortion: Some(tasks::average_distortion(&run.model, &run.data)?),
        train_rows: run.data.len(),
        standardizer: run.standardizer,
        baselines: summaries,
        ..base_summary(Mode::CompareBaselines, seed, &run.model, &run.outcome)
    })
}

#[derive(Serialize)]
struct GridCheckpoint<'a> {
    lows: &'a [f64],
    highs: &'a [f64],
    bins: usize,
    q: &'a [f64],
    visit_counts: &'a [u64],
}

fn evaluate<T: QTable>(table: &T, episodes: usize, max_steps: usize, seed: u64, stream: u64) -> Result<Vec<usize>, CliError> {
    let mut env = CartPoleEnv::default();
    let mut rng = rng::stream(seed, stream);
    (0..episodes)
        .map(|_| Ok(rl::evaluate_episode(&mut env, table, max_steps, &mut rng)?))
        .collect()
}

fn mean(v: &[usize]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<usize>() as f64 / v.len() as f64
    }
}

/// Trains on cart-pole; `size` reports the current number of cells.
fn train_cartpole<T: QTable>(
    table: &mut T,
    config: &ExperimentConfig,
    schedule: &TwoTimescaleSchedule,
    seed: u64,
    size: impl Fn(&T) -> usize,
) -> Result<(Csv, Vec<(usize, f64)>), CliError> {
    let rl_cfg = &config.rl;
    let mut env = CartPoleEnv::default();
    let mut rng = rng::stream(seed, EPISODE_STREAM);
    let mut steps = 0u64;
    let mut episodes = Csv::new(&["episode", "steps", "cost", "k"]);
    let mut checkpoints = Vec::new();
    for e in 0..rl_cfg.episodes {
        let stats = rl::train_episode(&mut env, table, schedule, rl_cfg.max_steps, &mut steps, &mut rng)?;
        episodes.push(vec![cell(e), cell(stats.steps), cell(stats.total_cost), cell(size(table))]);
        if rl_cfg.eval_every > 0 && (e + 1) % rl_cfg.eval_every == 0 {
            let lengths = evaluate(table, rl_cfg.eval_episodes, rl_cfg.max_steps, seed, CHECKPOINT_EVAL_STREAM)?;
            checkpoints.push((e + 1, mean(&lengths)));
        }
    }
    Ok((episodes, checkpoints))
}

fn run_rl(config: &ExperimentConfig, seed: u64, out: &Path) -> Result<Summary, CliError> {
    let rl_cfg = &config.rl;
    let schedule = rl_cfg.two_timescale();
    let mut summary = Summary {
        mode: Mode::RlCartpole.name().to_string(),
        seed,
        divergence: DivergenceKind::SquaredEuclidean.token().to_string(),
        ..Summary::default()
    };
    let (episodes, checkpoints, lengths) = match rl_cfg.aggregation {
        Aggregation::Oda => {
            let mut embedding = JointEmbedding::cart_pole();
            if let Some(h) = &rl_cfg.half_ranges {
                embedding.half_ranges = h.clone();
            }
            let oda = rl_cfg.schedule.apply(rl::cart_pole_schedule());
            let mut agg = AggregateQ::new(embedding, oda, schedule.clone(), &[0.0; 4], rng::derive_seed(seed, MODEL_STREAM))?
                .with_stop(config.stop.criteria());
            let (episodes, checkpoints) = train_cartpole(&mut agg, config, &schedule, seed, AggregateQ::len)?;
            let lengths = evaluate(&agg, rl_cfg.eval_episodes, rl_cfg.max_steps, seed, EVAL_STREAM)?;
            let mut log = LevelLog::new();
            let mut total = 0u64;
            for r in &agg.aggregator.history {
                total += r.obs_used as u64;
                log.push(r, r.distortion, None, total);
            }
            log.write(out)?;
            write_json(&out.join("checkpoint.json"), &agg.checkpoint())?;
            summary.stop = agg.aggregator.stopped().map(|s| format!("{s:?}"));
            summary.levels = agg.aggregator.history.len();
            summary.observations = agg.aggregator.obs_count_total;
            summary.final_k = agg.len();
            (episodes, checkpoints, lengths)
        }
        Aggregation::Grid => {
            let mut grid = GridQ::cart_pole(rl_cfg.grid_bins);
            let (episodes, checkpoints) = train_cartpole(&mut grid, config, &schedule, seed, |g: &GridQ| g.state_cells())?;
            let lengths = evaluate(&grid, rl_cfg.eval_episodes, rl_cfg.max_steps, seed, EVAL_STREAM)?;
            LevelLog::new().write(out)?;
            write_json(
                &out.join("checkpoint.json"),
                &GridCheckpoint {
                    lows: &grid.lows,
                    highs: &grid.highs,
                    bins: grid.bins,
                    q: &grid.q,
                    visit_counts: &grid.visit_counts,
                },
            )?;
            summary.final_k = grid.state_cells();
            (episodes, checkpoints, lengths)
        }
    };
    episodes.write(&out.join("episodes.csv"))?;
    let mut eval = Csv::new(&["episode", "steps"]);
    for (i, n) in lengths.iter().enumerate() {
        eval.push(vec![cell(i), cell(n)]);
    }
    eval.write(&out.join("eval.csv"))?;
    let mut curve = Csv::new(&["episode", "mean_steps"]);
    for (e, m) in &checkpoints {
        curve.push(vec![cell(e), cell(m)]);
    }
    curve.write(&out.join("eval_curve.csv"))?;
    summary.eval_mean_steps = Some(mean(&lengths));
    summary.eval_checkpoints = checkpoints;
    Ok(summary)
}

/// Output directory default when `--out` is not given.
pub fn default_out(mode: Mode) -> PathBuf {
    PathBuf::from("runs").join(mode.name())
}

impl DataError {
    fn from_model(e: oda_core::OdaError) -> Self {
        DataError::Spec(e.to_string())
    }
}
