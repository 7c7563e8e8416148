//! Batch driver behind the `markerslam` binary. Every command returns the
//! text it would print so tests can drive it in-process.

pub mod scenarios;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use markerslam_core::eval::{self, ApeStats, EvalError, TableFormat, DEFAULT_MAX_DT};
use markerslam_core::obslog::{LogError, ObservationLog};
use markerslam_core::semantic::{SemanticDb, SemanticError};
use markerslam_core::sim::{NoiseModel, Scenario, ScenarioJson, SimError};
use markerslam_core::slam::config::Sigmas;
use markerslam_core::slam::{self, Header, SlamConfig, SlamError, SlamOutput};
use markerslam_core::trajectory::{format_stamp, Trajectory, TrajectoryError};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const TOOL: &str = concat!("markerslam ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Semantic(#[from] SemanticError),
    #[error(transparent)]
    Slam(#[from] SlamError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl CliError {
    /// The diagnostic on a single line.
    pub fn one_line(&self) -> String {
        self.to_string().split_whitespace().collect::<Vec<_>>().join(" ")
    }
}

#[derive(Debug, Parser)]
#[command(name = "markerslam", version, about = "Marker-based semantic SLAM: simulate, map, evaluate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ground-truth TUM trajectory and observation log for a scenario.
    Simulate(SimulateArgs),
    /// Estimated trajectory, scene graph and optimizer report.
    Slam(SlamArgs),
    /// APE metrics of an estimate against ground truth.
    Eval(EvalArgs),
    /// Scene graph only.
    ExportGraph(SlamArgs),
    /// Summary table over the bundled scenarios.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Bundled scenario name or path to a scenario JSON file.
    #[arg(long)]
    pub scenario: String,
    /// Overrides the noise seed in the scenario.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Multiplies every noise sigma; 0 gives noise-free data.
    #[arg(long, default_value_t = 1.0)]
    pub noise_scale: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SlamArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Semantic database; defaults to the one next to the scenario.
    #[arg(long)]
    pub db: Option<PathBuf>,
    /// Observation log; simulated from the scenario when absent.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// SLAM settings as JSON (keyframe, optimizer, sigmas, ...).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub no_place_factors: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

impl Format {
    fn table(self) -> TableFormat {
        match self {
            Self::Text => TableFormat::Text,
            Self::Csv => TableFormat::Csv,
            Self::Json => TableFormat::Json,
        }
    }

    fn extension(self) -> &'static str {
        match self {
            Self::Text => "txt",
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub est: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub no_align: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_DT)]
    pub max_dt: f64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Seed for the output header; read from the estimate when absent.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for the metrics table and per-frame errors.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Bundled scenarios to include; all of them when empty.
    #[arg(long = "scenario")]
    pub scenarios: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    pub noise_scale: f64,
    #[arg(long)]
    pub no_place_factors: bool,
    #[arg(long)]
    pub no_align: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_DT)]
    pub max_dt: f64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Slam(a) => slam_cmd(a, false),
        Command::Eval(a) => eval_cmd(a),
        Command::ExportGraph(a) => slam_cmd(a, true),
        Command::Report(a) => report(a),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let io = |source| CliError::Io { path: dir.display().to_string(), source };
    fs::create_dir_all(dir).map_err(io)?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

/// Hex SHA-256 of a canonical JSON rendering.
pub fn config_hash(value: &Value) -> String {
    format!("{:x}", Sha256::digest(value.to_string().as_bytes()))
}

fn text_hash(text: &str) -> String {
    format!("{:x}", Sha256::digest(text.as_bytes()))
}

/// `#` comment lines for TUM, CSV and JSONL outputs.
pub fn comment_header(h: &Header) -> String {
    format!("# tool: {}\n# config_hash: {}\n# seed: {}\n", h.tool, h.config_hash, h.seed)
}

/// Seed recorded in a comment header, if any.
pub fn header_seed(text: &str) -> Option<u64> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix("# seed:"))
        .and_then(|s| s.trim().parse().ok())
}

/// A scenario with its database and the noise model in effect.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub raw: ScenarioJson,
    pub scenario: Scenario,
    pub db: Option<SemanticDb>,
    pub noise: NoiseModel,
    pub noise_scale: f64,
}

impl Loaded {
    pub fn load(args: &ScenarioArgs, db_path: Option<&Path>) -> Result<Self, CliError> {
        let (text, db_text) = match scenarios::bundled(&args.scenario) {
            Some((s, d)) => (s.to_string(), Some(d.to_string())),
            None => {
                let path = Path::new(&args.scenario);
                if !path.exists() {
                    return Err(CliError::UnknownScenario(args.scenario.clone()));
                }
                let sibling = path.with_extension("db.json");
                let db = if sibling.exists() { Some(read(&sibling)?) } else { None };
                (read(path)?, db)
            }
        };
        let db_text = match db_path {
            Some(p) => Some(read(p)?),
            None => db_text,
        };
        if !(args.noise_scale >= 0.0 && args.noise_scale.is_finite()) {
            return Err(CliError::Config(format!(
                "noise scale must be finite and non-negative, got {}",
                args.noise_scale
            )));
        }
        let raw: ScenarioJson = serde_json::from_str(&text).map_err(|e| SimError::Scenario(e.to_string()))?;
        let scenario = Scenario::from_json(&raw)?;
        let mut noise = scenario.noise.scaled(args.noise_scale);
        if let Some(seed) = args.seed {
            noise.seed = seed;
        }
        let db = db_text.as_deref().map(SemanticDb::parse).transpose()?;
        Ok(Self { raw, scenario, db, noise, noise_scale: args.noise_scale })
    }

    pub fn simulate(&self) -> Result<(Trajectory, ObservationLog), CliError> {
        Ok(self.scenario.simulate(&self.noise)?)
    }

    /// Settings from `config` (or defaults matched to the noise model),
    /// with the scenario's extrinsic and start pose.
    pub fn slam_config(&self, config: Option<&Path>, place_factors: bool) -> Result<SlamConfig, CliError> {
        let base = match config {
            Some(p) => {
                serde_json::from_str(&read(p)?).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => SlamConfig { sigmas: Sigmas::from_noise(&self.noise), ..SlamConfig::default() },
        };
        let mut cfg = base.with_poses(&self.scenario.extrinsic, &self.scenario.start_pose());
        cfg.place_factors &= place_factors;
        cfg.validate()?;
        Ok(cfg)
    }

    fn simulation_key(&self) -> Value {
        json!({ "scenario": self.raw, "noise_scale": self.noise_scale, "seed": self.noise.seed })
    }

    pub fn simulation_header(&self) -> Header {
        Header { tool: TOOL.into(), config_hash: config_hash(&self.simulation_key()), seed: self.noise.seed }
    }

    /// Header for SLAM outputs; `log` is the input log text when it did not
    /// come from the simulator.
    pub fn slam_header(&self, cfg: &SlamConfig, log: Option<&str>) -> Header {
        let key = json!({
            "simulation": self.simulation_key(),
            "db": self.db.as_ref().map(|d| d.to_json()),
            "slam": cfg,
            "log": log.map(text_hash),
        });
        Header { tool: TOOL.into(), config_hash: config_hash(&key), seed: self.noise.seed }
    }
}

fn simulate(args: &SimulateArgs) -> Result<String, CliError> {
    let loaded = Loaded::load(&args.scenario, None)?;
    let (gt, log) = loaded.simulate()?;
    let header = comment_header(&loaded.simulation_header());
    write(&args.out, "gt.tum", &(header.clone() + &gt.to_tum()))?;
    write(&args.out, "log.jsonl", &(header + &log.to_jsonl()))?;
    Ok(format!("{}: {} poses, {} records -> {}\n", loaded.scenario.name, gt.len(), log.len(), args.out.display()))
}

/// Runs the whole pipeline for `slam` and `export-graph`.
pub fn map(args: &SlamArgs) -> Result<(SlamOutput, Header), CliError> {
    let loaded = Loaded::load(&args.scenario, args.db.as_deref())?;
    let cfg = loaded.slam_config(args.config.as_deref(), !args.no_place_factors)?;
    let (log, log_text) = match &args.log {
        Some(p) => {
            let text = read(p)?;
            (ObservationLog::from_jsonl(&text)?, Some(text))
        }
        None => (loaded.simulate()?.1, None),
    };
    let header = loaded.slam_header(&cfg, log_text.as_deref());
    let output = slam::run(&log, loaded.db.as_ref(), &cfg)?;
    Ok((output, header))
}

fn slam_cmd(args: &SlamArgs, graph_only: bool) -> Result<String, CliError> {
    let (output, header) = map(args)?;
    let sg = output.scene_graph(header.clone());
    write(&args.out, "scene_graph.json", &sg.to_json())?;
    if !graph_only {
        let comments = comment_header(&header);
        write(&args.out, "est.tum", &(comments.clone() + &output.trajectory.to_tum()))?;
        write(&args.out, "odom.tum", &(comments.clone() + &output.initial.to_tum()))?;
        write(&args.out, "paths.csv", &(comments + &paths_csv(&output)))?;
        let report = json!({ "header": header, "report": output.report });
        write(&args.out, "report.json", &pretty(&report))?;
    }
    let c = sg.counts();
    Ok(format!(
        "{} keyframes, {} markers, {} walls, {} doors, {} rooms, {} corridors -> {}\n",
        c.keyframes,
        c.markers,
        c.walls,
        c.doors,
        c.rooms,
        c.corridors,
        args.out.display()
    ))
}

/// Planar paths of the estimate and of dead reckoning, for plotting.
fn paths_csv(output: &SlamOutput) -> String {
    let mut out = String::from("source,t,x,y\n");
    for (source, traj) in [("est", &output.trajectory), ("odom", &output.initial)] {
        for s in traj.samples() {
            let p = s.pose.translation();
            out.push_str(&format!("{source},{},{},{}\n", format_stamp(s.t), p.x, p.y));
        }
    }
    out
}

fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json value serializes");
    s.push('\n');
    s
}

/// A metrics table with its header, in the requested format.
pub fn render_table(
    rows: &[(String, ApeStats)],
    format: Format,
    header: &Header,
    extra: Option<(&str, Value)>,
) -> String {
    let table = eval::format_table(rows, format.table());
    match format {
        Format::Json => {
            let mut obj =
                json!({ "header": header, "rows": serde_json::from_str::<Value>(&table).expect("table is json") });
            if let Some((key, value)) = extra {
                obj[key] = value;
            }
            pretty(&obj)
        }
        Format::Text | Format::Csv => comment_header(header) + &table,
    }
}

fn eval_cmd(args: &EvalArgs) -> Result<String, CliError> {
    let est_text = read(&args.est)?;
    let gt_text = read(&args.gt)?;
    let est = Trajectory::from_tum(&est_text)?;
    let gt = Trajectory::from_tum(&gt_text)?;
    let aligned = !args.no_align;
    let ev = eval::evaluate(&est, &gt, args.max_dt, aligned)?;
    let key = json!({
        "est": text_hash(&est_text),
        "gt": text_hash(&gt_text),
        "max_dt": args.max_dt,
        "aligned": aligned,
    });
    let seed = args.seed.or_else(|| header_seed(&est_text)).unwrap_or(0);
    let header = Header { tool: TOOL.into(), config_hash: config_hash(&key), seed };
    let label = args.est.file_stem().map_or_else(|| "est".to_string(), |s| s.to_string_lossy().into_owned());
    let table = render_table(&[(label, ev.stats)], args.format, &header, None);
    if let Some(dir) = &args.out {
        write(dir, &format!("metrics.{}", args.format.extension()), &table)?;
        let mut csv = comment_header(&header) + "t,error_m\n";
        for (t, e) in &ev.per_frame {
            csv.push_str(&format!("{},{e}\n", format_stamp(*t)));
        }
        write(dir, "ape.csv", &csv)?;
    }
    Ok(table)
}

/// Evaluation of one bundled scenario.
#[derive(Debug, Clone)]
pub struct SequenceResult {
    pub name: String,
    pub slam: ApeStats,
    /// Dead-reckoned keyframe poses, the odometry-only baseline.
    pub odometry: ApeStats,
    pub seed: u64,
}

pub fn evaluate_sequence(name: &str, args: &ReportArgs) -> Result<SequenceResult, CliError> {
    let scenario = ScenarioArgs { scenario: name.to_string(), seed: args.seed, noise_scale: args.noise_scale };
    let loaded = Loaded::load(&scenario, None)?;
    let cfg = loaded.slam_config(None, !args.no_place_factors)?;
    let (gt, log) = loaded.simulate()?;
    let output = slam::run(&log, loaded.db.as_ref(), &cfg)?;
    let aligned = !args.no_align;
    let slam = eval::evaluate(&output.trajectory, &gt, args.max_dt, aligned)?.stats;
    let odometry = eval::evaluate(&output.initial, &gt, args.max_dt, aligned)?.stats;
    Ok(SequenceResult { name: name.to_string(), slam, odometry, seed: loaded.noise.seed })
}

fn report(args: &ReportArgs) -> Result<String, CliError> {
    let mut names: Vec<String> =
        if args.scenarios.is_empty() { scenarios::names().map(String::from).collect() } else { args.scenarios.clone() };
    names.sort();
    names.dedup();
    if let Some(bad) = names.iter().find(|n| scenarios::bundled(n).is_none()) {
        return Err(CliError::UnknownScenario(bad.clone()));
    }
    // Sequences are independent; results are collected in name order.
    let results: Vec<SequenceResult> = std::thread::scope(|scope| {
        let handles: Vec<_> = names.iter().map(|n| scope.spawn(move || evaluate_sequence(n, args))).collect();
        handles.into_iter().map(|h| h.join().expect("sequence worker panicked")).collect::<Result<_, _>>()
    })?;

    let mut rows = Vec::new();
    let mut improvements = serde_json::Map::new();
    let mut lines = String::new();
    for r in &results {
        rows.push((r.name.clone(), r.slam));
        rows.push((format!("{}/odom", r.name), r.odometry));
        let pct = eval::round_half_up(eval::improvement_percent(r.slam.rmse, r.odometry.rmse)?, 2);
        improvements.insert(r.name.clone(), json!(pct));
        lines.push_str(&format!("{}: rmse improvement {pct:.2}%\n", r.name));
    }
    let slam_rows: Vec<ApeStats> = results.iter().map(|r| r.slam).collect();
    let odom_rows: Vec<ApeStats> = results.iter().map(|r| r.odometry).collect();
    if let (Some(s), Some(o)) = (eval::column_means(&slam_rows), eval::column_means(&odom_rows)) {
        rows.push(("mean".into(), s));
        rows.push(("mean/odom".into(), o));
    }

    let seeds: Vec<u64> = results.iter().map(|r| r.seed).collect();
    let key = json!({
        "scenarios": names,
        "seeds": seeds,
        "noise_scale": args.noise_scale,
        "place_factors": !args.no_place_factors,
        "aligned": !args.no_align,
        "max_dt": args.max_dt,
    });
    let header = Header { tool: TOOL.into(), config_hash: config_hash(&key), seed: args.seed.unwrap_or(0) };
    let mut text =
        render_table(&rows, args.format, &header, Some(("improvement_percent", Value::Object(improvements))));
    if args.format == Format::Text {
        text.push_str(&lines);
    }
    if let Some(dir) = &args.out {
        write(dir, &format!("report.{}", args.format.extension()), &text)?;
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_seed_reads_back() {
        let h = Header { tool: TOOL.into(), config_hash: "ab".into(), seed: 42 };
        assert_eq!(header_seed(&(comment_header(&h) + "1.0 0 0 0 0 0 0 1\n")), Some(42));
        assert_eq!(header_seed("1.0 0 0 0 0 0 0 1\n"), None);
    }

    #[test]
    fn hash_depends_on_content() {
        assert_eq!(config_hash(&json!({"a": 1})), config_hash(&json!({"a": 1})));
        assert_ne!(config_hash(&json!({"a": 1})), config_hash(&json!({"a": 2})));
        assert_eq!(config_hash(&json!({})).len(), 64);
    }

    #[test]
    fn errors_fit_on_one_line() {
        let e = CliError::Config("a\nb  c".into());
        assert_eq!(e.one_line(), "config: a b c");
    }

    #[test]
    fn unknown_scenario_is_reported() {
        let args = ScenarioArgs { scenario: "no-such-scenario".into(), seed: None, noise_scale: 1.0 };
        assert!(matches!(Loaded::load(&args, None), Err(CliError::UnknownScenario(_))));
    }

    #[test]
    fn negative_noise_scale_is_rejected() {
        let args = ScenarioArgs { scenario: "room1".into(), seed: None, noise_scale: -1.0 };
        assert!(matches!(Loaded::load(&args, None), Err(CliError::Config(_))));
    }
}
