//! Command-line front end: one subcommand per analysis, CSV and JSON outputs, and a
//! manifest next to every set of outputs.
//!
//! Every subcommand reads an optional JSON config (`--config`), applies its own
//! flags on top and records the fully resolved config in `manifest.json`. Passing
//! that manifest back as `--config` reproduces the run.

use crate::action::{self, ActionOptions, CriticalOptions, SteadyStateOptions, SteadyStateSolution};
use crate::error::{Error, Result};
use crate::fp::{AttractionState, LearningParams, PeakRole, SingleAgent};
use crate::io::{self, num, opt, RunManifest};
use crate::market::{Aggregates, Class, GameModel, GameParams};
use crate::nash;
use crate::sim::{self, SimConfig};
use crate::stats;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

/// Default output directory when `--out-dir` is not given.
pub const OUT_DIR_ENV: &str = "EWA_LAB_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "ewa-lab", version, about = "Two-market double auction with learning traders")]
pub struct Cli {
    /// Directory receiving all output files (created if missing).
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = ".")]
    pub out_dir: PathBuf,
    /// Seed for stochastic commands; overrides the config's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON config for the subcommand, or a manifest from an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Nash equilibria and equal-payoff curves of the mean-field game.
    Nash(NashArgs),
    /// Equilibrium types over the (theta1, pb) plane with the closed-form boundary.
    PhaseDiagram(PhaseArgs),
    /// Steady states of learning selected by minimal actions, for one or more alphas.
    SteadyState(SteadyArgs),
    /// Characteristic alpha values for a list of intensities.
    CriticalAlphas(CriticalArgs),
    /// Agent-based simulation, jump-moment check or escape-time scan.
    Simulate(SimulateArgs),
    /// Minimal action path between two stable fixed points.
    ActionPath(ActionArgs),
    /// Fixed points of the single-agent drift for both classes.
    FixedPoints(FixedPointArgs),
}

#[derive(Debug, Default, Args)]
pub struct GameArgs {
    /// Bias of market 1; market 2 gets `1 - theta1`.
    #[arg(long)]
    pub theta1: Option<f64>,
    /// Buying probability of class 1; class 2 gets `1 - pb`.
    #[arg(long)]
    pub pb: Option<f64>,
    /// Mean bid price.
    #[arg(long)]
    pub mu_b: Option<f64>,
    /// Mean ask price.
    #[arg(long)]
    pub mu_a: Option<f64>,
}

impl GameArgs {
    fn apply(&self, p: &mut GameParams) {
        if let Some(t) = self.theta1 {
            p.theta_1 = t;
            p.theta_2 = 1.0 - t;
        }
        if let Some(pb) = self.pb {
            p.pb_1 = pb;
            p.pb_2 = 1.0 - pb;
        }
        if let Some(m) = self.mu_b {
            p.mu_b = m;
        }
        if let Some(m) = self.mu_a {
            p.mu_a = m;
        }
    }
}

#[derive(Debug, Default, Args)]
pub struct LearningArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
}

impl LearningArgs {
    fn apply(&self, l: &mut LearningParams) {
        if let Some(a) = self.alpha {
            l.alpha = a;
        }
        if let Some(b) = self.beta {
            l.beta = b;
        }
        if let Some(r) = self.r {
            l.r = r;
        }
    }
}

#[derive(Debug, Args)]
pub struct NashArgs {
    #[command(flatten)]
    pub game: GameArgs,
    /// Cells per axis of the equal-payoff scan.
    #[arg(long)]
    pub grid_n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PhaseArgs {
    /// Cells along theta1.
    #[arg(long)]
    pub n_theta: Option<usize>,
    /// Cells along pb.
    #[arg(long)]
    pub n_pb: Option<usize>,
    /// Equal-payoff scan resolution inside each cell.
    #[arg(long)]
    pub grid_n: Option<usize>,
    #[arg(long)]
    pub mu_b: Option<f64>,
    #[arg(long)]
    pub mu_a: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SteadyArgs {
    #[command(flatten)]
    pub game: GameArgs,
    /// Comma-separated discount values.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Grid points of the response curve.
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Time steps of every minimal path.
    #[arg(long)]
    pub n_steps: Option<usize>,
    /// Duration of every minimal path.
    #[arg(long)]
    pub t_span: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CriticalArgs {
    #[command(flatten)]
    pub game: GameArgs,
    /// Comma-separated intensities of choice.
    #[arg(long, value_delimiter = ',')]
    pub beta: Option<Vec<f64>>,
    /// Points of the initial log-alpha scan.
    #[arg(long)]
    pub scan_points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub game: GameArgs,
    #[command(flatten)]
    pub learning: LearningArgs,
    #[arg(long)]
    pub n_agents: Option<usize>,
    #[arg(long)]
    pub rounds: Option<u64>,
    /// Comma-separated rescaled times for attraction histograms.
    #[arg(long, value_delimiter = ',')]
    pub snapshot: Option<Vec<f64>>,
    #[arg(long)]
    pub trace_stride: Option<u64>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Compare one-round jump moments with the drift and diffusion instead of simulating.
    #[arg(long)]
    pub moment_check: bool,
    /// Monte-Carlo samples for the moment check.
    #[arg(long)]
    pub samples: Option<u64>,
    /// Comma-separated population sizes: measure exit times from the mixed state.
    #[arg(long, value_delimiter = ',')]
    pub escape: Option<Vec<usize>>,
    /// Runs per population size in the escape scan.
    #[arg(long)]
    pub escape_seeds: Option<u64>,
    /// Half-width of the band around the mixed-state aggregate in the escape scan.
    #[arg(long)]
    pub band: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ActionArgs {
    #[command(flatten)]
    pub game: GameArgs,
    #[command(flatten)]
    pub learning: LearningArgs,
    /// Class-1 aggregate on the symmetric line (defaults to the Nash value).
    #[arg(long)]
    pub pbar: Option<f64>,
    #[arg(long, value_parser = parse_role)]
    pub from: Option<PeakRole>,
    #[arg(long, value_parser = parse_role)]
    pub to: Option<PeakRole>,
    #[arg(long)]
    pub n_steps: Option<usize>,
    #[arg(long)]
    pub t_span: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FixedPointArgs {
    #[command(flatten)]
    pub game: GameArgs,
    #[command(flatten)]
    pub learning: LearningArgs,
    /// Class-1 aggregate (defaults to the Nash value).
    #[arg(long)]
    pub pbar1: Option<f64>,
    /// Class-2 aggregate (defaults to `1 - pbar1`).
    #[arg(long)]
    pub pbar2: Option<f64>,
}

fn parse_role(s: &str) -> std::result::Result<PeakRole, String> {
    match s {
        "left" => Ok(PeakRole::Left),
        "central" => Ok(PeakRole::Central),
        "right" => Ok(PeakRole::Right),
        _ => Err(format!("unknown peak role '{s}' (left, central, right)")),
    }
}

fn default_params() -> GameParams {
    GameParams::symmetric(0.3, 0.2)
}

const DEFAULT_BETA: f64 = 1.0 / 0.11;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NashConfig {
    pub params: GameParams,
    pub grid_n: usize,
}

impl Default for NashConfig {
    fn default() -> Self {
        NashConfig { params: default_params(), grid_n: nash::DEFAULT_GRID_N }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseConfig {
    pub n_theta: usize,
    pub n_pb: usize,
    pub grid_n: usize,
    /// Price statistics; biases and buying probabilities vary per cell.
    pub mu_b: f64,
    pub mu_a: f64,
    pub sigma_b: f64,
    pub sigma_a: f64,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            n_theta: 64,
            n_pb: 64,
            grid_n: 128,
            mu_b: GameParams::DEFAULT_MU_B,
            mu_a: GameParams::DEFAULT_MU_A,
            sigma_b: 1.0,
            sigma_a: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteadyConfig {
    pub params: GameParams,
    pub beta: f64,
    pub alphas: Vec<f64>,
    pub options: SteadyStateOptions,
}

impl Default for SteadyConfig {
    fn default() -> Self {
        SteadyConfig { params: default_params(), beta: DEFAULT_BETA, alphas: vec![0.067], options: Default::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticalConfig {
    pub params: GameParams,
    pub betas: Vec<f64>,
    pub options: CriticalOptions,
}

impl Default for CriticalConfig {
    fn default() -> Self {
        CriticalConfig { params: default_params(), betas: vec![DEFAULT_BETA], options: Default::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentCheckConfig {
    pub samples: u64,
    /// Frozen class-1 aggregate on the symmetric line; Nash value if absent.
    pub pbar_1: Option<f64>,
    /// Attractions of the probed agent; the default sits off every fixed point so
    /// that drift and noise correlation are both nonzero.
    pub state: AttractionState,
}

impl Default for MomentCheckConfig {
    fn default() -> Self {
        MomentCheckConfig { samples: 1_000_000, pbar_1: None, state: AttractionState::new(0.5, 0.3) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EscapeConfig {
    pub sizes: Vec<usize>,
    pub seeds: u64,
    pub band: f64,
}

impl Default for EscapeConfig {
    fn default() -> Self {
        EscapeConfig { sizes: vec![2000, 6000, 20000], seeds: 3, band: 0.1 }
    }
}

/// A simulation config plus the optional alternative modes of `simulate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub sim: SimConfig,
    pub moment_check: Option<MomentCheckConfig>,
    pub escape: Option<EscapeConfig>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { sim: SimConfig::default(), moment_check: None, escape: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionConfig {
    pub params: GameParams,
    pub learning: LearningParams,
    pub pbar_1: Option<f64>,
    pub from: PeakRole,
    pub to: PeakRole,
    pub options: ActionOptions,
}

impl Default for ActionConfig {
    fn default() -> Self {
        ActionConfig {
            params: default_params(),
            learning: LearningParams { r: 0.01, alpha: 0.07, beta: DEFAULT_BETA },
            pbar_1: None,
            from: PeakRole::Central,
            to: PeakRole::Right,
            options: Default::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointConfig {
    pub params: GameParams,
    pub learning: LearningParams,
    pub pbar_1: Option<f64>,
    pub pbar_2: Option<f64>,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            params: default_params(),
            learning: LearningParams { r: 0.01, alpha: 0.07, beta: DEFAULT_BETA },
            pbar_1: None,
            pbar_2: None,
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code. Failures
/// are reported as one JSON object on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            report("usage", &e.to_string(), 2);
            return 2;
        }
    };
    match execute(&cli) {
        Ok(manifest) => {
            println!("{}", serde_json::to_string(&manifest).unwrap_or_default());
            0
        }
        Err(e) => {
            let code = e.exit_code();
            report(e.kind(), &e.to_string(), code);
            code
        }
    }
}

fn report(kind: &str, message: &str, code: i32) {
    let err = serde_json::json!({ "error": kind, "message": message.trim_end(), "exit_code": code });
    eprintln!("{err}");
}

/// Runs a parsed command line and returns the manifest it wrote.
pub fn execute(cli: &Cli) -> Result<RunManifest> {
    if cli.jobs == 0 {
        return Err(Error::InvalidConfig("--jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    std::fs::create_dir_all(&cli.out_dir)?;
    pool.install(|| match &cli.command {
        Command::Nash(a) => cmd_nash(cli, a),
        Command::PhaseDiagram(a) => cmd_phase_diagram(cli, a),
        Command::SteadyState(a) => cmd_steady_state(cli, a),
        Command::CriticalAlphas(a) => cmd_critical_alphas(cli, a),
        Command::Simulate(a) => cmd_simulate(cli, a),
        Command::ActionPath(a) => cmd_action_path(cli, a),
        Command::FixedPoints(a) => cmd_fixed_points(cli, a),
    })
}

/// Loads the base config from `--config`, which may be a plain config or a manifest
/// of the same subcommand. Returns the manifest's seed as well, if any.
fn load_config<C: DeserializeOwned + Default>(cli: &Cli, name: &str) -> Result<(C, Option<u64>)> {
    let Some(path) = &cli.config else {
        return Ok((C::default(), None));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if value.get("subcommand").is_some() {
        let m: RunManifest = serde_json::from_value(value)?;
        if m.subcommand != name {
            return Err(Error::InvalidConfig(format!("manifest is for '{}', not '{name}'", m.subcommand)));
        }
        return Ok((serde_json::from_value(m.config)?, Some(m.seed)));
    }
    Ok((serde_json::from_value(value)?, None))
}

/// Collects output files and stamps each CSV with the run's metadata.
struct Outputs<'a> {
    dir: &'a Path,
    manifest: RunManifest,
    config_json: String,
}

impl<'a> Outputs<'a> {
    fn new<C: Serialize>(cli: &'a Cli, name: &str, config: &C, seed: u64) -> Result<Self> {
        Ok(Outputs {
            dir: &cli.out_dir,
            manifest: RunManifest::new(name, config, seed)?,
            config_json: serde_json::to_string(config)?,
        })
    }

    fn csv<I: IntoIterator<Item = Vec<String>>>(&mut self, file: &str, header: &[&str], rows: I) -> Result<()> {
        let meta = [
            ("subcommand", self.manifest.subcommand.clone()),
            ("config", self.config_json.clone()),
            ("seed", self.manifest.seed.to_string()),
            ("version", io::VERSION.to_string()),
        ];
        io::write_csv(&self.dir.join(file), &meta, header, rows)?;
        self.manifest.outputs.push(file.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<()> {
        io::write_json(&self.dir.join(file), value)?;
        self.manifest.outputs.push(file.to_string());
        Ok(())
    }

    fn finish(self) -> Result<RunManifest> {
        self.manifest.write(self.dir)?;
        Ok(self.manifest)
    }
}

fn nash_pbar(model: &GameModel) -> Result<f64> {
    nash::symmetric_equilibrium(model, 256)
        .map(|p| p.aggregates.pbar_1)
        .ok_or_else(|| Error::InvalidConfig("no symmetric interior equilibrium; give the aggregate explicitly".into()))
}

fn cmd_nash(cli: &Cli, a: &NashArgs) -> Result<RunManifest> {
    let (mut cfg, seed) = load_config::<NashConfig>(cli, "nash")?;
    a.game.apply(&mut cfg.params);
    if let Some(n) = a.grid_n {
        cfg.grid_n = n;
    }
    if cfg.grid_n < 16 {
        return Err(Error::InvalidConfig("grid_n must be at least 16".into()));
    }
    let model = GameModel::new(cfg.params)?;
    let mut out = Outputs::new(cli, "nash", &cfg, cli.seed.or(seed).unwrap_or(0))?;

    let eq = nash::find_equilibria(&model, cfg.grid_n);
    out.csv(
        "equilibria.csv",
        &["kind", "pbar1", "pbar2", "payoff_gap1", "payoff_gap2"],
        eq.iter().map(|p| {
            vec![
                p.kind.name().to_string(),
                num(p.aggregates.pbar_1),
                num(p.aggregates.pbar_2),
                num(p.payoff_gap_1),
                num(p.payoff_gap_2),
            ]
        }),
    )?;
    let mut rows = Vec::new();
    for c in Class::BOTH {
        let curve = nash::equal_payoff_curve(&model, c, cfg.grid_n);
        for (k, piece) in curve.pieces.iter().enumerate() {
            rows.extend(piece.iter().map(|p| vec![c.to_string(), k.to_string(), num(p[0]), num(p[1])]));
        }
    }
    out.csv("curves.csv", &["class", "piece", "pbar1", "pbar2"], rows)?;
    out.finish()
}

fn cmd_phase_diagram(cli: &Cli, a: &PhaseArgs) -> Result<RunManifest> {
    let (mut cfg, seed) = load_config::<PhaseConfig>(cli, "phase-diagram")?;
    if let Some(n) = a.n_theta {
        cfg.n_theta = n;
    }
    if let Some(n) = a.n_pb {
        cfg.n_pb = n;
    }
    if let Some(n) = a.grid_n {
        cfg.grid_n = n;
    }
    if let Some(m) = a.mu_b {
        cfg.mu_b = m;
    }
    if let Some(m) = a.mu_a {
        cfg.mu_a = m;
    }
    if cfg.n_theta == 0 || cfg.n_pb == 0 || cfg.grid_n < 16 {
        return Err(Error::InvalidConfig("need n_theta, n_pb >= 1 and grid_n >= 16".into()));
    }
    let base = GameParams {
        mu_b: cfg.mu_b,
        mu_a: cfg.mu_a,
        sigma_b: cfg.sigma_b,
        sigma_a: cfg.sigma_a,
        ..default_params()
    };
    base.validate()?;
    let mut out = Outputs::new(cli, "phase-diagram", &cfg, cli.seed.or(seed).unwrap_or(0))?;
    let diagram = nash::phase_diagram(&base, cfg.n_theta, cfg.n_pb, cfg.grid_n)?;
    let mut rows = Vec::with_capacity(diagram.cells.len());
    for i in 0..diagram.n_theta {
        for j in 0..diagram.n_pb {
            let c = diagram.cell(i, j);
            rows.push(vec![
                num(c.theta_1),
                num(c.pb),
                c.region.has_pot_heterogeneous.to_string(),
                c.region.has_pure_split.to_string(),
                c.region.partially_het_count.to_string(),
                c.region.exclusive().to_string(),
                c.analytic_split.to_string(),
                (c.analytic_split == c.region.has_pure_split).to_string(),
                diagram.near_boundary(i, j).to_string(),
            ]);
        }
    }
    out.csv(
        "regions.csv",
        &[
            "theta1",
            "pb",
            "has_pot_heterogeneous",
            "has_pure_split",
            "partially_het_count",
            "exclusive",
            "analytic_split",
            "agrees",
            "near_boundary",
        ],
        rows,
    )?;
    let mut rows = Vec::new();
    for i in 0..diagram.n_theta {
        let theta = diagram.cell(i, 0).theta_1;
        for root in nash::phase_boundary_roots(theta, &base)? {
            rows.push(vec![
                num(theta),
                num(root.pb),
                format!("{:?}", root.corner).to_lowercase(),
                format!("{:?}", root.saturation).to_lowercase(),
            ]);
        }
    }
    out.csv("boundary.csv", &["theta1", "pb", "corner", "saturation"], rows)?;
    out.finish()
}

#[derive(Serialize)]
struct AlphaSolution<'a> {
    alpha: f64,
    beta: f64,
    nash_pbar_1: f64,
    solution: &'a SteadyStateSolution,
}

fn cmd_steady_state(cli: &Cli, a: &SteadyArgs) -> Result<RunManifest> {
    let (mut cfg, seed) = load_config::<SteadyConfig>(cli, "steady-state")?;
    a.game.apply(&mut cfg.params);
    if let Some(al) = &a.alpha {
        cfg.alphas = al.clone();
    }
    if let Some(b) = a.beta {
        cfg.beta = b;
    }
    if let Some(n) = a.grid_points {
        cfg.options.grid_points = n;
    }
    if let Some(n) = a.n_steps {
        cfg.options.action.n_steps = n;
    }
    if let Some(t) = a.t_span {
        cfg.options.action.t_span = t;
    }
    if cfg.alphas.is_empty() {
        return Err(Error::InvalidConfig("need at least one alpha".into()));
    }
    for &alpha in &cfg.alphas {
        LearningParams::new(0.0, alpha, cfg.beta)?;
    }
    let model = GameModel::new(cfg.params)?;
    let nash_x = nash_pbar(&model)?;
    let mut out = Outputs::new(cli, "steady-state", &cfg, cli.seed.or(seed).unwrap_or(0))?;

    let results: Result<Vec<_>> = cfg
        .alphas
        .par_iter()
        .map(|&alpha| {
            let learning = LearningParams { r: 0.0, alpha, beta: cfg.beta };
            action::solve_steady_state_with_curve(&model, learning, &cfg.options)
        })
        .collect();
    let results = results?;

    let mut summary = Vec::new();
    let mut peaks = Vec::new();
    let mut curve_rows = Vec::new();
    for (&alpha, (s, curve)) in cfg.alphas.iter().zip(&results) {
        summary.push(vec![
            num(alpha),
            s.kind.name().to_string(),
            num(s.aggregates.pbar_1),
            num(s.aggregates.pbar_2),
            num(nash_x),
            num(s.aggregates.pbar_1 - nash_x),
            num(s.action_gap),
            s.central_present.to_string(),
            s.regularized.to_string(),
        ]);
        for c in Class::BOTH {
            for p in &s.peaks[c.index()] {
                peaks.push(vec![
                    num(alpha),
                    c.to_string(),
                    p.role.name().to_string(),
                    num(p.delta),
                    num(p.state.a_1),
                    num(p.state.a_2),
                    num(p.weight),
                ]);
            }
        }
        for p in &curve.points {
            curve_rows.push(vec![
                num(alpha),
                num(p.pbar_1),
                num(p.tilde_p),
                p.dominant.name().to_string(),
                p.n_stable.to_string(),
            ]);
        }
    }
    out.csv(
        "summary.csv",
        &["alpha", "kind", "pbar1", "pbar2", "nash_pbar1", "deviation", "action_gap", "central_present", "regularized"],
        summary,
    )?;
    out.csv("peaks.csv", &["alpha", "class", "role", "delta", "a1", "a2", "weight"], peaks)?;
    out.csv("tilde_p.csv", &["alpha", "pbar1", "tilde_p", "dominant", "n_stable"], curve_rows)?;
    let docs: Vec<AlphaSolution> = cfg
        .alphas
        .iter()
        .zip(&results)
        .map(|(&alpha, (s, _))| AlphaSolution { alpha, beta: cfg.beta, nash_pbar_1: nash_x, solution: s })
        .collect();
    out.json("solutions.json", &docs)?;
    out.finish()
}

fn cmd_critical_alphas(cli: &Cli, a: &CriticalArgs) -> Result<RunManifest> {
    let (mut cfg, seed) = load_config::<CriticalConfig>(cli, "critical-alphas")?;
    a.game.apply(&mut cfg.params);
    if let Some(b) = &a.beta {
        cfg.betas = b.clone();
    }
    if let Some(n) = a.scan_points {
        cfg.options.scan_points = n;
    }
    if cfg.betas.is_empty() || cfg.betas.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
        return Err(Error::InvalidConfig("betas must be positive and finite".into()));
    }
    let model = GameModel::new(cfg.params)?;
    let mut out = Outputs::new(cli, "critical-alphas", &cfg, cli.seed.or(seed).unwrap_or(0))?;
    let results: Vec<Result<action::CriticalAlphas>> =
        cfg.betas.par_iter().map(|&beta| action::critical_alphas(&model, beta, 0.0, &cfg.options)).collect();
    let mut rows = Vec::new();
    for (&beta, r) in cfg.betas.iter().zip(results) {
        match r {
            Ok(c) => rows.push(vec![
                num(beta),
                num(1.0 / beta),
                num(c.alpha_c),
                num(c.alpha_c_prime),
                opt(c.alpha_c_dprime),
                "ok".to_string(),
            ]),
            // No heterogeneous window is a result, not a failure.
            Err(e @ Error::EmptyWedge { .. }) => {
                rows.push(vec![num(beta), num(1.0 / beta), String::new(), String::new(), String::new(), e.kind().to_string()])
            }
            Err(e) => return Err(e),
        }
    }
    out.csv("thresholds.csv", &["beta", "inv_beta", "alpha_c", "alpha_c_prime", "alpha_c_dprime", "status"], rows)?;
    out.finish()
}

fn load_simulate_config(cli: &Cli) -> Result<(SimulateConfig, Option<u64>)> {
    // A bare simulation config is accepted as well as the full form.
    let Some(path) = &cli.config else {
        return Ok((SimulateConfig::default(), None));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if value.get("subcommand").is_none() && value.get("sim").is_none() {
        let sim: SimConfig = serde_json::from_value(value)?;
        return Ok((SimulateConfig { sim, ..Default::default() }, None));
    }
    load_config(cli, "simulate")
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> Result<RunManifest> {
    let (mut cfg, manifest_seed) = load_simulate_config(cli)?;
    let sim = &mut cfg.sim;
    a.game.apply(&mut sim.params);
    a.learning.apply(&mut sim.learning);
    if let Some(s) = cli.seed.or(manifest_seed) {
        sim.seed = s;
    }
    if let Some(n) = a.n_agents {
        sim.n_agents = n;
    }
    if let Some(n) = a.rounds {
        sim.n_rounds = n;
    }
    if let Some(s) = &a.snapshot {
        sim.snapshot_times = s.clone();
    }
    if let Some(s) = a.trace_stride {
        sim.trace_stride = s;
    }
    if let Some(b) = a.bins {
        sim.bins = b;
    }
    if a.moment_check || a.samples.is_some() {
        let m = cfg.moment_check.get_or_insert_with(Default::default);
        if let Some(n) = a.samples {
            m.samples = n;
        }
    }
    if a.escape.is_some() || a.escape_seeds.is_some() || a.band.is_some() {
        let e = cfg.escape.get_or_insert_with(Default::default);
        if let Some(s) = &a.escape {
            e.sizes = s.clone();
        }
        if let Some(s) = a.escape_seeds {
            e.seeds = s;
        }
        if let Some(b) = a.band {
            e.band = b;
        }
    }
    if cfg.moment_check.is_some() && cfg.escape.is_some() {
        return Err(Error::InvalidConfig("moment check and escape scan are separate runs".into()));
    }
    cfg.sim.validate()?;
    let mut out = Outputs::new(cli, "simulate", &cfg, cfg.sim.seed)?;
    let model = GameModel::new(cfg.sim.params)?;

    if let Some(m) = &cfg.moment_check {
        moment_check(&mut out, &model, &cfg.sim, m)?;
    } else if let Some(e) = &cfg.escape {
        escape_scan(&mut out, &model, &cfg.sim, e)?;
    } else {
        simulate_run(&mut out, &cfg.sim)?;
    }
    out.finish()
}

fn simulate_run(out: &mut Outputs, sim_cfg: &SimConfig) -> Result<()> {
    let trace = sim::simulate(sim_cfg)?;
    out.csv(
        "trace.csv",
        &["t", "pbar1", "pbar2", "pi1", "pi2", "matched1", "matched2", "round", "expected_pbar1", "expected_pbar2"],
        trace.rows.iter().map(|r| {
            vec![
                num(r.t),
                num(r.pbar_1),
                num(r.pbar_2),
                opt(r.pi_1),
                opt(r.pi_2),
                r.matched_1.to_string(),
                r.matched_2.to_string(),
                r.round.to_string(),
                num(r.expected_pbar_1),
                num(r.expected_pbar_2),
            ]
        }),
    )?;
    let mut hist = Vec::new();
    let mut fits = Vec::new();
    for s in &trace.snapshots {
        for (k, &count) in s.histogram.counts.iter().enumerate() {
            let (lo, hi) = s.histogram.edges(k);
            hist.push(vec![num(lo), num(hi), count.to_string(), s.class.to_string(), num(s.t)]);
        }
        let fit = stats::fit_two_gaussians(&s.deltas)?;
        fits.push(vec![
            num(s.t),
            s.class.to_string(),
            s.deltas.len().to_string(),
            num(fit.ashman_d()),
            fit.mode_count().to_string(),
            fit.is_bimodal().to_string(),
            num(fit.weights[0]),
            num(fit.means[0]),
            num(fit.sds[0]),
            num(fit.weights[1]),
            num(fit.means[1]),
            num(fit.sds[1]),
        ]);
    }
    out.csv("histograms.csv", &["bin_left", "bin_right", "count", "class", "t"], hist)?;
    out.csv(
        "modality.csv",
        &["t", "class", "n", "ashman_d", "modes", "bimodal", "weight_lo", "mean_lo", "sd_lo", "weight_hi", "mean_hi", "sd_hi"],
        fits,
    )
}

fn moment_check(out: &mut Outputs, model: &GameModel, sim_cfg: &SimConfig, m: &MomentCheckConfig) -> Result<()> {
    let x = match m.pbar_1 {
        Some(x) => x,
        None => nash_pbar(model)?,
    };
    let aggr = Aggregates::new(x, 1.0 - x)?;
    let state = m.state;
    let est = sim::sample_jump_moments(model, Class::One, aggr, sim_cfg.learning, state, m.samples, sim_cfg.seed)?;
    let agent = SingleAgent::new(model, Class::One, aggr, sim_cfg.learning);
    let mu = agent.drift(state.to_array());
    let d = agent.diffusion(state.to_array());
    let row = |name: &str, sim: f64, se: f64, pred: f64| {
        vec![name.to_string(), num(sim), num(se), num(pred), num(if se > 0.0 { (sim - pred) / se } else { 0.0 })]
    };
    let rows = vec![
        row("drift_1", est.drift[0], est.drift_se[0], mu[0]),
        row("drift_2", est.drift[1], est.drift_se[1], mu[1]),
        row("diffusion_11", est.second_moment[0][0], est.second_moment_se[0][0], d[0][0]),
        row("diffusion_12", est.second_moment[0][1], est.second_moment_se[0][1], d[0][1]),
        row("diffusion_22", est.second_moment[1][1], est.second_moment_se[1][1], d[1][1]),
    ];
    out.csv("moments.csv", &["quantity", "simulated", "std_error", "predicted", "z"], rows)
}

fn escape_scan(out: &mut Outputs, model: &GameModel, sim_cfg: &SimConfig, e: &EscapeConfig) -> Result<()> {
    if e.sizes.is_empty() || e.seeds == 0 {
        return Err(Error::InvalidConfig("escape scan needs sizes and at least one seed".into()));
    }
    let mixed = sim::mixed_state_start(model, sim_cfg.learning)?;
    let start = SimConfig { initial: mixed.initial, ..sim_cfg.clone() };
    let times = sim::escape_time_scan(&start, &e.sizes, e.seeds, mixed.pbar_1, e.band)?;
    out.csv(
        "escape.csv",
        &["n_agents", "seed", "center", "band", "t_exit", "censored"],
        times.iter().map(|t| {
            vec![t.n_agents.to_string(), t.seed.to_string(), num(t.center), num(t.band), num(t.t_exit), t.censored.to_string()]
        }),
    )?;
    out.csv(
        "escape_median.csv",
        &["n_agents", "median_t_exit", "censored"],
        sim::median_exit_times(&times).into_iter().map(|(n, m, c)| vec![n.to_string(), num(m), c.to_string()]),
    )
}

fn cmd_action_path(cli: &Cli, a: &ActionArgs) -> Result<RunManifest> {
    let (mut cfg, seed) = load_config::<ActionConfig>(cli, "action-path")?;
    a.game.apply(&mut cfg.params);
    a.learning.apply(&mut cfg.learning);
    if let Some(x) = a.pbar {
        cfg.pbar_1 = Some(x);
    }
    if let Some(r) = a.from {
        cfg.from = r;
    }
    if let Some(r) = a.to {
        cfg.to = r;
    }
    if let Some(n) = a.n_steps {
        cfg.options.n_steps = n;
    }
    if let Some(t) = a.t_span {
        cfg.options.t_span = t;
    }
    cfg.learning.validate()?;
    cfg.options.validate()?;
    let model = GameModel::new(cfg.params)?;
    let x = match cfg.pbar_1 {
        Some(x) => x,
        None => nash_pbar(&model)?,
    };
    let aggr = Aggregates::new(x, 1.0 - x)?;
    let agent = SingleAgent::new(&model, Class::One, aggr, cfg.learning);
    let set = agent.fixed_points()?;
    let pick = |role: PeakRole| {
        set.stable_with_role(role)
            .copied()
            .ok_or_else(|| Error::MissingPeak(format!("no stable {} fixed point at pbar_1 = {x}", role.name())))
    };
    let (from, to) = (pick(cfg.from)?, pick(cfg.to)?);
    let transition = action::minimize_action(&agent, &set, &from, &to, &cfg.options)?;
    let mut out = Outputs::new(cli, "action-path", &cfg, cli.seed.or(seed).unwrap_or(0))?;
    out.csv(
        "path.csv",
        &["step", "t", "a1", "a2", "delta"],
        transition.path.times.iter().zip(&transition.path.states).enumerate().map(|(k, (t, s))| {
            vec![k.to_string(), num(*t), num(s.a_1), num(s.a_2), num(s.delta())]
        }),
    )?;
    out.json("transition.json", &transition)?;
    out.finish()
}

fn cmd_fixed_points(cli: &Cli, a: &FixedPointArgs) -> Result<RunManifest> {
    let (mut cfg, seed) = load_config::<FixedPointConfig>(cli, "fixed-points")?;
    a.game.apply(&mut cfg.params);
    a.learning.apply(&mut cfg.learning);
    if let Some(x) = a.pbar1 {
        cfg.pbar_1 = Some(x);
    }
    if let Some(x) = a.pbar2 {
        cfg.pbar_2 = Some(x);
    }
    cfg.learning.validate()?;
    let model = GameModel::new(cfg.params)?;
    let x = match cfg.pbar_1 {
        Some(x) => x,
        None => nash_pbar(&model)?,
    };
    let aggr = Aggregates::new(x, cfg.pbar_2.unwrap_or(1.0 - x))?;
    let mut out = Outputs::new(cli, "fixed-points", &cfg, cli.seed.or(seed).unwrap_or(0))?;
    let mut rows = Vec::new();
    for c in Class::BOTH {
        let set = SingleAgent::new(&model, c, aggr, cfg.learning).fixed_points()?;
        for p in &set.points {
            let cov = p.peak_covariance.map(|m| (Some(m[0][0]), Some(m[0][1]), Some(m[1][1]))).unwrap_or_default();
            rows.push(vec![
                c.to_string(),
                p.role.name().to_string(),
                if p.is_stable() { "stable" } else { "unstable" }.to_string(),
                num(p.delta),
                num(p.state.a_1),
                num(p.state.a_2),
                num(p.choice_prob(cfg.learning.beta)),
                opt(cov.0),
                opt(cov.1),
                opt(cov.2),
            ]);
        }
    }
    out.csv(
        "fixed_points.csv",
        &["class", "role", "stability", "delta", "a1", "a2", "choice_prob", "cov_11", "cov_12", "cov_22"],
        rows,
    )?;
    out.finish()
}
