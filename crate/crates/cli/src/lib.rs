//! Reproduction harness for the cavity-learning engine: error tables,
//! decay curves, majority bounds, verification suites and Monte Carlo runs,
//! each written as CSV with a JSON run manifest beside it.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use cavity_learning::bounds::{self, BoundVariant};
use cavity_learning::cavity::{CavityEngine, EngineConfig, Topology, DEFAULT_TABLE_BUDGET, UNRELIABLE_BELOW};
use cavity_learning::sim::{self, MajorityPolicy, RunResult, SimConfig, TablePolicy};
use cavity_learning::trees::{ball, induced_subgraph, GraphFile};
use cavity_learning::verify::{self, Report};
use cavity_learning::{Decider, ModelConfig, SignalModel, TreeGraph, UpdateRule};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Depth-5 tree with every internal node of degree 5, node 0 at the center.
pub const BUNDLED_TREE: &str = include_str!("../data/regular5_depth5.json");

#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "cavity", version, about = "Exact error probabilities of Bayesian and majority voting on trees")]
pub struct Cli {
    /// Worker threads; defaults to one per core
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output file; stdout when absent. A manifest is written to
    /// `<out>.manifest.json`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Table entries one engine round may allocate
    #[arg(long, global = true, default_value_t = DEFAULT_TABLE_BUDGET as u64)]
    pub budget: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Error probability per round on the regular tree
    Table(TableArgs),
    /// Error decay for several degrees with log(-log p) and its slope
    Curve(CurveArgs),
    /// Majority-dynamics bound recursions
    Bounds(BoundsArgs),
    /// Oracle equivalence and table invariant suites
    Verify(VerifyArgs),
    /// Monte Carlo replay on a finite graph
    Simulate(SimulateArgs),
    /// Bayesian versus majority error per round
    Conjecture(ConjectureArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Table(_) => "table",
            Command::Curve(_) => "curve",
            Command::Bounds(_) => "bounds",
            Command::Verify(_) => "verify",
            Command::Simulate(_) => "simulate",
            Command::Conjecture(_) => "conjecture",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Bayesian,
    Majority,
}

impl Rule {
    pub fn update_rule(self) -> UpdateRule<f64> {
        match self {
            Rule::Bayesian => UpdateRule::Bayesian,
            Rule::Majority => UpdateRule::Majority,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Rule::Bayesian => "bayesian",
            Rule::Majority => "majority",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Binary symmetric signal noise
    #[arg(long, default_value_t = 0.15)]
    pub noise: f64,

    /// JSON model description; overrides --noise
    #[arg(long)]
    pub model: Option<PathBuf>,

    /// Report the error conditioned on this state instead of averaged over
    /// the prior
    #[arg(long)]
    pub state: Option<usize>,
}

impl ModelArgs {
    pub fn config(&self) -> Result<ModelConfig> {
        match &self.model {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Ok(ModelConfig::from_json(&text)?)
            }
            None => Ok(ModelConfig::binary_symmetric(self.noise)),
        }
    }

    fn noise_label(&self, config: &ModelConfig) -> String {
        match (&config.likelihood, config.noise) {
            (None, Some(noise)) => format!("{noise}"),
            _ => "custom".into(),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TableArgs {
    #[arg(long, value_enum, default_value_t = Rule::Bayesian)]
    pub rule: Rule,

    /// Degree of the regular tree
    #[arg(long)]
    pub d: usize,

    /// Last round
    #[arg(long)]
    pub rounds: usize,

    /// Per-round edge activation probability
    #[arg(long)]
    pub activation: Option<f64>,

    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CurveArgs {
    #[arg(long, value_enum, default_value_t = Rule::Bayesian)]
    pub rule: Rule,

    /// Degrees, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    pub d: Vec<usize>,

    /// Last round, either one value or one per degree
    #[arg(long, value_delimiter = ',', required = true)]
    pub rounds: Vec<usize>,

    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundsArgs {
    /// directed, undirected or chernoff-envelope
    #[arg(long, default_value = "undirected")]
    pub variant: String,

    #[arg(long)]
    pub d: usize,

    /// Round-0 error
    #[arg(long, alias = "noise")]
    pub delta0: f64,

    #[arg(long)]
    pub rounds: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    /// Largest oracle instance
    #[arg(long, default_value_t = 8)]
    pub max_nodes: usize,

    /// Last round compared against the oracle
    #[arg(long, default_value_t = 3)]
    pub max_t: usize,

    /// Last round of the invariant suite
    #[arg(long, default_value_t = 4)]
    pub invariant_t: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = Rule::Bayesian)]
    pub rule: Rule,

    /// JSON graph description; `bundled` selects the depth-5 degree-5 tree
    #[arg(long, conflicts_with_all = ["d", "depth"])]
    pub graph: Option<String>,

    /// Generate a regular tree of this degree
    #[arg(long, requires = "depth")]
    pub d: Option<usize>,

    #[arg(long, requires = "d")]
    pub depth: Option<usize>,

    #[arg(long)]
    pub rounds: usize,

    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Only simulate what this node's actions depend on
    #[arg(long)]
    pub focus: Option<usize>,

    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConjectureArgs {
    /// Degrees, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    pub d: Vec<usize>,

    /// Last round, either one value or one per degree
    #[arg(long, value_delimiter = ',', required = true)]
    pub rounds: Vec<usize>,

    #[command(flatten)]
    pub model: ModelArgs,
}

/// The run ended without an error but a check did not pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    VerificationFailed,
}

/// Error probability too small to trust at double precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unreliable {
    pub series: String,
    pub round: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Full command line; rerunning it reproduces the outputs.
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub version: String,
    pub elapsed_seconds: f64,
    pub status: Status,
    pub unreliable: Vec<Unreliable>,
    pub summary: Vec<String>,
    pub outputs: Vec<OutputDigest>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Result of one command before anything is written.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub status: Status,
    /// Main output, CSV except for `verify`.
    pub primary: String,
    /// Further outputs keyed by file extension.
    pub extra: Vec<(&'static str, String)>,
    pub unreliable: Vec<Unreliable>,
    /// Human-readable lines for stderr and the manifest.
    pub summary: Vec<String>,
}

impl Outcome {
    fn ok(primary: String) -> Self {
        Self {
            status: Status::Ok,
            primary,
            extra: Vec::new(),
            unreliable: Vec::new(),
            summary: Vec::new(),
        }
    }
}

/// Full-precision scientific notation (17 significant digits).
pub fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

fn engine_config(budget: u64, activation: Option<f64>) -> EngineConfig {
    EngineConfig {
        activation,
        budget: budget as u128,
    }
}

/// Error probability of the root of the `d`-regular tree for rounds
/// `0..=rounds`, prior-averaged or conditioned on `state`.
pub fn error_series(
    rule: Rule,
    d: usize,
    config: &ModelConfig,
    rounds: usize,
    state: Option<usize>,
    engine: EngineConfig,
) -> Result<Vec<f64>> {
    let (model, decider): (SignalModel, Decider<f64>) = config.build()?;
    if let Some(s) = state {
        if s >= model.num_states() {
            bail!(cavity_learning::Error::InvalidModel(format!(
                "state {s} outside {} states",
                model.num_states()
            )));
        }
    }
    let topology = Topology::regular(d, model.num_states());
    let mut e = CavityEngine::new(topology, model, decider, rule.update_rule(), engine)?;
    let start = Instant::now();
    e.advance_to(rounds)?;
    log::info!("{} d={d}: tables through round {rounds} in {:.2?}", rule.name(), start.elapsed());
    (0..=rounds)
        .map(|t| match state {
            Some(s) => Ok(e.error_by_state(0, t)?[s]),
            None => Ok(e.error_probability(0, t)?),
        })
        .collect()
}

fn flag_unreliable(series: &str, values: &[f64], out: &mut Vec<Unreliable>) {
    for (round, &value) in values.iter().enumerate() {
        if value < UNRELIABLE_BELOW {
            log::warn!("{series} round {round}: {value:.3e} is below {UNRELIABLE_BELOW:e}");
            out.push(Unreliable {
                series: series.into(),
                round,
                value,
            });
        }
    }
}

/// One horizon per degree from a list holding one value or one per degree.
fn per_degree(ds: &[usize], rounds: &[usize]) -> Result<Vec<usize>> {
    match rounds {
        [r] => Ok(vec![*r; ds.len()]),
        _ if rounds.len() == ds.len() => Ok(rounds.to_vec()),
        _ => bail!(cavity_learning::Error::LengthMismatch(rounds.len(), ds.len())),
    }
}

pub fn cmd_table(args: &TableArgs, budget: u64) -> Result<Outcome> {
    let config = args.model.config()?;
    let values = error_series(
        args.rule,
        args.d,
        &config,
        args.rounds,
        args.model.state,
        engine_config(budget, args.activation),
    )?;
    let noise = args.model.noise_label(&config);
    let mut csv = String::from("rule,d,noise,round,error_prob\n");
    for (t, &p) in values.iter().enumerate() {
        csv.push_str(&format!("{},{},{noise},{t},{}\n", args.rule.name(), args.d, sci(p)));
    }
    let mut outcome = Outcome::ok(csv);
    flag_unreliable(&format!("{} d={}", args.rule.name(), args.d), &values, &mut outcome.unreliable);
    Ok(outcome)
}

pub fn cmd_curve(args: &CurveArgs, budget: u64) -> Result<Outcome> {
    let config = args.model.config()?;
    let horizons = per_degree(&args.d, &args.rounds)?;
    let mut csv = String::from("d,t,error_prob,log_neg_log,doubling_slope\n");
    let mut unreliable = Vec::new();
    let mut summary = Vec::new();
    for (&d, &rounds) in args.d.iter().zip(&horizons) {
        let values = error_series(args.rule, d, &config, rounds, args.model.state, engine_config(budget, None))?;
        let slopes = bounds::doubling_slope(&values)?;
        for (t, &p) in values.iter().enumerate() {
            let slope = if t == 0 { String::new() } else { sci(slopes.slopes[t - 1]) };
            csv.push_str(&format!("{d},{t},{},{},{slope}\n", sci(p), sci(bounds::log_neg_log(p)?)));
        }
        summary.push(format!(
            "d={d}: doubly-exponential-consistent={}",
            slopes.doubly_exponential_consistent
        ));
        flag_unreliable(&format!("{} d={d}", args.rule.name()), &values, &mut unreliable);
    }
    Ok(Outcome {
        unreliable,
        summary,
        ..Outcome::ok(csv)
    })
}

pub fn cmd_bounds(args: &BoundsArgs) -> Result<Outcome> {
    let variant = BoundVariant::parse(&args.variant)?;
    let seq = bounds::bound_sequence(variant, args.d, args.delta0, args.rounds)?;
    let mut csv = String::from("variant,d,delta0,t,value\n");
    for (t, &v) in seq.values.iter().enumerate() {
        csv.push_str(&format!("{variant},{},{},{t},{}\n", args.d, args.delta0, sci(v)));
    }
    Ok(Outcome::ok(csv))
}

pub fn verify_report(args: &VerifyArgs) -> Result<Report> {
    let mut report = verify::oracle_suite(args.max_nodes, args.max_t)?;
    report.extend(verify::invariant_suite(args.invariant_t)?.checks);
    Ok(report)
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<Outcome> {
    let report = verify_report(args)?;
    let mut text = String::new();
    for check in &report.checks {
        text.push_str(&format!("{check}\n"));
    }
    let failed = report.failures().count();
    let mut outcome = Outcome::ok(text);
    outcome
        .summary
        .push(format!("{} checks, {failed} failed", report.checks.len()));
    if failed > 0 {
        outcome.status = Status::VerificationFailed;
    }
    Ok(outcome)
}

/// Graph named by `--graph` (a JSON file or `bundled`) or generated from
/// `--d` and `--depth`.
pub fn load_graph(args: &SimulateArgs) -> Result<TreeGraph> {
    let file = match (&args.graph, args.d, args.depth) {
        (Some(name), _, _) if name == "bundled" => GraphFile::from_json(BUNDLED_TREE)?,
        (Some(path), _, _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
            GraphFile::from_json(&text)?
        }
        (None, Some(d), Some(depth)) => return Ok(TreeGraph::regular_tree(d, depth)),
        _ => bail!(cavity_learning::Error::InvalidGraph("need --graph or --d with --depth".into())),
    };
    Ok(file.build()?)
}

/// Bayesian replay: finite-tree tables for the simulated part of a forest.
/// With a focus node only its ball is tabulated, and tallies are mapped
/// back to the graph's node ids.
fn simulate_bayesian(
    graph: &TreeGraph,
    model: &SignalModel,
    decider: &Decider<f64>,
    config: SimConfig,
    budget: u64,
) -> Result<RunResult> {
    if !graph.is_forest() {
        bail!(cavity_learning::Error::InvalidGraph(
            "Bayesian replay needs a forest without hubs".into()
        ));
    }
    let (nodes, sub, focus) = match config.focus {
        Some(f) if f < graph.n() => {
            let nodes = ball(graph, f, config.rounds);
            let sub = induced_subgraph(graph, &nodes)?;
            let local = nodes.binary_search(&f).expect("ball contains its center");
            (nodes, sub, Some(local))
        }
        _ => ((0..graph.n()).collect(), graph.clone(), config.focus),
    };
    let topology = Topology::finite(&sub, model.num_states())?;
    let mut engine = CavityEngine::new(
        topology,
        model.clone(),
        decider.clone(),
        UpdateRule::Bayesian,
        engine_config(budget, None),
    )?;
    engine.advance_to(config.rounds)?;
    let policy = TablePolicy::new(&engine, &sub)?;
    let mut result = sim::simulate(&sub, model, &policy, SimConfig { focus, ..config })?;
    for tally in &mut result.tallies {
        tally.node = nodes[tally.node];
    }
    result.focus = config.focus;
    result.graph = sim::describe_graph(graph);
    Ok(result)
}

pub fn run_simulation(args: &SimulateArgs, budget: u64) -> Result<RunResult> {
    let graph = load_graph(args)?;
    let (model, decider): (SignalModel, Decider<f64>) = args.model.config()?.build()?;
    let config = SimConfig {
        rounds: args.rounds,
        samples: args.samples,
        seed: args.seed,
        focus: args.focus,
    };
    let start = Instant::now();
    let result = match args.rule {
        Rule::Bayesian => simulate_bayesian(&graph, &model, &decider, config, budget)?,
        Rule::Majority => sim::simulate(&graph, &model, &MajorityPolicy::new(&model, &decider), config)?,
    };
    log::info!("{} samples in {:.2?}", args.samples, start.elapsed());
    Ok(result)
}

pub fn cmd_simulate(args: &SimulateArgs, budget: u64) -> Result<Outcome> {
    let result = run_simulation(args, budget)?;
    let mut outcome = Outcome::ok(result.to_csv());
    outcome.extra.push(("json", result.to_json()?));
    if let Some(f) = args.focus {
        for t in 0..=args.rounds {
            if let Some(tally) = result.tally(f, t) {
                let rate = tally.rate();
                outcome.summary.push(format!(
                    "node {f} round {t}: {rate:.6e} +- {:.1e}",
                    sim::standard_error(rate, tally.samples)
                ));
            }
        }
    }
    Ok(outcome)
}

pub fn cmd_conjecture(args: &ConjectureArgs, budget: u64) -> Result<Outcome> {
    let config = args.model.config()?;
    let noise = args.model.noise_label(&config);
    let horizons = per_degree(&args.d, &args.rounds)?;
    let mut csv = String::from("d,noise,round,bayesian,majority,holds\n");
    let mut outcome = Outcome::ok(String::new());
    for (&d, &rounds) in args.d.iter().zip(&horizons) {
        let series = |rule| error_series(rule, d, &config, rounds, args.model.state, engine_config(budget, None));
        let bayes = series(Rule::Bayesian)?;
        let major = series(Rule::Majority)?;
        let report = bounds::conjecture_check(&bayes, &major)?;
        for r in &report.rounds {
            csv.push_str(&format!(
                "{d},{noise},{},{},{},{}\n",
                r.round,
                sci(r.bayesian),
                sci(r.majority),
                r.holds
            ));
        }
        if !report.holds() {
            outcome.status = Status::VerificationFailed;
            outcome
                .summary
                .push(format!("d={d}: bayesian above majority at rounds {:?}", report.violations));
        }
        flag_unreliable(&format!("bayesian d={d}"), &bayes, &mut outcome.unreliable);
    }
    outcome.primary = csv;
    Ok(outcome)
}

pub fn run_command(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Table(a) => cmd_table(a, cli.budget),
        Command::Curve(a) => cmd_curve(a, cli.budget),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Simulate(a) => cmd_simulate(a, cli.budget),
        Command::Conjecture(a) => cmd_conjecture(a, cli.budget),
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<OutputDigest> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(OutputDigest {
        path: path.to_path_buf(),
        bytes: contents.len() as u64,
        sha256: hex::encode(Sha256::digest(contents.as_bytes())),
    })
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Runs the command and writes its outputs: to `--out` plus a manifest, or
/// the primary output to stdout.
pub fn execute(cli: &Cli, argv: &[String]) -> Result<Outcome> {
    let start = Instant::now();
    let outcome = run_command(cli)?;
    let elapsed = start.elapsed().as_secs_f64();
    for line in &outcome.summary {
        eprintln!("{line}");
    }
    let Some(out) = &cli.out else {
        std::io::stdout().write_all(outcome.primary.as_bytes())?;
        return Ok(outcome);
    };
    let mut outputs = vec![write_atomic(out, &outcome.primary)?];
    for (ext, contents) in &outcome.extra {
        outputs.push(write_atomic(&out.with_extension(ext), contents)?);
    }
    let manifest = RunManifest {
        command: cli.command.name().into(),
        argv: argv.to_vec(),
        config: serde_json::to_value(cli)?,
        version: env!("CARGO_PKG_VERSION").into(),
        elapsed_seconds: elapsed,
        status: outcome.status,
        unreliable: outcome.unreliable.clone(),
        summary: outcome.summary.clone(),
        outputs,
    };
    write_atomic(&manifest_path(out), &serde_json::to_string_pretty(&manifest)?)?;
    Ok(outcome)
}

/// 2 for configuration errors, 3 for exhausted resource budgets.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<cavity_learning::Error>() {
        Some(cavity_learning::Error::BudgetExceeded { .. } | cavity_learning::Error::RetryBudgetExhausted(_)) => 3,
        _ => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("cavity").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn round_zero_table_is_the_noise() {
        let cli = parse(&["table", "--d", "3", "--noise", "0.3", "--rounds", "0"]);
        let out = run_command(&cli).unwrap();
        assert_eq!(out.primary, "rule,d,noise,round,error_prob\nbayesian,3,0.3,0,2.9999999999999999e-1\n");
    }

    #[test]
    fn sci_has_seventeen_digits() {
        assert_eq!(sci(0.15), "1.4999999999999999e-1");
        assert_eq!(sci(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn curve_columns_are_consistent() {
        let cli = parse(&["curve", "--d", "3,5", "--rounds", "3,2", "--noise", "0.3"]);
        let out = run_command(&cli).unwrap();
        let rows: Vec<Vec<&str>> = out.primary.lines().skip(1).map(|l| l.split(',').collect()).collect();
        assert_eq!(rows.len(), 4 + 3);
        for row in &rows {
            let p: f64 = row[2].parse().unwrap();
            let lnl: f64 = row[3].parse().unwrap();
            assert!((lnl - (-p.ln()).ln()).abs() < 1e-9);
        }
        assert_eq!(rows[0][4], "");
        assert!(rows[1][4].parse::<f64>().unwrap() > 0.0);
    }

    #[test]
    fn rounds_list_must_match_degrees() {
        let cli = parse(&["curve", "--d", "3,5,7", "--rounds", "3,2"]);
        let err = run_command(&cli).unwrap_err();
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn budget_exhaustion_maps_to_three() {
        let cli = parse(&["--budget", "1000", "table", "--d", "5", "--rounds", "3"]);
        let err = run_command(&cli).unwrap_err();
        assert_eq!(exit_code(&err), 3);
        assert!(err.to_string().contains("needs"), "{err}");
    }

    #[test]
    fn undirected_bound_first_step() {
        let cli = parse(&["bounds", "--variant", "undirected", "--d", "5", "--delta0", "0.15", "--rounds", "4"]);
        let out = run_command(&cli).unwrap();
        let row = out.primary.lines().nth(2).unwrap();
        let value: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!((value - 0.109519).abs() < 5e-7, "{row}");
        assert!(row.starts_with("undirected,5,0.15,1,"));
    }

    #[test]
    fn conditioning_on_a_state_matches_average_under_symmetry() {
        let avg = run_command(&parse(&["table", "--d", "3", "--rounds", "2"])).unwrap();
        let cond = run_command(&parse(&["table", "--d", "3", "--rounds", "2", "--state", "1"])).unwrap();
        let values = |o: &Outcome| -> Vec<f64> {
            o.primary
                .lines()
                .skip(1)
                .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
                .collect()
        };
        for (a, c) in values(&avg).iter().zip(values(&cond)) {
            assert!((a - c).abs() < 1e-15);
        }
        assert!(run_command(&parse(&["table", "--d", "3", "--rounds", "1", "--state", "2"])).is_err());
    }

    #[test]
    fn bundled_tree_is_the_generated_tree() {
        let g = GraphFile::from_json(BUNDLED_TREE).unwrap().build().unwrap();
        assert_eq!(g, TreeGraph::regular_tree(5, 5));
        assert_eq!(g.n(), 1706);
    }

    #[test]
    fn manifest_path_appends_suffix() {
        assert_eq!(manifest_path(Path::new("out/t.csv")), PathBuf::from("out/t.csv.manifest.json"));
    }
}
