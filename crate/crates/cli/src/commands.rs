use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use stlgame_core::fsp::{
    derive_seed, expected_return, heldout_experiment, load_checkpoint, run_fsp, BrBudget, Checkpoint, Evaluation, FspOptions,
    IterationMetrics, ReturnEstimate, ZeroSumLedger,
};
use stlgame_core::io::write_atomic;
use stlgame_core::policy::{MixturePolicy, PolicyParams, MIXTURE_FORMAT, POLICY_FORMAT};
use stlgame_core::rollout::{fmt17, write_csv};
use stlgame_core::scenarios::{predicate_library, Game, GameConfig, ScenarioId};
use stlgame_core::stl::{eval_boolean, parse_formula, robustness, smooth_bound, smooth_robustness_value, PredicateTable, Trace};

use crate::manifest::ManifestWriter;
use crate::svg::{self, CurvePoint};
use crate::{trace, usage, Cli, Outcome};

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Scenario TOML file, or a built-in scenario name (`vehicles`, `drones`).
    pub config: Option<String>,
    /// Target number of iterations (default: `optimization.iterations`).
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Continue from an `iter_k` checkpoint; outputs default to its run directory.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Config override, e.g. `optimization.epochs=50`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Args, Debug, Clone)]
pub struct MonitorArgs {
    /// Formula text, or a file containing it.
    pub formula: String,
    /// Trace CSV.
    pub trace: PathBuf,
    /// Also report smooth robustness at this temperature.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Scenario TOML or name supplying region predicates; detected from rollout traces otherwise.
    #[arg(long)]
    pub config: Option<String>,
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// TOML file of `[[predicate]]` tables over trace column names.
    #[arg(long)]
    pub predicates: Option<PathBuf>,
    /// Evaluation step.
    #[arg(long, default_value_t = 0)]
    pub at: usize,
    /// Print one JSON record instead of the text report.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug, Clone)]
pub struct EvaluateArgs {
    /// Checkpoint directory (`iter_k`, or a run directory for its latest iteration).
    pub checkpoint: PathBuf,
    /// `nash`, a policy or mixture file, or a directory of policies.
    #[arg(long, default_value = "nash")]
    pub opponent: String,
    /// Episodes per cell (default: `optimization.eval_episodes`).
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Held-out experiment: train against SEEN, play against both.
    #[arg(long, num_args = 2, value_names = ["SEEN", "UNSEEN"])]
    pub heldout: Option<Vec<PathBuf>>,
    /// Best-response epochs for `--heldout` (default: the run's).
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct ExploitabilityArgs {
    pub checkpoint: PathBuf,
    /// Best-response epochs (default: the run's).
    #[arg(long)]
    pub budget: Option<usize>,
    /// Episodes per gradient step (default: the run's).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Monte-Carlo episodes per value; exact enumeration when omitted.
    #[arg(long)]
    pub episodes: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct RolloutArgs {
    /// Checkpoint directory; its mixtures are sampled unless overridden.
    pub checkpoint: Option<PathBuf>,
    /// Ego policy or mixture file.
    #[arg(long)]
    pub ego: Option<PathBuf>,
    /// Opponent policy or mixture file.
    #[arg(long)]
    pub opponent: Option<PathBuf>,
    /// Scenario TOML or name, required without a checkpoint.
    #[arg(long)]
    pub config: Option<String>,
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Initial condition, 0-based.
    #[arg(long, default_value_t = 0)]
    pub init: usize,
    /// Also render the episode.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

fn apply_overrides(mut cfg: GameConfig, overrides: &[String]) -> anyhow::Result<GameConfig> {
    for o in overrides {
        cfg = cfg.apply_override(o)?;
    }
    Ok(cfg)
}

/// A TOML path, or a scenario name when no such file exists.
fn resolve_config(spec: &str, overrides: &[String]) -> anyhow::Result<GameConfig> {
    let path = Path::new(spec);
    let cfg = if path.is_file() {
        GameConfig::load(path)?
    } else if let Ok(id) = spec.parse::<ScenarioId>() {
        GameConfig::defaults(id)
    } else {
        return Err(usage(format!("config file `{spec}` not found (built-in scenarios: vehicles, drones)")));
    };
    apply_overrides(cfg, overrides)
}

fn iter_index(p: &Path) -> Option<usize> {
    p.file_name()?.to_str()?.strip_prefix("iter_")?.parse().ok()
}

/// `iter_k` as given, or the highest `iter_k` inside a run directory.
fn checkpoint_dir(path: &Path) -> anyhow::Result<PathBuf> {
    if path.join("state.json").is_file() {
        return Ok(path.to_path_buf());
    }
    let latest = fs::read_dir(path)
        .map_err(|e| usage(format!("checkpoint {}: {e}", path.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("state.json").is_file())
        .filter_map(|p| iter_index(&p).map(|k| (k, p)))
        .max_by_key(|(k, _)| *k);
    latest.map(|(_, p)| p).ok_or_else(|| usage(format!("{} is not a checkpoint", path.display())))
}

fn open_checkpoint(path: &Path) -> anyhow::Result<Checkpoint> {
    let dir = checkpoint_dir(path)?;
    Ok(load_checkpoint(&dir)?)
}

fn run_root(ckpt: &Checkpoint) -> PathBuf {
    match ckpt.dir.parent() {
        Some(p) if !p.as_os_str().is_empty() && iter_index(&ckpt.dir).is_some() => p.to_path_buf(),
        _ => ckpt.dir.clone(),
    }
}

fn json_format(path: &Path) -> anyhow::Result<Option<String>> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let v: serde_json::Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(_) => return Ok(None),
    };
    Ok(v.get("format").and_then(|f| f.as_str()).map(String::from))
}

/// A policy file as a one-component mixture, or a mixture file.
fn load_mixture_file(path: &Path) -> anyhow::Result<MixturePolicy> {
    match json_format(path)?.as_deref() {
        Some(POLICY_FORMAT) => Ok(MixturePolicy::single(PolicyParams::load(path)?)),
        Some(MIXTURE_FORMAT) => Ok(MixturePolicy::load(path)?),
        _ => Err(usage(format!("{} is neither a policy nor a mixture file", path.display()))),
    }
}

/// Opponent policies from a directory of policy files, a checkpoint (its opponent
/// mixture's components) or a single policy/mixture file.
fn load_policy_set(path: &Path) -> anyhow::Result<Vec<PolicyParams>> {
    if path.is_file() {
        return Ok(load_mixture_file(path)?.components().to_vec());
    }
    if path.join("state.json").is_file() {
        return Ok(load_checkpoint(path)?.state.opponent.components().to_vec());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| usage(format!("opponent set {}: {e}", path.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut set = Vec::new();
    for f in files {
        if json_format(&f)?.as_deref() == Some(POLICY_FORMAT) {
            set.push(PolicyParams::load(&f)?);
        }
    }
    if set.is_empty() {
        return Err(usage(format!("no policy files in {}", path.display())));
    }
    Ok(set)
}

fn check_shapes(game: &Game, policies: &[PolicyParams], what: &str) -> anyhow::Result<()> {
    let shape = game.policy_shape();
    if let Some(p) = policies.iter().find(|p| p.shape != shape) {
        return Err(usage(format!("{what}: policy shape {:?} does not fit the game ({shape:?})", p.shape)));
    }
    Ok(())
}

fn jsonl<T: Serialize>(records: &[T]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("record serialises") + "\n").collect()
}

fn curve_svg(metrics: &[IterationMetrics]) -> String {
    let pts: Vec<CurvePoint> = metrics
        .iter()
        .map(|m| CurvePoint {
            iteration: m.iteration as f64,
            value: m.exploitability,
            band: Some((m.exploitability_ic_mean - m.exploitability_ic_std, m.exploitability_ic_mean + m.exploitability_ic_std)),
        })
        .collect();
    svg::exploitability_curve(&pts)
}

pub fn train(cli: &Cli, args: &TrainArgs) -> anyhow::Result<Outcome> {
    let (config, seed, budget, resume) = match &args.resume {
        Some(dir) => {
            if args.config.is_some() || !args.overrides.is_empty() {
                return Err(usage("--resume takes its configuration from the checkpoint"));
            }
            let ckpt = open_checkpoint(dir)?;
            if cli.seed.is_some_and(|s| s != ckpt.master_seed) {
                return Err(usage(format!("checkpoint was trained with seed {}", ckpt.master_seed)));
            }
            (ckpt.config.clone(), ckpt.master_seed, ckpt.budget, Some(ckpt))
        }
        None => {
            let spec = args.config.as_deref().ok_or_else(|| usage("train needs a config file or scenario name"))?;
            let cfg = resolve_config(spec, &args.overrides)?;
            let budget = BrBudget { epochs: cfg.optimization.epochs, opponent_samples: cfg.optimization.opponent_samples };
            (cfg, cli.seed.unwrap_or(0), budget, None)
        }
    };
    let iterations = args.iterations.unwrap_or(config.optimization.iterations);
    if iterations == 0 {
        return Err(usage("--iterations must be at least 1"));
    }
    budget.validate()?;
    let out = cli
        .out
        .clone()
        .or_else(|| resume.as_ref().map(run_root))
        .unwrap_or_else(|| PathBuf::from("out"));
    let game = Game::new(config)?;
    let manifest = ManifestWriter::start(
        out.join("train.manifest.json"),
        "train",
        seed,
        BTreeMap::from([("master".to_string(), seed)]),
        &out,
        Some(game.config.to_toml_string()),
    )?;

    let ledger = ZeroSumLedger::new();
    let opts = FspOptions { iterations, budget, seed, out_dir: Some(out.clone()) };
    let state = run_fsp(&game, &opts, resume, &ledger)?;

    write_atomic(&out.join("metrics.jsonl"), jsonl(&state.metrics).as_bytes())?;
    write_atomic(&out.join("exploitability.svg"), curve_svg(&state.metrics).as_bytes())?;
    println!("{:>9}  {:>23}  {:>23}", "iteration", "exploitability", "raw");
    for m in &state.metrics {
        println!("{:>9}  {:>23}  {:>23}", m.iteration, fmt17(m.exploitability), fmt17(m.exploitability_raw));
    }
    println!("checkpoint {}", out.join(format!("iter_{}", state.iteration)).display());
    println!("episodes {} zero-sum violations {}", ledger.episodes(), ledger.violations());
    manifest.finish()?;
    Ok(Outcome::Success)
}

pub fn monitor(cli: &Cli, args: &MonitorArgs) -> anyhow::Result<Outcome> {
    let formula_path = Path::new(&args.formula);
    let text = if formula_path.is_file() {
        fs::read_to_string(formula_path).with_context(|| format!("reading {}", formula_path.display()))?
    } else {
        args.formula.clone()
    };
    let csv = trace::load(&args.trace)?;
    let config = match &args.config {
        Some(spec) => Some(resolve_config(spec, &args.overrides)?),
        None => csv.scenario.map(GameConfig::defaults).map(|c| apply_overrides(c, &args.overrides)).transpose()?,
    };
    let mut table = PredicateTable::new();
    if let Some(cfg) = &config {
        if csv.scenario != Some(cfg.scenario.id) {
            return Err(usage(format!("trace columns do not match the {} scenario", cfg.scenario.id)));
        }
        table = predicate_library(cfg)?;
    }
    if let Some(p) = &args.predicates {
        let defs = fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
        trace::add_predicates(&defs, &csv, &mut table)?;
    }
    let phi = parse_formula(text.trim(), &table)?;
    phi.check_dimension(csv.columns.len())?;
    if let Some(tau) = args.tau {
        if !(tau > 0.0) {
            return Err(usage(format!("--tau must be positive, got {tau}")));
        }
    }
    let dt = config.as_ref().map(|c| c.dynamics().dt()).unwrap_or(1.0);
    let tr = Trace::new(csv.states, dt)?;

    let out = cli.out.clone().unwrap_or_else(|| args.trace.parent().map(Path::to_path_buf).unwrap_or_default());
    let manifest = ManifestWriter::start(
        out.join("monitor.manifest.json"),
        "monitor",
        cli.seed.unwrap_or(0),
        BTreeMap::new(),
        &out,
        config.as_ref().map(GameConfig::to_toml_string),
    )?;
    let rho = robustness(&phi, &tr, args.at)?;
    let satisfied = eval_boolean(&phi, &tr, args.at)?;
    let smooth = match args.tau {
        Some(tau) => Some((tau, smooth_robustness_value(&phi, &tr, args.at, tau)?, smooth_bound(&phi, tau).uniform)),
        None => None,
    };
    if args.json {
        let mut rec = json!({
            "formula": phi.to_string(),
            "step": args.at,
            "satisfied": satisfied,
            "robustness": rho,
        });
        if let Some((tau, s, b)) = smooth {
            rec["tau"] = json!(tau);
            rec["smooth_robustness"] = json!(s);
            rec["bound"] = json!(b);
        }
        println!("{rec}");
    } else {
        println!("formula     {phi}");
        println!("verdict     {}", if satisfied { "satisfied" } else { "violated" });
        println!("robustness  {}", fmt17(rho));
        if let Some((tau, s, b)) = smooth {
            println!("smooth      {}  (tau {})", fmt17(s), fmt17(tau));
            println!("bound       {}", fmt17(b));
        }
    }
    manifest.finish()?;
    Ok(if satisfied { Outcome::Success } else { Outcome::Negative })
}

#[derive(Serialize)]
struct CellRecord<'a> {
    checkpoint: &'a Path,
    iteration: usize,
    policy: &'a str,
    opponents: &'a str,
    episodes: usize,
    failures: usize,
    robustness_mean: f64,
    robustness_std: f64,
    satisfaction_rate: f64,
}

pub fn evaluate(cli: &Cli, args: &EvaluateArgs) -> anyhow::Result<Outcome> {
    let ckpt = open_checkpoint(&args.checkpoint)?;
    let game = Game::new(ckpt.config.clone())?;
    let episodes = args.episodes.unwrap_or(game.config.optimization.eval_episodes);
    if episodes == 0 {
        return Err(usage("--episodes must be at least 1"));
    }
    let seed = cli.seed.unwrap_or(0);
    let out = cli.out.clone().unwrap_or_else(|| run_root(&ckpt));
    let nash = &ckpt.state.ego;
    check_shapes(&game, nash.components(), "checkpoint")?;

    let ledger = ZeroSumLedger::new();
    let mut cells: Vec<(String, String, ReturnEstimate)> = Vec::new();
    let manifest;
    if let Some(sets) = &args.heldout {
        let seen = load_policy_set(&sets[0])?;
        let unseen = load_policy_set(&sets[1])?;
        check_shapes(&game, &seen, "seen set")?;
        check_shapes(&game, &unseen, "unseen set")?;
        let budget = BrBudget {
            epochs: args.epochs.unwrap_or(ckpt.budget.epochs),
            opponent_samples: args.samples.unwrap_or(ckpt.budget.opponent_samples),
        };
        budget.validate()?;
        manifest = ManifestWriter::start(out.join("evaluate.manifest.json"), "evaluate", seed, BTreeMap::new(), &out, Some(game.config.to_toml_string()))?;
        let report = heldout_experiment(&game, nash, &seen, &unseen, budget, episodes, seed, &ledger)?;
        eprintln!("best response trained against {} seen policies, value {}", seen.len(), fmt17(report.best_response_value));
        cells.extend(report.cells.into_iter().map(|c| (c.policy, c.opponents, c.estimate)));
    } else {
        let (label, opp) = match args.opponent.as_str() {
            "nash" => ("nash".to_string(), ckpt.state.opponent.clone()),
            other => {
                let p = Path::new(other);
                let mix = if p.is_dir() { MixturePolicy::uniform(load_policy_set(p)?)? } else { load_mixture_file(p)? };
                (other.to_string(), mix)
            }
        };
        check_shapes(&game, opp.components(), "opponent")?;
        manifest = ManifestWriter::start(out.join("evaluate.manifest.json"), "evaluate", seed, BTreeMap::new(), &out, Some(game.config.to_toml_string()))?;
        let est = expected_return(&game, nash, &opp, episodes, seed, &ledger)?;
        cells.push(("nash".into(), label, est));
    }

    let records: Vec<CellRecord> = cells
        .iter()
        .map(|(p, o, e)| CellRecord {
            checkpoint: &ckpt.dir,
            iteration: ckpt.state.iteration,
            policy: p,
            opponents: o,
            episodes: e.episodes,
            failures: e.failures,
            robustness_mean: e.mean,
            robustness_std: e.std,
            satisfaction_rate: e.satisfaction_rate,
        })
        .collect();
    write_atomic(&out.join("evaluate.jsonl"), jsonl(&records).as_bytes())?;
    println!("{:<8} {:<12} {:>23} {:>23} {:>12}", "policy", "opponents", "robustness mean", "robustness std", "satisfied %");
    for r in &records {
        println!(
            "{:<8} {:<12} {:>23} {:>23} {:>12.1}",
            r.policy,
            r.opponents,
            fmt17(r.robustness_mean),
            fmt17(r.robustness_std),
            100.0 * r.satisfaction_rate
        );
    }
    manifest.finish()?;
    Ok(Outcome::Success)
}

pub fn exploitability(cli: &Cli, args: &ExploitabilityArgs) -> anyhow::Result<Outcome> {
    let ckpt = open_checkpoint(&args.checkpoint)?;
    let game = Game::new(ckpt.config.clone())?;
    let budget = BrBudget {
        epochs: args.budget.unwrap_or(ckpt.budget.epochs),
        opponent_samples: args.samples.unwrap_or(ckpt.budget.opponent_samples),
    };
    budget.validate()?;
    let evaluation = match args.episodes {
        None => Evaluation::Exact,
        Some(0) => return Err(usage("--episodes must be at least 1")),
        Some(episodes) => Evaluation::MonteCarlo { episodes },
    };
    let seed = cli.seed.unwrap_or(0);
    let out = cli.out.clone().unwrap_or_else(|| run_root(&ckpt));
    let manifest =
        ManifestWriter::start(out.join("exploitability.manifest.json"), "exploitability", seed, BTreeMap::new(), &out, Some(game.config.to_toml_string()))?;
    let ledger = ZeroSumLedger::new();
    let (e, ego_br, opp_br) =
        stlgame_core::fsp::exploitability(&game, &ckpt.state.ego, &ckpt.state.opponent, budget, evaluation, seed, &ledger)?;
    let record = json!({
        "checkpoint": ckpt.dir,
        "iteration": ckpt.state.iteration,
        "seed": seed,
        "budget": budget,
        "evaluation": evaluation,
        "exploitability": e.value,
        "exploitability_raw": e.raw,
        "ego_gain": e.ego_gain,
        "opponent_gain": e.opponent_gain,
        "profile_value": e.profile_value,
        "ego_br_epoch": ego_br.best_epoch,
        "opponent_br_epoch": opp_br.best_epoch,
        "per_ic": e.per_ic,
        "per_ic_mean": e.per_ic_mean,
        "per_ic_std": e.per_ic_std,
        "zero_sum_violations": ledger.violations(),
    });
    println!("{record}");

    let curve = out.join("exploitability_curve.jsonl");
    let mut lines = fs::read_to_string(&curve).unwrap_or_default();
    lines.push_str(&record.to_string());
    lines.push('\n');
    write_atomic(&curve, lines.as_bytes())?;
    // latest record per iteration
    let mut points: BTreeMap<u64, CurvePoint> = BTreeMap::new();
    for v in lines.lines().filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok()) {
        let (Some(k), Some(value)) = (v["iteration"].as_u64(), v["exploitability"].as_f64()) else { continue };
        let band = v["per_ic_mean"].as_f64().zip(v["per_ic_std"].as_f64()).map(|(m, s)| (m - s, m + s));
        points.insert(k, CurvePoint { iteration: k as f64, value, band });
    }
    let pts: Vec<CurvePoint> = points.into_values().collect();
    write_atomic(&out.join("exploitability_curve.svg"), svg::exploitability_curve(&pts).as_bytes())?;
    manifest.finish()?;
    Ok(Outcome::Success)
}

pub fn rollout(cli: &Cli, args: &RolloutArgs) -> anyhow::Result<Outcome> {
    let (config, ego, opp, default_dir) = match &args.checkpoint {
        Some(path) => {
            let ckpt = open_checkpoint(path)?;
            let cfg = match &args.config {
                Some(spec) => resolve_config(spec, &args.overrides)?,
                None => apply_overrides(ckpt.config.clone(), &args.overrides)?,
            };
            let ego = args.ego.as_deref().map(load_mixture_file).transpose()?.unwrap_or_else(|| ckpt.state.ego.clone());
            let opp = args.opponent.as_deref().map(load_mixture_file).transpose()?.unwrap_or_else(|| ckpt.state.opponent.clone());
            (cfg, ego, opp, ckpt.dir.clone())
        }
        None => {
            let (Some(e), Some(o), Some(spec)) = (&args.ego, &args.opponent, &args.config) else {
                return Err(usage("rollout needs a checkpoint, or --ego, --opponent and --config"));
            };
            (resolve_config(spec, &args.overrides)?, load_mixture_file(e)?, load_mixture_file(o)?, PathBuf::new())
        }
    };
    let game = Game::new(config)?;
    check_shapes(&game, ego.components(), "ego")?;
    check_shapes(&game, opp.components(), "opponent")?;
    let n = game.num_initial_conditions();
    if args.init >= n {
        return Err(usage(format!("--init {} out of range: the scenario has {n} initial conditions (0-based)", args.init)));
    }
    // `--out` names the CSV itself when it ends in .csv, a directory otherwise
    let csv_path = match &cli.out {
        Some(p) if p.extension().is_some_and(|x| x == "csv") => p.clone(),
        Some(dir) => dir.join(format!("rollout_init{}.csv", args.init)),
        None => default_dir.join(format!("rollout_init{}.csv", args.init)),
    };
    let seed = cli.seed.unwrap_or(0);
    let draw_seed = derive_seed(seed, &[args.init as u64]);
    let manifest = ManifestWriter::start(
        csv_path.with_extension("manifest.json"),
        "rollout",
        seed,
        BTreeMap::from([("components".to_string(), draw_seed)]),
        &csv_path,
        Some(game.config.to_toml_string()),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(draw_seed);
    let ce = ego.sample(&mut rng);
    let co = opp.sample(&mut rng);
    let episode = stlgame_core::rollout::rollout(&game, ego.component(ce), opp.component(co), &game.initial_states[args.init], game.steps())?;
    let mut bytes = Vec::new();
    write_csv(&game, &episode, &mut bytes)?;
    write_atomic(&csv_path, &bytes)?;
    if let Some(svg_path) = &args.svg {
        write_atomic(svg_path, svg::rollout(&game, &episode).as_bytes())?;
    }
    let rho = robustness(&game.formula, &episode.trace, 0)?;
    println!("trace       {}", csv_path.display());
    println!("components  ego {ce} opponent {co}");
    println!("robustness  {}", fmt17(rho));
    manifest.finish()?;
    Ok(Outcome::Success)
}
