//! Command-line front end used by the `gap-acceptance` binary.
//!
//! Exit codes: 0 success, 1 computation failure, 2 configuration or usage
//! error, 3 unstable queue.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::equilibrium::{stability_margin, ServiceLaw};
use crate::error::{AnalysisError, ConfigError};
use crate::model::{check_limited_reuse, ScenarioConfig};
use crate::queuelen::{Epoch, QueueSolution};
use crate::saturation::{capacity, capacity_sweep, truncation_defect, DEFECT_ERROR, DEFECT_WARN};
use crate::sim::{simulate_capacity, simulate_queue, Horizon, Reuse, SimMode, SimOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_UNSTABLE: i32 = 3;

/// Tail mass left out when `--nmax` is not given.
const DEFAULT_TAIL: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "gap-acceptance", version, about = "Minor-road capacity and queue analysis at priority junctions")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed for simulation runs.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,

    /// Write CSV files and manifests into this directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Replace the number of modelled attempts `N` in the configuration.
    #[arg(long, global = true)]
    attempts_override: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a configuration and report whether the analysis is exact.
    Validate {
        config: PathBuf,
    },
    /// Capacity from the saturated chain, optionally over a sweep of major flows.
    Capacity {
        config: PathBuf,
        /// Major-road flows in veh/h, comma separated.
        #[arg(long, value_delimiter = ',')]
        q_sweep: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Queue-length distribution of the minor road.
    Queue {
        config: PathBuf,
        /// Minor-road vehicle flow in veh/h (rescales the batch rate).
        #[arg(long)]
        minor_flow: Option<f64>,
        /// Largest queue length reported.
        #[arg(long)]
        nmax: Option<usize>,
        #[arg(long, default_value = "departure")]
        epoch: Epoch,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Service-time transform and mean.
    Service {
        config: PathBuf,
        #[arg(long)]
        minor_flow: Option<f64>,
        /// Use the saturated law instead of the equilibrium law.
        #[arg(long)]
        saturated: bool,
        /// Transform arguments `s` (1/s), comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0])]
        s_values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Discrete-event simulation, saturated or with arrivals.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        /// Major-road flows in veh/h (saturated mode).
        #[arg(long, value_delimiter = ',')]
        q_sweep: Vec<f64>,
        /// Minor-road flow in veh/h (open mode).
        #[arg(long)]
        minor_flow: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analytic capacity against simulation over a sweep of major flows.
    Compare {
        config: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, value_delimiter = ',')]
        q_sweep: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, default_value = "saturated")]
    mode: SimMode,
    #[arg(long, default_value = "full")]
    reuse: Reuse,
    #[arg(long, default_value_t = 10)]
    replications: u64,
    /// Departures discarded at the start of each replication.
    #[arg(long, default_value_t = 10_000)]
    warmup: u64,
    /// Departures per replication, warmup included.
    #[arg(long, default_value_t = 1_000_000)]
    departures: u64,
}

impl SimArgs {
    fn options(&self, seed: u64, mode: SimMode) -> SimOptions {
        SimOptions {
            seed,
            mode,
            reuse: self.reuse,
            warmup: self.warmup,
            horizon: Horizon::Departures(self.departures),
            replications: self.replications,
        }
    }

    fn to_json(&self) -> Value {
        json!({
            "mode": format!("{:?}", self.mode).to_lowercase(),
            "reuse": format!("{:?}", self.reuse).to_lowercase(),
            "replications": self.replications,
            "warmup": self.warmup,
            "departures": self.departures,
        })
    }
}

#[derive(Debug)]
enum CliError {
    Config(ConfigError),
    Analysis(AnalysisError),
    Usage(String),
    Io(std::io::Error),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Config(c) => CliError::Config(c),
            other => CliError::Analysis(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Analysis(AnalysisError::Unstable { .. }) => EXIT_UNSTABLE,
            CliError::Analysis(_) | CliError::Io(_) => EXIT_FAILURE,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Config(e) => format!("configuration error: {e}"),
            CliError::Analysis(e @ AnalysisError::Unstable { .. }) => e.to_string(),
            CliError::Analysis(e) => format!("computation failed: {e}"),
            CliError::Usage(m) => format!("invalid arguments: {m}"),
            CliError::Io(e) => format!("i/o error: {e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parse `args` (program name first), run the command and return the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, &argv) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", e.message());
            e.exit_code()
        }
    }
}

/// Where output goes and what the manifest records.
struct Context<'a> {
    cli: &'a Cli,
    argv: &'a [String],
    command: &'static str,
    config_path: &'a Path,
    config: ScenarioConfig,
    overrides: Value,
}

impl Context<'_> {
    /// Destination for a CSV, or `None` for stdout.
    fn target(&self, out: &Option<PathBuf>, stem: &str) -> Option<PathBuf> {
        out.clone().or_else(|| self.cli.out_dir.as_ref().map(|d| d.join(format!("{stem}.csv"))))
    }

    /// Write `csv` to the destination with its manifest, or to stdout.
    /// The summary goes to stdout when the CSV goes to a file.
    fn emit(&self, out: &Option<PathBuf>, stem: &str, csv: &str, summary: &str, results: Value) -> CliResult<()> {
        match self.target(out, stem) {
            Some(path) => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                std::fs::write(&path, csv)?;
                let manifest = path.with_extension("manifest.json");
                let doc = self.manifest(&path, results)?;
                std::fs::write(&manifest, serde_json::to_string_pretty(&doc).expect("manifest serializes") + "\n")?;
                print!("{summary}");
                println!("wrote {}", path.display());
            }
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(csv.as_bytes())?;
                stdout.flush()?;
                eprint!("{summary}");
            }
        }
        Ok(())
    }

    fn manifest(&self, output: &Path, results: Value) -> CliResult<Value> {
        let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Ok(json!({
            "tool": "gap-acceptance",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "argv": self.argv,
            "config_path": self.config_path.display().to_string(),
            "effective_config": self.config.to_toml_string()?,
            "overrides": self.overrides,
            "seed": self.cli.seed,
            "output": output.display().to_string(),
            "created_unix_s": created,
            "results": results,
        }))
    }
}

fn load(cli: &Cli, path: &Path) -> CliResult<ScenarioConfig> {
    let config = ScenarioConfig::from_path(path)?;
    match cli.attempts_override {
        Some(n) => Ok(config.with_attempts(n)?),
        None => Ok(config),
    }
}

fn flows(sweep: &[f64], config: &ScenarioConfig) -> CliResult<Vec<f64>> {
    if sweep.is_empty() {
        return Ok(vec![config.major_flow_veh_h()]);
    }
    if let Some(q) = sweep.iter().find(|q| !(**q >= 0.0 && q.is_finite())) {
        return Err(CliError::Usage(format!("major flow {q} must be a nonnegative number")));
    }
    Ok(sweep.to_vec())
}

fn with_minor_flow(config: ScenarioConfig, flow: Option<f64>) -> CliResult<ScenarioConfig> {
    match flow {
        Some(v) if !(v >= 0.0 && v.is_finite()) => {
            Err(CliError::Usage(format!("minor flow {v} must be a nonnegative number")))
        }
        Some(v) => Ok(config.with_minor_flow(v)?),
        None => Ok(config),
    }
}

fn execute(cli: &Cli, argv: &[String]) -> CliResult<()> {
    let base_overrides = json!({ "attempts_override": cli.attempts_override });
    let mut overrides = base_overrides.clone();
    let extend = |o: &mut Value, extra: Value| {
        if let (Value::Object(a), Value::Object(b)) = (o, extra) {
            a.extend(b);
        }
    };
    let (command, path) = match &cli.command {
        Command::Validate { config } => ("validate", config),
        Command::Capacity { config, q_sweep, .. } => {
            extend(&mut overrides, json!({ "q_sweep": q_sweep }));
            ("capacity", config)
        }
        Command::Queue { config, minor_flow, nmax, epoch, .. } => {
            extend(&mut overrides, json!({ "minor_flow": minor_flow, "nmax": nmax, "epoch": epoch.to_string() }));
            ("queue", config)
        }
        Command::Service { config, minor_flow, saturated, s_values, .. } => {
            extend(&mut overrides, json!({ "minor_flow": minor_flow, "saturated": saturated, "s_values": s_values }));
            ("service", config)
        }
        Command::Simulate { config, sim, q_sweep, minor_flow, .. } => {
            extend(&mut overrides, json!({ "q_sweep": q_sweep, "minor_flow": minor_flow, "sim": sim.to_json() }));
            ("simulate", config)
        }
        Command::Compare { config, sim, q_sweep, .. } => {
            extend(&mut overrides, json!({ "q_sweep": q_sweep, "sim": sim.to_json() }));
            ("compare", config)
        }
    };
    let config = load(cli, path)?;
    let ctx = Context { cli, argv, command, config_path: path, config, overrides };
    match &cli.command {
        Command::Validate { .. } => validate(&ctx),
        Command::Capacity { q_sweep, out, .. } => run_capacity(&ctx, q_sweep, out),
        Command::Queue { minor_flow, nmax, epoch, out, .. } => run_queue(&ctx, *minor_flow, *nmax, *epoch, out),
        Command::Service { minor_flow, saturated, s_values, out, .. } => {
            run_service(&ctx, *minor_flow, *saturated, s_values, out)
        }
        Command::Simulate { sim, q_sweep, minor_flow, out, .. } => run_simulate(&ctx, sim, q_sweep, *minor_flow, out),
        Command::Compare { sim, q_sweep, out, .. } => run_compare(&ctx, sim, q_sweep, out),
    }
}

fn validate(ctx: &Context) -> CliResult<()> {
    let c = &ctx.config;
    let dims = c.dims();
    println!("config: {}", ctx.config_path.display());
    println!(
        "profiles: {}  attempts N: {}  gaps per attempt M: {}  types: {}",
        dims.profiles,
        dims.attempts,
        dims.gaps,
        dims.count()
    );
    println!("major flow: {} veh/h  minor flow: {} veh/h", c.major_flow_veh_h(), c.minor_flow_veh_h());
    let report = check_limited_reuse(c);
    if report.holds {
        println!("limited gap reuse condition: HOLDS (analysis exact)");
    } else {
        println!(
            "limited gap reuse condition: VIOLATED (analysis is a lower-bound approximation), {} violating pairs",
            report.violations.len()
        );
        for v in report.violations.iter().take(5) {
            println!(
                "  successor {} gap {} s < predecessor {} lag {} s",
                v.successor, v.successor_gap, v.predecessor, v.predecessor_lag
            );
        }
    }
    let defect = truncation_defect(c);
    let verdict = if defect > DEFECT_ERROR {
        "too large, increase N"
    } else if defect > DEFECT_WARN {
        "rows renormalized"
    } else {
        "ok"
    };
    println!("truncation defect: {defect:.6e} ({verdict})");
    if defect > DEFECT_ERROR {
        return Err(AnalysisError::DefectTooLarge { defect, limit: DEFECT_ERROR, attempts: dims.attempts }.into());
    }
    let stab = stability_margin(c)?;
    println!("load rho: {} ({})", stab.rho, if stab.stable { "stable" } else { "unstable" });
    Ok(())
}

fn run_capacity(ctx: &Context, sweep: &[f64], out: &Option<PathBuf>) -> CliResult<()> {
    let qs = flows(sweep, &ctx.config)?;
    let results = capacity_sweep(&ctx.config, &qs)?;
    let mut csv = String::from("q_veh_per_hour,capacity_veh_per_hour,exact,defect\n");
    let mut summary = String::new();
    for r in &results {
        writeln!(csv, "{},{},{},{:e}", r.major_flow_veh_h, r.capacity, r.exact, r.defect).unwrap();
        writeln!(summary, "q = {} veh/h: capacity {:.6} veh/h (g = {:.6} s)", r.major_flow_veh_h, r.capacity, r.g)
            .unwrap();
    }
    let json = results
        .iter()
        .map(|r| json!({ "q": r.major_flow_veh_h, "capacity": r.capacity, "g": r.g, "exact": r.exact, "defect": r.defect }))
        .collect();
    ctx.emit(out, "capacity", &csv, &summary, Value::Array(json))
}

fn run_queue(
    ctx: &Context,
    minor_flow: Option<f64>,
    nmax: Option<usize>,
    epoch: Epoch,
    out: &Option<PathBuf>,
) -> CliResult<()> {
    let config = with_minor_flow(ctx.config.clone(), minor_flow)?;
    let stab = stability_margin(&config)?;
    if !stab.stable {
        return Err(AnalysisError::Unstable { rho: stab.rho }.into());
    }
    let sol = QueueSolution::solve(&config)?;
    let n_max = match nmax {
        Some(n) => n,
        None => sol.adaptive_nmax(DEFAULT_TAIL, epoch)?,
    };
    let pmf = sol.pmf(n_max, epoch)?;
    let mut csv = String::from("n,probability,epoch\n");
    for (n, p) in pmf.iter().enumerate() {
        writeln!(csv, "{n},{p:e},{epoch}").unwrap();
    }
    let mean = sol.mean(epoch);
    let f0_mass: f64 = sol.empty_probs().iter().sum();
    let mut summary = String::new();
    writeln!(summary, "minor flow: {} veh/h", config.minor_flow_veh_h()).unwrap();
    writeln!(summary, "rho: {:.9}", sol.load()).unwrap();
    writeln!(summary, "mean queue length ({epoch} epoch): {mean:.9}").unwrap();
    writeln!(summary, "P(empty after departure) = sum f0: {f0_mass:.9}").unwrap();
    writeln!(summary, "interior roots found: {}", sol.roots().total_multiplicity()).unwrap();
    let results = json!({
        "rho": sol.load(),
        "mean": mean,
        "epoch": epoch.to_string(),
        "f0_mass": f0_mass,
        "f0": sol.empty_probs(),
        "nmax": n_max,
        "defect": sol.defect(),
    });
    ctx.emit(out, "queue", &csv, &summary, results)
}

fn run_service(
    ctx: &Context,
    minor_flow: Option<f64>,
    saturated: bool,
    s_values: &[f64],
    out: &Option<PathBuf>,
) -> CliResult<()> {
    if let Some(s) = s_values.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(CliError::Usage(format!("transform argument {s} must be a nonnegative number")));
    }
    let config = with_minor_flow(ctx.config.clone(), minor_flow)?;
    let stab = stability_margin(&config)?;
    let equilibrium = !saturated && config.batch_rate() > 0.0;
    if equilibrium && !stab.stable {
        return Err(AnalysisError::Unstable { rho: stab.rho }.into());
    }
    let law = if equilibrium { ServiceLaw::equilibrium(&config)? } else { ServiceLaw::saturated(&config)? };
    let mut csv = String::from("s,lst_re,lst_im\n");
    for &s in s_values {
        let v = law.lst(Complex64::new(s, 0.0)).value;
        writeln!(csv, "{},{:e},{:e}", s, v.re, v.im).unwrap();
    }
    let mean = law.mean();
    let mut summary = String::new();
    writeln!(summary, "law: {}", if equilibrium { "equilibrium" } else { "saturated" }).unwrap();
    writeln!(summary, "E[G]: {mean:.9} s").unwrap();
    writeln!(summary, "rho: {:.9}", stab.rho).unwrap();
    writeln!(summary, "mass defect 1 - G(0): {:.6e}", law.defect()).unwrap();
    let results = json!({
        "law": if equilibrium { "equilibrium" } else { "saturated" },
        "mean_service_s": mean,
        "rho": stab.rho,
        "defect": law.defect(),
    });
    ctx.emit(out, "service", &csv, &summary, results)
}

fn run_simulate(
    ctx: &Context,
    sim: &SimArgs,
    sweep: &[f64],
    minor_flow: Option<f64>,
    out: &Option<PathBuf>,
) -> CliResult<()> {
    match sim.mode {
        SimMode::Saturated => {
            let qs = flows(sweep, &ctx.config)?;
            let opts = sim.options(ctx.cli.seed, SimMode::Saturated);
            let mut csv = String::from(
                "q_veh_per_hour,capacity_veh_per_hour,se,ci_half_width,mean_service_s,replications,departures\n",
            );
            let mut summary = String::new();
            let mut json = Vec::new();
            for q in qs {
                let r = simulate_capacity(&ctx.config.with_major_flow(q)?, &opts)?;
                writeln!(
                    csv,
                    "{},{},{:e},{:e},{},{},{}",
                    q,
                    r.capacity.mean,
                    r.capacity.se,
                    r.capacity.half_width,
                    r.mean_service.mean,
                    r.replications,
                    r.departures
                )
                .unwrap();
                writeln!(summary, "q = {q} veh/h: capacity {:.6} ± {:.6} veh/h", r.capacity.mean, r.capacity.half_width)
                    .unwrap();
                json.push(json!({ "q": q, "capacity": r.capacity, "mean_service": r.mean_service }));
            }
            ctx.emit(out, "simulate", &csv, &summary, Value::Array(json))
        }
        SimMode::Open => {
            let config = with_minor_flow(ctx.config.clone(), minor_flow)?;
            let stab = stability_margin(&config)?;
            if !stab.stable {
                return Err(AnalysisError::Unstable { rho: stab.rho }.into());
            }
            let r = simulate_queue(&config, &sim.options(ctx.cli.seed, SimMode::Open))?;
            let mut csv = String::from("n,departure_prob,departure_se,arbitrary_prob,arbitrary_se\n");
            for (n, (d, a)) in r.departure_pmf.iter().zip(&r.arbitrary_pmf).enumerate() {
                writeln!(csv, "{n},{:e},{:e},{:e},{:e}", d.mean, d.se, a.mean, a.se).unwrap();
            }
            let mut summary = String::new();
            writeln!(summary, "mean queue after departures: {:.6} ± {:.6}", r.mean_queue.mean, r.mean_queue.half_width)
                .unwrap();
            writeln!(
                summary,
                "time-average queue: {:.6} ± {:.6}",
                r.mean_queue_arbitrary.mean, r.mean_queue_arbitrary.half_width
            )
            .unwrap();
            writeln!(summary, "mean service: {:.6} ± {:.6} s", r.mean_service.mean, r.mean_service.half_width)
                .unwrap();
            let results = json!({
                "mean_queue": r.mean_queue,
                "mean_queue_arbitrary": r.mean_queue_arbitrary,
                "mean_service": r.mean_service,
                "departures": r.departures,
            });
            ctx.emit(out, "simulate", &csv, &summary, results)
        }
    }
}

fn run_compare(ctx: &Context, sim: &SimArgs, sweep: &[f64], out: &Option<PathBuf>) -> CliResult<()> {
    if sim.mode != SimMode::Saturated {
        return Err(CliError::Usage("compare runs saturated simulations only".into()));
    }
    let qs = flows(sweep, &ctx.config)?;
    let opts = sim.options(ctx.cli.seed, SimMode::Saturated);
    let mut csv = String::from(
        "q_veh_per_hour,analytic_veh_per_hour,simulated_veh_per_hour,ci_half_width,rel_error,exact,flag\n",
    );
    let mut summary = String::new();
    let mut json = Vec::new();
    for q in qs {
        let c = ctx.config.with_major_flow(q)?;
        let a = capacity(&c)?;
        let s = simulate_capacity(&c, &opts)?;
        let rel = (a.capacity - s.capacity.mean) / s.capacity.mean;
        let above = a.capacity > s.capacity.mean + s.capacity.half_width;
        let flag = if above { "analytic_above_ci" } else { "" };
        writeln!(
            csv,
            "{},{},{},{:e},{:e},{},{}",
            q, a.capacity, s.capacity.mean, s.capacity.half_width, rel, a.exact, flag
        )
        .unwrap();
        writeln!(
            summary,
            "q = {q} veh/h: analytic {:.6}, simulated {:.6} ± {:.6}, rel. error {:+.3e}{}",
            a.capacity,
            s.capacity.mean,
            s.capacity.half_width,
            rel,
            if above { "  [analytic above CI]" } else { "" }
        )
        .unwrap();
        json.push(json!({
            "q": q,
            "analytic": a.capacity,
            "simulated": s.capacity,
            "rel_error": rel,
            "exact": a.exact,
            "analytic_above_ci": above,
        }));
    }
    ctx.emit(out, "compare", &csv, &summary, Value::Array(json))
}
