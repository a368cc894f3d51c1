//! regkit: regularity diagnostics for parametric feasible sets, value
//! functions, and bilevel reformulations. Every analysis verb emits a
//! canonical JSON report whose payload is reproducible byte for byte under a
//! fixed seed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use regkit::bundled::bundled_source;
use regkit::problemfile::ProblemFile;
use regkit::reproduce::{reproduce_all, reproduce_example, ExampleRun};
use regkit_core::bilevel::{
    check_partial_calmness, pessimistic_existence_report, solve_optimistic, BilevelProblem,
    DEFAULT_KAPPA_GRID,
};
use regkit_core::cq::{
    check_licq, check_mfcq, check_rcpld, check_rcpld_s_via_multipliers, check_rcrcq,
};
use regkit_core::geom::{estimate_rregularity, inner_semicontinuity_probe, ProbeCfg};
use regkit_core::parametric::{
    lipschitz_scan, s_map_probes, scan, AxisSpec, GridSpec, LipschitzCfg, ParametricProblem,
};
use regkit_core::report::{sha256_hex, RunReport, Tolerances};
use regkit_core::sampling::{NeighborhoodSampler, Restriction};
use regkit_core::solver::SolveCfg;

#[derive(Parser)]
#[command(
    name = "regkit",
    version,
    about = "Regularity and calmness diagnostics for parametric and bilevel programs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed for all sampling.
    #[arg(long, global = true, env = "REGKIT_SEED", default_value_t = 42)]
    seed: u64,
    /// Cap the rayon worker pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the report to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CqChoice {
    Licq,
    Mfcq,
    Rcrcq,
    Rcpld,
    #[value(name = "rcpld_s")]
    RcpldS,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Omega {
    /// Sample parameters anywhere near the reference point.
    Full,
    /// Reject sampled parameters whose feasible set is empty.
    Dom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Target {
    /// The constraint system as written.
    Gamma,
    /// The solution map, written as the constraints plus the value-function
    /// inequality; the reference point must solve the lower-level problem.
    Smap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct SamplerArgs {
    /// Probe radii, comma-separated, strictly decreasing.
    #[arg(long, value_delimiter = ',')]
    radii: Vec<f64>,
    /// Sample budget per radius.
    #[arg(long)]
    samples: Option<usize>,
}

impl SamplerArgs {
    fn build(&self, seed: u64, restriction: Restriction) -> Result<NeighborhoodSampler> {
        let base = NeighborhoodSampler::default();
        let radii = if self.radii.is_empty() { base.radii.clone() } else { self.radii.clone() };
        let samples = self.samples.unwrap_or(base.samples_per_radius);
        NeighborhoodSampler::new(radii, samples, seed, restriction).map_err(|e| anyhow!(e))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse a problem file and report schema diagnostics.
    Validate {
        /// Path to a problem file, or a bundled example name.
        problem: String,
    },
    /// Check a constraint qualification at a reference point.
    CheckCq {
        problem: String,
        /// Named reference point, or comma-separated coordinates (x then y).
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        #[arg(long, value_enum)]
        cq: CqChoice,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
    /// Probe the error bound dist(y, Gamma(x)) <= kappa * residual near a point.
    ProbeRreg {
        problem: String,
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        /// Parameter restriction for the sampled x.
        #[arg(long, value_enum, default_value = "full")]
        omega: Omega,
        /// Probe the raw constraint set or the solution map.
        #[arg(long, value_enum, default_value = "gamma")]
        target: Target,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
    /// Probe inner semicontinuity of the feasible-set map at a point.
    ProbeIsc {
        problem: String,
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        #[arg(long, value_enum, default_value = "full")]
        omega: Omega,
        #[arg(long, value_enum, default_value = "gamma")]
        target: Target,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
    /// Solve the lower level over a parameter grid and tabulate phi and S.
    Scan {
        problem: String,
        /// Axes as min:max:steps, semicolon-separated, one per parameter.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        /// Restrict the Lipschitz modulus to this window (min:max per axis).
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Minimize the upper objective over the optimistic selection.
    SolveOpt {
        problem: String,
        /// Nodes per box axis of the initial grid.
        #[arg(long, default_value_t = 61)]
        steps: usize,
        /// Local grid refinements around the incumbent.
        #[arg(long, default_value_t = 3)]
        refine_rounds: usize,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Sample the partial-calmness penalty at a reference point.
    Calmness {
        problem: String,
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        /// Penalty weights to test, comma-separated.
        #[arg(long, value_delimiter = ',')]
        kappa_grid: Vec<f64>,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
    /// Evaluate the pessimistic existence hypotheses over the upper box.
    Existence {
        problem: String,
        /// Nodes per box axis.
        #[arg(long, default_value_t = 61)]
        steps: usize,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Re-run the bundled examples and compare against their known results.
    #[command(group = ArgGroup::new("what").required(true).args(["example", "all"]))]
    Reproduce {
        /// Bundled example name.
        example: Option<String>,
        /// Run every bundled example.
        #[arg(long)]
        all: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

struct Loaded {
    pf: ProblemFile,
    warnings: Vec<String>,
    digest: String,
    origin: String,
}

fn load_problem(arg: &str) -> Result<Loaded> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let (pf, warnings) = ProblemFile::from_str(&text)
            .with_context(|| format!("loading {}", path.display()))?;
        return Ok(Loaded {
            pf,
            warnings,
            digest: sha256_hex(text.as_bytes()),
            origin: path.display().to_string(),
        });
    }
    if let Some(source) = bundled_source(arg) {
        let (pf, warnings) = ProblemFile::from_str(source).expect("bundled files validate");
        return Ok(Loaded {
            pf,
            warnings,
            digest: sha256_hex(source.as_bytes()),
            origin: format!("bundled:{arg}"),
        });
    }
    bail!("'{arg}' is neither a readable file nor a bundled example name");
}

fn parse_point(pf: &ProblemFile, text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some(p) = pf.point(text) {
        return Ok((p.x.clone(), p.y.clone()));
    }
    let values: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| anyhow!("bad coordinate '{t}'")))
        .collect::<Result<_>>()?;
    pf.split_point(&values).ok_or_else(|| {
        anyhow!(
            "--point needs {} + {} coordinates or a named point, got {}",
            pf.dims.n,
            pf.dims.m,
            values.len()
        )
    })
}

fn parse_axis(text: &str) -> Result<AxisSpec> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        bail!("axis '{text}' is not min:max:steps");
    }
    Ok(AxisSpec {
        min: parts[0].trim().parse().map_err(|_| anyhow!("bad axis min '{}'", parts[0]))?,
        max: parts[1].trim().parse().map_err(|_| anyhow!("bad axis max '{}'", parts[1]))?,
        steps: parts[2].trim().parse().map_err(|_| anyhow!("bad axis steps '{}'", parts[2]))?,
    })
}

fn parse_grid(text: &str, n: usize) -> Result<GridSpec> {
    let axes: Vec<AxisSpec> = text.split(';').map(parse_axis).collect::<Result<_>>()?;
    if axes.len() != n {
        bail!("--grid has {} axes, problem has {} parameters", axes.len(), n);
    }
    Ok(GridSpec { axes })
}

fn parse_window(text: &str, n: usize) -> Result<Vec<(f64, f64)>> {
    let out: Vec<(f64, f64)> = text
        .split(';')
        .map(|axis| {
            let parts: Vec<&str> = axis.split(':').collect();
            if parts.len() != 2 {
                bail!("window axis '{axis}' is not min:max");
            }
            Ok((
                parts[0].trim().parse().map_err(|_| anyhow!("bad window min '{}'", parts[0]))?,
                parts[1].trim().parse().map_err(|_| anyhow!("bad window max '{}'", parts[1]))?,
            ))
        })
        .collect::<Result<_>>()?;
    if out.len() != n {
        bail!("--window has {} axes, problem has {} parameters", out.len(), n);
    }
    Ok(out)
}

fn restriction_for(omega: Omega) -> Restriction {
    match omega {
        Omega::Full => Restriction::FullSpace,
        Omega::Dom => Restriction::DomGamma,
    }
}

fn require_bilevel(loaded: &Loaded) -> Result<BilevelProblem> {
    loaded
        .pf
        .bilevel_problem()
        .ok_or_else(|| anyhow!("{} declares no upper level", loaded.origin))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn emit_report(
    out: &Option<PathBuf>,
    seed: u64,
    digest: String,
    payload: Value,
    started: Instant,
) -> Result<()> {
    let report = RunReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: std::env::args().skip(1).collect::<Vec<_>>().join(" "),
        seed,
        input_digest: digest,
        tolerances: Tolerances::default(),
        payload,
        wall_ms: started.elapsed().as_millis() as u64,
    };
    emit(out, &report.render())
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().ok();
    }
    let started = Instant::now();
    let seed = cli.seed;
    let tols = Tolerances::default();
    let scfg = SolveCfg { seed, ..SolveCfg::default() };

    match cli.command {
        Command::Validate { problem } => {
            let loaded = load_problem(&problem)?;
            let pf = &loaded.pf;
            let mut text = String::new();
            for w in &loaded.warnings {
                text.push_str(&format!("warning: {w}\n"));
            }
            text.push_str(&format!(
                "ok: {} (n={}, m={}, ineq={}, eq={}, points={}{})",
                loaded.origin,
                pf.dims.n,
                pf.dims.m,
                pf.lower.ineq.len(),
                pf.lower.eq.len(),
                pf.points.len(),
                if pf.upper.is_some() { ", with upper level" } else { "" },
            ));
            emit(&cli.out, &text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::CheckCq { problem, point, cq, sampler } => {
            let loaded = load_problem(&problem)?;
            let (x, y) = parse_point(&loaded.pf, &point)?;
            let sam = sampler.build(seed, Restriction::FullSpace)?;
            let sys = loaded.pf.system();
            let report = match cq {
                CqChoice::Licq => check_licq(&sys, &x, &y, &tols),
                CqChoice::Mfcq => check_mfcq(&sys, &x, &y, &tols),
                CqChoice::Rcrcq => check_rcrcq(&sys, &x, &y, &sam, &tols, &scfg)?,
                CqChoice::Rcpld => check_rcpld(&sys, &x, &y, &sam, &tols, &scfg)?,
                CqChoice::RcpldS => {
                    let p: Arc<ParametricProblem> = loaded.pf.lower_problem();
                    check_rcpld_s_via_multipliers(&p, &x, &y, &sam, &tols, &scfg)?
                }
            };
            emit_report(&cli.out, seed, loaded.digest, serde_json::to_value(&report)?, started)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ProbeRreg { problem, point, omega, target, sampler } => {
            let loaded = load_problem(&problem)?;
            let (x, y) = parse_point(&loaded.pf, &point)?;
            let sam = sampler.build(seed, restriction_for(omega))?;
            let cfg = ProbeCfg { solve: scfg.clone(), ..ProbeCfg::default() };
            let payload = match target {
                Target::Gamma => {
                    let sys = loaded.pf.system();
                    let probe = estimate_rregularity(&sys, &x, &y, &sam, &cfg, tols.tol_feas);
                    serde_json::to_value(&probe)?
                }
                Target::Smap => {
                    let p = loaded.pf.lower_problem();
                    let probes = s_map_probes(&p, &x, &y, &sam, &cfg, &tols)?;
                    serde_json::to_value(&probes)?
                }
            };
            emit_report(&cli.out, seed, loaded.digest, payload, started)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ProbeIsc { problem, point, omega, target, sampler } => {
            let loaded = load_problem(&problem)?;
            let (x, y) = parse_point(&loaded.pf, &point)?;
            let sam = sampler.build(seed, restriction_for(omega))?;
            let cfg = ProbeCfg { solve: scfg.clone(), ..ProbeCfg::default() };
            let payload = match target {
                Target::Gamma => {
                    let sys = loaded.pf.system();
                    let probe = inner_semicontinuity_probe(&sys, &x, &y, &sam, &cfg, tols.tol_feas);
                    serde_json::to_value(&probe)?
                }
                Target::Smap => {
                    let p = loaded.pf.lower_problem();
                    let probes = s_map_probes(&p, &x, &y, &sam, &cfg, &tols)?;
                    serde_json::to_value(&probes)?
                }
            };
            emit_report(&cli.out, seed, loaded.digest, payload, started)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Scan { problem, grid, window, format } => {
            let loaded = load_problem(&problem)?;
            let p = loaded.pf.lower_problem();
            let spec = parse_grid(&grid, loaded.pf.dims.n)?;
            let window = window.map(|w| parse_window(&w, loaded.pf.dims.n)).transpose()?;
            let result = scan(&p, &spec, &scfg)?;
            match format {
                Format::Csv => {
                    emit(&cli.out, &result.to_csv(loaded.pf.dims.n, loaded.pf.dims.m))?
                }
                Format::Json => {
                    let lip = lipschitz_scan(&p, &result, window, &scfg, &LipschitzCfg::default());
                    let payload = json!({ "scan": result, "lipschitz": lip });
                    emit_report(&cli.out, seed, loaded.digest, payload, started)?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::SolveOpt { problem, steps, refine_rounds, format } => {
            let loaded = load_problem(&problem)?;
            let bp = require_bilevel(&loaded)?;
            let sol = solve_optimistic(&bp, &bp.default_grid(steps), refine_rounds, &scfg)?;
            match format {
                Format::Csv => emit(&cli.out, &sol.summary_csv())?,
                Format::Json => {
                    emit_report(&cli.out, seed, loaded.digest, serde_json::to_value(&sol)?, started)?
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Calmness { problem, point, kappa_grid, sampler } => {
            let loaded = load_problem(&problem)?;
            let bp = require_bilevel(&loaded)?;
            let (x, y) = parse_point(&loaded.pf, &point)?;
            let sam = sampler.build(seed, Restriction::FullSpace)?;
            let grid = if kappa_grid.is_empty() { DEFAULT_KAPPA_GRID.to_vec() } else { kappa_grid };
            let report = check_partial_calmness(&bp, &x, &y, &sam, &grid, &tols, &scfg);
            emit_report(&cli.out, seed, loaded.digest, serde_json::to_value(&report)?, started)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Existence { problem, steps, sampler, format } => {
            let loaded = load_problem(&problem)?;
            let bp = require_bilevel(&loaded)?;
            let sam = sampler.build(seed, Restriction::FullSpace)?;
            let report = pessimistic_existence_report(&bp, &bp.default_grid(steps), &sam, &tols, &scfg)?;
            match format {
                Format::Csv => emit(&cli.out, &report.summary_csv())?,
                Format::Json => emit_report(
                    &cli.out,
                    seed,
                    loaded.digest,
                    serde_json::to_value(&report)?,
                    started,
                )?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Reproduce { example, all } => {
            let runs = if all {
                reproduce_all(seed)?
            } else {
                vec![reproduce_example(example.as_deref().unwrap(), seed)?]
            };
            let ok = print_reproduce_table(&runs);
            let digest_input: String = runs
                .iter()
                .map(|r| bundled_source(&r.example).unwrap_or_default())
                .collect();
            let payload = Value::Array(
                runs.iter()
                    .map(|r| json!({ "example": r.example, "payload": r.payload }))
                    .collect(),
            );
            if cli.out.is_some() {
                emit_report(&cli.out, seed, sha256_hex(digest_input.as_bytes()), payload, started)?;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn print_reproduce_table(runs: &[ExampleRun]) -> bool {
    let mut all_ok = true;
    for run in runs {
        println!("{}", run.example);
        for check in &run.checks {
            let status = if check.passed { "PASS" } else { "FAIL" };
            println!("  {status} {} ({})", check.name, check.detail);
        }
        all_ok &= run.passed();
    }
    let passed = runs.iter().filter(|r| r.passed()).count();
    println!("{passed}/{} examples passed", runs.len());
    all_ok
}
