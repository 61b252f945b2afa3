use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use shuffle_vr::diagnostics::{rho_ratio, TraceRecord};
use shuffle_vr::problems::io::{load_instance, save_instance};
use shuffle_vr::reference::{brute_force_best_order, solve_reference, zstar_table, DEFAULT_TOL, MAX_BRUTE_FORCE_N};
use shuffle_vr::sampling::{optimal_cyclic_order, ImportanceVector};
use shuffle_vr::verify::{run_suite, Fault, Suite, Verdict, VerifyOptions};
use shuffle_vr::{Regularizer, Vector, ZTable};

use crate::config::{check_theta, ExperimentConfig, ProblemSource, ProblemSpec, StepSpec};
use crate::experiment::{resolve_alpha, run_all, Cell, Prepared};
use crate::trace::{mean_trace, to_csv, write_atomic};

#[derive(Debug, Parser)]
#[command(name = "shuffle-vr", version, about = "Damped proximal Finito under shuffled and cyclic sampling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a problem instance as JSON.
    Generate(GenerateArgs),
    /// Run an experiment config; one trace CSV per seed plus their mean.
    Run(RunArgs),
    /// Run a grid of cells and summarize their final records.
    Sweep(RunArgs),
    /// Run verification suites; exit status 1 if any check fails.
    Verify(VerifyArgs),
    /// Print the importance-optimal cyclic order of an instance.
    Order(OrderArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Format {
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GenKind {
    LeastSquares,
    Heterogeneous,
    Logistic,
    Libsvm,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Problem spec JSON (the `problem` object of an experiment config).
    #[arg(long, conflicts_with = "kind")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "config")]
    pub kind: Option<GenKind>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Rows per least-squares component (default d).
    #[arg(long)]
    pub k: Option<usize>,
    /// Smoothness constant L.
    #[arg(long = "l-smooth", default_value_t = 1.0)]
    pub l_smooth: f64,
    #[arg(long, default_value_t = 0.0)]
    pub mu: f64,
    /// Step size the heterogeneous profile is planted for.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub shift: f64,
    /// Ridge weight for logistic instances.
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    /// LIBSVM input file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `none`, `l1:W` or `l2sq:W`.
    #[arg(long)]
    pub regularizer: Option<String>,
    /// Instance JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's seeds; repeatable.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// `all`, `operators`, `envelopes`, `experiments` or one suite name.
    #[arg(long, default_value = "all")]
    pub suite: String,
    /// Repeatable; each seed runs the selected suites once.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    /// Run the non-expansiveness suite at `alpha = S / L` instead (fault probe).
    #[arg(long = "inject-step-scale", value_name = "S")]
    pub inject_step_scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OrderArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Step size, or `theory` for 2/(L+mu).
    #[arg(long, default_value = "theory")]
    pub alpha: String,
    /// Initial table as JSON rows (default zeros).
    #[arg(long)]
    pub z0: Option<PathBuf>,
}

#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    ChecksFailed,
}

pub fn dispatch(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Generate(a) => generate(&a),
        Command::Run(a) => run(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Verify(a) => verify(&a),
        Command::Order(a) => order(&a),
    }
}

fn parse_regularizer(s: &str) -> Result<Regularizer> {
    let r = match s.split_once(':') {
        None if s == "none" => Regularizer::None,
        Some(("l1", w)) => Regularizer::L1(w.parse().with_context(|| format!("bad weight {w:?}"))?),
        Some(("l2sq", w)) => Regularizer::L2Sq(w.parse().with_context(|| format!("bad weight {w:?}"))?),
        _ => bail!("regularizer must be none, l1:W or l2sq:W, got {s:?}"),
    };
    r.validate()?;
    Ok(r)
}

fn problem_from_flags(a: &GenerateArgs) -> Result<ProblemSpec> {
    let need = |v: Option<usize>, name: &str| v.with_context(|| format!("--{name} is required"));
    let source = match a.kind.context("--kind or --config is required")? {
        GenKind::LeastSquares => ProblemSource::LeastSquares {
            seed: a.seed,
            n: need(a.n, "n")?,
            d: need(a.d, "d")?,
            k: a.k,
            l: a.l_smooth,
            mu: a.mu,
        },
        GenKind::Heterogeneous => ProblemSource::Heterogeneous {
            seed: a.seed,
            n: need(a.n, "n")?,
            d: need(a.d, "d")?,
            k: a.k,
            l: a.l_smooth,
            mu: a.mu,
            alpha: a.alpha.context("--alpha is required")?,
            beta: a.beta.context("--beta is required")?,
        },
        GenKind::Logistic => ProblemSource::Logistic {
            seed: a.seed,
            n: need(a.n, "n")?,
            d: need(a.d, "d")?,
            shift: a.shift,
            lambda: a.lambda,
        },
        GenKind::Libsvm => {
            ProblemSource::Libsvm { path: a.input.clone().context("--input is required")?, lambda: a.lambda }
        }
    };
    let regularizer = a.regularizer.as_deref().map(parse_regularizer).transpose()?;
    Ok(ProblemSpec { source, regularizer })
}

fn generate(a: &GenerateArgs) -> Result<Outcome> {
    let (spec, base) = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let spec: ProblemSpec = serde_json::from_str(&text).context("parsing problem spec")?;
            (spec, path.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (problem_from_flags(a)?, PathBuf::new()),
    };
    let loaded = spec.load(&base)?;
    let p = &loaded.instance;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        if !dir.is_dir() {
            bail!("output directory {} does not exist", dir.display());
        }
    }
    save_instance(&a.out, p, loaded.certificate.as_ref()).with_context(|| format!("writing {}", a.out.display()))?;

    let mut s = String::new();
    writeln!(s, "wrote\t{}", a.out.display())?;
    writeln!(s, "n\t{}", p.n())?;
    writeln!(s, "d\t{}", p.d())?;
    writeln!(s, "L\t{}", p.l_smooth())?;
    writeln!(s, "mu\t{}", p.mu())?;
    if p.mu() > 0.0 {
        writeln!(s, "kappa\t{}", p.l_smooth() / p.mu())?;
    } else {
        writeln!(s, "kappa\tinf")?;
    }
    if let Some(cert) = &loaded.certificate {
        let z0 = ZTable::zeros(p.n(), p.d());
        let zstar = cert.planted_zstar(&z0)?;
        let order = optimal_cyclic_order(&ImportanceVector::from_tables(&z0, &zstar)?)?;
        writeln!(s, "rho\t{}", rho_ratio(&z0, &zstar, &order)?)?;
        writeln!(s, "rho_target\t{}", cert.rho_target())?;
    }
    print!("{s}");
    Ok(Outcome::Success)
}

fn load_run_config(a: &RunArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if !a.seeds.is_empty() {
        cfg.seeds = a.seeds.clone();
    }
    let out = a.out.clone().or_else(|| cfg.output.clone()).context("no output directory: pass --out or set \"output\"")?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok((cfg, out))
}

fn final_metric(r: &TraceRecord) -> f64 {
    r.dist_sq_to_opt.unwrap_or(r.grad_map_residual_sq)
}

fn run(a: &RunArgs) -> Result<Outcome> {
    let (cfg, out) = load_run_config(a)?;
    let prep = Prepared::new(&cfg)?;
    let cell = Cell::from_config(&cfg, &prep.p)?;
    let traces = run_all(&prep, std::slice::from_ref(&cell), &cfg.seeds)?.remove(0);
    for (seed, t) in cfg.seeds.iter().zip(&traces) {
        write_atomic(&out.join(format!("trace_seed{seed}.csv")), &to_csv(t)?)?;
    }
    let mean = mean_trace(&traces)?;
    write_atomic(&out.join("trace_mean.csv"), &to_csv(&mean)?)?;
    let last = mean.last().expect("initial record");
    println!("algorithm\t{}", cfg.algorithm);
    println!("sampling\t{}", cfg.sampling);
    println!("alpha\t{}", cell.alpha);
    println!("seeds\t{}", cfg.seeds.len());
    println!("final_epoch\t{}", last.epoch);
    println!("final_grad_map_residual_sq\t{:e}", last.grad_map_residual_sq);
    if let Some(d) = last.dist_sq_to_opt {
        println!("final_dist_sq_to_opt\t{d:e}");
    }
    println!("wrote\t{}", out.display());
    Ok(Outcome::Success)
}

pub const SUMMARY_COLUMNS: [&str; 9] = [
    "cell",
    "algorithm",
    "sampling",
    "alpha",
    "theta",
    "epochs",
    "final_grad_map_residual_sq",
    "final_dist_sq_to_opt",
    "best",
];

fn sweep(a: &RunArgs) -> Result<Outcome> {
    let (cfg, out) = load_run_config(a)?;
    let grid = cfg.grid.clone().context("sweep needs a \"grid\" object")?;
    let alphas = grid.alpha.clone().unwrap_or_else(|| vec![cfg.alpha.clone()]);
    let thetas = grid.theta.clone().unwrap_or_else(|| vec![cfg.theta]);
    let samplings = grid.sampling.clone().unwrap_or_else(|| vec![cfg.sampling.clone()]);
    if alphas.is_empty() || thetas.is_empty() || samplings.is_empty() {
        bail!("empty grid");
    }
    let prep = Prepared::new(&cfg)?;
    let mut cells = Vec::new();
    for sampling in &samplings {
        for step in &alphas {
            for &theta in &thetas {
                check_theta(theta)?;
                cells.push(Cell {
                    algorithm: cfg.algorithm,
                    sampling: sampling.clone(),
                    alpha: resolve_alpha(cfg.algorithm, sampling, step, &prep.p)?,
                    theta,
                    gamma: cfg.gamma,
                    epochs: cfg.epochs,
                    trace_every: cfg.trace_every,
                    schedule: cfg.schedule,
                });
            }
        }
    }
    let results = run_all(&prep, &cells, &cfg.seeds)?;
    let finals: Vec<TraceRecord> = results
        .iter()
        .map(|traces| Ok(mean_trace(traces)?.pop().expect("initial record")))
        .collect::<Result<_>>()?;
    let best = finals
        .iter()
        .enumerate()
        .filter(|(_, r)| final_metric(r).is_finite())
        .min_by(|(_, x), (_, y)| final_metric(x).total_cmp(&final_metric(y)))
        .map(|(i, _)| i);

    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(SUMMARY_COLUMNS)?;
    for (i, (cell, last)) in cells.iter().zip(&finals).enumerate() {
        w.write_record([
            i.to_string(),
            cell.algorithm.to_string(),
            cell.sampling.to_string(),
            format!("{:e}", cell.alpha),
            format!("{}", cell.theta),
            last.epoch.to_string(),
            format!("{:e}", last.grad_map_residual_sq),
            last.dist_sq_to_opt.map(|d| format!("{d:e}")).unwrap_or_default(),
            u8::from(best == Some(i)).to_string(),
        ])?;
    }
    let bytes = w.into_inner().context("flushing csv")?;
    write_atomic(&out.join("summary.csv"), &bytes)?;
    print!("{}", String::from_utf8_lossy(&bytes));

    if let Some(b) = best {
        let theory = resolve_alpha(cfg.algorithm, &cells[b].sampling, &StepSpec::Token("theory".into()), &prep.p);
        if let Ok(t) = theory {
            println!("# best alpha {:e} = {:.3} x theoretical {:e}", cells[b].alpha, cells[b].alpha / t, t);
        }
    }
    Ok(Outcome::Success)
}

fn verify(a: &VerifyArgs) -> Result<Outcome> {
    let suites = Suite::select(&a.suite)?;
    let fault = match a.inject_step_scale {
        Some(s) if !(s.is_finite() && s > 0.0) => bail!("--inject-step-scale must be > 0, got {s}"),
        Some(s) => Some(Fault::StepScale(s)),
        None => None,
    };
    let seeds = if a.seeds.is_empty() { vec![VerifyOptions::default().seed] } else { a.seeds.clone() };
    let mut failed = 0usize;
    let mut total = 0usize;
    println!("name\ttolerance\tobserved\tverdict");
    for &seed in &seeds {
        let opts = VerifyOptions { seed, fault };
        for &suite in &suites {
            for check in run_suite(suite, &opts).with_context(|| format!("suite {suite}"))? {
                total += 1;
                if check.verdict == Verdict::Fail {
                    failed += 1;
                }
                println!("{}", check.report_line());
            }
        }
    }
    eprintln!("{} checks, {failed} failed", total);
    Ok(if failed == 0 { Outcome::Success } else { Outcome::ChecksFailed })
}

fn load_z0(path: &Path, n: usize, d: usize) -> Result<ZTable> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rows: Vec<Vec<f64>> = serde_json::from_str(&text).context("z0 must be a JSON array of rows")?;
    if rows.len() != n || rows.iter().any(|r| r.len() != d) {
        bail!("z0 must have {n} rows of {d} entries");
    }
    let blocks: Vec<Vector> = rows.into_iter().map(Vector::from_vec).collect();
    Ok(ZTable::from_blocks(&blocks)?)
}

fn join_one_based(order: &[usize]) -> String {
    order.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(" ")
}

fn order(a: &OrderArgs) -> Result<Outcome> {
    let (p, _) = load_instance(&a.instance).with_context(|| format!("loading {}", a.instance.display()))?;
    let alpha = match a.alpha.as_str() {
        "theory" => 2.0 / (p.l_smooth() + p.mu()),
        v => {
            let alpha: f64 = v.parse().with_context(|| format!("bad --alpha {v:?}"))?;
            StepSpec::Value(alpha).validate()?;
            alpha
        }
    };
    let z0 = match &a.z0 {
        Some(path) => load_z0(path, p.n(), p.d())?,
        None => ZTable::zeros(p.n(), p.d()),
    };
    let xstar = solve_reference(&p, DEFAULT_TOL).context("computing the reference minimizer")?;
    let zstar = zstar_table(&p, &xstar, alpha)?;
    let scores = ImportanceVector::from_tables(&z0, &zstar)?;
    let best = optimal_cyclic_order(&scores)?;
    let top = scores.as_slice().iter().copied().fold(0.0, f64::max);
    let low = scores.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    if top - low <= 1e-12 * top.max(1e-300) || top <= 1e-24 {
        eprintln!("warning: importance scores are tied; the order falls back to index order");
    }
    println!("n\t{}", p.n());
    println!("alpha\t{alpha}");
    println!("pi_star\t{}", join_one_based(best.as_slice()));
    println!("worst\t{}", join_one_based(best.reversed().as_slice()));
    if top > 0.0 {
        println!("rho\t{}", rho_ratio(&z0, &zstar, &best)?);
    } else {
        println!("rho\t");
    }
    println!("one_over_n\t{}", 1.0 / p.n() as f64);
    if p.n() <= MAX_BRUTE_FORCE_N {
        let (bf, _) = brute_force_best_order(&scores)?;
        let wsum = |o: &[usize]| -> f64 {
            let n = o.len() as f64;
            o.iter().enumerate().map(|(k, &j)| (k + 1) as f64 / n * scores.as_slice()[j]).sum()
        };
        let agree = (wsum(bf.as_slice()) - wsum(best.as_slice())).abs() <= 1e-12 * (1.0 + wsum(bf.as_slice()));
        println!("brute_force\t{}\t{}", join_one_based(bf.as_slice()), if agree { "agree" } else { "DISAGREE" });
        if !agree {
            return Ok(Outcome::ChecksFailed);
        }
    }
    Ok(Outcome::Success)
}
