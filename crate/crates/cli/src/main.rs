use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hopr::approx::{top_k, SparseUniformApprox};
use hopr::error::HoprError;
use hopr::exec::Exec;
use hopr::io::{
    build_slice_set, gen_aux_matrix, gen_synthetic, load_result, load_slice_set, load_triples, save_result,
    save_slice_set, ResultMeta,
};
use hopr::multilinear::{ml_fixed_point, permute_to_flattened, rank_one_lift};
use hopr::operators::{power_method, HoprProblem, IterControl, IterationReport};
use hopr::sparse_pm::{rho_experiment, rho_table, spm, spm_partial, RhoScaling};
use hopr::truncated::{ding_approximation, tpm_ding, tpm_partial, tpm_variant, AuxMatrix, PartialUpdate};

const EXIT_INVALID_CONFIG: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "hopr", version, about = "Sparse solvers for second-order PageRank")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random slice set.
    Generate(GenerateArgs),
    /// Build a slice set from a link triples file.
    Ingest(IngestArgs),
    /// Run a solver on a slice set and write the result.
    Solve(SolveArgs),
    /// Print the top-k pages of a result by PV.
    Rank(RankArgs),
    /// Relative l1 error of a result against a reference result.
    Compare(CompareArgs),
    /// Contraction ratio experiment for the thresholding operator.
    Rho(RhoArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    /// Fraction of nonzero entries among the n^3 tensor positions.
    #[arg(long)]
    sparsity: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    triples: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Power,
    Tpm,
    TpmV,
    TpmPu,
    Spm,
    SpmPu,
    MlFp,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Power => "power",
            Method::Tpm => "tpm",
            Method::TpmV => "tpm-v",
            Method::TpmPu => "tpm-pu",
            Method::Spm => "spm",
            Method::SpmPu => "spm-pu",
            Method::MlFp => "ml-fp",
        }
    }

    fn uses_beta(self) -> bool {
        !matches!(self, Method::Power | Method::MlFp)
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Slice-set file.
    #[arg(long)]
    slices: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    /// Result file to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.85)]
    alpha: f64,
    /// Penalty, a number or one of 1/n^2, 1/n^3, 1/n^4. Defaults to 1/n^3.
    #[arg(long)]
    beta: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    tau: f64,
    #[arg(long, default_value_t = 10)]
    varsigma: usize,
    /// Number of initial sweeps that update every column.
    #[arg(long, default_value_t = 1)]
    ell: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Seed for the random auxiliary matrix of `tpm`.
    #[arg(long)]
    seed: Option<u64>,
    /// Density of a random auxiliary matrix for `tpm`; the teleport matrix
    /// is used when absent.
    #[arg(long)]
    g_density: Option<f64>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Reference result; adds the relative error to the report.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Omit the residual and active-column histories.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    result: PathBuf,
    #[arg(short, long, default_value_t = 10)]
    k: usize,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    reference: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scaling {
    UnitMass,
    Raw,
}

#[derive(Args)]
struct RhoArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    /// Penalty, a number or one of 1/n^2, 1/n^3, 1/n^4.
    #[arg(long, default_value = "1/n^2")]
    beta: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Scaling::UnitMass)]
    scaling: Scaling,
    /// Table file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            let config = err.chain().any(|e| matches!(e.downcast_ref::<HoprError>(), Some(HoprError::InvalidConfig(_))));
            ExitCode::from(if config { EXIT_INVALID_CONFIG } else { 1 })
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Ingest(a) => ingest(a),
        Command::Solve(a) => solve(a),
        Command::Rank(a) => rank(a),
        Command::Compare(a) => compare(a),
        Command::Rho(a) => rho(a),
    }
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    HoprError::InvalidConfig(msg.into()).into()
}

/// Parses a literal penalty or the symbolic form `1/n^k`.
fn parse_beta(text: &str, n: usize) -> Result<f64> {
    let t = text.trim();
    let beta = match t.strip_prefix("1/n^") {
        Some(k) => {
            let k: i32 = k.parse().map_err(|_| config_error(format!("bad beta {text:?}")))?;
            (n as f64).powi(k).recip()
        }
        None => t.parse().map_err(|_| config_error(format!("bad beta {text:?}")))?,
    };
    if !(beta.is_finite() && beta > 0.0) {
        return Err(config_error(format!("beta must be positive, got {text:?}")));
    }
    Ok(beta)
}

/// Runs `f` sequentially for one thread, otherwise on a pool of `threads`.
fn with_threads<T: Send>(threads: usize, f: impl FnOnce(Exec) -> T + Send) -> Result<T> {
    match threads {
        0 => Err(config_error("threads must be at least 1")),
        1 => Ok(f(Exec::Sequential)),
        t => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build()?;
            Ok(pool.install(|| f(Exec::Parallel)))
        }
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

fn read_context(path: &Path) -> String {
    format!("reading {}", path.display())
}

fn write_context(path: &Path) -> String {
    format!("writing {}", path.display())
}

fn generate(a: GenerateArgs) -> Result<ExitCode> {
    let slices = gen_synthetic(a.n, a.sparsity, a.seed)?;
    save_slice_set(&a.out, &slices).with_context(|| write_context(&a.out))?;
    println!("wrote {} (n {}, nnz {})", a.out.display(), slices.n(), slices.nnz());
    Ok(ExitCode::SUCCESS)
}

fn ingest(a: IngestArgs) -> Result<ExitCode> {
    let tensor = load_triples(&a.triples).with_context(|| read_context(&a.triples))?;
    let slices = with_threads(a.threads, |exec| build_slice_set(&tensor, exec))??;
    save_slice_set(&a.out, &slices).with_context(|| write_context(&a.out))?;
    println!("wrote {} (n {}, nnz {})", a.out.display(), slices.n(), slices.nnz());
    Ok(ExitCode::SUCCESS)
}

fn solve(a: SolveArgs) -> Result<ExitCode> {
    let (slices, load_time) = timed(|| load_slice_set(&a.slices));
    let slices = slices.with_context(|| read_context(&a.slices))?;
    let n = slices.n();
    let problem = HoprProblem::uniform(&slices, a.alpha)?;
    let beta = match (&a.beta, a.method.uses_beta()) {
        (Some(b), true) => Some(parse_beta(b, n)?),
        (None, true) => Some((n as f64).powi(3).recip()),
        (Some(_), false) => return Err(config_error(format!("--beta does not apply to {}", a.method.name()))),
        (None, false) => None,
    };
    let law = PartialUpdate { varsigma: a.varsigma, tau: a.tau, warmup: a.ell };
    if matches!(a.method, Method::TpmPu | Method::SpmPu) {
        law.validate(n)?;
    }
    let aux = match a.g_density {
        Some(d) if a.method == Method::Tpm => AuxMatrix::Sparse(gen_aux_matrix(n, d, a.seed.unwrap_or(0))?),
        Some(_) => return Err(config_error("--g-density only applies to tpm")),
        None => AuxMatrix::Teleport,
    };

    let (approx, report) = with_threads(a.threads, |exec| -> Result<_> {
        let ctl = IterControl { tol: a.tol, max_iter: a.max_iter, exec, ..IterControl::default() };
        let b = beta.unwrap_or_default();
        Ok(match a.method {
            Method::Power => {
                let (x, rep) = power_method(&problem, None, &ctl)?;
                (SparseUniformApprox::from_dense(&x)?, rep)
            }
            Method::Tpm => {
                let (s, rep) = tpm_ding(&problem, &aux, b, &ctl, None)?;
                (ding_approximation(&problem, &aux, &s)?, rep)
            }
            Method::TpmV => tpm_variant(&problem, b, &ctl, None)?,
            Method::TpmPu => tpm_partial(&problem, b, law, &ctl, None)?,
            Method::Spm => spm(&problem, b, &ctl, None)?,
            Method::SpmPu => spm_partial(&problem, b, law, &ctl, None)?,
            Method::MlFp => {
                let flat = permute_to_flattened(&slices);
                let (x, rep) = ml_fixed_point(&flat, None, a.alpha, &ctl, None)?;
                (SparseUniformApprox::from_dense(&rank_one_lift(&x))?, rep)
            }
        })
    })??;

    let meta = ResultMeta {
        method: a.method.name().to_string(),
        alpha: a.alpha,
        beta,
        iterations: report.iterations,
        converged: report.converged,
        residual: report.final_residual(),
        wall_time_s: report.wall_time,
        seed: a.seed,
    };
    let (saved, save_time) = timed(|| save_result(&a.out, &approx, &meta));
    saved.with_context(|| write_context(&a.out))?;
    let error = match &a.reference {
        Some(path) => {
            let (reference, _) = load_result(path).with_context(|| read_context(path))?;
            Some(approx.relative_error(&reference)?)
        }
        None => None,
    };
    print_report(&a, n, &meta, &report, error, load_time, save_time);
    if report.converged {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("warning: no convergence after {} iterations; result written", report.iterations);
        Ok(ExitCode::from(EXIT_NOT_CONVERGED))
    }
}

/// Shortest round-trip text for `v`, in exponent form outside `[1e-3, 1e6)`.
fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-3..1e6).contains(&a) || !v.is_finite() {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), num)
}

fn print_report(
    a: &SolveArgs,
    n: usize,
    meta: &ResultMeta,
    report: &IterationReport,
    error: Option<f64>,
    load_time: f64,
    save_time: f64,
) {
    println!("method       {}", meta.method);
    println!("n            {n}");
    println!("alpha        {}", num(meta.alpha));
    println!("beta         {}", opt(meta.beta));
    println!("iterations   {}", report.iterations);
    println!("converged    {}", report.converged);
    println!("residual     {}", opt(report.final_residual()));
    println!("sparsity     {}", opt(report.final_sparsity));
    println!("solve_time_s {}", num(report.wall_time));
    println!("load_time_s  {}", num(load_time));
    println!("save_time_s  {}", num(save_time));
    println!("result       {}", a.out.display());
    println!();
    println!("{:<8} {:>6} {:>12} {:>12} {:>12}", "method", "iter", "cpu_s", "error", "sparsity");
    println!(
        "{:<8} {:>6} {:>12.4e} {:>12} {:>12}",
        meta.method,
        report.iterations,
        report.wall_time,
        error.map_or_else(|| "-".to_string(), |e| format!("{e:.4e}")),
        report.final_sparsity.map_or_else(|| "-".to_string(), |s| format!("{s:.4e}")),
    );
    for note in &report.notes {
        println!("note: {note}");
    }
    if a.quiet {
        return;
    }
    println!();
    println!("residual history");
    for (q, r) in report.residual_history.iter().enumerate() {
        println!("{} {}", q + 1, num(*r));
    }
    if !report.active_columns_history.is_empty() {
        println!("active columns");
        for (q, c) in report.active_columns_history.iter().enumerate() {
            println!("{} {}", q + 1, c);
        }
    }
}

fn rank(a: RankArgs) -> Result<ExitCode> {
    let (approx, _) = load_result(&a.result).with_context(|| read_context(&a.result))?;
    let n = approx.n();
    let k = if a.k > n {
        eprintln!("warning: k = {} exceeds n = {n}; showing {n}", a.k);
        n
    } else {
        a.k
    };
    let pv = approx.pagerank_values();
    for (r, j) in top_k(&pv, k).into_iter().enumerate() {
        println!("{} {} {}", r + 1, j + 1, num(pv[j]));
    }
    Ok(ExitCode::SUCCESS)
}

fn compare(a: CompareArgs) -> Result<ExitCode> {
    let (x, _) = load_result(&a.result).with_context(|| read_context(&a.result))?;
    let (reference, _) = load_result(&a.reference).with_context(|| read_context(&a.reference))?;
    println!("{}", num(x.relative_error(&reference)?));
    Ok(ExitCode::SUCCESS)
}

fn rho(a: RhoArgs) -> Result<ExitCode> {
    let beta = parse_beta(&a.beta, a.n)?;
    let scaling = match a.scaling {
        Scaling::UnitMass => RhoScaling::UnitMass,
        Scaling::Raw => RhoScaling::Raw,
    };
    let rhos = with_threads(a.threads, |exec| rho_experiment(a.n, a.trials, beta, a.seed, scaling, exec))??;
    let table = rho_table(&rhos);
    match &a.out {
        Some(path) => std::fs::write(path, table).with_context(|| write_context(path))?,
        None => print!("{table}"),
    }
    let max = rhos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    eprintln!("max rho {max} over {} trials", rhos.len());
    if max > 1.0 {
        bail!("max rho {max} exceeds 1");
    }
    Ok(ExitCode::SUCCESS)
}
