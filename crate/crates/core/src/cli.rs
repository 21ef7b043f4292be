//! Command-line front end. Every artifact starts with one `#`-prefixed JSON
//! line (command, options, parameters, seed, wall time, version); everything
//! after it is the data section and depends only on the options and seed.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::dynamics::{
    kronecker_starts, orbit_stats, records_csv, sample_records, tail_from_records, TailEstimate,
};
use crate::error::Error;
use crate::map::{
    eval_derivative, eval_map, eval_second_derivative, eval_third_derivative,
    nearest_critical_point, CriticalTarget,
};
use crate::measure::{
    clt_check, correlation, srb_density, stability, DensityConfig, Observable, ORBIT_TRANSIENT,
};
use crate::params::{fmt_real, MapParams, ParamSpec};
use crate::partition::{
    binding_period_interval, default_cap, s_threshold, PartitionState, Resolution,
    DEFAULT_BINDING_SAMPLES,
};
use crate::scan::{default_grid, parse_survivors, scan, ScanConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "circmap",
    version,
    about = "Circle maps with infinitely many critical points"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Beta1,
    Beta3,
}

#[derive(Args, Debug, Serialize)]
pub struct Global {
    /// Map parameter file (flat `key = value`); overrides --suite.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Built-in parameter suite used when no --config is given.
    #[arg(long, global = true, value_enum, default_value = "beta1")]
    pub suite: Suite,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub workers: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Parameter shift, overriding the config value.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    /// Survivors file written by `scan`; supplies `mu` unless --mu is given.
    #[arg(long, global = true)]
    pub survivors: Option<PathBuf>,
    /// Line of the survivors file to use.
    #[arg(long, global = true, default_value_t = 0)]
    pub survivor_index: usize,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Map value and derivatives at points.
    MapEval(MapEvalArgs),
    /// Refine the partition and export its atoms.
    PartitionBuild(PartitionArgs),
    /// Binding periods p(l, s).
    Binding(BindingArgs),
    /// Parameter exclusion over a grid of mu.
    Scan(ScanArgs),
    /// Finite-time Lyapunov exponents of sampled orbits.
    Lyapunov(OrbitArgs),
    /// Truncated recurrence averages of sampled orbits.
    Recurrence(OrbitArgs),
    /// First-success times and tail-set fractions.
    Tails(TailArgs),
    /// Occupation-histogram density estimate.
    Density(DensityArgs),
    /// Correlation sequence of two observables.
    Correlations(CorrelationArgs),
    /// Block-sum normality check.
    Clt(CltArgs),
    /// Density distances against nearby parameters.
    Stability(StabilityArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct MapEvalArgs {
    /// Points to evaluate, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub z: Vec<f64>,
    /// Equispaced points on [-1, 1), midpoints of `points` cells.
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct PartitionArgs {
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[arg(long)]
    pub l_res: Option<i64>,
    #[arg(long)]
    pub s_res: Option<i64>,
}

#[derive(Args, Debug, Serialize)]
pub struct BindingArgs {
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub l: Vec<i64>,
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub s: Vec<i64>,
    /// Defaults to 50 (|l| + |s|).
    #[arg(long)]
    pub cap: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_BINDING_SAMPLES)]
    pub n_samples: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct ScanArgs {
    /// Number of equispaced grid points on [eps^2, eps].
    #[arg(long, default_value_t = 1000)]
    pub grid_size: usize,
    /// Scan the mirrored grid on [-eps, -eps^2].
    #[arg(long)]
    pub negative: bool,
    #[arg(long, default_value_t = 10_000)]
    pub horizon_n: usize,
    /// Defaults to 4 (-log flat).
    #[arg(long)]
    pub m_hat: Option<f64>,
    /// Defaults to k0 + 10.
    #[arg(long)]
    pub k_test_max: Option<u32>,
    /// Count indeterminate binding checks as failures.
    #[arg(long)]
    pub strict: bool,
    /// Also write the survivors as a plain list.
    #[arg(long)]
    #[serde(skip)]
    pub survivors_out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct OrbitArgs {
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub sample_size: usize,
    /// Single start instead of the seeded sample.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct TailArgs {
    /// Defaults to 50, 100, ..., 500.
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    pub sample_size: usize,
    #[arg(long, default_value_t = 10_000)]
    pub n_max: usize,
    /// Also write per-sample records as CSV.
    #[arg(long)]
    #[serde(skip)]
    pub records: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct DensityArgs {
    #[arg(long, default_value_t = ORBIT_TRANSIENT)]
    pub n_transient: usize,
    /// Iterates per start.
    #[arg(long, default_value_t = 1_000_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 512)]
    pub bins: usize,
    #[arg(long, default_value_t = 16)]
    pub sample_size: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct CorrelationArgs {
    /// Observable: z, sin, bump:c:w or const:v.
    #[arg(long, default_value = "sin")]
    pub phi: String,
    #[arg(long, default_value = "sin")]
    pub psi: String,
    #[arg(long, default_value_t = 40)]
    pub n_lags: usize,
    #[arg(long, default_value_t = 10_000_000)]
    pub iters: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct CltArgs {
    #[arg(long, default_value = "sin")]
    pub phi: String,
    #[arg(long, default_value_t = 10_000)]
    pub block_n: usize,
    #[arg(long, default_value_t = 1000)]
    pub sample_size: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct StabilityArgs {
    /// Comparison parameters; defaults to the other entries of --survivors.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub others: Vec<f64>,
    #[arg(long, default_value_t = ORBIT_TRANSIENT)]
    pub n_transient: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 512)]
    pub bins: usize,
    #[arg(long, default_value_t = 16)]
    pub sample_size: usize,
}

/// Failure of a command, carrying its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(m: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: m.into(),
        }
    }
    fn config(m: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: m.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::InvalidParams(_) | Error::Io(_) => EXIT_CONFIG,
            Error::Precondition(_)
            | Error::EmptyGrid
            | Error::IndexOutOfRange { .. }
            | Error::InvalidIndex(_) => EXIT_USAGE,
            _ => EXIT_NUMERIC,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult<T> = std::result::Result<T, Failure>;

/// Parse `args` (program name first), run the command and return its exit
/// status. Artifacts go to `--out` or `stdout`; diagnostics to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> CmdResult<()> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(w) = cli.global.workers {
            if w == 0 {
                return Err(Failure::usage("--workers must be positive"));
            }
            b = b.num_threads(w);
        }
        b.build().map_err(|e| Failure::usage(e.to_string()))?
    };
    let start = Instant::now();
    let (params, survivors) = load_params(&cli.global)?;
    let (name, options, data) = pool.install(|| dispatch(cli, &params, &survivors))?;
    let meta = json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cli.global.seed,
        "workers": pool.current_num_threads(),
        "wall_time_s": start.elapsed().as_secs_f64(),
        "global": &cli.global,
        "options": options,
        "params": params.to_spec(),
    });
    let text = format!("# {meta}\n{data}");
    match &cli.global.out {
        Some(p) => write_file(p, &text),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Failure::config(format!("stdout: {e}"))),
    }
}

fn write_file(path: &Path, text: &str) -> CmdResult<()> {
    std::fs::write(path, text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn load_params(g: &Global) -> CmdResult<(MapParams, Vec<f64>)> {
    let base = match &g.config {
        Some(p) => MapParams::from_config_file(p)?,
        None => match g.suite {
            Suite::Beta1 => ParamSpec::reference_beta1(),
            Suite::Beta3 => ParamSpec::reference_beta3(),
        }
        .build()?,
    };
    let survivors = match &g.survivors {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::config(format!("{}: {e}", p.display())))?;
            parse_survivors(&text)?
        }
        None => Vec::new(),
    };
    let mu = match (g.mu, g.survivors.is_some()) {
        (Some(m), _) => Some(m),
        (None, true) => Some(*survivors.get(g.survivor_index).ok_or_else(|| {
            Failure::config(format!(
                "survivor index {} beyond the {} entries of the survivors file",
                g.survivor_index,
                survivors.len()
            ))
        })?),
        (None, false) => None,
    };
    let params = match mu {
        Some(m) => base.with_mu(m)?,
        None => base,
    };
    Ok((params, survivors))
}

fn options<T: Serialize>(a: &T) -> serde_json::Value {
    serde_json::to_value(a).expect("options serialize")
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("result serializes");
    s.push('\n');
    s
}

fn observable(s: &str) -> CmdResult<Observable> {
    Observable::parse(s).map_err(|e| Failure::usage(e.to_string()))
}

fn dispatch(
    cli: &Cli,
    params: &MapParams,
    survivors: &[f64],
) -> CmdResult<(&'static str, serde_json::Value, String)> {
    let seed = cli.global.seed;
    Ok(match &cli.command {
        Command::MapEval(a) => ("map-eval", options(a), map_eval(params, a)?),
        Command::PartitionBuild(a) => {
            let mut res = Resolution::default_for(params);
            if let Some(l) = a.l_res {
                res.l_res = l;
            }
            if let Some(s) = a.s_res {
                res.s_res = s;
            }
            let st = PartitionState::build(params, res, a.n)?;
            (
                "partition-build",
                json!({"n": a.n, "resolution": res}),
                st.to_csv(),
            )
        }
        Command::Binding(a) => ("binding", options(a), binding(params, a)?),
        Command::Scan(a) => {
            let mut cfg = ScanConfig::default_for(params);
            cfg.horizon_n = a.horizon_n;
            cfg.strict = a.strict;
            if let Some(m) = a.m_hat {
                cfg.m_hat = m;
            }
            if let Some(k) = a.k_test_max {
                cfg.k_test_max = k;
            }
            let grid = default_grid(params, a.grid_size, a.negative);
            let report = scan(params, &grid, &cfg)?;
            if let Some(p) = &a.survivors_out {
                let head = json!({"command": "scan", "survivor_fraction": report.survivor_fraction, "config": cfg});
                write_file(p, &format!("# {head}\n{}", report.survivors_text()))?;
            }
            let mut data = report.to_json();
            data.push('\n');
            (
                "scan",
                json!({"args": options(a), "scan_config": cfg}),
                data,
            )
        }
        Command::Lyapunov(a) => ("lyapunov", options(a), orbit_table(params, a, seed, true)?),
        Command::Recurrence(a) => (
            "recurrence",
            options(a),
            orbit_table(params, a, seed, false)?,
        ),
        Command::Tails(a) => ("tails", options(a), tails(params, a, seed)?),
        Command::Density(a) => {
            let h = srb_density(params, a.n_transient, a.iters, a.bins, a.sample_size, seed)?;
            ("density", options(a), h.to_csv())
        }
        Command::Correlations(a) => {
            let c = correlation(
                params,
                observable(&a.phi)?,
                observable(&a.psi)?,
                a.n_lags,
                a.iters,
                seed,
            )?;
            ("correlations", options(a), to_json(&c))
        }
        Command::Clt(a) => {
            let r = clt_check(params, observable(&a.phi)?, a.block_n, a.sample_size, seed)?;
            ("clt", options(a), to_json(&r))
        }
        Command::Stability(a) => {
            let base = params.mu();
            let others: Vec<f64> = if a.others.is_empty() {
                survivors.iter().copied().filter(|&m| m != base).collect()
            } else {
                a.others.clone()
            };
            if others.is_empty() {
                return Err(Failure::usage(
                    "stability needs --others or a survivors file with two or more entries",
                ));
            }
            let cfg = DensityConfig {
                n_transient: a.n_transient,
                n_iter: a.iters,
                n_bins: a.bins,
                sample_size: a.sample_size,
                seed,
            };
            let r = stability(params, base, &others, &cfg)?;
            (
                "stability",
                json!({"args": options(a), "others": others}),
                to_json(&r),
            )
        }
    })
}

fn map_eval(params: &MapParams, a: &MapEvalArgs) -> CmdResult<String> {
    let mut zs = a.z.clone();
    if let Some(n) = a.points {
        zs.extend((0..n).map(|i| -1.0 + (2.0 * i as f64 + 1.0) / n as f64));
    }
    if zs.is_empty() {
        return Err(Failure::usage("map-eval needs --z or --points"));
    }
    let mut s = String::from("z,f,df,d2f,d3f,nearest,distance\n");
    for z in zs {
        let near = nearest_critical_point(params, z);
        let target = match near.target {
            CriticalTarget::Index(k) => k.to_string(),
            CriticalTarget::Origin => "0".to_string(),
        };
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_real(z),
            fmt_real(eval_map(params, z)?),
            fmt_real(eval_derivative(params, z)?),
            fmt_real(eval_second_derivative(params, z)?),
            fmt_real(eval_third_derivative(params, z)?),
            target,
            fmt_real(near.distance)
        ));
    }
    Ok(s)
}

fn binding(params: &MapParams, a: &BindingArgs) -> CmdResult<String> {
    let st = s_threshold(params);
    let mut s = String::from("l,s,p,capped\n");
    for &l in &a.l {
        for &sv in &a.s {
            let (p, capped) = if (sv.abs() as f64) <= st {
                (0, false)
            } else {
                let cap = a.cap.unwrap_or_else(|| default_cap(l, sv));
                match binding_period_interval(params, l, sv, cap, a.n_samples) {
                    Ok(p) => (p, false),
                    Err(Error::CapReached { cap }) => (cap, true),
                    Err(e) => return Err(e.into()),
                }
            };
            s.push_str(&format!("{l},{sv},{p},{capped}\n"));
        }
    }
    Ok(s)
}

fn orbit_table(params: &MapParams, a: &OrbitArgs, seed: u64, lyapunov: bool) -> CmdResult<String> {
    if a.n == 0 {
        return Err(Failure::usage("--n must be positive"));
    }
    let starts = match a.x0 {
        Some(x) => vec![x],
        None => kronecker_starts(seed, a.sample_size),
    };
    let rows: Vec<_> = starts
        .par_iter()
        .map(|&x| orbit_stats(params, x, a.n))
        .collect();
    if rows.iter().all(|r| r.hit_singularity) {
        return Err(Error::AllOrbitsSingular.into());
    }
    let mut s = if lyapunov {
        String::from("x0,n,lyapunov\n")
    } else {
        String::from("x0,n,C_n_flat,min_dist\n")
    };
    for r in rows {
        if r.hit_singularity {
            s.push_str(&format!("{},{},singular\n", fmt_real(r.x0), r.n));
        } else if lyapunov {
            s.push_str(&format!(
                "{},{},{}\n",
                fmt_real(r.x0),
                r.n,
                fmt_real(r.log_deriv_sum / r.n as f64)
            ));
        } else {
            s.push_str(&format!(
                "{},{},{},{}\n",
                fmt_real(r.x0),
                r.n,
                fmt_real(r.trunc_dist_sum / r.n as f64),
                fmt_real(r.min_dist)
            ));
        }
    }
    Ok(s)
}

fn tails(params: &MapParams, a: &TailArgs, seed: u64) -> CmdResult<String> {
    let grid: Vec<usize> = if a.n_grid.is_empty() {
        (1..=10).map(|i| 50 * i).collect()
    } else {
        a.n_grid.clone()
    };
    if a.sample_size < 100 {
        return Err(Failure::usage("--sample-size must be at least 100"));
    }
    if grid.iter().any(|&n| n > a.n_max) {
        return Err(Failure::usage("n_grid must lie within n_max"));
    }
    let starts = kronecker_starts(seed, a.sample_size);
    let (rows, discarded) = sample_records(params, &starts, a.n_max)?;
    if rows.is_empty() {
        return Err(Error::AllOrbitsSingular.into());
    }
    if let Some(p) = &a.records {
        let head = json!({"command": "tails", "seed": seed, "n_max": a.n_max});
        write_file(p, &format!("# {head}\n{}", records_csv(&rows)))?;
    }
    let (fractions, rate, intercept, r2, zero) = tail_from_records(&rows, &grid);
    let est = TailEstimate {
        n_grid: grid,
        fractions,
        fit_rate: rate,
        fit_intercept: intercept,
        fit_r2: r2,
        zero_fraction_n: zero,
        sample_size: a.sample_size,
        discarded_count: discarded,
        n_max: a.n_max,
        seed,
    };
    Ok(to_json(&est))
}

/// Data section of an artifact: everything after the metadata line.
pub fn data_section(text: &str) -> &str {
    match text.strip_prefix('#') {
        Some(rest) => rest.find('\n').map_or("", |i| &rest[i + 1..]),
        None => text,
    }
}
