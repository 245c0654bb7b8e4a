use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use manifold_pde::geometry::{knn, sample_ellipse, sample_torus};
use manifold_pde::operators::global_operators;
use manifold_pde::rbf::InverseMethod;
use manifold_pde::spectra::{eigensolve_srbf, eigensolve_vbdm, vbdm_build, VbdmParams, DEFAULT_TAU_EIG};
use manifold_pde::tangent::{estimate_tangent_first_order, estimate_tangent_second_order};
use manifold_pde::Kernel;
use manifold_pde_harness::experiment::{
    build_instance, make_problem, mean_by_modes, run_method, trial_seed,
};
use manifold_pde_harness::metrics::fit_slope;
use manifold_pde_harness::report::{fmt_float, write_convergence_csv, write_modes_csv, write_summary};
use manifold_pde_harness::{error_vs_modes, run_convergence, ExperimentConfig, FdKernel, ManifoldSpec, Method};

#[derive(Parser)]
#[command(name = "manifold-pde", version, about = "Elliptic PDE solvers on point clouds")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Error against N for each method, averaged over trials.
    Convergence(ExperimentArgs),
    /// Error against the number of Galerkin modes.
    Modes {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Comma-separated list of K values.
        #[arg(long, value_delimiter = ',', default_value = "6,12,18,24,30,36,42,48,54,60")]
        k_list: Vec<usize>,
    },
    /// One solve; writes point, u_true, u_est and abs error.
    Solve {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value = "spectral_rbf")]
        method: Method,
        /// Number of points (ignored for clouds from disk).
        #[arg(long, default_value_t = 1600)]
        n: usize,
    },
    /// Leading eigenvalues of the SRBF or VBDM Laplacian.
    Eigs {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// `srbf` or `vbdm`.
        #[arg(long, default_value = "srbf")]
        source: String,
        #[arg(long, default_value_t = 1600)]
        n: usize,
    },
    /// Tangent projection error of the first- and second-order estimators.
    TangentCheck {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    /// key=value file; each key is a long flag name.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Starting point: paper-ellipse or paper-torus.
    #[arg(long, default_value = "paper-ellipse")]
    preset: String,
    /// ellipse, torus or file.
    #[arg(long)]
    manifold: Option<String>,
    /// Ellipse semi-axis along y.
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    major: Option<f64>,
    #[arg(long)]
    minor: Option<f64>,
    /// Point cloud file (implies --manifold file).
    #[arg(long)]
    cloud: Option<PathBuf>,
    /// Intrinsic dimension of the cloud file.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    /// Galerkin modes K, the constant mode included.
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    eig_shape: Option<f64>,
    #[arg(long)]
    op_shape: Option<f64>,
    /// phs or matern.
    #[arg(long)]
    fd_kernel: Option<String>,
    #[arg(long)]
    fd_shape: Option<f64>,
    #[arg(long)]
    fd_stencil: Option<usize>,
    #[arg(long)]
    tangent_k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    vbdm_k1: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    vbdm_k2: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    pinv_tau: Option<f64>,
    /// Solve the eigenproblem on every trial instead of transferring.
    #[arg(long)]
    eigs_per_trial: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

impl ExperimentArgs {
    fn to_config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::preset(&self.preset)
            .ok_or_else(|| anyhow!("unknown preset `{}`", self.preset))?;
        let kind = match (&self.manifold, &self.cloud) {
            (Some(m), _) => m.clone(),
            (None, Some(_)) => "file".into(),
            (None, None) => String::new(),
        };
        match kind.as_str() {
            "" => {}
            "ellipse" => cfg.manifold = ManifoldSpec::Ellipse { a: 2.0 },
            "torus" => cfg.manifold = ManifoldSpec::Torus { major: 2.0, minor: 1.0 },
            "file" => {
                let path = self.cloud.clone().ok_or_else(|| anyhow!("--manifold file needs --cloud"))?;
                let dim = self.dim.ok_or_else(|| anyhow!("--cloud needs --dim"))?;
                cfg.manifold = ManifoldSpec::File { path, dim };
            }
            other => bail!("unknown manifold `{other}`"),
        }
        match &mut cfg.manifold {
            ManifoldSpec::Ellipse { a } => *a = self.a.unwrap_or(*a),
            ManifoldSpec::Torus { major, minor } => {
                *major = self.major.unwrap_or(*major);
                *minor = self.minor.unwrap_or(*minor);
            }
            ManifoldSpec::File { .. } => {}
        }
        if let Some(m) = &self.methods {
            cfg.methods = Vec::new();
            for method in m {
                if !cfg.methods.contains(method) {
                    cfg.methods.push(*method);
                }
            }
        }
        if let Some(n) = &self.n_list {
            // preset VBDM tables follow the preset N list; take the nearest row
            let remap = |table: &[usize]| -> Vec<usize> {
                if table.len() != cfg.n_list.len() {
                    return table.to_vec();
                }
                n.iter()
                    .map(|&target| {
                        let dist = |m: usize| ((m as f64).ln() - (target as f64).ln()).abs();
                        let (i, _) = cfg
                            .n_list
                            .iter()
                            .enumerate()
                            .min_by(|a, b| dist(*a.1).total_cmp(&dist(*b.1)))
                            .expect("preset N list is non-empty");
                        table[i]
                    })
                    .collect()
            };
            cfg.vbdm_k1 = remap(&cfg.vbdm_k1);
            cfg.vbdm_k2 = remap(&cfg.vbdm_k2);
            cfg.n_list = n.clone();
        }
        cfg.trials = self.trials.unwrap_or(cfg.trials);
        cfg.modes = self.modes.unwrap_or(cfg.modes);
        cfg.eig_shape = self.eig_shape.unwrap_or(cfg.eig_shape);
        cfg.op_shape = self.op_shape.unwrap_or(cfg.op_shape);
        match self.fd_kernel.as_deref() {
            None => {}
            Some("phs") => cfg.fd_kernel = FdKernel::Polyharmonic,
            Some("matern") => cfg.fd_kernel = FdKernel::Matern { shape: self.fd_shape.unwrap_or(2.5) },
            Some(other) => bail!("unknown FD kernel `{other}`"),
        }
        cfg.fd_stencil = self.fd_stencil.or(cfg.fd_stencil);
        cfg.tangent_k = self.tangent_k.or(cfg.tangent_k);
        if let Some(v) = &self.vbdm_k1 {
            cfg.vbdm_k1 = v.clone();
        }
        if let Some(v) = &self.vbdm_k2 {
            cfg.vbdm_k2 = v.clone();
        }
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.pinv_tau = self.pinv_tau.unwrap_or(cfg.pinv_tau);
        cfg.eigs_per_trial |= self.eigs_per_trial;
        cfg.output = self.output.clone();
        cfg.validate().map_err(|e| anyhow!(e))?;
        Ok(cfg)
    }
}

/// Splices `key=value` lines from `--config FILE` in front of the explicit
/// flags, so flags on the command line win.
fn expand_config(args: Vec<String>) -> anyhow::Result<Vec<String>> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let (path, span) = match args[pos].strip_prefix("--config=") {
        Some(p) => (p.to_string(), 1),
        None => (
            args.get(pos + 1).cloned().ok_or_else(|| anyhow!("--config needs a file"))?,
            2,
        ),
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let mut spliced = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{path}:{}: expected key=value", lineno + 1))?;
        let (key, value) = (key.trim().replace('_', "-"), value.trim());
        if key == "config" {
            bail!("{path}:{}: nested config files are not supported", lineno + 1);
        }
        match value {
            "true" => spliced.push(format!("--{key}")),
            "false" => {}
            v => {
                spliced.push(format!("--{key}"));
                spliced.push(v.to_string());
            }
        }
    }
    // explicit flags win; multi-valued flags would otherwise append
    let explicit: Vec<&str> = args
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a))
        .collect();
    let mut kept = Vec::new();
    let mut i = 0;
    while i < spliced.len() {
        let key = &spliced[i][2..];
        let has_value = spliced.get(i + 1).is_some_and(|v| !v.starts_with("--"));
        let step = if has_value { 2 } else { 1 };
        if !explicit.contains(&key) {
            kept.extend_from_slice(&spliced[i..i + step]);
        }
        i += step;
    }
    let mut out = args[..pos].to_vec();
    out.extend(kept);
    out.extend_from_slice(&args[pos + span..]);
    Ok(out)
}

fn open_output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

enum Outcome {
    Success,
    FailedCells,
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Convergence(exp) => {
            let cfg = exp.to_config()?;
            let report = run_convergence(&cfg).map_err(|e| anyhow!(e))?;
            write_convergence_csv(&mut open_output(cfg.output.as_deref())?, &report)?;
            write_summary(&mut io::stderr(), &report)?;
            Ok(if report.failed_cells() > 0 { Outcome::FailedCells } else { Outcome::Success })
        }
        Command::Modes { exp, k_list } => {
            let mut cfg = exp.to_config()?;
            if exp.methods.is_none() {
                cfg.methods = vec![Method::SpectralRbf];
            }
            let rows = error_vs_modes(&cfg, &k_list).map_err(|e| anyhow!(e))?;
            write_modes_csv(&mut open_output(cfg.output.as_deref())?, &rows)?;
            for ((m, n, k), e) in mean_by_modes(&rows) {
                eprintln!("{m:<16} N={n:<6} K={k:<4} mean={e:.4e}");
            }
            let failed = rows.iter().any(|r| r.status != manifold_pde_harness::experiment::CellStatus::Ok);
            Ok(if failed { Outcome::FailedCells } else { Outcome::Success })
        }
        Command::Solve { exp, method, n } => {
            let mut cfg = exp.to_config()?;
            cfg.methods = vec![method];
            cfg.n_list = vec![n];
            let problem = make_problem(&cfg.manifold, n, trial_seed(cfg.seed, n, 1))?;
            let (built, _) = build_instance(&cfg, 0, problem, None);
            let out = run_method(&built, method).map_err(|e| anyhow!("{method} failed: {e}"))?;
            let mut w = open_output(cfg.output.as_deref())?;
            let amb = built.problem.cloud.ambient_dim();
            let coords: Vec<String> = (0..amb).map(|m| format!("x{m}")).collect();
            writeln!(w, "point,{},u_true,u_est,abs_error", coords.join(","))?;
            for i in 0..built.problem.cloud.len() {
                let p = built.problem.cloud.point(i);
                let xs: Vec<String> = p.iter().map(|v| fmt_float(*v)).collect();
                let (t, e) = match &built.problem.truth {
                    Some(t) => (fmt_float(t[i]), fmt_float((t[i] - out.values[i]).abs())),
                    None => (String::new(), String::new()),
                };
                writeln!(w, "{i},{},{t},{},{e}", xs.join(","), fmt_float(out.values[i]))?;
            }
            if let Some(t) = &built.problem.truth {
                let err = t.iter().zip(&out.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                eprintln!("{method} N={} linf error {err:.4e}", built.problem.cloud.len());
            }
            Ok(Outcome::Success)
        }
        Command::Eigs { exp, source, n } => {
            let cfg = exp.to_config()?;
            let problem = make_problem(&cfg.manifold, n, trial_seed(cfg.seed, n, 1))?;
            let cloud = &problem.cloud;
            let d = cloud.intrinsic_dim();
            let basis = match source.as_str() {
                "srbf" => {
                    let k = cfg.tangent_k.unwrap_or_else(|| manifold_pde::geometry::default_tangent_neighbors(cloud.len()));
                    let proj = estimate_tangent_second_order(cloud, &knn(cloud, k, false)?, d)?;
                    let kernel = Kernel::inverse_quadratic(cfg.eig_shape);
                    let (ops, inv) = global_operators(cloud, &kernel, InverseMethod::Pinv { tau: cfg.pinv_tau }, &proj)?;
                    let rank = inv.effective_rank().unwrap_or(cloud.len());
                    eigensolve_srbf(&ops.laplacian_symmetric(), cfg.modes.min(rank - 1), rank, DEFAULT_TAU_EIG)?
                }
                "vbdm" => {
                    let (k1, k2) = cfg.vbdm_neighbors(0);
                    let vb = vbdm_build(cloud, VbdmParams { k1, k2, intrinsic_dim: d })?;
                    eigensolve_vbdm(&vb, cfg.modes.min(cloud.len() - 1))?
                }
                other => bail!("unknown eigen source `{other}`"),
            };
            let mut w = open_output(cfg.output.as_deref())?;
            writeln!(w, "index,eigenvalue")?;
            for (i, v) in basis.eigenvalues.iter().enumerate() {
                writeln!(w, "{i},{}", fmt_float(*v))?;
            }
            Ok(Outcome::Success)
        }
        Command::TangentCheck { exp } => {
            let cfg = exp.to_config()?;
            let mut w = open_output(cfg.output.as_deref())?;
            writeln!(w, "N,k,first_order_max,second_order_max,fallbacks")?;
            let (mut ns, mut e1s, mut e2s) = (Vec::new(), Vec::new(), Vec::new());
            for &n in &cfg.n_list {
                let seed = trial_seed(cfg.seed, n, 1);
                let sample = match &cfg.manifold {
                    ManifoldSpec::Ellipse { a } => sample_ellipse(n, *a, seed)?,
                    ManifoldSpec::Torus { major, minor } => sample_torus(n, *major, *minor, seed)?,
                    ManifoldSpec::File { .. } => bail!("tangent-check needs an analytic manifold"),
                };
                let k = cfg.tangent_k.unwrap_or_else(|| manifold_pde::geometry::default_tangent_neighbors(n));
                let nb = knn(&sample.cloud, k, false)?;
                let d = sample.cloud.intrinsic_dim();
                let first = estimate_tangent_first_order(&sample.cloud, &nb, d)?;
                let second = estimate_tangent_second_order(&sample.cloud, &nb, d)?;
                let exact = |i: usize| sample.tangent_projection(i);
                let worst = |v: Vec<f64>| v.into_iter().fold(0.0, f64::max);
                let e1 = worst(first.errors_against(exact));
                let e2 = worst(second.errors_against(exact));
                writeln!(w, "{n},{k},{},{},{}", fmt_float(e1), fmt_float(e2), second.fallback_count())?;
                ns.push(n as f64);
                e1s.push(e1);
                e2s.push(e2);
            }
            let show = |s: Option<f64>| s.map_or("n/a".to_string(), |v| format!("{v:.3}"));
            eprintln!("first-order slope {}", show(fit_slope(&ns, &e1s)));
            eprintln!("second-order slope {}", show(fit_slope(&ns, &e2s)));
            Ok(Outcome::Success)
        }
    }
}

fn jobs_of(cli: &Cli) -> Option<usize> {
    match &cli.command {
        Command::Convergence(e) => e.jobs,
        Command::Modes { exp, .. } | Command::Solve { exp, .. } | Command::Eigs { exp, .. } => exp.jobs,
        Command::TangentCheck { exp } => exp.jobs,
    }
}

/// The system OpenBLAS mis-detects some AVX-512 parts and selects kernels
/// that return wrong results. Pin a known-good core and restart once.
#[cfg(all(unix, target_arch = "x86_64"))]
fn pin_blas_core() {
    use std::os::unix::process::CommandExt;
    if std::env::var_os("OPENBLAS_CORETYPE").is_some() || !std::arch::is_x86_feature_detected!("avx2") {
        return;
    }
    if let Ok(exe) = std::env::current_exe() {
        let err = std::process::Command::new(exe)
            .args(std::env::args_os().skip(1))
            .env("OPENBLAS_CORETYPE", "Haswell")
            .exec();
        log::warn!("could not restart with a pinned BLAS core: {err}");
    }
}

#[cfg(not(all(unix, target_arch = "x86_64")))]
fn pin_blas_core() {}

fn main() -> ExitCode {
    pin_blas_core();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(j) = jobs_of(&cli) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::FailedCells) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
