//! Sweeps over N and trials.
//!
//! Every `(N, trial)` pair is one instance: a fresh seeded sample, the shared
//! pieces the selected methods need (tangents, global or stencil operators,
//! eigenbases), then one cell per method. A failing piece only fails the
//! cells that depend on it.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use manifold_pde::geometry::{
    default_tangent_neighbors, knn, load_point_cloud, sample_ellipse, sample_torus, PointCloud,
};
use manifold_pde::operators::{default_stencil_size, global_operators, rbf_fd_operator, DiffOps};
use manifold_pde::rbf::{default_ridge, InverseMethod, RegularizedInverse};
use manifold_pde::solvers::{
    galerkin_offline, galerkin_online, solve_direct_rbf, solve_direct_rbf_fd, solve_vbdm_direct,
    OfflineTensors,
};
use manifold_pde::spectra::{
    eigensolve_srbf, eigensolve_vbdm, transfer_basis, vbdm_build, EigenBasis, VbdmOperator,
    VbdmParams, DEFAULT_TAU_EIG,
};
use manifold_pde::tangent::{estimate_tangent_second_order, ProjectionField};
use manifold_pde::{Kernel, Real};
use ndarray::Array1;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ManifoldSpec, Method};
use crate::metrics::{fit_slope, linf_error, relative_difference};

/// A cloud with the PDE data on it. `truth` is absent for clouds from disk.
#[derive(Debug, Clone)]
pub struct Problem {
    pub cloud: PointCloud,
    pub truth: Option<Array1<Real>>,
    pub kappa: Array1<Real>,
    pub c: Array1<Real>,
    pub f: Array1<Real>,
}

/// Seed of trial `trial` (1-based) at size `n`.
pub fn trial_seed(base: u64, n: usize, trial: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((n as u64) << 20)
        .wrapping_add(trial as u64)
}

/// Builds the problem for one instance. Clouds from disk carry
/// `κ = 1.1 + sin²(x₁)`, `c = 1`, `f = x₁` and no exact solution.
pub fn make_problem(manifold: &ManifoldSpec, n: usize, seed: u64) -> manifold_pde::Result<Problem> {
    let from_sample = |s: manifold_pde::geometry::ManifoldSample| Problem {
        cloud: s.cloud,
        truth: Some(s.truth_u),
        kappa: s.kappa,
        c: s.c_field,
        f: s.forcing_f,
    };
    match manifold {
        ManifoldSpec::Ellipse { a } => sample_ellipse(n, *a, seed).map(from_sample),
        ManifoldSpec::Torus { major, minor } => sample_torus(n, *major, *minor, seed).map(from_sample),
        ManifoldSpec::File { path, dim } => {
            let probe = std::fs::read_to_string(path).map_err(|e| manifold_pde::Error::io(path, e))?;
            let ambient = probe
                .lines()
                .map(str::trim)
                .find(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| l.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).count())
                .unwrap_or(0);
            let cloud = load_point_cloud(path, ambient, *dim)?;
            let x = cloud.points().column(0).to_owned();
            Ok(Problem {
                kappa: x.mapv(|v| 1.1 + v.sin().powi(2)),
                c: Array1::ones(cloud.len()),
                f: x,
                truth: None,
                cloud,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub method: Method,
    pub n: usize,
    pub trial: usize,
    /// Modes actually used by spectral methods.
    pub modes: Option<usize>,
    pub error_linf: f64,
    pub error_rel: f64,
    pub offline_sec: f64,
    pub online_sec: f64,
    pub status: CellStatus,
}

impl CellResult {
    pub fn is_ok(&self) -> bool {
        self.status == CellStatus::Ok
    }
}

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub method: Method,
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub failed: usize,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    /// Sorted by method, N, trial.
    pub rows: Vec<CellResult>,
    pub summary: Vec<SummaryRow>,
    pub slopes: Vec<(Method, Option<f64>)>,
}

impl ConvergenceReport {
    pub fn failed_cells(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }

    pub fn slope(&self, method: Method) -> Option<f64> {
        self.slopes.iter().find(|(m, _)| *m == method).and_then(|s| s.1)
    }

    pub fn mean_errors(&self, method: Method) -> Vec<(usize, f64)> {
        self.summary
            .iter()
            .filter(|s| s.method == method)
            .map(|s| (s.n, s.mean))
            .collect()
    }
}

type Stage<T> = (Result<T, String>, f64);

fn timed<T>(f: impl FnOnce() -> manifold_pde::Result<T>) -> Stage<T> {
    let t = Instant::now();
    let r = f().map_err(|e| e.to_string());
    (r, t.elapsed().as_secs_f64())
}

/// Runs `f` on the output of `prev`; the time is that of `f` alone.
fn chain<A, T>(prev: &Stage<A>, f: impl FnOnce(&A) -> manifold_pde::Result<T>) -> Stage<T> {
    match &prev.0 {
        Ok(a) => timed(|| f(a)),
        Err(e) => (Err(e.clone()), 0.0),
    }
}

/// A basis on the first trial, kept for interpolation onto later trials.
#[derive(Clone)]
pub struct BasisReference {
    pub cloud: PointCloud,
    pub kernel: Kernel,
    pub inverse: Arc<RegularizedInverse>,
    pub basis: EigenBasis,
}

#[derive(Clone, Default)]
pub struct References {
    pub srbf: Option<BasisReference>,
    pub vbdm: Option<BasisReference>,
}

/// Everything one instance built, shared by its cells.
pub struct Built {
    pub problem: Problem,
    pub tangent: Option<Stage<ProjectionField>>,
    pub ops: Option<Stage<(DiffOps, Arc<RegularizedInverse>)>>,
    pub srbf: Option<Stage<EigenBasis>>,
    pub fd: Option<Stage<DiffOps>>,
    pub vbdm: Option<Stage<VbdmOperator>>,
    pub vbdm_basis: Option<Stage<EigenBasis>>,
}

fn need(methods: &[Method], any: &[Method]) -> bool {
    methods.iter().any(|m| any.contains(m))
}

/// Builds the shared pieces of one instance. `reference` holds trial-1 bases
/// for transfer; without it (or with `eigs_per_trial`) bases are solved here
/// and returned as new references.
pub fn build_instance(
    cfg: &ExperimentConfig,
    n_index: usize,
    problem: Problem,
    reference: Option<&References>,
) -> (Built, References) {
    use Method::*;
    let methods = &cfg.methods;
    let n = problem.cloud.len();
    let d = problem.cloud.intrinsic_dim();
    let inverse = InverseMethod::Pinv { tau: cfg.pinv_tau };
    let op_kernel = Kernel::inverse_quadratic(cfg.op_shape);
    let eig_kernel = Kernel::inverse_quadratic(cfg.eig_shape);
    let mut refs = References::default();
    let transfer = reference.filter(|_| !cfg.eigs_per_trial);

    let tangent = need(methods, &[SpectralRbf, DirectRbf, DirectRbfFd, SpectralRbfFd, VbdmRbf]).then(|| {
        timed(|| {
            let k = cfg.tangent_k.unwrap_or_else(|| default_tangent_neighbors(n));
            let nb = knn(&problem.cloud, k, false)?;
            estimate_tangent_second_order(&problem.cloud, &nb, d)
        })
    });
    let ops = need(methods, &[SpectralRbf, DirectRbf, VbdmRbf]).then(|| {
        chain(tangent.as_ref().unwrap(), |p| {
            global_operators(&problem.cloud, &op_kernel, inverse, p).map(|(o, i)| (o, Arc::new(i)))
        })
    });
    let srbf = need(methods, &[SpectralRbf, SpectralRbfFd]).then(|| match transfer.and_then(|r| r.srbf.as_ref()) {
        Some(r) => timed(|| transfer_basis(&r.basis, &r.cloud, &r.kernel, &r.inverse, &problem.cloud)),
        None => {
            let stage = chain(tangent.as_ref().unwrap(), |p| {
                let (eops, inv) = global_operators(&problem.cloud, &eig_kernel, inverse, p)?;
                let rank = inv.effective_rank().unwrap_or(n);
                let k = cfg.modes.min(rank.saturating_sub(1));
                let basis = eigensolve_srbf(&eops.laplacian_symmetric(), k, rank, DEFAULT_TAU_EIG)?;
                Ok((basis, inv))
            });
            match stage {
                (Ok((basis, inv)), s) => {
                    refs.srbf = Some(BasisReference {
                        cloud: problem.cloud.clone(),
                        kernel: eig_kernel,
                        inverse: Arc::new(inv),
                        basis: basis.clone(),
                    });
                    (Ok(basis), s)
                }
                (Err(e), s) => (Err(e), s),
            }
        }
    });
    let fd = need(methods, &[DirectRbfFd, SpectralRbfFd]).then(|| {
        chain(tangent.as_ref().unwrap(), |p| {
            let kernel = cfg.fd_kernel.spec();
            let stencil = cfg.fd_stencil.unwrap_or_else(|| default_stencil_size(kernel.family, n));
            rbf_fd_operator(&problem.cloud, &kernel, stencil, p, default_ridge(n))
        })
    });
    let vbdm = need(methods, &[Vbdm, VbdmRbf]).then(|| {
        let (k1, k2) = cfg.vbdm_neighbors(n_index);
        timed(|| vbdm_build(&problem.cloud, VbdmParams { k1, k2, intrinsic_dim: d }))
    });
    let vbdm_basis = need(methods, &[VbdmRbf]).then(|| match transfer.and_then(|r| r.vbdm.as_ref()) {
        Some(r) => timed(|| transfer_basis(&r.basis, &r.cloud, &r.kernel, &r.inverse, &problem.cloud)),
        None => {
            let stage = chain(vbdm.as_ref().unwrap(), |vb| eigensolve_vbdm(vb, cfg.modes.min(n - 1)));
            if let (Ok(basis), Some((Ok((_, inv)), _))) = (&stage.0, &ops) {
                refs.vbdm = Some(BasisReference {
                    cloud: problem.cloud.clone(),
                    kernel: op_kernel,
                    inverse: Arc::clone(inv),
                    basis: basis.clone(),
                });
            }
            stage
        }
    });
    (
        Built {
            problem,
            tangent,
            ops,
            srbf,
            fd,
            vbdm,
            vbdm_basis,
        },
        refs,
    )
}

/// Output of one method on one instance.
pub struct MethodOutput {
    pub values: Array1<Real>,
    pub modes: Option<usize>,
    pub offline_sec: f64,
    pub online_sec: f64,
}

fn secs<T>(stage: &Option<Stage<T>>) -> f64 {
    stage.as_ref().map_or(0.0, |s| s.1)
}

fn ok<'a, T>(stage: &'a Option<Stage<T>>, what: &str) -> Result<(&'a T, f64), String> {
    match stage {
        Some((Ok(v), s)) => Ok((v, *s)),
        Some((Err(e), _)) => Err(e.clone()),
        None => Err(format!("{what} was not built")),
    }
}

/// Offline stage of a spectral method on a built instance.
pub fn offline_for(built: &Built, method: Method) -> Result<(OfflineTensors, &DiffOps, f64), String> {
    let c = built.problem.c.view();
    let (basis, ops, pre) = match method {
        Method::SpectralRbf => {
            let (b, tb) = ok(&built.srbf, "eigenbasis")?;
            let ((o, _), to) = ok(&built.ops, "operators")?;
            (b, o, tb + to)
        }
        Method::SpectralRbfFd => {
            let (b, tb) = ok(&built.srbf, "eigenbasis")?;
            let (o, to) = ok(&built.fd, "stencil operators")?;
            (b, o, tb + to)
        }
        Method::VbdmRbf => {
            let (b, tb) = ok(&built.vbdm_basis, "VBDM basis")?;
            let ((o, _), to) = ok(&built.ops, "operators")?;
            (b, o, tb + to + secs(&built.vbdm))
        }
        other => return Err(format!("{other} is not a spectral method")),
    };
    let (off, t) = timed(|| galerkin_offline(basis, ops, c));
    Ok((off?, ops, pre + t + secs(&built.tangent)))
}

/// Runs one method on a built instance.
pub fn run_method(built: &Built, method: Method) -> Result<MethodOutput, String> {
    let p = &built.problem;
    let (kappa, c, f) = (p.kappa.view(), p.c.view(), p.f.view());
    if method.is_spectral() {
        let (off, ops, offline) = offline_for(built, method)?;
        let (sol, online) = timed(|| galerkin_online(&off, kappa, f, ops));
        let sol = sol?;
        return Ok(MethodOutput {
            values: sol.values,
            modes: Some(off.modes()),
            offline_sec: offline,
            online_sec: online,
        });
    }
    let (values, offline, online) = match method {
        Method::DirectRbf => {
            let ((ops, _), t) = ok(&built.ops, "operators")?;
            let (v, s) = timed(|| solve_direct_rbf(ops, kappa, c, f));
            (v?, t, s)
        }
        Method::DirectRbfFd => {
            let (ops, t) = ok(&built.fd, "stencil operators")?;
            let (v, s) = timed(|| solve_direct_rbf_fd(ops, kappa, c, f));
            (v?, t, s)
        }
        Method::Vbdm => {
            let (vb, t) = ok(&built.vbdm, "VBDM operator")?;
            let (v, s) = timed(|| solve_vbdm_direct(vb, kappa, c, f));
            (v?, t, s)
        }
        _ => unreachable!(),
    };
    let tangent = if method == Method::Vbdm { 0.0 } else { secs(&built.tangent) };
    Ok(MethodOutput {
        values,
        modes: None,
        offline_sec: offline + tangent,
        online_sec: online,
    })
}

fn score(built: &Built, method: Method, n: usize, trial: usize) -> CellResult {
    let failed = |msg: String| CellResult {
        method,
        n,
        trial,
        modes: None,
        error_linf: f64::NAN,
        error_rel: f64::NAN,
        offline_sec: 0.0,
        online_sec: 0.0,
        status: CellStatus::Failed(msg),
    };
    let out = match run_method(built, method) {
        Ok(o) => o,
        Err(e) => return failed(e),
    };
    let Some(truth) = built.problem.truth.as_ref() else {
        return failed("no exact solution for this cloud".into());
    };
    if out.values.iter().any(|v| !v.is_finite()) {
        return failed("non-finite solution".into());
    }
    let linf = linf_error(truth.view(), out.values.view()).unwrap_or(f64::NAN);
    let rel = relative_difference(truth.view(), out.values.view()).unwrap_or(f64::NAN);
    CellResult {
        method,
        n,
        trial,
        modes: out.modes,
        error_linf: linf,
        error_rel: rel,
        offline_sec: out.offline_sec,
        online_sec: out.online_sec,
        status: CellStatus::Ok,
    }
}

fn instance_cells(
    cfg: &ExperimentConfig,
    n_index: usize,
    trial: usize,
    reference: Option<&References>,
) -> (Vec<CellResult>, References) {
    let n = cfg.n_list[n_index];
    match make_problem(&cfg.manifold, n, trial_seed(cfg.seed, n, trial)) {
        Ok(problem) => {
            let (built, refs) = build_instance(cfg, n_index, problem, reference);
            let cells = cfg.methods.iter().map(|&m| score(&built, m, n, trial)).collect();
            (cells, refs)
        }
        Err(e) => {
            let msg = format!("sampling failed: {e}");
            let cells = cfg
                .methods
                .iter()
                .map(|&m| CellResult {
                    method: m,
                    n,
                    trial,
                    modes: None,
                    error_linf: f64::NAN,
                    error_rel: f64::NAN,
                    offline_sec: 0.0,
                    online_sec: 0.0,
                    status: CellStatus::Failed(msg.clone()),
                })
                .collect();
            (cells, References::default())
        }
    }
}

/// Runs every `(method, N, trial)` cell. Only configuration problems are
/// errors; failing cells are reported in the rows.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport, String> {
    cfg.validate()?;
    if !cfg.manifold.has_truth() {
        return Err("convergence sweeps need an analytic manifold with a known solution".into());
    }
    let mut rows = Vec::new();
    for n_index in 0..cfg.n_list.len() {
        let (first, refs) = instance_cells(cfg, n_index, 1, None);
        log::info!("N = {}: trial 1 done", cfg.n_list[n_index]);
        rows.extend(first);
        let rest: Vec<Vec<CellResult>> = (2..=cfg.trials)
            .into_par_iter()
            .map(|t| instance_cells(cfg, n_index, t, Some(&refs)).0)
            .collect();
        rows.extend(rest.into_iter().flatten());
    }
    rows.sort_by_key(|r| (r.method, r.n, r.trial));
    Ok(summarize(cfg, rows))
}

fn summarize(cfg: &ExperimentConfig, rows: Vec<CellResult>) -> ConvergenceReport {
    let mut groups: BTreeMap<(Method, usize), Vec<&CellResult>> = BTreeMap::new();
    for r in &rows {
        groups.entry((r.method, r.n)).or_default().push(r);
    }
    let summary: Vec<SummaryRow> = groups
        .iter()
        .map(|(&(method, n), cells)| {
            let errs: Vec<f64> = cells.iter().filter(|c| c.is_ok()).map(|c| c.error_linf).collect();
            let (mean, min, max) = if errs.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (
                    errs.iter().sum::<f64>() / errs.len() as f64,
                    errs.iter().copied().fold(f64::INFINITY, f64::min),
                    errs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                )
            };
            SummaryRow {
                method,
                n,
                mean,
                min,
                max,
                failed: cells.len() - errs.len(),
            }
        })
        .collect();
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let slopes = methods
        .into_iter()
        .map(|m| {
            let pts: Vec<&SummaryRow> = summary.iter().filter(|s| s.method == m).collect();
            let ns: Vec<f64> = pts.iter().map(|s| s.n as f64).collect();
            let es: Vec<f64> = pts.iter().map(|s| s.mean).collect();
            (m, fit_slope(&ns, &es))
        })
        .collect();
    ConvergenceReport { rows, summary, slopes }
}

#[derive(Debug, Clone)]
pub struct ModesRow {
    pub method: Method,
    pub n: usize,
    pub trial: usize,
    pub modes: usize,
    pub error_linf: f64,
    pub status: CellStatus,
}

/// Error against the number of modes. One offline build at the largest `K`
/// per instance, sliced for every smaller `K`.
pub fn error_vs_modes(cfg: &ExperimentConfig, k_list: &[usize]) -> Result<Vec<ModesRow>, String> {
    cfg.validate()?;
    if !cfg.manifold.has_truth() {
        return Err("mode sweeps need an analytic manifold with a known solution".into());
    }
    if cfg.methods.iter().any(|m| !m.is_spectral()) {
        return Err("mode sweeps take spectral methods only".into());
    }
    let k_max = *k_list.iter().max().ok_or("empty K list")?;
    if k_list.contains(&0) {
        return Err("K must be positive".into());
    }
    let mut cfg = cfg.clone();
    cfg.modes = k_max;
    let run = |n_index: usize, trial: usize, reference: Option<&References>| -> (Vec<ModesRow>, References) {
        let n = cfg.n_list[n_index];
        let problem = match make_problem(&cfg.manifold, n, trial_seed(cfg.seed, n, trial)) {
            Ok(p) => p,
            Err(e) => {
                let rows = failed_modes(&cfg, n, trial, k_list, &format!("sampling failed: {e}"));
                return (rows, References::default());
            }
        };
        let (built, refs) = build_instance(&cfg, n_index, problem, reference);
        let truth = built.problem.truth.clone().expect("analytic");
        let mut rows = Vec::new();
        for &method in &cfg.methods {
            let offline = offline_for(&built, method);
            for &k in k_list {
                let result = offline.as_ref().map_err(|e| e.clone()).and_then(|(off, ops, _)| {
                    if k > off.modes() {
                        return Err(format!("K = {k} exceeds the {} available modes", off.modes()));
                    }
                    let sliced = off.truncate(k).map_err(|e| e.to_string())?;
                    let p = &built.problem;
                    let sol = galerkin_online(&sliced, p.kappa.view(), p.f.view(), ops).map_err(|e| e.to_string())?;
                    linf_error(truth.view(), sol.values.view()).map_err(|e| e.to_string())
                });
                rows.push(match result {
                    Ok(e) => ModesRow {
                        method,
                        n,
                        trial,
                        modes: k,
                        error_linf: e,
                        status: CellStatus::Ok,
                    },
                    Err(msg) => ModesRow {
                        method,
                        n,
                        trial,
                        modes: k,
                        error_linf: f64::NAN,
                        status: CellStatus::Failed(msg),
                    },
                });
            }
        }
        (rows, refs)
    };
    let mut rows = Vec::new();
    for n_index in 0..cfg.n_list.len() {
        let (first, refs) = run(n_index, 1, None);
        rows.extend(first);
        let rest: Vec<Vec<ModesRow>> = (2..=cfg.trials)
            .into_par_iter()
            .map(|t| run(n_index, t, Some(&refs)).0)
            .collect();
        rows.extend(rest.into_iter().flatten());
    }
    rows.sort_by_key(|r| (r.method, r.n, r.modes, r.trial));
    Ok(rows)
}

fn failed_modes(cfg: &ExperimentConfig, n: usize, trial: usize, k_list: &[usize], msg: &str) -> Vec<ModesRow> {
    cfg.methods
        .iter()
        .flat_map(|&method| {
            k_list.iter().map(move |&k| ModesRow {
                method,
                n,
                trial,
                modes: k,
                error_linf: f64::NAN,
                status: CellStatus::Failed(msg.to_string()),
            })
        })
        .collect()
}

/// Mean error per `(method, N, K)` over successful trials.
pub fn mean_by_modes(rows: &[ModesRow]) -> BTreeMap<(Method, usize, usize), f64> {
    let mut acc: BTreeMap<(Method, usize, usize), (f64, usize)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.status == CellStatus::Ok) {
        let e = acc.entry((r.method, r.n, r.modes)).or_default();
        e.0 += r.error_linf;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect()
}
