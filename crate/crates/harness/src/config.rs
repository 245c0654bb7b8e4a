//! Experiment configuration and the built-in presets.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use manifold_pde::kernel::KernelSpec;
use manifold_pde::rbf::DEFAULT_PINV_TAU;

#[derive(Debug, Clone, PartialEq)]
pub enum ManifoldSpec {
    Ellipse { a: f64 },
    Torus { major: f64, minor: f64 },
    /// A point cloud read from disk, with its intrinsic dimension.
    File { path: PathBuf, dim: usize },
}

impl ManifoldSpec {
    pub fn has_truth(&self) -> bool {
        !matches!(self, ManifoldSpec::File { .. })
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self {
            ManifoldSpec::Ellipse { .. } => 1,
            ManifoldSpec::Torus { .. } => 2,
            ManifoldSpec::File { dim, .. } => *dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    SpectralRbf,
    DirectRbf,
    DirectRbfFd,
    SpectralRbfFd,
    Vbdm,
    VbdmRbf,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::SpectralRbf,
        Method::DirectRbf,
        Method::DirectRbfFd,
        Method::SpectralRbfFd,
        Method::Vbdm,
        Method::VbdmRbf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SpectralRbf => "spectral_rbf",
            Method::DirectRbf => "direct_rbf",
            Method::DirectRbfFd => "direct_rbf_fd",
            Method::SpectralRbfFd => "spectral_rbf_fd",
            Method::Vbdm => "vbdm",
            Method::VbdmRbf => "vbdm_rbf",
        }
    }

    pub fn is_spectral(self) -> bool {
        matches!(self, Method::SpectralRbf | Method::SpectralRbfFd | Method::VbdmRbf)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

/// Kernel for the RBF-FD stencils.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FdKernel {
    Polyharmonic,
    Matern { shape: f64 },
}

impl FdKernel {
    pub fn spec(self) -> KernelSpec<f64> {
        match self {
            FdKernel::Polyharmonic => KernelSpec::polyharmonic(),
            FdKernel::Matern { shape } => KernelSpec::matern(shape),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub manifold: ManifoldSpec,
    pub methods: Vec<Method>,
    pub n_list: Vec<usize>,
    pub trials: usize,
    /// Galerkin modes, the constant mode included.
    pub modes: usize,
    /// Shape parameter of the inverse quadratic kernel for the eigenproblem.
    pub eig_shape: f64,
    /// Shape parameter for the pointwise operators.
    pub op_shape: f64,
    pub fd_kernel: FdKernel,
    /// Stencil size; `None` picks 21 for PHS and `⌈2√N⌉` otherwise.
    pub fd_stencil: Option<usize>,
    /// Tangent-estimation neighbors; `None` means `⌈√N⌉`.
    pub tangent_k: Option<usize>,
    /// Per-N VBDM neighbor counts (one entry applies to every N).
    pub vbdm_k1: Vec<usize>,
    pub vbdm_k2: Vec<usize>,
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Eigensolve on every trial instead of transferring the trial-1 basis.
    pub eigs_per_trial: bool,
    pub pinv_tau: f64,
}

impl ExperimentConfig {
    /// Ellipse `a = 2`, the shapes and VBDM lists of the reference experiment.
    pub fn paper_ellipse() -> Self {
        ExperimentConfig {
            manifold: ManifoldSpec::Ellipse { a: 2.0 },
            methods: vec![
                Method::SpectralRbf,
                Method::DirectRbf,
                Method::DirectRbfFd,
                Method::SpectralRbfFd,
                Method::Vbdm,
            ],
            n_list: vec![400, 800, 1600, 3200, 6400],
            trials: 5,
            modes: 60,
            eig_shape: 1.0,
            op_shape: 1.2,
            fd_kernel: FdKernel::Polyharmonic,
            fd_stencil: None,
            tangent_k: None,
            vbdm_k1: vec![20, 30, 45, 65, 120],
            vbdm_k2: vec![10, 15, 25, 35, 50],
            seed: 1,
            output: None,
            eigs_per_trial: false,
            pinv_tau: DEFAULT_PINV_TAU,
        }
    }

    /// Torus `R = 2, r = 1`.
    pub fn paper_torus() -> Self {
        ExperimentConfig {
            manifold: ManifoldSpec::Torus { major: 2.0, minor: 1.0 },
            methods: vec![Method::SpectralRbf, Method::DirectRbf, Method::Vbdm],
            n_list: vec![800, 1600, 3200, 6400, 12800],
            modes: 300,
            eig_shape: 0.3,
            op_shape: 0.7,
            vbdm_k1: vec![28, 40, 56, 80, 110],
            vbdm_k2: vec![14, 20, 28, 40, 55],
            ..Self::paper_ellipse()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "paper-ellipse" => Some(Self::paper_ellipse()),
            "paper-torus" => Some(Self::paper_torus()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_list.is_empty() {
            return Err("N list is empty".into());
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(format!("N list must be strictly ascending, got {:?}", self.n_list));
        }
        if self.trials == 0 {
            return Err("trials must be at least 1".into());
        }
        if self.methods.is_empty() {
            return Err("no methods selected".into());
        }
        if self.modes < 2 {
            return Err(format!("modes = {} must be at least 2", self.modes));
        }
        for (what, v) in [("eig shape", self.eig_shape), ("op shape", self.op_shape)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{what} {v} must be positive"));
            }
        }
        if let FdKernel::Matern { shape } = self.fd_kernel {
            if !(shape > 0.0 && shape.is_finite()) {
                return Err(format!("FD shape {shape} must be positive"));
            }
        }
        if !(self.pinv_tau >= 0.0) {
            return Err(format!("pinv tau {} must be >= 0", self.pinv_tau));
        }
        if self.methods.iter().any(|m| matches!(m, Method::Vbdm | Method::VbdmRbf)) {
            for (what, list) in [("vbdm k1", &self.vbdm_k1), ("vbdm k2", &self.vbdm_k2)] {
                if list.len() != 1 && list.len() != self.n_list.len() {
                    return Err(format!(
                        "{what} has {} entries; give one or one per N ({})",
                        list.len(),
                        self.n_list.len()
                    ));
                }
            }
        }
        if let ManifoldSpec::File { dim, .. } = self.manifold {
            if dim == 0 {
                return Err("intrinsic dimension must be positive".into());
            }
        }
        Ok(())
    }

    /// VBDM `(k1, k2)` for the `idx`-th entry of the N list.
    pub fn vbdm_neighbors(&self, idx: usize) -> (usize, usize) {
        let pick = |l: &[usize]| if l.len() == 1 { l[0] } else { l[idx] };
        (pick(&self.vbdm_k1), pick(&self.vbdm_k2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in ["paper-ellipse", "paper-torus"] {
            ExperimentConfig::preset(name).unwrap().validate().unwrap();
        }
        assert!(ExperimentConfig::preset("bunny").is_none());
    }

    #[test]
    fn rejects_bad_lists() {
        let mut cfg = ExperimentConfig::paper_ellipse();
        cfg.n_list = vec![800, 400];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::paper_ellipse();
        cfg.vbdm_k1 = vec![20, 30];
        assert!(cfg.validate().is_err());
        cfg.vbdm_k1 = vec![20];
        cfg.validate().unwrap();
        assert_eq!(cfg.vbdm_neighbors(3), (20, 35));
        let mut cfg = ExperimentConfig::paper_ellipse();
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("galerkin".parse::<Method>().is_err());
    }
}
