//! Run settings: a flat TOML schema with command-line overrides.
//!
//! Every field has a default, so an empty file (or no file) is a valid
//! configuration. Flags given on the command line replace file values.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use bkrylov::{
    AlgebraSpec, BicgstabConfig, BicgstabVariant, CgConfig, CgVariant, Generator, GmresConfig, LatencyModel, NormKind, OrthoStrategy,
    OverlapPolicy, PreconditionerKind, ShadowChoice, WorldConfig,
};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// One solver run as read from a file or flags. Strings are parsed by
/// [`RunConfig::resolve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// MatrixMarket file; takes precedence over `generator`.
    pub matrix: Option<PathBuf>,
    /// `poisson2d:<m>`, `convdiff:<m>[:<wx>[:<wy>]]` or `network[:...]`.
    pub generator: String,
    /// Number of right-hand sides.
    pub s: usize,
    /// `p`, `g`, `b`, `bp:<p>` or `bg:<p>`.
    pub algebra: String,
    /// `cg:<variant>`, `gmres:<ortho>` or `bicgstab:<variant>`.
    pub solver: String,
    /// `identity`, `jacobi`, `ssor[:omega[:sweeps]]` or `ilu0`.
    pub precond: String,
    /// Re-orthonormalization parameter; the solver family's default if unset.
    pub eta: Option<f64>,
    pub tol: f64,
    /// `max` (largest column norm) or `frobenius`.
    pub norm: String,
    /// Compare against the initial residual instead of absolute values.
    pub relative: bool,
    /// GMRES steps per restart cycle.
    pub restart: usize,
    pub max_iter: usize,
    /// Simulated rank count.
    pub ranks: usize,
    /// `log[:<µs per level>]`, `const:<µs>` or `zero`.
    pub latency_model: String,
    /// `full`, `none` or a fraction in `[0, 1]`.
    pub overlap: String,
    /// BiCGStab shadow residual: `p0` or `random`.
    pub shadow: String,
    /// Seed of the right-hand side (and of a random shadow residual).
    pub seed: u64,
    /// Output directory for the CSV log and JSON summary.
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            matrix: None,
            generator: "poisson2d:32".into(),
            s: 8,
            algebra: "b".into(),
            solver: "cg:classic".into(),
            precond: "jacobi".into(),
            eta: None,
            tol: 1e-8,
            norm: "max".into(),
            relative: true,
            restart: 100,
            max_iter: 1000,
            ranks: 1,
            latency_model: "log".into(),
            overlap: "full".into(),
            shadow: "p0".into(),
            seed: 1,
            out: None,
        }
    }
}

/// Command-line overrides of [`RunConfig`].
#[derive(Clone, Debug, Default, Args)]
pub struct RunFlags {
    /// TOML file with run settings; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// MatrixMarket coordinate file.
    #[arg(long, conflicts_with = "generator")]
    pub matrix: Option<PathBuf>,
    /// Matrix generator, e.g. poisson2d:50 or convdiff:40:200:100.
    #[arg(long)]
    pub generator: Option<String>,
    /// Number of right-hand sides.
    #[arg(long)]
    pub s: Option<usize>,
    /// Coefficient algebra: p, g, b, bp:<p> or bg:<p>.
    #[arg(long)]
    pub algebra: Option<String>,
    /// cg:<variant>, gmres:<ortho> or bicgstab:<variant>.
    #[arg(long)]
    pub solver: Option<String>,
    /// identity, jacobi, ssor[:omega[:sweeps]] or ilu0.
    #[arg(long)]
    pub precond: Option<String>,
    /// Re-orthonormalization parameter (0 disables, inf forces).
    #[arg(long)]
    pub eta: Option<f64>,
    /// Break tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Norm of the break test: max or frobenius.
    #[arg(long)]
    pub norm: Option<String>,
    /// Use an absolute instead of a relative tolerance.
    #[arg(long)]
    pub absolute: bool,
    /// GMRES restart length.
    #[arg(long)]
    pub restart: Option<usize>,
    /// Iteration limit.
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    /// Number of simulated ranks.
    #[arg(long)]
    pub ranks: Option<usize>,
    /// Reduction latency: log[:<us>], const:<us> or zero.
    #[arg(long = "latency-model")]
    pub latency_model: Option<String>,
    /// Overlap policy: full, none or a fraction.
    #[arg(long)]
    pub overlap: Option<String>,
    /// BiCGStab shadow residual: p0 or random.
    #[arg(long)]
    pub shadow: Option<String>,
    /// Seed of the right-hand side.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunFlags {
    /// Reads the configuration file (if any) and applies the flags on top.
    pub fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        self.apply(&mut cfg);
        Ok(cfg)
    }

    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(g) = &self.generator {
            cfg.generator = g.clone();
            cfg.matrix = None;
        }
        if let Some(m) = &self.matrix {
            cfg.matrix = Some(m.clone());
        }
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone(); })*
            };
        }
        set!(s, algebra, solver, precond, tol, norm, restart, max_iter, ranks, latency_model, overlap, shadow, seed);
        if let Some(eta) = self.eta {
            cfg.eta = Some(eta);
        }
        if self.absolute {
            cfg.relative = false;
        }
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
    }
}

/// Where the operator comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum MatrixSource {
    File(PathBuf),
    Generated(Generator),
}

/// Solver family with its fully specified settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolverChoice {
    Cg(CgConfig),
    Gmres(GmresConfig),
    Bicgstab(BicgstabConfig),
}

impl SolverChoice {
    /// Effective re-orthonormalization parameter; GMRES has none.
    pub fn eta(&self) -> Option<f64> {
        match self {
            Self::Cg(c) => Some(c.eta),
            Self::Gmres(_) => None,
            Self::Bicgstab(c) => Some(c.eta),
        }
    }
}

/// A validated [`RunConfig`].
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedRun {
    pub source: MatrixSource,
    pub algebra: AlgebraSpec,
    pub solver: SolverChoice,
    pub precond: PreconditionerKind,
    pub world: WorldConfig,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid configuration: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Parses and checks every field without touching the file system.
    pub fn resolve(&self) -> Result<ResolvedRun, CliError> {
        let bad = |what: &str, detail: String| CliError::Config(format!("{what}: {detail}"));
        if self.s == 0 {
            return Err(bad("s", "must be at least 1".into()));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(bad("tol", format!("must be positive and finite, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(bad("max_iter", "must be at least 1".into()));
        }
        if self.restart == 0 {
            return Err(bad("restart", "must be at least 1".into()));
        }
        if self.ranks == 0 {
            return Err(bad("ranks", "must be at least 1".into()));
        }
        if let Some(eta) = self.eta {
            if eta.is_nan() || eta < 0.0 {
                return Err(bad("eta", format!("must be nonnegative, got {eta}")));
            }
        }
        let source = match &self.matrix {
            Some(path) => MatrixSource::File(path.clone()),
            None => MatrixSource::Generated(Generator::from_str(&self.generator).map_err(|e| bad("generator", e.to_string()))?),
        };
        let algebra = AlgebraSpec::parse(&self.algebra, self.s).map_err(|e| bad("algebra", e.to_string()))?;
        let precond = PreconditionerKind::parse(&self.precond).map_err(|e| bad("precond", e.to_string()))?;
        let norm = NormKind::parse(&self.norm).ok_or_else(|| bad("norm", format!("`{}` is not max or frobenius", self.norm)))?;
        let world = WorldConfig {
            ranks: self.ranks,
            latency: LatencyModel::parse(&self.latency_model).map_err(|e| bad("latency_model", e.to_string()))?,
            overlap: OverlapPolicy::parse(&self.overlap).map_err(|e| bad("overlap", e.to_string()))?,
            ..WorldConfig::default()
        };
        let solver = self.resolve_solver(norm)?;
        Ok(ResolvedRun { source, algebra, solver, precond, world, seed: self.seed })
    }

    fn resolve_solver(&self, norm: NormKind) -> Result<SolverChoice, CliError> {
        let bad = || CliError::Config(format!("solver: `{}` is not cg:<variant>, gmres:<ortho> or bicgstab:<variant>", self.solver));
        let text = self.solver.trim().to_ascii_lowercase();
        let (family, variant) = text.split_once(':').unwrap_or((text.as_str(), ""));
        let (tolerance, relative, max_iter) = (self.tol, self.relative, self.max_iter);
        Ok(match family {
            "cg" | "bcg" => {
                let variant = if variant.is_empty() { CgVariant::Classic } else { CgVariant::parse(variant).ok_or_else(bad)? };
                let d = CgConfig::default();
                SolverChoice::Cg(CgConfig { variant, eta: self.eta.unwrap_or(d.eta), tolerance, relative, norm, max_iter })
            }
            "gmres" | "bgmres" => {
                let strategy = if variant.is_empty() { OrthoStrategy::default() } else { OrthoStrategy::parse(variant).ok_or_else(bad)? };
                SolverChoice::Gmres(GmresConfig { strategy, restart: self.restart, tolerance, relative, norm, max_iter })
            }
            "bicgstab" | "bbicgstab" => {
                let variant = if variant.is_empty() { BicgstabVariant::Adaptive } else { BicgstabVariant::parse(variant).ok_or_else(bad)? };
                let shadow = match self.shadow.trim().to_ascii_lowercase().as_str() {
                    "p0" | "default" => ShadowChoice::PreconditionedInitialResidual,
                    "random" => ShadowChoice::SeededRandom { seed: self.seed ^ 0x5ad0 },
                    other => return Err(CliError::Config(format!("shadow: `{other}` is not p0 or random"))),
                };
                let d = BicgstabConfig::default();
                SolverChoice::Bicgstab(BicgstabConfig { variant, eta: self.eta.unwrap_or(d.eta), tolerance, relative, norm, max_iter, shadow })
            }
            _ => return Err(bad()),
        })
    }
}
