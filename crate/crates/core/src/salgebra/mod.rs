//! *-subalgebras of the `s × s` coefficient space.
//!
//! Every supported algebra is described by a group width `p` dividing `s`
//! and a replication flag: block-parallel algebras couple the columns inside
//! each of the `q = s/p` groups independently, block-global algebras use one
//! `p × p` block shared by all groups. Parallel, block and global are the
//! special cases `BP(1)`, `BP(s)` and `BG(1)`.

mod condition;
pub mod dense;
mod element;
pub(crate) mod normalize;
mod properties;
mod product;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use condition::kappa_diag_scaled;
pub use element::SElement;
pub use normalize::{coefficient_qr, normalize, normalize_in_place, normalize_rows};
pub use product::{block_inner_product, GramLayout, GroupGram, LEAF_SEGMENTS};
pub use properties::{algebra_variants, check_algebra_properties, random_element, PropertyReport};

/// The five algebra families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgebraKind {
    Parallel,
    Global,
    Block,
    BlockParallel,
    BlockGlobal,
}

/// Errors raised by coefficient arithmetic and normalization.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("block width p = {p} does not divide s = {s}")]
    IndivisibleWidth { s: usize, p: usize },
    #[error("algebra needs s >= 1 and p >= 1")]
    EmptyAlgebra,
    #[error("singular coefficient: pivot {index} has magnitude {magnitude:e}")]
    Singular { index: usize, magnitude: f64 },
    #[error("entry ({row}, {col}) lies outside the {algebra} pattern")]
    OutsidePattern { row: usize, col: usize, algebra: String },
    #[error("diagonal blocks of a block-global element differ")]
    NotReplicated,
    #[error("{small} is not contained in {big}")]
    NotContained { small: String, big: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("nonpositive diagonal entry {value:e} at {index}: definiteness lost")]
    NonPositiveDiagonal { index: usize, value: f64 },
    #[error("cannot parse algebra `{0}` (expected p, g, b, bp:<p> or bg:<p>)")]
    Parse(String),
}

/// Describes one *-subalgebra of `ℝ^{s×s}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AlgebraSpec {
    kind: AlgebraKind,
    s: usize,
    p: usize,
}

impl AlgebraSpec {
    /// Validates `p | s`. For the fixed-width kinds `p` is ignored and set
    /// to 1 (parallel, global) or `s` (block). The result is canonical:
    /// `BP(1)` becomes parallel, `BG(1)` global, and `BP(s)`/`BG(s)` block.
    pub fn new(kind: AlgebraKind, s: usize, p: usize) -> Result<Self, AlgebraError> {
        if s == 0 {
            return Err(AlgebraError::EmptyAlgebra);
        }
        let (p, replicated) = match kind {
            AlgebraKind::Parallel => (1, false),
            AlgebraKind::Global => (1, true),
            AlgebraKind::Block => (s, false),
            AlgebraKind::BlockParallel | AlgebraKind::BlockGlobal => {
                if p == 0 {
                    return Err(AlgebraError::EmptyAlgebra);
                }
                if s % p != 0 {
                    return Err(AlgebraError::IndivisibleWidth { s, p });
                }
                (p, kind == AlgebraKind::BlockGlobal)
            }
        };
        Ok(Self { kind: grouped_kind(p, s, replicated), s, p })
    }

    pub fn parallel(s: usize) -> Result<Self, AlgebraError> {
        Self::new(AlgebraKind::Parallel, s, 1)
    }

    pub fn global(s: usize) -> Result<Self, AlgebraError> {
        Self::new(AlgebraKind::Global, s, 1)
    }

    pub fn block(s: usize) -> Result<Self, AlgebraError> {
        Self::new(AlgebraKind::Block, s, s)
    }

    pub fn block_parallel(s: usize, p: usize) -> Result<Self, AlgebraError> {
        Self::new(AlgebraKind::BlockParallel, s, p)
    }

    pub fn block_global(s: usize, p: usize) -> Result<Self, AlgebraError> {
        Self::new(AlgebraKind::BlockGlobal, s, p)
    }

    /// Parses `p`, `g`, `b`, `bp:<p>` or `bg:<p>` for `s` columns.
    pub fn parse(text: &str, s: usize) -> Result<Self, AlgebraError> {
        let t = text.trim().to_ascii_lowercase();
        let width = |rest: &str| rest.parse::<usize>().map_err(|_| AlgebraError::Parse(text.to_string()));
        match t.as_str() {
            "p" | "parallel" => Self::parallel(s),
            "g" | "global" => Self::global(s),
            "b" | "block" => Self::block(s),
            _ => {
                if let Some(rest) = t.strip_prefix("bp:") {
                    Self::block_parallel(s, width(rest)?)
                } else if let Some(rest) = t.strip_prefix("bg:") {
                    Self::block_global(s, width(rest)?)
                } else {
                    Err(AlgebraError::Parse(text.to_string()))
                }
            }
        }
    }

    pub fn kind(&self) -> AlgebraKind {
        self.kind
    }

    pub fn s(&self) -> usize {
        self.s
    }

    /// Group width (1 for parallel/global, `s` for block).
    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of groups `s / p`.
    pub fn q(&self) -> usize {
        self.s / self.p
    }

    /// True when all groups share one coefficient block (and there is more
    /// than one group).
    pub fn is_replicated(&self) -> bool {
        matches!(self.kind, AlgebraKind::Global | AlgebraKind::BlockGlobal) && self.q() > 1
    }

    /// Whether entry `(i, j)` may be nonzero.
    pub fn in_pattern(&self, i: usize, j: usize) -> bool {
        i / self.p == j / self.p
    }

    /// Dimension of the algebra as a real vector space.
    pub fn dim(&self) -> usize {
        if self.is_replicated() {
            self.p * self.p
        } else {
            self.q() * self.p * self.p
        }
    }

    /// The block-parallel algebra with the same groups. Column norms of
    /// `X·c` for `c` in this algebra only need the diagonal group Grams, so
    /// this is the algebra used for residual-norm reductions.
    pub fn column_gram_algebra(&self) -> Self {
        Self { kind: grouped_kind(self.p, self.s, false), s: self.s, p: self.p }
    }

    /// Lattice inclusion `self ⊆ big`.
    pub fn is_contained_in(&self, big: &AlgebraSpec) -> bool {
        self.s == big.s && big.p % self.p == 0 && (self.is_replicated() || !big.is_replicated())
    }

    /// Short label, e.g. `bp:4`.
    pub fn label(&self) -> String {
        match self.kind {
            AlgebraKind::Parallel => "p".into(),
            AlgebraKind::Global => "g".into(),
            AlgebraKind::Block => "b".into(),
            AlgebraKind::BlockParallel => format!("bp:{}", self.p),
            AlgebraKind::BlockGlobal => format!("bg:{}", self.p),
        }
    }
}

fn grouped_kind(p: usize, s: usize, replicated: bool) -> AlgebraKind {
    match (p == 1, p == s, replicated) {
        (_, true, _) => AlgebraKind::Block,
        (true, _, false) => AlgebraKind::Parallel,
        (true, _, true) => AlgebraKind::Global,
        (false, false, false) => AlgebraKind::BlockParallel,
        (false, false, true) => AlgebraKind::BlockGlobal,
    }
}

impl fmt::Display for AlgebraSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(s={})", self.label(), self.s)
    }
}

/// `a_small ⊆ a_big` as sets of matrices.
pub fn contains(a_small: &AlgebraSpec, a_big: &AlgebraSpec) -> bool {
    a_small.is_contained_in(a_big)
}

/// Re-expresses `c` as an element of `a_big` without touching its entries.
pub fn embed(c: &SElement, a_big: &AlgebraSpec) -> Result<SElement, AlgebraError> {
    c.embed(a_big)
}
