//! Test matrices and reproducible right-hand sides.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BlockVector, LinalgError, SparseOperator};

/// Entries i.i.d. uniform in `[-1, 1)` drawn row by row from ChaCha8 seeded
/// with `seed`.
pub fn generate_rhs(n: usize, s: usize, seed: u64) -> BlockVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BlockVector::from_fn(n, s, |_, _| rng.random_range(-1.0..1.0))
}

/// 5-point finite-difference Laplacian on an `m × m` grid, unscaled.
pub fn poisson2d(m: usize) -> SparseOperator {
    convection_diffusion(m, 0.0, 0.0)
}

/// 5-point central-difference discretization of `−Δu + w·∇u` on an `m × m`
/// grid with spacing `h = 1/(m+1)`, scaled by `h²`. Nonsymmetric for
/// nonzero wind.
pub fn convection_diffusion(m: usize, wind_x: f64, wind_y: f64) -> SparseOperator {
    let h = 1.0 / (m as f64 + 1.0);
    let (cx, cy) = (0.5 * wind_x * h, 0.5 * wind_y * h);
    let n = m * m;
    let mut t = Vec::with_capacity(5 * n);
    for r in 0..m {
        for c in 0..m {
            let i = r * m + c;
            t.push((i, i, 4.0));
            if c > 0 {
                t.push((i, i - 1, -1.0 - cx));
            }
            if c + 1 < m {
                t.push((i, i + 1, -1.0 + cx));
            }
            if r > 0 {
                t.push((i, i - m, -1.0 - cy));
            }
            if r + 1 < m {
                t.push((i, i + m, -1.0 + cy));
            }
        }
    }
    SparseOperator::from_triplets(n, t).expect("stencil indices are in range")
}

/// Weighted graph Laplacian of a random network plus a small diagonal shunt:
/// a random spanning tree, `chords` extra edges, branch weights log-uniform
/// over `weight_decades` decades. Symmetric positive definite with a
/// condition number that grows with the weight spread and shrinks with the
/// shunt.
pub fn network_spd(n: usize, chords: usize, weight_decades: f64, shunt: f64, seed: u64) -> SparseOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weight = |rng: &mut ChaCha8Rng| 10f64.powf(rng.random_range(0.0..weight_decades));
    let mut edges = Vec::with_capacity(n + chords);
    for i in 1..n {
        let parent = rng.random_range(0..i);
        let w = weight(&mut rng);
        edges.push((i, parent, w));
    }
    for _ in 0..chords {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j {
            let w = weight(&mut rng);
            edges.push((i, j, w));
        }
    }
    let mut t = Vec::with_capacity(4 * edges.len() + n);
    for (i, j, w) in edges {
        t.push((i, i, w));
        t.push((j, j, w));
        t.push((i, j, -w));
        t.push((j, i, -w));
    }
    for i in 0..n {
        t.push((i, i, shunt));
    }
    SparseOperator::from_triplets(n, t).expect("edge indices are in range")
}

/// Named matrix generators usable from configuration strings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Poisson2d { m: usize },
    ConvectionDiffusion { m: usize, wind_x: f64, wind_y: f64 },
    Network { n: usize, chords: usize, decades: f64, shunt: f64, seed: u64 },
}

impl Generator {
    /// The network matrix used as the ill-conditioned SPD test case.
    pub const ILL_CONDITIONED_NETWORK: Generator = Generator::Network { n: 1138, chords: 290, decades: 6.0, shunt: 1e-4, seed: 1138 };

    pub fn build(&self) -> SparseOperator {
        match *self {
            Self::Poisson2d { m } => poisson2d(m),
            Self::ConvectionDiffusion { m, wind_x, wind_y } => convection_diffusion(m, wind_x, wind_y),
            Self::Network { n, chords, decades, shunt, seed } => network_spd(n, chords, decades, shunt, seed),
        }
    }
}

impl FromStr for Generator {
    type Err = LinalgError;

    /// `poisson2d:<m>`, `convdiff:<m>[:<wx>[:<wy>]]`,
    /// `network[:<n>[:<chords>[:<decades>[:<shunt>[:<seed>]]]]]`.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let bad = || LinalgError::Unsupported(format!("generator `{text}`"));
        let parts: Vec<&str> = text.trim().split(':').collect();
        let arg = |i: usize| parts.get(i).copied();
        fn num<T: FromStr>(v: Option<&str>, default: T, bad: &dyn Fn() -> LinalgError) -> Result<T, LinalgError> {
            v.map_or(Ok(default), |t| t.parse::<T>().map_err(|_| bad()))
        }
        let g = match parts[0].to_ascii_lowercase().as_str() {
            "poisson2d" | "poisson" => {
                Self::Poisson2d { m: arg(1).ok_or_else(bad)?.parse().map_err(|_| bad())? }
            }
            "convdiff" | "convection_diffusion" => Self::ConvectionDiffusion {
                m: arg(1).ok_or_else(bad)?.parse().map_err(|_| bad())?,
                wind_x: num(arg(2), 20.0, &bad)?,
                wind_y: num(arg(3), 10.0, &bad)?,
            },
            "network" | "bus" => {
                let Self::Network { n, chords, decades, shunt, seed } = Self::ILL_CONDITIONED_NETWORK else {
                    unreachable!()
                };
                Self::Network {
                    n: num(arg(1), n, &bad)?,
                    chords: num(arg(2), chords, &bad)?,
                    decades: num(arg(3), decades, &bad)?,
                    shunt: num(arg(4), shunt, &bad)?,
                    seed: num(arg(5), seed, &bad)?,
                }
            }
            _ => return Err(bad()),
        };
        Ok(g)
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Poisson2d { m } => write!(f, "poisson2d:{m}"),
            Self::ConvectionDiffusion { m, wind_x, wind_y } => write!(f, "convdiff:{m}:{wind_x}:{wind_y}"),
            Self::Network { n, chords, decades, shunt, seed } => write!(f, "network:{n}:{chords}:{decades}:{shunt}:{seed}"),
        }
    }
}
