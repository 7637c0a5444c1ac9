//! Randomized self-test of the algebra invariants.
//!
//! Each trial draws fresh block vectors and coefficients from a seeded
//! generator and measures every invariant as a ratio to its tolerance; a
//! ratio above one is a violation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{block_inner_product, normalize, AlgebraSpec, SElement};
use crate::blocklinalg::{apply_right, BlockVector};

pub const SYMMETRY_TOL: f64 = 1e-13;
pub const NORMALITY_TOL: f64 = 1e-12;
pub const LINEARITY_TOL: f64 = 1e-12;
pub const NORMALIZER_TOL: f64 = 1e-12;

/// Worst observed ratio to tolerance per invariant over all trials.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub algebra: String,
    pub trials: usize,
    pub symmetry: f64,
    pub normality: f64,
    pub linearity: f64,
    pub reconstruction: f64,
    pub orthonormality: f64,
    /// Trials whose `⟨X, X⟩` had a nonpositive eigenvalue for full-rank `X`.
    pub indefinite: usize,
    /// Results of multiply, add, transpose or invert that left the pattern.
    pub pattern_breaks: usize,
    /// Trials where the parallel product differed from the block diagonal.
    pub diagonal_mismatches: usize,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        [self.symmetry, self.normality, self.linearity, self.reconstruction, self.orthonormality].iter().all(|r| *r <= 1.0)
            && self.indefinite == 0
            && self.pattern_breaks == 0
            && self.diagonal_mismatches == 0
    }
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize, s: usize) -> BlockVector {
    BlockVector::from_fn(n, s, |_, _| rng.random_range(-1.0..1.0))
}

/// A random element of `alg`.
pub fn random_element(rng: &mut impl Rng, alg: &AlgebraSpec) -> SElement {
    let s = alg.s();
    let full = AlgebraSpec::block(s).expect("s >= 1");
    let dense: Vec<f64> = (0..s * s).map(|_| rng.random_range(-1.0..1.0)).collect();
    SElement::from_dense(full, dense).expect("block accepts any matrix").project(alg)
}

/// Copies some columns over others and zeroes one, leaving a rank-deficient
/// block vector.
fn make_rank_deficient(x: &mut BlockVector, rng: &mut ChaCha8Rng) {
    let s = x.s();
    if s < 2 {
        for i in 0..x.n() {
            x.set(i, 0, 0.0);
        }
        return;
    }
    let (src, dst) = (rng.random_range(0..s), rng.random_range(0..s));
    let zero = rng.random_range(0..s);
    for i in 0..x.n() {
        let v = x.get(i, src);
        x.set(i, dst, 2.0 * v);
        if zero != src && zero != dst {
            x.set(i, zero, 0.0);
        }
    }
}

fn gram_is_positive_definite(c: &SElement) -> bool {
    c.to_dense().symmetric_eigenvalues().first().is_some_and(|l| *l > 0.0)
}

/// Runs `trials` randomized checks of every invariant on `alg`.
pub fn check_algebra_properties(alg: &AlgebraSpec, trials: usize, seed: u64) -> PropertyReport {
    let s = alg.s();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = PropertyReport { algebra: alg.label(), trials, ..Default::default() };
    let parallel = AlgebraSpec::parallel(s).expect("s >= 1");
    let block = AlgebraSpec::block(s).expect("s >= 1");
    for trial in 0..trials {
        let n = rng.random_range(s.max(2)..=4 * s + 8);
        let x = random_vector(&mut rng, n, s);
        let y = random_vector(&mut rng, n, s);
        let z = random_vector(&mut rng, n, s);
        let (nx, ny) = (x.frobenius_norm(), y.frobenius_norm());
        let xy = block_inner_product(&x, &y, alg).expect("matching shapes");
        let yx = block_inner_product(&y, &x, alg).expect("matching shapes");

        let asym = (&xy - &yx.transpose()).frobenius_norm();
        rep.symmetry = rep.symmetry.max(asym / (SYMMETRY_TOL * nx * ny));

        let frob: f64 = x.as_slice().iter().zip(y.as_slice()).map(|(a, b)| a * b).sum();
        rep.normality = rep.normality.max((xy.trace() - frob).abs() / (NORMALITY_TOL * nx * ny));

        let gamma = random_element(&mut rng, alg);
        let mut sum = x.clone();
        for (a, b) in sum.as_mut_slice().iter_mut().zip(y.as_slice()) {
            *a += b;
        }
        let zg = apply_right(&z, &gamma);
        let lhs = block_inner_product(&sum, &zg, alg).expect("matching shapes");
        let rhs = &block_inner_product(&x, &z, alg).expect("matching shapes").multiply(&gamma)
            + &block_inner_product(&y, &z, alg).expect("matching shapes").multiply(&gamma);
        let scale = (sum.frobenius_norm() * zg.frobenius_norm()).max(f64::MIN_POSITIVE);
        rep.linearity = rep.linearity.max((&lhs - &rhs).frobenius_norm() / (LINEARITY_TOL * scale));

        if n >= s && !gram_is_positive_definite(&block_inner_product(&x, &x, alg).expect("matching shapes")) {
            rep.indefinite += 1;
        }

        let mut w = x.clone();
        if trial % 3 == 0 {
            make_rank_deficient(&mut w, &mut rng);
        }
        let (q, sigma) = normalize(&w, alg).expect("finite input");
        let back = apply_right(&q, &sigma);
        rep.reconstruction = rep.reconstruction.max(back.sub_norm(&w) / (NORMALIZER_TOL * w.frobenius_norm().max(f64::MIN_POSITIVE)));
        let qq = block_inner_product(&q, &q, alg).expect("matching shapes");
        rep.orthonormality = rep.orthonormality.max(qq.distance_to_identity() / NORMALIZER_TOL);

        let c = random_element(&mut rng, alg);
        let mut outputs = vec![c.multiply(&gamma), &c + &gamma, c.transpose(), sigma];
        if let Ok(inv) = c.inverse() {
            outputs.push(inv);
        }
        rep.pattern_breaks += outputs.iter().filter(|e| !e.satisfies_pattern()).count();

        let p_prod = block_inner_product(&x, &y, &parallel).expect("matching shapes");
        let b_prod = block_inner_product(&x, &y, &block).expect("matching shapes");
        if (0..s).any(|i| p_prod.get(i, i) != b_prod.get(i, i)) {
            rep.diagonal_mismatches += 1;
        }
    }
    rep
}

/// The algebra variants exercised for a given `s`: all five families with
/// every proper divisor used once as `p` for the blocked kinds.
pub fn algebra_variants(s: usize) -> Vec<AlgebraSpec> {
    let mut out = vec![AlgebraSpec::parallel(s), AlgebraSpec::global(s), AlgebraSpec::block(s)];
    for p in (2..s).filter(|p| s % p == 0) {
        out.push(AlgebraSpec::block_parallel(s, p));
        out.push(AlgebraSpec::block_global(s, p));
    }
    out.into_iter().map(|a| a.expect("p divides s")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_variants_pass_a_short_run() {
        for alg in algebra_variants(6) {
            let rep = check_algebra_properties(&alg, 50, 3);
            assert!(rep.passed(), "{rep:?}");
        }
    }

    #[test]
    fn broken_tolerance_is_reported() {
        let rep = PropertyReport { symmetry: 1.5, ..Default::default() };
        assert!(!rep.passed());
    }
}
