//! Kernel micro-benchmarks and the reduction-overlap benchmark.

use std::time::Instant;

use bkrylov::blocklinalg::{baxpy, bdot, bop, generate_rhs, poisson2d};
use bkrylov::comms::overlap_benchmark;
use bkrylov::salgebra::random_element;
use bkrylov::{AlgebraSpec, KernelCounters, WorldConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::CliError;

/// One measured kernel configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelRow {
    pub kernel: &'static str,
    pub n: usize,
    pub s: usize,
    pub p: usize,
    pub flops: u64,
    /// Words moved to or from memory per call.
    pub values: u64,
    /// Counter-model flops per word.
    pub intensity: f64,
    /// Median wall time of one call.
    pub time_us: f64,
    pub time_per_rhs_us: f64,
}

fn median_time_us(reps: usize, mut f: impl FnMut()) -> f64 {
    let mut times: Vec<f64> = (0..reps.max(1))
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64() * 1e6
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[times.len() / 2]
}

/// Group widths benchmarked for `s`: powers of two dividing `s`, and `s`.
pub fn group_widths(s: usize) -> Vec<usize> {
    let mut ps: Vec<usize> = (0..usize::BITS).map(|e| 1usize << e).take_while(|p| *p <= s).filter(|p| s % p == 0).collect();
    if ps.last() != Some(&s) {
        ps.push(s);
    }
    ps
}

fn row(kernel: &'static str, n: usize, s: usize, p: usize, c: KernelCounters, time_us: f64) -> KernelRow {
    KernelRow { kernel, n, s, p, flops: c.flops, values: c.values_transferred(), intensity: c.intensity(), time_us, time_per_rhs_us: time_us / s as f64 }
}

/// BOP on a 5-point Laplacian with about `n` rows for each `s`, then BDOT and
/// BAXPY for every block-parallel group width of each `s`.
pub fn bench_kernels(n: usize, s_values: &[usize], reps: usize, seed: u64) -> Result<Vec<KernelRow>, CliError> {
    let m = ((n as f64).sqrt().round() as usize).max(2);
    let a = poisson2d(m);
    let n = a.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for &s in s_values {
        if s == 0 {
            return Err(CliError::Config("s must be at least 1".into()));
        }
        let x = generate_rhs(n, s, seed);
        let mut y = generate_rhs(n, s, seed + 1);

        let mut c = KernelCounters::default();
        bop(&a, &x, &mut c).map_err(CliError::config)?;
        let t = median_time_us(reps, || {
            bop(&a, &x, &mut KernelCounters::default()).expect("shapes match");
        });
        rows.push(row("bop", n, s, s, c, t));

        for p in group_widths(s) {
            let alg = AlgebraSpec::block_parallel(s, p).map_err(CliError::config)?;
            let mut c = KernelCounters::default();
            bdot(&x, &y, &alg, &mut c).map_err(CliError::config)?;
            let t = median_time_us(reps, || {
                bdot(&x, &y, &alg, &mut KernelCounters::default()).expect("shapes match");
            });
            rows.push(row("bdot", n, s, p, c, t));

            let gamma = random_element(&mut rng, &alg).scale(1e-3);
            let mut c = KernelCounters::default();
            baxpy(&mut y, &x, &gamma, &mut c).map_err(CliError::config)?;
            let t = median_time_us(reps, || {
                baxpy(&mut y, &x, &gamma, &mut KernelCounters::default()).expect("shapes match");
            });
            rows.push(row("baxpy", n, s, p, c, t));
        }
    }
    Ok(rows)
}

pub fn kernel_table(rows: &[KernelRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

/// Overlap benchmark table with the world shape in every row.
pub fn overlap_table(world: WorldConfig) -> Result<String, CliError> {
    let rows = overlap_benchmark(world).map_err(CliError::config)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["ranks", "overlap_fraction", "t_base_us", "t_work_us", "t_iter_us", "t_ovhd_us", "t_avail_us", "avail_ratio"]).expect("in-memory write");
    for r in rows {
        let ratio = if r.t_base > 0.0 { r.t_avail / r.t_base } else { 0.0 };
        w.write_record([
            world.ranks.to_string(),
            world.overlap.fraction().to_string(),
            r.t_base.to_string(),
            r.t_work.to_string(),
            r.t_iter.to_string(),
            r.t_ovhd.to_string(),
            r.t_avail.to_string(),
            format!("{ratio:.4}"),
        ])
        .expect("in-memory write");
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8"))
}
