use serde::Serialize;

use super::{CommError, CommWorld, WorldConfig};

/// One row of the overlap benchmark, all times in µs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OverlapReport {
    /// Latency of a bare blocking reduction.
    pub t_base: f64,
    /// Duration of start, work, wait.
    pub t_iter: f64,
    /// Work registered between start and wait.
    pub t_work: f64,
    /// `t_iter − t_work`.
    pub t_ovhd: f64,
    /// `t_base − t_ovhd`: latency hidden behind the work.
    pub t_avail: f64,
}

/// Measures how much reduction latency hides behind local work on the
/// simulated clock. Work starts at `t_base / 4` and doubles until one
/// iteration exceeds `2·t_base`. A world with no latency yields one row.
pub fn overlap_benchmark(config: WorldConfig) -> Result<Vec<OverlapReport>, CommError> {
    let mut world = CommWorld::new(config, config.ranks)?;
    let contribution = || vec![0.0f64; config.ranks];
    let start = world.time();
    let h = world.iallreduce(contribution())?;
    world.wait_get(h)?;
    let t_base = world.time() - start;

    let mut out = Vec::new();
    let mut t_work = t_base / 4.0;
    loop {
        let start = world.time();
        let h = world.iallreduce(contribution())?;
        world.advance_all(t_work);
        world.wait_get(h)?;
        let t_iter = world.time() - start;
        let t_ovhd = t_iter - t_work;
        out.push(OverlapReport { t_base, t_iter, t_work, t_ovhd, t_avail: t_base - t_ovhd });
        if t_base <= 0.0 || t_iter > 2.0 * t_base {
            break;
        }
        t_work *= 2.0;
    }
    Ok(out)
}
