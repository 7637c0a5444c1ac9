//! Parameter sweeps: the cartesian product of `key=v1,v2,…` axes applied
//! to a base configuration.

use std::str::FromStr;

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::solve::{execute, RunResult};

/// Keys accepted by [`SweepAxis`].
pub const SWEEP_KEYS: [&str; 13] = ["p", "s", "algebra", "solver", "precond", "eta", "tol", "restart", "max_iter", "ranks", "latency_model", "overlap", "seed"];

/// One swept parameter with its values, parsed from `key=v1,v2,…`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<String>,
}

impl FromStr for SweepAxis {
    type Err = CliError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let (key, values) = text.split_once('=').ok_or_else(|| CliError::Config(format!("sweep `{text}` is not key=v1,v2,...")))?;
        let key = key.trim().replace('-', "_");
        if !SWEEP_KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!("unknown sweep key `{key}`; expected one of {}", SWEEP_KEYS.join(", "))));
        }
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(CliError::Config(format!("sweep `{text}` has no values")));
        }
        Ok(Self { key, values })
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::Config(format!("sweep value `{value}` is invalid for `{key}`")))
}

/// Sets one parameter. `p` keeps the algebra family (`bg` for global kinds,
/// `bp` otherwise) and changes its group width.
pub fn apply_setting(cfg: &mut RunConfig, key: &str, value: &str) -> Result<(), CliError> {
    match key {
        "p" => {
            let p: usize = parse(key, value)?;
            let global = cfg.algebra.trim().to_ascii_lowercase().starts_with('g') || cfg.algebra.trim().to_ascii_lowercase().starts_with("bg");
            cfg.algebra = format!("{}:{p}", if global { "bg" } else { "bp" });
        }
        "s" => cfg.s = parse(key, value)?,
        "algebra" => cfg.algebra = value.to_string(),
        "solver" => cfg.solver = value.to_string(),
        "precond" => cfg.precond = value.to_string(),
        "eta" => cfg.eta = Some(parse(key, value)?),
        "tol" => cfg.tol = parse(key, value)?,
        "restart" => cfg.restart = parse(key, value)?,
        "max_iter" => cfg.max_iter = parse(key, value)?,
        "ranks" => cfg.ranks = parse(key, value)?,
        "latency_model" => cfg.latency_model = value.to_string(),
        "overlap" => cfg.overlap = value.to_string(),
        "seed" => cfg.seed = parse(key, value)?,
        other => return Err(CliError::Config(format!("unknown sweep key `{other}`"))),
    }
    Ok(())
}

/// One point of the sweep.
#[derive(Clone, Debug)]
pub struct SweepEntry {
    /// `(key, value)` of every axis, in axis order.
    pub point: Vec<(String, String)>,
    pub config: RunConfig,
}

impl SweepEntry {
    /// File-name stem such as `p-4_eta-100`.
    pub fn stem(&self) -> String {
        let parts: Vec<String> = self
            .point
            .iter()
            .map(|(k, v)| format!("{k}-{}", v.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect::<String>()))
            .collect();
        if parts.is_empty() {
            "run".into()
        } else {
            parts.join("_")
        }
    }
}

/// Expands the axes in order; the last axis varies fastest. Every entry is
/// validated before anything runs.
pub fn expand(base: &RunConfig, axes: &[SweepAxis]) -> Result<Vec<SweepEntry>, CliError> {
    let mut entries = vec![SweepEntry { point: Vec::new(), config: base.clone() }];
    for axis in axes {
        let mut next = Vec::with_capacity(entries.len() * axis.values.len());
        for e in &entries {
            for v in &axis.values {
                let mut config = e.config.clone();
                apply_setting(&mut config, &axis.key, v)?;
                let mut point = e.point.clone();
                point.push((axis.key.clone(), v.clone()));
                next.push(SweepEntry { point, config });
            }
        }
        entries = next;
    }
    for e in &entries {
        e.config.resolve().map_err(|err| CliError::Config(format!("sweep point {}: {err}", e.stem())))?;
    }
    Ok(entries)
}

/// Runs all entries, in parallel across entries, keeping the input order.
pub fn run_sweep(entries: &[SweepEntry]) -> Result<Vec<RunResult>, CliError> {
    entries.par_iter().map(|e| execute(&e.config)).collect()
}

const PARAMETER_COLUMNS: [&str; 16] = [
    "matrix", "s", "algebra", "solver", "precond", "eta", "tol", "norm", "relative", "restart", "max_iter", "ranks", "latency_model", "overlap", "shadow", "seed",
];

fn parameters(r: &RunResult) -> Vec<String> {
    let c = &r.config;
    vec![
        c.matrix.as_ref().map_or_else(|| c.generator.clone(), |p| p.display().to_string()),
        c.s.to_string(),
        c.algebra.clone(),
        c.solver.clone(),
        c.precond.clone(),
        r.eta.map_or_else(String::new, |e| format!("{e:e}")),
        format!("{:e}", c.tol),
        c.norm.clone(),
        c.relative.to_string(),
        c.restart.to_string(),
        c.max_iter.to_string(),
        c.ranks.to_string(),
        c.latency_model.clone(),
        c.overlap.clone(),
        c.shadow.clone(),
        c.seed.to_string(),
    ]
}

fn to_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

/// One row per entry: the full parameter tuple and the outcome. Contains no
/// wall-clock values.
pub fn summary_table(results: &[RunResult]) -> String {
    let mut header: Vec<&str> = PARAMETER_COLUMNS.to_vec();
    header.extend(["status", "iterations", "reorthonormalizations", "restarts", "convergence_rate", "final_frobenius", "final_max_column", "virtual_time_us"]);
    let rows = results.iter().map(|r| {
        let s = r.report.summary();
        let mut row = parameters(r);
        row.extend([
            r.status.label().to_string(),
            s.iterations.to_string(),
            s.reorthonormalizations.to_string(),
            s.restarts.to_string(),
            format!("{:e}", s.convergence_rate),
            format!("{:e}", s.final_frobenius),
            format!("{:e}", s.final_max_column),
            format!("{:e}", s.virtual_time_us),
        ]);
        row
    });
    to_csv(&header, rows)
}

/// Residual histories of all entries in long format, one row per entry and
/// iteration, for plotting residual against iterations.
pub fn history_table(results: &[RunResult]) -> String {
    let mut header: Vec<&str> = PARAMETER_COLUMNS.to_vec();
    header.extend(["iteration", "frobenius", "max_column", "reorthonormalized"]);
    let rows = results.iter().flat_map(|r| {
        let params = parameters(r);
        r.report.records.iter().map(move |rec| {
            let mut row = params.clone();
            row.extend([rec.iteration.to_string(), format!("{:e}", rec.frobenius), format!("{:e}", rec.max_column()), u8::from(rec.reorthonormalized).to_string()]);
            row
        })
    });
    to_csv(&header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axes_parse_and_reject_unknown_keys() {
        let a: SweepAxis = "p=1, 4,16".parse().unwrap();
        assert_eq!(a.values, ["1", "4", "16"]);
        assert!("colour=1".parse::<SweepAxis>().is_err());
        assert!("p=".parse::<SweepAxis>().is_err());
        assert!("p".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn p_keeps_the_algebra_family() {
        let mut c = RunConfig { algebra: "g".into(), ..RunConfig::default() };
        apply_setting(&mut c, "p", "2").unwrap();
        assert_eq!(c.algebra, "bg:2");
        let mut c = RunConfig::default();
        apply_setting(&mut c, "p", "4").unwrap();
        assert_eq!(c.algebra, "bp:4");
    }

    #[test]
    fn expansion_is_a_cartesian_product_with_last_axis_fastest() {
        let axes = ["p=1,2".parse().unwrap(), "eta=0,100".parse().unwrap()];
        let e = expand(&RunConfig { s: 4, ..RunConfig::default() }, &axes).unwrap();
        let stems: Vec<String> = e.iter().map(SweepEntry::stem).collect();
        assert_eq!(stems, ["p-1_eta-0", "p-1_eta-100", "p-2_eta-0", "p-2_eta-100"]);
    }

    #[test]
    fn invalid_points_fail_before_running() {
        let axes = ["p=3".parse().unwrap()];
        assert!(matches!(expand(&RunConfig { s: 4, ..RunConfig::default() }, &axes), Err(CliError::Config(_))));
    }

    #[test]
    fn tables_carry_the_full_parameter_tuple() {
        let base = RunConfig { generator: "poisson2d:10".into(), s: 4, ..RunConfig::default() };
        let entries = expand(&base, &["p=1,4".parse().unwrap()]).unwrap();
        let results = run_sweep(&entries).unwrap();
        let summary = summary_table(&results);
        let lines: Vec<&str> = summary.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("matrix,s,algebra,solver"));
        assert!(lines[1].starts_with("poisson2d:10,4,bp:1,cg:classic,jacobi,1e4"));
        let history = history_table(&results);
        let expected: usize = results.iter().map(|r| r.report.records.len()).sum();
        assert_eq!(history.lines().count(), expected + 1);
    }
}
