//! One function per subcommand. Each returns the text of its outputs; writing
//! them (and their manifests) is left to the caller.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use liesde::algebra::Matrix;
use liesde::campbell::{ch_ladder, ChOptions};
use liesde::connections::{
    alpha_biinvariant, alpha_levi_civita, u_from_metric, ConnectionFunction, MetricSpec,
};
use liesde::explog::{
    ito_exponential, ito_logarithm, round_trip_ladder, strat_exponential, strat_logarithm,
    AlgebraConnection,
};
use liesde::groups::GroupKind;
use liesde::martingale::martingale_verdict_streaming;
use liesde::paths::{
    brownian_driver, drift_diffusion_driver, AlgebraPath, Ensemble, GroupPath, Sampled, TimeGrid,
};
use liesde::suite::run_suite;

use crate::config::{Command, Connection, Driver, ExperimentConfig, Format, Scheme};
use crate::error::CliError;

/// One output file. The primary artifact goes to `--out` (or stdout); the
/// others sit next to it as `<stem>.<suffix>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub suffix: Option<&'static str>,
    pub contents: String,
}

impl Artifact {
    fn primary(contents: String) -> Self {
        Self {
            suffix: None,
            contents,
        }
    }
}

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    schema: u32,
    command: String,
    #[serde(flatten)]
    body: &'a T,
}

fn json<T: Serialize>(command: Command, body: &T) -> String {
    let mut s = serde_json::to_string_pretty(&Versioned {
        schema: 1,
        command: command.to_string(),
        body,
    })
    .expect("reports serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// Failed and total acceptance criteria; regress only.
    pub regression: Option<(usize, usize)>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let artifacts = match cfg.command {
        Command::Exp => exp(cfg),
        Command::Log => log(cfg),
        Command::Roundtrip => roundtrip(cfg),
        Command::Campbell => campbell(cfg),
        Command::MartingaleTest => martingale_test(cfg),
        Command::UTable => u_table(cfg),
        Command::Convergence => convergence(cfg),
        Command::Regress => return regress(cfg),
    }?;
    Ok(Outcome {
        artifacts,
        regression: None,
    })
}

fn alpha(cfg: &ExperimentConfig) -> Result<ConnectionFunction, CliError> {
    Ok(match cfg.connection {
        Connection::Biinvariant => alpha_biinvariant(cfg.group),
        Connection::Levicivita => alpha_levi_civita(&MetricSpec::standard(cfg.group, cfg.lambda)?)?,
    })
}

fn grid(cfg: &ExperimentConfig) -> Result<TimeGrid, CliError> {
    Ok(TimeGrid::new(cfg.dt * cfg.steps as f64, cfg.steps)?)
}

/// Builds the driver for one replica and develops it into the group.
struct Simulator {
    group: GroupKind,
    grid: TimeGrid,
    driver: Driver,
    scheme: Scheme,
    drift: Vec<f64>,
    cov: Matrix,
    factor: Matrix,
    alpha: ConnectionFunction,
    flat: AlgebraConnection,
}

impl Simulator {
    fn new(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let cov = cfg.covariance()?;
        Ok(Self {
            group: cfg.group,
            grid: grid(cfg)?,
            driver: cfg.driver,
            scheme: cfg.scheme,
            drift: cfg.drift.clone(),
            factor: cov.cholesky()?,
            cov,
            alpha: alpha(cfg)?,
            flat: AlgebraConnection::flat(cfg.group),
        })
    }

    fn driver_path(&self, seed: u64) -> liesde::Result<AlgebraPath> {
        match self.driver {
            Driver::Bm => brownian_driver(self.group, self.grid, seed, &self.cov),
            Driver::Drift => {
                drift_diffusion_driver(self.group, self.grid, seed, &self.drift, &self.factor)
            }
        }
    }

    fn group_path(&self, seed: u64) -> liesde::Result<GroupPath> {
        let m = self.driver_path(seed)?;
        match self.scheme {
            Scheme::Ito => ito_exponential(&m, &self.alpha, &self.flat),
            Scheme::Strat => strat_exponential(&m),
        }
    }

    fn logarithm(&self, x: &GroupPath) -> liesde::Result<AlgebraPath> {
        match self.scheme {
            Scheme::Ito => ito_logarithm(x, &self.alpha, &self.flat),
            Scheme::Strat => strat_logarithm(x),
        }
    }
}

fn group_header(group: GroupKind) -> String {
    let d = group.spec().matrix_dim();
    let mut h = String::from("replica,k,t");
    for i in 1..=d {
        for j in 1..=d {
            write!(h, ",m{i}{j}").unwrap();
        }
    }
    h
}

fn algebra_header(group: GroupKind) -> String {
    let mut h = String::from("replica,k,t");
    for i in 1..=group.spec().algebra_dim() {
        write!(h, ",c{i}").unwrap();
    }
    h
}

// Adding 0.0 turns -0 into 0, keeping CSV cells free of signed zeros.
fn push_cells(out: &mut String, values: &[f64]) {
    for v in values {
        write!(out, ",{}", v + 0.0).unwrap();
    }
}

fn push_row(out: &mut String, replica: usize, k: usize, t: f64, values: &[f64]) {
    write!(out, "{replica},{k},{t}").unwrap();
    push_cells(out, values);
    out.push('\n');
}

fn group_csv(group: GroupKind, paths: &[GroupPath]) -> String {
    let mut out = group_header(group);
    out.push('\n');
    for (r, p) in paths.iter().enumerate() {
        for (k, m) in p.values().iter().enumerate() {
            push_row(&mut out, r, k, p.grid().time(k), m.as_slice());
        }
    }
    out
}

fn algebra_csv(group: GroupKind, paths: &[AlgebraPath]) -> String {
    let mut out = algebra_header(group);
    out.push('\n');
    for (r, p) in paths.iter().enumerate() {
        for k in 0..=p.grid().steps() {
            push_row(&mut out, r, k, p.grid().time(k), p.state(k));
        }
    }
    out
}

#[derive(Serialize)]
struct PathsJson {
    group: GroupKind,
    basis: &'static [&'static str],
    horizon: f64,
    steps: usize,
    /// `paths[replica][k]`, matrices row-major for group paths.
    paths: Vec<Vec<Vec<f64>>>,
}

fn paths_json(cfg: &ExperimentConfig, grid: TimeGrid, paths: Vec<Vec<Vec<f64>>>) -> String {
    json(
        cfg.command,
        &PathsJson {
            group: cfg.group,
            basis: cfg.group.spec().basis_names(),
            horizon: grid.horizon(),
            steps: grid.steps(),
            paths,
        },
    )
}

fn exp(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let sim = Simulator::new(cfg)?;
    let ens = Ensemble::generate(cfg.replicas, cfg.seed, |seed, _| sim.group_path(seed))?;
    let text = match cfg.format {
        Format::Csv => group_csv(cfg.group, &ens.paths),
        Format::Json => paths_json(
            cfg,
            sim.grid,
            ens.paths
                .iter()
                .map(|p| p.values().iter().map(|m| m.as_slice().to_vec()).collect())
                .collect(),
        ),
    };
    Ok(vec![Artifact::primary(text)])
}

fn log(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let sim = Simulator::new(cfg)?;
    let logs: Vec<AlgebraPath> = match &cfg.input {
        Some(path) => {
            use rayon::prelude::*;
            read_group_paths(path, cfg.group)?
                .par_iter()
                .map(|x| sim.logarithm(x))
                .collect::<liesde::Result<_>>()?
        }
        None => {
            Ensemble::generate(cfg.replicas, cfg.seed, |seed, _| {
                sim.logarithm(&sim.group_path(seed)?)
            })?
            .paths
        }
    };
    let grid = logs.first().map(|p| p.grid()).unwrap_or(sim.grid);
    let text = match cfg.format {
        Format::Csv => algebra_csv(cfg.group, &logs),
        Format::Json => paths_json(
            cfg,
            grid,
            logs.iter()
                .map(|p| {
                    (0..=p.grid().steps())
                        .map(|k| p.state(k).to_vec())
                        .collect()
                })
                .collect(),
        ),
    };
    Ok(vec![Artifact::primary(text)])
}

/// Reads group paths in the `exp` CSV layout, one block of rows per replica.
pub fn read_group_paths(path: &Path, group: GroupKind) -> Result<Vec<GroupPath>, CliError> {
    let usage = |msg: String| CliError::Usage(format!("{}: {msg}", path.display()));
    let text = fs::read_to_string(path).map_err(|e| usage(e.to_string()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| usage("empty file".into()))?;
    if header.trim() != group_header(group) {
        return Err(usage(format!("header must be `{}`", group_header(group))));
    }
    let d = group.spec().matrix_dim();
    let mut blocks: Vec<(Vec<f64>, Vec<Matrix>)> = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 + d * d {
            return Err(usage(format!(
                "row {} has {} fields, expected {}",
                i + 2,
                fields.len(),
                3 + d * d
            )));
        }
        let bad = |what: &str| usage(format!("row {}: bad {what}", i + 2));
        let replica: usize = fields[0].parse().map_err(|_| bad("replica"))?;
        let k: usize = fields[1].parse().map_err(|_| bad("k"))?;
        let t: f64 = fields[2].parse().map_err(|_| bad("t"))?;
        let entries = fields[3..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad("matrix entry"))?;
        if replica == blocks.len() && k == 0 {
            blocks.push((Vec::new(), Vec::new()));
        }
        let current = blocks.len();
        match blocks.last_mut() {
            Some((ts, ms)) if replica + 1 == current && k == ms.len() => {
                ts.push(t);
                ms.push(Matrix::from_fn(d, d, |r, c| entries[r * d + c]));
            }
            _ => return Err(bad("replica/k ordering")),
        }
    }
    blocks
        .into_iter()
        .map(|(ts, ms)| {
            let steps = ms.len().saturating_sub(1);
            if steps == 0 {
                return Err(usage("every replica needs at least two rows".into()));
            }
            let grid = TimeGrid::new(ts[steps] - ts[0], steps)?;
            Ok(GroupPath::from_values(group, grid, ms)?)
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[derive(Serialize)]
struct RoundTripJson<'a> {
    group: GroupKind,
    connection: &'a str,
    dt: f64,
    steps: usize,
    base_seed: u64,
    errors: &'a [f64],
    mean: f64,
}

fn roundtrip(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let alpha = alpha(cfg)?;
    let report = round_trip_ladder(
        cfg.group,
        &alpha,
        &[cfg.dt],
        cfg.dt * cfg.steps as f64,
        cfg.replicas,
        cfg.seed,
    )?;
    let errors = &report.errors[0];
    let text = match cfg.format {
        Format::Csv => {
            let mut out = String::from("replica,terminal_error\n");
            for (r, e) in errors.iter().enumerate() {
                writeln!(out, "{r},{e}").unwrap();
            }
            writeln!(out, "mean,{}", mean(errors)).unwrap();
            out
        }
        Format::Json => json(
            cfg.command,
            &RoundTripJson {
                group: cfg.group,
                connection: alpha.label(),
                dt: cfg.dt,
                steps: cfg.steps,
                base_seed: cfg.seed,
                errors,
                mean: mean(errors),
            },
        ),
    };
    Ok(vec![Artifact::primary(text)])
}

fn convergence(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let report = round_trip_ladder(
        cfg.group,
        &alpha(cfg)?,
        &cfg.dts,
        cfg.horizon,
        cfg.replicas,
        cfg.seed,
    )?;
    let text = match cfg.format {
        Format::Csv => {
            let mut out = String::from("dt,mean,max,std_error\n");
            for r in &report.rungs {
                writeln!(out, "{},{},{},{}", r.dt, r.mean, r.max, r.std_error).unwrap();
            }
            out
        }
        Format::Json => json(cfg.command, &report),
    };
    Ok(vec![Artifact::primary(text)])
}

fn campbell(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let opts = ChOptions {
        rule: cfg.rule,
        enforce_hypotheses: !cfg.skip_hypotheses,
        ..ChOptions::default()
    };
    let report = ch_ladder(
        cfg.group,
        &alpha(cfg)?,
        &cfg.dts,
        cfg.horizon,
        cfg.replicas,
        cfg.seed,
        &opts,
    )?;
    let text = match cfg.format {
        Format::Csv => {
            let mut out =
                String::from("dt,ch_mean,ch_max,ch_std_error,log_product_mean,log_product_max,log_product_std_error\n");
            for (c, l) in report.ch.iter().zip(&report.log_product) {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    c.dt, c.mean, c.max, c.std_error, l.mean, l.max, l.std_error
                )
                .unwrap();
            }
            out
        }
        Format::Json => json(cfg.command, &report),
    };
    Ok(vec![Artifact::primary(text)])
}

fn martingale_test(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let sim = Simulator::new(cfg)?;
    let report = martingale_verdict_streaming(
        cfg.group,
        &sim.alpha,
        cfg.replicas,
        cfg.seed,
        cfg.buckets,
        cfg.significance,
        |seed, _| sim.group_path(seed),
    )?;
    let mut z = String::from("bucket");
    for name in cfg.group.spec().basis_names() {
        write!(z, ",z_{name}").unwrap();
    }
    z.push('\n');
    for b in 0..report.buckets {
        write!(z, "{b}").unwrap();
        let row: Vec<f64> = (0..report.dim).map(|c| report.z_at(b, c)).collect();
        push_cells(&mut z, &row);
        z.push('\n');
    }
    eprintln!(
        "martingale verdict: {} (max |z| {:.2}, {:.1}% of cells within ±{})",
        if report.passed { "pass" } else { "fail" },
        report.max_abs_z,
        100.0 * report.pass_fraction,
        report.z_band
    );
    Ok(match cfg.format {
        Format::Json => vec![
            Artifact::primary(json(cfg.command, &report)),
            Artifact {
                suffix: Some("zscores.csv"),
                contents: z,
            },
        ],
        Format::Csv => vec![Artifact::primary(z)],
    })
}

#[derive(Serialize)]
struct UTableJson {
    group: GroupKind,
    lambda: f64,
    basis: &'static [&'static str],
    /// `u[i][j]` holds the coordinates of U(eᵢ, eⱼ).
    u: Vec<Vec<Vec<f64>>>,
}

fn u_table(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let u = u_from_metric(&MetricSpec::standard(cfg.group, cfg.lambda)?)?;
    let n = u.dim();
    let names = cfg.group.spec().basis_names();
    let entry = |i: usize, j: usize| (0..n).map(|k| u.coeff(i, j, k)).collect::<Vec<f64>>();
    let text = match cfg.format {
        Format::Csv => {
            let mut out = String::from("group,lambda,a,b");
            for name in names {
                write!(out, ",{name}").unwrap();
            }
            out.push('\n');
            for i in 0..n {
                for j in 0..n {
                    write!(
                        out,
                        "{},{},{},{}",
                        cfg.group, cfg.lambda, names[i], names[j]
                    )
                    .unwrap();
                    push_cells(&mut out, &entry(i, j));
                    out.push('\n');
                }
            }
            out
        }
        Format::Json => json(
            cfg.command,
            &UTableJson {
                group: cfg.group,
                lambda: cfg.lambda,
                basis: names,
                u: (0..n)
                    .map(|i| (0..n).map(|j| entry(i, j)).collect())
                    .collect(),
            },
        ),
    };
    Ok(vec![Artifact::primary(text)])
}

/// Runs the acceptance criteria. Failing criteria still produce the results
/// file; the caller turns `passed == false` into a nonzero exit.
fn regress(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let report = run_suite(&cfg.criteria, |c| println!("{}", c.line()))?;
    let mut text = serde_json::to_string_pretty(&report).expect("suite report serializes");
    text.push('\n');
    let total = report.criteria.len();
    let failed = report.criteria.iter().filter(|c| !c.passed).count();
    println!("regress: {}/{total} criteria passed", total - failed);
    Ok(Outcome {
        artifacts: vec![Artifact::primary(text)],
        regression: Some((failed, total)),
    })
}
