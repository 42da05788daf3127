//! Flag parsing, flat `key=value` config files and the resolved experiment config.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use liesde::algebra::Matrix;
use liesde::campbell::AdRule;
use liesde::groups::GroupKind;
use liesde::suite::{CRITERIA, LADDER};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Exp,
    Log,
    Roundtrip,
    Campbell,
    MartingaleTest,
    UTable,
    Convergence,
    Regress,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Connection {
    Biinvariant,
    Levicivita,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Driver {
    Bm,
    Drift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scheme {
    Ito,
    Strat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

macro_rules! value_enum_text {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
            }
        }

        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                <$t as ValueEnum>::from_str(s.trim(), true)
            }
        }
    )*};
}

value_enum_text!(Command, Connection, Driver, Scheme, Format);

/// Every option, unresolved. Filled from the command line and from `--config`.
#[derive(Debug, Clone, Default, PartialEq, Args)]
pub struct Flags {
    /// so3, se2, se3, e11, n3 or sl2r
    #[arg(long)]
    pub group: Option<GroupKind>,
    #[arg(long, value_enum)]
    pub connection: Option<Connection>,
    /// Metric weight of the translation block
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Horizon of the dt ladders (campbell, convergence)
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Comma-separated dt ladder, each a divisor of the horizon
    #[arg(long, value_delimiter = ',')]
    pub dts: Option<Vec<f64>>,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub driver: Option<Driver>,
    #[arg(long, value_enum)]
    pub scheme: Option<Scheme>,
    /// Drift vector of the drift driver, comma-separated algebra coordinates
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub drift: Option<Vec<f64>>,
    /// n×n driver covariance as CSV
    #[arg(long)]
    pub cov: Option<PathBuf>,
    #[arg(long)]
    pub buckets: Option<usize>,
    #[arg(long)]
    pub significance: Option<f64>,
    /// Ad-integral step rule for campbell: leftpoint or midpoint
    #[arg(long)]
    pub rule: Option<AdRule>,
    /// Run campbell without the α(A,A) = 0 and null-QV checks
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub skip_hypotheses: Option<bool>,
    /// Group-path CSV to take the logarithm of (log only)
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Criterion ids for regress, comma-separated (default: all)
    #[arg(long, value_delimiter = ',')]
    pub criteria: Option<Vec<u8>>,
    /// Flat key=value file; flags on the command line win
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError>
where
    T::Err: fmt::Display,
{
    value.split(',').map(|v| parse_value(key, v)).collect()
}

impl Flags {
    /// Parses a flat config file: one `key = value` per line, `#` starts a comment.
    /// Keys are the long flag names; `_` and `-` are interchangeable.
    pub fn from_kv(text: &str) -> Result<(Flags, Option<Command>), CliError> {
        let mut f = Flags::default();
        let mut command = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {}: expected key=value", lineno + 1))
            })?;
            let key = key.trim().replace('_', "-");
            let value = value.trim();
            let k = key.as_str();
            match k {
                "command" => command = Some(parse_value(k, value)?),
                "group" => f.group = Some(parse_value(k, value)?),
                "connection" => f.connection = Some(parse_value(k, value)?),
                "lambda" => f.lambda = Some(parse_value(k, value)?),
                "dt" => f.dt = Some(parse_value(k, value)?),
                "steps" => f.steps = Some(parse_value(k, value)?),
                "horizon" => f.horizon = Some(parse_value(k, value)?),
                "dts" => f.dts = Some(parse_list(k, value)?),
                "replicas" => f.replicas = Some(parse_value(k, value)?),
                "seed" => f.seed = Some(parse_value(k, value)?),
                "driver" => f.driver = Some(parse_value(k, value)?),
                "scheme" => f.scheme = Some(parse_value(k, value)?),
                "drift" => f.drift = Some(parse_list(k, value)?),
                "cov" => f.cov = Some(PathBuf::from(value)),
                "buckets" => f.buckets = Some(parse_value(k, value)?),
                "significance" => f.significance = Some(parse_value(k, value)?),
                "rule" => f.rule = Some(parse_value(k, value)?),
                "skip-hypotheses" => f.skip_hypotheses = Some(parse_value(k, value)?),
                "input" => f.input = Some(PathBuf::from(value)),
                "out" => f.out = Some(PathBuf::from(value)),
                "format" => f.format = Some(parse_value(k, value)?),
                "workers" => f.workers = Some(parse_value(k, value)?),
                "criteria" => f.criteria = Some(parse_list(k, value)?),
                "config" => {
                    return Err(CliError::Usage(
                        "config files cannot include other config files".into(),
                    ))
                }
                other => return Err(CliError::Usage(format!("unknown config key `{other}`"))),
            }
        }
        Ok((f, command))
    }

    /// Fields set in `self` win over `base`.
    pub fn over(self, base: Flags) -> Flags {
        Flags {
            group: self.group.or(base.group),
            connection: self.connection.or(base.connection),
            lambda: self.lambda.or(base.lambda),
            dt: self.dt.or(base.dt),
            steps: self.steps.or(base.steps),
            horizon: self.horizon.or(base.horizon),
            dts: self.dts.or(base.dts),
            replicas: self.replicas.or(base.replicas),
            seed: self.seed.or(base.seed),
            driver: self.driver.or(base.driver),
            scheme: self.scheme.or(base.scheme),
            drift: self.drift.or(base.drift),
            cov: self.cov.or(base.cov),
            buckets: self.buckets.or(base.buckets),
            significance: self.significance.or(base.significance),
            rule: self.rule.or(base.rule),
            skip_hypotheses: self.skip_hypotheses.or(base.skip_hypotheses),
            input: self.input.or(base.input),
            out: self.out.or(base.out),
            format: self.format.or(base.format),
            workers: self.workers.or(base.workers),
            criteria: self.criteria.or(base.criteria),
            config: self.config.or(base.config),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub group: GroupKind,
    pub connection: Connection,
    pub lambda: f64,
    pub dt: f64,
    pub steps: usize,
    pub horizon: f64,
    pub dts: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    pub driver: Driver,
    pub scheme: Scheme,
    pub drift: Vec<f64>,
    pub cov: Option<PathBuf>,
    pub buckets: usize,
    pub significance: f64,
    pub rule: AdRule,
    pub skip_hypotheses: bool,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub workers: usize,
    pub criteria: Vec<u8>,
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Usage(format!(
            "--{name} must be a positive number, got {v}"
        )))
    }
}

fn nonzero(name: &str, v: usize) -> Result<usize, CliError> {
    if v > 0 {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("--{name} must be at least 1")))
    }
}

impl ExperimentConfig {
    /// Applies per-command defaults and validates everything that can be checked
    /// without touching the numerics.
    pub fn resolve(command: Command, f: Flags) -> Result<Self, CliError> {
        let group = f.group.unwrap_or(match command {
            Command::Campbell => GroupKind::So3,
            _ => GroupKind::Se3,
        });
        let n = group.spec().algebra_dim();
        let default_replicas = match command {
            Command::MartingaleTest => 1000,
            Command::Campbell => 256,
            _ => 64,
        };
        let default_format = match command {
            Command::Campbell | Command::MartingaleTest | Command::Regress => Format::Json,
            _ => Format::Csv,
        };
        let drift = f.drift.unwrap_or_else(|| {
            let mut b = vec![0.0; n];
            b[0] = 1.0;
            b
        });
        if drift.len() != n || drift.iter().any(|b| !b.is_finite()) {
            return Err(CliError::Usage(format!(
                "--drift needs {n} finite coordinates for {group}"
            )));
        }
        let dts = f.dts.unwrap_or_else(|| LADDER.to_vec());
        if dts.is_empty() {
            return Err(CliError::Usage("--dts is empty".into()));
        }
        for &dt in &dts {
            positive("dts", dt)?;
        }
        let significance = f
            .significance
            .unwrap_or(liesde::martingale::DEFAULT_SIGNIFICANCE);
        if !(significance > 0.0 && significance < 1.0) {
            return Err(CliError::Usage(format!(
                "--significance must lie in (0, 1), got {significance}"
            )));
        }
        let criteria = f
            .criteria
            .unwrap_or_else(|| (1..=CRITERIA.len() as u8).collect());
        if let Some(bad) = criteria
            .iter()
            .find(|&&c| c == 0 || c as usize > CRITERIA.len())
        {
            return Err(CliError::Usage(format!(
                "no criterion {bad}; ids run from 1 to {}",
                CRITERIA.len()
            )));
        }
        let out = match (command, f.out) {
            (Command::Regress, None) => Some(PathBuf::from("regress.json")),
            (_, out) => out,
        };
        if let Some(path) = &out {
            check_output_dir(path)?;
        }
        if let Some(path) = f.input.as_ref().filter(|p| !p.is_file()) {
            return Err(CliError::Usage(format!(
                "input file {} does not exist",
                path.display()
            )));
        }
        let cfg = ExperimentConfig {
            command,
            group,
            connection: f.connection.unwrap_or(Connection::Levicivita),
            lambda: positive("lambda", f.lambda.unwrap_or(1.0))?,
            dt: positive("dt", f.dt.unwrap_or(1e-3))?,
            steps: nonzero("steps", f.steps.unwrap_or(1000))?,
            horizon: positive("horizon", f.horizon.unwrap_or(1.0))?,
            dts,
            replicas: nonzero("replicas", f.replicas.unwrap_or(default_replicas))?,
            seed: f.seed.unwrap_or(42),
            driver: f.driver.unwrap_or(Driver::Bm),
            scheme: f.scheme.unwrap_or(Scheme::Ito),
            drift,
            cov: f.cov,
            buckets: nonzero("buckets", f.buckets.unwrap_or(20))?,
            significance,
            rule: f.rule.unwrap_or_default(),
            skip_hypotheses: f.skip_hypotheses.unwrap_or(false),
            input: f.input,
            out,
            format: f.format.unwrap_or(default_format),
            workers: nonzero(
                "workers",
                f.workers.unwrap_or_else(rayon::current_num_threads),
            )?,
            criteria,
        };
        if cfg.buckets > cfg.steps && cfg.command == Command::MartingaleTest {
            return Err(CliError::Usage(format!(
                "--buckets ({}) cannot exceed --steps ({})",
                cfg.buckets, cfg.steps
            )));
        }
        Ok(cfg)
    }

    /// The resolved config as `key=value` lines, readable back through `--config`.
    pub fn to_kv(&self) -> String {
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut lines = vec![
            format!("command={}", self.command),
            format!("group={}", self.group),
            format!("connection={}", self.connection),
            format!("lambda={}", self.lambda),
            format!("dt={}", self.dt),
            format!("steps={}", self.steps),
            format!("horizon={}", self.horizon),
            format!("dts={}", list(&self.dts)),
            format!("replicas={}", self.replicas),
            format!("seed={}", self.seed),
            format!("driver={}", self.driver),
            format!("scheme={}", self.scheme),
            format!("drift={}", list(&self.drift)),
        ];
        if let Some(p) = &self.cov {
            lines.push(format!("cov={}", p.display()));
        }
        lines.push(format!("buckets={}", self.buckets));
        lines.push(format!("significance={}", self.significance));
        lines.push(format!("rule={}", self.rule));
        lines.push(format!("skip-hypotheses={}", self.skip_hypotheses));
        if let Some(p) = &self.input {
            lines.push(format!("input={}", p.display()));
        }
        if let Some(p) = &self.out {
            lines.push(format!("out={}", p.display()));
        }
        lines.push(format!("format={}", self.format));
        lines.push(format!("workers={}", self.workers));
        let ids: Vec<String> = self.criteria.iter().map(u8::to_string).collect();
        lines.push(format!("criteria={}", ids.join(",")));
        let mut text = format!("# liesde {}\n", env!("CARGO_PKG_VERSION"));
        for l in lines {
            text.push_str(&l);
            text.push('\n');
        }
        text
    }

    /// Loads `--cov` (or the identity) and checks it is an n×n SPD matrix.
    pub fn covariance(&self) -> Result<Matrix, CliError> {
        let n = self.group.spec().algebra_dim();
        match &self.cov {
            None => Ok(Matrix::identity(n)),
            Some(path) => load_covariance(path, n),
        }
    }
}

fn check_output_dir(path: &Path) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    if dir.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "output directory {} does not exist",
            dir.display()
        )))
    }
}

pub fn load_covariance(path: &Path, n: usize) -> Result<Matrix, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read covariance {}: {e}", path.display())))?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| parse_list::<f64>("cov", l))
        .collect::<Result<_, _>>()?;
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Usage(format!(
            "covariance {} must be {n}x{n}",
            path.display()
        )));
    }
    let m = Matrix::from_fn(n, n, |i, j| rows[i][j]);
    let asym = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (m[(i, j)] - m[(j, i)]).abs())
        .fold(0.0, f64::max);
    if !m.is_finite() || asym > 1e-12 || m.cholesky().is_err() {
        return Err(CliError::Usage(format!(
            "covariance {} is not symmetric positive definite",
            path.display()
        )));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip_is_lossless() {
        let flags = Flags {
            group: Some(GroupKind::Sl2r),
            lambda: Some(0.1 + 0.2),
            dt: Some(1.0 / 3.0),
            dts: Some(vec![2e-3, 1e-3]),
            seed: Some(u64::MAX),
            drift: Some(vec![-0.5, 1e-17, 3.0]),
            rule: Some(AdRule::Midpoint),
            workers: Some(3),
            ..Flags::default()
        };
        let cfg = ExperimentConfig::resolve(Command::Campbell, flags).unwrap();
        let (back, command) = Flags::from_kv(&cfg.to_kv()).unwrap();
        assert_eq!(command, Some(Command::Campbell));
        assert_eq!(
            ExperimentConfig::resolve(Command::Campbell, back).unwrap(),
            cfg
        );
    }

    #[test]
    fn command_line_wins_over_file() {
        let (file, _) = Flags::from_kv("group = so3\nseed=7 # pinned\n\nreplicas=10").unwrap();
        let cli = Flags {
            seed: Some(9),
            ..Flags::default()
        };
        let merged = cli.over(file);
        assert_eq!(merged.group, Some(GroupKind::So3));
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.replicas, Some(10));
    }

    #[test]
    fn bad_config_is_a_usage_error() {
        for text in ["bogus=1", "seed", "seed=-1", "group=so4", "connection=flat"] {
            assert!(
                matches!(Flags::from_kv(text), Err(CliError::Usage(_))),
                "{text}"
            );
        }
        let bad = |f: Flags| ExperimentConfig::resolve(Command::Exp, f).is_err();
        assert!(bad(Flags {
            lambda: Some(0.0),
            ..Flags::default()
        }));
        assert!(bad(Flags {
            steps: Some(0),
            ..Flags::default()
        }));
        assert!(bad(Flags {
            drift: Some(vec![1.0]),
            ..Flags::default()
        }));
        assert!(bad(Flags {
            out: Some(PathBuf::from("/no/such/dir/out.csv")),
            ..Flags::default()
        }));
    }

    #[test]
    fn per_command_defaults() {
        let c = ExperimentConfig::resolve(Command::Campbell, Flags::default()).unwrap();
        assert_eq!(
            (c.group, c.replicas, c.format),
            (GroupKind::So3, 256, Format::Json)
        );
        let m = ExperimentConfig::resolve(Command::MartingaleTest, Flags::default()).unwrap();
        assert_eq!(m.replicas, 1000);
        let r = ExperimentConfig::resolve(Command::Regress, Flags::default()).unwrap();
        assert_eq!(r.criteria.len(), 9);
        assert_eq!(r.out, Some(PathBuf::from("regress.json")));
    }
}
