//! Command-line surface. Every command is a thin wrapper over library calls.
//!
//! Exit codes: 0 success, 1 configuration/usage/I-O error, 2 verification
//! failure, 3 numeric failure.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::{Config, SEED_ENV};
use crate::error::{Error, Result};
use crate::learner::{partition, partition_summary};
use crate::montecarlo::{run_suite, SuiteConfig};
use crate::orchestrator::{load_datasets, simulate};
use crate::rng::{tag, RandomStream};
use crate::theory::evaluate_op;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "optivote",
    version,
    about = "OptiVote simulator and theory engine"
)]
pub struct Cli {
    /// Worker threads; defaults to the available cores. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a federated training experiment.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dump_power: bool,
        #[arg(long)]
        dump_slots: bool,
        /// Dotted-path overrides, e.g. `--run.seed 7 --power.rho 0.1`.
        #[arg(
            trailing_var_arg = true,
            allow_hyphen_values = true,
            value_name = "--KEY VALUE"
        )]
        overrides: Vec<String>,
    },
    /// Evaluate one closed-form operation; prints a JSON object.
    Theory {
        #[arg(long)]
        op: String,
        /// JSON object of numeric arguments; flags take precedence.
        #[arg(long)]
        inputs: Option<PathBuf>,
        /// Arguments as `--name value` pairs, e.g. `--M 10 --xi 1 --q 0.2`.
        #[arg(
            trailing_var_arg = true,
            allow_hyphen_values = true,
            value_name = "--NAME VALUE"
        )]
        args: Vec<String>,
    },
    /// Run the Monte Carlo verification suite; prints a JSON report array.
    Verify {
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Take channel and power parameters from this config.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate an operation over a grid; prints CSV, one row per point.
    Sweep {
        #[arg(long)]
        op: String,
        /// Grid axis `name=v1,v2,...`; repeatable, combined as a Cartesian product.
        #[arg(long = "grid", required = true)]
        grids: Vec<String>,
        /// Fixed arguments as `--name value` pairs.
        #[arg(
            trailing_var_arg = true,
            allow_hyphen_values = true,
            value_name = "--NAME VALUE"
        )]
        args: Vec<String>,
    },
    /// Print per-node sample and label counts for a config's partition.
    PartitionInspect {
        #[arg(long)]
        config: PathBuf,
        #[arg(
            trailing_var_arg = true,
            allow_hyphen_values = true,
            value_name = "--KEY VALUE"
        )]
        overrides: Vec<String>,
    },
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}

/// Parses `--key value` pairs.
pub fn parse_pairs(raw: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = raw.iter();
    while let Some(flag) = it.next() {
        let key = flag
            .strip_prefix("--")
            .filter(|k| !k.is_empty())
            .ok_or_else(|| Error::usage(format!("expected `--name value`, got `{flag}`")))?;
        if let Some((k, v)) = key.split_once('=') {
            out.push((k.to_string(), v.to_string()));
            continue;
        }
        let value = it
            .next()
            .ok_or_else(|| Error::usage(format!("missing value for `{flag}`")))?;
        out.push((key.to_string(), value.clone()));
    }
    Ok(out)
}

fn numeric_args(pairs: &[(String, String)]) -> Result<BTreeMap<String, f64>> {
    pairs
        .iter()
        .map(|(k, v)| {
            v.trim()
                .parse::<f64>()
                .map(|x| (k.clone(), x))
                .map_err(|_| Error::usage(format!("argument `{k}` is not a number: `{v}`")))
        })
        .collect()
}

fn read_inputs(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::config(
            path.display().to_string(),
            format!("expected an object of numbers: {e}"),
        )
    })
}

fn load_config(path: &Path, overrides: &[String]) -> Result<Config> {
    let pairs = parse_pairs(overrides)?;
    let env_seed = std::env::var(SEED_ENV).ok();
    Config::load(path, &pairs, env_seed.as_deref())
}

fn parse_grid(spec: &str) -> Result<(String, Vec<f64>)> {
    let (name, values) = spec
        .split_once('=')
        .ok_or_else(|| Error::usage(format!("grid `{spec}` must look like name=v1,v2")))?;
    let values = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::usage(format!("grid `{name}` has a non-numeric value `{v}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(Error::usage(format!("grid `{name}` is empty")));
    }
    Ok((name.to_string(), values))
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Evaluates `op` over the Cartesian product of `grids` (first axis slowest)
/// and writes CSV: grid columns, then the result fields in key order.
pub fn sweep<W: Write>(
    out: &mut W,
    op: &str,
    grids: &[(String, Vec<f64>)],
    fixed: &BTreeMap<String, f64>,
) -> Result<()> {
    let io = |e| Error::io("<stdout>", e);
    let total: usize = grids.iter().map(|(_, v)| v.len()).product();
    let mut header_written = false;
    for flat in 0..total {
        let mut args = fixed.clone();
        let mut rem = flat;
        let mut point = vec![0.0; grids.len()];
        for (axis, (name, values)) in grids.iter().enumerate().rev() {
            point[axis] = values[rem % values.len()];
            rem /= values.len();
            args.insert(name.clone(), point[axis]);
        }
        let result = evaluate_op(op, &args)?;
        let fields = result
            .as_object()
            .ok_or_else(|| Error::Numeric(format!("{op} did not return an object")))?;
        if !header_written {
            let names: Vec<&str> = grids
                .iter()
                .map(|(n, _)| n.as_str())
                .chain(fields.keys().map(String::as_str))
                .collect();
            writeln!(out, "{}", names.join(",")).map_err(io)?;
            header_written = true;
        }
        let cells: Vec<String> = point
            .iter()
            .map(|x| x.to_string())
            .chain(fields.values().map(csv_cell))
            .collect();
        writeln!(out, "{}", cells.join(",")).map_err(io)?;
    }
    Ok(())
}

fn dispatch<W: Write>(command: Command, out: &mut W) -> Result<i32> {
    let io = |e| Error::io("<stdout>", e);
    match command {
        Command::Simulate {
            config,
            out: dir,
            dump_power,
            dump_slots,
            overrides,
        } => {
            let mut cfg = load_config(&config, &overrides)?;
            if let Some(dir) = dir {
                cfg.output.dir = dir;
            }
            cfg.output.dump_power |= dump_power;
            cfg.output.dump_slots |= dump_slots;
            let summary = simulate(&cfg)?;
            let brief = json!({
                "output_dir": cfg.output.dir,
                "config_hash": summary.config_hash,
                "rounds": summary.rounds.len(),
                "final_accuracy": summary.final_accuracy,
                "wall_time_s": summary.wall_time_s,
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&brief).unwrap()).map_err(io)?;
            Ok(EXIT_OK)
        }
        Command::Theory { op, inputs, args } => {
            let mut values = match inputs {
                Some(path) => read_inputs(&path)?,
                None => BTreeMap::new(),
            };
            values.extend(numeric_args(&parse_pairs(&args)?)?);
            let result = evaluate_op(&op, &values)?;
            writeln!(out, "{result}").map_err(io)?;
            Ok(EXIT_OK)
        }
        Command::Verify {
            samples,
            seed,
            config,
            out: path,
        } => {
            let cfg = match config {
                Some(p) => load_config(&p, &[])?,
                None => Config::default(),
            };
            let reports = run_suite(&SuiteConfig {
                channel: cfg.channel.params()?,
                power: cfg.power.params()?,
                samples,
                seed,
            })?;
            let text = serde_json::to_string_pretty(&reports).unwrap();
            if let Some(path) = path {
                std::fs::write(&path, format!("{text}\n")).map_err(|e| Error::io(&path, e))?;
            }
            writeln!(out, "{text}").map_err(io)?;
            Ok(if reports.iter().all(|r| r.pass) {
                EXIT_OK
            } else {
                EXIT_VERIFY
            })
        }
        Command::Sweep { op, grids, args } => {
            let grids = grids
                .iter()
                .map(|g| parse_grid(g))
                .collect::<Result<Vec<_>>>()?;
            let fixed = numeric_args(&parse_pairs(&args)?)?;
            sweep(out, &op, &grids, &fixed)?;
            Ok(EXIT_OK)
        }
        Command::PartitionInspect { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let (train, _) = load_datasets(&cfg)?;
            let seed =
                rand::RngCore::next_u64(&mut RandomStream::derive(cfg.run.seed, &[tag::PARTITION]));
            let parts = partition(&train, cfg.run.num_nodes, cfg.learner.partition, seed)?;
            let summary = partition_summary(&train, &parts);
            writeln!(out, "{}", serde_json::to_string_pretty(&summary).unwrap()).map_err(io)?;
            Ok(EXIT_OK)
        }
    }
}

/// Entry point shared by the binary and the tests. `args[0]` is the program name.
pub fn main_with<W: Write>(args: &[String], out: &mut W) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            if e.use_stderr() {
                let _ = e.print();
            } else {
                let _ = write!(out, "{e}");
            }
            return code;
        }
    };
    let threads = cli.threads;
    // Output is buffered so the work can run inside a dedicated pool.
    let work = move || {
        let mut buf = Vec::new();
        let result = dispatch(cli.command, &mut buf);
        (result, buf)
    };
    let (result, buf) = match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
        {
            Ok(pool) => pool.install(work),
            Err(e) => (
                Err(Error::usage(format!("cannot build thread pool: {e}"))),
                Vec::new(),
            ),
        },
        None => work(),
    };
    if out.write_all(&buf).and_then(|_| out.flush()).is_err() {
        return EXIT_CONFIG;
    }
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("optivote: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn pairs() {
        let p = parse_pairs(&s(&["--run.seed", "7", "--power.rho=0.1"])).unwrap();
        assert_eq!(
            p,
            vec![
                ("run.seed".into(), "7".into()),
                ("power.rho".into(), "0.1".into())
            ]
        );
        assert!(parse_pairs(&s(&["--x"])).is_err());
        assert!(parse_pairs(&s(&["x", "1"])).is_err());
    }

    #[test]
    fn grid_parse() {
        let (n, v) = parse_grid("xi=0.5,1,5").unwrap();
        assert_eq!(n, "xi");
        assert_eq!(v, vec![0.5, 1.0, 5.0]);
        assert!(parse_grid("xi").is_err());
        assert!(parse_grid("xi=a").is_err());
    }

    #[test]
    fn theory_prints_json() {
        let mut buf = Vec::new();
        let code = main_with(
            &s(&[
                "optivote",
                "theory",
                "--op",
                "error_bound",
                "--M",
                "10",
                "--xi",
                "1",
                "--q",
                "0.2",
            ]),
            &mut buf,
        );
        assert_eq!(code, 0);
        let v: Value = serde_json::from_slice(&buf).unwrap();
        assert!((v["error_bound"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn sweep_rows() {
        let mut buf = Vec::new();
        let code = main_with(
            &s(&[
                "optivote",
                "sweep",
                "--op",
                "error_bound",
                "--grid",
                "M=4,10",
                "--grid",
                "q=0.1,0.2,0.3",
                "--xi",
                "1",
            ]),
            &mut buf,
        );
        assert_eq!(code, 0);
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], "M,q,error_bound");
        assert!(lines[1].starts_with("4,0.1,"));
    }

    #[test]
    fn bad_op_is_config_exit() {
        let mut buf = Vec::new();
        assert_eq!(
            main_with(&s(&["optivote", "theory", "--op", "nope"]), &mut buf),
            EXIT_CONFIG
        );
        assert_eq!(main_with(&s(&["optivote", "bogus"]), &mut buf), EXIT_CONFIG);
    }
}
