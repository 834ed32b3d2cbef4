use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use terrain_pose::bench::{self, BenchReport};
use terrain_pose::scenario::{
    run_loaded, write_error_record, ErrorRecord, LoadedScenario, Query, RunOptions,
};
use terrain_pose::{Error, ForceMode};

#[derive(Parser)]
#[command(
    name = "terrain-pose",
    version,
    about = "Static vehicle pose over B-spline terrain"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Output {
    /// Directory for result files.
    #[arg(long = "out", env = "TERRAIN_POSE_OUT", default_value = "results")]
    dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single pose query.
    Pose {
        scenario: PathBuf,
        /// Write per-step drop states as NDJSON.
        #[arg(long)]
        trace: bool,
        #[command(flatten)]
        out: Output,
        /// Force direction: vertical or normal.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<ForceMode>,
    },
    /// Run a path sweep.
    Path {
        scenario: PathBuf,
        /// Number of evenly spaced samples; defaults to the scenario's.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        trace: bool,
        #[command(flatten)]
        out: Output,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<ForceMode>,
    },
    /// Run any number of scenarios of either kind.
    Run {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        #[command(flatten)]
        out: Output,
    },
    /// Time SVD and LCP force solves against wheel count.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = bench::DEFAULT_WHEEL_COUNTS)]
        wheels: Vec<usize>,
        #[arg(long, default_value_t = bench::DEFAULT_REPETITIONS)]
        reps: usize,
        /// Plot-data CSV; the full records go next to it as JSON.
        #[arg(long, default_value = "bench.csv")]
        out: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<ForceMode, String> {
    match s {
        "vertical" => Ok(ForceMode::Vertical),
        "normal" => Ok(ForceMode::Normal),
        other => Err(format!("unknown force mode {other:?} (vertical or normal)")),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Expect {
    Pose,
    Path,
    Any,
}

fn report_failure(out_dir: &Path, name: &str, err: &Error) {
    let record = ErrorRecord::new(name, err);
    eprintln!(
        "{}",
        serde_json::to_string(&record).unwrap_or_else(|_| err.to_string())
    );
    if let Err(e) = write_error_record(out_dir, name, err) {
        eprintln!("could not write error record: {e}");
    }
}

fn run_one(file: &Path, expect: Expect, opts: &RunOptions) -> bool {
    let fallback = file
        .file_stem()
        .map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned());
    let loaded = match LoadedScenario::load(file) {
        Ok(l) => l,
        Err(e) => {
            report_failure(&opts.out_dir, &fallback, &e);
            return false;
        }
    };
    let kind_ok = matches!(
        (&loaded.scenario.query, expect),
        (_, Expect::Any) | (Query::Pose(_), Expect::Pose) | (Query::Path(_), Expect::Path)
    );
    if !kind_ok {
        let e = Error::InvalidInput(format!(
            "{} holds a different query kind; use the matching subcommand or `run`",
            file.display()
        ));
        report_failure(&opts.out_dir, &loaded.name, &e);
        return false;
    }
    match run_loaded(&loaded, opts) {
        Ok(outcome) => {
            for r in &outcome.report.poses {
                let res = &r.result;
                let u = r.u.map(|u| format!("u={u:.4} ")).unwrap_or_default();
                println!(
                    "{}: {u}z={:.6} roll={:.4}° pitch={:.4}° contacts={} iterations={}",
                    outcome.report.scenario,
                    res.q_e[0],
                    res.roll_deg(),
                    res.pitch_deg(),
                    res.contact_bitmap(),
                    res.iterations
                );
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            true
        }
        Err(e) => {
            report_failure(&opts.out_dir, &loaded.name, &e);
            false
        }
    }
}

fn run_bench(wheels: &[usize], reps: usize, out: &Path) -> Result<(), Error> {
    let records = bench::run_benchmark(wheels, reps)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let csv = bench::to_csv(&records);
    fs::write(out, &csv)?;
    let json = out.with_extension("json");
    let text = serde_json::to_string_pretty(&BenchReport::new(records))
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    fs::write(&json, text + "\n")?;
    print!("{csv}");
    println!("wrote {} and {}", out.display(), json.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ok = match cli.command {
        Command::Pose {
            scenario,
            trace,
            out,
            mode,
        } => {
            let opts = RunOptions {
                out_dir: out.dir,
                trace,
                mode,
                samples: None,
            };
            run_one(&scenario, Expect::Pose, &opts)
        }
        Command::Path {
            scenario,
            samples,
            trace,
            out,
            mode,
        } => {
            let opts = RunOptions {
                out_dir: out.dir,
                trace,
                mode,
                samples,
            };
            run_one(&scenario, Expect::Path, &opts)
        }
        Command::Run { scenarios, out } => {
            let opts = RunOptions {
                out_dir: out.dir,
                ..RunOptions::default()
            };
            let mut all = true;
            for s in &scenarios {
                all &= run_one(s, Expect::Any, &opts);
            }
            all
        }
        Command::Bench { wheels, reps, out } => match run_bench(&wheels, reps, &out) {
            Ok(()) => true,
            Err(e) => {
                eprintln!(
                    "{}",
                    serde_json::to_string(&ErrorRecord::new("bench", &e)).unwrap_or_default()
                );
                false
            }
        },
    };
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
