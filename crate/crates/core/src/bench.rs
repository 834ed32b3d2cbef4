//! Timing of the SVD and Lemke contact-force solves against the number of
//! wheels in contact.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::{Duration, Instant};

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::contact::{self, ContactProblem, SvdThreshold};
use crate::error::{Error, Result};
use crate::lcp::{lcp_contact_forces, lemke_contact_forces};
use crate::vehicle::{box_inertia, build_wrench, Heading, VehicleModel};

pub const BENCH_SCHEMA_VERSION: u32 = 1;
pub const MIN_WHEELS: usize = 4;
pub const MAX_WHEELS: usize = 24;
pub const DEFAULT_WHEEL_COUNTS: [usize; 7] = [4, 6, 8, 12, 16, 20, 24];
pub const DEFAULT_REPETITIONS: usize = 100;

/// Wheel pitch along the body for generated layouts, m.
pub const WHEEL_PITCH: f64 = 0.3;
/// Track width of generated layouts, m.
pub const TRACK: f64 = 0.9;

const BENCH_MASS: f64 = 500.0;
const BENCH_DT: f64 = 1e-3;
const WARMUP: usize = 5;
/// Busy time spent on solves before the first timed sample.
const WARMUP_TIME: Duration = Duration::from_millis(50);
/// Shortest span timed as one sample; faster solves are batched up to it.
const MIN_SAMPLE_TIME: Duration = Duration::from_micros(20);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// The solve used by the drop: SVD of `A` taken from its `3×p` factor.
    Svd,
    /// SVD of the assembled `p×p` matrix.
    #[serde(rename = "svd_dense")]
    SvdDense,
    /// Lemke's method followed by the least-norm selection.
    Lcp,
    /// The shifted Lemke solve alone.
    Lemke,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub method: Method,
    pub wheel_count: usize,
    pub repetitions: usize,
    /// Back-to-back solves per timed sample.
    pub batch: usize,
    /// Mean solve time, s.
    pub mean: f64,
    /// Sample standard deviation, s; zero for a single repetition.
    pub stddev: f64,
    pub min: f64,
}

/// Description of the generated problems, written alongside the timings.
pub fn layout_description() -> String {
    format!(
        "flat ground, {BENCH_MASS} kg body at rest, wheels in two rows {TRACK} m apart \
         spaced {WHEEL_PITCH} m along the body (left row takes the odd wheel), dt = {BENCH_DT} s"
    )
}

/// A `k`-wheel vehicle on a regular two-row grid centred on the COM.
pub fn grid_vehicle(k: usize) -> Result<VehicleModel> {
    if k == 0 {
        return Err(Error::InvalidInput(
            "a vehicle needs at least one wheel".into(),
        ));
    }
    let left = k.div_ceil(2);
    let right = k / 2;
    let mut wheels = Vec::with_capacity(k);
    for (count, y) in [(left, TRACK / 2.0), (right, -TRACK / 2.0)] {
        for i in 0..count {
            let x = (i as f64 - (count as f64 - 1.0) / 2.0) * WHEEL_PITCH;
            wheels.push([x, y, -0.35]);
        }
    }
    let length = (left.max(1) as f64) * WHEEL_PITCH;
    let (roll, pitch) = box_inertia(BENCH_MASS, length, TRACK, 0.5);
    VehicleModel::new(BENCH_MASS, roll, pitch, 0.1, wheels)
}

/// Resting contact problem of [`grid_vehicle`] with every wheel active.
pub fn flat_problem(k: usize) -> Result<ContactProblem> {
    let model = grid_vehicle(k)?;
    let q = Vector3::new(0.35, 0.0, 0.0);
    let active: Vec<usize> = (0..k).collect();
    let w = build_wrench(&model, Heading::default(), &q, &active)?;
    contact::assemble(
        &w,
        &model.mass_diagonal(),
        &Vector3::zeros(),
        &DVector::zeros(k),
        BENCH_DT,
    )
}

fn summarize(method: Method, k: usize, batch: usize, samples: &[f64]) -> BenchRecord {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let stddev = if n > 1 {
        (samples.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    BenchRecord {
        method,
        wheel_count: k,
        repetitions: n,
        batch,
        mean,
        stddev,
        min: samples.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

type Solver = fn(&ContactProblem) -> Result<DVector<f64>>;

fn svd_solve(prob: &ContactProblem) -> Result<DVector<f64>> {
    contact::solve_forces(prob, SvdThreshold::default())
}

/// Solves per timed sample so that one sample spans about
/// [`MIN_SAMPLE_TIME`].
fn batch_size(prob: &ContactProblem, solve: Solver) -> Result<usize> {
    for _ in 0..WARMUP {
        black_box(solve(black_box(prob))?);
    }
    let start = Instant::now();
    for _ in 0..WARMUP {
        black_box(solve(black_box(prob))?);
    }
    let single = start.elapsed().as_secs_f64() / WARMUP as f64;
    Ok(if single > 0.0 {
        (MIN_SAMPLE_TIME.as_secs_f64() / single)
            .ceil()
            .clamp(1.0, 1024.0) as usize
    } else {
        1024
    })
}

/// Per-solve time of one batch.
fn sample(prob: &ContactProblem, solve: Solver, batch: usize) -> Result<f64> {
    let start = Instant::now();
    for _ in 0..batch {
        black_box(solve(black_box(prob))?);
    }
    Ok(start.elapsed().as_secs_f64() / batch as f64)
}

/// Times the SVD and LCP force solves for each wheel count.
///
/// Only the solve itself is timed; problems are assembled beforehand.
/// Samples are taken round-robin over every wheel count and method so that
/// slow spells of the machine spread over all series. Returns the SVD,
/// dense SVD and LCP records for each `k` in input order.
pub fn run_benchmark(wheel_counts: &[usize], repetitions: usize) -> Result<Vec<BenchRecord>> {
    if repetitions == 0 {
        return Err(Error::InvalidInput("repetitions must be at least 1".into()));
    }
    if let Some(&k) = wheel_counts
        .iter()
        .find(|&&k| !(MIN_WHEELS..=MAX_WHEELS).contains(&k))
    {
        return Err(Error::InvalidInput(format!(
            "wheel count {k} outside [{MIN_WHEELS}, {MAX_WHEELS}]"
        )));
    }
    if let Some(&k) = wheel_counts.iter().max() {
        let prob = flat_problem(k)?;
        let start = Instant::now();
        while start.elapsed() < WARMUP_TIME {
            black_box(svd_solve(black_box(&prob))?);
            black_box(lcp_contact_forces(black_box(&prob))?);
        }
    }

    struct Series {
        method: Method,
        k: usize,
        prob: ContactProblem,
        solve: Solver,
        batch: usize,
        samples: Vec<f64>,
    }
    let mut series = Vec::with_capacity(4 * wheel_counts.len());
    for &k in wheel_counts {
        let prob = flat_problem(k)?;
        let dense = prob.dense();
        for (method, prob, solve) in [
            (Method::Svd, prob.clone(), svd_solve as Solver),
            (Method::SvdDense, dense, svd_solve as Solver),
            (Method::Lcp, prob.clone(), lcp_contact_forces as Solver),
            (Method::Lemke, prob, lemke_contact_forces as Solver),
        ] {
            let batch = batch_size(&prob, solve)?;
            series.push(Series {
                method,
                k,
                prob,
                solve,
                batch,
                samples: Vec::with_capacity(repetitions),
            });
        }
    }
    for _ in 0..repetitions {
        for s in &mut series {
            let t = sample(&s.prob, s.solve, s.batch)?;
            s.samples.push(t);
        }
    }
    Ok(series
        .iter()
        .map(|s| summarize(s.method, s.k, s.batch, &s.samples))
        .collect())
}

/// Plot data: one row per wheel count with both series.
pub fn to_csv(records: &[BenchRecord]) -> String {
    let mut out =
        String::from("k,mean_svd,mean_lcp,stddev_svd,stddev_lcp,mean_svd_dense,stddev_svd_dense,mean_lemke,stddev_lemke\n");
    let mut ks: Vec<usize> = records.iter().map(|r| r.wheel_count).collect();
    ks.dedup();
    for k in ks {
        let find = |m: Method| records.iter().find(|r| r.wheel_count == k && r.method == m);
        if let (Some(s), Some(l)) = (find(Method::Svd), find(Method::Lcp)) {
            let _ = write!(
                out,
                "{k},{:e},{:e},{:e},{:e}",
                s.mean, l.mean, s.stddev, l.stddev
            );
            for m in [Method::SvdDense, Method::Lemke] {
                match find(m) {
                    Some(d) => write!(out, ",{:e},{:e}", d.mean, d.stddev),
                    None => write!(out, ",,"),
                }
                .expect("writing to a String");
            }
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub layout: String,
    pub records: Vec<BenchRecord>,
}

impl BenchReport {
    pub fn new(records: Vec<BenchRecord>) -> Self {
        BenchReport {
            schema_version: BENCH_SCHEMA_VERSION,
            layout: layout_description(),
            records,
        }
    }
}
