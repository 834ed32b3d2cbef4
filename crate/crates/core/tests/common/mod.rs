#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use terrain_pose::pose::{equilibrium_problem, step_problem};
use terrain_pose::scenario::{execute, LoadedScenario, RunOptions, ScenarioReport};
use terrain_pose::vehicle::{
    build_wrench_along, contact_geometry, wheel_world_points, VehicleModel,
};
use terrain_pose::{assemble, ContactProblem, Heading, PoseResult, SolverParams, TerrainSurface};

pub fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// Every scenario file at the top of the bundled directory, sorted.
pub fn bundled_scenarios() -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(scenarios_dir())
        .expect("bundled scenarios directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    files
}

pub fn load(name: &str) -> LoadedScenario {
    LoadedScenario::load(&scenarios_dir().join(format!("{name}.json"))).unwrap()
}

pub fn run(loaded: &LoadedScenario) -> ScenarioReport {
    execute(loaded, &RunOptions::default(), |_, _| {}).unwrap()
}

/// Residual vertical force and roll/pitch moment of gravity plus the
/// reported contact forces at the reported pose.
pub fn balance_residual(
    model: &VehicleModel,
    surface: &TerrainSurface,
    params: &SolverParams,
    r: &PoseResult,
) -> (f64, f64) {
    let q = Vector3::from(r.q_e);
    let geo = contact_geometry(model, r.heading, &q, surface, params.force_mode).unwrap();
    let all: Vec<usize> = (0..model.wheel_count()).collect();
    let w = build_wrench_along(model, r.heading, &q, &all, &geo.directions).unwrap();
    let net = w.apply(&r.forces) + model.gravity_wrench();
    (net[0].abs(), net[1].hypot(net[2]))
}

/// Random symmetric PSD matrix of the given rank.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, rank, |_, _| rng.gen_range(-1.0..1.0));
    &g * g.transpose()
}

/// Contact problem of a randomly laid out vehicle descending onto `p`
/// wheels, with `b ≤ 0` and `b` in the range of `A`.
pub fn random_contact_problem(rng: &mut ChaCha8Rng, p: usize) -> (ContactProblem, f64) {
    let mass = rng.gen_range(100.0..2000.0);
    let wheels: Vec<[f64; 3]> = (0..p)
        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-0.6..0.6), -0.35])
        .collect();
    let model = VehicleModel::new(
        mass,
        mass * rng.gen_range(0.05..0.3),
        mass * rng.gen_range(0.1..0.5),
        0.1,
        wheels,
    )
    .unwrap();
    let h = Heading::new(0.0, 0.0, rng.gen_range(-3.0..3.0));
    let q = Vector3::new(0.3, rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2));
    let tilted = rng.gen_bool(0.5);
    let dirs: Vec<Vector3<f64>> = (0..p)
        .map(|_| {
            if tilted {
                Vector3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), 1.0).normalize()
            } else {
                Vector3::z()
            }
        })
        .collect();
    let active: Vec<usize> = (0..p).collect();
    let w = build_wrench_along(&model, h, &q, &active, &dirs).unwrap();
    let dt = 1e-3;
    for attempt in 0.. {
        let spin = if attempt < 50 { 1.0 } else { 0.0 };
        let v = Vector3::new(
            rng.gen_range(-2.0..-0.05),
            spin * rng.gen_range(-0.5..0.5),
            spin * rng.gen_range(-0.5..0.5),
        );
        let prob = assemble(&w, &model.mass_diagonal(), &v, &DVector::zeros(p), dt).unwrap();
        if prob.b.iter().all(|&b| b <= 0.0) {
            return (prob, mass);
        }
    }
    unreachable!()
}

/// Roll and pitch of a body whose z axis is normal to the least-squares
/// plane `z = a x + b y + c` through the terrain points under its wheels.
pub fn plane_fit_angles(
    model: &VehicleModel,
    surface: &TerrainSurface,
    r: &PoseResult,
) -> (f64, f64) {
    let points = wheel_world_points(model, r.heading, &Vector3::from(r.q_e));
    let mut normal = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for p in &points {
        let z = surface.height_at(p[0], p[1]).unwrap();
        let row = Vector3::new(p[0], p[1], 1.0);
        normal += row * row.transpose();
        rhs += row * z;
    }
    let coef = normal.lu().solve(&rhs).expect("wheel points span a plane");
    // Plane normal in the yawed frame; the body z axis there is
    // (cos α sin β, −sin α, cos α cos β).
    let (s, c) = r.heading.yaw.sin_cos();
    let normal = Vector3::new(-coef[0], -coef[1], 1.0).normalize();
    let local = Vector3::new(
        c * normal[0] + s * normal[1],
        -s * normal[0] + c * normal[1],
        normal[2],
    );
    ((-local[1]).asin(), local[0].atan2(local[2]))
}

/// Pose results with the wall time cleared, for bitwise comparison.
pub fn without_timing(mut r: PoseResult) -> PoseResult {
    r.elapsed = 0.0;
    r
}

/// Every contact problem met while running `loaded`: the problem of each
/// drop step with a wheel in range, then the resting problem at each pose.
pub fn drop_problems(loaded: &LoadedScenario) -> Vec<ContactProblem> {
    let params = loaded.scenario.effective_params();
    let mut states: Vec<(Option<f64>, Vector3<f64>, Vector3<f64>)> = Vec::new();
    let report = execute(loaded, &RunOptions::default(), |u, rec| {
        if rec.d.iter().any(|&d| d < params.d_epsilon) {
            states.push((u, Vector3::from(rec.q), Vector3::from(rec.v)));
        }
    })
    .unwrap();
    let heading_at = |u: Option<f64>| {
        report
            .poses
            .iter()
            .find(|p| p.u == u)
            .map(|p| p.result.heading)
            .expect("every traced step belongs to a reported pose")
    };
    let mut problems: Vec<ContactProblem> = states
        .iter()
        .map(|(u, q, v)| {
            step_problem(
                &loaded.model,
                &loaded.surface,
                heading_at(*u),
                q,
                v,
                &params,
            )
            .unwrap()
            .0
        })
        .collect();
    for p in &report.poses {
        let r = &p.result;
        problems.push(
            equilibrium_problem(
                &loaded.model,
                &loaded.surface,
                r.heading,
                &Vector3::from(r.q_e),
                &params,
            )
            .unwrap(),
        );
    }
    problems
}
