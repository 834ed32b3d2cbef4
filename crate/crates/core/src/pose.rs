//! Pose estimation by dropping the vehicle onto the terrain.
//!
//! The planar placement `(x, y, yaw)` is held fixed while the reduced
//! coordinates `q = (z, roll, pitch)` evolve under gravity and wheel contact
//! forces:
//!
//! ```text
//! v ← v + Δt · M⁻¹ (W_f f + g)        f from the contact solve
//! q ← q + Δt · v                      semi-implicit Euler
//! ```
//!
//! Wheels closer to the ground than `d_epsilon` are in contact and their
//! gaps are treated as closed, so the contact solve stops their approach
//! without rebound. Loaded wheels are then projected onto the surface along
//! the mass-weighted contact directions, which removes the residual hover
//! left by the finite capture band. The drop ends once the generalised
//! acceleration and velocity stay below tolerance for a few steps.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::contact::{self, ContactProblem, SvdThreshold};
use crate::error::{Error, Result};
use crate::terrain::{SurfacePath, TerrainSurface};
use crate::vehicle::{
    build_wrench_along, contact_geometry, wheel_world_points, ForceMode, FullConfiguration,
    Heading, VehicleModel, WrenchMatrices,
};

/// Integration and termination settings for the drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    /// Time step, s.
    pub dt: f64,
    /// Contact capture distance, m.
    pub d_epsilon: f64,
    /// Bound on `sqrt(z̈² + (L·α̈)² + (L·β̈)²)`, m/s².
    pub accel_tol: f64,
    /// Bound on `sqrt(ż² + (L·α̇)² + (L·β̇)²)`, m/s.
    pub vel_tol: f64,
    pub max_iterations: usize,
    /// Consecutive steps both bounds must hold.
    pub settle_steps: usize,
    pub svd_epsilon: f64,
    pub force_mode: ForceMode,
    /// Project loaded wheels onto the terrain after each step.
    pub contact_projection: bool,
    /// Height of the lowest wheel above its terrain point at release, m.
    pub drop_clearance: f64,
    /// Extra release height above the previous equilibrium on a path, m.
    pub path_clearance: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            dt: 1e-3,
            d_epsilon: 0.01,
            accel_tol: 1e-6,
            vel_tol: 1e-6,
            max_iterations: 100_000,
            settle_steps: 3,
            svd_epsilon: SvdThreshold::DEFAULT.value(),
            force_mode: ForceMode::Vertical,
            contact_projection: true,
            drop_clearance: 0.5,
            path_clearance: 0.05,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("d_epsilon", self.d_epsilon),
            ("accel_tol", self.accel_tol),
            ("vel_tol", self.vel_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.max_iterations == 0 || self.settle_steps == 0 {
            return Err(Error::InvalidInput(
                "max_iterations and settle_steps must be at least 1".into(),
            ));
        }
        if !(self.drop_clearance >= 0.0 && self.path_clearance >= 0.0) {
            return Err(Error::InvalidInput(
                "clearances must be non-negative".into(),
            ));
        }
        SvdThreshold::new(self.svd_epsilon)?;
        Ok(())
    }

    pub fn threshold(&self) -> SvdThreshold {
        SvdThreshold::new(self.svd_epsilon).unwrap_or_default()
    }
}

/// State of the drop between two steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DropState {
    /// `(z, roll, pitch)`.
    pub q: Vector3<f64>,
    /// `(ż, roll rate, pitch rate)`.
    pub v: Vector3<f64>,
    /// Per-wheel gaps at `q`.
    pub d: Vec<f64>,
    pub iteration: usize,
    /// Generalised acceleration of the last step.
    pub accel: Vector3<f64>,
    /// Per-wheel contact forces of the last step, N.
    pub forces: Vec<f64>,
}

impl DropState {
    /// Resting state at `q` with gaps evaluated on `surface`.
    pub fn at_rest(
        model: &VehicleModel,
        surface: &TerrainSurface,
        h: Heading,
        q: Vector3<f64>,
        mode: ForceMode,
    ) -> Result<Self> {
        let geo = contact_geometry(model, h, &q, surface, mode)?;
        Ok(DropState {
            q,
            v: Vector3::zeros(),
            d: geo.gaps,
            iteration: 0,
            accel: Vector3::zeros(),
            forces: vec![0.0; model.wheel_count()],
        })
    }
}

/// Outcome of one pose query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseResult {
    pub heading: Heading,
    /// Equilibrium `(z, roll, pitch)` in metres and radians.
    pub q_e: [f64; 3],
    pub contacts: Vec<bool>,
    /// Contact force per wheel along its force direction, N.
    pub forces: Vec<f64>,
    /// Per-wheel gaps at equilibrium, m.
    pub gaps: Vec<f64>,
    pub iterations: usize,
    /// Wall time from the first contact to equilibrium, s.
    pub elapsed: f64,
}

impl PoseResult {
    pub fn configuration(&self) -> FullConfiguration {
        FullConfiguration::from_parts(self.heading, &Vector3::from(self.q_e))
    }

    pub fn contact_count(&self) -> usize {
        self.contacts.iter().filter(|&&c| c).count()
    }

    pub fn roll_deg(&self) -> f64 {
        self.q_e[1].to_degrees()
    }

    pub fn pitch_deg(&self) -> f64 {
        self.q_e[2].to_degrees()
    }

    /// Contact bitmap as a string of `0`/`1`, wheel 1 first.
    pub fn contact_bitmap(&self) -> String {
        self.contacts
            .iter()
            .map(|&c| if c { '1' } else { '0' })
            .collect()
    }
}

/// Per-step record for tracing a drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// State entering the step.
    pub q: [f64; 3],
    pub v: [f64; 3],
    pub d: Vec<f64>,
    /// Forces applied during the step.
    pub f: Vec<f64>,
    pub terminal: bool,
}

fn weighted_norm(x: &Vector3<f64>, length: f64) -> f64 {
    (x[0] * x[0] + (length * x[1]).powi(2) + (length * x[2]).powi(2)).sqrt()
}

/// Release height: every wheel `drop_clearance` above the terrain beneath it
/// with the body level.
pub fn default_start_height(
    model: &VehicleModel,
    surface: &TerrainSurface,
    h: Heading,
    clearance: f64,
) -> Result<f64> {
    let level = Vector3::zeros();
    let mut z: f64 = f64::NEG_INFINITY;
    for (p, o) in wheel_world_points(model, h, &level)
        .iter()
        .zip(&model.wheels)
    {
        z = z.max(surface.height_at(p[0], p[1])? - o[2]);
    }
    Ok(z + clearance)
}

fn mass_weighted_correction(
    wf: &DMatrix<f64>,
    inv_mass: &Vector3<f64>,
    gaps: &DVector<f64>,
    threshold: SvdThreshold,
) -> Vector3<f64> {
    let mut scaled = wf.clone();
    for r in 0..3 {
        scaled.row_mut(r).scale_mut(inv_mass[r]);
    }
    let k = wf.transpose() * &scaled;
    let lambda = contact::pseudo_inverse(&k, threshold) * gaps;
    let dq = -(scaled * lambda);
    Vector3::new(dq[0], dq[1], dq[2])
}

/// Advances the drop by one step.
pub fn step(
    state: &DropState,
    model: &VehicleModel,
    surface: &TerrainSurface,
    h: Heading,
    params: &SolverParams,
) -> Result<DropState> {
    let threshold = params.threshold();
    let k = model.wheel_count();
    let mass = model.mass_diagonal();
    let inv_mass = mass.map(|m| 1.0 / m);

    let mut forces = vec![0.0; k];
    let mut generalized = model.gravity_wrench();
    let mut loaded: Vec<usize> = Vec::new();
    let (prob, w) = step_problem(model, surface, h, &state.q, &state.v, params)?;
    if prob.size() > 0 {
        let f = contact::solve_forces(&prob, threshold)?;
        generalized += w.apply(f.as_slice());
        for (col, &j) in prob.active.iter().enumerate() {
            forces[j] = f[col];
            if f[col] > 0.0 {
                loaded.push(j);
            }
        }
    }

    let accel = inv_mass.component_mul(&generalized);
    let v = state.v + accel * params.dt;
    let mut q = state.q + v * params.dt;

    if params.contact_projection && !loaded.is_empty() {
        let geo = contact_geometry(model, h, &q, surface, params.force_mode)?;
        let dirs: Vec<Vector3<f64>> = loaded.iter().map(|&j| geo.directions[j]).collect();
        let w = build_wrench_along(model, h, &q, &loaded, &dirs)?;
        let gaps = DVector::from_iterator(loaded.len(), loaded.iter().map(|&j| geo.gaps[j]));
        q += mass_weighted_correction(&w.wf, &inv_mass, &gaps, threshold);
    }

    let mut geo = contact_geometry(model, h, &q, surface, params.force_mode)?;
    let vertical_min = geo
        .points
        .iter()
        .map(|p| Ok(p[2] - surface.height_at(p[0], p[1])?))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if vertical_min < -params.d_epsilon {
        q[0] -= vertical_min;
        geo = contact_geometry(model, h, &q, surface, params.force_mode)?;
    }

    Ok(DropState {
        q,
        v,
        d: geo.gaps,
        iteration: state.iteration + 1,
        accel,
        forces,
    })
}

/// Drops the vehicle at `h` and integrates to static equilibrium, reporting
/// every step to `on_step`.
pub fn estimate_pose_with(
    h: Heading,
    model: &VehicleModel,
    surface: &TerrainSurface,
    params: &SolverParams,
    z_start: Option<f64>,
    mut on_step: impl FnMut(&TraceRecord),
) -> Result<PoseResult> {
    params.validate()?;
    model.validate()?;
    let z0 = match z_start {
        Some(z) => z,
        None => default_start_height(model, surface, h, params.drop_clearance)?,
    };
    let mut state = DropState::at_rest(
        model,
        surface,
        h,
        Vector3::new(z0, 0.0, 0.0),
        params.force_mode,
    )?;
    if state.d.iter().any(|&d| d <= 0.0) {
        return Err(Error::InvalidInput(format!(
            "release height z = {z0} leaves a wheel on or below the terrain"
        )));
    }

    let length = model.characteristic_length();
    let mut settled = 0;
    let mut first_contact: Option<Instant> = None;

    while state.iteration < params.max_iterations {
        if first_contact.is_none() && state.d.iter().any(|&d| d < params.d_epsilon) {
            first_contact = Some(Instant::now());
        }
        let next = step(&state, model, surface, h, params)?;
        let calm = weighted_norm(&next.accel, length) < params.accel_tol
            && weighted_norm(&next.v, length) < params.vel_tol;
        settled = if calm { settled + 1 } else { 0 };
        let done = settled >= params.settle_steps;
        on_step(&TraceRecord {
            iteration: next.iteration,
            q: state.q.into(),
            v: state.v.into(),
            d: state.d.clone(),
            f: next.forces.clone(),
            terminal: done || next.iteration >= params.max_iterations,
        });
        state = next;
        if done {
            let elapsed = first_contact.map_or(0.0, |t| t.elapsed().as_secs_f64());
            let contacts = state.d.iter().map(|&d| d < params.d_epsilon).collect();
            return Ok(PoseResult {
                heading: h,
                q_e: state.q.into(),
                contacts,
                forces: state.forces,
                gaps: state.d,
                iterations: state.iteration,
                elapsed,
            });
        }
    }
    Err(Error::Convergence {
        iterations: state.iteration,
        last_q: state.q.into(),
        last_v: state.v.into(),
    })
}

/// Drops the vehicle at `h` and returns its equilibrium pose.
///
/// `z_start` is the release height of the centre of mass; `None` releases it
/// `drop_clearance` above the terrain under the highest wheel.
pub fn estimate_pose(
    h: Heading,
    model: &VehicleModel,
    surface: &TerrainSurface,
    params: &SolverParams,
    z_start: Option<f64>,
) -> Result<PoseResult> {
    estimate_pose_with(h, model, surface, params, z_start, |_| {})
}

/// Contact problem solved by [`step`] from pose `q` with velocity `v`:
/// wheels within `d_epsilon` are active and their gaps count as closed.
pub fn step_problem(
    model: &VehicleModel,
    surface: &TerrainSurface,
    h: Heading,
    q: &Vector3<f64>,
    v: &Vector3<f64>,
    params: &SolverParams,
) -> Result<(ContactProblem, WrenchMatrices)> {
    let geo = contact_geometry(model, h, q, surface, params.force_mode)?;
    let active: Vec<usize> = (0..model.wheel_count())
        .filter(|&j| geo.gaps[j] < params.d_epsilon)
        .collect();
    let dirs: Vec<Vector3<f64>> = active.iter().map(|&j| geo.directions[j]).collect();
    let w = build_wrench_along(model, h, q, &active, &dirs)?;
    let closed = DVector::zeros(active.len());
    let prob = contact::assemble(&w, &model.mass_diagonal(), v, &closed, params.dt)?;
    Ok((prob, w))
}

/// Contact problem at a resting pose.
pub fn equilibrium_problem(
    model: &VehicleModel,
    surface: &TerrainSurface,
    h: Heading,
    q: &Vector3<f64>,
    params: &SolverParams,
) -> Result<ContactProblem> {
    Ok(step_problem(model, surface, h, q, &Vector3::zeros(), params)?.0)
}

/// One sample of a path sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPose {
    pub u: f64,
    pub heading: Heading,
    pub result: PoseResult,
}

/// Pose estimates at `samples` evenly spaced parameters along `path`.
///
/// The vehicle yaw follows the path tangent. Each drop after the first
/// starts `path_clearance` above the previous equilibrium height, or above
/// the level release height if the terrain rises faster.
pub fn pose_along_path(
    path: &SurfacePath,
    model: &VehicleModel,
    surface: &TerrainSurface,
    params: &SolverParams,
    samples: usize,
) -> Result<Vec<PathPose>> {
    pose_along_path_with(path, model, surface, params, samples, |_, _| {})
}

/// [`pose_along_path`] reporting every drop step together with its `u`.
pub fn pose_along_path_with(
    path: &SurfacePath,
    model: &VehicleModel,
    surface: &TerrainSurface,
    params: &SolverParams,
    samples: usize,
    mut on_step: impl FnMut(f64, &TraceRecord),
) -> Result<Vec<PathPose>> {
    if samples < 2 {
        return Err(Error::InvalidInput(format!(
            "a path sweep needs at least 2 samples, got {samples}"
        )));
    }
    let mut out: Vec<PathPose> = Vec::with_capacity(samples);
    for i in 0..samples {
        let u = i as f64 / (samples - 1) as f64;
        let wrap = |e: Error| Error::PathSample {
            u,
            source: Box::new(e),
        };
        let [x, y] = path.xy_at(surface, u).map_err(wrap)?;
        let yaw = path.heading_at(surface, u).map_err(wrap)?;
        let h = Heading::new(x, y, yaw);
        let z_start = match out.last() {
            None => None,
            Some(prev) => {
                let level = default_start_height(model, surface, h, 0.0).map_err(wrap)?;
                Some(prev.result.q_e[0].max(level) + params.path_clearance)
            }
        };
        let result = estimate_pose_with(h, model, surface, params, z_start, |r| on_step(u, r))
            .map_err(wrap)?;
        out.push(PathPose {
            u,
            heading: h,
            result,
        });
    }
    Ok(out)
}
