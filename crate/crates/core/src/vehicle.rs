//! Rigid multi-wheel vehicle: geometry, wheel placement in the world and the
//! wrench map from scalar wheel forces to the reduced coordinates
//! `q = (z, roll, pitch)`.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::terrain::TerrainSurface;

/// Gravitational acceleration, m/s².
pub const GRAVITY: f64 = 9.8;

pub const VEHICLE_SCHEMA_VERSION: u32 = 1;

/// Mass properties and wheel layout.
///
/// `wheels` are body-frame offsets of the wheel-bottom contact points from
/// the centre of mass; they already include the wheel radius, which is kept
/// only for reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleModel {
    #[serde(default = "vehicle_schema_version")]
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub mass: f64,
    pub inertia_roll: f64,
    pub inertia_pitch: f64,
    #[serde(default)]
    pub wheel_radius: f64,
    pub wheels: Vec<[f64; 3]>,
}

fn vehicle_schema_version() -> u32 {
    VEHICLE_SCHEMA_VERSION
}

/// Roll and pitch inertia of a solid box of the given length (x), width (y)
/// and height (z).
pub fn box_inertia(mass: f64, length: f64, width: f64, height: f64) -> (f64, f64) {
    (
        mass / 12.0 * (width * width + height * height),
        mass / 12.0 * (length * length + height * height),
    )
}

impl VehicleModel {
    pub fn new(
        mass: f64,
        inertia_roll: f64,
        inertia_pitch: f64,
        wheel_radius: f64,
        wheels: Vec<[f64; 3]>,
    ) -> Result<Self> {
        let model = VehicleModel {
            schema_version: VEHICLE_SCHEMA_VERSION,
            name: None,
            mass,
            inertia_roll,
            inertia_pitch,
            wheel_radius,
            wheels,
        };
        model.validate()?;
        Ok(model)
    }

    /// Six wheels on a 1.5 m × 0.9 m × 0.5 m, 500 kg body. Wheels are
    /// numbered down the left side front to rear, then down the right side.
    pub fn six_wheel() -> Self {
        let (ir, ip) = box_inertia(500.0, 1.5, 0.9, 0.5);
        let z = -0.35;
        let wheels = vec![
            [0.75, 0.45, z],
            [0.0, 0.45, z],
            [-0.75, 0.45, z],
            [0.75, -0.45, z],
            [0.0, -0.45, z],
            [-0.75, -0.45, z],
        ];
        let mut m = VehicleModel::new(500.0, ir, ip, 0.1, wheels).expect("valid preset");
        m.name = Some("six-wheel".into());
        m
    }

    /// Four wheels on the same body; the axles sit 0.1 m behind centred so the
    /// centre of mass is ahead of the axle midpoint.
    pub fn four_wheel() -> Self {
        let (ir, ip) = box_inertia(500.0, 1.5, 0.9, 0.5);
        let z = -0.35;
        let wheels = vec![
            [0.65, 0.45, z],
            [-0.85, 0.45, z],
            [0.65, -0.45, z],
            [-0.85, -0.45, z],
        ];
        let mut m = VehicleModel::new(500.0, ir, ip, 0.1, wheels).expect("valid preset");
        m.name = Some("four-wheel".into());
        m
    }

    /// Eight wheels, four per side, on a 2.0 m × 1.0 m × 0.5 m, 700 kg body.
    pub fn eight_wheel() -> Self {
        let (ir, ip) = box_inertia(700.0, 2.0, 1.0, 0.5);
        let z = -0.35;
        let xs = [0.9, 0.3, -0.3, -0.9];
        let wheels = [0.5, -0.5]
            .iter()
            .flat_map(|&y| xs.iter().map(move |&x| [x, y, z]))
            .collect();
        let mut m = VehicleModel::new(700.0, ir, ip, 0.1, wheels).expect("valid preset");
        m.name = Some("eight-wheel".into());
        m
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("mass", self.mass)?;
        positive("inertia_roll", self.inertia_roll)?;
        positive("inertia_pitch", self.inertia_pitch)?;
        if !(self.wheel_radius >= 0.0 && self.wheel_radius.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "wheel_radius must be non-negative, got {}",
                self.wheel_radius
            )));
        }
        if self.wheels.is_empty() {
            return Err(Error::InvalidInput(
                "vehicle needs at least one wheel".into(),
            ));
        }
        if self.wheels.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("wheel offsets must be finite".into()));
        }
        Ok(())
    }

    pub fn wheel_count(&self) -> usize {
        self.wheels.len()
    }

    /// Diagonal of the reduced mass matrix `diag(m, I_roll, I_pitch)`.
    pub fn mass_diagonal(&self) -> Vector3<f64> {
        Vector3::new(self.mass, self.inertia_roll, self.inertia_pitch)
    }

    /// Gravity as a generalised force on `(z, roll, pitch)`.
    pub fn gravity_wrench(&self) -> Vector3<f64> {
        Vector3::new(-self.mass * GRAVITY, 0.0, 0.0)
    }

    pub fn weight(&self) -> f64 {
        self.mass * GRAVITY
    }

    /// Largest extent of the wheel layout in x or y; 1 m for a single wheel.
    pub fn characteristic_length(&self) -> f64 {
        let span = |k: usize| {
            let (lo, hi) = self
                .wheels
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), w| {
                    (lo.min(w[k]), hi.max(w[k]))
                });
            hi - lo
        };
        let l = span(0).max(span(1));
        if l > 0.0 {
            l
        } else {
            1.0
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: VehicleModel = serde_json::from_str(text).map_err(|e| Error::Schema {
            path: "vehicle".into(),
            message: e.to_string(),
        })?;
        model.validate()?;
        Ok(model)
    }
}

/// Fixed part of the placement: COM position in the plane and yaw.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Heading {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Heading {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Heading { x, y, yaw }
    }
}

/// Complete rigid-body placement `(x, y, z, roll, pitch, yaw)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FullConfiguration {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl FullConfiguration {
    pub fn from_parts(h: Heading, q: &Vector3<f64>) -> Self {
        FullConfiguration {
            x: h.x,
            y: h.y,
            z: q[0],
            roll: q[1],
            pitch: q[2],
            yaw: h.yaw,
        }
    }

    pub fn heading(&self) -> Heading {
        Heading::new(self.x, self.y, self.yaw)
    }

    pub fn reduced(&self) -> Vector3<f64> {
        Vector3::new(self.z, self.roll, self.pitch)
    }
}

/// Direction along which wheel contact forces act.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForceMode {
    /// Forces along world z; gaps are vertical distances.
    #[default]
    Vertical,
    /// Forces along the terrain normal under each wheel; gaps are the
    /// vertical gaps projected onto that normal.
    Normal,
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn drot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

fn drot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

/// Body-to-world rotation: yaw about z, then pitch about y, then roll about x.
pub fn body_rotation(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    rot_z(yaw) * rot_y(pitch) * rot_x(roll)
}

/// World-frame wheel-bottom points for the placement `(h, q)`.
pub fn wheel_world_points(model: &VehicleModel, h: Heading, q: &Vector3<f64>) -> Vec<Vector3<f64>> {
    let r = body_rotation(q[1], q[2], h.yaw);
    let com = Vector3::new(h.x, h.y, q[0]);
    model
        .wheels
        .iter()
        .map(|o| com + r * Vector3::from(*o))
        .collect()
}

/// `∂p/∂(z, roll, pitch)` for a wheel with body offset `offset`; the columns
/// are the point velocities per unit rate of each coordinate.
pub fn wheel_jacobian(offset: &[f64; 3], h: Heading, q: &Vector3<f64>) -> Matrix3<f64> {
    let o = Vector3::from(*offset);
    let (rz, ry, rx) = (rot_z(h.yaw), rot_y(q[2]), rot_x(q[1]));
    let d_roll = rz * ry * drot_x(q[1]) * o;
    let d_pitch = rz * drot_y(q[2]) * rx * o;
    Matrix3::from_columns(&[Vector3::z(), d_roll, d_pitch])
}

/// Wheel-to-terrain geometry for one placement.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactGeometry {
    pub points: Vec<Vector3<f64>>,
    /// Signed gap per wheel in the active force mode; negative means
    /// penetration.
    pub gaps: Vec<f64>,
    /// Unit force direction per wheel.
    pub directions: Vec<Vector3<f64>>,
}

/// Vertical wheel-to-terrain gaps `d_j = z_j − terrain(x_j, y_j)`.
pub fn gap_vector(
    model: &VehicleModel,
    h: Heading,
    q: &Vector3<f64>,
    surface: &TerrainSurface,
) -> Result<Vec<f64>> {
    wheel_world_points(model, h, q)
        .iter()
        .map(|p| Ok(p[2] - surface.height_at(p[0], p[1])?))
        .collect()
}

/// Gaps and force directions for either force mode.
pub fn contact_geometry(
    model: &VehicleModel,
    h: Heading,
    q: &Vector3<f64>,
    surface: &TerrainSurface,
    mode: ForceMode,
) -> Result<ContactGeometry> {
    let points = wheel_world_points(model, h, q);
    let mut gaps = Vec::with_capacity(points.len());
    let mut directions = Vec::with_capacity(points.len());
    for p in &points {
        let vertical = p[2] - surface.height_at(p[0], p[1])?;
        match mode {
            ForceMode::Vertical => {
                gaps.push(vertical);
                directions.push(Vector3::z());
            }
            ForceMode::Normal => {
                let n = Vector3::from(surface.normal_at(p[0], p[1])?);
                gaps.push(vertical * n[2]);
                directions.push(n);
            }
        }
    }
    Ok(ContactGeometry {
        points,
        gaps,
        directions,
    })
}

/// Wrench matrix for the active wheels plus the gravity wrench.
#[derive(Debug, Clone, PartialEq)]
pub struct WrenchMatrices {
    /// 3×p; column `j` maps a unit force on wheel `active[j]` to
    /// `(z force, roll torque, pitch torque)`.
    pub wf: DMatrix<f64>,
    /// Generalised gravity, `(−m g, 0, 0)`.
    pub gravity: Vector3<f64>,
    pub active: Vec<usize>,
}

impl WrenchMatrices {
    /// Generalised force `W_f · f` produced by active-wheel forces `f`.
    pub fn apply(&self, forces: &[f64]) -> Vector3<f64> {
        assert_eq!(forces.len(), self.active.len());
        let mut out = Vector3::zeros();
        for (j, f) in forces.iter().enumerate() {
            out += self.wf.column(j) * *f;
        }
        out
    }
}

fn check_active(model: &VehicleModel, active: &[usize]) -> Result<()> {
    let k = model.wheel_count();
    let mut seen = vec![false; k];
    for &j in active {
        if j >= k {
            return Err(Error::InvalidInput(format!(
                "active wheel {j} out of range for a {k}-wheel vehicle"
            )));
        }
        if std::mem::replace(&mut seen[j], true) {
            return Err(Error::InvalidInput(format!("wheel {j} listed twice")));
        }
    }
    Ok(())
}

/// Wrench matrices with forces along arbitrary unit `directions` (one per
/// active wheel). Column `j` is `J_jᵀ · n_j` with `J_j` the wheel Jacobian.
pub fn build_wrench_along(
    model: &VehicleModel,
    h: Heading,
    q: &Vector3<f64>,
    active: &[usize],
    directions: &[Vector3<f64>],
) -> Result<WrenchMatrices> {
    check_active(model, active)?;
    if directions.len() != active.len() {
        return Err(Error::InvalidInput(format!(
            "{} force directions for {} active wheels",
            directions.len(),
            active.len()
        )));
    }
    let mut wf = DMatrix::zeros(3, active.len());
    for (col, (&j, n)) in active.iter().zip(directions).enumerate() {
        let jac = wheel_jacobian(&model.wheels[j], h, q);
        wf.set_column(col, &(jac.transpose() * n));
    }
    Ok(WrenchMatrices {
        wf,
        gravity: model.gravity_wrench(),
        active: active.to_vec(),
    })
}

/// Wrench matrices for vertical wheel forces.
///
/// Column `j` is `(1, ∂z_j/∂roll, ∂z_j/∂pitch)`. With `(Δx, Δy)` the wheel
/// offset from the COM in the yaw-aligned frame this equals
/// `(1, cos(pitch)·Δy, −Δx)`, i.e. `(1, Δy, −Δx)` at zero pitch.
pub fn build_wrench(
    model: &VehicleModel,
    h: Heading,
    q: &Vector3<f64>,
    active: &[usize],
) -> Result<WrenchMatrices> {
    let up = vec![Vector3::z(); active.len()];
    build_wrench_along(model, h, q, active, &up)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::ControlGrid;

    fn flat(height: f64) -> TerrainSurface {
        TerrainSurface::new(ControlGrid::from_fn(12, 12, -3.0, -3.0, 0.5, |_, _| height)).unwrap()
    }

    fn explicit_rotation(roll: f64, pitch: f64, yaw: f64) -> [[f64; 3]; 3] {
        let (sa, ca) = roll.sin_cos();
        let (sb, cb) = pitch.sin_cos();
        let (sg, cg) = yaw.sin_cos();
        let rz = [[cg, -sg, 0.0], [sg, cg, 0.0], [0.0, 0.0, 1.0]];
        let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
        let rx = [[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]];
        let mul = |a: [[f64; 3]; 3], b: [[f64; 3]; 3]| {
            let mut c = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        c[i][j] += a[i][k] * b[k][j];
                    }
                }
            }
            c
        };
        mul(mul(rz, ry), rx)
    }

    fn single(offset: [f64; 3]) -> VehicleModel {
        VehicleModel::new(500.0, 40.0, 100.0, 0.0, vec![offset]).unwrap()
    }

    #[test]
    fn identity_pose_and_pure_yaw() {
        let m = single([0.75, 0.45, -0.25]);
        let p = wheel_world_points(&m, Heading::default(), &Vector3::zeros());
        assert_eq!(p[0], Vector3::new(0.75, 0.45, -0.25));

        let m = single([1.0, 0.0, 0.0]);
        let h = Heading::new(0.0, 0.0, std::f64::consts::FRAC_PI_2);
        let p = wheel_world_points(&m, h, &Vector3::zeros())[0];
        assert!((p - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn composed_rotation_matches_explicit_product() {
        let o = [0.75, 0.45, -0.25];
        let m = single(o);
        let h = Heading::new(1.0, -2.0, 0.3);
        let q = Vector3::new(0.5, 0.1, 0.2);
        let r = explicit_rotation(0.1, 0.2, 0.3);
        let want = [
            1.0 + r[0][0] * o[0] + r[0][1] * o[1] + r[0][2] * o[2],
            -2.0 + r[1][0] * o[0] + r[1][1] * o[1] + r[1][2] * o[2],
            0.5 + r[2][0] * o[0] + r[2][1] * o[1] + r[2][2] * o[2],
        ];
        let got = wheel_world_points(&m, h, &q)[0];
        for k in 0..3 {
            assert!((got[k] - want[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_angles_is_pure_translation() {
        let m = VehicleModel::six_wheel();
        let h = Heading::new(0.3, -0.7, 0.0);
        let q = Vector3::new(1.25, 0.0, 0.0);
        for (p, o) in wheel_world_points(&m, h, &q).iter().zip(&m.wheels) {
            assert_eq!(*p, Vector3::new(0.3 + o[0], -0.7 + o[1], 1.25 + o[2]));
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let o = [0.75, -0.45, -0.35];
        let m = single(o);
        let h = Heading::new(0.2, 0.1, 0.7);
        let q = Vector3::new(0.4, -0.15, 0.25);
        let jac = wheel_jacobian(&o, h, &q);
        let step = 1e-6;
        for k in 0..3 {
            let mut qp = q;
            let mut qm = q;
            qp[k] += step;
            qm[k] -= step;
            let fd = (wheel_world_points(&m, h, &qp)[0] - wheel_world_points(&m, h, &qm)[0])
                / (2.0 * step);
            assert!((fd - jac.column(k)).norm() < 1e-8, "column {k}");
        }
    }

    #[test]
    fn gaps_on_flat_ground() {
        let m = VehicleModel::six_wheel();
        let ground = flat(0.0);
        let h = Heading::default();
        let d = gap_vector(&m, h, &Vector3::new(0.40, 0.0, 0.0), &ground).unwrap();
        for g in &d {
            assert!((g - 0.05).abs() < 1e-12);
        }
        let d = gap_vector(&m, h, &Vector3::new(0.35, 0.0, 0.0), &ground).unwrap();
        assert!(d.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gaps_on_a_ramp() {
        let m = VehicleModel::six_wheel();
        let slope = 0.3;
        let ramp = TerrainSurface::new(ControlGrid::from_fn(12, 12, -3.0, -3.0, 0.5, |x, _| {
            slope * x
        }))
        .unwrap();
        let h = Heading::new(0.2, 0.1, 0.4);
        let q = Vector3::new(0.9, 0.05, -0.1);
        let d = gap_vector(&m, h, &q, &ramp).unwrap();
        for (g, p) in d.iter().zip(wheel_world_points(&m, h, &q)) {
            assert!((g - (p[2] - slope * p[0])).abs() < 1e-10);
        }
    }

    #[test]
    fn wheel_outside_footprint_is_reported() {
        let m = VehicleModel::six_wheel();
        let ground = flat(0.0);
        let h = Heading::new(2.3, 0.0, 0.0);
        assert!(matches!(
            gap_vector(&m, h, &Vector3::new(1.0, 0.0, 0.0), &ground),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn wrench_columns_by_definition() {
        let below = single([0.0, 0.0, -0.3]);
        let w = build_wrench(&below, Heading::default(), &Vector3::zeros(), &[0]).unwrap();
        assert_eq!(w.wf.column(0).as_slice(), &[1.0, 0.0, 0.0]);

        let off = single([1.0, 0.5, -0.3]);
        let w = build_wrench(&off, Heading::default(), &Vector3::zeros(), &[0]).unwrap();
        assert_eq!(w.wf.column(0).as_slice(), &[1.0, 0.5, -1.0]);
    }

    #[test]
    fn gravity_wrench_of_the_reference_vehicle() {
        let m = VehicleModel::six_wheel();
        let w = build_wrench(&m, Heading::default(), &Vector3::zeros(), &[]).unwrap();
        assert_eq!(w.wf.ncols(), 0);
        assert!((w.gravity - Vector3::new(-4900.0, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn symmetric_layout_has_no_net_torque() {
        let m = VehicleModel::six_wheel();
        let active: Vec<usize> = (0..6).collect();
        let w = build_wrench(&m, Heading::default(), &Vector3::zeros(), &active).unwrap();
        let g = w.apply(&[100.0; 6]);
        assert!((g[0] - 600.0).abs() < 1e-12);
        assert!(g[1].abs() < 1e-12 && g[2].abs() < 1e-12);
    }

    #[test]
    fn wrench_is_translation_equivariant() {
        let m = VehicleModel::six_wheel();
        let active = [0, 2, 4];
        let q = Vector3::new(0.3, 0.05, -0.08);
        let a = build_wrench(&m, Heading::new(0.0, 0.0, 0.2), &q, &active).unwrap();
        let mut q2 = q;
        q2[0] += 3.0;
        let b = build_wrench(&m, Heading::new(5.0, -4.0, 0.2), &q2, &active).unwrap();
        assert!((a.wf - b.wf).norm() < 1e-12);
    }

    #[test]
    fn bad_active_sets_are_rejected() {
        let m = VehicleModel::six_wheel();
        let q = Vector3::zeros();
        assert!(build_wrench(&m, Heading::default(), &q, &[0, 0]).is_err());
        assert!(build_wrench(&m, Heading::default(), &q, &[6]).is_err());
    }

    #[test]
    fn model_validation() {
        assert!(VehicleModel::new(0.0, 1.0, 1.0, 0.0, vec![[0.0; 3]]).is_err());
        assert!(VehicleModel::new(1.0, -1.0, 1.0, 0.0, vec![[0.0; 3]]).is_err());
        assert!(VehicleModel::new(1.0, 1.0, 1.0, 0.0, vec![]).is_err());
        let text = serde_json::to_string(&VehicleModel::eight_wheel()).unwrap();
        let back = VehicleModel::from_json(&text).unwrap();
        assert_eq!(back, VehicleModel::eight_wheel());
        assert!((VehicleModel::six_wheel().characteristic_length() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn normal_mode_directions_follow_terrain() {
        let m = single([0.0, 0.0, 0.0]);
        let ramp =
            TerrainSurface::new(ControlGrid::from_fn(12, 12, -3.0, -3.0, 0.5, |x, _| x)).unwrap();
        let q = Vector3::new(1.0, 0.0, 0.0);
        let geo = contact_geometry(&m, Heading::default(), &q, &ramp, ForceMode::Normal).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((geo.directions[0] - Vector3::new(-h, 0.0, h)).norm() < 1e-10);
        assert!((geo.gaps[0] - h).abs() < 1e-10);
    }
}
