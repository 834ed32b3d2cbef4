//! Terrain as a uniform cubic B-spline surface over a regular control grid.
//!
//! Every 4×4 window of the control grid defines one bicubic patch
//!
//! ```text
//! z(v, w) = V · R · D · Rᵀ · Wᵀ,   V = [v³, v², v, 1],  W = [w³, w², w, 1]
//! ```
//!
//! where `D` holds the window heights and `R` is the uniform cubic B-spline
//! basis. Neighbouring windows share three rows or columns of control points,
//! so the assembled surface is C² everywhere. Only `z` goes through the
//! spline: the `x, y` of a surface point follow from the affine grid map,
//! which the uniform basis reproduces exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform cubic B-spline basis matrix, used as `V · BASIS`.
pub const BASIS: [[f64; 4]; 4] = [
    [-1.0 / 6.0, 3.0 / 6.0, -3.0 / 6.0, 1.0 / 6.0],
    [3.0 / 6.0, -6.0 / 6.0, 3.0 / 6.0, 0.0],
    [-3.0 / 6.0, 0.0, 3.0 / 6.0, 0.0],
    [1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0, 0.0],
];

pub const TERRAIN_SCHEMA_VERSION: u32 = 1;
pub const PATH_SCHEMA_VERSION: u32 = 1;

/// Power vector `[v³, v², v, 1]` or one of its derivatives.
fn power_row(v: f64, order: usize) -> [f64; 4] {
    match order {
        0 => [v * v * v, v * v, v, 1.0],
        1 => [3.0 * v * v, 2.0 * v, 1.0, 0.0],
        2 => [6.0 * v, 2.0, 0.0, 0.0],
        3 => [6.0, 0.0, 0.0, 0.0],
        _ => [0.0; 4],
    }
}

fn row_times_basis(row: [f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (k, o) in out.iter_mut().enumerate() {
        *o = (0..4).map(|m| row[m] * BASIS[m][k]).sum();
    }
    out
}

/// The four B-spline weights `V(v) · R` (or their `order`-th derivative).
pub fn basis_weights(v: f64, order: usize) -> [f64; 4] {
    row_times_basis(power_row(v, order))
}

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain { name, value })
    }
}

/// Gridded control heights, as stored in terrain files.
///
/// `heights` is row-major: `heights[row * cols + col]` is the control height
/// at `(origin_x + col * spacing, origin_y + row * spacing)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlGrid {
    #[serde(default = "terrain_schema_version")]
    pub schema_version: u32,
    pub rows: usize,
    pub cols: usize,
    pub origin_x: f64,
    pub origin_y: f64,
    pub spacing: f64,
    pub heights: Vec<f64>,
}

fn terrain_schema_version() -> u32 {
    TERRAIN_SCHEMA_VERSION
}

impl ControlGrid {
    /// Samples `height(x, y)` at every grid node.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        origin_x: f64,
        origin_y: f64,
        spacing: f64,
        height: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut heights = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                heights.push(height(
                    origin_x + c as f64 * spacing,
                    origin_y + r as f64 * spacing,
                ));
            }
        }
        ControlGrid {
            schema_version: TERRAIN_SCHEMA_VERSION,
            rows,
            cols,
            origin_x,
            origin_y,
            spacing,
            heights,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 4 || self.cols < 4 {
            return Err(Error::InvalidInput(format!(
                "control grid must be at least 4x4, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "grid spacing must be positive, got {}",
                self.spacing
            )));
        }
        if !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return Err(Error::InvalidInput("grid origin must be finite".into()));
        }
        if self.heights.len() != self.rows * self.cols {
            return Err(Error::InvalidInput(format!(
                "expected {} heights for a {}x{} grid, got {}",
                self.rows * self.cols,
                self.rows,
                self.cols,
                self.heights.len()
            )));
        }
        if let Some(bad) = self.heights.iter().position(|h| !h.is_finite()) {
            return Err(Error::InvalidInput(format!("height #{bad} is not finite")));
        }
        Ok(())
    }

    pub fn height(&self, row: usize, col: usize) -> f64 {
        self.heights[row * self.cols + col]
    }
}

/// One bicubic patch: a 4×4 window of control heights plus its xy frame.
///
/// `control[a][b]` is the height at column offset `a` (the `v`/x direction)
/// and row offset `b` (the `w`/y direction). The parameter square `[0,1]²`
/// maps to `[x0, x0 + spacing] × [y0, y0 + spacing]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BPatch {
    pub control: [[f64; 4]; 4],
    pub x0: f64,
    pub y0: f64,
    pub spacing: f64,
}

impl BPatch {
    /// Mixed parametric derivative `∂^(dv+dw) z / ∂v^dv ∂w^dw` without
    /// range checks.
    pub fn height_derivative(&self, v: f64, w: f64, dv: usize, dw: usize) -> f64 {
        let bv = basis_weights(v, dv);
        let bw = basis_weights(w, dw);
        self.control
            .iter()
            .zip(bv)
            .map(|(row, a)| a * row.iter().zip(bw).map(|(c, b)| c * b).sum::<f64>())
            .sum()
    }

    /// Surface point at `(v, w)`.
    pub fn eval(&self, v: f64, w: f64) -> Result<[f64; 3]> {
        check_unit("v", v)?;
        check_unit("w", w)?;
        Ok([
            self.x0 + v * self.spacing,
            self.y0 + w * self.spacing,
            self.height_derivative(v, w, 0, 0),
        ])
    }

    /// Height gradient `(∂z/∂x, ∂z/∂y)` at `(v, w)`.
    pub fn gradient(&self, v: f64, w: f64) -> [f64; 2] {
        [
            self.height_derivative(v, w, 1, 0) / self.spacing,
            self.height_derivative(v, w, 0, 1) / self.spacing,
        ]
    }
}

/// Free-function form of [`BPatch::eval`].
pub fn eval_patch(patch: &BPatch, v: f64, w: f64) -> Result<[f64; 3]> {
    patch.eval(v, w)
}

/// Axis-aligned region where complete 4×4 windows exist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Footprint {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// Immutable multi-patch terrain built from a [`ControlGrid`].
#[derive(Debug, Clone)]
pub struct TerrainSurface {
    grid: ControlGrid,
}

impl TerrainSurface {
    pub fn new(grid: ControlGrid) -> Result<Self> {
        grid.validate()?;
        Ok(TerrainSurface { grid })
    }

    pub fn grid(&self) -> &ControlGrid {
        &self.grid
    }

    /// Number of patch windows along x and y.
    pub fn window_counts(&self) -> (usize, usize) {
        (self.grid.cols - 3, self.grid.rows - 3)
    }

    pub fn footprint(&self) -> Footprint {
        let g = &self.grid;
        Footprint {
            x_min: g.origin_x + g.spacing,
            x_max: g.origin_x + (g.cols - 2) as f64 * g.spacing,
            y_min: g.origin_y + g.spacing,
            y_max: g.origin_y + (g.rows - 2) as f64 * g.spacing,
        }
    }

    /// The patch whose window starts at control column `i`, row `j`.
    pub fn patch(&self, i: usize, j: usize) -> BPatch {
        let g = &self.grid;
        assert!(
            i + 4 <= g.cols && j + 4 <= g.rows,
            "window ({i}, {j}) out of range"
        );
        let mut control = [[0.0; 4]; 4];
        for (a, col) in control.iter_mut().enumerate() {
            for (b, h) in col.iter_mut().enumerate() {
                *h = g.height(j + b, i + a);
            }
        }
        BPatch {
            control,
            x0: g.origin_x + (i + 1) as f64 * g.spacing,
            y0: g.origin_y + (j + 1) as f64 * g.spacing,
            spacing: g.spacing,
        }
    }

    /// Selects the window containing `(x, y)` and the local parameters.
    pub fn locate(&self, x: f64, y: f64) -> Result<(BPatch, f64, f64)> {
        if !self.footprint().contains(x, y) {
            return Err(Error::OutOfBounds { x, y });
        }
        let g = &self.grid;
        let (nx, ny) = self.window_counts();
        let split = |t: f64, n: usize| -> (usize, f64) {
            let k = (t.floor() as usize).min(n - 1);
            (k, (t - k as f64).clamp(0.0, 1.0))
        };
        let (i, v) = split((x - g.origin_x) / g.spacing - 1.0, nx);
        let (j, w) = split((y - g.origin_y) / g.spacing - 1.0, ny);
        Ok((self.patch(i, j), v, w))
    }

    pub fn height_at(&self, x: f64, y: f64) -> Result<f64> {
        let (patch, v, w) = self.locate(x, y)?;
        Ok(patch.height_derivative(v, w, 0, 0))
    }

    /// `(∂z/∂x, ∂z/∂y)` at `(x, y)`.
    pub fn gradient_at(&self, x: f64, y: f64) -> Result<[f64; 2]> {
        let (patch, v, w) = self.locate(x, y)?;
        Ok(patch.gradient(v, w))
    }

    /// Upward unit normal at `(x, y)`.
    pub fn normal_at(&self, x: f64, y: f64) -> Result<[f64; 3]> {
        let [gx, gy] = self.gradient_at(x, y)?;
        let n = (gx * gx + gy * gy + 1.0).sqrt();
        Ok([-gx / n, -gy / n, 1.0 / n])
    }

    /// Maps footprint-normalised coordinates `(s, t) ∈ [0,1]²` to world xy.
    pub fn footprint_point(&self, s: f64, t: f64) -> [f64; 2] {
        let f = self.footprint();
        [
            f.x_min + s * (f.x_max - f.x_min),
            f.y_min + t * (f.y_max - f.y_min),
        ]
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let grid: ControlGrid = serde_json::from_str(text).map_err(|e| Error::Schema {
            path: "terrain".into(),
            message: e.to_string(),
        })?;
        Self::new(grid)
    }
}

/// Cubic B-spline path in the footprint-normalised parameter square of a
/// [`TerrainSurface`].
///
/// With four control points this is the single-segment curve
/// `(v(u), w(u)) = U(u) · R · C`. More control points chain further uniform
/// segments, with `u ∈ [0, 1]` spread evenly over all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacePath {
    #[serde(default = "path_schema_version")]
    pub schema_version: u32,
    pub control_points: Vec<[f64; 2]>,
}

fn path_schema_version() -> u32 {
    PATH_SCHEMA_VERSION
}

impl SurfacePath {
    pub fn new(control_points: Vec<[f64; 2]>) -> Result<Self> {
        let path = SurfacePath {
            schema_version: PATH_SCHEMA_VERSION,
            control_points,
        };
        path.validate()?;
        Ok(path)
    }

    /// Evenly spaced collinear control points; the curve is then the straight
    /// segment from `from` to `to` traversed at constant speed.
    pub fn straight(from: [f64; 2], to: [f64; 2]) -> Result<Self> {
        let lerp = |t: f64| {
            [
                from[0] + t * (to[0] - from[0]),
                from[1] + t * (to[1] - from[1]),
            ]
        };
        Self::new(vec![lerp(-1.0), lerp(0.0), lerp(1.0), lerp(2.0)])
    }

    pub fn validate(&self) -> Result<()> {
        if self.control_points.len() < 4 {
            return Err(Error::InvalidInput(format!(
                "a path needs at least 4 control points, got {}",
                self.control_points.len()
            )));
        }
        if self.control_points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(
                "path control points must be finite".into(),
            ));
        }
        Ok(())
    }

    fn segment(&self, u: f64) -> (usize, f64) {
        let n = self.control_points.len() - 3;
        let t = u * n as f64;
        let k = (t.floor() as usize).min(n - 1);
        (k, t - k as f64)
    }

    fn combine(&self, u: f64, order: usize) -> [f64; 2] {
        let n = (self.control_points.len() - 3) as f64;
        let (k, t) = self.segment(u);
        let b = basis_weights(t, order);
        let scale = n.powi(order as i32);
        let mut out = [0.0; 2];
        for (m, bm) in b.iter().enumerate() {
            let c = self.control_points[k + m];
            out[0] += bm * c[0] * scale;
            out[1] += bm * c[1] * scale;
        }
        out
    }

    /// `(v(u), w(u))` in normalised footprint coordinates.
    pub fn param_at(&self, u: f64) -> Result<[f64; 2]> {
        check_unit("u", u)?;
        let [v, w] = self.combine(u, 0);
        check_unit("v", v)?;
        check_unit("w", w)?;
        Ok([v, w])
    }

    /// `d(v, w)/du`.
    pub fn param_derivative(&self, u: f64) -> Result<[f64; 2]> {
        check_unit("u", u)?;
        Ok(self.combine(u, 1))
    }

    /// World xy of the path at `u`.
    pub fn xy_at(&self, surface: &TerrainSurface, u: f64) -> Result<[f64; 2]> {
        let [v, w] = self.param_at(u)?;
        Ok(surface.footprint_point(v, w))
    }

    /// Heading (yaw, radians) of the path tangent projected onto xy.
    pub fn heading_at(&self, surface: &TerrainSurface, u: f64) -> Result<f64> {
        let [dv, dw] = self.param_derivative(u)?;
        let f = surface.footprint();
        let dx = dv * (f.x_max - f.x_min);
        let dy = dw * (f.y_max - f.y_min);
        if dx == 0.0 && dy == 0.0 {
            return Ok(0.0);
        }
        Ok(dy.atan2(dx))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let path: SurfacePath = serde_json::from_str(text).map_err(|e| Error::Schema {
            path: "path".into(),
            message: e.to_string(),
        })?;
        path.validate()?;
        Ok(path)
    }
}

/// Surface point under the path at parameter `u`.
pub fn eval_path(path: &SurfacePath, surface: &TerrainSurface, u: f64) -> Result<[f64; 3]> {
    let [x, y] = path.xy_at(surface, u)?;
    Ok([x, y, surface.height_at(x, y)?])
}
