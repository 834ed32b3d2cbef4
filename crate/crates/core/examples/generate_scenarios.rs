//! Writes the bundled terrains, vehicles, paths and scenarios.
//!
//! ```text
//! cargo run --example generate_scenarios [-- OUT_DIR]
//! ```
//!
//! OUT_DIR defaults to `scenarios/` at the workspace root.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use terrain_pose::{ControlGrid, SurfacePath, TerrainSurface, VehicleModel};

fn write<T: Serialize>(dir: &Path, rel: &str, value: &T) {
    let file = dir.join(rel);
    fs::create_dir_all(file.parent().unwrap()).unwrap();
    let text = serde_json::to_string_pretty(value).unwrap();
    fs::write(&file, text + "\n").unwrap();
    println!("wrote {}", file.display());
}

fn gaussian(x: f64, y: f64, cx: f64, cy: f64, height: f64, sx: f64, sy: f64) -> f64 {
    height * (-((x - cx).powi(2) / (2.0 * sx * sx) + (y - cy).powi(2) / (2.0 * sy * sy))).exp()
}

/// Square grid of `n × n` nodes centred on the origin.
fn centred(n: usize, spacing: f64, height: impl Fn(f64, f64) -> f64) -> ControlGrid {
    let origin = -((n - 1) as f64) * spacing / 2.0;
    ControlGrid::from_fn(n, n, origin, origin, spacing, height)
}

/// Path control points given in world xy, mapped into the footprint square.
fn world_path(grid: &ControlGrid, points: &[[f64; 2]]) -> SurfacePath {
    let fp = TerrainSurface::new(grid.clone()).unwrap().footprint();
    let norm = points
        .iter()
        .map(|p| {
            [
                (p[0] - fp.x_min) / (fp.x_max - fp.x_min),
                (p[1] - fp.y_min) / (fp.y_max - fp.y_min),
            ]
        })
        .collect();
    SurfacePath::new(norm).unwrap()
}

fn straight_world(grid: &ControlGrid, from: [f64; 2], to: [f64; 2]) -> SurfacePath {
    let lerp = |t: f64| {
        [
            from[0] + t * (to[0] - from[0]),
            from[1] + t * (to[1] - from[1]),
        ]
    };
    world_path(grid, &[lerp(-1.0), lerp(0.0), lerp(1.0), lerp(2.0)])
}

fn pose_scenario(
    name: &str,
    terrain: &str,
    vehicle: &str,
    x: f64,
    y: f64,
    yaw: f64,
) -> serde_json::Value {
    json!({
        "schema_version": 1,
        "name": name,
        "terrain": format!("terrains/{terrain}.json"),
        "vehicle": format!("vehicles/{vehicle}.json"),
        "query": { "pose": { "x": x, "y": y, "yaw": yaw } },
        "mode": "vertical"
    })
}

fn path_scenario(
    name: &str,
    terrain: &str,
    vehicle: &str,
    path: &str,
    samples: usize,
) -> serde_json::Value {
    json!({
        "schema_version": 1,
        "name": name,
        "terrain": format!("terrains/{terrain}.json"),
        "vehicle": format!("vehicles/{vehicle}.json"),
        "query": { "path": { "file": format!("paths/{path}.json"), "samples": samples } },
        "mode": "vertical"
    })
}

fn main() {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios"));

    write(&out, "vehicles/six_wheel.json", &VehicleModel::six_wheel());
    write(
        &out,
        "vehicles/four_wheel.json",
        &VehicleModel::four_wheel(),
    );
    write(
        &out,
        "vehicles/eight_wheel.json",
        &VehicleModel::eight_wheel(),
    );

    // Example 1: level ground.
    let flat = centred(17, 0.25, |_, _| 0.0);
    write(&out, "terrains/flat.json", &flat);
    write(
        &out,
        "example1_flat.json",
        &pose_scenario("example1_flat", "flat", "six_wheel", 0.0, 0.0, 0.0),
    );

    // Example 2: shallow pits under the middle-left, front-right and
    // rear-right wheels, leaving wheels 1, 3 and 5 to carry the load.
    let pits = [
        (0.0, 0.45, 0.020),
        (0.75, -0.45, 0.030),
        (-0.75, -0.45, 0.025),
    ];
    let dips = centred(29, 0.15, move |x, y| {
        pits.iter()
            .filter(|(px, py, _)| (x - px).abs() < 0.151 && (y - py).abs() < 0.151)
            .map(|(_, _, depth)| -depth)
            .sum()
    });
    write(&out, "terrains/pits.json", &dips);
    write(
        &out,
        "example2_pits.json",
        &pose_scenario("example2_pits", "pits", "six_wheel", 0.0, 0.0, 0.0),
    );

    // Example 3: a ridge under the front axle lifts the front pair so the
    // middle pair hangs.
    let ridge = centred(33, 0.125, |x, y| gaussian(x, y, 0.75, 0.0, 0.2, 0.2, 0.6));
    write(&out, "terrains/front_ridge.json", &ridge);
    write(
        &out,
        "example3_bump.json",
        &pose_scenario("example3_bump", "front_ridge", "six_wheel", 0.0, 0.0, 0.0),
    );

    // Planar 10° ramp rising along +x.
    let slope = (10.0 * PI / 180.0).tan();
    let ramp = centred(17, 0.25, move |x, _| x * slope);
    write(&out, "terrains/ramp10.json", &ramp);
    write(
        &out,
        "ramp10.json",
        &pose_scenario("ramp10", "ramp10", "six_wheel", 0.0, 0.0, 0.0),
    );

    // Example 4: four-wheeler driving past a rock under its left track.
    let rock = ControlGrid::from_fn(41, 61, -3.0, -2.0, 0.1, |x, y| {
        gaussian(x, y, 0.0, 0.45, 0.08, 0.12, 0.12)
    });
    write(&out, "terrains/rock.json", &rock);
    write(
        &out,
        "paths/rock_pass.json",
        &straight_world(&rock, [-1.2, 0.0], [1.2, 0.0]),
    );
    write(
        &out,
        "example4_rock.json",
        &path_scenario("example4_rock", "rock", "four_wheel", "rock_pass", 25),
    );

    // Example 5: six-wheeler over a bump on the left and a hole on the right.
    let bump_hole = ControlGrid::from_fn(41, 61, -3.0, -2.0, 0.1, |x, y| {
        gaussian(x, y, 0.4, 0.45, 0.10, 0.15, 0.15) - gaussian(x, y, -0.6, -0.45, 0.08, 0.15, 0.15)
    });
    write(&out, "terrains/bump_hole.json", &bump_hole);
    write(
        &out,
        "paths/bump_hole_pass.json",
        &straight_world(&bump_hole, [-1.4, 0.0], [1.4, 0.0]),
    );
    write(
        &out,
        "example5_bump_hole.json",
        &path_scenario(
            "example5_bump_hole",
            "bump_hole",
            "six_wheel",
            "bump_hole_pass",
            29,
        ),
    );

    // Example 6: eight-wheeler on an S-shaped route over rolling hills.
    let hills = ControlGrid::from_fn(41, 51, -5.0, -4.0, 0.2, |x, y| {
        0.15 * (0.8 * x).sin() * (0.6 * y).cos()
            + 0.08 * (1.7 * x + 0.5 * y).sin()
            + gaussian(x, y, 1.0, -1.0, 0.3, 0.8, 0.8)
            + gaussian(x, y, -1.5, 1.2, 0.25, 0.7, 0.9)
    });
    write(&out, "terrains/hills.json", &hills);
    write(
        &out,
        "paths/s_route.json",
        &world_path(
            &hills,
            &[
                [-3.0, -1.0],
                [-2.0, -1.0],
                [-1.0, 0.5],
                [0.0, 0.5],
                [1.0, -0.5],
                [2.0, -0.5],
                [3.0, 1.0],
            ],
        ),
    );
    write(
        &out,
        "example6_hills.json",
        &path_scenario("example6_hills", "hills", "eight_wheel", "s_route", 31),
    );
}
