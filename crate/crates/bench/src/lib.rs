//! Shared fixtures for the benchmarks.

use gridsparse::problem::Grid3DParams;
use gridsparse::visibility::Aabb;
use gridsparse::{generate_map, Bounds, Map, SceneSpec};

pub const ROOM: [f64; 3] = [10.0, 8.0, 3.0];

/// Seeded scene in a `ROOM`-sized box.
pub fn scene(n_landmarks: usize, n_keyframes: usize) -> Map {
    generate_map(&SceneSpec {
        n_landmarks,
        n_keyframes,
        room: ROOM,
        seed: 1,
        ..SceneSpec::default()
    })
    .expect("bench scene generates")
}

/// 3D grid over `ROOM`.
pub fn room_grid(resolution: f64) -> Grid3DParams {
    Grid3DParams {
        bounds: Bounds::Explicit(Aabb {
            min: [0.0; 3],
            max: ROOM,
        }),
        ..Grid3DParams::new(resolution)
    }
}
