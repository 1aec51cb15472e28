//! Image-plane grids: per-keyframe cell occupancy and the landmark-to-cell matrix.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project, CameraModel, Pixel};
use crate::map::Map;
use crate::sparse::BinaryMatrix;

/// `cols x rows` cells over every keyframe image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Grid2DConfig {
    pub cols: u32,
    pub rows: u32,
}

impl Default for Grid2DConfig {
    fn default() -> Self {
        Grid2DConfig { cols: 8, rows: 6 }
    }
}

impl Grid2DConfig {
    pub fn new(cols: u32, rows: u32) -> Result<Self> {
        if cols == 0 || rows == 0 {
            return Err(Error::Config(format!(
                "grid must have at least one cell per axis, got {cols}x{rows}"
            )));
        }
        Ok(Grid2DConfig { cols, rows })
    }

    pub fn cells(&self) -> u32 {
        self.cols * self.rows
    }

    pub fn check_camera(&self, camera: &CameraModel) -> Result<()> {
        if self.cols > camera.width || self.rows > camera.height {
            return Err(Error::Config(format!(
                "{self} grid is finer than the {}x{} image",
                camera.width, camera.height
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Grid2DConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.cols, self.rows)
    }
}

impl FromStr for Grid2DConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (c, r) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::Config(format!("expected COLSxROWS, got `{s}`")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<u32>()
                .map_err(|_| Error::Config(format!("expected COLSxROWS, got `{s}`")))
        };
        Grid2DConfig::new(parse(c)?, parse(r)?)
    }
}

impl TryFrom<String> for Grid2DConfig {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Grid2DConfig> for String {
    fn from(g: Grid2DConfig) -> String {
        g.to_string()
    }
}

/// Cell `(col, row)` containing `pixel`.
pub fn cell_index(config: &Grid2DConfig, camera: &CameraModel, pixel: &Pixel) -> Result<(u32, u32)> {
    if !camera.contains(pixel) {
        return Err(Error::Contract(format!(
            "pixel ({}, {}) lies outside the {}x{} image",
            pixel.x, pixel.y, camera.width, camera.height
        )));
    }
    let col = (pixel.x * config.cols as f64 / camera.width as f64).floor() as u32;
    let row = (pixel.y * config.rows as f64 / camera.height as f64).floor() as u32;
    Ok((col.min(config.cols - 1), row.min(config.rows - 1)))
}

/// Occupied cell of one keyframe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellOccupancy {
    pub keyframe_id: u64,
    pub cell: (u32, u32),
    /// Landmark ids whose reprojection falls in the cell, ascending.
    pub landmark_ids: Vec<u64>,
}

/// Row label of the cell matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellLabel {
    pub keyframe_id: u64,
    pub col: u32,
    pub row: u32,
}

#[derive(Debug, Clone)]
pub struct Occupancy {
    /// One row per occupied (keyframe, cell); columns are landmark indices.
    pub matrix: BinaryMatrix,
    pub labels: Vec<CellLabel>,
}

impl Occupancy {
    pub fn cells(&self, map: &Map) -> Vec<CellOccupancy> {
        self.labels
            .iter()
            .zip(self.matrix.rows())
            .map(|(l, row)| CellOccupancy {
                keyframe_id: l.keyframe_id,
                cell: (l.col, l.row),
                landmark_ids: row.iter().map(|&j| map.landmarks()[j as usize].id).collect(),
            })
            .collect()
    }
}

/// Per-keyframe occupied cells, using landmarks reprojected through the
/// keyframe pose. Only landmarks the keyframe observes are considered; those
/// reprojecting outside the image are skipped.
pub fn keyframe_cells(map: &Map, config: &Grid2DConfig, kf: usize) -> Vec<((u32, u32), Vec<u32>)> {
    let keyframe = &map.keyframes()[kf];
    let camera = map.keyframe_camera(kf);
    let mut binned: Vec<(u32, u32, u32)> = map
        .keyframe_observations(kf)
        .iter()
        .filter_map(|&lm| {
            let p = &map.landmarks()[lm as usize].position;
            let px = project(camera, &keyframe.pose, p)?;
            let (c, r) = cell_index(config, camera, &px).ok()?;
            Some((r, c, lm))
        })
        .collect();
    // row-major cell order
    binned.sort_unstable();
    let mut out: Vec<((u32, u32), Vec<u32>)> = Vec::new();
    for (r, c, lm) in binned {
        match out.last_mut() {
            Some((cell, lms)) if *cell == (c, r) => lms.push(lm),
            _ => out.push(((c, r), vec![lm])),
        }
    }
    out
}

/// Builds the landmark-to-cell matrix. Rows are ordered by keyframe id, then
/// row-major cell order; empty cells produce no row.
pub fn occupancy_matrix(map: &Map, config: &Grid2DConfig) -> Occupancy {
    let per_kf: Vec<_> = (0..map.n_keyframes())
        .into_par_iter()
        .map(|kf| keyframe_cells(map, config, kf))
        .collect();
    let mut matrix = BinaryMatrix::empty(map.n_landmarks());
    let mut labels = Vec::new();
    for (kf, cells) in per_kf.into_iter().enumerate() {
        let keyframe_id = map.keyframes()[kf].id;
        for ((col, row), lms) in cells {
            matrix.push_row(lms);
            labels.push(CellLabel {
                keyframe_id,
                col,
                row,
            });
        }
    }
    Occupancy { matrix, labels }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::geometry::{Point3, Pose};
    use crate::map::{Camera, Keyframe, Landmark, Observation};

    fn vga() -> CameraModel {
        CameraModel {
            fx: 100.0,
            fy: 100.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        }
    }

    #[test]
    fn cell_index_examples() {
        let g = Grid2DConfig::new(8, 6).unwrap();
        let cam = vga();
        assert_eq!(cell_index(&g, &cam, &Pixel::new(320.0, 240.0)).unwrap(), (4, 3));
        assert_eq!(cell_index(&g, &cam, &Pixel::new(0.0, 0.0)).unwrap(), (0, 0));
        assert_eq!(cell_index(&g, &cam, &Pixel::new(639.9, 479.9)).unwrap(), (7, 5));
        assert!(matches!(
            cell_index(&g, &cam, &Pixel::new(640.0, 10.0)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn parses_grid_spec() {
        assert_eq!("8x6".parse::<Grid2DConfig>().unwrap(), Grid2DConfig::new(8, 6).unwrap());
        assert!("8".parse::<Grid2DConfig>().is_err());
        assert!("0x6".parse::<Grid2DConfig>().is_err());
    }

    fn one_keyframe_map(points: &[Point3]) -> Map {
        let landmarks = points
            .iter()
            .enumerate()
            .map(|(i, p)| Landmark {
                id: i as u64,
                position: *p,
                match_count: 1,
            })
            .collect();
        let observations = points
            .iter()
            .enumerate()
            .map(|(i, p)| Observation {
                keyframe_id: 0,
                landmark_id: i as u64,
                pixel: project(&vga(), &Pose::identity(), p).unwrap_or(Pixel::new(1.0, 1.0)),
            })
            .collect();
        Map::new(
            vec![Camera { id: 0, model: vga() }],
            vec![Keyframe {
                id: 0,
                pose: Pose::identity(),
                camera_id: 0,
            }],
            landmarks,
            observations,
            BTreeMap::new(),
        )
        .unwrap()
    }

    #[test]
    fn same_cell_gives_one_row() {
        let map = one_keyframe_map(&[Point3::new(0.0, 0.0, 2.0), Point3::new(0.01, 0.01, 2.0)]);
        let occ = occupancy_matrix(&map, &Grid2DConfig::default());
        assert_eq!(occ.matrix.to_dense(), vec![vec![1, 1]]);
        assert_eq!(occ.labels[0], CellLabel { keyframe_id: 0, col: 4, row: 3 });
    }

    #[test]
    fn different_cells_give_two_rows() {
        let map = one_keyframe_map(&[Point3::new(0.0, 0.0, 2.0), Point3::new(-5.0, -3.0, 2.0)]);
        let occ = occupancy_matrix(&map, &Grid2DConfig::default());
        // (-5,-3,2) projects to (70, 90): cell (0, 1), which precedes (4, 3) in row-major order
        assert_eq!(occ.matrix.to_dense(), vec![vec![0, 1], vec![1, 0]]);
        assert_eq!((occ.labels[0].col, occ.labels[0].row), (0, 1));
        let cells = occ.cells(&map);
        assert_eq!(cells[1].landmark_ids, vec![0]);
    }

    #[test]
    fn out_of_bounds_reprojection_is_excluded() {
        // second landmark is behind the camera; it stays in A but not in B
        let map = one_keyframe_map(&[Point3::new(0.0, 0.0, 2.0), Point3::new(0.0, 0.0, -2.0)]);
        let occ = occupancy_matrix(&map, &Grid2DConfig::new(1, 1).unwrap());
        assert_eq!(occ.matrix.to_dense(), vec![vec![1, 0]]);
        assert_eq!(map.association_matrix().to_dense(), vec![vec![1, 1]]);
    }
}
