//! Landmark map data model, JSON file format and the keyframe/landmark association matrix.
//!
//! Map files are a single JSON document:
//!
//! ```text
//! {"cameras":      [{"id", "fx", "fy", "cx", "cy", "width", "height"}],
//!  "keyframes":    [{"id", "camera_id", "q": [w, x, y, z], "t": [x, y, z]}],
//!  "landmarks":    [{"id", "p": [x, y, z], "match_count"}],
//!  "observations": [{"kf", "lm", "u", "v"}],
//!  "metadata":     {"key": "value", ...}}          (optional)
//! ```
//!
//! Keyframe poses map world coordinates into the camera frame. Record order in
//! the file is irrelevant; ids are authoritative and internal indices are
//! assigned by ascending id.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Pixel, Point3, Pose};
use crate::sparse::BinaryMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Landmark {
    pub id: u64,
    pub position: Point3,
    /// How often the landmark was matched during mapping.
    pub match_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub id: u64,
    pub pose: Pose,
    pub camera_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub keyframe_id: u64,
    pub landmark_id: u64,
    pub pixel: Pixel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub id: u64,
    pub model: CameraModel,
}

/// A validated, immutable landmark map.
#[derive(Debug, Clone, PartialEq)]
pub struct Map {
    cameras: Vec<Camera>,
    keyframes: Vec<Keyframe>,
    landmarks: Vec<Landmark>,
    observations: Vec<Observation>,
    metadata: BTreeMap<String, String>,
    keyframe_camera: Vec<usize>,
    // landmark indices observed by each keyframe, ascending
    kf_obs: Vec<Vec<u32>>,
    // keyframe indices observing each landmark, ascending
    lm_obs: Vec<Vec<u32>>,
}

impl Map {
    /// Validates and indexes a map. Records may arrive in any order.
    pub fn new(
        mut cameras: Vec<Camera>,
        mut keyframes: Vec<Keyframe>,
        mut landmarks: Vec<Landmark>,
        observations: Vec<Observation>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Map> {
        cameras.sort_by_key(|c| c.id);
        keyframes.sort_by_key(|k| k.id);
        landmarks.sort_by_key(|l| l.id);

        for w in cameras.windows(2) {
            if w[0].id == w[1].id {
                return Err(Error::Validation(format!("duplicate camera id {}", w[0].id)));
            }
        }
        for c in &cameras {
            c.model
                .validate()
                .map_err(|e| Error::Validation(format!("camera {}: {e}", c.id)))?;
        }
        for w in keyframes.windows(2) {
            if w[0].id == w[1].id {
                return Err(Error::Validation(format!("duplicate keyframe id {}", w[0].id)));
            }
        }
        for w in landmarks.windows(2) {
            if w[0].id == w[1].id {
                return Err(Error::Validation(format!("duplicate landmark id {}", w[0].id)));
            }
        }
        for l in &landmarks {
            if !l.position.iter().all(|v| v.is_finite()) {
                return Err(Error::Validation(format!(
                    "landmark {} has a non-finite position",
                    l.id
                )));
            }
        }

        let mut dangling_cams = Vec::new();
        let keyframe_camera: Vec<usize> = keyframes
            .iter()
            .map(|k| match cameras.binary_search_by_key(&k.camera_id, |c| c.id) {
                Ok(i) => i,
                Err(_) => {
                    dangling_cams.push(k.camera_id);
                    0
                }
            })
            .collect();
        if !dangling_cams.is_empty() {
            dangling_cams.sort_unstable();
            dangling_cams.dedup();
            return Err(Error::Integrity {
                message: "keyframes reference unknown cameras".into(),
                dangling: dangling_cams,
            });
        }

        let mut dangling = Vec::new();
        let mut resolved = Vec::with_capacity(observations.len());
        for o in &observations {
            let kf = keyframes.binary_search_by_key(&o.keyframe_id, |k| k.id);
            let lm = landmarks.binary_search_by_key(&o.landmark_id, |l| l.id);
            if kf.is_err() {
                dangling.push(o.keyframe_id);
            }
            if lm.is_err() {
                dangling.push(o.landmark_id);
            }
            if let (Ok(kf), Ok(lm)) = (kf, lm) {
                resolved.push((kf as u32, lm as u32));
            }
        }
        if !dangling.is_empty() {
            dangling.sort_unstable();
            dangling.dedup();
            return Err(Error::Integrity {
                message: "observations reference unknown keyframes or landmarks".into(),
                dangling,
            });
        }

        let mut order: Vec<usize> = (0..observations.len()).collect();
        order.sort_by_key(|&i| resolved[i]);
        for w in order.windows(2) {
            if resolved[w[0]] == resolved[w[1]] {
                let o = &observations[w[0]];
                return Err(Error::Validation(format!(
                    "duplicate observation of landmark {} in keyframe {}",
                    o.landmark_id, o.keyframe_id
                )));
            }
        }

        let mut kf_obs = vec![Vec::new(); keyframes.len()];
        let mut lm_obs = vec![Vec::new(); landmarks.len()];
        let mut sorted_obs = Vec::with_capacity(observations.len());
        for &i in &order {
            let (kf, lm) = resolved[i];
            let o = &observations[i];
            let cam = &cameras[keyframe_camera[kf as usize]].model;
            if !o.pixel.iter().all(|v| v.is_finite()) || !cam.contains(&o.pixel) {
                return Err(Error::Validation(format!(
                    "observation of landmark {} in keyframe {} has pixel ({}, {}) outside the {}x{} image",
                    o.landmark_id, o.keyframe_id, o.pixel.x, o.pixel.y, cam.width, cam.height
                )));
            }
            kf_obs[kf as usize].push(lm);
            lm_obs[lm as usize].push(kf);
            sorted_obs.push(o.clone());
        }
        for (l, obs) in landmarks.iter().zip(&lm_obs) {
            if !obs.is_empty() && l.match_count == 0 {
                return Err(Error::Validation(format!(
                    "landmark {} is observed but has match_count 0",
                    l.id
                )));
            }
        }
        for l in &mut lm_obs {
            l.sort_unstable();
        }

        Ok(Map {
            cameras,
            keyframes,
            landmarks,
            observations: sorted_obs,
            metadata,
            keyframe_camera,
            kf_obs,
            lm_obs,
        })
    }

    pub fn cameras(&self) -> &[Camera] {
        &self.cameras
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    /// Observations sorted by (keyframe index, landmark index).
    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn n_landmarks(&self) -> usize {
        self.landmarks.len()
    }

    pub fn n_keyframes(&self) -> usize {
        self.keyframes.len()
    }

    pub fn camera(&self, id: u64) -> Option<&CameraModel> {
        self.cameras
            .binary_search_by_key(&id, |c| c.id)
            .ok()
            .map(|i| &self.cameras[i].model)
    }

    /// Camera of the keyframe at index `kf`.
    pub fn keyframe_camera(&self, kf: usize) -> &CameraModel {
        &self.cameras[self.keyframe_camera[kf]].model
    }

    /// Landmark indices observed by keyframe index `kf`, ascending.
    pub fn keyframe_observations(&self, kf: usize) -> &[u32] {
        &self.kf_obs[kf]
    }

    /// Keyframe indices observing landmark index `lm`, ascending.
    pub fn landmark_observations(&self, lm: usize) -> &[u32] {
        &self.lm_obs[lm]
    }

    pub fn landmark_index(&self, id: u64) -> Option<usize> {
        self.landmarks.binary_search_by_key(&id, |l| l.id).ok()
    }

    pub fn keyframe_index(&self, id: u64) -> Option<usize> {
        self.keyframes.binary_search_by_key(&id, |k| k.id).ok()
    }

    pub fn with_metadata(mut self, metadata: BTreeMap<String, String>) -> Map {
        self.metadata = metadata;
        self
    }

    /// Map restricted to the selected landmarks (and their observations). Ids are kept.
    pub fn subset(&self, selected: &[bool]) -> Map {
        assert_eq!(selected.len(), self.n_landmarks());
        let landmarks = self
            .landmarks
            .iter()
            .zip(selected)
            .filter(|(_, &s)| s)
            .map(|(l, _)| l.clone())
            .collect();
        let observations = self
            .observations
            .iter()
            .filter(|o| selected[self.landmark_index(o.landmark_id).unwrap()])
            .cloned()
            .collect();
        Map::new(
            self.cameras.clone(),
            self.keyframes.clone(),
            landmarks,
            observations,
            self.metadata.clone(),
        )
        .expect("a subset of a valid map is valid")
    }

    /// Selection vector over `self` marking landmarks whose ids appear in `compact`.
    pub fn selection_of(&self, compact: &Map) -> Result<Vec<bool>> {
        let mut sel = vec![false; self.n_landmarks()];
        let mut missing = Vec::new();
        for l in compact.landmarks() {
            match self.landmark_index(l.id) {
                Some(i) => sel[i] = true,
                None => missing.push(l.id),
            }
        }
        if !missing.is_empty() {
            return Err(Error::Integrity {
                message: "compact map contains landmarks absent from the original".into(),
                dangling: missing,
            });
        }
        Ok(sel)
    }

    /// Binary keyframe x landmark matrix: entry (i, j) is set iff keyframe i observes landmark j.
    pub fn association_matrix(&self) -> BinaryMatrix {
        BinaryMatrix::from_rows(
            self.n_landmarks(),
            self.kf_obs.iter().map(|r| r.iter().copied()),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct CameraRecord {
    id: u64,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

#[derive(Serialize, Deserialize)]
struct KeyframeRecord {
    id: u64,
    camera_id: u64,
    q: [f64; 4],
    t: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct LandmarkRecord {
    id: u64,
    p: [f64; 3],
    match_count: u32,
}

#[derive(Serialize, Deserialize)]
struct ObservationRecord {
    kf: u64,
    lm: u64,
    u: f64,
    v: f64,
}

#[derive(Serialize)]
struct MapFileOut<'a> {
    cameras: Vec<CameraRecord>,
    keyframes: Vec<KeyframeRecord>,
    landmarks: Vec<LandmarkRecord>,
    observations: Vec<ObservationRecord>,
    metadata: &'a BTreeMap<String, String>,
}

fn records<T: DeserializeOwned>(
    doc: &mut serde_json::Map<String, serde_json::Value>,
    section: &'static str,
) -> Result<Vec<T>> {
    let value = doc.remove(section).ok_or_else(|| Error::Schema {
        section,
        index: 0,
        message: format!("missing top-level field `{section}`"),
    })?;
    let serde_json::Value::Array(items) = value else {
        return Err(Error::Schema {
            section,
            index: 0,
            message: "expected an array".into(),
        });
    };
    items
        .into_iter()
        .enumerate()
        .map(|(index, v)| {
            serde_json::from_value(v).map_err(|e| Error::Schema {
                section,
                index,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Parses a map from JSON text.
pub fn parse_map(text: &str) -> Result<Map> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    from_json_value(value)
}

fn from_json_value(value: serde_json::Value) -> Result<Map> {
    let serde_json::Value::Object(mut doc) = value else {
        return Err(Error::Parse("map document must be a JSON object".into()));
    };
    let cameras: Vec<CameraRecord> = records(&mut doc, "cameras")?;
    let keyframes: Vec<KeyframeRecord> = records(&mut doc, "keyframes")?;
    let landmarks: Vec<LandmarkRecord> = records(&mut doc, "landmarks")?;
    let observations: Vec<ObservationRecord> = records(&mut doc, "observations")?;
    let metadata: BTreeMap<String, String> = match doc.remove("metadata") {
        None | Some(serde_json::Value::Null) => BTreeMap::new(),
        Some(v) => serde_json::from_value(v).map_err(|e| Error::Schema {
            section: "metadata",
            index: 0,
            message: e.to_string(),
        })?,
    };

    let cameras = cameras
        .into_iter()
        .map(|c| Camera {
            id: c.id,
            model: CameraModel {
                fx: c.fx,
                fy: c.fy,
                cx: c.cx,
                cy: c.cy,
                width: c.width,
                height: c.height,
            },
        })
        .collect();
    let keyframes = keyframes
        .into_iter()
        .enumerate()
        .map(|(index, k)| {
            Pose::from_wxyz(k.q, k.t)
                .map(|pose| Keyframe {
                    id: k.id,
                    pose,
                    camera_id: k.camera_id,
                })
                .map_err(|e| Error::Schema {
                    section: "keyframes",
                    index,
                    message: e.to_string(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let landmarks = landmarks
        .into_iter()
        .map(|l| Landmark {
            id: l.id,
            position: Point3::from(l.p),
            match_count: l.match_count,
        })
        .collect();
    let observations = observations
        .into_iter()
        .map(|o| Observation {
            keyframe_id: o.kf,
            landmark_id: o.lm,
            pixel: Pixel::new(o.u, o.v),
        })
        .collect();
    Map::new(cameras, keyframes, landmarks, observations, metadata)
}

pub fn load_map(path: impl AsRef<Path>) -> Result<Map> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    from_json_value(value)
}

/// Serializes a map with records in index order. Floats use the shortest
/// representation that round-trips.
pub fn map_to_json(map: &Map) -> String {
    let mut buf = Vec::new();
    write_map_json(map, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

fn write_map_json<W: Write>(map: &Map, w: W) -> std::io::Result<()> {
    let out = MapFileOut {
        cameras: map
            .cameras
            .iter()
            .map(|c| CameraRecord {
                id: c.id,
                fx: c.model.fx,
                fy: c.model.fy,
                cx: c.model.cx,
                cy: c.model.cy,
                width: c.model.width,
                height: c.model.height,
            })
            .collect(),
        keyframes: map
            .keyframes
            .iter()
            .map(|k| KeyframeRecord {
                id: k.id,
                camera_id: k.camera_id,
                q: k.pose.wxyz(),
                t: k.pose.translation.into(),
            })
            .collect(),
        landmarks: map
            .landmarks
            .iter()
            .map(|l| LandmarkRecord {
                id: l.id,
                p: l.position.into(),
                match_count: l.match_count,
            })
            .collect(),
        observations: map
            .observations
            .iter()
            .map(|o| ObservationRecord {
                kf: o.keyframe_id,
                lm: o.landmark_id,
                u: o.pixel.x,
                v: o.pixel.y,
            })
            .collect(),
        metadata: &map.metadata,
    };
    serde_json::to_writer(w, &out).map_err(std::io::Error::from)
}

pub fn save_map(map: &Map, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_map_json(map, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Set of (keyframe id, landmark id) pairs, for structural comparisons.
pub fn observation_pairs(map: &Map) -> HashSet<(u64, u64)> {
    map.observations
        .iter()
        .map(|o| (o.keyframe_id, o.landmark_id))
        .collect()
}
