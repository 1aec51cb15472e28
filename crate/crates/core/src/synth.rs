//! Seeded synthetic scenes: a z-up room with landmarks on its walls, a camera
//! trajectory at eye height, observations, and query views.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use nalgebra::{UnitQuaternion, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{QueryLabel, QueryView};
use crate::geometry::{project_with_depth, CameraModel, Pixel, Point3, Pose};
use crate::map::{Camera, Keyframe, Landmark, Map, Observation};
use crate::problem::{BlockKind, ConstraintBlock, RowLabel, SlackKind, SparsificationProblem, Variant};
use crate::sparse::BinaryMatrix;

pub const MIN_DEPTH: f64 = 0.5;
pub const MAX_DEPTH: f64 = 20.0;
pub const CAMERA_HEIGHT: f64 = 1.5;
/// Every keyframe observes at least this many landmarks.
pub const MIN_OBSERVATIONS: usize = 20;
const RESAMPLE_TRIES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trajectory {
    /// Ellipse around the room center, looking along the direction of travel.
    Loop,
    /// Back and forth along the long axis of the room.
    Corridor,
    RandomWalk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Placement {
    /// Uniform over the wall surfaces.
    UniformBox,
    /// Gaussian blobs on the walls: `k` centers, spread `sigma` meters.
    Clustered { k: u32, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub n_landmarks: usize,
    pub n_keyframes: usize,
    pub trajectory: Trajectory,
    pub placement: Placement,
    pub camera: CameraModel,
    /// Standard deviation of pixel noise on stored observations.
    pub noise_px: f64,
    /// Upper end of the uniform noise added to match counts.
    pub match_noise: u32,
    /// Room extent along x, y, z in meters; the room spans `[0, size]`.
    pub room: [f64; 3],
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            n_landmarks: 5000,
            n_keyframes: 100,
            trajectory: Trajectory::Loop,
            placement: Placement::UniformBox,
            camera: CameraModel::default(),
            noise_px: 0.5,
            match_noise: 5,
            room: [16.0, 10.0, 3.0],
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_landmarks == 0 || self.n_keyframes == 0 {
            return Err(Error::Config("landmark and keyframe counts must be positive".into()));
        }
        if !(self.noise_px >= 0.0 && self.noise_px.is_finite()) {
            return Err(Error::Config("noise_px must be finite and non-negative".into()));
        }
        if !self.room.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::Config("room extent must be positive".into()));
        }
        if self.room[2] <= CAMERA_HEIGHT {
            return Err(Error::Config(format!(
                "room height must exceed the camera height of {CAMERA_HEIGHT} m"
            )));
        }
        if let Placement::Clustered { k, sigma } = self.placement {
            if k == 0 || !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::Config("clustered placement needs k > 0 and sigma >= 0".into()));
            }
        }
        self.camera
            .validate()
            .map_err(|e| Error::Config(format!("camera: {e}")))
    }
}

struct Room {
    size: Vector3<f64>,
}

impl Room {
    /// Wall `w` (0: y=0, 1: x=L, 2: y=W, 3: x=0) at horizontal offset `s` and height `h`.
    fn wall_point(&self, w: usize, s: f64, h: f64) -> Point3 {
        let [l, wd] = [self.size.x, self.size.y];
        match w {
            0 => Point3::new(s.clamp(0.0, l), 0.0, h),
            1 => Point3::new(l, s.clamp(0.0, wd), h),
            2 => Point3::new(s.clamp(0.0, l), wd, h),
            _ => Point3::new(0.0, s.clamp(0.0, wd), h),
        }
    }

    fn wall_length(&self, w: usize) -> f64 {
        if w % 2 == 0 {
            self.size.x
        } else {
            self.size.y
        }
    }

    fn random_wall_point(&self, rng: &mut ChaCha8Rng) -> (usize, f64, f64) {
        let perimeter = 2.0 * (self.size.x + self.size.y);
        let mut s = rng.gen::<f64>() * perimeter;
        let mut w = 0;
        while w < 3 && s >= self.wall_length(w) {
            s -= self.wall_length(w);
            w += 1;
        }
        (w, s, rng.gen::<f64>() * self.size.z)
    }

    /// Where the ray from `origin` along `dir` leaves the room.
    fn exit_point(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<(Point3, f64)> {
        let mut t_exit = f64::INFINITY;
        for a in 0..3 {
            if dir[a] > 1e-12 {
                t_exit = t_exit.min((self.size[a] - origin[a]) / dir[a]);
            } else if dir[a] < -1e-12 {
                t_exit = t_exit.min(-origin[a] / dir[a]);
            }
        }
        (t_exit.is_finite() && t_exit > 0.0).then(|| (origin + dir * t_exit, t_exit))
    }
}

fn trajectory(spec: &SceneSpec, room: &Room, rng: &mut ChaCha8Rng) -> Vec<Pose> {
    let m = spec.n_keyframes;
    let up = Vector3::z();
    let c = Point3::new(room.size.x / 2.0, room.size.y / 2.0, CAMERA_HEIGHT);
    let wobble = |rng: &mut ChaCha8Rng| (rng.gen::<f64>() - 0.5) * 20f64.to_radians();
    let pose = |center: Point3, heading: f64| {
        let fwd = Vector3::new(heading.cos(), heading.sin(), 0.0);
        Pose::look_at(&center, &(center + fwd), &up).expect("horizontal heading")
    };
    match spec.trajectory {
        Trajectory::Loop => {
            let (a, b) = (0.3 * room.size.x, 0.3 * room.size.y);
            (0..m)
                .map(|i| {
                    let t = TAU * i as f64 / m as f64;
                    let p = Point3::new(c.x + a * t.cos(), c.y + b * t.sin(), CAMERA_HEIGHT);
                    let heading = (b * t.cos()).atan2(-a * t.sin()) + wobble(rng);
                    pose(p, heading)
                })
                .collect()
        }
        Trajectory::Corridor => {
            let (x0, x1) = (0.15 * room.size.x, 0.85 * room.size.x);
            let half = m.div_ceil(2).max(1);
            (0..m)
                .map(|i| {
                    let back = i >= half;
                    let k = if back { i - half } else { i };
                    let f = if half > 1 { k as f64 / (half - 1) as f64 } else { 0.5 };
                    let (x, heading) = if back {
                        (x1 - f * (x1 - x0), PI)
                    } else {
                        (x0 + f * (x1 - x0), 0.0)
                    };
                    pose(Point3::new(x, c.y, CAMERA_HEIGHT), heading + wobble(rng))
                })
                .collect()
        }
        Trajectory::RandomWalk => {
            let lo = Vector3::new(0.15 * room.size.x, 0.15 * room.size.y, 0.0);
            let hi = Vector3::new(0.85 * room.size.x, 0.85 * room.size.y, 0.0);
            let step = 0.25 * (room.size.x + room.size.y) / m.max(4) as f64 * 4.0;
            let mut p = c;
            let mut heading = rng.gen::<f64>() * TAU;
            (0..m)
                .map(|_| {
                    let out = pose(p, heading);
                    heading += (rng.gen::<f64>() - 0.5) * 60f64.to_radians();
                    let mut next = p + Vector3::new(heading.cos(), heading.sin(), 0.0) * step;
                    if (0..2).any(|a| next[a] < lo[a] || next[a] > hi[a]) {
                        heading += PI;
                        next = next.sup(&lo).inf(&hi);
                        next.z = CAMERA_HEIGHT;
                    }
                    p = next;
                    out
                })
                .collect()
        }
    }
}

struct Sampler {
    placement: Placement,
    centers: Vec<(usize, f64, f64)>,
}

impl Sampler {
    fn new(placement: Placement, room: &Room, rng: &mut ChaCha8Rng) -> Self {
        let centers = match placement {
            Placement::UniformBox => vec![],
            Placement::Clustered { k, .. } => (0..k).map(|_| room.random_wall_point(rng)).collect(),
        };
        Sampler { placement, centers }
    }

    fn sample(&self, room: &Room, rng: &mut ChaCha8Rng) -> Point3 {
        match self.placement {
            Placement::UniformBox => {
                let (w, s, h) = room.random_wall_point(rng);
                room.wall_point(w, s, h)
            }
            Placement::Clustered { sigma, .. } => {
                let (w, s, h) = *self.centers.choose(rng).expect("k > 0");
                let n = Normal::new(0.0, sigma).expect("sigma >= 0");
                let s = s + n.sample(rng);
                let h = (h + n.sample(rng)).clamp(0.0, room.size.z);
                room.wall_point(w, s, h)
            }
        }
    }
}

fn sees(camera: &CameraModel, pose: &Pose, p: &Point3) -> Option<Pixel> {
    project_with_depth(camera, pose, p)
        .filter(|(_, z)| (MIN_DEPTH..=MAX_DEPTH).contains(z))
        .map(|(px, _)| px)
}

/// A point on a wall seen by the keyframe, through a random pixel.
fn point_in_view(camera: &CameraModel, pose: &Pose, room: &Room, rng: &mut ChaCha8Rng) -> Option<Point3> {
    for _ in 0..64 {
        let u = rng.gen::<f64>() * camera.width as f64;
        let v = rng.gen::<f64>() * camera.height as f64;
        let ray_cam = Vector3::new((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0);
        let ray = pose.rotation.inverse() * ray_cam;
        if let Some((p, _)) = room.exit_point(&pose.center(), &ray) {
            if sees(camera, pose, &p).is_some() {
                return Some(p);
            }
        }
    }
    None
}

/// Generates a map. Identical specs give identical maps.
pub fn generate_map(spec: &SceneSpec) -> Result<Map> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let room = Room {
        size: Vector3::from(spec.room),
    };
    let camera = spec.camera;
    let poses = trajectory(spec, &room, &mut rng);
    let sampler = Sampler::new(spec.placement, &room, &mut rng);

    let visible_count =
        |p: &Point3| poses.iter().filter(|pose| sees(&camera, pose, p).is_some()).count();

    // resample landmarks nobody sees from the placement distribution first
    let mut positions: Vec<Point3> = Vec::with_capacity(spec.n_landmarks);
    for _ in 0..spec.n_landmarks {
        let mut p = sampler.sample(&room, &mut rng);
        for _ in 0..RESAMPLE_TRIES {
            if visible_count(&p) > 0 {
                break;
            }
            p = sampler.sample(&room, &mut rng);
        }
        positions.push(p);
    }

    let mut per_kf: Vec<usize> = poses
        .iter()
        .map(|pose| positions.iter().filter(|p| sees(&camera, pose, p).is_some()).count())
        .collect();
    let mut unseen: Vec<usize> = (0..positions.len())
        .filter(|&j| visible_count(&positions[j]) == 0)
        .collect();
    unseen.reverse();

    // keyframes that see too little take over landmarks, then leftovers go anywhere in view
    let mut order: Vec<usize> = (0..poses.len()).collect();
    order.sort_by_key(|&i| per_kf[i]);
    for &i in &order {
        while per_kf[i] < MIN_OBSERVATIONS {
            let j = unseen.pop().or_else(|| {
                // no spare landmark: take one whose observers can afford to lose it
                (0..positions.len()).find(|&j| {
                    sees(&camera, &poses[i], &positions[j]).is_none()
                        && poses.iter().zip(&per_kf).all(|(pose, &c)| {
                            c > MIN_OBSERVATIONS || sees(&camera, pose, &positions[j]).is_none()
                        })
                })
            });
            let Some(j) = j else {
                return Err(Error::Config(format!(
                    "keyframe {i} cannot observe {MIN_OBSERVATIONS} landmarks; use more landmarks"
                )));
            };
            let p = point_in_view(&camera, &poses[i], &room, &mut rng).ok_or_else(|| {
                Error::Config(format!("keyframe {i} does not see any wall within the depth window"))
            })?;
            for (k, pose) in poses.iter().enumerate() {
                if sees(&camera, pose, &positions[j]).is_some() {
                    per_kf[k] -= 1;
                }
                if sees(&camera, pose, &p).is_some() {
                    per_kf[k] += 1;
                }
            }
            positions[j] = p;
        }
    }
    for j in unseen {
        let i = rng.gen_range(0..poses.len());
        if let Some(p) = point_in_view(&camera, &poses[i], &room, &mut rng) {
            positions[j] = p;
        }
    }

    let noise = Normal::new(0.0, spec.noise_px).expect("noise_px >= 0");
    let max_u = camera.width as f64 - 1e-6;
    let max_v = camera.height as f64 - 1e-6;
    let mut observations = Vec::new();
    let mut counts = vec![0u32; positions.len()];
    for (i, pose) in poses.iter().enumerate() {
        for (j, p) in positions.iter().enumerate() {
            if let Some(px) = sees(&camera, pose, p) {
                let px = Pixel::new(
                    (px.x + noise.sample(&mut rng)).clamp(0.0, max_u),
                    (px.y + noise.sample(&mut rng)).clamp(0.0, max_v),
                );
                observations.push(Observation {
                    keyframe_id: i as u64,
                    landmark_id: j as u64,
                    pixel: px,
                });
                counts[j] += 1;
            }
        }
    }

    let landmarks = positions
        .iter()
        .zip(&counts)
        .enumerate()
        .map(|(j, (p, &c))| Landmark {
            id: j as u64,
            position: *p,
            match_count: if c == 0 { 0 } else { c + rng.gen_range(0..=spec.match_noise) },
        })
        .collect();
    let keyframes = poses
        .into_iter()
        .enumerate()
        .map(|(i, pose)| Keyframe {
            id: i as u64,
            pose,
            camera_id: 0,
        })
        .collect();
    let mut metadata = BTreeMap::new();
    metadata.insert(
        "scene".to_string(),
        serde_json::to_string(spec).expect("spec serializes"),
    );
    Map::new(vec![Camera { id: 0, model: camera }], keyframes, landmarks, observations, metadata)
}

fn random_rotation(rng: &mut ChaCha8Rng, max_angle: f64) -> UnitQuaternion<f64> {
    let axis = loop {
        let v = Vector3::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        if let Some(a) = v.try_normalize(1e-6) {
            if v.norm() <= 0.5 {
                break a;
            }
        }
    };
    UnitQuaternion::from_scaled_axis(axis * rng.gen::<f64>() * max_angle)
}

fn random_in_ball(rng: &mut ChaCha8Rng, radius: f64) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0);
        if v.norm_squared() <= 1.0 {
            return v * radius;
        }
    }
}

/// Applies a world-frame rotation about the optical center and a translation of it.
fn moved(pose: &Pose, rot: UnitQuaternion<f64>, shift: Vector3<f64>) -> Pose {
    let center = pose.center() + shift;
    let rotation = pose.rotation * rot.inverse();
    Pose {
        rotation,
        translation: -(rotation * center),
    }
}

/// Padding around the keyframe centers for free-space queries, meters.
pub const FREE_SPACE_PAD: f64 = 1.0;

/// Query views of one stratum. Deterministic per seed.
pub fn generate_queries(map: &Map, label: QueryLabel, count: usize, seed: u64) -> Vec<QueryView> {
    if count == 0 || map.n_keyframes() == 0 {
        return vec![];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (label as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let kfs = map.keyframes();
    let pick = |rng: &mut ChaCha8Rng| &kfs[rng.gen_range(0..kfs.len())];
    match label {
        QueryLabel::OnTrajectory => (0..count)
            .map(|_| {
                let kf = pick(&mut rng);
                let rot = random_rotation(&mut rng, 5f64.to_radians());
                let shift = random_in_ball(&mut rng, 0.1);
                QueryView::new(moved(&kf.pose, rot, shift), kf.camera_id, label)
            })
            .collect(),
        QueryLabel::Offset => (0..count)
            .map(|_| {
                let kf = pick(&mut rng);
                let (right, _, _) = kf.pose.axes();
                let lateral = Vector3::new(right.x, right.y, 0.0)
                    .try_normalize(1e-9)
                    .unwrap_or_else(Vector3::x);
                let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                let shift = lateral * side * rng.gen_range(0.5..=2.0);
                let yaw = UnitQuaternion::from_axis_angle(
                    &Vector3::z_axis(),
                    rng.gen_range(-30.0..=30.0f64).to_radians(),
                );
                QueryView::new(moved(&kf.pose, yaw, shift), kf.camera_id, label)
            })
            .collect(),
        QueryLabel::FreeSpace => {
            let mut lo = Vector3::repeat(f64::INFINITY);
            let mut hi = Vector3::repeat(f64::NEG_INFINITY);
            for k in kfs {
                let c = k.pose.center();
                lo = lo.inf(&c);
                hi = hi.sup(&c);
            }
            lo -= Vector3::repeat(FREE_SPACE_PAD);
            hi += Vector3::repeat(FREE_SPACE_PAD);
            let centroid = if map.n_landmarks() == 0 {
                (lo + hi) / 2.0
            } else {
                map.landmarks().iter().map(|l| l.position).sum::<Vector3<f64>>() / map.n_landmarks() as f64
            };
            (0..count)
                .map(|_| {
                    let c = Point3::new(
                        rng.gen_range(lo.x..=hi.x),
                        rng.gen_range(lo.y..=hi.y),
                        rng.gen_range(lo.z..=hi.z),
                    );
                    let mut target = centroid;
                    target.z = c.z;
                    let pose = Pose::look_at(&c, &target, &Vector3::z())
                        .or_else(|| Pose::look_at(&c, &(c + Vector3::x()), &Vector3::z()))
                        .expect("horizontal view direction");
                    QueryView::new(pose, kfs[0].camera_id, label)
                })
                .collect()
        }
    }
}

/// Small random program with the block structure of `variant`, for solver tests.
/// `m` keyframe rows over `n` landmarks.
pub fn random_instance(seed: u64, n: usize, m: usize, variant: Variant) -> SparsificationProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let density = rng.gen_range(0.3..0.7);
    let rows: Vec<Vec<u32>> = (0..m)
        .map(|_| (0..n as u32).filter(|_| rng.gen_bool(density)).collect())
        .collect();
    let match_count: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=20)).collect();
    let min_mc = *match_count.iter().min().unwrap_or(&1);
    let weight = match_count
        .iter()
        .map(|&c| (1.0 + min_mc as f64) / (1.0 + c as f64))
        .collect();
    let k1 = rng.gen_range(1..=4u32);
    let lambda1 = rng.gen_range(0.2..2.0);
    let keyframe_labels = (0..m).map(|i| RowLabel::Keyframe(i as u64)).collect();

    // split every keyframe row into up to 4 cells
    let cells = |rng: &mut ChaCha8Rng| {
        let mut matrix = BinaryMatrix::empty(n);
        let mut labels = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            let mut parts: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
            for &j in r {
                parts.entry(rng.gen_range(0..4)).or_default().push(j);
            }
            for (c, part) in parts {
                matrix.push_row(part);
                labels.push(RowLabel::Cell {
                    keyframe_id: i as u64,
                    col: c % 2,
                    row: c / 2,
                });
            }
        }
        (matrix, labels)
    };

    let mut blocks = Vec::new();
    if variant == Variant::Di {
        let (matrix, labels) = cells(&mut rng);
        let rhs = vec![k1.div_ceil(4).max(1); matrix.n_rows()];
        blocks.push(ConstraintBlock {
            kind: BlockKind::DividedImage,
            matrix,
            rhs,
            penalty: lambda1,
            slack: SlackKind::Integer,
            labels,
        });
    } else {
        blocks.push(ConstraintBlock {
            kind: BlockKind::Keyframe,
            matrix: BinaryMatrix::from_rows(n, rows.clone()),
            rhs: vec![k1; m],
            penalty: lambda1,
            slack: SlackKind::Integer,
            labels: keyframe_labels,
        });
    }
    if matches!(variant, Variant::Ours2D | Variant::Ours3D) {
        let (matrix, labels) = cells(&mut rng);
        let rhs = vec![1; matrix.n_rows()];
        blocks.push(ConstraintBlock {
            kind: BlockKind::ImageCell,
            matrix,
            rhs,
            penalty: rng.gen_range(0.05..0.6),
            slack: SlackKind::Binary,
            labels,
        });
    }
    if variant == Variant::Ours3D {
        let s = rng.gen_range(1..=m.max(1));
        let matrix = BinaryMatrix::from_rows(
            n,
            (0..s).map(|_| (0..n as u32).filter(|_| rng.gen_bool(0.4)).collect::<Vec<_>>()),
        );
        let k2 = rng.gen_range(1..=3u32);
        blocks.push(ConstraintBlock {
            kind: BlockKind::SpaceCell,
            matrix,
            rhs: vec![k2; s],
            penalty: rng.gen_range(0.1..1.0),
            slack: SlackKind::Integer,
            labels: (0..s as u32).map(|i| RowLabel::Voxel([i, 0, 0])).collect(),
        });
    }
    SparsificationProblem {
        variant,
        landmark_ids: (0..n as u64).collect(),
        weight,
        blocks,
    }
}
