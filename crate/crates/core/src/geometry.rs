//! Pinhole camera and rigid world-to-camera poses.

use nalgebra::{Quaternion, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = Vector3<f64>;
pub type Pixel = Vector2<f64>;

/// Pinhole intrinsics plus image size. No distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Validation("camera parameters must be finite".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Validation("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation("image size must be positive".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(Error::Validation(
                "principal point must lie inside the image".into(),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn contains(&self, px: &Pixel) -> bool {
        px.x >= 0.0 && px.x < self.width as f64 && px.y >= 0.0 && px.y < self.height as f64
    }
}

impl Default for CameraModel {
    /// VGA camera with a roughly 77 degree horizontal field of view.
    fn default() -> Self {
        CameraModel {
            fx: 400.0,
            fy: 400.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        }
    }
}

/// Rigid transform taking world coordinates into the camera frame
/// (x right, y down, z along the optical axis).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose from raw `[w, x, y, z]` quaternion components, which must
    /// already have unit norm (within 1e-9).
    pub fn from_wxyz(q: [f64; 4], t: [f64; 3]) -> Result<Self> {
        if !q.iter().chain(t.iter()).all(|v| v.is_finite()) {
            return Err(Error::Validation("pose components must be finite".into()));
        }
        let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = raw.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "quaternion norm {norm} differs from 1 by more than 1e-9"
            )));
        }
        Ok(Pose {
            rotation: UnitQuaternion::new_unchecked(raw),
            translation: Vector3::from(t),
        })
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// Camera whose optical center sits at `center`, looking toward `target`,
    /// with image "up" as close to `up` as possible.
    pub fn look_at(center: &Point3, target: &Point3, up: &Vector3<f64>) -> Option<Self> {
        let forward = (target - center).try_normalize(1e-12)?;
        let right = forward.cross(up).try_normalize(1e-12)?;
        let down = forward.cross(&right);
        Some(Pose::from_axes_and_center(&right, &down, &forward, center))
    }

    /// Pose from camera axes expressed in world coordinates.
    pub fn from_axes_and_center(
        right: &Vector3<f64>,
        down: &Vector3<f64>,
        forward: &Vector3<f64>,
        center: &Point3,
    ) -> Self {
        let world_from_cam =
            nalgebra::Matrix3::from_columns(&[*right, *down, *forward]);
        let rot = nalgebra::Rotation3::from_matrix(&world_from_cam);
        let rotation = UnitQuaternion::from_rotation_matrix(&rot).inverse();
        let translation = -(rotation * center);
        Pose {
            rotation,
            translation,
        }
    }

    #[inline]
    pub fn transform(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    /// Optical center in world coordinates.
    pub fn center(&self) -> Point3 {
        -(self.rotation.inverse() * self.translation)
    }

    /// Camera axes (right, down, forward) in world coordinates.
    pub fn axes(&self) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let inv = self.rotation.inverse();
        (
            inv * Vector3::x(),
            inv * Vector3::y(),
            inv * Vector3::z(),
        )
    }
}

/// Projects a world point. `None` when the point is behind the camera or
/// lands outside `[0, width) x [0, height)`.
pub fn project(camera: &CameraModel, pose: &Pose, point: &Point3) -> Option<Pixel> {
    let pc = pose.transform(point);
    if !(pc.z > 0.0) {
        return None;
    }
    let px = Pixel::new(
        camera.fx * pc.x / pc.z + camera.cx,
        camera.fy * pc.y / pc.z + camera.cy,
    );
    camera.contains(&px).then_some(px)
}

/// Like [`project`] but also returns the depth along the optical axis.
pub fn project_with_depth(camera: &CameraModel, pose: &Pose, point: &Point3) -> Option<(Pixel, f64)> {
    let pc = pose.transform(point);
    if !(pc.z > 0.0) {
        return None;
    }
    let px = Pixel::new(
        camera.fx * pc.x / pc.z + camera.cx,
        camera.fy * pc.y / pc.z + camera.cy,
    );
    camera.contains(&px).then_some((px, pc.z))
}

/// Angle between two nonzero vectors, computed with atan2 for accuracy near 0 and pi.
pub fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cam() -> CameraModel {
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
    fn principal_axis_projects_to_principal_point() {
        let px = project(&cam(), &Pose::identity(), &Point3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!((px.x, px.y), (320.0, 240.0));
    }

    #[test]
    fn lateral_offset() {
        let px = project(&cam(), &Pose::identity(), &Point3::new(1.0, 0.0, 2.0)).unwrap();
        assert_eq!((px.x, px.y), (370.0, 240.0));
    }

    #[test]
    fn behind_camera_is_absent() {
        assert!(project(&cam(), &Pose::identity(), &Point3::new(0.0, 0.0, -1.0)).is_none());
        assert!(project(&cam(), &Pose::identity(), &Point3::new(0.0, 0.0, 0.0)).is_none());
    }

    #[test]
    fn out_of_image_is_absent() {
        // u = 100 * 10 / 1 + 320 = 1320
        assert!(project(&cam(), &Pose::identity(), &Point3::new(10.0, 0.0, 1.0)).is_none());
    }

    #[test]
    fn look_at_centers_target() {
        let c = Point3::new(1.0, 2.0, 1.5);
        let target = Point3::new(5.0, -1.0, 1.5);
        let pose = Pose::look_at(&c, &target, &Vector3::z()).unwrap();
        assert!((pose.center() - c).norm() < 1e-12);
        let px = project(&cam(), &pose, &target).unwrap();
        assert!((px.x - 320.0).abs() < 1e-9 && (px.y - 240.0).abs() < 1e-9);
        // world up maps to image up (negative v)
        let above = project(&cam(), &pose, &(target + Vector3::z() * 0.5)).unwrap();
        assert!(above.y < 240.0);
    }

    #[test]
    fn rejects_non_unit_quaternion() {
        assert!(Pose::from_wxyz([1.0, 0.0, 0.0, 1e-4], [0.0; 3]).is_err());
        assert!(Pose::from_wxyz([1.0, 0.0, 0.0, 1e-6], [0.0; 3]).is_ok());
        assert!(Pose::from_wxyz([1.0, 0.0, 0.0, 0.0], [0.0; 3]).is_ok());
    }

    #[test]
    fn validates_camera() {
        assert!(cam().validate().is_ok());
        let mut c = cam();
        c.cx = 640.0;
        assert!(c.validate().is_err());
        c = cam();
        c.fy = 0.0;
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn projection_is_scale_consistent(
            x in -3.0f64..3.0, y in -3.0f64..3.0, z in 0.1f64..20.0, s in 0.01f64..100.0,
            yaw in -3.0f64..3.0, tx in -2.0f64..2.0,
        ) {
            // scaling about the optical center leaves the pixel unchanged
            let pose = Pose {
                rotation: UnitQuaternion::from_euler_angles(0.0, yaw, 0.0),
                translation: Vector3::new(tx, 0.0, 0.0),
            };
            let c = pose.center();
            let p = c + pose.rotation.inverse() * Vector3::new(x, y, z);
            let q = c + (p - c) * s;
            let a = project(&cam(), &pose, &p);
            let b = project(&cam(), &pose, &q);
            match (a, b) {
                (Some(a), Some(b)) => prop_assert!((a - b).norm() < 1e-6),
                (None, None) => {}
                // points right at the image border may flip due to rounding
                (Some(a), None) | (None, Some(a)) => prop_assert!(
                    a.x < 1e-6 || a.y < 1e-6 || a.x > 640.0 - 1e-6 || a.y > 480.0 - 1e-6
                ),
            }
        }
    }
}
