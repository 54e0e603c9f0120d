//! Pinhole camera model, rigid transforms, ray-plane intersection and
//! extrinsic estimation from plane correspondences.
//!
//! Conventions (fixed for the whole pipeline):
//! - world units are meters; pixel coordinates are continuous with (0,0)
//!   at the top-left pixel center;
//! - angles are radians internally, counter-clockwise positive around +z
//!   viewed from the camera side; degrees only at CLI/report boundaries;
//! - extrinsics map world points into the camera frame (`p_cam = R p + t`),
//!   camera +z is the optical axis.

use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};
use num_traits::Float;

use crate::error::{Error, Result};
use crate::scalar::GeomScalar;

/// Rigid transform: rotation then translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform<S: GeomScalar> {
    pub rotation: Matrix3<S>,
    pub translation: Vector3<S>,
}

impl<S: GeomScalar> RigidTransform<S> {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<S>, translation: Vector3<S>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn apply(&self, p: &Vector3<S>) -> Vector3<S> {
        self.rotation * p + self.translation
    }

    /// `self` after `other`: `(self ∘ other)(p) = self(other(p))`.
    pub fn compose(&self, other: &RigidTransform<S>) -> RigidTransform<S> {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform<S> {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Max-norm of `R^T R - I`; zero for an exact rotation.
    pub fn orthonormality_error(&self) -> S {
        let e = self.rotation.transpose() * self.rotation - Matrix3::identity();
        e.iter().fold(S::zero(), |m, v| Float::max(m, Float::abs(*v)))
    }

    pub fn is_orthonormal(&self, tol: S) -> bool {
        self.orthonormality_error() < tol && self.rotation.determinant() > S::zero()
    }

    pub fn rotation_z(angle: S) -> Matrix3<S> {
        let (s, c) = Float::sin_cos(angle);
        Matrix3::new(
            c, -s, S::zero(),
            s, c, S::zero(),
            S::zero(), S::zero(), S::one(),
        )
    }

    pub fn rotation_y(angle: S) -> Matrix3<S> {
        let (s, c) = Float::sin_cos(angle);
        Matrix3::new(
            c, S::zero(), s,
            S::zero(), S::one(), S::zero(),
            -s, S::zero(), c,
        )
    }

    pub fn rotation_x(angle: S) -> Matrix3<S> {
        let (s, c) = Float::sin_cos(angle);
        Matrix3::new(
            S::one(), S::zero(), S::zero(),
            S::zero(), c, -s,
            S::zero(), s, c,
        )
    }

    /// Rotation from intrinsic z-y-x Euler angles: `Rz(a) * Ry(b) * Rx(c)`.
    pub fn from_euler_zyx(a: S, b: S, c: S, translation: Vector3<S>) -> Self {
        Self {
            rotation: Self::rotation_z(a) * Self::rotation_y(b) * Self::rotation_x(c),
            translation,
        }
    }
}

/// Horizontal support plane `z = z0` in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportPlane<S: GeomScalar> {
    pub z: S,
}

impl<S: GeomScalar> SupportPlane<S> {
    pub fn new(z: S) -> Self {
        Self { z }
    }
}

/// Pinhole camera: intrinsics plus world-to-camera extrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel<S: GeomScalar> {
    pub fx: S,
    pub fy: S,
    pub cx: S,
    pub cy: S,
    pub width: usize,
    pub height: usize,
    /// World -> camera.
    pub extrinsics: RigidTransform<S>,
}

impl<S: GeomScalar> CameraModel<S> {
    pub fn new(
        fx: S,
        fy: S,
        cx: S,
        cy: S,
        width: usize,
        height: usize,
        extrinsics: RigidTransform<S>,
    ) -> Result<Self> {
        if fx <= S::zero() || fy <= S::zero() {
            return Err(Error::InvalidConfig(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        let w = S::from_usize(width).unwrap();
        let h = S::from_usize(height).unwrap();
        if cx < S::zero() || cx >= w || cy < S::zero() || cy >= h {
            return Err(Error::InvalidConfig(format!(
                "principal point ({cx},{cy}) outside {width}x{height} image"
            )));
        }
        if !extrinsics.is_orthonormal(S::from_f64_lossy(1e-9)) {
            return Err(Error::InvalidConfig(
                "extrinsic rotation is not orthonormal".into(),
            ));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            extrinsics,
        })
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<S> {
        let inv = self.extrinsics.inverse();
        inv.translation
    }

    /// World point -> continuous pixel coordinates. The result may lie
    /// outside the image rectangle.
    pub fn project(&self, p: &Vector3<S>) -> Result<Vector2<S>> {
        let pc = self.extrinsics.apply(p);
        let z = pc.z;
        if z <= S::from_f64_lossy(1e-12) {
            return Err(Error::BehindCamera {
                depth: z.to_f64_lossy(),
            });
        }
        Ok(Vector2::new(
            self.fx * pc.x / z + self.cx,
            self.fy * pc.y / z + self.cy,
        ))
    }

    /// Inverse perspective projection: the unique world point on the
    /// support plane whose projection equals `px`.
    pub fn pixel_to_plane(&self, px: &Vector2<S>, plane: &SupportPlane<S>) -> Result<Vector3<S>> {
        // Ray in camera frame through the pixel.
        let dir_cam = Vector3::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy, S::one());
        let inv = self.extrinsics.inverse();
        let origin = inv.translation;
        let dir = inv.rotation * dir_cam;
        let dz = dir.z;
        if Float::abs(dz) < S::from_f64_lossy(1e-12) {
            return Err(Error::RayParallelToPlane);
        }
        let s = (plane.z - origin.z) / dz;
        if s <= S::zero() {
            return Err(Error::IntersectionBehindCamera);
        }
        Ok(origin + dir * s)
    }
}

/// Nearest rotation matrix (Frobenius norm) via SVD, determinant +1.
pub fn orthonormalize<S: GeomScalar>(m: &Matrix3<S>) -> Matrix3<S> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd vt");
    let mut r = u * vt;
    if r.determinant() < S::zero() {
        // Flip the axis of least significance.
        let d = Matrix3::from_diagonal(&Vector3::new(S::one(), S::one(), -S::one()));
        r = u * d * vt;
    }
    r
}

/// One world-plane point paired with its observed pixel.
#[derive(Debug, Clone, Copy)]
pub struct PlaneCorrespondence<S: GeomScalar> {
    /// World point; must lie on the support plane (`z` is the plane height).
    pub world: Vector3<S>,
    pub pixel: Vector2<S>,
}

/// Estimate world->camera extrinsics from >= 4 plane/pixel correspondences
/// with known intrinsics: plane-to-image DLT homography, then decomposition
/// and orthonormalization of the recovered rotation.
pub fn estimate_extrinsics<S: GeomScalar>(
    fx: S,
    fy: S,
    cx: S,
    cy: S,
    plane_z: S,
    correspondences: &[PlaneCorrespondence<S>],
) -> Result<RigidTransform<S>> {
    let n = correspondences.len();
    if n < 4 {
        return Err(Error::TooFewCorrespondences { needed: 4, got: n });
    }

    // Hartley normalization of both point sets.
    let (world_t, world_pts) = normalize_2d(correspondences.iter().map(|c| (c.world.x, c.world.y)));
    let (pix_t, pix_pts) = normalize_2d(correspondences.iter().map(|c| (c.pixel.x, c.pixel.y)));

    // DLT for the 3x3 homography H mapping normalized plane coords to
    // normalized pixel coords: rows of A h = 0.
    let mut a = DMatrix::<S>::zeros(2 * n, 9);
    for (i, ((wx, wy), (px, py))) in world_pts.iter().zip(pix_pts.iter()).enumerate() {
        let (wx, wy, px, py) = (*wx, *wy, *px, *py);
        let r0 = 2 * i;
        a[(r0, 0)] = wx;
        a[(r0, 1)] = wy;
        a[(r0, 2)] = S::one();
        a[(r0, 6)] = -px * wx;
        a[(r0, 7)] = -px * wy;
        a[(r0, 8)] = -px;
        let r1 = r0 + 1;
        a[(r1, 3)] = wx;
        a[(r1, 4)] = wy;
        a[(r1, 5)] = S::one();
        a[(r1, 6)] = -py * wx;
        a[(r1, 7)] = -py * wy;
        a[(r1, 8)] = -py;
    }

    let svd = a.svd(false, true);
    let vt = svd.v_t.as_ref().expect("svd vt");
    let singular = &svd.singular_values;
    // Rank check: with >= 4 generic correspondences exactly one null
    // direction remains. A vanishing 8th singular value means the target
    // configuration is degenerate (e.g. collinear points).
    let s_max = singular[0];
    if singular[7] <= s_max * S::from_f64_lossy(1e-10) {
        return Err(Error::DegenerateCalibration(
            "correspondences are rank-deficient (collinear or coincident points)".into(),
        ));
    }
    let h_row = vt.row(8);
    let h_norm = Matrix3::new(
        h_row[0], h_row[1], h_row[2],
        h_row[3], h_row[4], h_row[5],
        h_row[6], h_row[7], h_row[8],
    );

    // Undo normalization: H = T_pix^-1 * H_norm * T_world.
    let h = pix_t.try_inverse().expect("similarity invertible") * h_norm * world_t;

    // Decompose: K^-1 H = [c1 c2 | t + z0*c3] up to scale.
    let k_inv = Matrix3::new(
        S::one() / fx, S::zero(), -cx / fx,
        S::zero(), S::one() / fy, -cy / fy,
        S::zero(), S::zero(), S::one(),
    );
    let m = k_inv * h;
    let m1 = m.column(0).into_owned();
    let m2 = m.column(1).into_owned();
    let m3 = m.column(2).into_owned();
    let two = S::from_f64_lossy(2.0);
    let mut lambda = two / (m1.norm() + m2.norm());
    if !Float::is_finite(lambda) || lambda == S::zero() {
        return Err(Error::DegenerateCalibration("homography scale collapsed".into()));
    }
    // The plane anchor point (0,0,z0) must sit in front of the camera.
    if (m3 * lambda).z < S::zero() {
        lambda = -lambda;
    }
    let c1 = m1 * lambda;
    let c2 = m2 * lambda;
    let c3 = c1.cross(&c2);
    let rot_raw = Matrix3::from_columns(&[c1, c2, c3]);
    let rotation = orthonormalize(&rot_raw);
    let translation = m3 * lambda - rotation.column(2) * plane_z;

    Ok(RigidTransform::new(rotation, translation))
}

/// Similarity transform moving points to centroid 0, mean distance sqrt(2),
/// plus the transformed points.
#[allow(clippy::type_complexity)]
fn normalize_2d<S: GeomScalar>(
    points: impl Iterator<Item = (S, S)> + Clone,
) -> (Matrix3<S>, Vec<(S, S)>) {
    let pts: Vec<(S, S)> = points.collect();
    let n = S::from_usize(pts.len()).unwrap();
    let (mut mx, mut my) = (S::zero(), S::zero());
    for (x, y) in &pts {
        mx = mx + *x;
        my = my + *y;
    }
    mx = mx / n;
    my = my / n;
    let mut mean_dist = S::zero();
    for (x, y) in &pts {
        mean_dist = mean_dist + Float::sqrt(Float::powi(*x - mx, 2) + Float::powi(*y - my, 2));
    }
    mean_dist = mean_dist / n;
    let scale = if mean_dist > S::zero() {
        S::from_f64_lossy(std::f64::consts::SQRT_2) / mean_dist
    } else {
        S::one()
    };
    let t = Matrix3::new(
        scale, S::zero(), -scale * mx,
        S::zero(), scale, -scale * my,
        S::zero(), S::zero(), S::one(),
    );
    let transformed = pts
        .iter()
        .map(|(x, y)| (scale * (*x - mx), scale * (*y - my)))
        .collect();
    (t, transformed)
}

/// Camera pose looking down at the plane from `(x, y, height)`, with small
/// tilts about the world x/y axes. Zero tilt gives a nadir view in which
/// world +x maps to image +u and world +y maps to image -v.
pub fn look_down_extrinsics<S: GeomScalar>(x: S, y: S, height: S, tilt_x: S, tilt_y: S) -> RigidTransform<S> {
    // Camera axes in world coordinates: x_cam = +x, y_cam = -y, z_cam = -z,
    // then tilted. R_cw columns are the camera axes; extrinsics = inverse.
    let base = RigidTransform::rotation_x(S::from_f64_lossy(std::f64::consts::PI));
    let tilt = RigidTransform::rotation_x(tilt_x) * RigidTransform::rotation_y(tilt_y);
    let r_cw = tilt * base;
    let pose = RigidTransform::new(r_cw, Vector3::new(x, y, height));
    pose.inverse()
}
