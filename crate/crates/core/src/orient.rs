//! Orientation representations and conversions.
//!
//! Quaternions are stored scalar-first, `(q1, q2, q3, q4) = (cos(w/2), sin(w/2) v)`.
//! Euler angles follow the Bunge ZXZ convention: the rotation is
//! `Rz(alpha) * Rx(beta) * Rz(gamma)`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::{Mul, Neg};

use crate::error::{Error, Result};

/// Below this `|q1|` a quaternion has no finite Rodrigues vector.
pub const NEAR_PI_Q1: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitQuaternion([f64; 4]);

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion([1.0, 0.0, 0.0, 0.0]);

    /// Normalizes the given components onto S³.
    pub fn new(q1: f64, q2: f64, q3: f64, q4: f64) -> Result<Self> {
        Self::from_array([q1, q2, q3, q4])
    }

    pub fn from_array(q: [f64; 4]) -> Result<Self> {
        let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !norm.is_finite() || norm < 1e-300 {
            return Err(Error::InvalidQuaternion(q));
        }
        Ok(Self::normalized(q, norm))
    }

    /// Builds a quaternion from components already known to be (close to) unit
    /// length. The result is renormalized.
    pub(crate) fn from_unit_array(q: [f64; 4]) -> Self {
        let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        debug_assert!(norm > 0.5 && norm < 1.5, "not near unit length: {q:?}");
        Self::normalized(q, norm)
    }

    // Inputs already unit to rounding are kept bit-for-bit.
    fn normalized(q: [f64; 4], norm: f64) -> Self {
        if (norm - 1.0).abs() <= 2.0 * f64::EPSILON {
            UnitQuaternion(q)
        } else {
            Self::scale(q, 1.0 / norm)
        }
    }

    fn scale(q: [f64; 4], s: f64) -> Self {
        UnitQuaternion([q[0] * s, q[1] * s, q[2] * s, q[3] * s])
    }

    /// Rotation by `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Result<Self> {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if !(n > 0.0) || !n.is_finite() || !angle.is_finite() {
            return Err(Error::InvalidQuaternion([angle, axis[0], axis[1], axis[2]]));
        }
        let (s, c) = (angle / 2.0).sin_cos();
        Ok(Self::from_unit_array([
            c,
            s * axis[0] / n,
            s * axis[1] / n,
            s * axis[2] / n,
        ]))
    }

    #[inline]
    pub fn components(&self) -> [f64; 4] {
        self.0
    }

    #[inline]
    pub fn q1(&self) -> f64 {
        self.0[0]
    }

    #[inline]
    pub fn q2(&self) -> f64 {
        self.0[1]
    }

    #[inline]
    pub fn q3(&self) -> f64 {
        self.0[2]
    }

    #[inline]
    pub fn q4(&self) -> f64 {
        self.0[3]
    }

    /// Euclidean inner product in R⁴.
    #[inline]
    pub fn dot(&self, other: &UnitQuaternion) -> f64 {
        let (a, b) = (&self.0, &other.0);
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
    }

    /// Inverse rotation (the conjugate for unit quaternions).
    pub fn inverse(&self) -> UnitQuaternion {
        let q = self.0;
        UnitQuaternion([q[0], -q[1], -q[2], -q[3]])
    }

    /// Hamilton product `self * other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &UnitQuaternion) -> UnitQuaternion {
        UnitQuaternion::from_unit_array(hamilton(&self.0, &other.0))
    }

    /// Sign representative with `q1 > 0`; when `q1 == 0` the first nonzero
    /// vector component is made positive.
    pub fn canonical(&self) -> UnitQuaternion {
        let q = self.0;
        let first = q.iter().copied().find(|c| *c != 0.0).unwrap_or(1.0);
        if first < 0.0 {
            -*self
        } else {
            *self
        }
    }

    /// Rotation angle `w` in `[0, pi]` and unit axis. The identity reports the
    /// x axis.
    pub fn axis_angle(&self) -> (f64, [f64; 3]) {
        let q = self.canonical().0;
        let s = (q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        let angle = 2.0 * s.atan2(q[0]);
        if s == 0.0 {
            (0.0, [1.0, 0.0, 0.0])
        } else {
            (angle, [q[1] / s, q[2] / s, q[3] / s])
        }
    }

    pub fn to_euler(&self) -> EulerAngles {
        let [q1, q2, q3, q4] = self.0;
        // q1 = cos(b/2) cos((a+g)/2), q4 = cos(b/2) sin((a+g)/2)
        // q2 = sin(b/2) cos((a-g)/2), q3 = sin(b/2) sin((a-g)/2)
        let cos_half = (q1 * q1 + q4 * q4).sqrt();
        let sin_half = (q2 * q2 + q3 * q3).sqrt();
        let beta = 2.0 * sin_half.atan2(cos_half);
        const GIMBAL: f64 = 1e-12;
        if sin_half < GIMBAL {
            let sum = 2.0 * q4.atan2(q1);
            return EulerAngles::from_raw(wrap_tau(sum), 0.0, 0.0);
        }
        if cos_half < GIMBAL {
            let diff = 2.0 * q3.atan2(q2);
            return EulerAngles::from_raw(wrap_tau(diff), PI, 0.0);
        }
        let sum = 2.0 * q4.atan2(q1);
        let diff = 2.0 * q3.atan2(q2);
        EulerAngles::from_raw(
            wrap_tau((sum + diff) / 2.0),
            beta,
            wrap_tau((sum - diff) / 2.0),
        )
    }

    /// Rodrigues vector of the `q1 > 0` representative.
    pub fn to_rodrigues(&self) -> Result<RodriguesVector> {
        let q = self.0;
        if q[0].abs() <= NEAR_PI_Q1 {
            return Err(Error::NearPiRotation(q[0]));
        }
        let s = q[0].signum();
        let q1 = q[0] * s;
        Ok(RodriguesVector([
            q[1] * s / q1,
            q[2] * s / q1,
            q[3] * s / q1,
        ]))
    }

    /// Rotation angle separating `self` and `other`, in `[0, pi]`.
    pub fn angle_to(&self, other: &UnitQuaternion) -> f64 {
        rotation_angle_between(self, other)
    }
}

#[inline]
pub(crate) fn hamilton(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

impl Neg for UnitQuaternion {
    type Output = UnitQuaternion;

    fn neg(self) -> UnitQuaternion {
        let q = self.0;
        UnitQuaternion([-q[0], -q[1], -q[2], -q[3]])
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;

    fn mul(self, rhs: UnitQuaternion) -> UnitQuaternion {
        self.compose(&rhs)
    }
}

impl fmt::Display for UnitQuaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.0;
        write!(f, "({}, {}, {}, {})", q[0], q[1], q[2], q[3])
    }
}

/// Composition of two rotations; see [`UnitQuaternion::compose`].
pub fn quat_compose(a: &UnitQuaternion, b: &UnitQuaternion) -> UnitQuaternion {
    a.compose(b)
}

/// `2 arccos(|<a, b>|)`, evaluated through a half-angle form that stays
/// accurate near zero.
pub fn rotation_angle_between(a: &UnitQuaternion, b: &UnitQuaternion) -> f64 {
    let s = if a.dot(b) < 0.0 { -1.0 } else { 1.0 };
    let (x, y) = (a.0, b.0);
    let mut diff = 0.0;
    let mut sum = 0.0;
    for k in 0..4 {
        let d = x[k] - s * y[k];
        let p = x[k] + s * y[k];
        diff += d * d;
        sum += p * p;
    }
    4.0 * diff.sqrt().atan2(sum.sqrt())
}

fn wrap_tau(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Bunge ZXZ Euler angles in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EulerAngles {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl EulerAngles {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        check_range("alpha", alpha, 0.0, TAU)?;
        check_range("beta", beta, 0.0, PI)?;
        check_range("gamma", gamma, 0.0, TAU)?;
        Ok(Self::from_raw(alpha, beta, gamma))
    }

    fn from_raw(alpha: f64, beta: f64, gamma: f64) -> Self {
        EulerAngles { alpha, beta, gamma }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    pub fn to_quat(&self) -> UnitQuaternion {
        let (sb, cb) = (self.beta / 2.0).sin_cos();
        let sum = (self.alpha + self.gamma) / 2.0;
        let diff = (self.alpha - self.gamma) / 2.0;
        UnitQuaternion::from_unit_array([
            cb * sum.cos(),
            sb * diff.cos(),
            sb * diff.sin(),
            cb * sum.sin(),
        ])
    }
}

fn check_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if value.is_finite() && (lo..=hi).contains(&value) {
        Ok(())
    } else {
        Err(Error::EulerOutOfRange {
            name,
            value,
            lo,
            hi,
        })
    }
}

/// Rodrigues vector `v tan(w/2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RodriguesVector([f64; 3]);

impl RodriguesVector {
    pub fn new(d1: f64, d2: f64, d3: f64) -> Result<Self> {
        if !(d1.is_finite() && d2.is_finite() && d3.is_finite()) {
            return Err(Error::InvalidQuaternion([f64::NAN, d1, d2, d3]));
        }
        Ok(RodriguesVector([d1, d2, d3]))
    }

    pub fn components(&self) -> [f64; 3] {
        self.0
    }

    pub fn norm(&self) -> f64 {
        let d = self.0;
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }

    pub fn dot(&self, v: &[f64; 3]) -> f64 {
        self.0[0] * v[0] + self.0[1] * v[1] + self.0[2] * v[2]
    }

    pub fn to_quat(&self) -> UnitQuaternion {
        let d = self.0;
        let inv = 1.0 / (1.0 + d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        UnitQuaternion::from_unit_array([inv, d[0] * inv, d[1] * inv, d[2] * inv])
    }
}
