//! Exact evaluation of the trace map, its inverse and invariant, the torus
//! cat map with its factor map onto the Cayley cubic, and the standard map.

use std::f64::consts::TAU;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix3 = nalgebra::Matrix3<f64>;

/// A point of phase space. Coordinates are traces, so they are plain reals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(into = "[f64; 3]", try_from = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        if x.is_finite() && y.is_finite() && z.is_finite() {
            Ok(Self { x, y, z })
        } else {
            Err(Error::NonFinite("Point3"))
        }
    }

    pub(crate) const fn raw(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::raw(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist(self, o: Self) -> f64 {
        (self - o).norm()
    }

    pub fn normalized(self) -> Self {
        self * (1.0 / self.norm())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    pub fn to_vector(self) -> nalgebra::Vector3<f64> {
        nalgebra::Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &nalgebra::Vector3<f64>) -> Self {
        Self::raw(v[0], v[1], v[2])
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        p.to_array()
    }
}

impl TryFrom<[f64; 3]> for Point3 {
    type Error = Error;

    fn try_from(a: [f64; 3]) -> Result<Self> {
        Point3::new(a[0], a[1], a[2])
    }
}

impl Add for Point3 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::raw(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::raw(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self::raw(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Point3 {
    type Output = Self;
    fn neg(self) -> Self {
        Self::raw(-self.x, -self.y, -self.z)
    }
}

/// Reduce to [0, 1). Values within 1e-15 of 1 snap to 0.
pub fn reduce_unit(v: f64) -> f64 {
    let r = v - v.floor();
    if r >= 1.0 - 1e-15 {
        0.0
    } else {
        r
    }
}

/// A point of the two-torus with both coordinates in [0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(into = "[f64; 2]", try_from = "[f64; 2]")]
pub struct TorusPoint {
    theta: f64,
    phi: f64,
}

impl TorusPoint {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if theta.is_finite() && phi.is_finite() {
            Ok(Self::reduced(theta, phi))
        } else {
            Err(Error::NonFinite("TorusPoint"))
        }
    }

    pub(crate) fn reduced(theta: f64, phi: f64) -> Self {
        Self {
            theta: reduce_unit(theta),
            phi: reduce_unit(phi),
        }
    }

    pub fn theta(self) -> f64 {
        self.theta
    }

    pub fn phi(self) -> f64 {
        self.phi
    }

    /// Sup-norm distance on the torus.
    pub fn torus_dist(self, o: Self) -> f64 {
        let d = |a: f64, b: f64| {
            let r = reduce_unit(a - b);
            r.min(1.0 - r)
        };
        d(self.theta, o.theta).max(d(self.phi, o.phi))
    }
}

impl From<TorusPoint> for [f64; 2] {
    fn from(t: TorusPoint) -> Self {
        [t.theta, t.phi]
    }
}

impl TryFrom<[f64; 2]> for TorusPoint {
    type Error = Error;

    fn try_from(a: [f64; 2]) -> Result<Self> {
        TorusPoint::new(a[0], a[1])
    }
}

#[inline]
pub fn trace_map(p: Point3) -> Point3 {
    Point3::raw(2.0 * p.x * p.y - p.z, p.x, p.y)
}

#[inline]
pub fn trace_map_inverse(p: Point3) -> Point3 {
    Point3::raw(p.y, p.z, 2.0 * p.y * p.z - p.x)
}

/// Time-reversal involution; conjugates the map to its inverse.
#[inline]
pub fn time_reversal(p: Point3) -> Point3 {
    Point3::raw(p.z, p.y, p.x)
}

#[inline]
pub fn invariant(p: Point3) -> f64 {
    p.x * p.x + p.y * p.y + p.z * p.z - 2.0 * p.x * p.y * p.z - 1.0
}

#[inline]
pub fn invariant_gradient(p: Point3) -> Point3 {
    Point3::raw(
        2.0 * p.x - 2.0 * p.y * p.z,
        2.0 * p.y - 2.0 * p.x * p.z,
        2.0 * p.z - 2.0 * p.x * p.y,
    )
}

pub fn jacobian(p: Point3) -> Matrix3 {
    Matrix3::new(2.0 * p.y, 2.0 * p.x, -1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0)
}

pub fn jacobian_inverse(p: Point3) -> Matrix3 {
    Matrix3::new(0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -1.0, 2.0 * p.z, 2.0 * p.y)
}

/// Apply DT(p) to a tangent vector without forming the matrix.
#[inline]
pub fn jacobian_apply(p: Point3, v: Point3) -> Point3 {
    Point3::raw(2.0 * p.y * v.x + 2.0 * p.x * v.y - v.z, v.x, v.y)
}

/// Apply D(T^-1)(p) to a tangent vector.
#[inline]
pub fn jacobian_inverse_apply(p: Point3, v: Point3) -> Point3 {
    Point3::raw(v.y, v.z, 2.0 * p.z * v.y + 2.0 * p.y * v.z - v.x)
}

pub fn anosov_step(t: TorusPoint) -> TorusPoint {
    TorusPoint::reduced(t.theta + t.phi, t.theta)
}

pub fn anosov_step_inverse(t: TorusPoint) -> TorusPoint {
    TorusPoint::reduced(t.phi, t.theta - t.phi)
}

pub fn factor_map(t: TorusPoint) -> Point3 {
    Point3::raw(
        (TAU * (t.theta + t.phi)).cos(),
        (TAU * t.theta).cos(),
        (TAU * t.phi).cos(),
    )
}

pub fn standard_map(q: TorusPoint, k: f64) -> TorusPoint {
    let kick = k * (TAU * q.theta).sin();
    TorusPoint::reduced(q.theta + q.phi + kick, q.phi + kick)
}

/// Analytic Jacobian of the standard map at `q`, row-major.
pub fn standard_map_jacobian(q: TorusPoint, k: f64) -> [[f64; 2]; 2] {
    let c = k * TAU * (TAU * q.theta).cos();
    [[1.0 + c, 1.0], [c, 1.0]]
}

/// Golden mean, the expanding eigenvalue of the cat map.
pub const GOLDEN: f64 = 1.618_033_988_749_895;
