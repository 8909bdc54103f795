//! Small fixed-size vector types used throughout the solver.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A point or vector in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn length_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn length(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn normalized(self) -> Vec2 {
        self / self.length()
    }

    /// Left-hand perpendicular, i.e. the vector rotated by +90 degrees.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    #[inline]
    pub fn min(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x.min(o.x), self.y.min(o.y))
    }

    #[inline]
    pub fn max(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x.max(o.x), self.y.max(o.y))
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Embeds the vector as a direction with zero z-component.
    #[inline]
    pub fn to_dir(self) -> Dir {
        [self.x, self.y, 0.0]
    }

    #[inline]
    pub fn from_dir(d: Dir) -> Vec2 {
        Vec2::new(d[0], d[1])
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(v: [f64; 2]) -> Self {
        Vec2::new(v[0], v[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// A direction in two or three dimensions. Planar directions keep `z == 0`,
/// so dot products are dimension-agnostic.
pub type Dir = [f64; 3];

#[inline]
pub fn dot3(a: &Dir, b: &Dir) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm3(a: &Dir) -> f64 {
    dot3(a, a).sqrt()
}

#[inline]
pub fn scale3(a: &Dir, s: f64) -> Dir {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn sub3(a: &Dir, b: &Dir) -> Dir {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Reflects `v` across the plane with unit normal `n`.
#[inline]
pub fn reflect3(v: &Dir, n: &Dir) -> Dir {
    let d = 2.0 * dot3(v, n);
    [v[0] - d * n[0], v[1] - d * n[1], v[2] - d * n[2]]
}

/// Builds two unit vectors orthogonal to `n` (and each other).
pub fn orthonormal_basis(n: &Dir) -> (Dir, Dir) {
    // Duff et al. branchless construction
    let sign = 1.0_f64.copysign(n[2]);
    let a = -1.0 / (sign + n[2]);
    let b = n[0] * n[1] * a;
    let t1 = [1.0 + sign * n[0] * n[0] * a, sign * b, -sign * n[0]];
    let t2 = [b, sign + n[1] * n[1] * a, -n[1]];
    (t1, t2)
}

/// Axis-aligned rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Rect { min, max }
    }

    pub fn empty() -> Self {
        Rect {
            min: Vec2::new(f64::INFINITY, f64::INFINITY),
            max: Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn grow(&mut self, p: Vec2) {
        self.min = self.min.min(p);
        self.max = self.max.max(p);
    }

    pub fn union(&self, o: &Rect) -> Rect {
        Rect::new(self.min.min(o.min), self.max.max(o.max))
    }

    pub fn extent(&self) -> Vec2 {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().length()
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_rect(&self, o: &Rect) -> bool {
        self.contains(o.min) && self.contains(o.max)
    }

    /// Squared distance from `p` to the rectangle (0 inside).
    #[inline]
    pub fn distance_squared(&self, p: Vec2) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        dx * dx + dy * dy
    }

    /// Parametric entry distance of a ray into the box, if it enters before `t_max`.
    #[inline]
    pub fn ray_entry(&self, origin: Vec2, inv_dir: Vec2, t_max: f64) -> Option<f64> {
        let tx1 = (self.min.x - origin.x) * inv_dir.x;
        let tx2 = (self.max.x - origin.x) * inv_dir.x;
        let ty1 = (self.min.y - origin.y) * inv_dir.y;
        let ty2 = (self.max.y - origin.y) * inv_dir.y;
        let t_near = tx1.min(tx2).max(ty1.min(ty2)).max(0.0);
        let t_far = tx1.max(tx2).min(ty1.max(ty2)).min(t_max);
        // NaN (0 * inf on a slab boundary) compares false; treat as a hit candidate.
        if t_near <= t_far || t_near.is_nan() || t_far.is_nan() {
            Some(if t_near.is_nan() { 0.0 } else { t_near })
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_orthonormal() {
        for n in [
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
            [0.6, 0.0, 0.8],
            [0.48, 0.6, -0.64],
        ] {
            let (a, b) = orthonormal_basis(&n);
            assert!((norm3(&a) - 1.0).abs() < 1e-12);
            assert!((norm3(&b) - 1.0).abs() < 1e-12);
            assert!(dot3(&a, &n).abs() < 1e-12);
            assert!(dot3(&b, &n).abs() < 1e-12);
            assert!(dot3(&a, &b).abs() < 1e-12);
        }
    }

    #[test]
    fn rect_distance() {
        let r = Rect::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0));
        assert_eq!(r.distance_squared(Vec2::new(0.5, 0.5)), 0.0);
        assert_eq!(r.distance_squared(Vec2::new(2.0, 1.0)), 1.0);
        assert_eq!(r.distance_squared(Vec2::new(-3.0, 5.0)), 25.0);
    }
}
