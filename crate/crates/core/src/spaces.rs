//! Euclidean vectors and a catalog of closed convex sets with exact projections.
//!
//! Every set in the catalog has a closed-form projection, so `project`,
//! `distance` and `contains` are exact up to floating point round-off.
//! Hausdorff distances are only available for pairs where an analytic
//! formula exists; anything else is reported as a capability error.

use std::ops::{Add, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute membership tolerance, measured as a distance.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// A point of `R^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    /// Builds a vector, rejecting empty or non-finite input.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidVector("dimension must be at least 1".into()));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidVector(format!(
                "coordinate {i} is not finite ({})",
                coords[i]
            )));
        }
        Ok(Vector(coords))
    }

    /// Wraps coordinates without validation. Arithmetic results go through here.
    pub(crate) fn raw(coords: Vec<f64>) -> Self {
        Vector(coords)
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        Vector(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist(&self, other: &Vector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, s: f64) -> Vector {
        Vector(self.0.iter().map(|c| s * c).collect())
    }

    /// `self + s * other`
    pub fn axpy(&self, s: f64, other: &Vector) -> Vector {
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + s * b).collect())
    }

    /// `(1 - w) * self + w * other`
    pub fn lerp(&self, w: f64, other: &Vector) -> Vector {
        Vector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| (1.0 - w) * a + w * b)
                .collect(),
        )
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector(self.0.iter().map(|&c| f(c)).collect())
    }

    pub fn zip_map(&self, other: &Vector, f: impl Fn(f64, f64) -> f64) -> Vector {
        Vector(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected,
                found: self.dim(),
            })
        }
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Vector::new(v)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Add for &Vector {
    type Output = Vector;

    fn add(self, rhs: &Vector) -> Vector {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &Vector {
    type Output = Vector;

    fn sub(self, rhs: &Vector) -> Vector {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &Vector {
    type Output = Vector;

    fn mul(self, s: f64) -> Vector {
        self.scaled(s)
    }
}

impl Neg for &Vector {
    type Output = Vector;

    fn neg(self) -> Vector {
        self.scaled(-1.0)
    }
}

/// A nonempty closed convex subset of `R^n` with a closed-form projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConvexSet {
    WholeSpace {
        dim: usize,
    },
    /// Axis-aligned box `[lo, hi]`.
    Box {
        lo: Vector,
        hi: Vector,
    },
    Ball {
        center: Vector,
        radius: f64,
    },
    /// `{x : <a, x> <= b}`
    Halfspace {
        a: Vector,
        b: f64,
    },
    /// `{x : <a, x> = b}`
    Hyperplane {
        a: Vector,
        b: f64,
    },
    /// `base + span(directions)`; the directions must be orthonormal.
    Affine {
        base: Vector,
        directions: Vec<Vector>,
    },
    /// `shift + scale * base`
    Transformed {
        base: std::boxed::Box<ConvexSet>,
        shift: Vector,
        scale: f64,
    },
}

impl ConvexSet {
    pub fn whole_space(dim: usize) -> Result<Self> {
        let set = ConvexSet::WholeSpace { dim };
        set.validate()?;
        Ok(set)
    }

    pub fn new_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let set = ConvexSet::Box {
            lo: Vector::new(lo)?,
            hi: Vector::new(hi)?,
        };
        set.validate()?;
        Ok(set)
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new_box(vec![lo; dim], vec![hi; dim])
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let set = ConvexSet::Ball {
            center: Vector::new(center)?,
            radius,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn halfspace(a: Vec<f64>, b: f64) -> Result<Self> {
        let set = ConvexSet::Halfspace {
            a: Vector::new(a)?,
            b,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn hyperplane(a: Vec<f64>, b: f64) -> Result<Self> {
        let set = ConvexSet::Hyperplane {
            a: Vector::new(a)?,
            b,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn affine(base: Vec<f64>, directions: Vec<Vec<f64>>) -> Result<Self> {
        let set = ConvexSet::Affine {
            base: Vector::new(base)?,
            directions: directions
                .into_iter()
                .map(Vector::new)
                .collect::<Result<_>>()?,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn transformed(base: ConvexSet, shift: Vec<f64>, scale: f64) -> Result<Self> {
        let set = ConvexSet::Transformed {
            base: std::boxed::Box::new(base),
            shift: Vector::new(shift)?,
            scale,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::WholeSpace { dim } => *dim,
            ConvexSet::Box { lo, .. } => lo.dim(),
            ConvexSet::Ball { center, .. } => center.dim(),
            ConvexSet::Halfspace { a, .. } | ConvexSet::Hyperplane { a, .. } => a.dim(),
            ConvexSet::Affine { base, .. } => base.dim(),
            ConvexSet::Transformed { shift, .. } => shift.dim(),
        }
    }

    /// Checks the structural invariants of the set description.
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &Vector, what: &str| {
            if v.dim() == 0 || !v.is_finite() {
                Err(Error::InvalidVector(format!("{what} must be a finite nonempty vector")))
            } else {
                Ok(())
            }
        };
        match self {
            ConvexSet::WholeSpace { dim } => {
                if *dim == 0 {
                    return Err(Error::Parameter("whole space needs dim >= 1".into()));
                }
            }
            ConvexSet::Box { lo, hi } => {
                finite(lo, "box lo")?;
                finite(hi, "box hi")?;
                hi.check_dim(lo.dim())?;
                if lo.as_slice().iter().zip(hi.as_slice()).any(|(l, h)| l > h) {
                    return Err(Error::Parameter("box requires lo <= hi".into()));
                }
            }
            ConvexSet::Ball { center, radius } => {
                finite(center, "ball center")?;
                if !(radius.is_finite() && *radius >= 0.0) {
                    return Err(Error::Parameter(format!("ball radius {radius} must be >= 0")));
                }
            }
            ConvexSet::Halfspace { a, b } | ConvexSet::Hyperplane { a, b } => {
                finite(a, "normal")?;
                if a.norm() == 0.0 || !b.is_finite() {
                    return Err(Error::Parameter("normal must be nonzero and offset finite".into()));
                }
            }
            ConvexSet::Affine { base, directions } => {
                finite(base, "affine base")?;
                for (i, d) in directions.iter().enumerate() {
                    d.check_dim(base.dim())?;
                    for (j, e) in directions.iter().enumerate().take(i + 1) {
                        let expected = if i == j { 1.0 } else { 0.0 };
                        if (d.dot(e) - expected).abs() > 1e-10 {
                            return Err(Error::Parameter(
                                "affine directions must be orthonormal".into(),
                            ));
                        }
                    }
                }
            }
            ConvexSet::Transformed { base, shift, scale } => {
                base.validate()?;
                finite(shift, "shift")?;
                shift.check_dim(base.dim())?;
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(Error::Parameter(format!("scale {scale} must be > 0")));
                }
            }
        }
        Ok(())
    }

    /// Euclidean projection.
    pub fn project(&self, x: &Vector) -> Result<Vector> {
        x.check_dim(self.dim())?;
        Ok(self.project_unchecked(x))
    }

    pub(crate) fn project_unchecked(&self, x: &Vector) -> Vector {
        match self {
            ConvexSet::WholeSpace { .. } => x.clone(),
            ConvexSet::Box { lo, hi } => Vector::raw(
                x.as_slice()
                    .iter()
                    .zip(lo.as_slice().iter().zip(hi.as_slice()))
                    .map(|(&c, (&l, &h))| c.clamp(l, h))
                    .collect(),
            ),
            ConvexSet::Ball { center, radius } => {
                let d = x - center;
                let r = d.norm();
                if r <= *radius {
                    x.clone()
                } else {
                    center.axpy(radius / r, &d)
                }
            }
            ConvexSet::Halfspace { a, b } => {
                let excess = a.dot(x) - b;
                if excess <= 0.0 {
                    x.clone()
                } else {
                    x.axpy(-excess / a.norm_sq(), a)
                }
            }
            ConvexSet::Hyperplane { a, b } => x.axpy(-(a.dot(x) - b) / a.norm_sq(), a),
            ConvexSet::Affine { base, directions } => {
                let d = x - base;
                directions
                    .iter()
                    .fold(base.clone(), |p, e| p.axpy(d.dot(e), e))
            }
            ConvexSet::Transformed { base, shift, scale } => {
                let local = (x - shift).scaled(1.0 / scale);
                shift.axpy(*scale, &base.project_unchecked(&local))
            }
        }
    }

    pub fn distance(&self, x: &Vector) -> Result<f64> {
        x.check_dim(self.dim())?;
        Ok(self.distance_unchecked(x))
    }

    pub(crate) fn distance_unchecked(&self, x: &Vector) -> f64 {
        match self {
            ConvexSet::WholeSpace { .. } => 0.0,
            ConvexSet::Ball { center, radius } => (x.dist(center) - radius).max(0.0),
            ConvexSet::Halfspace { a, b } => ((a.dot(x) - b) / a.norm()).max(0.0),
            ConvexSet::Hyperplane { a, b } => (a.dot(x) - b).abs() / a.norm(),
            _ => x.dist(&self.project_unchecked(x)),
        }
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        x.dim() == self.dim() && self.distance_unchecked(x) <= tol
    }

    pub fn is_bounded(&self) -> bool {
        match self {
            ConvexSet::Box { .. } | ConvexSet::Ball { .. } => true,
            ConvexSet::Affine { directions, .. } => directions.is_empty(),
            ConvexSet::Transformed { base, .. } => base.is_bounded(),
            _ => false,
        }
    }

    /// Rewrites nested translate-dilates of boxes and balls as plain boxes and balls.
    pub fn normalized(&self) -> ConvexSet {
        match self {
            ConvexSet::Transformed { base, shift, scale } => match base.normalized() {
                ConvexSet::Box { lo, hi } => ConvexSet::Box {
                    lo: shift.axpy(*scale, &lo),
                    hi: shift.axpy(*scale, &hi),
                },
                ConvexSet::Ball { center, radius } => ConvexSet::Ball {
                    center: shift.axpy(*scale, &center),
                    radius: scale * radius,
                },
                ConvexSet::WholeSpace { dim } => ConvexSet::WholeSpace { dim },
                other => ConvexSet::Transformed {
                    base: std::boxed::Box::new(other),
                    shift: shift.clone(),
                    scale: *scale,
                },
            },
            other => other.clone(),
        }
    }

    /// Smallest axis-aligned box containing the set, when the set is bounded.
    pub fn bounding_box(&self) -> Option<(Vector, Vector)> {
        match self.normalized() {
            ConvexSet::Box { lo, hi } => Some((lo, hi)),
            ConvexSet::Ball { center, radius } => {
                Some((center.map(|c| c - radius), center.map(|c| c + radius)))
            }
            ConvexSet::Affine { base, directions } if directions.is_empty() => {
                Some((base.clone(), base))
            }
            _ => None,
        }
    }

    /// Returns `Some(true)` when `inner ⊆ self` is decidable and holds, `Some(false)`
    /// when it is decidable and fails, `None` when no analytic test is available.
    pub fn includes(&self, inner: &ConvexSet, tol: f64) -> Option<bool> {
        if self.dim() != inner.dim() {
            return Some(false);
        }
        if let ConvexSet::WholeSpace { .. } = self {
            return Some(true);
        }
        if self == inner {
            return Some(true);
        }
        let outer = self.normalized();
        match (&outer, inner.normalized()) {
            (ConvexSet::Box { lo: ol, hi: oh }, ConvexSet::Box { lo, hi }) => Some(
                (0..lo.dim()).all(|i| lo[i] >= ol[i] - tol && hi[i] <= oh[i] + tol),
            ),
            (ConvexSet::Box { lo: ol, hi: oh }, ConvexSet::Ball { center, radius }) => Some(
                (0..center.dim())
                    .all(|i| center[i] - radius >= ol[i] - tol && center[i] + radius <= oh[i] + tol),
            ),
            (ConvexSet::Ball { center: oc, radius: or }, ConvexSet::Ball { center, radius }) => {
                Some(center.dist(oc) + radius <= or + tol)
            }
            (ConvexSet::Ball { .. }, ConvexSet::Box { lo, hi }) => {
                // farthest point of a box from the center is a vertex
                let far = box_farthest_vertex(&lo, &hi, &outer);
                Some(outer.distance_unchecked(&far) <= tol)
            }
            (ConvexSet::Halfspace { .. }, ConvexSet::Box { lo, hi }) => {
                let far = box_farthest_vertex(&lo, &hi, &outer);
                Some(outer.distance_unchecked(&far) <= tol)
            }
            (ConvexSet::Halfspace { a, b }, ConvexSet::Ball { center, radius }) => {
                Some(a.dot(&center) + radius * a.norm() <= b + tol * a.norm())
            }
            _ => None,
        }
    }
}

fn box_farthest_vertex(lo: &Vector, hi: &Vector, from: &ConvexSet) -> Vector {
    match from {
        ConvexSet::Ball { center, .. } => Vector::raw(
            (0..lo.dim())
                .map(|i| {
                    if (lo[i] - center[i]).abs() > (hi[i] - center[i]).abs() {
                        lo[i]
                    } else {
                        hi[i]
                    }
                })
                .collect(),
        ),
        ConvexSet::Halfspace { a, .. } => Vector::raw(
            (0..lo.dim())
                .map(|i| if a[i] >= 0.0 { hi[i] } else { lo[i] })
                .collect(),
        ),
        _ => hi.clone(),
    }
}

/// One-sided distance `sup_{x in a} d(x, b)` for two boxes.
///
/// `d(., b)^2` is separable and convex per coordinate, so the supremum over
/// `a` is attained coordinatewise at an endpoint of `a`.
fn box_excess(a_lo: &Vector, a_hi: &Vector, b_lo: &Vector, b_hi: &Vector) -> f64 {
    (0..a_lo.dim())
        .map(|i| {
            let gap = |c: f64| (b_lo[i] - c).max(c - b_hi[i]).max(0.0);
            gap(a_lo[i]).max(gap(a_hi[i])).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Unit normal and offset of `<a, x> = b` (or `<=`).
fn unit_normal(a: &Vector, b: f64) -> (Vector, f64) {
    let n = a.norm();
    (a.scaled(1.0 / n), b / n)
}

fn parallel(u: &Vector, v: &Vector) -> bool {
    u.dist(v) <= 1e-12
}

/// Hausdorff distance for analytically supported pairs.
///
/// Supported: identical sets, two balls, two boxes, a set and any
/// translate-dilate of it that normalizes to one of those, parallel
/// halfspaces, parallel hyperplanes, and two copies of the whole space.
pub fn hausdorff(a: &ConvexSet, b: &ConvexSet) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    if a == b {
        return Ok(0.0);
    }
    match (a.normalized(), b.normalized()) {
        (ConvexSet::WholeSpace { .. }, ConvexSet::WholeSpace { .. }) => Ok(0.0),
        (ConvexSet::Ball { center: c1, radius: r1 }, ConvexSet::Ball { center: c2, radius: r2 }) => {
            Ok(c1.dist(&c2) + (r1 - r2).abs())
        }
        (ConvexSet::Box { lo: l1, hi: h1 }, ConvexSet::Box { lo: l2, hi: h2 }) => {
            Ok(box_excess(&l1, &h1, &l2, &h2).max(box_excess(&l2, &h2, &l1, &h1)))
        }
        (ConvexSet::Halfspace { a: a1, b: b1 }, ConvexSet::Halfspace { a: a2, b: b2 }) => {
            let (n1, o1) = unit_normal(&a1, b1);
            let (n2, o2) = unit_normal(&a2, b2);
            if parallel(&n1, &n2) {
                Ok((o1 - o2).abs())
            } else {
                Err(Error::Capability(
                    "Hausdorff distance of non-parallel halfspaces is infinite".into(),
                ))
            }
        }
        (ConvexSet::Hyperplane { a: a1, b: b1 }, ConvexSet::Hyperplane { a: a2, b: b2 }) => {
            let (n1, o1) = unit_normal(&a1, b1);
            let (n2, o2) = unit_normal(&a2, b2);
            if parallel(&n1, &n2) {
                Ok((o1 - o2).abs())
            } else if parallel(&n1, &-&n2) {
                Ok((o1 + o2).abs())
            } else {
                Err(Error::Capability(
                    "Hausdorff distance of non-parallel hyperplanes is infinite".into(),
                ))
            }
        }
        (x, y) if x == y => Ok(0.0),
        _ => Err(Error::Capability(format!(
            "no analytic Hausdorff distance for this pair ({} vs {})",
            kind_name(a),
            kind_name(b)
        ))),
    }
}

pub(crate) fn kind_name(set: &ConvexSet) -> &'static str {
    match set {
        ConvexSet::WholeSpace { .. } => "whole-space",
        ConvexSet::Box { .. } => "box",
        ConvexSet::Ball { .. } => "ball",
        ConvexSet::Halfspace { .. } => "halfspace",
        ConvexSet::Hyperplane { .. } => "hyperplane",
        ConvexSet::Affine { .. } => "affine",
        ConvexSet::Transformed { .. } => "transformed",
    }
}

/// Nonnegative nonincreasing scalar profile `t -> delta(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Decay {
    Zero,
    /// `scale * (1 + t)^(-exponent)`
    Power { scale: f64, exponent: f64 },
    /// `scale * exp(-rate * t)`
    Exponential { scale: f64, rate: f64 },
}

impl Decay {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Decay::Zero => 0.0,
            Decay::Power { scale, exponent } => scale * (1.0 + t).powf(-exponent),
            Decay::Exponential { scale, rate } => scale * (-rate * t).exp(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Decay::Zero => true,
            Decay::Power { scale, exponent } => scale >= 0.0 && exponent >= 0.0,
            Decay::Exponential { scale, rate } => scale >= 0.0 && rate >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("decay {self:?} must be nonnegative and nonincreasing")))
        }
    }

    /// Exponent `q` such that `value(t) ~ (1 + t)^(-q)`; infinite for exponential decay.
    pub fn power_rate(&self) -> f64 {
        match *self {
            Decay::Zero => f64::INFINITY,
            Decay::Power { scale, exponent } => {
                if scale == 0.0 {
                    f64::INFINITY
                } else {
                    exponent
                }
            }
            Decay::Exponential { scale, rate } => {
                if scale == 0.0 || rate > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    /// `[lo, hi + delta(t) * 1]`
    InflateBox,
    /// ball radius `r + delta(t)`
    DilateBall,
}

/// A time-indexed family of convex sets converging to `base`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetFamily {
    pub base: ConvexSet,
    pub perturbation: Perturbation,
    pub delta: Decay,
}

impl SetFamily {
    pub fn new(base: ConvexSet, perturbation: Perturbation, delta: Decay) -> Result<Self> {
        let family = SetFamily {
            base,
            perturbation,
            delta,
        };
        family.validate()?;
        Ok(family)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.delta.validate()?;
        match (self.perturbation, self.base.normalized()) {
            (Perturbation::InflateBox, ConvexSet::Box { .. })
            | (Perturbation::DilateBall, ConvexSet::Ball { .. }) => Ok(()),
            (p, _) => Err(Error::Capability(format!(
                "{p:?} is not defined for a {} base set",
                kind_name(&self.base)
            ))),
        }
    }

    pub fn at(&self, t: f64) -> ConvexSet {
        let d = self.delta.value(t);
        match (self.perturbation, self.base.normalized()) {
            (Perturbation::InflateBox, ConvexSet::Box { lo, hi }) => ConvexSet::Box {
                lo,
                hi: hi.map(|h| h + d),
            },
            (Perturbation::DilateBall, ConvexSet::Ball { center, radius }) => ConvexSet::Ball {
                center,
                radius: radius + d,
            },
            _ => unreachable!("validated at construction"),
        }
    }

    pub fn hausdorff_to_base(&self, t: f64) -> f64 {
        hausdorff(&self.at(t), &self.base).expect("family members form an analytic pair")
    }

    /// A box containing every member; members grow as `delta` grows, so `t = 0` bounds them all.
    pub fn uniform_bound(&self) -> (Vector, Vector) {
        let widest = self.at(0.0);
        let (lo0, hi0) = widest.bounding_box().expect("catalog families are bounded");
        let (lo1, hi1) = self.base.bounding_box().expect("catalog families are bounded");
        (
            lo0.zip_map(&lo1, f64::min),
            hi0.zip_map(&hi1, f64::max),
        )
    }
}
