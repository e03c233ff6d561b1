//! Operators on convex domains: proximal maps, cocoercive gradients, the
//! forward-backward composite, time-indexed families, and sampling-based
//! checkers for the operator classes.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::DomainSampler;
use crate::schedule::EpsilonSchedule;
use crate::spaces::{ConvexSet, Decay, SetFamily, Vector, MEMBERSHIP_TOL};

/// Default number of sampled pairs per property check.
pub const DEFAULT_PAIRS: usize = 1000;
/// Default tolerance of property checks.
pub const DEFAULT_CHECK_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OperatorClass {
    Nonexpansive,
    FirmlyNonexpansive,
    Contraction { alpha: f64 },
    Cocoercive { beta: f64 },
    Unclassified,
}

impl OperatorClass {
    pub fn validate(&self) -> Result<()> {
        match *self {
            OperatorClass::Contraction { alpha } if !(0.0..1.0).contains(&alpha) => Err(
                Error::Parameter(format!("contraction modulus {alpha} must lie in [0, 1)")),
            ),
            OperatorClass::Cocoercive { beta } if !(beta > 0.0 && beta.is_finite()) => Err(
                Error::Parameter(format!("cocoercivity modulus {beta} must be > 0")),
            ),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            OperatorClass::Nonexpansive => "nonexpansive".into(),
            OperatorClass::FirmlyNonexpansive => "firmly-nonexpansive".into(),
            OperatorClass::Contraction { alpha } => format!("contraction({alpha})"),
            OperatorClass::Cocoercive { beta } => format!("cocoercive({beta})"),
            OperatorClass::Unclassified => "unclassified".into(),
        }
    }

    /// Classes whose members map a domain into itself nonexpansively.
    pub fn is_nonexpansive(&self) -> bool {
        matches!(
            self,
            OperatorClass::Nonexpansive
                | OperatorClass::FirmlyNonexpansive
                | OperatorClass::Contraction { .. }
        )
    }
}

/// Convex function with a closed-form proximal map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProxKind {
    /// Indicator of a closed convex set.
    Indicator { set: ConvexSet },
    /// `weight * ||y||_1`
    L1 { weight: f64 },
    /// `weight / 2 * ||y - center||^2`
    Quadratic { center: Vector, weight: f64 },
    /// Sum of terms acting on consecutive coordinate blocks.
    Separable { blocks: Vec<ProxBlock> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxBlock {
    pub dims: usize,
    pub term: ProxKind,
}

/// `prox_{mu * phi}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxSpec {
    pub kind: ProxKind,
    pub mu: f64,
}

impl ProxSpec {
    pub fn new(kind: ProxKind, mu: f64) -> Result<Self> {
        let spec = ProxSpec { kind, mu };
        spec.validate()?;
        Ok(spec)
    }

    pub fn indicator(set: ConvexSet) -> Self {
        ProxSpec {
            kind: ProxKind::Indicator { set },
            mu: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Parameter(format!("prox step mu = {} must be > 0", self.mu)));
        }
        validate_kind(&self.kind)
    }

    /// Dimension fixed by the term, if any.
    pub fn dim(&self) -> Option<usize> {
        kind_dim(&self.kind)
    }

    /// The indicator set when `phi` is an indicator.
    pub fn indicator_set(&self) -> Option<&ConvexSet> {
        match &self.kind {
            ProxKind::Indicator { set } => Some(set),
            _ => None,
        }
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        ProxSpec {
            kind: self.kind.clone(),
            mu,
        }
    }
}

fn validate_kind(kind: &ProxKind) -> Result<()> {
    match kind {
        ProxKind::Indicator { set } => set.validate(),
        ProxKind::L1 { weight } => {
            if *weight >= 0.0 && weight.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("l1 weight {weight} must be >= 0")))
            }
        }
        ProxKind::Quadratic { weight, .. } => {
            if *weight >= 0.0 && weight.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("quadratic weight {weight} must be >= 0")))
            }
        }
        ProxKind::Separable { blocks } => {
            if blocks.is_empty() {
                return Err(Error::Parameter("separable prox needs at least one block".into()));
            }
            for b in blocks {
                validate_kind(&b.term)?;
                if let Some(d) = kind_dim(&b.term) {
                    if d != b.dims {
                        return Err(Error::DimensionMismatch {
                            expected: b.dims,
                            found: d,
                        });
                    }
                }
                if b.dims == 0 {
                    return Err(Error::Parameter("separable block of size 0".into()));
                }
            }
            Ok(())
        }
    }
}

fn kind_dim(kind: &ProxKind) -> Option<usize> {
    match kind {
        ProxKind::Indicator { set } => Some(set.dim()),
        ProxKind::L1 { .. } => None,
        ProxKind::Quadratic { center, .. } => Some(center.dim()),
        ProxKind::Separable { blocks } => Some(blocks.iter().map(|b| b.dims).sum()),
    }
}

fn prox_kind(kind: &ProxKind, mu: f64, x: &[f64], out: &mut Vec<f64>) {
    match kind {
        ProxKind::Indicator { set } => {
            out.extend_from_slice(set.project_unchecked(&Vector::raw(x.to_vec())).as_slice())
        }
        ProxKind::L1 { weight } => {
            let thr = mu * weight;
            out.extend(x.iter().map(|&c| c.signum() * (c.abs() - thr).max(0.0)));
        }
        ProxKind::Quadratic { center, weight } => {
            let w = mu * weight;
            out.extend(
                x.iter()
                    .zip(center.as_slice())
                    .map(|(&c, &z)| (c + w * z) / (1.0 + w)),
            );
        }
        ProxKind::Separable { blocks } => {
            let mut start = 0;
            for b in blocks {
                prox_kind(&b.term, mu, &x[start..start + b.dims], out);
                start += b.dims;
            }
        }
    }
}

/// `prox_{mu phi}(x) = argmin_y phi(y) + ||y - x||^2 / (2 mu)`
pub fn prox(spec: &ProxSpec, x: &Vector) -> Result<Vector> {
    if let Some(d) = spec.dim() {
        x.check_dim(d)?;
    }
    Ok(prox_unchecked(spec, x))
}

pub(crate) fn prox_unchecked(spec: &ProxSpec, x: &Vector) -> Vector {
    let mut out = Vec::with_capacity(x.dim());
    prox_kind(&spec.kind, spec.mu, x.as_slice(), &mut out);
    Vector::raw(out)
}

/// Dense row-major matrix for small linear maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Matrix {
    rows: Vec<Vec<f64>>,
}

impl Matrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Parameter("matrix must be a nonempty rectangular array".into()));
        }
        if rows.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Parameter("matrix entries must be finite".into()));
        }
        Ok(Matrix { rows })
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Matrix {
            rows: (0..n)
                .map(|i| (0..n).map(|j| if i == j { d[i] } else { 0.0 }).collect())
                .collect(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.rows[0].len()
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        Vector::raw(
            self.rows
                .iter()
                .map(|r| r.iter().zip(x.as_slice()).map(|(a, b)| a * b).sum())
                .collect(),
        )
    }
}

type MapFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
type FamilyFn = Arc<dyn Fn(f64, &Vector) -> Vector + Send + Sync>;

#[derive(Clone)]
pub enum OperatorMap {
    Identity,
    Constant(Vector),
    Projection(ConvexSet),
    /// `x -> matrix * x + offset`
    Affine { matrix: Matrix, offset: Vector },
    Prox(ProxSpec),
    /// `x -> prox_{mu phi}(x - mu * B x)` with `mu` carried by the prox spec.
    ForwardBackward {
        prox: ProxSpec,
        gradient: Box<Operator>,
        beta: f64,
    },
    Custom(MapFn),
}

impl fmt::Debug for OperatorMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorMap::Identity => write!(f, "Identity"),
            OperatorMap::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            OperatorMap::Projection(s) => f.debug_tuple("Projection").field(s).finish(),
            OperatorMap::Affine { matrix, offset } => f
                .debug_struct("Affine")
                .field("matrix", matrix)
                .field("offset", offset)
                .finish(),
            OperatorMap::Prox(p) => f.debug_tuple("Prox").field(p).finish(),
            OperatorMap::ForwardBackward {
                prox,
                gradient,
                beta,
            } => f
                .debug_struct("ForwardBackward")
                .field("prox", prox)
                .field("gradient", gradient)
                .field("beta", beta)
                .finish(),
            OperatorMap::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// A map `domain -> R^n` with a declared operator class.
#[derive(Clone, Debug)]
pub struct Operator {
    name: String,
    domain: ConvexSet,
    map: OperatorMap,
    class: OperatorClass,
}

impl Operator {
    pub fn new(
        name: impl Into<String>,
        domain: ConvexSet,
        map: OperatorMap,
        class: OperatorClass,
    ) -> Result<Self> {
        class.validate()?;
        domain.validate()?;
        let n = domain.dim();
        let check = |v: &Vector| v.check_dim(n);
        match &map {
            OperatorMap::Constant(c) => check(c)?,
            OperatorMap::Projection(s) => {
                s.validate()?;
                if s.dim() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: s.dim(),
                    });
                }
            }
            OperatorMap::Affine { matrix, offset } => {
                check(offset)?;
                if matrix.nrows() != n || matrix.ncols() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: matrix.ncols(),
                    });
                }
            }
            OperatorMap::Prox(p) => {
                p.validate()?;
                if let Some(d) = p.dim() {
                    if d != n {
                        return Err(Error::DimensionMismatch { expected: n, found: d });
                    }
                }
            }
            _ => {}
        }
        Ok(Operator {
            name: name.into(),
            domain,
            map,
            class,
        })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(
            "identity",
            ConvexSet::whole_space(dim)?,
            OperatorMap::Identity,
            OperatorClass::FirmlyNonexpansive,
        )
    }

    pub fn constant(c: Vector) -> Result<Self> {
        Self::new(
            "constant",
            ConvexSet::whole_space(c.dim())?,
            OperatorMap::Constant(c),
            OperatorClass::Contraction { alpha: 0.0 },
        )
    }

    pub fn projection(set: ConvexSet) -> Result<Self> {
        Self::new(
            "projection",
            ConvexSet::whole_space(set.dim())?,
            OperatorMap::Projection(set),
            OperatorClass::FirmlyNonexpansive,
        )
    }

    pub fn prox(spec: ProxSpec, dim: usize) -> Result<Self> {
        Self::new(
            "prox",
            ConvexSet::whole_space(dim)?,
            OperatorMap::Prox(spec),
            OperatorClass::FirmlyNonexpansive,
        )
    }

    pub fn affine(matrix: Matrix, offset: Vector, class: OperatorClass) -> Result<Self> {
        Self::new(
            "affine",
            ConvexSet::whole_space(offset.dim())?,
            OperatorMap::Affine { matrix, offset },
            class,
        )
    }

    /// `x -> alpha * R(angle) x` in the plane.
    pub fn scaled_rotation(alpha: f64, angle: f64) -> Result<Self> {
        let (s, c) = angle.sin_cos();
        let m = Matrix::new(vec![vec![alpha * c, -alpha * s], vec![alpha * s, alpha * c]])?;
        let class = if alpha.abs() < 1.0 {
            OperatorClass::Contraction { alpha: alpha.abs() }
        } else if alpha.abs() == 1.0 {
            OperatorClass::Nonexpansive
        } else {
            OperatorClass::Unclassified
        };
        Self::affine(m, Vector::zeros(2), class).map(|op| op.named("scaled-rotation"))
    }

    /// `x -> x + v`; nonexpansive with no fixed point when `v != 0`.
    pub fn translation(v: Vector) -> Result<Self> {
        let n = v.dim();
        Self::affine(
            Matrix::diagonal(&vec![1.0; n]),
            v,
            OperatorClass::Nonexpansive,
        )
        .map(|op| op.named("translation"))
    }

    /// `x -> factor * x`
    pub fn scaling(dim: usize, factor: f64) -> Result<Self> {
        let class = if factor.abs() < 1.0 {
            OperatorClass::Contraction {
                alpha: factor.abs(),
            }
        } else if factor.abs() == 1.0 {
            OperatorClass::Nonexpansive
        } else {
            OperatorClass::Unclassified
        };
        Self::affine(
            Matrix::diagonal(&vec![factor; dim]),
            Vector::zeros(dim),
            class,
        )
        .map(|op| op.named("scaling"))
    }

    /// Gradient of `1/2 (x - c)^T diag(w) (x - c)`; cocoercive with modulus `1 / max w`.
    pub fn quadratic_gradient(weights: &[f64], center: Vector) -> Result<Self> {
        center.check_dim(weights.len())?;
        let wmax = weights.iter().cloned().fold(0.0, f64::max);
        if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) || wmax == 0.0 {
            return Err(Error::Parameter("quadratic weights must be >= 0, not all zero".into()));
        }
        let offset = Vector::raw(
            weights
                .iter()
                .zip(center.as_slice())
                .map(|(w, c)| -w * c)
                .collect(),
        );
        Self::affine(
            Matrix::diagonal(weights),
            offset,
            OperatorClass::Cocoercive { beta: 1.0 / wmax },
        )
        .map(|op| op.named("quadratic-gradient"))
    }

    pub fn custom(
        name: impl Into<String>,
        domain: ConvexSet,
        class: OperatorClass,
        f: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::new(name, domain, OperatorMap::Custom(Arc::new(f)), class)
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_class(mut self, class: OperatorClass) -> Result<Self> {
        class.validate()?;
        self.class = class;
        Ok(self)
    }

    pub fn with_domain(mut self, domain: ConvexSet) -> Result<Self> {
        domain.validate()?;
        if domain.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: domain.dim(),
            });
        }
        self.domain = domain;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &ConvexSet {
        &self.domain
    }

    pub fn class(&self) -> OperatorClass {
        self.class
    }

    pub fn map(&self) -> &OperatorMap {
        &self.map
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Evaluates without domain or dimension checks.
    pub fn eval(&self, x: &Vector) -> Vector {
        match &self.map {
            OperatorMap::Identity => x.clone(),
            OperatorMap::Constant(c) => c.clone(),
            OperatorMap::Projection(s) => s.project_unchecked(x),
            OperatorMap::Affine { matrix, offset } => &matrix.apply(x) + offset,
            OperatorMap::Prox(p) => prox_unchecked(p, x),
            OperatorMap::ForwardBackward { prox, gradient, .. } => {
                let step = x.axpy(-prox.mu, &gradient.eval(x));
                prox_unchecked(prox, &step)
            }
            OperatorMap::Custom(f) => f(x),
        }
    }

    /// Evaluates after checking the dimension.
    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        x.check_dim(self.dim())?;
        let y = self.eval(x);
        if y.dim() != x.dim() || !y.is_finite() {
            return Err(Error::Input(format!(
                "operator '{}' returned an invalid value",
                self.name
            )));
        }
        Ok(y)
    }

    /// The cocoercive part and its modulus of a forward-backward operator.
    pub fn forward_backward_parts(&self) -> Option<(&ProxSpec, &Operator, f64)> {
        match &self.map {
            OperatorMap::ForwardBackward {
                prox,
                gradient,
                beta,
            } => Some((prox, gradient.as_ref(), *beta)),
            _ => None,
        }
    }
}

/// `G(x) = x - T(x)`; zero exactly at the fixed points of `T`.
pub fn residual(op: &Operator, x: &Vector) -> Result<Vector> {
    x.check_dim(op.dim())?;
    if !op.domain().contains(x, MEMBERSHIP_TOL) {
        return Err(Error::Domain(format!(
            "distance {:e} to the domain of '{}'",
            op.domain().distance_unchecked(x),
            op.name()
        )));
    }
    Ok(x - &op.eval(x))
}

/// Builds `x -> prox_{mu phi}(x - mu B x)` from a cocoercive `B`.
pub fn make_forward_backward(phi: &ProxSpec, gradient: &Operator, mu: f64) -> Result<Operator> {
    let beta = match gradient.class() {
        OperatorClass::Cocoercive { beta } => beta,
        other => {
            return Err(Error::Parameter(format!(
                "forward-backward needs a cocoercive operator, got {}",
                other.name()
            )))
        }
    };
    if !(mu > 0.0 && mu < 2.0 * beta) {
        return Err(Error::Parameter(format!(
            "step mu = {mu} must lie in (0, 2 beta) = (0, {})",
            2.0 * beta
        )));
    }
    let prox = phi.with_mu(mu);
    prox.validate()?;
    if let Some(set) = prox.indicator_set() {
        if gradient.domain().includes(set, MEMBERSHIP_TOL) == Some(false) {
            return Err(Error::Parameter(
                "domain of the cocoercive operator must contain the prox domain".into(),
            ));
        }
    }
    Operator::new(
        "forward-backward",
        gradient.domain().clone(),
        OperatorMap::ForwardBackward {
            prox,
            gradient: Box::new(gradient.clone()),
            beta,
        },
        OperatorClass::Nonexpansive,
    )
}

/// Result of a sampled inequality check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub id: String,
    pub passed: bool,
    /// Largest observed violation (positive means the inequality failed by that much).
    pub worst_margin: f64,
    pub tol: f64,
    pub samples: usize,
    pub witness: Option<(Vector, Vector)>,
}

impl CheckReport {
    /// One machine-readable `key=value` line.
    pub fn to_line(&self) -> String {
        let mut line = format!(
            "id={} status={} measured={} threshold={} samples={}",
            self.id,
            if self.passed { "pass" } else { "fail" },
            self.worst_margin,
            self.tol,
            self.samples
        );
        if let (false, Some((x, y))) = (self.passed, &self.witness) {
            line.push_str(&format!(
                " witness_x={} witness_y={}",
                join(x.as_slice()),
                join(y.as_slice())
            ));
        }
        line
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";")
}

/// Evaluates `margin(x, y)` on sampled pairs; the check fails when the worst margin exceeds `tol`.
pub(crate) fn sampled_pairs(
    id: impl Into<String>,
    sampler: &mut DomainSampler,
    pairs: usize,
    tol: f64,
    mut margin: impl FnMut(&Vector, &Vector) -> f64,
) -> Result<CheckReport> {
    if pairs == 0 {
        return Err(Error::Config("property check needs at least one sample pair".into()));
    }
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for _ in 0..pairs {
        let x = sampler.sample();
        let y = sampler.sample();
        let m = margin(&x, &y);
        if m.is_nan() || m > worst {
            worst = if m.is_nan() { f64::INFINITY } else { m };
            witness = Some((x, y));
        }
    }
    Ok(CheckReport {
        id: id.into(),
        passed: worst <= tol,
        worst_margin: worst,
        tol,
        samples: pairs,
        witness,
    })
}

fn class_margin(class: OperatorClass, x: &Vector, y: &Vector, tx: &Vector, ty: &Vector) -> f64 {
    let dt = tx - ty;
    let dx = x - y;
    match class {
        OperatorClass::Nonexpansive => dt.norm() - dx.norm(),
        OperatorClass::FirmlyNonexpansive => {
            let dg = &dx - &dt;
            dt.norm_sq() + dg.norm_sq() - dx.norm_sq()
        }
        OperatorClass::Contraction { alpha } => dt.norm() - alpha * dx.norm(),
        OperatorClass::Cocoercive { beta } => beta * dt.norm_sq() - dt.dot(&dx),
        OperatorClass::Unclassified => f64::NEG_INFINITY,
    }
}

/// Samples pairs from `sampler` and tests the defining inequality of `claim`.
pub fn check_class(
    op: &Operator,
    claim: OperatorClass,
    sampler: &mut DomainSampler,
    pairs: usize,
    tol: f64,
) -> Result<CheckReport> {
    claim.validate()?;
    if sampler.dim() != op.dim() {
        return Err(Error::Config("sampler dimension differs from the operator".into()));
    }
    sampled_pairs(
        format!("class:{}:{}", op.name(), claim.name()),
        sampler,
        pairs,
        tol,
        |x, y| class_margin(claim, x, y, &op.eval(x), &op.eval(y)),
    )
}

/// Both halves of the Baillon-Haddad equivalence, checked on the same pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct BaillonHaddadReport {
    pub lipschitz: CheckReport,
    pub cocoercive: CheckReport,
}

impl BaillonHaddadReport {
    pub fn passed(&self) -> bool {
        self.lipschitz.passed && self.cocoercive.passed
    }

    /// Exactly one direction holding points at a non-convex or mis-declared input.
    pub fn inconsistent(&self) -> bool {
        self.lipschitz.passed != self.cocoercive.passed
    }
}

pub fn check_baillon_haddad(
    gradient: &Operator,
    beta: f64,
    sampler: &mut DomainSampler,
    pairs: usize,
    tol: f64,
) -> Result<BaillonHaddadReport> {
    if !(beta > 0.0) {
        return Err(Error::Parameter(format!("beta = {beta} must be > 0")));
    }
    if pairs == 0 {
        return Err(Error::Config("property check needs at least one sample pair".into()));
    }
    let mut lip = Vec::with_capacity(pairs);
    let mut coco = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let x = sampler.sample();
        let y = sampler.sample();
        let dg = &gradient.eval(&x) - &gradient.eval(&y);
        let dx = &x - &y;
        lip.push((dg.norm() - dx.norm() / beta, x.clone(), y.clone()));
        coco.push((beta * dg.norm_sq() - dg.dot(&dx), x, y));
    }
    let summarize = |id: String, rows: Vec<(f64, Vector, Vector)>| {
        let (m, x, y) = rows
            .into_iter()
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .expect("pairs >= 1");
        CheckReport {
            id,
            passed: m <= tol,
            worst_margin: m,
            tol,
            samples: pairs,
            witness: Some((x, y)),
        }
    };
    Ok(BaillonHaddadReport {
        lipschitz: summarize(format!("baillon-haddad:{}:lipschitz", gradient.name()), lip),
        cocoercive: summarize(format!("baillon-haddad:{}:cocoercive", gradient.name()), coco),
    })
}

/// `||Tx - Ty||^2 + mu (2 beta - mu) ||Bx - By||^2 <= ||x - y||^2` for a forward-backward `T`.
pub fn check_forward_backward_inequality(
    op: &Operator,
    sampler: &mut DomainSampler,
    pairs: usize,
    tol: f64,
) -> Result<CheckReport> {
    let (prox, gradient, beta) = op
        .forward_backward_parts()
        .ok_or_else(|| Error::Input("operator is not a forward-backward composite".into()))?;
    let mu = prox.mu;
    sampled_pairs(
        format!("forward-backward-inequality:{}", op.name()),
        sampler,
        pairs,
        tol,
        |x, y| {
            let dt = &op.eval(x) - &op.eval(y);
            let db = &gradient.eval(x) - &gradient.eval(y);
            dt.norm_sq() + mu * (2.0 * beta - mu) * db.norm_sq() - (x - y).norm_sq()
        },
    )
}

/// Monotonicity of `G = I - T`: `<G x - G y, x - y> >= 0`.
pub fn check_residual_monotone(
    op: &Operator,
    sampler: &mut DomainSampler,
    pairs: usize,
    tol: f64,
) -> Result<CheckReport> {
    sampled_pairs(
        format!("residual-monotone:{}", op.name()),
        sampler,
        pairs,
        tol,
        |x, y| {
            let dg = &(x - &op.eval(x)) - &(y - &op.eval(y));
            -dg.dot(&(x - y))
        },
    )
}

/// `T(x)` stays in `target` for sampled `x`.
pub fn check_maps_into(
    op: &Operator,
    target: &ConvexSet,
    sampler: &mut DomainSampler,
    samples: usize,
    tol: f64,
) -> Result<CheckReport> {
    sampled_pairs(
        format!("maps-into:{}", op.name()),
        sampler,
        samples,
        tol,
        |x, _| target.distance_unchecked(&op.eval(x)),
    )
}

/// How the members of a family differ from its limit.
#[derive(Clone)]
pub enum FamilyKind {
    Constant,
    /// The indicator set of a projection or forward-backward limit is replaced by `sets.at(t)`.
    InflatedIndicator { sets: SetFamily },
    /// The cocoercive part of a forward-backward limit is shifted: `B_t = B + delta(t) * direction`.
    GradientDrift { direction: Vector, delta: Decay },
    /// `T_t = early` for `t < at`, the limit afterwards.
    Switch { early: Box<Operator>, at: f64 },
    /// `T_t = inner_{1 / eps(t)}`
    Warped {
        inner: Box<OperatorFamily>,
        eps: EpsilonSchedule,
    },
    Custom(FamilyFn),
}

impl fmt::Debug for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyKind::Constant => write!(f, "Constant"),
            FamilyKind::InflatedIndicator { sets } => {
                f.debug_struct("InflatedIndicator").field("sets", sets).finish()
            }
            FamilyKind::GradientDrift { direction, delta } => f
                .debug_struct("GradientDrift")
                .field("direction", direction)
                .field("delta", delta)
                .finish(),
            FamilyKind::Switch { early, at } => f
                .debug_struct("Switch")
                .field("early", early)
                .field("at", at)
                .finish(),
            FamilyKind::Warped { inner, eps } => f
                .debug_struct("Warped")
                .field("inner", inner)
                .field("eps", eps)
                .finish(),
            FamilyKind::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// A time-indexed family `(T_t)` of operators converging to `limit`.
#[derive(Clone, Debug)]
pub struct OperatorFamily {
    limit: Operator,
    kind: FamilyKind,
}

impl OperatorFamily {
    pub fn constant(limit: Operator) -> Self {
        OperatorFamily {
            limit,
            kind: FamilyKind::Constant,
        }
    }

    pub fn new(limit: Operator, kind: FamilyKind) -> Result<Self> {
        match &kind {
            FamilyKind::InflatedIndicator { sets } => {
                sets.validate()?;
                let base = match limit.map() {
                    OperatorMap::Projection(s) => s,
                    OperatorMap::ForwardBackward { prox, .. } => prox.indicator_set().ok_or_else(
                        || Error::Parameter("inflated family needs an indicator prox".into()),
                    )?,
                    _ => {
                        return Err(Error::Parameter(
                            "inflated family needs a projection or forward-backward limit".into(),
                        ))
                    }
                };
                if base.normalized() != sets.base.normalized() {
                    return Err(Error::Parameter(
                        "set family base differs from the limit's indicator set".into(),
                    ));
                }
                let (lo, hi) = sets.uniform_bound();
                let bound = ConvexSet::Box { lo, hi };
                if limit.domain().includes(&bound, MEMBERSHIP_TOL) == Some(false) {
                    return Err(Error::Parameter(
                        "operator domain must contain every member of the set family".into(),
                    ));
                }
            }
            FamilyKind::GradientDrift { direction, delta } => {
                delta.validate()?;
                direction.check_dim(limit.dim())?;
                if limit.forward_backward_parts().is_none() {
                    return Err(Error::Parameter(
                        "gradient drift needs a forward-backward limit".into(),
                    ));
                }
            }
            FamilyKind::Switch { early, .. } => {
                if early.dim() != limit.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: limit.dim(),
                        found: early.dim(),
                    });
                }
            }
            FamilyKind::Warped { inner, eps } => {
                eps.validate()?;
                if matches!(eps, EpsilonSchedule::Zero) {
                    return Err(Error::Parameter("time warp needs a positive schedule".into()));
                }
                if inner.dim() != limit.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: limit.dim(),
                        found: inner.dim(),
                    });
                }
            }
            _ => {}
        }
        Ok(OperatorFamily { limit, kind })
    }

    pub fn custom(
        limit: Operator,
        f: impl Fn(f64, &Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        OperatorFamily {
            limit,
            kind: FamilyKind::Custom(Arc::new(f)),
        }
    }

    pub fn limit(&self) -> &Operator {
        &self.limit
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.limit.dim()
    }

    pub fn domain(&self) -> &ConvexSet {
        self.limit.domain()
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, FamilyKind::Constant)
    }

    /// `T_t(x)` without constructing the member operator.
    pub fn eval_at(&self, t: f64, x: &Vector) -> Vector {
        match &self.kind {
            FamilyKind::Constant => self.limit.eval(x),
            FamilyKind::InflatedIndicator { sets } => {
                let member = sets.at(t);
                match self.limit.map() {
                    OperatorMap::ForwardBackward { prox, gradient, .. } => {
                        member.project_unchecked(&x.axpy(-prox.mu, &gradient.eval(x)))
                    }
                    _ => member.project_unchecked(x),
                }
            }
            FamilyKind::GradientDrift { direction, delta } => {
                let (prox, gradient, _) =
                    self.limit.forward_backward_parts().expect("validated");
                let g = gradient.eval(x).axpy(delta.value(t), direction);
                prox_unchecked(prox, &x.axpy(-prox.mu, &g))
            }
            FamilyKind::Switch { early, at } => {
                if t < *at {
                    early.eval(x)
                } else {
                    self.limit.eval(x)
                }
            }
            FamilyKind::Warped { inner, eps } => inner.eval_at(1.0 / eps.value(t), x),
            FamilyKind::Custom(f) => f(t, x),
        }
    }

    /// The member operator at time `t`.
    pub fn member(&self, t: f64) -> Operator {
        match &self.kind {
            FamilyKind::Constant => self.limit.clone(),
            FamilyKind::Switch { early, at } if t < *at => early.as_ref().clone(),
            FamilyKind::Switch { .. } => self.limit.clone(),
            _ => {
                let family = self.clone();
                Operator::new(
                    format!("{}@{t}", self.limit.name()),
                    self.limit.domain().clone(),
                    OperatorMap::Custom(Arc::new(move |x| family.eval_at(t, x))),
                    self.limit.class(),
                )
                .expect("limit operator is valid")
            }
        }
    }

    /// `w(t, x) = ||T_t(x) - T(x)||`
    pub fn drift(&self, t: f64, x: &Vector) -> f64 {
        self.eval_at(t, x).dist(&self.limit.eval(x))
    }

    /// `T_{1 / eps(t)}`
    pub fn rescaled(&self, eps: &EpsilonSchedule) -> Result<OperatorFamily> {
        if self.is_constant() {
            return Ok(self.clone());
        }
        OperatorFamily::new(
            self.limit.clone(),
            FamilyKind::Warped {
                inner: Box::new(self.clone()),
                eps: eps.clone(),
            },
        )
    }

    /// Envelope `kappa(t) (||z|| + c_phi)^p` bounding the prox drift, for inflated indicator families.
    pub fn prox_drift_envelope(&self) -> Option<ProxDriftEnvelope> {
        match &self.kind {
            FamilyKind::InflatedIndicator { sets } => Some(ProxDriftEnvelope::for_sets(sets)),
            _ => None,
        }
    }
}

/// `||proj_{C_t}(z) - proj_C(z)|| <= kappa(t) (||z|| + c_phi)^(1/2)` with
/// `kappa(t) = 2 Haus(C_t, C)^(1/2)` and `c_phi = ||z0|| + c / 2`, where `z0 in C`
/// and `c = sup_t Haus(C_t, C)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxDriftEnvelope {
    pub sets: SetFamily,
    pub c_phi: f64,
    pub p: f64,
}

impl ProxDriftEnvelope {
    pub fn for_sets(sets: &SetFamily) -> Self {
        let z0 = sets
            .base
            .project_unchecked(&Vector::zeros(sets.base.dim()));
        // Haus(C_t, C) is nonincreasing in t for catalog families
        let c = sets.hausdorff_to_base(0.0);
        ProxDriftEnvelope {
            sets: sets.clone(),
            c_phi: z0.norm() + 0.5 * c,
            p: 0.5,
        }
    }

    pub fn kappa(&self, t: f64) -> f64 {
        2.0 * self.sets.hausdorff_to_base(t).sqrt()
    }

    pub fn bound(&self, t: f64, z: &Vector) -> f64 {
        self.kappa(t) * (z.norm() + self.c_phi).powf(self.p)
    }
}

/// Samples `(t, z)` and checks the prox drift envelope.
pub fn check_prox_drift(
    envelope: &ProxDriftEnvelope,
    times: &[f64],
    sampler: &mut DomainSampler,
    samples: usize,
    tol: f64,
) -> Result<CheckReport> {
    let mut k = 0usize;
    sampled_pairs("prox-drift-envelope", sampler, samples, tol, |z, _| {
        let t = times[k % times.len()];
        k += 1;
        let moved = envelope.sets.at(t).project_unchecked(z);
        let fixed = envelope.sets.base.project_unchecked(z);
        moved.dist(&fixed) - envelope.bound(t, z)
    })
}

/// `||proj_{C_t} z - proj_C z||^2 <= 2 (d_{C_t}(z) + d_C(z)) Haus(C_t, C)` on sampled `(t, z)`.
pub fn check_moreau(
    sets: &SetFamily,
    times: &[f64],
    sampler: &mut DomainSampler,
    samples: usize,
    tol: f64,
) -> Result<CheckReport> {
    let mut k = 0usize;
    sampled_pairs("moreau-inequality", sampler, samples, tol, |z, _| {
        let t = times[k % times.len()];
        k += 1;
        let member = sets.at(t);
        let lhs = member
            .project_unchecked(z)
            .dist(&sets.base.project_unchecked(z))
            .powi(2);
        let rhs = 2.0
            * (member.distance_unchecked(z) + sets.base.distance_unchecked(z))
            * sets.hausdorff_to_base(t);
        lhs - rhs
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> Vector {
        Vector::new(c.to_vec()).unwrap()
    }

    fn line_projection() -> Operator {
        Operator::projection(ConvexSet::hyperplane(vec![0.0, 1.0], 0.0).unwrap()).unwrap()
    }

    #[test]
    fn prox_indicator_is_projection() {
        let spec = ProxSpec::new(
            ProxKind::Indicator {
                set: ConvexSet::cube(2, 0.0, 1.0).unwrap(),
            },
            1.0,
        )
        .unwrap();
        assert_eq!(prox(&spec, &v(&[2.0, -1.0])).unwrap(), v(&[1.0, 0.0]));
    }

    #[test]
    fn prox_l1_matches_grid_argmin() {
        // brute force: minimize |y| + (y - x)^2 / (2 mu) on a 1e-4 grid, per coordinate
        let mu = 0.5;
        let x = [1.0, -0.2];
        let oracle: Vec<f64> = x
            .iter()
            .map(|&xi| {
                (-40_000..=40_000)
                    .map(|k| k as f64 * 1e-4)
                    .min_by(|a, b| {
                        let f = |y: f64| y.abs() + (y - xi).powi(2) / (2.0 * mu);
                        f(*a).total_cmp(&f(*b))
                    })
                    .unwrap()
            })
            .collect();
        assert!((oracle[0] - 0.5).abs() < 1e-9 && oracle[1].abs() < 1e-9);
        let spec = ProxSpec::new(ProxKind::L1 { weight: 1.0 }, mu).unwrap();
        let p = prox(&spec, &v(&x)).unwrap();
        assert!(p.dist(&v(&oracle)) < 1e-4);
    }

    #[test]
    fn prox_quadratic_stationarity() {
        // y + (y - x) / mu = 0  =>  y = x / (1 + mu) = 1 for x = 2, mu = 1
        let spec = ProxSpec::new(
            ProxKind::Quadratic {
                center: v(&[0.0]),
                weight: 1.0,
            },
            1.0,
        )
        .unwrap();
        assert!((prox(&spec, &v(&[2.0])).unwrap()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn prox_separable_blocks() {
        let spec = ProxSpec::new(
            ProxKind::Separable {
                blocks: vec![
                    ProxBlock {
                        dims: 1,
                        term: ProxKind::L1 { weight: 1.0 },
                    },
                    ProxBlock {
                        dims: 2,
                        term: ProxKind::Indicator {
                            set: ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap(),
                        },
                    },
                ],
            },
            0.5,
        )
        .unwrap();
        let p = prox(&spec, &v(&[2.0, 0.0, 3.0])).unwrap();
        assert_eq!(p, v(&[1.5, 0.0, 1.0]));
        assert!(ProxSpec::new(ProxKind::L1 { weight: 1.0 }, 0.0).is_err());
    }

    #[test]
    fn residual_examples() {
        assert_eq!(
            residual(&Operator::identity(2).unwrap(), &v(&[3.0, -1.0])).unwrap(),
            v(&[0.0, 0.0])
        );
        assert_eq!(
            residual(&line_projection(), &v(&[3.0, 4.0])).unwrap(),
            v(&[0.0, 4.0])
        );
        assert_eq!(
            residual(&Operator::constant(v(&[2.0, 0.0])).unwrap(), &v(&[5.0, 1.0])).unwrap(),
            v(&[3.0, 1.0])
        );
    }

    #[test]
    fn residual_outside_domain() {
        let op = line_projection()
            .with_domain(ConvexSet::cube(2, 0.0, 1.0).unwrap())
            .unwrap();
        assert!(matches!(residual(&op, &v(&[2.0, 0.0])), Err(Error::Domain(_))));
    }

    fn b_minus(b: &[f64]) -> Operator {
        Operator::quadratic_gradient(&vec![1.0; b.len()], v(b)).unwrap()
    }

    #[test]
    fn forward_backward_identity_case() {
        let zero = Operator::affine(
            Matrix::diagonal(&[0.0, 0.0]),
            v(&[0.0, 0.0]),
            OperatorClass::Cocoercive { beta: 1.0 },
        )
        .unwrap();
        let phi = ProxSpec::indicator(ConvexSet::whole_space(2).unwrap());
        let t = make_forward_backward(&phi, &zero, 1.0).unwrap();
        assert_eq!(t.eval(&v(&[3.0, -7.0])), v(&[3.0, -7.0]));
        assert_eq!(t.class(), OperatorClass::Nonexpansive);
    }

    #[test]
    fn forward_backward_lasso_fixed_point() {
        // 0 in sign(x) + x - b is solved by soft-threshold(b, 1) = (1, 0)
        let b = [2.0, 0.5];
        let z = v(&[1.0, 0.0]);
        // independent subgradient check of the optimality condition
        let g = [z[0] - b[0], z[1] - b[1]];
        assert!((g[0] + 1.0).abs() < 1e-15); // z1 > 0 needs subgradient +1
        assert!(g[1].abs() <= 1.0); // z2 = 0 needs |g| <= 1
        let phi = ProxSpec::new(ProxKind::L1 { weight: 1.0 }, 1.0).unwrap();
        let t = make_forward_backward(&phi, &b_minus(&b), 1.0).unwrap();
        assert!(t.eval(&z).dist(&z) < 1e-12);
    }

    #[test]
    fn forward_backward_box_fixed_point() {
        let b = v(&[2.0, 0.5]);
        let unit = ConvexSet::cube(2, 0.0, 1.0).unwrap();
        let expected = unit.project(&b).unwrap();
        assert_eq!(expected, v(&[1.0, 0.5]));
        let t = make_forward_backward(&ProxSpec::indicator(unit), &b_minus(b.as_slice()), 1.0)
            .unwrap();
        assert!(t.eval(&expected).dist(&expected) < 1e-12);
    }

    #[test]
    fn forward_backward_rejects_bad_step() {
        let phi = ProxSpec::new(ProxKind::L1 { weight: 1.0 }, 1.0).unwrap();
        assert!(matches!(
            make_forward_backward(&phi, &b_minus(&[0.0, 0.0]), 2.0),
            Err(Error::Parameter(_))
        ));
        assert!(make_forward_backward(&phi, &Operator::identity(2).unwrap(), 1.0).is_err());
    }

    #[test]
    fn projection_is_firmly_nonexpansive() {
        let op = Operator::projection(ConvexSet::ball(vec![0.0, 1.0], 1.0).unwrap()).unwrap();
        let mut s = DomainSampler::new(&ConvexSet::whole_space(2).unwrap(), 1);
        let r = check_class(&op, OperatorClass::FirmlyNonexpansive, &mut s, 1000, 1e-10).unwrap();
        assert!(r.passed, "{r}");
    }

    #[test]
    fn doubling_is_not_nonexpansive() {
        let op = Operator::scaling(2, 2.0).unwrap();
        let mut s = DomainSampler::new(&ConvexSet::whole_space(2).unwrap(), 1);
        let r = check_class(&op, OperatorClass::Nonexpansive, &mut s, 100, 1e-9).unwrap();
        assert!(!r.passed);
        let (x, y) = r.witness.clone().unwrap();
        // ||2x - 2y|| - ||x - y|| = ||x - y||
        assert!((r.worst_margin - x.dist(&y)).abs() < 1e-9);
        assert!(r.to_line().contains("status=fail"));
    }

    #[test]
    fn gradient_is_cocoercive() {
        let op = b_minus(&[2.0, 0.5]);
        let mut s = DomainSampler::new(&ConvexSet::whole_space(2).unwrap(), 2);
        let r = check_class(&op, OperatorClass::Cocoercive { beta: 1.0 }, &mut s, 500, 1e-9)
            .unwrap();
        assert!(r.passed);
    }

    #[test]
    fn zero_pairs_is_a_config_error() {
        let mut s = DomainSampler::new(&ConvexSet::whole_space(2).unwrap(), 2);
        assert!(matches!(
            check_class(&line_projection(), OperatorClass::Nonexpansive, &mut s, 0, 1e-9),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn baillon_haddad_examples() {
        let mut s = DomainSampler::new(&ConvexSet::whole_space(2).unwrap(), 3);
        let id = Operator::identity(2).unwrap();
        assert!(check_baillon_haddad(&id, 1.0, &mut s, 300, 1e-9).unwrap().passed());

        // diag(1, 4): largest eigenvalue 4 gives Lipschitz constant 4, beta = 1/4
        let quad = Operator::quadratic_gradient(&[1.0, 4.0], v(&[0.0, 0.0])).unwrap();
        assert_eq!(quad.class(), OperatorClass::Cocoercive { beta: 0.25 });
        assert!(check_baillon_haddad(&quad, 0.25, &mut s, 300, 1e-9).unwrap().passed());

        let flip = Operator::affine(
            Matrix::diagonal(&[-1.0, 1.0]),
            v(&[0.0, 0.0]),
            OperatorClass::Unclassified,
        )
        .unwrap();
        let r = check_baillon_haddad(&flip, 1.0, &mut s, 300, 1e-9).unwrap();
        assert!(r.lipschitz.passed && !r.cocoercive.passed && r.inconsistent());
        assert!(r.cocoercive.witness.is_some());
    }

    #[test]
    fn moreau_and_drift_on_inflated_box() {
        let sets = SetFamily::new(
            ConvexSet::cube(2, 0.0, 1.0).unwrap(),
            crate::spaces::Perturbation::InflateBox,
            Decay::Power {
                scale: 1.0,
                exponent: 1.5,
            },
        )
        .unwrap();
        let times = [0.0, 0.5, 2.0, 10.0, 1e3];
        let mut s = DomainSampler::new(&ConvexSet::whole_space(2).unwrap(), 4);
        assert!(check_moreau(&sets, &times, &mut s, 500, 1e-9).unwrap().passed);
        let env = ProxDriftEnvelope::for_sets(&sets);
        assert!(check_prox_drift(&env, &times, &mut s, 500, 1e-9).unwrap().passed);
    }

    #[test]
    fn family_drift_and_switch() {
        let lim = line_projection();
        let fam = OperatorFamily::new(
            lim.clone(),
            FamilyKind::Switch {
                early: Box::new(Operator::identity(2).unwrap()),
                at: 5.0,
            },
        )
        .unwrap();
        let x = v(&[1.0, 2.0]);
        assert_eq!(fam.drift(1.0, &x), 2.0);
        assert_eq!(fam.drift(5.0, &x), 0.0);
        assert_eq!(fam.member(1.0).eval(&x), x);
    }

    #[test]
    fn gradient_drift_family() {
        let phi = ProxSpec::new(ProxKind::L1 { weight: 1.0 }, 1.0).unwrap();
        let t = make_forward_backward(&phi, &b_minus(&[2.0, 0.5]), 1.0).unwrap();
        let fam = OperatorFamily::new(
            t,
            FamilyKind::GradientDrift {
                direction: v(&[1.0, 0.0]),
                delta: Decay::Exponential {
                    scale: 1.0,
                    rate: 1.0,
                },
            },
        )
        .unwrap();
        // B_t x = x - b + e^{-t} (1, 0); T_t x = soft(b - e^{-t} e1, 1)
        let x = v(&[0.3, 0.3]);
        let e = (-1.0f64).exp();
        assert!((fam.drift(1.0, &x) - e).abs() < 1e-15);
        let member = fam.member(1.0);
        assert!(member.eval(&x).dist(&v(&[1.0 - e, 0.0])) < 1e-15);
    }
}
