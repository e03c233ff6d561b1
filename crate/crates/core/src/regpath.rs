//! The regularized equation `eps x + G(x) = eps y`, its solution map
//! `F(eps, y)`, and the regularization path `eps -> F(eps, y)`.

use std::fmt;

use crate::error::{Error, Result};
use crate::operators::{sampled_pairs, CheckReport, Operator};
use crate::output::{write_csv, CsvTable};
use crate::sampling::DomainSampler;
use crate::spaces::{Vector, MEMBERSHIP_TOL};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iter: 100_000_000,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolveOptions {
            tol,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Parameter(format!("tol = {} must be > 0", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Parameter("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// `x = F(eps, y)` together with how it was obtained.
#[derive(Clone, Debug, PartialEq)]
pub struct RegPoint {
    pub epsilon: f64,
    pub anchor: Vector,
    pub point: Vector,
    /// `||eps * point + G(point) - eps * anchor||`
    pub residual_norm: f64,
    pub iterations: usize,
}

impl RegPoint {
    pub fn dist_to_anchor(&self) -> f64 {
        self.point.dist(&self.anchor)
    }
}

/// Iterations predicted for reducing an initial error by `tol` at rate `1 / (1 + eps)`.
pub fn expected_iterations(epsilon: f64, tol: f64) -> f64 {
    tol.ln() / (1.0 / (1.0 + epsilon)).ln()
}

/// Solves `eps x + x - T(x) = eps y` by the contraction `x <- eta y + (1 - eta) T(x)`,
/// `eta = eps / (1 + eps)`, started from `warm_start` (default `y`).
///
/// The equation residual at an iterate is bounded by the last step, and the error
/// by residual / eps, so the iteration stops once the step is below `tol * min(eps, 1)`
/// (or at round-off level, whichever is larger).
pub fn solve_reg_point(
    op: &Operator,
    epsilon: f64,
    y: &Vector,
    opts: &SolveOptions,
    warm_start: Option<&Vector>,
) -> Result<RegPoint> {
    opts.validate()?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Parameter(format!("epsilon = {epsilon} must be > 0")));
    }
    y.check_dim(op.dim())?;
    if !op.domain().contains(y, MEMBERSHIP_TOL) {
        return Err(Error::Domain(format!(
            "anchor is at distance {:e} from the domain",
            op.domain().distance_unchecked(y)
        )));
    }
    let mut x = match warm_start {
        Some(w) => {
            w.check_dim(op.dim())?;
            op.domain().project_unchecked(w)
        }
        None => y.clone(),
    };
    let eta = epsilon / (1.0 + epsilon);
    let target = opts.tol * epsilon.min(1.0);
    let mut tx = op.eval(&x);
    for k in 1..=opts.max_iter {
        let next = y.zip_map(&tx, |a, b| eta * a + (1.0 - eta) * b);
        let t_next = op.eval(&next);
        let step = next.dist(&x);
        let floor = 16.0 * f64::EPSILON * (1.0 + next.norm() + y.norm());
        x = next;
        tx = t_next;
        if !x.is_finite() {
            break;
        }
        if step <= target.max(floor) {
            return Ok(RegPoint {
                epsilon,
                anchor: y.clone(),
                residual_norm: equation_residual(epsilon, y, &x, &tx),
                point: x,
                iterations: k,
            });
        }
    }
    let residual = equation_residual(epsilon, y, &x, &tx);
    Err(Error::NonConvergence {
        last: x,
        residual,
        iterations: opts.max_iter,
        expected_iterations: expected_iterations(epsilon, opts.tol),
    })
}

fn equation_residual(epsilon: f64, y: &Vector, x: &Vector, tx: &Vector) -> f64 {
    x.as_slice()
        .iter()
        .zip(tx.as_slice())
        .zip(y.as_slice())
        .map(|((&xi, &ti), &yi)| (epsilon * (xi - yi) + xi - ti).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `eps0 * rho^k` for `k = 0..=steps`.
pub fn geometric_grid(eps0: f64, rho: f64, steps: usize) -> Result<Vec<f64>> {
    if !(eps0 > 0.0 && eps0.is_finite()) {
        return Err(Error::Parameter(format!("eps0 = {eps0} must be > 0")));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Parameter(format!("rho = {rho} must lie in (0, 1)")));
    }
    Ok((0..=steps).map(|k| eps0 * rho.powi(k as i32)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathOptions {
    pub solve: SolveOptions,
    /// Stop before solving at any `eps < eps_min`.
    pub eps_min: f64,
    /// Stop once consecutive points differ by less than this.
    pub path_tol: Option<f64>,
    /// Flag divergence once `||F(eps, y)||` exceeds this; default `1e6 (1 + ||y||)`.
    pub divergence_radius: Option<f64>,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions {
            solve: SolveOptions::default(),
            eps_min: 1e-8,
            path_tol: None,
            divergence_radius: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathTermination {
    PathTolerance,
    EpsilonFloor,
    Exhausted,
    Diverged,
}

impl fmt::Display for PathTermination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PathTermination::PathTolerance => "path-tolerance",
            PathTermination::EpsilonFloor => "epsilon-floor",
            PathTermination::Exhausted => "exhausted",
            PathTermination::Diverged => "diverged",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathResult {
    pub points: Vec<RegPoint>,
    pub limit_estimate: Vector,
    pub diverged: bool,
    pub termination: PathTermination,
}

impl PathResult {
    pub fn epsilons(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.epsilon).collect()
    }

    /// Largest decrease of `||y - F(eps, y)||` as `eps` decreases (non-positive when monotone).
    pub fn anchor_distance_violation(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[0].dist_to_anchor() - w[1].dist_to_anchor())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest excess of consecutive steps over the path Lipschitz bound.
    pub fn continuity_violation(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| {
                let (a, b) = (&w[0], &w[1]);
                let bound = (a.epsilon - b.epsilon).abs() / a.epsilon.min(b.epsilon)
                    * b.dist_to_anchor();
                a.point.dist(&b.point) - bound
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// CSV with columns `k, epsilon, x1..xn, residual_norm, iterations, dist_to_anchor`.
    pub fn to_csv(&self) -> Result<String> {
        let n = self.limit_estimate.dim();
        let mut header = vec!["k".to_string(), "epsilon".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend(["residual_norm", "iterations", "dist_to_anchor"].map(String::from));
        let mut table = CsvTable::new(header);
        for (k, p) in self.points.iter().enumerate() {
            let mut row = vec![k.to_string(), p.epsilon.to_string()];
            row.extend(p.point.as_slice().iter().map(|c| c.to_string()));
            row.push(p.residual_norm.to_string());
            row.push(p.iterations.to_string());
            row.push(p.dist_to_anchor().to_string());
            table.push(row);
        }
        write_csv(&table)
    }
}

/// Follows `F(eps_k, y)` along a strictly decreasing grid, warm-starting each solve.
pub fn follow_path(
    op: &Operator,
    y: &Vector,
    epsilons: &[f64],
    opts: &PathOptions,
) -> Result<PathResult> {
    if epsilons.is_empty() {
        return Err(Error::Parameter("empty epsilon grid".into()));
    }
    if epsilons.iter().any(|&e| !(e > 0.0 && e.is_finite()))
        || epsilons.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::Parameter(
            "epsilon grid must be positive and strictly decreasing".into(),
        ));
    }
    let radius = opts
        .divergence_radius
        .unwrap_or(1e6 * (1.0 + y.norm()));
    if !(radius > 0.0) {
        return Err(Error::Parameter("divergence radius must be > 0".into()));
    }
    let mut points: Vec<RegPoint> = Vec::new();
    let mut termination = PathTermination::Exhausted;
    for (index, &eps) in epsilons.iter().enumerate() {
        if eps < opts.eps_min {
            termination = PathTermination::EpsilonFloor;
            break;
        }
        let warm = points.last().map(|p| &p.point);
        let p = solve_reg_point(op, eps, y, &opts.solve, warm).map_err(|e| Error::PathStep {
            index,
            source: Box::new(e),
        })?;
        let moved = points.last().map(|q| q.point.dist(&p.point));
        let escaped = p.point.norm() > radius;
        points.push(p);
        if escaped {
            termination = PathTermination::Diverged;
            break;
        }
        if let (Some(tol), Some(d)) = (opts.path_tol, moved) {
            if d < tol {
                termination = PathTermination::PathTolerance;
                break;
            }
        }
    }
    if points.is_empty() {
        return Err(Error::Parameter(format!(
            "every epsilon lies below eps_min = {}",
            opts.eps_min
        )));
    }
    Ok(PathResult {
        limit_estimate: points.last().expect("nonempty").point.clone(),
        diverged: termination == PathTermination::Diverged,
        termination,
        points,
    })
}

/// `||F(lambda, y) - F(mu, (lambda/mu) y + (1 - lambda/mu) F(lambda, y))||` for `mu > lambda > 0`.
pub fn check_resolvent_identity(
    op: &Operator,
    lambda: f64,
    mu: f64,
    y: &Vector,
    opts: &SolveOptions,
) -> Result<f64> {
    if !(lambda > 0.0 && mu > lambda && mu.is_finite()) {
        return Err(Error::Parameter(format!(
            "need mu > lambda > 0, got lambda = {lambda}, mu = {mu}"
        )));
    }
    let lhs = solve_reg_point(op, lambda, y, opts, None)?.point;
    let r = lambda / mu;
    let anchor = y.lerp(1.0 - r, &lhs);
    let rhs = solve_reg_point(op, mu, &anchor, opts, Some(&lhs))?.point;
    Ok(lhs.dist(&rhs))
}

/// `||F(eps2, x) - F(eps1, x)|| <= |eps2 - eps1| / min(eps1, eps2) * ||x - F(min, x)||`,
/// accepted with slack `10 tol`.
pub fn check_path_lipschitz(
    op: &Operator,
    x: &Vector,
    eps1: f64,
    eps2: f64,
    opts: &SolveOptions,
) -> Result<CheckReport> {
    let f1 = solve_reg_point(op, eps1, x, opts, None)?;
    let f2 = solve_reg_point(op, eps2, x, opts, Some(&f1.point))?;
    let low = if eps1 <= eps2 { &f1 } else { &f2 };
    let lhs = f1.point.dist(&f2.point);
    let rhs = (eps2 - eps1).abs() / eps1.min(eps2) * low.dist_to_anchor();
    Ok(single_report("path-lipschitz", lhs - rhs, 10.0 * opts.tol))
}

/// `||y - F(eps, y)||^2 + ||F(eps, y) - x*||^2 <= ||y - x*||^2` for a fixed point `x*`.
pub fn check_fejer_triple(
    op: &Operator,
    epsilon: f64,
    y: &Vector,
    fixed_point: &Vector,
    opts: &SolveOptions,
) -> Result<CheckReport> {
    fixed_point.check_dim(op.dim())?;
    let defect = fixed_point.dist(&op.eval(fixed_point));
    if defect > opts.tol {
        return Err(Error::Input(format!(
            "claimed fixed point has residual {defect:e} > {:e}",
            opts.tol
        )));
    }
    let f = solve_reg_point(op, epsilon, y, opts, None)?.point;
    let lhs = y.dist(&f).powi(2) + f.dist(fixed_point).powi(2);
    let rhs = y.dist(fixed_point).powi(2);
    Ok(single_report("fejer-triple", lhs - rhs, 10.0 * opts.tol))
}

/// Firm nonexpansiveness of `F(eps, .)` on anchor pairs drawn from `sampler`.
pub fn check_reg_firmly_nonexpansive(
    op: &Operator,
    epsilon: f64,
    sampler: &mut DomainSampler,
    pairs: usize,
    opts: &SolveOptions,
) -> Result<CheckReport> {
    let mut failure = None;
    let report = sampled_pairs(
        format!("reg-firmly-nonexpansive:eps={epsilon}"),
        sampler,
        pairs,
        10.0 * opts.tol,
        |a, b| {
            let solved = solve_reg_point(op, epsilon, a, opts, None)
                .and_then(|fa| Ok((fa, solve_reg_point(op, epsilon, b, opts, None)?)));
            match solved {
                Ok((fa, fb)) => {
                    let df = &fa.point - &fb.point;
                    let dg = &(a - &fa.point) - &(b - &fb.point);
                    df.norm_sq() + dg.norm_sq() - (a - b).norm_sq()
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

fn single_report(id: &str, margin: f64, tol: f64) -> CheckReport {
    CheckReport {
        id: id.to_string(),
        passed: margin <= tol,
        worst_margin: margin,
        tol,
        samples: 1,
        witness: None,
    }
}
