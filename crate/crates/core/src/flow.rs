//! The plain flow `-x' = x - T x` and the Tikhonov flow
//! `-x' = p - T_t p + eps(t) (p - y(t))`, `p = proj_D(x)`, with integrators
//! and per-sample diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{Operator, OperatorFamily};
use crate::output::{opt_cell, write_csv, CsvTable};
use crate::regpath::{solve_reg_point, SolveOptions};
use crate::schedule::{AnchorPath, EpsilonSchedule, Schedule};
use crate::spaces::{ConvexSet, Vector};

/// Right-hand side `x' = f(t, x)`.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, x: &Vector) -> Vector;
    /// Lipschitz estimate of `f(t, .)` near `t`, used to cap fixed steps.
    fn lipschitz_hint(&self, _t: f64) -> f64 {
        2.0
    }
    /// Set whose invariance is monitored on every step.
    fn domain(&self) -> Option<&ConvexSet> {
        None
    }
}

/// `-(p - T p)` with `p = proj_D(x)`.
pub fn field_plain(op: &Operator, domain: &ConvexSet, _t: f64, x: &Vector) -> Vector {
    let p = domain.project_unchecked(x);
    &op.eval(&p) - &p
}

/// `-(p - T_t p + eps(t) (p - y(t)))` with `p = proj_D(x)`.
pub fn field_tikhonov(
    family: &OperatorFamily,
    domain: &ConvexSet,
    sched: &Schedule,
    t: f64,
    x: &Vector,
) -> Vector {
    let p = domain.project_unchecked(x);
    let tp = family.eval_at(t, &p);
    let eps = sched.eps(t);
    let y = sched.y(t);
    Vector::raw(
        (0..p.dim())
            .map(|i| -(p[i] - tp[i] + eps * (p[i] - y[i])))
            .collect(),
    )
}

#[derive(Clone, Debug)]
pub struct PlainField {
    pub op: Operator,
    pub domain: ConvexSet,
}

impl VectorField for PlainField {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn eval(&self, t: f64, x: &Vector) -> Vector {
        field_plain(&self.op, &self.domain, t, x)
    }

    fn domain(&self) -> Option<&ConvexSet> {
        Some(&self.domain)
    }
}

#[derive(Clone, Debug)]
pub struct TikhonovField {
    pub family: OperatorFamily,
    pub domain: ConvexSet,
    pub schedule: Schedule,
}

impl VectorField for TikhonovField {
    fn dim(&self) -> usize {
        self.family.dim()
    }

    fn eval(&self, t: f64, x: &Vector) -> Vector {
        field_tikhonov(&self.family, &self.domain, &self.schedule, t, x)
    }

    fn lipschitz_hint(&self, t: f64) -> f64 {
        2.0 + self.schedule.eps(t)
    }

    fn domain(&self) -> Option<&ConvexSet> {
        Some(&self.domain)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    /// Classical fourth-order Runge-Kutta with a fixed step.
    Rk4 {
        #[serde(default = "default_step")]
        step: f64,
    },
    Euler {
        #[serde(default = "default_step")]
        step: f64,
    },
    /// Dormand-Prince 5(4) with error control.
    Adaptive {
        #[serde(default = "default_rtol")]
        rtol: f64,
        #[serde(default = "default_atol")]
        atol: f64,
        #[serde(default = "default_step")]
        initial_step: f64,
        #[serde(default = "default_max_steps")]
        max_steps: usize,
    },
}

fn default_step() -> f64 {
    1e-3
}
fn default_rtol() -> f64 {
    1e-9
}
fn default_atol() -> f64 {
    1e-12
}
fn default_max_steps() -> usize {
    50_000_000
}

impl Default for Method {
    fn default() -> Self {
        Method::Rk4 {
            step: default_step(),
        }
    }
}

impl Method {
    pub fn adaptive(rtol: f64, atol: f64) -> Self {
        Method::Adaptive {
            rtol,
            atol,
            initial_step: default_step(),
            max_steps: default_max_steps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} = {v} must be > 0")))
            }
        };
        match *self {
            Method::Rk4 { step } | Method::Euler { step } => positive("step", step),
            Method::Adaptive {
                rtol,
                atol,
                initial_step,
                max_steps,
            } => {
                positive("rtol", rtol)?;
                positive("atol", atol)?;
                positive("initial_step", initial_step)?;
                if max_steps == 0 {
                    return Err(Error::Parameter("max_steps must be >= 1".into()));
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Rk4 { .. } => "rk4",
            Method::Euler { .. } => "euler",
            Method::Adaptive { .. } => "adaptive",
        }
    }
}

/// Output times of an integration; every grid starts at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SampleGrid {
    /// `count + 1` equally spaced times in `[0, t_end]`.
    Uniform { count: usize },
    /// 0 followed by `count` log-spaced times from `first` to `t_end`.
    Log { count: usize, first: f64 },
    Explicit { times: Vec<f64> },
}

impl SampleGrid {
    pub fn times(&self, t_end: f64) -> Result<Vec<f64>> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::Parameter(format!("t_end = {t_end} must be > 0")));
        }
        let times = match self {
            SampleGrid::Uniform { count } => {
                if *count == 0 {
                    return Err(Error::Parameter("uniform grid needs count >= 1".into()));
                }
                (0..=*count)
                    .map(|k| t_end * k as f64 / *count as f64)
                    .collect()
            }
            SampleGrid::Log { count, first } => {
                if *count < 2 || !(*first > 0.0 && *first < t_end) {
                    return Err(Error::Parameter(
                        "log grid needs count >= 2 and 0 < first < t_end".into(),
                    ));
                }
                let (a, b) = (first.ln(), t_end.ln());
                let mut ts = vec![0.0];
                ts.extend((0..*count).map(|k| {
                    if k + 1 == *count {
                        t_end
                    } else {
                        (a + (b - a) * k as f64 / (*count - 1) as f64).exp()
                    }
                }));
                ts
            }
            SampleGrid::Explicit { times } => {
                let mut ts = times.clone();
                if ts.first() != Some(&0.0) {
                    ts.insert(0, 0.0);
                }
                ts
            }
        };
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Parameter("sample times must be strictly increasing".into()));
        }
        Ok(times)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegrateOptions {
    pub method: Method,
    pub t_end: f64,
    pub grid: SampleGrid,
}

/// States on the sample grid plus step-level bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    /// Largest distance to the field's domain over every accepted step.
    pub max_step_violation: f64,
    pub steps: usize,
    /// Fixed step actually used after capping, if fixed-step.
    pub fixed_step: Option<f64>,
}

/// Integrates `field` from `x0` at `t = 0` and samples the state on the grid.
pub fn integrate(field: &dyn VectorField, x0: &Vector, opts: &IntegrateOptions) -> Result<Solution> {
    opts.method.validate()?;
    x0.check_dim(field.dim())?;
    let times = opts.grid.times(opts.t_end)?;
    let mut states = Vec::with_capacity(times.len());
    states.push(x0.clone());
    let mut x = x0.clone();
    let mut violation = field.domain().map_or(0.0, |d| d.distance_unchecked(x0));
    let mut track = |x: &Vector| {
        if let Some(d) = field.domain() {
            violation = f64::max(violation, d.distance_unchecked(x));
        }
    };
    let mut steps = 0usize;
    let mut fixed_step = None;
    match opts.method {
        Method::Rk4 { step } | Method::Euler { step } => {
            let h_max = step.min(0.1 / field.lipschitz_hint(0.0));
            fixed_step = Some(h_max);
            let rk4 = matches!(opts.method, Method::Rk4 { .. });
            for w in times.windows(2) {
                let n = ((w[1] - w[0]) / h_max).ceil().max(1.0) as usize;
                let h = (w[1] - w[0]) / n as f64;
                for i in 0..n {
                    let t = w[0] + i as f64 * h;
                    x = if rk4 {
                        rk4_step(field, t, &x, h)
                    } else {
                        x.axpy(h, &field.eval(t, &x))
                    };
                    if !x.is_finite() {
                        return Err(Error::Divergence { t: t + h });
                    }
                    track(&x);
                    steps += 1;
                }
                states.push(x.clone());
            }
        }
        Method::Adaptive {
            rtol,
            atol,
            initial_step,
            max_steps,
        } => {
            let mut h = initial_step;
            let mut t = 0.0;
            let mut k1 = field.eval(t, &x);
            for &target in &times[1..] {
                while t < target {
                    if steps >= max_steps {
                        return Err(Error::StepUnderflow { t, step: h });
                    }
                    let last = h >= target - t;
                    let h_try = if last { target - t } else { h };
                    let (x_new, k7, err) = dp45_step(field, t, &x, &k1, h_try, rtol, atol);
                    if !x_new.is_finite() {
                        return Err(Error::Divergence { t: t + h_try });
                    }
                    if err <= 1.0 {
                        t = if last { target } else { t + h_try };
                        x = x_new;
                        k1 = k7;
                        track(&x);
                        steps += 1;
                    }
                    let factor = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    if !(err <= 1.0 && last) {
                        h = h_try * factor;
                    }
                    if h < 1e-13 * t.abs().max(1.0) {
                        return Err(Error::StepUnderflow { t, step: h });
                    }
                }
                states.push(x.clone());
            }
        }
    }
    Ok(Solution {
        times,
        states,
        max_step_violation: violation,
        steps,
        fixed_step,
    })
}

fn rk4_step(field: &dyn VectorField, t: f64, x: &Vector, h: f64) -> Vector {
    let k1 = field.eval(t, x);
    let k2 = field.eval(t + 0.5 * h, &x.axpy(0.5 * h, &k1));
    let k3 = field.eval(t + 0.5 * h, &x.axpy(0.5 * h, &k2));
    let k4 = field.eval(t + h, &x.axpy(h, &k3));
    Vector::raw(
        (0..x.dim())
            .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect(),
    )
}

const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// fifth-order weights minus embedded fourth-order weights
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// One Dormand-Prince step; returns the new state, the derivative there, and the scaled error.
fn dp45_step(
    field: &dyn VectorField,
    t: f64,
    x: &Vector,
    k1: &Vector,
    h: f64,
    rtol: f64,
    atol: f64,
) -> (Vector, Vector, f64) {
    let n = x.dim();
    let mut k: Vec<Vector> = Vec::with_capacity(7);
    k.push(k1.clone());
    for s in 1..7 {
        let stage = Vector::raw(
            (0..n)
                .map(|i| x[i] + h * (0..s).map(|j| DP_A[s][j] * k[j][i]).sum::<f64>())
                .collect(),
        );
        if s == 6 {
            // the last stage point is the fifth-order solution
            let k7 = field.eval(t + h, &stage);
            k.push(k7);
            let err = (0..n)
                .map(|i| {
                    let e = h * (0..7).map(|j| DP_E[j] * k[j][i]).sum::<f64>();
                    let scale = atol + rtol * x[i].abs().max(stage[i].abs());
                    (e / scale).abs()
                })
                .fold(0.0, f64::max);
            let k7 = k.pop().expect("seven stages");
            return (stage, k7, err);
        }
        k.push(field.eval(t + DP_C[s] * h, &stage));
    }
    unreachable!("loop returns at the last stage")
}

/// The system being integrated.
#[derive(Clone, Debug)]
pub enum FlowSystem {
    Plain(PlainField),
    Tikhonov(TikhonovField),
}

impl FlowSystem {
    pub fn plain(op: Operator, domain: ConvexSet) -> Result<Self> {
        if domain.dim() != op.dim() {
            return Err(Error::DimensionMismatch {
                expected: op.dim(),
                found: domain.dim(),
            });
        }
        Ok(FlowSystem::Plain(PlainField { op, domain }))
    }

    pub fn tikhonov(family: OperatorFamily, domain: ConvexSet, schedule: Schedule) -> Result<Self> {
        schedule.validate()?;
        for d in [domain.dim(), schedule.anchor.dim()] {
            if d != family.dim() {
                return Err(Error::DimensionMismatch {
                    expected: family.dim(),
                    found: d,
                });
            }
        }
        Ok(FlowSystem::Tikhonov(TikhonovField {
            family,
            domain,
            schedule,
        }))
    }

    pub fn field(&self) -> &dyn VectorField {
        match self {
            FlowSystem::Plain(f) => f,
            FlowSystem::Tikhonov(f) => f,
        }
    }

    pub fn domain(&self) -> &ConvexSet {
        match self {
            FlowSystem::Plain(f) => &f.domain,
            FlowSystem::Tikhonov(f) => &f.domain,
        }
    }

    pub fn limit(&self) -> &Operator {
        match self {
            FlowSystem::Plain(f) => &f.op,
            FlowSystem::Tikhonov(f) => f.family.limit(),
        }
    }

    fn operator_at(&self, t: f64, x: &Vector) -> Vector {
        match self {
            FlowSystem::Plain(f) => f.op.eval(x),
            FlowSystem::Tikhonov(f) => f.family.eval_at(t, x),
        }
    }
}

/// Inputs to the diagnostics that are not part of the flow itself.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticOptions {
    /// `d_{Fix T}(y)` for the limit anchor; enables the psi monitor.
    pub fix_distance: Option<f64>,
    pub solve: SolveOptions,
}

impl Default for DiagnosticOptions {
    fn default() -> Self {
        DiagnosticOptions {
            fix_distance: None,
            solve: SolveOptions::with_tol(1e-10),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleDiagnostics {
    /// `||x - T_t x||`
    pub residual_t: f64,
    /// `||x - T x||`
    pub residual_limit: f64,
    /// `d_D(x)`
    pub set_violation: f64,
    /// `||x(t) - F(eps(t), y(t))||`, Tikhonov flow only.
    pub lyapunov: Option<f64>,
    pub psi_over_eps: Option<f64>,
    /// `||x'(t)||`
    pub speed: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub diagnostics: Vec<SampleDiagnostics>,
    pub max_step_violation: f64,
    pub steps: usize,
    pub fixed_step: Option<f64>,
}

impl Trajectory {
    pub fn endpoint(&self) -> &Vector {
        self.states.last().expect("trajectory has the initial state")
    }

    pub fn max_set_violation(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.set_violation)
            .fold(self.max_step_violation, f64::max)
    }

    /// State at the last sample with time `<= t`.
    pub fn state_at(&self, t: f64) -> Option<&Vector> {
        let i = self.times.partition_point(|&s| s <= t);
        i.checked_sub(1).map(|i| &self.states[i])
    }

    /// CSV with columns `t, x1..xn, residual_t, residual_limit, d_D, lyapunov, psi_over_eps`.
    pub fn to_csv(&self) -> Result<String> {
        let n = self.states[0].dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend(
            ["residual_t", "residual_limit", "d_D", "lyapunov", "psi_over_eps"].map(String::from),
        );
        let mut table = CsvTable::new(header);
        for ((t, x), d) in self.times.iter().zip(&self.states).zip(&self.diagnostics) {
            let mut row = vec![t.to_string()];
            row.extend(x.as_slice().iter().map(|c| c.to_string()));
            row.push(d.residual_t.to_string());
            row.push(d.residual_limit.to_string());
            row.push(d.set_violation.to_string());
            row.push(opt_cell(d.lyapunov));
            row.push(opt_cell(d.psi_over_eps));
            table.push(row);
        }
        write_csv(&table)
    }
}

/// Integrates `system` from `x0` and fills in the per-sample diagnostics.
pub fn simulate(
    system: &FlowSystem,
    x0: &Vector,
    opts: &IntegrateOptions,
    diag: &DiagnosticOptions,
) -> Result<Trajectory> {
    if !system.domain().contains(x0, crate::spaces::MEMBERSHIP_TOL) {
        return Err(Error::Domain(format!(
            "initial state is at distance {:e} from D",
            system.domain().distance_unchecked(x0)
        )));
    }
    let sol = integrate(system.field(), x0, opts)?;
    let limit = system.limit();
    let mut diagnostics = Vec::with_capacity(sol.times.len());
    let mut warm: Option<Vector> = None;
    for (&t, x) in sol.times.iter().zip(&sol.states) {
        let (lyapunov, psi_over_eps) = match system {
            FlowSystem::Plain(_) => (None, None),
            FlowSystem::Tikhonov(f) => {
                let eps = f.schedule.eps(t);
                if eps > 0.0 {
                    let z = solve_reg_point(limit, eps, &f.schedule.y(t), &diag.solve, warm.as_ref())?;
                    let lyap = x.dist(&z.point);
                    warm = Some(z.point);
                    let psi_eps = match diag.fix_distance {
                        Some(d) => Some(psi(t, &f.family, &f.schedule, d, &diag.solve)?.psi_over_eps),
                        None => None,
                    };
                    (Some(lyap), psi_eps)
                } else {
                    (None, None)
                }
            }
        };
        diagnostics.push(SampleDiagnostics {
            residual_t: x.dist(&system.operator_at(t, x)),
            residual_limit: x.dist(&limit.eval(x)),
            set_violation: system.domain().distance_unchecked(x),
            lyapunov,
            psi_over_eps,
            speed: system.field().eval(t, x).norm(),
        });
    }
    Ok(Trajectory {
        times: sol.times,
        states: sol.states,
        diagnostics,
        max_step_violation: sol.max_step_violation,
        steps: sol.steps,
        fixed_step: sol.fixed_step,
    })
}

/// `T_hat_t = T_{1 / eps(t)}` and `y_hat(t) = y(1 / eps(t))`.
pub fn rescale(
    family: &OperatorFamily,
    anchor: &AnchorPath,
    eps: &EpsilonSchedule,
) -> Result<(OperatorFamily, AnchorPath)> {
    eps.validate()?;
    if matches!(eps, EpsilonSchedule::Zero) {
        return Err(Error::Parameter("rescaling needs a positive schedule".into()));
    }
    let warped = match anchor {
        AnchorPath::Constant { .. } => anchor.clone(),
        _ => AnchorPath::Warped {
            inner: Box::new(anchor.clone()),
            eps: eps.clone(),
        },
    };
    Ok((family.rescaled(eps)?, warped))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsiValue {
    pub t: f64,
    pub psi: f64,
    pub psi_over_eps: f64,
}

/// `psi(t) = 2||y(t) - y|| + w(t, F(eps(t), y)) + ||y'(t)|| - (eps'/eps)(2||y(t) - y|| + d)`
/// where `y` is the limit anchor, `d = d_{Fix T}(y)` and `w(t, x) = ||T_t x - T x||`.
pub fn psi(
    t: f64,
    family: &OperatorFamily,
    sched: &Schedule,
    fix_distance: f64,
    solve: &SolveOptions,
) -> Result<PsiValue> {
    if !(fix_distance >= 0.0) {
        return Err(Error::Parameter("fix-set distance must be >= 0".into()));
    }
    let eps = sched.eps(t);
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("eps({t}) must be > 0")));
    }
    let y_bar = sched.y_limit();
    let z = solve_reg_point(family.limit(), eps, &y_bar, solve, None)?.point;
    let gap = 2.0 * sched.y(t).dist(&y_bar);
    let value = gap + family.drift(t, &z) + sched.y_dot(t).norm()
        - sched.eps_dot(t) / eps * (gap + fix_distance);
    Ok(PsiValue {
        t,
        psi: value,
        psi_over_eps: value / eps,
    })
}

/// `beta (1 + t)^(beta - 1) d`: psi / eps for a constant family and anchor under
/// `eps = eps0 (1 + t)^(-beta)`, `eps0 = 1`.
pub fn psi_over_eps_prediction(beta: f64, t: f64, fix_distance: f64) -> f64 {
    beta * (1.0 + t).powf(beta - 1.0) * fix_distance
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    pub t: f64,
    pub residual: f64,
    pub bound: f64,
    pub ratio: f64,
    pub flagged: bool,
    /// `e^{-(1 - alpha) t} ||x0 - x*||` and the distance ratio against it.
    pub exp_bound: Option<f64>,
    pub exp_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    pub slack: f64,
}

/// Residual of the limit operator against `dist(x0, Fix T) / sqrt(t)` for `t >= t_min`.
/// With `contraction = Some((alpha, x*))` the distance to `x*` is also compared with
/// the exponential envelope.
pub fn emit_rate_table(
    traj: &Trajectory,
    fix_distance: Option<f64>,
    contraction: Option<(f64, &Vector)>,
    t_min: f64,
    slack: f64,
) -> Result<RateTable> {
    let d = fix_distance.ok_or_else(|| {
        Error::Config("rate table needs analytics.fix_distance_x0".into())
    })?;
    let x0 = &traj.states[0];
    let rows = traj
        .times
        .iter()
        .zip(&traj.states)
        .zip(&traj.diagnostics)
        .filter(|((&t, _), _)| t >= t_min && t > 0.0)
        .map(|((&t, x), diag)| {
            let bound = d / t.sqrt();
            let ratio = if bound > 0.0 {
                diag.residual_limit / bound
            } else if diag.residual_limit == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            let (exp_bound, exp_ratio) = match contraction {
                Some((alpha, xstar)) => {
                    let env = (-(1.0 - alpha) * t).exp() * x0.dist(xstar);
                    let r = if env > 0.0 { x.dist(xstar) / env } else { 0.0 };
                    (Some(env), Some(r))
                }
                None => (None, None),
            };
            RateRow {
                t,
                residual: diag.residual_limit,
                bound,
                ratio,
                flagged: ratio > slack,
                exp_bound,
                exp_ratio,
            }
        })
        .collect();
    Ok(RateTable { rows, slack })
}

impl RateTable {
    pub fn max_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.ratio).fold(0.0, f64::max)
    }

    pub fn max_exp_ratio(&self) -> Option<f64> {
        self.rows
            .iter()
            .filter_map(|r| r.exp_ratio)
            .reduce(f64::max)
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| !r.flagged)
    }

    pub fn to_csv(&self) -> Result<String> {
        let with_exp = self.rows.iter().any(|r| r.exp_bound.is_some());
        let mut header: Vec<String> =
            ["t", "residual", "bound", "ratio", "flag"].map(String::from).to_vec();
        if with_exp {
            header.extend(["exp_bound", "exp_ratio"].map(String::from));
        }
        let mut table = CsvTable::new(header);
        for r in &self.rows {
            let mut row = vec![
                r.t.to_string(),
                r.residual.to_string(),
                r.bound.to_string(),
                r.ratio.to_string(),
                u8::from(r.flagged).to_string(),
            ];
            if with_exp {
                row.push(opt_cell(r.exp_bound));
                row.push(opt_cell(r.exp_ratio));
            }
            table.push(row);
        }
        write_csv(&table)
    }
}

/// Largest increase of `||x(t) - x*||` between consecutive samples.
pub fn fejer_violation(traj: &Trajectory, xstar: &Vector) -> f64 {
    traj.states
        .windows(2)
        .map(|w| w[1].dist(xstar) - w[0].dist(xstar))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `max_t ||x(t) - x*|| / (e^{-(1 - alpha) t} ||x0 - x*||)`.
pub fn exponential_ratio(traj: &Trajectory, xstar: &Vector, alpha: f64) -> f64 {
    let d0 = traj.states[0].dist(xstar);
    if d0 == 0.0 {
        return 0.0;
    }
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(&t, x)| x.dist(xstar) / ((-(1.0 - alpha) * t).exp() * d0))
        .fold(0.0, f64::max)
}

/// Trapezoidal `int_0^t ||x'||^2` over the samples with time `<= t`.
pub fn energy_until(traj: &Trajectory, t: f64) -> f64 {
    traj.times
        .windows(2)
        .zip(traj.diagnostics.windows(2))
        .filter(|(w, _)| w[1] <= t)
        .map(|(w, d)| 0.5 * (w[1] - w[0]) * (d[0].speed.powi(2) + d[1].speed.powi(2)))
        .sum()
}

/// Whether the Lyapunov samples at `t >= t_from` decrease and end at or below `threshold`.
pub fn lyapunov_settles(traj: &Trajectory, t_from: f64, threshold: f64) -> bool {
    let tail: Vec<f64> = traj
        .times
        .iter()
        .zip(&traj.diagnostics)
        .filter(|(&t, _)| t >= t_from)
        .filter_map(|(_, d)| d.lyapunov)
        .collect();
    !tail.is_empty()
        && tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-12)
        && *tail.last().expect("nonempty") <= threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{make_forward_backward, ProxKind, ProxSpec};

    fn v(c: &[f64]) -> Vector {
        Vector::new(c.to_vec()).unwrap()
    }

    fn plane() -> ConvexSet {
        ConvexSet::whole_space(2).unwrap()
    }

    fn line() -> Operator {
        Operator::projection(ConvexSet::hyperplane(vec![0.0, 1.0], 0.0).unwrap()).unwrap()
    }

    fn rk4_uniform(t_end: f64, count: usize) -> IntegrateOptions {
        IntegrateOptions {
            method: Method::Rk4 { step: 1e-3 },
            t_end,
            grid: SampleGrid::Uniform { count },
        }
    }

    #[test]
    fn plain_field_examples() {
        let x = v(&[3.0, 4.0]);
        assert_eq!(
            field_plain(&Operator::identity(2).unwrap(), &plane(), 0.0, &x),
            v(&[0.0, 0.0])
        );
        let zero = Operator::constant(v(&[0.0, 0.0])).unwrap();
        assert_eq!(field_plain(&zero, &plane(), 0.0, &v(&[1.0, 1.0])), v(&[-1.0, -1.0]));
        assert_eq!(field_plain(&line(), &plane(), 0.0, &x), v(&[0.0, -4.0]));
    }

    #[test]
    fn tikhonov_field_examples() {
        let id = OperatorFamily::constant(Operator::identity(2).unwrap());
        let pull = Schedule::constant_anchor(
            EpsilonSchedule::Constant { eps0: 1.0 },
            v(&[0.0, 0.0]),
        )
        .unwrap();
        assert_eq!(
            field_tikhonov(&id, &plane(), &pull, 0.0, &v(&[2.0, 0.0])),
            v(&[-2.0, 0.0])
        );
        let sched =
            Schedule::constant_anchor(EpsilonSchedule::Constant { eps0: 1.0 }, v(&[3.0, 0.0]))
                .unwrap();
        let fam = OperatorFamily::constant(line());
        assert_eq!(
            field_tikhonov(&fam, &plane(), &sched, 0.0, &v(&[3.0, 4.0])),
            v(&[0.0, -8.0])
        );
        let off = Schedule::constant_anchor(EpsilonSchedule::Zero, v(&[3.0, 0.0])).unwrap();
        let x = v(&[-1.0, 2.5]);
        assert_eq!(
            field_tikhonov(&fam, &plane(), &off, 1.0, &x),
            field_plain(&line(), &plane(), 1.0, &x)
        );
    }

    #[test]
    fn rk4_matches_exponential_decay() {
        let zero = Operator::constant(v(&[0.0, 0.0])).unwrap();
        let sys = FlowSystem::plain(zero, plane()).unwrap();
        let traj = simulate(&sys, &v(&[1.0, 0.0]), &rk4_uniform(5.0, 5), &Default::default())
            .unwrap();
        let exact = (-5.0f64).exp();
        assert!((traj.endpoint()[0] - exact).abs() <= 1e-8 * exact);
    }

    #[test]
    fn identity_flow_is_constant() {
        let sys = FlowSystem::plain(Operator::identity(2).unwrap(), plane()).unwrap();
        let x0 = v(&[-2.0, 7.0]);
        let traj = simulate(&sys, &x0, &rk4_uniform(3.0, 30), &Default::default()).unwrap();
        assert!(traj.states.iter().all(|x| *x == x0));
    }

    #[test]
    fn line_flow_closed_form_all_methods() {
        let sys = FlowSystem::plain(line(), plane()).unwrap();
        let x0 = v(&[3.0, 4.0]);
        for (method, tol) in [
            (Method::Rk4 { step: 1e-3 }, 1e-10),
            (Method::Euler { step: 1e-4 }, 1e-4),
            (Method::adaptive(1e-10, 1e-12), 1e-8),
        ] {
            let opts = IntegrateOptions {
                method,
                t_end: 4.0,
                grid: SampleGrid::Uniform { count: 8 },
            };
            let traj = simulate(&sys, &x0, &opts, &Default::default()).unwrap();
            for (&t, x) in traj.times.iter().zip(&traj.states) {
                assert!(x.dist(&v(&[3.0, 4.0 * (-t).exp()])) <= tol, "{}", method.name());
            }
        }
    }

    #[test]
    fn fixed_step_is_capped() {
        let sched = Schedule::constant_anchor(
            EpsilonSchedule::power(8.0, 0.5).unwrap(),
            v(&[0.0, 0.0]),
        )
        .unwrap();
        let sys =
            FlowSystem::tikhonov(OperatorFamily::constant(line()), plane(), sched).unwrap();
        let opts = IntegrateOptions {
            method: Method::Rk4 { step: 0.5 },
            t_end: 1.0,
            grid: SampleGrid::Uniform { count: 1 },
        };
        let traj = simulate(&sys, &v(&[1.0, 1.0]), &opts, &Default::default()).unwrap();
        assert_eq!(traj.fixed_step, Some(0.01));
        assert_eq!(traj.steps, 100);
    }

    #[test]
    fn divergence_is_reported() {
        let blowup = Operator::scaling(1, 1e200).unwrap();
        let sys = FlowSystem::plain(blowup, ConvexSet::whole_space(1).unwrap()).unwrap();
        let opts = IntegrateOptions {
            method: Method::Euler { step: 1e-3 },
            t_end: 1.0,
            grid: SampleGrid::Uniform { count: 1 },
        };
        let err = simulate(&sys, &v(&[1.0]), &opts, &Default::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }) && err.is_numerical());
    }

    #[test]
    fn adaptive_underflow_on_stiff_blowup() {
        let f = Operator::custom("cubic", ConvexSet::whole_space(1).unwrap(), crate::operators::OperatorClass::Unclassified, |x| {
            Vector::raw(vec![x[0] + x[0].powi(3)])
        })
        .unwrap();
        let sys = FlowSystem::plain(f, ConvexSet::whole_space(1).unwrap()).unwrap();
        let opts = IntegrateOptions {
            method: Method::adaptive(1e-10, 1e-12),
            t_end: 10.0,
            grid: SampleGrid::Uniform { count: 1 },
        };
        // x' = x^3 blows up at t = 1 / 2 from x0 = 1
        let err = simulate(&sys, &v(&[1.0]), &opts, &Default::default()).unwrap_err();
        assert!(err.is_numerical(), "{err}");
    }

    #[test]
    fn grids() {
        assert_eq!(
            SampleGrid::Uniform { count: 4 }.times(2.0).unwrap(),
            vec![0.0, 0.5, 1.0, 1.5, 2.0]
        );
        let log = SampleGrid::Log {
            count: 3,
            first: 1.0,
        }
        .times(100.0)
        .unwrap();
        assert_eq!(log.len(), 4);
        assert!((log[2] - 10.0).abs() < 1e-12 && log[3] == 100.0);
        assert!(SampleGrid::Explicit {
            times: vec![1.0, 0.5]
        }
        .times(2.0)
        .is_err());
    }

    #[test]
    fn rescale_substitutes_time() {
        let eps = EpsilonSchedule::power(1.0, 0.5).unwrap();
        let limit = line();
        let fam = OperatorFamily::custom(limit.clone(), |t, x| {
            Vector::raw(vec![x[0] + 1.0 / (1.0 + t), 0.0])
        });
        let anchor = AnchorPath::Moving {
            start: v(&[1.0, 1.0]),
            limit: v(&[0.0, 1.0]),
            rate: 1.0,
        };
        let (fam_hat, anchor_hat) = rescale(&fam, &anchor, &eps).unwrap();
        let x = v(&[0.3, -2.0]);
        for t in [0.0f64, 3.0, 48.0] {
            let s = (1.0 + t).sqrt();
            assert_eq!(fam_hat.eval_at(t, &x), fam.eval_at(s, &x));
            let expected = v(&[(-s).exp(), 1.0]);
            assert!(anchor_hat.value(t).dist(&expected) < 1e-15);
        }
        let (same, _) = rescale(&OperatorFamily::constant(limit), &anchor, &eps).unwrap();
        assert!(same.is_constant());
    }

    #[test]
    fn psi_constant_family_closed_form() {
        let sched = Schedule::constant_anchor(
            EpsilonSchedule::power(1.0, 0.5).unwrap(),
            v(&[3.0, 4.0]),
        )
        .unwrap();
        let fam = OperatorFamily::constant(line());
        for t in [0.0, 10.0, 1e3] {
            let p = psi(t, &fam, &sched, 4.0, &SolveOptions::default()).unwrap();
            let expected = 2.0 / (1.0 + t).sqrt();
            assert!((p.psi_over_eps - expected).abs() <= 1e-12 * expected);
            assert_eq!(psi_over_eps_prediction(0.5, t, 4.0), expected);
        }
        let flat = Schedule::constant_anchor(EpsilonSchedule::Constant { eps0: 0.5 }, v(&[3.0, 4.0]))
            .unwrap();
        assert_eq!(psi(5.0, &fam, &flat, 4.0, &SolveOptions::default()).unwrap().psi, 0.0);
    }

    #[test]
    fn psi_after_switch_drops_drift() {
        let sched = Schedule::constant_anchor(
            EpsilonSchedule::power(1.0, 0.5).unwrap(),
            v(&[3.0, 4.0]),
        )
        .unwrap();
        let fam = OperatorFamily::new(
            line(),
            crate::operators::FamilyKind::Switch {
                early: Box::new(Operator::identity(2).unwrap()),
                at: 5.0,
            },
        )
        .unwrap();
        let early = psi(1.0, &fam, &sched, 4.0, &SolveOptions::default()).unwrap();
        assert!(early.psi > 0.0);
        for t in [5.0, 20.0] {
            let p = psi(t, &fam, &sched, 4.0, &SolveOptions::default()).unwrap();
            let expected = -sched.eps_dot(t) / sched.eps(t).powi(2) * 4.0;
            assert!((p.psi_over_eps - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn rate_table_line_scenario() {
        let sys = FlowSystem::plain(line(), plane()).unwrap();
        let traj = simulate(&sys, &v(&[3.0, 4.0]), &rk4_uniform(20.0, 200), &Default::default())
            .unwrap();
        let table = emit_rate_table(&traj, Some(4.0), None, 0.1, 1.05).unwrap();
        assert!(table.passed() && table.max_ratio() <= 1.0);
        assert!(emit_rate_table(&traj, None, None, 0.1, 1.05).is_err());
        let csv = table.to_csv().unwrap();
        assert!(csv.starts_with("t,residual,bound,ratio,flag\n"));

        let fixed = simulate(&sys, &v(&[3.0, 0.0]), &rk4_uniform(2.0, 4), &Default::default())
            .unwrap();
        let table = emit_rate_table(&fixed, Some(0.0), None, 0.1, 1.05).unwrap();
        assert!(table.rows.iter().all(|r| r.ratio == 0.0));
    }

    #[test]
    fn contraction_envelope() {
        let op = Operator::scaled_rotation(0.5, 30f64.to_radians()).unwrap();
        let sys = FlowSystem::plain(op, plane()).unwrap();
        let traj = simulate(&sys, &v(&[1.0, 1.0]), &rk4_uniform(20.0, 200), &Default::default())
            .unwrap();
        let origin = v(&[0.0, 0.0]);
        assert!(exponential_ratio(&traj, &origin, 0.5) <= 1.0 + 1e-3);
        assert!(fejer_violation(&traj, &origin) <= 1e-8);
        let table = emit_rate_table(&traj, Some(2f64.sqrt()), Some((0.5, &origin)), 0.1, 1.05)
            .unwrap();
        assert!(table.max_exp_ratio().unwrap() <= 1.0 + 1e-3);
        assert!(table.to_csv().unwrap().starts_with("t,residual,bound,ratio,flag,exp_bound,exp_ratio\n"));
    }

    #[test]
    fn tikhonov_stays_in_box() {
        let unit = ConvexSet::cube(2, 0.0, 1.0).unwrap();
        let b = Operator::quadratic_gradient(&[1.0, 1.0], v(&[2.0, 0.5])).unwrap();
        let t = make_forward_backward(&ProxSpec::indicator(unit.clone()), &b, 0.5)
            .unwrap()
            .with_domain(unit.clone())
            .unwrap();
        let sched = Schedule::constant_anchor(
            EpsilonSchedule::power(1.0, 0.5).unwrap(),
            v(&[0.0, 0.0]),
        )
        .unwrap();
        let sys = FlowSystem::tikhonov(OperatorFamily::constant(t), unit, sched).unwrap();
        let traj = simulate(&sys, &v(&[1.0, 1.0]), &rk4_uniform(10.0, 100), &Default::default())
            .unwrap();
        assert!(traj.max_set_violation() <= 1e-6);
        assert!(traj.diagnostics.iter().all(|d| d.lyapunov.is_some()));
        let csv = traj.to_csv().unwrap();
        assert!(csv.starts_with("t,x1,x2,residual_t,residual_limit,d_D,lyapunov,psi_over_eps\n"));
    }

    #[test]
    fn lasso_operator_is_constant_map() {
        // with mu = 1 and B = x - b the forward step lands on b for every x
        let b = Operator::quadratic_gradient(&[1.0, 1.0], v(&[2.0, 0.5])).unwrap();
        let phi = ProxSpec::new(ProxKind::L1 { weight: 1.0 }, 1.0).unwrap();
        let t = make_forward_backward(&phi, &b, 1.0).unwrap();
        assert_eq!(t.eval(&v(&[-4.0, 9.0])), v(&[1.0, 0.0]));
    }
}
