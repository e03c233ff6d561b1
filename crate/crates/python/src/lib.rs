//! Python bindings: sets, proximal maps, operators, regularization paths,
//! flows and scenarios. Vectors cross the boundary as lists of floats.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use tikflow::flow::{
    simulate as simulate_flow, DiagnosticOptions, FlowSystem, IntegrateOptions, Method, SampleGrid,
};
use tikflow::operators::{
    make_forward_backward, prox as apply_prox, residual as op_residual, Operator, OperatorFamily,
    ProxKind, ProxSpec,
};
use tikflow::regpath::{
    follow_path as follow, geometric_grid, solve_reg_point as solve, PathOptions, SolveOptions,
};
use tikflow::scenario::{run_scenario as run, Scenario, ScenarioConfig};
use tikflow::schedule::{AnchorPath, EpsilonSchedule, Schedule};
use tikflow::spaces::{hausdorff as haus, ConvexSet, Vector};
use tikflow::Error;

create_exception!(pytikflow, NumericalError, PyRuntimeError, "A solver or integrator failed.");

fn to_py(e: Error) -> PyErr {
    if e.is_numerical() {
        NumericalError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn vector(x: Vec<f64>) -> PyResult<Vector> {
    Vector::new(x).map_err(to_py)
}

#[pyclass(name = "ConvexSet", frozen, skip_from_py_object, module = "pytikflow")]
#[derive(Clone)]
struct PyConvexSet {
    inner: ConvexSet,
}

#[pymethods]
impl PyConvexSet {
    #[staticmethod]
    fn whole_space(dim: usize) -> PyResult<Self> {
        wrap_set(ConvexSet::whole_space(dim))
    }

    #[staticmethod]
    #[pyo3(name = "box")]
    fn new_box(lo: Vec<f64>, hi: Vec<f64>) -> PyResult<Self> {
        wrap_set(ConvexSet::new_box(lo, hi))
    }

    #[staticmethod]
    fn ball(center: Vec<f64>, radius: f64) -> PyResult<Self> {
        wrap_set(ConvexSet::ball(center, radius))
    }

    #[staticmethod]
    fn halfspace(a: Vec<f64>, b: f64) -> PyResult<Self> {
        wrap_set(ConvexSet::halfspace(a, b))
    }

    #[staticmethod]
    fn hyperplane(a: Vec<f64>, b: f64) -> PyResult<Self> {
        wrap_set(ConvexSet::hyperplane(a, b))
    }

    /// `base + span(directions)`; directions must be orthonormal.
    #[staticmethod]
    fn affine(base: Vec<f64>, directions: Vec<Vec<f64>>) -> PyResult<Self> {
        wrap_set(ConvexSet::affine(base, directions))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn project(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.project(&vector(x)?).map_err(to_py)?.into())
    }

    fn distance(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.distance(&vector(x)?).map_err(to_py)
    }

    #[pyo3(signature = (x, tol = 1e-9))]
    fn contains(&self, x: Vec<f64>, tol: f64) -> PyResult<bool> {
        Ok(self.inner.contains(&vector(x)?, tol))
    }

    fn __repr__(&self) -> String {
        format!("ConvexSet({:?})", self.inner)
    }
}

fn wrap_set(r: tikflow::Result<ConvexSet>) -> PyResult<PyConvexSet> {
    r.map(|inner| PyConvexSet { inner }).map_err(to_py)
}

/// Hausdorff distance for the analytically supported pairs.
#[pyfunction]
fn hausdorff(a: &PyConvexSet, b: &PyConvexSet) -> PyResult<f64> {
    haus(&a.inner, &b.inner).map_err(to_py)
}

#[pyclass(name = "Prox", frozen, skip_from_py_object, module = "pytikflow")]
#[derive(Clone)]
struct PyProx {
    inner: ProxSpec,
}

#[pymethods]
impl PyProx {
    #[staticmethod]
    #[pyo3(signature = (weight, mu = 1.0))]
    fn l1(weight: f64, mu: f64) -> PyResult<Self> {
        wrap_prox(ProxSpec::new(ProxKind::L1 { weight }, mu))
    }

    #[staticmethod]
    #[pyo3(signature = (center, weight, mu = 1.0))]
    fn quadratic(center: Vec<f64>, weight: f64, mu: f64) -> PyResult<Self> {
        wrap_prox(ProxSpec::new(
            ProxKind::Quadratic {
                center: vector(center)?,
                weight,
            },
            mu,
        ))
    }

    #[staticmethod]
    fn indicator(set: &PyConvexSet) -> Self {
        PyProx {
            inner: ProxSpec::indicator(set.inner.clone()),
        }
    }

    fn __call__(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(apply_prox(&self.inner, &vector(x)?).map_err(to_py)?.into())
    }
}

fn wrap_prox(r: tikflow::Result<ProxSpec>) -> PyResult<PyProx> {
    r.map(|inner| PyProx { inner }).map_err(to_py)
}

#[pyclass(name = "Operator", frozen, skip_from_py_object, module = "pytikflow")]
#[derive(Clone)]
struct PyOperator {
    inner: Operator,
}

#[pymethods]
impl PyOperator {
    #[staticmethod]
    fn projection(set: &PyConvexSet) -> PyResult<Self> {
        wrap_op(Operator::projection(set.inner.clone()))
    }

    #[staticmethod]
    fn prox(phi: &PyProx, dim: usize) -> PyResult<Self> {
        wrap_op(Operator::prox(phi.inner.clone(), dim))
    }

    /// `alpha` times a rotation by `angle` radians in the plane.
    #[staticmethod]
    fn scaled_rotation(alpha: f64, angle: f64) -> PyResult<Self> {
        wrap_op(Operator::scaled_rotation(alpha, angle))
    }

    #[staticmethod]
    fn translation(shift: Vec<f64>) -> PyResult<Self> {
        wrap_op(Operator::translation(vector(shift)?))
    }

    #[staticmethod]
    fn scaling(dim: usize, factor: f64) -> PyResult<Self> {
        wrap_op(Operator::scaling(dim, factor))
    }

    /// `x -> W (x - center)` with diagonal weights `W`.
    #[staticmethod]
    fn quadratic_gradient(weights: Vec<f64>, center: Vec<f64>) -> PyResult<Self> {
        wrap_op(Operator::quadratic_gradient(&weights, vector(center)?))
    }

    /// `prox_{mu phi}(x - mu B x)`; `B` must be cocoercive and `0 < mu < 2 beta`.
    #[staticmethod]
    fn forward_backward(phi: &PyProx, gradient: &PyOperator, mu: f64) -> PyResult<Self> {
        wrap_op(make_forward_backward(&phi.inner, &gradient.inner, mu))
    }

    fn restricted_to(&self, domain: &PyConvexSet) -> PyResult<Self> {
        wrap_op(self.inner.clone().with_domain(domain.inner.clone()))
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn class_name(&self) -> String {
        self.inner.class().name()
    }

    fn __call__(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.apply(&vector(x)?).map_err(to_py)?.into())
    }

    /// `x - T x`
    fn residual(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(op_residual(&self.inner, &vector(x)?).map_err(to_py)?.into())
    }

    fn __repr__(&self) -> String {
        format!("Operator({}, {})", self.inner.name(), self.inner.class().name())
    }
}

fn wrap_op(r: tikflow::Result<Operator>) -> PyResult<PyOperator> {
    r.map(|inner| PyOperator { inner }).map_err(to_py)
}

#[pyclass(name = "RegPoint", frozen, get_all, module = "pytikflow")]
struct PyRegPoint {
    epsilon: f64,
    anchor: Vec<f64>,
    point: Vec<f64>,
    residual_norm: f64,
    iterations: usize,
}

impl From<tikflow::regpath::RegPoint> for PyRegPoint {
    fn from(p: tikflow::regpath::RegPoint) -> Self {
        PyRegPoint {
            epsilon: p.epsilon,
            anchor: p.anchor.into(),
            point: p.point.into(),
            residual_norm: p.residual_norm,
            iterations: p.iterations,
        }
    }
}

/// Solve `eps (x - y) + x - T x = 0`.
#[pyfunction]
#[pyo3(signature = (op, epsilon, y, tol = 1e-10, max_iter = 100_000_000, warm_start = None))]
fn solve_reg_point(
    op: &PyOperator,
    epsilon: f64,
    y: Vec<f64>,
    tol: f64,
    max_iter: usize,
    warm_start: Option<Vec<f64>>,
) -> PyResult<PyRegPoint> {
    let warm = warm_start.map(vector).transpose()?;
    let opts = SolveOptions { tol, max_iter };
    solve(&op.inner, epsilon, &vector(y)?, &opts, warm.as_ref())
        .map(Into::into)
        .map_err(to_py)
}

#[pyclass(name = "PathResult", frozen, get_all, module = "pytikflow")]
struct PyPathResult {
    epsilons: Vec<f64>,
    points: Vec<Vec<f64>>,
    residual_norms: Vec<f64>,
    limit_estimate: Vec<f64>,
    diverged: bool,
    termination: String,
    csv: String,
}

/// Warm-started path over `eps0 * rho^k`, `k = 0..=steps`.
#[pyfunction]
#[pyo3(signature = (
    op, y, eps0 = 1.0, rho = 0.5, steps = 20, tol = 1e-10,
    eps_min = 1e-8, path_tol = None, divergence_radius = None
))]
#[allow(clippy::too_many_arguments)]
fn follow_path(
    op: &PyOperator,
    y: Vec<f64>,
    eps0: f64,
    rho: f64,
    steps: usize,
    tol: f64,
    eps_min: f64,
    path_tol: Option<f64>,
    divergence_radius: Option<f64>,
) -> PyResult<PyPathResult> {
    let grid = geometric_grid(eps0, rho, steps).map_err(to_py)?;
    let opts = PathOptions {
        solve: SolveOptions::with_tol(tol),
        eps_min,
        path_tol,
        divergence_radius,
    };
    let path = follow(&op.inner, &vector(y)?, &grid, &opts).map_err(to_py)?;
    Ok(PyPathResult {
        epsilons: path.epsilons(),
        points: path.points.iter().map(|p| p.point.clone().into()).collect(),
        residual_norms: path.points.iter().map(|p| p.residual_norm).collect(),
        limit_estimate: path.limit_estimate.clone().into(),
        diverged: path.diverged,
        termination: path.termination.to_string(),
        csv: path.to_csv().map_err(to_py)?,
    })
}

#[pyclass(name = "Trajectory", frozen, get_all, module = "pytikflow")]
struct PyTrajectory {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    residual: Vec<f64>,
    set_violation: Vec<f64>,
    lyapunov: Vec<Option<f64>>,
    steps: usize,
    csv: String,
}

fn method(step: Option<f64>, rtol: f64, atol: f64) -> Method {
    match step {
        Some(step) => Method::Rk4 { step },
        None => Method::adaptive(rtol, atol),
    }
}

fn run_flow(sys: &FlowSystem, x0: Vec<f64>, opts: IntegrateOptions) -> PyResult<PyTrajectory> {
    let traj = simulate_flow(sys, &vector(x0)?, &opts, &DiagnosticOptions::default())
        .map_err(to_py)?;
    Ok(PyTrajectory {
        csv: traj.to_csv().map_err(to_py)?,
        residual: traj.diagnostics.iter().map(|d| d.residual_limit).collect(),
        set_violation: traj.diagnostics.iter().map(|d| d.set_violation).collect(),
        lyapunov: traj.diagnostics.iter().map(|d| d.lyapunov).collect(),
        times: traj.times,
        states: traj.states.into_iter().map(Into::into).collect(),
        steps: traj.steps,
    })
}

/// Integrate `x' = -(p - T p)`, `p = proj_D x`. RK4 at `step`, or adaptive when `step` is None.
#[pyfunction]
#[pyo3(signature = (op, x0, t_end, samples = 100, step = Some(1e-3), rtol = 1e-9, atol = 1e-12, domain = None))]
#[allow(clippy::too_many_arguments)]
fn simulate_plain(
    op: &PyOperator,
    x0: Vec<f64>,
    t_end: f64,
    samples: usize,
    step: Option<f64>,
    rtol: f64,
    atol: f64,
    domain: Option<&PyConvexSet>,
) -> PyResult<PyTrajectory> {
    let domain = domain.map_or_else(|| op.inner.domain().clone(), |d| d.inner.clone());
    let sys = FlowSystem::plain(op.inner.clone(), domain).map_err(to_py)?;
    let opts = IntegrateOptions {
        method: method(step, rtol, atol),
        t_end,
        grid: SampleGrid::Uniform { count: samples },
    };
    run_flow(&sys, x0, opts)
}

/// Tikhonov flow with `eps(t) = eps0 (1 + t)^(-beta)` and a constant anchor `y`.
#[pyfunction]
#[pyo3(signature = (
    op, x0, y, t_end, eps0 = 1.0, beta = 0.5, samples = 100,
    step = None, rtol = 1e-9, atol = 1e-12, domain = None
))]
#[allow(clippy::too_many_arguments)]
fn simulate_tikhonov(
    op: &PyOperator,
    x0: Vec<f64>,
    y: Vec<f64>,
    t_end: f64,
    eps0: f64,
    beta: f64,
    samples: usize,
    step: Option<f64>,
    rtol: f64,
    atol: f64,
    domain: Option<&PyConvexSet>,
) -> PyResult<PyTrajectory> {
    let domain = domain.map_or_else(|| op.inner.domain().clone(), |d| d.inner.clone());
    let schedule = Schedule {
        eps: EpsilonSchedule::Power { eps0, beta },
        anchor: AnchorPath::Constant { y: vector(y)? },
    };
    let sys = FlowSystem::tikhonov(OperatorFamily::constant(op.inner.clone()), domain, schedule)
        .map_err(to_py)?;
    let opts = IntegrateOptions {
        method: method(step, rtol, atol),
        t_end,
        grid: SampleGrid::Uniform { count: samples },
    };
    run_flow(&sys, x0, opts)
}

/// Run every stage of a scenario (TOML path or `builtin:NAME`).
/// Returns `(passed, report_text)`; artifacts are written when `out` is given.
#[pyfunction]
#[pyo3(signature = (source, out = None, seed = None))]
fn run_scenario(
    py: Python<'_>,
    source: &str,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> PyResult<(bool, String)> {
    let mut cfg = ScenarioConfig::load(source).map_err(to_py)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let scn = Scenario::from_config(&cfg).map_err(to_py)?;
    let bundle = py.detach(|| run(&scn)).map_err(to_py)?;
    if let Some(dir) = out {
        bundle.write_to(&dir).map_err(to_py)?;
    }
    Ok((bundle.report.passed(), bundle.report.to_text()))
}

#[pyfunction]
fn builtin_scenarios() -> Vec<&'static str> {
    tikflow::scenario::builtin_names()
}

#[pymodule]
fn pytikflow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_class::<PyConvexSet>()?;
    m.add_class::<PyProx>()?;
    m.add_class::<PyOperator>()?;
    m.add_class::<PyRegPoint>()?;
    m.add_class::<PyPathResult>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(hausdorff, m)?)?;
    m.add_function(wrap_pyfunction!(solve_reg_point, m)?)?;
    m.add_function(wrap_pyfunction!(follow_path, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_plain, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_tikhonov, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(builtin_scenarios, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_requested_by_step() {
        assert_eq!(method(Some(0.01), 1e-9, 1e-12), Method::Rk4 { step: 0.01 });
        assert!(matches!(method(None, 1e-6, 1e-9), Method::Adaptive { .. }));
    }
}
