//! Configuration-driven scenarios: building sets, operators and schedules from
//! a TOML file, running check, path and flow stages, and collecting a report
//! plus CSV artifacts.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::flow::{
    emit_rate_table, energy_until, exponential_ratio, fejer_violation, lyapunov_settles, psi,
    psi_over_eps_prediction, simulate, DiagnosticOptions, FlowSystem, IntegrateOptions, Method,
    SampleGrid, Trajectory,
};
use crate::operators::{
    check_baillon_haddad, check_class, check_forward_backward_inequality, check_maps_into,
    check_moreau, check_prox_drift, check_residual_monotone, make_forward_backward, CheckReport,
    FamilyKind, Matrix, Operator, OperatorClass, OperatorFamily, ProxKind, ProxSpec,
};
use crate::output::{write_csv, CsvTable};
use crate::regpath::{
    check_fejer_triple, check_path_lipschitz, check_reg_firmly_nonexpansive,
    check_resolvent_identity, follow_path, geometric_grid, PathOptions, PathResult,
    SolveOptions,
};
use crate::sampling::DomainSampler;
use crate::schedule::{AnchorPath, EpsilonSchedule, Schedule};
use crate::spaces::{ConvexSet, Decay, Perturbation, SetFamily, Vector, MEMBERSHIP_TOL};

/// Prefix selecting a scenario shipped with the crate instead of a file.
pub const BUILTIN_PREFIX: &str = "builtin:";

const BUILTINS: &[(&str, &str)] = &[
    ("line-select", include_str!("../scenarios/line-select.toml")),
    ("lasso-select", include_str!("../scenarios/lasso-select.toml")),
    ("moving-box", include_str!("../scenarios/moving-box.toml")),
    ("contraction", include_str!("../scenarios/contraction.toml")),
    ("invariance-box", include_str!("../scenarios/invariance-box.toml")),
    ("translation", include_str!("../scenarios/translation.toml")),
    ("doubling", include_str!("../scenarios/doubling.toml")),
];

pub fn builtin_names() -> Vec<&'static str> {
    BUILTINS.iter().map(|(n, _)| *n).collect()
}

pub fn builtin_source(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Operator catalog entries as they appear in a config file.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OperatorSpec {
    Identity,
    Constant {
        value: Vector,
    },
    Projection {
        set: ConvexSet,
    },
    Affine {
        matrix: Vec<Vec<f64>>,
        offset: Vector,
        class: OperatorClass,
    },
    /// `alpha` times the rotation by `angle_deg` degrees, in the plane.
    ScaledRotation {
        alpha: f64,
        angle_deg: f64,
    },
    Translation {
        shift: Vector,
    },
    Scaling {
        factor: f64,
    },
    /// Gradient of `1/2 sum_i w_i (x_i - c_i)^2`.
    QuadraticGradient {
        weights: Vec<f64>,
        center: Vector,
    },
    Prox {
        phi: ProxKind,
        mu: f64,
    },
    ForwardBackward {
        phi: ProxKind,
        gradient: Box<OperatorSpec>,
        mu: f64,
    },
}

impl OperatorSpec {
    pub fn build(&self, dim: usize) -> Result<Operator> {
        let op = match self {
            OperatorSpec::Identity => Operator::identity(dim)?,
            OperatorSpec::Constant { value } => Operator::constant(value.clone())?,
            OperatorSpec::Projection { set } => Operator::projection(set.clone())?,
            OperatorSpec::Affine {
                matrix,
                offset,
                class,
            } => Operator::affine(Matrix::new(matrix.clone())?, offset.clone(), *class)?,
            OperatorSpec::ScaledRotation { alpha, angle_deg } => {
                Operator::scaled_rotation(*alpha, angle_deg.to_radians())?
            }
            OperatorSpec::Translation { shift } => Operator::translation(shift.clone())?,
            OperatorSpec::Scaling { factor } => Operator::scaling(dim, *factor)?,
            OperatorSpec::QuadraticGradient { weights, center } => {
                Operator::quadratic_gradient(weights, center.clone())?
            }
            OperatorSpec::Prox { phi, mu } => {
                Operator::prox(ProxSpec::new(phi.clone(), *mu)?, dim)?
            }
            OperatorSpec::ForwardBackward { phi, gradient, mu } => {
                let b = gradient.build(dim)?;
                let phi = ProxSpec::new(phi.clone(), *mu)?;
                make_forward_backward(&phi, &b, *mu)?
            }
        };
        if op.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: op.dim(),
            });
        }
        Ok(op)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    #[default]
    Constant,
    /// Replaces the indicator set `C` of the operator by `C_t`.
    InflatedIndicator {
        perturbation: Perturbation,
        delta: Decay,
    },
    /// `B_t = B + delta(t) * direction` inside a forward-backward operator.
    GradientDrift {
        direction: Vector,
        delta: Decay,
    },
    /// `T_t = early` for `t < at`.
    Switch {
        early: OperatorSpec,
        at: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub x0: Vec<Vector>,
    pub plain: bool,
    pub plain_horizon: f64,
    pub plain_method: Method,
    pub plain_grid: SampleGrid,
    pub tikhonov: bool,
    pub horizon: f64,
    pub method: Method,
    pub grid: SampleGrid,
    /// Check endpoints against the selected fixed point and each other.
    pub selection: bool,
    pub select_tol: f64,
    pub pairwise_tol: f64,
    pub invariance_tol: f64,
    pub rate_slack: f64,
    pub rate_t_min: f64,
    pub fejer_tol: f64,
    pub exp_slack: f64,
    pub energy_tol: f64,
    pub lyapunov_from: f64,
    pub lyapunov_threshold: f64,
    pub monitor_times: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            x0: Vec::new(),
            plain: true,
            plain_horizon: 20.0,
            plain_method: Method::default(),
            plain_grid: SampleGrid::Uniform { count: 200 },
            tikhonov: true,
            horizon: 50.0,
            method: Method::default(),
            grid: SampleGrid::Uniform { count: 100 },
            selection: true,
            select_tol: 1e-2,
            pairwise_tol: 2e-2,
            invariance_tol: 1e-6,
            rate_slack: 1.05,
            rate_t_min: 0.1,
            fejer_tol: 1e-8,
            exp_slack: 1e-3,
            energy_tol: 1e-3,
            lyapunov_from: 10.0,
            lyapunov_threshold: 1e-2,
            monitor_times: vec![10.0, 1e2, 1e3, 1e4],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecksConfig {
    /// Run the path validations.
    pub regpath: bool,
    pub pairs: usize,
    pub tol: f64,
    /// Classes to test in addition to the declared one.
    pub claims: Vec<OperatorClass>,
    pub solve_tol: f64,
    pub resolvent_samples: usize,
    pub lipschitz_samples: usize,
    pub fejer_samples: usize,
    pub drift_samples: usize,
    /// Radius of the ball around the origin from which drift test points are drawn.
    pub drift_radius: f64,
    pub path_eps0: f64,
    pub path_rho: f64,
    pub path_steps: usize,
    pub path_eps_min: f64,
    pub path_limit_tol: f64,
    pub divergence_radius: Option<f64>,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        ChecksConfig {
            regpath: true,
            pairs: 1000,
            tol: 1e-9,
            claims: Vec::new(),
            solve_tol: 1e-10,
            resolvent_samples: 100,
            lipschitz_samples: 200,
            fejer_samples: 300,
            drift_samples: 500,
            drift_radius: 10.0,
            path_eps0: 1.0,
            path_rho: 0.5,
            path_steps: 20,
            path_eps_min: 1e-8,
            path_limit_tol: 1e-5,
            divergence_radius: None,
        }
    }
}

/// Known closed-form facts about a scenario; nothing here is estimated.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsConfig {
    /// `Fix T` as a convex set (a zero-radius ball for a unique fixed point).
    pub fix_set: Option<ConvexSet>,
    /// `Fix T` is empty.
    pub fix_empty: bool,
    /// `proj_{Fix T}` of the limit anchor; derived from `fix_set` when absent.
    pub proj_fix_anchor: Option<Vector>,
    /// `d_{Fix T}` of the limit anchor; derived from `fix_set` when absent.
    pub fix_distance_anchor: Option<f64>,
    /// `dist(x0, Fix T)` per start; derived from `fix_set` when absent.
    pub fix_distance_x0: Option<Vec<f64>>,
    /// Contraction modulus of `T`.
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
    pub domain: Option<ConvexSet>,
    pub operator: OperatorSpec,
    #[serde(default)]
    pub family: FamilySpec,
    pub schedule: Option<Schedule>,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default)]
    pub analytics: AnalyticsConfig,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file, or a shipped scenario given as `builtin:NAME`.
    pub fn load(source: &str) -> Result<Self> {
        if let Some(name) = source.strip_prefix(BUILTIN_PREFIX) {
            let text = builtin_source(name).ok_or_else(|| {
                Error::Config(format!(
                    "unknown builtin scenario '{name}' (available: {})",
                    builtin_names().join(", ")
                ))
            })?;
            return Self::parse(text);
        }
        let text = fs::read_to_string(source)
            .map_err(|e| Error::Config(format!("cannot read {source}: {e}")))?;
        Self::parse(&text)
    }
}

/// Resolved closed-form facts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Analytics {
    pub fix_set: Option<ConvexSet>,
    pub fix_empty: bool,
    pub fix_point: Option<Vector>,
    pub proj_fix_anchor: Option<Vector>,
    pub fix_distance_anchor: Option<f64>,
    pub fix_distance_x0: Option<Vec<f64>>,
    pub alpha: Option<f64>,
}

/// A validated scenario ready to run.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub dim: usize,
    pub seed: u64,
    pub domain: ConvexSet,
    pub operator: Operator,
    pub family: OperatorFamily,
    pub schedule: Option<Schedule>,
    pub run: RunConfig,
    pub checks: ChecksConfig,
    pub analytics: Analytics,
}

impl Scenario {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        let fail = |e: Error| Error::Config(format!("scenario '{}': {e}", cfg.name));
        Self::build(cfg).map_err(fail)
    }

    pub fn load(source: &str) -> Result<Self> {
        Self::from_config(&ScenarioConfig::load(source)?)
    }

    fn build(cfg: &ScenarioConfig) -> Result<Self> {
        if cfg.dim == 0 {
            return Err(Error::Parameter("dim must be >= 1".into()));
        }
        let n = cfg.dim;
        let domain = match &cfg.domain {
            Some(d) => d.clone(),
            None => ConvexSet::whole_space(n)?,
        };
        domain.validate()?;
        if domain.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: domain.dim(),
            });
        }
        let operator = cfg.operator.build(n)?.with_domain(domain.clone())?;
        let family = build_family(&cfg.family, &operator, n)?;
        if let Some(s) = &cfg.schedule {
            s.validate()?;
            if s.anchor.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: s.anchor.dim(),
                });
            }
        }
        for x0 in &cfg.run.x0 {
            x0.check_dim(n)?;
            if !domain.contains(x0, MEMBERSHIP_TOL) {
                return Err(Error::Parameter(format!("start {x0:?} lies outside D")));
            }
        }
        cfg.run.method.validate()?;
        cfg.run.plain_method.validate()?;
        let c = &cfg.checks;
        if c.pairs == 0 || !(c.tol > 0.0) || !(c.solve_tol > 0.0) {
            return Err(Error::Config("checks need pairs >= 1 and positive tolerances".into()));
        }
        let analytics = resolve_analytics(&cfg.analytics, cfg.schedule.as_ref(), &cfg.run.x0, n)?;
        Ok(Scenario {
            name: cfg.name.clone(),
            dim: n,
            seed: cfg.seed,
            domain,
            operator,
            family,
            schedule: cfg.schedule.clone(),
            run: cfg.run.clone(),
            checks: cfg.checks.clone(),
            analytics,
        })
    }

    fn sampler(&self, stream: u64) -> DomainSampler {
        DomainSampler::new(&self.domain, self.seed.wrapping_mul(1_000_003).wrapping_add(stream))
    }

    fn solve_opts(&self) -> SolveOptions {
        SolveOptions::with_tol(self.checks.solve_tol)
    }

    /// Whether the symbolic parts of the convergence assumptions hold.
    pub fn assumptions_certified(&self) -> bool {
        let Some(s) = &self.schedule else {
            return false;
        };
        let times = monitor_grid(&self.run.monitor_times);
        s.assess(&self.domain, &times).all() && family_drift_vanishes(&self.family, &s.eps)
    }
}

fn build_family(spec: &FamilySpec, limit: &Operator, n: usize) -> Result<OperatorFamily> {
    match spec {
        FamilySpec::Constant => Ok(OperatorFamily::constant(limit.clone())),
        FamilySpec::InflatedIndicator {
            perturbation,
            delta,
        } => {
            let base = match limit.map() {
                crate::operators::OperatorMap::Projection(s) => s.clone(),
                _ => limit
                    .forward_backward_parts()
                    .and_then(|(p, _, _)| p.indicator_set().cloned())
                    .ok_or_else(|| {
                        Error::Parameter(
                            "inflated-indicator family needs a projection or an indicator \
                             forward-backward operator"
                                .into(),
                        )
                    })?,
            };
            let sets = SetFamily::new(base, *perturbation, delta.clone())?;
            OperatorFamily::new(limit.clone(), FamilyKind::InflatedIndicator { sets })
        }
        FamilySpec::GradientDrift { direction, delta } => OperatorFamily::new(
            limit.clone(),
            FamilyKind::GradientDrift {
                direction: direction.clone(),
                delta: delta.clone(),
            },
        ),
        FamilySpec::Switch { early, at } => {
            let early = early.build(n)?.with_domain(limit.domain().clone())?;
            OperatorFamily::new(
                limit.clone(),
                FamilyKind::Switch {
                    early: Box::new(early),
                    at: *at,
                },
            )
        }
    }
}

/// `w(t, .) / eps(t) -> 0`, decided from the decay kinds.
fn family_drift_vanishes(family: &OperatorFamily, eps: &EpsilonSchedule) -> bool {
    let beta = match eps {
        EpsilonSchedule::Power { beta, .. } => *beta,
        EpsilonSchedule::Constant { .. } => 0.0,
        EpsilonSchedule::Zero => return false,
    };
    match family.kind() {
        FamilyKind::Constant | FamilyKind::Switch { .. } => true,
        // the drift is bounded by a multiple of Haus^(1/2)
        FamilyKind::InflatedIndicator { sets } => sets.delta.power_rate() / 2.0 > beta,
        FamilyKind::GradientDrift { delta, .. } => delta.power_rate() > beta,
        _ => false,
    }
}

fn resolve_analytics(
    cfg: &AnalyticsConfig,
    schedule: Option<&Schedule>,
    x0: &[Vector],
    n: usize,
) -> Result<Analytics> {
    if let Some(set) = &cfg.fix_set {
        set.validate()?;
        if set.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: set.dim(),
            });
        }
        if cfg.fix_empty {
            return Err(Error::Config("fix_set given together with fix_empty".into()));
        }
    }
    let anchor = schedule.map(|s| s.y_limit());
    let proj = cfg.proj_fix_anchor.clone().or_else(|| {
        let (set, y) = (cfg.fix_set.as_ref()?, anchor.as_ref()?);
        Some(set.project_unchecked(y))
    });
    let dist_anchor = cfg.fix_distance_anchor.or_else(|| {
        let (set, y) = (cfg.fix_set.as_ref()?, anchor.as_ref()?);
        Some(set.distance_unchecked(y))
    });
    let dist_x0 = match (&cfg.fix_distance_x0, &cfg.fix_set) {
        (Some(d), _) => {
            if d.len() != x0.len() {
                return Err(Error::Config(
                    "fix_distance_x0 needs one entry per start".into(),
                ));
            }
            Some(d.clone())
        }
        (None, Some(set)) => Some(x0.iter().map(|x| set.distance_unchecked(x)).collect()),
        (None, None) => None,
    };
    let fix_point = proj.clone().or_else(|| {
        cfg.fix_set
            .as_ref()
            .map(|s| s.project_unchecked(&Vector::zeros(n)))
    });
    if let Some(a) = cfg.alpha {
        OperatorClass::Contraction { alpha: a }.validate()?;
    }
    Ok(Analytics {
        fix_set: cfg.fix_set.clone(),
        fix_empty: cfg.fix_empty,
        fix_point,
        proj_fix_anchor: proj,
        fix_distance_anchor: dist_anchor,
        fix_distance_x0: dist_x0,
        alpha: cfg.alpha,
    })
}

fn monitor_grid(times: &[f64]) -> Vec<f64> {
    let mut ts = vec![0.0];
    ts.extend(times.iter().copied().filter(|&t| t > 0.0));
    ts
}

/// One report line: `id=.. status=.. measured=.. threshold=..`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportLine {
    pub id: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: Option<String>,
}

impl ReportLine {
    pub fn at_most(id: impl Into<String>, measured: f64, threshold: f64) -> Self {
        ReportLine {
            id: id.into(),
            passed: measured <= threshold,
            measured,
            threshold,
            detail: None,
        }
    }

    pub fn flag(id: impl Into<String>, ok: bool) -> Self {
        ReportLine {
            id: id.into(),
            passed: ok,
            measured: f64::from(u8::from(ok)),
            threshold: 1.0,
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    fn from_check(prefix: &str, r: &CheckReport) -> Self {
        let witness = match (&r.witness, r.passed) {
            (Some((x, y)), false) => Some(format!("witness_x={} witness_y={}", join(x), join(y))),
            _ => None,
        };
        ReportLine {
            id: format!("{prefix}{}", r.id),
            passed: r.passed,
            measured: r.worst_margin,
            threshold: r.tol,
            detail: witness,
        }
    }
}

impl fmt::Display for ReportLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "id={} status={} measured={} threshold={}",
            self.id,
            if self.passed { "pass" } else { "fail" },
            self.measured,
            self.threshold
        )?;
        if let Some(d) = &self.detail {
            write!(f, " {d}")?;
        }
        Ok(())
    }
}

fn join(v: &Vector) -> String {
    v.as_slice()
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub scenario: String,
    pub lines: Vec<ReportLine>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportLine> {
        self.lines.iter().filter(|l| !l.passed)
    }

    pub fn get(&self, id: &str) -> Option<&ReportLine> {
        self.lines.iter().find(|l| l.id == id)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# scenario={}\n", self.scenario);
        for l in &self.lines {
            out.push_str(&l.to_string());
            out.push('\n');
        }
        let failed = self.failures().count();
        out.push_str(&format!(
            "# summary checks={} passed={} failed={}\n",
            self.lines.len(),
            self.lines.len() - failed,
            failed
        ));
        out
    }

    fn push(&mut self, line: ReportLine) {
        self.lines.push(line);
    }

    fn push_check(&mut self, r: &CheckReport) {
        self.lines.push(ReportLine::from_check("", r));
    }
}

/// Report plus CSV artifacts keyed by file name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Bundle {
    pub report: Report,
    pub files: Vec<(String, String)>,
    pub path: Option<PathResult>,
    pub plain: Vec<Trajectory>,
    pub tikhonov: Vec<Trajectory>,
}

impl Bundle {
    /// Writes `report.txt` and every CSV into `dir/<scenario>/`.
    pub fn write_to(&self, dir: &Path) -> Result<PathBuf> {
        let target = dir.join(&self.report.scenario);
        fs::create_dir_all(&target)?;
        for (name, contents) in &self.files {
            fs::write(target.join(name), contents)?;
        }
        fs::write(target.join("report.txt"), self.report.to_text())?;
        Ok(target)
    }
}

/// Stages of a scenario run, in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Checks,
    Regpath,
    PlainFlow,
    TikhonovFlow,
    Monitors,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Checks,
        Stage::Regpath,
        Stage::PlainFlow,
        Stage::TikhonovFlow,
        Stage::Monitors,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Checks => "checks",
            Stage::Regpath => "regpath",
            Stage::PlainFlow => "plain-flow",
            Stage::TikhonovFlow => "tikhonov-flow",
            Stage::Monitors => "monitors",
        }
    }
}

/// Runs the requested stages in their fixed order.
pub fn run_stages(scn: &Scenario, stages: &[Stage]) -> Result<Bundle> {
    let mut bundle = Bundle {
        report: Report {
            scenario: scn.name.clone(),
            lines: Vec::new(),
        },
        ..Default::default()
    };
    for stage in Stage::ALL.iter().filter(|s| stages.contains(s)) {
        let result = match stage {
            Stage::Checks => stage_checks(scn, &mut bundle),
            Stage::Regpath => stage_regpath(scn, &mut bundle),
            Stage::PlainFlow => stage_plain(scn, &mut bundle),
            Stage::TikhonovFlow => stage_tikhonov(scn, &mut bundle),
            Stage::Monitors => stage_monitors(scn, &mut bundle),
        };
        result.map_err(|e| Error::Stage {
            scenario: scn.name.clone(),
            stage: stage.name().to_string(),
            source: Box::new(e),
        })?;
    }
    Ok(bundle)
}

/// Every stage: checks, path validations, both flows and the assumption monitors.
pub fn run_scenario(scn: &Scenario) -> Result<Bundle> {
    run_stages(scn, &Stage::ALL)
}

/// Operator-class and path validators only; no integration.
pub fn run_checks(scn: &Scenario) -> Result<Bundle> {
    run_stages(scn, &[Stage::Checks, Stage::Regpath])
}

fn stage_checks(scn: &Scenario, b: &mut Bundle) -> Result<()> {
    let c = &scn.checks;
    let op = &scn.operator;
    let declared = op.class();
    let mut claims: Vec<OperatorClass> = Vec::new();
    if declared != OperatorClass::Unclassified {
        claims.push(declared);
    }
    claims.extend(c.claims.iter().copied());
    for (k, claim) in claims.iter().enumerate() {
        let r = check_class(op, *claim, &mut scn.sampler(10 + k as u64), c.pairs, c.tol)?;
        b.report.push_check(&r);
    }
    if declared.is_nonexpansive() {
        if !matches!(scn.domain, ConvexSet::WholeSpace { .. }) {
            let r = check_maps_into(op, &scn.domain, &mut scn.sampler(2), c.pairs, c.tol)?;
            b.report.push_check(&r);
        }
        let r = check_residual_monotone(op, &mut scn.sampler(3), c.pairs, c.tol)?;
        b.report.push_check(&r);
    }
    if let Some((prox, gradient, beta)) = op.forward_backward_parts() {
        let r = check_forward_backward_inequality(op, &mut scn.sampler(4), c.pairs, c.tol)?;
        b.report.push_check(&r);
        let p = Operator::prox(prox.clone(), scn.dim)?;
        let r = check_class(
            &p,
            OperatorClass::FirmlyNonexpansive,
            &mut scn.sampler(5),
            c.pairs,
            c.tol,
        )?;
        b.report.push_check(&r);
        let bh = check_baillon_haddad(gradient, beta, &mut scn.sampler(6), c.pairs, c.tol)?;
        b.report.push_check(&bh.lipschitz);
        b.report.push_check(&bh.cocoercive);
    }
    if let Some(z) = &scn.analytics.fix_point {
        let defect = z.dist(&op.eval(z));
        b.report.push(ReportLine::at_most("fixed-point-residual", defect, 1e-8));
    }
    match scn.family.kind() {
        FamilyKind::InflatedIndicator { sets } => {
            let times = drift_times(scn);
            let ball = ConvexSet::ball(vec![0.0; scn.dim], c.drift_radius)?;
            let mut zs = DomainSampler::new(&ball, scn.seed.wrapping_add(7));
            let r = check_moreau(sets, &times, &mut zs, c.drift_samples, c.tol)?;
            b.report.push_check(&r);
            let env = scn.family.prox_drift_envelope().expect("inflated family");
            let r = check_prox_drift(&env, &times, &mut zs, c.drift_samples, c.tol)?;
            b.report.push_check(&r);
            let (lo, hi) = sets.uniform_bound();
            let bounded = scn
                .domain
                .includes(&ConvexSet::Box { lo, hi }, MEMBERSHIP_TOL)
                .unwrap_or(false);
            b.report
                .push(ReportLine::flag("set-family-uniform-bound", bounded));
        }
        FamilyKind::GradientDrift { direction, delta } => {
            let (prox, _, _) = op.forward_backward_parts().expect("validated");
            let times = drift_times(scn);
            let mut s = scn.sampler(8);
            let worst = (0..c.drift_samples)
                .map(|k| {
                    let t = times[k % times.len()];
                    let x = s.sample();
                    scn.family.drift(t, &x) - prox.mu * delta.value(t) * direction.norm()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            b.report
                .push(ReportLine::at_most("gradient-drift-bound", worst, c.tol));
        }
        _ => {}
    }
    if let Some(s) = &scn.schedule {
        let a = s.assess(&scn.domain, &monitor_grid(&scn.run.monitor_times));
        for (id, ok) in [
            ("schedule-eps-nonincreasing", a.eps_nonincreasing),
            ("schedule-eps-vanishes", a.eps_vanishes),
            ("schedule-eps-integral-diverges", a.eps_integral_diverges),
            ("schedule-anchor-in-domain", a.anchor_in_domain),
            ("schedule-anchor-speed-vanishes", a.anchor_speed_vanishes),
        ] {
            b.report.push(ReportLine::flag(id, ok));
        }
        b.report.push(ReportLine::flag(
            "family-drift-over-eps-vanishes",
            family_drift_vanishes(&scn.family, &s.eps),
        ));
    }
    Ok(())
}

fn drift_times(scn: &Scenario) -> Vec<f64> {
    let mut t = vec![0.0, 0.5, 1.0, 5.0];
    t.extend(scn.run.monitor_times.iter().copied());
    t
}

fn path_anchor(scn: &Scenario) -> Vector {
    match &scn.schedule {
        Some(s) => s.y_limit(),
        None => scn.domain.project_unchecked(&Vector::zeros(scn.dim)),
    }
}

fn stage_regpath(scn: &Scenario, b: &mut Bundle) -> Result<()> {
    let c = &scn.checks;
    if !c.regpath {
        return Ok(());
    }
    let solve = scn.solve_opts();
    let op = &scn.operator;
    let y = path_anchor(scn);
    let grid = geometric_grid(c.path_eps0, c.path_rho, c.path_steps)?;
    let opts = PathOptions {
        solve,
        eps_min: c.path_eps_min,
        path_tol: None,
        divergence_radius: c.divergence_radius,
    };
    let path = follow_path(op, &y, &grid, &opts)?;
    b.files.push(("path.csv".into(), path.to_csv()?));
    let last = path.points.last().expect("nonempty path");
    if scn.analytics.fix_empty {
        b.report.push(
            ReportLine::flag("regpath-diverged", path.diverged)
                .with_detail(format!("norm={} epsilon={}", last.point.norm(), last.epsilon)),
        );
    } else {
        b.report
            .push(ReportLine::flag("regpath-bounded", !path.diverged));
        if let Some(target) = &scn.analytics.proj_fix_anchor {
            b.report.push(ReportLine::at_most(
                "regpath-limit",
                path.limit_estimate.dist(target),
                c.path_limit_tol,
            ));
        }
    }
    b.report.push(ReportLine::at_most(
        "regpath-anchor-distance-monotone",
        path.anchor_distance_violation(),
        2.0 * solve.tol,
    ));
    b.report.push(ReportLine::at_most(
        "regpath-continuity",
        path.continuity_violation(),
        10.0 * solve.tol,
    ));
    b.path = Some(path);

    let mut s = scn.sampler(20);
    let mut worst = 0.0f64;
    for _ in 0..c.resolvent_samples {
        let lambda = s.log_uniform(1e-2, 10.0);
        let mu = lambda * s.log_uniform(1.01, 100.0);
        let y = s.sample();
        worst = worst.max(check_resolvent_identity(op, lambda, mu, &y, &solve)?);
    }
    if c.resolvent_samples > 0 {
        b.report.push(ReportLine::at_most(
            "regpath-resolvent-identity",
            worst,
            10.0 * solve.tol,
        ));
    }

    let mut s = scn.sampler(21);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..c.lipschitz_samples {
        let e1 = s.log_uniform(1e-2, 10.0);
        let e2 = s.log_uniform(1e-2, 10.0);
        let x = s.sample();
        worst = worst.max(check_path_lipschitz(op, &x, e1, e2, &solve)?.worst_margin);
    }
    if c.lipschitz_samples > 0 {
        b.report.push(ReportLine::at_most(
            "regpath-lipschitz",
            worst,
            10.0 * solve.tol,
        ));
    }

    if c.fejer_samples > 0 {
        if let Some(z) = &scn.analytics.fix_point {
            let mut s = scn.sampler(22);
            let mut worst = f64::NEG_INFINITY;
            for _ in 0..c.fejer_samples {
                let eps = s.log_uniform(1e-2, 10.0);
                let y = s.sample();
                worst = worst.max(check_fejer_triple(op, eps, &y, z, &solve)?.worst_margin);
            }
            b.report.push(ReportLine::at_most(
                "regpath-fejer-triple",
                worst,
                10.0 * solve.tol,
            ));
        }
        let mut worst = f64::NEG_INFINITY;
        for (k, eps) in [0.1, 1.0, 10.0].into_iter().enumerate() {
            let mut s = scn.sampler(23 + k as u64);
            let pairs = c.fejer_samples.div_ceil(3);
            worst = worst.max(check_reg_firmly_nonexpansive(op, eps, &mut s, pairs, &solve)?.worst_margin);
        }
        b.report.push(ReportLine::at_most(
            "regpath-firmly-nonexpansive",
            worst,
            10.0 * solve.tol,
        ));
    }
    Ok(())
}

fn stage_plain(scn: &Scenario, b: &mut Bundle) -> Result<()> {
    if !scn.run.plain {
        return Ok(());
    }
    let r = &scn.run;
    let system = FlowSystem::plain(scn.operator.clone(), scn.domain.clone())?;
    let opts = IntegrateOptions {
        method: r.plain_method,
        t_end: r.plain_horizon,
        grid: r.plain_grid.clone(),
    };
    let bounded_domain = !matches!(scn.domain, ConvexSet::WholeSpace { .. });
    for (i, x0) in r.x0.iter().enumerate() {
        let traj = simulate(&system, x0, &opts, &DiagnosticOptions::default())?;
        b.files.push((format!("plain_{i}.csv"), traj.to_csv()?));
        if bounded_domain {
            b.report.push(ReportLine::at_most(
                format!("plain-invariance-{i}"),
                traj.max_set_violation(),
                r.invariance_tol,
            ));
        }
        let fix_dist = scn.analytics.fix_distance_x0.as_ref().map(|d| d[i]);
        let contraction = match (scn.analytics.alpha, &scn.analytics.fix_point) {
            (Some(a), Some(z)) => Some((a, z)),
            _ => None,
        };
        if fix_dist.is_some() {
            let table = emit_rate_table(&traj, fix_dist, contraction, r.rate_t_min, r.rate_slack)?;
            b.files.push((format!("rate_{i}.csv"), table.to_csv()?));
            b.report.push(ReportLine::at_most(
                format!("plain-residual-rate-{i}"),
                table.max_ratio(),
                r.rate_slack,
            ));
        }
        if let Some(z) = &scn.analytics.fix_point {
            b.report.push(ReportLine::at_most(
                format!("plain-fejer-{i}"),
                fejer_violation(&traj, z).max(0.0),
                r.fejer_tol,
            ));
        }
        if let (Some(alpha), Some(z)) = (scn.analytics.alpha, &scn.analytics.fix_point) {
            b.report.push(ReportLine::at_most(
                format!("plain-exponential-{i}"),
                exponential_ratio(&traj, z, alpha),
                1.0 + r.exp_slack,
            ));
            let half = energy_until(&traj, 0.5 * r.plain_horizon);
            let full = energy_until(&traj, r.plain_horizon);
            let increment = if half > 0.0 { (full - half) / half } else { 0.0 };
            b.report.push(ReportLine::at_most(
                format!("plain-energy-increment-{i}"),
                increment,
                r.energy_tol,
            ));
        }
        b.plain.push(traj);
    }
    Ok(())
}

fn stage_tikhonov(scn: &Scenario, b: &mut Bundle) -> Result<()> {
    let r = &scn.run;
    let Some(schedule) = scn.schedule.clone() else {
        return Ok(());
    };
    if !r.tikhonov {
        return Ok(());
    }
    let system = FlowSystem::tikhonov(scn.family.clone(), scn.domain.clone(), schedule)?;
    let opts = IntegrateOptions {
        method: r.method,
        t_end: r.horizon,
        grid: r.grid.clone(),
    };
    let diag = DiagnosticOptions {
        fix_distance: scn.analytics.fix_distance_anchor,
        solve: scn.solve_opts(),
    };
    let certified = scn.assumptions_certified();
    let bounded_domain = !matches!(scn.domain, ConvexSet::WholeSpace { .. });
    let mut endpoints = Vec::new();
    for (i, x0) in r.x0.iter().enumerate() {
        let traj = simulate(&system, x0, &opts, &diag)?;
        b.files.push((format!("tikhonov_{i}.csv"), traj.to_csv()?));
        if bounded_domain {
            b.report.push(ReportLine::at_most(
                format!("tikhonov-invariance-{i}"),
                traj.max_set_violation(),
                r.invariance_tol,
            ));
        }
        if let (true, Some(target)) = (r.selection, &scn.analytics.proj_fix_anchor) {
            b.report.push(ReportLine::at_most(
                format!("tikhonov-selection-{i}"),
                traj.endpoint().dist(target),
                r.select_tol,
            ));
        }
        if certified {
            let last = traj
                .diagnostics
                .last()
                .and_then(|d| d.lyapunov)
                .unwrap_or(f64::NAN);
            b.report.push(
                ReportLine::flag(
                    format!("tikhonov-lyapunov-{i}"),
                    lyapunov_settles(&traj, r.lyapunov_from, r.lyapunov_threshold),
                )
                .with_detail(format!("final={last}")),
            );
        }
        endpoints.push(traj.endpoint().clone());
        b.tikhonov.push(traj);
    }
    if r.selection && endpoints.len() > 1 {
        let spread = endpoints
            .iter()
            .enumerate()
            .flat_map(|(i, a)| endpoints[i + 1..].iter().map(move |c| a.dist(c)))
            .fold(0.0, f64::max);
        b.report.push(ReportLine::at_most(
            "tikhonov-start-independence",
            spread,
            r.pairwise_tol,
        ));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsiSample {
    pub t: f64,
    pub psi: f64,
    pub psi_over_eps: f64,
    /// `beta (1 + t)^(beta - 1) d` when the closed form applies.
    pub prediction: Option<f64>,
}

/// `psi / eps` at `times` for a scenario, with the closed-form prediction when available.
pub fn psi_series(scn: &Scenario, times: &[f64]) -> Result<Vec<PsiSample>> {
    let s = scn
        .schedule
        .as_ref()
        .ok_or_else(|| Error::Config("psi monitor needs a schedule".into()))?;
    let d = scn.analytics.fix_distance_anchor.ok_or_else(|| {
        Error::Config("psi monitor needs analytics.fix_distance_anchor or fix_set".into())
    })?;
    let predicted = closed_form_psi(scn);
    times
        .iter()
        .map(|&t| {
            let p = psi(t, &scn.family, s, d, &scn.solve_opts())?;
            Ok(PsiSample {
                t,
                psi: p.psi,
                psi_over_eps: p.psi_over_eps,
                prediction: predicted.map(|beta| psi_over_eps_prediction(beta, t, d)),
            })
        })
        .collect()
}

/// `Some(beta)` when psi / eps has the closed form `beta (1 + t)^(beta - 1) d`.
pub fn closed_form_psi(scn: &Scenario) -> Option<f64> {
    let s = scn.schedule.as_ref()?;
    match (&s.eps, &s.anchor, scn.family.is_constant()) {
        (EpsilonSchedule::Power { eps0, beta }, AnchorPath::Constant { .. }, true)
            if *eps0 == 1.0 =>
        {
            Some(*beta)
        }
        _ => None,
    }
}

fn stage_monitors(scn: &Scenario, b: &mut Bundle) -> Result<()> {
    if scn.schedule.is_none() || scn.analytics.fix_distance_anchor.is_none() {
        return Ok(());
    }
    let series = psi_series(scn, &scn.run.monitor_times)?;
    let mut table = CsvTable::new(
        ["t", "psi", "psi_over_eps", "prediction"]
            .map(String::from)
            .to_vec(),
    );
    for r in &series {
        table.push(vec![
            r.t.to_string(),
            r.psi.to_string(),
            r.psi_over_eps.to_string(),
            crate::output::opt_cell(r.prediction),
        ]);
    }
    b.files.push(("psi.csv".into(), write_csv(&table)?));
    let decreasing = series
        .windows(2)
        .all(|w| w[1].psi_over_eps < w[0].psi_over_eps);
    let last = series.last().map_or(f64::NAN, |r| r.psi_over_eps);
    b.report.push(
        ReportLine::flag("psi-over-eps-decreasing", decreasing)
            .with_detail(format!("final={last}")),
    );
    let worst_mismatch = series
        .iter()
        .filter_map(|r| r.prediction.map(|p| ((r.psi_over_eps - p) / p).abs()))
        .reduce(f64::max);
    if let Some(m) = worst_mismatch {
        b.report
            .push(ReportLine::at_most("psi-over-eps-closed-form", m, 1e-9));
    }
    b.report.push(ReportLine::flag(
        "assumptions-certified",
        scn.assumptions_certified() && decreasing,
    ));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_parses_and_builds() {
        for name in builtin_names() {
            let scn = Scenario::load(&format!("builtin:{name}"));
            assert!(scn.is_ok(), "{name}: {:?}", scn.err());
        }
        assert!(matches!(
            Scenario::load("builtin:nope"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn bad_step_is_rejected_at_load() {
        let text = r#"
            name = "bad-step"
            dim = 2
            [operator]
            kind = "forward-backward"
            mu = 2.5
            phi = { kind = "l1", weight = 1.0 }
            gradient = { kind = "quadratic-gradient", weights = [1.0, 1.0], center = [2.0, 0.5] }
        "#;
        let cfg = ScenarioConfig::parse(text).unwrap();
        assert!(matches!(Scenario::from_config(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"
            name = "typo"
            dim = 2
            seeed = 3
            [operator]
            kind = "identity"
        "#;
        assert!(matches!(ScenarioConfig::parse(text), Err(Error::Config(_))));
    }

    #[test]
    fn analytics_from_fix_set() {
        let scn = Scenario::load("builtin:line-select").unwrap();
        let a = &scn.analytics;
        assert_eq!(a.proj_fix_anchor.as_ref().unwrap().as_slice(), &[3.0, 0.0]);
        assert_eq!(a.fix_distance_anchor, Some(4.0));
        assert!(scn.assumptions_certified());
    }

    #[test]
    fn doubling_claim_fails_with_witness() {
        let scn = Scenario::load("builtin:doubling").unwrap();
        let bundle = run_checks(&scn).unwrap();
        let fail = bundle.report.failures().next().expect("a failing line");
        assert!(fail.id.starts_with("class:scaling:nonexpansive"));
        assert!(fail.detail.as_ref().unwrap().contains("witness_x="));
    }

    #[test]
    fn report_lines_are_key_value() {
        let l = ReportLine::at_most("x", 0.5, 1.0);
        assert_eq!(l.to_string(), "id=x status=pass measured=0.5 threshold=1");
        let text = Report {
            scenario: "s".into(),
            lines: vec![l, ReportLine::flag("y", false)],
        }
        .to_text();
        assert!(text.ends_with("# summary checks=2 passed=1 failed=1\n"));
    }
}
