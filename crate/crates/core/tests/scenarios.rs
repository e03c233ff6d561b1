use tikflow::flow::{simulate, DiagnosticOptions, FlowSystem, IntegrateOptions, Method, SampleGrid};
use tikflow::operators::{Operator, OperatorFamily};
use tikflow::scenario::{builtin_names, run_scenario, Scenario};
use tikflow::schedule::{AnchorPath, EpsilonSchedule, Schedule};
use tikflow::spaces::{ConvexSet, Vector};

fn v(c: &[f64]) -> Vector {
    Vector::new(c.to_vec()).unwrap()
}

#[test]
fn every_builtin_except_the_false_claim_passes() {
    for name in builtin_names() {
        let scn = Scenario::load(&format!("builtin:{name}")).unwrap();
        let bundle = run_scenario(&scn).unwrap();
        let failures: Vec<String> = bundle.report.failures().map(|l| l.to_string()).collect();
        if name == "doubling" {
            assert!(!failures.is_empty());
        } else {
            assert!(failures.is_empty(), "{name}: {failures:#?}");
        }
    }
}

#[test]
fn certified_scenarios_report_their_assumptions() {
    for name in ["line-select", "lasso-select", "moving-box", "contraction"] {
        let scn = Scenario::load(&format!("builtin:{name}")).unwrap();
        assert!(scn.assumptions_certified(), "{name}");
    }
}

#[test]
fn zero_schedule_reduces_to_the_plain_flow() {
    let op = Operator::scaled_rotation(0.5, 0.3).unwrap();
    let plane = ConvexSet::whole_space(2).unwrap();
    let opts = IntegrateOptions {
        method: Method::Rk4 { step: 1e-3 },
        t_end: 5.0,
        grid: SampleGrid::Uniform { count: 50 },
    };
    let diag = DiagnosticOptions::default();
    let x0 = v(&[2.0, -1.0]);
    let plain = simulate(&FlowSystem::plain(op.clone(), plane.clone()).unwrap(), &x0, &opts, &diag)
        .unwrap();
    let sched = Schedule {
        eps: EpsilonSchedule::Zero,
        anchor: AnchorPath::Constant { y: v(&[7.0, 7.0]) },
    };
    let tik = FlowSystem::tikhonov(OperatorFamily::constant(op), plane, sched).unwrap();
    let tik = simulate(&tik, &x0, &opts, &diag).unwrap();
    for (a, b) in plain.states.iter().zip(&tik.states) {
        assert!(a.dist(b) <= 1e-12);
    }
}

#[test]
fn tikhonov_flow_on_a_halfspace_selects_the_anchor_projection() {
    // Fix T = {x2 <= 1}; the anchor (2, 3) projects to (2, 1)
    let set = ConvexSet::halfspace(vec![0.0, 1.0], 1.0).unwrap();
    let op = Operator::projection(set).unwrap();
    let sched = Schedule {
        eps: EpsilonSchedule::Power { eps0: 1.0, beta: 0.5 },
        anchor: AnchorPath::Constant { y: v(&[2.0, 3.0]) },
    };
    let sys = FlowSystem::tikhonov(
        OperatorFamily::constant(op),
        ConvexSet::whole_space(2).unwrap(),
        sched,
    )
    .unwrap();
    let opts = IntegrateOptions {
        method: Method::adaptive(1e-9, 1e-12),
        t_end: 1e5,
        grid: SampleGrid::Log { count: 60, first: 1e-2 },
    };
    let traj = simulate(&sys, &v(&[-4.0, 8.0]), &opts, &DiagnosticOptions::default()).unwrap();
    // distance to the selected point behaves like eps(T) * d = 2 / sqrt(1 + 1e5)
    let err = traj.endpoint().dist(&v(&[2.0, 1.0]));
    assert!(err <= 1e-2, "{err}");
}
