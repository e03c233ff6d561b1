use proptest::prelude::*;

use tikflow::operators::{
    make_forward_backward, prox, residual, Operator, ProxKind, ProxSpec,
};
use tikflow::regpath::{geometric_grid, solve_reg_point, SolveOptions};
use tikflow::spaces::{hausdorff, ConvexSet, Vector};

const DIM: usize = 3;

fn coords(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, n)
}

fn point() -> impl Strategy<Value = Vector> {
    coords(DIM).prop_map(|c| Vector::new(c).unwrap())
}

fn nonzero_normal() -> impl Strategy<Value = Vec<f64>> {
    coords(DIM).prop_filter("normal away from zero", |a| {
        a.iter().map(|x| x * x).sum::<f64>() > 0.1
    })
}

fn a_box() -> impl Strategy<Value = ConvexSet> {
    (coords(DIM), prop::collection::vec(0.0..4.0f64, DIM)).prop_map(|(lo, w)| {
        let hi = lo.iter().zip(&w).map(|(l, w)| l + w).collect();
        ConvexSet::new_box(lo, hi).unwrap()
    })
}

fn a_ball() -> impl Strategy<Value = ConvexSet> {
    (coords(DIM), 0.0..4.0f64).prop_map(|(c, r)| ConvexSet::ball(c, r).unwrap())
}

fn a_set() -> impl Strategy<Value = ConvexSet> {
    prop_oneof![
        a_box(),
        a_ball(),
        (nonzero_normal(), -3.0..3.0f64).prop_map(|(a, b)| ConvexSet::halfspace(a, b).unwrap()),
        (nonzero_normal(), -3.0..3.0f64).prop_map(|(a, b)| ConvexSet::hyperplane(a, b).unwrap()),
        (coords(DIM), nonzero_normal())
            .prop_map(|(base, d)| {
                let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
                ConvexSet::affine(base, vec![d.iter().map(|x| x / n).collect()]).unwrap()
            }),
        (a_box(), coords(DIM), 0.2..3.0f64)
            .prop_map(|(b, s, k)| ConvexSet::transformed(b, s, k).unwrap()),
    ]
}

fn firm_margin(px: &Vector, py: &Vector, x: &Vector, y: &Vector) -> f64 {
    let d = px - py;
    let r = &(x - px) - &(y - py);
    d.norm_sq() + r.norm_sq() - (x - y).norm_sq()
}

fn scale(x: &Vector, y: &Vector) -> f64 {
    1.0 + x.norm_sq() + y.norm_sq()
}

/// Vertices of an axis-aligned box.
fn vertices(lo: &[f64], hi: &[f64]) -> Vec<Vector> {
    (0..1usize << lo.len())
        .map(|mask| {
            Vector::new(
                (0..lo.len())
                    .map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] })
                    .collect(),
            )
            .unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projection_lands_in_set_and_is_idempotent(c in a_set(), x in point()) {
        let p = c.project(&x).unwrap();
        prop_assert!(c.contains(&p, 1e-9));
        let pp = c.project(&p).unwrap();
        prop_assert!(pp.dist(&p) <= 1e-9 * (1.0 + p.norm()));
    }

    #[test]
    fn projection_variational_inequality(c in a_set(), x in point(), z in point()) {
        let p = c.project(&x).unwrap();
        let zc = c.project(&z).unwrap();
        let ip = (&x - &p).dot(&(&zc - &p));
        prop_assert!(ip <= 1e-10 * scale(&x, &z), "inner product {ip}");
    }

    #[test]
    fn projection_firmly_nonexpansive(c in a_set(), x in point(), y in point()) {
        let m = firm_margin(&c.project(&x).unwrap(), &c.project(&y).unwrap(), &x, &y);
        prop_assert!(m <= 1e-10 * scale(&x, &y), "margin {m}");
    }

    #[test]
    fn prox_firmly_nonexpansive(
        w in 0.0..3.0f64,
        mu in 0.05..5.0f64,
        center in point(),
        x in point(),
        y in point(),
    ) {
        for kind in [
            ProxKind::L1 { weight: w },
            ProxKind::Quadratic { center: center.clone(), weight: w },
        ] {
            let spec = ProxSpec::new(kind, mu).unwrap();
            let m = firm_margin(&prox(&spec, &x).unwrap(), &prox(&spec, &y).unwrap(), &x, &y);
            prop_assert!(m <= 1e-10 * scale(&x, &y), "margin {m}");
        }
    }

    #[test]
    fn squared_distance_gradient_matches_finite_differences(c in a_set(), x in point()) {
        let h = 1e-5;
        let d2 = |z: &Vector| c.distance(z).unwrap().powi(2);
        let grad = (&x - &c.project(&x).unwrap()).scaled(2.0);
        let fd: Vec<f64> = (0..DIM)
            .map(|i| {
                let mut e = vec![0.0; DIM];
                e[i] = h;
                let e = Vector::new(e).unwrap();
                (d2(&(&x + &e)) - d2(&(&x - &e))) / (2.0 * h)
            })
            .collect();
        let fd = Vector::new(fd).unwrap();
        // kinks of d^2 are only C^1; a relative error budget plus an absolute floor
        prop_assert!(
            fd.dist(&grad) <= 1e-5 * grad.norm().max(1.0),
            "fd {fd:?} analytic {grad:?}"
        );
    }

    #[test]
    fn hausdorff_symmetric_and_triangle(a in a_ball(), b in a_ball(), c in a_ball()) {
        let ab = hausdorff(&a, &b).unwrap();
        let ba = hausdorff(&b, &a).unwrap();
        let ac = hausdorff(&a, &c).unwrap();
        let cb = hausdorff(&c, &b).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
        prop_assert!(ab <= ac + cb + 1e-12);
        prop_assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn box_hausdorff_matches_vertex_oracle(a in a_box(), b in a_box()) {
        // distance to a convex set is convex, so its sup over a polytope sits at a vertex
        let excess = |p: &ConvexSet, q: &ConvexSet| {
            let (lo, hi) = p.bounding_box().unwrap();
            vertices(lo.as_slice(), hi.as_slice())
                .iter()
                .map(|v| q.distance(v).unwrap())
                .fold(0.0, f64::max)
        };
        let oracle = excess(&a, &b).max(excess(&b, &a));
        let h = hausdorff(&a, &b).unwrap();
        prop_assert!((h - oracle).abs() <= 1e-10, "{h} vs {oracle}");
        let ba = hausdorff(&b, &a).unwrap();
        prop_assert!((h - ba).abs() <= 1e-12);
    }

    #[test]
    fn residual_of_forward_backward_is_monotone(
        weights in prop::collection::vec(0.1..4.0f64, DIM),
        center in point(),
        lam in 0.0..2.0f64,
        frac in 0.05..0.95f64,
        x in point(),
        y in point(),
    ) {
        let b = Operator::quadratic_gradient(&weights, center).unwrap();
        let beta = 1.0 / weights.iter().cloned().fold(0.0, f64::max);
        let spec = ProxSpec::new(ProxKind::L1 { weight: lam }, 1.0).unwrap();
        let t = make_forward_backward(&spec, &b, frac * 2.0 * beta).unwrap();
        let gx = residual(&t, &x).unwrap();
        let gy = residual(&t, &y).unwrap();
        let ip = (&gx - &gy).dot(&(&x - &y));
        prop_assert!(ip >= -1e-10 * scale(&x, &y), "inner product {ip}");
    }

    #[test]
    fn regularized_point_solves_equation_and_stays_near_anchor_as_eps_grows(
        c in a_set(),
        y in point(),
        e1 in 0.05..10.0f64,
        e2 in 0.05..10.0f64,
    ) {
        let t = Operator::projection(c).unwrap();
        let opts = SolveOptions::with_tol(1e-10);
        let (hi, lo) = if e1 >= e2 { (e1, e2) } else { (e2, e1) };
        let a = solve_reg_point(&t, hi, &y, &opts, None).unwrap();
        let b = solve_reg_point(&t, lo, &y, &opts, None).unwrap();
        for p in [&a, &b] {
            let g = residual(&t, &p.point).unwrap();
            let eq = &(&p.point - &y).scaled(p.epsilon) + &g;
            prop_assert!(eq.norm() <= p.residual_norm + 1e-12);
            prop_assert!(p.residual_norm <= 1e-9 * (1.0 + y.norm()));
        }
        prop_assert!(a.dist_to_anchor() <= b.dist_to_anchor() + 1e-8);
    }

    #[test]
    fn geometric_grid_strictly_decreasing(eps0 in 1e-3..1e3f64, rho in 0.05..0.95f64, n in 1usize..40) {
        let g = geometric_grid(eps0, rho, n).unwrap();
        prop_assert_eq!(g.len(), n + 1);
        prop_assert!(g.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
    }

    #[test]
    fn set_roundtrips_through_toml(c in a_set()) {
        #[derive(serde::Serialize, serde::Deserialize, PartialEq, Debug)]
        struct Wrap { set: ConvexSet }
        let w = Wrap { set: c };
        let text = toml::to_string(&w).unwrap();
        let back: Wrap = toml::from_str(&text).unwrap();
        prop_assert_eq!(back, w);
    }
}
