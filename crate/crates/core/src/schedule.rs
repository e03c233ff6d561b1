//! Regularization schedules: the vanishing weight `eps(t)` and the anchor path `y(t)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spaces::{ConvexSet, Vector, MEMBERSHIP_TOL};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EpsilonSchedule {
    /// `eps0 * (1 + t)^(-beta)`
    Power { eps0: f64, beta: f64 },
    Constant { eps0: f64 },
    /// No regularization; the Tikhonov field degenerates to the plain one.
    Zero,
}

impl EpsilonSchedule {
    pub fn power(eps0: f64, beta: f64) -> Result<Self> {
        let s = EpsilonSchedule::Power { eps0, beta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EpsilonSchedule::Power { eps0, beta } if eps0 > 0.0 && beta >= 0.0 && beta.is_finite() => {
                Ok(())
            }
            EpsilonSchedule::Constant { eps0 } if eps0 > 0.0 && eps0.is_finite() => Ok(()),
            EpsilonSchedule::Zero => Ok(()),
            _ => Err(Error::Parameter(format!("invalid epsilon schedule {self:?}"))),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            EpsilonSchedule::Power { eps0, beta } => eps0 * (1.0 + t).powf(-beta),
            EpsilonSchedule::Constant { eps0 } => eps0,
            EpsilonSchedule::Zero => 0.0,
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            EpsilonSchedule::Power { eps0, beta } => -beta * eps0 * (1.0 + t).powf(-beta - 1.0),
            _ => 0.0,
        }
    }

    /// `int_0^t eps(s) ds`
    pub fn integral(&self, t: f64) -> f64 {
        match *self {
            EpsilonSchedule::Power { eps0, beta } => {
                if (beta - 1.0).abs() < 1e-15 {
                    eps0 * t.ln_1p()
                } else {
                    eps0 * ((1.0 + t).powf(1.0 - beta) - 1.0) / (1.0 - beta)
                }
            }
            EpsilonSchedule::Constant { eps0 } => eps0 * t,
            EpsilonSchedule::Zero => 0.0,
        }
    }

    pub fn initial(&self) -> f64 {
        self.value(0.0)
    }

    /// `eps(t) -> 0`, decided from the schedule kind.
    pub fn vanishes(&self) -> bool {
        matches!(*self, EpsilonSchedule::Power { beta, .. } if beta > 0.0)
    }

    /// `int_0^inf eps = inf`, decided from the schedule kind.
    pub fn integral_diverges(&self) -> bool {
        match *self {
            EpsilonSchedule::Power { beta, .. } => beta <= 1.0,
            EpsilonSchedule::Constant { .. } => true,
            EpsilonSchedule::Zero => false,
        }
    }

    /// `eps_dot / eps^2 -> 0`, decided from the schedule kind.
    pub fn slow_decay(&self) -> bool {
        match *self {
            EpsilonSchedule::Power { beta, .. } => beta < 1.0,
            EpsilonSchedule::Constant { .. } => true,
            EpsilonSchedule::Zero => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnchorPath {
    Constant {
        y: Vector,
    },
    /// `limit + exp(-rate * t) * (start - limit)`
    Moving {
        start: Vector,
        limit: Vector,
        rate: f64,
    },
    /// `inner(1 / eps(t))`
    Warped {
        inner: Box<AnchorPath>,
        eps: EpsilonSchedule,
    },
}

impl AnchorPath {
    pub fn constant(y: Vector) -> Self {
        AnchorPath::Constant { y }
    }

    pub fn dim(&self) -> usize {
        match self {
            AnchorPath::Constant { y } => y.dim(),
            AnchorPath::Moving { limit, .. } => limit.dim(),
            AnchorPath::Warped { inner, .. } => inner.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AnchorPath::Constant { .. } => Ok(()),
            AnchorPath::Moving { start, limit, rate } => {
                start.check_dim(limit.dim())?;
                if *rate >= 0.0 && rate.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!("anchor rate {rate} must be >= 0")))
                }
            }
            AnchorPath::Warped { inner, eps } => {
                inner.validate()?;
                eps.validate()?;
                if matches!(eps, EpsilonSchedule::Zero) {
                    return Err(Error::Parameter("time warp needs a positive schedule".into()));
                }
                Ok(())
            }
        }
    }

    pub fn value(&self, t: f64) -> Vector {
        match self {
            AnchorPath::Constant { y } => y.clone(),
            AnchorPath::Moving { start, limit, rate } => {
                limit.axpy((-rate * t).exp(), &(start - limit))
            }
            AnchorPath::Warped { inner, eps } => inner.value(1.0 / eps.value(t)),
        }
    }

    pub fn derivative(&self, t: f64) -> Vector {
        match self {
            AnchorPath::Constant { y } => Vector::zeros(y.dim()),
            AnchorPath::Moving { start, limit, rate } => {
                (start - limit).scaled(-rate * (-rate * t).exp())
            }
            AnchorPath::Warped { inner, eps } => {
                let e = eps.value(t);
                inner
                    .derivative(1.0 / e)
                    .scaled(-eps.derivative(t) / (e * e))
            }
        }
    }

    pub fn limit(&self) -> Vector {
        match self {
            AnchorPath::Constant { y } => y.clone(),
            AnchorPath::Moving { limit, rate, start } => {
                if *rate > 0.0 {
                    limit.clone()
                } else {
                    start.clone()
                }
            }
            AnchorPath::Warped { inner, .. } => inner.limit(),
        }
    }
}

/// Regularization data `(eps, y)` driving the Tikhonov flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub eps: EpsilonSchedule,
    pub anchor: AnchorPath,
}

/// Outcome of checking a schedule against the convergence assumptions.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleAssessment {
    pub eps_nonincreasing: bool,
    pub eps_vanishes: bool,
    pub eps_integral_diverges: bool,
    pub eps_slow_decay: bool,
    pub anchor_in_domain: bool,
    pub anchor_speed_vanishes: bool,
}

impl ScheduleAssessment {
    pub fn all(&self) -> bool {
        self.eps_nonincreasing
            && self.eps_vanishes
            && self.eps_integral_diverges
            && self.eps_slow_decay
            && self.anchor_in_domain
            && self.anchor_speed_vanishes
    }
}

impl Schedule {
    pub fn new(eps: EpsilonSchedule, anchor: AnchorPath) -> Result<Self> {
        let s = Schedule { eps, anchor };
        s.validate()?;
        Ok(s)
    }

    pub fn constant_anchor(eps: EpsilonSchedule, y: Vector) -> Result<Self> {
        Self::new(eps, AnchorPath::constant(y))
    }

    pub fn validate(&self) -> Result<()> {
        self.eps.validate()?;
        self.anchor.validate()
    }

    pub fn eps(&self, t: f64) -> f64 {
        self.eps.value(t)
    }

    pub fn eps_dot(&self, t: f64) -> f64 {
        self.eps.derivative(t)
    }

    pub fn y(&self, t: f64) -> Vector {
        self.anchor.value(t)
    }

    pub fn y_dot(&self, t: f64) -> Vector {
        self.anchor.derivative(t)
    }

    pub fn y_limit(&self) -> Vector {
        self.anchor.limit()
    }

    /// Symbolic checks by kind plus sampled monotonicity and membership on `times`.
    pub fn assess(&self, domain: &ConvexSet, times: &[f64]) -> ScheduleAssessment {
        let eps_nonincreasing = times
            .windows(2)
            .all(|w| self.eps(w[1]) <= self.eps(w[0]) * (1.0 + 1e-14));
        let anchor_in_domain = domain.contains(&self.y_limit(), MEMBERSHIP_TOL)
            && times
                .iter()
                .all(|&t| domain.contains(&self.y(t), MEMBERSHIP_TOL));
        ScheduleAssessment {
            eps_nonincreasing,
            eps_vanishes: self.eps.vanishes(),
            eps_integral_diverges: self.eps.integral_diverges(),
            eps_slow_decay: self.eps.slow_decay(),
            anchor_in_domain,
            anchor_speed_vanishes: anchor_speed_vanishes(&self.anchor),
        }
    }
}

fn anchor_speed_vanishes(anchor: &AnchorPath) -> bool {
    match anchor {
        AnchorPath::Constant { .. } => true,
        AnchorPath::Moving { start, limit, rate } => *rate > 0.0 || start == limit,
        AnchorPath::Warped { inner, eps } => anchor_speed_vanishes(inner) && eps.slow_decay(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_schedule_derivative_matches_finite_difference() {
        let s = EpsilonSchedule::power(2.0, 0.5).unwrap();
        for t in [0.0, 1.0, 10.0, 1e3] {
            let h = 1e-4 * (1.0 + t);
            let fd = (s.value(t + h) - s.value(t - h)) / (2.0 * h);
            assert!((fd - s.derivative(t)).abs() <= 1e-6 * s.derivative(t).abs());
        }
    }

    #[test]
    fn power_schedule_integral() {
        let s = EpsilonSchedule::power(1.0, 0.5).unwrap();
        // 2 (sqrt(1 + t) - 1)
        assert!((s.integral(48.0) - 12.0).abs() < 1e-12);
        let harmonic = EpsilonSchedule::power(1.0, 1.0).unwrap();
        assert!((harmonic.integral(std::f64::consts::E - 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symbolic_properties_by_kind() {
        let good = EpsilonSchedule::power(1.0, 0.5).unwrap();
        assert!(good.vanishes() && good.integral_diverges() && good.slow_decay());
        let fast = EpsilonSchedule::power(1.0, 1.5).unwrap();
        assert!(!fast.integral_diverges());
        let harmonic = EpsilonSchedule::power(1.0, 1.0).unwrap();
        assert!(harmonic.integral_diverges() && !harmonic.slow_decay());
        // eps_dot / eps^2 = -beta (1 + t)^(beta - 1)
        let t = 99.0;
        let ratio = good.derivative(t) / good.value(t).powi(2);
        assert!((ratio + 0.5 * 100f64.powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn moving_anchor() {
        let a = AnchorPath::Moving {
            start: Vector::new(vec![1.0, 1.0]).unwrap(),
            limit: Vector::new(vec![0.0, 0.0]).unwrap(),
            rate: 2.0,
        };
        let t = 0.3;
        let e = (-0.6f64).exp();
        assert!(a.value(t).dist(&Vector::new(vec![e, e]).unwrap()) < 1e-15);
        assert!(a.derivative(t).dist(&Vector::new(vec![-2.0 * e, -2.0 * e]).unwrap()) < 1e-15);
        assert_eq!(a.limit(), Vector::new(vec![0.0, 0.0]).unwrap());
    }

    #[test]
    fn assessment_flags_unbounded_integral() {
        let unit = ConvexSet::cube(2, 0.0, 1.0).unwrap();
        let times: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let y = Vector::new(vec![0.5, 0.5]).unwrap();
        let ok = Schedule::constant_anchor(EpsilonSchedule::power(1.0, 0.5).unwrap(), y.clone())
            .unwrap();
        assert!(ok.assess(&unit, &times).all());
        let bad =
            Schedule::constant_anchor(EpsilonSchedule::power(1.0, 2.0).unwrap(), y).unwrap();
        assert!(!bad.assess(&unit, &times).eps_integral_diverges);
        let outside = Schedule::constant_anchor(
            EpsilonSchedule::power(1.0, 0.5).unwrap(),
            Vector::new(vec![3.0, 0.0]).unwrap(),
        )
        .unwrap();
        assert!(!outside.assess(&unit, &times).anchor_in_domain);
    }
}
