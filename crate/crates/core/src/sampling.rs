//! Seeded samplers over convex sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::spaces::{ConvexSet, Vector};

/// Spread of the Gaussian used for unbounded sets.
pub const DEFAULT_SPREAD: f64 = 5.0;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws points of a convex set: uniform on boxes and balls, projected
/// Gaussian on everything else.
#[derive(Clone, Debug)]
pub struct DomainSampler {
    set: ConvexSet,
    spread: f64,
    rng: ChaCha8Rng,
}

impl DomainSampler {
    pub fn new(set: &ConvexSet, seed: u64) -> Self {
        DomainSampler {
            set: set.normalized(),
            spread: DEFAULT_SPREAD,
            rng: seeded_rng(seed),
        }
    }

    pub fn with_spread(mut self, spread: f64) -> Self {
        self.spread = spread;
        self
    }

    pub fn set(&self) -> &ConvexSet {
        &self.set
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            lo
        } else {
            self.rng.random_range(lo..hi)
        }
    }

    /// Log-uniform draw in `[lo, hi]`, both positive.
    pub fn log_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.uniform(lo.ln(), hi.ln()).exp()
    }

    fn gaussian(&mut self, dim: usize, scale: f64) -> Vector {
        Vector::raw(
            (0..dim)
                .map(|_| scale * self.rng.sample::<f64, _>(StandardNormal))
                .collect(),
        )
    }

    pub fn sample(&mut self) -> Vector {
        match self.set.clone() {
            ConvexSet::Box { lo, hi } => Vector::raw(
                (0..lo.dim())
                    .map(|i| self.uniform(lo[i], hi[i]))
                    .collect(),
            ),
            ConvexSet::Ball { center, radius } => {
                let n = center.dim();
                let dir = loop {
                    let g = self.gaussian(n, 1.0);
                    let len = g.norm();
                    if len > 1e-12 {
                        break g.scaled(1.0 / len);
                    }
                };
                let r = radius * self.uniform(0.0, 1.0).powf(1.0 / n as f64);
                center.axpy(r, &dir)
            }
            other => {
                let g = self.gaussian(other.dim(), self.spread);
                other.project_unchecked(&g)
            }
        }
    }

    /// A point of `R^n` not restricted to the set, drawn around it.
    pub fn sample_ambient(&mut self) -> Vector {
        let inside = self.sample();
        let jitter = self.gaussian(inside.dim(), self.spread);
        &inside + &jitter
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_stay_in_set() {
        let sets = [
            ConvexSet::cube(3, -1.0, 2.0).unwrap(),
            ConvexSet::ball(vec![1.0, 1.0], 0.5).unwrap(),
            ConvexSet::halfspace(vec![1.0, 1.0], 0.0).unwrap(),
            ConvexSet::hyperplane(vec![0.0, 1.0], 0.0).unwrap(),
        ];
        for set in &sets {
            let mut s = DomainSampler::new(set, 7);
            for _ in 0..200 {
                assert!(set.contains(&s.sample(), 1e-12));
            }
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let set = ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap();
        let mut a = DomainSampler::new(&set, 3);
        let mut b = DomainSampler::new(&set, 3);
        for _ in 0..20 {
            assert_eq!(a.sample(), b.sample());
        }
    }
}
