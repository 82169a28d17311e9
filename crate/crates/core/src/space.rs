//! The ambient model spaces: the half-open unit box `[0,1)^q` with volume.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceModel {
    pub q: usize,
    /// Ahlfors regularity constant.
    #[serde(rename = "C")]
    pub ahlfors: f64,
    /// Uniform perfectness constant.
    #[serde(rename = "D")]
    pub perfectness: f64,
}

impl SpaceModel {
    pub fn new(q: usize) -> Result<Self> {
        match q {
            1 => Ok(Self { q, ahlfors: 2.0, perfectness: 2.0 }),
            2 => Ok(Self { q, ahlfors: std::f64::consts::PI, perfectness: 2.0 }),
            _ => Err(Error::ParameterOutOfRange(format!("dimension {q} not in {{1, 2}}"))),
        }
    }

    pub fn domain(&self) -> Aabb {
        Aabb::unit(self.q)
    }

    pub fn diameter(&self) -> f64 {
        (self.q as f64).sqrt()
    }

    /// `H(B(x, r) ∩ domain)`.
    pub fn ball_volume(&self, x: &Point, r: f64) -> f64 {
        self.domain().ball_intersection_volume(x, r)
    }

    /// Extreme values of `H(B(x,r) ∩ domain) / r^q` over random balls with
    /// `r ≤ diam`. Both lie in `[1/C, C]` for a correct model.
    pub fn ahlfors_spot_check(&self, samples: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for _ in 0..samples {
            let c: Vec<f64> = (0..self.q).map(|_| rng.random::<f64>()).collect();
            let x = Point::from_slice(&c).unwrap();
            let r = self.diameter() * rng.random_range(1e-3..=1.0);
            let ratio = self.ball_volume(&x, r) / r.powi(self.q as i32);
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        (lo, hi)
    }

    /// Whether `B(x,r) \ B(x,r/D)` meets the domain.
    pub fn annulus_nonempty(&self, x: &Point, r: f64) -> bool {
        let d = self.domain();
        d.ball_intersection_volume(x, r) > d.ball_intersection_volume(x, r / self.perfectness)
    }
}
