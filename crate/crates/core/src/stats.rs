//! Streaming first and second moments of paired samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Running means, variances and covariance of `(x, y)` pairs (Welford
/// updates, Chan et al. merge). Here `x` is Alice's symbol and `y` Bob's
/// measurement, which is all the projection needs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    n: u64,
    mean_x: f64,
    mean_y: f64,
    m2_x: f64,
    m2_y: f64,
    c_xy: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        let n = self.n as f64;
        let dx = x - self.mean_x;
        let dy = y - self.mean_y;
        self.mean_x += dx / n;
        self.mean_y += dy / n;
        let dy_new = y - self.mean_y;
        self.m2_x += dx * (x - self.mean_x);
        self.m2_y += dy * dy_new;
        self.c_xy += dx * dy_new;
    }

    pub fn from_slices(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch {
                left: xs.len(),
                right: ys.len(),
            });
        }
        let mut m = Moments::new();
        for (&x, &y) in xs.iter().zip(ys) {
            m.push(x, y);
        }
        Ok(m)
    }

    /// Combines the moments of two disjoint sample sets.
    pub fn merge(&self, other: &Moments) -> Moments {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let dx = other.mean_x - self.mean_x;
        let dy = other.mean_y - self.mean_y;
        let w = na * nb / n;
        Moments {
            n: self.n + other.n,
            mean_x: self.mean_x + dx * nb / n,
            mean_y: self.mean_y + dy * nb / n,
            m2_x: self.m2_x + other.m2_x + dx * dx * w,
            m2_y: self.m2_y + other.m2_y + dy * dy * w,
            c_xy: self.c_xy + other.c_xy + dx * dy * w,
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean_x(&self) -> f64 {
        self.mean_x
    }

    pub fn mean_y(&self) -> f64 {
        self.mean_y
    }

    fn denom(&self) -> f64 {
        (self.n as f64 - 1.0).max(1.0)
    }

    /// Unbiased (n - 1) sample variance of x.
    pub fn var_x(&self) -> f64 {
        self.m2_x / self.denom()
    }

    pub fn var_y(&self) -> f64 {
        self.m2_y / self.denom()
    }

    pub fn cov_xy(&self) -> f64 {
        self.c_xy / self.denom()
    }

    /// Centered sums of squares and cross-products `(Sxx, Syy, Sxy)`.
    pub fn centered_sums(&self) -> (f64, f64, f64) {
        (self.m2_x, self.m2_y, self.c_xy)
    }
}
