//! Truncated normal distributions with moment matching.
//!
//! Population targets are stated as the mean and SD of the *truncated*
//! variable (income inside an FPL window, age inside 18..64), so the
//! underlying normal parameters have to be solved for, not copied in.
//! [`TruncNorm::from_moments`] does that with a nested bisection: an inner
//! solve recenters the underlying mean to hit the target mean at a given
//! underlying sigma, and an outer solve walks sigma until the truncated SD
//! lands. Both moment maps are strictly monotone, so bisection is exact
//! enough and needs no derivatives.
//!
//! No truncated distribution on [lo, hi] in this family can exceed the
//! uniform limit SD of (hi - lo) / sqrt(12); targets at or above that bound
//! are rejected as a numerics error rather than silently approximated.

use once_cell::sync::Lazy;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

static STD_NORMAL: Lazy<Normal> = Lazy::new(|| Normal::new(0.0, 1.0).unwrap());

pub(crate) fn std_cdf(x: f64) -> f64 {
    STD_NORMAL.cdf(x)
}

fn std_sf(x: f64) -> f64 {
    STD_NORMAL.sf(x)
}

pub(crate) fn std_quantile(p: f64) -> f64 {
    STD_NORMAL.inverse_cdf(p)
}

fn std_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// A normal(mu, sigma) conditioned on [lo, hi].
#[derive(Debug, Clone, Copy)]
pub struct TruncNorm {
    pub mu: f64,
    pub sigma: f64,
    pub lo: f64,
    pub hi: f64,
    alpha: f64,
    beta: f64,
    mass: f64,
    cdf_lo: f64,
}

impl TruncNorm {
    pub fn new(mu: f64, sigma: f64, lo: f64, hi: f64) -> Result<TruncNorm> {
        if !(sigma > 0.0) || !mu.is_finite() {
            return Err(Error::Numerics(format!(
                "truncated normal needs finite mu and positive sigma, got ({mu}, {sigma})"
            )));
        }
        if !(lo < hi) {
            return Err(Error::Numerics(format!(
                "truncated normal needs lo < hi, got [{lo}, {hi}]"
            )));
        }
        let alpha = (lo - mu) / sigma;
        let beta = (hi - mu) / sigma;
        // Difference of CDFs cancels badly in a far tail; subtract on the
        // side where both values are small.
        let mass = if alpha > 0.0 {
            std_sf(alpha) - std_sf(beta)
        } else {
            std_cdf(beta) - std_cdf(alpha)
        };
        if !(mass > 0.0) {
            return Err(Error::Numerics(format!(
                "truncation window [{lo}, {hi}] has no mass under normal({mu}, {sigma})"
            )));
        }
        Ok(TruncNorm {
            mu,
            sigma,
            lo,
            hi,
            alpha,
            beta,
            mass,
            cdf_lo: std_cdf(alpha),
        })
    }

    pub fn mean(&self) -> f64 {
        self.mu + self.sigma * (std_pdf(self.alpha) - std_pdf(self.beta)) / self.mass
    }

    pub fn variance(&self) -> f64 {
        let pa = std_pdf(self.alpha);
        let pb = std_pdf(self.beta);
        let tilt = (self.alpha * pa - self.beta * pb) / self.mass;
        let shift = (pa - pb) / self.mass;
        self.sigma * self.sigma * (1.0 + tilt - shift * shift)
    }

    pub fn sd(&self) -> f64 {
        self.variance().max(0.0).sqrt()
    }

    /// Inverse CDF of the truncated variable. `u` in [0, 1] maps onto
    /// [lo, hi] monotonically.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        if u == 0.0 {
            return self.lo;
        }
        if u == 1.0 {
            return self.hi;
        }
        let x = self.mu + self.sigma * std_quantile(self.cdf_lo + u * self.mass);
        x.clamp(self.lo, self.hi)
    }

    /// Probability the truncated variable falls at or below `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        ((std_cdf((x - self.mu) / self.sigma) - self.cdf_lo) / self.mass).clamp(0.0, 1.0)
    }

    /// Supremum of the truncated SD over all underlying parameters: the
    /// uniform limit reached as sigma grows without bound.
    pub fn max_sd(lo: f64, hi: f64) -> f64 {
        (hi - lo) / 12f64.sqrt()
    }

    /// Solve for underlying parameters so the truncated mean and SD match
    /// the targets.
    pub fn from_moments(mean: f64, sd: f64, lo: f64, hi: f64) -> Result<TruncNorm> {
        if !(lo < hi) {
            return Err(Error::Numerics(format!(
                "moment solve needs lo < hi, got [{lo}, {hi}]"
            )));
        }
        if !(mean > lo && mean < hi) {
            return Err(Error::Numerics(format!(
                "target mean {mean} lies outside the window [{lo}, {hi}]"
            )));
        }
        let cap = TruncNorm::max_sd(lo, hi);
        if !(sd > 0.0) || sd >= cap * (1.0 - 1e-6) {
            return Err(Error::Numerics(format!(
                "target sd {sd} is not reachable on [{lo}, {hi}]; \
                 the achievable range is (0, {cap:.4})"
            )));
        }

        // Truncated SD rises monotonically with underlying sigma once the
        // mean is re-centered, so bracket by doubling and bisect in log
        // sigma. Start small enough that the SD starts below target.
        let mut sig_lo = sd / 8.0;
        while solved_sd(mean, sig_lo, lo, hi)? > sd {
            sig_lo /= 2.0;
            if sig_lo < sd * 1e-9 {
                return Err(Error::Numerics(
                    "moment solve failed to bracket sigma from below".into(),
                ));
            }
        }
        let mut sig_hi = sd;
        let mut grew = 0;
        while solved_sd(mean, sig_hi, lo, hi)? < sd {
            sig_hi *= 2.0;
            grew += 1;
            if grew > 60 {
                return Err(Error::Numerics(format!(
                    "target sd {sd} on [{lo}, {hi}] needs an unbounded underlying sigma"
                )));
            }
        }
        let (mut a, mut b) = (sig_lo.ln(), sig_hi.ln());
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if solved_sd(mean, mid.exp(), lo, hi)? < sd {
                a = mid;
            } else {
                b = mid;
            }
            if b - a < 1e-14 {
                break;
            }
        }
        let sigma = (0.5 * (a + b)).exp();
        let mu = solve_mu(mean, sigma, lo, hi)?;
        TruncNorm::new(mu, sigma, lo, hi)
    }
}

/// Truncated SD at `sigma` after re-centering mu to hit `mean`.
fn solved_sd(mean: f64, sigma: f64, lo: f64, hi: f64) -> Result<f64> {
    let mu = solve_mu(mean, sigma, lo, hi)?;
    Ok(TruncNorm::new(mu, sigma, lo, hi)?.sd())
}

/// Underlying mu whose truncated mean equals `mean` at the given sigma.
/// The truncated mean is strictly increasing in mu.
fn solve_mu(mean: f64, sigma: f64, lo: f64, hi: f64) -> Result<f64> {
    let mean_at = |mu: f64| -> Result<f64> { Ok(TruncNorm::new(mu, sigma, lo, hi)?.mean()) };
    let mut a = lo - sigma;
    let mut b = hi + sigma;
    let mut grew = 0;
    while mean_at(a)? > mean {
        a -= sigma * (1 << grew.min(20)) as f64;
        grew += 1;
        if grew > 40 {
            return Err(Error::Numerics(
                "mean solve failed to bracket mu from below".into(),
            ));
        }
    }
    grew = 0;
    while mean_at(b)? < mean {
        b += sigma * (1 << grew.min(20)) as f64;
        grew += 1;
        if grew > 40 {
            return Err(Error::Numerics(
                "mean solve failed to bracket mu from above".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mean_at(mid)? < mean {
            a = mid;
        } else {
            b = mid;
        }
        if b - a < 1e-12 * sigma.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (a + b))
}
