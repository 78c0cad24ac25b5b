//! Symmetric scalar noise laws.
//!
//! The heavy-tailed family has density `(beta - 1) / (2 (1 + |w|)^beta)`; for
//! `beta` in (2, 3] it has a finite first absolute moment and infinite
//! variance. Sampling inverts its CDF exactly.

use rand::Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use libm::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// Polynomial-tail density with exponent `beta > 2`.
    HeavyTail { beta: f64 },
    Gaussian { sigma: f64 },
    /// Point mass at zero. Only meaningful for noise-free simulations; it has
    /// no density and therefore fails the positivity requirement.
    Zero,
}

impl NoiseModel {
    pub fn heavy_tail(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 2.0) {
            return Err(Error::param(format!(
                "heavy-tail exponent beta = {beta} must exceed 2 for a finite first absolute moment"
            )));
        }
        Ok(Self::HeavyTail { beta })
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::param(format!(
                "gaussian standard deviation must be positive, got {sigma}"
            )));
        }
        Ok(Self::Gaussian { sigma })
    }

    pub fn pdf(&self, w: f64) -> f64 {
        match *self {
            Self::HeavyTail { beta } => (beta - 1.0) / (2.0 * (1.0 + w.abs()).powf(beta)),
            Self::Gaussian { sigma } => {
                let z = w / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
            }
            Self::Zero => 0.0,
        }
    }

    pub fn cdf(&self, w: f64) -> f64 {
        match *self {
            Self::HeavyTail { beta } => {
                if w.is_infinite() {
                    return if w > 0.0 { 1.0 } else { 0.0 };
                }
                let tail = 0.5 * (1.0 + w.abs()).powf(-(beta - 1.0));
                if w >= 0.0 {
                    1.0 - tail
                } else {
                    tail
                }
            }
            Self::Gaussian { sigma } => 0.5 * erfc(-w / (sigma * std::f64::consts::SQRT_2)),
            Self::Zero => {
                if w >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Upper tail `P(W > w)` without the cancellation of `1 - cdf(w)`.
    pub fn survival(&self, w: f64) -> f64 {
        self.cdf(-w)
    }

    /// Inverse CDF on (0, 1) where it has a closed form.
    pub fn quantile(&self, u: f64) -> Option<f64> {
        match *self {
            Self::HeavyTail { beta } => Some(heavy_tail_quantile(beta, u)),
            Self::Zero => Some(0.0),
            Self::Gaussian { .. } => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::HeavyTail { beta } => heavy_tail_quantile(beta, Open01.sample(rng)),
            Self::Gaussian { sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                sigma * z
            }
            Self::Zero => 0.0,
        }
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for slot in out {
            *slot = self.sample(rng);
        }
    }

    pub fn sample_vector<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        self.sample_into(rng, &mut v);
        v
    }

    /// `E|W|`, always finite for valid models.
    pub fn first_abs_moment(&self) -> f64 {
        match *self {
            Self::HeavyTail { beta } => 1.0 / (beta - 2.0),
            Self::Gaussian { sigma } => sigma * (2.0 / std::f64::consts::PI).sqrt(),
            Self::Zero => 0.0,
        }
    }

    /// `E[W^2]`, `None` when it diverges.
    pub fn variance(&self) -> Option<f64> {
        match *self {
            Self::HeavyTail { beta } if beta > 3.0 => Some(2.0 / ((beta - 2.0) * (beta - 3.0))),
            Self::HeavyTail { .. } => None,
            Self::Gaussian { sigma } => Some(sigma * sigma),
            Self::Zero => Some(0.0),
        }
    }

    /// Points where the density is not smooth.
    pub(crate) fn kinks(&self) -> &'static [f64] {
        match self {
            Self::HeavyTail { .. } => &[0.0],
            _ => &[],
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::HeavyTail { .. } => "eq3",
            Self::Gaussian { .. } => "gaussian",
            Self::Zero => "none",
        }
    }

    /// Checks the density requirements on a symmetric grid: symmetry,
    /// positivity near zero, finite first absolute moment.
    pub fn check_assumptions(&self, grid: &[f64]) -> NoiseReport {
        let symmetric = grid
            .iter()
            .all(|&w| (self.pdf(w) - self.pdf(-w)).abs() <= 1e-15 * self.pdf(w).max(1.0));
        NoiseReport {
            symmetric,
            positive_near_zero: self.pdf(0.0) > 0.0,
            finite_first_moment: self.first_abs_moment().is_finite(),
            finite_variance: self.variance().is_some(),
        }
    }
}

fn heavy_tail_quantile(beta: f64, u: f64) -> f64 {
    let magnitude = (2.0 * u.min(1.0 - u)).powf(-1.0 / (beta - 1.0)) - 1.0;
    if u < 0.5 {
        -magnitude
    } else {
        magnitude
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseReport {
    pub symmetric: bool,
    pub positive_near_zero: bool,
    pub finite_first_moment: bool,
    /// Informational; infinite variance is allowed.
    pub finite_variance: bool,
}

impl NoiseReport {
    pub fn compliant(&self) -> bool {
        self.symmetric && self.positive_near_zero && self.finite_first_moment
    }
}
