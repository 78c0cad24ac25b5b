//! Bounded odd nonlinearities applied to consensus differences and innovations,
//! together with the noise-averaged quantities that enter the asymptotic
//! covariance: the effective variance `E[psi(W)^2]` and the slope at zero of
//! the smoothed map `phi(u) = E[psi(u + W)]`.

use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::quad;

/// Symmetric midpoint quantizer.
///
/// With thresholds `0 = t_0 < t_1 < ... < t_K`, an input with magnitude in
/// `(t_{k-1}, t_k]` maps to `(t_{k-1} + t_k) / 2`; magnitudes above `t_K`
/// saturate at the last level. Negative inputs mirror.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantizer {
    thresholds: Vec<f64>,
    outputs: Vec<f64>,
}

impl Quantizer {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::param("quantizer needs at least one threshold"));
        }
        if thresholds.iter().any(|t| !t.is_finite() || *t <= 0.0) {
            return Err(Error::param("quantizer thresholds must be positive and finite"));
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("quantizer thresholds must be strictly ascending"));
        }
        let outputs = thresholds
            .iter()
            .scan(0.0, |prev, &t| {
                let mid = 0.5 * (*prev + t);
                *prev = t;
                Some(mid)
            })
            .collect();
        Ok(Self { thresholds, outputs })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    fn apply_magnitude(&self, r: f64) -> f64 {
        let cell = self.thresholds.partition_point(|&t| t < r);
        self.outputs[cell.min(self.outputs.len() - 1)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Nonlinearity {
    Sign,
    Clip { tau: f64 },
    Quantizer(Quantizer),
    /// The linear baseline. Unbounded, so it does not satisfy the standing
    /// assumptions and is only accepted by baseline experiments.
    Identity,
}

impl Nonlinearity {
    pub fn clip(tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::param(format!("clip threshold must be positive, got {tau}")));
        }
        Ok(Self::Clip { tau })
    }

    pub fn quantizer(thresholds: Vec<f64>) -> Result<Self> {
        Quantizer::new(thresholds).map(Self::Quantizer)
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Sign => "sign",
            Self::Clip { .. } => "clip",
            Self::Quantizer(_) => "quantizer",
            Self::Identity => "identity",
        }
    }

    #[inline]
    pub fn apply(&self, w: f64) -> f64 {
        match self {
            Self::Sign => {
                if w > 0.0 {
                    1.0
                } else if w < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Self::Clip { tau } => w.clamp(-tau, *tau),
            Self::Quantizer(q) => {
                if w > 0.0 {
                    q.apply_magnitude(w)
                } else if w < 0.0 {
                    -q.apply_magnitude(-w)
                } else {
                    0.0
                }
            }
            Self::Identity => w,
        }
    }

    pub fn apply_vector(&self, v: &[f64]) -> Vec<f64> {
        v.iter().map(|&w| self.apply(w)).collect()
    }

    /// The constant `c1` with `|psi| <= c1`, if any.
    pub fn bound(&self) -> Option<f64> {
        match self {
            Self::Sign => Some(1.0),
            Self::Clip { tau } => Some(*tau),
            Self::Quantizer(q) => q.outputs.last().copied(),
            Self::Identity => None,
        }
    }

    /// `(s, c)` such that `psi(x) = c` for all `x > s`.
    fn saturation(&self) -> Option<(f64, f64)> {
        match self {
            Self::Sign => Some((0.0, 1.0)),
            Self::Clip { tau } => Some((*tau, *tau)),
            Self::Quantizer(q) => {
                let k = q.thresholds.len();
                let start = if k >= 2 { q.thresholds[k - 2] } else { 0.0 };
                Some((start, q.outputs[k - 1]))
            }
            Self::Identity => None,
        }
    }

    /// Nonnegative points where `psi` is not smooth; mirrored images are implied.
    pub(crate) fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::Sign => vec![0.0],
            Self::Clip { tau } => vec![*tau],
            Self::Quantizer(q) => std::iter::once(0.0).chain(q.thresholds.iter().copied()).collect(),
            Self::Identity => vec![],
        }
    }

    /// `E[psi(W)^2]` for `W` drawn from `noise`.
    pub fn effective_variance(&self, noise: &NoiseModel) -> Result<f64> {
        if let Self::Identity = self {
            return noise.variance().ok_or_else(|| {
                Error::DivergentVariance(format!(
                    "identity map under {} noise with infinite variance",
                    noise.family_name()
                ))
            });
        }
        if let (Self::Sign, NoiseModel::HeavyTail { .. } | NoiseModel::Gaussian { .. }) = (self, noise) {
            // A continuous law puts no mass on the origin.
            return Ok(1.0);
        }
        Ok(self.smoothed_moment(noise, 0.0, 2))
    }

    /// `phi(u) = E[psi(u + W)]`.
    pub fn phi(&self, noise: &NoiseModel, u: f64) -> f64 {
        match self {
            Self::Identity => u,
            _ => self.smoothed_moment(noise, u, 1),
        }
    }

    /// `phi'(0)`: closed form `2 p(0)` for the sign map, exact for the
    /// identity, otherwise a Richardson-extrapolated central difference of
    /// `phi`. A density cusp at a jump of `psi` puts every power of `h` in the
    /// difference quotient, so the table eliminates `h, h^2, h^3` in turn.
    pub fn phi_prime_zero(&self, noise: &NoiseModel) -> Result<f64> {
        let slope = match self {
            Self::Sign => 2.0 * noise.pdf(0.0),
            Self::Identity => 1.0,
            _ => {
                let central = |h: f64| (self.phi(noise, h) - self.phi(noise, -h)) / (2.0 * h);
                richardson(central, 1e-3, 4)
            }
        };
        if !(slope.is_finite() && slope > 0.0) {
            return Err(Error::AssumptionViolation(format!(
                "phi'(0) = {slope} for {} under {} noise; the pair does not satisfy the nonlinearity/density assumptions",
                self.kind_name(),
                noise.family_name()
            )));
        }
        Ok(slope)
    }

    /// `int psi(u + w)^power p(w) dw` over the whole line. Inside a window covering every breakpoint the
    /// integral is numerical; outside it `psi` is saturated and the tails are
    /// closed-form CDF values.
    fn smoothed_moment(&self, noise: &NoiseModel, u: f64, power: i32) -> f64 {
        if let NoiseModel::Zero = noise {
            return self.apply(u).powi(power);
        }
        let (sat, level) = self.saturation().expect("bounded nonlinearity");
        let mut points: Vec<f64> = self
            .breakpoints()
            .into_iter()
            .chain(std::iter::once(sat))
            .flat_map(|b| [b - u, -b - u])
            .chain(noise.kinks().iter().copied())
            .collect();
        points.sort_by(f64::total_cmp);
        let lo = points[0] - 1.0;
        let hi = points[points.len() - 1] + 1.0;
        let scale = noise_scale(noise);
        let mut splits = points.clone();
        splits.extend([-1.0, 1.0, -10.0, 10.0].iter().map(|s| s * scale));

        let integrand = |w: f64| self.apply(u + w).powi(power) * noise.pdf(w);
        quad::integrate_split(integrand, lo, hi, &splits)
            + level.powi(power) * noise.survival(hi)
            + (-level).powi(power) * noise.cdf(lo)
    }

    /// Checks the standing nonlinearity assumptions on a symmetric grid.
    pub fn validate(&self, grid: &[f64]) -> NonlinearityReport {
        let mut sorted = grid.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let values: Vec<f64> = sorted.iter().map(|&u| self.apply(u)).collect();

        let odd = sorted
            .iter()
            .all(|&u| (self.apply(-u) + self.apply(u)).abs() <= 1e-15 * self.apply(u).abs().max(1.0));
        let positive_on_positives = sorted
            .iter()
            .zip(&values)
            .all(|(&u, &v)| u <= 0.0 || v > 0.0);
        let monotone = values.windows(2).all(|w| w[0] <= w[1]);
        let c1 = self.bound();
        let bounded = c1.is_some_and(|c| values.iter().all(|v| v.abs() <= c));

        // A jump shows up as a value bounded away from zero at a vanishing argument.
        let jump = self.apply(1e-200);
        let zero_behavior = if jump > 1e-100 {
            ZeroBehavior::Discontinuous { jump }
        } else {
            let origin = sorted.partition_point(|&u| u < 0.0);
            let mut c2 = 0.0;
            for (i, &u) in sorted.iter().enumerate().skip(origin + 1) {
                let mirror = sorted.iter().position(|&x| x == -u);
                let increasing_right = values[i] > values[i - 1];
                let increasing_left = mirror.is_some_and(|m| m + 1 < sorted.len() && values[m + 1] > values[m]);
                if increasing_right && increasing_left {
                    c2 = u;
                } else {
                    break;
                }
            }
            if c2 > 0.0 {
                ZeroBehavior::StrictlyIncreasing { c2 }
            } else {
                ZeroBehavior::Neither
            }
        };

        NonlinearityReport {
            odd,
            positive_on_positives,
            monotone,
            bounded,
            c1,
            zero_behavior,
        }
    }
}

/// Neville table over steps `h0 / 2^i`, assuming an error series in powers of `h`.
fn richardson<F: Fn(f64) -> f64>(f: F, h0: f64, levels: usize) -> f64 {
    let mut prev: Vec<f64> = Vec::with_capacity(levels);
    for i in 0..levels {
        let mut row = vec![f(h0 / f64::powi(2.0, i as i32))];
        for j in 1..=i {
            let w = f64::powi(2.0, j as i32);
            row.push((w * row[j - 1] - prev[j - 1]) / (w - 1.0));
        }
        prev = row;
    }
    prev[levels - 1]
}

fn noise_scale(noise: &NoiseModel) -> f64 {
    match noise {
        NoiseModel::Gaussian { sigma } => *sigma,
        _ => 1.0,
    }
}

/// Behaviour of `psi` at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZeroBehavior {
    Discontinuous { jump: f64 },
    /// Strictly increasing on `(-c2, c2)` as far as the grid can tell.
    StrictlyIncreasing { c2: f64 },
    Neither,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearityReport {
    pub odd: bool,
    pub positive_on_positives: bool,
    pub monotone: bool,
    pub bounded: bool,
    pub c1: Option<f64>,
    pub zero_behavior: ZeroBehavior,
}

impl NonlinearityReport {
    pub fn compliant(&self) -> bool {
        self.odd
            && self.positive_on_positives
            && self.monotone
            && self.bounded
            && !matches!(self.zero_behavior, ZeroBehavior::Neither)
    }
}

/// `2 * per_side + 1` points evenly spaced on `[-half_width, half_width]`.
pub fn symmetric_grid(half_width: f64, per_side: usize) -> Vec<f64> {
    let step = half_width / per_side as f64;
    let side = per_side as i64;
    (-side..=side).map(|i| i as f64 * step).collect()
}
