//! Thin wrapper over double-exponential quadrature. Integrands must be smooth
//! on each piece; callers split at kinks and jumps.

const TARGET_ABS_ERROR: f64 = 1e-14;

pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    quadrature::double_exponential::integrate(f, a, b, TARGET_ABS_ERROR).integral
}

/// Integrates over `[a, b]`, splitting at every breakpoint strictly inside.
pub fn integrate_split<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breakpoints: &[f64]) -> f64 {
    let mut points: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&p| p > a && p < b)
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut total = 0.0;
    let mut left = a;
    for p in points.into_iter().chain(std::iter::once(b)) {
        total += integrate(&f, left, p);
        left = p;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_kink() {
        assert!((integrate(|x| x * x, 0.0, 3.0) - 9.0).abs() < 1e-12);
        let v = integrate_split(|x: f64| x.abs(), -1.0, 2.0, &[0.0, 5.0, -3.0]);
        assert!((v - 2.5).abs() < 1e-13);
        let step = integrate_split(|x: f64| x.signum(), -1.0, 3.0, &[0.0]);
        assert!((step - 2.0).abs() < 1e-13);
    }
}
