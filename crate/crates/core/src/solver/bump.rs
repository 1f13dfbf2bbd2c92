//! The t-localized inhomogeneity F and the choice of its support width.

use serde::Serialize;

use crate::geometry::ChartGrid;

use super::SolverError;

fn sigma(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

/// Smooth step: 0 for s <= 0, 1 for s >= 1, C-infinity in between.
pub fn smooth_step(s: f64) -> f64 {
    let a = sigma(s);
    let b = sigma(1.0 - s);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// Profile psi(r): 1 on [0, eps/2], 0 on [eps, inf).
pub fn profile(r: f64, eps: f64) -> f64 {
    smooth_step((eps - r) / (0.5 * eps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct BumpSpec {
    pub c: f64,
    pub eps: f64,
}

impl BumpSpec {
    pub fn value(&self, t: f64) -> f64 {
        (self.c + 1.0) * profile(t.abs(), self.eps)
    }
}

/// F(x, t) = (C + 1) psi(|t|) on a grid whose last axis is the circle.
pub fn build_bump(grid: &ChartGrid, bump: BumpSpec) -> Result<Vec<f64>, SolverError> {
    let t_axis = grid.dim() - 1;
    let dt = grid.axis(t_axis).h;
    if bump.eps < 4.0 * dt {
        return Err(SolverError::Unresolvable { eps: bump.eps, min: 4.0 * dt });
    }
    Ok((0..grid.len()).map(|i| bump.value(grid.axis(t_axis).coord(grid.index_along(i, t_axis)))).collect())
}

/// int_{-eps}^{eps} psi(|t|)^p dt by composite Simpson on the transition.
pub fn profile_integral(eps: f64, p: f64) -> f64 {
    let m = 2000;
    let h = 1.0 / m as f64;
    let mut s = 0.0;
    for i in 0..=m {
        let w = if i == 0 || i == m {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        s += w * smooth_step(i as f64 * h).powf(p);
    }
    let transition = s * h / 3.0;
    // plateau eps/2 on each side plus the two transitions of width eps/2
    2.0 * (0.5 * eps + 0.5 * eps * transition)
}

/// ||F||_p on W for plateau C + 1, width eps and vol(X).
pub fn bump_lp_norm(c: f64, eps: f64, p: f64, vol_x: f64) -> f64 {
    ((c + 1.0).powf(p) * vol_x * profile_integral(eps, p)).powf(1.0 / p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsilonChoice {
    pub eps: f64,
    /// delta^p / ((C+1)^p 2 vol X): any eps below it certainly works.
    pub analytic_budget: f64,
    pub resolvable: bool,
    pub lp_norm: f64,
}

/// Largest eps <= eps_max with ||F||_p < delta, by bisection.
pub fn choose_epsilon(c: f64, delta: f64, p: f64, vol_x: f64, eps_max: f64, dt: f64) -> EpsilonChoice {
    let analytic_budget = delta.powf(p) / ((c + 1.0).powf(p) * 2.0 * vol_x);
    let norm = |e: f64| bump_lp_norm(c, e, p, vol_x);
    let eps = if norm(eps_max) < delta {
        eps_max
    } else {
        let (mut lo, mut hi) = (0.0, eps_max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if norm(mid) < delta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    EpsilonChoice { eps, analytic_budget, resolvable: eps >= 4.0 * dt, lp_norm: norm(eps) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Axis;

    #[test]
    fn plateau_and_support() {
        let b = BumpSpec { c: 4.0, eps: 0.2 };
        assert_eq!(b.value(0.0), 5.0);
        assert_eq!(b.value(0.1), 5.0);
        assert_eq!(b.value(0.25), 0.0);
        assert_eq!(b.value(-0.2), 0.0);
        let mid = b.value(0.15);
        assert!((mid - 2.5).abs() < 1e-12);
    }

    #[test]
    fn smooth_step_is_monotone() {
        let mut last = 0.0;
        for i in 0..=100 {
            let v = smooth_step(i as f64 / 100.0);
            assert!(v >= last);
            last = v;
        }
        assert_eq!(smooth_step(1.0), 1.0);
    }

    #[test]
    fn norm_is_monotone_and_bounded() {
        let vol = 4.0 * std::f64::consts::PI;
        let mut last = 0.0;
        for e in [0.01, 0.02, 0.05, 0.1, 0.2] {
            let n = bump_lp_norm(4.0, e, 4.0, vol);
            assert!(n > last);
            assert!(n.powi(4) <= 5f64.powi(4) * 2.0 * e * vol);
            last = n;
        }
    }

    #[test]
    fn budget_example() {
        let ch = choose_epsilon(4.0, 0.1, 4.0, 4.0 * std::f64::consts::PI, 0.25, 0.5 / 32.0);
        let expected = 1e-4 / (625.0 * 2.0 * 4.0 * std::f64::consts::PI);
        assert!((ch.analytic_budget - expected).abs() < 1e-20);
        assert!((ch.analytic_budget - 6.366e-9).abs() < 1e-12);
        assert!(!ch.resolvable);
        assert!(ch.eps >= ch.analytic_budget);
    }

    #[test]
    fn huge_delta_returns_max() {
        let ch = choose_epsilon(4.0, 1e9, 4.0, 1.0, 0.125, 0.01);
        assert_eq!(ch.eps, 0.125);
        assert!(ch.resolvable);
        let small = choose_epsilon(4.0, 1.0, 4.0, 1.0, 0.125, 0.01);
        let big = choose_epsilon(4.0, 2.0, 4.0, 1.0, 0.125, 0.01);
        assert!(big.analytic_budget > small.analytic_budget);
    }

    #[test]
    fn unresolvable_bump_errors() {
        let g = ChartGrid::new(vec![Axis::periodic(0.0, 1.0, 8)]).unwrap().with_circle(1.0, 16).unwrap();
        assert!(build_bump(&g, BumpSpec { c: 1.0, eps: 0.1 }).is_err());
        let f = build_bump(&g, BumpSpec { c: 1.0, eps: 0.3 }).unwrap();
        assert!(f.iter().all(|v| *v >= 0.0));
        assert_eq!(f[8], 2.0);
    }
}
