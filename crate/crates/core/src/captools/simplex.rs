//! Feasible set `{p >= 0, sum p = 1, sum p_i x_i <= P}` and a projected
//! gradient ascent with a Frank-Wolfe gap certificate.

use crate::error::{Error, Result};

use super::CancelToken;

/// Probability simplex over grid points, optionally cut by an average
/// intensity constraint.
#[derive(Debug, Clone)]
pub(crate) struct Polytope<'a> {
    pub points: &'a [f64],
    pub average: Option<f64>,
}

impl Polytope<'_> {
    pub fn mean(&self, p: &[f64]) -> f64 {
        p.iter().zip(self.points).map(|(a, x)| a * x).sum()
    }

    fn active(&self) -> Option<f64> {
        self.average.filter(|&avg| avg < self.points[self.points.len() - 1])
    }

    /// A feasible starting point: uniform over the points below the average
    /// bound when the constraint would otherwise be violated.
    pub fn interior(&self) -> Vec<f64> {
        let k = self.points.len();
        let uniform = vec![1.0 / k as f64; k];
        match self.active() {
            Some(avg) if self.mean(&uniform) > avg => {
                let below: Vec<usize> = (0..k).filter(|&i| self.points[i] <= avg).collect();
                let mut p = vec![0.0; k];
                for &i in &below {
                    p[i] = 1.0 / below.len() as f64;
                }
                p
            }
            _ => uniform,
        }
    }

    /// Euclidean projection.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let plain = project_simplex(v);
        let Some(avg) = self.active() else {
            return plain;
        };
        if self.mean(&plain) <= avg {
            return plain;
        }
        // KKT: p = proj_simplex(v - mu x) with mu >= 0 chosen so the mean
        // constraint is tight; the mean is nonincreasing in mu.
        let shifted = |mu: f64| -> Vec<f64> {
            let w: Vec<f64> = v.iter().zip(self.points).map(|(a, x)| a - mu * x).collect();
            project_simplex(&w)
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        while self.mean(&shifted(hi)) > avg {
            hi *= 2.0;
            if hi > 1e12 {
                break;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.mean(&shifted(mid)) > avg {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.max(1.0) {
                break;
            }
        }
        shifted(hi)
    }

    /// Maximizer of `g . s` over the vertices: point masses below the
    /// average bound, and two-point mixtures straddling it with tight mean.
    pub fn linear_max(&self, g: &[f64]) -> f64 {
        let k = g.len();
        let Some(avg) = self.active() else {
            return g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        };
        let mut best = f64::NEG_INFINITY;
        for i in 0..k {
            let xi = self.points[i];
            if xi <= avg {
                best = best.max(g[i]);
                for j in 0..k {
                    let xj = self.points[j];
                    if xj > avg && xi < avg {
                        let theta = (xj - avg) / (xj - xi);
                        best = best.max(theta * g[i] + (1.0 - theta) * g[j]);
                    }
                }
            }
        }
        best
    }
}

/// Projection onto the probability simplex (sort and threshold).
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    let mut p: Vec<f64> = v.iter().map(|&a| (a - theta).max(0.0)).collect();
    let s: f64 = p.iter().sum();
    for a in &mut p {
        *a /= s;
    }
    p
}

pub(crate) struct Ascent {
    pub point: Vec<f64>,
    pub value: f64,
    pub gap: f64,
    pub iterations: usize,
}

/// Maximizes a concave objective over the polytope.
///
/// Each iteration takes a projected gradient step with Armijo backtracking
/// and stops once the Frank-Wolfe gap `max_s g.(s - p)`, an upper bound on
/// the distance to the optimum, drops below `tol`.
pub(crate) fn projected_gradient_ascent<F>(
    polytope: &Polytope<'_>,
    eval: F,
    tol: f64,
    max_iter: usize,
    cancel: Option<&CancelToken>,
) -> Result<Ascent>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (out, converged) = projected_gradient_steps(polytope, eval, polytope.interior(), tol, max_iter, cancel)?;
    if converged {
        Ok(out)
    } else {
        Err(Error::Convergence {
            iterations: out.iterations,
            lower: out.value,
            upper: out.value + out.gap,
        })
    }
}

/// Like [`projected_gradient_ascent`] from a given feasible start, but an
/// exhausted budget returns the last iterate with `false` instead of an error.
pub(crate) fn projected_gradient_steps<F>(
    polytope: &Polytope<'_>,
    mut eval: F,
    start: Vec<f64>,
    tol: f64,
    max_iter: usize,
    cancel: Option<&CancelToken>,
) -> Result<(Ascent, bool)>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    const ARMIJO: f64 = 1e-4;
    let mut p = start;
    let (mut value, mut grad) = eval(&p);
    let mut step = 1.0;
    let mut gap = f64::INFINITY;

    let mut iterations = max_iter;
    for iteration in 0..max_iter {
        if cancel.is_some_and(CancelToken::is_cancelled) {
            return Err(Error::Cancelled);
        }
        let along: f64 = grad.iter().zip(&p).map(|(g, a)| g * a).sum();
        gap = (polytope.linear_max(&grad) - along).max(0.0);
        if gap < tol {
            let out = Ascent {
                point: p,
                value,
                gap,
                iterations: iteration,
            };
            return Ok((out, true));
        }

        let mut accepted = false;
        for _ in 0..80 {
            let trial: Vec<f64> = p.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
            let candidate = polytope.project(&trial);
            let ascent: f64 = grad
                .iter()
                .zip(candidate.iter().zip(&p))
                .map(|(g, (c, a))| g * (c - a))
                .sum();
            let (cand_value, cand_grad) = eval(&candidate);
            // Near the optimum value changes fall below rounding; a concave
            // objective still increases while its derivative along the move
            // stays nonnegative at the far end.
            let slack = 1e-14 * value.abs().max(1.0);
            let slope: f64 = cand_grad
                .iter()
                .zip(candidate.iter().zip(&p))
                .map(|(g, (c, a))| g * (c - a))
                .sum();
            let sufficient = cand_value >= value + ARMIJO * ascent;
            let uphill = slope >= 0.0 && cand_value + slack >= value;
            if cand_value.is_finite() && (sufficient || uphill) {
                let moved = candidate.iter().zip(&p).any(|(c, a)| c != a);
                p = candidate;
                value = cand_value;
                grad = cand_grad;
                accepted = moved;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // The step can no longer move the iterate; report the best gap seen.
            iterations = iteration;
            break;
        }
    }
    let out = Ascent {
        point: p,
        value,
        gap,
        iterations,
    };
    Ok((out, false))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_projection_basics() {
        assert_eq!(project_simplex(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
        let p = project_simplex(&[2.0, 0.0, 0.0]);
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        let p = project_simplex(&[0.5, 0.5, 0.5]);
        for a in p {
            assert!((a - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn constrained_projection_respects_mean() {
        let points = [0.0, 1.0, 2.0, 4.0];
        let poly = Polytope {
            points: &points,
            average: Some(1.0),
        };
        let p = poly.project(&[0.0, 0.0, 0.0, 1.0]);
        assert!(poly.mean(&p) <= 1.0 + 1e-9);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&a| a >= 0.0));
    }

    #[test]
    fn linear_max_over_constrained_vertices() {
        let points = [0.0, 2.0, 4.0];
        let poly = Polytope {
            points: &points,
            average: Some(1.0),
        };
        // Best: mix 3/4 of x=0 with 1/4 of x=4 -> 0.25 * 8 = 2; or 1/2 (x=2) -> 1.5.
        assert!((poly.linear_max(&[0.0, 3.0, 8.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ascent_finds_quadratic_maximum() {
        let points = [0.0, 1.0, 2.0];
        let poly = Polytope {
            points: &points,
            average: None,
        };
        let target = [0.2, 0.5, 0.3];
        let out = projected_gradient_ascent(
            &poly,
            |p| {
                let v = -p.iter().zip(&target).map(|(a, t)| (a - t).powi(2)).sum::<f64>();
                let g = p.iter().zip(&target).map(|(a, t)| -2.0 * (a - t)).collect();
                (v, g)
            },
            1e-12,
            10_000,
            None,
        )
        .unwrap();
        for (a, t) in out.point.iter().zip(&target) {
            assert!((a - t).abs() < 1e-6);
        }
    }
}
