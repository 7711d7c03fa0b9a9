//! Active-set Newton refinement on the probability simplex.
//!
//! First-order methods find the support of a sparse optimizer quickly but
//! then crawl. On the current face `{p_S > 0, sum p_S = 1}` this takes
//! Newton steps of the concave objective, drops coordinates that hit zero
//! and adds the coordinate with the largest gradient once the face is
//! solved. Termination uses the same Frank-Wolfe gap as the other solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::simplex::Ascent;
use super::CancelToken;

const ARMIJO: f64 = 1e-4;

/// `eval(p) -> (f, grad)`; `curvature(p, support)` is `-Hessian` restricted
/// to `support` (positive semidefinite for a concave objective).
pub(crate) fn newton_refine<F, H>(
    start: Vec<f64>,
    mut eval: F,
    mut curvature: H,
    tol: f64,
    max_iter: usize,
    cancel: Option<&CancelToken>,
) -> Result<Ascent>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    H: FnMut(&[f64], &[usize]) -> DMatrix<f64>,
{
    let mut p = start;
    let top = p.iter().copied().fold(0.0, f64::max);
    for a in &mut p {
        if *a < 1e-3 * top {
            *a = 0.0;
        }
    }
    normalize(&mut p);
    let (mut value, mut grad) = eval(&p);
    let mut gap = f64::INFINITY;

    for iteration in 0..max_iter {
        if cancel.is_some_and(CancelToken::is_cancelled) {
            return Err(Error::Cancelled);
        }
        let along = dot(&grad, &p);
        let (best, best_g) = argmax(&grad);
        gap = (best_g - along).max(0.0);
        if gap < tol {
            return Ok(Ascent {
                point: p,
                value,
                gap,
                iterations: iteration,
            });
        }
        let mut support: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
        let spread = support.iter().map(|&i| (grad[i] - along).abs()).fold(0.0, f64::max);
        if spread < 0.1 * gap && p[best] == 0.0 {
            support.push(best);
            support.sort_unstable();
        }

        let Some(d) = face_direction(&p, &grad, &mut support, &mut curvature) else {
            break;
        };
        let slope = d.iter().zip(&grad).map(|(a, g)| a * g).sum::<f64>();
        if slope <= 0.0 {
            break;
        }
        let limit = d
            .iter()
            .zip(&p)
            .filter(|(di, _)| **di < 0.0)
            .map(|(di, a)| -a / di)
            .fold(1.0, f64::min);

        let mut t = limit;
        let slack = 1e-14 * value.abs().max(1.0);
        let mut moved = false;
        for _ in 0..60 {
            let mut cand: Vec<f64> = p.iter().zip(&d).map(|(a, di)| (a + t * di).max(0.0)).collect();
            if t == limit {
                // Coordinates that blocked the step leave the face exactly.
                for (c, (di, a)) in cand.iter_mut().zip(d.iter().zip(&p)) {
                    if *di < 0.0 && -a / di <= limit * (1.0 + 1e-12) {
                        *c = 0.0;
                    }
                }
            }
            normalize(&mut cand);
            let (cv, cg) = eval(&cand);
            if cv.is_finite() && cv + slack >= value + ARMIJO * t * slope {
                p = cand;
                value = cv;
                grad = cg;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Err(Error::Convergence {
        iterations: max_iter,
        lower: value,
        upper: value + gap,
    })
}

/// Newton direction on the face spanned by `support`, with coordinates at
/// zero that would turn negative removed from it.
///
/// Works in coordinates of the tangent space `sum d = 0`, pivoting on the
/// largest coordinate, where the curvature is positive semidefinite. Falls
/// back to the face gradient when the solve is not an ascent direction.
fn face_direction<H>(p: &[f64], grad: &[f64], support: &mut Vec<usize>, curvature: &mut H) -> Option<Vec<f64>>
where
    H: FnMut(&[f64], &[usize]) -> DMatrix<f64>,
{
    loop {
        let m = support.len();
        if m < 2 {
            return None;
        }
        let a = curvature(p, support);
        let r = (0..m).max_by(|&x, &y| p[support[x]].total_cmp(&p[support[y]]))?;
        let free: Vec<usize> = (0..m).filter(|&x| x != r).collect();
        let b = DMatrix::from_fn(m - 1, m - 1, |i, j| {
            let (x, y) = (free[i], free[j]);
            a[(x, y)] - a[(x, r)] - a[(r, y)] + a[(r, r)]
        });
        let h = DVector::from_iterator(m - 1, free.iter().map(|&x| grad[support[x]] - grad[support[r]]));
        let scale = (0..m - 1).map(|i| b[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
        let mut ridge = 1e-10 * scale;
        let mut u = None;
        while ridge <= scale {
            let mut shifted = b.clone();
            for i in 0..m - 1 {
                shifted[(i, i)] += ridge;
            }
            if let Some(c) = shifted.cholesky() {
                let sol = c.solve(&h);
                if sol.dot(&h) > 0.0 && sol.iter().all(|v| v.is_finite()) {
                    u = Some(sol);
                    break;
                }
            }
            ridge *= 100.0;
        }
        let u = u.unwrap_or_else(|| &h / scale);
        let mut d = vec![0.0; p.len()];
        for (k, &x) in free.iter().enumerate() {
            d[support[x]] = u[k];
        }
        d[support[r]] = -u.sum();
        let blocked: Vec<usize> = support.iter().copied().filter(|&i| p[i] == 0.0 && d[i] < 0.0).collect();
        if blocked.is_empty() {
            return Some(d);
        }
        support.retain(|i| !blocked.contains(i));
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter().copied().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |best, (i, x)| if x > best.1 { (i, x) } else { best },
    )
}

fn normalize(p: &mut [f64]) {
    let s: f64 = p.iter().sum();
    for a in p.iter_mut() {
        *a /= s;
    }
}
