//! Blahut-Arimoto iteration, with a Lagrangian cost term for the optional
//! average-intensity constraint.

use crate::error::{Error, Result};

use super::{CancelToken, TransitionMatrix};

pub(crate) struct BlahutOutcome {
    pub mass: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

struct CostRun {
    mass: Vec<f64>,
    iterations: usize,
    lower: f64,
    upper: f64,
    converged: bool,
}

/// Up to `max_iter` BA iterations at Lagrange multiplier `cost` (bits per
/// unit intensity). With `cost = 0` this is plain BA with the classical
/// `I(p) <= C <= max_x D(W_x || q)` sandwich.
fn iterate(
    matrix: &TransitionMatrix,
    cost: f64,
    start: Vec<f64>,
    tol: f64,
    max_iter: usize,
    cancel: Option<&CancelToken>,
    trace: Option<&mut Vec<f64>>,
) -> Result<CostRun> {
    let points = matrix.points();
    let mut mass = start;
    let mut trace = trace;
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    for iteration in 0..max_iter {
        if cancel.is_some_and(CancelToken::is_cancelled) {
            return Err(Error::Cancelled);
        }
        let q = matrix.output(&mass);
        let div = matrix.divergences(&q);
        let score: Vec<f64> = div.iter().zip(points).map(|(d, x)| d - cost * x).collect();
        lower = mass.iter().zip(&score).map(|(p, s)| p * s).sum();
        upper = score.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if let Some(t) = trace.as_deref_mut() {
            t.push(mass.iter().zip(&div).map(|(p, d)| p * d).sum());
        }
        if upper - lower < tol {
            return Ok(CostRun {
                mass,
                iterations: iteration,
                lower,
                upper,
                converged: true,
            });
        }
        let mut total = 0.0;
        for (p, s) in mass.iter_mut().zip(&score) {
            *p *= (s - upper).exp2();
            total += *p;
        }
        for p in &mut mass {
            *p /= total;
        }
    }
    Ok(CostRun {
        mass,
        iterations: max_iter,
        lower,
        upper,
        converged: false,
    })
}

fn run_with_cost(
    matrix: &TransitionMatrix,
    cost: f64,
    start: Vec<f64>,
    tol: f64,
    max_iter: usize,
    cancel: Option<&CancelToken>,
    trace: Option<&mut Vec<f64>>,
) -> Result<(CostRun, f64, f64)> {
    let run = iterate(matrix, cost, start, tol, max_iter, cancel, trace)?;
    if !run.converged {
        return Err(Error::Convergence {
            iterations: max_iter,
            lower: run.lower,
            upper: run.upper,
        });
    }
    let (lower, upper) = (run.lower, run.upper);
    Ok((run, lower, upper))
}

pub(crate) fn blahut_arimoto(
    matrix: &TransitionMatrix,
    tol: f64,
    max_iter: usize,
    record_trace: bool,
    cancel: Option<&CancelToken>,
) -> Result<BlahutOutcome> {
    blahut_arimoto_partial(matrix, tol, max_iter, record_trace, cancel)?.finish(max_iter)
}

/// Plain BA that returns its last iterate when the budget runs out; check
/// with [`BlahutOutcome::finish`].
pub(crate) fn blahut_arimoto_partial(
    matrix: &TransitionMatrix,
    tol: f64,
    max_iter: usize,
    record_trace: bool,
    cancel: Option<&CancelToken>,
) -> Result<BlahutOutcome> {
    let k = matrix.points().len();
    let mut trace = Vec::new();
    let run = iterate(
        matrix,
        0.0,
        vec![1.0 / k as f64; k],
        tol,
        max_iter,
        cancel,
        record_trace.then_some(&mut trace),
    )?;
    Ok(BlahutOutcome {
        mass: run.mass,
        lower: run.lower,
        upper: run.upper,
        iterations: run.iterations,
        trace,
    })
}

/// Continues plain BA from an earlier outcome until `max_iter` iterations
/// have been spent in total.
pub(crate) fn blahut_arimoto_resume(
    matrix: &TransitionMatrix,
    earlier: BlahutOutcome,
    tol: f64,
    max_iter: usize,
    cancel: Option<&CancelToken>,
) -> Result<BlahutOutcome> {
    let mut trace = earlier.trace;
    let record = !trace.is_empty();
    let rest = max_iter.saturating_sub(earlier.iterations);
    let run = iterate(
        matrix,
        0.0,
        earlier.mass,
        tol,
        rest,
        cancel,
        record.then_some(&mut trace),
    )?;
    BlahutOutcome {
        mass: run.mass,
        lower: run.lower,
        upper: run.upper,
        iterations: earlier.iterations + run.iterations,
        trace,
    }
    .finish(max_iter)
}

impl BlahutOutcome {
    pub(crate) fn finish(self, max_iter: usize) -> Result<Self> {
        if self.iterations < max_iter {
            Ok(self)
        } else {
            Err(Error::Convergence {
                iterations: max_iter,
                lower: self.lower,
                upper: self.upper,
            })
        }
    }
}

fn mean(points: &[f64], mass: &[f64]) -> f64 {
    points.iter().zip(mass).map(|(x, p)| x * p).sum()
}

/// Capacity under `E[X] <= average`.
///
/// Bisects on the multiplier `s`. The two bracketing Lagrangian optimizers
/// are mixed so the mixture has mean exactly `average`; its information is
/// the lower bound, and weak duality
/// `C(P) <= max_x [D(W_x || q) - s x] + s P` (any `q`, any `s >= 0`)
/// supplies the upper bound.
pub(crate) fn blahut_arimoto_constrained(
    matrix: &TransitionMatrix,
    average: f64,
    tol: f64,
    max_iter: usize,
    cancel: Option<&CancelToken>,
) -> Result<BlahutOutcome> {
    let points = matrix.points().to_vec();
    let inner_tol = tol * 0.1;
    let mut used = 0usize;
    let mut budget = |n: usize| -> Result<usize> {
        used += n;
        if used > max_iter {
            Err(Error::Convergence {
                iterations: used,
                lower: f64::NAN,
                upper: f64::NAN,
            })
        } else {
            Ok(max_iter - used)
        }
    };

    let free = blahut_arimoto(matrix, inner_tol, max_iter, false, cancel)?;
    budget(free.iterations)?;
    if mean(&points, &free.mass) <= average {
        return Ok(free);
    }

    let k = points.len();
    let uniform = vec![1.0 / k as f64; k];
    let (mut s_lo, mut p_lo) = (0.0, free.mass);
    let mut s_hi = 1.0;
    let mut p_hi;
    loop {
        let remaining = budget(0)?;
        let (run, _, _) = run_with_cost(matrix, s_hi, uniform.clone(), inner_tol, remaining, cancel, None)?;
        budget(run.iterations)?;
        p_hi = run.mass;
        if mean(&points, &p_hi) <= average {
            break;
        }
        s_lo = s_hi;
        p_lo = p_hi.clone();
        s_hi *= 2.0;
    }

    let mut best_lower = f64::NEG_INFINITY;
    let mut best_upper = f64::INFINITY;
    let mut best_mass = p_hi.clone();
    for _ in 0..200 {
        let (m_lo, m_hi) = (mean(&points, &p_lo), mean(&points, &p_hi));
        let theta = if m_lo > m_hi {
            ((average - m_hi) / (m_lo - m_hi)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let mix: Vec<f64> = p_lo
            .iter()
            .zip(&p_hi)
            .map(|(a, b)| theta * a + (1.0 - theta) * b)
            .collect();
        let q = matrix.output(&mix);
        let div = matrix.divergences(&q);
        let lower: f64 = mix.iter().zip(&div).map(|(p, d)| p * d).sum();
        let dual = |s: f64| -> f64 {
            div.iter()
                .zip(&points)
                .map(|(d, x)| d - s * x)
                .fold(f64::NEG_INFINITY, f64::max)
                + s * average
        };
        let upper = dual(s_lo).min(dual(s_hi)).min(dual(0.5 * (s_lo + s_hi)));
        if lower > best_lower {
            best_lower = lower;
            best_mass = mix;
        }
        best_upper = best_upper.min(upper);
        if best_upper - best_lower < tol {
            let used_total = budget(0).map(|r| max_iter - r).unwrap_or(max_iter);
            return Ok(BlahutOutcome {
                mass: best_mass,
                lower: best_lower,
                upper: best_upper,
                iterations: used_total,
                trace: Vec::new(),
            });
        }
        let s_mid = 0.5 * (s_lo + s_hi);
        let remaining = budget(0)?;
        // Blend in the uniform law so no coordinate starts at an underflowed zero.
        let start: Vec<f64> = p_hi.iter().zip(&uniform).map(|(a, u)| 0.5 * (a + u)).collect();
        let (run, _, _) = run_with_cost(matrix, s_mid, start, inner_tol, remaining, cancel, None)?;
        budget(run.iterations)?;
        if mean(&points, &run.mass) > average {
            s_lo = s_mid;
            p_lo = run.mass;
        } else {
            s_hi = s_mid;
            p_hi = run.mass;
        }
    }
    Err(Error::Convergence {
        iterations: max_iter,
        lower: best_lower,
        upper: best_upper,
    })
}
