//! Mutual information, capacity, secrecy capacity, and the secure
//! identification capacity dichotomy for Poisson channels over a finite
//! amplitude grid. All information quantities are in bits.

mod blahut;
mod newton;
mod simplex;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channel::{poisson_log_pmf, PoissonChannel, WiretapChannelPair, DEFAULT_TAIL_TOL};
use crate::error::{Error, Result};

use simplex::{projected_gradient_ascent, projected_gradient_steps, Polytope};

/// Grid size used when none is configured.
pub const DEFAULT_GRID_POINTS: usize = 65;

/// Default positivity threshold for the secrecy capacity.
pub const DEFAULT_POSITIVITY_THRESHOLD: f64 = 1e-6;

/// Cooperative cancellation flag shared between a caller and a solver.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::Relaxed);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::Relaxed)
    }
}

/// Sorted input alphabet `{0 = x_0 < x_1 < ... < x_{K-1} = A}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeGrid {
    points: Vec<f64>,
}

impl AmplitudeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::domain("amplitude grid must contain at least one point"));
        }
        if points[0] != 0.0 {
            return Err(Error::domain("amplitude grid must start at 0"));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("amplitude grid points must be finite"));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("amplitude grid must be strictly increasing"));
        }
        Ok(AmplitudeGrid { points })
    }

    /// `count` evenly spaced points on `[0, peak]`.
    pub fn uniform(peak: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::domain("grid needs at least one point"));
        }
        if count == 1 {
            return Self::new(vec![0.0]);
        }
        if !(peak.is_finite() && peak > 0.0) {
            return Err(Error::domain(format!("peak amplitude must be positive, got {peak}")));
        }
        let step = peak / (count - 1) as f64;
        let mut points: Vec<f64> = (0..count).map(|i| i as f64 * step).collect();
        points[count - 1] = peak;
        Self::new(points)
    }

    /// Two-point on-off alphabet `{0, peak}`.
    pub fn on_off(peak: f64) -> Result<Self> {
        Self::uniform(peak, 2)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// The grid refined by one extra point (no-op if already present).
    pub fn with_point(&self, x: f64) -> Result<Self> {
        if !(x.is_finite() && x >= 0.0) {
            return Err(Error::domain(format!("grid point must be nonnegative, got {x}")));
        }
        let mut points = self.points.clone();
        if !points.contains(&x) {
            points.push(x);
            points.sort_by(f64::total_cmp);
        }
        Self::new(points)
    }
}

/// Probability mass over the points of an [`AmplitudeGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDistribution {
    grid: AmplitudeGrid,
    mass: Vec<f64>,
}

impl InputDistribution {
    pub fn new(grid: AmplitudeGrid, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != grid.len() {
            return Err(Error::domain(format!(
                "{} masses for a grid of {} points",
                mass.len(),
                grid.len()
            )));
        }
        if mass.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::domain("masses must be finite and nonnegative"));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("masses sum to {total}, not 1")));
        }
        Ok(InputDistribution { grid, mass })
    }

    /// Normalizes solver output, which only sums to one up to rounding.
    fn from_solver(grid: &AmplitudeGrid, mut mass: Vec<f64>) -> Self {
        for p in &mut mass {
            *p = p.max(0.0);
        }
        let total: f64 = mass.iter().sum();
        for p in &mut mass {
            *p /= total;
        }
        InputDistribution {
            grid: grid.clone(),
            mass,
        }
    }

    pub fn uniform(grid: AmplitudeGrid) -> Self {
        let k = grid.len();
        InputDistribution {
            mass: vec![1.0 / k as f64; k],
            grid,
        }
    }

    pub fn point_mass(grid: AmplitudeGrid, index: usize) -> Result<Self> {
        if index >= grid.len() {
            return Err(Error::domain(format!("index {index} outside a grid of {}", grid.len())));
        }
        let mut mass = vec![0.0; grid.len()];
        mass[index] = 1.0;
        Ok(InputDistribution { grid, mass })
    }

    pub fn grid(&self) -> &AmplitudeGrid {
        &self.grid
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn mean(&self) -> f64 {
        self.grid.points.iter().zip(&self.mass).map(|(x, p)| x * p).sum()
    }
}

/// Rows `W(.|x)` over `{0..=y_max}`, stored on each row's certified support
/// and renormalized to sum to one.
pub(crate) struct TransitionMatrix {
    points: Vec<f64>,
    rows: Vec<(usize, Vec<f64>)>,
    width: usize,
}

impl TransitionMatrix {
    pub fn new(points: &[f64], channel: &PoissonChannel, tail_tol: f64) -> Result<Self> {
        let peak = points.iter().copied().fold(0.0, f64::max);
        let y_max = channel.truncation_bound(peak, tail_tol)? as usize;
        let mut rows = Vec::with_capacity(points.len());
        for &x in points {
            let lo = channel.lower_truncation_bound(x, tail_tol)? as usize;
            let hi = channel.truncation_bound(x, tail_tol)? as usize;
            let mean = channel.mean(x);
            let mut row: Vec<f64> = (lo..=hi).map(|y| poisson_log_pmf(mean, y as u64).exp()).collect();
            let total: f64 = row.iter().sum();
            for w in &mut row {
                *w /= total;
            }
            rows.push((lo, row));
        }
        Ok(TransitionMatrix {
            points: points.to_vec(),
            rows,
            width: y_max + 1,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn y_max(&self) -> u64 {
        (self.width - 1) as u64
    }

    pub fn output(&self, mass: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.width];
        for (p, (lo, row)) in mass.iter().zip(&self.rows) {
            if *p == 0.0 {
                continue;
            }
            for (qy, w) in q[*lo..].iter_mut().zip(row) {
                *qy += p * w;
            }
        }
        q
    }

    /// `D(W_x || q)` in bits for every grid point.
    pub fn divergences(&self, q: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|(lo, row)| {
                row.iter()
                    .zip(&q[*lo..])
                    .filter(|(w, _)| **w > 0.0)
                    .map(|(w, qy)| w * (w / qy.max(f64::MIN_POSITIVE)).log2())
                    .sum::<f64>()
            })
            .collect()
    }

    /// `log2(e) sum_y W_i(y) W_j(y) / q(y)` over `support`: minus the
    /// Hessian of `I(X;Y)` in bits.
    pub fn curvature(&self, q: &[f64], support: &[usize]) -> DMatrix<f64> {
        let m = support.len();
        let mut c = DMatrix::zeros(m, m);
        for a in 0..m {
            let (lo_a, row_a) = &self.rows[support[a]];
            for b in a..m {
                let (lo_b, row_b) = &self.rows[support[b]];
                let lo = (*lo_a).max(*lo_b);
                let hi = (lo_a + row_a.len()).min(lo_b + row_b.len());
                let mut s = 0.0;
                for y in lo..hi {
                    if q[y] > 0.0 {
                        s += row_a[y - lo_a] * row_b[y - lo_b] / q[y];
                    }
                }
                s *= std::f64::consts::LOG2_E;
                c[(a, b)] = s;
                c[(b, a)] = s;
            }
        }
        c
    }

    pub fn information(&self, mass: &[f64]) -> f64 {
        let q = self.output(mass);
        let d = self.divergences(&q);
        mass.iter().zip(&d).map(|(p, d)| p * d).sum::<f64>().max(0.0)
    }
}

/// Settings shared by the optimizers.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Certified optimality gap in bits.
    pub tol: f64,
    pub max_iter: usize,
    pub tail_tol: f64,
    /// Optional average-intensity constraint `sum p(x) x <= P`.
    pub average_power: Option<f64>,
    /// Keep the Blahut-Arimoto lower bound of every iteration.
    pub record_trace: bool,
    pub cancel: Option<CancelToken>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 200_000,
            tail_tol: DEFAULT_TAIL_TOL,
            average_power: None,
            record_trace: false,
            cancel: None,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::domain(format!("tolerance must be positive, got {}", self.tol)));
        }
        if let Some(avg) = self.average_power {
            if !(avg.is_finite() && avg >= 0.0) {
                return Err(Error::domain(format!("average power must be nonnegative, got {avg}")));
            }
        }
        Ok(())
    }

    fn polytope<'a>(&self, points: &'a [f64]) -> Polytope<'a> {
        Polytope {
            points,
            average: self.average_power,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    /// Bits per channel use.
    pub value: f64,
    pub optimizer: InputDistribution,
    pub iterations: usize,
    /// Certified distance between `value` and the optimum.
    pub duality_gap: f64,
    /// Output truncation cutoffs used, one per channel involved.
    pub truncation: Vec<u64>,
    pub tail_tol: f64,
    /// Per-iteration Blahut-Arimoto lower bounds, when requested.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<f64>,
}

impl CapacityResult {
    fn degenerate(grid: &AmplitudeGrid, truncation: Vec<u64>, tail_tol: f64) -> Self {
        let zero = grid.points.iter().position(|&x| x == 0.0).unwrap_or(0);
        CapacityResult {
            value: 0.0,
            optimizer: InputDistribution::point_mass(grid.clone(), zero).expect("grid holds at least one point"),
            iterations: 0,
            duality_gap: 0.0,
            truncation,
            tail_tol,
            trace: Vec::new(),
        }
    }
}

/// Output law `q(y) = sum_x p(x) W(y|x)` on `{0..=y_max}`, without renormalization.
pub fn output_distribution(px: &InputDistribution, channel: &PoissonChannel, y_max: u64) -> Vec<f64> {
    let points = px.grid.points();
    (0..=y_max)
        .map(|y| {
            points
                .iter()
                .zip(&px.mass)
                .filter(|(_, p)| **p > 0.0)
                .map(|(x, p)| p * poisson_log_pmf(channel.mean(*x), y).exp())
                .sum()
        })
        .collect()
}

/// `I(X;Y)` in bits, truncated at the certified output cutoff.
pub fn mutual_information(px: &InputDistribution, channel: &PoissonChannel, tail_tol: f64) -> Result<f64> {
    let matrix = TransitionMatrix::new(px.grid.points(), channel, tail_tol)?;
    Ok(matrix.information(&px.mass))
}

/// `C(W) = max_{P_X on grid} I(X;Y)` by Blahut-Arimoto.
///
/// Stops when `max_x D(W_x||q) - I(p) < tol`, which certifies the value.
/// With an average-intensity constraint the multiplier is found by
/// bisection; see [`capacity_by_gradient`] for an independent route.
pub fn capacity(grid: &AmplitudeGrid, channel: &PoissonChannel, opts: &SolverOptions) -> Result<CapacityResult> {
    opts.validate()?;
    let matrix = TransitionMatrix::new(grid.points(), channel, opts.tail_tol)?;
    let truncation = vec![matrix.y_max()];
    if grid.len() == 1 || opts.average_power == Some(0.0) {
        return Ok(CapacityResult::degenerate(grid, truncation, opts.tail_tol));
    }
    let cancel = opts.cancel.as_ref();
    let outcome = match opts.average_power {
        Some(avg) if avg < grid.peak() => {
            blahut::blahut_arimoto_constrained(&matrix, avg, opts.tol, opts.max_iter, cancel)?
        }
        _ => blahut_with_refinement(&matrix, opts)?,
    };
    log::debug!(
        "capacity: {} iterations, bounds [{}, {}]",
        outcome.iterations,
        outcome.lower,
        outcome.upper
    );
    let optimizer = InputDistribution::from_solver(grid, outcome.mass);
    Ok(CapacityResult {
        value: outcome.lower.max(0.0),
        optimizer,
        iterations: outcome.iterations,
        duality_gap: (outcome.upper - outcome.lower).max(0.0),
        truncation,
        tail_tol: opts.tail_tol,
        trace: outcome.trace,
    })
}

/// Iterations of the first-order phase before the Newton refinement starts.
const WARM_START_ITERATIONS: usize = 500;

/// Plain BA for a short warm start, then active-set Newton on its support.
/// Should the refinement fail, BA resumes from where it stopped.
fn blahut_with_refinement(matrix: &TransitionMatrix, opts: &SolverOptions) -> Result<blahut::BlahutOutcome> {
    let cancel = opts.cancel.as_ref();
    let warm = opts.max_iter.min(WARM_START_ITERATIONS);
    let mut first = blahut::blahut_arimoto_partial(matrix, opts.tol, warm, opts.record_trace, cancel)?;
    if first.upper - first.lower < opts.tol || warm == opts.max_iter {
        return first.finish(opts.max_iter);
    }
    let refined = newton::newton_refine(
        first.mass.clone(),
        |p| {
            let d = matrix.divergences(&matrix.output(p));
            (p.iter().zip(&d).map(|(a, b)| a * b).sum(), d)
        },
        |p, s| matrix.curvature(&matrix.output(p), s),
        opts.tol,
        opts.max_iter - warm,
        cancel,
    );
    match refined {
        Ok(out) => Ok(blahut::BlahutOutcome {
            lower: out.value,
            upper: out.value + out.gap,
            mass: out.point,
            iterations: warm + out.iterations,
            trace: std::mem::take(&mut first.trace),
        }),
        Err(Error::Cancelled) => Err(Error::Cancelled),
        Err(e) => {
            log::debug!("newton refinement failed ({e}); continuing Blahut-Arimoto");
            blahut::blahut_arimoto_resume(matrix, first, opts.tol, opts.max_iter, cancel)
        }
    }
}

/// Capacity by projected-gradient ascent with a Frank-Wolfe certificate.
///
/// Shares no iteration with [`capacity`]; used to cross-check it, notably
/// under an average-intensity constraint.
pub fn capacity_by_gradient(
    grid: &AmplitudeGrid,
    channel: &PoissonChannel,
    opts: &SolverOptions,
) -> Result<CapacityResult> {
    opts.validate()?;
    let matrix = TransitionMatrix::new(grid.points(), channel, opts.tail_tol)?;
    let truncation = vec![matrix.y_max()];
    if grid.len() == 1 || opts.average_power == Some(0.0) {
        return Ok(CapacityResult::degenerate(grid, truncation, opts.tail_tol));
    }
    let polytope = opts.polytope(grid.points());
    let out = projected_gradient_ascent(
        &polytope,
        |p| {
            let q = matrix.output(p);
            let g = matrix.divergences(&q);
            let v = p.iter().zip(&g).map(|(a, d)| a * d).sum();
            (v, g)
        },
        opts.tol,
        opts.max_iter,
        opts.cancel.as_ref(),
    )?;
    Ok(CapacityResult {
        value: out.value.max(0.0),
        optimizer: InputDistribution::from_solver(grid, out.point),
        iterations: out.iterations,
        duality_gap: out.gap,
        truncation,
        tail_tol: opts.tail_tol,
        trace: Vec::new(),
    })
}

/// `I(X;Y) - I(X;Z)` for one input law on a wiretap pair.
pub fn secrecy_rate(px: &InputDistribution, pair: &WiretapChannelPair, tail_tol: f64) -> Result<f64> {
    Ok(mutual_information(px, pair.main(), tail_tol)? - mutual_information(px, pair.eavesdropper(), tail_tol)?)
}

/// `C_s(W,V) = max_{P_X} I(X;Y) - I(X;Z)` for a degraded pair.
///
/// The objective is concave for degraded pairs. Its gradient is
/// `D(W_x||q_Y) - D(V_x||q_Z)`; the ascent stops once the Frank-Wolfe gap
/// is below `tol`.
pub fn secrecy_capacity(
    grid: &AmplitudeGrid,
    pair: &WiretapChannelPair,
    opts: &SolverOptions,
) -> Result<CapacityResult> {
    opts.validate()?;
    let main = TransitionMatrix::new(grid.points(), pair.main(), opts.tail_tol)?;
    let eve = TransitionMatrix::new(grid.points(), pair.eavesdropper(), opts.tail_tol)?;
    let truncation = vec![main.y_max(), eve.y_max()];
    if grid.len() == 1 || opts.average_power == Some(0.0) || pair.degradation_noise() == 0.0 {
        return Ok(CapacityResult::degenerate(grid, truncation, opts.tail_tol));
    }
    let polytope = opts.polytope(grid.points());
    let eval = |p: &[f64]| {
        let dy = main.divergences(&main.output(p));
        let dz = eve.divergences(&eve.output(p));
        let g: Vec<f64> = dy.iter().zip(&dz).map(|(a, b)| a - b).collect();
        let v = p.iter().zip(&g).map(|(a, d)| a * d).sum();
        (v, g)
    };
    let cancel = opts.cancel.as_ref();
    let out = if polytope.average.is_some_and(|avg| avg < grid.peak()) {
        projected_gradient_ascent(&polytope, eval, opts.tol, opts.max_iter, cancel)?
    } else {
        let warm = opts.max_iter.min(WARM_START_ITERATIONS);
        let (first, done) = projected_gradient_steps(&polytope, eval, polytope.interior(), opts.tol, warm, cancel)?;
        if done {
            first
        } else {
            let refined = newton::newton_refine(
                first.point.clone(),
                eval,
                |p, s| {
                    let cy = main.curvature(&main.output(p), s);
                    let cz = eve.curvature(&eve.output(p), s);
                    cy - cz
                },
                opts.tol,
                opts.max_iter.saturating_sub(warm),
                cancel,
            );
            match refined {
                Ok(mut out) => {
                    out.iterations += warm;
                    out
                }
                Err(Error::Cancelled) => return Err(Error::Cancelled),
                Err(e) => {
                    log::debug!("newton refinement failed ({e}); continuing projected gradient");
                    let rest = opts.max_iter.saturating_sub(warm);
                    let (out, done) = projected_gradient_steps(&polytope, eval, first.point, opts.tol, rest, cancel)?;
                    if !done {
                        return Err(Error::Convergence {
                            iterations: opts.max_iter,
                            lower: out.value,
                            upper: out.value + out.gap,
                        });
                    }
                    out
                }
            }
        }
    };
    log::debug!("secrecy capacity: {} iterations, gap {}", out.iterations, out.gap);
    Ok(CapacityResult {
        value: out.value.max(0.0),
        optimizer: InputDistribution::from_solver(grid, out.point),
        iterations: out.iterations,
        duality_gap: out.gap,
        truncation,
        tail_tol: opts.tail_tol,
        trace: Vec::new(),
    })
}

/// Outcome of the secure identification capacity dichotomy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdCapacity {
    /// `C(W)` when secure, else 0.
    pub value: f64,
    pub secure: bool,
    pub secrecy_capacity: f64,
    /// `C_s` must exceed this to count as positive.
    pub positivity_threshold: f64,
    /// The dichotomy is proven for Gaussian wiretap channels only; for the
    /// Poisson pair it is applied as a conjecture.
    pub conjectural: bool,
    pub secrecy: CapacityResult,
    pub transmission: Option<CapacityResult>,
}

/// Secure identification capacity: `C(W)` if `C_s(W,V) > threshold`, else 0.
pub fn id_capacity(
    grid: &AmplitudeGrid,
    pair: &WiretapChannelPair,
    positivity_threshold: f64,
    opts: &SolverOptions,
) -> Result<IdCapacity> {
    let secrecy = secrecy_capacity(grid, pair, opts)?;
    let secure = secrecy.value > positivity_threshold;
    let transmission = if secure {
        Some(capacity(grid, pair.main(), opts)?)
    } else {
        None
    };
    Ok(IdCapacity {
        value: transmission.as_ref().map_or(0.0, |c| c.value),
        secure,
        secrecy_capacity: secrecy.value,
        positivity_threshold,
        conjectural: true,
        secrecy,
        transmission,
    })
}
