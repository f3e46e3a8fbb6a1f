//! Characteristic flows of the friction dynamics `dX = V ds`,
//! `dV = (-V + F(s, X)) ds`, the velocity straightening map, and the
//! Lagrangian pushforward representation of kinetic solutions.
//!
//! Friction is propagated exactly through `e^{t-s}` factors; the force
//! integrals use midpoint quadrature with the exact exponential prefactors,
//! so constant forces are integrated exactly and smooth forces at second
//! order in the substep.

use ndarray::ArrayD;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{Distribution, GridError, PhaseGrid, Spectral, VectorField};
use crate::interp::PhaseSpline;
use crate::Point;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("force not defined on [{lo}, {hi}]: sampled window is [{have_lo}, {have_hi}]")]
    Domain { lo: f64, hi: f64, have_lo: f64, have_hi: f64 },
    #[error("substep dt_sub must be positive, got {0}")]
    BadSubstep(f64),
    #[error(
        "straightening did not contract (|t - s| = {span:e} exceeds the usable horizon; \
         contraction ratio {ratio})"
    )]
    Horizon { span: f64, ratio: f64 },
    #[error(
        "backward feet leave the velocity box through non-negligible mass \
         (lost {lost:e} of total {total:e})"
    )]
    Tail { lost: f64, total: f64 },
}

/// Time-indexed force field `F(s, x)`.
///
/// Sampled variants interpolate linearly in time and evaluate in space
/// through the trigonometric interpolant of the grid data.
pub enum Force {
    Zero,
    /// Constant in both time and space.
    Uniform(Point),
    /// Space-constant, arbitrary time dependence (closed-form test forces).
    SpaceConstant(Box<dyn Fn(f64) -> Point + Send + Sync>),
    /// Gridded frames on a uniform time grid `t0 + i dt`, trigonometric in x.
    Sampled(SampledForce),
}

pub struct SampledForce {
    t0: f64,
    dt: f64,
    d: usize,
    /// Fourier coefficients (unnormalized forward) of each component.
    frames: Vec<Vec<ArrayD<Complex64>>>,
    spectral: std::sync::Arc<Spectral>,
}

impl Force {
    /// Wraps a single gridded field, constant in time.
    pub fn frozen(
        grid: &PhaseGrid,
        spectral: std::sync::Arc<Spectral>,
        field: &VectorField,
    ) -> Self {
        let coeffs = field.iter().map(|c| spectral.forward(c)).collect();
        Force::Sampled(SampledForce {
            t0: 0.0,
            dt: f64::INFINITY,
            d: grid.d(),
            frames: vec![coeffs],
            spectral,
        })
    }

    /// Wraps a history of gridded fields on the uniform time grid
    /// `t0, t0 + dt, ...`.
    pub fn sampled(
        grid: &PhaseGrid,
        spectral: std::sync::Arc<Spectral>,
        t0: f64,
        dt: f64,
        fields: &[VectorField],
    ) -> Self {
        assert!(dt > 0.0 && !fields.is_empty());
        let frames = fields
            .iter()
            .map(|f| f.iter().map(|c| spectral.forward(c)).collect())
            .collect();
        Force::Sampled(SampledForce { t0, dt, d: grid.d(), frames, spectral })
    }

    fn check_window(&self, lo: f64, hi: f64) -> Result<(), FlowError> {
        if let Force::Sampled(s) = self {
            if s.frames.len() > 1 {
                let have_lo = s.t0;
                let have_hi = s.t0 + (s.frames.len() - 1) as f64 * s.dt;
                let slack = 1e-9 * s.dt.max(1.0);
                if lo < have_lo - slack || hi > have_hi + slack {
                    return Err(FlowError::Domain { lo, hi, have_lo, have_hi });
                }
            }
        }
        Ok(())
    }

    /// Evaluates the force at `(t, x)`; `x` may be an unwrapped torus lift.
    pub fn eval(&self, t: f64, x: &Point) -> Point {
        match self {
            Force::Zero => [0.0, 0.0],
            Force::Uniform(f) => *f,
            Force::SpaceConstant(f) => f(t),
            Force::Sampled(s) => s.eval(t, x),
        }
    }
}

impl SampledForce {
    fn eval(&self, t: f64, x: &Point) -> Point {
        let mut out = [0.0, 0.0];
        if self.frames.len() == 1 {
            for c in 0..self.d {
                out[c] = self.spectral.eval_interpolant(&self.frames[0][c], x);
            }
            return out;
        }
        let pos = ((t - self.t0) / self.dt).clamp(0.0, (self.frames.len() - 1) as f64);
        let i = (pos.floor() as usize).min(self.frames.len() - 2);
        let w = pos - i as f64;
        for c in 0..self.d {
            let a = self.spectral.eval_interpolant(&self.frames[i][c], x);
            let b = self.spectral.eval_interpolant(&self.frames[i + 1][c], x);
            out[c] = (1.0 - w) * a + w * b;
        }
        out
    }
}

/// Endpoint of a characteristic together with the phase-flow Jacobian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowResult {
    /// Unwrapped position (torus lift).
    pub x: Point,
    pub v: Point,
    /// Determinant `e^{d (s - t)}` of the phase-space map.
    pub jacobian_phase: f64,
}

/// Integrates the characteristic from state `(x, v)` at time `t` to time `s`.
pub fn flow(
    d: usize,
    force: &Force,
    x: Point,
    v: Point,
    t: f64,
    s: f64,
    dt_sub: f64,
) -> Result<FlowResult, FlowError> {
    if !(dt_sub > 0.0) {
        return Err(FlowError::BadSubstep(dt_sub));
    }
    force.check_window(t.min(s), t.max(s))?;
    let total = s - t;
    let jacobian_phase = (d as f64 * total).exp();
    if total == 0.0 {
        return Ok(FlowResult { x, v, jacobian_phase });
    }
    // midpoint quadrature is exact for forces constant in time and space,
    // so one substep suffices there
    let n_sub = match force {
        Force::Zero | Force::Uniform(_) => 1,
        _ => (total.abs() / dt_sub).ceil().max(1.0) as usize,
    };
    let h = total / n_sub as f64;
    let eh = (-h).exp();
    let ehalf = (-0.5 * h).exp();
    let wx = h - (1.0 - eh); // integral of 1 - e^{tau - end} over a substep
    let wv = 1.0 - eh; // integral of e^{tau - end} over a substep
    let mut xx = x;
    let mut vv = v;
    for i in 0..n_sub {
        let a = t + i as f64 * h;
        // zero-force midpoint predictor
        let mut xm = [0.0, 0.0];
        for c in 0..d {
            xm[c] = xx[c] + (1.0 - ehalf) * vv[c];
        }
        let fm = force.eval(a + 0.5 * h, &xm);
        for c in 0..d {
            let xn = xx[c] + (1.0 - eh) * vv[c] + wx * fm[c];
            let vn = eh * vv[c] + wv * fm[c];
            xx[c] = xn;
            vv[c] = vn;
        }
    }
    Ok(FlowResult { x: xx, v: vv, jacobian_phase })
}

/// Result of solving `X^{s;t}(x, psi) = x + (1 - e^{t-s}) v` by fixed point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StraightenResult {
    pub psi: Point,
    /// Residual of the defining equation at the returned value.
    pub residual: f64,
    /// Last observed contraction ratio of the fixed-point increments.
    pub contraction: f64,
    pub iterations: usize,
}

/// Straightening change of velocity variable at one `(x, v)` node: after the
/// substitution the spatial foot of the true flow coincides with the
/// free-friction foot.
#[allow(clippy::too_many_arguments)]
pub fn straighten(
    d: usize,
    force: &Force,
    x: Point,
    v: Point,
    s: f64,
    t: f64,
    tol: f64,
    horizon: f64,
    dt_sub: f64,
) -> Result<StraightenResult, FlowError> {
    let span = (t - s).abs();
    if span > horizon {
        return Err(FlowError::Horizon { span, ratio: f64::NAN });
    }
    if span < 1e-14 {
        return Ok(StraightenResult { psi: v, residual: 0.0, contraction: 0.0, iterations: 0 });
    }
    let denom = 1.0 - (t - s).exp();
    let mut target = [0.0, 0.0];
    for c in 0..d {
        target[c] = x[c] + denom * v[c];
    }
    let residual_of = |w: &Point| -> Result<(f64, Point), FlowError> {
        let r = flow(d, force, x, *w, t, s, dt_sub)?;
        let mut res = 0.0;
        let mut gap = [0.0, 0.0];
        for c in 0..d {
            gap[c] = r.x[c] - target[c];
            res += gap[c] * gap[c];
        }
        Ok((res.sqrt(), gap))
    };

    let mut psi = v;
    let mut prev_step = f64::INFINITY;
    let mut contraction: f64 = 0.0;
    let max_iter = 100;
    for iter in 0..max_iter {
        let (res, gap) = residual_of(&psi)?;
        if res < tol {
            return Ok(StraightenResult { psi, residual: res, contraction, iterations: iter });
        }
        // psi <- psi - gap / denom: fixed point on the rescaled remainder,
        // a small Lipschitz perturbation of the identity for short spans
        let mut step = 0.0;
        for c in 0..d {
            let delta = gap[c] / denom;
            psi[c] -= delta;
            step += delta * delta;
        }
        let step = step.sqrt();
        if prev_step.is_finite() && prev_step > 0.0 {
            contraction = step / prev_step;
            if contraction >= 1.0 {
                return Err(FlowError::Horizon { span, ratio: contraction });
            }
        }
        prev_step = step;
    }
    let (res, _) = residual_of(&psi)?;
    if res < tol {
        Ok(StraightenResult { psi, residual: res, contraction, iterations: max_iter })
    } else {
        Err(FlowError::Horizon { span, ratio: contraction })
    }
}

/// Straightening map tabulated on an `(x, v)` sub-grid for fixed `(s, t)`.
#[derive(Debug, Clone)]
pub struct StraighteningMap {
    /// `(x, v, psi)` triples per node.
    pub nodes: Vec<(Point, Point, Point)>,
    /// Velocity-Jacobian determinant of psi per node (central differences).
    pub det: Vec<f64>,
    pub max_residual: f64,
}

/// Builds the straightening map on every `stride`-th grid node and estimates
/// `det D_v psi` by central differences in v.
#[allow(clippy::too_many_arguments)]
pub fn straightening_map(
    grid: &PhaseGrid,
    force: &Force,
    s: f64,
    t: f64,
    tol: f64,
    horizon: f64,
    dt_sub: f64,
    stride: usize,
) -> Result<StraighteningMap, FlowError> {
    let d = grid.d();
    let delta = 1e-4;
    let mut coords = Vec::new();
    let xi: Vec<usize> = (0..grid.nx()).step_by(stride.max(1)).collect();
    let vi: Vec<usize> = (0..grid.nv()).step_by(stride.max(1)).collect();
    if d == 1 {
        for &i in &xi {
            for &j in &vi {
                coords.push(([grid.x_coord(i), 0.0], [grid.v_coord(j), 0.0]));
            }
        }
    } else {
        for &i0 in &xi {
            for &i1 in &xi {
                for &j0 in &vi {
                    for &j1 in &vi {
                        coords.push((
                            [grid.x_coord(i0), grid.x_coord(i1)],
                            [grid.v_coord(j0), grid.v_coord(j1)],
                        ));
                    }
                }
            }
        }
    }
    let results: Vec<Result<((Point, Point, Point), f64, f64), FlowError>> = coords
        .par_iter()
        .map(|&(x, v)| {
            let base = straighten(d, force, x, v, s, t, tol, horizon, dt_sub)?;
            let mut jac = [[0.0; 2]; 2];
            for a in 0..d {
                let mut vp = v;
                vp[a] += delta;
                let mut vm = v;
                vm[a] -= delta;
                let rp = straighten(d, force, x, vp, s, t, tol, horizon, dt_sub)?;
                let rm = straighten(d, force, x, vm, s, t, tol, horizon, dt_sub)?;
                for b in 0..d {
                    jac[b][a] = (rp.psi[b] - rm.psi[b]) / (2.0 * delta);
                }
            }
            let det = if d == 1 {
                jac[0][0]
            } else {
                jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0]
            };
            Ok(((x, v, base.psi), det, base.residual))
        })
        .collect();
    let mut nodes = Vec::with_capacity(results.len());
    let mut det = Vec::with_capacity(results.len());
    let mut max_residual: f64 = 0.0;
    for r in results {
        let (node, det_v, res) = r?;
        nodes.push(node);
        det.push(det_v);
        max_residual = max_residual.max(res);
    }
    Ok(StraighteningMap { nodes, det, max_residual })
}

/// Lagrangian pushforward `f(t, x, v) = e^{d t} f_in(X^{0;t}, V^{0;t})` with
/// cubic-spline evaluation of `f_in` (periodic in x, zero outside the
/// velocity box).
pub fn pushforward_representation(
    grid: &PhaseGrid,
    f_in: &Distribution,
    force: &Force,
    t: f64,
    dt_sub: f64,
) -> Result<Distribution, FlowError> {
    let (dist, lost) = pushforward_raw(grid, f_in, force, t, 0.0, dt_sub)?;
    let total = f_in.total_mass(grid);
    if total > 0.0 && lost / total > f_in.tail_tolerance() {
        return Err(FlowError::Tail { lost, total });
    }
    Ok(dist)
}

/// Shared backward-feet evaluation: maps each node `(x, v)` at time `t_to`
/// back to `t_from`, evaluates the spline of `f_in` there and scales by
/// `e^{d (t_to - t_from)}`. Returns the raw result (negative undershoot
/// intact) and the mass of `f_in` seen at out-of-box feet.
pub fn pushforward_raw(
    grid: &PhaseGrid,
    f_in: &Distribution,
    force: &Force,
    t_to: f64,
    t_from: f64,
    dt_sub: f64,
) -> Result<(Distribution, f64), FlowError> {
    force.check_window(t_from.min(t_to), t_from.max(t_to))?;
    let d = grid.d();
    let spline = PhaseSpline::fit(grid, f_in.values());
    let scale = ((t_to - t_from) * d as f64).exp();
    let shape = grid.phase_shape();
    let total_nodes: usize = shape.iter().product();
    let nx = grid.nx();
    let nv = grid.nv();
    let vmin = grid.v_coord(0);
    let vmax_c = grid.v_coord(nv - 1);
    let cell_weight = grid.spatial_weight() * grid.velocity_weight();

    let rows: Vec<(f64, f64)> = (0..total_nodes)
        .into_par_iter()
        .map(|flat| {
            let mut rem = flat;
            let mut idx = [0usize; 4];
            for a in (0..2 * d).rev() {
                let n = if a < d { nx } else { nv };
                idx[a] = rem % n;
                rem /= n;
            }
            let mut x = [0.0, 0.0];
            let mut v = [0.0, 0.0];
            for a in 0..d {
                x[a] = grid.x_coord(idx[a]);
                v[a] = grid.v_coord(idx[d + a]);
            }
            let r = flow(d, force, x, v, t_to, t_from, dt_sub).expect("window checked");
            let mut outside = false;
            let mut clamped = r.v;
            for c in 0..d {
                if r.v[c] < vmin || r.v[c] > vmax_c {
                    outside = true;
                    clamped[c] = r.v[c].clamp(vmin, vmax_c);
                }
            }
            if outside {
                // the value is zero by the clamp-to-zero convention; record
                // the mass f_in actually carries at the escape location
                let boundary_val = spline.eval(&r.x, &clamped).max(0.0);
                (0.0, boundary_val * cell_weight)
            } else {
                (scale * spline.eval(&r.x, &r.v), 0.0)
            }
        })
        .collect();

    let mut values = grid.zero_phase();
    let slice = values.as_slice_mut().expect("contiguous");
    let mut lost = 0.0;
    for (i, (val, esc)) in rows.into_iter().enumerate() {
        slice[i] = val;
        lost += esc;
    }
    Ok((Distribution::from_raw_unchecked(values, f_in.tail_tolerance()), lost))
}
