//! Tensor-product cubic spline interpolation on the phase grid.
//!
//! Spatial axes use periodic cubic splines, velocity axes natural cubic
//! splines; evaluation outside the velocity box clamps to zero. The
//! interpolant is represented in the cubic B-spline basis, so a fit is a
//! set of tridiagonal solves along each axis and evaluation touches a
//! `4^(2d)` local stencil.

use ndarray::{ArrayD, Axis};

use crate::grid::PhaseGrid;
use crate::Point;

const SIXTH: f64 = 1.0 / 6.0;

/// Prefactorized constant-coefficient tridiagonal solver (Thomas algorithm).
struct Tri {
    sup: f64,
    // elimination multipliers and modified diagonal
    w: Vec<f64>,
    dp: Vec<f64>,
}

impl Tri {
    fn new(sub: f64, diag: &[f64], sup: f64) -> Self {
        let n = diag.len();
        let mut w = vec![0.0; n];
        let mut dp = vec![0.0; n];
        dp[0] = diag[0];
        for i in 1..n {
            w[i] = sub / dp[i - 1];
            dp[i] = diag[i] - w[i] * sup;
        }
        Self { sup, w, dp }
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        for i in 1..n {
            rhs[i] -= self.w[i] * rhs[i - 1];
        }
        rhs[n - 1] /= self.dp[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = (rhs[i] - self.sup * rhs[i + 1]) / self.dp[i];
        }
    }
}

/// Periodic B-spline fit along lanes: cyclic tridiagonal via Sherman-Morrison.
struct CyclicFit {
    tri: Tri,
    z: Vec<f64>,
    beta_over_gamma: f64,
    denom: f64,
}

impl CyclicFit {
    fn new(n: usize) -> Self {
        let b = 4.0 * SIXTH;
        let a = SIXTH;
        let gamma = -b;
        let mut diag = vec![b; n];
        diag[0] = b - gamma;
        diag[n - 1] = b - a * a / gamma;
        let tri = Tri::new(a, &diag, a);
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = a;
        let mut z = u;
        tri.solve(&mut z);
        let beta_over_gamma = a / gamma;
        let denom = 1.0 + z[0] + beta_over_gamma * z[n - 1];
        Self { tri, z, beta_over_gamma, denom }
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        self.tri.solve(rhs);
        let factor = (rhs[0] + self.beta_over_gamma * rhs[n - 1]) / self.denom;
        for (x, z) in rhs.iter_mut().zip(self.z.iter()) {
            *x -= factor * z;
        }
    }
}

/// Natural B-spline fit: boundary coefficients equal the samples, interior
/// coefficients from a tridiagonal solve.
struct NaturalFit {
    tri: Tri,
}

impl NaturalFit {
    fn new(n: usize) -> Self {
        let diag = vec![4.0 * SIXTH; n - 2];
        Self { tri: Tri::new(SIXTH, &diag, SIXTH) }
    }

    fn solve(&self, lane: &mut [f64]) {
        let n = lane.len();
        let c0 = lane[0];
        let cn = lane[n - 1];
        let mut rhs: Vec<f64> = lane[1..n - 1].to_vec();
        rhs[0] -= SIXTH * c0;
        rhs[n - 3] -= SIXTH * cn;
        self.tri.solve(&mut rhs);
        lane[1..n - 1].copy_from_slice(&rhs);
    }
}

enum AxisKind {
    Periodic,
    Natural,
}

/// Fitted tensor-product cubic spline over phase-space values.
pub struct PhaseSpline {
    d: usize,
    nx: usize,
    nv: usize,
    dx: f64,
    dv: f64,
    v0: f64,
    strides: Vec<usize>,
    coeffs: Vec<f64>,
}

impl PhaseSpline {
    pub fn fit(grid: &PhaseGrid, values: &ArrayD<f64>) -> Self {
        assert_eq!(values.shape(), grid.phase_shape().as_slice());
        let d = grid.d();
        let mut work = values.to_owned();
        let cyclic = CyclicFit::new(grid.nx());
        let natural = NaturalFit::new(grid.nv());
        for axis in 0..2 * d {
            let kind = if axis < d { AxisKind::Periodic } else { AxisKind::Natural };
            let mut buf = vec![0.0; work.shape()[axis]];
            for mut lane in work.lanes_mut(Axis(axis)) {
                for (b, s) in buf.iter_mut().zip(lane.iter()) {
                    *b = *s;
                }
                match kind {
                    AxisKind::Periodic => cyclic.solve(&mut buf),
                    AxisKind::Natural => natural.solve(&mut buf),
                }
                for (s, b) in lane.iter_mut().zip(buf.iter()) {
                    *s = *b;
                }
            }
        }
        let shape = work.shape().to_vec();
        let mut strides = vec![1usize; shape.len()];
        for i in (0..shape.len() - 1).rev() {
            strides[i] = strides[i + 1] * shape[i + 1];
        }
        let coeffs = work.into_raw_vec_and_offset().0;
        Self {
            d,
            nx: grid.nx(),
            nv: grid.nv(),
            dx: grid.dx(),
            dv: grid.dv(),
            v0: grid.v_coord(0),
            strides,
            coeffs,
        }
    }

    /// Evaluates the spline at `(x, v)`; `x` is wrapped onto the torus and
    /// points outside the velocity box evaluate to zero.
    pub fn eval(&self, x: &Point, v: &Point) -> f64 {
        // per-axis effective taps (stored index, weight), ghosts expanded
        let mut taps: Vec<Vec<(usize, f64)>> = Vec::with_capacity(2 * self.d);
        for a in 0..self.d {
            let mut t = (x[a] / self.dx) % self.nx as f64;
            if t < 0.0 {
                t += self.nx as f64;
            }
            let i = t.floor() as i64;
            let u = t - i as f64;
            taps.push(periodic_taps(i, u, self.nx));
        }
        for a in 0..self.d {
            let t = (v[a] - self.v0) / self.dv;
            if !(0.0..=(self.nv - 1) as f64).contains(&t) {
                return 0.0;
            }
            let i = t.floor() as i64;
            let u = t - i as f64;
            taps.push(natural_taps(i, u, self.nv));
        }
        self.gather(&taps)
    }

    fn gather(&self, taps: &[Vec<(usize, f64)>]) -> f64 {
        let naxes = taps.len();
        let mut counters = vec![0usize; naxes];
        let mut acc = 0.0;
        'outer: loop {
            let mut w = 1.0;
            let mut flat = 0usize;
            for (a, &c) in counters.iter().enumerate() {
                let (idx, factor) = taps[a][c];
                w *= factor;
                flat += idx * self.strides[a];
            }
            acc += w * self.coeffs[flat];
            for a in (0..naxes).rev() {
                counters[a] += 1;
                if counters[a] < taps[a].len() {
                    continue 'outer;
                }
                counters[a] = 0;
            }
            break;
        }
        acc
    }
}

fn bspline_weights(u: f64) -> [f64; 4] {
    let u2 = u * u;
    let u3 = u2 * u;
    [
        (1.0 - u).powi(3) * SIXTH,
        (3.0 * u3 - 6.0 * u2 + 4.0) * SIXTH,
        (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) * SIXTH,
        u3 * SIXTH,
    ]
}

fn periodic_taps(i: i64, u: f64, n: usize) -> Vec<(usize, f64)> {
    let w = bspline_weights(u);
    let n = n as i64;
    let mut out = Vec::with_capacity(4);
    for (off, &weight) in (-1..=2).zip(w.iter()) {
        let idx = (i + off).rem_euclid(n) as usize;
        out.push((idx, weight));
    }
    out
}

/// Natural-axis taps with end-condition ghosts `c_{-1} = 2c_0 - c_1` and
/// `c_n = 2c_{n-1} - c_{n-2}` folded into stored-coefficient weights.
fn natural_taps(i: i64, u: f64, n: usize) -> Vec<(usize, f64)> {
    let w = bspline_weights(u);
    let n = n as i64;
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(6);
    let mut push = |idx: usize, weight: f64| {
        if weight == 0.0 {
            return;
        }
        for entry in out.iter_mut() {
            if entry.0 == idx {
                entry.1 += weight;
                return;
            }
        }
        out.push((idx, weight));
    };
    for (off, &weight) in (-1..=2).zip(w.iter()) {
        let idx = i + off;
        if idx < 0 {
            push(0, 2.0 * weight);
            push(1, -weight);
        } else if idx >= n {
            push((n - 1) as usize, 2.0 * weight);
            push((n - 2) as usize, -weight);
        } else {
            push(idx as usize, weight);
        }
    }
    out
}
