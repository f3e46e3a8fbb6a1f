//! FFT plans and Fourier-multiplier operators on the spatial grid.
//!
//! Convention: the forward transform is the unnormalized sum with kernel
//! `e^{-i k.x}`; the inverse carries the `1/Nx^d` factor. Normalized
//! coefficients (forward divided by `Nx^d`) therefore represent the field
//! with respect to the normalized torus measure and the zeroth coefficient
//! is the spatial mean.

use std::sync::Arc;

use ndarray::{ArrayD, Axis, Dimension, IxDyn};
use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use super::{GridError, PhaseGrid, ScalarField, VectorField};

/// Cached transform plans plus the multiplier machinery for one grid.
pub struct Spectral {
    d: usize,
    nx: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Spectral {
    pub fn new(grid: &PhaseGrid) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft(grid.nx(), FftDirection::Forward);
        let inverse = planner.plan_fft(grid.nx(), FftDirection::Inverse);
        Self { d: grid.d(), nx: grid.nx(), forward, inverse }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    fn transform_axis(&self, data: &mut ArrayD<Complex64>, axis: usize, plan: &Arc<dyn Fft<f64>>) {
        let mut buf = vec![Complex64::default(); self.nx];
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        for mut lane in data.lanes_mut(Axis(axis)) {
            for (b, s) in buf.iter_mut().zip(lane.iter()) {
                *b = *s;
            }
            plan.process_with_scratch(&mut buf, &mut scratch);
            for (s, b) in lane.iter_mut().zip(buf.iter()) {
                *s = *b;
            }
        }
    }

    /// Unnormalized forward transform of a real spatial field.
    pub fn forward(&self, field: &ScalarField) -> ArrayD<Complex64> {
        let mut data = field.mapv(|x| Complex64::new(x, 0.0));
        for axis in 0..self.d {
            self.transform_axis(&mut data, axis, &self.forward.clone());
        }
        data
    }

    /// Inverse transform (carries `1/Nx^d`), returning the real part.
    pub fn inverse(&self, coeffs: &ArrayD<Complex64>) -> ScalarField {
        let mut data = coeffs.clone();
        for axis in 0..self.d {
            self.transform_axis(&mut data, axis, &self.inverse.clone());
        }
        let scale = 1.0 / (self.nx.pow(self.d as u32) as f64);
        data.mapv(|c| c.re * scale)
    }

    /// Normalized coefficients: mean-value functional at `k = 0`.
    pub fn coefficients(&self, field: &ScalarField) -> ArrayD<Complex64> {
        let scale = 1.0 / (self.nx.pow(self.d as u32) as f64);
        self.forward(field).mapv(|c| c * scale)
    }

    /// Forward transform of a complex spatial field, normalized coefficients.
    pub fn coefficients_complex(&self, field: &ArrayD<Complex64>) -> ArrayD<Complex64> {
        let mut data = field.clone();
        for axis in 0..self.d {
            self.transform_axis(&mut data, axis, &self.forward.clone());
        }
        let scale = 1.0 / (self.nx.pow(self.d as u32) as f64);
        data.mapv(|c| c * scale)
    }

    /// Synthesis of normalized coefficients back to complex physical values.
    pub fn synthesis_complex(&self, coeffs: &ArrayD<Complex64>) -> ArrayD<Complex64> {
        let mut data = coeffs.clone();
        for axis in 0..self.d {
            self.transform_axis(&mut data, axis, &self.inverse.clone());
        }
        data
    }

    fn wavenumber(&self, i: usize) -> i64 {
        if i <= self.nx / 2 - 1 {
            i as i64
        } else {
            i as i64 - self.nx as i64
        }
    }

    fn wavevector(&self, idx: &[usize]) -> [i64; 2] {
        let mut k = [0i64; 2];
        for a in 0..self.d {
            k[a] = self.wavenumber(idx[a]);
        }
        k
    }

    /// Applies a real diagonal Fourier multiplier `m(k)`.
    pub fn apply_multiplier(&self, field: &ScalarField, m: impl Fn(&[i64; 2]) -> f64) -> ScalarField {
        let mut coeffs = self.forward(field);
        for (idx, c) in coeffs.indexed_iter_mut() {
            let k = self.wavevector(idx.slice());
            *c *= m(&k);
        }
        self.inverse(&coeffs)
    }

    /// Exact derivative of the trigonometric interpolant along `axis`.
    ///
    /// The Nyquist mode is zeroed to keep the output real; the result has
    /// zero mean by construction.
    pub fn derivative(&self, field: &ScalarField, axis: usize) -> ScalarField {
        assert!(axis < self.d, "axis out of range");
        let mut coeffs = self.forward(field);
        let nyquist = self.nx / 2;
        for (idx, c) in coeffs.indexed_iter_mut() {
            let i = idx[axis];
            if i == nyquist {
                *c = Complex64::default();
            } else {
                let k = self.wavenumber(i) as f64;
                *c *= Complex64::new(0.0, k);
            }
        }
        self.inverse(&coeffs)
    }

    pub fn gradient(&self, field: &ScalarField) -> VectorField {
        (0..self.d).map(|a| self.derivative(field, a)).collect()
    }

    pub fn divergence(&self, field: &VectorField) -> ScalarField {
        let mut out = self.derivative(&field[0], 0);
        for a in 1..self.d {
            out += &self.derivative(&field[a], a);
        }
        out
    }

    /// Checked entry point for [`Self::derivative`].
    pub fn spectral_derivative(
        &self,
        grid: &PhaseGrid,
        field: &ScalarField,
        axis: usize,
    ) -> Result<ScalarField, GridError> {
        grid.check_scalar(field)?;
        if axis >= self.d {
            return Err(GridError::BadGrid(format!("axis {axis} out of range for d = {}", self.d)));
        }
        Ok(self.derivative(field, axis))
    }

    /// Smoothing multiplier `J_eps = (I - eps^2 Lap)^{-1}`, i.e. each mode is
    /// scaled by `1 / (1 + eps^2 |k|^2)`.
    pub fn apply_j_epsilon(
        &self,
        grid: &PhaseGrid,
        field: &ScalarField,
        epsilon: f64,
    ) -> Result<ScalarField, GridError> {
        grid.check_scalar(field)?;
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(GridError::BadGrid(format!("epsilon must be nonnegative, got {epsilon}")));
        }
        if epsilon == 0.0 {
            return Ok(field.clone());
        }
        let e2 = epsilon * epsilon;
        Ok(self.apply_multiplier(field, |k| {
            let k2 = (k[0] * k[0] + k[1] * k[1]) as f64;
            1.0 / (1.0 + e2 * k2)
        }))
    }

    /// Per-mode Lame matrix `|k|^2 I + k (x) k`. The off-diagonal coupling is
    /// zeroed when either index sits at the Nyquist bin: the sign of an
    /// aliased `k = -Nx/2` is ambiguous, and keeping the cross term there
    /// would break the conjugate symmetry of real fields.
    fn lame_matrix(&self, idx: &[usize]) -> [[f64; 2]; 2] {
        let k = self.wavevector(idx);
        let k2 = (k[0] * k[0] + k[1] * k[1]) as f64;
        let nyq = self.nx / 2;
        let mut m = [[0.0; 2]; 2];
        for a in 0..self.d {
            for b in 0..self.d {
                if a == b {
                    m[a][b] = k2 + (k[a] * k[a]) as f64;
                } else if idx[a] != nyq && idx[b] != nyq {
                    m[a][b] = (k[a] * k[b]) as f64;
                }
            }
        }
        m
    }

    /// Composite second-order operator `(Lap + grad div) u`, mode-by-mode
    /// `-(|k|^2 I + k (x) k) u_k`.
    pub fn apply_lame(&self, grid: &PhaseGrid, u: &VectorField) -> Result<VectorField, GridError> {
        grid.check_vector(u)?;
        let coeffs: Vec<ArrayD<Complex64>> = u.iter().map(|c| self.forward(c)).collect();
        let mut out: Vec<ArrayD<Complex64>> =
            (0..self.d).map(|_| ArrayD::zeros(IxDyn(coeffs[0].shape()))).collect();
        let shape = coeffs[0].shape().to_vec();
        for idx in ndarray::indices(shape.as_slice()) {
            let id = idx.slice().to_vec();
            let m = self.lame_matrix(&id);
            let mut uk = [Complex64::default(); 2];
            for a in 0..self.d {
                uk[a] = coeffs[a][IxDyn(&id)];
            }
            for a in 0..self.d {
                let mut acc = Complex64::default();
                for b in 0..self.d {
                    acc -= m[a][b] * uk[b];
                }
                out[a][IxDyn(&id)] = acc;
            }
        }
        Ok(out.iter().map(|c| self.inverse(c)).collect())
    }

    /// Solves `(I - a (Lap + grad div)) w = u` per mode; the per-mode matrix
    /// `I + a (|k|^2 I + k (x) k)` is symmetric positive definite for `a > 0`.
    pub fn solve_lame_implicit(
        &self,
        grid: &PhaseGrid,
        u: &VectorField,
        a: f64,
    ) -> Result<VectorField, GridError> {
        grid.check_vector(u)?;
        if !(a > 0.0) || !a.is_finite() {
            return Err(GridError::BadGrid(format!("implicit weight must be positive, got {a}")));
        }
        let coeffs: Vec<ArrayD<Complex64>> = u.iter().map(|c| self.forward(c)).collect();
        let mut out: Vec<ArrayD<Complex64>> =
            (0..self.d).map(|_| ArrayD::zeros(IxDyn(coeffs[0].shape()))).collect();
        let shape = coeffs[0].shape().to_vec();
        for idx in ndarray::indices(shape.as_slice()) {
            let id = idx.slice().to_vec();
            let m = self.lame_matrix(&id);
            let mut uk = [Complex64::default(); 2];
            for c in 0..self.d {
                uk[c] = coeffs[c][IxDyn(&id)];
            }
            if self.d == 1 {
                out[0][IxDyn(&id)] = uk[0] / (1.0 + a * m[0][0]);
            } else {
                let m00 = 1.0 + a * m[0][0];
                let m11 = 1.0 + a * m[1][1];
                let m01 = a * m[0][1];
                let det = m00 * m11 - m01 * m01;
                out[0][IxDyn(&id)] = (m11 * uk[0] - m01 * uk[1]) / det;
                out[1][IxDyn(&id)] = (m00 * uk[1] - m01 * uk[0]) / det;
            }
        }
        Ok(out.iter().map(|c| self.inverse(c)).collect())
    }

    /// Spectral derivative along one axis of an arbitrary-rank array whose
    /// lanes along `axis` hold spatial samples of length `Nx` (used for the
    /// spatial axes of phase-space arrays).
    pub fn derivative_along_axis(&self, values: &ArrayD<f64>, axis: usize) -> ArrayD<f64> {
        assert_eq!(values.shape()[axis], self.nx, "axis length must equal Nx");
        let mut data = values.mapv(|x| Complex64::new(x, 0.0));
        self.transform_axis(&mut data, axis, &self.forward.clone());
        let nyquist = self.nx / 2;
        for (idx, c) in data.indexed_iter_mut() {
            let i = idx[axis];
            if i == nyquist {
                *c = Complex64::default();
            } else {
                *c *= Complex64::new(0.0, self.wavenumber(i) as f64);
            }
        }
        self.transform_axis(&mut data, axis, &self.inverse.clone());
        let scale = 1.0 / self.nx as f64;
        data.mapv(|c| c.re * scale)
    }

    /// Evaluates the trigonometric interpolant of `field` at an arbitrary
    /// point (exact for grid data, `O(Nx^d)` per call).
    pub fn eval_interpolant(&self, coeffs: &ArrayD<Complex64>, x: &[f64; 2]) -> f64 {
        let scale = 1.0 / (self.nx.pow(self.d as u32) as f64);
        let mut acc = Complex64::default();
        for (idx, c) in coeffs.indexed_iter() {
            let mut phase = 0.0;
            for a in 0..self.d {
                phase += self.wavenumber(idx[a]) as f64 * x[a];
            }
            acc += c * Complex64::new(0.0, phase).exp();
        }
        acc.re * scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(d: usize, nx: usize) -> PhaseGrid {
        PhaseGrid::new(d, nx, 8, 1.0).unwrap()
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = grid(1, 32);
        let sp = Spectral::new(&g);
        let c = g.scalar_from_fn(|_| 3.5);
        let dc = sp.spectral_derivative(&g, &c, 0).unwrap();
        for &x in dc.iter() {
            assert!(x.abs() < 1e-13);
        }
    }

    #[test]
    fn derivative_of_single_mode() {
        let g = grid(1, 32);
        let sp = Spectral::new(&g);
        let f = g.scalar_from_fn(|x| x[0].cos());
        let df = sp.spectral_derivative(&g, &f, 0).unwrap();
        let exact = g.scalar_from_fn(|x| -x[0].sin());
        for (a, b) in df.iter().zip(exact.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        // zero mean
        let mean: f64 = df.iter().sum::<f64>() / df.len() as f64;
        assert!(mean.abs() < 1e-14);
    }

    #[test]
    fn derivative_of_mixed_modes() {
        let g = grid(1, 64);
        let sp = Spectral::new(&g);
        let f = g.scalar_from_fn(|x| (3.0 * x[0]).cos() + (5.0 * x[0]).sin());
        let df = sp.spectral_derivative(&g, &f, 0).unwrap();
        let exact = g.scalar_from_fn(|x| -3.0 * (3.0 * x[0]).sin() + 5.0 * (5.0 * x[0]).cos());
        for (a, b) in df.iter().zip(exact.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-11);
        }
    }

    #[test]
    fn derivative_rejects_non_finite() {
        let g = grid(1, 32);
        let sp = Spectral::new(&g);
        let mut f = g.zero_scalar();
        f[[0usize].as_slice()] = f64::NAN;
        assert!(sp.spectral_derivative(&g, &f, 0).is_err());
    }

    #[test]
    fn j_epsilon_identity_and_half() {
        let g = grid(1, 32);
        let sp = Spectral::new(&g);
        let f = g.scalar_from_fn(|x| 1.0 + x[0].cos() + 0.2 * (3.0 * x[0]).sin());
        let id = sp.apply_j_epsilon(&g, &f, 0.0).unwrap();
        for (a, b) in id.iter().zip(f.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        let c = g.scalar_from_fn(|x| x[0].cos());
        let half = sp.apply_j_epsilon(&g, &c, 1.0).unwrap();
        let exact = g.scalar_from_fn(|x| 0.5 * x[0].cos());
        for (a, b) in half.iter().zip(exact.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
        // constants are k = 0 modes and pass through unchanged
        let konst = g.scalar_from_fn(|_| 2.25);
        let same = sp.apply_j_epsilon(&g, &konst, 1.0).unwrap();
        for &x in same.iter() {
            assert_abs_diff_eq!(x, 2.25, epsilon = 1e-14);
        }
    }

    #[test]
    fn j_epsilon_commutes_with_derivative() {
        let g = grid(1, 32);
        let sp = Spectral::new(&g);
        let f = g.scalar_from_fn(|x| (2.0 * x[0]).cos() + 0.3 * (5.0 * x[0]).sin());
        let a = sp.apply_j_epsilon(&g, &sp.derivative(&f, 0), 0.7).unwrap();
        let b = sp.derivative(&sp.apply_j_epsilon(&g, &f, 0.7).unwrap(), 0);
        for (x, y) in a.iter().zip(b.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn lame_1d_matches_twice_second_derivative() {
        let g = grid(1, 32);
        let sp = Spectral::new(&g);
        let u = vec![g.scalar_from_fn(|x| x[0].sin())];
        let lu = sp.apply_lame(&g, &u).unwrap();
        let exact = g.scalar_from_fn(|x| -2.0 * x[0].sin());
        for (a, b) in lu[0].iter().zip(exact.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn lame_constant_vanishes() {
        let g = grid(2, 16);
        let sp = Spectral::new(&g);
        let u = vec![g.scalar_from_fn(|_| 1.0), g.scalar_from_fn(|_| -0.5)];
        let lu = sp.apply_lame(&g, &u).unwrap();
        for comp in &lu {
            for &x in comp.iter() {
                assert!(x.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn lame_2d_transverse_mode() {
        // u = (sin(y), 0): k = (0, 1), |k|^2 I + k(x)k = diag(1, 2)
        let g = grid(2, 16);
        let sp = Spectral::new(&g);
        let u = vec![g.scalar_from_fn(|x| x[1].sin()), g.zero_scalar()];
        let lu = sp.apply_lame(&g, &u).unwrap();
        let exact = g.scalar_from_fn(|x| -x[1].sin());
        for (a, b) in lu[0].iter().zip(exact.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        for &x in lu[1].iter() {
            assert!(x.abs() < 1e-12);
        }
    }

    #[test]
    fn implicit_lame_single_mode_and_roundtrip() {
        let g = grid(1, 32);
        let sp = Spectral::new(&g);
        let u = vec![g.scalar_from_fn(|x| x[0].sin())];
        let w = sp.solve_lame_implicit(&g, &u, 1.0).unwrap();
        let exact = g.scalar_from_fn(|x| x[0].sin() / 3.0);
        for (a, b) in w[0].iter().zip(exact.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        // residual (I - a L) w = u
        let lw = sp.apply_lame(&g, &w).unwrap();
        for ((wi, li), ui) in w[0].iter().zip(lw[0].iter()).zip(u[0].iter()) {
            assert_abs_diff_eq!(wi - li, ui, epsilon = 1e-10);
        }
        // constants (k = 0) pass through
        let c = vec![g.scalar_from_fn(|_| 4.0)];
        let wc = sp.solve_lame_implicit(&g, &c, 3.0).unwrap();
        for &x in wc[0].iter() {
            assert_abs_diff_eq!(x, 4.0, epsilon = 1e-13);
        }
        // a = 0 violates the precondition
        assert!(sp.solve_lame_implicit(&g, &u, 0.0).is_err());
    }

    #[test]
    fn interpolant_is_exact_on_grid_nodes() {
        let g = grid(2, 16);
        let sp = Spectral::new(&g);
        let f = g.scalar_from_fn(|x| (x[0] + 2.0 * x[1]).cos() + 0.3 * x[0].sin());
        let coeffs = sp.forward(&f);
        let val = sp.eval_interpolant(&coeffs, &[g.x_coord(3), g.x_coord(5)]);
        assert_abs_diff_eq!(val, f[[3usize, 5].as_slice()], epsilon = 1e-12);
        // and reproduces the analytic field off-grid
        let x: [f64; 2] = [0.4321, 1.987];
        let exact = (x[0] + 2.0 * x[1]).cos() + 0.3 * x[0].sin();
        assert_abs_diff_eq!(sp.eval_interpolant(&coeffs, &x), exact, epsilon = 1e-12);
    }
}
