//! Phase-space grids on `T^d x [-Vmax, Vmax]^d` and gridded field containers.
//!
//! The torus carries the normalized Lebesgue measure: the mean-value
//! functional of a field equals its zeroth (normalized) Fourier coefficient.
//! Velocity space is truncated to a box and integrated with midpoint
//! quadrature on a cell-centered uniform grid, which is symmetric about
//! `v = 0` and spectrally accurate for smooth decaying integrands.

mod io;
mod norms;
mod spectral;

pub use io::{read_field, write_field, FieldMeta};
pub use norms::{l2_norm_phase, l2_norm_spatial, sobolev_norm, weighted_phase_sobolev_norm};
pub use spectral::Spectral;

use ndarray::{ArrayD, IxDyn};
use thiserror::Error;

use crate::Point;

/// Largest supported spatial dimension.
pub const MAX_D: usize = 2;

/// Fraction of `Vmax` beyond which velocity mass counts as tail mass.
pub const TAIL_RADIUS_FRACTION: f64 = 0.9;

/// Default ceiling on `tail mass / total mass` for admissible distributions.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-10;

/// Undershoot tolerated when checking nonnegativity of a distribution.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("field shape {got:?} does not match expected {expected:?}")]
    ShapeMismatch { got: Vec<usize>, expected: Vec<usize> },
    #[error("Sobolev exponent {k} exceeds the resolution guard Nx/4 = {max}")]
    Resolution { k: usize, max: usize },
    #[error("distribution undershoots below -{tol:e}: min value {min:e}")]
    Negative { min: f64, tol: f64 },
    #[error("tail mass fraction {fraction:e} exceeds tolerance {tol:e}")]
    TailMass { fraction: f64, tol: f64 },
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad field file: {0}")]
    BadFile(String),
}

/// Scalar field on the spatial grid, shape `[Nx]^d`.
pub type ScalarField = ArrayD<f64>;

/// Vector field on the spatial grid: one scalar component per dimension.
pub type VectorField = Vec<ScalarField>;

/// Discretization of `T^d x [-Vmax, Vmax]^d` together with its Fourier dual.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    d: usize,
    nx: usize,
    nv: usize,
    vmax: f64,
}

impl PhaseGrid {
    pub fn new(d: usize, nx: usize, nv: usize, vmax: f64) -> Result<Self, GridError> {
        if d == 0 || d > MAX_D {
            return Err(GridError::BadGrid(format!("d must be 1 or 2, got {d}")));
        }
        if nx < 8 || nx % 2 != 0 || !nx.is_power_of_two() {
            return Err(GridError::BadGrid(format!(
                "Nx must be an even power of two >= 8, got {nx}"
            )));
        }
        if nv < 8 || nv % 2 != 0 {
            return Err(GridError::BadGrid(format!("Nv must be even and >= 8, got {nv}")));
        }
        if !(vmax > 0.0) || !vmax.is_finite() {
            return Err(GridError::BadGrid(format!("Vmax must be positive, got {vmax}")));
        }
        Ok(Self { d, nx, nv, vmax })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nv(&self) -> usize {
        self.nv
    }

    pub fn vmax(&self) -> f64 {
        self.vmax
    }

    pub fn dx(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.nx as f64
    }

    pub fn dv(&self) -> f64 {
        2.0 * self.vmax / self.nv as f64
    }

    /// Grid coordinate of spatial node `i` along one axis.
    pub fn x_coord(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    /// Cell-centered velocity node `j` along one axis.
    pub fn v_coord(&self, j: usize) -> f64 {
        -self.vmax + (j as f64 + 0.5) * self.dv()
    }

    /// Signed integer wavenumber of FFT bin `i` (range `-Nx/2 .. Nx/2-1`).
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i <= self.nx / 2 - 1 {
            i as i64
        } else {
            i as i64 - self.nx as i64
        }
    }

    pub fn spatial_shape(&self) -> Vec<usize> {
        vec![self.nx; self.d]
    }

    pub fn phase_shape(&self) -> Vec<usize> {
        let mut s = vec![self.nx; self.d];
        s.extend(std::iter::repeat(self.nv).take(self.d));
        s
    }

    pub fn spatial_len(&self) -> usize {
        self.nx.pow(self.d as u32)
    }

    pub fn velocity_len(&self) -> usize {
        self.nv.pow(self.d as u32)
    }

    /// Quadrature weight of a single velocity cell (midpoint rule).
    pub fn velocity_weight(&self) -> f64 {
        self.dv().powi(self.d as i32)
    }

    /// Mean-value functional weight of a single spatial cell.
    pub fn spatial_weight(&self) -> f64 {
        1.0 / self.spatial_len() as f64
    }

    pub fn zero_scalar(&self) -> ScalarField {
        ArrayD::zeros(IxDyn(&self.spatial_shape()))
    }

    pub fn zero_vector(&self) -> VectorField {
        (0..self.d).map(|_| self.zero_scalar()).collect()
    }

    pub fn zero_phase(&self) -> ArrayD<f64> {
        ArrayD::zeros(IxDyn(&self.phase_shape()))
    }

    /// Builds a spatial field from a closure on grid coordinates.
    pub fn scalar_from_fn(&self, f: impl Fn(Point) -> f64) -> ScalarField {
        let mut out = self.zero_scalar();
        let nx = self.nx;
        for (idx, val) in out.indexed_iter_mut() {
            let mut x = [0.0; 2];
            for a in 0..self.d {
                x[a] = (idx[a] % nx) as f64 * self.dx();
            }
            *val = f(x);
        }
        out
    }

    pub fn vector_from_fn(&self, f: impl Fn(Point) -> Point) -> VectorField {
        (0..self.d)
            .map(|c| self.scalar_from_fn(|x| f(x)[c]))
            .collect()
    }

    /// Builds phase-space values from a closure on `(x, v)` coordinates.
    pub fn phase_from_fn(&self, f: impl Fn(Point, Point) -> f64) -> ArrayD<f64> {
        let mut out = self.zero_phase();
        for (idx, val) in out.indexed_iter_mut() {
            let mut x = [0.0; 2];
            let mut v = [0.0; 2];
            for a in 0..self.d {
                x[a] = self.x_coord(idx[a]);
                v[a] = self.v_coord(idx[self.d + a]);
            }
            *val = f(x, v);
        }
        out
    }

    pub fn check_scalar(&self, field: &ScalarField) -> Result<(), GridError> {
        if field.shape() != self.spatial_shape().as_slice() {
            return Err(GridError::ShapeMismatch {
                got: field.shape().to_vec(),
                expected: self.spatial_shape(),
            });
        }
        if field.iter().any(|x| !x.is_finite()) {
            return Err(GridError::NonFinite("scalar field"));
        }
        Ok(())
    }

    pub fn check_vector(&self, field: &VectorField) -> Result<(), GridError> {
        if field.len() != self.d {
            return Err(GridError::BadGrid(format!(
                "vector field has {} components, expected {}",
                field.len(),
                self.d
            )));
        }
        for comp in field {
            self.check_scalar(comp)?;
        }
        Ok(())
    }
}

/// Nonnegative gridded particle density `f(x, v)` with tail-mass metadata.
#[derive(Debug, Clone)]
pub struct Distribution {
    values: ArrayD<f64>,
    tail_tolerance: f64,
}

impl Distribution {
    /// Validates nonnegativity (up to interpolation undershoot) and the
    /// tail-mass invariant before wrapping the raw values.
    pub fn new(grid: &PhaseGrid, values: ArrayD<f64>, tail_tolerance: f64) -> Result<Self, GridError> {
        if values.shape() != grid.phase_shape().as_slice() {
            return Err(GridError::ShapeMismatch {
                got: values.shape().to_vec(),
                expected: grid.phase_shape(),
            });
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(GridError::NonFinite("distribution"));
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -NEGATIVITY_TOLERANCE {
            return Err(GridError::Negative { min, tol: NEGATIVITY_TOLERANCE });
        }
        let dist = Self { values, tail_tolerance };
        let total = dist.total_mass(grid);
        if total > 0.0 {
            let fraction = dist.tail_mass(grid) / total;
            if fraction >= tail_tolerance {
                return Err(GridError::TailMass { fraction, tol: tail_tolerance });
            }
        }
        Ok(dist)
    }

    pub fn from_fn(
        grid: &PhaseGrid,
        tail_tolerance: f64,
        f: impl Fn(Point, Point) -> f64,
    ) -> Result<Self, GridError> {
        Self::new(grid, grid.phase_from_fn(f), tail_tolerance)
    }

    pub fn zero(grid: &PhaseGrid) -> Self {
        Self { values: grid.zero_phase(), tail_tolerance: DEFAULT_TAIL_TOLERANCE }
    }

    /// Wraps raw values without validating the invariants. Used by flow and
    /// solver internals whose outputs are checked by the caller.
    pub(crate) fn from_raw_unchecked(values: ArrayD<f64>, tail_tolerance: f64) -> Self {
        Self { values, tail_tolerance }
    }

    pub fn values(&self) -> &ArrayD<f64> {
        &self.values
    }

    pub fn tail_tolerance(&self) -> f64 {
        self.tail_tolerance
    }

    /// Total quadrature mass `iint f dx dv` under the normalized torus measure.
    pub fn total_mass(&self, grid: &PhaseGrid) -> f64 {
        let w = grid.velocity_weight() * grid.spatial_weight();
        self.values.iter().sum::<f64>() * w
    }

    /// Quadrature mass carried by cells with `|v| > 0.9 Vmax`.
    pub fn tail_mass(&self, grid: &PhaseGrid) -> f64 {
        let w = grid.velocity_weight() * grid.spatial_weight();
        let r2 = (TAIL_RADIUS_FRACTION * grid.vmax()).powi(2);
        let d = grid.d();
        let mut sum = 0.0;
        for (idx, &val) in self.values.indexed_iter() {
            let mut v2 = 0.0;
            for a in 0..d {
                let v = grid.v_coord(idx[d + a]);
                v2 += v * v;
            }
            if v2 > r2 {
                sum += val;
            }
        }
        sum * w
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Velocity moment of order 0 (local density) or 2 (energy density).
///
/// Order 1 (local current) is vector-valued; see [`velocity_moment_1`].
pub fn velocity_moment(grid: &PhaseGrid, f: &Distribution, order: u8) -> ScalarField {
    assert!(order == 0 || order == 2, "scalar moments have order 0 or 2");
    let d = grid.d();
    let w = grid.velocity_weight();
    let mut out = grid.zero_scalar();
    let out_slice = out.as_slice_mut().expect("contiguous");
    let vlen = grid.velocity_len();
    let vals = f.values().as_slice().expect("contiguous");
    let nv = grid.nv();
    for (cell, chunk) in vals.chunks_exact(vlen).enumerate() {
        let mut acc = 0.0;
        if order == 0 {
            acc = chunk.iter().sum::<f64>();
        } else {
            for (j, &fv) in chunk.iter().enumerate() {
                let mut v2 = 0.0;
                let mut rem = j;
                for _ in 0..d {
                    let vj = grid.v_coord(rem % nv);
                    v2 += vj * vj;
                    rem /= nv;
                }
                acc += v2 * fv;
            }
        }
        out_slice[cell] = acc * w;
    }
    out
}

/// First velocity moment `j_f = integral of v f dv`.
pub fn velocity_moment_1(grid: &PhaseGrid, f: &Distribution) -> VectorField {
    let d = grid.d();
    let w = grid.velocity_weight();
    let nv = grid.nv();
    let vlen = grid.velocity_len();
    let vals = f.values().as_slice().expect("contiguous");
    let mut out = grid.zero_vector();
    for c in 0..d {
        let comp = out[c].as_slice_mut().expect("contiguous");
        for (cell, chunk) in vals.chunks_exact(vlen).enumerate() {
            let mut acc = 0.0;
            for (j, &fv) in chunk.iter().enumerate() {
                // velocity axes are the trailing axes, row-major
                let mut rem = j;
                let mut vcomp = 0.0;
                for a in (0..d).rev() {
                    let vj = grid.v_coord(rem % nv);
                    if a == c {
                        vcomp = vj;
                    }
                    rem /= nv;
                }
                acc += vcomp * fv;
            }
            comp[cell] = acc * w;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid1() -> PhaseGrid {
        PhaseGrid::new(1, 16, 128, 8.0).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(PhaseGrid::new(3, 16, 16, 8.0).is_err());
        assert!(PhaseGrid::new(1, 6, 16, 8.0).is_err());
        assert!(PhaseGrid::new(1, 12, 16, 8.0).is_err()); // not a power of two
        assert!(PhaseGrid::new(1, 16, 7, 8.0).is_err());
        assert!(PhaseGrid::new(1, 16, 16, 0.0).is_err());
    }

    #[test]
    fn wavenumbers_cover_symmetric_range() {
        let g = grid1();
        let ks: Vec<i64> = (0..16).map(|i| g.wavenumber(i)).collect();
        assert_eq!(ks[0], 0);
        assert_eq!(ks[7], 7);
        assert_eq!(ks[8], -8);
        assert_eq!(ks[15], -1);
    }

    #[test]
    fn gaussian_density_moment_matches_analytic() {
        let g = grid1();
        let f = Distribution::from_fn(&g, 1e-10, |_x, v| (-v[0] * v[0]).exp()).unwrap();
        let rho = velocity_moment(&g, &f, 0);
        let sqrt_pi = std::f64::consts::PI.sqrt();
        for &r in rho.iter() {
            assert_abs_diff_eq!(r, sqrt_pi, epsilon = 1e-8);
        }
    }

    #[test]
    fn gaussian_current_vanishes_by_symmetry() {
        let g = grid1();
        let f = Distribution::from_fn(&g, 1e-10, |_x, v| (-v[0] * v[0]).exp()).unwrap();
        let j = velocity_moment_1(&g, &f);
        for &x in j[0].iter() {
            assert!(x.abs() < 1e-12);
        }
    }

    #[test]
    fn shifted_gaussian_current_matches_analytic() {
        let g = grid1();
        let f = Distribution::from_fn(&g, 1e-10, |_x, v| (-(v[0] - 1.0).powi(2)).exp()).unwrap();
        let j = velocity_moment_1(&g, &f);
        let expect = std::f64::consts::PI.sqrt();
        for &x in j[0].iter() {
            assert_abs_diff_eq!(x, expect, epsilon = 1e-8);
        }
    }

    #[test]
    fn moments_linear_in_f() {
        let g = grid1();
        let f1 = Distribution::from_fn(&g, 1e-10, |_x, v| (-v[0] * v[0]).exp()).unwrap();
        let f2 =
            Distribution::from_fn(&g, 1e-10, |x, v| (1.0 + 0.3 * x[0].cos()) * (-2.0 * v[0] * v[0]).exp())
                .unwrap();
        let combo = Distribution::new(&g, f1.values() + &(f2.values() * 2.0), 1e-10).unwrap();
        let lhs = velocity_moment(&g, &combo, 0);
        let rhs = &velocity_moment(&g, &f1, 0) + &(&velocity_moment(&g, &f2, 0) * 2.0);
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn second_moment_matches_gaussian_value() {
        let g = grid1();
        let f = Distribution::from_fn(&g, 1e-10, |_x, v| (-v[0] * v[0]).exp()).unwrap();
        let m2 = velocity_moment(&g, &f, 2);
        // integral of v^2 e^{-v^2} dv = sqrt(pi)/2
        let expect = std::f64::consts::PI.sqrt() / 2.0;
        for &x in m2.iter() {
            assert_abs_diff_eq!(x, expect, epsilon = 1e-8);
        }
    }

    #[test]
    fn tail_invariant_rejects_wide_profiles() {
        let g = PhaseGrid::new(1, 16, 64, 2.0).unwrap();
        // Gaussian with std 1 on [-2, 2] has far too much tail mass
        let r = Distribution::from_fn(&g, 1e-10, |_x, v| (-v[0] * v[0] / 4.0).exp());
        assert!(matches!(r, Err(GridError::TailMass { .. })));
    }

    #[test]
    fn negativity_guard() {
        let g = grid1();
        let r = Distribution::from_fn(&g, 1e-10, |_x, v| -1e-6 * (-v[0] * v[0]).exp());
        assert!(matches!(r, Err(GridError::Negative { .. })));
    }
}
