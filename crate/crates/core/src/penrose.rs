//! Evaluation of the Penrose stability functional and sampled minimization
//! of `|1 - P|` over the frequency domain.
//!
//! The functional couples a velocity profile to the fluid through the
//! prefactor `p'(rho) rho / (1 - rho_f)` and a one-sided Laplace transform
//! in time of the velocity-Fourier transform of `grad_v f` along rays.
//! Two variants are supported: the `standard` one carries the
//! `1 / (1 + |k|^2)` frequency weight, the `optimal` one drops it and is
//! homogeneous of degree zero in `(gamma, tau, k)`.
//!
//! The infimum over the unbounded frequency set is reduced to the unit
//! hemisphere `gamma^2 + tau^2 + |k|^2 = 1, gamma > 0` crossed with a scalar
//! `lambda in (0, 1]` minimized in closed form, so the sweep samples a
//! compact set. Velocity transforms along rays use a direct non-uniform
//! discrete sum over the velocity grid, exact to roundoff for grid data.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{velocity_moment, Distribution, GridError, PhaseGrid, ScalarField};
use crate::model::PressureLaw;
use crate::Point;

#[derive(Debug, Error)]
pub enum PenroseError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("prefactor pole: rho_f reaches {max:e} at a sampled cell (need rho_f < 1)")]
    Pole { max: f64 },
    #[error("fluid density must be positive (min {min:e})")]
    Vacuum { min: f64 },
    #[error("sampling spec has a zero count: {0}")]
    Config(&'static str),
}

/// Frequency-domain evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyPoint {
    pub gamma: f64,
    pub tau: f64,
    pub k: Point,
}

impl FrequencyPoint {
    pub fn k_norm(&self) -> f64 {
        (self.k[0] * self.k[0] + self.k[1] * self.k[1]).sqrt()
    }
}

/// Which frequency weight the functional carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenroseVariant {
    /// Weight `1 / (1 + |k|^2)`.
    Standard,
    /// No weight; homogeneous of degree zero.
    Optimal,
}

impl PenroseVariant {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "standard" => Some(Self::Standard),
            "optimal" => Some(Self::Optimal),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Standard => "standard",
            Self::Optimal => "optimal",
        }
    }
}

/// Sample counts for the compactified frequency sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingSpec {
    /// Stride through spatial cells (1 = every cell).
    pub x_stride: usize,
    /// Angles splitting `(gamma, tau)` on the half-circle `gamma > 0`.
    pub n_omega: usize,
    /// Unit directions of `k` (capped at 2 in one dimension).
    pub n_khat: usize,
    /// Balance angles between `|(gamma, tau)|` and `|k|`.
    pub n_balance: usize,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self { x_stride: 1, n_omega: 64, n_khat: 32, n_balance: 48 }
    }
}

impl SamplingSpec {
    /// Nested refinement: tripling midpoint grids keeps every coarse sample.
    pub fn refine(&self) -> Self {
        Self {
            x_stride: self.x_stride,
            n_omega: self.n_omega * 3,
            n_khat: self.n_khat * 3,
            n_balance: self.n_balance * 3,
        }
    }

    fn validate(&self) -> Result<(), PenroseError> {
        if self.x_stride == 0 {
            return Err(PenroseError::Config("x_stride"));
        }
        if self.n_omega == 0 {
            return Err(PenroseError::Config("n_omega"));
        }
        if self.n_khat == 0 {
            return Err(PenroseError::Config("n_khat"));
        }
        if self.n_balance == 0 {
            return Err(PenroseError::Config("n_balance"));
        }
        Ok(())
    }
}

/// Sampled stability margin with the argument that attained it.
#[derive(Debug, Clone)]
pub struct PenroseReport {
    pub margin: f64,
    pub argmin_x: Point,
    pub argmin_point: FrequencyPoint,
    pub argmin_lambda: f64,
    pub samples: SamplingSpec,
    pub variant: PenroseVariant,
    pub c_required: f64,
    pub pass: bool,
}

/// 16-point Gauss-Legendre nodes on [-1, 1] (positive half).
const GL16_X: [f64; 8] = [
    0.09501250983763744,
    0.2816035507792589,
    0.45801677765722737,
    0.6178762444026438,
    0.755404408355003,
    0.8656312023878318,
    0.9445750230732326,
    0.9894009349916499,
];
const GL16_W: [f64; 8] = [
    0.1894506104550685,
    0.1826034150449236,
    0.1691565193950025,
    0.1495959888165767,
    0.1246289712555339,
    0.0951585116824928,
    0.062253523938647894,
    0.027152459411754096,
];

fn gl16_nodes(a: f64, b: f64, nodes: &mut Vec<(f64, f64)>) {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    for i in 0..8 {
        nodes.push((mid - half * GL16_X[i], half * GL16_W[i]));
        nodes.push((mid + half * GL16_X[i], half * GL16_W[i]));
    }
}

/// Velocity-Fourier transform `F_v f (x, xi)` at spatial cell `x_cell` by
/// direct non-uniform summation over the velocity grid.
pub fn velocity_fourier(grid: &PhaseGrid, f: &Distribution, x_cell: usize, xi: &Point) -> Complex64 {
    let d = grid.d();
    let nv = grid.nv();
    let vlen = grid.velocity_len();
    let w = grid.velocity_weight();
    let vals = f.values().as_slice().expect("contiguous");
    let chunk = &vals[x_cell * vlen..(x_cell + 1) * vlen];
    if d == 1 {
        let mut acc = Complex64::default();
        for (j, &fv) in chunk.iter().enumerate() {
            if fv != 0.0 {
                let phase = -grid.v_coord(j) * xi[0];
                acc += fv * Complex64::new(phase.cos(), phase.sin());
            }
        }
        return acc * w;
    }
    // d = 2: factor the phase over the two velocity axes
    let mut phase0 = vec![Complex64::default(); nv];
    let mut phase1 = vec![Complex64::default(); nv];
    for j in 0..nv {
        let v = grid.v_coord(j);
        let p0 = -v * xi[0];
        let p1 = -v * xi[1];
        phase0[j] = Complex64::new(p0.cos(), p0.sin());
        phase1[j] = Complex64::new(p1.cos(), p1.sin());
    }
    let mut acc = Complex64::default();
    for j0 in 0..nv {
        let row = &chunk[j0 * nv..(j0 + 1) * nv];
        let mut inner = Complex64::default();
        for (j1, &fv) in row.iter().enumerate() {
            if fv != 0.0 {
                inner += fv * phase1[j1];
            }
        }
        acc += phase0[j0] * inner;
    }
    acc * w
}

/// Ray transform `i khat . (F_v grad_v f)(x, khat s) = -s F_v f(x, khat s)`
/// for a unit direction `khat`.
pub fn ray_transform(
    grid: &PhaseGrid,
    f: &Distribution,
    x_cell: usize,
    khat: &Point,
    s: f64,
) -> Complex64 {
    debug_assert!(((khat[0] * khat[0] + khat[1] * khat[1]).sqrt() - 1.0).abs() < 1e-10);
    let xi = [khat[0] * s, khat[1] * s];
    -s * velocity_fourier(grid, f, x_cell, &xi)
}

/// Spectral cutoff `sigma_c`: scan `sigma |F_v f|` up to the velocity-grid
/// resolution band and truncate where the envelope falls below `1e-12` of
/// its peak.
fn envelope_cutoff(grid: &PhaseGrid, f: &Distribution, x_cell: usize, khat: &Point) -> f64 {
    let sigma_nyq = std::f64::consts::PI / grid.dv();
    let nscan = 256;
    let mut peak = 0.0f64;
    let mut vals = Vec::with_capacity(nscan);
    for i in 1..=nscan {
        let sigma = sigma_nyq * i as f64 / nscan as f64;
        let e = sigma * velocity_fourier(grid, f, x_cell, &[khat[0] * sigma, khat[1] * sigma]).norm();
        peak = peak.max(e);
        vals.push((sigma, e));
    }
    if peak == 0.0 {
        return 0.0;
    }
    let thresh = 1e-12 * peak;
    let mut cutoff = sigma_nyq;
    for i in (0..nscan).rev() {
        if vals[i].1 >= thresh {
            cutoff = if i + 1 < nscan { vals[i + 1].0 } else { sigma_nyq };
            break;
        }
    }
    cutoff
}

/// Laplace-ray integral `int_0^inf e^{-(gamma + i tau) s} i k . (F_v grad_v f)(x, k s) ds`
/// by composite Gauss-Legendre on `[0, s_max]`, panel count doubling until
/// the value moves by less than `1e-9`.
fn laplace_ray_integral(
    grid: &PhaseGrid,
    f: &Distribution,
    x_cell: usize,
    point: &FrequencyPoint,
) -> Complex64 {
    let knorm = point.k_norm();
    if knorm == 0.0 {
        return Complex64::default();
    }
    let khat = [point.k[0] / knorm, point.k[1] / knorm];
    let sigma_c = envelope_cutoff(grid, f, x_cell, &khat);
    if sigma_c == 0.0 {
        return Complex64::default();
    }
    let s_max = sigma_c / knorm;
    let mut prev = Complex64::default();
    let mut panels = 8;
    loop {
        let mut nodes = Vec::with_capacity(panels * 16);
        for p in 0..panels {
            let a = s_max * p as f64 / panels as f64;
            let b = s_max * (p + 1) as f64 / panels as f64;
            gl16_nodes(a, b, &mut nodes);
        }
        let mut acc = Complex64::default();
        for (s, w) in nodes {
            let damp = (-(point.gamma) * s).exp();
            let osc = Complex64::new(0.0, -point.tau * s).exp();
            // i k . (F_v grad_v f)(x, ks) = -|k| (|k| s) F_v f(x, khat |k| s)
            let sigma = knorm * s;
            let ray = -sigma * velocity_fourier(grid, f, x_cell, &[khat[0] * sigma, khat[1] * sigma]);
            acc += w * damp * osc * (knorm * ray);
        }
        if panels > 8 && (acc - prev).norm() < 1e-9 * acc.norm().max(1.0) {
            return acc;
        }
        if panels >= 2048 {
            return acc;
        }
        prev = acc;
        panels *= 2;
    }
}

fn prefactor_at(
    rho_f: &ScalarField,
    rho: &ScalarField,
    law: &PressureLaw,
    x_cell: usize,
) -> Result<f64, PenroseError> {
    let rf = rho_f.as_slice().expect("contiguous")[x_cell];
    let r = rho.as_slice().expect("contiguous")[x_cell];
    if rf >= 1.0 {
        return Err(PenroseError::Pole { max: rf });
    }
    if r <= 0.0 {
        return Err(PenroseError::Vacuum { min: r });
    }
    Ok(law.dp(r) * r / (1.0 - rf))
}

/// Full functional value at one spatial cell and frequency point.
#[allow(clippy::too_many_arguments)]
pub fn penrose_value(
    grid: &PhaseGrid,
    f: &Distribution,
    rho_f: &ScalarField,
    rho: &ScalarField,
    law: &PressureLaw,
    x_cell: usize,
    point: &FrequencyPoint,
    variant: PenroseVariant,
) -> Result<Complex64, PenroseError> {
    let pre = prefactor_at(rho_f, rho, law, x_cell)?;
    let weight = match variant {
        PenroseVariant::Standard => {
            let k2 = point.k[0] * point.k[0] + point.k[1] * point.k[1];
            1.0 / (1.0 + k2)
        }
        PenroseVariant::Optimal => 1.0,
    };
    Ok(pre * weight * laplace_ray_integral(grid, f, x_cell, point))
}

/// Closed-form `inf over lambda in (0, 1] of |1 - lambda z|`.
///
/// The minimizer is `lambda* = clamp(Re z / |z|^2, (0, 1])`; when
/// `Re z <= 0` the infimum is the open-endpoint value 1 at `lambda -> 0+`.
pub fn min_over_lambda(z: Complex64) -> (f64, f64) {
    let n2 = z.norm_sqr();
    if n2 == 0.0 {
        return (1.0, 0.0);
    }
    if z.re <= 0.0 {
        return (1.0, 0.0);
    }
    let lambda = (z.re / n2).min(1.0);
    ((Complex64::new(1.0, 0.0) - lambda * z).norm(), lambda)
}

/// Cached ray data for one `(x, khat)` pair: Gauss-Legendre nodes in the
/// scaled variable `sigma = |k| s` and the transform values there.
struct RayCache {
    nodes: Vec<(f64, f64)>,
    values: Vec<Complex64>,
}

impl RayCache {
    fn build(
        grid: &PhaseGrid,
        f: &Distribution,
        x_cell: usize,
        khat: &Point,
        panels: usize,
    ) -> Self {
        let sigma_c = envelope_cutoff(grid, f, x_cell, khat);
        let mut nodes = Vec::with_capacity(panels * 16);
        if sigma_c > 0.0 {
            for p in 0..panels {
                let a = sigma_c * p as f64 / panels as f64;
                let b = sigma_c * (p + 1) as f64 / panels as f64;
                gl16_nodes(a, b, &mut nodes);
            }
        }
        let values = nodes
            .iter()
            .map(|&(sigma, _)| {
                -sigma * velocity_fourier(grid, f, x_cell, &[khat[0] * sigma, khat[1] * sigma])
            })
            .collect();
        Self { nodes, values }
    }

    /// `int e^{-(gamma + i tau) sigma / |k|} (-sigma) F_v f(x, khat sigma) d sigma`,
    /// which equals the Laplace-ray integral after `sigma = |k| s`.
    fn integral(&self, gamma_over_k: f64, tau_over_k: f64) -> Complex64 {
        let mut acc = Complex64::default();
        for ((sigma, w), val) in self.nodes.iter().zip(self.values.iter()) {
            let damp = (-gamma_over_k * sigma).exp();
            let osc = Complex64::new(0.0, -tau_over_k * sigma).exp();
            acc += *w * damp * osc * val;
        }
        acc
    }
}

/// Relative floor applied to `gamma` when a sample sits on the
/// `gamma = 0` edge of the hemisphere.
const GAMMA_FLOOR: f64 = 1e-6;

/// Sweeps the sampled compactification of the frequency domain and returns
/// the sampled margin `min |1 - lambda P_opt|` (standard variant) or
/// `min |1 - P_opt|` (optimal variant).
#[allow(clippy::too_many_arguments)]
pub fn check_condition(
    grid: &PhaseGrid,
    f: &Distribution,
    rho_f: &ScalarField,
    rho: &ScalarField,
    law: &PressureLaw,
    spec: &SamplingSpec,
    variant: PenroseVariant,
    c_required: f64,
) -> Result<PenroseReport, PenroseError> {
    spec.validate()?;
    let d = grid.d();

    // bound floor across the whole grid before sweeping
    let max_rf = rho_f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max_rf >= 1.0 {
        return Err(PenroseError::Pole { max: max_rf });
    }
    let min_rho = rho.iter().copied().fold(f64::INFINITY, f64::min);
    if min_rho <= 0.0 {
        return Err(PenroseError::Vacuum { min: min_rho });
    }

    // unit directions of k
    let khats: Vec<Point> = if d == 1 {
        let mut v = vec![[1.0, 0.0]];
        if spec.n_khat > 1 {
            v.push([-1.0, 0.0]);
        }
        v
    } else {
        (0..spec.n_khat)
            .map(|j| {
                let phi = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / spec.n_khat as f64;
                [phi.cos(), phi.sin()]
            })
            .collect()
    };

    // midpoint samples of the balance and omega angles
    let betas: Vec<f64> = (0..spec.n_balance)
        .map(|i| std::f64::consts::FRAC_PI_2 * (i as f64 + 0.5) / spec.n_balance as f64)
        .collect();
    let omegas: Vec<f64> = (0..spec.n_omega)
        .map(|j| std::f64::consts::PI * ((j as f64 + 0.5) / spec.n_omega as f64 - 0.5))
        .collect();

    // worst oscillation frequency tau / |k| over the sample set fixes the
    // shared panel count of the cached quadrature
    let max_ratio = betas
        .iter()
        .flat_map(|&b| omegas.iter().map(move |&w| (b.cos() * w.sin().abs()) / b.sin()))
        .fold(0.0f64, f64::max);
    let sigma_nyq = std::f64::consts::PI / grid.dv();
    let panels = (((sigma_nyq * max_ratio) / (2.0 * std::f64::consts::PI)).ceil() as usize + 16)
        .next_power_of_two()
        .clamp(16, 4096);

    let x_cells: Vec<usize> = (0..grid.spatial_len()).step_by(spec.x_stride).collect();

    struct Local {
        margin: f64,
        x_cell: usize,
        point: FrequencyPoint,
        lambda: f64,
    }

    let tasks: Vec<(usize, Point)> = x_cells
        .iter()
        .flat_map(|&xc| khats.iter().map(move |&kh| (xc, kh)))
        .collect();

    let locals: Vec<Result<Local, PenroseError>> = tasks
        .par_iter()
        .map(|&(x_cell, khat)| {
            let pre = prefactor_at(rho_f, rho, law, x_cell)?;
            let cache = RayCache::build(grid, f, x_cell, &khat, panels);
            let mut best = Local {
                margin: f64::INFINITY,
                x_cell,
                point: FrequencyPoint { gamma: 1.0, tau: 0.0, k: khat },
                lambda: 1.0,
            };
            for &beta in &betas {
                let kmag = beta.sin();
                let plane = beta.cos();
                for &omega in &omegas {
                    let gamma = (plane * omega.cos()).max(GAMMA_FLOOR * kmag);
                    let tau = plane * omega.sin();
                    let z = pre * cache.integral(gamma / kmag, tau / kmag);
                    let (value, lambda) = match variant {
                        PenroseVariant::Standard => min_over_lambda(z),
                        PenroseVariant::Optimal => ((Complex64::new(1.0, 0.0) - z).norm(), 1.0),
                    };
                    if value < best.margin {
                        best.margin = value;
                        best.point = FrequencyPoint {
                            gamma,
                            tau,
                            k: [khat[0] * kmag, khat[1] * kmag],
                        };
                        best.lambda = lambda;
                    }
                }
            }
            Ok(best)
        })
        .collect();

    let mut margin = f64::INFINITY;
    let mut arg: Option<Local> = None;
    for l in locals {
        let l = l?;
        if l.margin < margin {
            margin = l.margin;
            arg = Some(l);
        }
    }
    let arg = arg.expect("at least one sample");
    let mut argmin_x = [0.0, 0.0];
    let mut rem = arg.x_cell;
    for a in (0..d).rev() {
        argmin_x[a] = grid.x_coord(rem % grid.nx());
        rem /= grid.nx();
    }
    Ok(PenroseReport {
        margin,
        argmin_x,
        argmin_point: arg.point,
        argmin_lambda: arg.lambda,
        samples: *spec,
        variant,
        c_required,
        pass: margin > c_required,
    })
}

/// Shape classification of a velocity profile by sufficient stability
/// criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ProfileTag {
    OneBump,
    RadialNonIncreasing,
    SmallAmplitude,
    None,
}

/// Classifies `f` against the sufficient-condition families. The prefactor
/// field scales the small-amplitude bound; `None` uses 1.
pub fn classify_sufficient(
    grid: &PhaseGrid,
    f: &Distribution,
    prefactor: Option<&ScalarField>,
) -> Vec<ProfileTag> {
    let d = grid.d();
    let nv = grid.nv();
    let vlen = grid.velocity_len();
    let vals = f.values().as_slice().expect("contiguous");
    let fmax = vals.iter().copied().fold(0.0f64, f64::max);
    let tol = 1e-9 * fmax.max(1e-300);
    let mut tags = Vec::new();

    // one-bump: d = 1 only, per x the v-profile rises then falls
    if d == 1 && fmax > 0.0 {
        let mut all_one_bump = true;
        for chunk in vals.chunks_exact(vlen) {
            let mut signs = Vec::new();
            for j in 0..nv - 1 {
                let diff = chunk[j + 1] - chunk[j];
                if diff > tol {
                    signs.push(1i8);
                } else if diff < -tol {
                    signs.push(-1i8);
                }
            }
            let transitions = signs.windows(2).filter(|w| w[0] != w[1]).count();
            let rises = signs.contains(&1);
            let falls = signs.contains(&-1);
            let ok = rises && falls && transitions == 1 && signs[0] == 1;
            if !ok {
                all_one_bump = false;
                break;
            }
        }
        if all_one_bump {
            tags.push(ProfileTag::OneBump);
        }
    }

    // radial non-increasing: f depends on |v| and falls with |v|
    if fmax > 0.0 {
        let mut radial = true;
        'outer: for chunk in vals.chunks_exact(vlen) {
            // bin by |v|^2 rounded to grid resolution
            let mut bins: std::collections::BTreeMap<i64, (f64, f64, usize)> =
                std::collections::BTreeMap::new();
            for (j, &fv) in chunk.iter().enumerate() {
                let mut v2 = 0.0;
                let mut rem = j;
                for _ in 0..d {
                    let v = grid.v_coord(rem % nv);
                    v2 += v * v;
                    rem /= nv;
                }
                let key = (v2 / (grid.dv() * grid.dv()) * 16.0).round() as i64;
                let e = bins.entry(key).or_insert((f64::INFINITY, f64::NEG_INFINITY, 0));
                e.0 = e.0.min(fv);
                e.1 = e.1.max(fv);
                e.2 += 1;
            }
            let radial_tol = 1e-6 * fmax;
            let mut prev_mean = f64::INFINITY;
            for (_k, (lo, hi, _n)) in bins {
                if hi - lo > radial_tol {
                    radial = false;
                    break 'outer;
                }
                let mean = 0.5 * (lo + hi);
                if mean > prev_mean + radial_tol {
                    radial = false;
                    break 'outer;
                }
                prev_mean = mean;
            }
        }
        if radial {
            tags.push(ProfileTag::RadialNonIncreasing);
        }
    }

    // small amplitude: sup_x prefactor(x) * int sigma |F_v f| d sigma < 1/2
    let khats: Vec<Point> = if d == 1 {
        vec![[1.0, 0.0], [-1.0, 0.0]]
    } else {
        (0..8)
            .map(|j| {
                let phi = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / 8.0;
                [phi.cos(), phi.sin()]
            })
            .collect()
    };
    let sigma_nyq = std::f64::consts::PI / grid.dv();
    let nscan = 512;
    let dsig = sigma_nyq / nscan as f64;
    let mut sup = 0.0f64;
    for x_cell in 0..grid.spatial_len() {
        let pre = prefactor.map_or(1.0, |p| p.as_slice().expect("contiguous")[x_cell]);
        for khat in &khats {
            let mut majorant = 0.0;
            for i in 0..nscan {
                let sigma = (i as f64 + 0.5) * dsig;
                majorant += sigma
                    * velocity_fourier(grid, f, x_cell, &[khat[0] * sigma, khat[1] * sigma]).norm()
                    * dsig;
            }
            sup = sup.max(pre * majorant);
        }
    }
    if sup < 0.5 {
        tags.push(ProfileTag::SmallAmplitude);
    }

    if tags.is_empty() {
        tags.push(ProfileTag::None);
    }
    tags
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const SQRT_PI: f64 = 1.7724538509055159;

    fn grid1() -> PhaseGrid {
        PhaseGrid::new(1, 16, 128, 8.0).unwrap()
    }

    fn maxwellian(grid: &PhaseGrid, amp: f64) -> Distribution {
        Distribution::from_fn(grid, 1e-9, move |_x, v| amp * (-v[0] * v[0]).exp()).unwrap()
    }

    #[test]
    fn ray_transform_at_zero_and_for_zero_profile() {
        let g = grid1();
        let f = maxwellian(&g, 0.3);
        let r0 = ray_transform(&g, &f, 0, &[1.0, 0.0], 0.0);
        assert_abs_diff_eq!(r0.norm(), 0.0, epsilon = 1e-15);
        let z = Distribution::zero(&g);
        for &s in &[0.3, 1.0, 4.0] {
            assert_eq!(ray_transform(&g, &z, 0, &[1.0, 0.0], s), Complex64::default());
        }
    }

    #[test]
    fn ray_transform_gaussian_closed_form() {
        // f = e^{-v^2}: F_v f(xi) = sqrt(pi) e^{-xi^2/4},
        // ray(s) = -s sqrt(pi) e^{-s^2/4}; at s = 2: -2 sqrt(pi) e^{-1}
        let g = grid1();
        let f = maxwellian(&g, 1.0);
        let got = ray_transform(&g, &f, 0, &[1.0, 0.0], 2.0);
        let expect = -2.0 * SQRT_PI * (-1.0f64).exp();
        assert_abs_diff_eq!(got.re, expect, epsilon = 1e-9);
        assert_abs_diff_eq!(got.im, 0.0, epsilon = 1e-12);
        // quadrature oracle: direct midpoint sum of d/ds-free definition
        let mut oracle = Complex64::default();
        let n = 4000;
        let h = 16.0 / n as f64;
        for i in 0..n {
            let v = -8.0 + (i as f64 + 0.5) * h;
            let fv = (-v * v).exp();
            // i * d/dv f transform: i * (F_v f')(xi) at xi = 2
            let phase = -v * 2.0;
            let fp = -2.0 * v * fv;
            oracle += Complex64::new(0.0, 1.0) * fp * Complex64::new(phase.cos(), phase.sin()) * h;
        }
        assert_abs_diff_eq!(got.re, oracle.re, epsilon = 1e-8);
        assert_abs_diff_eq!(got.im, oracle.im, epsilon = 1e-8);
    }

    #[test]
    fn penrose_value_zero_profile() {
        let g = grid1();
        let f = Distribution::zero(&g);
        let rho_f = g.zero_scalar();
        let rho = g.scalar_from_fn(|_| 1.0);
        let law = PressureLaw::power_law(2.0);
        let p = penrose_value(
            &g,
            &f,
            &rho_f,
            &rho,
            &law,
            0,
            &FrequencyPoint { gamma: 0.5, tau: 1.0, k: [1.0, 0.0] },
            PenroseVariant::Standard,
        )
        .unwrap();
        assert_eq!(p, Complex64::default());
    }

    #[test]
    fn penrose_value_homogeneous_gaussian_matches_closed_form() {
        // A sqrt(pi) = 0.1, rho = 1, p = rho^2:
        // P(0+, 0, 1) = -(2 / 0.9) * 2 * 0.1 / (1 + 1) = -2/9
        let g = grid1();
        let amp = 0.1 / SQRT_PI;
        let f = maxwellian(&g, amp);
        let rho_f = velocity_moment(&g, &f, 0);
        let rho = g.scalar_from_fn(|_| 1.0);
        let law = PressureLaw::power_law(2.0);
        let p = penrose_value(
            &g,
            &f,
            &rho_f,
            &rho,
            &law,
            0,
            &FrequencyPoint { gamma: 1e-6, tau: 0.0, k: [1.0, 0.0] },
            PenroseVariant::Standard,
        )
        .unwrap();
        assert_abs_diff_eq!(p.re, -2.0 / 9.0, epsilon = 1e-3);
        assert_abs_diff_eq!(p.im, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!((Complex64::new(1.0, 0.0) - p).norm(), 1.0 + 2.0 / 9.0, epsilon = 2e-3);
    }

    #[test]
    fn penrose_value_scales_linearly_in_f() {
        let g = grid1();
        let f1 = maxwellian(&g, 0.05);
        let f2 = maxwellian(&g, 0.1);
        let rho = g.scalar_from_fn(|_| 1.0);
        let law = PressureLaw::power_law(2.0);
        // freeze the prefactor: use the same rho_f for both evaluations
        let rho_f = g.zero_scalar();
        let pt = FrequencyPoint { gamma: 0.3, tau: 0.7, k: [2.0, 0.0] };
        let p1 =
            penrose_value(&g, &f1, &rho_f, &rho, &law, 0, &pt, PenroseVariant::Optimal).unwrap();
        let p2 =
            penrose_value(&g, &f2, &rho_f, &rho, &law, 0, &pt, PenroseVariant::Optimal).unwrap();
        assert_abs_diff_eq!(p2.re, 2.0 * p1.re, epsilon = 1e-9);
        assert_abs_diff_eq!(p2.im, 2.0 * p1.im, epsilon = 1e-9);
    }

    #[test]
    fn optimal_variant_is_degree_zero_homogeneous() {
        let g = grid1();
        let f = maxwellian(&g, 0.1);
        let rho_f = velocity_moment(&g, &f, 0);
        let rho = g.scalar_from_fn(|_| 1.0);
        let law = PressureLaw::power_law(2.0);
        let base = FrequencyPoint { gamma: 0.2, tau: 0.5, k: [0.8, 0.0] };
        let p0 =
            penrose_value(&g, &f, &rho_f, &rho, &law, 0, &base, PenroseVariant::Optimal).unwrap();
        for &lambda in &[0.5, 2.0, 10.0] {
            let scaled = FrequencyPoint {
                gamma: lambda * base.gamma,
                tau: lambda * base.tau,
                k: [lambda * base.k[0], 0.0],
            };
            let p = penrose_value(&g, &f, &rho_f, &rho, &law, 0, &scaled, PenroseVariant::Optimal)
                .unwrap();
            assert!((p - p0).norm() <= 1e-6 * p0.norm().max(1.0), "lambda {lambda}: {p} vs {p0}");
        }
    }

    #[test]
    fn penrose_value_vanishes_as_k_to_zero() {
        let g = grid1();
        let f = maxwellian(&g, 0.1);
        let rho_f = velocity_moment(&g, &f, 0);
        let rho = g.scalar_from_fn(|_| 1.0);
        let law = PressureLaw::power_law(2.0);
        let mut prev = f64::INFINITY;
        for &kmag in &[1.0, 0.25, 0.05] {
            let pt = FrequencyPoint { gamma: 0.5, tau: 0.3, k: [kmag, 0.0] };
            let p = penrose_value(&g, &f, &rho_f, &rho, &law, 0, &pt, PenroseVariant::Standard)
                .unwrap();
            assert!(p.norm() < prev);
            prev = p.norm();
        }
        assert!(prev < 1e-2);
    }

    #[test]
    fn integrable_majorant_bounds_the_value() {
        let g = grid1();
        let f = maxwellian(&g, 0.2);
        let rho_f = velocity_moment(&g, &f, 0);
        let rho = g.scalar_from_fn(|_| 1.0);
        let law = PressureLaw::power_law(2.0);
        // envelope at gamma -> 0+ computed with |integrand|
        let khat = [1.0, 0.0];
        let sigma_nyq = std::f64::consts::PI / g.dv();
        let n = 4096;
        let ds = sigma_nyq / n as f64;
        let mut majorant = 0.0;
        for i in 0..n {
            let sigma = (i as f64 + 0.5) * ds;
            majorant += sigma * velocity_fourier(&g, &f, 0, &[sigma, 0.0]).norm() * ds;
        }
        let _ = khat;
        let pre = prefactor_at(&rho_f, &rho, &law, 0).unwrap();
        for &(gamma, tau) in &[(0.1, 0.0), (0.5, 2.0), (1.0, -3.0), (1e-5, 0.5)] {
            let pt = FrequencyPoint { gamma, tau, k: [1.0, 0.0] };
            let p = penrose_value(&g, &f, &rho_f, &rho, &law, 0, &pt, PenroseVariant::Optimal)
                .unwrap();
            assert!(p.norm() <= pre * majorant * (1.0 + 1e-6), "{} > {}", p.norm(), pre * majorant);
        }
    }

    #[test]
    fn min_over_lambda_closed_form_cases() {
        assert_abs_diff_eq!(min_over_lambda(Complex64::new(1.0, 0.0)).0, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(min_over_lambda(Complex64::new(2.0, 0.0)).0, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(min_over_lambda(Complex64::new(0.0, 1.0)).0, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(min_over_lambda(Complex64::new(0.5, 0.0)).0, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn min_over_lambda_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let z = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let (closed, _) = min_over_lambda(z);
            let mut brute = f64::INFINITY;
            for i in 1..=1000 {
                let lambda = i as f64 / 1000.0;
                brute = brute.min((Complex64::new(1.0, 0.0) - lambda * z).norm());
            }
            // the open endpoint lambda -> 0+ contributes values down to
            // |1 - 0.001 z|, within 1e-6 only where the brute grid resolves
            // the minimizer; allow the closed form to be the smaller one
            assert!(closed <= brute + 1e-6, "z {z}: closed {closed} brute {brute}");
            assert!(brute - closed < 5e-3, "z {z}: closed {closed} brute {brute}");
        }
    }

    #[test]
    fn check_condition_zero_profile_has_unit_margin() {
        let g = grid1();
        let f = Distribution::zero(&g);
        let rho_f = g.zero_scalar();
        let rho = g.scalar_from_fn(|_| 1.0);
        let law = PressureLaw::power_law(2.0);
        let spec = SamplingSpec { x_stride: 4, n_omega: 8, n_khat: 2, n_balance: 6 };
        let report = check_condition(
            &g,
            &f,
            &rho_f,
            &rho,
            &law,
            &spec,
            PenroseVariant::Standard,
            0.9,
        )
        .unwrap();
        assert_abs_diff_eq!(report.margin, 1.0, epsilon = 1e-12);
        assert!(report.pass);
    }

    #[test]
    fn check_condition_maxwellian_margin_and_monotone_refinement() {
        let g = grid1();
        let amp = 0.1 / SQRT_PI;
        let f = maxwellian(&g, amp);
        let rho_f = velocity_moment(&g, &f, 0);
        let rho = g.scalar_from_fn(|_| 1.0);
        let law = PressureLaw::power_law(2.0);
        let spec = SamplingSpec { x_stride: 8, n_omega: 8, n_khat: 2, n_balance: 6 };
        let mut margins = Vec::new();
        let mut s = spec;
        for _ in 0..3 {
            let report =
                check_condition(&g, &f, &rho_f, &rho, &law, &s, PenroseVariant::Standard, 0.5)
                    .unwrap();
            margins.push(report.margin);
            s = s.refine();
        }
        // refinement only finds smaller minima (nested triple-midpoint grids)
        assert!(margins[1] <= margins[0] + 1e-12, "{margins:?}");
        assert!(margins[2] <= margins[1] + 1e-12, "{margins:?}");
        // the Maxwellian configuration passes at c = 0.5
        assert!(margins[2] > 0.5, "{margins:?}");
    }

    #[test]
    fn config_error_on_zero_samples() {
        let g = grid1();
        let f = Distribution::zero(&g);
        let rho_f = g.zero_scalar();
        let rho = g.scalar_from_fn(|_| 1.0);
        let law = PressureLaw::power_law(2.0);
        let spec = SamplingSpec { x_stride: 1, n_omega: 0, n_khat: 2, n_balance: 6 };
        assert!(matches!(
            check_condition(&g, &f, &rho_f, &rho, &law, &spec, PenroseVariant::Standard, 0.5),
            Err(PenroseError::Config(_))
        ));
    }

    #[test]
    fn classify_maxwellian_two_bump_and_zero() {
        let g = grid1();
        let f = maxwellian(&g, 0.05);
        let tags = classify_sufficient(&g, &f, None);
        assert!(tags.contains(&ProfileTag::OneBump), "{tags:?}");
        assert!(tags.contains(&ProfileTag::RadialNonIncreasing), "{tags:?}");

        let two = Distribution::from_fn(&g, 1e-9, |_x, v| {
            2.0 * ((-(v[0] - 3.0).powi(2)).exp() + (-(v[0] + 3.0).powi(2)).exp())
        })
        .unwrap();
        let tags = classify_sufficient(&g, &two, None);
        assert!(!tags.contains(&ProfileTag::OneBump));
        assert!(!tags.contains(&ProfileTag::RadialNonIncreasing));

        let zero = Distribution::zero(&g);
        let tags = classify_sufficient(&g, &zero, None);
        assert_eq!(tags, vec![ProfileTag::SmallAmplitude]);
    }
}
