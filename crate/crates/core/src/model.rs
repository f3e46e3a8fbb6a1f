//! Pressure laws, fluid/kinetic state containers, the regularized force
//! field, the Brinkman source and the pointwise density bounds.

use std::sync::Arc;

use thiserror::Error;

use crate::grid::{
    velocity_moment, velocity_moment_1, Distribution, GridError, PhaseGrid, ScalarField, Spectral,
    VectorField,
};

/// Number of log-spaced sample points used by the admissibility check.
pub const ADMISSIBILITY_SAMPLES: usize = 512;

/// Sampling range for the admissibility check.
pub const ADMISSIBILITY_RANGE: (f64, f64) = (1e-6, 1e3);

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("non-finite pressure evaluation at rho = {0:e}")]
    NonFinitePressure(f64),
    #[error("vacuum: fluid density is not positive (min {min:e})")]
    Vacuum { min: f64 },
    #[error("bound floor violated: 1 - rho_f fell below {floor:e} (min {min:e})")]
    BoundFloor { floor: f64, min: f64 },
}

/// Barotropic pressure `p(rho)` with derivative.
#[derive(Clone)]
pub enum PressureLaw {
    /// Power law `p(rho) = rho^gamma` with `gamma > 1`.
    PowerLaw { gamma: f64 },
    /// User-supplied pair `(p, p')` of smooth scalar functions.
    Custom {
        p: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        dp: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl std::fmt::Debug for PressureLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::PowerLaw { gamma } => write!(f, "PowerLaw {{ gamma: {gamma} }}"),
            Self::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl PressureLaw {
    pub fn power_law(gamma: f64) -> Self {
        Self::PowerLaw { gamma }
    }

    /// Identically-zero pressure; used to decouple the pressure gradient in
    /// targeted solver tests. Not admissible.
    pub fn disabled() -> Self {
        Self::Custom { p: Arc::new(|_| 0.0), dp: Arc::new(|_| 0.0) }
    }

    pub fn p(&self, rho: f64) -> f64 {
        match self {
            Self::PowerLaw { gamma } => rho.powf(*gamma),
            Self::Custom { p, .. } => p(rho),
        }
    }

    pub fn dp(&self, rho: f64) -> f64 {
        match self {
            Self::PowerLaw { gamma } => gamma * rho.powf(gamma - 1.0),
            Self::Custom { dp, .. } => dp(rho),
        }
    }
}

/// Outcome of the sampled admissibility check.
#[derive(Debug, Clone, PartialEq)]
pub enum PressureVerdict {
    Admissible,
    /// First violating sample and which requirement failed.
    Inadmissible { rho: f64, reason: String },
}

impl PressureVerdict {
    pub fn is_admissible(&self) -> bool {
        matches!(self, Self::Admissible)
    }
}

/// Samples `p(0) = 0`, `p' > 0` and monotonicity of `rho p'(rho)` on a log
/// grid of `[1e-6, 1e3]`.
pub fn check_pressure_admissible(law: &PressureLaw) -> Result<PressureVerdict, ModelError> {
    let p0 = law.p(0.0);
    if !p0.is_finite() {
        return Err(ModelError::NonFinitePressure(0.0));
    }
    if p0.abs() > 1e-12 {
        return Ok(PressureVerdict::Inadmissible {
            rho: 0.0,
            reason: format!("p(0) = {p0:e} is not zero"),
        });
    }
    let (lo, hi) = ADMISSIBILITY_RANGE;
    let n = ADMISSIBILITY_SAMPLES;
    let log_lo = lo.ln();
    let step = (hi.ln() - log_lo) / (n - 1) as f64;
    let mut prev_rp: Option<f64> = None;
    for i in 0..n {
        let rho = (log_lo + i as f64 * step).exp();
        let dp = law.dp(rho);
        if !dp.is_finite() {
            return Err(ModelError::NonFinitePressure(rho));
        }
        if dp <= 0.0 {
            return Ok(PressureVerdict::Inadmissible {
                rho,
                reason: format!("p'({rho:e}) = {dp:e} is not positive"),
            });
        }
        let rp = rho * dp;
        if let Some(prev) = prev_rp {
            if rp < prev * (1.0 - 1e-12) {
                return Ok(PressureVerdict::Inadmissible {
                    rho,
                    reason: format!("rho p'(rho) decreases at rho = {rho:e}"),
                });
            }
        }
        prev_rp = Some(rp);
    }
    Ok(PressureVerdict::Admissible)
}

/// Fluid density, velocity and the conserved mass variable `m = (1 - rho_f) rho`.
#[derive(Debug, Clone)]
pub struct FluidState {
    pub rho: ScalarField,
    pub u: VectorField,
    pub m: ScalarField,
}

impl FluidState {
    /// Builds the state from `(rho, u)` and the kinetic density `rho_f`.
    pub fn from_rho(
        grid: &PhaseGrid,
        rho: ScalarField,
        u: VectorField,
        rho_f: &ScalarField,
    ) -> Result<Self, ModelError> {
        grid.check_scalar(&rho)?;
        grid.check_vector(&u)?;
        let min = rho.iter().copied().fold(f64::INFINITY, f64::min);
        if min <= 0.0 {
            return Err(ModelError::Vacuum { min });
        }
        let m = &rho * &(1.0 - rho_f);
        Ok(Self { rho, u, m })
    }

    /// Reconstructs `rho = m / (1 - rho_f)` guarded by the bound floor
    /// `(1 - Theta) / 2`.
    pub fn from_mass(
        grid: &PhaseGrid,
        m: ScalarField,
        u: VectorField,
        rho_f: &ScalarField,
        theta: f64,
    ) -> Result<Self, ModelError> {
        grid.check_scalar(&m)?;
        grid.check_vector(&u)?;
        let floor = (1.0 - theta) / 2.0;
        let alpha = 1.0 - rho_f;
        let min_alpha = alpha.iter().copied().fold(f64::INFINITY, f64::min);
        if min_alpha < floor {
            return Err(ModelError::BoundFloor { floor, min: min_alpha });
        }
        let rho = &m / &alpha;
        let min = rho.iter().copied().fold(f64::INFINITY, f64::min);
        if min <= 0.0 {
            return Err(ModelError::Vacuum { min });
        }
        Ok(Self { rho, u, m })
    }
}

/// Constants of the pointwise bound condition together with the measured
/// extrema they were checked against.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundWitness {
    pub theta: f64,
    pub mu: f64,
    pub theta_lower: f64,
    pub theta_upper: f64,
    pub max_rho_f: f64,
    pub min_rho: f64,
    pub min_alpha_rho: f64,
    pub max_alpha_rho: f64,
}

/// Which of the four pointwise bounds failed, and where.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundVerdict {
    Holds(BoundWitness),
    Violated { witness: BoundWitness, inequality: &'static str, at: Vec<usize> },
}

impl BoundVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, Self::Holds(_))
    }

    pub fn witness(&self) -> &BoundWitness {
        match self {
            Self::Holds(w) => w,
            Self::Violated { witness, .. } => witness,
        }
    }
}

/// Checks the four pointwise inequalities
/// `rho_f <= (Theta+1)/2`, `rho >= mu/2`,
/// `theta_lower/2 <= (1-rho_f) rho <= 2 theta_upper` on the grid.
pub fn check_bounds(
    grid: &PhaseGrid,
    state: &FluidState,
    f: &Distribution,
    theta: f64,
    mu: f64,
    theta_lower: f64,
    theta_upper: f64,
) -> BoundVerdict {
    let rho_f = velocity_moment(grid, f, 0);
    let alpha_rho = &state.rho * &(1.0 - &rho_f);

    let mut max_rho_f = f64::NEG_INFINITY;
    let mut min_rho = f64::INFINITY;
    let mut min_ar = f64::INFINITY;
    let mut max_ar = f64::NEG_INFINITY;
    for ((&rf, &r), &ar) in rho_f.iter().zip(state.rho.iter()).zip(alpha_rho.iter()) {
        max_rho_f = max_rho_f.max(rf);
        min_rho = min_rho.min(r);
        min_ar = min_ar.min(ar);
        max_ar = max_ar.max(ar);
    }
    let witness = BoundWitness {
        theta,
        mu,
        theta_lower,
        theta_upper,
        max_rho_f,
        min_rho,
        min_alpha_rho: min_ar,
        max_alpha_rho: max_ar,
    };

    let locate = |pred: &dyn Fn(usize) -> bool| -> Vec<usize> {
        for flat in 0..rho_f.len() {
            if pred(flat) {
                // decode the flat index into grid coordinates (row-major)
                let mut idx = vec![0usize; grid.d()];
                let mut rem = flat;
                for a in (0..grid.d()).rev() {
                    idx[a] = rem % grid.nx();
                    rem /= grid.nx();
                }
                return idx;
            }
        }
        Vec::new()
    };

    let rf = rho_f.as_slice().expect("contiguous");
    let rho = state.rho.as_slice().expect("contiguous");
    let ar = alpha_rho.as_slice().expect("contiguous");

    if max_rho_f > (theta + 1.0) / 2.0 {
        return BoundVerdict::Violated {
            witness,
            inequality: "rho_f <= (Theta + 1) / 2",
            at: locate(&|i| rf[i] > (theta + 1.0) / 2.0),
        };
    }
    if min_rho < mu / 2.0 {
        return BoundVerdict::Violated {
            witness,
            inequality: "rho >= mu / 2",
            at: locate(&|i| rho[i] < mu / 2.0),
        };
    }
    if min_ar < theta_lower / 2.0 {
        return BoundVerdict::Violated {
            witness,
            inequality: "(1 - rho_f) rho >= theta_lower / 2",
            at: locate(&|i| ar[i] < theta_lower / 2.0),
        };
    }
    if max_ar > 2.0 * theta_upper {
        return BoundVerdict::Violated {
            witness,
            inequality: "(1 - rho_f) rho <= 2 theta_upper",
            at: locate(&|i| ar[i] > 2.0 * theta_upper),
        };
    }
    BoundVerdict::Holds(witness)
}

/// Regularized force field `E = u - p'(rho) grad(J_eps rho)`.
pub fn compute_force(
    grid: &PhaseGrid,
    spectral: &Spectral,
    state: &FluidState,
    law: &PressureLaw,
    epsilon: f64,
) -> Result<VectorField, ModelError> {
    let min = state.rho.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        return Err(ModelError::Vacuum { min });
    }
    let smoothed = spectral.apply_j_epsilon(grid, &state.rho, epsilon)?;
    let dp = state.rho.mapv(|r| law.dp(r));
    let mut out = Vec::with_capacity(grid.d());
    for axis in 0..grid.d() {
        let grad = spectral.derivative(&smoothed, axis);
        out.push(&state.u[axis] - &(&dp * &grad));
    }
    Ok(out)
}

/// Brinkman source `j_f - rho_f u`.
pub fn brinkman_source(grid: &PhaseGrid, f: &Distribution, u: &VectorField) -> VectorField {
    let rho_f = velocity_moment(grid, f, 0);
    let j_f = velocity_moment_1(grid, f);
    (0..grid.d()).map(|c| &j_f[c] - &(&rho_f * &u[c])).collect()
}
