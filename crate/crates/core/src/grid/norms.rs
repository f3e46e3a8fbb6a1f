//! L2, Sobolev and weighted phase-space Sobolev diagnostics.

use ndarray::{ArrayD, Axis};

use super::{Distribution, GridError, PhaseGrid, ScalarField, Spectral};

/// L2 norm of a spatial field under the normalized torus measure.
pub fn l2_norm_spatial(grid: &PhaseGrid, field: &ScalarField) -> f64 {
    let w = grid.spatial_weight();
    (field.iter().map(|x| x * x).sum::<f64>() * w).sqrt()
}

/// L2 norm on phase space (normalized in x, Lebesgue in v).
pub fn l2_norm_phase(grid: &PhaseGrid, values: &ArrayD<f64>) -> f64 {
    let w = grid.spatial_weight() * grid.velocity_weight();
    (values.iter().map(|x| x * x).sum::<f64>() * w).sqrt()
}

/// Spatial Sobolev norm `(sum_k (1 + |k|^2)^m |c_k|^2)^{1/2}` from normalized
/// Fourier coefficients.
pub fn sobolev_norm(
    grid: &PhaseGrid,
    spectral: &Spectral,
    field: &ScalarField,
    m: usize,
) -> Result<f64, GridError> {
    grid.check_scalar(field)?;
    let max = grid.nx() / 4;
    if m > max {
        return Err(GridError::Resolution { k: m, max });
    }
    let coeffs = spectral.coefficients(field);
    let mut acc = 0.0;
    for (idx, c) in coeffs.indexed_iter() {
        let mut k2 = 0.0;
        for a in 0..grid.d() {
            let k = grid.wavenumber(idx[a]) as f64;
            k2 += k * k;
        }
        acc += (1.0 + k2).powi(m as i32) * c.norm_sqr();
    }
    Ok(acc.sqrt())
}

/// Second-order finite difference along a velocity axis of a phase array.
fn velocity_derivative(values: &ArrayD<f64>, axis: usize, dv: f64) -> ArrayD<f64> {
    let n = values.shape()[axis];
    let mut out = values.clone();
    let inv2 = 1.0 / (2.0 * dv);
    // lanes along the requested axis
    for (lane_in, mut lane_out) in values
        .lanes(Axis(axis))
        .into_iter()
        .zip(out.lanes_mut(Axis(axis)).into_iter())
    {
        lane_out[0] = (-3.0 * lane_in[0] + 4.0 * lane_in[1] - lane_in[2]) * inv2;
        for j in 1..n - 1 {
            lane_out[j] = (lane_in[j + 1] - lane_in[j - 1]) * inv2;
        }
        lane_out[n - 1] = (3.0 * lane_in[n - 1] - 4.0 * lane_in[n - 2] + lane_in[n - 3]) * inv2;
    }
    out
}

/// Weighted phase-space Sobolev norm with weight `<v>^{2r}`:
/// spectral derivatives in x, finite differences in v, all multi-indices
/// with `|alpha| + |beta| <= m`.
pub fn weighted_phase_sobolev_norm(
    grid: &PhaseGrid,
    spectral: &Spectral,
    f: &Distribution,
    m: usize,
    r: usize,
) -> Result<f64, GridError> {
    let max = grid.nx() / 4;
    if m > max {
        return Err(GridError::Resolution { k: m, max });
    }
    let d = grid.d();
    let dv = grid.dv();
    let weight_cell = grid.spatial_weight() * grid.velocity_weight();

    // <v>^{2r} per velocity multi-cell, shared across spatial cells
    let nv = grid.nv();
    let vlen = grid.velocity_len();
    let mut vweight = vec![0.0; vlen];
    for (j, wv) in vweight.iter_mut().enumerate() {
        let mut v2 = 0.0;
        let mut rem = j;
        for _ in 0..d {
            let vj = grid.v_coord(rem % nv);
            v2 += vj * vj;
            rem /= nv;
        }
        *wv = (1.0 + v2).powi(r as i32);
    }

    let mut total = 0.0;
    let mut orders = vec![0usize; 2 * d];
    loop {
        let sum: usize = orders.iter().sum();
        if sum <= m {
            let mut der = f.values().clone();
            for (axis, &ord) in orders.iter().enumerate() {
                for _ in 0..ord {
                    if axis < d {
                        der = spectral.derivative_along_axis(&der, axis);
                    } else {
                        der = velocity_derivative(&der, axis, dv);
                    }
                }
            }
            let slice = der.as_slice().expect("contiguous");
            let mut acc = 0.0;
            for (cell, chunk) in slice.chunks_exact(vlen).enumerate() {
                let _ = cell;
                for (val, wv) in chunk.iter().zip(vweight.iter()) {
                    acc += wv * val * val;
                }
            }
            total += acc * weight_cell;
        }
        // advance the multi-index odometer over 0..=m per slot
        let mut carry = true;
        for slot in orders.iter_mut() {
            if carry {
                *slot += 1;
                if *slot > m {
                    *slot = 0;
                } else {
                    carry = false;
                }
            }
        }
        if carry {
            break;
        }
    }
    Ok(total.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid1() -> PhaseGrid {
        PhaseGrid::new(1, 32, 64, 8.0).unwrap()
    }

    #[test]
    fn parseval_identity() {
        let g = grid1();
        let sp = Spectral::new(&g);
        let f = g.scalar_from_fn(|x| 0.7 + (2.0 * x[0]).cos() - 0.4 * (5.0 * x[0]).sin());
        let phys = l2_norm_spatial(&g, &f);
        let coeffs = sp.coefficients(&f);
        let spec: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        assert!((phys - spec).abs() / phys < 1e-12);
    }

    #[test]
    fn sobolev_of_constant_and_cosine() {
        let g = grid1();
        let sp = Spectral::new(&g);
        let c = g.scalar_from_fn(|_| -2.5);
        assert_abs_diff_eq!(sobolev_norm(&g, &sp, &c, 3).unwrap(), 2.5, epsilon = 1e-13);
        let f = g.scalar_from_fn(|x| x[0].cos());
        // ||cos||_{L2}^2 = 1/2 and (1 + 1) * 1/2 = 1
        assert_abs_diff_eq!(sobolev_norm(&g, &sp, &f, 1).unwrap(), 1.0, epsilon = 1e-13);
        let z = g.zero_scalar();
        assert_abs_diff_eq!(sobolev_norm(&g, &sp, &z, 2).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn sobolev_resolution_guard() {
        let g = grid1();
        let sp = Spectral::new(&g);
        let f = g.zero_scalar();
        assert!(matches!(sobolev_norm(&g, &sp, &f, 9), Err(GridError::Resolution { .. })));
    }

    #[test]
    fn phase_sobolev_of_gaussian_is_finite_and_order_monotone() {
        let g = PhaseGrid::new(1, 16, 64, 8.0).unwrap();
        let sp = Spectral::new(&g);
        let f = Distribution::from_fn(&g, 1e-8, |x, v| {
            (1.0 + 0.2 * x[0].cos()) * (-v[0] * v[0]).exp()
        })
        .unwrap();
        let n0 = weighted_phase_sobolev_norm(&g, &sp, &f, 0, 3).unwrap();
        let n2 = weighted_phase_sobolev_norm(&g, &sp, &f, 2, 3).unwrap();
        assert!(n0 > 0.0 && n2 > n0);
    }

    #[test]
    fn j_epsilon_is_l2_contraction_on_random_fields() {
        use rand::{Rng, SeedableRng};
        let g = grid1();
        let sp = Spectral::new(&g);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let mut f = g.zero_scalar();
            for x in f.iter_mut() {
                *x = rng.gen_range(-1.0..1.0);
            }
            let eps: f64 = rng.gen_range(0.0..4.0);
            let jf = sp.apply_j_epsilon(&g, &f, eps).unwrap();
            assert!(l2_norm_spatial(&g, &jf) <= l2_norm_spatial(&g, &f) + 1e-12);
        }
    }

    #[test]
    fn lame_implicit_roundtrip_on_random_fields() {
        use rand::{Rng, SeedableRng};
        let g = PhaseGrid::new(2, 16, 8, 1.0).unwrap();
        let sp = Spectral::new(&g);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let mut u = g.zero_vector();
            for comp in u.iter_mut() {
                for x in comp.iter_mut() {
                    *x = rng.gen_range(-1.0..1.0);
                }
            }
            let a = rng.gen_range(0.01..2.0);
            let lu = sp.apply_lame(&g, &u).unwrap();
            let mut rhs = g.zero_vector();
            for c in 0..g.d() {
                rhs[c] = &u[c] - &(&lu[c] * a);
            }
            let back = sp.solve_lame_implicit(&g, &rhs, a).unwrap();
            for c in 0..g.d() {
                let num = l2_norm_spatial(&g, &(&back[c] - &u[c]));
                let den = l2_norm_spatial(&g, &u[c]).max(1e-300);
                assert!(num / den < 1e-10, "relative residual {}", num / den);
            }
        }
    }
}
