//! Uniform cell-centred grid on `[0, L]` with a conservative no-flux
//! Laplacian.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Values on cell centres, one per cell.
pub type Field = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    n: usize,
    length: f64,
}

impl Grid1D {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid("n", "at least 3 cells are required"));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::invalid("length", "must be positive and finite"));
        }
        Ok(Grid1D { n, length })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Cell width `L / N`.
    pub fn h(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.h()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.center(j)).collect()
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: len,
            });
        }
        Ok(())
    }

    /// Evaluates `profile` at every cell centre.
    pub fn sample(&self, profile: impl Fn(f64) -> f64) -> Field {
        (0..self.n).map(|j| profile(self.center(j))).collect()
    }
}

/// Three-point Laplacian with zero-flux ghost cells `phi[-1] = phi[0]`,
/// `phi[N] = phi[N-1]`. Written as a difference of face fluxes so the cell
/// sum vanishes up to rounding.
pub fn laplacian_neumann(phi: &[f64], grid: &Grid1D) -> Result<Field> {
    grid.check_len(phi.len())?;
    let mut out = alloc::vec![0.0; phi.len()];
    laplacian_into(phi, grid.h(), &mut out);
    Ok(out)
}

pub(crate) fn laplacian_into(phi: &[f64], h: f64, out: &mut [f64]) {
    let n = phi.len();
    let inv_h2 = 1.0 / (h * h);
    out.iter_mut().for_each(|o| *o = 0.0);
    for j in 0..n - 1 {
        let flux = (phi[j + 1] - phi[j]) * inv_h2;
        out[j] += flux;
        out[j + 1] -= flux;
    }
}

/// Midpoint rule `h * sum_j phi_j`.
pub fn integrate(phi: &[f64], grid: &Grid1D) -> f64 {
    grid.h() * phi.iter().sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn rejects_degenerate_grids() {
        assert!(Grid1D::new(2, 1.0).is_err());
        assert!(Grid1D::new(8, 0.0).is_err());
        assert!(Grid1D::new(8, f64::INFINITY).is_err());
    }

    #[test]
    fn geometry() {
        let g = Grid1D::new(4, 2.0).unwrap();
        assert_eq!(g.h(), 0.5);
        assert_eq!(g.centers(), [0.25, 0.75, 1.25, 1.75]);
        assert_relative_eq!(g.h() * g.n() as f64, g.length());
    }

    #[test]
    fn constants_are_in_the_kernel() {
        let g = Grid1D::new(7, 3.0).unwrap();
        let lap = laplacian_neumann(&[2.5; 7], &g).unwrap();
        assert!(lap.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn hand_stencil() {
        let g = Grid1D::new(4, 1.0).unwrap();
        let lap = laplacian_neumann(&[0.0, 1.0, 1.0, 0.0], &g).unwrap();
        assert_eq!(lap, [16.0, -16.0, -16.0, 16.0]);
        assert_eq!(integrate(&[0.0, 1.0, 1.0, 0.0], &g), 0.5);
    }

    #[test]
    fn integrate_trivial() {
        let g = Grid1D::new(5, 1.0).unwrap();
        assert_relative_eq!(integrate(&[1.0; 5], &g), 1.0, epsilon = 1e-15);
        assert_eq!(integrate(&[0.0; 5], &g), 0.0);
    }

    #[test]
    fn length_mismatch() {
        let g = Grid1D::new(4, 1.0).unwrap();
        assert_eq!(
            laplacian_neumann(&[0.0; 3], &g),
            Err(Error::LengthMismatch {
                expected: 4,
                got: 3
            })
        );
    }

    fn field(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, n)
    }

    proptest! {
        #[test]
        fn discrete_conservation(phi in field(17)) {
            let g = Grid1D::new(17, 1.3).unwrap();
            let lap = laplacian_neumann(&phi, &g).unwrap();
            let scale: f64 = lap.iter().map(|x| x.abs()).sum::<f64>() * g.h();
            prop_assert!(integrate(&lap, &g).abs() <= 1e-13 * (1.0 + scale));
        }

        #[test]
        fn self_adjoint_and_nonpositive(phi in field(12), psi in field(12)) {
            let g = Grid1D::new(12, 0.7).unwrap();
            let lphi = laplacian_neumann(&phi, &g).unwrap();
            let lpsi = laplacian_neumann(&psi, &g).unwrap();
            let a: Vec<f64> = psi.iter().zip(&lphi).map(|(x, y)| x * y).collect();
            let b: Vec<f64> = phi.iter().zip(&lpsi).map(|(x, y)| x * y).collect();
            let (ia, ib) = (integrate(&a, &g), integrate(&b, &g));
            prop_assert!((ia - ib).abs() <= 1e-12 * (1.0 + ia.abs().max(ib.abs())));
            let c: Vec<f64> = phi.iter().zip(&lphi).map(|(x, y)| x * y).collect();
            prop_assert!(integrate(&c, &g) <= 1e-9);
        }
    }
}
