//! Small dense blocks and a block-tridiagonal direct solver.

use alloc::vec::Vec;

use crate::num::abs;
use crate::{Error, Result};

pub type Mat<const B: usize> = [[f64; B]; B];
pub type Mat3 = Mat<3>;

pub fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// LU factors of a `B x B` block with partial pivoting.
#[derive(Debug, Clone, Copy)]
pub struct Lu<const B: usize> {
    lu: Mat<B>,
    piv: [usize; B],
}

impl<const B: usize> Lu<B> {
    pub fn new(mut a: Mat<B>) -> Result<Self> {
        let mut piv = [0usize; B];
        for k in 0..B {
            let mut p = k;
            for r in k + 1..B {
                if abs(a[r][k]) > abs(a[p][k]) {
                    p = r;
                }
            }
            if a[p][k] == 0.0 || !a[p][k].is_finite() {
                return Err(Error::Singular("block LU"));
            }
            a.swap(k, p);
            piv[k] = p;
            for r in k + 1..B {
                let m = a[r][k] / a[k][k];
                a[r][k] = m;
                for c in k + 1..B {
                    a[r][c] -= m * a[k][c];
                }
            }
        }
        Ok(Lu { lu: a, piv })
    }

    pub fn solve(&self, b: &[f64; B]) -> [f64; B] {
        let mut x = *b;
        for k in 0..B {
            x.swap(k, self.piv[k]);
        }
        for r in 0..B {
            for c in 0..r {
                x[r] -= self.lu[r][c] * x[c];
            }
        }
        for r in (0..B).rev() {
            for c in r + 1..B {
                x[r] -= self.lu[r][c] * x[c];
            }
            x[r] /= self.lu[r][r];
        }
        x
    }

    /// `A^{-1} M`, column by column.
    pub fn solve_mat(&self, m: &Mat<B>) -> Mat<B> {
        let mut out = [[0.0; B]; B];
        for c in 0..B {
            let mut col = [0.0; B];
            for r in 0..B {
                col[r] = m[r][c];
            }
            let x = self.solve(&col);
            for r in 0..B {
                out[r][c] = x[r];
            }
        }
        out
    }
}

fn mat_mul<const B: usize>(a: &Mat<B>, b: &Mat<B>) -> Mat<B> {
    let mut out = [[0.0; B]; B];
    for i in 0..B {
        for k in 0..B {
            let aik = a[i][k];
            for j in 0..B {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

fn mat_vec<const B: usize>(a: &Mat<B>, x: &[f64; B]) -> [f64; B] {
    let mut out = [0.0; B];
    for i in 0..B {
        for j in 0..B {
            out[i] += a[i][j] * x[j];
        }
    }
    out
}

/// Block-tridiagonal matrix with `n` block rows.
///
/// Row `j` reads `lower[j] x[j-1] + diag[j] x[j] + upper[j] x[j+1]`;
/// `lower[0]` and `upper[n-1]` are ignored.
#[derive(Debug, Clone)]
pub struct BlockTridiagonal<const B: usize> {
    pub lower: Vec<Mat<B>>,
    pub diag: Vec<Mat<B>>,
    pub upper: Vec<Mat<B>>,
}

impl<const B: usize> BlockTridiagonal<B> {
    pub fn zeros(n: usize) -> Self {
        BlockTridiagonal {
            lower: alloc::vec![[[0.0; B]; B]; n],
            diag: alloc::vec![[[0.0; B]; B]; n],
            upper: alloc::vec![[[0.0; B]; B]; n],
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn mul_vec(&self, x: &[[f64; B]]) -> Vec<[f64; B]> {
        let n = self.n();
        (0..n)
            .map(|j| {
                let mut y = mat_vec(&self.diag[j], &x[j]);
                if j > 0 {
                    let l = mat_vec(&self.lower[j], &x[j - 1]);
                    y.iter_mut().zip(l).for_each(|(a, b)| *a += b);
                }
                if j + 1 < n {
                    let u = mat_vec(&self.upper[j], &x[j + 1]);
                    y.iter_mut().zip(u).for_each(|(a, b)| *a += b);
                }
                y
            })
            .collect()
    }

    /// Block Thomas elimination. Consumes the matrix; `rhs` is overwritten
    /// with the solution.
    pub fn solve(mut self, rhs: &mut [[f64; B]]) -> Result<()> {
        let n = self.n();
        if rhs.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: rhs.len(),
            });
        }
        let mut factors: Vec<Lu<B>> = Vec::with_capacity(n);
        factors.push(Lu::new(self.diag[0])?);
        for j in 1..n {
            let prev = &factors[j - 1];
            // diag'[j] = diag[j] - lower[j] diag'[j-1]^{-1} upper[j-1]
            let w = prev.solve_mat(&self.upper[j - 1]);
            let lw = mat_mul(&self.lower[j], &w);
            for r in 0..B {
                for c in 0..B {
                    self.diag[j][r][c] -= lw[r][c];
                }
            }
            let z = prev.solve(&rhs[j - 1]);
            let lz = mat_vec(&self.lower[j], &z);
            for r in 0..B {
                rhs[j][r] -= lz[r];
            }
            factors.push(Lu::new(self.diag[j])?);
        }
        rhs[n - 1] = factors[n - 1].solve(&rhs[n - 1]);
        for j in (0..n - 1).rev() {
            let cx = mat_vec(&self.upper[j], &rhs[j + 1]);
            let mut r = rhs[j];
            for k in 0..B {
                r[k] -= cx[k];
            }
            rhs[j] = factors[j].solve(&r);
        }
        Ok(())
    }
}

/// Scalar Thomas algorithm for `sub[j] x[j-1] + diag[j] x[j] + sup[j] x[j+1]
/// = rhs[j]`, overwriting `rhs`. No pivoting; intended for diagonally
/// dominant systems.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    if rhs.len() != n || sub.len() != n || sup.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: rhs.len(),
        });
    }
    let mut c = alloc::vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 {
        return Err(Error::Singular("tridiagonal"));
    }
    rhs[0] /= beta;
    for j in 1..n {
        c[j - 1] = sup[j - 1] / beta;
        beta = diag[j] - sub[j] * c[j - 1];
        if beta == 0.0 {
            return Err(Error::Singular("tridiagonal"));
        }
        rhs[j] = (rhs[j] - sub[j] * rhs[j - 1]) / beta;
    }
    for j in (0..n - 1).rev() {
        rhs[j] -= c[j] * rhs[j + 1];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{rngs::SmallRng, Rng, SeedableRng};

    fn random_block<const B: usize>(rng: &mut SmallRng, shift: f64) -> Mat<B> {
        let mut m = [[0.0; B]; B];
        for r in 0..B {
            for c in 0..B {
                m[r][c] = rng.gen_range(-1.0..1.0);
            }
            m[r][r] += shift;
        }
        m
    }

    #[test]
    fn lu_solves_with_pivoting() {
        let a = [[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]];
        let lu = Lu::new(a).unwrap();
        let x = lu.solve(&[5.0, 3.0, 6.0]);
        let ax = mat_vec(&a, &x);
        for (got, want) in ax.iter().zip([5.0, 3.0, 6.0]) {
            assert!((got - want).abs() < 1e-14);
        }
        assert!(Lu::new([[1.0, 2.0], [2.0, 4.0]]).is_err());
    }

    #[test]
    fn det3_of_triangular() {
        let m = [[2.0, 1.0, 7.0], [0.0, 3.0, -1.0], [0.0, 0.0, 4.0]];
        assert_eq!(det3(&m), 24.0);
    }

    #[test]
    fn block_thomas_matches_product() {
        let mut rng = SmallRng::seed_from_u64(7);
        for n in [1usize, 2, 5, 40] {
            let mut a = BlockTridiagonal::<3>::zeros(n);
            for j in 0..n {
                a.diag[j] = random_block(&mut rng, 6.0);
                a.lower[j] = random_block(&mut rng, 0.0);
                a.upper[j] = random_block(&mut rng, 0.0);
            }
            let x: Vec<[f64; 3]> = (0..n)
                .map(|_| {
                    [
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ]
                })
                .collect();
            let mut b = a.mul_vec(&x);
            a.solve(&mut b).unwrap();
            for (got, want) in b.iter().zip(&x) {
                for k in 0..3 {
                    assert!((got[k] - want[k]).abs() < 1e-12, "n={n}");
                }
            }
        }
    }

    #[test]
    fn scalar_thomas() {
        let n = 6;
        let sub = alloc::vec![-1.0; n];
        let sup = alloc::vec![-1.0; n];
        let diag = alloc::vec![3.0; n];
        let x: Vec<f64> = (0..n).map(|k| k as f64 * 0.5 - 1.0).collect();
        let mut b: Vec<f64> = (0..n)
            .map(|j| {
                let mut v = diag[j] * x[j];
                if j > 0 {
                    v += sub[j] * x[j - 1];
                }
                if j + 1 < n {
                    v += sup[j] * x[j + 1];
                }
                v
            })
            .collect();
        solve_tridiagonal(&sub, &diag, &sup, &mut b).unwrap();
        for (g, w) in b.iter().zip(&x) {
            assert!((g - w).abs() < 1e-14);
        }
    }
}
