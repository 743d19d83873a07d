//! Symmetric positive-definite solves for nodal conductance systems.
//!
//! Systems up to [`DIRECT_LIMIT`] unknowns use a banded Cholesky
//! factorization; larger ones use Jacobi-preconditioned conjugate gradients.

use crate::error::{Error, Result};

pub const DIRECT_LIMIT: usize = 4096;
pub const RESIDUAL_LIMIT: f64 = 1e-10;
const CG_TARGET: f64 = 1e-12;

/// Sparse symmetric matrix assembled by conductance stamps.
#[derive(Debug, Clone)]
pub struct SymmetricSystem {
    n: usize,
    /// Off-diagonal entries per row, both triangles.
    off: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
}

impl SymmetricSystem {
    pub fn new(n: usize) -> Self {
        SymmetricSystem { n, off: vec![Vec::new(); n], diag: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Conductance `g` between unknowns `a` and `b`.
    pub fn stamp(&mut self, a: usize, b: usize, g: f64) {
        self.diag[a] += g;
        self.diag[b] += g;
        self.off[a].push((b, -g));
        self.off[b].push((a, -g));
    }

    /// Conductance `g` from unknown `a` to a fixed-potential node.
    pub fn stamp_to_fixed(&mut self, a: usize, g: f64) {
        self.diag[a] += g;
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Entry `(i, j)`, summing duplicate stamps.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        self.off[i].iter().filter(|(c, _)| *c == j).map(|(_, v)| v).sum()
    }

    pub fn half_bandwidth(&self) -> usize {
        self.off
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |(j, _)| i.abs_diff(*j)))
            .max()
            .unwrap_or(0)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.diag[i] * x[i] + self.off[i].iter().map(|&(j, v)| v * x[j]).sum::<f64>())
            .collect()
    }

    /// `||A x - b|| / ||b||`, or `||A x||` when `b` is zero.
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let ax = self.matvec(x);
        let r = ax.iter().zip(b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nb == 0.0 {
            r
        } else {
            r / nb
        }
    }

    /// Solve `A x = b`; the returned residual is already checked against
    /// [`RESIDUAL_LIMIT`].
    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, f64)> {
        assert_eq!(b.len(), self.n);
        if self.n == 0 {
            return Ok((Vec::new(), 0.0));
        }
        let x = if self.n <= DIRECT_LIMIT {
            BandCholesky::factor(self)?.solve(b)
        } else {
            self.conjugate_gradient(b)?
        };
        let residual = self.relative_residual(&x, b);
        if !(residual <= RESIDUAL_LIMIT) {
            return Err(Error::SolverResidual { residual, limit: RESIDUAL_LIMIT });
        }
        Ok((x, residual))
    }

    fn conjugate_gradient(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut x = vec![0.0; n];
        if nb == 0.0 {
            return Ok(x);
        }
        let inv_d: Vec<f64> = self.diag.iter().map(|d| 1.0 / d).collect();
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&inv_d).map(|(r, d)| r * d).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        for _ in 0..(10 * n).max(1000) {
            let ap = self.matvec(&p);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if !(pap > 0.0) {
                return Err(Error::SingularNetwork("conductance matrix not positive definite".into()));
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rn <= CG_TARGET * nb {
                return Ok(x);
            }
            for i in 0..n {
                z[i] = r[i] * inv_d[i];
            }
            let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::NoConvergence("conjugate gradients hit the iteration cap".into()))
    }
}

/// Lower-triangular band factor, row `i` holds columns `i - bw ..= i`.
struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + (j + self.bw - i)
    }

    fn factor(a: &SymmetricSystem) -> Result<Self> {
        let n = a.n;
        let bw = a.half_bandwidth();
        let mut f = BandCholesky { n, bw, l: vec![0.0; n * (bw + 1)] };
        for i in 0..n {
            let k = f.idx(i, i);
            f.l[k] = a.diag[i];
            for &(j, v) in &a.off[i] {
                if j < i {
                    let k = f.idx(i, j);
                    f.l[k] += v;
                }
            }
        }
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let kstart = lo.max(j.saturating_sub(bw));
                let mut s = f.l[f.idx(i, j)];
                let ri = f.idx(i, kstart);
                let rj = f.idx(j, kstart);
                for t in 0..(j - kstart) {
                    s -= f.l[ri + t] * f.l[rj + t];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::SingularNetwork(
                            "conductance matrix not positive definite".into(),
                        ));
                    }
                    let k = f.idx(i, i);
                    f.l[k] = s.sqrt();
                } else {
                    let d = f.l[f.idx(j, j)];
                    let k = f.idx(i, j);
                    f.l[k] = s / d;
                }
            }
        }
        Ok(f)
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.n, self.bw);
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = y[i];
            for j in lo..i {
                s -= self.l[self.idx(i, j)] * y[j];
            }
            y[i] = s / self.l[self.idx(i, i)];
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut s = y[i];
            for j in (i + 1)..=hi {
                s -= self.l[self.idx(j, i)] * y[j];
            }
            y[i] = s / self.l[self.idx(i, i)];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1-D resistor ladder anchored at both ends.
    fn ladder(n: usize) -> SymmetricSystem {
        let mut a = SymmetricSystem::new(n);
        for i in 0..n - 1 {
            a.stamp(i, i + 1, 1.0 + i as f64 * 0.1);
        }
        a.stamp_to_fixed(0, 2.0);
        a.stamp_to_fixed(n - 1, 0.5);
        a
    }

    #[test]
    fn direct_and_iterative_agree() {
        let a = ladder(300);
        let b: Vec<f64> = (0..300).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let (x1, r1) = a.solve(&b).unwrap();
        let x2 = a.conjugate_gradient(&b).unwrap();
        assert!(r1 <= RESIDUAL_LIMIT);
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - q).abs() <= 1e-8 * (1.0 + p.abs()));
        }
    }

    #[test]
    fn large_system_takes_iterative_path() {
        let a = ladder(DIRECT_LIMIT + 10);
        let mut b = vec![0.0; a.len()];
        b[0] = 2.0;
        let (x, r) = a.solve(&b).unwrap();
        assert!(r <= RESIDUAL_LIMIT);
        // the ladder is a voltage divider: x decreases monotonically
        assert!(x.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn floating_block_is_rejected() {
        let mut a = SymmetricSystem::new(2);
        a.stamp(0, 1, 1.0);
        assert!(matches!(a.solve(&[1.0, -1.0]), Err(Error::SingularNetwork(_))));
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = ladder(10);
        let (x, r) = a.solve(&[0.0; 10]).unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
        assert_eq!(r, 0.0);
    }
}
