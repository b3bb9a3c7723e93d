//! Lowest eigenpairs of a real symmetric tridiagonal matrix by Sturm-sequence
//! bisection and inverse iteration.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    /// Off-diagonal, one shorter than `diag`.
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::Contract(format!(
                "tridiagonal shape mismatch: {} diagonal, {} off-diagonal",
                diag.len(),
                off.len()
            )));
        }
        Ok(SymTridiagonal { diag, off })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Rows `range` as a principal submatrix.
    pub fn block(&self, range: std::ops::Range<usize>) -> Result<Self> {
        let off = self.off[range.start..range.end - 1].to_vec();
        Self::new(self.diag[range].to_vec(), off)
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let tiny = f64::MIN_POSITIVE.sqrt();
        let mut count = 0;
        let mut q = self.diag[0] - x;
        for i in 0..self.len() {
            if i > 0 {
                let b = self.off[i - 1];
                q = self.diag[i] - x - b * b / q;
            }
            if q == 0.0 {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `k`-th smallest eigenvalue (0-based).
    pub fn eigenvalue(&self, k: usize) -> Result<f64> {
        if k >= self.len() {
            return Err(Error::Contract(format!("eigenvalue {k} requested from a {}-point matrix", self.len())));
        }
        let (mut lo, mut hi) = self.gershgorin();
        let scale = lo.abs().max(hi.abs());
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= 4.0 * f64::EPSILON * scale {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Solve `(T − σ)x = rhs` by Gaussian elimination with partial pivoting.
    fn shifted_solve(&self, sigma: f64, rhs: &[f64]) -> Vec<f64> {
        let n = self.len();
        let tiny = f64::EPSILON * self.gershgorin().1.abs().max(1.0);
        // Row i holds (sub, main, super, super2) after pivoting.
        let mut sub: Vec<f64> = (0..n).map(|i| if i > 0 { self.off[i - 1] } else { 0.0 }).collect();
        let mut main: Vec<f64> = self.diag.iter().map(|d| d - sigma).collect();
        let mut sup: Vec<f64> = (0..n).map(|i| if i + 1 < n { self.off[i] } else { 0.0 }).collect();
        let mut sup2 = vec![0.0; n];
        let mut b = rhs.to_vec();
        for i in 0..n.saturating_sub(1) {
            let below = sub[i + 1];
            if below.abs() > main[i].abs() {
                // Swap rows i and i+1.
                let (m0, s0, t0) = (main[i], sup[i], sup2[i]);
                main[i] = below;
                sup[i] = main[i + 1];
                sup2[i] = sup[i + 1];
                main[i + 1] = s0;
                sup[i + 1] = t0;
                sub[i + 1] = m0;
                b.swap(i, i + 1);
            }
            if main[i] == 0.0 {
                main[i] = tiny;
            }
            let f = sub[i + 1] / main[i];
            main[i + 1] -= f * sup[i];
            sup[i + 1] -= f * sup2[i];
            b[i + 1] -= f * b[i];
            sub[i + 1] = 0.0;
        }
        if main[n - 1] == 0.0 {
            main[n - 1] = tiny;
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = b[i];
            if i + 1 < n {
                s -= sup[i] * x[i + 1];
            }
            if i + 2 < n {
                s -= sup2[i] * x[i + 2];
            }
            x[i] = s / main[i];
        }
        x
    }

    /// Unit eigenvector for eigenvalue `lambda`.
    pub fn eigenvector(&self, lambda: f64) -> Vec<f64> {
        let n = self.len();
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919) % 97) as f64 / 97.0).collect();
        for _ in 0..4 {
            x = self.shifted_solve(lambda, &x);
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= norm);
        }
        x
    }

    /// `(T x)_i`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.off[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// Lowest `count` eigenpairs, Gram-Schmidt orthonormalized.
    pub fn lowest(&self, count: usize) -> Result<Vec<(f64, Vec<f64>)>> {
        let mut out: Vec<(f64, Vec<f64>)> = Vec::with_capacity(count);
        for k in 0..count {
            let lambda = self.eigenvalue(k)?;
            let mut v = self.eigenvector(lambda);
            for (_, u) in &out {
                let d: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if !(norm > 0.5) {
                return Err(Error::Contract(format!("inverse iteration lost eigenvector {k} (norm {norm})")));
            }
            v.iter_mut().for_each(|a| *a /= norm);
            // Fix the sign so the largest component is positive.
            let big = v.iter().cloned().fold(0.0, |m: f64, a| if a.abs() > m.abs() { a } else { m });
            if big < 0.0 {
                v.iter_mut().for_each(|a| *a = -*a);
            }
            out.push((lambda, v));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> SymTridiagonal {
        SymTridiagonal::new(vec![2.0; n], vec![-1.0; n - 1]).unwrap()
    }

    #[test]
    fn discrete_laplacian_spectrum() {
        let n = 200;
        let t = laplacian(n);
        for k in 0..5 {
            let exact = 2.0 - 2.0 * (std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64).cos();
            assert!((t.eigenvalue(k).unwrap() - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn eigenvectors_satisfy_equation_and_are_orthonormal() {
        let n = 300;
        let diag: Vec<f64> = (0..n).map(|i| 2.0 + 1e-3 * ((i as f64) - 150.0).powi(2)).collect();
        let t = SymTridiagonal::new(diag, vec![-1.0; n - 1]).unwrap();
        let pairs = t.lowest(4).unwrap();
        for (i, (l, v)) in pairs.iter().enumerate() {
            let tv = t.apply(v);
            let res: f64 = tv.iter().zip(v).map(|(a, b)| (a - l * b).powi(2)).sum::<f64>().sqrt();
            assert!(res < 1e-10, "residual {res}");
            for (_, u) in &pairs[..i] {
                let d: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
                assert!(d.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sturm_count_brackets_spectrum() {
        let t = laplacian(50);
        assert_eq!(t.count_below(-0.1), 0);
        assert_eq!(t.count_below(4.1), 50);
    }
}
