//! Row-compressed matrices, ILU(0) and preconditioned BiCGSTAB.

use crate::par::{dot, fill, ExecPolicy};

use super::SolverError;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    /// From per-row (column, value) lists; duplicates are summed, columns sorted.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> CsrMatrix {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *vals.last_mut().expect("entry") += v;
                } else {
                    col_idx.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { n, row_ptr, col_idx, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (c, v) = self.row(i);
        c.binary_search(&j).ok().map(|k| v[k])
    }

    pub fn matvec_into(&self, policy: ExecPolicy, x: &[f64], y: &mut [f64]) {
        fill(policy, y, |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(|(&j, a)| a * x[j]).sum()
        });
    }

    pub fn matvec(&self, policy: ExecPolicy, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(policy, x, &mut y);
        y
    }

    /// Whether (i, j) stored implies (j, i) stored.
    pub fn pattern_is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).0.iter().all(|&j| self.get(j, i).is_some()))
    }
}

/// Incomplete LU with the sparsity pattern of A; unit lower factor implicit.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Ilu0, SolverError> {
        let mut lu = a.clone();
        let n = a.n;
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            let (c, _) = lu.row(i);
            match c.binary_search(&i) {
                Ok(k) => diag[i] = lu.row_ptr[i] + k,
                Err(_) => return Err(SolverError::Singular(format!("row {i} has no diagonal entry"))),
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (lo, hi) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for p in lo..hi {
                pos[lu.col_idx[p]] = p;
            }
            for p in lo..hi {
                let k = lu.col_idx[p];
                if k >= i {
                    break;
                }
                let pivot = lu.vals[diag[k]];
                let lik = lu.vals[p] / pivot;
                lu.vals[p] = lik;
                for q in diag[k] + 1..lu.row_ptr[k + 1] {
                    let j = lu.col_idx[q];
                    let t = pos[j];
                    if t != usize::MAX {
                        lu.vals[t] -= lik * lu.vals[q];
                    }
                }
            }
            for p in lo..hi {
                pos[lu.col_idx[p]] = usize::MAX;
            }
            if lu.vals[diag[i]].abs() < 1e-300 || !lu.vals[diag[i]].is_finite() {
                return Err(SolverError::Singular(format!("zero pivot in row {i}")));
            }
        }
        Ok(Ilu0 { lu, diag })
    }

    /// z = (LU)^{-1} r; triangular solves are sequential.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.lu.n;
        for i in 0..n {
            let mut s = r[i];
            for p in self.lu.row_ptr[i]..self.diag[i] {
                s -= self.lu.vals[p] * z[self.lu.col_idx[p]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for p in self.diag[i] + 1..self.lu.row_ptr[i + 1] {
                s -= self.lu.vals[p] * z[self.lu.col_idx[p]];
            }
            z[i] = s / self.lu.vals[self.diag[i]];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KrylovConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        KrylovConfig { tol: 1e-10, max_iter: 5000 }
    }
}

#[derive(Debug, Clone)]
pub struct KrylovOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// ||b - A x|| / ||b|| recomputed from the returned x.
    pub relative_residual: f64,
}

/// Right-preconditioned BiCGSTAB from the initial guess `x0`.
pub fn bicgstab(
    a: &CsrMatrix,
    pre: &Ilu0,
    b: &[f64],
    x0: Option<&[f64]>,
    cfg: KrylovConfig,
    policy: ExecPolicy,
) -> Result<KrylovOutcome, SolverError> {
    let n = a.n;
    let bnorm = dot(policy, b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(KrylovOutcome { x: vec![0.0; n], iterations: 0, relative_residual: 0.0 });
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = a.matvec(policy, &x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut best = (dot(policy, &r, &r).sqrt() / bnorm, x.clone());
    for it in 1..=cfg.max_iter {
        let rho_new = dot(policy, &r_hat, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            return Err(SolverError::Breakdown { iterations: it, best_residual: best.0 });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        pre.apply(&p, &mut y);
        a.matvec_into(policy, &y, &mut v);
        let den = dot(policy, &r_hat, &v);
        if den == 0.0 {
            return Err(SolverError::Breakdown { iterations: it, best_residual: best.0 });
        }
        alpha = rho / den;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        let snorm = dot(policy, &s, &s).sqrt() / bnorm;
        if snorm <= cfg.tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return finish(a, b, x, it, bnorm, policy);
        }
        pre.apply(&s, &mut z);
        a.matvec_into(policy, &z, &mut t);
        let tt = dot(policy, &t, &t);
        if tt == 0.0 {
            return Err(SolverError::Breakdown { iterations: it, best_residual: best.0 });
        }
        omega = dot(policy, &t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        let rn = dot(policy, &r, &r).sqrt() / bnorm;
        if rn < best.0 {
            best = (rn, x.clone());
        }
        if rn <= cfg.tol {
            return finish(a, b, x, it, bnorm, policy);
        }
        if omega == 0.0 {
            return Err(SolverError::Breakdown { iterations: it, best_residual: best.0 });
        }
    }
    Err(SolverError::NotConverged { iterations: cfg.max_iter, best_residual: best.0 })
}

fn finish(a: &CsrMatrix, b: &[f64], x: Vec<f64>, iterations: usize, bnorm: f64, policy: ExecPolicy) -> Result<KrylovOutcome, SolverError> {
    let ax = a.matvec(policy, &x);
    let res: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let relative_residual = dot(policy, &res, &res).sqrt() / bnorm;
    Ok(KrylovOutcome { x, iterations, relative_residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize, shift: f64) -> CsrMatrix {
        let rows = (0..n)
            .map(|i| vec![((i + n - 1) % n, -1.0), (i, 2.0 + shift), ((i + 1) % n, -1.0)])
            .collect();
        CsrMatrix::from_rows(rows)
    }

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_rows(vec![vec![(1, 1.0), (0, 2.0), (1, 3.0)], vec![(1, 1.0)]]);
        assert_eq!(m.col_idx, vec![0, 1, 1]);
        assert_eq!(m.vals, vec![2.0, 4.0, 1.0]);
        assert!(!m.pattern_is_symmetric());
    }

    #[test]
    fn ilu_is_exact_on_tridiagonal() {
        let rows = (0..6)
            .map(|i| {
                let mut r = vec![(i, 4.0)];
                if i > 0 {
                    r.push((i - 1, -1.0));
                }
                if i < 5 {
                    r.push((i + 1, -2.0));
                }
                r
            })
            .collect();
        let a = CsrMatrix::from_rows(rows);
        let ilu = Ilu0::new(&a).unwrap();
        let b = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut x = vec![0.0; 6];
        ilu.apply(&b, &mut x);
        let ax = a.matvec(ExecPolicy::Sequential, &x);
        for i in 0..6 {
            assert!((ax[i] - b[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn bicgstab_solves_shifted_periodic_laplacian() {
        let a = laplace_1d(200, 0.1);
        let xs: Vec<f64> = (0..200).map(|i| (i as f64 * 0.1).sin()).collect();
        let b = a.matvec(ExecPolicy::Sequential, &xs);
        let out = bicgstab(&a, &Ilu0::new(&a).unwrap(), &b, None, KrylovConfig::default(), ExecPolicy::default()).unwrap();
        assert!(out.relative_residual <= 1e-10);
        assert!(out.x.iter().zip(&xs).all(|(a, b)| (a - b).abs() < 1e-8));
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = laplace_1d(10, 1.0);
        let out = bicgstab(&a, &Ilu0::new(&a).unwrap(), &[0.0; 10], None, KrylovConfig::default(), ExecPolicy::default()).unwrap();
        assert!(out.x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn reports_non_convergence() {
        let a = laplace_1d(400, 1e-6);
        let b: Vec<f64> = (0..400).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let cfg = KrylovConfig { tol: 1e-14, max_iter: 2 };
        assert!(matches!(
            bicgstab(&a, &Ilu0::new(&a).unwrap(), &b, None, cfg, ExecPolicy::default()),
            Err(SolverError::NotConverged { .. } | SolverError::Breakdown { .. })
        ));
    }
}
