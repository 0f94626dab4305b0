//! Small dense linear algebra: symmetric eigenvalues for the parabolicity
//! validators, an LU factorization backing the direct linear-solve route and
//! the extrapolation weights, and a matrix-free BiCGStab iteration for the
//! nonsymmetric implicit systems.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular at pivot {0}")]
    SingularPivot(usize),
    #[error("dimension mismatch")]
    DimensionMismatch,
    #[error("iteration did not converge: {iterations} iterations, relative residual {residual}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("breakdown in Krylov recurrence at iteration {0}")]
    Breakdown(usize),
}

/// Eigenvalues of a dense symmetric matrix by the cyclic Jacobi method.
///
/// `mat` is row-major `n × n`; only symmetric inputs give meaningful output.
/// Returns eigenvalues in ascending order.
pub fn symmetric_eigenvalues<T: Scalar>(mat: &[T], n: usize) -> Result<Vec<T>, LinalgError> {
    if mat.len() != n * n {
        return Err(LinalgError::DimensionMismatch);
    }
    let mut a = mat.to_vec();
    let idx = |r: usize, c: usize| r * n + c;
    let eps = T::epsilon();
    for _sweep in 0..64 {
        let mut off = T::zero();
        for r in 0..n {
            for c in (r + 1)..n {
                off += a[idx(r, c)] * a[idx(r, c)];
            }
        }
        let scale = (0..n).fold(T::zero(), |acc, r| acc + a[idx(r, r)].abs()) + T::one();
        if off.sqrt() <= eps * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[idx(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = a[idx(p, p)];
                let aqq = a[idx(q, q)];
                let theta = (aqq - app) / (apq + apq);
                // stable rotation: t = sign(θ) / (|θ| + sqrt(1 + θ²))
                let t = {
                    let denom = theta.abs() + (T::one() + theta * theta).sqrt();
                    if theta >= T::zero() {
                        T::one() / denom
                    } else {
                        -T::one() / denom
                    }
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[idx(k, p)];
                    let akq = a[idx(k, q)];
                    a[idx(k, p)] = c * akp - s * akq;
                    a[idx(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[idx(p, k)];
                    let aqk = a[idx(q, k)];
                    a[idx(p, k)] = c * apk - s * aqk;
                    a[idx(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<T> = (0..n).map(|r| a[idx(r, r)]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    Ok(eig)
}

/// Dense LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct DenseLu<T: Scalar> {
    n: usize,
    lu: Vec<T>,
    pivots: Vec<usize>,
}

impl<T: Scalar> DenseLu<T> {
    /// Factors a row-major `n × n` matrix.
    pub fn factor(mut a: Vec<T>, n: usize) -> Result<Self, LinalgError> {
        if a.len() != n * n {
            return Err(LinalgError::DimensionMismatch);
        }
        let mut pivots = Vec::with_capacity(n);
        for col in 0..n {
            let mut pivot_row = col;
            let mut best = a[col * n + col].abs();
            for r in (col + 1)..n {
                let v = a[r * n + col].abs();
                if v > best {
                    best = v;
                    pivot_row = r;
                }
            }
            if best == T::zero() {
                return Err(LinalgError::SingularPivot(col));
            }
            if pivot_row != col {
                for c in 0..n {
                    a.swap(col * n + c, pivot_row * n + c);
                }
            }
            pivots.push(pivot_row);
            let inv = T::one() / a[col * n + col];
            for r in (col + 1)..n {
                let factor = a[r * n + col] * inv;
                a[r * n + col] = factor;
                for c in (col + 1)..n {
                    let sub = factor * a[col * n + c];
                    a[r * n + c] -= sub;
                }
            }
        }
        Ok(Self { n, lu: a, pivots })
    }

    /// Builds the matrix column by column from a linear operator and factors it.
    pub fn from_operator(
        n: usize,
        mut apply: impl FnMut(&[T]) -> Vec<T>,
    ) -> Result<Self, LinalgError> {
        let mut mat = vec![T::zero(); n * n];
        let mut unit = vec![T::zero(); n];
        for col in 0..n {
            unit[col] = T::one();
            let image = apply(&unit);
            if image.len() != n {
                return Err(LinalgError::DimensionMismatch);
            }
            for (row, &v) in image.iter().enumerate() {
                mat[row * n + col] = v;
            }
            unit[col] = T::zero();
        }
        Self::factor(mat, n)
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, LinalgError> {
        if b.len() != self.n {
            return Err(LinalgError::DimensionMismatch);
        }
        let n = self.n;
        let mut x = b.to_vec();
        for col in 0..n {
            x.swap(col, self.pivots[col]);
        }
        for r in 1..n {
            let mut acc = x[r];
            for c in 0..r {
                acc -= self.lu[r * n + c] * x[c];
            }
            x[r] = acc;
        }
        for r in (0..n).rev() {
            let mut acc = x[r];
            for c in (r + 1)..n {
                acc -= self.lu[r * n + c] * x[c];
            }
            x[r] = acc / self.lu[r * n + r];
        }
        Ok(x)
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm2<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy)]
pub struct IterativeStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Unpreconditioned BiCGStab for a nonsymmetric operator, matrix-free.
///
/// Solves `A x = b` starting from `x0` until `||b - A x|| ≤ rel_tol ||b||`.
pub fn bicgstab<T: Scalar>(
    mut apply: impl FnMut(&[T]) -> Vec<T>,
    b: &[T],
    x0: &[T],
    rel_tol: T,
    max_iters: usize,
) -> Result<(Vec<T>, IterativeStats), LinalgError> {
    let n = b.len();
    if x0.len() != n {
        return Err(LinalgError::DimensionMismatch);
    }
    let b_norm = norm2(b);
    let target = if b_norm == T::zero() {
        // zero right-hand side: absolute tolerance
        rel_tol
    } else {
        rel_tol * b_norm
    };

    let mut x = x0.to_vec();
    let ax = apply(&x);
    let mut r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    let mut r_norm = norm2(&r);
    if r_norm <= target {
        return Ok((
            x,
            IterativeStats {
                iterations: 0,
                relative_residual: rel_residual(r_norm, b_norm),
            },
        ));
    }
    let r_hat = r.clone();
    let mut rho = T::one();
    let mut alpha = T::one();
    let mut omega = T::one();
    let mut v = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];

    for iter in 1..=max_iters {
        let rho_next = dot(&r_hat, &r);
        if rho_next == T::zero() {
            return Err(LinalgError::Breakdown(iter));
        }
        let beta = (rho_next / rho) * (alpha / omega);
        rho = rho_next;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        v = apply(&p);
        let denom = dot(&r_hat, &v);
        if denom == T::zero() {
            return Err(LinalgError::Breakdown(iter));
        }
        alpha = rho / denom;
        let s: Vec<T> = r.iter().zip(&v).map(|(&ri, &vi)| ri - alpha * vi).collect();
        let s_norm = norm2(&s);
        if s_norm <= target {
            for i in 0..n {
                x[i] += alpha * p[i];
            }
            return Ok((
                x,
                IterativeStats {
                    iterations: iter,
                    relative_residual: rel_residual(s_norm, b_norm),
                },
            ));
        }
        let t = apply(&s);
        let tt = dot(&t, &t);
        if tt == T::zero() {
            return Err(LinalgError::Breakdown(iter));
        }
        omega = dot(&t, &s) / tt;
        if omega == T::zero() {
            return Err(LinalgError::Breakdown(iter));
        }
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
        }
        r = s.iter().zip(&t).map(|(&si, &ti)| si - omega * ti).collect();
        r_norm = norm2(&r);
        if r_norm <= target {
            return Ok((
                x,
                IterativeStats {
                    iterations: iter,
                    relative_residual: rel_residual(r_norm, b_norm),
                },
            ));
        }
    }
    Err(LinalgError::NoConvergence {
        iterations: max_iters,
        residual: rel_residual(r_norm, b_norm),
    })
}

fn rel_residual<T: Scalar>(r_norm: T, b_norm: T) -> f64 {
    let r = r_norm.to_f64().unwrap_or(f64::NAN);
    let b = b_norm.to_f64().unwrap_or(f64::NAN);
    if b == 0.0 {
        r
    } else {
        r / b
    }
}
