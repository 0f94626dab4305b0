//! Exact-arithmetic reference oracles for the test suites: rational Gaussian
//! elimination for extrapolation weights and exact polynomial expansions of
//! the forward/backward difference quotients. Everything here is independent
//! of the floating-point implementation paths it is used to check.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

pub type Q = BigRational;

pub fn q_int(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

/// `1 / 2^e`
pub fn q_half_pow(e: u32) -> Q {
    Q::new(BigInt::one(), BigInt::from(2u8).pow(e))
}

pub fn q_factorial(n: u64) -> Q {
    let mut acc = BigInt::one();
    for k in 2..=n {
        acc *= BigInt::from(k);
    }
    Q::from_integer(acc)
}

/// Solves `A x = rhs` by exact Gaussian elimination with row exchange on
/// zero pivots. Returns `None` for singular systems.
pub fn solve_exact(mut a: Vec<Vec<Q>>, mut rhs: Vec<Q>) -> Option<Vec<Q>> {
    let n = a.len();
    for row in &a {
        if row.len() != n {
            return None;
        }
    }
    for col in 0..n {
        let pivot_row = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        let pivot = a[col][col].clone();
        for r in (col + 1)..n {
            if a[r][col].is_zero() {
                continue;
            }
            let factor = &a[r][col] / &pivot;
            for c in col..n {
                let sub = &factor * &a[col][c];
                a[r][c] -= sub;
            }
            let sub = &factor * &rhs[col];
            rhs[r] -= sub;
        }
    }
    let mut x = vec![Q::zero(); n];
    for r in (0..n).rev() {
        let mut acc = rhs[r].clone();
        for c in (r + 1)..n {
            acc -= &a[r][c] * &x[c];
        }
        x[r] = acc / &a[r][r];
    }
    Some(x)
}

/// Exact extrapolation weights: the first row of the inverse of the
/// Vandermonde matrix `V^{ij} = 2^{-(i-1)(j-1)}`, i.e. the solution of
/// `V β = e_1`.
pub fn vandermonde_weights_exact(k: usize) -> Vec<Q> {
    let n = k + 1;
    let mut mat = vec![vec![Q::zero(); n]; n];
    for (i, row) in mat.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = q_half_pow((i * j) as u32);
        }
    }
    let mut rhs = vec![Q::zero(); n];
    rhs[0] = Q::one();
    solve_exact(mat, rhs).expect("dyadic Vandermonde is nonsingular")
}

/// The Taylor-expansion coefficient `A_{p,j} = (-1)^{p-j} / ((j+1)!(p-j+1)!)`.
pub fn a_coeff_exact(p: usize, j: usize) -> Q {
    assert!(j <= p, "A_{{p,j}} needs j <= p");
    let sign = if (p - j) % 2 == 0 { 1 } else { -1 };
    q_int(sign) / (q_factorial(j as u64 + 1) * q_factorial((p - j) as u64 + 1))
}

/// Polynomial in one variable with exact rational coefficients,
/// `c[k]` the coefficient of `x^k`. Equality ignores trailing zeros.
#[derive(Debug, Clone)]
pub struct Poly(pub Vec<Q>);

impl PartialEq for Poly {
    fn eq(&self, other: &Self) -> bool {
        let n = self.0.len().max(other.0.len());
        (0..n).all(|k| self.coeff(k) == other.coeff(k))
    }
}

impl Poly {
    pub fn zero() -> Self {
        Poly(Vec::new())
    }

    pub fn monomial(degree: usize) -> Self {
        let mut c = vec![Q::zero(); degree + 1];
        c[degree] = Q::one();
        Poly(c)
    }

    pub fn coeff(&self, k: usize) -> Q {
        self.0.get(k).cloned().unwrap_or_else(Q::zero)
    }

    pub fn derivative(&self) -> Self {
        if self.0.len() <= 1 {
            return Poly::zero();
        }
        Poly(
            self.0[1..]
                .iter()
                .enumerate()
                .map(|(k, c)| c * q_int(k as i64 + 1))
                .collect(),
        )
    }

    pub fn derivative_n(&self, n: usize) -> Self {
        let mut p = self.clone();
        for _ in 0..n {
            p = p.derivative();
        }
        p
    }

    pub fn scaled(&self, s: &Q) -> Self {
        Poly(self.0.iter().map(|c| c * s).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.0.len().max(other.0.len());
        Poly((0..n).map(|k| self.coeff(k) + other.coeff(k)).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|c| c.is_zero())
    }
}

/// Polynomial in `(x, h)`: `c[i][j]` is the coefficient of `x^i h^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiPoly {
    pub c: Vec<Vec<Q>>,
}

impl BiPoly {
    fn zero(x_deg: usize, h_deg: usize) -> Self {
        BiPoly {
            c: vec![vec![Q::zero(); h_deg + 1]; x_deg + 1],
        }
    }

    fn coeff(&self, i: usize, j: usize) -> Q {
        self.c
            .get(i)
            .and_then(|row| row.get(j))
            .cloned()
            .unwrap_or_else(Q::zero)
    }

    /// `x^q` with `x` replaced by `x + s·h`, expanded binomially.
    fn shifted_monomial(q: usize, s: i64) -> Self {
        let mut out = BiPoly::zero(q, q);
        let mut binom = Q::one();
        for m in 0..=q {
            // binom = C(q, m)
            let s_pow = if m == 0 {
                Q::one()
            } else {
                let mut acc = Q::one();
                for _ in 0..m {
                    acc *= q_int(s);
                }
                acc
            };
            out.c[q - m][m] = &binom * s_pow;
            binom = binom * q_int((q - m) as i64) / q_int(m as i64 + 1);
        }
        out
    }

    fn sub(&self, other: &Self) -> Self {
        let xi = self.c.len().max(other.c.len());
        let hj = self
            .c
            .iter()
            .chain(other.c.iter())
            .map(|r| r.len())
            .max()
            .unwrap_or(0);
        let mut out = BiPoly::zero(xi.saturating_sub(1), hj.saturating_sub(1));
        for i in 0..xi {
            for j in 0..hj {
                out.c[i][j] = self.coeff(i, j) - other.coeff(i, j);
            }
        }
        out
    }

    /// Divides by `h^power`; panics if a lower-order `h` coefficient is
    /// nonzero (the difference quotients of polynomials divide exactly).
    fn div_h(&self, power: usize) -> Self {
        for row in &self.c {
            for (j, v) in row.iter().enumerate() {
                if j < power {
                    assert!(v.is_zero(), "inexact division by h^{power}");
                }
            }
        }
        BiPoly {
            c: self
                .c
                .iter()
                .map(|row| row.iter().skip(power).cloned().collect())
                .collect(),
        }
    }

    /// The coefficient of `h^p` as a polynomial in `x`.
    pub fn h_coefficient(&self, p: usize) -> Poly {
        Poly(
            self.c
                .iter()
                .map(|row| row.get(p).cloned().unwrap_or_else(Q::zero))
                .collect(),
        )
    }
}

/// Exact expansion of `δ_{h,λ} x^q = (x + hλ)^q − x^q) / h` in `(x, h)`.
pub fn single_difference_expansion(q: usize, lambda: i64) -> BiPoly {
    let shifted = BiPoly::shifted_monomial(q, lambda);
    let plain = BiPoly::shifted_monomial(q, 0);
    shifted.sub(&plain).div_h(1)
}

/// Exact expansion of `δ_{h,λ} δ_{−h,μ} x^q` in `(x, h)`:
/// `[ψ(x+hλ) − ψ(x+hλ−hμ) − ψ(x) + ψ(x−hμ)] / h²`.
pub fn double_difference_expansion(q: usize, lambda: i64, mu: i64) -> BiPoly {
    let a = BiPoly::shifted_monomial(q, lambda);
    let b = BiPoly::shifted_monomial(q, lambda - mu);
    let c = BiPoly::shifted_monomial(q, 0);
    let d = BiPoly::shifted_monomial(q, -mu);
    a.sub(&b).sub(&c).sub(&d.scaled_neg()).div_h(2)
}

impl BiPoly {
    fn scaled_neg(&self) -> Self {
        BiPoly {
            c: self
                .c
                .iter()
                .map(|row| row.iter().map(|v| -v.clone()).collect())
                .collect(),
        }
    }
}

/// `Σ_j A_{p,j} λ^{j+1} μ^{p−j+1} (d/dx)^{p+2} x^q`, the claimed `h^p`
/// coefficient of the double difference in one dimension.
pub fn double_difference_claimed_coefficient(q: usize, lambda: i64, mu: i64, p: usize) -> Poly {
    let base = Poly::monomial(q).derivative_n(p + 2);
    let mut acc = Poly::zero();
    for j in 0..=p {
        let mut weight = a_coeff_exact(p, j);
        for _ in 0..(j + 1) {
            weight *= q_int(lambda);
        }
        for _ in 0..(p - j + 1) {
            weight *= q_int(mu);
        }
        acc = acc.add(&base.scaled(&weight));
    }
    acc
}

/// `λ^{p+1} / (p+1)! · (d/dx)^{p+1} x^q`, the claimed `h^p` coefficient of
/// the single difference.
pub fn single_difference_claimed_coefficient(q: usize, lambda: i64, p: usize) -> Poly {
    let base = Poly::monomial(q).derivative_n(p + 1);
    let mut weight = Q::one() / q_factorial(p as u64 + 1);
    for _ in 0..(p + 1) {
        weight *= q_int(lambda);
    }
    base.scaled(&weight)
}

pub fn q_to_f64(q: &Q) -> f64 {
    let nf = q.numer().to_string().parse::<f64>().unwrap_or(f64::NAN);
    let df = q.denom().to_string().parse::<f64>().unwrap_or(f64::NAN);
    nf / df
}
