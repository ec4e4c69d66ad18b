//! Structured covariance algebra for the TOR observation vector.
//!
//! The observation covariance is `sigma_r^2 I + sigma_a^2 11^T`. Its inverse
//! is applied in O(N) through the rank-one downdate
//! `inv(Omega) v = (v - c (1^T v) 1) / sigma_r^2`, `c = sigma_a^2 / (sigma_r^2 + N sigma_a^2)`.
//! [`DenseSymMatrix`] and [`generic_spd_inverse`] exist to cross-check the fast path.

use crate::error::{Error, Result};
use crate::model::NoiseModel;

/// Implicit equicorrelated covariance `sigma_r^2 I + sigma_a^2 11^T` of dimension `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovX {
    sigma_a2: f64,
    sigma_r2: f64,
    n: usize,
}

impl CovX {
    pub fn new(sigma_a2: f64, sigma_r2: f64, n: usize) -> Result<Self> {
        if !(sigma_a2.is_finite() && sigma_a2 >= 0.0) || !sigma_r2.is_finite() || sigma_r2 < 0.0 {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: format!("variances must be finite and >= 0 (sigma_a^2 = {sigma_a2}, sigma_r^2 = {sigma_r2})"),
            });
        }
        if sigma_r2 == 0.0 {
            return Err(Error::SingularCovariance);
        }
        if n == 0 {
            return Err(Error::DimensionMismatch { expected: 1, actual: 0 });
        }
        Ok(Self { sigma_a2, sigma_r2, n })
    }

    /// Covariance assumed by the estimators: `sigma_r^2` rather than `alpha^2 sigma_r^2`.
    pub fn from_noise(noise: &NoiseModel, n: usize) -> Result<Self> {
        Self::new(noise.sigma_a2(), noise.sigma_r2(), n)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma_a2(&self) -> f64 {
        self.sigma_a2
    }

    pub fn sigma_r2(&self) -> f64 {
        self.sigma_r2
    }

    /// Entry `(m, k)`.
    pub fn entry(&self, m: usize, k: usize) -> f64 {
        if m == k {
            self.sigma_a2 + self.sigma_r2
        } else {
            self.sigma_a2
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: len,
            });
        }
        Ok(())
    }

    /// `Omega v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v.len())?;
        let shared = self.sigma_a2 * v.iter().sum::<f64>();
        Ok(v.iter().map(|x| self.sigma_r2 * x + shared).collect())
    }

    /// `inv(Omega) v` via the rank-one downdate.
    ///
    /// Evaluated as `(v_i + rho (N v_i - 1'v)) / (sigma_r^2 + N sigma_a^2)` with
    /// `rho = sigma_a^2 / sigma_r^2`. Subtracting `c 1'v` directly loses most
    /// digits once `sigma_a >> sigma_r`, because `c` then approaches `1/N`.
    pub fn inv_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v.len())?;
        let n = self.n as f64;
        let rho = self.sigma_a2 / self.sigma_r2;
        let denom = self.sigma_r2 + n * self.sigma_a2;
        let total: f64 = v.iter().sum();
        Ok(v.iter().map(|x| (x + rho * (n * x - total)) / denom).collect())
    }

    /// Materializes the matrix. Only meant for cross-checks.
    pub fn to_dense(&self) -> DenseSymMatrix {
        DenseSymMatrix::from_fn(self.n, |m, k| self.entry(m, k))
    }
}

/// `inv(Omega) v`; free-function form of [`CovX::inv_apply`].
pub fn covx_inv_apply(cov: &CovX, v: &[f64]) -> Result<Vec<f64>> {
    cov.inv_apply(v)
}

/// The five quadratic forms of the TOR likelihood:
/// `B = 1'W1`, `C = 1'WX`, `D = 1'W delta`, `E = delta'WX`, `F = delta'W delta`
/// with `W = inv(Omega)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadForms {
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl QuadForms {
    /// `BF - D^2`, the determinant driving both bounds.
    pub fn information_det(&self) -> f64 {
        self.b * self.f - self.d * self.d
    }
}

/// Observation-independent half of the quadratic forms. Precomputing it lets
/// Monte Carlo trials reuse `inv(Omega) 1` and `inv(Omega) delta`.
///
/// `BF - D^2` is kept in its factored form
/// `N sum((delta - mean)^2) / (sigma_r^2 (sigma_r^2 + N sigma_a^2))`, which
/// avoids the cancellation of the direct difference.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayWeights {
    cov: CovX,
    w_ones: Vec<f64>,
    w_delta: Vec<f64>,
    drift_gain: Vec<f64>,
    b: f64,
    d: f64,
    f: f64,
    spread: f64,
    det: f64,
}

impl DelayWeights {
    pub fn new(cov: &CovX, delta: &[f64]) -> Result<Self> {
        let n = cov.n() as f64;
        let mean = delta.iter().sum::<f64>() / n;
        let centered: Vec<f64> = delta.iter().map(|x| x - mean).collect();
        let w_ones = cov.inv_apply(&vec![1.0; cov.n()])?;
        // inv(Omega) delta by linearity, so the downdate sees a vector with 1'v ~ 0
        let w_delta: Vec<f64> = cov
            .inv_apply(&centered)?
            .iter()
            .zip(&w_ones)
            .map(|(wc, w1)| wc + mean * w1)
            .collect();
        let b: f64 = w_ones.iter().sum();
        let d = mean * b;
        let f = dot(delta, &w_delta);
        let spread: f64 = centered.iter().map(|x| x * x).sum();
        let det = n * spread / (cov.sigma_r2() * (cov.sigma_r2() + n * cov.sigma_a2()));
        // (B inv(Omega) delta - D inv(Omega) 1) / (BF - D^2) reduces to the
        // centered delays over their spread for this covariance
        let drift_gain = centered.iter().map(|x| x / spread).collect();
        Ok(Self {
            cov: *cov,
            w_ones,
            w_delta,
            drift_gain,
            b,
            d,
            f,
            spread,
            det,
        })
    }

    pub fn cov(&self) -> &CovX {
        &self.cov
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn f(&self) -> f64 {
        self.f
    }

    /// `sum((delta_n - mean(delta))^2)`, i.e. `N Var_pop(delta)`.
    pub fn spread(&self) -> f64 {
        self.spread
    }

    /// `BF - D^2`.
    pub fn information_det(&self) -> f64 {
        self.det
    }

    /// `inv(Omega) 1`.
    pub fn w_ones(&self) -> &[f64] {
        &self.w_ones
    }

    /// Linear drift estimator `g` with `alpha2 = g' X`. `g' 1 = 0`.
    pub fn drift_gain(&self) -> &[f64] {
        &self.drift_gain
    }

    pub fn forms(&self, x: &[f64]) -> Result<QuadForms> {
        if x.len() != self.w_ones.len() {
            return Err(Error::DimensionMismatch {
                expected: self.w_ones.len(),
                actual: x.len(),
            });
        }
        Ok(QuadForms {
            b: self.b,
            c: dot(&self.w_ones, x),
            d: self.d,
            e: dot(&self.w_delta, x),
            f: self.f,
        })
    }
}

/// Computes `(B, C, D, E, F)` for the given covariance, delays and observation.
pub fn quad_forms(cov: &CovX, delta: &[f64], x: &[f64]) -> Result<QuadForms> {
    DelayWeights::new(cov, delta)?.forms(x)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense symmetric matrix, row-major. Symmetry is maintained by [`DenseSymMatrix::set`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSymMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DenseSymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// Builds from the lower triangle of `f`; the upper triangle mirrors it.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.entries[i * self.n + j] = value;
        self.entries[j * self.n + i] = value;
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n, "vector length must match matrix dimension");
        self.entries.chunks_exact(self.n).map(|row| dot(row, v)).collect()
    }

    /// `u' M v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        dot(u, &self.mul_vec(v))
    }

    /// Plain (not necessarily symmetric) product, returned as row-major entries.
    pub fn matmul(&self, other: &Self) -> Vec<f64> {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                for j in 0..n {
                    out[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }
}

/// Inverts a symmetric positive-definite matrix through its Cholesky factor.
///
/// Fails with [`Error::NotPositiveDefinite`] on the first non-positive pivot.
pub fn generic_spd_inverse(m: &DenseSymMatrix) -> Result<DenseSymMatrix> {
    let n = m.n();
    // lower-triangular factor L with M = L L^T
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut pivot = m.get(j, j);
        for k in 0..j {
            pivot -= l[j * n + k] * l[j * n + k];
        }
        if !(pivot > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: pivot });
        }
        let ljj = pivot.sqrt();
        l[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / ljj;
        }
    }

    // inv(L) by forward substitution, column by column
    let mut linv = vec![0.0; n * n];
    for col in 0..n {
        linv[col * n + col] = 1.0 / l[col * n + col];
        for i in col + 1..n {
            let mut s = 0.0;
            for k in col..i {
                s -= l[i * n + k] * linv[k * n + col];
            }
            linv[i * n + col] = s / l[i * n + i];
        }
    }

    // inv(M) = inv(L)^T inv(L)
    Ok(DenseSymMatrix::from_fn(n, |i, j| {
        (i.max(j)..n).map(|k| linv[k * n + i] * linv[k * n + j]).sum()
    }))
}

/// Covariance of the pairwise drift ratios `(t_{n+1} - t_1) / d_n`, where
/// `d_n = delta_{n+1} - delta_1`: `sigma_r^2 (u u^T + diag(u^2))`, `u_n = 1 / d_n`.
pub fn alpha1_cov(d: &[f64], sigma_r: f64) -> Result<DenseSymMatrix> {
    check_offsets(d)?;
    let s2 = sigma_r * sigma_r;
    Ok(DenseSymMatrix::from_fn(d.len(), |m, k| {
        if m == k {
            2.0 * s2 / (d[m] * d[m])
        } else {
            s2 / (d[m] * d[k])
        }
    }))
}

/// Closed-form weights `a = inv(Omega_alpha) 1` and `A = 1' inv(Omega_alpha) 1`
/// for the drift ratios, via Sherman-Morrison on `I + 11^T`:
/// `a_n = d_n (d_n - sum(d) / N) / sigma_r^2` with `N = len(d) + 1`.
pub fn alpha1_weights(d: &[f64], sigma_r: f64) -> Result<(Vec<f64>, f64)> {
    check_offsets(d)?;
    let s2 = sigma_r * sigma_r;
    if !(s2 > 0.0) {
        return Err(Error::SingularCovariance);
    }
    let n = (d.len() + 1) as f64;
    let mean = d.iter().sum::<f64>() / n;
    let a: Vec<f64> = d.iter().map(|dn| dn * (dn - mean) / s2).collect();
    let total = a.iter().sum();
    Ok((a, total))
}

fn check_offsets(d: &[f64]) -> Result<()> {
    if d.is_empty() {
        return Err(Error::DimensionMismatch { expected: 1, actual: 0 });
    }
    match d.iter().position(|x| *x == 0.0) {
        Some(i) => Err(Error::RepeatedDelay { index: i + 1 }),
        None => Ok(()),
    }
}

/// Offsets `d_n = delta_{n+1} - delta_1`, `n = 1..N-1`.
pub fn delay_offsets(delta: &[f64]) -> Vec<f64> {
    delta.iter().skip(1).map(|x| x - delta[0]).collect()
}

/// Population variance (divisor `N`).
pub fn population_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}
