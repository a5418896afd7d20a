//! Heteroscedastic GP regression over node-aggregated substrate density.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Squared-exponential kernel hyperparameters and constant prior mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpParams<T> {
    pub signal_var: T,
    pub lengthscale: T,
    pub prior_mean: T,
}

impl<T: Scalar> Default for GpParams<T> {
    fn default() -> Self {
        Self { signal_var: lit(0.25), lengthscale: lit(5.0), prior_mean: lit(0.5) }
    }
}

impl<T: Scalar> GpParams<T> {
    #[inline]
    pub fn kernel(&self, a: [T; 2], b: [T; 2]) -> T {
        let dx = a[0] - b[0];
        let dy = a[1] - b[1];
        let r2 = dx * dx + dy * dy;
        self.signal_var * (-(r2) / (lit::<T>(2.0) * self.lengthscale * self.lengthscale)).exp()
    }
}

/// Training point: location, mean density ρ̄ and its per-point noise variance ν̄².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpDatum<T> {
    pub p: [T; 2],
    pub rho: T,
    pub nu2: T,
}

#[derive(Debug, Clone)]
pub struct GpModel<T> {
    pub params: GpParams<T>,
    inputs: Vec<[T; 2]>,
    /// Row-major lower Cholesky factor of `K + R + jitter·I`.
    chol: Vec<T>,
    /// `(K + R)⁻¹ (ρ̄ − m)`.
    alpha: Vec<T>,
    pub jitter: T,
}

const JITTER_STEPS: [f64; 6] = [1e-10, 1e-8, 1e-6, 1e-4, 1e-3, 1e-2];

/// Dot product with four independent partial sums.
#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] = acc[0] + a[k] * b[k];
        acc[1] = acc[1] + a[k + 1] * b[k + 1];
        acc[2] = acc[2] + a[k + 2] * b[k + 2];
        acc[3] = acc[3] + a[k + 3] * b[k + 3];
    }
    let mut tail = T::zero();
    for k in 4 * chunks..n {
        tail = tail + a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn cholesky<T: Scalar>(a: &[T], n: usize) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for j in 0..n {
        let row = &l[j * n..j * n + j];
        let d = a[j * n + j] - dot(row, row);
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in (j + 1)..n {
            let s = a[i * n + j] - dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
            l[i * n + j] = s / djj;
        }
    }
    Some(l)
}

fn forward_solve<T: Scalar>(l: &[T], n: usize, b: &mut [T]) {
    for i in 0..n {
        let s = b[i] - dot(&l[i * n..i * n + i], &b[..i]);
        b[i] = s / l[i * n + i];
    }
}

fn backward_solve<T: Scalar>(l: &[T], n: usize, b: &mut [T]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s = s - l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Factorizes `K + diag(ν̄²)`, escalating a diagonal jitter until the factorization succeeds.
pub fn gp_fit<T: Scalar>(data: &[GpDatum<T>], params: GpParams<T>) -> Result<GpModel<T>> {
    if !(params.signal_var > T::zero() && params.lengthscale > T::zero()) {
        return Err(Error::Gp("signal variance and lengthscale must be positive".into()));
    }
    if let Some(d) = data.iter().find(|d| !(d.nu2 >= T::zero()) || !d.rho.is_finite()) {
        return Err(Error::Gp(format!("invalid training point: rho {} nu2 {}", d.rho, d.nu2)));
    }
    let n = data.len();
    let inputs: Vec<[T; 2]> = data.iter().map(|d| d.p).collect();
    if n == 0 {
        return Ok(GpModel { params, inputs, chol: Vec::new(), alpha: Vec::new(), jitter: T::zero() });
    }
    let mut k = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = params.kernel(inputs[i], inputs[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
        k[i * n + i] = k[i * n + i] + data[i].nu2;
    }
    for step in JITTER_STEPS {
        let jitter = params.signal_var * lit(step);
        let mut a = k.clone();
        for i in 0..n {
            a[i * n + i] = a[i * n + i] + jitter;
        }
        if let Some(chol) = cholesky(&a, n) {
            let mut alpha: Vec<T> = data.iter().map(|d| d.rho - params.prior_mean).collect();
            forward_solve(&chol, n, &mut alpha);
            backward_solve(&chol, n, &mut alpha);
            return Ok(GpModel { params, inputs, chol, alpha, jitter });
        }
    }
    Err(Error::Gp(format!("K + R not positive definite for {n} points after jitter escalation")))
}

impl<T: Scalar> GpModel<T> {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Posterior mean and variance (variance clamped at zero).
    pub fn predict(&self, q: [T; 2]) -> (T, T) {
        let n = self.inputs.len();
        let prior = self.params.signal_var;
        if n == 0 {
            return (self.params.prior_mean, prior);
        }
        let mut v: Vec<T> = self.inputs.iter().map(|&x| self.params.kernel(q, x)).collect();
        let mu = self.params.prior_mean + dot(&v, &self.alpha);
        forward_solve(&self.chol, n, &mut v);
        let var = prior - dot(&v, &v);
        (mu, var.max(T::zero()))
    }

    pub fn predict_batch(&self, queries: &[[T; 2]]) -> Vec<(T, T)> {
        queries.iter().map(|&q| self.predict(q)).collect()
    }
}

/// Free-function form of [`GpModel::predict`].
pub fn gp_predict<T: Scalar>(model: &GpModel<T>, query: [T; 2]) -> (T, T) {
    model.predict(query)
}
