//! Forecast and measurement models.
//!
//! Continuous-time models expose only their deterministic drift; model noise
//! is injected by the integrator (see [`crate::integrators`]). Discrete-time
//! models implement [`Propagator`] directly.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A continuous-time forecast model `dx = f(x, t) dt + σ dW`.
pub trait DynModel: Send + Sync {
    fn state_dim(&self) -> usize;

    /// Per-component white-noise intensity σ.
    fn noise_intensity(&self) -> f64 {
        0.0
    }

    /// Writes `f(x, t)` into `out`.
    fn drift(&self, x: &[f64], t: f64, out: &mut [f64]);
}

/// Anything that can carry one member from `t0` to `t1`.
pub trait Propagator: Send + Sync {
    fn state_dim(&self) -> usize;

    fn propagate(&self, x: &mut [f64], t0: f64, t1: f64, rng: &mut dyn RngCore) -> Result<()>;
}

/// A measurement model `y = h(x) + v`.
pub trait MeasModel: Send + Sync {
    fn obs_dim(&self) -> usize;

    /// Noiseless observation `h(x)`.
    fn h(&self, x: &[f64], out: &mut [f64]);

    /// Adds one measurement-noise draw to `y`.
    fn add_noise(&self, y: &mut [f64], rng: &mut dyn RngCore);

    /// Log-likelihood of `y_star` given state `x`, up to a constant shared
    /// by all states.
    fn log_likelihood(&self, x: &[f64], y_star: &[f64]) -> Result<f64>;

    fn observe(&self, x: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
        self.h(x, out);
        self.add_noise(out, rng);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lorenz63Params {
    pub alpha: f64,
    pub rho: f64,
    pub beta: f64,
    /// Model-noise standard deviation.
    pub sigma: f64,
}

impl Default for Lorenz63Params {
    fn default() -> Self {
        Lorenz63Params {
            alpha: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
            sigma: 0.01,
        }
    }
}

/// `(α(x₂−x₁), x₁(ρ−x₃)−x₂, x₁x₂−βx₃)`.
pub fn l63_drift(x: &[f64; 3], p: &Lorenz63Params) -> [f64; 3] {
    [
        p.alpha * (x[1] - x[0]),
        x[0] * (p.rho - x[2]) - x[1],
        x[0] * x[1] - p.beta * x[2],
    ]
}

/// The stochastic Lorenz-63 system.
#[derive(Debug, Clone)]
pub struct Lorenz63 {
    params: Lorenz63Params,
}

impl Lorenz63 {
    pub fn new(params: Lorenz63Params) -> Result<Self> {
        if !(params.beta > 0.0) {
            return Err(Error::param("beta", "must be positive"));
        }
        if !(params.sigma >= 0.0) {
            return Err(Error::param("sigma", "must be non-negative"));
        }
        Ok(Lorenz63 { params })
    }

    pub fn params(&self) -> &Lorenz63Params {
        &self.params
    }
}

impl DynModel for Lorenz63 {
    fn state_dim(&self) -> usize {
        3
    }

    fn noise_intensity(&self) -> f64 {
        self.params.sigma
    }

    fn drift(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        let f = l63_drift(&[x[0], x[1], x[2]], &self.params);
        out.copy_from_slice(&f);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lorenz96Params {
    pub dim: usize,
    pub forcing: f64,
    pub sigma: f64,
    /// Include the linear `−x_j` term of the canonical model.
    pub include_damping: bool,
}

impl Default for Lorenz96Params {
    fn default() -> Self {
        Lorenz96Params {
            dim: 36,
            forcing: 8.0,
            sigma: 0.01,
            include_damping: true,
        }
    }
}

/// `dx_j/dt = −x_{j−2}x_{j−1} + x_{j−1}x_{j+1} − x_j + F` with cyclic indices.
pub fn l96_drift(x: &[f64], p: &Lorenz96Params, out: &mut [f64]) {
    let n = x.len();
    let damping = if p.include_damping { 1.0 } else { 0.0 };
    for j in 0..n {
        let jm2 = (j + n - 2) % n;
        let jm1 = (j + n - 1) % n;
        let jp1 = (j + 1) % n;
        out[j] = (x[jp1] - x[jm2]) * x[jm1] - damping * x[j] + p.forcing;
    }
}

#[derive(Debug, Clone)]
pub struct Lorenz96 {
    params: Lorenz96Params,
}

impl Lorenz96 {
    pub fn new(params: Lorenz96Params) -> Result<Self> {
        if params.dim < 4 {
            return Err(Error::param("dim", "Lorenz-96 needs at least 4 components"));
        }
        if !(params.sigma >= 0.0) {
            return Err(Error::param("sigma", "must be non-negative"));
        }
        Ok(Lorenz96 { params })
    }

    pub fn params(&self) -> &Lorenz96Params {
        &self.params
    }
}

impl DynModel for Lorenz96 {
    fn state_dim(&self) -> usize {
        self.params.dim
    }

    fn noise_intensity(&self) -> f64 {
        self.params.sigma
    }

    fn drift(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        l96_drift(x, &self.params, out);
    }
}

/// Direct observation of selected components with i.i.d. `N(0, τ²)` noise.
#[derive(Debug, Clone)]
pub struct SelectObservation {
    indices: Vec<usize>,
    tau: f64,
}

impl SelectObservation {
    pub fn new(indices: Vec<usize>, tau: f64) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::param("indices", "at least one component must be observed"));
        }
        if !(tau >= 0.0) {
            return Err(Error::param("tau", "must be non-negative"));
        }
        Ok(SelectObservation { indices, tau })
    }

    /// Components 1, 3, …, N−1 (1-based), i.e. even 0-based indices.
    pub fn odd_components(dim: usize, tau: f64) -> Result<Self> {
        SelectObservation::new((0..dim).step_by(2).collect(), tau)
    }

    /// The second state component, `x₂`.
    pub fn second_component(tau: f64) -> Result<Self> {
        SelectObservation::new(vec![1], tau)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

impl MeasModel for SelectObservation {
    fn obs_dim(&self) -> usize {
        self.indices.len()
    }

    fn h(&self, x: &[f64], out: &mut [f64]) {
        for (o, &i) in out.iter_mut().zip(&self.indices) {
            *o = x[i];
        }
    }

    fn add_noise(&self, y: &mut [f64], rng: &mut dyn RngCore) {
        if self.tau > 0.0 {
            for v in y.iter_mut() {
                *v += self.tau * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }

    fn log_likelihood(&self, x: &[f64], y_star: &[f64]) -> Result<f64> {
        if self.tau <= 0.0 {
            return Err(Error::DegenerateLikelihood);
        }
        let ss: f64 = self.indices.iter().zip(y_star).map(|(&i, y)| (x[i] - y).powi(2)).sum();
        Ok(-ss / (2.0 * self.tau * self.tau))
    }
}

/// Symmetric square root factor `S` with `S Sᵀ = P` for a PSD matrix.
fn psd_factor(p: &DMatrix<f64>, name: &'static str) -> Result<DMatrix<f64>> {
    if !p.is_square() {
        return Err(Error::param(name, "must be square"));
    }
    let scale = p.amax().max(1e-300);
    if (p - p.transpose()).amax() > 1e-12 * scale {
        return Err(Error::param(name, "must be symmetric"));
    }
    let eig = p.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
        return Err(Error::param(name, "must be positive semidefinite"));
    }
    let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt))
}

/// `x' = A x + w`, `w ~ N(0, Q)`; one application per propagation call.
#[derive(Debug, Clone)]
pub struct LinearGaussianDynamics {
    a: DMatrix<f64>,
    q: DMatrix<f64>,
    q_factor: DMatrix<f64>,
}

impl LinearGaussianDynamics {
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }
}

impl Propagator for LinearGaussianDynamics {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn propagate(&self, x: &mut [f64], t0: f64, t1: f64, rng: &mut dyn RngCore) -> Result<()> {
        if t1 <= t0 {
            return Ok(());
        }
        let n = self.a.nrows();
        let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let next = &self.a * DVector::from_column_slice(x) + &self.q_factor * z;
        x.copy_from_slice(next.as_slice());
        Ok(())
    }
}

/// `y = H x + v`, `v ~ N(0, R)`.
#[derive(Debug, Clone)]
pub struct LinearObservation {
    h: DMatrix<f64>,
    r: DMatrix<f64>,
    r_factor: DMatrix<f64>,
    r_chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl LinearObservation {
    pub fn new(h: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if r.nrows() != h.nrows() {
            return Err(Error::DimensionMismatch {
                context: "R rows vs H rows",
                expected: h.nrows(),
                got: r.nrows(),
            });
        }
        let r_factor = psd_factor(&r, "R")?;
        let r_chol = r.clone().cholesky();
        Ok(LinearObservation { h, r, r_factor, r_chol })
    }

    pub fn h_matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }
}

impl MeasModel for LinearObservation {
    fn obs_dim(&self) -> usize {
        self.h.nrows()
    }

    fn h(&self, x: &[f64], out: &mut [f64]) {
        let y = &self.h * DVector::from_column_slice(x);
        out.copy_from_slice(y.as_slice());
    }

    fn add_noise(&self, y: &mut [f64], rng: &mut dyn RngCore) {
        let m = y.len();
        let z = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let v = &self.r_factor * z;
        for (yi, vi) in y.iter_mut().zip(v.iter()) {
            *yi += vi;
        }
    }

    fn log_likelihood(&self, x: &[f64], y_star: &[f64]) -> Result<f64> {
        let chol = self.r_chol.as_ref().ok_or(Error::DegenerateLikelihood)?;
        let mut hx = vec![0.0; self.obs_dim()];
        self.h(x, &mut hx);
        let r = DVector::from_iterator(hx.len(), hx.iter().zip(y_star).map(|(a, b)| a - b));
        let s = chol.solve(&r);
        Ok(-0.5 * r.dot(&s))
    }
}

/// Builds the linear-Gaussian pair `x' = A x + w`, `y = H x + v`.
pub fn linear_gaussian_model(
    a: DMatrix<f64>,
    q: DMatrix<f64>,
    h: DMatrix<f64>,
    r: DMatrix<f64>,
) -> Result<(LinearGaussianDynamics, LinearObservation)> {
    if !a.is_square() {
        return Err(Error::param("A", "must be square"));
    }
    if q.nrows() != a.nrows() {
        return Err(Error::DimensionMismatch {
            context: "Q vs A",
            expected: a.nrows(),
            got: q.nrows(),
        });
    }
    if h.ncols() != a.nrows() {
        return Err(Error::DimensionMismatch {
            context: "H columns vs state dimension",
            expected: a.nrows(),
            got: h.ncols(),
        });
    }
    let q_factor = psd_factor(&q, "Q")?;
    let obs = LinearObservation::new(h, r)?;
    Ok((LinearGaussianDynamics { a, q, q_factor }, obs))
}

/// Draws `x ~ N(mean, diag(std²))` into `out`.
pub fn sample_diag_gaussian<R: Rng + ?Sized>(mean: &[f64], std: &[f64], rng: &mut R, out: &mut [f64]) {
    for ((o, m), s) in out.iter_mut().zip(mean).zip(std) {
        *o = m + s * rng.sample::<f64, _>(StandardNormal);
    }
}
