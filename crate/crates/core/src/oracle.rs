//! Quadrature ground truth for low-dimensional problems.
//!
//! Densities live on regular grids and are integrated with the trapezoid
//! rule. [`bayes_posterior`] slices a tabulated joint density at the data;
//! [`enkf_limit_pdf`] and [`tenkf_limit_pdf`] evaluate the large-ensemble
//! limits of the two Kalman-type updates as mixtures of shifted conditionals.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Regular grid `lo, lo + h, …, hi` with `points` nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::param("axis", format!("need finite lo < hi, got [{lo}, {hi}]")));
        }
        if points < 2 {
            return Err(Error::param("axis", "need at least two points"));
        }
        Ok(Axis { lo, hi, points })
    }

    /// `center ± half_width`.
    pub fn centered(center: f64, half_width: f64, points: usize) -> Result<Self> {
        Axis::new(center - half_width, center + half_width, points)
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.value(i)).collect()
    }

    /// Cell index and fractional position of `x`, or `None` outside the axis.
    pub fn locate(&self, x: f64) -> Option<(usize, f64)> {
        if !(x >= self.lo && x <= self.hi) {
            return None;
        }
        let s = (x - self.lo) / self.step();
        let i = (s.floor() as usize).min(self.points - 2);
        Some((i, s - i as f64))
    }

    /// Linear interpolation of nodal `values` at `x`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> Option<f64> {
        self.locate(x).map(|(i, f)| values[i] + f * (values[i + 1] - values[i]))
    }

    fn trapezoid(&self, values: &[f64]) -> f64 {
        let inner: f64 = values.iter().sum::<f64>() - 0.5 * (values[0] + values[values.len() - 1]);
        inner * self.step()
    }
}

/// A 1-D density tabulated at the nodes of an [`Axis`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    axis: Axis,
    values: Vec<f64>,
}

impl DensityGrid {
    /// Tabulates and normalizes.
    pub fn new(axis: Axis, values: Vec<f64>) -> Result<Self> {
        if values.len() != axis.points {
            return Err(Error::DimensionMismatch {
                context: "density grid values",
                expected: axis.points,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::NonFinite {
                context: "density values must be finite and non-negative".into(),
            });
        }
        let mass = axis.trapezoid(&values);
        if !(mass > 0.0) {
            return Err(Error::ZeroMass("density grid"));
        }
        Ok(DensityGrid {
            axis,
            values: values.into_iter().map(|v| v / mass).collect(),
        })
    }

    pub fn from_fn(axis: Axis, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = axis.nodes().into_iter().map(f).collect();
        DensityGrid::new(axis, values)
    }

    pub fn axis(&self) -> &Axis {
        &self.axis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn integral(&self) -> f64 {
        self.axis.trapezoid(&self.values)
    }

    /// Density at `x`; zero off the grid.
    pub fn pdf(&self, x: f64) -> f64 {
        self.axis.interpolate(&self.values, x).unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        let xs = self.axis.nodes();
        let f: Vec<f64> = xs.iter().zip(&self.values).map(|(x, p)| x * p).collect();
        self.axis.trapezoid(&f)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let xs = self.axis.nodes();
        let f: Vec<f64> = xs.iter().zip(&self.values).map(|(x, p)| (x - m).powi(2) * p).collect();
        self.axis.trapezoid(&f)
    }

    /// Cumulative trapezoid rule at the nodes, scaled to end at 1.
    pub fn cdf(&self) -> Vec<f64> {
        let h = self.axis.step();
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.values.len());
        out.push(0.0);
        for w in self.values.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            out.push(acc);
        }
        let total = acc;
        out.iter_mut().for_each(|c| *c /= total);
        out
    }

    /// Mass in `[a, b]`, by linear interpolation of the CDF.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        let c = self.cdf();
        let at = |x: f64| {
            self.axis
                .interpolate(&c, x)
                .unwrap_or(if x < self.axis.lo { 0.0 } else { 1.0 })
        };
        at(b) - at(a)
    }

    /// Inverse-CDF draws.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let c = self.cdf();
        let nodes = self.axis.nodes();
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let k = c.partition_point(|&v| v < u).clamp(1, c.len() - 1);
                let (c0, c1) = (c[k - 1], c[k]);
                let f = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
                nodes[k - 1] + f * (nodes[k] - nodes[k - 1])
            })
            .collect()
    }
}

/// Joint density `p(x, y)` on a product grid, stored with one row per y node.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGrid {
    x: Axis,
    y: Axis,
    /// `values[(iy, ix)]`.
    values: DMatrix<f64>,
}

impl JointGrid {
    pub fn new(x: Axis, y: Axis, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != y.points || values.ncols() != x.points {
            return Err(Error::DimensionMismatch {
                context: "joint grid values",
                expected: y.points * x.points,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::NonFinite {
                context: "joint density values must be finite and non-negative".into(),
            });
        }
        let mut g = JointGrid { x, y, values };
        let mass = g.mass();
        if !(mass > 0.0) {
            return Err(Error::ZeroMass("joint grid"));
        }
        g.values /= mass;
        Ok(g)
    }

    pub fn from_fn(x: Axis, y: Axis, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let xs = x.nodes();
        let ys = y.nodes();
        let values = DMatrix::from_fn(y.points, x.points, |iy, ix| f(xs[ix], ys[iy]));
        JointGrid::new(x, y, values)
    }

    fn mass(&self) -> f64 {
        let rows: Vec<f64> = self.row_masses();
        self.y.trapezoid(&rows)
    }

    fn row(&self, iy: usize) -> Vec<f64> {
        self.values.row(iy).iter().copied().collect()
    }

    fn row_masses(&self) -> Vec<f64> {
        (0..self.y.points).map(|iy| self.x.trapezoid(&self.row(iy))).collect()
    }

    pub fn x_axis(&self) -> &Axis {
        &self.x
    }

    pub fn y_axis(&self) -> &Axis {
        &self.y
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn marginal_x(&self) -> Result<DensityGrid> {
        let v = (0..self.x.points)
            .map(|ix| {
                let col: Vec<f64> = self.values.column(ix).iter().copied().collect();
                self.y.trapezoid(&col)
            })
            .collect();
        DensityGrid::new(self.x, v)
    }

    pub fn marginal_y(&self) -> Result<DensityGrid> {
        DensityGrid::new(self.y, self.row_masses())
    }

    /// Unnormalized slice `p(·, y)`, linear in y between rows.
    pub fn slice(&self, y: f64) -> Option<Vec<f64>> {
        let (i, f) = self.y.locate(y)?;
        Some(
            self.values
                .row(i)
                .iter()
                .zip(self.values.row(i + 1).iter())
                .map(|(a, b)| a + f * (b - a))
                .collect(),
        )
    }
}

/// `p(x | y*)`: the joint sliced at `y*` and renormalized.
pub fn bayes_posterior(joint: &JointGrid, y_star: f64) -> Result<DensityGrid> {
    let slice = joint
        .slice(y_star)
        .ok_or_else(|| Error::param("y_star", format!("{y_star} is outside the y axis")))?;
    DensityGrid::new(joint.x, slice).map_err(|e| match e {
        Error::ZeroMass(_) => Error::ZeroMass("posterior slice"),
        other => other,
    })
}

/// `∫ w(y) p(x̃ − K(y* − y), y) dy` over y quadrature nodes with weights.
fn shifted_mixture(joint: &JointGrid, gain: f64, y_star: f64, nodes: &[(f64, f64)]) -> Result<DensityGrid> {
    let xs = joint.x.nodes();
    let mut out = vec![0.0; xs.len()];
    for &(y, q) in nodes {
        if q == 0.0 {
            continue;
        }
        let Some(row) = joint.slice(y) else { continue };
        let shift = gain * (y_star - y);
        for (o, &x) in out.iter_mut().zip(&xs) {
            if let Some(v) = joint.x.interpolate(&row, x - shift) {
                *o += q * v;
            }
        }
    }
    DensityGrid::new(joint.x, out)
}

/// Trapezoid nodes and weights on the y axis.
fn y_nodes(axis: &Axis, weight: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    let h = axis.step();
    (0..axis.points)
        .map(|i| {
            let y = axis.value(i);
            let end = if i == 0 || i + 1 == axis.points { 0.5 } else { 1.0 };
            (y, end * h * weight(y))
        })
        .collect()
}

/// Large-ensemble limit of the EnKF update with scalar gain `K`.
pub fn enkf_limit_pdf(joint: &JointGrid, gain: f64, y_star: f64) -> Result<DensityGrid> {
    if !gain.is_finite() {
        return Err(Error::param("gain", "must be finite"));
    }
    shifted_mixture(joint, gain, y_star, &y_nodes(&joint.y, |_| 1.0))
}

/// Large-ensemble limit of the trimmed update with trimming function
/// `exp(−|y − y*| / (λ σ_Y))`, `σ_Y` the standard deviation of the y marginal.
///
/// When the trimming kernel is narrower than a few grid cells the y quadrature
/// is refined around `y*`, interpolating linearly between rows.
pub fn tenkf_limit_pdf(joint: &JointGrid, gain: f64, y_star: f64, lambda: f64) -> Result<DensityGrid> {
    if !(lambda > 0.0) {
        return Err(Error::param("lambda", "must be positive"));
    }
    if !gain.is_finite() {
        return Err(Error::param("gain", "must be finite"));
    }
    let sigma_y = joint.marginal_y()?.variance().sqrt();
    let width = lambda * sigma_y;
    let trim = |y: f64| (-(y - y_star).abs() / width).exp();
    let h = joint.y.step();
    if width >= 4.0 * h {
        return shifted_mixture(joint, gain, y_star, &y_nodes(&joint.y, trim));
    }

    // Coarse nodes away from y*, a fine uniform patch of ±40 widths around it.
    let half = (40.0 * width).max(2.0 * h);
    let (a, b) = ((y_star - half).max(joint.y.lo), (y_star + half).min(joint.y.hi));
    let fine_step = (width / 8.0).min(h);
    let m = (((b - a) / fine_step).ceil() as usize).max(2);
    let mut pts: Vec<f64> = joint.y.nodes().into_iter().filter(|&y| y < a || y > b).collect();
    pts.extend((0..=m).map(|i| a + (b - a) * i as f64 / m as f64));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut nodes: Vec<(f64, f64)> = pts.iter().map(|&y| (y, 0.0)).collect();
    for (i, w) in pts.windows(2).enumerate() {
        let dy = 0.5 * (w[1] - w[0]);
        nodes[i].1 += dy;
        nodes[i + 1].1 += dy;
    }
    for n in &mut nodes {
        n.1 *= trim(n.0);
    }
    shifted_mixture(joint, gain, y_star, &nodes)
}

/// Mean and covariance of a Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                context: "Gaussian covariance",
                expected: mean.len(),
                got: cov.nrows(),
            });
        }
        Ok(Gaussian { mean, cov })
    }

    pub fn scalar(mean: f64, var: f64) -> Self {
        Gaussian {
            mean: DVector::from_element(1, mean),
            cov: DMatrix::from_element(1, 1, var),
        }
    }
}

/// `N(A m, A P Aᵀ + Q)`.
pub fn kalman_forecast(a: &DMatrix<f64>, q: &DMatrix<f64>, prior: &Gaussian) -> Gaussian {
    Gaussian {
        mean: a * &prior.mean,
        cov: a * &prior.cov * a.transpose() + q,
    }
}

/// Kalman update of `prior` with `y* = H x + v`, `v ~ N(0, R)`.
pub fn kalman_filter_exact(h: &DMatrix<f64>, r: &DMatrix<f64>, prior: &Gaussian, y_star: &[f64]) -> Result<Gaussian> {
    let m = h.nrows();
    if h.ncols() != prior.mean.len() {
        return Err(Error::DimensionMismatch {
            context: "observation operator columns",
            expected: prior.mean.len(),
            got: h.ncols(),
        });
    }
    if y_star.len() != m || r.nrows() != m || r.ncols() != m {
        return Err(Error::DimensionMismatch {
            context: "observation dimension",
            expected: m,
            got: y_star.len(),
        });
    }
    let pht = &prior.cov * h.transpose();
    let s = h * &pht + r;
    let chol = s.clone().cholesky().ok_or(Error::SingularCovariance {
        condition: f64::INFINITY,
    })?;
    // K = P Hᵀ S⁻¹, via S Kᵀ = H P.
    let k = chol.solve(&pht.transpose()).transpose();
    let innov = DVector::from_column_slice(y_star) - h * &prior.mean;
    let mean = &prior.mean + &k * innov;
    let n = prior.mean.len();
    let cov = (DMatrix::identity(n, n) - &k * h) * &prior.cov;
    let cov = 0.5 * (&cov + cov.transpose());
    Ok(Gaussian { mean, cov })
}

/// Silverman's rule `0.9 min(σ̂, IQR/1.34) n^{−1/5}`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let iqr =
        crate::metrics::quantile(samples, 0.75).unwrap_or(0.0) - crate::metrics::quantile(samples, 0.25).unwrap_or(0.0);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Gaussian kernel density estimate on `axis`, using linear binning.
pub fn kde_on_grid(samples: &[f64], axis: Axis) -> Result<DensityGrid> {
    if samples.len() < 2 {
        return Err(Error::TooFewMembers {
            required: 2,
            got: samples.len(),
        });
    }
    let bw = silverman_bandwidth(samples).max(axis.step());
    let mut bins = vec![0.0; axis.points];
    for &s in samples {
        if let Some((i, f)) = axis.locate(s) {
            bins[i] += 1.0 - f;
            bins[i + 1] += f;
        }
    }
    let h = axis.step();
    let reach = ((5.0 * bw / h).ceil() as usize).min(axis.points);
    let kernel: Vec<f64> = (0..=reach)
        .map(|k| (-0.5 * (k as f64 * h / bw).powi(2)).exp())
        .collect();
    let mut out = vec![0.0; axis.points];
    for (i, &b) in bins.iter().enumerate() {
        if b == 0.0 {
            continue;
        }
        let lo = i.saturating_sub(reach);
        let hi = (i + reach).min(axis.points - 1);
        for (j, o) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *o += b * kernel[i.abs_diff(j)];
        }
    }
    DensityGrid::new(axis, out)
}

/// Pushes `prior` through a one-step transition by Monte Carlo and estimates
/// the result on `axis` with a kernel density estimate.
pub fn prior_propagate_grid<F>(
    prior: &DensityGrid,
    transition: F,
    n_mc: usize,
    axis: Axis,
    rng: &mut dyn RngCore,
) -> Result<DensityGrid>
where
    F: Fn(f64, &mut dyn RngCore) -> f64,
{
    if n_mc < 10_000 {
        return Err(Error::param("n_mc", "need at least 10^4 draws"));
    }
    let draws = prior.sample(n_mc, rng);
    let pushed: Vec<f64> = draws.into_iter().map(|x| transition(x, rng)).collect();
    kde_on_grid(&pushed, axis)
}

/// `N(x; m, v)`.
pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// One-dimensional non-Gaussian test problem:
/// `X ~ ½N(−c, v) + ½N(c, v)`, `Y = X + N(0, r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BimodalToy {
    pub center: f64,
    pub mode_var: f64,
    pub noise_var: f64,
    pub y_star: f64,
}

impl Default for BimodalToy {
    fn default() -> Self {
        BimodalToy {
            center: 2.0,
            mode_var: 0.25,
            noise_var: 0.25,
            y_star: 1.5,
        }
    }
}

impl BimodalToy {
    pub fn prior_pdf(&self, x: f64) -> f64 {
        0.5 * (normal_pdf(x, -self.center, self.mode_var) + normal_pdf(x, self.center, self.mode_var))
    }

    pub fn var_x(&self) -> f64 {
        self.mode_var + self.center * self.center
    }

    pub fn var_y(&self) -> f64 {
        self.var_x() + self.noise_var
    }

    /// Population gain `Cov(X, Y) / Var(Y)`.
    pub fn gain(&self) -> f64 {
        self.var_x() / self.var_y()
    }

    /// Joint density on axes spanning ±8 standard deviations.
    pub fn joint(&self, points: usize) -> Result<JointGrid> {
        let x = Axis::centered(0.0, 8.0 * self.var_x().sqrt(), points)?;
        let y = Axis::centered(0.0, 8.0 * self.var_y().sqrt(), points)?;
        JointGrid::from_fn(x, y, |x, y| self.prior_pdf(x) * normal_pdf(y, x, self.noise_var))
    }

    /// `n` draws of `(X, Y)`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let x = sign * self.center + self.mode_var.sqrt() * rng.sample::<f64, _>(StandardNormal);
            xs.push(x);
            ys.push(x + self.noise_var.sqrt() * rng.sample::<f64, _>(StandardNormal));
        }
        (xs, ys)
    }
}
