//! Ensemble containers and the sample statistics shared by every filter.
//!
//! An ensemble is stored as a dense `dim × n` matrix, one column per member.
//! Columns are contiguous in memory, so a member can be handed to an
//! integrator as a plain slice.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

/// Relative jitter added to the diagonal of the observation covariance
/// before it is factorized.
pub const COVARIANCE_JITTER: f64 = 1e-10;

/// Weights below this are treated as exactly zero.
pub const WEIGHT_FLOOR: f64 = 1e-300;

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// `n` state vectors of dimension `N`, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: DMatrix<f64>,
}

impl Ensemble {
    /// Wraps a `dim × n` matrix. Fails if any entry is not finite.
    pub fn new(members: DMatrix<f64>) -> Result<Self> {
        if members.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "ensemble members".into(),
            });
        }
        Ok(Ensemble { members })
    }

    /// Builds an ensemble from a list of member vectors.
    pub fn from_members(members: &[Vec<f64>]) -> Result<Self> {
        let n = members.len();
        let dim = members.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * dim);
        for m in members {
            if m.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "ensemble member",
                    expected: dim,
                    got: m.len(),
                });
            }
            data.extend_from_slice(m);
        }
        Ensemble::new(DMatrix::from_vec(dim, n, data))
    }

    /// A scalar ensemble.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Ensemble::new(DMatrix::from_row_slice(1, values.len(), values))
    }

    pub(crate) fn from_matrix_unchecked(members: DMatrix<f64>) -> Self {
        debug_assert!(members.iter().all(|v| v.is_finite()));
        Ensemble { members }
    }

    pub fn state_dim(&self) -> usize {
        self.members.nrows()
    }

    pub fn len(&self) -> usize {
        self.members.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.members.ncols() == 0
    }

    pub fn members(&self) -> &DMatrix<f64> {
        &self.members
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.members
    }

    pub fn member(&self, i: usize) -> &[f64] {
        let d = self.state_dim();
        &self.members.as_slice()[i * d..(i + 1) * d]
    }

    /// Values of one state component across all members.
    pub fn component(&self, j: usize) -> Vec<f64> {
        self.members.row(j).iter().copied().collect()
    }

    pub fn mean(&self) -> Result<DVector<f64>> {
        sample_mean(&self.members)
    }

    /// Members picked by index; duplicates allowed.
    pub fn select(&self, indices: &[usize]) -> Ensemble {
        Ensemble {
            members: self.members.select_columns(indices),
        }
    }

    /// Appends the members of `other`.
    pub fn concat(&self, other: &Ensemble) -> Result<Ensemble> {
        if other.state_dim() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "ensemble concat",
                expected: self.state_dim(),
                got: other.state_dim(),
            });
        }
        let mut data = Vec::with_capacity(self.members.len() + other.members.len());
        data.extend_from_slice(self.members.as_slice());
        data.extend_from_slice(other.members.as_slice());
        Ok(Ensemble {
            members: DMatrix::from_vec(self.state_dim(), self.len() + other.len(), data),
        })
    }
}

/// States paired with their simulated observations; column `i` of both
/// matrices belongs to member `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointEnsemble {
    states: Ensemble,
    observations: DMatrix<f64>,
}

impl JointEnsemble {
    pub fn new(states: Ensemble, observations: DMatrix<f64>) -> Result<Self> {
        if observations.ncols() != states.len() {
            return Err(Error::DimensionMismatch {
                context: "joint ensemble member count",
                expected: states.len(),
                got: observations.ncols(),
            });
        }
        if observations.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "observed forecast".into(),
            });
        }
        Ok(JointEnsemble { states, observations })
    }

    pub fn states(&self) -> &Ensemble {
        &self.states
    }

    pub fn observations(&self) -> &DMatrix<f64> {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.observations.nrows()
    }

    pub fn into_parts(self) -> (Ensemble, DMatrix<f64>) {
        (self.states, self.observations)
    }

    /// Selects pairs by index, keeping state and observation together.
    pub fn select(&self, indices: &[usize]) -> JointEnsemble {
        JointEnsemble {
            states: self.states.select(indices),
            observations: self.observations.select_columns(indices),
        }
    }

    pub fn concat(&self, other: &JointEnsemble) -> Result<JointEnsemble> {
        if other.obs_dim() != self.obs_dim() {
            return Err(Error::DimensionMismatch {
                context: "joint ensemble concat",
                expected: self.obs_dim(),
                got: other.obs_dim(),
            });
        }
        let states = self.states.concat(&other.states)?;
        let mut data = Vec::with_capacity(self.observations.len() + other.observations.len());
        data.extend_from_slice(self.observations.as_slice());
        data.extend_from_slice(other.observations.as_slice());
        let observations = DMatrix::from_vec(self.obs_dim(), states.len(), data);
        Ok(JointEnsemble { states, observations })
    }
}

/// Normalized, non-negative member weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn uniform(n: usize) -> Self {
        WeightVector(vec![1.0 / n as f64; n])
    }

    /// Normalizes raw non-negative weights.
    pub fn from_unnormalized(mut w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector"));
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidWeights("weights must be finite and non-negative"));
        }
        for v in w.iter_mut() {
            if *v < WEIGHT_FLOOR {
                *v = 0.0;
            }
        }
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidWeights("all weights are zero"));
        }
        w.iter_mut().for_each(|v| *v /= total);
        Ok(WeightVector(w))
    }

    /// Normalizes `exp(log_w)` after subtracting the maximum. Entries equal to
    /// `-inf` get zero weight.
    pub fn from_log_weights(log_w: &[f64]) -> Result<Self> {
        if log_w.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::InvalidWeights("log-weights contain NaN or +inf"));
        }
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::InvalidWeights("all log-weights are -inf"));
        }
        WeightVector::from_unnormalized(log_w.iter().map(|l| (l - max).exp()).collect())
    }

    /// Accepts weights that already sum to one.
    pub fn from_normalized(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidWeights("weights must be finite and non-negative"));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidWeights("weights do not sum to one"));
        }
        Ok(WeightVector(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn effective_size(&self) -> f64 {
        effective_size(self)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.0.iter().filter(|&&w| w > 0.0).map(|&w| w * w.ln()).sum::<f64>()
    }
}

/// Sample Kalman gain, `dim(state) × dim(obs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanGain(DMatrix<f64>);

impl KalmanGain {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Applies `K (y* - y)` to every column of `states`.
    pub fn shift(&self, states: &Ensemble, observations: &DMatrix<f64>, y_star: &[f64]) -> Ensemble {
        let y = DVector::from_column_slice(y_star);
        let mut innovation = -observations.clone();
        for mut col in innovation.column_iter_mut() {
            col += &y;
        }
        Ensemble::from_matrix_unchecked(states.members() + &self.0 * innovation)
    }
}

/// Per-row arithmetic mean of a `dim × n` sample.
pub fn sample_mean(x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x.ncols() == 0 {
        return Err(Error::EmptyEnsemble);
    }
    Ok(x.column_mean())
}

fn centered(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = x.column_mean();
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        col -= &mean;
    }
    c
}

/// Unbiased sample cross-covariance of two aligned samples, `dim(x) × dim(y)`.
pub fn cross_covariance(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.ncols();
    if y.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "cross-covariance member count",
            expected: n,
            got: y.ncols(),
        });
    }
    if n < 2 {
        return Err(Error::TooFewMembers { required: 2, got: n });
    }
    let xc = centered(x);
    let yc = centered(y);
    Ok(xc * yc.transpose() / (n as f64 - 1.0))
}

/// `K = C_xy C_yy⁻¹` from the sample covariances of a joint ensemble.
///
/// `C_yy` gets a diagonal jitter of `COVARIANCE_JITTER · trace / M` and is
/// then Cholesky-factorized; the gain comes from a solve, not an inverse.
pub fn kalman_gain(j: &JointEnsemble) -> Result<KalmanGain> {
    let x = j.states().members();
    let y = j.observations();
    let cxy = cross_covariance(x, y)?;
    let mut cyy = cross_covariance(y, y)?;
    let m = cyy.nrows();
    let jitter = COVARIANCE_JITTER * cyy.trace() / m as f64;
    for i in 0..m {
        cyy[(i, i)] += jitter;
    }
    let condition = condition_estimate(&cyy);
    let chol = cyy.clone().cholesky().ok_or(Error::SingularCovariance { condition })?;
    // K^T = C_yy^{-1} C_xy^T because C_yy is symmetric.
    let kt = chol.solve(&cxy.transpose());
    if kt.iter().any(|v| !v.is_finite()) || !(condition < 1e15) {
        return Err(Error::SingularCovariance { condition });
    }
    Ok(KalmanGain(kt.transpose()))
}

fn condition_estimate(sym: &DMatrix<f64>) -> f64 {
    if sym.nrows() == 1 {
        return if sym[(0, 0)] > 0.0 { 1.0 } else { f64::INFINITY };
    }
    let eig = sym.clone().symmetric_eigenvalues();
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `1 / Σ wᵢ²`.
pub fn effective_size(w: &WeightVector) -> f64 {
    1.0 / w.as_slice().iter().map(|v| v * v).sum::<f64>()
}

/// How resampled indices are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResampleScheme {
    /// Independent categorical draws.
    #[default]
    Multinomial,
    /// One uniform offset, evenly spaced pointers.
    Systematic,
}

/// Draws `n_out` member indices according to `w`.
pub fn resample_indices<R: Rng + ?Sized>(
    w: &WeightVector,
    n_out: usize,
    scheme: ResampleScheme,
    rng: &mut R,
) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(w.len());
    let mut acc = 0.0;
    for &v in w.as_slice() {
        acc += v;
        cdf.push(acc);
    }
    let last_positive = w.as_slice().iter().rposition(|&v| v > 0.0).unwrap_or(0);
    let locate = |u: f64| -> usize {
        let u = u * acc;
        cdf.partition_point(|&c| c <= u).min(last_positive)
    };
    match scheme {
        ResampleScheme::Multinomial => (0..n_out).map(|_| locate(rng.random::<f64>())).collect(),
        ResampleScheme::Systematic => {
            let offset: f64 = rng.random();
            (0..n_out).map(|i| locate((i as f64 + offset) / n_out as f64)).collect()
        }
    }
}

/// Result of a joint resampling: the new ensemble and the source index of
/// each output member.
#[derive(Debug, Clone)]
pub struct Resampled {
    pub ensemble: JointEnsemble,
    pub indices: Vec<usize>,
}

/// Multinomial bootstrap of the joint ensemble, `n` draws with replacement.
pub fn bootstrap_resample<R: Rng + ?Sized>(j: &JointEnsemble, w: &WeightVector, rng: &mut R) -> Result<Resampled> {
    bootstrap_resample_with(j, w, j.len(), ResampleScheme::Multinomial, rng)
}

/// Joint bootstrap with an explicit output size and scheme.
pub fn bootstrap_resample_with<R: Rng + ?Sized>(
    j: &JointEnsemble,
    w: &WeightVector,
    n_out: usize,
    scheme: ResampleScheme,
    rng: &mut R,
) -> Result<Resampled> {
    if w.len() != j.len() {
        return Err(Error::DimensionMismatch {
            context: "resampling weights",
            expected: j.len(),
            got: w.len(),
        });
    }
    let indices = resample_indices(w, n_out, scheme, rng);
    Ok(Resampled {
        ensemble: j.select(&indices),
        indices,
    })
}

/// FNV-1a digest of an index sequence, for run diagnostics.
pub fn index_digest(indices: &[usize]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &i in indices {
        for b in (i as u64).to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn scalar(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, v.len(), v)
    }

    #[test]
    fn mean_examples() {
        assert_eq!(sample_mean(&scalar(&[1.0, 3.0])).unwrap()[0], 2.0);
        let zero = Ensemble::from_members(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(zero.mean().unwrap().as_slice(), &[0.0, 0.0]);
        assert_eq!(sample_mean(&scalar(&[1.0, 2.0, 6.0])).unwrap()[0], 3.0);
        assert_eq!(sample_mean(&DMatrix::zeros(2, 0)), Err(Error::EmptyEnsemble));
    }

    #[test]
    fn covariance_examples() {
        let c = cross_covariance(&scalar(&[1.0, 3.0]), &scalar(&[1.0, 3.0])).unwrap();
        assert_abs_diff_eq!(c[(0, 0)], 2.0, epsilon = 1e-14);
        let c = cross_covariance(&scalar(&[1.0, 2.0]), &scalar(&[5.0, 5.0])).unwrap();
        assert_eq!(c[(0, 0)], 0.0);
        let c = cross_covariance(&scalar(&[0.0, 1.0, 2.0]), &scalar(&[0.0, 2.0, 4.0])).unwrap();
        assert_abs_diff_eq!(c[(0, 0)], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn covariance_errors() {
        assert!(matches!(
            cross_covariance(&scalar(&[1.0]), &scalar(&[1.0])),
            Err(Error::TooFewMembers { .. })
        ));
        assert!(matches!(
            cross_covariance(&scalar(&[1.0, 2.0]), &scalar(&[1.0, 2.0, 3.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gain_examples() {
        // C_xy = 1, C_yy = 2: x = {-1, 1}/sqrt(2)... use y = {0, 2}, x = {0, 1}
        // gives C_xy = 1, C_yy = 2.
        let j = JointEnsemble::new(Ensemble::from_scalars(&[0.0, 1.0]).unwrap(), scalar(&[0.0, 2.0])).unwrap();
        assert_abs_diff_eq!(kalman_gain(&j).unwrap().matrix()[(0, 0)], 0.5, epsilon = 1e-9);

        let j = JointEnsemble::new(
            Ensemble::from_scalars(&[0.0, 1.0, 2.0]).unwrap(),
            scalar(&[0.0, 2.0, 4.0]),
        )
        .unwrap();
        assert_abs_diff_eq!(kalman_gain(&j).unwrap().matrix()[(0, 0)], 0.5, epsilon = 1e-9);

        let x = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 0.3, 0.9, -1.4]);
        let j = JointEnsemble::new(Ensemble::new(x.clone()).unwrap(), x).unwrap();
        let k = kalman_gain(&j).unwrap();
        assert!((k.matrix() - DMatrix::identity(2, 2)).amax() < 1e-8);
    }

    #[test]
    fn gain_rejects_degenerate_observations() {
        let j = JointEnsemble::new(Ensemble::from_scalars(&[0.0, 1.0]).unwrap(), scalar(&[3.0, 3.0])).unwrap();
        assert!(matches!(kalman_gain(&j), Err(Error::SingularCovariance { .. })));
    }

    #[test]
    fn effective_size_examples() {
        let w = |v: Vec<f64>| WeightVector::from_normalized(v).unwrap();
        assert_abs_diff_eq!(effective_size(&w(vec![0.5, 0.5])), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(effective_size(&w(vec![1.0, 0.0, 0.0])), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(effective_size(&w(vec![0.5, 0.25, 0.25])), 1.0 / 0.375, epsilon = 1e-12);
    }

    #[test]
    fn weights_clamp_and_normalize() {
        let w = WeightVector::from_unnormalized(vec![2.0, 1e-310, 2.0]).unwrap();
        assert_eq!(w.as_slice(), &[0.5, 0.0, 0.5]);
        assert!(WeightVector::from_unnormalized(vec![0.0, 0.0]).is_err());
        assert!(WeightVector::from_unnormalized(vec![-1.0, 2.0]).is_err());
        let w = WeightVector::from_log_weights(&[-1000.0, -1000.0 - 2f64.ln()]).unwrap();
        assert_abs_diff_eq!(w.as_slice()[0], 2.0 / 3.0, epsilon = 1e-12);
        assert!(WeightVector::from_log_weights(&[f64::NEG_INFINITY; 3]).is_err());
    }

    fn joint_of(xs: &[f64]) -> JointEnsemble {
        let obs: Vec<f64> = xs.iter().map(|v| v * 10.0).collect();
        JointEnsemble::new(Ensemble::from_scalars(xs).unwrap(), scalar(&obs)).unwrap()
    }

    #[test]
    fn point_mass_resample() {
        let j = joint_of(&[1.0, 2.0]);
        let w = WeightVector::from_normalized(vec![1.0, 0.0]).unwrap();
        let r = bootstrap_resample(&j, &w, &mut SeedStream::new(1).rng()).unwrap();
        assert_eq!(r.indices, vec![0, 0]);
        assert_eq!(r.ensemble.states().component(0), vec![1.0, 1.0]);
    }

    #[test]
    fn golden_resample_sequence_seed_42() {
        let j = joint_of(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let w = WeightVector::uniform(8);
        let r = bootstrap_resample(&j, &w, &mut SeedStream::new(42).rng()).unwrap();
        assert_eq!(r.indices, GOLDEN_SEED_42);
    }

    const GOLDEN_SEED_42: [usize; 8] = [4, 6, 5, 3, 4, 1, 7, 7];

    #[test]
    fn multinomial_frequencies() {
        let w = WeightVector::from_normalized(vec![0.7, 0.3]).unwrap();
        let idx = resample_indices(&w, 100_000, ResampleScheme::Multinomial, &mut SeedStream::new(3).rng());
        let freq = idx.iter().filter(|&&i| i == 0).count() as f64 / 1e5;
        assert!((freq - 0.7).abs() < 0.01, "{freq}");
    }

    #[test]
    fn systematic_is_balanced() {
        let w = WeightVector::from_normalized(vec![0.25, 0.25, 0.5]).unwrap();
        let idx = resample_indices(&w, 8, ResampleScheme::Systematic, &mut SeedStream::new(9).rng());
        let counts: Vec<usize> = (0..3).map(|k| idx.iter().filter(|&&i| i == k).count()).collect();
        assert_eq!(counts, vec![2, 2, 4]);
    }

    proptest! {
        #[test]
        fn gain_is_permutation_invariant(
            data in prop::collection::vec(-5.0f64..5.0, 24),
            seed in any::<u64>(),
        ) {
            // 2 states, 2 observations, 6 members.
            let x = DMatrix::from_column_slice(2, 6, &data[..12]);
            let mut y = DMatrix::from_column_slice(2, 6, &data[12..]);
            y += &x * 0.5;
            let j = JointEnsemble::new(Ensemble::new(x).unwrap(), y).unwrap();
            let Ok(k) = kalman_gain(&j) else { return Ok(()); };
            let mut perm: Vec<usize> = (0..6).collect();
            let mut rng = SeedStream::new(seed).rng();
            use rand::seq::SliceRandom;
            perm.shuffle(&mut rng);
            let kp = kalman_gain(&j.select(&perm)).unwrap();
            let scale = k.matrix().amax().max(1.0);
            prop_assert!((k.matrix() - kp.matrix()).amax() < 1e-8 * scale);
        }

        #[test]
        fn resampling_never_splits_pairs(seed in any::<u64>(), raw in prop::collection::vec(0.0f64..1.0, 2..20)) {
            let n = raw.len();
            let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let j = joint_of(&xs);
            let Ok(w) = WeightVector::from_unnormalized(raw) else { return Ok(()); };
            let r = bootstrap_resample(&j, &w, &mut SeedStream::new(seed).rng()).unwrap();
            prop_assert_eq!(r.ensemble.len(), n);
            for (k, &src) in r.indices.iter().enumerate() {
                prop_assert!(w.as_slice()[src] > 0.0);
                prop_assert_eq!(r.ensemble.states().member(k)[0], xs[src]);
                prop_assert_eq!(r.ensemble.observations()[(0, k)], xs[src] * 10.0);
            }
        }

        #[test]
        fn uniform_effective_size_is_n(n in 1usize..5000) {
            let ne = effective_size(&WeightVector::uniform(n));
            prop_assert!((ne - n as f64).abs() <= 1e-9 * n as f64);
        }

        #[test]
        fn auto_covariance_is_psd(data in prop::collection::vec(-10.0f64..10.0, 15)) {
            let x = DMatrix::from_column_slice(3, 5, &data);
            let c = cross_covariance(&x, &x).unwrap();
            prop_assert!((&c - c.transpose()).amax() < 1e-10);
            let min_eig = c.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(min_eig > -1e-10 * c.amax().max(1.0));
        }
    }
}
