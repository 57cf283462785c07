//! The univariate sign-flip score test: flip matrices, score contributions,
//! flipped effective scores, flip-conditional standardization, and the
//! rank-based p-value.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::glm::NullFit;

/// B x n matrix of signs in {-1, +1}. The first row is the identity
/// transformation; all remaining rows are i.i.d. uniform signs drawn from the
/// seed. The single shared randomness source of an analysis.
#[derive(Debug, Clone)]
pub struct FlipMatrix {
    signs: Vec<f64>, // row-major, B x n
    n: usize,
    b: usize,
    seed: u64,
    observation_ids: Vec<u64>,
}

impl FlipMatrix {
    /// Draws a flip matrix over the given observation IDs. Row 1 is the
    /// identity; regeneration with the same seed is bit-identical.
    pub fn generate(n: usize, b: usize, seed: u64, ids: &[u64]) -> Result<FlipMatrix> {
        if b < 2 {
            return Err(Error::TooFewFlips(b));
        }
        if n == 0 || ids.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "flip matrix over n = {n} observations with {} ids",
                ids.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut signs = Vec::with_capacity(b * n);
        signs.extend(std::iter::repeat(1.0).take(n));
        for _ in 1..b {
            for _ in 0..n {
                signs.push(if rng.random::<bool>() { 1.0 } else { -1.0 });
            }
        }
        Ok(FlipMatrix {
            signs,
            n,
            b,
            seed,
            observation_ids: ids.to_vec(),
        })
    }

    /// All 2^n sign assignments, first row the identity. Used by exactness
    /// oracles on small n.
    pub fn enumerate_all(n: usize, ids: &[u64]) -> Result<FlipMatrix> {
        if n == 0 || n > 20 {
            return Err(Error::InvalidArgument(format!(
                "full enumeration supported for 1 <= n <= 20, got {n}"
            )));
        }
        if ids.len() != n {
            return Err(Error::DimensionMismatch("enumeration ids".into()));
        }
        let b = 1usize << n;
        let mut signs = Vec::with_capacity(b * n);
        for mask in 0..b {
            for i in 0..n {
                // Bit 0 keeps row 1 the identity (mask 0 = all +1).
                signs.push(if mask >> i & 1 == 0 { 1.0 } else { -1.0 });
            }
        }
        Ok(FlipMatrix {
            signs,
            n,
            b,
            seed: 0,
            observation_ids: ids.to_vec(),
        })
    }

    pub fn n_obs(&self) -> usize {
        self.n
    }

    pub fn n_flips(&self) -> usize {
        self.b
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn observation_ids(&self) -> &[u64] {
        &self.observation_ids
    }

    pub fn row(&self, b: usize) -> &[f64] {
        &self.signs[b * self.n..(b + 1) * self.n]
    }

    /// Restricts the matrix to a subset of its observation IDs, preserving
    /// flip alignment: specifications that drop rows keep the same sign for
    /// every surviving observation.
    pub fn restrict(&self, ids: &[u64]) -> Result<FlipMatrix> {
        let positions: Vec<usize> = ids
            .iter()
            .map(|id| {
                self.observation_ids
                    .iter()
                    .position(|x| x == id)
                    .ok_or_else(|| {
                        Error::Data(format!("observation id {id} not covered by the flip matrix"))
                    })
            })
            .collect::<Result<_>>()?;
        let n = positions.len();
        let mut signs = Vec::with_capacity(self.b * n);
        for b in 0..self.b {
            let row = self.row(b);
            signs.extend(positions.iter().map(|&p| row[p]));
        }
        Ok(FlipMatrix {
            signs,
            n,
            b: self.b,
            seed: self.seed,
            observation_ids: ids.to_vec(),
        })
    }
}

/// Per-specification score table: contributions, flipped effective scores,
/// flip-conditional standard deviations, and standardized scores.
#[derive(Debug, Clone)]
pub struct ScoreTable {
    pub spec_id: String,
    /// Per-observation contributions nu_i.
    pub nu: DVector<f64>,
    /// Flipped effective scores T^b, length B; entry 0 is the observed score.
    pub t_eff: DVector<f64>,
    /// Flip-conditional standard deviations, length B.
    pub sd_flip: DVector<f64>,
    /// Standardized scores T^b / sd^b, length B.
    pub t_std: DVector<f64>,
    pub n_obs: usize,
}

impl ScoreTable {
    pub fn observed(&self) -> f64 {
        self.t_std[0]
    }
}

/// Weighted projection machinery for the nuisance design: applies
/// (I - Q) with Q = W^{1/2} Z (Z' W Z)^{-1} Z' W^{1/2}.
struct NuisanceProjector {
    wz: DMatrix<f64>, // W^{1/2} Z
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl NuisanceProjector {
    fn new(z: &DMatrix<f64>, w: &DVector<f64>) -> Result<Self> {
        let n = z.nrows();
        let m = z.ncols();
        let mut wz = z.clone();
        for i in 0..n {
            let s = w[i].sqrt();
            for j in 0..m {
                wz[(i, j)] *= s;
            }
        }
        let gram = wz.transpose() * &wz;
        let chol = nalgebra::Cholesky::new(gram).ok_or(Error::RankDeficient {
            columns: Vec::new(),
        })?;
        Ok(NuisanceProjector { wz, chol })
    }

    /// v - Q v, in place.
    fn residualize(&self, v: &mut DVector<f64>) {
        let proj = self.chol.solve(&(self.wz.transpose() * &*v));
        *v -= &self.wz * proj;
    }
}

/// Per-observation contributions to the effective score:
/// nu_i = (x_i - X' W Z (Z'WZ)^{-1} z_i) (y_i - mu_i) d_i / v_i.
///
/// Errors when the predictor of interest is numerically in the span of the
/// nuisance design.
pub fn score_contributions(
    x: &DVector<f64>,
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    fit: &NullFit,
) -> Result<DVector<f64>> {
    let n = y.len();
    if x.len() != n || z.nrows() != n || fit.mu_hat.len() != n {
        return Err(Error::DimensionMismatch("score contribution inputs".into()));
    }
    // a = (Z'WZ)^{-1} Z'W x, then x~_i = x_i - z_i' a.
    let m = z.ncols();
    let mut ztw_x = DVector::zeros(m);
    let mut ztwz = DMatrix::zeros(m, m);
    for i in 0..n {
        let wi = fit.w[i];
        for a in 0..m {
            ztw_x[a] += wi * z[(i, a)] * x[i];
            for b in a..m {
                ztwz[(a, b)] += wi * z[(i, a)] * z[(i, b)];
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            ztwz[(a, b)] = ztwz[(b, a)];
        }
    }
    let coef = nalgebra::Cholesky::new(ztwz)
        .ok_or(Error::RankDeficient { columns: Vec::new() })?
        .solve(&ztw_x);
    let residual = DVector::from_fn(n, |i, _| x[i] - z.row(i).transpose().dot(&coef));
    if residual.norm() < 1e-10 * x.norm() {
        return Err(Error::CollinearInterest);
    }
    Ok(DVector::from_fn(n, |i, _| {
        residual[i] * (y[i] - fit.mu_hat[i]) * fit.d[i] / fit.v[i]
    }))
}

/// Flipped effective scores: T^b = n^{-1/2} sum_i f_i^b nu_i.
pub fn effective_scores(nu: &DVector<f64>, flips: &FlipMatrix) -> Result<DVector<f64>> {
    let n = nu.len();
    if flips.n_obs() != n {
        return Err(Error::DimensionMismatch(format!(
            "flip matrix covers {} observations, contributions have {n}",
            flips.n_obs()
        )));
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok(DVector::from_fn(flips.n_flips(), |b, _| {
        let row = flips.row(b);
        scale * row.iter().zip(nu.iter()).map(|(f, v)| f * v).sum::<f64>()
    }))
}

/// Flip-conditional standard deviations of the effective scores:
/// Var(T^b | F^b) = n^{-1} X' W^{1/2} (I-Q) F^b (I-Q) F^b (I-Q) W^{1/2} X.
///
/// Computed with three vector passes per flip: r = (I-Q) W^{1/2} X once,
/// then u = f .* r, s = (I-Q) u, variance = u's / n.
pub fn flip_conditional_sd(
    x: &DVector<f64>,
    z: &DMatrix<f64>,
    fit: &NullFit,
    flips: &FlipMatrix,
) -> Result<DVector<f64>> {
    let n = x.len();
    if z.nrows() != n || fit.w.len() != n || flips.n_obs() != n {
        return Err(Error::DimensionMismatch("flip-conditional sd inputs".into()));
    }
    let projector = NuisanceProjector::new(z, &fit.w)?;
    let mut r = DVector::from_fn(n, |i, _| fit.w[i].sqrt() * x[i]);
    projector.residualize(&mut r);
    let inv_n = 1.0 / n as f64;
    let mut out = DVector::zeros(flips.n_flips());
    let mut u = DVector::zeros(n);
    for b in 0..flips.n_flips() {
        let f = flips.row(b);
        for i in 0..n {
            u[i] = f[i] * r[i];
        }
        let mut s = u.clone();
        projector.residualize(&mut s);
        let var = inv_n * u.dot(&s);
        if var <= 0.0 {
            return Err(Error::DegenerateVariance);
        }
        out[b] = var.sqrt();
    }
    Ok(out)
}

/// Assembles the full score table for one specification.
pub fn score_table(
    spec_id: impl Into<String>,
    x: &DVector<f64>,
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    fit: &NullFit,
    flips: &FlipMatrix,
) -> Result<ScoreTable> {
    let nu = score_contributions(x, z, y, fit)?;
    let t_eff = effective_scores(&nu, flips)?;
    let sd_flip = flip_conditional_sd(x, z, fit, flips)?;
    let t_std = DVector::from_fn(t_eff.len(), |b, _| t_eff[b] / sd_flip[b]);
    Ok(ScoreTable {
        spec_id: spec_id.into(),
        nu,
        t_eff,
        sd_flip,
        t_std,
        n_obs: y.len(),
    })
}

/// Rank p-value of the observed standardized score within the flip
/// distribution: p = (1/B) sum_b 1{|T^b| >= |T^1|}. Ties count toward the
/// p-value, so p is always at least 1/B.
pub fn rank_p_value(t_std: &DVector<f64>) -> f64 {
    let observed = t_std[0].abs();
    let count = t_std.iter().filter(|t| t.abs() >= observed).count();
    count as f64 / t_std.len() as f64
}

/// The sign-flip score test: rejects when p <= floor(alpha * B) / B,
/// equivalently when |T^1| exceeds the ceil((1-alpha)B)-th order statistic.
pub fn univariate_test(table: &ScoreTable, alpha: f64) -> Result<(f64, bool)> {
    if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    let b = table.t_std.len();
    let observed = table.t_std[0].abs();
    let count = table.t_std.iter().filter(|t| t.abs() >= observed).count();
    let p = count as f64 / b as f64;
    let reject = count <= (alpha * b as f64).floor() as usize;
    Ok((p, reject))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::{fit_null, Family};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn ids(n: usize) -> Vec<u64> {
        (1..=n as u64).collect()
    }

    #[test]
    fn first_row_is_identity() {
        let f = FlipMatrix::generate(3, 2, 99, &ids(3)).unwrap();
        assert_eq!(f.row(0), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn flip_generation_is_deterministic() {
        let a = FlipMatrix::generate(17, 64, 123, &ids(17)).unwrap();
        let b = FlipMatrix::generate(17, 64, 123, &ids(17)).unwrap();
        assert_eq!(a.signs, b.signs);
        let c = FlipMatrix::generate(17, 64, 124, &ids(17)).unwrap();
        assert_ne!(a.signs, c.signs);
    }

    #[test]
    fn signs_average_near_zero() {
        let b = 1000;
        let f = FlipMatrix::generate(1, b, 5, &ids(1)).unwrap();
        let mean: f64 = (1..b).map(|r| f.row(r)[0]).sum::<f64>() / (b - 1) as f64;
        assert!(mean.abs() < 4.0 / (b as f64).sqrt());
    }

    #[test]
    fn too_few_flips_rejected() {
        assert!(matches!(
            FlipMatrix::generate(3, 1, 0, &ids(3)),
            Err(Error::TooFewFlips(1))
        ));
    }

    #[test]
    fn restrict_preserves_signs_per_observation() {
        let f = FlipMatrix::generate(5, 16, 7, &ids(5)).unwrap();
        let sub = f.restrict(&[1, 2, 4, 5]).unwrap(); // drop observation 3
        for b in 0..16 {
            let full = f.row(b);
            let small = sub.row(b);
            assert_eq!(small, &[full[0], full[1], full[3], full[4]]);
        }
    }

    #[test]
    fn effective_score_hand_values() {
        let f = FlipMatrix::enumerate_all(2, &ids(2)).unwrap();
        let nu = DVector::from_vec(vec![1.0, -1.0]);
        let t = effective_scores(&nu, &f).unwrap();
        // Row order: (+,+), (-,+), (+,-), (-,-).
        assert!((t[0] - 0.0).abs() < 1e-15);
        assert!((t[2] - 2.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn enumerated_scores_average_to_zero() {
        let n = 8;
        let f = FlipMatrix::enumerate_all(n, &ids(n)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let nu = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let t = effective_scores(&nu, &f).unwrap();
        let mean = t.iter().sum::<f64>() / t.len() as f64;
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn zero_residuals_give_zero_contributions_and_p_one() {
        let n = 10;
        let z = DMatrix::from_element(n, 1, 1.0);
        let y = DVector::from_element(n, 2.5); // y = mu exactly
        let mut fit = fit_null(&z, &y, Family::Gaussian).unwrap();
        // Constant y makes the Pearson dispersion zero; pin it to 1 so the
        // degenerate-null path is exercised rather than a 0/0.
        fit.dispersion = 1.0;
        fit.v = DVector::from_element(n, 1.0);
        fit.w = DVector::from_element(n, 1.0);
        let x = DVector::from_fn(n, |i, _| i as f64);
        let nu = score_contributions(&x, &z, &y, &fit).unwrap();
        assert!(nu.iter().all(|v| v.abs() < 1e-12));
        let flips = FlipMatrix::generate(n, 50, 1, &ids(n)).unwrap();
        let table = score_table("s", &x, &z, &y, &fit, &flips).unwrap();
        let (p, reject) = univariate_test(&table, 0.05).unwrap();
        assert!((p - 1.0).abs() < 1e-15);
        assert!(!reject);
    }

    #[test]
    fn lm_intercept_contributions_match_covariance_reduction() {
        // Gaussian, Z = intercept: nu_i = (x_i - xbar)(y_i - ybar) / phi.
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let y = DVector::from_vec(vec![2.0, 1.0, 4.0, 3.0]);
        let z = DMatrix::from_element(4, 1, 1.0);
        let fit = fit_null(&z, &y, Family::Gaussian).unwrap();
        let nu = score_contributions(&x, &z, &y, &fit).unwrap();
        for i in 0..4 {
            let expected = (x[i] - 2.5) * (y[i] - 2.5) / fit.dispersion;
            assert!((nu[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn contributions_sum_matches_loglik_derivative_oracle() {
        // Logistic n=40: sum_i nu_i equals d/d(beta) of the log-likelihood at
        // beta = 0, gamma = gamma_hat, computed by central differences on an
        // independently coded log-likelihood.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 40;
        let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let z = DMatrix::from_fn(n, 2, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.sample::<f64, _>(StandardNormal)
            }
        });
        let y = DVector::from_fn(n, |i, _| {
            let p = 1.0 / (1.0 + (-(0.5 + z[(i, 1)])).exp());
            (rng.random::<f64>() < p) as u8 as f64
        });
        let fit = fit_null(&z, &y, Family::Binomial).unwrap();
        let gamma = &fit.nuisance_coefficients;
        let loglik = |beta: f64| -> f64 {
            (0..n)
                .map(|i| {
                    let eta = beta * x[i] + z[(i, 0)] * gamma[0] + z[(i, 1)] * gamma[1];
                    y[i] * eta - (1.0 + eta.exp()).ln()
                })
                .sum()
        };
        let h = 1e-5;
        let score_beta = (loglik(h) - loglik(-h)) / (2.0 * h);
        // The analytic score is sum_i x_i (y_i - mu_i); the contributions
        // replace x_i by its W-projection residual, but the projection term
        // sums against zero Pearson residuals of the null fit, so the totals
        // agree.
        let nu = score_contributions(&x, &z, &y, &fit).unwrap();
        assert!((nu.iter().sum::<f64>() - score_beta).abs() < 1e-6);
    }

    #[test]
    fn collinear_interest_rejected() {
        let n = 12;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = DMatrix::from_fn(n, 2, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.sample::<f64, _>(StandardNormal)
            }
        });
        let x = DVector::from_fn(n, |i, _| 3.0 * z[(i, 1)] - 2.0);
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let fit = fit_null(&z, &y, Family::Gaussian).unwrap();
        assert!(matches!(
            score_contributions(&x, &z, &y, &fit),
            Err(Error::CollinearInterest)
        ));
    }

    #[test]
    fn identity_flip_variance_matches_projection_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 25;
        let z = DMatrix::from_fn(n, 2, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.sample::<f64, _>(StandardNormal)
            }
        });
        let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |i, _| z[(i, 1)] + rng.sample::<f64, _>(StandardNormal));
        let fit = fit_null(&z, &y, Family::Gaussian).unwrap();
        let flips = FlipMatrix::generate(n, 8, 3, &ids(n)).unwrap();
        let sd = flip_conditional_sd(&x, &z, &fit, &flips).unwrap();
        // Dense oracle for b = 1: n^{-1} ||(I-Q) W^{1/2} x||^2.
        let q = dense_q(&z, &fit.w);
        let wx = DVector::from_fn(n, |i, _| fit.w[i].sqrt() * x[i]);
        let r = &wx - &q * &wx;
        let var_oracle = r.norm_squared() / n as f64;
        assert!((sd[0] * sd[0] - var_oracle).abs() < 1e-10);
    }

    fn dense_q(z: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
        let n = z.nrows();
        let mut wz = z.clone();
        for i in 0..n {
            let s = w[i].sqrt();
            for j in 0..z.ncols() {
                wz[(i, j)] *= s;
            }
        }
        let gram_inv = (wz.transpose() * &wz).try_inverse().unwrap();
        &wz * gram_inv * wz.transpose()
    }

    #[test]
    fn arbitrary_flip_variance_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 20;
        let z = DMatrix::from_fn(n, 2, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.sample::<f64, _>(StandardNormal)
            }
        });
        let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |i, _| 2.0 * z[(i, 1)] + rng.sample::<f64, _>(StandardNormal));
        let fit = fit_null(&z, &y, Family::Gaussian).unwrap();
        let flips = FlipMatrix::generate(n, 32, 9, &ids(n)).unwrap();
        let sd = flip_conditional_sd(&x, &z, &fit, &flips).unwrap();
        let q = dense_q(&z, &fit.w);
        let eye = DMatrix::identity(n, n);
        let iq = &eye - &q;
        let wx = DVector::from_fn(n, |i, _| fit.w[i].sqrt() * x[i]);
        for b in 0..32 {
            let f = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| flips.row(b)[i]));
            let var_oracle =
                (wx.transpose() * &iq * &f * &iq * &f * &iq * &wx)[(0, 0)] / n as f64;
            assert!((sd[b] * sd[b] - var_oracle).abs() < 1e-10);
        }
    }

    #[test]
    fn scaling_x_scales_sd_linearly_and_leaves_t_std_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 30;
        let z = DMatrix::from_fn(n, 2, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.sample::<f64, _>(StandardNormal)
            }
        });
        let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |i, _| z[(i, 1)] + rng.sample::<f64, _>(StandardNormal));
        let fit = fit_null(&z, &y, Family::Gaussian).unwrap();
        let flips = FlipMatrix::generate(n, 64, 77, &ids(n)).unwrap();
        let t1 = score_table("a", &x, &z, &y, &fit, &flips).unwrap();
        let t3 = score_table("b", &(&x * 3.0), &z, &y, &fit, &flips).unwrap();
        let tneg = score_table("c", &(&x * -2.0), &z, &y, &fit, &flips).unwrap();
        for b in 0..64 {
            assert!((t3.sd_flip[b] - 3.0 * t1.sd_flip[b]).abs() < 1e-10);
            assert!((t3.t_std[b] - t1.t_std[b]).abs() < 1e-10);
            assert!((tneg.t_std[b] + t1.t_std[b]).abs() < 1e-10);
        }
        let (p1, r1) = univariate_test(&t1, 0.05).unwrap();
        let (pn, rn) = univariate_test(&tneg, 0.05).unwrap();
        assert_eq!(p1, pn);
        assert_eq!(r1, rn);
    }

    #[test]
    fn dispersion_invariance_of_standardized_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let n = 30;
        let z = DMatrix::from_fn(n, 2, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.sample::<f64, _>(StandardNormal)
            }
        });
        let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |i, _| z[(i, 1)] + rng.sample::<f64, _>(StandardNormal));
        let mut fit = fit_null(&z, &y, Family::Gaussian).unwrap();
        let flips = FlipMatrix::generate(n, 32, 15, &ids(n)).unwrap();
        let base = score_table("a", &x, &z, &y, &fit, &flips).unwrap();
        // Inflate the dispersion estimate by c: v scales by c, w by 1/c, and
        // every standardized score scales uniformly by 1/sqrt(c), so ranks
        // (hence p-values) are untouched.
        let c = 4.0;
        fit.dispersion *= c;
        fit.v *= c;
        fit.w /= c;
        let scaled = score_table("b", &x, &z, &y, &fit, &flips).unwrap();
        for b in 0..32 {
            assert!((base.t_std[b] - c.sqrt() * scaled.t_std[b]).abs() < 1e-10);
        }
        assert!((rank_p_value(&base.t_std) - rank_p_value(&scaled.t_std)).abs() < 1e-15);
    }

    #[test]
    fn rank_p_value_rank_arithmetic() {
        // B = 20, observed strictly largest -> p = 1/20.
        let mut vals = vec![5.0];
        vals.extend((0..19).map(|i| i as f64 * 0.1));
        let t = DVector::from_vec(vals);
        assert!((rank_p_value(&t) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn second_moment_balance_at_large_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 500;
        let b = 1000;
        let z = DMatrix::from_fn(n, 2, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.sample::<f64, _>(StandardNormal)
            }
        });
        let x = DVector::from_fn(n, |i, _| {
            0.6 * z[(i, 1)] + 0.8 * rng.sample::<f64, _>(StandardNormal)
        });
        let y = DVector::from_fn(n, |i, _| {
            2.0 * z[(i, 1)] + rng.sample::<f64, _>(StandardNormal)
        });
        let fit = fit_null(&z, &y, Family::Gaussian).unwrap();
        let flips = FlipMatrix::generate(n, b, 3, &ids(n)).unwrap();
        let table = score_table("s", &x, &z, &y, &fit, &flips).unwrap();
        let flipped: Vec<f64> = table.t_std.iter().skip(1).copied().collect();
        let mean = flipped.iter().sum::<f64>() / flipped.len() as f64;
        let var = flipped.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (flipped.len() - 1) as f64;
        assert!((var - 1.0).abs() < 0.15, "sample variance {var}");
    }
}
