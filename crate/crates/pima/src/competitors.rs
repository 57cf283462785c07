//! Reference procedures the sign-flip multiverse test is benchmarked against:
//! the parametric Wald/t test (in [`crate::glm`]), null-restricted wild
//! bootstrap for linear models, the analogous (and known-broken) GLM
//! resampling scheme, and naive plus bootstrap-calibrated p-value combiners.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Beta, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::glm::{fit_full, fit_full_quasi, wald_test, Family};

/// Bonferroni combination: min(1, K * min p).
pub fn bonferroni(pvals: &[f64]) -> Result<f64> {
    if pvals.is_empty() {
        return Err(Error::InvalidArgument("no p-values to combine".into()));
    }
    let min = pvals.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((pvals.len() as f64 * min).min(1.0))
}

fn probit(p: f64) -> f64 {
    let norm = Normal::new(0.0, 1.0).unwrap();
    norm.inverse_cdf(p.clamp(1e-12, 1.0 - 1e-12))
}

/// Stouffer combination assuming independence:
/// 1 - Phi( sum_k Phi^{-1}(1 - p_k) / sqrt(K) ).
pub fn stouffer(pvals: &[f64]) -> Result<f64> {
    if pvals.is_empty() {
        return Err(Error::InvalidArgument("no p-values to combine".into()));
    }
    let k = pvals.len() as f64;
    let z = pvals.iter().map(|&p| probit(1.0 - p)).sum::<f64>() / k.sqrt();
    let norm = Normal::new(0.0, 1.0).unwrap();
    Ok((1.0 - norm.cdf(z)).clamp(0.0, 1.0))
}

fn median_of(pvals: &[f64]) -> f64 {
    let mut sorted = pvals.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let k = sorted.len();
    if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    }
}

/// Median combination assuming independence: the sample median of K uniforms
/// is (approximately, exactly for odd K) Beta((K+1)/2, (K+1)/2), so the
/// combined p-value is that CDF at the observed median.
pub fn median_combined(pvals: &[f64]) -> Result<f64> {
    if pvals.is_empty() {
        return Err(Error::InvalidArgument("no p-values to combine".into()));
    }
    let k = pvals.len() as f64;
    let m = median_of(pvals);
    let beta = Beta::new((k + 1.0) / 2.0, (k + 1.0) / 2.0)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(beta.cdf(m))
}

/// The log-scale null-imposing transform ytilde = g^{-1}( g(y) - beta_hat x ).
///
/// For the gaussian family this is the ordinary shift y - beta_hat x. For
/// binomial data the logit of a 0/1 response is infinite, so the transform
/// returns the response unchanged and imposes nothing; for poisson data zero
/// counts are likewise fixed points and positive counts map to non-integers.
/// This failure is why GLM resampling is gated behind an explicit opt-in.
pub fn glm_null_response(
    y: &DVector<f64>,
    x: &DVector<f64>,
    beta_hat: f64,
    family: Family,
) -> Result<DVector<f64>> {
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch("null response inputs".into()));
    }
    Ok(DVector::from_fn(y.len(), |i, _| {
        match family {
            Family::Gaussian => y[i] - beta_hat * x[i],
            Family::Binomial => {
                // logit(0) = -inf, logit(1) = +inf: finite shifts change nothing.
                if y[i] == 0.0 || y[i] == 1.0 {
                    y[i]
                } else {
                    family.inverse_link(family.link(y[i]) - beta_hat * x[i])
                }
            }
            Family::Poisson => {
                if y[i] == 0.0 {
                    0.0
                } else {
                    family.inverse_link(family.link(y[i]) - beta_hat * x[i])
                }
            }
        }
    }))
}

/// Controls for the resampling competitors.
#[derive(Debug, Clone, Copy)]
pub struct BootstrapOptions {
    pub n_draws: usize,
    pub seed: u64,
    /// Must be set to run the GLM resampling scheme at all.
    pub allow_unsafe_glm: bool,
}

/// Result of a single-specification resampling test.
#[derive(Debug, Clone, Copy)]
pub struct BootstrapOutcome {
    pub t_obs: f64,
    pub p: f64,
}

/// Fixed-design least squares with a cached factorization, for fast repeated
/// refits against new responses.
struct LmSolver {
    design: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    inv00: f64,
    n: usize,
    p: usize,
}

impl LmSolver {
    fn new(x: &DVector<f64>, z: &DMatrix<f64>) -> Result<LmSolver> {
        let n = x.len();
        let p = z.ncols() + 1;
        if z.nrows() != n || n <= p {
            return Err(Error::DimensionMismatch("wild bootstrap design".into()));
        }
        let mut design = DMatrix::zeros(n, p);
        design.set_column(0, x);
        for j in 0..z.ncols() {
            design.set_column(j + 1, &z.column(j).into_owned());
        }
        let gram = design.transpose() * &design;
        let chol = nalgebra::Cholesky::new(gram).ok_or(Error::RankDeficient {
            columns: Vec::new(),
        })?;
        let inv00 = chol.inverse()[(0, 0)];
        Ok(LmSolver {
            design,
            chol,
            inv00,
            n,
            p,
        })
    }

    fn coefficients(&self, y: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(&(self.design.transpose() * y))
    }

    /// (beta_hat, t, two-sided t-test p).
    fn t_test(&self, y: &DVector<f64>) -> (f64, f64, f64) {
        let coef = self.coefficients(y);
        let resid = y - &self.design * &coef;
        let df = (self.n - self.p) as f64;
        let sigma2 = resid.norm_squared() / df;
        let se = (sigma2 * self.inv00).sqrt();
        let t = coef[0] / se;
        let dist = StudentsT::new(0.0, 1.0, df).unwrap();
        (coef[0], t, (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0))
    }
}

fn rademacher(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
}

fn bootstrap_p(count_geq: usize, n_draws: usize) -> f64 {
    (count_geq + 1) as f64 / (n_draws + 1) as f64
}

/// Null-restricted wild bootstrap for the linear model: the effect estimate
/// is subtracted from the response, the restricted model's fitted values are
/// perturbed by sign-flipped residuals, and the observed t statistic is
/// referred to the resampled t distribution.
pub fn lm_wild_bootstrap(
    x: &DVector<f64>,
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    opts: &BootstrapOptions,
) -> Result<BootstrapOutcome> {
    if opts.n_draws < 2 {
        return Err(Error::InvalidArgument(
            "wild bootstrap needs at least 2 draws".into(),
        ));
    }
    let solver = LmSolver::new(x, z)?;
    let (beta_hat, t_obs, _) = solver.t_test(y);
    let y_null = y - x * beta_hat;
    let coef_null = solver.coefficients(&y_null);
    let fitted = &solver.design * &coef_null;
    let resid = &y_null - &fitted;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut count = 0usize;
    for _ in 0..opts.n_draws {
        let w = rademacher(&mut rng, solver.n);
        let y_star = &fitted + w.component_mul(&resid);
        let (_, t_star, _) = solver.t_test(&y_star);
        if t_star.abs() >= t_obs.abs() {
            count += 1;
        }
    }
    Ok(BootstrapOutcome {
        t_obs,
        p: bootstrap_p(count, opts.n_draws),
    })
}

/// The GLM analogue of the null-restricted bootstrap: transform the response
/// through [`glm_null_response`], case-resample, refit, and compare Wald
/// statistics. Refuses to run without `allow_unsafe_glm`, because the
/// transform cannot impose the null on discrete data.
pub fn glm_case_bootstrap(
    x: &DVector<f64>,
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    family: Family,
    opts: &BootstrapOptions,
) -> Result<BootstrapOutcome> {
    if family == Family::Gaussian {
        return lm_wild_bootstrap(x, z, y, opts);
    }
    if !opts.allow_unsafe_glm {
        return Err(Error::UnsafeGlmBootstrap);
    }
    if opts.n_draws < 2 {
        return Err(Error::InvalidArgument(
            "bootstrap needs at least 2 draws".into(),
        ));
    }
    let fit = fit_full(x, z, y, family)?;
    let (t_obs, _) = wald_test(&fit)?;
    let y_null = glm_null_response(y, x, fit.beta_hat, family)?;
    let n = y.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut count = 0usize;
    let mut used = 0usize;
    for _ in 0..opts.n_draws {
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let xs = DVector::from_fn(n, |i, _| x[idx[i]]);
        let zs = DMatrix::from_fn(n, z.ncols(), |i, j| z[(idx[i], j)]);
        let ys = DVector::from_fn(n, |i, _| y_null[idx[i]]);
        let Ok(refit) = fit_full_quasi(&xs, &zs, &ys, family) else {
            continue;
        };
        if !refit.converged {
            continue;
        }
        used += 1;
        if (refit.beta_hat / refit.se_beta).abs() >= t_obs.abs() {
            count += 1;
        }
    }
    if used * 2 < opts.n_draws {
        return Err(Error::NonConvergence {
            iterations: opts.n_draws,
            reason: format!("only {used} of {} bootstrap refits converged", opts.n_draws),
        });
    }
    Ok(BootstrapOutcome {
        t_obs,
        p: bootstrap_p(count, used),
    })
}

/// Multi-specification combination calibrated by a shared bootstrap: each
/// draw reuses one set of resampling weights (or case indices) across all K
/// specifications, the per-specification Wald p-values are combined, and the
/// observed combined statistic is referred to the resampled ones.
#[derive(Debug, Clone)]
pub struct CombinedBootstrap {
    /// Observed per-specification parametric p-values.
    pub wald_pvalues: Vec<f64>,
    pub stouffer_p: f64,
    pub median_p: f64,
}

pub fn combined_bootstrap(
    xs: &[DVector<f64>],
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    family: Family,
    opts: &BootstrapOptions,
) -> Result<CombinedBootstrap> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument("no specifications".into()));
    }
    if opts.n_draws < 2 {
        return Err(Error::InvalidArgument(
            "bootstrap needs at least 2 draws".into(),
        ));
    }
    let k = xs.len() as f64;
    let stouffer_stat =
        |pv: &[f64]| pv.iter().map(|&p| probit(1.0 - p)).sum::<f64>() / k.sqrt();
    let median_stat = |pv: &[f64]| -median_of(pv);

    let n = y.len();
    let mut observed = Vec::with_capacity(xs.len());
    match family {
        Family::Gaussian => {
            let mut spec_state = Vec::with_capacity(xs.len());
            for x in xs {
                let solver = LmSolver::new(x, z)?;
                let (beta_hat, _, p) = solver.t_test(y);
                observed.push(p);
                let y_null = y - x * beta_hat;
                let coef_null = solver.coefficients(&y_null);
                let fitted = &solver.design * &coef_null;
                let resid = &y_null - &fitted;
                spec_state.push((solver, fitted, resid));
            }
            let obs_st = stouffer_stat(&observed);
            let obs_md = median_stat(&observed);
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let (mut count_st, mut count_md) = (0usize, 0usize);
            let mut draw_p = vec![0.0; xs.len()];
            for _ in 0..opts.n_draws {
                let w = rademacher(&mut rng, n);
                for (j, (solver, fitted, resid)) in spec_state.iter().enumerate() {
                    let y_star = fitted + w.component_mul(resid);
                    draw_p[j] = solver.t_test(&y_star).2;
                }
                if stouffer_stat(&draw_p) >= obs_st {
                    count_st += 1;
                }
                if median_stat(&draw_p) >= obs_md {
                    count_md += 1;
                }
            }
            Ok(CombinedBootstrap {
                wald_pvalues: observed,
                stouffer_p: bootstrap_p(count_st, opts.n_draws),
                median_p: bootstrap_p(count_md, opts.n_draws),
            })
        }
        _ => {
            if !opts.allow_unsafe_glm {
                return Err(Error::UnsafeGlmBootstrap);
            }
            let mut nulls = Vec::with_capacity(xs.len());
            for x in xs {
                let fit = fit_full(x, z, y, family)?;
                let (_, p) = wald_test(&fit)?;
                observed.push(p);
                nulls.push(glm_null_response(y, x, fit.beta_hat, family)?);
            }
            let obs_st = stouffer_stat(&observed);
            let obs_md = median_stat(&observed);
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let (mut count_st, mut count_md) = (0usize, 0usize);
            let mut used = 0usize;
            let norm = Normal::new(0.0, 1.0).unwrap();
            'draws: for _ in 0..opts.n_draws {
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let zs = DMatrix::from_fn(n, z.ncols(), |i, j| z[(idx[i], j)]);
                let mut draw_p = Vec::with_capacity(xs.len());
                for (x, y_null) in xs.iter().zip(nulls.iter()) {
                    let xsub = DVector::from_fn(n, |i, _| x[idx[i]]);
                    let ysub = DVector::from_fn(n, |i, _| y_null[idx[i]]);
                    let Ok(refit) = fit_full_quasi(&xsub, &zs, &ysub, family) else {
                        continue 'draws;
                    };
                    if !refit.converged {
                        continue 'draws;
                    }
                    let t = refit.beta_hat / refit.se_beta;
                    draw_p.push((2.0 * norm.cdf(-t.abs())).clamp(0.0, 1.0));
                }
                used += 1;
                if stouffer_stat(&draw_p) >= obs_st {
                    count_st += 1;
                }
                if median_stat(&draw_p) >= obs_md {
                    count_md += 1;
                }
            }
            if used * 2 < opts.n_draws {
                return Err(Error::NonConvergence {
                    iterations: opts.n_draws,
                    reason: format!(
                        "only {used} of {} combined bootstrap draws converged",
                        opts.n_draws
                    ),
                });
            }
            Ok(CombinedBootstrap {
                wald_pvalues: observed,
                stouffer_p: bootstrap_p(count_st, used),
                median_p: bootstrap_p(count_md, used),
            })
        }
    }
}
