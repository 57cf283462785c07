//! Exponential-family GLM machinery: families with canonical links, IRLS
//! fitting, and the diagnostic weight vectors consumed by the score test.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

const MAX_ITER: usize = 50;
const DEVIANCE_TOL: f64 = 1e-8;
const MU_EPS: f64 = 1e-10;
/// |eta| beyond this is a boundary fit for logit/log links (mu within ~1e-14
/// of its domain edge), the signature of complete separation.
const ETA_BOUND: f64 = 30.0;

/// Exponential-family choices, each paired with its canonical link.
/// Non-canonical pairings are rejected at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Identity link, constant variance.
    Gaussian,
    /// Logit link, variance mu*(1-mu), response in {0,1}.
    Binomial,
    /// Log link, variance mu, response in the non-negative integers.
    Poisson,
}

impl Family {
    /// Parses a family name with an optional link, enforcing canonical pairs.
    pub fn parse(kind: &str, link: Option<&str>) -> Result<Family> {
        let family = match kind.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Family::Gaussian,
            "binomial" => Family::Binomial,
            "poisson" => Family::Poisson,
            other => return Err(Error::InvalidFamily(format!("unknown family `{other}`"))),
        };
        if let Some(link) = link {
            let canonical = match family {
                Family::Gaussian => "identity",
                Family::Binomial => "logit",
                Family::Poisson => "log",
            };
            if !link.eq_ignore_ascii_case(canonical) {
                return Err(Error::InvalidFamily(format!(
                    "link `{link}` is not the canonical link `{canonical}` for {kind}"
                )));
            }
        }
        Ok(family)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Binomial => "binomial",
            Family::Poisson => "poisson",
        }
    }

    /// Variance function v(mu), excluding any dispersion factor.
    pub fn variance(&self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Binomial => mu * (1.0 - mu),
            Family::Poisson => mu,
        }
    }

    /// Mean derivative d = d(mu)/d(eta) under the canonical link.
    pub fn mean_derivative(&self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Binomial => mu * (1.0 - mu),
            Family::Poisson => mu,
        }
    }

    /// Link g(mu) = eta.
    pub fn link(&self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => mu,
            Family::Binomial => (mu / (1.0 - mu)).ln(),
            Family::Poisson => mu.ln(),
        }
    }

    /// Inverse link g^{-1}(eta) = mu.
    pub fn inverse_link(&self, eta: f64) -> f64 {
        match self {
            Family::Gaussian => eta,
            Family::Binomial => 1.0 / (1.0 + (-eta).exp()),
            Family::Poisson => eta.exp(),
        }
    }

    /// Clips the mean to the interior of its domain; keeps IRLS weights finite.
    pub fn clamp_mu(&self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => mu,
            Family::Binomial => mu.clamp(MU_EPS, 1.0 - MU_EPS),
            Family::Poisson => mu.max(MU_EPS),
        }
    }

    fn check_support(&self, y: &DVector<f64>) -> Result<()> {
        let bad = match self {
            Family::Gaussian => y.iter().any(|v| !v.is_finite()),
            Family::Binomial => y.iter().any(|&v| v != 0.0 && v != 1.0),
            Family::Poisson => y.iter().any(|&v| v < 0.0 || v.fract() != 0.0),
        };
        if bad {
            Err(Error::InvalidResponse(format!(
                "values outside the support of the {} family",
                self.name()
            )))
        } else {
            Ok(())
        }
    }

    fn initial_mu(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            Family::Gaussian => y.clone(),
            Family::Binomial | Family::Poisson => {
                let ybar = y.mean();
                y.map(|v| self.clamp_mu((v + ybar) / 2.0))
            }
        }
    }

    fn deviance(&self, y: &DVector<f64>, mu: &DVector<f64>) -> f64 {
        let mut dev = 0.0;
        for (&yi, &mi) in y.iter().zip(mu.iter()) {
            dev += match self {
                Family::Gaussian => (yi - mi) * (yi - mi),
                Family::Binomial => -2.0 * (yi * mi.ln() + (1.0 - yi) * (1.0 - mi).ln()),
                Family::Poisson => {
                    let term = if yi > 0.0 { yi * (yi / mi).ln() } else { 0.0 };
                    2.0 * (term - (yi - mi))
                }
            };
        }
        dev
    }
}

/// Raw IRLS output for an arbitrary design matrix.
#[derive(Debug, Clone)]
pub struct GlmFit {
    pub coefficients: DVector<f64>,
    pub mu: DVector<f64>,
    pub eta: DVector<f64>,
    pub deviance: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Flags columns that are numerically in the span of the preceding columns.
/// Runs modified Gram-Schmidt; returns the offending column indices.
fn collinear_columns(design: &DMatrix<f64>) -> Vec<usize> {
    let m = design.ncols();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m);
    let mut collinear = Vec::new();
    for j in 0..m {
        let col = design.column(j).into_owned();
        let norm0 = col.norm();
        let mut residual = col;
        for q in &basis {
            let proj = q.dot(&residual);
            residual -= q * proj;
        }
        if residual.norm() <= 1e-10 * norm0.max(1.0) {
            collinear.push(j);
        } else {
            let norm = residual.norm();
            basis.push(residual / norm);
        }
    }
    collinear
}

/// Fits a GLM by iteratively reweighted least squares.
///
/// Convergence is a relative deviance change below 1e-8 within 50 iterations;
/// a fit that runs out of iterations is returned with `converged = false`,
/// never silently treated as converged.
pub fn irls_fit(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    family: Family,
    offset: Option<&DVector<f64>>,
) -> Result<GlmFit> {
    irls_fit_impl(design, y, family, offset, true)
}

fn irls_fit_impl(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    family: Family,
    offset: Option<&DVector<f64>>,
    check_support: bool,
) -> Result<GlmFit> {
    let n = y.len();
    let m = design.ncols();
    if design.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows, response has {n}",
            design.nrows()
        )));
    }
    if n <= m {
        return Err(Error::Data(format!(
            "need more observations ({n}) than design columns ({m})"
        )));
    }
    if check_support {
        family.check_support(y)?;
    }
    let collinear = collinear_columns(design);
    if !collinear.is_empty() {
        return Err(Error::RankDeficient { columns: collinear });
    }
    let offset = match offset {
        Some(o) => {
            if o.len() != n {
                return Err(Error::DimensionMismatch("offset length".into()));
            }
            o.clone()
        }
        None => DVector::zeros(n),
    };

    let mut mu = family.initial_mu(y);
    let mut eta = mu.map(|v| family.link(v));
    let mut deviance = family.deviance(y, &mu);
    let mut coefficients = DVector::zeros(m);

    for iter in 1..=MAX_ITER {
        let mut xtwx = DMatrix::zeros(m, m);
        let mut xtwz = DVector::zeros(m);
        for i in 0..n {
            let d = family.mean_derivative(mu[i]);
            let v = family.variance(mu[i]);
            let w = d * d / v;
            let z = (eta[i] - offset[i]) + (y[i] - mu[i]) / d;
            let row = design.row(i);
            for a in 0..m {
                xtwz[a] += w * row[a] * z;
                for b in a..m {
                    xtwx[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..m {
            for b in 0..a {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
        }
        let chol = nalgebra::Cholesky::new(xtwx).ok_or(Error::RankDeficient {
            columns: Vec::new(),
        })?;
        coefficients = chol.solve(&xtwz);
        eta = design * &coefficients + &offset;
        mu = eta.map(|e| family.clamp_mu(family.inverse_link(e)));
        let new_deviance = family.deviance(y, &mu);
        let rel = (deviance - new_deviance).abs() / (new_deviance.abs() + 0.1);
        deviance = new_deviance;
        if rel < DEVIANCE_TOL {
            // Boundary estimates (complete separation and the like): the
            // linear predictor diverges and the deviance plateaus at a
            // degenerate fit. Report non-convergence rather than a spurious
            // maximum.
            let boundary = family != Family::Gaussian && eta.amax() > ETA_BOUND;
            return Ok(GlmFit {
                coefficients,
                mu,
                eta,
                deviance,
                converged: !boundary,
                iterations: iter,
            });
        }
    }
    Ok(GlmFit {
        coefficients,
        mu,
        eta,
        deviance,
        converged: false,
        iterations: MAX_ITER,
    })
}

/// Null-model fit (response regressed on the nuisance design only) together
/// with the diagonal weight vectors evaluated at the fitted means.
#[derive(Debug, Clone)]
pub struct NullFit {
    pub mu_hat: DVector<f64>,
    pub eta_hat: DVector<f64>,
    /// Diagonal of D: d_i = d(mu_i)/d(eta_i).
    pub d: DVector<f64>,
    /// Diagonal of V: Var(y_i), dispersion included where applicable.
    pub v: DVector<f64>,
    /// Diagonal of W = D V^{-1} D.
    pub w: DVector<f64>,
    /// Pearson dispersion estimate; fixed at 1 for binomial/poisson.
    pub dispersion: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Fitted nuisance coefficients, retained for diagnostics.
    pub nuisance_coefficients: DVector<f64>,
    pub family: Family,
}

/// Fits the null model for the sign-flip score test: `y ~ z` with no
/// predictor of interest.
pub fn fit_null(z: &DMatrix<f64>, y: &DVector<f64>, family: Family) -> Result<NullFit> {
    let fit = irls_fit(z, y, family, None)?;
    let n = y.len();
    let m = z.ncols();
    let dispersion = match family {
        Family::Gaussian => {
            let pearson: f64 = y
                .iter()
                .zip(fit.mu.iter())
                .map(|(&yi, &mi)| (yi - mi) * (yi - mi) / family.variance(mi))
                .sum();
            pearson / (n - m) as f64
        }
        Family::Binomial | Family::Poisson => 1.0,
    };
    let d = fit.mu.map(|m| family.mean_derivative(m));
    let v = fit.mu.map(|m| dispersion * family.variance(m));
    let w = DVector::from_fn(n, |i, _| d[i] * d[i] / v[i]);
    Ok(NullFit {
        mu_hat: fit.mu,
        eta_hat: fit.eta,
        d,
        v,
        w,
        dispersion,
        converged: fit.converged,
        iterations: fit.iterations,
        nuisance_coefficients: fit.coefficients,
        family,
    })
}

/// Joint fit of the predictor of interest and the nuisance design, used by
/// the parametric Wald/t competitor and for reporting effect estimates.
#[derive(Debug, Clone)]
pub struct FullFit {
    /// Coefficient of the predictor of interest (first design column).
    pub beta_hat: f64,
    pub se_beta: f64,
    pub coefficients: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub converged: bool,
    pub n: usize,
    /// Residual degrees of freedom: n minus total fitted coefficients.
    pub df_residual: usize,
    pub family: Family,
}

/// Fits `y ~ x + z`; `x` occupies the first design column.
pub fn fit_full(
    x: &DVector<f64>,
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    family: Family,
) -> Result<FullFit> {
    fit_full_impl(x, z, y, family, true)
}

/// Quasi-likelihood joint fit: identical estimating equations but no
/// response support check, so fractional "counts" and similar off-support
/// responses are accepted. Needed by resampling schemes whose transformed
/// responses leave the family's support.
pub(crate) fn fit_full_quasi(
    x: &DVector<f64>,
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    family: Family,
) -> Result<FullFit> {
    fit_full_impl(x, z, y, family, false)
}

fn fit_full_impl(
    x: &DVector<f64>,
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    family: Family,
    check_support: bool,
) -> Result<FullFit> {
    let n = y.len();
    let m = z.ncols();
    if x.len() != n || z.nrows() != n {
        return Err(Error::DimensionMismatch("x/z/y lengths".into()));
    }
    let mut design = DMatrix::zeros(n, m + 1);
    design.set_column(0, x);
    for j in 0..m {
        design.set_column(j + 1, &z.column(j).into_owned());
    }
    let fit = irls_fit_impl(&design, y, family, None, check_support)?;
    let p = m + 1;
    let dispersion = match family {
        Family::Gaussian => {
            let pearson: f64 = y
                .iter()
                .zip(fit.mu.iter())
                .map(|(&yi, &mi)| (yi - mi) * (yi - mi))
                .sum();
            pearson / (n - p) as f64
        }
        _ => 1.0,
    };
    let mut xtwx = DMatrix::zeros(p, p);
    for i in 0..n {
        let d = family.mean_derivative(fit.mu[i]);
        let v = family.variance(fit.mu[i]);
        let w = d * d / v;
        let row = design.row(i);
        for a in 0..p {
            for b in a..p {
                xtwx[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtwx[(a, b)] = xtwx[(b, a)];
        }
    }
    let inv = nalgebra::Cholesky::new(xtwx)
        .ok_or(Error::RankDeficient { columns: Vec::new() })?
        .inverse();
    let covariance = inv * dispersion;
    let se_beta = covariance[(0, 0)].sqrt();
    Ok(FullFit {
        beta_hat: fit.coefficients[0],
        se_beta,
        coefficients: fit.coefficients,
        covariance,
        converged: fit.converged,
        n,
        df_residual: n - p,
        family,
    })
}

/// Wald (or t, for gaussian) test of the coefficient of interest.
pub fn wald_test(fit: &FullFit) -> Result<(f64, f64)> {
    if !fit.converged {
        return Err(Error::NonConvergence {
            iterations: MAX_ITER,
            reason: "Wald test requires a converged fit".into(),
        });
    }
    let stat = fit.beta_hat / fit.se_beta;
    let p = match fit.family {
        Family::Gaussian => {
            let t = StudentsT::new(0.0, 1.0, fit.df_residual as f64)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            2.0 * t.cdf(-stat.abs())
        }
        _ => {
            let norm = Normal::new(0.0, 1.0).unwrap();
            2.0 * norm.cdf(-stat.abs())
        }
    };
    Ok((stat, p.clamp(0.0, 1.0)))
}
