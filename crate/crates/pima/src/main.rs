//! Command-line interface: single-spec tests, multiverse analyses,
//! simulation scenarios, and side-by-side method comparisons.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pima::competitors::{
    bonferroni, glm_case_bootstrap, median_combined, stouffer, BootstrapOptions,
};
use pima::config::MultiverseConfig;
use pima::data::Dataset;
use pima::error::{Error, Result};
use pima::glm::{fit_full, wald_test, Family};
use pima::multiverse::{
    combine, expand_spec, grouped_posthoc, maxt_adjusted_pvalues, multiverse_scores,
    raw_pvalues, tdp_lower_bound, AbsScores, CombineMethod, ModelSpec, SpecFailure,
};
use pima::signflip::FlipMatrix;
use pima::sim::{run_simulation, Method, Scenario, ScenarioKind};

#[derive(Parser)]
#[command(
    name = "pima",
    version,
    about = "Sign-flip score tests across a multiverse of model specifications"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single-specification sign-flip score test.
    Test(AnalyzeArgs),
    /// Run the full multiverse analysis: global, per-spec, and group inference.
    Multiverse(AnalyzeArgs),
    /// Monte Carlo scenario runs.
    Simulate(SimulateArgs),
    /// Side-by-side comparison with parametric and bootstrap baselines.
    Compare(AnalyzeArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// CSV dataset; overrides the path in the spec file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Multiverse specification (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Significance level (default 0.05, or the spec file's value).
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of sign flips including the identity.
    #[arg(long = "B")]
    b: Option<usize>,
    /// Master seed; required here or in the spec file.
    #[arg(long)]
    seed: Option<u64>,
    /// Combining functions (comma separated: mean,max,fisher,liptak).
    #[arg(long, value_delimiter = ',')]
    combine: Vec<String>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
    /// Permit the known-invalid GLM bootstrap baseline.
    #[arg(long)]
    unsafe_glm_bootstrap: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// lm | binomial | poisson | negbin_fit_poisson | omitted_confounder | median_split
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 250)]
    n: usize,
    /// Coefficient of interest (0 = null).
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    #[arg(long = "B", default_value_t = 250)]
    b: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    seed: u64,
    /// Comma-separated method list.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "signflip_uni,parametric_uni,pima_mean,pima_max"
    )]
    methods: Vec<String>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    unsafe_glm_bootstrap: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage problems (including --help/--version, which clap treats
            // as "errors" with success status).
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Test(args) => run_test(args),
        Command::Multiverse(args) => run_multiverse(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Compare(args) => run_compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_)
        | Error::InvalidFamily(_)
        | Error::TooFewFlips(_)
        | Error::UnsafeGlmBootstrap => 1,
        Error::Data(_)
        | Error::Csv(_)
        | Error::Io(_)
        | Error::Json(_)
        | Error::InvalidResponse(_)
        | Error::InvalidSpec { .. } => 2,
        _ => 3,
    }
}

struct Analysis {
    alpha: f64,
    b: usize,
    seed: u64,
    specs: Vec<(String, ModelSpec)>,
    /// Indices into `specs` of the successfully scored specifications,
    /// aligned with `abs` rows.
    ok: Vec<usize>,
    abs: AbsScores,
    raw_p: Vec<f64>,
    adjusted_p: Vec<f64>,
    beta_hat: Vec<Option<f64>>,
    n_obs: Vec<usize>,
    failures: Vec<SpecFailure>,
    groups: Vec<(String, Vec<usize>)>,
    combiners: Vec<CombineMethod>,
    family: Family,
    data: Dataset,
}

fn run_analysis(args: &AnalyzeArgs) -> Result<Analysis> {
    let config = MultiverseConfig::from_path(&args.spec)?;
    let data_path = args
        .data
        .clone()
        .or_else(|| config.data.as_ref().map(PathBuf::from))
        .ok_or_else(|| {
            Error::InvalidArgument("no dataset: pass --data or set `data` in the spec".into())
        })?;
    let data = Dataset::from_csv_path(&data_path)?;
    let alpha = args.alpha.or(config.alpha).unwrap_or(0.05);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    let b = args.b.or(config.b).unwrap_or(1000);
    let seed = args.seed.or(config.seed).ok_or_else(|| {
        Error::InvalidArgument("a seed is required: pass --seed or set `seed` in the spec".into())
    })?;
    if (b as f64) < (1.0 / alpha).ceil() {
        eprintln!(
            "warning: B = {b} is below 1/alpha = {:.0}; the test cannot reject at level {alpha}",
            (1.0 / alpha).ceil()
        );
    }
    let combiners = if args.combine.is_empty() {
        CombineMethod::ALL.to_vec()
    } else {
        args.combine
            .iter()
            .map(|s| CombineMethod::parse(s))
            .collect::<Result<_>>()?
    };
    let family = config.family()?;
    let specs = config.expand()?;
    let spec_list: Vec<ModelSpec> = specs.iter().map(|(_, s)| s.clone()).collect();
    // Column references are shared by every specification; resolve them up
    // front so a typo is a data error rather than a wall of spec failures.
    for spec in &spec_list {
        data.column(&spec.response)?;
        match &spec.interest {
            pima::multiverse::Interest::Column(c) => data.column(c)?,
            pima::multiverse::Interest::Contrast { column, .. } => data.column(column)?,
        };
        for (c, _) in &spec.confounders {
            data.column(c)?;
        }
        for c in &spec.extra_dummies {
            data.column(c)?;
        }
        if let Some(f) = &spec.filter {
            data.column(&f.column)?;
        }
    }
    let flips = FlipMatrix::generate(data.n_obs(), b, seed, data.ids())?;
    let (scores, failures) = multiverse_scores(&spec_list, &data, &flips);
    for f in &failures {
        eprintln!("warning: specification `{}` failed: {}", f.spec_id, f.reason);
    }
    if scores.is_empty() {
        if let Some(path) = &args.out_json {
            let manifest = serde_json::json!({
                "failures": failures
                    .iter()
                    .map(|f| serde_json::json!({"spec_id": f.spec_id, "reason": f.reason}))
                    .collect::<Vec<_>>(),
            });
            std::fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
        }
        return Err(Error::NonConvergence {
            iterations: 0,
            reason: "every specification failed; see the failure manifest".into(),
        });
    }
    // Map surviving score tables back to their expansion positions.
    let mut ok = Vec::with_capacity(scores.len());
    let mut cursor = 0usize;
    for s in &scores {
        while specs[cursor].1.spec_id != s.table.spec_id {
            cursor += 1;
        }
        ok.push(cursor);
        cursor += 1;
    }
    let tables: Vec<_> = scores.iter().map(|s| &s.table).collect();
    let abs = AbsScores::from_tables(&tables)?;
    let raw_p = raw_pvalues(&abs);
    let adjusted_p = maxt_adjusted_pvalues(&abs);
    let beta_hat = scores.iter().map(|s| s.beta_hat).collect();
    let n_obs = scores.iter().map(|s| s.n_obs).collect();
    // Groups in first-appearance order over surviving specs.
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (row, &spec_idx) in ok.iter().enumerate() {
        let name = &specs[spec_idx].0;
        match groups.iter_mut().find(|(g, _)| g == name) {
            Some((_, idx)) => idx.push(row),
            None => groups.push((name.clone(), vec![row])),
        }
    }
    Ok(Analysis {
        alpha,
        b,
        seed,
        specs,
        ok,
        abs,
        raw_p,
        adjusted_p,
        beta_hat,
        n_obs,
        failures,
        groups,
        combiners,
        family,
        data,
    })
}

#[derive(Serialize)]
struct GlobalEntry {
    method: &'static str,
    statistic: f64,
    p: f64,
}

#[derive(Serialize)]
struct GroupEntry {
    name: String,
    n_specs: usize,
    global_p: f64,
    adjusted_p: f64,
    tdp_count: usize,
    tdp_proportion: f64,
}

#[derive(Serialize)]
struct TdpEntry {
    count: usize,
    proportion: f64,
}

#[derive(Serialize)]
struct FailureEntry {
    spec_id: String,
    reason: String,
}

#[derive(Serialize)]
struct Summary {
    alpha: f64,
    b: usize,
    seed: u64,
    n_specs: usize,
    n_failed: usize,
    global: Vec<GlobalEntry>,
    groups: Vec<GroupEntry>,
    tdp_all: TdpEntry,
    failures: Vec<FailureEntry>,
}

fn build_summary(a: &Analysis) -> Result<Summary> {
    let global = a
        .combiners
        .iter()
        .map(|&m| {
            let (stats, p) = combine(&a.abs, m)?;
            Ok(GlobalEntry {
                method: m.name(),
                statistic: stats[0],
                p,
            })
        })
        .collect::<Result<_>>()?;
    let group_results = grouped_posthoc(&a.groups, &a.abs)?;
    let groups = a
        .groups
        .iter()
        .zip(group_results.iter())
        .map(|((name, idx), r)| {
            let (count, prop) = tdp_lower_bound(&a.abs, idx, a.alpha)?;
            Ok(GroupEntry {
                name: name.clone(),
                n_specs: idx.len(),
                global_p: r.global_p,
                adjusted_p: r.adjusted_p,
                tdp_count: count,
                tdp_proportion: prop,
            })
        })
        .collect::<Result<_>>()?;
    let all: Vec<usize> = (0..a.abs.n_specs()).collect();
    let (count, prop) = tdp_lower_bound(&a.abs, &all, a.alpha)?;
    Ok(Summary {
        alpha: a.alpha,
        b: a.b,
        seed: a.seed,
        n_specs: a.abs.n_specs(),
        n_failed: a.failures.len(),
        global,
        groups,
        tdp_all: TdpEntry {
            count,
            proportion: prop,
        },
        failures: a
            .failures
            .iter()
            .map(|f| FailureEntry {
                spec_id: f.spec_id.clone(),
                reason: f.reason.clone(),
            })
            .collect(),
    })
}

fn write_spec_csv(a: &Analysis, path: &PathBuf) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "group",
        "spec_id",
        "n_obs",
        "beta_hat",
        "t_obs",
        "raw_p",
        "adjusted_p",
    ])?;
    for (row, &spec_idx) in a.ok.iter().enumerate() {
        let (group, spec) = &a.specs[spec_idx];
        w.write_record([
            group.clone(),
            spec.spec_id.clone(),
            a.n_obs[row].to_string(),
            a.beta_hat[row]
                .map(|b| format!("{b:.8}"))
                .unwrap_or_default(),
            format!("{:.8}", a.abs.observed(row)),
            format!("{:.8}", a.raw_p[row]),
            format!("{:.8}", a.adjusted_p[row]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn emit_outputs(a: &Analysis, args: &AnalyzeArgs) -> Result<()> {
    if let Some(path) = &args.out_csv {
        write_spec_csv(a, path)?;
    }
    if let Some(path) = &args.out_json {
        let summary = build_summary(a)?;
        let mut text = serde_json::to_string_pretty(&summary)?;
        text.push('\n');
        std::fs::write(path, text)?;
    }
    Ok(())
}

fn run_test(args: AnalyzeArgs) -> Result<()> {
    let analysis = run_analysis(&args)?;
    if analysis.specs.len() != 1 {
        return Err(Error::InvalidArgument(format!(
            "`test` expects a singleton specification, the spec file expands to {}",
            analysis.specs.len()
        )));
    }
    let t = analysis.abs.observed(0);
    let p = analysis.raw_p[0];
    let reject = (p * analysis.b as f64).round() as usize
        <= (analysis.alpha * analysis.b as f64).floor() as usize;
    println!(
        "spec {}: n = {}, standardized score = {:.6}, p = {:.6}, reject at alpha {} = {}",
        analysis.specs[0].1.spec_id, analysis.n_obs[0], t, p, analysis.alpha, reject
    );
    emit_outputs(&analysis, &args)
}

fn run_multiverse(args: AnalyzeArgs) -> Result<()> {
    let analysis = run_analysis(&args)?;
    let summary = build_summary(&analysis)?;
    println!(
        "{} specifications analyzed ({} failed), B = {}, alpha = {}",
        summary.n_specs, summary.n_failed, summary.b, summary.alpha
    );
    for g in &summary.global {
        println!("global [{}]: statistic = {:.6}, p = {:.6}", g.method, g.statistic, g.p);
    }
    for g in &summary.groups {
        println!(
            "group {}: K = {}, global p = {:.6}, adjusted p = {:.6}, TDP >= {}/{} ({:.1}%)",
            g.name,
            g.n_specs,
            g.global_p,
            g.adjusted_p,
            g.tdp_count,
            g.n_specs,
            100.0 * g.tdp_proportion
        );
    }
    emit_outputs(&analysis, &args)
}

fn run_compare(args: AnalyzeArgs) -> Result<()> {
    let analysis = run_analysis(&args)?;
    let gaussian = analysis.family == Family::Gaussian;
    let run_boot = gaussian || args.unsafe_glm_bootstrap;
    if !run_boot {
        eprintln!(
            "note: skipping the bootstrap baseline for a non-gaussian family; \
             pass --unsafe-glm-bootstrap to force it"
        );
    }
    let mut rows: Vec<(String, String, String)> = Vec::new();
    let mut wald_ps = Vec::new();
    for (row, &spec_idx) in analysis.ok.iter().enumerate() {
        let spec = &analysis.specs[spec_idx].1;
        let expanded = expand_spec(spec, &analysis.data)?;
        let wald_p = fit_full(&expanded.x, &expanded.z, &expanded.y, analysis.family)
            .ok()
            .and_then(|f| wald_test(&f).ok())
            .map(|(_, p)| p);
        if let Some(p) = wald_p {
            wald_ps.push(p);
        }
        let mut push = |method: &str, p: Option<f64>| {
            rows.push((
                spec.spec_id.clone(),
                method.to_string(),
                p.map(|p| format!("{p:.8}")).unwrap_or_default(),
            ));
        };
        push("signflip", Some(analysis.raw_p[row]));
        push("signflip_adjusted", Some(analysis.adjusted_p[row]));
        push("parametric", wald_p);
        if run_boot {
            let opts = BootstrapOptions {
                n_draws: analysis.b,
                seed: analysis.seed ^ (row as u64).wrapping_mul(0x9e3779b97f4a7c15),
                allow_unsafe_glm: args.unsafe_glm_bootstrap,
            };
            let boot = glm_case_bootstrap(
                &expanded.x,
                &expanded.z,
                &expanded.y,
                analysis.family,
                &opts,
            )
            .ok()
            .map(|o| o.p);
            push("bootstrap", boot);
        }
    }
    for &m in &analysis.combiners {
        let (_, p) = combine(&analysis.abs, m)?;
        rows.push((
            "(global)".into(),
            format!("pima_{}", m.name()),
            format!("{p:.8}"),
        ));
    }
    if !wald_ps.is_empty() {
        rows.push((
            "(global)".into(),
            "bonferroni_parametric".into(),
            format!("{:.8}", bonferroni(&wald_ps)?),
        ));
        rows.push((
            "(global)".into(),
            "stouffer_parametric".into(),
            format!("{:.8}", stouffer(&wald_ps)?),
        ));
        rows.push((
            "(global)".into(),
            "median_parametric".into(),
            format!("{:.8}", median_combined(&wald_ps)?),
        ));
    }
    let mut out: Box<dyn Write> = match &args.out_csv {
        Some(path) => Box::new(std::fs::File::create(path)?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(["spec_id", "method", "p"])?;
    for (spec_id, method, p) in rows {
        w.write_record([spec_id, method, p])?;
    }
    w.flush()?;
    drop(w);
    emit_outputs(&analysis, &args)
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let kind = ScenarioKind::parse(&args.scenario)?;
    let sc = Scenario::new(kind, args.n, args.beta)?;
    let methods: Vec<Method> = args
        .methods
        .iter()
        .map(|s| Method::parse(s))
        .collect::<Result<_>>()?;
    let table = run_simulation(
        &sc,
        args.reps,
        args.b,
        args.alpha,
        &methods,
        args.seed,
        args.unsafe_glm_bootstrap,
    )?;
    match &args.out_csv {
        Some(path) => table.write_csv(std::fs::File::create(path)?)?,
        None => table.write_csv(std::io::stdout())?,
    }
    Ok(())
}
