//! The multiverse layer: model specifications, preprocessing (contrasts,
//! splines, median splits, filters), shared-flip score computation across K
//! specifications, combining functions, maxT-adjusted p-values, closed
//! testing, TDP lower bounds, and grouped post-hoc correction.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{Column, Dataset};
use crate::error::{Error, Result};
use crate::glm::{fit_full, fit_null, Family};
use crate::signflip::{score_table, FlipMatrix, ScoreTable};

/// Maximum K for exact closed-testing enumeration.
pub const CLOSED_TESTING_MAX_K: usize = 20;

/// Confounder transformation choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// Cubic B-spline expansion with the given degrees of freedom (3 or 4).
    Bspline(usize),
    /// Indicator of lying in the upper half: value >= sample median maps to 1.
    MedianSplit,
}

impl Transform {
    pub fn label(&self) -> String {
        match self {
            Transform::Identity => "identity".into(),
            Transform::Bspline(df) => format!("bspline{df}"),
            Transform::MedianSplit => "median_split".into(),
        }
    }
}

/// Predictor-of-interest construction: a raw numeric column or a zero-centered
/// contrast over the levels of a categorical column.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Interest {
    Column(String),
    Contrast {
        column: String,
        /// Level -> weight. Levels absent from the map get weight 0 and a
        /// nuisance dummy, like explicitly zero-weighted levels.
        weights: BTreeMap<String, f64>,
    },
}

/// A pure row predicate over one column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowFilter {
    pub column: String,
    pub op: FilterOp,
    pub value: FilterValue,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FilterValue {
    Number(f64),
    Level(String),
}

impl RowFilter {
    fn keep(&self, column: &Column, i: usize) -> Result<bool> {
        match (&self.value, column) {
            (FilterValue::Number(v), Column::Numeric(vals)) => {
                let Some(x) = vals[i] else { return Ok(false) };
                Ok(match self.op {
                    FilterOp::Lt => x < *v,
                    FilterOp::Le => x <= *v,
                    FilterOp::Gt => x > *v,
                    FilterOp::Ge => x >= *v,
                    FilterOp::Eq => x == *v,
                    FilterOp::Ne => x != *v,
                })
            }
            (FilterValue::Level(level), Column::Categorical { .. }) => {
                let Some(actual) = column.level_at(i) else { return Ok(false) };
                Ok(match self.op {
                    FilterOp::Eq => actual == level,
                    FilterOp::Ne => actual != level,
                    _ => {
                        return Err(Error::Data(
                            "ordered comparisons are not defined for categorical filters".into(),
                        ))
                    }
                })
            }
            _ => Err(Error::Data(format!(
                "filter value type does not match column `{}`",
                self.column
            ))),
        }
    }
}

/// One universe of the multiverse: response, predictor-of-interest
/// construction, confounder transformations, and family.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub spec_id: String,
    pub response: String,
    pub filter: Option<RowFilter>,
    pub interest: Interest,
    pub confounders: Vec<(String, Transform)>,
    /// Categorical columns expanded to indicator nuisance columns.
    pub extra_dummies: Vec<String>,
    pub family: Family,
}

/// Design data for one specification after filtering and transformation.
#[derive(Debug, Clone)]
pub struct ExpandedSpec {
    pub x: DVector<f64>,
    /// Nuisance design; always begins with an intercept column.
    pub z: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Surviving observation IDs, for flip alignment.
    pub ids: Vec<u64>,
    /// Rows dropped because of missingness in a used column.
    pub n_dropped_missing: usize,
}

fn numeric_values(data: &Dataset, name: &str) -> Result<()> {
    match data.column(name)? {
        Column::Numeric(_) => Ok(()),
        Column::Categorical { .. } => Err(Error::Data(format!(
            "column `{name}` must be numeric in this position"
        ))),
    }
}

fn numeric_at(column: &Column, i: usize) -> f64 {
    match column {
        Column::Numeric(v) => v[i].expect("missingness filtered earlier"),
        Column::Categorical { .. } => unreachable!("numeric column expected"),
    }
}

/// Materializes one specification into (x, z, y) over the surviving rows.
pub fn expand_spec(spec: &ModelSpec, data: &Dataset) -> Result<ExpandedSpec> {
    let fail = |reason: String| Error::InvalidSpec {
        spec_id: spec.spec_id.clone(),
        reason,
    };

    // Columns the spec touches; rows missing any of them are dropped.
    let mut used: Vec<&str> = vec![&spec.response];
    let interest_col = match &spec.interest {
        Interest::Column(c) => c.as_str(),
        Interest::Contrast { column, .. } => column.as_str(),
    };
    used.push(interest_col);
    for (c, _) in &spec.confounders {
        used.push(c);
    }
    for c in &spec.extra_dummies {
        used.push(c);
    }
    if let Some(f) = &spec.filter {
        used.push(&f.column);
    }
    for name in &used {
        data.column(name).map_err(|e| fail(e.to_string()))?;
    }
    numeric_values(data, &spec.response).map_err(|e| fail(e.to_string()))?;

    let n_total = data.n_obs();
    let mut rows: Vec<usize> = Vec::with_capacity(n_total);
    let mut n_dropped_missing = 0usize;
    for i in 0..n_total {
        if used.iter().any(|name| data.column(name).unwrap().is_missing(i)) {
            n_dropped_missing += 1;
            continue;
        }
        if let Some(filter) = &spec.filter {
            let col = data.column(&filter.column)?;
            if !filter.keep(col, i).map_err(|e| fail(e.to_string()))? {
                continue;
            }
        }
        rows.push(i);
    }
    if rows.is_empty() {
        return Err(fail("no observations survive the row filter".into()));
    }
    let n = rows.len();
    let ids: Vec<u64> = rows.iter().map(|&i| data.ids()[i]).collect();

    let y_col = data.column(&spec.response)?;
    let y = DVector::from_fn(n, |i, _| numeric_at(y_col, rows[i]));

    // Predictor of interest, plus any dummies contributed to the nuisance
    // design by uninvolved contrast levels.
    let mut contrast_dummies: Vec<DVector<f64>> = Vec::new();
    let x = match &spec.interest {
        Interest::Column(name) => {
            numeric_values(data, name).map_err(|e| fail(e.to_string()))?;
            let col = data.column(name)?;
            DVector::from_fn(n, |i, _| numeric_at(col, rows[i]))
        }
        Interest::Contrast { column, weights } => {
            let col = data.column(column)?;
            let Column::Categorical { levels, .. } = col else {
                return Err(fail(format!("contrast column `{column}` must be categorical")));
            };
            for level in weights.keys() {
                if !levels.contains(level) {
                    return Err(fail(format!(
                        "contrast references level `{level}` absent from `{column}`"
                    )));
                }
            }
            let nonzero: Vec<&String> =
                weights.iter().filter(|(_, &w)| w != 0.0).map(|(l, _)| l).collect();
            if nonzero.len() > 1 {
                let total: f64 = weights.values().sum();
                if total.abs() > 1e-12 {
                    return Err(fail(format!("contrast weights must sum to 0, got {total}")));
                }
            }
            // A dummy for every level not involved in the comparison.
            for level in levels {
                let involved = weights.get(level).map(|&w| w != 0.0).unwrap_or(false);
                if !involved {
                    let present = rows
                        .iter()
                        .any(|&i| col.level_at(i) == Some(level.as_str()));
                    if present {
                        contrast_dummies.push(DVector::from_fn(n, |i, _| {
                            (col.level_at(rows[i]) == Some(level.as_str())) as u8 as f64
                        }));
                    }
                }
            }
            DVector::from_fn(n, |i, _| {
                let level = col.level_at(rows[i]).expect("missingness filtered");
                weights.get(level).copied().unwrap_or(0.0)
            })
        }
    };

    // Nuisance design: intercept, contrast dummies, transformed confounders,
    // extra categorical dummies.
    let mut z_cols: Vec<DVector<f64>> = vec![DVector::from_element(n, 1.0)];
    z_cols.extend(contrast_dummies);
    for (name, transform) in &spec.confounders {
        numeric_values(data, name).map_err(|e| fail(e.to_string()))?;
        let col = data.column(name)?;
        let raw = DVector::from_fn(n, |i, _| numeric_at(col, rows[i]));
        match transform {
            Transform::Identity => z_cols.push(raw),
            Transform::Bspline(df) => {
                let basis =
                    crate::spline::bspline_basis(&raw, *df).map_err(|e| fail(e.to_string()))?;
                for j in 0..basis.ncols() {
                    z_cols.push(basis.column(j).into_owned());
                }
            }
            Transform::MedianSplit => z_cols.push(median_split(&raw)),
        }
    }
    for name in &spec.extra_dummies {
        let col = data.column(name)?;
        let Column::Categorical { levels, .. } = col else {
            return Err(fail(format!("dummy column `{name}` must be categorical")));
        };
        // First observed level is the baseline.
        for level in levels.iter().skip(1) {
            let present = rows.iter().any(|&i| col.level_at(i) == Some(level.as_str()));
            if present {
                z_cols.push(DVector::from_fn(n, |i, _| {
                    (col.level_at(rows[i]) == Some(level.as_str())) as u8 as f64
                }));
            }
        }
    }

    let m = z_cols.len();
    if n <= m + 1 {
        return Err(fail(format!(
            "only {n} observations survive for {m} nuisance columns"
        )));
    }
    let mut z = DMatrix::zeros(n, m);
    for (j, col) in z_cols.into_iter().enumerate() {
        z.set_column(j, &col);
    }
    Ok(ExpandedSpec {
        x,
        z,
        y,
        ids,
        n_dropped_missing,
    })
}

/// Upper-half indicator: values at or above the sample median map to 1.
pub fn median_split(x: &DVector<f64>) -> DVector<f64> {
    let mut sorted: Vec<f64> = x.iter().copied().collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    x.map(|v| (v >= median) as u8 as f64)
}

/// Score computation output for one successfully fitted specification.
#[derive(Debug, Clone)]
pub struct SpecScores {
    pub table: ScoreTable,
    /// Joint-fit effect estimate, for reporting; absent when the full fit
    /// does not converge.
    pub beta_hat: Option<f64>,
    pub n_obs: usize,
    pub n_dropped_missing: usize,
}

/// A specification excluded from combination, with the reason.
#[derive(Debug, Clone)]
pub struct SpecFailure {
    pub spec_id: String,
    pub reason: String,
}

/// Computes score tables for all specifications from one shared flip matrix.
/// Specifications that drop observations use the flip sub-matrix restricted
/// to their surviving IDs, so the same observation always receives the same
/// sign across specifications.
pub fn multiverse_scores(
    specs: &[ModelSpec],
    data: &Dataset,
    flips: &FlipMatrix,
) -> (Vec<SpecScores>, Vec<SpecFailure>) {
    let results: Vec<std::result::Result<SpecScores, SpecFailure>> = specs
        .par_iter()
        .map(|spec| {
            let run = || -> Result<SpecScores> {
                let expanded = expand_spec(spec, data)?;
                let fit = fit_null(&expanded.z, &expanded.y, spec.family)?;
                if !fit.converged {
                    return Err(Error::NonConvergence {
                        iterations: fit.iterations,
                        reason: "null model IRLS did not converge".into(),
                    });
                }
                let sub_flips = flips.restrict(&expanded.ids)?;
                let table = score_table(
                    spec.spec_id.clone(),
                    &expanded.x,
                    &expanded.z,
                    &expanded.y,
                    &fit,
                    &sub_flips,
                )?;
                let beta_hat = fit_full(&expanded.x, &expanded.z, &expanded.y, spec.family)
                    .ok()
                    .filter(|f| f.converged)
                    .map(|f| f.beta_hat);
                Ok(SpecScores {
                    table,
                    beta_hat,
                    n_obs: expanded.y.len(),
                    n_dropped_missing: expanded.n_dropped_missing,
                })
            };
            run().map_err(|e| SpecFailure {
                spec_id: spec.spec_id.clone(),
                reason: e.to_string(),
            })
        })
        .collect();
    let mut scores = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(s) => scores.push(s),
            Err(f) => failures.push(f),
        }
    }
    (scores, failures)
}

/// K x B matrix of absolute standardized scores |T_k^b|; column 0 holds the
/// observed statistics.
#[derive(Debug, Clone)]
pub struct AbsScores {
    rows: Vec<Vec<f64>>,
    b: usize,
}

impl AbsScores {
    pub fn from_tables(tables: &[&ScoreTable]) -> Result<AbsScores> {
        if tables.is_empty() {
            return Err(Error::InvalidArgument("no score tables to combine".into()));
        }
        let b = tables[0].t_std.len();
        for t in tables {
            if t.t_std.len() != b {
                return Err(Error::DimensionMismatch(
                    "score tables disagree on the number of flips".into(),
                ));
            }
        }
        Ok(AbsScores {
            rows: tables
                .iter()
                .map(|t| t.t_std.iter().map(|v| v.abs()).collect())
                .collect(),
            b,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<AbsScores> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("empty score matrix".into()));
        }
        let b = rows[0].len();
        if b < 2 || rows.iter().any(|r| r.len() != b) {
            return Err(Error::DimensionMismatch("ragged score matrix".into()));
        }
        Ok(AbsScores {
            rows: rows
                .into_iter()
                .map(|r| r.into_iter().map(f64::abs).collect())
                .collect(),
            b,
        })
    }

    pub fn n_specs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_flips(&self) -> usize {
        self.b
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }

    pub fn observed(&self, k: usize) -> f64 {
        self.rows[k][0]
    }

    /// Restricts to a subset of spec rows (for grouped statistics).
    pub fn subset(&self, indices: &[usize]) -> Result<AbsScores> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("empty spec subset".into()));
        }
        Ok(AbsScores {
            rows: indices.iter().map(|&k| self.rows[k].clone()).collect(),
            b: self.b,
        })
    }
}

/// Combining functions for the global test statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineMethod {
    Mean,
    Max,
    Fisher,
    Liptak,
}

impl CombineMethod {
    pub const ALL: [CombineMethod; 4] = [
        CombineMethod::Mean,
        CombineMethod::Max,
        CombineMethod::Fisher,
        CombineMethod::Liptak,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CombineMethod::Mean => "mean",
            CombineMethod::Max => "max",
            CombineMethod::Fisher => "fisher",
            CombineMethod::Liptak => "liptak",
        }
    }

    pub fn parse(s: &str) -> Result<CombineMethod> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(CombineMethod::Mean),
            "max" => Ok(CombineMethod::Max),
            "fisher" => Ok(CombineMethod::Fisher),
            "liptak" | "stouffer" => Ok(CombineMethod::Liptak),
            other => Err(Error::InvalidArgument(format!(
                "unknown combining function `{other}`"
            ))),
        }
    }
}

/// Per-flip rank p-values within one row: p^b = (1/B) #{c : v_c >= v_b}.
fn row_rank_pvalues(row: &[f64]) -> Vec<f64> {
    let b = row.len();
    let mut sorted = row.to_vec();
    sorted.sort_by(|a, c| a.total_cmp(c));
    row.iter()
        .map(|v| {
            let below = sorted.partition_point(|s| s < v);
            (b - below) as f64 / b as f64
        })
        .collect()
}

/// Global combined statistics T^b and the global p-value
/// p = (1/B) #{b : T^b >= T^1}.
pub fn combine(abs: &AbsScores, method: CombineMethod) -> Result<(Vec<f64>, f64)> {
    let k = abs.n_specs();
    let b = abs.n_flips();
    let stats: Vec<f64> = match method {
        CombineMethod::Mean => (0..b)
            .map(|j| abs.rows.iter().map(|r| r[j]).sum::<f64>() / k as f64)
            .collect(),
        CombineMethod::Max => (0..b)
            .map(|j| abs.rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max))
            .collect(),
        CombineMethod::Fisher | CombineMethod::Liptak => {
            let pvals: Vec<Vec<f64>> = abs.rows.iter().map(|r| row_rank_pvalues(r)).collect();
            let norm = Normal::new(0.0, 1.0).unwrap();
            // zeta(1) is infinite; replace p = 1 by 1 - 1/(2B).
            let cap = 1.0 - 1.0 / (2.0 * b as f64);
            (0..b)
                .map(|j| match method {
                    CombineMethod::Fisher => {
                        -2.0 * pvals.iter().map(|p| p[j].ln()).sum::<f64>()
                    }
                    _ => -pvals
                        .iter()
                        .map(|p| norm.inverse_cdf(p[j].min(cap)))
                        .sum::<f64>(),
                })
                .collect()
        }
    };
    let observed = stats[0];
    let count = stats.iter().filter(|&&s| s >= observed).count();
    Ok((stats, count as f64 / b as f64))
}

/// Free step-down maxT adjusted p-values, one per specification, in the
/// original order. Monotone in the observed statistic ordering and never
/// below the raw rank p-values.
pub fn maxt_adjusted_pvalues(abs: &AbsScores) -> Vec<f64> {
    counts_to_p(&maxt_adjusted_counts(abs), abs.n_flips())
}

fn counts_to_p(counts: &[usize], b: usize) -> Vec<f64> {
    counts.iter().map(|&c| c as f64 / b as f64).collect()
}

/// Step-down maxT exceedance counts c_k with p_k = c_k / B. Integer counts
/// keep rejection decisions exact: reject iff c_k <= floor(alpha * B).
pub fn maxt_adjusted_counts(abs: &AbsScores) -> Vec<usize> {
    let k = abs.n_specs();
    let b = abs.n_flips();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| abs.observed(j).total_cmp(&abs.observed(i)));
    // Suffix maxima over the descending order: at step j the max is over the
    // specs not yet rejected.
    let mut suffix_counts = vec![0usize; k];
    let mut running_max = vec![f64::NEG_INFINITY; b];
    for j in (0..k).rev() {
        let row = abs.row(order[j]);
        for (m, &v) in running_max.iter_mut().zip(row.iter()) {
            if v > *m {
                *m = v;
            }
        }
        let observed = abs.observed(order[j]);
        suffix_counts[j] = running_max.iter().filter(|&&m| m >= observed).count();
    }
    // Enforce monotonicity down the ordering.
    let mut running = 0usize;
    let mut out = vec![0usize; k];
    for j in 0..k {
        running = running.max(suffix_counts[j]);
        out[order[j]] = running;
    }
    out
}

/// Rejection set of the step-down maxT procedure at level alpha.
pub fn maxt_rejections(abs: &AbsScores, alpha: f64) -> Vec<bool> {
    let limit = (alpha * abs.n_flips() as f64).floor() as usize;
    maxt_adjusted_counts(abs)
        .iter()
        .map(|&c| c <= limit)
        .collect()
}

/// Raw per-spec rank p-values p_k = (1/B) #{b : |T_k^b| >= |T_k^1|}.
pub fn raw_pvalues(abs: &AbsScores) -> Vec<f64> {
    abs.rows
        .iter()
        .map(|row| {
            let obs = row[0];
            row.iter().filter(|&&v| v >= obs).count() as f64 / abs.b as f64
        })
        .collect()
}

/// Exhaustive closed testing over all nonempty subsets with the max local
/// test. Enumeration is guarded at K <= 20.
#[derive(Debug)]
pub struct ClosedTesting {
    k: usize,
    /// Indexed by subset bitmask; true when the local test rejects.
    locally_rejected: Vec<bool>,
    /// Per-hypothesis closed-testing rejections.
    pub rejected: Vec<bool>,
}

pub fn closed_testing_oracle(abs: &AbsScores, alpha: f64) -> Result<ClosedTesting> {
    let k = abs.n_specs();
    if k > CLOSED_TESTING_MAX_K {
        return Err(Error::TooManyHypotheses {
            got: k,
            max: CLOSED_TESTING_MAX_K,
        });
    }
    let b = abs.n_flips();
    // Order statistic index ceil((1-alpha) B), 1-based.
    let r = ((1.0 - alpha) * b as f64).ceil() as usize;
    let n_masks = 1usize << k;
    let mut locally_rejected = vec![false; n_masks];
    let mut maxima = vec![0.0f64; b];
    for mask in 1..n_masks {
        let mut observed = f64::NEG_INFINITY;
        maxima.iter_mut().for_each(|m| *m = f64::NEG_INFINITY);
        for j in 0..k {
            if mask >> j & 1 == 1 {
                let row = abs.row(j);
                for (m, &v) in maxima.iter_mut().zip(row.iter()) {
                    if v > *m {
                        *m = v;
                    }
                }
                observed = observed.max(abs.observed(j));
            }
        }
        let mut sorted = maxima.clone();
        let critical = if r >= 1 && r <= b {
            *sorted
                .select_nth_unstable_by(r - 1, |a, c| a.total_cmp(c))
                .1
        } else {
            f64::INFINITY
        };
        locally_rejected[mask] = observed > critical;
    }
    // H_j is rejected iff every subset containing j is locally rejected.
    let mut rejected = vec![true; k];
    for mask in 1..n_masks {
        if !locally_rejected[mask] {
            for (j, r) in rejected.iter_mut().enumerate() {
                if mask >> j & 1 == 1 {
                    *r = false;
                }
            }
        }
    }
    Ok(ClosedTesting {
        k,
        locally_rejected,
        rejected,
    })
}

impl ClosedTesting {
    /// Exact TDP lower bound for the index set S:
    /// d(S) = |S| - max{ |I| : I subset of S, I not locally rejected }.
    pub fn tdp_exact(&self, s: &[usize]) -> Result<usize> {
        if s.is_empty() {
            return Err(Error::InvalidArgument("empty TDP query set".into()));
        }
        let mut mask = 0usize;
        for &j in s {
            if j >= self.k {
                return Err(Error::InvalidArgument(format!("spec index {j} out of range")));
            }
            mask |= 1 << j;
        }
        let mut largest_surviving = 0usize;
        let mut sub = mask;
        loop {
            if sub != 0 && !self.locally_rejected[sub] {
                largest_surviving = largest_surviving.max(sub.count_ones() as usize);
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & mask;
        }
        Ok(s.len() - largest_surviving)
    }
}

/// Lower (1-alpha)-confidence bound on the number and proportion of true
/// discoveries within S. Exact closed-testing enumeration when K <= 20,
/// otherwise the step-down counting bound (the number of maxT rejections in
/// S), which is closed-testing valid under max combining.
pub fn tdp_lower_bound(abs: &AbsScores, s: &[usize], alpha: f64) -> Result<(usize, f64)> {
    if s.is_empty() {
        return Err(Error::InvalidArgument("empty TDP query set".into()));
    }
    let count = if abs.n_specs() <= CLOSED_TESTING_MAX_K {
        closed_testing_oracle(abs, alpha)?.tdp_exact(s)?
    } else {
        let rejections = maxt_rejections(abs, alpha);
        s.iter().filter(|&&k| rejections[k]).count()
    };
    Ok((count, count as f64 / s.len() as f64))
}

/// Group-level inference for multiple contrasts sharing one flip matrix:
/// within each group the specs are combined by max, across groups the group
/// statistics get step-down maxT adjustment (two-level max).
#[derive(Debug, Clone)]
pub struct GroupResult {
    pub name: String,
    pub observed: f64,
    pub global_p: f64,
    pub adjusted_p: f64,
}

pub fn grouped_posthoc(
    groups: &[(String, Vec<usize>)],
    abs: &AbsScores,
) -> Result<Vec<GroupResult>> {
    if groups.is_empty() {
        return Err(Error::InvalidArgument("no groups".into()));
    }
    let b = abs.n_flips();
    let mut rows = Vec::with_capacity(groups.len());
    for (name, indices) in groups {
        if indices.is_empty() {
            return Err(Error::InvalidArgument(format!("group `{name}` is empty")));
        }
        let mut row = vec![f64::NEG_INFINITY; b];
        for &k in indices {
            if k >= abs.n_specs() {
                return Err(Error::InvalidArgument(format!(
                    "group `{name}` references spec index {k} out of range"
                )));
            }
            for (m, &v) in row.iter_mut().zip(abs.row(k).iter()) {
                if v > *m {
                    *m = v;
                }
            }
        }
        rows.push(row);
    }
    let group_abs = AbsScores::from_rows(rows)?;
    let raw = raw_pvalues(&group_abs);
    let adjusted = maxt_adjusted_pvalues(&group_abs);
    Ok(groups
        .iter()
        .enumerate()
        .map(|(g, (name, _))| GroupResult {
            name: name.clone(),
            observed: group_abs.observed(g),
            global_p: raw[g],
            adjusted_p: adjusted[g],
        })
        .collect())
}
