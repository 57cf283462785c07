//! Cross-module invariants: dropping rows inside a specification (filters or
//! missing data) must give the same inference as analyzing a pre-filtered
//! dataset with the flip rows matched by observation ID.

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use pima::data::{Column, Dataset};
use pima::glm::{fit_null, Family};
use pima::multiverse::{
    expand_spec, multiverse_scores, FilterOp, FilterValue, Interest, ModelSpec, RowFilter,
    Transform,
};
use pima::signflip::{score_table, FlipMatrix, ScoreTable};

/// A single-model run on an already-materialized dataset, using a flip
/// matrix restricted to the surviving observations.
fn fresh_run(data: &Dataset, flips: &FlipMatrix) -> ScoreTable {
    let expanded = expand_spec(&spec(None), data).unwrap();
    let fit = fit_null(&expanded.z, &expanded.y, Family::Gaussian).unwrap();
    score_table(
        "fresh".to_string(),
        &expanded.x,
        &expanded.z,
        &expanded.y,
        &fit,
        flips,
    )
    .unwrap()
}

fn numeric(values: Vec<f64>) -> Column {
    Column::Numeric(values.into_iter().map(Some).collect())
}

fn toy_columns(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let x: Vec<f64> = z
        .iter()
        .map(|&zi| 0.5 * zi + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let y: Vec<f64> = z
        .iter()
        .zip(x.iter())
        .map(|(&zi, &xi)| 1.5 * zi + 0.2 * xi + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    (y, x, z, w)
}

fn spec(filter: Option<RowFilter>) -> ModelSpec {
    ModelSpec {
        spec_id: "s".into(),
        response: "y".into(),
        filter,
        interest: Interest::Column("x".into()),
        confounders: vec![("z".into(), Transform::Identity)],
        extra_dummies: vec![],
        family: Family::Gaussian,
    }
}

#[test]
fn filtered_spec_matches_fresh_run_on_filtered_data() {
    let n = 48;
    let (y, x, z, w) = toy_columns(n, 11);
    let full = Dataset::new(vec![
        ("y".into(), numeric(y.clone())),
        ("x".into(), numeric(x.clone())),
        ("z".into(), numeric(z.clone())),
        ("w".into(), numeric(w.clone())),
    ])
    .unwrap();
    let flips = FlipMatrix::generate(n, 128, 5, full.ids()).unwrap();

    let filter = RowFilter {
        column: "w".into(),
        op: FilterOp::Lt,
        value: FilterValue::Number(0.6),
    };
    let (scores, failures) =
        multiverse_scores(&[spec(Some(filter))], &full, &flips);
    assert!(failures.is_empty(), "{failures:?}");
    let filtered_in_place = &scores[0];

    // Fresh dataset containing only the surviving rows, with the original
    // observation IDs preserved through the shared flip matrix restriction.
    let keep: Vec<usize> = (0..n).filter(|&i| w[i] < 0.6).collect();
    assert!(keep.len() < n && keep.len() > 10);
    let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let small = Dataset::new(vec![
        ("y".into(), numeric(pick(&y))),
        ("x".into(), numeric(pick(&x))),
        ("z".into(), numeric(pick(&z))),
    ])
    .unwrap();
    let surviving_ids: Vec<u64> = keep.iter().map(|&i| full.ids()[i]).collect();
    let sub_flips = flips.restrict(&surviving_ids).unwrap();
    let fresh = fresh_run(&small, &sub_flips);

    assert_eq!(filtered_in_place.n_obs, keep.len());
    let a = &filtered_in_place.table.t_std;
    let b = &fresh.t_std;
    assert_eq!(a.len(), b.len());
    for (va, vb) in a.iter().zip(b.iter()) {
        assert!((va - vb).abs() < 1e-12, "{va} vs {vb}");
    }
}

#[test]
fn missing_rows_dropped_like_explicit_subset() {
    let n = 40;
    let (y, x, z, _) = toy_columns(n, 23);
    // Punch holes in the confounder: rows 3, 17, 31 go missing.
    let holes = [3usize, 17, 31];
    let mut z_missing: Vec<Option<f64>> = z.iter().copied().map(Some).collect();
    for &i in &holes {
        z_missing[i] = None;
    }
    let with_missing = Dataset::new(vec![
        ("y".into(), numeric(y.clone())),
        ("x".into(), numeric(x.clone())),
        ("z".into(), Column::Numeric(z_missing)),
    ])
    .unwrap();
    let flips = FlipMatrix::generate(n, 256, 9, with_missing.ids()).unwrap();
    let (scores, failures) = multiverse_scores(&[spec(None)], &with_missing, &flips);
    assert!(failures.is_empty(), "{failures:?}");
    assert_eq!(scores[0].n_dropped_missing, holes.len());
    assert_eq!(scores[0].n_obs, n - holes.len());

    let keep: Vec<usize> = (0..n).filter(|i| !holes.contains(i)).collect();
    let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let complete = Dataset::new(vec![
        ("y".into(), numeric(pick(&y))),
        ("x".into(), numeric(pick(&x))),
        ("z".into(), numeric(pick(&z))),
    ])
    .unwrap();
    let surviving_ids: Vec<u64> = keep.iter().map(|&i| with_missing.ids()[i]).collect();
    let sub_flips = flips.restrict(&surviving_ids).unwrap();
    let fresh = fresh_run(&complete, &sub_flips);

    let a: &DVector<f64> = &scores[0].table.t_std;
    let b: &DVector<f64> = &fresh.t_std;
    for (va, vb) in a.iter().zip(b.iter()) {
        assert!((va - vb).abs() < 1e-12, "{va} vs {vb}");
    }
}
