//! Cubic B-spline basis expansion for confounder transforms.
//!
//! Knots follow the quantile convention: boundary knots at the data min/max,
//! df-3 interior knots at quantiles (none for df = 3, the median for df = 4).
//! The returned matrix has df columns and excludes the intercept direction:
//! the full basis has df+1 functions and the first is dropped, so together
//! with an intercept the columns span the same cubic spline space.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const ORDER: usize = 4; // cubic

/// Type-7 sample quantile (linear interpolation between order statistics).
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Evaluates all `n_basis` cubic B-spline functions at `x` via the Cox-de Boor
/// recursion over the clamped knot vector `knots`.
fn basis_at(knots: &[f64], n_basis: usize, x: f64) -> Vec<f64> {
    let n_knots = knots.len();
    // Degree-0 indicators; the last non-degenerate interval is closed so the
    // right boundary point carries weight 1.
    let mut values: Vec<f64> = (0..n_knots - 1)
        .map(|i| {
            let in_half_open = knots[i] <= x && x < knots[i + 1];
            let closes_last = x == knots[n_knots - 1]
                && knots[i] < knots[i + 1]
                && knots[i + 1] == knots[n_knots - 1];
            if in_half_open || closes_last {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    for k in 2..=ORDER {
        for i in 0..n_knots - k {
            let left_den = knots[i + k - 1] - knots[i];
            let right_den = knots[i + k] - knots[i + 1];
            let left = if left_den > 0.0 {
                (x - knots[i]) / left_den * values[i]
            } else {
                0.0
            };
            let right = if right_den > 0.0 {
                (knots[i + k] - x) / right_den * values[i + 1]
            } else {
                0.0
            };
            values[i] = left + right;
        }
    }
    values.truncate(n_basis);
    values
}

/// Clamped knot vector for the requested df over the observed data range.
fn knot_vector(sorted: &[f64], df: usize) -> Vec<f64> {
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    let n_interior = df - (ORDER - 1);
    let mut knots = vec![min; ORDER];
    for j in 1..=n_interior {
        knots.push(quantile(sorted, j as f64 / (n_interior + 1) as f64));
    }
    knots.extend(std::iter::repeat(max).take(ORDER));
    knots
}

/// Full clamped basis (df + 1 functions, rows sum to 1). The public
/// [`bspline_basis`] drops the first function.
fn full_basis(x: &DVector<f64>, df: usize) -> Result<DMatrix<f64>> {
    if !(df == 3 || df == 4) {
        return Err(Error::Spline(format!("df must be 3 or 4, got {df}")));
    }
    let mut sorted: Vec<f64> = x.iter().copied().collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut distinct = 1;
    for w in sorted.windows(2) {
        if w[1] > w[0] {
            distinct += 1;
        }
    }
    if distinct < df {
        return Err(Error::Spline(format!(
            "need at least {df} distinct values, found {distinct}"
        )));
    }
    let knots = knot_vector(&sorted, df);
    let n_basis = df + 1;
    let mut out = DMatrix::zeros(x.len(), n_basis);
    for (i, &xi) in x.iter().enumerate() {
        let row = basis_at(&knots, n_basis, xi);
        for (j, v) in row.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// Cubic B-spline expansion with `df` columns and no intercept direction.
/// Every entry lies in [0,1] and each row sums to at most 1.
pub fn bspline_basis(x: &DVector<f64>, df: usize) -> Result<DMatrix<f64>> {
    let full = full_basis(x, df)?;
    Ok(full.columns(1, df).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, lo: f64, hi: f64) -> DVector<f64> {
        DVector::from_fn(n, |i, _| lo + (hi - lo) * i as f64 / (n - 1) as f64)
    }

    #[test]
    fn endpoint_property_first_basis_is_one_at_min() {
        let x = grid(50, -2.0, 3.0);
        for df in [3, 4] {
            let full = full_basis(&x, df).unwrap();
            assert!((full[(0, 0)] - 1.0).abs() < 1e-12);
            for j in 1..=df {
                assert!(full[(0, j)].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rows_partition_unity_in_full_basis() {
        let x = grid(101, 0.0, 1.0);
        for df in [3, 4] {
            let full = full_basis(&x, df).unwrap();
            let reduced = bspline_basis(&x, df).unwrap();
            assert_eq!(reduced.ncols(), df);
            for i in 0..x.len() {
                let full_sum: f64 = (0..=df).map(|j| full[(i, j)]).sum();
                assert!((full_sum - 1.0).abs() < 1e-12);
                let reduced_sum: f64 = (0..df).map(|j| reduced[(i, j)]).sum();
                assert!(reduced_sum <= 1.0 + 1e-12);
                for j in 0..df {
                    assert!((-1e-12..=1.0 + 1e-12).contains(&reduced[(i, j)]));
                }
            }
        }
    }

    #[test]
    fn reproduces_cubic_polynomials_with_intercept() {
        let x = grid(200, -1.0, 2.0);
        for df in [3, 4] {
            let basis = bspline_basis(&x, df).unwrap();
            let n = x.len();
            let mut design = DMatrix::zeros(n, df + 1);
            for i in 0..n {
                design[(i, 0)] = 1.0;
                for j in 0..df {
                    design[(i, j + 1)] = basis[(i, j)];
                }
            }
            let target = DVector::from_fn(n, |i, _| {
                let t = x[i];
                0.5 - 1.3 * t + 0.7 * t * t + 0.25 * t * t * t
            });
            let xtx = design.transpose() * &design;
            let xty = design.transpose() * &target;
            let coef = xtx.lu().solve(&xty).unwrap();
            let residual = &target - &design * coef;
            assert!(
                residual.amax() < 1e-8,
                "df {df} residual {}",
                residual.amax()
            );
        }
    }

    #[test]
    fn df4_interior_knot_at_median() {
        let x = grid(11, 0.0, 10.0);
        let mut sorted: Vec<f64> = x.iter().copied().collect();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let knots = knot_vector(&sorted, 4);
        assert_eq!(knots.len(), 9);
        assert!((knots[4] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn constant_x_rejected() {
        let x = DVector::from_element(20, 1.5);
        assert!(bspline_basis(&x, 3).is_err());
    }

    #[test]
    fn unsupported_df_rejected() {
        let x = grid(20, 0.0, 1.0);
        assert!(bspline_basis(&x, 5).is_err());
    }
}
