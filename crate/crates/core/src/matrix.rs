//! Weighted connectivity graphs and the entrywise metrics defined on them.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest tolerated |w(a,b) - w(b,a)| before a matrix is rejected as asymmetric.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// A symmetric, non-negative, zero-diagonal weighted adjacency matrix.
///
/// The invariants are checked once at construction; every method afterwards
/// may rely on them.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityMatrix {
    weights: Array2<f64>,
}

impl ConnectivityMatrix {
    /// Validates `weights` and symmetrizes it by averaging mirrored entries.
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        let (rows, cols) = weights.dim();
        if rows != cols {
            return Err(Error::Validation(format!(
                "connectivity matrix must be square, got {rows}x{cols}"
            )));
        }
        if rows == 0 {
            return Err(Error::Validation("connectivity matrix is empty".into()));
        }
        let mut weights = weights;
        for a in 0..rows {
            let d = weights[[a, a]];
            if !d.is_finite() || d.abs() > SYMMETRY_TOLERANCE {
                return Err(Error::Validation(format!(
                    "diagonal entry ({a},{a}) is {d}, expected 0"
                )));
            }
            weights[[a, a]] = 0.0;
            for b in (a + 1)..rows {
                let (u, l) = (weights[[a, b]], weights[[b, a]]);
                if !u.is_finite() || !l.is_finite() {
                    return Err(Error::Validation(format!(
                        "entry ({a},{b}) is not finite"
                    )));
                }
                if (u - l).abs() > SYMMETRY_TOLERANCE {
                    return Err(Error::Validation(format!(
                        "asymmetric entries ({a},{b})={u} and ({b},{a})={l}"
                    )));
                }
                if u < 0.0 || l < 0.0 {
                    return Err(Error::Validation(format!(
                        "negative weight at ({a},{b})"
                    )));
                }
                let w = if u == l { u } else { 0.5 * (u + l) };
                weights[[a, b]] = w;
                weights[[b, a]] = w;
            }
        }
        Ok(Self { weights })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: bad.len(),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let weights = Array2::from_shape_vec((n, n), flat)
            .map_err(|e| Error::Validation(e.to_string()))?;
        Self::new(weights)
    }

    pub fn zeros(n_rois: usize) -> Self {
        Self {
            weights: Array2::zeros((n_rois, n_rois)),
        }
    }

    /// Builds a matrix from an edge function evaluated once per unordered pair `a < b`.
    pub fn from_edges(n_rois: usize, mut edge: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut weights = Array2::zeros((n_rois, n_rois));
        for a in 0..n_rois {
            for b in (a + 1)..n_rois {
                let w = edge(a, b);
                weights[[a, b]] = w;
                weights[[b, a]] = w;
            }
        }
        Self::new(weights)
    }

    pub fn n_rois(&self) -> usize {
        self.weights.nrows()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.weights[[a, b]]
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    /// Upper-triangle entries `(a, b, w)` with `a < b`, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n_rois();
        (0..n).flat_map(move |a| ((a + 1)..n).map(move |b| (a, b, self.weights[[a, b]])))
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.weights * factor)
    }
}

/// Upper-triangle flattening of a connectivity matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Inverse of [`vectorize_upper`]. The ROI count is recovered from the length.
    pub fn to_matrix(&self) -> Result<ConnectivityMatrix> {
        let n = rois_for_edge_count(self.0.len()).ok_or_else(|| {
            Error::InvalidInput(format!(
                "{} is not a triangular number of edges",
                self.0.len()
            ))
        })?;
        let mut values = self.0.iter().copied();
        ConnectivityMatrix::from_edges(n, |_, _| values.next().unwrap_or(f64::NAN))
    }
}

fn rois_for_edge_count(len: usize) -> Option<usize> {
    // n(n-1)/2 == len
    let n = ((1.0 + (1.0 + 8.0 * len as f64).sqrt()) / 2.0).round() as usize;
    (n >= 2 && n * (n - 1) / 2 == len).then_some(n)
}

/// Morphological network: edge `(a, b)` is `|thickness[a] - thickness[b]|`.
pub fn build_mbn(thickness: &[f64]) -> Result<ConnectivityMatrix> {
    if thickness.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 regions, got {}",
            thickness.len()
        )));
    }
    if let Some(i) = thickness.iter().position(|t| !t.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "thickness value {i} is not finite"
        )));
    }
    ConnectivityMatrix::from_edges(thickness.len(), |a, b| (thickness[a] - thickness[b]).abs())
}

pub fn vectorize_upper(x: &ConnectivityMatrix) -> FeatureVector {
    FeatureVector(x.edges().map(|(_, _, w)| w).collect())
}

fn check_same_size(a: &ConnectivityMatrix, b: &ConnectivityMatrix) -> Result<()> {
    if a.n_rois() != b.n_rois() {
        return Err(Error::DimensionMismatch {
            expected: a.n_rois(),
            actual: b.n_rois(),
        });
    }
    Ok(())
}

fn off_diagonal_mean(
    a: &ConnectivityMatrix,
    b: &ConnectivityMatrix,
    f: impl Fn(f64) -> f64,
) -> Result<f64> {
    check_same_size(a, b)?;
    let n = a.n_rois();
    if n < 2 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += f(a.get(i, j) - b.get(i, j));
            }
        }
    }
    Ok(sum / (n * (n - 1)) as f64)
}

/// Mean absolute deviation over off-diagonal entries.
pub fn mad(a: &ConnectivityMatrix, b: &ConnectivityMatrix) -> Result<f64> {
    off_diagonal_mean(a, b, f64::abs)
}

/// Mean squared error over off-diagonal entries.
pub fn mse(a: &ConnectivityMatrix, b: &ConnectivityMatrix) -> Result<f64> {
    off_diagonal_mean(a, b, |d| d * d)
}

/// Affine map of the off-diagonal entries onto `[0, 1]`; a constant matrix maps to zero.
pub fn normalize_minmax(x: &ConnectivityMatrix) -> ConnectivityMatrix {
    let (lo, hi) = x
        .edges()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, _, w)| {
            (lo.min(w), hi.max(w))
        });
    let range = hi - lo;
    let mut weights = Array2::zeros(x.weights.dim());
    if range > 0.0 {
        for (a, b, w) in x.edges() {
            let v = (w - lo) / range;
            weights[[a, b]] = v;
            weights[[b, a]] = v;
        }
    }
    ConnectivityMatrix { weights }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> ConnectivityMatrix {
        ConnectivityMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn three(a: f64, b: f64, c: f64) -> ConnectivityMatrix {
        m(&[&[0.0, a, b], &[a, 0.0, c], &[b, c, 0.0]])
    }

    #[test]
    fn mbn_examples() {
        assert_eq!(build_mbn(&[2.5, 3.0]).unwrap(), m(&[&[0.0, 0.5], &[0.5, 0.0]]));
        assert_eq!(build_mbn(&[1.7, 1.7, 1.7]).unwrap(), ConnectivityMatrix::zeros(3));
        let x = build_mbn(&[1.0, 2.0, 4.0]).unwrap();
        assert_eq!((x.get(0, 1), x.get(0, 2), x.get(1, 2)), (1.0, 3.0, 2.0));
    }

    #[test]
    fn mbn_rejects_bad_input() {
        assert!(matches!(build_mbn(&[1.0, f64::NAN]), Err(Error::InvalidInput(_))));
        assert!(matches!(build_mbn(&[1.0, f64::INFINITY]), Err(Error::InvalidInput(_))));
        assert!(matches!(build_mbn(&[1.0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn vectorize_examples() {
        assert_eq!(vectorize_upper(&m(&[&[0.0, 1.0], &[1.0, 0.0]])).0, vec![1.0]);
        assert_eq!(vectorize_upper(&three(0.1, 0.2, 0.3)).0, vec![0.1, 0.2, 0.3]);
        assert_eq!(vectorize_upper(&ConnectivityMatrix::zeros(4)).0, vec![0.0; 6]);
    }

    #[test]
    fn metric_examples() {
        let a = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let b = m(&[&[0.0, 3.0], &[3.0, 0.0]]);
        assert_eq!(mad(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mad(&a, &b).unwrap(), 2.0);
        assert_eq!(mse(&a, &b).unwrap(), 4.0);

        let zero = ConnectivityMatrix::zeros(3);
        let diffs = three(1.0, 2.0, 3.0);
        // brute force over the six off-diagonal cells
        let cells = [1.0, 2.0, 1.0, 3.0, 2.0, 3.0];
        let mad_oracle = cells.iter().map(|d: &f64| d.abs()).sum::<f64>() / 6.0;
        let mse_oracle = cells.iter().map(|d| d * d).sum::<f64>() / 6.0;
        assert!((mad(&zero, &diffs).unwrap() - mad_oracle).abs() < 1e-12);
        assert!((mad_oracle - 2.0).abs() < 1e-12);
        assert!((mse(&zero, &diffs).unwrap() - mse_oracle).abs() < 1e-12);
        assert!((mse_oracle - 14.0 / 3.0).abs() < 1e-12);
        assert!((mse(&diffs, &zero).unwrap() - 4.666_666_7).abs() < 1e-6);
    }

    #[test]
    fn metrics_reject_mismatched_sizes() {
        let a = ConnectivityMatrix::zeros(2);
        let b = ConnectivityMatrix::zeros(3);
        assert!(matches!(mad(&a, &b), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(mse(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn minmax_examples() {
        let x = normalize_minmax(&three(1.0, 3.0, 3.0));
        assert_eq!(vectorize_upper(&x).0, vec![0.0, 1.0, 1.0]);
        assert_eq!(normalize_minmax(&three(2.0, 2.0, 2.0)), ConnectivityMatrix::zeros(3));
        let x = normalize_minmax(&three(2.0, 4.0, 6.0));
        let expected: Vec<f64> = [2.0, 4.0, 6.0].iter().map(|w| (w - 2.0) / 4.0).collect();
        assert_eq!(vectorize_upper(&x).0, expected);
        assert_eq!(expected, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn construction_validates_invariants() {
        assert!(ConnectivityMatrix::new(array![[0.0, 1.0], [2.0, 0.0]]).is_err());
        assert!(ConnectivityMatrix::new(array![[1.0, 1.0], [1.0, 0.0]]).is_err());
        assert!(ConnectivityMatrix::new(array![[0.0, -1.0], [-1.0, 0.0]]).is_err());
        assert!(ConnectivityMatrix::new(Array2::zeros((2, 3))).is_err());
        let x = ConnectivityMatrix::new(array![[0.0, 1.0], [1.0 + 5e-10, 0.0]]).unwrap();
        assert_eq!(x.get(0, 1), x.get(1, 0));
    }

    #[test]
    fn feature_vector_rejects_non_triangular_length() {
        assert!(FeatureVector(vec![1.0, 2.0]).to_matrix().is_err());
    }

    fn arb_matrix() -> impl Strategy<Value = ConnectivityMatrix> {
        (2usize..9).prop_flat_map(|n| {
            proptest::collection::vec(0.0f64..10.0, n * (n - 1) / 2)
                .prop_map(|v| FeatureVector(v).to_matrix().unwrap())
        })
    }

    proptest! {
        #[test]
        fn vectorize_roundtrip(x in arb_matrix()) {
            prop_assert_eq!(vectorize_upper(&x).to_matrix().unwrap(), x);
        }

        #[test]
        fn metrics_are_symmetric_and_zero_on_identity(
            (a, b) in (2usize..8).prop_flat_map(|n| {
                let e = n * (n - 1) / 2;
                (proptest::collection::vec(0.0f64..5.0, e), proptest::collection::vec(0.0f64..5.0, e))
            })
        ) {
            let a = FeatureVector(a).to_matrix().unwrap();
            let b = FeatureVector(b).to_matrix().unwrap();
            prop_assert_eq!(mad(&a, &a).unwrap(), 0.0);
            prop_assert_eq!(mse(&a, &a).unwrap(), 0.0);
            prop_assert_eq!(mad(&a, &b).unwrap(), mad(&b, &a).unwrap());
            prop_assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
            let e = mse(&a, &b).unwrap();
            prop_assert!(e >= 0.0);
            prop_assert_eq!(e == 0.0, a == b);
        }

        #[test]
        fn mbn_always_valid(t in proptest::collection::vec(-1e3f64..1e3, 2..12)) {
            let x = build_mbn(&t).unwrap();
            for a in 0..x.n_rois() {
                prop_assert_eq!(x.get(a, a), 0.0);
                for b in 0..x.n_rois() {
                    prop_assert_eq!(x.get(a, b), x.get(b, a));
                    prop_assert!(x.get(a, b) >= 0.0);
                }
            }
        }
    }
}
