//! Population template estimation by per-edge medoid selection.
//!
//! For every ROI pair the subject whose edge value has the smallest summed
//! absolute distance to all other subjects' values donates that edge to the
//! template. Ties go to the lowest subject index.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ConnectivityMatrix;
use crate::population::Population;

#[derive(Debug, Clone, PartialEq)]
pub struct CbtResult {
    pub template: ConnectivityMatrix,
    /// `chosen_subject[(a, b)]` is the index of the subject whose value was kept.
    /// The diagonal is 0 and carries no meaning.
    pub chosen_subject: Array2<usize>,
}

impl CbtResult {
    pub fn chosen_rows(&self) -> Vec<Vec<usize>> {
        self.chosen_subject.rows().into_iter().map(|r| r.to_vec()).collect()
    }
}

/// JSON sidecar written next to a template CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbtSidecar {
    pub timepoint: String,
    pub subject_ids: Vec<String>,
    pub chosen_subject: Vec<Vec<usize>>,
}

/// Value of edge `(a, b)` for every subject at `timepoint`.
pub fn edge_values(population: &Population, timepoint: &str, a: usize, b: usize) -> Result<Vec<f64>> {
    if a == b {
        return Err(Error::InvalidInput(format!("edge ({a},{b}) is a self-loop")));
    }
    let n = population.n_rois();
    if a >= n || b >= n {
        return Err(Error::InvalidInput(format!(
            "edge ({a},{b}) out of range for {n} ROIs"
        )));
    }
    population
        .subjects()
        .iter()
        .map(|s| s.at(timepoint).map(|x| x.get(a, b)))
        .collect()
}

/// Subject-by-subject absolute distance graph for one edge.
pub fn high_order_graph(values: &[f64]) -> Array2<f64> {
    let n = values.len();
    Array2::from_shape_fn((n, n), |(j, k)| (values[j] - values[k]).abs())
}

/// Node strengths (row sums) of a high-order graph.
pub fn cumulative_distance(distances: &Array2<f64>) -> Vec<f64> {
    distances.rows().into_iter().map(|r| r.sum()).collect()
}

/// Relative slack under which two cumulative distances count as tied.
///
/// Mathematically equal sums (equal edge values, or the two central values of
/// an even-sized population) can differ in the last bits because they are
/// summed in different orders.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Indices whose cumulative distance is minimal, in ascending order.
pub fn tied_minimizers(cumulative: &[f64]) -> Vec<usize> {
    let best = cumulative.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = TIE_TOLERANCE * best.abs().max(f64::MIN_POSITIVE);
    (0..cumulative.len())
        .filter(|&j| cumulative[j] <= best + slack)
        .collect()
}

fn central_subject(values: &[f64]) -> usize {
    tied_minimizers(&cumulative_distance(&high_order_graph(values)))[0]
}

pub fn estimate_cbt(population: &Population, timepoint: &str) -> Result<CbtResult> {
    let n_s = population.n_subjects();
    if n_s < 2 {
        return Err(Error::InvalidInput(format!(
            "template estimation needs at least 2 subjects, got {n_s}"
        )));
    }
    let networks = population.networks_at(timepoint)?;
    let n = population.n_rois();
    let mut chosen = Array2::zeros((n, n));
    let mut values = vec![0.0; n_s];
    let template = ConnectivityMatrix::from_edges(n, |a, b| {
        for (v, x) in values.iter_mut().zip(&networks) {
            *v = x.get(a, b);
        }
        let j = central_subject(&values);
        chosen[[a, b]] = j;
        chosen[[b, a]] = j;
        values[j]
    })?;
    Ok(CbtResult {
        template,
        chosen_subject: chosen,
    })
}
