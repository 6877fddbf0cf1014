//! Longitudinal populations: subjects observed at an ordered set of timepoints.

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::matrix::ConnectivityMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectTrajectory {
    pub subject_id: String,
    /// Timepoint label to network, in acquisition order (baseline first).
    pub matrices: IndexMap<String, ConnectivityMatrix>,
}

impl SubjectTrajectory {
    pub fn new(subject_id: impl Into<String>) -> Self {
        Self {
            subject_id: subject_id.into(),
            matrices: IndexMap::new(),
        }
    }

    pub fn with(mut self, timepoint: impl Into<String>, x: ConnectivityMatrix) -> Self {
        self.matrices.insert(timepoint.into(), x);
        self
    }

    pub fn at(&self, timepoint: &str) -> Result<&ConnectivityMatrix> {
        self.matrices.get(timepoint).ok_or_else(|| {
            Error::Validation(format!(
                "subject {} has no network at timepoint {timepoint}",
                self.subject_id
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    n_rois: usize,
    timepoints: Vec<String>,
    subjects: Vec<SubjectTrajectory>,
}

impl Population {
    /// Checks that subject ids are unique, every subject has a baseline network,
    /// all networks share `n_rois`, and no subject carries an unknown timepoint.
    ///
    /// Subjects may lack follow-up networks; they can then only be used as
    /// test subjects (see [`Population::is_complete`]).
    pub fn new(
        n_rois: usize,
        timepoints: Vec<String>,
        subjects: Vec<SubjectTrajectory>,
    ) -> Result<Self> {
        if n_rois < 2 {
            return Err(Error::Validation(format!("n_rois must be >= 2, got {n_rois}")));
        }
        if timepoints.is_empty() {
            return Err(Error::Validation("population has no timepoints".into()));
        }
        for (i, t) in timepoints.iter().enumerate() {
            if timepoints[..i].contains(t) {
                return Err(Error::Validation(format!("duplicate timepoint label {t}")));
            }
        }
        for (i, s) in subjects.iter().enumerate() {
            if subjects[..i].iter().any(|o| o.subject_id == s.subject_id) {
                return Err(Error::Validation(format!(
                    "duplicate subject id {}",
                    s.subject_id
                )));
            }
            if !s.matrices.contains_key(&timepoints[0]) {
                return Err(Error::Validation(format!(
                    "subject {} has no baseline network ({})",
                    s.subject_id, timepoints[0]
                )));
            }
            for (t, x) in &s.matrices {
                if !timepoints.contains(t) {
                    return Err(Error::Validation(format!(
                        "subject {} has unknown timepoint {t}",
                        s.subject_id
                    )));
                }
                if x.n_rois() != n_rois {
                    return Err(Error::Validation(format!(
                        "subject {} at {t} has {} ROIs, expected {n_rois}",
                        s.subject_id,
                        x.n_rois()
                    )));
                }
            }
        }
        // keep each subject's map in population order
        let subjects = subjects
            .into_iter()
            .map(|mut s| {
                s.matrices
                    .sort_by_cached_key(|t, _| timepoints.iter().position(|p| p == t));
                s
            })
            .collect();
        Ok(Self {
            n_rois,
            timepoints,
            subjects,
        })
    }

    pub fn n_rois(&self) -> usize {
        self.n_rois
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn timepoints(&self) -> &[String] {
        &self.timepoints
    }

    pub fn baseline(&self) -> &str {
        &self.timepoints[0]
    }

    pub fn followups(&self) -> &[String] {
        &self.timepoints[1..]
    }

    pub fn subjects(&self) -> &[SubjectTrajectory] {
        &self.subjects
    }

    pub fn subject(&self, index: usize) -> &SubjectTrajectory {
        &self.subjects[index]
    }

    pub fn index_of(&self, subject_id: &str) -> Result<usize> {
        self.subjects
            .iter()
            .position(|s| s.subject_id == subject_id)
            .ok_or_else(|| Error::Validation(format!("unknown subject {subject_id}")))
    }

    pub fn is_complete(&self, index: usize) -> bool {
        self.subjects[index].matrices.len() == self.timepoints.len()
    }

    /// Errors unless every subject has a network at every timepoint.
    pub fn require_complete(&self) -> Result<()> {
        match (0..self.n_subjects()).find(|&i| !self.is_complete(i)) {
            None => Ok(()),
            Some(i) => {
                let s = &self.subjects[i];
                let missing = self
                    .timepoints
                    .iter()
                    .find(|t| !s.matrices.contains_key(*t))
                    .cloned()
                    .unwrap_or_default();
                Err(Error::Validation(format!(
                    "training subject {} is missing timepoint {missing}",
                    s.subject_id
                )))
            }
        }
    }

    /// The population with subject `index` removed.
    pub fn without(&self, index: usize) -> Population {
        let subjects = self
            .subjects
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != index)
            .map(|(_, s)| s.clone())
            .collect();
        Population {
            n_rois: self.n_rois,
            timepoints: self.timepoints.clone(),
            subjects,
        }
    }

    /// Networks of all subjects at one timepoint, in subject order.
    pub fn networks_at(&self, timepoint: &str) -> Result<Vec<&ConnectivityMatrix>> {
        self.subjects.iter().map(|s| s.at(timepoint)).collect()
    }

    pub fn map_networks(
        &self,
        mut f: impl FnMut(&ConnectivityMatrix) -> Result<ConnectivityMatrix>,
    ) -> Result<Population> {
        let subjects = self
            .subjects
            .iter()
            .map(|s| {
                let matrices = s
                    .matrices
                    .iter()
                    .map(|(t, x)| Ok((t.clone(), f(x)?)))
                    .collect::<Result<_>>()?;
                Ok(SubjectTrajectory {
                    subject_id: s.subject_id.clone(),
                    matrices,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Population {
            n_rois: self.n_rois,
            timepoints: self.timepoints.clone(),
            subjects,
        })
    }
}
