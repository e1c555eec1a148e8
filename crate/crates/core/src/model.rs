//! Domain types shared by the estimators, the decision rules and the
//! simulation harness.
//!
//! Bayes factors are carried on the log scale (`log_bf`). The natural-scale
//! value is derived on demand and saturates to `+inf` for astronomically
//! large factors, which the estimators treat explicitly.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One hypothesis test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub id: String,
    /// Natural log of the null-based Bayes factor.
    pub log_bf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
}

impl TestRecord {
    /// Builds a record from a natural-scale Bayes factor.
    pub fn new(id: impl Into<String>, bf: f64) -> Self {
        Self {
            id: id.into(),
            log_bf: bf.ln(),
            z: None,
            se: None,
        }
    }

    pub fn from_log_bf(id: impl Into<String>, log_bf: f64) -> Self {
        Self {
            id: id.into(),
            log_bf,
            z: None,
            se: None,
        }
    }

    pub fn with_stats(mut self, z: f64, se: f64) -> Self {
        self.z = Some(z);
        self.se = Some(se);
        self
    }

    /// Natural-scale Bayes factor; `+inf` when it exceeds `f64::MAX`.
    pub fn bf(&self) -> f64 {
        self.log_bf.exp()
    }

    fn check(&self, index: usize) -> Result<()> {
        let fail = |message: &str| Error::InvalidRecord {
            index,
            id: self.id.clone(),
            message: message.to_string(),
        };
        // ln of a non-positive bf is NaN or -inf.
        if self.log_bf.is_nan() || self.log_bf == f64::NEG_INFINITY {
            return Err(fail("bf must be positive"));
        }
        if self.log_bf == f64::INFINITY {
            return Err(fail("bf must be finite"));
        }
        if let Some(z) = self.z {
            if !z.is_finite() {
                return Err(fail("z must be finite"));
            }
        }
        if let Some(se) = self.se {
            if !(se > 0.0 && se.is_finite()) {
                return Err(fail("se must be positive"));
            }
        }
        Ok(())
    }
}

/// Checks every record invariant and returns the records unchanged.
///
/// The error names the index and id of the first offending record.
pub fn validate_records(records: Vec<TestRecord>) -> Result<Vec<TestRecord>> {
    for (index, record) in records.iter().enumerate() {
        record.check(index)?;
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pi0Method {
    Ebf,
    Qbf,
    Storey,
    Fixed,
}

impl std::fmt::Display for Pi0Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Pi0Method::Ebf => "EBF",
            Pi0Method::Qbf => "QBF",
            Pi0Method::Storey => "STOREY",
            Pi0Method::Fixed => "FIXED",
        };
        f.write_str(name)
    }
}

/// Upper-bound estimate of the null proportion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pi0Estimate {
    pub pi0_hat: f64,
    pub method: Pi0Method,
    pub gamma: Option<f64>,
    /// Stopping index of the EBF scan.
    pub d0: Option<usize>,
    pub m: usize,
}

impl Pi0Estimate {
    pub(crate) fn ebf(d0: usize, m: usize) -> Self {
        Self {
            pi0_hat: d0 as f64 / m as f64,
            method: Pi0Method::Ebf,
            gamma: None,
            d0: Some(d0),
            m,
        }
    }

    /// Count-based estimate `min(1, count / (m * gamma))`.
    pub(crate) fn from_count(method: Pi0Method, count: usize, m: usize, gamma: f64) -> Self {
        let raw = count as f64 / (m as f64 * gamma);
        Self {
            pi0_hat: raw.min(1.0),
            method,
            gamma: Some(gamma),
            d0: None,
            m,
        }
    }

    /// A user-supplied null proportion, e.g. 1 for plain Benjamini-Hochberg.
    pub fn fixed(pi0_hat: f64, m: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi0_hat) {
            return Err(Error::InvalidArgument(format!(
                "pi0 must lie in [0, 1], got {pi0_hat}"
            )));
        }
        Ok(Self {
            pi0_hat,
            method: Pi0Method::Fixed,
            gamma: None,
            d0: None,
            m,
        })
    }

    /// True when the EBF scan found no prefix with mean below one.
    pub fn is_degenerate_ebf(&self) -> bool {
        self.method == Pi0Method::Ebf && self.d0 == Some(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEntry {
    pub id: String,
    /// Conservative posterior probability that the alternative is true.
    pub v_hat: f64,
    /// `1 - v_hat`, evaluated without cancellation.
    pub null_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTable {
    pub entries: Vec<PosteriorEntry>,
    pub pi0: Pi0Estimate,
}

impl PosteriorTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Outcome of a thresholding rule at level `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionReport {
    pub alpha: f64,
    pub threshold: f64,
    pub rejected: BTreeSet<String>,
    pub estimated_bfdr: f64,
    pub auto_rejected: BTreeSet<String>,
}

impl DecisionReport {
    pub fn n_rejected(&self) -> usize {
        self.rejected.len()
    }

    pub fn is_rejected(&self, id: &str) -> bool {
        self.rejected.contains(id)
    }
}

/// Parameters a simulated dataset was generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthParams {
    pub pi0: f64,
    pub n: usize,
    pub phi_range: (f64, f64),
}

/// Ground-truth alternative indicators, aligned with the record order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub ids: Vec<String>,
    /// `true` where the alternative generated the data.
    pub z: Vec<bool>,
    pub params: TruthParams,
}

impl SimTruth {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn n_alternative(&self) -> usize {
        self.z.iter().filter(|&&alt| alt).count()
    }
}

/// Realized false discovery and false non-discovery proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fdp: f64,
    pub fnp: f64,
    pub n_rejected: usize,
    pub n_true_alt: usize,
}
