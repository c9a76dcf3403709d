//! ECG records: on-disk formats, normalization, and interval patching.
//!
//! A record is n leads of t samples at a fixed sampling rate. Patching cuts
//! each lead into consecutive intervals of m samples; every interval becomes
//! one graph node whose feature vector is its raw samples, so node count is
//! N = n * floor(t / m) and feature width is d = m. Trailing samples that do
//! not fill an interval are dropped.

pub mod io;
pub mod synth;

use crate::error::{Result, VarsError};
use crate::numerics::Tensor;
use serde::{Deserialize, Serialize};

/// Class assignment: one id, or a set of ids when records may belong to
/// several classes at once.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Single(usize),
    Multi(Vec<usize>),
}

impl Label {
    /// Ids active in this label, ascending.
    pub fn ids(&self) -> Vec<usize> {
        match self {
            Label::Single(id) => vec![*id],
            Label::Multi(ids) => {
                let mut v = ids.clone();
                v.sort_unstable();
                v.dedup();
                v
            }
        }
    }

    pub fn max_id(&self) -> Option<usize> {
        self.ids().last().copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EcgRecord {
    pub record_id: String,
    /// One sample sequence per lead; all the same length.
    pub leads: Vec<Vec<f64>>,
    pub sampling_rate_hz: u32,
    pub label: Option<Label>,
    /// Ground-truth anomalous stretches as [start_sec, end_sec) pairs.
    pub anomaly_intervals: Vec<(f64, f64)>,
}

impl EcgRecord {
    pub fn num_leads(&self) -> usize {
        self.leads.len()
    }

    pub fn samples_per_lead(&self) -> usize {
        self.leads.first().map_or(0, Vec::len)
    }

    pub fn duration_sec(&self) -> f64 {
        self.samples_per_lead() as f64 / self.sampling_rate_hz as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.sampling_rate_hz == 0 {
            return Err(VarsError::Contract(format!(
                "record {}: sampling rate must be positive",
                self.record_id
            )));
        }
        if self.leads.is_empty() {
            return Err(VarsError::Contract(format!(
                "record {}: needs at least one lead",
                self.record_id
            )));
        }
        let t = self.samples_per_lead();
        if t == 0 {
            return Err(VarsError::Contract(format!(
                "record {}: leads are empty",
                self.record_id
            )));
        }
        if let Some(bad) = self.leads.iter().position(|l| l.len() != t) {
            return Err(VarsError::Contract(format!(
                "record {}: lead {} has {} samples, lead 0 has {}",
                self.record_id,
                bad,
                self.leads[bad].len(),
                t
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PatchConfig {
    /// Samples per node interval.
    pub interval_len: usize,
    /// Apply per-lead z-score normalization before cutting intervals.
    pub normalize: bool,
}

impl PatchConfig {
    pub fn new(interval_len: usize) -> Self {
        PatchConfig {
            interval_len,
            normalize: true,
        }
    }
}

/// Where a node's interval sits in the original record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeMeta {
    pub lead: usize,
    pub start_sample: usize,
    /// Exclusive.
    pub end_sample: usize,
    pub start_sec: f64,
    pub end_sec: f64,
}

/// Node feature matrix X, one row per interval, plus provenance per row.
/// Rows are ordered lead-major: all of lead 0's intervals in time order,
/// then lead 1's, and so on.
#[derive(Clone, Debug)]
pub struct NodeFeatures {
    pub x: Tensor,
    pub meta: Vec<NodeMeta>,
}

impl NodeFeatures {
    pub fn num_nodes(&self) -> usize {
        self.x.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.x.cols()
    }
}

/// Z-score every lead in place: mean 0, unit variance (population variance).
/// A constant lead maps to all zeros. Idempotent.
pub fn normalize(record: &EcgRecord) -> EcgRecord {
    let mut out = record.clone();
    for lead in &mut out.leads {
        let t = lead.len();
        if t == 0 {
            continue;
        }
        let mean = lead.iter().sum::<f64>() / t as f64;
        let var = lead.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / t as f64;
        if var == 0.0 {
            lead.iter_mut().for_each(|x| *x = 0.0);
        } else {
            let sd = var.sqrt();
            lead.iter_mut().for_each(|x| *x = (*x - mean) / sd);
        }
    }
    out
}

/// Cut a record into fixed-length intervals and stack them as node features.
pub fn patch(record: &EcgRecord, cfg: &PatchConfig) -> Result<NodeFeatures> {
    record.validate()?;
    let m = cfg.interval_len;
    let t = record.samples_per_lead();
    if m < 2 {
        return Err(VarsError::Contract(format!(
            "record {}: interval length must be at least 2, got {m}",
            record.record_id
        )));
    }
    if m > t {
        return Err(VarsError::Contract(format!(
            "record {}: interval length {m} exceeds lead length {t}",
            record.record_id
        )));
    }

    let normalized;
    let source = if cfg.normalize {
        normalized = normalize(record);
        &normalized
    } else {
        record
    };

    let per_lead = t / m;
    let n_nodes = source.num_leads() * per_lead;
    let rate = source.sampling_rate_hz as f64;
    let mut data = Vec::with_capacity(n_nodes * m);
    let mut meta = Vec::with_capacity(n_nodes);
    for (lead_idx, lead) in source.leads.iter().enumerate() {
        for k in 0..per_lead {
            let start = k * m;
            let end = start + m;
            data.extend_from_slice(&lead[start..end]);
            meta.push(NodeMeta {
                lead: lead_idx,
                start_sample: start,
                end_sample: end,
                start_sec: start as f64 / rate,
                end_sec: end as f64 / rate,
            });
        }
    }
    Ok(NodeFeatures {
        x: Tensor::new(vec![n_nodes, m], data)?,
        meta,
    })
}
