//! Synthetic labeled ECG generation.
//!
//! Each record is a train of heartbeats rendered as sums of Gaussian bumps
//! (P, Q, R, S, T) in beat-phase coordinates, scaled per lead, with additive
//! Gaussian noise. Anomaly classes perturb individual beats (widened QRS,
//! elevated ST plateau, dropped beat) and annotate the affected stretches as
//! ground-truth anomalous intervals, which downstream interpretability
//! checks score against.
//!
//! Generation is deterministic: record i draws from an RNG stream derived
//! from (seed, i), so datasets are reproducible byte for byte and records
//! can be produced in parallel.

use crate::error::{Result, VarsError};
use crate::numerics::DetRng;
use crate::par::par_map_range;
use crate::signal::{EcgRecord, Label};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// Q/R/S bumps widened threefold with a damped R peak.
    WidenedQrs,
    /// Raised plateau between the QRS complex and the T wave.
    ElevatedPlateau,
    /// The beat's waveform is suppressed entirely.
    DroppedBeat,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnomalySpec {
    pub kind: AnomalyKind,
    /// Per-beat probability of carrying the anomaly. At least one beat per
    /// record is always affected.
    pub beat_prevalence: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthClass {
    pub name: String,
    pub count: usize,
    pub anomaly: Option<AnomalySpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthSpec {
    pub sampling_rate_hz: u32,
    pub duration_sec: f64,
    pub num_leads: usize,
    /// Per-lead amplitude gain; length must equal `num_leads`.
    pub lead_gains: Vec<f64>,
    pub noise_sd: f64,
    /// Heart rate drawn uniformly per record from this range.
    pub beat_rate_bpm: (f64, f64),
    pub classes: Vec<SynthClass>,
}

impl SynthSpec {
    /// Three-class demo family: normal beats, widened-QRS beats, and
    /// ST-plateau beats, on two leads.
    pub fn demo(records_per_class: usize) -> Self {
        let anomaly = |kind| {
            Some(AnomalySpec {
                kind,
                beat_prevalence: 0.35,
            })
        };
        SynthSpec {
            sampling_rate_hz: 250,
            duration_sec: 4.0,
            num_leads: 2,
            lead_gains: vec![1.0, 0.65],
            noise_sd: 0.04,
            beat_rate_bpm: (65.0, 85.0),
            classes: vec![
                SynthClass {
                    name: "normal".into(),
                    count: records_per_class,
                    anomaly: None,
                },
                SynthClass {
                    name: "wide_qrs".into(),
                    count: records_per_class,
                    anomaly: anomaly(AnomalyKind::WidenedQrs),
                },
                SynthClass {
                    name: "st_plateau".into(),
                    count: records_per_class,
                    anomaly: anomaly(AnomalyKind::ElevatedPlateau),
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.classes.is_empty() {
            problems.push("classes must be non-empty".to_string());
        }
        if self.classes.iter().map(|c| c.count).sum::<usize>() == 0 {
            problems.push("total record count must be positive".to_string());
        }
        if self.sampling_rate_hz == 0 {
            problems.push("sampling_rate_hz must be positive".to_string());
        }
        if !(self.duration_sec > 0.0) {
            problems.push("duration_sec must be positive".to_string());
        }
        if self.num_leads == 0 {
            problems.push("num_leads must be positive".to_string());
        }
        if self.lead_gains.len() != self.num_leads {
            problems.push(format!(
                "lead_gains has {} entries for {} leads",
                self.lead_gains.len(),
                self.num_leads
            ));
        }
        if !(self.noise_sd >= 0.0) {
            problems.push("noise_sd must be non-negative".to_string());
        }
        let (lo, hi) = self.beat_rate_bpm;
        if !(lo > 0.0 && hi >= lo) {
            problems.push(format!("beat_rate_bpm range ({lo}, {hi}) is invalid"));
        }
        if self.duration_sec * hi / 60.0 < 1.0 {
            problems.push("duration too short for a single beat at the configured rate".into());
        }
        for class in &self.classes {
            if let Some(a) = &class.anomaly {
                if !(0.0..=1.0).contains(&a.beat_prevalence) {
                    problems.push(format!(
                        "class {}: beat_prevalence {} outside [0, 1]",
                        class.name, a.beat_prevalence
                    ));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(VarsError::Config(problems.join("; ")))
        }
    }
}

/// One Gaussian bump in beat-phase coordinates.
struct Bump {
    center: f64,
    width: f64,
    amp: f64,
}

fn base_bumps() -> Vec<Bump> {
    vec![
        Bump { center: 0.18, width: 0.035, amp: 0.15 },  // P
        Bump { center: 0.355, width: 0.012, amp: -0.12 }, // Q
        Bump { center: 0.38, width: 0.016, amp: 1.0 },    // R
        Bump { center: 0.405, width: 0.012, amp: -0.25 }, // S
        Bump { center: 0.62, width: 0.055, amp: 0.35 },   // T
    ]
}

fn beat_bumps(kind: Option<AnomalyKind>) -> Vec<Bump> {
    let mut bumps = base_bumps();
    match kind {
        None => {}
        Some(AnomalyKind::WidenedQrs) => {
            // Q, R, S are bumps 1..=3.
            for b in &mut bumps[1..=3] {
                b.width *= 3.0;
            }
            bumps[2].amp *= 0.8;
        }
        Some(AnomalyKind::ElevatedPlateau) => {
            bumps.push(Bump { center: 0.5, width: 0.1, amp: 0.5 });
        }
        Some(AnomalyKind::DroppedBeat) => {
            for b in &mut bumps {
                b.amp = 0.0;
            }
        }
    }
    bumps
}

fn eval_bumps(bumps: &[Bump], phase: f64) -> f64 {
    bumps
        .iter()
        .map(|b| b.amp * (-(phase - b.center).powi(2) / (2.0 * b.width * b.width)).exp())
        .sum()
}

/// Noiseless single-lead waveform for a given per-beat anomaly plan.
fn render_waveform(
    rate: u32,
    duration_sec: f64,
    beat_len_sec: f64,
    beats: &[Option<AnomalyKind>],
) -> Vec<f64> {
    let t = (duration_sec * rate as f64).round() as usize;
    let per_beat: Vec<Vec<Bump>> = beats.iter().map(|k| beat_bumps(*k)).collect();
    (0..t)
        .map(|s| {
            let tau = s as f64 / rate as f64;
            let k = ((tau / beat_len_sec) as usize).min(beats.len().saturating_sub(1));
            let phase = (tau - k as f64 * beat_len_sec) / beat_len_sec;
            eval_bumps(&per_beat[k], phase)
        })
        .collect()
}

fn generate_record(spec: &SynthSpec, class_idx: usize, record_idx: usize, seed: u64) -> EcgRecord {
    let class = &spec.classes[class_idx];
    let mut rng = DetRng::derive(seed, record_idx as u64);
    let bpm = rng.uniform_in(spec.beat_rate_bpm.0, spec.beat_rate_bpm.1);
    let beat_len = 60.0 / bpm;
    let num_beats = (spec.duration_sec / beat_len).ceil() as usize;
    // Only beats fully inside the record may carry the anomaly, so every
    // annotated interval lies within [0, duration].
    let full_beats = (spec.duration_sec / beat_len).floor() as usize;

    let mut beats: Vec<Option<AnomalyKind>> = vec![None; num_beats.max(1)];
    if let Some(anomaly) = &class.anomaly {
        for beat in beats.iter_mut().take(full_beats) {
            if rng.uniform() < anomaly.beat_prevalence {
                *beat = Some(anomaly.kind);
            }
        }
        if full_beats > 0 && beats[..full_beats].iter().all(Option::is_none) {
            let forced = rng.index(full_beats);
            beats[forced] = Some(anomaly.kind);
        }
    }

    let template = render_waveform(spec.sampling_rate_hz, spec.duration_sec, beat_len, &beats);
    let leads: Vec<Vec<f64>> = spec
        .lead_gains
        .iter()
        .map(|gain| {
            template
                .iter()
                .map(|v| gain * v + spec.noise_sd * rng.normal())
                .collect()
        })
        .collect();

    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for (k, beat) in beats.iter().enumerate() {
        if beat.is_some() {
            let start = k as f64 * beat_len;
            let end = ((k + 1) as f64 * beat_len).min(spec.duration_sec);
            match intervals.last_mut() {
                Some(last) if last.1 >= start => last.1 = end,
                _ => intervals.push((start, end)),
            }
        }
    }

    EcgRecord {
        record_id: format!("{}_{:04}", class.name, record_idx),
        leads,
        sampling_rate_hz: spec.sampling_rate_hz,
        label: Some(Label::Single(class_idx)),
        anomaly_intervals: intervals,
    }
}

/// Generate the full labeled dataset described by `spec`. Records appear
/// class by class in declaration order; record i is independent of all
/// others given (seed, i).
pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<Vec<EcgRecord>> {
    spec.validate()?;
    let mut class_of: Vec<usize> = Vec::new();
    for (ci, class) in spec.classes.iter().enumerate() {
        class_of.extend(std::iter::repeat(ci).take(class.count));
    }
    Ok(par_map_range(class_of.len(), |i| {
        generate_record(spec, class_of[i], i, seed)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_labels_match_spec() {
        let spec = SynthSpec::demo(5);
        let records = synth_generate(&spec, 11).unwrap();
        assert_eq!(records.len(), 15);
        for (ci, chunk) in records.chunks(5).enumerate() {
            for rec in chunk {
                assert_eq!(rec.label, Some(Label::Single(ci)));
                assert_eq!(rec.num_leads(), 2);
                assert_eq!(rec.samples_per_lead(), 1000);
                rec.validate().unwrap();
            }
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let spec = SynthSpec::demo(4);
        let a = synth_generate(&spec, 99).unwrap();
        let b = synth_generate(&spec, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let spec = SynthSpec::demo(2);
        let a = synth_generate(&spec, 1).unwrap();
        let b = synth_generate(&spec, 2).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn anomaly_records_have_intervals_normal_records_do_not() {
        let spec = SynthSpec::demo(10);
        let records = synth_generate(&spec, 7).unwrap();
        for rec in &records[..10] {
            assert!(rec.anomaly_intervals.is_empty(), "{}", rec.record_id);
        }
        for rec in &records[10..] {
            assert!(!rec.anomaly_intervals.is_empty(), "{}", rec.record_id);
            for &(s, e) in &rec.anomaly_intervals {
                assert!(s < e && s >= 0.0 && e <= spec.duration_sec + 1e-9);
            }
        }
    }

    #[test]
    fn anomalous_interval_differs_from_normal_template_beyond_noise() {
        let spec = SynthSpec::demo(6);
        let records = synth_generate(&spec, 3).unwrap();
        // A widened-QRS record against its own all-normal re-render.
        let rec = &records[6];
        let t = rec.samples_per_lead();
        let rate = spec.sampling_rate_hz;
        // Recover the beat grid from the annotation-free re-render: beat
        // length is unknown here, so scan candidate bpm for the best match
        // outside the anomalous intervals.
        let (s0, e0) = rec.anomaly_intervals[0];
        let in_anomaly = |tau: f64| {
            rec.anomaly_intervals
                .iter()
                .any(|&(s, e)| tau >= s && tau < e)
        };
        let mut best: Option<(f64, f64)> = None;
        let mut bpm = spec.beat_rate_bpm.0;
        while bpm <= spec.beat_rate_bpm.1 {
            let beat_len = 60.0 / bpm;
            let beats = vec![None; (spec.duration_sec / beat_len).ceil() as usize];
            let normal = render_waveform(rate, spec.duration_sec, beat_len, &beats);
            let err: f64 = (0..t)
                .filter(|&s| !in_anomaly(s as f64 / rate as f64))
                .map(|s| (rec.leads[0][s] - normal[s]).powi(2))
                .sum();
            if best.map_or(true, |(e, _)| err < e) {
                best = Some((err, beat_len));
            }
            bpm += 0.01;
        }
        let beat_len = best.unwrap().1;
        let beats = vec![None; (spec.duration_sec / beat_len).ceil() as usize];
        let normal = render_waveform(rate, spec.duration_sec, beat_len, &beats);
        let max_diff = (0..t)
            .filter(|&s| {
                let tau = s as f64 / rate as f64;
                tau >= s0 && tau < e0
            })
            .map(|s| (rec.leads[0][s] - normal[s]).abs())
            .fold(0.0, f64::max);
        assert!(
            max_diff > 3.0 * spec.noise_sd,
            "anomalous stretch within noise of the normal template: {max_diff}"
        );
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = SynthSpec::demo(3);
        spec.classes.clear();
        assert!(synth_generate(&spec, 0).is_err());

        let mut spec = SynthSpec::demo(3);
        spec.lead_gains.pop();
        assert!(synth_generate(&spec, 0).is_err());

        let mut spec = SynthSpec::demo(0);
        spec.classes[0].count = 0;
        assert!(synth_generate(&spec, 0).is_err());

        let mut spec = SynthSpec::demo(3);
        spec.classes[1].anomaly.as_mut().unwrap().beat_prevalence = 1.5;
        assert!(synth_generate(&spec, 0).is_err());
    }

    #[test]
    fn dropped_beat_class_renders_flat_stretch() {
        let spec = SynthSpec {
            classes: vec![SynthClass {
                name: "dropped".into(),
                count: 1,
                anomaly: Some(AnomalySpec {
                    kind: AnomalyKind::DroppedBeat,
                    beat_prevalence: 1.0,
                }),
            }],
            noise_sd: 0.0,
            ..SynthSpec::demo(1)
        };
        let records = synth_generate(&spec, 5).unwrap();
        let rec = &records[0];
        let (s0, e0) = rec.anomaly_intervals[0];
        let rate = rec.sampling_rate_hz as f64;
        for (s, v) in rec.leads[0].iter().enumerate() {
            let tau = s as f64 / rate;
            if tau >= s0 && tau < e0 {
                assert_eq!(*v, 0.0);
            }
        }
    }
}
