//! Self-contained SVG dashboards and the machine-readable explanation
//! schema. Rendered SVG references no external resources.

use crate::error::{Result, VarsError};
use crate::interpret::Explanation;
use crate::signal::EcgRecord;
use serde_json::{json, Value};
use std::fmt::Write as _;

pub const EXPLANATION_SCHEMA_VERSION: u64 = 1;
pub const HISTOGRAM_BINS: usize = 20;

/// Smallest near-square grid holding `n` cells: minimal rows*cols >= n
/// with |rows - cols| <= 1, rows <= cols.
pub fn heatmap_dims(n: usize) -> (usize, usize) {
    if n <= 1 {
        return (1, 1);
    }
    let a = (n as f64).sqrt().floor() as usize;
    if a * a >= n {
        (a, a)
    } else if a * (a + 1) >= n {
        (a, a + 1)
    } else {
        (a + 1, a + 1)
    }
}

/// Fixed-width histogram of scores over [0, 1]; a score of exactly 1 lands
/// in the last bin.
pub fn score_histogram(scores: &[f64]) -> [usize; HISTOGRAM_BINS] {
    let mut counts = [0usize; HISTOGRAM_BINS];
    for &s in scores {
        let idx = ((s * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        counts[idx] += 1;
    }
    counts
}

fn segment_json(seg: &crate::interpret::Segment) -> Value {
    json!({
        "lead": seg.lead,
        "start_sec": seg.start_sec,
        "end_sec": seg.end_sec,
        "importance": seg.importance,
    })
}

/// Versioned machine-readable form of an explanation.
pub fn explanation_json(expl: &Explanation) -> Value {
    let (rows, cols) = heatmap_dims(expl.node_importance.len());
    let mut values = expl.node_importance.clone();
    values.resize(rows * cols, 0.0);
    let edges: Vec<Value> = expl
        .edges
        .iter()
        .zip(&expl.edge_scores)
        .map(|(&(i, j), &w)| json!({"from": i, "to": j, "score": w}))
        .collect();
    json!({
        "schema_version": EXPLANATION_SCHEMA_VERSION,
        "record_id": expl.record_id,
        "prediction": expl.prediction,
        "node_importance": expl.node_importance,
        "edges": edges,
        "segments": expl.segments.iter().map(segment_json).collect::<Vec<_>>(),
        "salient_segments": expl.salient_segments.iter().map(segment_json).collect::<Vec<_>>(),
        "top1_segment": segment_json(&expl.top1_segment),
        "thresholds": {
            "tau_saliency": expl.tau_saliency,
            "top_k": expl.top_k,
        },
        "heatmap": {"rows": rows, "cols": cols, "values": values},
        "histogram": {
            "bin_count": HISTOGRAM_BINS,
            "lo": 0.0,
            "hi": 1.0,
            "counts": score_histogram(&expl.edge_scores).to_vec(),
        },
    })
}

struct Check<'a> {
    v: &'a Value,
    problems: Vec<String>,
}

impl<'a> Check<'a> {
    fn field(&self, name: &str) -> Option<&'a Value> {
        self.v.get(name)
    }

    fn push(&mut self, msg: String) {
        self.problems.push(msg);
    }
}

fn finite(v: &Value) -> Option<f64> {
    v.as_f64().filter(|x| x.is_finite())
}

fn unit_interval(v: &Value) -> bool {
    finite(v).is_some_and(|x| (0.0..=1.0).contains(&x))
}

fn check_segment(v: &Value, what: &str, problems: &mut Vec<String>) {
    let Some(obj) = v.as_object() else {
        problems.push(format!("{what} is not an object"));
        return;
    };
    if obj.get("lead").and_then(Value::as_u64).is_none() {
        problems.push(format!("{what}.lead is not an unsigned integer"));
    }
    let start = obj.get("start_sec").and_then(finite);
    let end = obj.get("end_sec").and_then(finite);
    match (start, end) {
        (Some(s), Some(e)) if s < e => {}
        _ => problems.push(format!("{what} needs finite start_sec < end_sec")),
    }
    if !obj.get("importance").is_some_and(unit_interval) {
        problems.push(format!("{what}.importance must lie in [0, 1]"));
    }
}

/// Validates a value against the explanation schema, listing every problem.
pub fn validate_explanation_json(v: &Value) -> Result<()> {
    let mut c = Check {
        v,
        problems: Vec::new(),
    };
    if !v.is_object() {
        return Err(VarsError::format("explanation json", "not a JSON object"));
    }

    match c.field("schema_version").and_then(Value::as_u64) {
        Some(EXPLANATION_SCHEMA_VERSION) => {}
        Some(other) => c.push(format!(
            "schema_version {other} unsupported; this build reads {EXPLANATION_SCHEMA_VERSION}"
        )),
        None => c.push("schema_version missing".into()),
    }
    if !c
        .field("record_id")
        .and_then(Value::as_str)
        .is_some_and(|s| !s.is_empty())
    {
        c.push("record_id must be a nonempty string".into());
    }
    match c.field("prediction").and_then(Value::as_array) {
        Some(arr) if !arr.is_empty() => {
            if !arr.iter().all(|x| finite(x).is_some()) {
                c.push("prediction entries must be finite numbers".into());
            }
        }
        _ => c.push("prediction must be a nonempty array".into()),
    }
    let node_count = match c.field("node_importance").and_then(Value::as_array) {
        Some(arr) => {
            if !arr.iter().all(unit_interval) {
                c.push("node_importance entries must lie in [0, 1]".into());
            }
            arr.len()
        }
        None => {
            c.push("node_importance must be an array".into());
            0
        }
    };
    let edge_count = match c.field("edges").and_then(Value::as_array) {
        Some(arr) => {
            for (i, e) in arr.iter().enumerate() {
                let ok = e.get("from").and_then(Value::as_u64).is_some()
                    && e.get("to").and_then(Value::as_u64).is_some()
                    && e.get("score").is_some_and(unit_interval);
                if !ok {
                    c.push(format!("edges[{i}] needs from, to, and score in [0, 1]"));
                }
            }
            arr.len()
        }
        None => {
            c.push("edges must be an array".into());
            0
        }
    };
    for name in ["segments", "salient_segments"] {
        match c.field(name).and_then(Value::as_array) {
            Some(arr) => {
                let mut problems = Vec::new();
                for (i, s) in arr.iter().enumerate() {
                    check_segment(s, &format!("{name}[{i}]"), &mut problems);
                }
                c.problems.extend(problems);
            }
            None => c.push(format!("{name} must be an array")),
        }
    }
    if let Some(arr) = c.field("salient_segments").and_then(Value::as_array) {
        let imps: Vec<f64> = arr
            .iter()
            .filter_map(|s| s.get("importance").and_then(finite))
            .collect();
        if imps.windows(2).any(|p| p[1] > p[0]) {
            c.push("salient_segments must be sorted by importance, best first".into());
        }
    }
    match c.field("top1_segment") {
        Some(seg) => {
            let mut problems = Vec::new();
            check_segment(seg, "top1_segment", &mut problems);
            c.problems.extend(problems);
        }
        None => c.push("top1_segment missing".into()),
    }
    match c.field("thresholds").and_then(Value::as_object) {
        Some(t) => {
            if !t.get("tau_saliency").is_some_and(unit_interval) {
                c.push("thresholds.tau_saliency must lie in [0, 1]".into());
            }
            match t.get("top_k") {
                None => c.push("thresholds.top_k missing (null allowed)".into()),
                Some(Value::Null) => {}
                Some(k) if k.as_u64().is_some() => {}
                Some(_) => c.push("thresholds.top_k must be null or an unsigned integer".into()),
            }
        }
        None => c.push("thresholds must be an object".into()),
    }
    match c.field("heatmap").and_then(Value::as_object) {
        Some(h) => {
            let rows = h.get("rows").and_then(Value::as_u64);
            let cols = h.get("cols").and_then(Value::as_u64);
            let len = h.get("values").and_then(Value::as_array).map(Vec::len);
            match (rows, cols, len) {
                (Some(r), Some(co), Some(l)) => {
                    if (r * co) as usize != l {
                        c.push("heatmap.values length must equal rows * cols".into());
                    }
                    if ((r * co) as usize) < node_count || r.abs_diff(co) > 1 {
                        c.push("heatmap grid must be the near-square cover of the nodes".into());
                    }
                }
                _ => c.push("heatmap needs rows, cols, and values".into()),
            }
        }
        None => c.push("heatmap must be an object".into()),
    }
    match c.field("histogram").and_then(Value::as_object) {
        Some(h) => {
            let counts = h.get("counts").and_then(Value::as_array);
            match counts {
                Some(arr) if arr.len() == HISTOGRAM_BINS => {
                    let sum: u64 = arr.iter().filter_map(Value::as_u64).sum();
                    if sum as usize != edge_count {
                        c.push("histogram counts must sum to the edge count".into());
                    }
                }
                _ => c.push(format!("histogram.counts must have {HISTOGRAM_BINS} bins")),
            }
        }
        None => c.push("histogram must be an object".into()),
    }

    if c.problems.is_empty() {
        Ok(())
    } else {
        Err(VarsError::format("explanation json", c.problems.join("; ")))
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn importance_fill(imp: f64) -> String {
    let chan = (235.0 - imp * 190.0).round() as u8;
    format!("rgb(225,{chan},{chan})")
}

const PLOT_W: f64 = 900.0;
const MARGIN: f64 = 40.0;

struct SvgDoc {
    body: String,
    y: f64,
}

impl SvgDoc {
    fn new() -> Self {
        SvgDoc {
            body: String::new(),
            y: MARGIN,
        }
    }

    fn text(&mut self, x: f64, y: f64, size: u32, s: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{x:.1}\" y=\"{y:.1}\" font-family=\"sans-serif\" font-size=\"{size}\" fill=\"#222\">{}</text>",
            xml_escape(s)
        );
    }

    fn heading(&mut self, s: &str) {
        self.y += 24.0;
        let text_y = self.y;
        self.text(MARGIN, text_y, 15, s);
        self.y += 12.0;
    }
}

/// One self-contained SVG plus the machine-readable explanation.
#[derive(Clone, Debug)]
pub struct Dashboard {
    pub svg: String,
    pub json: Value,
}

pub fn render_dashboard(expl: &Explanation, record: &EcgRecord) -> Result<Dashboard> {
    if expl.record_id != record.record_id {
        return Err(VarsError::Contract(format!(
            "explanation is for {} but record is {}",
            expl.record_id, record.record_id
        )));
    }
    let duration = record.duration_sec();
    for seg in &expl.segments {
        if seg.end_sec > duration + 1e-9 {
            return Err(VarsError::Contract(format!(
                "segment [{}, {}] exceeds record duration {duration}",
                seg.start_sec, seg.end_sec
            )));
        }
    }

    let mut doc = SvgDoc::new();
    let top = expl
        .prediction
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probabilities"))
        .expect("nonempty prediction");
    doc.heading(&format!(
        "{} (top class {}, p = {:.3})",
        record.record_id, top.0, top.1
    ));

    // Lead waveforms with salient segments shaded behind them.
    let lead_h = 90.0;
    for (lead, samples) in record.leads.iter().enumerate() {
        doc.heading(&format!("lead {lead}"));
        let y0 = doc.y;
        let _ = writeln!(
            doc.body,
            "<rect x=\"{MARGIN}\" y=\"{y0:.1}\" width=\"{PLOT_W}\" height=\"{lead_h}\" fill=\"#fafafa\" stroke=\"#999\"/>"
        );
        for seg in expl.salient_segments.iter().filter(|s| s.lead == lead) {
            let x = MARGIN + seg.start_sec / duration * PLOT_W;
            let w = (seg.end_sec - seg.start_sec) / duration * PLOT_W;
            let opacity = 0.15 + 0.45 * seg.importance;
            let _ = writeln!(
                doc.body,
                "<rect x=\"{x:.1}\" y=\"{y0:.1}\" width=\"{w:.1}\" height=\"{lead_h}\" fill=\"#e8a23d\" opacity=\"{opacity:.3}\"/>"
            );
        }
        let absmax = samples
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()))
            .max(1e-12);
        let stride = samples.len().div_ceil(1200).max(1);
        let mut points = String::new();
        for (t, &v) in samples.iter().enumerate().step_by(stride) {
            let x = MARGIN + t as f64 / (samples.len().max(2) - 1) as f64 * PLOT_W;
            let y = y0 + lead_h / 2.0 - v / absmax * (lead_h / 2.0 - 4.0);
            let _ = write!(points, "{x:.1},{y:.1} ");
        }
        let _ = writeln!(
            doc.body,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#1b6ca8\" stroke-width=\"1\"/>",
            points.trim_end()
        );
        doc.y += lead_h + 6.0;
    }

    // Node-importance heatmap on the near-square grid, padding left hollow.
    let n = expl.node_importance.len();
    let (rows, cols) = heatmap_dims(n);
    doc.heading(&format!("node importance ({rows} x {cols} grid)"));
    let cell = 22.0;
    let y0 = doc.y;
    for r in 0..rows {
        for col in 0..cols {
            let idx = r * cols + col;
            let x = MARGIN + col as f64 * cell;
            let y = y0 + r as f64 * cell;
            if idx < n {
                let _ = writeln!(
                    doc.body,
                    "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell}\" height=\"{cell}\" fill=\"{}\" stroke=\"#777\"/>",
                    importance_fill(expl.node_importance[idx])
                );
            } else {
                let _ = writeln!(
                    doc.body,
                    "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell}\" height=\"{cell}\" fill=\"none\" stroke=\"#ccc\"/>"
                );
            }
        }
    }
    doc.y += rows as f64 * cell + 6.0;

    // Edge-score histogram.
    doc.heading("edge scores");
    let counts = score_histogram(&expl.edge_scores);
    let max_count = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let hist_h = 110.0;
    let bar_w = PLOT_W / HISTOGRAM_BINS as f64;
    let y0 = doc.y;
    let _ = writeln!(
        doc.body,
        "<line x1=\"{MARGIN}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#999\"/>",
        y0 + hist_h,
        MARGIN + PLOT_W,
        y0 + hist_h
    );
    for (i, &count) in counts.iter().enumerate() {
        let h = count as f64 / max_count * hist_h;
        let x = MARGIN + i as f64 * bar_w;
        let y = y0 + hist_h - h;
        let _ = writeln!(
            doc.body,
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{h:.1}\" fill=\"#5a8f5a\" stroke=\"#3c5f3c\"/>",
            bar_w - 1.0
        );
    }
    doc.y += hist_h + 6.0;

    // Class-probability bars.
    doc.heading("prediction");
    let bar_h = 20.0;
    for (class, &p) in expl.prediction.iter().enumerate() {
        let y = doc.y;
        let w = p.clamp(0.0, 1.0) * (PLOT_W - 120.0);
        let _ = writeln!(
            doc.body,
            "<rect x=\"{:.1}\" y=\"{y:.1}\" width=\"{w:.1}\" height=\"{bar_h}\" fill=\"#1b6ca8\"/>",
            MARGIN + 80.0
        );
        doc.text(MARGIN, y + 15.0, 13, &format!("class {class}"));
        doc.text(MARGIN + 86.0 + w, y + 15.0, 13, &format!("{p:.3}"));
        doc.y += bar_h + 6.0;
    }
    doc.y += MARGIN;

    let width = PLOT_W + 2.0 * MARGIN;
    let height = doc.y;
    let svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">\n<rect x=\"0\" y=\"0\" width=\"{width:.0}\" height=\"{height:.0}\" fill=\"#ffffff\"/>\n{}</svg>\n",
        doc.body
    );
    Ok(Dashboard {
        svg,
        json: explanation_json(expl),
    })
}

/// Match rate against localization tolerance as a line chart.
pub fn render_match_rate_curve(points: &[(f64, f64)]) -> Result<String> {
    if points.is_empty() {
        return Err(VarsError::Contract("match-rate curve needs points".into()));
    }
    let max_tol = points
        .iter()
        .map(|p| p.0)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(1e-9);
    let (w, h) = (640.0, 360.0);
    let (px, py) = (w - 2.0 * MARGIN, h - 2.0 * MARGIN);
    let mut body = String::new();
    let _ = writeln!(
        body,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{px}\" height=\"{py}\" fill=\"#fafafa\" stroke=\"#999\"/>"
    );
    for tick in 0..=4 {
        let frac = tick as f64 / 4.0;
        let y = MARGIN + py * (1.0 - frac);
        let _ = writeln!(
            body,
            "<line x1=\"{MARGIN}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>",
            MARGIN + px
        );
        let _ = writeln!(
            body,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#222\">{frac:.2}</text>",
            8.0,
            y + 4.0
        );
    }
    let mut pts = String::new();
    for &(tol, rate) in points {
        let x = MARGIN + tol / max_tol * px;
        let y = MARGIN + py * (1.0 - rate.clamp(0.0, 1.0));
        let _ = write!(pts, "{x:.1},{y:.1} ");
        let _ = writeln!(body, "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"2.5\" fill=\"#1b6ca8\"/>");
    }
    let _ = writeln!(
        body,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#1b6ca8\" stroke-width=\"1.5\"/>",
        pts.trim_end()
    );
    let _ = writeln!(
        body,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#222\">tolerance (s)</text>",
        w / 2.0 - 40.0,
        h - 10.0
    );
    Ok(format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n<rect x=\"0\" y=\"0\" width=\"{w:.0}\" height=\"{h:.0}\" fill=\"#ffffff\"/>\n{body}</svg>\n"
    ))
}

/// One row per tolerance: `tolerance_sec,match_rate`.
pub fn match_rate_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("tolerance_sec,match_rate\n");
    for &(tol, rate) in points {
        let _ = writeln!(out, "{tol},{rate}");
    }
    out
}

/// Record-level overlap counts as a JSON triple.
pub fn venn_json(venn: &crate::interpret::VennCounts) -> Value {
    json!({
        "only_reference": venn.only_reference,
        "only_predicted": venn.only_predicted,
        "both": venn.both,
    })
}


#[cfg(test)]
mod tests {
    use super::test_support::{assert_self_contained, assert_well_formed_xml};
    use super::*;
    use crate::interpret::tests::tiny_fitted_checkpoint;
    use crate::interpret::{explain, venn_counts};

    #[test]
    fn heatmap_grid_is_the_minimal_near_square_cover() {
        for n in 1..=60usize {
            let (r, c) = heatmap_dims(n);
            assert!(r * c >= n && r.abs_diff(c) <= 1, "n={n} got {r}x{c}");
            let mut best = usize::MAX;
            for a in 1..=n {
                for b in a..=(a + 1) {
                    if a * b >= n {
                        best = best.min(a * b);
                    }
                }
            }
            assert_eq!(r * c, best, "n={n}");
        }
        assert_eq!(heatmap_dims(20), (4, 5));
        assert_eq!(heatmap_dims(40), (6, 7));
        assert_eq!(heatmap_dims(16), (4, 4));
    }

    #[test]
    fn histogram_covers_every_score_once() {
        let scores = [0.0, 0.049, 0.05, 0.5, 0.999, 1.0, 1.0];
        let counts = score_histogram(&scores);
        assert_eq!(counts.iter().sum::<usize>(), scores.len());
        assert_eq!(counts[0], 2);
        assert_eq!(counts[1], 1);
        assert_eq!(counts[19], 3);
    }

    #[test]
    fn dashboard_svg_is_well_formed_and_self_contained() {
        let (ckpt, records) = tiny_fitted_checkpoint();
        let expl = explain(&ckpt, &records[0]).unwrap();
        let dash = render_dashboard(&expl, &records[0]).unwrap();
        assert!(dash.svg.starts_with("<svg"));
        assert!(dash.svg.contains("version=\"1.1\""));
        assert_well_formed_xml(&dash.svg);
        assert_self_contained(&dash.svg);
        // One waveform polyline per lead plus the histogram bars.
        assert_eq!(dash.svg.matches("<polyline").count(), records[0].leads.len());
    }

    #[test]
    fn dashboard_json_passes_its_own_validator() {
        let (ckpt, records) = tiny_fitted_checkpoint();
        let expl = explain(&ckpt, &records[0]).unwrap();
        let dash = render_dashboard(&expl, &records[0]).unwrap();
        validate_explanation_json(&dash.json).unwrap();

        let text = serde_json::to_string(&dash.json).unwrap();
        let reparsed: Value = serde_json::from_str(&text).unwrap();
        validate_explanation_json(&reparsed).unwrap();
        assert_eq!(reparsed, dash.json);
    }

    #[test]
    fn validator_names_every_broken_field() {
        let (ckpt, records) = tiny_fitted_checkpoint();
        let expl = explain(&ckpt, &records[0]).unwrap();
        let mut v = explanation_json(&expl);
        v["schema_version"] = serde_json::json!(9);
        v["record_id"] = serde_json::json!("");
        v["node_importance"][0] = serde_json::json!(1.7);
        v.as_object_mut().unwrap().remove("histogram");
        let err = validate_explanation_json(&v).unwrap_err().to_string();
        for needle in ["schema_version 9", "record_id", "node_importance", "histogram"] {
            assert!(err.contains(needle), "missing {needle} in {err}");
        }
    }

    #[test]
    fn dashboard_rejects_a_mismatched_record() {
        let (ckpt, records) = tiny_fitted_checkpoint();
        let expl = explain(&ckpt, &records[0]).unwrap();
        let err = render_dashboard(&expl, &records[1]).unwrap_err().to_string();
        assert!(err.contains(&records[0].record_id), "{err}");
    }

    #[test]
    fn curve_svg_draws_every_point() {
        let points: Vec<(f64, f64)> = (0..=20).map(|i| (i as f64 * 0.25, i as f64 / 20.0)).collect();
        let svg = render_match_rate_curve(&points).unwrap();
        assert_well_formed_xml(&svg);
        assert_self_contained(&svg);
        assert_eq!(svg.matches("<circle").count(), 21);
        assert!(render_match_rate_curve(&[]).is_err());
    }

    #[test]
    fn csv_lists_tolerance_and_rate() {
        let csv = match_rate_csv(&[(0.0, 0.5), (0.25, 0.75)]);
        assert_eq!(csv, "tolerance_sec,match_rate\n0,0.5\n0.25,0.75\n");
    }

    #[test]
    fn venn_json_triple() {
        let (ckpt, records) = tiny_fitted_checkpoint();
        let expls = crate::interpret::explain_batch(&ckpt, &records[..2]).unwrap();
        let refs = vec![crate::interpret::ReferenceAnnotation {
            record_id: records[0].record_id.clone(),
            start_sec: 0.0,
            end_sec: records[0].duration_sec(),
        }];
        let venn = venn_counts(&expls, &refs, 0.0).unwrap();
        let v = venn_json(&venn);
        assert_eq!(v["both"], 1);
        assert_eq!(v["only_predicted"], 1);
        assert_eq!(
            v["only_reference"].as_u64().unwrap() + v["both"].as_u64().unwrap(),
            1
        );
    }
}
