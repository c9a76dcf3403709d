//! One-factor-at-a-time sweeps over the training configuration, and
//! self-profiling of the inference pipeline.
//!
//! A sweep varies exactly one parameter over a grid while everything else
//! stays at the base configuration; each grid point runs the full
//! pretrain, head fit, and evaluation pipeline on a caller-fixed split.
//! A point that fails becomes an error row; the sweep continues.

use crate::classify::{compute_metrics, fit_head, predict_batch, HeadConfig};
use crate::error::{Result, VarsError};
use crate::par::par_map;
use crate::signal::EcgRecord;
use crate::train::{pretrain, Checkpoint, TrainConfig};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    LambdaRec,
    LambdaJse,
    LambdaCl,
    Quantile,
    TopK,
    MaskRate,
    Gamma,
    Tau,
}

impl SweepParameter {
    pub fn all() -> [SweepParameter; 8] {
        [
            SweepParameter::LambdaRec,
            SweepParameter::LambdaJse,
            SweepParameter::LambdaCl,
            SweepParameter::Quantile,
            SweepParameter::TopK,
            SweepParameter::MaskRate,
            SweepParameter::Gamma,
            SweepParameter::Tau,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::LambdaRec => "lambda_rec",
            SweepParameter::LambdaJse => "lambda_jse",
            SweepParameter::LambdaCl => "lambda_cl",
            SweepParameter::Quantile => "quantile",
            SweepParameter::TopK => "top_k",
            SweepParameter::MaskRate => "mask_rate",
            SweepParameter::Gamma => "gamma",
            SweepParameter::Tau => "tau",
        }
    }

    /// Writes `value` into the one field this parameter controls.
    pub fn apply(&self, cfg: &mut TrainConfig, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(VarsError::Config(format!(
                "{} grid value must be finite, got {value}",
                self.name()
            )));
        }
        match self {
            SweepParameter::LambdaRec => cfg.weights.lambda_rec = value,
            SweepParameter::LambdaJse => cfg.weights.lambda_jse = value,
            SweepParameter::LambdaCl => cfg.weights.lambda_cl = value,
            SweepParameter::Quantile => cfg.quantile = value,
            SweepParameter::TopK => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(VarsError::Config(format!(
                        "top_k grid value must be a positive integer, got {value}"
                    )));
                }
                cfg.top_k = Some(value as usize);
            }
            SweepParameter::MaskRate => cfg.mask_rate = value,
            SweepParameter::Gamma => cfg.gamma = value,
            SweepParameter::Tau => cfg.tau = value,
        }
        cfg.validate()
    }

    /// Documented default grid: loss weights sweep 0.1 to 1.0 in steps of
    /// 0.1; everything else is a five-point grid centered at the default
    /// configuration's value.
    pub fn default_grid(&self) -> Vec<f64> {
        let five = |center: f64, step: f64| -> Vec<f64> {
            (-2..=2).map(|i| center + i as f64 * step).collect()
        };
        match self {
            SweepParameter::LambdaRec | SweepParameter::LambdaJse | SweepParameter::LambdaCl => {
                (1..=10).map(|i| i as f64 / 10.0).collect()
            }
            SweepParameter::Quantile => five(0.75, 0.1),
            SweepParameter::TopK => vec![2.0, 4.0, 6.0, 8.0, 10.0],
            SweepParameter::MaskRate => five(0.3, 0.1),
            SweepParameter::Gamma => five(2.0, 0.5),
            SweepParameter::Tau => vec![0.1, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
    pub base: TrainConfig,
    pub head: HeadConfig,
    /// Overrides both the pretraining and head seeds so every grid point
    /// shares identical randomness.
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(VarsError::Config("sweep grid must be nonempty".into()));
        }
        if let Some(bad) = self.grid.iter().find(|v| !v.is_finite()) {
            return Err(VarsError::Config(format!(
                "sweep grid values must be finite, got {bad}"
            )));
        }
        self.base.validate()?;
        self.head.validate()
    }
}

/// One grid point's outcome. Metric fields are None when the run failed
/// (status carries the error) or, for AUC alone, when it was undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub accuracy: Option<f64>,
    pub macro_f1: Option<f64>,
    pub macro_auc: Option<f64>,
    pub status: String,
}

fn run_point(
    spec: &SweepSpec,
    value: f64,
    train: &[EcgRecord],
    eval: &[EcgRecord],
) -> Result<(f64, f64, Option<f64>)> {
    let mut cfg = spec.base.clone();
    cfg.seed = spec.seed;
    spec.parameter.apply(&mut cfg, value)?;
    let ckpt = pretrain(train, &cfg)?;
    let mut head_cfg = spec.head.clone();
    head_cfg.seed = spec.seed;
    let fitted = fit_head(&ckpt, train, &head_cfg)?;
    let predictions = predict_batch(&fitted, eval)?;
    let labels: Vec<_> = eval
        .iter()
        .map(|r| r.label.clone().expect("labeled eval record"))
        .collect();
    let report = compute_metrics(&predictions, &labels, head_cfg.mode, head_cfg.threshold)?;
    Ok((report.accuracy, report.macro_f1, report.macro_auc))
}

/// Runs every grid point, in grid order, one row per point. Rows are a
/// pure function of (spec, datasets).
pub fn run_sweep(
    spec: &SweepSpec,
    train: &[EcgRecord],
    eval: &[EcgRecord],
) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    if eval.is_empty() {
        return Err(VarsError::Contract("sweep needs evaluation records".into()));
    }
    for r in train.iter().chain(eval) {
        if r.label.is_none() {
            return Err(VarsError::Contract(format!(
                "sweep needs labeled records; {} has no label",
                r.record_id
            )));
        }
    }
    Ok(par_map(&spec.grid, |&value| {
        match run_point(spec, value, train, eval) {
            Ok((accuracy, macro_f1, macro_auc)) => SweepRow {
                parameter: spec.parameter.name().into(),
                value,
                accuracy: Some(accuracy),
                macro_f1: Some(macro_f1),
                macro_auc,
                status: "ok".into(),
            },
            Err(e) => SweepRow {
                parameter: spec.parameter.name().into(),
                value,
                accuracy: None,
                macro_f1: None,
                macro_auc: None,
                status: format!("failed: {e}"),
            },
        }
    }))
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_metric(v: Option<f64>, row_ok: bool) -> String {
    match v {
        Some(x) => format!("{x}"),
        None if row_ok => "undefined".into(),
        None => String::new(),
    }
}

/// One CSV row per grid point: parameter, value, accuracy, macro_f1,
/// macro_auc, status.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("parameter,value,accuracy,macro_f1,macro_auc,status\n");
    for row in rows {
        let ok = row.status == "ok";
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            csv_field(&row.parameter),
            row.value,
            csv_metric(row.accuracy, ok),
            csv_metric(row.macro_f1, ok),
            csv_metric(row.macro_auc, ok),
            csv_field(&row.status),
        );
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepMetric {
    Accuracy,
    MacroF1,
    MacroAuc,
}

impl SweepMetric {
    pub fn label(&self) -> &'static str {
        match self {
            SweepMetric::Accuracy => "accuracy",
            SweepMetric::MacroF1 => "macro_f1",
            SweepMetric::MacroAuc => "macro_auc",
        }
    }

    fn pick(&self, row: &SweepRow) -> Option<f64> {
        match self {
            SweepMetric::Accuracy => row.accuracy,
            SweepMetric::MacroF1 => row.macro_f1,
            SweepMetric::MacroAuc => row.macro_auc,
        }
    }
}

/// Line plot of one metric over the swept values; failed or undefined
/// points are skipped.
pub fn render_sweep_plot(rows: &[SweepRow], metric: SweepMetric) -> Result<String> {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| metric.pick(r).map(|m| (r.value, m)))
        .collect();
    if points.is_empty() {
        return Err(VarsError::Contract(format!(
            "no defined {} values to plot",
            metric.label()
        )));
    }
    let parameter = &rows[0].parameter;
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-9);
    let (w, h) = (640.0, 360.0);
    let margin = 40.0;
    let (px, py) = (w - 2.0 * margin, h - 2.0 * margin);
    let mut body = String::new();
    let _ = writeln!(
        body,
        "<rect x=\"{margin}\" y=\"{margin}\" width=\"{px}\" height=\"{py}\" fill=\"#fafafa\" stroke=\"#999\"/>"
    );
    for tick in 0..=4 {
        let frac = tick as f64 / 4.0;
        let y = margin + py * (1.0 - frac);
        let _ = writeln!(
            body,
            "<line x1=\"{margin}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>",
            margin + px
        );
        let _ = writeln!(
            body,
            "<text x=\"8.0\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#222\">{frac:.2}</text>",
            y + 4.0
        );
    }
    let mut pts = String::new();
    for &(x, yv) in &points {
        let sx = margin + (x - lo) / span * px;
        let sy = margin + py * (1.0 - yv.clamp(0.0, 1.0));
        let _ = write!(pts, "{sx:.1},{sy:.1} ");
        let _ = writeln!(body, "<circle cx=\"{sx:.1}\" cy=\"{sy:.1}\" r=\"3\" fill=\"#1b6ca8\"/>");
    }
    let _ = writeln!(
        body,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#1b6ca8\" stroke-width=\"1.5\"/>",
        pts.trim_end()
    );
    let _ = writeln!(
        body,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#222\">{} over {parameter}</text>",
        w / 2.0 - 60.0,
        h - 10.0,
        metric.label()
    );
    Ok(format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n<rect x=\"0\" y=\"0\" width=\"{w:.0}\" height=\"{h:.0}\" fill=\"#ffffff\"/>\n{body}</svg>\n"
    ))
}

/// Analytic FLOP tally: matmul [a x b][b x c] costs 2abc, elementwise
/// passes cost 1 per element.
#[derive(Clone, Copy, Debug, Default)]
struct Flops {
    total: u64,
}

impl Flops {
    fn matmul(&mut self, a: usize, b: usize, c: usize) {
        self.total += 2 * (a as u64) * (b as u64) * (c as u64);
    }

    fn elementwise(&mut self, n: usize) {
        self.total += n as u64;
    }
}

/// Analytic FLOPs for one sample's graph build, encoding, and prediction,
/// as a function of shapes only.
pub fn pipeline_flops(cfg: &TrainConfig, num_nodes: usize, classes: Option<usize>) -> u64 {
    let n = num_nodes;
    let d = cfg.interval_len;
    let h = cfg.hidden;
    let dk = d / cfg.num_heads.max(1);
    let mut f = Flops::default();
    for _ in 0..cfg.num_heads {
        f.matmul(n, d, dk);
        f.matmul(n, d, dk);
        f.matmul(n, dk, n);
        f.elementwise(n * n);
        f.elementwise(n * n);
    }
    f.elementwise(n * n * cfg.num_heads);
    f.elementwise(n * n);
    f.elementwise(n * n);

    let gin = |f: &mut Flops, din: usize, mid: usize, dout: usize| {
        f.matmul(n, n, din);
        f.elementwise(n * din);
        f.elementwise(n * din);
        f.matmul(n, din, mid);
        f.elementwise(n * mid);
        f.elementwise(n * mid);
        f.matmul(n, mid, dout);
        f.elementwise(n * dout);
    };
    gin(&mut f, d, h, h);
    gin(&mut f, h, h, h);
    f.elementwise(n * h);

    if let Some(c) = classes {
        let mid = (h / 2).max(1);
        f.matmul(1, h, mid);
        f.elementwise(mid);
        f.elementwise(mid);
        f.matmul(1, mid, c);
        f.elementwise(c);
        f.elementwise(c);
    }
    f.total
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    /// Sum of all checkpoint tensor sizes, head included.
    pub param_count: usize,
    pub flop_estimate: u64,
    pub latency_ms_median: f64,
    pub latency_ms_min: f64,
    pub latency_ms_max: f64,
    pub repeats: usize,
}

/// Times the end-to-end single-sample path (graph build, encoding, and
/// prediction when a head is present) and reports analytic cost.
pub fn profile(ckpt: &Checkpoint, record: &EcgRecord, repeats: usize) -> Result<ProfileReport> {
    if repeats < 3 {
        return Err(VarsError::Config(format!(
            "profiling needs at least 3 repeats, got {repeats}"
        )));
    }
    let param_count = ckpt.tensors.iter().map(|(_, t)| t.len()).sum();
    let patch_cfg = ckpt.config.patch_config();
    let nf = crate::signal::patch(record, &patch_cfg)?;
    let classes = ckpt.head.as_ref().map(|h| h.classes);
    let flop_estimate = pipeline_flops(&ckpt.config, nf.num_nodes(), classes);

    let model = ckpt.model()?;
    let rule = ckpt.config.sparsify_rule();
    let head = if ckpt.has_head() {
        Some(crate::classify::ClassifierHead::from_checkpoint(ckpt)?)
    } else {
        None
    };
    let mut timings_ms: Vec<f64> = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let graph =
            crate::graphcon::build_graph_with(record, &patch_cfg, &model.attention, &rule)?;
        let (_, z) = crate::model::encode_features(&model, &graph.x, &rule)?;
        if let Some(head) = &head {
            head.forward(&z)?;
        }
        timings_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    timings_ms.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    let median = if repeats % 2 == 1 {
        timings_ms[repeats / 2]
    } else {
        (timings_ms[repeats / 2 - 1] + timings_ms[repeats / 2]) / 2.0
    };
    Ok(ProfileReport {
        param_count,
        flop_estimate,
        latency_ms_median: median,
        latency_ms_min: timings_ms[0],
        latency_ms_max: timings_ms[repeats - 1],
        repeats,
    })
}
