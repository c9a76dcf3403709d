//! Downstream classification over frozen graph embeddings, and the metric
//! suite used to evaluate it.
//!
//! The head is a two-layer MLP (hidden -> hidden/2 -> classes) trained with
//! cross-entropy in single-label mode or per-class binary cross-entropy in
//! multi-label mode. Fitting never touches the pretrained parameters: the
//! encoder embeds every record once, and only the head tensors move.
//!
//! Metrics are macro-averaged one-vs-rest statistics. AUC uses the rank
//! statistic with midranks for ties and is reported as undefined (not a
//! number) whenever a class has no positives or no negatives.

use crate::error::{Result, VarsError};
use crate::numerics::{AdamConfig, AdamState, DetRng, Tape, Tensor};
use crate::par::par_map;
use crate::signal::{patch, EcgRecord, Label};
use crate::train::Checkpoint;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    SingleLabel,
    MultiLabel,
}

/// Head metadata stored alongside the tensors in a checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadInfo {
    pub mode: HeadMode,
    pub classes: usize,
    /// Multi-label decision threshold.
    pub threshold: f64,
}

#[derive(Clone, Debug)]
pub struct ClassifierHead {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub info: HeadInfo,
}

impl ClassifierHead {
    pub fn init(hidden: usize, info: HeadInfo, rng: &mut DetRng) -> Result<Self> {
        if info.classes < 2 {
            return Err(VarsError::Config(format!(
                "classifier needs at least 2 classes, got {}",
                info.classes
            )));
        }
        if hidden < 2 {
            return Err(VarsError::Config(format!(
                "classifier needs embedding width of at least 2, got {hidden}"
            )));
        }
        if !(info.threshold > 0.0 && info.threshold < 1.0) {
            return Err(VarsError::Config(format!(
                "decision threshold must lie in (0, 1), got {}",
                info.threshold
            )));
        }
        let mid = hidden / 2;
        let affine = |rows: usize, cols: usize, rng: &mut DetRng| {
            let sd = 1.0 / (rows as f64).sqrt();
            let data: Vec<f64> = (0..rows * cols).map(|_| sd * rng.normal()).collect();
            Tensor::new(vec![rows, cols], data).expect("affine shape")
        };
        Ok(ClassifierHead {
            w1: affine(hidden, mid, rng),
            b1: Tensor::zeros(vec![1, mid]),
            w2: affine(mid, info.classes, rng),
            b2: Tensor::zeros(vec![1, info.classes]),
            info,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let info = ckpt.head.ok_or_else(|| {
            VarsError::Contract("checkpoint has no classifier head; fit one first".into())
        })?;
        let tensor = |name: &str| {
            ckpt.tensor(name).cloned().ok_or_else(|| {
                VarsError::Format {
                    source_name: "checkpoint tensors".into(),
                    detail: format!("{name}: absent"),
                }
            })
        };
        Ok(ClassifierHead {
            w1: tensor("head.w1")?,
            b1: tensor("head.b1")?,
            w2: tensor("head.w2")?,
            b2: tensor("head.b2")?,
            info,
        })
    }

    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        vec![
            ("head.w1".into(), self.w1.clone()),
            ("head.b1".into(), self.b1.clone()),
            ("head.w2".into(), self.w2.clone()),
            ("head.b2".into(), self.b2.clone()),
        ]
    }

    /// Class probabilities for a batch of embeddings [n x hidden]:
    /// softmax rows in single-label mode, independent sigmoids otherwise.
    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let zv = tape.leaf(z.clone());
        let w1 = tape.leaf(self.w1.clone());
        let b1 = tape.leaf(self.b1.clone());
        let w2 = tape.leaf(self.w2.clone());
        let b2 = tape.leaf(self.b2.clone());
        let a1 = tape.matmul(zv, w1)?;
        let a1b = tape.add_row_broadcast(a1, b1)?;
        let hid = tape.relu(a1b)?;
        let a2 = tape.matmul(hid, w2)?;
        let logits = tape.add_row_broadcast(a2, b2)?;
        let probs = match self.info.mode {
            HeadMode::SingleLabel => tape.row_softmax(logits)?,
            HeadMode::MultiLabel => tape.sigmoid(logits)?,
        };
        Ok(tape.value(probs).clone())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HeadConfig {
    pub classes: usize,
    pub mode: HeadMode,
    /// Full-batch gradient steps.
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Multi-label decision threshold.
    pub threshold: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            classes: 2,
            mode: HeadMode::SingleLabel,
            steps: 200,
            learning_rate: 1e-2,
            seed: 7,
            threshold: 0.5,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.classes < 2 {
            problems.push(format!("classes must be at least 2, got {}", self.classes));
        }
        if self.steps == 0 {
            problems.push("steps must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            problems.push(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            problems.push(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(VarsError::Config(problems.join("; ")))
        }
    }

    fn info(&self) -> HeadInfo {
        HeadInfo {
            mode: self.mode,
            classes: self.classes,
            threshold: self.threshold,
        }
    }
}

/// Validated labels for head training: class indices in single-label mode,
/// 0/1 target rows in multi-label mode.
fn targets_from_labels(
    records: &[EcgRecord],
    mode: HeadMode,
    classes: usize,
) -> Result<(Vec<usize>, Tensor)> {
    let mut singles = Vec::with_capacity(records.len());
    let mut multi = Tensor::zeros(vec![records.len(), classes]);
    for (row, record) in records.iter().enumerate() {
        let label = record.label.as_ref().ok_or_else(|| {
            VarsError::Contract(format!("record {} has no label", record.record_id))
        })?;
        match (mode, label) {
            (HeadMode::SingleLabel, Label::Single(id)) => {
                if *id >= classes {
                    return Err(VarsError::Contract(format!(
                        "record {}: label {id} out of range for {classes} classes",
                        record.record_id
                    )));
                }
                singles.push(*id);
            }
            (HeadMode::SingleLabel, Label::Multi(_)) => {
                return Err(VarsError::Contract(format!(
                    "record {} carries a multi-label annotation but the head is single-label",
                    record.record_id
                )));
            }
            (HeadMode::MultiLabel, label) => {
                for id in label.ids() {
                    if id >= classes {
                        return Err(VarsError::Contract(format!(
                            "record {}: label {id} out of range for {classes} classes",
                            record.record_id
                        )));
                    }
                    multi.set(row, id, 1.0);
                }
            }
        }
    }
    Ok((singles, multi))
}

/// Embeds every record with the frozen encoder, [n x hidden].
pub fn embed_records(ckpt: &Checkpoint, records: &[EcgRecord]) -> Result<Tensor> {
    let model = ckpt.model()?;
    let patch_cfg = ckpt.config.patch_config();
    let rows: Vec<Result<Vec<f64>>> = par_map(records, |r| {
        let feats = patch(r, &patch_cfg)?;
        let (_, z) = crate::model::encode_features(&model, &feats.x, &ckpt.config.sparsify_rule())?;
        Ok(z.data().to_vec())
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Tensor::from_rows(&rows)
}

/// Trains a head on precomputed embeddings. Exposed for fixtures; `fit_head`
/// is the record-level entry point.
pub fn fit_head_on_embeddings(
    z: &Tensor,
    singles: &[usize],
    multi: &Tensor,
    cfg: &HeadConfig,
) -> Result<ClassifierHead> {
    cfg.validate()?;
    let n = z.rows();
    if n == 0 {
        return Err(VarsError::Contract("head training set is empty".into()));
    }
    let mut rng = DetRng::seed_from(cfg.seed);
    let mut head = ClassifierHead::init(z.cols(), cfg.info(), &mut rng)?;
    let mut adam = AdamState::new(
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
        &[head.w1.len(), head.b1.len(), head.w2.len(), head.b2.len()],
    );

    let inv_mask = {
        let mut t = multi.clone();
        for v in t.data_mut() {
            *v = 1.0 - *v;
        }
        t
    };

    for _ in 0..cfg.steps {
        let mut tape = Tape::new();
        let zv = tape.leaf(z.clone());
        let w1 = tape.leaf(head.w1.clone());
        let b1 = tape.leaf(head.b1.clone());
        let w2 = tape.leaf(head.w2.clone());
        let b2 = tape.leaf(head.b2.clone());
        let a1 = tape.matmul(zv, w1)?;
        let a1b = tape.add_row_broadcast(a1, b1)?;
        let hid = tape.relu(a1b)?;
        let a2 = tape.matmul(hid, w2)?;
        let logits = tape.add_row_broadcast(a2, b2)?;
        let loss = match cfg.mode {
            HeadMode::SingleLabel => {
                let per_row = tape.ce_with_logits(logits, singles)?;
                tape.mean_all(per_row)?
            }
            HeadMode::MultiLabel => {
                let probs = tape.sigmoid(logits)?;
                let probs = tape.clamp(probs, 1e-7, 1.0 - 1e-7)?;
                let ln_p = tape.ln(probs)?;
                let pos = tape.mul_const_mask(ln_p, multi)?;
                let neg_probs = tape.mul_scalar(probs, -1.0)?;
                let one_minus = tape.add_scalar(neg_probs, 1.0)?;
                let ln_q = tape.ln(one_minus)?;
                let neg = tape.mul_const_mask(ln_q, &inv_mask)?;
                let both = tape.add(pos, neg)?;
                let mean = tape.mean_all(both)?;
                tape.mul_scalar(mean, -1.0)?
            }
        };
        let grads = tape.backward(loss)?;
        let mut params = vec![
            head.w1.clone(),
            head.b1.clone(),
            head.w2.clone(),
            head.b2.clone(),
        ];
        let grad_ts = [
            grads.get_or_zeros(w1, head.w1.shape()),
            grads.get_or_zeros(b1, head.b1.shape()),
            grads.get_or_zeros(w2, head.w2.shape()),
            grads.get_or_zeros(b2, head.b2.shape()),
        ];
        adam.step(&mut params, &grad_ts)?;
        let mut it = params.into_iter();
        head.w1 = it.next().unwrap();
        head.b1 = it.next().unwrap();
        head.w2 = it.next().unwrap();
        head.b2 = it.next().unwrap();
    }
    Ok(head)
}

/// Fits a classifier head on labeled records and returns the checkpoint with
/// the head attached. The pretrained tensors pass through untouched.
pub fn fit_head(
    ckpt: &Checkpoint,
    records: &[EcgRecord],
    cfg: &HeadConfig,
) -> Result<Checkpoint> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(VarsError::Contract("head training set is empty".into()));
    }
    let (singles, multi) = targets_from_labels(records, cfg.mode, cfg.classes)?;
    let z = embed_records(ckpt, records)?;
    let head = fit_head_on_embeddings(&z, &singles, &multi, cfg)?;

    let mut tensors: Vec<(String, Tensor)> = ckpt
        .tensors
        .iter()
        .filter(|(n, _)| !n.starts_with("head."))
        .cloned()
        .collect();
    tensors.extend(head.named_params());
    Ok(Checkpoint {
        version: ckpt.version,
        config: ckpt.config.clone(),
        tensors,
        loss_trace: ckpt.loss_trace.clone(),
        head: Some(head.info),
    })
}

/// Class probabilities for one record.
pub fn predict(ckpt: &Checkpoint, record: &EcgRecord) -> Result<Vec<f64>> {
    let head = ClassifierHead::from_checkpoint(ckpt)?;
    let z = embed_records(ckpt, std::slice::from_ref(record))?;
    Ok(head.forward(&z)?.data().to_vec())
}

/// Class probabilities for many records, embedded in parallel.
pub fn predict_batch(ckpt: &Checkpoint, records: &[EcgRecord]) -> Result<Vec<Vec<f64>>> {
    let head = ClassifierHead::from_checkpoint(ckpt)?;
    let z = embed_records(ckpt, records)?;
    let probs = head.forward(&z)?;
    Ok((0..probs.rows()).map(|i| probs.row(i).to_vec()).collect())
}

// ── metrics ──

/// One-vs-rest counts and scores for a single class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub support: usize,
    pub precision: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub f1: f64,
    /// None when the class has no positives or no negatives.
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Fraction of correct predictions; per-label mean accuracy in
    /// multi-label mode.
    pub accuracy: f64,
    /// Fraction of samples whose full label vector is correct
    /// (multi-label mode only).
    pub subset_accuracy: Option<f64>,
    pub macro_f1: f64,
    pub macro_sensitivity: f64,
    pub macro_specificity: f64,
    pub macro_precision: f64,
    /// None when no class has a defined AUC.
    pub macro_auc: Option<f64>,
    pub per_class: Vec<ClassMetrics>,
    /// Single-label mode: confusion[true][predicted].
    pub confusion: Option<Vec<Vec<usize>>>,
}

/// Rank-statistic AUC with midranks for ties. None when either side is empty.
pub fn auc_from_scores(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; tied scores share the mean of their rank span.
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if positive[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let n_pos_f = n_pos as f64;
    Some((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

fn safe_div(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

struct Counts {
    tp: usize,
    fp: usize,
    fn_: usize,
    tn: usize,
}

fn class_metrics(class: usize, counts: &Counts, auc: Option<f64>) -> ClassMetrics {
    let precision = safe_div(counts.tp as f64, (counts.tp + counts.fp) as f64);
    let sensitivity = safe_div(counts.tp as f64, (counts.tp + counts.fn_) as f64);
    let specificity = safe_div(counts.tn as f64, (counts.tn + counts.fp) as f64);
    let f1 = safe_div(2.0 * precision * sensitivity, precision + sensitivity);
    ClassMetrics {
        class,
        support: counts.tp + counts.fn_,
        precision,
        sensitivity,
        specificity,
        f1,
        auc,
    }
}

fn macro_average(per_class: &[ClassMetrics]) -> (f64, f64, f64, f64, Option<f64>) {
    let n = per_class.len() as f64;
    let f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / n;
    let sens = per_class.iter().map(|c| c.sensitivity).sum::<f64>() / n;
    let spec = per_class.iter().map(|c| c.specificity).sum::<f64>() / n;
    let prec = per_class.iter().map(|c| c.precision).sum::<f64>() / n;
    let defined: Vec<f64> = per_class.iter().filter_map(|c| c.auc).collect();
    let auc = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    (f1, sens, spec, prec, auc)
}

fn validate_predictions(
    predictions: &[Vec<f64>],
    labels: &[Label],
    classes: usize,
) -> Result<()> {
    if predictions.is_empty() {
        return Err(VarsError::Contract("metrics need at least one sample".into()));
    }
    if predictions.len() != labels.len() {
        return Err(VarsError::Contract(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    for (i, row) in predictions.iter().enumerate() {
        if row.len() != classes {
            return Err(VarsError::Contract(format!(
                "prediction {i} has {} scores, expected {classes}",
                row.len()
            )));
        }
    }
    for (i, label) in labels.iter().enumerate() {
        if let Some(bad) = label.ids().into_iter().find(|&id| id >= classes) {
            return Err(VarsError::Contract(format!(
                "label {i}: class {bad} out of range for {classes} classes"
            )));
        }
    }
    Ok(())
}

/// Computes the full metric suite over all classes.
pub fn compute_metrics(
    predictions: &[Vec<f64>],
    labels: &[Label],
    mode: HeadMode,
    threshold: f64,
) -> Result<MetricsReport> {
    let classes = predictions
        .first()
        .map(|r| r.len())
        .ok_or_else(|| VarsError::Contract("metrics need at least one sample".into()))?;
    let subset: Vec<usize> = (0..classes).collect();
    compute_metrics_subset(predictions, labels, mode, threshold, &subset)
}

/// Metric suite restricted to a class subset: macro averages run over the
/// subset only, and accuracy counts only samples (single-label) or labels
/// (multi-label) belonging to it.
pub fn compute_metrics_subset(
    predictions: &[Vec<f64>],
    labels: &[Label],
    mode: HeadMode,
    threshold: f64,
    subset: &[usize],
) -> Result<MetricsReport> {
    let classes = predictions
        .first()
        .map(|r| r.len())
        .ok_or_else(|| VarsError::Contract("metrics need at least one sample".into()))?;
    validate_predictions(predictions, labels, classes)?;
    if subset.is_empty() {
        return Err(VarsError::Contract("class subset is empty".into()));
    }
    if let Some(&bad) = subset.iter().find(|&&c| c >= classes) {
        return Err(VarsError::Contract(format!(
            "subset class {bad} out of range for {classes} classes"
        )));
    }
    match mode {
        HeadMode::SingleLabel => single_label_metrics(predictions, labels, subset, classes),
        HeadMode::MultiLabel => {
            multi_label_metrics(predictions, labels, subset, classes, threshold)
        }
    }
}

fn single_label_metrics(
    predictions: &[Vec<f64>],
    labels: &[Label],
    subset: &[usize],
    classes: usize,
) -> Result<MetricsReport> {
    let truth: Vec<usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| match l {
            Label::Single(id) => Ok(*id),
            Label::Multi(_) => Err(VarsError::Contract(format!(
                "label {i} is multi-label; single-label metrics need one class per sample"
            ))),
        })
        .collect::<Result<_>>()?;
    let predicted: Vec<usize> = predictions
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite scores"))
                .expect("nonempty row")
                .0
        })
        .collect();

    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&t, &p) in truth.iter().zip(&predicted) {
        confusion[t][p] += 1;
    }

    let per_class: Vec<ClassMetrics> = subset
        .iter()
        .map(|&c| {
            let tp = confusion[c][c];
            let fn_ = confusion[c].iter().sum::<usize>() - tp;
            let fp = (0..classes).map(|t| confusion[t][c]).sum::<usize>() - tp;
            let tn = truth.len() - tp - fn_ - fp;
            let scores: Vec<f64> = predictions.iter().map(|r| r[c]).collect();
            let positive: Vec<bool> = truth.iter().map(|&t| t == c).collect();
            let auc = auc_from_scores(&scores, &positive);
            class_metrics(c, &Counts { tp, fp, fn_, tn }, auc)
        })
        .collect();

    let in_subset: Vec<usize> = (0..truth.len())
        .filter(|&i| subset.contains(&truth[i]))
        .collect();
    if in_subset.is_empty() {
        return Err(VarsError::Contract(
            "no sample has its true class in the requested subset".into(),
        ));
    }
    let correct = in_subset
        .iter()
        .filter(|&&i| truth[i] == predicted[i])
        .count();
    let accuracy = correct as f64 / in_subset.len() as f64;

    let (macro_f1, macro_sensitivity, macro_specificity, macro_precision, macro_auc) =
        macro_average(&per_class);
    Ok(MetricsReport {
        accuracy,
        subset_accuracy: None,
        macro_f1,
        macro_sensitivity,
        macro_specificity,
        macro_precision,
        macro_auc,
        per_class,
        confusion: Some(confusion),
    })
}

fn multi_label_metrics(
    predictions: &[Vec<f64>],
    labels: &[Label],
    subset: &[usize],
    _classes: usize,
    threshold: f64,
) -> Result<MetricsReport> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(VarsError::Config(format!(
            "decision threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let n = predictions.len();
    let truth_sets: Vec<Vec<usize>> = labels.iter().map(|l| l.ids()).collect();

    let mut per_class = Vec::with_capacity(subset.len());
    let mut label_acc_sum = 0.0;
    for &c in subset {
        let mut counts = Counts {
            tp: 0,
            fp: 0,
            fn_: 0,
            tn: 0,
        };
        for (row, truth) in predictions.iter().zip(&truth_sets) {
            let is_true = truth.contains(&c);
            let is_pred = row[c] >= threshold;
            match (is_true, is_pred) {
                (true, true) => counts.tp += 1,
                (false, true) => counts.fp += 1,
                (true, false) => counts.fn_ += 1,
                (false, false) => counts.tn += 1,
            }
        }
        let scores: Vec<f64> = predictions.iter().map(|r| r[c]).collect();
        let positive: Vec<bool> = truth_sets.iter().map(|t| t.contains(&c)).collect();
        let auc = auc_from_scores(&scores, &positive);
        label_acc_sum += (counts.tp + counts.tn) as f64 / n as f64;
        per_class.push(class_metrics(c, &counts, auc));
    }
    let accuracy = label_acc_sum / subset.len() as f64;

    let exact = predictions
        .iter()
        .zip(&truth_sets)
        .filter(|(row, truth)| {
            subset
                .iter()
                .all(|&c| (row[c] >= threshold) == truth.contains(&c))
        })
        .count();
    let subset_accuracy = Some(exact as f64 / n as f64);

    let (macro_f1, macro_sensitivity, macro_specificity, macro_precision, macro_auc) =
        macro_average(&per_class);
    Ok(MetricsReport {
        accuracy,
        subset_accuracy,
        macro_f1,
        macro_sensitivity,
        macro_specificity,
        macro_precision,
        macro_auc,
        per_class,
        confusion: None,
    })
}

impl MetricsReport {
    /// Column order matches [`csv_header`].
    pub fn to_csv_row(&self) -> String {
        let auc = self
            .macro_auc
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|| "undefined".into());
        let subset = self
            .subset_accuracy
            .map(|v| format!("{v:.6}"))
            .unwrap_or_default();
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{auc},{subset}",
            self.accuracy,
            self.macro_f1,
            self.macro_sensitivity,
            self.macro_specificity,
            self.macro_precision,
        )
    }

    pub fn csv_header() -> &'static str {
        "accuracy,macro_f1,macro_sensitivity,macro_specificity,macro_precision,macro_auc,subset_accuracy"
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let fmt_auc =
            |auc: Option<f64>| auc.map(|v| format!("{v:.4}")).unwrap_or_else(|| "undef".into());
        out.push_str(&format!("accuracy           {:.4}\n", self.accuracy));
        if let Some(s) = self.subset_accuracy {
            out.push_str(&format!("subset accuracy    {s:.4}\n"));
        }
        out.push_str(&format!("macro f1           {:.4}\n", self.macro_f1));
        out.push_str(&format!("macro sensitivity  {:.4}\n", self.macro_sensitivity));
        out.push_str(&format!("macro specificity  {:.4}\n", self.macro_specificity));
        out.push_str(&format!("macro precision    {:.4}\n", self.macro_precision));
        out.push_str(&format!("macro auc          {}\n", fmt_auc(self.macro_auc)));
        out.push_str("class  support  precision  sensitivity  specificity  f1      auc\n");
        for c in &self.per_class {
            out.push_str(&format!(
                "{:<6} {:<8} {:<10.4} {:<12.4} {:<12.4} {:<7.4} {}\n",
                c.class,
                c.support,
                c.precision,
                c.sensitivity,
                c.specificity,
                c.f1,
                fmt_auc(c.auc)
            ));
        }
        if let Some(confusion) = &self.confusion {
            out.push_str("confusion (rows true, cols predicted):\n");
            for row in confusion {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:>6}")).collect();
                out.push_str(&format!("  {}\n", cells.join(" ")));
            }
        }
        out
    }
}
