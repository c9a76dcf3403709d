//! One function per subcommand. Each returns the artifact names for the run
//! manifest plus the seed the command consumed.

use crate::context::RunContext;
use std::collections::HashSet;
use std::fs;
use vars_core::classify::{compute_metrics, fit_head, predict_batch};
use vars_core::error::{Result, VarsError};
use vars_core::interpret::render::{
    match_rate_csv, render_dashboard, render_match_rate_curve, venn_json,
};
use vars_core::interpret::{
    default_tolerance_grid, explain_batch_with, match_rate_curve, venn_counts,
    ReferenceAnnotation,
};
use vars_core::signal::io::write_dataset;
use vars_core::signal::synth::{synth_generate, SynthSpec};
use vars_core::signal::{EcgRecord, Label};
use vars_core::sweeps::{profile, render_sweep_plot, run_sweep, sweep_csv, SweepMetric, SweepSpec};
use vars_core::train::{pretrain, save_checkpoint};

pub type CommandOutcome = (Vec<String>, u64);

pub fn synth(ctx: &RunContext) -> Result<CommandOutcome> {
    let section = &ctx.config.synth;
    ctx.prepare_out(&["manifest.json"])?;
    let spec = SynthSpec::demo(section.records_per_class);
    let records = synth_generate(&spec, section.seed)?;
    write_dataset(&ctx.out, &records)?;
    log::info!("wrote {} synthetic records", records.len());
    Ok((vec!["manifest.json".into()], section.seed))
}

pub fn train(ctx: &RunContext) -> Result<CommandOutcome> {
    ctx.prepare_out(&["checkpoint.vars", "loss_trace.csv"])?;
    let records = ctx.require_train_records()?;
    let cfg = &ctx.config.train;
    let ckpt = pretrain(&records, cfg)?;
    save_checkpoint(&ckpt, &ctx.out.join("checkpoint.vars"))?;

    let mut csv = String::from("epoch,reconstruction,jse,contrastive,total\n");
    for row in &ckpt.loss_trace {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.epoch, row.l_rec, row.l_jse, row.l_cl, row.total
        ));
    }
    ctx.write_text("loss_trace.csv", &csv)?;
    Ok((
        vec!["checkpoint.vars".into(), "loss_trace.csv".into()],
        cfg.seed,
    ))
}

pub fn fit(ctx: &RunContext) -> Result<CommandOutcome> {
    ctx.prepare_out(&["checkpoint.vars"])?;
    let ckpt = ctx.require_checkpoint()?;
    let records = ctx.require_train_records()?;
    let fitted = fit_head(&ckpt, &records, &ctx.config.head)?;
    save_checkpoint(&fitted, &ctx.out.join("checkpoint.vars"))?;
    Ok((vec!["checkpoint.vars".into()], ctx.config.head.seed))
}

pub fn eval(ctx: &RunContext) -> Result<CommandOutcome> {
    ctx.prepare_out(&["metrics.csv"])?;
    let ckpt = ctx.require_checkpoint()?;
    let records = ctx.require_eval_records()?;
    let info = ckpt.head.ok_or_else(|| {
        VarsError::Config("checkpoint has no classifier head; run fit first".into())
    })?;
    let labels = labeled(&records)?;
    let predictions = predict_batch(&ckpt, &records)?;
    let report = compute_metrics(&predictions, &labels, info.mode, info.threshold)?;

    let mut csv = String::from("metric,value\n");
    csv.push_str(&format!("accuracy,{}\n", report.accuracy));
    csv.push_str(&format!("macro_f1,{}\n", report.macro_f1));
    match report.macro_auc {
        Some(auc) => csv.push_str(&format!("macro_auc,{auc}\n")),
        None => csv.push_str("macro_auc,undefined\n"),
    }
    ctx.write_text("metrics.csv", &csv)?;
    log::info!(
        "accuracy {} macro_f1 {} over {} records",
        report.accuracy,
        report.macro_f1,
        records.len()
    );
    Ok((vec!["metrics.csv".into()], ckpt.config.seed))
}

fn labeled(records: &[EcgRecord]) -> Result<Vec<Label>> {
    records
        .iter()
        .map(|r| {
            r.label.clone().ok_or_else(|| {
                VarsError::Config(format!("record {} has no label", r.record_id))
            })
        })
        .collect()
}

/// File stem for a record's artifacts; anything outside [A-Za-z0-9_-]
/// becomes an underscore.
fn artifact_stem(record_id: &str) -> String {
    let stem: String = record_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if stem.is_empty() {
        "record".into()
    } else {
        stem
    }
}

pub fn explain(ctx: &RunContext) -> Result<CommandOutcome> {
    ctx.prepare_out(&[
        "explanations",
        "dashboards",
        "match_rate.csv",
        "match_rate_curve.svg",
        "venn.json",
    ])?;
    let ckpt = ctx.require_checkpoint()?;
    let records = ctx.require_eval_records()?;
    let section = &ctx.config.explain;
    let explanations = explain_batch_with(&ckpt, &records, section.tau_saliency, section.top_k)?;

    for dir in ["explanations", "dashboards"] {
        let path = ctx.out.join(dir);
        fs::create_dir_all(&path).map_err(|e| VarsError::io(path.display().to_string(), e))?;
    }
    let mut stems = HashSet::new();
    for (expl, record) in explanations.iter().zip(&records) {
        let stem = artifact_stem(&expl.record_id);
        if !stems.insert(stem.clone()) {
            return Err(VarsError::Config(format!(
                "record ids collide as artifact file name {stem}"
            )));
        }
        let dash = render_dashboard(expl, record)?;
        ctx.write_json(&format!("explanations/{stem}.json"), &dash.json)?;
        ctx.write_text(&format!("dashboards/{stem}.svg"), &dash.svg)?;
    }
    let mut outputs = vec!["explanations".to_string(), "dashboards".to_string()];

    let references: Vec<ReferenceAnnotation> = records
        .iter()
        .flat_map(|r| {
            r.anomaly_intervals.iter().map(|&(start, end)| ReferenceAnnotation {
                record_id: r.record_id.clone(),
                start_sec: start,
                end_sec: end,
            })
        })
        .collect();
    if references.is_empty() {
        log::info!("no anomaly intervals in the dataset; skipping match-rate artifacts");
    } else {
        let tolerances = section
            .tolerances
            .clone()
            .unwrap_or_else(default_tolerance_grid);
        let curve = match_rate_curve(&explanations, &references, &tolerances)?;
        ctx.write_text("match_rate.csv", &match_rate_csv(&curve))?;
        ctx.write_text("match_rate_curve.svg", &render_match_rate_curve(&curve)?)?;
        let venn = venn_counts(&explanations, &references, section.venn_tolerance_sec)?;
        ctx.write_json("venn.json", &venn_json(&venn))?;
        outputs.extend([
            "match_rate.csv".to_string(),
            "match_rate_curve.svg".to_string(),
            "venn.json".to_string(),
        ]);
    }
    Ok((outputs, ckpt.config.seed))
}

pub fn sweep(ctx: &RunContext) -> Result<CommandOutcome> {
    ctx.prepare_out(&[
        "sweep.csv",
        "sweep_accuracy.svg",
        "sweep_macro_f1.svg",
        "sweep_macro_auc.svg",
    ])?;
    let train_records = ctx.require_train_records()?;
    let eval_records = ctx.require_eval_records()?;
    let section = &ctx.config.sweep;
    let spec = SweepSpec {
        parameter: section.parameter,
        grid: section
            .grid
            .clone()
            .unwrap_or_else(|| section.parameter.default_grid()),
        base: ctx.config.train.clone(),
        head: ctx.config.head.clone(),
        seed: ctx.config.train.seed,
    };
    let rows = run_sweep(&spec, &train_records, &eval_records)?;
    ctx.write_text("sweep.csv", &sweep_csv(&rows))?;
    for (metric, name) in [
        (SweepMetric::Accuracy, "sweep_accuracy.svg"),
        (SweepMetric::MacroF1, "sweep_macro_f1.svg"),
        (SweepMetric::MacroAuc, "sweep_macro_auc.svg"),
    ] {
        ctx.write_text(name, &render_sweep_plot(&rows, metric)?)?;
    }
    Ok((
        vec![
            "sweep.csv".into(),
            "sweep_accuracy.svg".into(),
            "sweep_macro_f1.svg".into(),
            "sweep_macro_auc.svg".into(),
        ],
        spec.seed,
    ))
}

pub fn bench(ctx: &RunContext) -> Result<CommandOutcome> {
    ctx.prepare_out(&["profile.json"])?;
    let ckpt = ctx.require_checkpoint()?;
    let records = if ctx.config.data.eval_manifest.is_some() {
        ctx.require_eval_records()?
    } else {
        ctx.require_train_records()?
    };
    let record = records
        .first()
        .ok_or_else(|| VarsError::Contract("bench needs a nonempty dataset".into()))?;
    let report = profile(&ckpt, record, ctx.config.bench.repeats)?;
    let value = serde_json::to_value(&report).expect("report serializes");
    ctx.write_json("profile.json", &value)?;
    Ok((vec!["profile.json".into()], ckpt.config.seed))
}
