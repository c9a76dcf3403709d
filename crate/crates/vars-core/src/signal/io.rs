//! On-disk dataset format.
//!
//! A dataset is a manifest plus one CSV per record. The manifest is a JSON
//! array of entries `{path, sampling_rate_hz, record_id?, label?,
//! anomaly_intervals?}`; `path` is resolved relative to the manifest's
//! directory, `record_id` defaults to the CSV file stem, `label` is a class
//! id or an array of ids, and `anomaly_intervals` is a list of
//! `[start_sec, end_sec]` pairs. Each CSV has a `lead_0..lead_{n-1}` header
//! row and one sample per line across all leads.

use crate::error::{Result, VarsError};
use crate::signal::{EcgRecord, Label};
use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};

/// Load every record referenced by a manifest. An empty manifest is an empty
/// dataset, not an error.
pub fn load_dataset(manifest_path: &Path) -> Result<Vec<EcgRecord>> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| VarsError::io(manifest_path.display().to_string(), e))?;
    let root: Value = serde_json::from_str(&text)
        .map_err(|e| VarsError::format(manifest_path.display().to_string(), e.to_string()))?;
    let entries = root.as_array().ok_or_else(|| {
        VarsError::format(
            manifest_path.display().to_string(),
            "manifest must be a JSON array of record entries",
        )
    })?;

    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut records = Vec::with_capacity(entries.len());
    for (idx, entry) in entries.iter().enumerate() {
        records.push(parse_entry(entry, idx, base, manifest_path)?);
    }
    Ok(records)
}

fn parse_entry(
    entry: &Value,
    idx: usize,
    base: &Path,
    manifest_path: &Path,
) -> Result<EcgRecord> {
    let ctx = || format!("{} entry {}", manifest_path.display(), idx);
    let obj = entry
        .as_object()
        .ok_or_else(|| VarsError::format(ctx(), "entry must be an object"))?;

    let rel = obj
        .get("path")
        .and_then(Value::as_str)
        .ok_or_else(|| VarsError::format(ctx(), "missing string field `path`"))?;
    let rate = obj
        .get("sampling_rate_hz")
        .and_then(Value::as_u64)
        .ok_or_else(|| VarsError::format(ctx(), "missing positive integer `sampling_rate_hz`"))?;
    if rate == 0 || rate > u32::MAX as u64 {
        return Err(VarsError::format(ctx(), "sampling_rate_hz out of range"));
    }

    let label = match obj.get("label") {
        None | Some(Value::Null) => None,
        Some(v) => Some(parse_label(v).map_err(|detail| VarsError::format(ctx(), detail))?),
    };

    let anomaly_intervals = match obj.get("anomaly_intervals") {
        None | Some(Value::Null) => vec![],
        Some(v) => parse_intervals(v).map_err(|detail| VarsError::format(ctx(), detail))?,
    };

    let csv_path = base.join(rel);
    let record_id = match obj.get("record_id") {
        Some(v) => v
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| VarsError::format(ctx(), "record_id must be a string"))?,
        None => Path::new(rel)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("record_{idx}")),
    };
    let leads = read_lead_csv(&csv_path)?;

    let record = EcgRecord {
        record_id,
        leads,
        sampling_rate_hz: rate as u32,
        label,
        anomaly_intervals,
    };
    record.validate()?;
    Ok(record)
}

fn parse_label(v: &Value) -> std::result::Result<Label, String> {
    match v {
        Value::Number(n) => n
            .as_u64()
            .map(|id| Label::Single(id as usize))
            .ok_or_else(|| format!("label id must be a non-negative integer, got {n}")),
        Value::Array(items) => {
            let mut ids = Vec::with_capacity(items.len());
            for item in items {
                let id = item
                    .as_u64()
                    .ok_or_else(|| format!("label id must be a non-negative integer, got {item}"))?;
                ids.push(id as usize);
            }
            Ok(Label::Multi(ids))
        }
        other => Err(format!("label must be an id or array of ids, got {other}")),
    }
}

fn parse_intervals(v: &Value) -> std::result::Result<Vec<(f64, f64)>, String> {
    let items = v
        .as_array()
        .ok_or_else(|| "anomaly_intervals must be an array".to_string())?;
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let pair = item
            .as_array()
            .filter(|p| p.len() == 2)
            .ok_or_else(|| format!("interval must be a [start, end] pair, got {item}"))?;
        let start = pair[0].as_f64().ok_or_else(|| "interval start must be a number".to_string())?;
        let end = pair[1].as_f64().ok_or_else(|| "interval end must be a number".to_string())?;
        if !(start.is_finite() && end.is_finite() && start < end) {
            return Err(format!("interval [{start}, {end}] must satisfy start < end"));
        }
        out.push((start, end));
    }
    Ok(out)
}

/// Read one record's samples: header `lead_0..lead_{n-1}`, then one line per
/// sample with n comma-separated values.
pub fn read_lead_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| VarsError::io(name.clone(), e))?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| VarsError::format(name.clone(), "empty file"))?;
    let columns: Vec<&str> = header.split(',').collect();
    for (i, col) in columns.iter().enumerate() {
        let expect = format!("lead_{i}");
        if col.trim() != expect {
            return Err(VarsError::format(
                name.clone(),
                format!("header column {i} must be `{expect}`, got `{col}`"),
            ));
        }
    }

    let n = columns.len();
    let mut leads: Vec<Vec<f64>> = vec![Vec::new(); n];
    for (line_no, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n {
            return Err(VarsError::format(
                name.clone(),
                format!("line {}: expected {n} values, got {}", line_no + 1, fields.len()),
            ));
        }
        for (lead, field) in leads.iter_mut().zip(&fields) {
            let v: f64 = field.trim().parse().map_err(|_| {
                VarsError::format(
                    name.clone(),
                    format!("line {}: `{field}` is not a number", line_no + 1),
                )
            })?;
            lead.push(v);
        }
    }
    if leads[0].is_empty() {
        return Err(VarsError::format(name, "no samples after header"));
    }
    Ok(leads)
}

/// Write one record's samples in the lead CSV format.
pub fn write_lead_csv(path: &Path, leads: &[Vec<f64>]) -> Result<()> {
    let name = path.display().to_string();
    let n = leads.len();
    let t = leads.first().map_or(0, Vec::len);
    let mut out = String::new();
    for i in 0..n {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format!("lead_{i}"));
    }
    out.push('\n');
    for s in 0..t {
        for (i, lead) in leads.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", lead[s]));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| VarsError::io(name, e))
}

/// Write a dataset directory: `record_<i>.csv` per record plus
/// `manifest.json`. Returns the manifest path.
pub fn write_dataset(dir: &Path, records: &[EcgRecord]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| VarsError::io(dir.display().to_string(), e))?;
    let mut entries = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let file = format!("record_{i:04}.csv");
        write_lead_csv(&dir.join(&file), &rec.leads)?;
        let mut entry = serde_json::Map::new();
        entry.insert("path".into(), Value::String(file));
        entry.insert("record_id".into(), Value::String(rec.record_id.clone()));
        entry.insert(
            "sampling_rate_hz".into(),
            Value::Number(rec.sampling_rate_hz.into()),
        );
        if let Some(label) = &rec.label {
            entry.insert("label".into(), serde_json::to_value(label).unwrap());
        }
        if !rec.anomaly_intervals.is_empty() {
            let ivs: Vec<Value> = rec
                .anomaly_intervals
                .iter()
                .map(|(a, b)| serde_json::json!([a, b]))
                .collect();
            entry.insert("anomaly_intervals".into(), Value::Array(ivs));
        }
        entries.push(Value::Object(entry));
    }
    let manifest = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&Value::Array(entries))
        .expect("manifest serialization cannot fail");
    fs::write(&manifest, text).map_err(|e| VarsError::io(manifest.display().to_string(), e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(path: &Path, text: &str) {
        fs::write(path, text).unwrap();
    }

    #[test]
    fn loads_two_lead_record_with_label() {
        let dir = tempfile::tempdir().unwrap();
        // 9 s at 360 Hz.
        let t = 9 * 360;
        let mut csv = String::from("lead_0,lead_1\n");
        for i in 0..t {
            csv.push_str(&format!("{},{}\n", i as f64 * 0.001, -(i as f64) * 0.002));
        }
        write(&dir.path().join("rec.csv"), &csv);
        write(
            &dir.path().join("manifest.json"),
            r#"[{"path": "rec.csv", "sampling_rate_hz": 360, "label": 1,
                "anomaly_intervals": [[1.0, 2.5]]}]"#,
        );
        let records = load_dataset(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].num_leads(), 2);
        assert_eq!(records[0].samples_per_lead(), 3240);
        assert_eq!(records[0].label, Some(Label::Single(1)));
        assert_eq!(records[0].anomaly_intervals, vec![(1.0, 2.5)]);
        assert_eq!(records[0].record_id, "rec");
    }

    #[test]
    fn empty_manifest_is_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        write(&dir.path().join("manifest.json"), "[]");
        let records = load_dataset(&dir.path().join("manifest.json")).unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn missing_csv_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        write(
            &dir.path().join("manifest.json"),
            r#"[{"path": "absent.csv", "sampling_rate_hz": 100}]"#,
        );
        let err = load_dataset(&dir.path().join("manifest.json")).unwrap_err();
        assert!(matches!(err, VarsError::Io { .. }), "{err}");
    }

    #[test]
    fn ragged_csv_line_is_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        write(
            &dir.path().join("rec.csv"),
            "lead_0,lead_1\n0.1,0.2\n0.3\n",
        );
        write(
            &dir.path().join("manifest.json"),
            r#"[{"path": "rec.csv", "sampling_rate_hz": 100}]"#,
        );
        let err = load_dataset(&dir.path().join("manifest.json")).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn bad_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(&dir.path().join("rec.csv"), "lead_0,channel_1\n0.1,0.2\n");
        write(
            &dir.path().join("manifest.json"),
            r#"[{"path": "rec.csv", "sampling_rate_hz": 100}]"#,
        );
        let err = load_dataset(&dir.path().join("manifest.json")).unwrap_err();
        assert!(err.to_string().contains("lead_1"), "{err}");
    }

    #[test]
    fn negative_label_id_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(&dir.path().join("rec.csv"), "lead_0\n0.5\n0.6\n");
        write(
            &dir.path().join("manifest.json"),
            r#"[{"path": "rec.csv", "sampling_rate_hz": 100, "label": -3}]"#,
        );
        let err = load_dataset(&dir.path().join("manifest.json")).unwrap_err();
        assert!(err.to_string().contains("label"), "{err}");
    }

    #[test]
    fn multi_label_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let rec = EcgRecord {
            record_id: "r".into(),
            leads: vec![vec![0.25, -0.5, 0.75]],
            sampling_rate_hz: 50,
            label: Some(Label::Multi(vec![0, 2])),
            anomaly_intervals: vec![(0.0, 0.02)],
        };
        let manifest = write_dataset(dir.path(), &[rec.clone()]).unwrap();
        let loaded = load_dataset(&manifest).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0].leads, rec.leads);
        assert_eq!(loaded[0].label, rec.label);
        assert_eq!(loaded[0].anomaly_intervals, rec.anomaly_intervals);
    }

    #[test]
    fn record_ids_survive_a_write_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let make = |id: &str| EcgRecord {
            record_id: id.into(),
            leads: vec![vec![0.1, 0.2, 0.3]],
            sampling_rate_hz: 40,
            label: None,
            anomaly_intervals: vec![],
        };
        let recs = vec![make("normal_0003"), make("wide_qrs_0007")];
        let manifest = write_dataset(dir.path(), &recs).unwrap();
        let loaded = load_dataset(&manifest).unwrap();
        let ids: Vec<&str> = loaded.iter().map(|r| r.record_id.as_str()).collect();
        assert_eq!(ids, ["normal_0003", "wide_qrs_0007"]);
    }

    #[test]
    fn non_string_record_id_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(&dir.path().join("rec.csv"), "lead_0\n0.5\n0.6\n");
        write(
            &dir.path().join("manifest.json"),
            r#"[{"path": "rec.csv", "record_id": 7, "sampling_rate_hz": 100}]"#,
        );
        let err = load_dataset(&dir.path().join("manifest.json")).unwrap_err();
        assert!(err.to_string().contains("record_id"), "{err}");
    }
}
