//! Scenario records from long-format CSV: one row per (track, frame) sample.
//!
//! Rows are grouped by track, split into runs of consecutive frames, and cut
//! into fixed-length segments at a stride equal to the segment length
//! (neighboring segments share their boundary sample). Context features come
//! from a segment's first row and the mode label from its last row.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::{fmt_float, CsvTable};
use crate::trajectory::{
    grid_steps, Dataset, EnvironmentContext, Point, Role, Scenario, ScenarioId, Trajectory,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSchema {
    pub track_column: String,
    pub frame_column: String,
    pub x_column: String,
    pub y_column: String,
    /// Context feature columns, in order.
    pub features: Vec<String>,
    /// Integer lane or maneuver label column, if any.
    pub mode_column: Option<String>,
    pub sample_rate: f64,
    /// Feature value that marks an absent neighbor. Empty fields are always
    /// absent.
    pub sentinel: Option<f64>,
    pub segment_secs: f64,
}

impl Default for IngestSchema {
    fn default() -> Self {
        Self {
            track_column: "track_id".into(),
            frame_column: "frame".into(),
            x_column: "x".into(),
            y_column: "y".into(),
            features: Vec::new(),
            mode_column: None,
            sample_rate: 25.0,
            sentinel: None,
            segment_secs: 10.0,
        }
    }
}

impl IngestSchema {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) || !self.sample_rate.is_finite() {
            return Err(Error::Config(format!("sample_rate {} must be > 0", self.sample_rate)));
        }
        let steps = grid_steps(self.segment_secs, self.sample_rate)
            .map_err(|e| Error::Config(format!("segment_secs: {e}")))?;
        if steps == 0 {
            return Err(Error::Config("segment_secs must cover at least one sample step".into()));
        }
        Ok(())
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec![
            self.track_column.clone(),
            self.frame_column.clone(),
            self.x_column.clone(),
            self.y_column.clone(),
        ];
        h.extend(self.features.iter().cloned());
        h.extend(self.mode_column.iter().cloned());
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MalformedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub dataset: Dataset,
    pub rows: usize,
    pub malformed: Vec<MalformedRow>,
    /// Trailing pieces shorter than a segment (at least two samples).
    pub partial_dropped: usize,
}

struct Row {
    line: u64,
    frame: i64,
    pos: Point,
    features: Vec<Option<f64>>,
    mode: Option<i64>,
}

struct Columns {
    track: usize,
    frame: usize,
    x: usize,
    y: usize,
    features: Vec<usize>,
    mode: Option<usize>,
}

fn locate(headers: &csv::StringRecord, schema: &IngestSchema) -> Result<Columns> {
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    Ok(Columns {
        track: find(&schema.track_column)?,
        frame: find(&schema.frame_column)?,
        x: find(&schema.x_column)?,
        y: find(&schema.y_column)?,
        features: schema.features.iter().map(|f| find(f)).collect::<Result<_>>()?,
        mode: schema.mode_column.as_deref().map(find).transpose()?,
    })
}

fn parse_row(rec: &csv::StringRecord, cols: &Columns, width: usize, schema: &IngestSchema) -> std::result::Result<(String, Row), String> {
    if rec.len() != width {
        return Err(format!("expected {width} fields, found {}", rec.len()));
    }
    let num = |i: usize, what: &str| -> std::result::Result<f64, String> {
        let v: f64 = rec[i]
            .trim()
            .parse()
            .map_err(|_| format!("{what}: cannot parse `{}`", &rec[i]))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("{what}: non-finite value"))
        }
    };
    let frame = num(cols.frame, "frame")?;
    if frame.fract() != 0.0 {
        return Err(format!("frame: `{}` is not an integer", &rec[cols.frame]));
    }
    let features = cols
        .features
        .iter()
        .zip(&schema.features)
        .map(|(&i, name)| {
            if rec[i].trim().is_empty() {
                return Ok(None);
            }
            let v = num(i, name)?;
            Ok(if schema.sentinel == Some(v) { None } else { Some(v) })
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    let mode = match cols.mode {
        Some(i) => {
            let v = num(i, "mode")?;
            if v.fract() != 0.0 {
                return Err(format!("mode: `{}` is not an integer", &rec[i]));
            }
            Some(v as i64)
        }
        None => None,
    };
    Ok((
        rec[cols.track].trim().to_string(),
        Row {
            line: 0,
            frame: frame as i64,
            pos: [num(cols.x, "x")?, num(cols.y, "y")?],
            features,
            mode,
        },
    ))
}

/// Reads scenarios from CSV text. `source` names the records in scenario ids.
pub fn ingest_reader<R: Read>(reader: R, source: &str, schema: &IngestSchema) -> Result<IngestReport> {
    schema.validate()?;
    let seg = grid_steps(schema.segment_secs, schema.sample_rate)?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = locate(&headers, schema)?;
    let width = headers.len();

    let mut order: Vec<String> = Vec::new();
    let mut tracks: HashMap<String, Vec<Row>> = HashMap::new();
    let mut malformed = Vec::new();
    let mut rows = 0;
    let mut rec = csv::StringRecord::new();
    loop {
        let line = rdr.position().line();
        match rdr.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                malformed.push(MalformedRow {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        }
        rows += 1;
        let line = rec.position().map(|p| p.line()).unwrap_or(line);
        match parse_row(&rec, &cols, width, schema) {
            Ok((track, mut row)) => {
                row.line = line;
                tracks
                    .entry(track.clone())
                    .or_insert_with(|| {
                        order.push(track);
                        Vec::new()
                    })
                    .push(row);
            }
            Err(reason) => malformed.push(MalformedRow { line, reason }),
        }
    }

    let source: Arc<str> = Arc::from(source);
    let mut scenarios = Vec::new();
    let mut partial_dropped = 0;
    for name in &order {
        let mut track = tracks.remove(name).expect("track recorded");
        track.sort_by_key(|r| r.frame);
        // Repeated frames keep the first occurrence.
        let mut kept: Vec<Row> = Vec::with_capacity(track.len());
        for r in track {
            if kept.last().is_some_and(|k| k.frame == r.frame) {
                malformed.push(MalformedRow {
                    line: r.line,
                    reason: format!("duplicate frame {} in track {name}", r.frame),
                });
            } else {
                kept.push(r);
            }
        }
        let mut start = 0;
        while start < kept.len() {
            let mut end = start + 1;
            while end < kept.len() && kept[end].frame == kept[end - 1].frame + 1 {
                end += 1;
            }
            let run = &kept[start..end];
            let mut s = 0;
            while s + seg < run.len() {
                let piece = &run[s..=s + seg];
                let positions: Vec<Point> = piece.iter().map(|r| r.pos).collect();
                scenarios.push(Scenario {
                    id: ScenarioId {
                        source: source.clone(),
                        index: scenarios.len(),
                    },
                    trajectory: Trajectory::new(positions, schema.sample_rate)?,
                    context: EnvironmentContext::new(piece[0].features.clone()),
                    mode_label: piece[seg].mode,
                });
                s += seg;
            }
            if run.len() - s >= 2 {
                partial_dropped += 1;
            }
            start = end;
        }
    }
    malformed.sort_by_key(|m| m.line);
    if scenarios.is_empty() {
        return Err(Error::Data(format!(
            "no complete {} s scenario in {rows} rows",
            schema.segment_secs
        )));
    }
    Ok(IngestReport {
        dataset: Dataset::new(Role::Train, scenarios)?,
        rows,
        malformed,
        partial_dropped,
    })
}

pub fn ingest_scenarios(path: &Path, schema: &IngestSchema) -> Result<IngestReport> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(std::io::BufReader::new(file), &path.display().to_string(), schema)
}

/// Serializes scenarios in the schema's format, one track per scenario.
/// Reading the text back with the same schema reproduces the scenarios.
pub fn write_scenarios(dataset: &Dataset, schema: &IngestSchema) -> Result<String> {
    if let Some(rate) = dataset.sample_rate() {
        if rate != schema.sample_rate {
            return Err(Error::Schema(format!(
                "dataset sampled at {rate} Hz, schema expects {} Hz",
                schema.sample_rate
            )));
        }
    }
    let mut t = CsvTable::new(schema.header());
    for s in dataset.scenarios() {
        if s.context.dim() != schema.features.len() {
            return Err(Error::Schema(format!(
                "{} context features, schema lists {}",
                s.context.dim(),
                schema.features.len()
            )));
        }
        let feats: Vec<String> = s
            .context
            .features
            .iter()
            .map(|f| match (f, schema.sentinel) {
                (Some(v), _) => fmt_float(*v),
                (None, Some(sentinel)) => fmt_float(sentinel),
                (None, None) => String::new(),
            })
            .collect();
        for (frame, p) in s.trajectory.positions().iter().enumerate() {
            let mut row = vec![
                s.id.index.to_string(),
                frame.to_string(),
                fmt_float(p[0]),
                fmt_float(p[1]),
            ];
            row.extend(feats.iter().cloned());
            if schema.mode_column.is_some() {
                row.push(s.mode_label.map(|m| m.to_string()).unwrap_or_default());
            }
            t.push(row);
        }
    }
    Ok(t.to_text())
}
