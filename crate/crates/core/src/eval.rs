//! Tip-distance and angle-error evaluation with Table-1 style reports.
//!
//! Per-image values stay unrounded; rounding (two decimals, half up) happens
//! only when a report is emitted.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{NeedlePose, PixelPoint, TipClass};

/// Published per-image needle results, transcribed to CSV.
pub const TABLE1_FIXTURE: &str = include_str!("../data/table1.csv");

pub fn tip_distance(det: PixelPoint, real: PixelPoint) -> f64 {
    det.distance(&real)
}

pub fn angle_error(det_deg: f64, real_deg: f64) -> f64 {
    (det_deg - real_deg).abs()
}

/// Rounds half away from zero at `decimals` places. A relative nudge of
/// 1e-12 absorbs binary representation error so that values meant as exact
/// ties (2.675) round up.
pub fn round_half_up(v: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let scaled = v.abs() * scale;
    let rounded = (scaled * (1.0 + 1e-12) + 0.5).floor() / scale;
    rounded.copysign(v)
}

pub fn fmt2(v: f64) -> String {
    format!("{:.2}", round_half_up(v, 2))
}

fn fmt_coord(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        fmt2(v)
    }
}

fn fmt_point(p: PixelPoint) -> String {
    format!("({},{})", fmt_coord(p.x), fmt_coord(p.y))
}

/// Tip, angle and (optionally) class on one side of a comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub tip: PixelPoint,
    pub angle_deg: f64,
    pub class: Option<TipClass>,
}

impl From<&NeedlePose> for Estimate {
    fn from(p: &NeedlePose) -> Self {
        Estimate {
            tip: p.tip,
            angle_deg: p.angle_deg,
            class: Some(p.tip_class),
        }
    }
}

/// One evaluation input: an image's ground truth and its detection, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub image_id: String,
    pub detected: Option<Estimate>,
    pub truth: Estimate,
}

/// One report row. Distance and error are absent for missed detections.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    image_id: String,
    detected: Option<Estimate>,
    truth: Estimate,
    tip_dist: Option<f64>,
    ang_err: Option<f64>,
}

impl EvalRecord {
    pub fn new(image_id: impl Into<String>, detected: Option<Estimate>, truth: Estimate) -> Result<Self> {
        let image_id = image_id.into();
        if image_id.is_empty() {
            return Err(Error::Validation("image id must not be empty".into()));
        }
        Ok(EvalRecord {
            image_id,
            tip_dist: detected.map(|d| tip_distance(d.tip, truth.tip)),
            ang_err: detected.map(|d| angle_error(d.angle_deg, truth.angle_deg)),
            detected,
            truth,
        })
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn detected(&self) -> Option<&Estimate> {
        self.detected.as_ref()
    }

    pub fn truth(&self) -> &Estimate {
        &self.truth
    }

    pub fn tip_dist(&self) -> Option<f64> {
        self.tip_dist
    }

    pub fn ang_err(&self) -> Option<f64> {
        self.ang_err
    }

    /// `Some(true)` when both classes are known and agree.
    pub fn class_correct(&self) -> Option<bool> {
        let real = self.truth.class?;
        match self.detected {
            None => Some(false),
            Some(d) => d.class.map(|c| c == real),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub n: usize,
    pub misses: usize,
    pub mean_tip_dist: Option<f64>,
    pub mean_ang_err: Option<f64>,
    pub max_tip_dist: Option<f64>,
    /// Fraction of class-labelled pairs whose detected class is right;
    /// misses count as wrong.
    pub class_accuracy: Option<f64>,
}

impl EvalSummary {
    pub fn from_records(records: &[EvalRecord]) -> Self {
        let dists: Vec<f64> = records.iter().filter_map(EvalRecord::tip_dist).collect();
        let errs: Vec<f64> = records.iter().filter_map(EvalRecord::ang_err).collect();
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let judged: Vec<bool> = records.iter().filter_map(EvalRecord::class_correct).collect();
        EvalSummary {
            n: records.len(),
            misses: records.iter().filter(|r| r.detected.is_none()).count(),
            mean_tip_dist: mean(&dists),
            mean_ang_err: mean(&errs),
            max_tip_dist: dists.iter().copied().reduce(f64::max),
            class_accuracy: (!judged.is_empty())
                .then(|| judged.iter().filter(|&&ok| ok).count() as f64 / judged.len() as f64),
        }
    }

    /// `mean_tip_dist=<v>px mean_ang_err=<v>deg class_acc=<v>`.
    pub fn summary_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt2).unwrap_or_else(|| "n/a".into());
        let mut line = format!(
            "mean_tip_dist={}px mean_ang_err={}deg class_acc={}",
            opt(self.mean_tip_dist),
            opt(self.mean_ang_err),
            opt(self.class_accuracy)
        );
        if self.misses > 0 {
            let _ = write!(line, " misses={}", self.misses);
        }
        line
    }
}

pub fn evaluate_pairs(pairs: &[EvalPair]) -> Result<(Vec<EvalRecord>, EvalSummary)> {
    if pairs.is_empty() {
        return Err(Error::Config("nothing to evaluate: no image pairs".into()));
    }
    let records = pairs
        .iter()
        .map(|p| EvalRecord::new(p.image_id.clone(), p.detected, p.truth))
        .collect::<Result<Vec<_>>>()?;
    let summary = EvalSummary::from_records(&records);
    Ok((records, summary))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

pub const REPORT_COLUMNS: [&str; 7] = [
    "Image", "Det Tip", "Real Tip", "Det Ang", "Real Ang", "Tip Dist", "Ang Err",
];

fn report_rows(records: &[EvalRecord], summary: &EvalSummary) -> Vec<[String; 7]> {
    let missing = || "-".to_string();
    let mut rows: Vec<[String; 7]> = records
        .iter()
        .map(|r| {
            [
                r.image_id.clone(),
                r.detected.map(|d| fmt_point(d.tip)).unwrap_or_else(missing),
                fmt_point(r.truth.tip),
                r.detected.map(|d| fmt2(d.angle_deg)).unwrap_or_else(missing),
                fmt2(r.truth.angle_deg),
                r.tip_dist.map(fmt2).unwrap_or_else(missing),
                r.ang_err.map(fmt2).unwrap_or_else(missing),
            ]
        })
        .collect();
    rows.push([
        "Mean".into(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        summary.mean_tip_dist.map(fmt2).unwrap_or_else(missing),
        summary.mean_ang_err.map(fmt2).unwrap_or_else(missing),
    ]);
    rows
}

pub fn emit_report(records: &[EvalRecord], summary: &EvalSummary, format: ReportFormat) -> String {
    let rows = report_rows(records, summary);
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(REPORT_COLUMNS).expect("in-memory write");
            for row in &rows {
                w.write_record(row).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
        }
        ReportFormat::Markdown => {
            let mut out = format!("| {} |\n", REPORT_COLUMNS.join(" | "));
            out.push('|');
            for _ in REPORT_COLUMNS {
                out.push_str(" --- |");
            }
            out.push('\n');
            for row in &rows {
                let _ = writeln!(out, "| {} |", row.join(" | "));
            }
            let _ = writeln!(out, "\n{}", summary.summary_line());
            out
        }
    }
}

/// One transcribed Table 1 row with its printed distance and error.
#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub image: String,
    pub det_tip: PixelPoint,
    pub real_tip: PixelPoint,
    pub det_ang: f64,
    pub real_ang: f64,
    pub printed_tip_dist: f64,
    pub printed_ang_err: f64,
}

impl Table1Row {
    pub fn pair(&self) -> EvalPair {
        EvalPair {
            image_id: self.image.clone(),
            detected: Some(Estimate {
                tip: self.det_tip,
                angle_deg: self.det_ang,
                class: None,
            }),
            truth: Estimate {
                tip: self.real_tip,
                angle_deg: self.real_ang,
                class: None,
            },
        }
    }
}

pub fn parse_table1(text: &str) -> Result<Vec<Table1Row>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(format!("table fixture: {e}")))?;
        let lineno = i + 2;
        const FIELDS: [&str; 9] = [
            "image", "det_x", "det_y", "real_x", "real_y", "det_ang", "real_ang", "tip_dist", "ang_err",
        ];
        if rec.len() != FIELDS.len() {
            return Err(Error::Parse {
                line: lineno,
                field: "line",
                reason: format!("expected {} fields, found {}", FIELDS.len(), rec.len()),
            });
        }
        let num = |k: usize| -> Result<f64> {
            rec[k].parse::<f64>().map_err(|e| Error::Parse {
                line: lineno,
                field: FIELDS[k],
                reason: format!("`{}`: {e}", &rec[k]),
            })
        };
        rows.push(Table1Row {
            image: rec[0].to_owned(),
            det_tip: PixelPoint::new(num(1)?, num(2)?)?,
            real_tip: PixelPoint::new(num(3)?, num(4)?)?,
            det_ang: num(5)?,
            real_ang: num(6)?,
            printed_tip_dist: num(7)?,
            printed_ang_err: num(8)?,
        });
    }
    if rows.is_empty() {
        return Err(Error::Format("table fixture has no rows".into()));
    }
    Ok(rows)
}

/// Published averages of the two columns.
pub const TABLE1_MEAN_TIP_DIST: f64 = 4.80;
pub const TABLE1_MEAN_ANG_ERR: f64 = 0.85;
pub const ROW_TOLERANCE: f64 = 0.005;
pub const MEAN_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Table1RowCheck {
    pub image: String,
    pub tip_dist: f64,
    pub ang_err: f64,
    pub printed_tip_dist: f64,
    pub printed_ang_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Check {
    pub rows: Vec<Table1RowCheck>,
    pub mean_tip_dist: f64,
    pub mean_ang_err: f64,
    pub means_pass: bool,
}

impl Table1Check {
    pub fn all_pass(&self) -> bool {
        self.means_pass && self.rows.iter().all(|r| r.pass)
    }
}

/// Recomputes every distance and error of the fixture and compares them with
/// the printed values, and the means with the published averages.
pub fn check_table1(rows: &[Table1Row]) -> Result<Table1Check> {
    let pairs: Vec<EvalPair> = rows.iter().map(Table1Row::pair).collect();
    let (records, summary) = evaluate_pairs(&pairs)?;
    let checks = rows
        .iter()
        .zip(&records)
        .map(|(row, rec)| {
            let tip_dist = rec.tip_dist.expect("fixture rows carry detections");
            let ang_err = rec.ang_err.expect("fixture rows carry detections");
            Table1RowCheck {
                image: row.image.clone(),
                tip_dist,
                ang_err,
                printed_tip_dist: row.printed_tip_dist,
                printed_ang_err: row.printed_ang_err,
                pass: (tip_dist - row.printed_tip_dist).abs() <= ROW_TOLERANCE
                    && (ang_err - row.printed_ang_err).abs() <= ROW_TOLERANCE,
            }
        })
        .collect();
    let mean_tip_dist = summary.mean_tip_dist.expect("non-empty");
    let mean_ang_err = summary.mean_ang_err.expect("non-empty");
    Ok(Table1Check {
        rows: checks,
        mean_tip_dist,
        mean_ang_err,
        means_pass: (mean_tip_dist - TABLE1_MEAN_TIP_DIST).abs() <= MEAN_TOLERANCE
            && (mean_ang_err - TABLE1_MEAN_ANG_ERR).abs() <= MEAN_TOLERANCE,
    })
}
