//! Detection decoding primitives: IoU, greedy NMS, grid-cell assignment and
//! best-detection selection, plus the plain-text detection exchange format.
//!
//! Exchange format: one detection per line,
//! `class_index conf x_min y_min x_max y_max` in pixels, whitespace separated.
//! Lines starting with `#` are comments. A comment of the form
//! `# image <id>` starts the section for image `<id>`, which lets one file
//! carry detections for a whole image set.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, PixelPoint, TipClass};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub class: TipClass,
    pub confidence: f64,
}

impl Detection {
    pub fn new(bbox: BoundingBox, class: TipClass, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Validation(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Detection {
            bbox,
            class,
            confidence,
        })
    }
}

/// Intersection over union of two boxes. Boxes sharing only an edge give 0.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.x_max().min(b.x_max()) - a.x_min().max(b.x_min())).max(0.0);
    let h = (a.y_max().min(b.y_max()) - a.y_min().max(b.y_min())).max(0.0);
    let inter = w * h;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

fn confidence_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    // Stable sort keeps earlier inputs first among equal confidences.
    order.sort_by(|&i, &j| {
        dets[j]
            .confidence
            .partial_cmp(&dets[i].confidence)
            .unwrap_or(Ordering::Equal)
    });
    order
}

/// Greedy non-maximum suppression.
///
/// Detections are visited by descending confidence (ties by input order); each
/// kept detection suppresses every later one whose IoU with it exceeds
/// `iou_threshold`. The result is in keep order.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let order = confidence_order(dets);
    let mut suppressed = vec![false; order.len()];
    let mut keep = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        if suppressed[rank] {
            continue;
        }
        keep.push(dets[i]);
        for (later, &j) in order.iter().enumerate().skip(rank + 1) {
            if !suppressed[later] && iou(&dets[i].bbox, &dets[j].bbox) > iou_threshold {
                suppressed[later] = true;
            }
        }
    }
    keep
}

/// Highest-confidence detection at or above `conf_threshold`, earliest on ties.
pub fn select_best(dets: &[Detection], conf_threshold: f64) -> Option<Detection> {
    let mut best: Option<Detection> = None;
    for d in dets.iter().filter(|d| d.confidence >= conf_threshold) {
        match best {
            Some(b) if b.confidence >= d.confidence => {}
            _ => best = Some(*d),
        }
    }
    best
}

/// An `s x s` partition of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    s: u32,
    img_w: u32,
    img_h: u32,
}

impl GridSpec {
    pub fn new(s: u32, img_w: u32, img_h: u32) -> Result<Self> {
        if s == 0 || img_w == 0 || img_h == 0 {
            return Err(Error::Validation(format!(
                "grid needs s, width and height >= 1 (got s={s}, {img_w}x{img_h})"
            )));
        }
        Ok(GridSpec { s, img_w, img_h })
    }

    pub fn cells_per_side(&self) -> u32 {
        self.s
    }
}

/// Grid cell `(row, col)` containing `p`. Cells are half-open, so every
/// in-bounds point belongs to exactly one cell.
pub fn grid_cell(p: PixelPoint, grid: &GridSpec) -> Result<(u32, u32)> {
    let (w, h) = (grid.img_w as f64, grid.img_h as f64);
    if !(0.0..w).contains(&p.x) || !(0.0..h).contains(&p.y) {
        return Err(Error::OutOfBounds {
            x: p.x,
            y: p.y,
            width: grid.img_w,
            height: grid.img_h,
        });
    }
    let s = grid.s as f64;
    let col = ((p.x * s / w).floor() as u32).min(grid.s - 1);
    let row = ((p.y * s / h).floor() as u32).min(grid.s - 1);
    Ok((row, col))
}

pub fn format_detection(d: &Detection) -> String {
    format!(
        "{} {} {} {} {} {}",
        d.class.index(),
        d.confidence,
        d.bbox.x_min(),
        d.bbox.y_min(),
        d.bbox.x_max(),
        d.bbox.y_max()
    )
}

fn parse_detection_line(line: &str, lineno: usize) -> Result<Detection> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 6 {
        return Err(Error::Parse {
            line: lineno,
            field: "line",
            reason: format!("expected 6 fields, found {}", fields.len()),
        });
    }
    let num = |idx: usize, field: &'static str| -> Result<f64> {
        fields[idx].parse::<f64>().map_err(|e| Error::Parse {
            line: lineno,
            field,
            reason: format!("`{}`: {e}", fields[idx]),
        })
    };
    let class = fields[0]
        .parse::<usize>()
        .ok()
        .and_then(TipClass::from_index)
        .ok_or_else(|| Error::Parse {
            line: lineno,
            field: "class_index",
            reason: format!("`{}` is not one of 0..3", fields[0]),
        })?;
    let conf = num(1, "conf")?;
    let bbox = BoundingBox::new(
        num(2, "x_min")?,
        num(3, "y_min")?,
        num(4, "x_max")?,
        num(5, "y_max")?,
    )
    .map_err(|e| Error::Parse {
        line: lineno,
        field: "box",
        reason: e.to_string(),
    })?;
    Detection::new(bbox, class, conf).map_err(|e| Error::Parse {
        line: lineno,
        field: "conf",
        reason: e.to_string(),
    })
}

/// Parses detections for a single image, ignoring comments and blank lines.
pub fn parse_detections(text: &str) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(parse_detection_line(line, i + 1)?);
    }
    Ok(out)
}

/// Parses a multi-image exchange file keyed by `# image <id>` sections.
///
/// Detections appearing before any section header are keyed by `default_id`;
/// they are an error when no default is given.
pub fn parse_detection_sections(
    text: &str,
    default_id: Option<&str>,
) -> Result<BTreeMap<String, Vec<Detection>>> {
    let mut out: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
    let mut current: Option<String> = default_id.map(str::to_owned);
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(id) = comment.trim().strip_prefix("image ") {
                let id = id.trim().to_owned();
                out.entry(id.clone()).or_default();
                current = Some(id);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let det = parse_detection_line(line, i + 1)?;
        let key = current.clone().ok_or_else(|| Error::Parse {
            line: i + 1,
            field: "image",
            reason: "detection before any `# image <id>` header".into(),
        })?;
        out.entry(key).or_default().push(det);
    }
    Ok(out)
}

pub fn format_detection_sections<'a>(
    sections: impl IntoIterator<Item = (&'a str, &'a [Detection])>,
) -> String {
    let mut out = String::from("# class_index conf x_min y_min x_max y_max\n");
    for (id, dets) in sections {
        let _ = writeln!(out, "# image {id}");
        for d in dets {
            out.push_str(&format_detection(d));
            out.push('\n');
        }
    }
    out
}
