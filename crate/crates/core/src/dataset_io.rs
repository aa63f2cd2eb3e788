//! Dataset persistence: YOLO label lines, binary Netpbm images and the
//! `images/` + `labels/` directory layout.
//!
//! Class indices follow [`TipClass::index`]: LT=0, LB=1, RT=2, RB=3. Dataset
//! roots written by this crate carry a `classes.txt` listing the names in
//! index order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, NeedlePose, PixelPoint, TipClass};

/// Names in class-index order, as written to `classes.txt`.
pub const CLASS_NAMES: [&str; 4] = ["LT", "LB", "RT", "RB"];

const NORM_TOLERANCE: f64 = 1e-6;

/// One YOLO label line with center and size normalized by the image size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YoloRecord {
    pub class: TipClass,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl YoloRecord {
    pub fn from_box(bbox: &BoundingBox, class: TipClass, img_w: u32, img_h: u32) -> Result<Self> {
        let (iw, ih) = (img_w as f64, img_h as f64);
        if img_w == 0
            || img_h == 0
            || bbox.x_min() < 0.0
            || bbox.y_min() < 0.0
            || bbox.x_max() > iw
            || bbox.y_max() > ih
        {
            return Err(Error::Validation(format!(
                "box ({}, {}, {}, {}) outside {img_w}x{img_h} image",
                bbox.x_min(),
                bbox.y_min(),
                bbox.x_max(),
                bbox.y_max()
            )));
        }
        let c = bbox.center();
        Ok(YoloRecord {
            class,
            cx: c.x / iw,
            cy: c.y / ih,
            w: bbox.width() / iw,
            h: bbox.height() / ih,
        })
    }

    pub fn parse(line: &str, lineno: usize) -> Result<Self> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                line: lineno,
                field: "line",
                reason: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let class = fields[0]
            .parse::<usize>()
            .ok()
            .and_then(TipClass::from_index)
            .ok_or_else(|| Error::Parse {
                line: lineno,
                field: "class_index",
                reason: format!("`{}` is not one of 0..3", fields[0]),
            })?;
        let norm = |idx: usize, field: &'static str, allow_zero: bool| -> Result<f64> {
            let v: f64 = fields[idx].parse().map_err(|e| Error::Parse {
                line: lineno,
                field,
                reason: format!("`{}`: {e}", fields[idx]),
            })?;
            let ok = v.is_finite() && v <= 1.0 && if allow_zero { v >= 0.0 } else { v > 0.0 };
            if !ok {
                return Err(Error::Parse {
                    line: lineno,
                    field,
                    reason: format!("{v} outside normalized range"),
                });
            }
            Ok(v)
        };
        let rec = YoloRecord {
            class,
            cx: norm(1, "cx", true)?,
            cy: norm(2, "cy", true)?,
            w: norm(3, "w", false)?,
            h: norm(4, "h", false)?,
        };
        let inside = |c: f64, s: f64| c - s / 2.0 >= -NORM_TOLERANCE && c + s / 2.0 <= 1.0 + NORM_TOLERANCE;
        if !inside(rec.cx, rec.w) {
            return Err(Error::Parse {
                line: lineno,
                field: "w",
                reason: "box extends past the left or right image edge".into(),
            });
        }
        if !inside(rec.cy, rec.h) {
            return Err(Error::Parse {
                line: lineno,
                field: "h",
                reason: "box extends past the top or bottom image edge".into(),
            });
        }
        Ok(rec)
    }

    /// Pixel box for an `img_w x img_h` image, clamped to the image.
    pub fn to_box(&self, img_w: u32, img_h: u32) -> Result<BoundingBox> {
        let (iw, ih) = (img_w as f64, img_h as f64);
        let x0 = ((self.cx - self.w / 2.0) * iw).max(0.0);
        let y0 = ((self.cy - self.h / 2.0) * ih).max(0.0);
        let x1 = ((self.cx + self.w / 2.0) * iw).min(iw);
        let y1 = ((self.cy + self.h / 2.0) * ih).min(ih);
        BoundingBox::new(x0, y0, x1, y1)
    }

    pub fn to_line(&self) -> String {
        format!(
            "{} {:.6} {:.6} {:.6} {:.6}",
            self.class.index(),
            self.cx,
            self.cy,
            self.w,
            self.h
        )
    }
}

/// `"c cx cy w h"` with six decimals per normalized value.
pub fn encode_yolo(bbox: &BoundingBox, class: TipClass, img_w: u32, img_h: u32) -> Result<String> {
    Ok(YoloRecord::from_box(bbox, class, img_w, img_h)?.to_line())
}

pub fn decode_yolo(line: &str, img_w: u32, img_h: u32) -> Result<(BoundingBox, TipClass)> {
    let rec = YoloRecord::parse(line, 1)?;
    Ok((rec.to_box(img_w, img_h)?, rec.class))
}

pub fn parse_label_file(text: &str) -> Result<Vec<YoloRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| YoloRecord::parse(l, i + 1))
        .collect()
}

pub fn write_label_file(path: &Path, records: &[YoloRecord]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&r.to_line());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_class_names(root: &Path) -> Result<()> {
    let path = root.join("classes.txt");
    let mut text = CLASS_NAMES.join("\n");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageGray {
    width: u32,
    height: u32,
    samples: Vec<u8>,
}

impl ImageGray {
    pub fn new(width: u32, height: u32, samples: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation(format!("empty image {width}x{height}")));
        }
        if samples.len() != width as usize * height as usize {
            return Err(Error::Validation(format!(
                "{} samples for a {width}x{height} image",
                samples.len()
            )));
        }
        Ok(ImageGray {
            width,
            height,
            samples,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Result<Self> {
        ImageGray::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [u8] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.samples[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        let w = self.width as usize;
        self.samples[y as usize * w + x as usize] = v;
    }
}

/// 8-bit RGB raster, row-major, interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRgb {
    width: u32,
    height: u32,
    samples: Vec<u8>,
}

impl ImageRgb {
    pub fn from_gray(gray: &ImageGray) -> Self {
        ImageRgb {
            width: gray.width,
            height: gray.height,
            samples: gray.samples.iter().flat_map(|&v| [v, v, v]).collect(),
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.samples[i], self.samples[i + 1], self.samples[i + 2]]
    }

    /// Writes a pixel; coordinates outside the image are ignored.
    pub fn put(&mut self, x: i64, y: i64, rgb: [u8; 3]) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let i = 3 * (y as usize * self.width as usize + x as usize);
        self.samples[i..i + 3].copy_from_slice(&rgb);
    }
}

struct Header {
    width: u32,
    height: u32,
    offset: usize,
}

fn parse_header(data: &[u8], magic: &[u8; 2]) -> Result<Header> {
    if data.len() < 2 || &data[..2] != magic {
        return Err(Error::Format(format!(
            "bad magic, expected {}",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut pos = 2;
    let mut next_number = |name: &str| -> Result<u32> {
        loop {
            match data.get(pos) {
                Some(b'#') => {
                    while data.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while data.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format(format!("missing {name} in header")));
        }
        std::str::from_utf8(&data[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("invalid {name} in header")))
    };
    let width = next_number("width")?;
    let height = next_number("height")?;
    let maxval = next_number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("empty image {width}x{height}")));
    }
    if maxval != 255 {
        return Err(Error::Format(format!("maxval {maxval} unsupported, need 255")));
    }
    match data.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Format("missing whitespace after maxval".into())),
    }
    Ok(Header {
        width,
        height,
        offset: pos,
    })
}

fn payload<'a>(data: &'a [u8], header: &Header, channels: usize) -> Result<&'a [u8]> {
    let need = header.width as usize * header.height as usize * channels;
    let have = data.len() - header.offset;
    if have < need {
        return Err(Error::Format(format!(
            "truncated payload: {have} bytes, expected {need}"
        )));
    }
    Ok(&data[header.offset..header.offset + need])
}

pub fn decode_pgm(data: &[u8]) -> Result<ImageGray> {
    let header = parse_header(data, b"P5")?;
    let samples = payload(data, &header, 1)?.to_vec();
    ImageGray::new(header.width, header.height, samples)
}

pub fn encode_pgm(img: &ImageGray) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.samples);
    out
}

pub fn decode_ppm(data: &[u8]) -> Result<ImageRgb> {
    let header = parse_header(data, b"P6")?;
    let samples = payload(data, &header, 3)?.to_vec();
    Ok(ImageRgb {
        width: header.width,
        height: header.height,
        samples,
    })
}

pub fn encode_ppm(img: &ImageRgb) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.samples);
    out
}

pub fn read_pgm(path: &Path) -> Result<ImageGray> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&data)
}

pub fn write_pgm(img: &ImageGray, path: &Path) -> Result<()> {
    write_bytes(path, &encode_pgm(img))
}

pub fn read_ppm(path: &Path) -> Result<ImageRgb> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&data)
}

pub fn write_ppm(img: &ImageRgb, path: &Path) -> Result<()> {
    write_bytes(path, &encode_ppm(img))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// An image paired with its label file.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub image_id: String,
    pub image_path: PathBuf,
    pub label_path: PathBuf,
    pub records: Vec<YoloRecord>,
}

#[derive(Debug, Default)]
pub struct Manifest {
    pub items: Vec<DatasetItem>,
    pub warnings: Vec<String>,
}

fn stems_with_ext(dir: &Path, ext: &str) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) || !path.is_file() {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.push((stem.to_owned(), path.clone()));
        }
    }
    out.sort();
    Ok(out)
}

/// Pairs `<root>/images/*.pgm` with `<root>/labels/*.txt` by stem, sorted by
/// stem. Images without labels are skipped with a warning.
pub fn load_manifest(root: &Path) -> Result<Manifest> {
    let images = root.join("images");
    let labels = root.join("labels");
    for dir in [&images, &labels] {
        if !dir.is_dir() {
            return Err(Error::Config(format!("missing directory {}", dir.display())));
        }
    }
    let mut manifest = Manifest::default();
    for (stem, image_path) in stems_with_ext(&images, "pgm")? {
        let label_path = labels.join(format!("{stem}.txt"));
        if !label_path.is_file() {
            manifest
                .warnings
                .push(format!("image {} has no label file, skipped", image_path.display()));
            continue;
        }
        let text = fs::read_to_string(&label_path).map_err(|e| Error::io(&label_path, e))?;
        let records = parse_label_file(&text).map_err(|e| {
            Error::Config(format!("{}: {e}", label_path.display()))
        })?;
        manifest.items.push(DatasetItem {
            image_id: stem,
            image_path,
            label_path,
            records,
        });
    }
    Ok(manifest)
}

/// One row of a pose table (`truths.csv` or `poses.csv`).
#[derive(Debug, Clone, PartialEq)]
pub struct PoseRow {
    pub image_id: String,
    pub pose: NeedlePose,
    /// Detector confidence; absent for ground truth.
    pub confidence: Option<f64>,
}

pub const POSE_CSV_HEADER: [&str; 8] = [
    "image_id", "class", "confidence", "tip_x", "tip_y", "mid_x", "mid_y", "angle_deg",
];

/// Writes pose rows with full float precision so the values read back exactly.
pub fn write_pose_csv(path: &Path, rows: &[PoseRow]) -> Result<()> {
    let to_err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    w.write_record(POSE_CSV_HEADER).map_err(to_err)?;
    for r in rows {
        let p = &r.pose;
        w.write_record([
            r.image_id.clone(),
            p.tip_class.name().to_owned(),
            r.confidence.map(|c| c.to_string()).unwrap_or_default(),
            p.tip.x.to_string(),
            p.tip.y.to_string(),
            p.midpoint.x.to_string(),
            p.midpoint.y.to_string(),
            p.angle_deg.to_string(),
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a pose table. Class and angle are re-derived from the keypoints and
/// must agree with the stored columns.
pub fn read_pose_csv(path: &Path) -> Result<Vec<PoseRow>> {
    let to_err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(to_err)?;
    let headers = rdr.headers().map_err(to_err)?.clone();
    let col = |name: &'static str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("{}: missing column `{name}`", path.display())))
    };
    let idx: Vec<usize> = POSE_CSV_HEADER.iter().map(|n| col(n)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(to_err)?;
        let lineno = line + 2;
        let field = |i: usize| rec.get(idx[i]).unwrap_or("").trim();
        let num = |i: usize| -> Result<f64> {
            field(i).parse::<f64>().map_err(|e| Error::Parse {
                line: lineno,
                field: POSE_CSV_HEADER[i],
                reason: format!("`{}`: {e}", field(i)),
            })
        };
        let tip = PixelPoint::new(num(3)?, num(4)?)?;
        let mid = PixelPoint::new(num(5)?, num(6)?)?;
        let pose = NeedlePose::from_keypoints(tip, mid).map_err(|e| Error::Parse {
            line: lineno,
            field: "tip_x",
            reason: e.to_string(),
        })?;
        let class: TipClass = field(1).parse().map_err(|e: Error| Error::Parse {
            line: lineno,
            field: "class",
            reason: e.to_string(),
        })?;
        if class != pose.tip_class {
            return Err(Error::Parse {
                line: lineno,
                field: "class",
                reason: format!("{class} disagrees with keypoints ({})", pose.tip_class),
            });
        }
        let confidence = if field(2).is_empty() { None } else { Some(num(2)?) };
        rows.push(PoseRow {
            image_id: field(0).to_owned(),
            pose,
            confidence,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(a: f64, b: f64, c: f64, d: f64) -> BoundingBox {
        BoundingBox::new(a, b, c, d).unwrap()
    }

    #[test]
    fn encode_examples() {
        assert_eq!(
            encode_yolo(&bx(0.0, 0.0, 346.0, 258.0), TipClass::LT, 692, 516).unwrap(),
            "0 0.250000 0.250000 0.500000 0.500000"
        );
        // 472/692, 262/516, 100/692, 100/516
        assert_eq!(
            encode_yolo(&bx(422.0, 212.0, 522.0, 312.0), TipClass::LT, 692, 516).unwrap(),
            "0 0.682081 0.507752 0.144509 0.193798"
        );
        assert_eq!(
            encode_yolo(&bx(0.0, 0.0, 692.0, 516.0), TipClass::RB, 692, 516).unwrap(),
            "3 0.500000 0.500000 1.000000 1.000000"
        );
        assert!(encode_yolo(&bx(600.0, 0.0, 700.0, 10.0), TipClass::RB, 692, 516).is_err());
    }

    #[test]
    fn decode_examples() {
        let (b, c) = decode_yolo("0 0.250000 0.250000 0.500000 0.500000", 692, 516).unwrap();
        assert_eq!((b, c), (bx(0.0, 0.0, 346.0, 258.0), TipClass::LT));
        let (b, c) = decode_yolo("3 0.500000 0.500000 1.000000 1.000000", 692, 516).unwrap();
        assert_eq!((b, c), (bx(0.0, 0.0, 692.0, 516.0), TipClass::RB));
    }

    #[test]
    fn decode_errors_name_field() {
        let field = |line: &str| match decode_yolo(line, 692, 516) {
            Err(Error::Parse { field, .. }) => field,
            other => panic!("expected parse error for {line:?}, got {other:?}"),
        };
        assert_eq!(field("4 0.5 0.5 0.1 0.1"), "class_index");
        assert_eq!(field("0 0.5 0.5 0.1"), "line");
        assert_eq!(field("0 abc 0.5 0.1 0.1"), "cx");
        assert_eq!(field("0 0.5 1.5 0.1 0.1"), "cy");
        assert_eq!(field("0 0.5 0.5 0 0.1"), "w");
        assert_eq!(field("0 0.95 0.5 0.2 0.1"), "w");
        assert_eq!(field("0 0.5 0.02 0.2 0.1"), "h");
    }

    #[test]
    fn pgm_round_trip() {
        let img = ImageGray::new(2, 2, vec![0, 255, 128, 7]).unwrap();
        let bytes = encode_pgm(&img);
        assert_eq!(&bytes[..11], b"P5\n2 2\n255\n");
        assert_eq!(decode_pgm(&bytes).unwrap(), img);
    }

    #[test]
    fn pgm_header_variants() {
        let mut data = b"P5 2 2 255 ".to_vec();
        data.extend_from_slice(&[1, 2, 3, 4]);
        let img = decode_pgm(&data).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.samples(), &[1, 2, 3, 4]);

        let mut data = b"P5\n# made by hand\n3 1\n255\n".to_vec();
        data.extend_from_slice(&[9, 8, 7]);
        assert_eq!(decode_pgm(&data).unwrap().samples(), &[9, 8, 7]);
    }

    #[test]
    fn pgm_errors() {
        let mut truncated = b"P5 2 2 255\n".to_vec();
        truncated.extend_from_slice(&[1, 2, 3]);
        assert!(matches!(decode_pgm(&truncated), Err(Error::Format(m)) if m.contains("truncated")));
        assert!(decode_pgm(b"P2 2 2 255\n0000").is_err());
        assert!(matches!(decode_pgm(b"P5 1 1 65535\n\0\0"), Err(Error::Format(m)) if m.contains("maxval")));
        assert!(decode_pgm(b"P5 2").is_err());
    }

    #[test]
    fn ppm_round_trip() {
        let gray = ImageGray::new(3, 1, vec![10, 20, 30]).unwrap();
        let mut rgb = ImageRgb::from_gray(&gray);
        rgb.put(1, 0, [255, 0, 0]);
        rgb.put(5, 0, [1, 1, 1]);
        let back = decode_ppm(&encode_ppm(&rgb)).unwrap();
        assert_eq!(back, rgb);
        assert_eq!(back.get(1, 0), [255, 0, 0]);
        assert_eq!(back.get(2, 0), [30, 30, 30]);
    }

    fn touch(path: &Path, body: &str) {
        fs::write(path, body).unwrap();
    }

    fn make_layout() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("images")).unwrap();
        fs::create_dir(dir.path().join("labels")).unwrap();
        dir
    }

    #[test]
    fn manifest_pairs_by_stem() {
        let dir = make_layout();
        let img = encode_pgm(&ImageGray::filled(4, 4, 0).unwrap());
        for stem in ["b", "a"] {
            fs::write(dir.path().join(format!("images/{stem}.pgm")), &img).unwrap();
            touch(&dir.path().join(format!("labels/{stem}.txt")), "1 0.5 0.5 0.25 0.25\n");
        }
        let m = load_manifest(dir.path()).unwrap();
        let ids: Vec<_> = m.items.iter().map(|i| i.image_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(m.items[0].records[0].class, TipClass::LB);
        assert!(m.warnings.is_empty());
    }

    #[test]
    fn pose_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.csv");
        let pose = NeedlePose::from_keypoints(
            PixelPoint::new(424.125, 215.0).unwrap(),
            PixelPoint::new(374.0, 245.0 + 1.0 / 3.0).unwrap(),
        )
        .unwrap();
        let rows = vec![
            PoseRow { image_id: "a".into(), pose, confidence: Some(0.875) },
            PoseRow { image_id: "b,c".into(), pose, confidence: None },
        ];
        write_pose_csv(&path, &rows).unwrap();
        assert_eq!(read_pose_csv(&path).unwrap(), rows);

        fs::write(&path, "image_id,class,confidence,tip_x,tip_y,mid_x,mid_y,angle_deg\nx,LT,,10,10,0,0,45\n").unwrap();
        assert!(matches!(read_pose_csv(&path), Err(Error::Parse { field: "class", .. })));
        fs::write(&path, "image_id,class\nx,LT\n").unwrap();
        assert!(matches!(read_pose_csv(&path), Err(Error::Format(_))));
    }

    #[test]
    fn manifest_orphans_and_empty() {
        let dir = make_layout();
        assert!(load_manifest(dir.path()).unwrap().items.is_empty());
        fs::write(dir.path().join("images/a.pgm"), b"").unwrap();
        let m = load_manifest(dir.path()).unwrap();
        assert!(m.items.is_empty());
        assert_eq!(m.warnings.len(), 1);

        let bare = tempfile::tempdir().unwrap();
        assert!(matches!(load_manifest(bare.path()), Err(Error::Config(_))));
    }
}
