//! Joint image and label augmentation: flips, quarter turns, arbitrary
//! rotation and additive Gaussian noise.
//!
//! Geometric transforms move the tip and midpoint keypoints of each label and
//! rebuild the box and class from the moved pair. The class permutations
//! (LT<->RT for a horizontal flip, and so on) therefore fall out of the
//! geometry instead of being looked up.
//!
//! The image spans `[0, W] x [0, H]` in continuous coordinates; pixel `i`
//! covers `[i, i + 1)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset_io::{ImageGray, YoloRecord};
use crate::error::{Error, Result};
use crate::geometry::{pose_from_detection, BoundingBox, NeedlePose, PixelPoint, TipClass};

/// One labelled needle: its box and tip class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truth {
    pub bbox: BoundingBox,
    pub class: TipClass,
}

impl Truth {
    pub fn pose(&self) -> NeedlePose {
        pose_from_detection(&self.bbox, self.class)
    }

    pub fn from_pose(pose: &NeedlePose) -> Self {
        Truth {
            bbox: pose.bounding_box(),
            class: pose.tip_class,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScene {
    image: ImageGray,
    truths: Vec<Truth>,
}

impl LabeledScene {
    pub fn new(image: ImageGray, truths: Vec<Truth>) -> Result<Self> {
        let (w, h) = (image.width() as f64, image.height() as f64);
        for t in &truths {
            let b = &t.bbox;
            if b.x_min() < 0.0 || b.y_min() < 0.0 || b.x_max() > w || b.y_max() > h {
                return Err(Error::Validation(format!(
                    "label box ({}, {}, {}, {}) outside {}x{} image",
                    b.x_min(),
                    b.y_min(),
                    b.x_max(),
                    b.y_max(),
                    image.width(),
                    image.height()
                )));
            }
        }
        Ok(LabeledScene { image, truths })
    }

    pub fn from_records(image: ImageGray, records: &[YoloRecord]) -> Result<Self> {
        let truths = records
            .iter()
            .map(|r| {
                Ok(Truth {
                    bbox: r.to_box(image.width(), image.height())?,
                    class: r.class,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        LabeledScene::new(image, truths)
    }

    pub fn image(&self) -> &ImageGray {
        &self.image
    }

    pub fn truths(&self) -> &[Truth] {
        &self.truths
    }

    pub fn poses(&self) -> Vec<NeedlePose> {
        self.truths.iter().map(Truth::pose).collect()
    }

    pub fn records(&self) -> Result<Vec<YoloRecord>> {
        self.truths
            .iter()
            .map(|t| YoloRecord::from_box(&t.bbox, t.class, self.image.width(), self.image.height()))
            .collect()
    }

    pub fn into_parts(self) -> (ImageGray, Vec<Truth>) {
        (self.image, self.truths)
    }
}

/// Moves both keypoints of every truth and re-derives box and class.
/// Only valid for maps that keep axis-aligned segments axis-aligned.
fn remap_axis_preserving(truths: &[Truth], map: impl Fn(PixelPoint) -> PixelPoint) -> Vec<Truth> {
    truths
        .iter()
        .map(|t| {
            let pose = t.pose();
            let moved = NeedlePose::from_keypoints(map(pose.tip), map(pose.midpoint))
                .expect("flips and quarter turns keep needles non-degenerate");
            Truth::from_pose(&moved)
        })
        .collect()
}

pub fn flip_h(scene: &LabeledScene) -> LabeledScene {
    let img = &scene.image;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Vec::with_capacity(w * h);
    for row in img.samples().chunks_exact(w) {
        out.extend(row.iter().rev());
    }
    let width = img.width() as f64;
    LabeledScene {
        image: ImageGray::new(img.width(), img.height(), out).expect("same dimensions"),
        truths: remap_axis_preserving(&scene.truths, |p| PixelPoint {
            x: width - p.x,
            y: p.y,
        }),
    }
}

pub fn flip_v(scene: &LabeledScene) -> LabeledScene {
    let img = &scene.image;
    let w = img.width() as usize;
    let mut out = Vec::with_capacity(img.samples().len());
    for row in img.samples().chunks_exact(w).rev() {
        out.extend_from_slice(row);
    }
    let height = img.height() as f64;
    LabeledScene {
        image: ImageGray::new(img.width(), img.height(), out).expect("same dimensions"),
        truths: remap_axis_preserving(&scene.truths, |p| PixelPoint {
            x: p.x,
            y: height - p.y,
        }),
    }
}

fn rot90_once(scene: &LabeledScene) -> LabeledScene {
    let img = &scene.image;
    let (w, h) = (img.width() as usize, img.height() as usize);
    // Output is h wide and w tall; source (x, y) lands at (h - 1 - y, x).
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            out[x * h + (h - 1 - y)] = img.samples()[y * w + x];
        }
    }
    let height = img.height() as f64;
    LabeledScene {
        image: ImageGray::new(img.height(), img.width(), out).expect("swapped dimensions"),
        truths: remap_axis_preserving(&scene.truths, |p| PixelPoint {
            x: height - p.y,
            y: p.x,
        }),
    }
}

/// Rotates clockwise by `quarter_turns` right angles (negative turns go
/// counter-clockwise). One turn maps `(x, y)` to `(H - y, x)` and swaps the
/// image dimensions.
pub fn rot90(scene: &LabeledScene, quarter_turns: i32) -> LabeledScene {
    let mut out = scene.clone();
    for _ in 0..quarter_turns.rem_euclid(4) {
        out = rot90_once(&out);
    }
    out
}

/// Median sample value, the default fill for [`rotate_arbitrary`].
pub fn median_intensity(img: &ImageGray) -> u8 {
    let mut hist = [0usize; 256];
    for &v in img.samples() {
        hist[v as usize] += 1;
    }
    let half = img.samples().len().div_ceil(2);
    let mut seen = 0;
    for (v, &n) in hist.iter().enumerate() {
        seen += n;
        if seen >= half {
            return v as u8;
        }
    }
    255
}

/// Clockwise (on screen) rotation by `theta_deg` about the canvas center,
/// keeping the canvas size.
#[derive(Debug, Clone, Copy)]
pub struct CenterRotation {
    cx: f64,
    cy: f64,
    cos: f64,
    sin: f64,
}

impl CenterRotation {
    pub fn new(width: u32, height: u32, theta_deg: f64) -> Self {
        let (sin, cos) = theta_deg.to_radians().sin_cos();
        CenterRotation {
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            cos,
            sin,
        }
    }

    pub fn forward(&self, p: PixelPoint) -> PixelPoint {
        let (dx, dy) = (p.x - self.cx, p.y - self.cy);
        PixelPoint {
            x: self.cx + self.cos * dx - self.sin * dy,
            y: self.cy + self.sin * dx + self.cos * dy,
        }
    }

    pub fn inverse(&self, p: PixelPoint) -> PixelPoint {
        let (dx, dy) = (p.x - self.cx, p.y - self.cy);
        PixelPoint {
            x: self.cx + self.cos * dx + self.sin * dy,
            y: self.cy - self.sin * dx + self.cos * dy,
        }
    }
}

fn bilinear(img: &ImageGray, sx: f64, sy: f64) -> f64 {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let u = (sx - 0.5).clamp(0.0, (w - 1) as f64);
    let v = (sy - 0.5).clamp(0.0, (h - 1) as f64);
    let (i0, j0) = (u.floor() as usize, v.floor() as usize);
    let (i1, j1) = ((i0 + 1).min(w - 1), (j0 + 1).min(h - 1));
    let (fu, fv) = (u - i0 as f64, v - j0 as f64);
    let s = img.samples();
    let at = |i: usize, j: usize| s[j * w + i] as f64;
    let top = at(i0, j0) * (1.0 - fu) + at(i1, j0) * fu;
    let bottom = at(i0, j1) * (1.0 - fu) + at(i1, j1) * fu;
    top * (1.0 - fv) + bottom * fv
}

const DEGENERATE_EPS: f64 = 1e-9;

/// Rotates the image and labels by `theta_deg` about the canvas center.
///
/// Pixels are resampled by inverse mapping with bilinear interpolation;
/// samples whose source falls outside the image take `fill`. Labels whose
/// rotated tip or midpoint leaves the canvas, or whose rotated needle is
/// axis-aligned, are dropped and reported in the returned warnings.
pub fn rotate_arbitrary(
    scene: &LabeledScene,
    theta_deg: f64,
    fill: u8,
) -> (LabeledScene, Vec<String>) {
    let img = &scene.image;
    let (w, h) = (img.width(), img.height());
    let rot = CenterRotation::new(w, h, theta_deg);
    let (wf, hf) = (w as f64, h as f64);

    let mut out = Vec::with_capacity(img.samples().len());
    for y in 0..h {
        for x in 0..w {
            let src = rot.inverse(PixelPoint {
                x: x as f64 + 0.5,
                y: y as f64 + 0.5,
            });
            if src.x < 0.0 || src.y < 0.0 || src.x > wf || src.y > hf {
                out.push(fill);
            } else {
                out.push(bilinear(img, src.x, src.y).round().clamp(0.0, 255.0) as u8);
            }
        }
    }

    let inside = |p: PixelPoint| (0.0..=wf).contains(&p.x) && (0.0..=hf).contains(&p.y);
    let mut truths = Vec::new();
    let mut warnings = Vec::new();
    for (i, t) in scene.truths.iter().enumerate() {
        let pose = t.pose();
        let (tip, mid) = (rot.forward(pose.tip), rot.forward(pose.midpoint));
        if !inside(tip) || !inside(mid) {
            warnings.push(format!(
                "label {i}: rotated by {theta_deg} deg, keypoints {tip} / {mid} leave the {w}x{h} canvas; dropped"
            ));
            continue;
        }
        if (tip.x - mid.x).abs() < DEGENERATE_EPS || (tip.y - mid.y).abs() < DEGENERATE_EPS {
            warnings.push(format!(
                "label {i}: rotated by {theta_deg} deg, needle is axis-aligned; dropped"
            ));
            continue;
        }
        match NeedlePose::from_keypoints(tip, mid) {
            Ok(p) => truths.push(Truth::from_pose(&p)),
            Err(e) => warnings.push(format!("label {i}: {e}; dropped")),
        }
    }

    let image = ImageGray::new(w, h, out).expect("same dimensions");
    (LabeledScene { image, truths }, warnings)
}

/// Adds seeded Gaussian noise with standard deviation `sigma` to every
/// sample, rounding and clamping to `[0, 255]`. Labels are untouched.
pub fn corrupt(scene: &LabeledScene, sigma: f64, seed: u64) -> Result<LabeledScene> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Validation(format!("noise sigma must be >= 0, got {sigma}")));
    }
    let mut image = scene.image.clone();
    if sigma > 0.0 {
        add_gaussian_noise(image.samples_mut(), sigma, seed);
    }
    Ok(LabeledScene {
        image,
        truths: scene.truths.clone(),
    })
}

pub(crate) fn add_gaussian_noise(samples: &mut [u8], sigma: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma validated by caller");
    for s in samples {
        let v = *s as f64 + normal.sample(&mut rng);
        *s = v.round().clamp(0.0, 255.0) as u8;
    }
}
