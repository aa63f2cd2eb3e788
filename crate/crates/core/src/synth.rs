//! Synthetic needle scenes with exact ground truth.
//!
//! A needle is drawn as a tapered capsule from the tip to the tail, where the
//! tail is the tip reflected through the needle midpoint. The width grows
//! linearly from `width_tip` to `width_tail`, which makes the tip end
//! identifiable from the image alone. Coverage is anti-aliased with a 4x4
//! supersampling grid per pixel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::augment::add_gaussian_noise;
use crate::dataset_io::ImageGray;
use crate::error::{Error, Result};
use crate::geometry::{needle_angle, BoundingBox, NeedlePose, PixelPoint, TipClass};

pub const NEEDLE_DIAMETER_MM: f64 = 0.4;
pub const DEFAULT_PX_PER_MM: f64 = 20.0;
pub const SUPERSAMPLE: usize = 4;

pub fn mm_to_px(mm: f64, px_per_mm: f64) -> f64 {
    mm * px_per_mm
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub img_w: u32,
    pub img_h: u32,
    pub tip: PixelPoint,
    /// Needle angle against the horizontal, strictly inside (0, 90).
    pub angle_deg: f64,
    pub tip_class: TipClass,
    /// Tip-to-midpoint distance.
    pub half_length: f64,
    pub width_tip: f64,
    pub width_tail: f64,
    pub fg_intensity: u8,
    pub bg_intensity: u8,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            img_w: 692,
            img_h: 516,
            tip: PixelPoint { x: 300.0, y: 200.0 },
            angle_deg: 30.0,
            tip_class: TipClass::LT,
            half_length: 60.0,
            width_tip: 2.0,
            width_tail: 6.0,
            fg_intensity: 40,
            bg_intensity: 190,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl SynthParams {
    fn validate(&self) -> Result<()> {
        if self.img_w == 0 || self.img_h == 0 {
            return Err(Error::Placement(format!(
                "empty canvas {}x{}",
                self.img_w, self.img_h
            )));
        }
        if !(self.angle_deg > 0.0 && self.angle_deg < 90.0) {
            return Err(Error::Placement(format!(
                "angle {} outside (0, 90)",
                self.angle_deg
            )));
        }
        if !(self.half_length > 0.0 && self.half_length.is_finite()) {
            return Err(Error::Placement(format!(
                "half length {} must be positive",
                self.half_length
            )));
        }
        if !(self.width_tip > 0.0 && self.width_tip < self.width_tail && self.width_tail.is_finite()) {
            return Err(Error::Placement(format!(
                "need 0 < width_tip < width_tail, got {} and {}",
                self.width_tip, self.width_tail
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Placement(format!(
                "noise sigma {} must be >= 0",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

fn direction_signs(class: TipClass) -> (f64, f64) {
    // The midpoint lies toward the opposite box corner.
    let sx = if class.is_left() { 1.0 } else { -1.0 };
    let sy = if class.is_top() { 1.0 } else { -1.0 };
    (sx, sy)
}

/// Places the midpoint so the needle has the requested angle and tip class.
pub fn place_needle(params: &SynthParams) -> Result<NeedlePose> {
    params.validate()?;
    let (sx, sy) = direction_signs(params.tip_class);
    let (sin, cos) = params.angle_deg.to_radians().sin_cos();
    let tip = params.tip;
    let midpoint = PixelPoint {
        x: tip.x + sx * params.half_length * cos,
        y: tip.y + sy * params.half_length * sin,
    };
    let pose = NeedlePose::from_keypoints(tip, midpoint)
        .map_err(|e| Error::Placement(e.to_string()))?;
    let (w, h) = (params.img_w as f64, params.img_h as f64);
    for (name, p) in [("tip", tip), ("midpoint", midpoint), ("tail", pose.tail())] {
        if !(0.0..=w).contains(&p.x) || !(0.0..=h).contains(&p.y) {
            return Err(Error::Placement(format!(
                "{name} {p} outside {}x{} canvas",
                params.img_w, params.img_h
            )));
        }
    }
    Ok(pose)
}

/// Tapered capsule along `tip -> tail`.
#[derive(Debug, Clone, Copy)]
pub struct NeedleShape {
    tip: PixelPoint,
    ux: f64,
    uy: f64,
    length: f64,
    width_tip: f64,
    width_tail: f64,
}

impl NeedleShape {
    pub fn new(pose: &NeedlePose, width_tip: f64, width_tail: f64) -> Self {
        let tail = pose.tail();
        let length = pose.tip.distance(&tail);
        NeedleShape {
            tip: pose.tip,
            ux: (tail.x - pose.tip.x) / length,
            uy: (tail.y - pose.tip.y) / length,
            length,
            width_tip,
            width_tail,
        }
    }

    /// Position along the axis as a fraction of the length, unclamped.
    pub fn axial_fraction(&self, x: f64, y: f64) -> f64 {
        ((x - self.tip.x) * self.ux + (y - self.tip.y) * self.uy) / self.length
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let t = self.axial_fraction(x, y).clamp(0.0, 1.0);
        let qx = self.tip.x + t * self.length * self.ux;
        let qy = self.tip.y + t * self.length * self.uy;
        let r = 0.5 * (self.width_tip + t * (self.width_tail - self.width_tip));
        (x - qx).hypot(y - qy) <= r
    }

    /// Fraction of the 4x4 subsamples of pixel `(px, py)` inside the shape.
    pub fn coverage(&self, px: u32, py: u32) -> f64 {
        let step = 1.0 / SUPERSAMPLE as f64;
        let mut hits = 0;
        for j in 0..SUPERSAMPLE {
            for i in 0..SUPERSAMPLE {
                let x = px as f64 + (i as f64 + 0.5) * step;
                let y = py as f64 + (j as f64 + 0.5) * step;
                if self.contains(x, y) {
                    hits += 1;
                }
            }
        }
        hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64
    }

    /// Pixel rectangle `[x0, x1) x [y0, y1)` enclosing the shape, clipped to
    /// the canvas.
    pub fn pixel_bounds(&self, img_w: u32, img_h: u32) -> (u32, u32, u32, u32) {
        let tail_x = self.tip.x + self.length * self.ux;
        let tail_y = self.tip.y + self.length * self.uy;
        let pad = 0.5 * self.width_tail.max(self.width_tip) + 1.0;
        let clip = |v: f64, hi: u32| v.clamp(0.0, hi as f64) as u32;
        (
            clip((self.tip.x.min(tail_x) - pad).floor(), img_w),
            clip((self.tip.y.min(tail_y) - pad).floor(), img_h),
            clip((self.tip.x.max(tail_x) + pad).ceil(), img_w),
            clip((self.tip.y.max(tail_y) + pad).ceil(), img_h),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub image: ImageGray,
    pub truth_box: BoundingBox,
    pub truth_class: TipClass,
    pub truth_pose: NeedlePose,
}

pub fn render(params: &SynthParams) -> Result<SynthScene> {
    render_with_background(params, None)
}

/// Renders over `background` when given (it must match the canvas size),
/// otherwise over a flat `bg_intensity` field. Noise, when requested, is
/// added to the background before the needle is composited.
pub fn render_with_background(
    params: &SynthParams,
    background: Option<&ImageGray>,
) -> Result<SynthScene> {
    let pose = place_needle(params)?;
    let mut image = match background {
        Some(bg) => {
            if (bg.width(), bg.height()) != (params.img_w, params.img_h) {
                return Err(Error::Config(format!(
                    "background is {}x{}, canvas is {}x{}",
                    bg.width(),
                    bg.height(),
                    params.img_w,
                    params.img_h
                )));
            }
            bg.clone()
        }
        None => ImageGray::filled(params.img_w, params.img_h, params.bg_intensity)?,
    };
    if params.noise_sigma > 0.0 {
        add_gaussian_noise(image.samples_mut(), params.noise_sigma, params.seed);
    }

    let shape = NeedleShape::new(&pose, params.width_tip, params.width_tail);
    let (x0, y0, x1, y1) = shape.pixel_bounds(params.img_w, params.img_h);
    let fg = params.fg_intensity as f64;
    for y in y0..y1 {
        for x in x0..x1 {
            let c = shape.coverage(x, y);
            if c > 0.0 {
                let bg = image.get(x, y) as f64;
                let v = bg * (1.0 - c) + fg * c;
                image.set(x, y, v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }

    let truth_box = pose.bounding_box();
    Ok(SynthScene {
        image,
        truth_box,
        truth_class: pose.tip_class,
        truth_pose: pose,
    })
}

/// Sampling ranges for [`generate_batch`]. Ranges are inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRanges {
    pub img_w: u32,
    pub img_h: u32,
    pub angle_deg: (f64, f64),
    pub half_length: (f64, f64),
    pub width_tip: f64,
    pub width_tail: f64,
    pub fg_intensity: u8,
    pub bg_intensity: u8,
    pub noise_sigma: f64,
}

impl Default for SynthRanges {
    fn default() -> Self {
        SynthRanges {
            img_w: 692,
            img_h: 516,
            angle_deg: (5.0, 85.0),
            half_length: (50.0, 90.0),
            width_tip: 2.0,
            width_tail: 6.0,
            fg_intensity: 40,
            bg_intensity: 190,
            noise_sigma: 0.0,
        }
    }
}

impl SynthRanges {
    /// Clearance kept between the needle axis ends and the canvas border.
    pub fn margin(&self) -> f64 {
        0.5 * self.width_tail + 1.0
    }

    pub fn validate(&self) -> Result<()> {
        let (a0, a1) = self.angle_deg;
        let (h0, h1) = self.half_length;
        if !(a0 > 0.0 && a0 <= a1 && a1 < 90.0) {
            return Err(Error::Config(format!("angle range [{a0}, {a1}] must lie inside (0, 90)")));
        }
        if !(h0 > 0.0 && h0 <= h1 && h1.is_finite()) {
            return Err(Error::Config(format!("half length range [{h0}, {h1}] invalid")));
        }
        if !(self.width_tip > 0.0 && self.width_tip < self.width_tail) {
            return Err(Error::Config(format!(
                "need 0 < width_tip < width_tail, got {} and {}",
                self.width_tip, self.width_tail
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma {} must be >= 0", self.noise_sigma)));
        }
        // Widest horizontal span at the smallest angle, tallest vertical span
        // at the largest one, both at the longest needle.
        let m = self.margin();
        let span_x = 2.0 * h1 * a0.to_radians().cos();
        let span_y = 2.0 * h1 * a1.to_radians().sin();
        if span_x + 2.0 * m > self.img_w as f64 || span_y + 2.0 * m > self.img_h as f64 {
            return Err(Error::Config(format!(
                "needles up to {h1} px half length do not fit a {}x{} canvas",
                self.img_w, self.img_h
            )));
        }
        Ok(())
    }

    /// Draws one scene's parameters; the tip is placed so that the whole
    /// needle, tip to tail, stays `margin` away from the border.
    pub fn sample(&self, rng: &mut impl Rng) -> SynthParams {
        let class = TipClass::ALL[rng.random_range(0..4)];
        let angle_deg = rng.random_range(self.angle_deg.0..=self.angle_deg.1);
        let half_length = rng.random_range(self.half_length.0..=self.half_length.1);
        let (sx, sy) = direction_signs(class);
        let (sin, cos) = angle_deg.to_radians().sin_cos();
        let m = self.margin();
        let span_x = 2.0 * half_length * cos;
        let span_y = 2.0 * half_length * sin;
        let tip_range = |span: f64, extent: f64, sign: f64| {
            if sign > 0.0 {
                (m, extent - m - span)
            } else {
                (m + span, extent - m)
            }
        };
        let (x0, x1) = tip_range(span_x, self.img_w as f64, sx);
        let (y0, y1) = tip_range(span_y, self.img_h as f64, sy);
        SynthParams {
            img_w: self.img_w,
            img_h: self.img_h,
            tip: PixelPoint {
                x: rng.random_range(x0..=x1),
                y: rng.random_range(y0..=y1),
            },
            angle_deg,
            tip_class: class,
            half_length,
            width_tip: self.width_tip,
            width_tail: self.width_tail,
            fg_intensity: self.fg_intensity,
            bg_intensity: self.bg_intensity,
            noise_sigma: self.noise_sigma,
            seed: rng.random(),
        }
    }
}

/// Seed for item `index` of a batch seeded with `seed` (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn batch_params(n: usize, ranges: &SynthRanges, seed: u64) -> Result<Vec<SynthParams>> {
    if n == 0 {
        return Err(Error::Config("scene count must be at least 1".into()));
    }
    ranges.validate()?;
    Ok((0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            ranges.sample(&mut rng)
        })
        .collect())
}

/// Generates `n` scenes. Each scene draws from its own generator derived from
/// `(seed, index)`, so the output does not depend on thread scheduling.
pub fn generate_batch(n: usize, ranges: &SynthRanges, seed: u64) -> Result<Vec<SynthScene>> {
    generate_batch_with_background(n, ranges, seed, None)
}

pub fn generate_batch_with_background(
    n: usize,
    ranges: &SynthRanges,
    seed: u64,
    background: Option<&ImageGray>,
) -> Result<Vec<SynthScene>> {
    batch_params(n, ranges, seed)?
        .par_iter()
        .map(|p| render_with_background(p, background))
        .collect()
}

/// Pose of a scene with the angle recomputed from its keypoints.
pub fn truth_angle(scene: &SynthScene) -> f64 {
    needle_angle(scene.truth_pose.tip, scene.truth_pose.midpoint)
        .expect("synthetic truth is never degenerate")
}
