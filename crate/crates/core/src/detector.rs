//! Classical reference needle detector.
//!
//! Stands in for a learned detector and emits the same [`Detection`] records,
//! so everything downstream (NMS, pose recovery, evaluation) is shared.
//!
//! Pipeline: binarize (Otsu or a fixed level), keep the largest 8-connected
//! foreground component, fit the principal axis from second-order central
//! moments, take the extreme projections onto the axis as needle ends, call
//! the end with less foreground mass nearby the tip (the needle tapers toward
//! it), and build the tip/midpoint box.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use log::warn;

use crate::dataset_io::ImageGray;
use crate::detection::{select_best, Detection};
use crate::geometry::{classify_tip, pose_from_detection, BoundingBox, NeedlePose, PixelPoint};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdMode {
    /// Foreground is every (smoothed) sample at or beyond this level.
    Fixed(u8),
    /// Otsu's threshold on the smoothed histogram.
    Automatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    NeedleDarker,
    NeedleBrighter,
}

impl FromStr for ThresholdMode {
    type Err = String;

    /// `auto` or a level in 0..=255.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "auto" | "otsu" => Ok(ThresholdMode::Automatic),
            other => other
                .parse::<u8>()
                .map(ThresholdMode::Fixed)
                .map_err(|_| format!("threshold must be `auto` or 0..=255, got `{other}`")),
        }
    }
}

impl fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdMode::Fixed(t) => write!(f, "{t}"),
            ThresholdMode::Automatic => f.write_str("auto"),
        }
    }
}

impl FromStr for Polarity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "dark" | "darker" => Ok(Polarity::NeedleDarker),
            "bright" | "brighter" => Ok(Polarity::NeedleBrighter),
            other => Err(format!("polarity must be `dark` or `bright`, got `{other}`")),
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::NeedleDarker => "dark",
            Polarity::NeedleBrighter => "bright",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub threshold_mode: ThresholdMode,
    pub polarity: Polarity,
    pub min_component_px: usize,
    pub tip_probe_radius: f64,
    pub confidence_floor: f64,
    /// Box-filter radius applied before binarization; 0 disables smoothing.
    pub smoothing_radius: u32,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            threshold_mode: ThresholdMode::Automatic,
            polarity: Polarity::NeedleDarker,
            min_component_px: 30,
            tip_probe_radius: 12.0,
            confidence_floor: 0.05,
            smoothing_radius: 1,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.min_component_px < 1 {
            return Err(crate::Error::Config("min_component_px must be >= 1".into()));
        }
        if !(self.tip_probe_radius > 0.0) {
            return Err(crate::Error::Config("tip_probe_radius must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.confidence_floor) {
            return Err(crate::Error::Config("confidence_floor must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Intermediate result of fitting a needle to the largest component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeedleFit {
    pub tip: PixelPoint,
    pub tail: PixelPoint,
    pub midpoint: PixelPoint,
    /// Principal-axis direction folded into `[0, 90]` degrees.
    pub axis_angle_deg: f64,
    pub component_px: usize,
    pub confidence: f64,
}

/// Box mean with radius `r`, rounded; edges use the in-image part only.
pub fn box_smooth(img: &ImageGray, r: u32) -> ImageGray {
    if r == 0 {
        return img.clone();
    }
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut integral = vec![0u64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0u64;
        for x in 0..w {
            row += img.samples()[y * w + x] as u64;
            integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row;
        }
    }
    let r = r as usize;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let sum = integral[y1 * (w + 1) + x1] + integral[y0 * (w + 1) + x0]
                - integral[y0 * (w + 1) + x1]
                - integral[y1 * (w + 1) + x0];
            let n = ((y1 - y0) * (x1 - x0)) as u64;
            out.push(((sum + n / 2) / n) as u8);
        }
    }
    ImageGray::new(img.width(), img.height(), out).expect("same dimensions")
}

/// Otsu's threshold: the level `t` maximizing between-class variance of
/// `{v <= t}` and `{v > t}`. `None` when the image has a single level.
pub fn otsu_threshold(samples: &[u8]) -> Option<u8> {
    let mut hist = [0u64; 256];
    for &v in samples {
        hist[v as usize] += 1;
    }
    let total = samples.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(v, &n)| v as f64 * n as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let mut best: Option<(f64, u8)> = None;
    for t in 0..255usize {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if best.is_none_or(|(b, _)| between > b) {
            best = Some((between, t as u8));
        }
    }
    best.map(|(_, t)| t)
}

/// Foreground mask, `true` for needle pixels.
pub fn binarize(img: &ImageGray, cfg: &DetectorConfig) -> Vec<bool> {
    let smoothed = box_smooth(img, cfg.smoothing_radius);
    // Work in "darkness" space so both polarities share one comparison.
    let values: Vec<u8> = match cfg.polarity {
        Polarity::NeedleDarker => smoothed.into_samples(),
        Polarity::NeedleBrighter => smoothed.samples().iter().map(|&v| 255 - v).collect(),
    };
    let threshold = match cfg.threshold_mode {
        ThresholdMode::Automatic => otsu_threshold(&values),
        ThresholdMode::Fixed(level) => Some(match cfg.polarity {
            Polarity::NeedleDarker => level,
            Polarity::NeedleBrighter => 255 - level,
        }),
    };
    match threshold {
        Some(t) => values.iter().map(|&v| v <= t).collect(),
        None => vec![false; values.len()],
    }
}

/// Pixel indices of the largest 8-connected component; the first one found
/// in raster order wins ties.
pub fn largest_component(mask: &[bool], width: usize) -> Vec<usize> {
    let height = mask.len() / width;
    let mut seen = vec![false; mask.len()];
    let mut best: Vec<usize> = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut component = Vec::new();
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            component.push(i);
            let (x, y) = ((i % width) as isize, (i / width) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                        continue;
                    }
                    let j = ny as usize * width + nx as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        if component.len() > best.len() {
            best = component;
        }
    }
    best
}

fn fold_angle_deg(dx: f64, dy: f64) -> f64 {
    dy.abs().atan2(dx.abs()).to_degrees()
}

/// Fits tip, tail and midpoint to the largest foreground component.
pub fn fit_needle(image: &ImageGray, cfg: &DetectorConfig) -> Option<NeedleFit> {
    let width = image.width() as usize;
    let mask = binarize(image, cfg);
    let component = largest_component(&mask, width);
    if component.is_empty() || component.len() < cfg.min_component_px {
        return None;
    }
    let points: Vec<(f64, f64)> = component
        .iter()
        .map(|&i| ((i % width) as f64 + 0.5, (i / width) as f64 + 0.5))
        .collect();
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut mu20, mut mu02, mut mu11) = (0.0, 0.0, 0.0);
    for &(x, y) in &points {
        let (dx, dy) = (x - cx, y - cy);
        mu20 += dx * dx;
        mu02 += dy * dy;
        mu11 += dx * dy;
    }
    let theta = 0.5 * (2.0 * mu11).atan2(mu20 - mu02);
    let (uy, ux) = theta.sin_cos();

    let (mut s_min, mut s_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &points {
        let s = (x - cx) * ux + (y - cy) * uy;
        s_min = s_min.min(s);
        s_max = s_max.max(s);
    }
    let end_a = PixelPoint { x: cx + s_min * ux, y: cy + s_min * uy };
    let end_b = PixelPoint { x: cx + s_max * ux, y: cy + s_max * uy };

    let r2 = cfg.tip_probe_radius * cfg.tip_probe_radius;
    let mass_near = |e: PixelPoint| {
        points
            .iter()
            .filter(|&&(x, y)| (x - e.x).powi(2) + (y - e.y).powi(2) <= r2)
            .count()
    };
    let (tip, tail) = if mass_near(end_a) <= mass_near(end_b) {
        (end_a, end_b)
    } else {
        (end_b, end_a)
    };
    let midpoint = PixelPoint {
        x: 0.5 * (tip.x + tail.x),
        y: 0.5 * (tip.y + tail.y),
    };

    // Capsule of the mean component width plus a pixel of slack.
    let length = s_max - s_min;
    let radius = if length > 0.0 { 0.5 * n / length + 1.0 } else { 1.0 };
    let inside = points
        .iter()
        .filter(|&&(x, y)| {
            let s = ((x - cx) * ux + (y - cy) * uy).clamp(s_min, s_max);
            let (qx, qy) = (cx + s * ux, cy + s * uy);
            (x - qx).hypot(y - qy) <= radius
        })
        .count();
    let confidence = (inside as f64 / n).max(cfg.confidence_floor).clamp(0.0, 1.0);

    Some(NeedleFit {
        tip,
        tail,
        midpoint,
        axis_angle_deg: fold_angle_deg(ux, uy),
        component_px: component.len(),
        confidence,
    })
}

/// Runs the detector. Returns at most one detection: the needle fitted to the
/// largest foreground component.
pub fn detect(image: &ImageGray, cfg: &DetectorConfig) -> Vec<Detection> {
    let Some(fit) = fit_needle(image, cfg) else {
        return Vec::new();
    };
    let class = match classify_tip(fit.tip, fit.midpoint) {
        Ok(c) => c,
        Err(e) => {
            warn!("reference detector: {e}; no detection");
            return Vec::new();
        }
    };
    let bbox = match BoundingBox::from_corners(fit.tip, fit.midpoint) {
        Ok(b) => b,
        Err(e) => {
            warn!("reference detector: {e}; no detection");
            return Vec::new();
        }
    };
    match Detection::new(bbox, class, fit.confidence) {
        Ok(d) => vec![d],
        Err(e) => {
            warn!("reference detector: {e}; no detection");
            Vec::new()
        }
    }
}

pub fn detect_to_pose(image: &ImageGray, cfg: &DetectorConfig) -> Option<NeedlePose> {
    let best = select_best(&detect(image, cfg), 0.0)?;
    Some(pose_from_detection(&best.bbox, best.class))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TipClass;
    use crate::synth::{render, SynthParams};

    fn scene(tip: (f64, f64), angle: f64, class: TipClass) -> crate::synth::SynthScene {
        render(&SynthParams {
            tip: PixelPoint { x: tip.0, y: tip.1 },
            angle_deg: angle,
            tip_class: class,
            half_length: 60.0,
            ..SynthParams::default()
        })
        .unwrap()
    }

    #[test]
    fn blank_image_has_no_detection() {
        let img = ImageGray::filled(64, 48, 180).unwrap();
        assert!(detect(&img, &DetectorConfig::default()).is_empty());
        assert!(detect_to_pose(&img, &DetectorConfig::default()).is_none());
    }

    #[test]
    fn otsu_separates_two_levels() {
        let mut v = vec![20u8; 100];
        v.extend(vec![200u8; 300]);
        let t = otsu_threshold(&v).unwrap();
        assert!((20..200).contains(&t));
        assert_eq!(otsu_threshold(&[7, 7, 7]), None);
    }

    #[test]
    fn smoothing_preserves_flat_images() {
        let img = ImageGray::filled(5, 4, 77).unwrap();
        assert_eq!(box_smooth(&img, 1), img);
        let mut spike = ImageGray::filled(3, 3, 0).unwrap();
        spike.set(1, 1, 90);
        assert_eq!(box_smooth(&spike, 1).get(1, 1), 10);
        assert_eq!(box_smooth(&spike, 1).get(0, 0), 23); // 90 / 4, rounded
    }

    #[test]
    fn components_are_eight_connected() {
        #[rustfmt::skip]
        let mask = [
            true,  false, false, false,
            false, true,  false, true,
            false, false, false, true,
        ];
        let c = largest_component(&mask, 4);
        assert_eq!(c, vec![0, 5]);
    }

    #[test]
    fn finds_class_and_angle_on_clean_scenes() {
        let cfg = DetectorConfig::default();
        for (tip, class) in [
            ((200.0, 150.0), TipClass::LT),
            ((200.0, 350.0), TipClass::LB),
            ((450.0, 150.0), TipClass::RT),
            ((450.0, 350.0), TipClass::RB),
        ] {
            let s = scene(tip, 45.0, class);
            let dets = detect(&s.image, &cfg);
            assert_eq!(dets.len(), 1);
            assert_eq!(dets[0].class, class);
            assert!((0.0..=1.0).contains(&dets[0].confidence));
            let pose = detect_to_pose(&s.image, &cfg).unwrap();
            assert!((pose.angle_deg - 45.0).abs() < 1.0, "{}", pose.angle_deg);
            assert!(pose.tip.distance(&s.truth_pose.tip) <= 2.0);
        }
    }

    #[test]
    fn pose_angle_matches_principal_axis() {
        let cfg = DetectorConfig::default();
        for angle in [12.0, 33.0, 58.0, 80.0] {
            let s = scene((150.0, 400.0), angle, TipClass::LB);
            let fit = fit_needle(&s.image, &cfg).unwrap();
            let pose = detect_to_pose(&s.image, &cfg).unwrap();
            assert!((pose.angle_deg - fit.axis_angle_deg).abs() < 0.5);
        }
    }

    #[test]
    fn keeps_only_the_larger_needle() {
        let big = scene((150.0, 150.0), 30.0, TipClass::LT);
        let small = render(&SynthParams {
            tip: PixelPoint { x: 600.0, y: 450.0 },
            angle_deg: 60.0,
            tip_class: TipClass::RB,
            half_length: 25.0,
            ..SynthParams::default()
        })
        .unwrap();
        let mut img = big.image.clone();
        for (dst, &src) in img.samples_mut().iter_mut().zip(small.image.samples()) {
            *dst = (*dst).min(src);
        }
        let pose = detect_to_pose(&img, &DetectorConfig::default()).unwrap();
        assert_eq!(pose.tip_class, TipClass::LT);
        assert!(pose.tip.distance(&big.truth_pose.tip) <= 2.0);
    }

    #[test]
    fn brighter_polarity_and_fixed_threshold() {
        let s = scene((200.0, 150.0), 40.0, TipClass::LT);
        let inverted =
            ImageGray::new(s.image.width(), s.image.height(), s.image.samples().iter().map(|v| 255 - v).collect())
                .unwrap();
        let cfg = DetectorConfig {
            polarity: Polarity::NeedleBrighter,
            ..DetectorConfig::default()
        };
        assert_eq!(detect(&inverted, &cfg)[0].class, TipClass::LT);
        let fixed = DetectorConfig {
            threshold_mode: ThresholdMode::Fixed(115),
            ..DetectorConfig::default()
        };
        assert_eq!(detect(&s.image, &fixed)[0].class, TipClass::LT);
    }

    #[test]
    fn small_components_ignored() {
        let mut img = ImageGray::filled(40, 40, 200).unwrap();
        for x in 10..14 {
            img.set(x, 10, 0);
        }
        let cfg = DetectorConfig {
            smoothing_radius: 0,
            ..DetectorConfig::default()
        };
        assert!(detect(&img, &cfg).is_empty());
    }
}
