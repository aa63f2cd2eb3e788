//! Needle geometry on axis-aligned boxes.
//!
//! A needle is labelled by a box whose diagonal runs from the needle tip to
//! the needle midpoint. The tip sits on one of the four box corners, named by
//! [`TipClass`]; the midpoint sits on the opposite corner. The needle angle is
//! the unsigned angle between the needle and the horizontal box edge, so it
//! always lies in `[0, 90]` degrees and the quadrant is carried by the class.
//!
//! Image coordinates are continuous with the origin at the top-left corner,
//! x to the right and y downward.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Continuous image coordinate in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
}

impl PixelPoint {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Validation(format!(
                "point coordinates must be finite, got ({x}, {y})"
            )));
        }
        Ok(PixelPoint { x, y })
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl fmt::Display for PixelPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Which box corner carries the needle tip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TipClass {
    /// Left-top corner `(x_min, y_min)`.
    LT,
    /// Left-bottom corner `(x_min, y_max)`.
    LB,
    /// Right-top corner `(x_max, y_min)`.
    RT,
    /// Right-bottom corner `(x_max, y_max)`.
    RB,
}

impl TipClass {
    pub const ALL: [TipClass; 4] = [TipClass::LT, TipClass::LB, TipClass::RT, TipClass::RB];

    /// Label-file class index: LT=0, LB=1, RT=2, RB=3.
    pub fn index(self) -> usize {
        match self {
            TipClass::LT => 0,
            TipClass::LB => 1,
            TipClass::RT => 2,
            TipClass::RB => 3,
        }
    }

    pub fn from_index(index: usize) -> Option<TipClass> {
        TipClass::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TipClass::LT => "LT",
            TipClass::LB => "LB",
            TipClass::RT => "RT",
            TipClass::RB => "RB",
        }
    }

    /// True when the tip lies on the left box edge.
    pub fn is_left(self) -> bool {
        matches!(self, TipClass::LT | TipClass::LB)
    }

    /// True when the tip lies on the top box edge.
    pub fn is_top(self) -> bool {
        matches!(self, TipClass::LT | TipClass::RT)
    }

    fn from_sides(left: bool, top: bool) -> TipClass {
        match (left, top) {
            (true, true) => TipClass::LT,
            (true, false) => TipClass::LB,
            (false, true) => TipClass::RT,
            (false, false) => TipClass::RB,
        }
    }
}

impl fmt::Display for TipClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TipClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "LT" | "lt" => Ok(TipClass::LT),
            "LB" | "lb" => Ok(TipClass::LB),
            "RT" | "rt" => Ok(TipClass::RT),
            "RB" | "rb" => Ok(TipClass::RB),
            other => Err(Error::Validation(format!("unknown tip class `{other}`"))),
        }
    }
}

/// Axis-aligned pixel rectangle with strictly positive width and height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !finite || x_min >= x_max || y_min >= y_max {
            return Err(Error::Validation(format!(
                "degenerate box ({x_min}, {y_min}, {x_max}, {y_max})"
            )));
        }
        Ok(BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// The rectangle having `a` and `b` as opposite corners.
    pub fn from_corners(a: PixelPoint, b: PixelPoint) -> Result<Self> {
        BoundingBox::new(a.x.min(b.x), a.y.min(b.y), a.x.max(b.x), a.y.max(b.y))
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> PixelPoint {
        PixelPoint {
            x: 0.5 * (self.x_min + self.x_max),
            y: 0.5 * (self.y_min + self.y_max),
        }
    }

    /// Corner holding the needle tip for `class`.
    pub fn tip_vertex(&self, class: TipClass) -> PixelPoint {
        PixelPoint {
            x: if class.is_left() { self.x_min } else { self.x_max },
            y: if class.is_top() { self.y_min } else { self.y_max },
        }
    }

    /// Corner diagonally opposite the tip: the needle midpoint.
    pub fn mid_vertex(&self, class: TipClass) -> PixelPoint {
        PixelPoint {
            x: if class.is_left() { self.x_max } else { self.x_min },
            y: if class.is_top() { self.y_max } else { self.y_min },
        }
    }
}

pub fn tip_vertex(bbox: &BoundingBox, class: TipClass) -> PixelPoint {
    bbox.tip_vertex(class)
}

pub fn mid_vertex(bbox: &BoundingBox, class: TipClass) -> PixelPoint {
    bbox.mid_vertex(class)
}

/// Class of the box spanned by a tip and a midpoint.
///
/// Fails when the two points share an x or y coordinate, since the box would
/// have zero width or height.
pub fn classify_tip(tip: PixelPoint, mid: PixelPoint) -> Result<TipClass> {
    if tip.x == mid.x || tip.y == mid.y {
        return Err(Error::DegenerateNeedle {
            tip_x: tip.x,
            tip_y: tip.y,
            mid_x: mid.x,
            mid_y: mid.y,
        });
    }
    Ok(TipClass::from_sides(tip.x < mid.x, tip.y < mid.y))
}

/// Unsigned needle angle in degrees: `atan(|y1 - y2| / |x1 - x2|)`.
///
/// A vertical needle gives exactly 90.
pub fn needle_angle(tip: PixelPoint, mid: PixelPoint) -> Result<f64> {
    if tip == mid {
        return Err(Error::ZeroLengthNeedle { x: tip.x, y: tip.y });
    }
    let dx = (tip.x - mid.x).abs();
    let dy = (tip.y - mid.y).abs();
    Ok(dy.atan2(dx).to_degrees())
}

/// Tip, midpoint, class and angle of one needle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeedlePose {
    pub tip: PixelPoint,
    pub midpoint: PixelPoint,
    pub tip_class: TipClass,
    pub angle_deg: f64,
}

impl NeedlePose {
    /// Builds a pose from its two keypoints, deriving class and angle.
    pub fn from_keypoints(tip: PixelPoint, midpoint: PixelPoint) -> Result<Self> {
        let tip_class = classify_tip(tip, midpoint)?;
        let angle_deg = needle_angle(tip, midpoint)?;
        Ok(NeedlePose {
            tip,
            midpoint,
            tip_class,
            angle_deg,
        })
    }

    pub fn bounding_box(&self) -> BoundingBox {
        // Valid poses never share an axis, so the rectangle is non-degenerate.
        BoundingBox::from_corners(self.tip, self.midpoint)
            .expect("pose keypoints span a non-degenerate box")
    }

    /// Far end of the needle: the tip reflected through the midpoint.
    pub fn tail(&self) -> PixelPoint {
        tail_point(self)
    }
}

pub fn pose_from_detection(bbox: &BoundingBox, class: TipClass) -> NeedlePose {
    let tip = bbox.tip_vertex(class);
    let midpoint = bbox.mid_vertex(class);
    NeedlePose {
        tip,
        midpoint,
        tip_class: class,
        angle_deg: bbox.height().atan2(bbox.width()).to_degrees(),
    }
}

pub fn tail_point(pose: &NeedlePose) -> PixelPoint {
    reflect_through(pose.tip, pose.midpoint)
}

pub(crate) fn reflect_through(p: PixelPoint, center: PixelPoint) -> PixelPoint {
    PixelPoint {
        x: 2.0 * center.x - p.x,
        y: 2.0 * center.y - p.y,
    }
}
