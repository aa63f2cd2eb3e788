//! Annotated color renderings of detections: box edges, a tip cross, a
//! midpoint dot and a small text tag drawn with a built-in 5x7 font.

use crate::dataset_io::{ImageGray, ImageRgb};
use crate::detection::Detection;
use crate::geometry::pose_from_detection;

pub const BOX_COLOR: [u8; 3] = [0, 220, 0];
pub const TIP_COLOR: [u8; 3] = [255, 0, 0];
pub const MID_COLOR: [u8; 3] = [0, 96, 255];
pub const TEXT_COLOR: [u8; 3] = [255, 255, 0];

const TEXT_SCALE: i64 = 2;

fn glyph(c: char) -> [u8; 7] {
    match c.to_ascii_uppercase() {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        _ => [0; 7],
    }
}

pub fn draw_text(img: &mut ImageRgb, x: i64, y: i64, text: &str, color: [u8; 3]) {
    for (k, c) in text.chars().enumerate() {
        let ox = x + k as i64 * 6 * TEXT_SCALE;
        for (row, bits) in glyph(c).iter().enumerate() {
            for col in 0..5 {
                if bits & (0x10 >> col) == 0 {
                    continue;
                }
                for sy in 0..TEXT_SCALE {
                    for sx in 0..TEXT_SCALE {
                        img.put(ox + col * TEXT_SCALE + sx, y + row as i64 * TEXT_SCALE + sy, color);
                    }
                }
            }
        }
    }
}

fn draw_rect(img: &mut ImageRgb, x0: i64, y0: i64, x1: i64, y1: i64, color: [u8; 3]) {
    for x in x0..=x1 {
        img.put(x, y0, color);
        img.put(x, y1, color);
    }
    for y in y0..=y1 {
        img.put(x0, y, color);
        img.put(x1, y, color);
    }
}

/// Renders `image` in color with the detection drawn on top, or with a
/// "NO DETECTION" tag when there is none.
pub fn render_overlay(image: &ImageGray, detection: Option<&Detection>) -> ImageRgb {
    let mut out = ImageRgb::from_gray(image);
    let Some(det) = detection else {
        draw_text(&mut out, 4, 4, "NO DETECTION", TEXT_COLOR);
        return out;
    };
    let b = &det.bbox;
    // Pixel whose cell contains a continuous coordinate, edges clamped inward.
    let px = |v: f64, extent: u32| (v.floor() as i64).clamp(0, extent as i64 - 1);
    let (w, h) = (image.width(), image.height());
    draw_rect(
        &mut out,
        px(b.x_min(), w),
        px(b.y_min(), h),
        px(b.x_max(), w),
        px(b.y_max(), h),
        BOX_COLOR,
    );

    let pose = pose_from_detection(b, det.class);
    let (tx, ty) = (px(pose.tip.x, w), px(pose.tip.y, h));
    for d in -5..=5 {
        out.put(tx + d, ty, TIP_COLOR);
        out.put(tx, ty + d, TIP_COLOR);
    }
    let (mx, my) = (px(pose.midpoint.x, w), px(pose.midpoint.y, h));
    for dy in -2i64..=2 {
        for dx in -2i64..=2 {
            if dx * dx + dy * dy <= 4 {
                out.put(mx + dx, my + dy, MID_COLOR);
            }
        }
    }

    let tag = format!("{} {:.2}DEG C{:.2}", det.class, pose.angle_deg, det.confidence);
    let text_h = 7 * TEXT_SCALE;
    let ty = if px(b.y_min(), h) >= text_h + 3 {
        px(b.y_min(), h) - text_h - 2
    } else {
        (px(b.y_max(), h) + 3).min(h as i64 - text_h)
    };
    draw_text(&mut out, px(b.x_min(), w), ty.max(0), &tag, TEXT_COLOR);
    out
}
