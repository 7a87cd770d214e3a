//! RGB/HSV conversions for the color commands.
//!
//! All arithmetic is f64 with a final round, so conversions are deterministic
//! across platforms.

/// `h` in degrees 0..360, `s` and `v` in 0..=100.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> u32 {
    let s = s / 100.0;
    let v = v / 100.0;
    let c = v * s;
    let hp = (h.rem_euclid(360.0)) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r1, g1, b1) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let to_byte = |f: f64| ((f + m) * 255.0).round() as u32;
    (to_byte(r1) << 16) | (to_byte(g1) << 8) | to_byte(b1)
}

/// Returns `(h, s, v)` with `h` in degrees, `s`/`v` in 0..=100.
pub fn rgb_to_hsv(rgb: u32) -> (f64, f64, f64) {
    let r = ((rgb >> 16) & 0xff) as f64 / 255.0;
    let g = ((rgb >> 8) & 0xff) as f64 / 255.0;
    let b = (rgb & 0xff) as f64 / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { d / max * 100.0 };
    (h, s, max * 100.0)
}

/// Rotate the hue of `rgb` by `degrees` (may be negative), preserving
/// saturation and value. Grey pixels (s == 0) come back unchanged.
pub fn hue_rotate(rgb: u32, degrees: f64) -> u32 {
    let (h, s, v) = rgb_to_hsv(rgb);
    if s == 0.0 {
        return rgb;
    }
    hsv_to_rgb((h + degrees).rem_euclid(360.0), s, v)
}
