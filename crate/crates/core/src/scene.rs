//! Resolution-independent drawing list used for charts and figures.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub const WHITE: Rgb = Rgb(255, 255, 255);
    pub const BLACK: Rgb = Rgb(0, 0, 0);
    pub const GRID: Rgb = Rgb(225, 225, 225);
    pub const AXIS: Rgb = Rgb(90, 90, 90);

    /// Linear blend toward `other` by `t` in [0, 1].
    pub fn mix(self, other: Rgb, t: f64) -> Rgb {
        let f = |a: u8, b: u8| libm::round(a as f64 + (b as f64 - a as f64) * t.clamp(0.0, 1.0)) as u8;
        Rgb(f(self.0, other.0), f(self.1, other.1), f(self.2, other.2))
    }
}

/// Categorical palette (Tableau 10).
pub const PALETTE: [Rgb; 10] = [
    Rgb(78, 121, 167),
    Rgb(242, 142, 43),
    Rgb(225, 87, 89),
    Rgb(118, 183, 178),
    Rgb(89, 161, 79),
    Rgb(237, 201, 72),
    Rgb(176, 122, 161),
    Rgb(255, 157, 167),
    Rgb(156, 117, 95),
    Rgb(186, 176, 172),
];

pub fn palette(i: usize) -> Rgb {
    PALETTE[i % PALETTE.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Anchor {
    Start,
    Middle,
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Item {
    Rect { x: f64, y: f64, w: f64, h: f64, fill: Option<Rgb>, stroke: Option<Rgb> },
    Line { points: Vec<(f64, f64)>, color: Rgb, width: f64 },
    Polygon { points: Vec<(f64, f64)>, fill: Rgb, stroke: Option<Rgb> },
    Circle { cx: f64, cy: f64, r: f64, fill: Option<Rgb>, stroke: Option<Rgb> },
    /// `size` is the cap height in pixels; `vertical` rotates text 90 degrees
    /// counter-clockwise around its anchor.
    Text { x: f64, y: f64, text: String, size: f64, color: Rgb, anchor: Anchor, vertical: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub width: u32,
    pub height: u32,
    pub background: Rgb,
    pub items: Vec<Item>,
}

impl Scene {
    pub fn new(width: u32, height: u32) -> Scene {
        Scene { width, height, background: Rgb::WHITE, items: Vec::new() }
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: Option<Rgb>, stroke: Option<Rgb>) {
        let (x, w) = if w < 0.0 { (x + w, -w) } else { (x, w) };
        let (y, h) = if h < 0.0 { (y + h, -h) } else { (y, h) };
        self.items.push(Item::Rect { x, y, w, h, fill, stroke });
    }

    pub fn line(&mut self, points: Vec<(f64, f64)>, color: Rgb, width: f64) {
        self.items.push(Item::Line { points, color, width });
    }

    pub fn segment(&mut self, a: (f64, f64), b: (f64, f64), color: Rgb, width: f64) {
        self.line(alloc::vec![a, b], color, width);
    }

    pub fn polygon(&mut self, points: Vec<(f64, f64)>, fill: Rgb, stroke: Option<Rgb>) {
        self.items.push(Item::Polygon { points, fill, stroke });
    }

    pub fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: Option<Rgb>, stroke: Option<Rgb>) {
        self.items.push(Item::Circle { cx, cy, r, fill, stroke });
    }

    pub fn text(&mut self, x: f64, y: f64, text: &str, size: f64, anchor: Anchor) {
        self.items.push(Item::Text { x, y, text: text.to_string(), size, color: Rgb::BLACK, anchor, vertical: false });
    }

    pub fn text_colored(&mut self, x: f64, y: f64, text: &str, size: f64, anchor: Anchor, color: Rgb) {
        self.items.push(Item::Text { x, y, text: text.to_string(), size, color, anchor, vertical: false });
    }

    pub fn vtext(&mut self, x: f64, y: f64, text: &str, size: f64) {
        self.items.push(Item::Text { x, y, text: text.to_string(), size, color: Rgb::BLACK, anchor: Anchor::Middle, vertical: true });
    }
}

/// Width of `text` in pixels for the fixed-advance font used by the
/// rasterizer (glyph cell is 8 units, cap height 7 units).
pub fn text_width(text: &str, size: f64) -> f64 {
    text.chars().count() as f64 * size * 8.0 / 7.0
}

/// Affine map from data to pixel coordinates along one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scale {
    pub d0: f64,
    pub d1: f64,
    pub p0: f64,
    pub p1: f64,
}

impl Scale {
    pub fn new(domain: (f64, f64), pixels: (f64, f64)) -> Scale {
        Scale { d0: domain.0, d1: domain.1, p0: pixels.0, p1: pixels.1 }
    }

    pub fn map(&self, v: f64) -> f64 {
        if self.d1 == self.d0 {
            return (self.p0 + self.p1) / 2.0;
        }
        self.p0 + (v - self.d0) / (self.d1 - self.d0) * (self.p1 - self.p0)
    }
}

/// Roughly `target` evenly spaced "nice" ticks covering [lo, hi].
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) || target == 0 {
        return alloc::vec![lo];
    }
    let raw = (hi - lo) / target as f64;
    let mag = libm::pow(10.0, libm::floor(libm::log10(raw)));
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let start = libm::ceil(lo / step - 1e-9) * step;
    let mut out = Vec::new();
    let mut v = start;
    while v <= hi + step * 1e-9 {
        out.push(if v.abs() < step * 1e-9 { 0.0 } else { v });
        v += step;
    }
    out
}
