//! Scene rasterizer with an 8x8 bitmap font. No antialiasing.

use crate::error::{Error, Result};
use font8x8::UnicodeFonts;
use image::{ImageFormat, Rgb as Px, RgbImage};
use std::io::Cursor;
use vislit_core::scene::{text_width, Anchor, Item, Rgb, Scene};

fn px(c: Rgb) -> Px<u8> {
    Px([c.0, c.1, c.2])
}

struct Canvas {
    img: RgbImage,
}

impl Canvas {
    fn put(&mut self, x: i64, y: i64, c: Px<u8>) {
        if x >= 0 && y >= 0 && (x as u32) < self.img.width() && (y as u32) < self.img.height() {
            self.img.put_pixel(x as u32, y as u32, c);
        }
    }

    fn disk(&mut self, cx: f64, cy: f64, r: f64, c: Px<u8>) {
        if r <= 0.75 {
            self.put(cx.floor() as i64, cy.floor() as i64, c);
            return;
        }
        let (x0, x1) = ((cx - r).floor() as i64, (cx + r).ceil() as i64);
        let (y0, y1) = ((cy - r).floor() as i64, (cy + r).ceil() as i64);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                if dx * dx + dy * dy <= r * r {
                    self.put(x, y, c);
                }
            }
        }
    }

    fn ring(&mut self, cx: f64, cy: f64, r: f64, c: Px<u8>) {
        let (x0, x1) = ((cx - r - 1.0).floor() as i64, (cx + r + 1.0).ceil() as i64);
        let (y0, y1) = ((cy - r - 1.0).floor() as i64, (cy + r + 1.0).ceil() as i64);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let d = (dx * dx + dy * dy).sqrt();
                if (d - r).abs() <= 0.6 {
                    self.put(x, y, c);
                }
            }
        }
    }

    fn segment(&mut self, a: (f64, f64), b: (f64, f64), width: f64, c: Px<u8>) {
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let steps = (len * 2.0).ceil().max(1.0) as usize;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            self.disk(a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t, width / 2.0, c);
        }
    }

    fn fill_polygon(&mut self, pts: &[(f64, f64)], c: Px<u8>) {
        if pts.len() < 3 {
            return;
        }
        let ymin = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor().max(0.0) as i64;
        let ymax = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil().min(self.img.height() as f64) as i64;
        let mut xs = Vec::new();
        for y in ymin..ymax {
            let sy = y as f64 + 0.5;
            xs.clear();
            for i in 0..pts.len() {
                let (p, q) = (pts[i], pts[(i + 1) % pts.len()]);
                if (p.1 <= sy && q.1 > sy) || (q.1 <= sy && p.1 > sy) {
                    xs.push(p.0 + (sy - p.1) / (q.1 - p.1) * (q.0 - p.0));
                }
            }
            xs.sort_by(|a, b| a.total_cmp(b));
            for pair in xs.chunks(2) {
                if let [x0, x1] = pair {
                    for x in (x0 - 0.5).ceil() as i64..(x1 - 0.5).ceil() as i64 {
                        self.put(x, y, c);
                    }
                }
            }
        }
    }

    fn text(&mut self, x: f64, y: f64, text: &str, size: f64, c: Px<u8>, anchor: Anchor, vertical: bool) {
        let s = (size / 7.0).max(0.5);
        let w = text_width(text, size);
        let shift = match anchor {
            Anchor::Start => 0.0,
            Anchor::Middle => w / 2.0,
            Anchor::End => w,
        };
        let cell = (8.0 * s).ceil() as i64;
        for (k, ch) in text.chars().enumerate() {
            let glyph = font8x8::BASIC_FONTS
                .get(ch)
                .or_else(|| font8x8::LATIN_FONTS.get(ch))
                .or_else(|| font8x8::BASIC_FONTS.get('?'))
                .unwrap_or([0; 8]);
            // Glyph-local origin: left edge of the cell, on the baseline
            // (font row 7 sits just below the baseline).
            let gx0 = k as f64 * 8.0 * s - shift;
            for j in 0..cell {
                for i in 0..cell {
                    let fx = ((i as f64 + 0.5) / s) as usize;
                    let fy = ((j as f64 + 0.5) / s) as usize;
                    if fx >= 8 || fy >= 8 || glyph[fy] & (1 << fx) == 0 {
                        continue;
                    }
                    let u = gx0 + i as f64;
                    let v = j as f64 - 7.0 * s;
                    let (tx, ty) = if vertical { (x + v, y - u) } else { (x + u, y + v) };
                    self.put(tx.floor() as i64, ty.floor() as i64, c);
                }
            }
        }
    }
}

pub fn rasterize(scene: &Scene) -> RgbImage {
    let mut cv = Canvas { img: RgbImage::from_pixel(scene.width.max(1), scene.height.max(1), px(scene.background)) };
    for item in &scene.items {
        match item {
            Item::Rect { x, y, w, h, fill, stroke } => {
                if let Some(f) = fill {
                    cv.fill_polygon(&[(*x, *y), (x + w, *y), (x + w, y + h), (*x, y + h)], px(*f));
                }
                if let Some(s) = stroke {
                    let c = px(*s);
                    let (x1, y1) = (x + w - 0.5, y + h - 0.5);
                    let (x0, y0) = (x + 0.5, y + 0.5);
                    for (a, b) in [((x0, y0), (x1, y0)), ((x1, y0), (x1, y1)), ((x1, y1), (x0, y1)), ((x0, y1), (x0, y0))] {
                        cv.segment(a, b, 1.0, c);
                    }
                }
            }
            Item::Line { points, color, width } => {
                for w in points.windows(2) {
                    cv.segment(w[0], w[1], *width, px(*color));
                }
            }
            Item::Polygon { points, fill, stroke } => {
                cv.fill_polygon(points, px(*fill));
                if let Some(s) = stroke {
                    for i in 0..points.len() {
                        cv.segment(points[i], points[(i + 1) % points.len()], 1.0, px(*s));
                    }
                }
            }
            Item::Circle { cx, cy, r, fill, stroke } => {
                if let Some(f) = fill {
                    cv.disk(*cx, *cy, *r, px(*f));
                }
                if let Some(s) = stroke {
                    cv.ring(*cx, *cy, *r, px(*s));
                }
            }
            Item::Text { x, y, text, size, color, anchor, vertical } => {
                cv.text(*x, *y, text, *size, px(*color), *anchor, *vertical);
            }
        }
    }
    cv.img
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).map_err(|e| Error::format("encoding png", e))?;
    Ok(buf.into_inner())
}

pub fn render_png(scene: &Scene) -> Result<Vec<u8>> {
    encode_png(&rasterize(scene))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_shapes_and_text() {
        let mut s = Scene::new(100, 60);
        s.rect(10.0, 10.0, 20.0, 10.0, Some(Rgb(255, 0, 0)), None);
        s.circle(70.0, 15.0, 5.0, Some(Rgb(0, 0, 255)), None);
        s.text(10.0, 50.0, "Hi", 14.0, Anchor::Start);
        let img = rasterize(&s);
        assert_eq!(img.get_pixel(15, 15), &Px([255, 0, 0]));
        assert_eq!(img.get_pixel(9, 15), &Px([255, 255, 255]));
        assert_eq!(img.get_pixel(70, 15), &Px([0, 0, 255]));
        let ink = (36..52).flat_map(|y| (8..45).map(move |x| (x, y))).filter(|(x, y)| img.get_pixel(*x, *y) == &Px([0, 0, 0])).count();
        assert!(ink > 20);
        let png = encode_png(&img).unwrap();
        assert_eq!(&png[1..4], b"PNG");
    }

    #[test]
    fn polygon_fill_is_exact_for_axis_aligned_boxes() {
        let mut s = Scene::new(10, 10);
        s.polygon(vec![(2.0, 2.0), (6.0, 2.0), (6.0, 5.0), (2.0, 5.0)], Rgb::BLACK, None);
        let img = rasterize(&s);
        let n = img.pixels().filter(|p| **p == Px([0, 0, 0])).count();
        assert_eq!(n, 12);
    }
}
