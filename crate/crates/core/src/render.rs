//! Chart instance to drawing list.

use crate::chart::{ChartInstance, ChartType, Unit};
use crate::geo::state_tiles;
use crate::numfmt::{decimals_for, format_range, format_value};
use crate::scene::{palette, text_width, Anchor, Rgb, Scale, Scene};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

pub const WIDTH: u32 = 800;
pub const HEIGHT: u32 = 560;
const FONT: f64 = 11.0;

struct Plot {
    left: f64,
    top: f64,
    right: f64,
    bottom: f64,
}

fn ticks(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = libm::round((hi - lo) / step) as i64;
    (0..=n.max(0)).map(|i| lo + i as f64 * step).collect()
}

fn tick_label(v: f64, unit: Unit, step: f64) -> String {
    format_value(v, unit, decimals_for(step))
}

/// Text shrunk (down to the bitmap font's native size) to fit `max_w`.
fn fit_text(s: &mut Scene, x: f64, y: f64, text: &str, size: f64, max_w: f64, anchor: Anchor) {
    let w = text_width(text, size);
    let size = if w > max_w { (size * max_w / w).max(7.0) } else { size };
    s.text(x, y, text, size, anchor);
}

fn frame(s: &mut Scene, inst: &ChartInstance, legend: bool) -> Plot {
    fit_text(s, WIDTH as f64 / 2.0, 28.0, &inst.title, FONT * 1.4, WIDTH as f64 - 20.0, Anchor::Middle);
    let ax = &inst.axis;
    let widest = ticks(ax.y_range.0, ax.y_range.1, ax.y_tick).iter().map(|t| text_width(&tick_label(*t, ax.unit, ax.y_tick), FONT)).fold(0.0, f64::max);
    Plot { left: (widest + 44.0).max(90.0), top: 60.0, right: if legend { 610.0 } else { 760.0 }, bottom: 470.0 }
}

fn y_axis(s: &mut Scene, p: &Plot, inst: &ChartInstance) -> Scale {
    let ax = &inst.axis;
    let ys = Scale::new(ax.y_range, (p.bottom, p.top));
    for t in ticks(ax.y_range.0, ax.y_range.1, ax.y_tick) {
        let y = ys.map(t);
        s.segment((p.left, y), (p.right, y), Rgb::GRID, 1.0);
        s.text(p.left - 6.0, y + FONT / 2.0, &tick_label(t, ax.unit, ax.y_tick), FONT, Anchor::End);
    }
    s.segment((p.left, p.top), (p.left, p.bottom), Rgb::AXIS, 1.0);
    s.vtext(22.0, (p.top + p.bottom) / 2.0, &ax.y_title, FONT);
    ys
}

fn numeric_x_axis(s: &mut Scene, p: &Plot, inst: &ChartInstance) -> Scale {
    let ax = &inst.axis;
    let range = ax.x_range.unwrap_or((0.0, 1.0));
    let step = ax.x_tick.unwrap_or((range.1 - range.0) / 5.0);
    let unit = ax.x_unit.unwrap_or(Unit::Count);
    let xs = Scale::new(range, (p.left, p.right));
    tick_row(s, p, &xs, &ticks(range.0, range.1, step), |t| tick_label(t, unit, step), true);
    x_title(s, p, inst, FONT);
    xs
}

/// Gridlines plus tick labels below the plot, keeping every k-th label
/// so neighbours do not collide.
fn tick_row(s: &mut Scene, p: &Plot, xs: &Scale, ts: &[f64], label: impl Fn(f64) -> String, grid: bool) {
    let labels: Vec<String> = ts.iter().map(|t| label(*t)).collect();
    let widest = labels.iter().map(|l| text_width(l, FONT)).fold(0.0, f64::max);
    let spacing = if ts.len() > 1 { libm::fabs(xs.map(ts[1]) - xs.map(ts[0])) } else { f64::INFINITY };
    let every = libm::ceil((widest + 10.0) / spacing).max(1.0) as usize;
    for (i, (t, l)) in ts.iter().zip(&labels).enumerate() {
        let x = xs.map(*t);
        if grid {
            s.segment((x, p.top), (x, p.bottom), Rgb::GRID, 1.0);
        }
        if i % every == 0 {
            s.text(x, p.bottom + 8.0 + FONT, l, FONT, Anchor::Middle);
        }
    }
}

/// `label_h` is the height of the tick label block above the title.
fn x_title(s: &mut Scene, p: &Plot, inst: &ChartInstance, label_h: f64) {
    s.segment((p.left, p.bottom), (p.right, p.bottom), Rgb::AXIS, 1.0);
    if !inst.axis.x_title.is_empty() {
        s.text((p.left + p.right) / 2.0, p.bottom + label_h + 20.0 + FONT, &inst.axis.x_title, FONT, Anchor::Middle);
    }
}

const LINE_GAP: f64 = 1.4;

/// How category labels under a banded axis are drawn.
struct BandLabels {
    size: f64,
    rotated: bool,
    lines: Vec<Vec<String>>,
    /// Show every k-th label.
    every: usize,
    height: f64,
}

/// Greedy word wrap at `max` characters per line.
fn wrap(label: &str, max: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for w in label.split_whitespace() {
        match out.last_mut() {
            Some(l) if l.chars().count() + 1 + w.chars().count() <= max => {
                l.push(' ');
                l.push_str(w);
            }
            _ => out.push(String::from(w)),
        }
    }
    if out.is_empty() {
        out.push(String::new());
    }
    out
}

fn widest_line(lines: &[Vec<String>], size: f64) -> f64 {
    lines.iter().flatten().map(|l| text_width(l, size)).fold(0.0, f64::max)
}

/// Flat if the labels fit their bands, else wrapped onto up to three
/// lines, else rotated (wrapped along the rotated direction when the band
/// has room for several lines).
fn band_layout(cats: &[String], band: f64) -> BandLabels {
    let room = band - 4.0;
    let fits = |size: f64| -> Option<Vec<Vec<String>>> {
        let max = libm::floor(room / (size * 8.0 / 7.0)) as usize;
        let lines: Vec<Vec<String>> = cats.iter().map(|c| wrap(c, max.max(1))).collect();
        (lines.iter().all(|l| l.len() <= 3) && widest_line(&lines, size) <= room).then_some(lines)
    };
    if cats.iter().all(|c| text_width(c, FONT) <= room) {
        let lines = cats.iter().map(|c| vec![c.clone()]).collect();
        return BandLabels { size: FONT, rotated: false, lines, every: 1, height: FONT };
    }
    for size in [FONT * 0.9, FONT * 0.75] {
        if let Some(lines) = fits(size) {
            let n = lines.iter().map(Vec::len).max().unwrap_or(1) as f64;
            return BandLabels { size, rotated: false, lines, every: 1, height: size + (n - 1.0) * size * LINE_GAP };
        }
    }
    let size = FONT * 0.9;
    let per_line = size * LINE_GAP;
    let k = libm::floor(band / per_line).max(1.0) as usize;
    let every = if band >= per_line { 1 } else { libm::ceil(per_line / band) as usize };
    let lines: Vec<Vec<String>> = cats
        .iter()
        .map(|c| {
            let full = c.chars().count();
            let longest_word = c.split_whitespace().map(|w| w.chars().count()).max().unwrap_or(0);
            (longest_word.max(1)..=full.max(1)).map(|m| wrap(c, m)).find(|l| l.len() <= k).unwrap_or_else(|| vec![c.clone()])
        })
        .collect();
    BandLabels { size, rotated: true, height: widest_line(&lines, size) + 4.0, lines, every }
}

/// Plot bottom leaving room for labels and the axis title below.
fn bottom_for(label_h: f64) -> f64 {
    (HEIGHT as f64 - 12.0 - (label_h + 20.0 + FONT)).clamp(300.0, 470.0)
}

fn band_frame(s: &mut Scene, inst: &ChartInstance, legend: bool) -> (Plot, BandLabels) {
    let mut p = frame(s, inst, legend);
    let l = band_layout(&inst.categories, (p.right - p.left) / inst.categories.len().max(1) as f64);
    p.bottom = bottom_for(l.height);
    (p, l)
}

/// Category labels centered in equal bands.
fn band_labels(s: &mut Scene, p: &Plot, l: &BandLabels) -> f64 {
    let band = (p.right - p.left) / l.lines.len().max(1) as f64;
    for (i, lines) in l.lines.iter().enumerate() {
        if i % l.every != 0 {
            continue;
        }
        let x = p.left + band * (i as f64 + 0.5);
        let n = lines.len() as f64;
        for (j, text) in lines.iter().enumerate() {
            if l.rotated {
                // Right-aligned against the axis, reading upwards.
                let off = (j as f64 - (n - 1.0) / 2.0) * l.size * LINE_GAP;
                s.items.push(crate::scene::Item::Text {
                    x: x + off + l.size / 2.0,
                    y: p.bottom + 6.0,
                    text: text.clone(),
                    size: l.size,
                    color: Rgb::BLACK,
                    anchor: Anchor::End,
                    vertical: true,
                });
            } else {
                s.text(x, p.bottom + 8.0 + l.size + j as f64 * l.size * LINE_GAP, text, l.size, Anchor::Middle);
            }
        }
    }
    band
}

fn legend(s: &mut Scene, names: &[&str], top: f64) {
    for (i, n) in names.iter().enumerate() {
        let y = top + 20.0 * i as f64;
        s.rect(625.0, y, 12.0, 12.0, Some(palette(i)), None);
        s.text(643.0, y + 11.0, n, FONT, Anchor::Start);
    }
}

pub fn render_chart(inst: &ChartInstance) -> Scene {
    let mut s = Scene::new(WIDTH, HEIGHT);
    match inst.chart_type {
        ChartType::Line => line(&mut s, inst, false, false),
        ChartType::Area => line(&mut s, inst, true, false),
        ChartType::StackedArea => line(&mut s, inst, true, true),
        ChartType::Bar => bar(&mut s, inst),
        ChartType::StackedBar | ChartType::StackedBar100 => stacked_bar(&mut s, inst),
        ChartType::Pie => pie(&mut s, inst),
        ChartType::Histogram => histogram(&mut s, inst),
        ChartType::Scatterplot | ChartType::Bubble => points(&mut s, inst),
        ChartType::Choropleth => choropleth(&mut s, inst),
        ChartType::Treemap => treemap(&mut s, inst),
    }
    s
}

fn line(s: &mut Scene, inst: &ChartInstance, fill: bool, stacked: bool) {
    let multi = inst.series.len() > 1;
    let (p, labels) = band_frame(s, inst, multi);
    let ys = y_axis(s, &p, inst);
    let band = band_labels(s, &p, &labels);
    x_title(s, &p, inst, labels.height);
    let x = |i: usize| p.left + band * (i as f64 + 0.5);
    let mut base = vec![inst.axis.y_range.0; inst.categories.len()];
    for (k, ser) in inst.series.iter().enumerate() {
        let c = palette(k);
        let top: Vec<f64> = if stacked { ser.values.iter().zip(&base).map(|(v, b)| v + b).collect() } else { ser.values.clone() };
        let pts: Vec<(f64, f64)> = top.iter().enumerate().map(|(i, v)| (x(i), ys.map(*v))).collect();
        if fill {
            let mut poly = pts.clone();
            for i in (0..base.len()).rev() {
                poly.push((x(i), ys.map(base[i])));
            }
            s.polygon(poly, c.mix(Rgb::WHITE, if stacked { 0.15 } else { 0.4 }), None);
        }
        s.line(pts.clone(), c, 2.0);
        if !fill {
            for (px, py) in &pts {
                s.circle(*px, *py, 3.0, Some(c), None);
            }
        }
        if stacked {
            base = top;
        }
    }
    if multi {
        let names: Vec<&str> = inst.series.iter().map(|x| x.name.as_str()).collect();
        legend(s, &names, p.top);
    }
}

fn bar(s: &mut Scene, inst: &ChartInstance) {
    // Horizontal bars, one per category.
    fit_text(s, WIDTH as f64 / 2.0, 28.0, &inst.title, FONT * 1.4, WIDTH as f64 - 20.0, Anchor::Middle);
    let p = Plot { left: 170.0, top: 60.0, right: 740.0, bottom: 470.0 };
    let ax = &inst.axis;
    let xs = Scale::new(ax.y_range, (p.left, p.right));
    tick_row(s, &p, &xs, &ticks(ax.y_range.0, ax.y_range.1, ax.y_tick), |t| tick_label(t, ax.unit, ax.y_tick), true);
    s.text((p.left + p.right) / 2.0, p.bottom + 20.0 + 2.0 * FONT, &ax.y_title, FONT, Anchor::Middle);
    let n = inst.categories.len().max(1) as f64;
    let band = (p.bottom - p.top) / n;
    let values = inst.series.first().map(|x| x.values.as_slice()).unwrap_or(&[]);
    for (i, (c, v)) in inst.categories.iter().zip(values).enumerate() {
        let y = p.top + band * i as f64;
        s.rect(p.left, y + band * 0.15, xs.map(*v) - p.left, band * 0.7, Some(palette(0)), None);
        s.text(p.left - 6.0, y + band / 2.0 + FONT / 2.0, c, FONT, Anchor::End);
    }
    s.segment((p.left, p.top), (p.left, p.bottom), Rgb::AXIS, 1.0);
}

fn stacked_bar(s: &mut Scene, inst: &ChartInstance) {
    let (p, labels) = band_frame(s, inst, true);
    let ys = y_axis(s, &p, inst);
    let band = band_labels(s, &p, &labels);
    x_title(s, &p, inst, labels.height);
    let mut base = vec![inst.axis.y_range.0; inst.categories.len()];
    for (k, ser) in inst.series.iter().enumerate() {
        for (i, v) in ser.values.iter().enumerate() {
            let y0 = ys.map(base[i]);
            let y1 = ys.map(base[i] + v);
            s.rect(p.left + band * (i as f64 + 0.2), y1, band * 0.6, y0 - y1, Some(palette(k)), Some(Rgb::WHITE));
            base[i] += v;
        }
    }
    let names: Vec<&str> = inst.series.iter().map(|x| x.name.as_str()).collect();
    legend(s, &names, p.top);
}

fn pie(s: &mut Scene, inst: &ChartInstance) {
    fit_text(s, WIDTH as f64 / 2.0, 28.0, &inst.title, FONT * 1.4, WIDTH as f64 - 20.0, Anchor::Middle);
    let values = inst.series.first().map(|x| x.values.as_slice()).unwrap_or(&[]);
    let total: f64 = values.iter().sum();
    let (cx, cy, r) = (330.0, 290.0, 200.0);
    let mut a0 = -core::f64::consts::FRAC_PI_2;
    for (i, v) in values.iter().enumerate() {
        let sweep = if total > 0.0 { v / total * core::f64::consts::TAU } else { 0.0 };
        let steps = libm::ceil(sweep / 0.02).max(1.0) as usize;
        let mut pts = vec![(cx, cy)];
        for k in 0..=steps {
            let a = a0 + sweep * k as f64 / steps as f64;
            pts.push((cx + r * libm::cos(a), cy + r * libm::sin(a)));
        }
        s.polygon(pts, palette(i), Some(Rgb::WHITE));
        a0 += sweep;
    }
    let names: Vec<&str> = inst.categories.iter().map(|c| c.as_str()).collect();
    legend(s, &names, 120.0);
}

fn histogram(s: &mut Scene, inst: &ChartInstance) {
    let p = frame(s, inst, false);
    let ys = y_axis(s, &p, inst);
    let xs = numeric_x_axis(s, &p, inst);
    let values = inst.series.first().map(|x| x.values.as_slice()).unwrap_or(&[]);
    for ((lo, hi), v) in inst.axis.bins.iter().zip(values) {
        let (x0, x1) = (xs.map(*lo), xs.map(*hi));
        let y = ys.map(*v);
        s.rect(x0, y, x1 - x0, p.bottom - y, Some(palette(0)), Some(Rgb::WHITE));
    }
}

fn points(s: &mut Scene, inst: &ChartInstance) {
    let bubble = inst.chart_type == ChartType::Bubble;
    let p = frame(s, inst, bubble);
    let ys = y_axis(s, &p, inst);
    let xs = numeric_x_axis(s, &p, inst);
    let smax = inst.points.iter().filter_map(|d| d.size).fold(0.0, f64::max);
    let radius = |size: Option<f64>| match size {
        Some(v) if smax > 0.0 => 4.0 + 26.0 * libm::sqrt(v / smax),
        _ => 3.5,
    };
    for d in &inst.points {
        let (x, y) = (xs.map(d.x), ys.map(d.y));
        if bubble {
            s.circle(x, y, radius(d.size), Some(palette(0).mix(Rgb::WHITE, 0.45)), Some(palette(0)));
        } else {
            s.circle(x, y, 3.5, Some(palette(0)), None);
        }
    }
    if bubble {
        for d in &inst.points {
            if let Some(l) = &d.label {
                s.text(xs.map(d.x), ys.map(d.y) + FONT * 0.35, l, FONT * 0.7, Anchor::Middle);
            }
        }
        let mut below = p.top;
        if let Some(t) = &inst.axis.size_title {
            let size = FONT * 0.9;
            let max = libm::floor((WIDTH as f64 - 630.0) / (size * 8.0 / 7.0)) as usize;
            for (j, l) in wrap(t, max).iter().enumerate() {
                below = p.top + 10.0 + j as f64 * size * LINE_GAP;
                s.text(625.0, below, l, size, Anchor::Start);
            }
        }
        for (k, v) in [nice_floor(smax / 4.0), nice_floor(smax)].into_iter().enumerate() {
            let r = radius(Some(v));
            let cy = below + 50.0 + 80.0 * k as f64;
            s.circle(660.0, cy, r, None, Some(palette(0)));
            s.text(700.0, cy + FONT / 2.0, &format_value(v, Unit::Count, 0), FONT, Anchor::Start);
        }
    }
}

/// Largest number of the form {1, 2, 2.5, 5} x 10^k not above `v`, so the
/// size legend shows reference sizes rather than data values.
pub fn nice_floor(v: f64) -> f64 {
    if !(v > 0.0) {
        return 0.0;
    }
    let e = libm::pow(10.0, libm::floor(libm::log10(v)));
    let m = v / e;
    let f = [5.0, 2.5, 2.0, 1.0].into_iter().find(|f| m >= *f - 1e-9).unwrap_or(1.0);
    f * e
}

/// Sequential color for class `i` of `n`.
fn ramp(i: usize, n: usize) -> Rgb {
    let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 1.0 };
    Rgb(239, 243, 255).mix(Rgb(8, 69, 148), t)
}

fn choropleth(s: &mut Scene, inst: &ChartInstance) {
    fit_text(s, WIDTH as f64 / 2.0, 28.0, &inst.title, FONT * 1.4, WIDTH as f64 - 20.0, Anchor::Middle);
    let tiles = state_tiles();
    let values = inst.series.first().map(|x| x.values.as_slice()).unwrap_or(&[]);
    let bins = &inst.axis.bins;
    let class = |v: f64| bins.iter().position(|(lo, hi)| v >= *lo && v < *hi).unwrap_or(bins.len().saturating_sub(1));
    let cell = 52.0;
    for (i, code) in inst.categories.iter().enumerate() {
        let Some(t) = tiles.iter().find(|t| &t.code == code) else { continue };
        // Generic labels keep the tile position of the original state.
        let original = inst.label_map.iter().find(|(_, g)| g == code).map(|(o, _)| o.as_str());
        let t = original.and_then(|o| tiles.iter().find(|t| t.code == o)).unwrap_or(t);
        let (x, y) = (100.0 + t.col as f64 * cell, 70.0 + t.row as f64 * cell);
        let k = values.get(i).map(|v| class(*v)).unwrap_or(0);
        let fill = ramp(k, bins.len());
        s.rect(x, y, cell - 3.0, cell - 3.0, Some(fill), None);
        let ink = if k * 2 >= bins.len() { Rgb::WHITE } else { Rgb::BLACK };
        s.text_colored(x + (cell - 3.0) / 2.0, y + (cell + FONT * 0.8) / 2.0 - 1.5, code, FONT * 0.8, Anchor::Middle, ink);
    }
    s.text(100.0, 510.0, &inst.axis.y_title, FONT, Anchor::Start);
    for (k, (lo, hi)) in bins.iter().enumerate() {
        let x = 100.0 + 110.0 * k as f64;
        s.rect(x, 520.0, 20.0, 14.0, Some(ramp(k, bins.len())), Some(Rgb::AXIS));
        s.text(x + 26.0, 532.0, &format_range(*lo, *hi, inst.axis.unit, decimals_for(inst.axis.resolution.max(1.0))), FONT * 0.9, Anchor::Start);
    }
}

fn treemap(s: &mut Scene, inst: &ChartInstance) {
    fit_text(s, WIDTH as f64 / 2.0, 28.0, &inst.title, FONT * 1.4, WIDTH as f64 - 20.0, Anchor::Middle);
    let values = inst.series.first().map(|x| x.values.as_slice()).unwrap_or(&[]);
    let mut groups: Vec<(&str, Vec<usize>)> = Vec::new();
    for (i, p) in inst.parents.iter().enumerate() {
        match groups.iter_mut().find(|g| g.0 == p) {
            Some(g) => g.1.push(i),
            None => groups.push((p.as_str(), vec![i])),
        }
    }
    if groups.is_empty() {
        groups.push(("", (0..inst.categories.len()).collect()));
    }
    let total: f64 = values.iter().sum::<f64>().max(1e-12);
    let (left, top, w, h) = (40.0, 60.0, 720.0, 470.0);
    let mut x = left;
    for (gi, (parent, members)) in groups.iter().enumerate() {
        let gsum: f64 = members.iter().map(|i| values.get(*i).copied().unwrap_or(0.0)).sum();
        let gw = w * gsum / total;
        let mut y = top + 18.0;
        let inner_h = h - 18.0;
        fit_text(s, x + 4.0, top + 13.0, parent, FONT, gw - 6.0, Anchor::Start);
        for i in members {
            let v = values.get(*i).copied().unwrap_or(0.0);
            let lh = if gsum > 0.0 { inner_h * v / gsum } else { 0.0 };
            s.rect(x, y, gw, lh, Some(palette(gi).mix(Rgb::WHITE, 0.2)), Some(Rgb::WHITE));
            if lh > FONT + 4.0 {
                fit_text(s, x + 5.0, y + FONT + 4.0, &inst.categories[*i], FONT, gw - 8.0, Anchor::Start);
            }
            y += lh;
        }
        x += gw;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chartgen::{generate_chart, GenerationConstraints};
    use crate::scene::Item;

    #[test]
    fn nice_floor_steps() {
        assert_eq!(nice_floor(2180.0), 2000.0);
        assert_eq!(nice_floor(545.0), 500.0);
        assert_eq!(nice_floor(2.6), 2.5);
        assert_eq!(nice_floor(0.0), 0.0);
    }

    #[test]
    fn every_type_renders_marks() {
        for ct in ChartType::ALL {
            let inst = generate_chart(ct, 7, &GenerationConstraints::default()).unwrap();
            let s = render_chart(&inst);
            let marks = s.items.iter().filter(|i| !matches!(i, Item::Text { .. })).count();
            assert!(marks >= 5, "{ct:?} has {marks} marks");
            assert!(s.items.iter().any(|i| matches!(i, Item::Text { text, .. } if text == &inst.title)));
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let inst = generate_chart(ChartType::Treemap, 3, &GenerationConstraints::default()).unwrap();
        assert_eq!(render_chart(&inst), render_chart(&inst));
    }
}
