//! Randomized, constraint-shaped chart data for the twelve chart types.

use crate::chart::*;
use crate::geo::state_tiles;
use crate::numfmt::{approx_eq, format_range, quantize};
use crate::qbank::{self, BankOptions};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChartError {
    #[error("{chart_type}: no valid chart after {attempts} attempts (last failure: {last})")]
    ConstraintUnsatisfiable { chart_type: ChartType, attempts: u32, last: String },
    #[error("{chart_type}: {reason}")]
    IncompatibleConstraint { chart_type: ChartType, reason: String },
    #[error("{0} charts carry geographic or physical labels and cannot be decontextualized")]
    NotDecontextualizable(ChartType),
    #[error("render failure: {0}")]
    RenderFailure(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    /// Planted center; drawn from the seed when absent.
    pub center: Option<(f64, f64)>,
    /// Radius as a fraction of each axis span.
    pub radius: f64,
    pub members: usize,
    /// Whether the cluster statement names the planted center; drawn from
    /// the seed when absent.
    pub statement_true: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    /// Required ratio between the largest and second-largest residual.
    pub multiple: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConstraints {
    /// Direction over the chart's trend window (or correlation sign for
    /// point charts); drawn from the seed when absent.
    pub trend: Option<TrendDirection>,
    pub unique_extremum_margin: f64,
    pub cluster: Option<ClusterSpec>,
    pub anomaly: Option<AnomalySpec>,
    /// Step the true range endpoints must be multiples of.
    pub range_grid_alignment: Option<f64>,
    /// Override of the per-chart value band.
    pub value_band: Option<(f64, f64)>,
    /// Answers each template must avoid, keyed by template id.
    pub exclusions: BTreeMap<u8, Vec<String>>,
    pub max_attempts: u32,
}

impl Default for GenerationConstraints {
    fn default() -> Self {
        GenerationConstraints {
            trend: None,
            unique_extremum_margin: 0.10,
            cluster: None,
            anomaly: None,
            range_grid_alignment: None,
            value_band: None,
            exclusions: BTreeMap::new(),
            max_attempts: 1000,
        }
    }
}

/// Trend window (series, start, inclusive end) per chart type.
pub fn trend_window(ct: ChartType) -> Option<(&'static str, usize, usize)> {
    match ct {
        ChartType::Line => Some(("Oil", 6, 11)),
        ChartType::Area => Some(("Coffee beans", 0, 11)),
        ChartType::StackedArea => Some(("Isla", 0, 3)),
        _ => None,
    }
}

fn default_cluster(ct: ChartType) -> ClusterSpec {
    match ct {
        ChartType::Bubble => ClusterSpec { center: None, radius: 0.06, members: 3, statement_true: None },
        _ => ClusterSpec { center: None, radius: 0.04, members: 10, statement_true: None },
    }
}

fn check_compatible(ct: ChartType, c: &GenerationConstraints) -> Result<(), ChartError> {
    let bad = |reason: &str| Err(ChartError::IncompatibleConstraint { chart_type: ct, reason: reason.to_string() });
    let point_chart = matches!(ct, ChartType::Scatterplot | ChartType::Bubble);
    if !(c.unique_extremum_margin > 0.0 && c.unique_extremum_margin < 1.0) {
        return bad("extremum margin must lie in (0, 1) for charts with extremum items");
    }
    if !point_chart && (c.cluster.is_some() || c.anomaly.is_some()) {
        return bad("cluster and anomaly shaping apply only to scatterplots and bubble charts");
    }
    if let Some(a) = &c.anomaly {
        if a.multiple <= 1.0 {
            return bad("anomaly residual multiple must exceed 1");
        }
    }
    if let Some(cl) = &c.cluster {
        if cl.radius <= 0.0 || cl.members < 2 {
            return bad("cluster needs a positive radius and at least two members");
        }
    }
    if let Some(t) = c.trend {
        if point_chart {
            if t == TrendDirection::Flat {
                return bad("point charts take an increasing or decreasing relationship");
            }
        } else if trend_window(ct).is_none() {
            return bad("chart has no trend window");
        }
    }
    if let Some(a) = c.range_grid_alignment {
        if a <= 0.0 {
            return bad("range alignment step must be positive");
        }
    }
    if let Some((lo, hi)) = c.value_band {
        if !(lo < hi) {
            return bad("value band must be an increasing interval");
        }
    }
    Ok(())
}

fn salt(ct: ChartType) -> u64 {
    0xA076_1D64_78BD_642F_u64.wrapping_mul(ct.index() as u64 + 1)
}

/// Generate a chart satisfying `constraints`, regenerating from seed+1,
/// seed+2, … until every attached template validates.
pub fn generate_chart(
    chart_type: ChartType,
    seed: u64,
    constraints: &GenerationConstraints,
) -> Result<ChartInstance, ChartError> {
    check_compatible(chart_type, constraints)?;
    let mut c = constraints.clone();
    if matches!(chart_type, ChartType::Scatterplot | ChartType::Bubble) {
        c.cluster.get_or_insert_with(|| default_cluster(chart_type));
        c.anomaly.get_or_insert(AnomalySpec { multiple: 3.0 });
    }
    let mut last = String::new();
    for attempt in 0..c.max_attempts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64) ^ salt(chart_type));
        let built = build(chart_type, &mut rng, &c);
        let mut inst = match built {
            Ok(i) => i,
            Err(e) => {
                last = e;
                continue;
            }
        };
        inst.seed = seed;
        inst.attempt = attempt;
        match validate(&inst, &c) {
            Ok(()) => return Ok(inst),
            Err(e) => last = e,
        }
    }
    Err(ChartError::ConstraintUnsatisfiable { chart_type, attempts: c.max_attempts, last })
}

/// Check structural constraints and that every template of the chart yields
/// a valid, non-excluded answer with options.
pub fn validate(inst: &ChartInstance, c: &GenerationConstraints) -> Result<(), String> {
    let (y0, y1) = inst.axis.y_range;
    let inside = |v: f64, lo: f64, hi: f64| v >= lo - 1e-9 && v <= hi + 1e-9;
    for v in inst.all_values() {
        if !inside(v, y0, y1) {
            return Err(format!("value {v} outside axis range"));
        }
    }
    if matches!(inst.chart_type, ChartType::StackedBar | ChartType::StackedBar100 | ChartType::StackedArea) {
        for t in inst.totals() {
            if !inside(t, y0, y1) {
                return Err(format!("stack total {t} outside axis range"));
            }
        }
    }
    if let Some((x0, x1)) = inst.axis.x_range {
        if inst.points.iter().any(|p| !inside(p.x, x0, x1)) {
            return Err("point outside x range".into());
        }
    }
    if inst.chart_type == ChartType::StackedBar100 && inst.totals().iter().any(|t| (t - 100.0).abs() > 1e-9) {
        return Err("shares do not sum to 100".into());
    }
    if let Some(tr) = &inst.shaping.trend {
        if let Some(s) = inst.series.iter().find(|s| s.name == tr.series) {
            let span = y1 - y0;
            if qbank::classify_trend(&s.values[tr.start..=tr.end], span) != Some(tr.direction) {
                return Err("trend window does not match the requested direction".into());
            }
        }
    }
    if let Some(cl) = &inst.shaping.cluster {
        let near = |center: (f64, f64)| {
            inst.points
                .iter()
                .filter(|p| qbank::normalized_distance(inst, (p.x, p.y), center) <= cl.radius)
                .count()
        };
        if near(cl.center) < cl.members.len() {
            return Err("planted cluster too sparse".into());
        }
        if cl.stated != cl.center && 2 * near(cl.stated) >= cl.members.len() {
            return Err("decoy location looks like a cluster".into());
        }
    }
    if let Some(a) = c.range_grid_alignment {
        for t in qbank::templates_for(inst.chart_type) {
            if t.task == qbank::TaskType::DetermineRange {
                if let Ok(g) = qbank::derive_answer(t, inst) {
                    if let qbank::Answer::NumericRange { low, high } = g.answer {
                        let on_grid = |v: f64| approx_eq(quantize(v, a), v);
                        if !on_grid(low) || !on_grid(high) {
                            return Err("range endpoints off the alignment grid".into());
                        }
                    }
                }
            }
        }
    }
    let opts = BankOptions { exclusions: c.exclusions.clone(), ..Default::default() };
    for t in qbank::templates_for(inst.chart_type) {
        qbank::build_question(t, inst, &opts).map_err(|e| e.to_string())?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Generators

type Gen = Result<ChartInstance, String>;

fn u(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn band(c: &GenerationConstraints, default: (f64, f64)) -> (f64, f64) {
    c.value_band.unwrap_or(default)
}

fn pick_direction(rng: &mut ChaCha8Rng, c: &GenerationConstraints) -> TrendDirection {
    c.trend.unwrap_or_else(|| match rng.random_range(0..3) {
        0 => TrendDirection::Increasing,
        1 => TrendDirection::Decreasing,
        _ => TrendDirection::Flat,
    })
}

fn pick_sign(rng: &mut ChaCha8Rng, c: &GenerationConstraints) -> f64 {
    match c.trend {
        Some(TrendDirection::Increasing) => 1.0,
        Some(TrendDirection::Decreasing) => -1.0,
        _ => {
            if rng.random_bool(0.5) {
                1.0
            } else {
                -1.0
            }
        }
    }
}

/// Overwrite `values[start..=end]` with a noisy line in `dir` inside `b`.
/// Noise stays within 30% of the total rise.
fn shape_trend(rng: &mut ChaCha8Rng, values: &mut [f64], start: usize, end: usize, dir: TrendDirection, b: (f64, f64)) {
    let span = b.1 - b.0;
    let rise = match dir {
        TrendDirection::Increasing => u(rng, 0.55, 0.8) * span,
        TrendDirection::Decreasing => -u(rng, 0.55, 0.8) * span,
        TrendDirection::Flat => u(rng, -0.01, 0.01) * span,
    };
    let (l_lo, l_hi) = match dir {
        TrendDirection::Increasing => (b.0, b.1 - rise),
        TrendDirection::Decreasing => (b.0 - rise, b.1),
        TrendDirection::Flat => (b.0 + 0.1 * span, b.1 - 0.1 * span),
    };
    let left = u(rng, l_lo, l_hi);
    let amp = match dir {
        TrendDirection::Flat => 0.02 * span,
        _ => 0.15 * rise.abs(),
    };
    let n = (end - start) as f64;
    for k in start..=end {
        let t = (k - start) as f64 / n;
        values[k] = (left + rise * t + u(rng, -amp, amp)).clamp(b.0, b.1);
    }
}

/// Push the extremum away from the runner-up so that the gap is at least
/// `margin` times the spread, staying within `limit`.
fn enforce_extremum(values: &mut [f64], max: bool, margin: f64, res: f64, limit: f64) {
    if values.len() < 2 {
        return;
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(core::cmp::Ordering::Equal));
    if max {
        idx.reverse();
    }
    let second = values[idx[1]];
    let far = values[*idx.last().unwrap()];
    // gap >= margin * (top - far)  =>  top >= (second - margin*far) / (1 - margin) for max
    let need = (second - margin * far) / (1.0 - margin);
    let target = if max {
        libm::ceil(need / res + 1e-9) * res
    } else {
        libm::floor(need / res - 1e-9) * res
    };
    let top = values[idx[0]];
    let ok = if max { top >= target } else { top <= target };
    if !ok && ((max && target <= limit) || (!max && target >= limit)) {
        values[idx[0]] = quantize(target, res);
    }
}

fn quantize_all(values: &mut [f64], res: f64) {
    for v in values.iter_mut() {
        *v = quantize(*v, res);
    }
}

fn align_range(values: &mut [f64], step: Option<f64>, bounds: (f64, f64)) {
    let Some(a) = step else { return };
    if values.is_empty() {
        return;
    }
    let (mut imin, mut imax) = (0, 0);
    for (i, v) in values.iter().enumerate() {
        if *v < values[imin] {
            imin = i;
        }
        if *v > values[imax] {
            imax = i;
        }
    }
    let lo = quantize(libm::floor(values[imin] / a + 1e-9) * a, a);
    let hi = quantize(libm::ceil(values[imax] / a - 1e-9) * a, a);
    if lo >= bounds.0 {
        values[imin] = lo;
    }
    if hi <= bounds.1 {
        values[imax] = hi;
    }
}

fn labels(names: &[&str], kind: EntityKind) -> Vec<EntityLabel> {
    names.iter().map(|n| EntityLabel { name: n.to_string(), kind }).collect()
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn axis(x_title: &str, y_title: &str, y_range: (f64, f64), y_tick: f64, unit: Unit, resolution: f64) -> AxisMeta {
    AxisMeta {
        x_title: x_title.into(),
        y_title: y_title.into(),
        size_title: None,
        x_range: None,
        x_tick: None,
        x_unit: None,
        x_resolution: None,
        y_range,
        y_tick,
        unit,
        resolution,
        bins: Vec::new(),
    }
}

fn shaping(c: &GenerationConstraints, res: f64) -> Shaping {
    Shaping {
        trend: None,
        extremum_margin: c.unique_extremum_margin,
        cluster: None,
        anomaly: None,
        range_alignment: c.range_grid_alignment.unwrap_or(res),
        params: Vec::new(),
    }
}

fn base(ct: ChartType, title: &str, categories: Vec<String>, series: Vec<Series>, axis: AxisMeta, entities: Vec<EntityLabel>, shaping: Shaping) -> ChartInstance {
    ChartInstance {
        chart_type: ct,
        seed: 0,
        attempt: 0,
        title: title.into(),
        categories,
        series,
        points: Vec::new(),
        parents: Vec::new(),
        axis,
        entity_labels: entities,
        context_mode: ContextMode::Contextualized,
        label_map: Vec::new(),
        shaping,
    }
}

fn build(ct: ChartType, rng: &mut ChaCha8Rng, c: &GenerationConstraints) -> Gen {
    match ct {
        ChartType::Line => gen_line(rng, c),
        ChartType::Bar => gen_bar(rng, c),
        ChartType::StackedBar => gen_stacked_bar(rng, c),
        ChartType::StackedBar100 => gen_stacked_bar_100(rng, c),
        ChartType::Pie => gen_pie(rng, c),
        ChartType::Histogram => gen_histogram(rng, c),
        ChartType::Scatterplot => gen_scatter(rng, c),
        ChartType::Area => gen_area(rng, c),
        ChartType::StackedArea => gen_stacked_area(rng, c),
        ChartType::Bubble => gen_bubble(rng, c),
        ChartType::Choropleth => gen_choropleth(rng, c),
        ChartType::Treemap => gen_treemap(rng, c),
    }
}

pub const MONTHS: [&str; 12] = [
    "January", "February", "March", "April", "May", "June", "July", "August", "September", "October",
    "November", "December",
];

fn gen_line(rng: &mut ChaCha8Rng, c: &GenerationConstraints) -> Gen {
    let b = band(c, (20.0, 90.0));
    let res = 1.0;
    let mut v = vec![0.0; 12];
    let mut cur = u(rng, b.0, b.1);
    for x in v.iter_mut().take(6) {
        *x = cur;
        cur = (cur + u(rng, -8.0, 8.0)).clamp(b.0, b.1);
    }
    let dir = pick_direction(rng, c);
    let (_, start, end) = trend_window(ChartType::Line).unwrap();
    shape_trend(rng, &mut v, start, end, dir, b);
    quantize_all(&mut v, res);
    // June must sit below September for the "rise" question.
    if v[8] - v[5] < 3.0 {
        v[5] = quantize((v[8] - u(rng, 5.0, 25.0)).max(b.0), res);
    }
    enforce_extremum(&mut v, false, c.unique_extremum_margin, res, 0.0);
    align_range(&mut v, c.range_grid_alignment, (0.0, 100.0));
    let mut sh = shaping(c, res);
    sh.trend = Some(TrendShape { series: "Oil".into(), start, end, direction: dir });
    Ok(base(
        ChartType::Line,
        "Oil: Price per Barrel in 2015",
        strings(&MONTHS),
        vec![Series { name: "Oil".into(), values: v }],
        axis("Month", "Price per barrel ($)", (0.0, 100.0), 10.0, Unit::Dollar, res),
        labels(&["Oil"], EntityKind::Product),
        sh,
    ))
}

pub const COUNTRIES: [&str; 10] = [
    "China", "India", "Indonesia", "Japan", "Malaysia", "Philippines", "Singapore", "South Korea", "Thailand",
    "Vietnam",
];

fn gen_bar(rng: &mut ChaCha8Rng, c: &GenerationConstraints) -> Gen {
    let b = band(c, (2.0, 34.0));
    let res = 1.0;
    let mut v: Vec<f64> = (0..COUNTRIES.len()).map(|_| quantize(u(rng, b.0, b.1), res)).collect();
    enforce_extremum(&mut v, true, c.unique_extremum_margin, res, 40.0);
    align_range(&mut v, c.range_grid_alignment, (0.0, 40.0));
    Ok(base(
        ChartType::Bar,
        "Average Internet Speed in Asia",
        strings(&COUNTRIES),
        vec![Series { name: "Internet speed".into(), values: v }],
        axis("Country", "Speed (Mbps)", (0.0, 40.0), 5.0, Unit::Mbps, res),
        labels(&COUNTRIES, EntityKind::Country),
        shaping(c, res),
    ))
}

pub const CITIES: [&str; 5] = ["Boston", "Las Vegas", "New York City", "San Francisco", "Seattle"];
pub const ROOM_SERVICE: [&str; 4] = ["Sandwich", "Water", "Peanuts", "Soda"];

fn gen_stacked_bar(rng: &mut ChaCha8Rng, c: &GenerationConstraints) -> Gen {
    let res = 1.0;
    let bands = [(6.0, 20.0), (2.0, 8.0), (2.0, 10.0), (2.0, 12.0)];
    let bands: Vec<(f64, f64)> = match c.value_band {
        Some(b) => vec![b; 4],
        None => bands.to_vec(),
    };
    let mut series = Vec::new();
    for (name, b) in ROOM_SERVICE.iter().zip(&bands) {
        let mut v: Vec<f64> = (0..CITIES.len()).map(|_| quantize(u(rng, b.0, b.1), res)).collect();
        if *name == "Soda" {
            enforce_extremum(&mut v, true, c.unique_extremum_margin, res, b.1 + 4.0);
        }
        series.push(Series { name: name.to_string(), values: v });
    }
    let mut entities = labels(&CITIES, EntityKind::City);
    entities.extend(labels(&ROOM_SERVICE, EntityKind::Product));
    Ok(base(
        ChartType::StackedBar,
        "Cost of Room Service by City",
        strings(&CITIES),
        series,
        axis("City", "Cost ($)", (0.0, 60.0), 10.0, Unit::Dollar, res),
        entities,
        shaping(c, res),
    ))
}

pub const EDUCATION: [&str; 5] = [
    "Less than High School",
    "High School Graduate",
    "Some College Degree",
    "Undergraduate Degree",
    "Postgraduate Study",
];

fn gen_stacked_bar_100(rng: &mut ChaCha8Rng, c: &GenerationConstraints) -> Gen {
    let b = band(c, (20.0, 80.0));
    let res = 1.0;
    let mut d: Vec<f64> = (0..EDUCATION.len()).map(|_| quantize(u(rng, b.0, b.1), res)).collect();
    enforce_extremum(&mut d, false, c.unique_extremum_margin, res, 1.0);
    let r: Vec<f64> = d.iter().map(|x| 100.0 - x).collect();
    Ok(base(
        ChartType::StackedBar100,
        "Party Approval Rating by Education Level",
        strings(&EDUCATION),
        vec![
            Series { name: "Democrats".into(), values: d },
            Series { name: "Republicans".into(), values: r },
        ],
        axis("Education level", "Approval rating (%)", (0.0, 100.0), 10.0, Unit::Percent, res),
        labels(&["Democrats", "Republicans"], EntityKind::Party),
        shaping(c, res),
    ))
}

pub const COMPANIES: [&str; 5] = ["Samsung", "Apple", "Huawei", "Xiaomi", "Lenovo"];

/// Integer shares summing to 100 by largest remainder.
fn integer_shares(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let raw: Vec<f64> = weights.iter().map(|w| 100.0 * w / total).collect();
    let mut out: Vec<f64> = raw.iter().map(|x| libm::floor(*x)).collect();
    let mut left = 100 - out.iter().sum::<f64>() as i64;
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| {
        (raw[b] - out[b]).partial_cmp(&(raw[a] - out[a])).unwrap_or(core::cmp::Ordering::Equal)
    });
    for i in order {
        if left <= 0 {
            break;
        }
        out[i] += 1.0;
        left -= 1;
    }
    out
}

fn gen_pie(rng: &mut ChaCha8Rng, c: &GenerationConstraints) -> Gen {
    let b = band(c, (1.0, 4.0));
    let w: Vec<f64> = (0..COMPANIES.len()).map(|_| u(rng, b.0, b.1)).collect();
    let v = integer_shares(&w);
    if v.iter().any(|x| *x < 3.0) {
        return Err("slice too thin".into());
    }
    Ok(base(
        ChartType::Pie,
        "Global Smartphone Market Share (%)",
        strings(&COMPANIES),
        vec![Series { name: "Market share".into(), values: v }],
        axis("Company", "Market share (%)", (0.0, 100.0), 10.0, Unit::Percent, 1.0),
        labels(&COMPANIES, EntityKind::Company),
        shaping(c, 1.0),
    ))
}

pub fn rating_bins() -> Vec<(f64, f64)> {
    (0..5).map(|i| (quantize(4.0 + 0.2 * i as f64, 0.1), quantize(4.2 + 0.2 * i as f64, 0.1))).collect()
}

fn gen_histogram(rng: &mut ChaCha8Rng, c: &GenerationConstraints) -> Gen {
    let b = band(c, (1.0, 20.0));
    let res = 1.0;
    let bins = rating_bins();
    let mut v: Vec<f64> = bins.iter().map(|_| quantize(u(rng, b.0, b.1), res)).collect();
    enforce_extremum(&mut v, true, c.unique_extremum_margin, res, 25.0);
    let cats = bins.iter().map(|(lo, hi)| format_range(*lo, *hi, Unit::Rating, 1)).collect();
    let mut ax = axis("Rating", "Number of people", (0.0, 25.0), 5.0, Unit::Count, res);
    ax.x_range = Some((4.0, 5.0));
    ax.x_tick = Some(0.2);
    ax.x_unit = Some(Unit::Rating);
    ax.x_resolution = Some(0.1);
    ax.bins = bins;
    Ok(base(
        ChartType::Histogram,
        "Taxi Passenger Ratings",
        cats,
        vec![Series { name: "Number of people".into(), values: v }],
        ax,
        Vec::new(),
        shaping(c, res),
    ))
}

/// Shared layout of the two point charts.
struct PointPlan {
    x_band: (f64, f64),
    x_range: (f64, f64),
    y_range: (f64, f64),
    x_res: f64,
    y_res: f64,
    slope: f64,
    pivot: f64,
    level: f64,
    noise: f64,
    center_step: f64,
}

impl PointPlan {
    fn line(&self, x: f64) -> f64 {
        self.level + self.slope * (x - self.pivot)
    }
    fn norm_dist(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        let dx = (a.0 - b.0) / (self.x_range.1 - self.x_range.0);
        let dy = (a.1 - b.1) / (self.y_range.1 - self.y_range.0);
        libm::sqrt(dx * dx + dy * dy)
    }
}

/// Plant cluster members around a center on the fitted line and pick a
/// stated location; returns (points, center, stated).
fn plant_cluster(
    rng: &mut ChaCha8Rng,
    pp: &PointPlan,
    spec: &ClusterSpec,
    center_band: (f64, f64),
    decoy_offset: (f64, f64),
) -> Result<(Vec<(f64, f64)>, (f64, f64), (f64, f64)), String> {
    let center = match spec.center {
        Some(cn) => cn,
        None => {
            let cx = libm::round(u(rng, center_band.0, center_band.1) / pp.center_step) * pp.center_step;
            let cy = libm::round(pp.line(cx) / pp.center_step) * pp.center_step;
            (cx, cy)
        }
    };
    let xs = pp.x_range.1 - pp.x_range.0;
    let ys = pp.y_range.1 - pp.y_range.0;
    let hx = 0.6 * spec.radius * xs;
    let hy = 0.6 * spec.radius * ys;
    let members: Vec<(f64, f64)> = (0..spec.members)
        .map(|_| {
            (
                quantize(center.0 + u(rng, -hx, hx), pp.x_res),
                quantize(center.1 + u(rng, -hy, hy), pp.y_res),
            )
        })
        .collect();
    let truthful = spec.statement_true.unwrap_or_else(|| rng.random_bool(0.5));
    let stated = if truthful {
        center
    } else {
        let mut found = None;
        for _ in 0..50 {
            let dx = libm::round(u(rng, pp.x_band.0, pp.x_band.1) / pp.center_step) * pp.center_step;
            let off = u(rng, decoy_offset.0, decoy_offset.1) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let dy = libm::round((pp.line(dx) + off) / pp.center_step) * pp.center_step;
            let cand = (dx, dy);
            if dy > pp.y_range.0 && dy < pp.y_range.1 && pp.norm_dist(cand, center) >= 4.0 * spec.radius {
                found = Some(cand);
                break;
            }
        }
        found.ok_or("no decoy location")?
    };
    Ok((members, center, stated))
}

fn gen_scatter(rng: &mut ChaCha8Rng, c: &GenerationConstraints) -> Gen {
    const N: usize = 85;
    let sign = pick_sign(rng, c);
    let pp = PointPlan {
        x_band: band(c, (160.0, 195.0)),
        x_range: (155.0, 200.0),
        y_range: (40.0, 120.0),
        x_res: 0.1,
        y_res: 0.1,
        slope: sign * u(rng, 0.5, 0.9),
        pivot: 177.5,
        level: u(rng, 68.0, 78.0),
        noise: 4.0,
        center_step: 1.0,
    };
    let spec = c.cluster.clone().unwrap_or_else(|| default_cluster(ChartType::Scatterplot));
    let multiple = c.anomaly.as_ref().map(|a| a.multiple).unwrap_or(3.0);
    let (members, center, stated) = plant_cluster(rng, &pp, &spec, (166.0, 188.0), (12.0, 20.0))?;

    // Same-height group.
    let same_h = libm::round(u(rng, 168.0, 192.0));
    let k = rng.random_range(2..=3);
    let all_equal = rng.random_bool(0.5);
    let w0 = quantize(pp.line(same_h) + u(rng, -3.0, 3.0), pp.y_res);
    let group: Vec<(f64, f64)> = (0..k)
        .map(|i| {
            if all_equal || i == 0 {
                (same_h, w0)
            } else {
                let off = (i as f64) * u(rng, 3.0, 6.0) * if i % 2 == 0 { 1.0 } else { -1.0 };
                (same_h, quantize(w0 + off, pp.y_res))
            }
        })
        .collect();

    // Anomaly well off the line.
    let ax = quantize(u(rng, pp.x_band.0, pp.x_band.1), pp.x_res);
    let mut off = u(rng, 25.0, 32.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    if pp.line(ax) + off > pp.y_range.1 || pp.line(ax) + off < pp.y_range.0 {
        off = -off;
    }
    let anomaly = (ax, quantize(pp.line(ax) + off, pp.y_res));

    let n_bg = N - members.len() - group.len() - 1;
    let mut bg: Vec<(f64, f64)> = (0..n_bg)
        .map(|_| {
            let x = quantize(u(rng, pp.x_band.0, pp.x_band.1), pp.x_res);
            (x, quantize(pp.line(x) + u(rng, -pp.noise, pp.noise), pp.y_res))
        })
        .collect();
    // Tallest person stands clear of the runner-up.
    let mut xs: Vec<f64> = bg.iter().chain(&members).chain(&group).map(|p| p.0).chain([anomaly.0]).collect();
    let before = xs.clone();
    enforce_extremum(&mut xs, true, c.unique_extremum_margin, pp.x_res, pp.x_range.1);
    for (i, (a, b)) in before.iter().zip(&xs).enumerate() {
        if i < bg.len() && !approx_eq(*a, *b) {
            bg[i] = (*b, quantize(bg[i].1 + pp.slope * (b - a), pp.y_res));
        }
    }
    let mut fixed: Vec<(f64, f64)> = Vec::with_capacity(N);
    fixed.extend(bg.iter().copied());
    fixed.extend(members.iter().copied());
    fixed.push(anomaly);
    // Only the group may sit exactly at the probed height.
    for p in fixed.iter_mut() {
        if approx_eq(p.0, same_h) {
            p.0 = quantize(p.0 + pp.x_res, pp.x_res);
        }
    }
    // A person whose height nobody else shares, for the value lookup.
    let mut order: Vec<usize> = (0..bg.len()).collect();
    order.shuffle(rng);
    let all_x: Vec<f64> = fixed.iter().map(|p| p.0).chain(group.iter().map(|p| p.0)).collect();
    let probe = order
        .into_iter()
        .find(|&i| all_x.iter().enumerate().all(|(j, x)| j == i || (x - fixed[i].0).abs() >= 0.5))
        .ok_or("no distinct height to probe")?;
    let rv_height = fixed[probe].0;

    // Assemble and shuffle, keeping track of roles.
    let mut tagged: Vec<((f64, f64), u8)> = Vec::with_capacity(N);
    for (i, p) in fixed.iter().enumerate() {
        let role = if i < bg.len() {
            0
        } else if i < bg.len() + members.len() {
            1
        } else {
            2
        };
        tagged.push((*p, role));
    }
    tagged.extend(group.iter().map(|p| (*p, 3)));
    tagged.shuffle(rng);
    let points: Vec<DataPoint> = tagged
        .iter()
        .map(|((x, y), _)| DataPoint { label: None, x: *x, y: *y, size: None })
        .collect();
    let member_idx: Vec<usize> = tagged.iter().enumerate().filter(|(_, t)| t.1 == 1).map(|(i, _)| i).collect();
    let anomaly_idx = tagged.iter().position(|t| t.1 == 2).unwrap_or(0);

    let mut ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    let mut points = points;
    if c.range_grid_alignment.is_some() {
        align_range(&mut ys, c.range_grid_alignment, pp.y_range);
        for (p, y) in points.iter_mut().zip(ys) {
            p.y = y;
        }
    }

    let mut ax_meta = axis("Height (cm)", "Weight (kg)", pp.y_range, 10.0, Unit::Kilogram, pp.y_res);
    ax_meta.x_range = Some(pp.x_range);
    ax_meta.x_tick = Some(5.0);
    ax_meta.x_unit = Some(Unit::Centimeter);
    ax_meta.x_resolution = Some(pp.x_res);
    let mut sh = shaping(c, pp.y_res);
    sh.cluster = Some(ClusterShape { center, radius: spec.radius, members: member_idx, stated });
    sh.anomaly = Some(AnomalyShape { index: anomaly_idx, multiple });
    sh.params = vec![
        ("rv_height".into(), rv_height),
        ("same_height".into(), same_h),
        ("cluster_x".into(), stated.0),
        ("cluster_y".into(), stated.1),
    ];
    let mut inst = base(ChartType::Scatterplot, "Height and Weight of 85 Males", Vec::new(), Vec::new(), ax_meta, Vec::new(), sh);
    inst.points = points;
    Ok(inst)
}

pub fn coffee_months() -> Vec<String> {
    const ABBR: [&str; 12] = ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"];
    let mut out = Vec::new();
    for year in [2013, 2014] {
        for m in ABBR {
            out.push(format!("{m} {year}"));
        }
    }
    out
}

fn gen_area(rng: &mut ChaCha8Rng, c: &GenerationConstraints) -> Gen {
    let b = band(c, (2.0, 8.0));
    let res = 0.01;
    let mut v = vec![0.0; 24];
    let dir = pick_direction(rng, c);
    let (_, start, end) = trend_window(ChartType::Area).unwrap();
    shape_trend(rng, &mut v, start, end, dir, b);
    let mut cur = v[11];
    for x in v.iter_mut().skip(12) {
        cur = (cur + u(rng, -0.4, 0.4)).clamp(b.0, b.1);
        *x = cur;
    }
    quantize_all(&mut v, res);
    enforce_extremum(&mut v, false, c.unique_extremum_margin, res, 0.5);
    align_range(&mut v, c.range_grid_alignment, (0.0, 10.0));
    let mut sh = shaping(c, res);
    sh.trend = Some(TrendShape { series: "Coffee beans".into(), start, end, direction: dir });
    Ok(base(
        ChartType::Area,
        "Coffee beans: Average Price per Pound",
        coffee_months(),
        vec![Series { name: "Coffee beans".into(), values: v }],
        axis("Month", "Price per pound ($)", (0.0, 10.0), 1.0, Unit::Dollar, res),
        labels(&["Coffee beans"], EntityKind::Product),
        sh,
    ))
}

pub const GIRL_NAMES: [&str; 3] = ["Amelia", "Isla", "Olivia"];
pub const YEARS: [&str; 6] = ["2009", "2010", "2011", "2012", "2013", "2014"];

fn gen_stacked_area(rng: &mut ChaCha8Rng, c: &GenerationConstraints) -> Gen {
    let b = band(c, (1000.0, 6000.0));
    let res = 10.0;
    let n = YEARS.len();
    let mut amelia: Vec<f64> = (0..n).map(|_| u(rng, b.0, b.1)).collect();
    let mut isla: Vec<f64> = (0..n).map(|_| u(rng, b.0, b.1)).collect();
    let dir = pick_direction(rng, c);
    let (_, start, end) = trend_window(ChartType::StackedArea).unwrap();
    shape_trend(rng, &mut isla, start, end, dir, b);
    quantize_all(&mut amelia, res);
    quantize_all(&mut isla, res);
    let always = rng.random_bool(0.5);
    let mut olivia: Vec<f64> = if always {
        isla.iter().map(|x| (x - u(rng, 300.0, 2000.0)).max(b.0 * 0.5)).collect()
    } else {
        let mut o: Vec<f64> = (0..n).map(|_| u(rng, b.0, b.1)).collect();
        let j = rng.random_range(0..n);
        o[j] = (isla[j] + u(rng, 300.0, 1500.0)).min(b.1 + 500.0);
        o
    };
    quantize_all(&mut olivia, res);
    enforce_extremum(&mut amelia, true, c.unique_extremum_margin, res, b.1 + 1000.0);
    align_range(&mut amelia, c.range_grid_alignment, (0.0, 20000.0));
    let mut sh = shaping(c, res);
    sh.trend = Some(TrendShape { series: "Isla".into(), start, end, direction: dir });
    Ok(base(
        ChartType::StackedArea,
        "Popular Girls' Names in the UK",
        strings(&YEARS),
        vec![
            Series { name: "Amelia".into(), values: amelia },
            Series { name: "Isla".into(), values: isla },
            Series { name: "Olivia".into(), values: olivia },
        ],
        axis("Year", "Number of girls", (0.0, 20000.0), 2000.0, Unit::Count, res),
        labels(&GIRL_NAMES, EntityKind::Name),
        sh,
    ))
}

pub const METRO_CITIES: [&str; 12] = [
    "Beijing", "Shanghai", "London", "New York City", "Paris", "Tokyo", "Moscow", "Seoul", "Madrid", "Guangzhou",
    "Mexico City", "Delhi",
];

fn gen_bubble(rng: &mut ChaCha8Rng, c: &GenerationConstraints) -> Gen {
    let sign = pick_sign(rng, c);
    let pp = PointPlan {
        x_band: band(c, (60.0, 440.0)),
        x_range: (0.0, 500.0),
        y_range: (0.0, 700.0),
        x_res: 1.0,
        y_res: 1.0,
        slope: u(rng, 1.0, 1.3),
        pivot: 0.0,
        level: u(rng, 0.0, 30.0),
        noise: 25.0,
        center_step: 10.0,
    };
    let spec = c.cluster.clone().unwrap_or_else(|| default_cluster(ChartType::Bubble));
    let multiple = c.anomaly.as_ref().map(|a| a.multiple).unwrap_or(3.0);
    if spec.members + 2 > METRO_CITIES.len() {
        return Err("cluster larger than the city list".into());
    }
    let (members, center, stated) = plant_cluster(rng, &pp, &spec, (150.0, 300.0), (120.0, 180.0))?;

    let ax = quantize(u(rng, pp.x_band.0, pp.x_band.1), pp.x_res);
    let mut off = u(rng, 170.0, 230.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    if pp.line(ax) + off > pp.y_range.1 - 20.0 || pp.line(ax) + off < pp.y_range.0 + 20.0 {
        off = -off;
    }
    let anomaly = (ax, quantize(pp.line(ax) + off, pp.y_res));

    let n_bg = METRO_CITIES.len() - members.len() - 1;
    let mut bg = Vec::with_capacity(n_bg);
    while bg.len() < n_bg {
        let x = quantize(u(rng, pp.x_band.0, pp.x_band.1), pp.x_res);
        let p = (x, quantize(pp.line(x) + u(rng, -pp.noise, pp.noise), pp.y_res));
        if pp.norm_dist(p, center) > 2.5 * spec.radius && pp.norm_dist(p, stated) > 1.5 * spec.radius {
            bg.push(p);
        }
    }
    let mut coords: Vec<(f64, f64)> = members.clone();
    coords.push(anomaly);
    coords.extend(bg);
    let mut xs: Vec<f64> = coords.iter().map(|p| p.0).collect();
    let before = xs.clone();
    enforce_extremum(&mut xs, true, c.unique_extremum_margin, pp.x_res, pp.x_range.1 - 10.0);
    for (i, (a, b)) in before.iter().zip(&xs).enumerate() {
        if !approx_eq(*a, *b) {
            coords[i] = (*b, quantize(coords[i].1 + pp.slope * (b - a), pp.y_res));
        }
    }

    let (size_lo, size_hi) = (100.0, 3500.0);
    let d = sign * u(rng, 4.0, 7.0);
    let c0 = if sign > 0.0 { u(rng, 0.0, 300.0) } else { 3400.0 - u(rng, 0.0, 300.0) };
    let mut names: Vec<&str> = METRO_CITIES.to_vec();
    names.shuffle(rng);
    let mut points: Vec<DataPoint> = coords
        .iter()
        .zip(&names)
        .map(|((x, y), name)| {
            let s = (c0 + d * x + u(rng, -250.0, 250.0)).clamp(size_lo, size_hi);
            DataPoint { label: Some(name.to_string()), x: *x, y: *y, size: Some(quantize(s, 10.0)) }
        })
        .collect();
    if c.range_grid_alignment.is_some() {
        let mut ys: Vec<f64> = points.iter().map(|p| p.y).collect();
        align_range(&mut ys, c.range_grid_alignment, pp.y_range);
        for (p, y) in points.iter_mut().zip(ys) {
            p.y = y;
        }
    }
    // Present cities in a fixed order; roles stay hidden in the data.
    let mut ordered: Vec<DataPoint> = Vec::with_capacity(points.len());
    for name in METRO_CITIES {
        if let Some(p) = points.iter().find(|p| p.label.as_deref() == Some(name)) {
            ordered.push(p.clone());
        }
    }
    let pos = |name: &str| ordered.iter().position(|p| p.label.as_deref() == Some(name)).unwrap_or(0);
    let member_idx: Vec<usize> = names.iter().take(members.len()).map(|n| pos(n)).collect();
    let anomaly_idx = pos(names[members.len()]);

    let mut ax_meta = axis("Number of stations", "System length (km)", pp.y_range, 100.0, Unit::Kilometer, pp.y_res);
    ax_meta.size_title = Some("Annual ridership (millions)".into());
    ax_meta.x_range = Some(pp.x_range);
    ax_meta.x_tick = Some(100.0);
    ax_meta.x_unit = Some(Unit::Count);
    ax_meta.x_resolution = Some(pp.x_res);
    let mut sh = shaping(c, pp.y_res);
    sh.cluster = Some(ClusterShape { center, radius: spec.radius, members: member_idx, stated });
    sh.anomaly = Some(AnomalyShape { index: anomaly_idx, multiple });
    sh.params = vec![("cluster_x".into(), stated.0), ("cluster_y".into(), stated.1)];
    let mut inst = base(
        ChartType::Bubble,
        "Metro Systems of the World",
        Vec::new(),
        Vec::new(),
        ax_meta,
        labels(&METRO_CITIES, EntityKind::City),
        sh,
    );
    inst.points = ordered;
    Ok(inst)
}

pub fn unemployment_bins() -> Vec<(f64, f64)> {
    (0..5).map(|i| (2.0 + i as f64, 3.0 + i as f64)).collect()
}

fn gen_choropleth(rng: &mut ChaCha8Rng, c: &GenerationConstraints) -> Gen {
    let res = 0.1;
    let tiles = state_tiles();
    let b = band(c, (2.0, 5.9));
    let mut v: Vec<f64> = tiles.iter().map(|_| quantize(u(rng, b.0, b.1), res)).collect();
    let az = tiles.iter().position(|t| t.code == "AZ").ok_or("missing AZ")?;
    let ok = tiles.iter().position(|t| t.code == "OK").ok_or("missing OK")?;
    let bins = unemployment_bins();
    let bin = |x: f64| libm::floor(x.min(6.999) - 2.0) as i64;
    for _ in 0..50 {
        if bin(v[az]) != bin(v[ok]) {
            break;
        }
        v[ok] = quantize(u(rng, b.0, b.1), res);
    }
    let top = rng.random_range(0..tiles.len());
    let others_max = v.iter().enumerate().filter(|(i, _)| *i != top).map(|(_, x)| *x).fold(f64::MIN, f64::max);
    let others_min = v.iter().enumerate().filter(|(i, _)| *i != top).map(|(_, x)| *x).fold(f64::MAX, f64::min);
    let m = c.unique_extremum_margin;
    let need = ((others_max - m * others_min) / (1.0 - m)).max(6.0);
    let need = libm::ceil(need / res - 1e-9) * res;
    if need > 7.0 {
        return Err("no room for an isolated maximum".into());
    }
    v[top] = quantize(u(rng, need, 7.0 + 1e-9).min(7.0), res);
    let mut ax = axis("", "Unemployment rate (%)", (2.0, 7.0), 1.0, Unit::Percent, res);
    ax.bins = bins;
    Ok(base(
        ChartType::Choropleth,
        "Unemployment Rate by State, 2015",
        tiles.iter().map(|t| t.code.clone()).collect(),
        vec![Series { name: "Unemployment rate".into(), values: v }],
        ax,
        tiles.iter().map(|t| EntityLabel { name: t.code.clone(), kind: EntityKind::State }).collect(),
        shaping(c, res),
    ))
}

pub const WEBSITES: [&str; 12] = [
    "Google", "Yahoo", "Bing", "Ask", "Microsoft", "Apple", "Amazon", "eBay", "Target", "Walmart", "Facebook",
    "Twitter",
];
pub const WEB_CATEGORIES: [&str; 4] = ["Search", "Computer", "Retail", "Social"];

fn gen_treemap(rng: &mut ChaCha8Rng, c: &GenerationConstraints) -> Gen {
    let b = band(c, (10.0, 200.0));
    let res = 1.0;
    let mut sites: Vec<&str> = WEBSITES.to_vec();
    sites.shuffle(rng);
    let mut parent_of: BTreeMap<&str, &str> = BTreeMap::new();
    for (i, s) in sites.iter().enumerate() {
        let p = if i < 2 * WEB_CATEGORIES.len() {
            WEB_CATEGORIES[i / 2]
        } else {
            WEB_CATEGORIES[rng.random_range(0..WEB_CATEGORIES.len())]
        };
        parent_of.insert(s, p);
    }
    // Leaves grouped by category, in fixed order within each group.
    let mut cats = Vec::new();
    let mut parents = Vec::new();
    for p in WEB_CATEGORIES {
        for s in WEBSITES {
            if parent_of[s] == p {
                cats.push(s.to_string());
                parents.push(p.to_string());
            }
        }
    }
    let mut v: Vec<f64> = cats.iter().map(|_| quantize(u(rng, b.0, b.1 * 0.8), res)).collect();
    enforce_extremum(&mut v, true, c.unique_extremum_margin, res, 200.0);
    let entities = cats.iter().map(|s| EntityLabel { name: s.clone(), kind: EntityKind::Website }).collect();
    let mut inst = base(
        ChartType::Treemap,
        "Unique Visitors by Website in 2010 (millions)",
        cats,
        vec![Series { name: "Unique visitors".into(), values: v }],
        axis("", "Unique visitors (millions)", (0.0, 200.0), 50.0, Unit::Millions, res),
        entities,
        shaping(c, res),
    );
    inst.parents = parents;
    Ok(inst)
}

// ---------------------------------------------------------------------------
// Decontextualization

fn replace_all(text: &str, map: &[(String, String)]) -> String {
    // Longest names first so "New York City" wins over any shorter overlap.
    let mut order: Vec<&(String, String)> = map.iter().collect();
    order.sort_by(|a, b| b.0.len().cmp(&a.0.len()));
    let mut out = text.to_string();
    for (from, to) in order {
        out = out.replace(from.as_str(), to);
    }
    out
}

/// Replace proper nouns with generic labels. Returns the new instance and
/// the original → generic mapping.
pub fn decontextualize(inst: &ChartInstance) -> Result<(ChartInstance, Vec<(String, String)>), ChartError> {
    if !inst.chart_type.decontextualizable() {
        return Err(ChartError::NotDecontextualizable(inst.chart_type));
    }
    if inst.context_mode == ContextMode::Decontextualized {
        return Ok((inst.clone(), inst.label_map.clone()));
    }
    let mut counters: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut map: Vec<(String, String)> = Vec::new();
    for e in &inst.entity_labels {
        let prefix = e.kind.generic_prefix();
        let n = counters.entry(prefix).or_insert(0);
        *n += 1;
        let generic = if e.kind == EntityKind::Party {
            format!("{prefix} {}", (b'A' + (*n as u8 - 1)) as char)
        } else {
            format!("{prefix} {n}")
        };
        map.push((e.name.clone(), generic));
    }
    let lookup = |s: &str| map.iter().find(|(o, _)| o == s).map(|(_, g)| g.clone()).unwrap_or_else(|| s.to_string());
    let mut out = inst.clone();
    out.title = replace_all(&inst.title, &map);
    out.categories = inst.categories.iter().map(|s| lookup(s)).collect();
    for s in out.series.iter_mut() {
        s.name = lookup(&s.name);
    }
    for p in out.points.iter_mut() {
        p.label = p.label.as_deref().map(lookup);
    }
    for e in out.entity_labels.iter_mut() {
        e.name = lookup(&e.name);
    }
    if let Some(t) = out.shaping.trend.as_mut() {
        t.series = lookup(&t.series);
    }
    out.context_mode = ContextMode::Decontextualized;
    out.label_map = map.clone();
    Ok((out, map))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shares_sum_to_hundred() {
        let s = integer_shares(&[1.0, 2.0, 3.3, 0.7, 1.1]);
        assert_eq!(s.iter().sum::<f64>(), 100.0);
    }

    #[test]
    fn margin_enforcement() {
        let mut v = vec![10.0, 30.0, 29.0, 5.0];
        enforce_extremum(&mut v, true, 0.1, 1.0, 100.0);
        assert!(v[1] - 29.0 >= 0.1 * (v[1] - 5.0));
        let mut w = vec![10.0, 11.0, 30.0];
        enforce_extremum(&mut w, false, 0.1, 1.0, 0.0);
        assert!(11.0 - w[0] >= 0.1 * (30.0 - w[0]));
    }

    #[test]
    fn incompatible_pairs() {
        let cl = GenerationConstraints { cluster: Some(default_cluster(ChartType::Scatterplot)), ..Default::default() };
        assert!(matches!(generate_chart(ChartType::Bar, 1, &cl), Err(ChartError::IncompatibleConstraint { .. })));
        let tr = GenerationConstraints { trend: Some(TrendDirection::Flat), ..Default::default() };
        assert!(matches!(generate_chart(ChartType::Scatterplot, 1, &tr), Err(ChartError::IncompatibleConstraint { .. })));
        let tp = GenerationConstraints { trend: Some(TrendDirection::Increasing), ..Default::default() };
        assert!(matches!(generate_chart(ChartType::Pie, 1, &tp), Err(ChartError::IncompatibleConstraint { .. })));
        let an = GenerationConstraints { anomaly: Some(AnomalySpec { multiple: 1.0 }), ..Default::default() };
        assert!(matches!(generate_chart(ChartType::Bubble, 1, &an), Err(ChartError::IncompatibleConstraint { .. })));
    }

    #[test]
    fn every_type_generates() {
        for ct in ChartType::ALL {
            let inst = generate_chart(ct, 42, &GenerationConstraints::default()).unwrap();
            assert_eq!(inst.chart_type, ct);
        }
    }

    #[test]
    fn decontext_cities() {
        let inst = generate_chart(ChartType::StackedBar, 3, &GenerationConstraints::default()).unwrap();
        let (d, map) = decontextualize(&inst).unwrap();
        assert_eq!(d.categories, vec!["City 1", "City 2", "City 3", "City 4", "City 5"]);
        assert_eq!(map[0], ("Boston".to_string(), "City 1".to_string()));
        assert_eq!(d.series[0].name, "Product 1");
        let (again, _) = decontextualize(&d).unwrap();
        assert_eq!(again, d);
        let party = generate_chart(ChartType::StackedBar100, 3, &GenerationConstraints::default()).unwrap();
        let (dp, _) = decontextualize(&party).unwrap();
        assert_eq!(dp.series[1].name, "Party B");
    }
}
