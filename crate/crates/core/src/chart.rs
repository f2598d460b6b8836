//! Chart data model shared by generation, the item bank and rendering.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

/// The twelve chart types of the test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChartType {
    Line,
    Bar,
    StackedBar,
    StackedBar100,
    Pie,
    Histogram,
    Scatterplot,
    Area,
    StackedArea,
    Bubble,
    Choropleth,
    Treemap,
}

impl ChartType {
    pub const ALL: [ChartType; 12] = [
        ChartType::Line,
        ChartType::Bar,
        ChartType::StackedBar,
        ChartType::StackedBar100,
        ChartType::Pie,
        ChartType::Histogram,
        ChartType::Scatterplot,
        ChartType::Area,
        ChartType::StackedArea,
        ChartType::Bubble,
        ChartType::Choropleth,
        ChartType::Treemap,
    ];

    /// Stable serialized name, also used in file names.
    pub fn as_str(self) -> &'static str {
        match self {
            ChartType::Line => "line",
            ChartType::Bar => "bar",
            ChartType::StackedBar => "stacked-bar",
            ChartType::StackedBar100 => "stacked-bar-100",
            ChartType::Pie => "pie",
            ChartType::Histogram => "histogram",
            ChartType::Scatterplot => "scatterplot",
            ChartType::Area => "area",
            ChartType::StackedArea => "stacked-area",
            ChartType::Bubble => "bubble",
            ChartType::Choropleth => "choropleth",
            ChartType::Treemap => "treemap",
        }
    }

    /// Human-readable name used in tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ChartType::Line => "Line Chart",
            ChartType::Bar => "Bar Chart",
            ChartType::StackedBar => "Stacked Bar Chart",
            ChartType::StackedBar100 => "100% Stacked Bar Chart",
            ChartType::Pie => "Pie Chart",
            ChartType::Histogram => "Histogram",
            ChartType::Scatterplot => "Scatterplot",
            ChartType::Area => "Area Chart",
            ChartType::StackedArea => "Stacked Area Chart",
            ChartType::Bubble => "Bubble Chart",
            ChartType::Choropleth => "Choropleth Map",
            ChartType::Treemap => "Treemap",
        }
    }

    pub fn index(self) -> usize {
        ChartType::ALL.iter().position(|c| *c == self).unwrap_or(0)
    }

    pub fn parse(s: &str) -> Option<ChartType> {
        ChartType::ALL.iter().copied().find(|c| c.as_str() == s)
    }

    /// Chart types whose labels carry geographic or physical meaning that
    /// cannot be replaced by placeholders.
    pub fn decontextualizable(self) -> bool {
        !matches!(
            self,
            ChartType::Histogram | ChartType::Scatterplot | ChartType::Choropleth
        )
    }
}

impl fmt::Display for ChartType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextMode {
    Contextualized,
    Decontextualized,
}

impl ContextMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ContextMode::Contextualized => "contextualized",
            ContextMode::Decontextualized => "decontextualized",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrendDirection {
    Increasing,
    Decreasing,
    Flat,
}

impl TrendDirection {
    /// Answer token; a flat series is reported as "constant".
    pub fn as_answer(self) -> &'static str {
        match self {
            TrendDirection::Increasing => "increasing",
            TrendDirection::Decreasing => "decreasing",
            TrendDirection::Flat => "constant",
        }
    }

    pub fn from_answer(s: &str) -> Option<TrendDirection> {
        match s {
            "increasing" => Some(TrendDirection::Increasing),
            "decreasing" => Some(TrendDirection::Decreasing),
            "constant" | "flat" => Some(TrendDirection::Flat),
            _ => None,
        }
    }
}

/// Measurement unit of a quantity; drives formatting of options and axis titles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Unit {
    Dollar,
    Percent,
    Mbps,
    Centimeter,
    Kilogram,
    Kilometer,
    Count,
    Ratio,
    Rating,
    Millions,
}

impl Unit {
    pub fn prefix(self) -> &'static str {
        match self {
            Unit::Dollar => "$",
            _ => "",
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            Unit::Percent => "%",
            Unit::Mbps => " Mbps",
            Unit::Centimeter => " cm",
            Unit::Kilogram => " kg",
            Unit::Kilometer => " km",
            Unit::Millions => "M",
            _ => "",
        }
    }
}

/// A named series aligned with [`ChartInstance::categories`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

/// One mark of a scatterplot, bubble chart or histogram sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub label: Option<String>,
    pub x: f64,
    pub y: f64,
    pub size: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisMeta {
    pub x_title: String,
    pub y_title: String,
    /// Title of the bubble-size encoding.
    pub size_title: Option<String>,
    /// Numeric x range for point charts.
    pub x_range: Option<(f64, f64)>,
    pub x_tick: Option<f64>,
    pub x_unit: Option<Unit>,
    pub x_resolution: Option<f64>,
    pub y_range: (f64, f64),
    pub y_tick: f64,
    pub unit: Unit,
    /// Granularity every value is quantized to.
    pub resolution: f64,
    /// Histogram bins or choropleth color classes, as closed-open intervals
    /// (the last one closed).
    pub bins: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntityKind {
    City,
    Country,
    Company,
    Party,
    Product,
    Website,
    Name,
    State,
}

impl EntityKind {
    pub fn generic_prefix(self) -> &'static str {
        match self {
            EntityKind::City => "City",
            EntityKind::Country => "Country",
            EntityKind::Company => "Company",
            EntityKind::Party => "Party",
            EntityKind::Product => "Product",
            EntityKind::Website => "Website",
            EntityKind::Name => "Name",
            EntityKind::State => "State",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityLabel {
    pub name: String,
    pub kind: EntityKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendShape {
    pub series: String,
    pub start: usize,
    /// Inclusive end index.
    pub end: usize,
    pub direction: TrendDirection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterShape {
    pub center: (f64, f64),
    /// Radius in axis-normalized units (fraction of each axis span).
    pub radius: f64,
    pub members: Vec<usize>,
    /// Center named in the cluster statement; equals `center` when the
    /// statement is true.
    pub stated: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyShape {
    pub index: usize,
    pub multiple: f64,
}

/// Record of the constraints applied while generating a chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shaping {
    pub trend: Option<TrendShape>,
    pub extremum_margin: f64,
    pub cluster: Option<ClusterShape>,
    pub anomaly: Option<AnomalyShape>,
    pub range_alignment: f64,
    /// Values substituted into question stems (e.g. a probed height).
    pub params: Vec<(String, f64)>,
}

impl Shaping {
    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

/// One generated chart with its raw data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartInstance {
    pub chart_type: ChartType,
    pub seed: u64,
    /// Number of regeneration steps taken past `seed`.
    pub attempt: u32,
    pub title: String,
    pub categories: Vec<String>,
    pub series: Vec<Series>,
    pub points: Vec<DataPoint>,
    /// Treemap parent category per entry of `categories`.
    pub parents: Vec<String>,
    pub axis: AxisMeta,
    pub entity_labels: Vec<EntityLabel>,
    pub context_mode: ContextMode,
    /// Original label to generic label, filled by decontextualization.
    pub label_map: Vec<(String, String)>,
    pub shaping: Shaping,
}

impl ChartInstance {
    /// Current label for an entity named by its original (contextual) name.
    pub fn resolve<'a>(&'a self, original: &'a str) -> &'a str {
        self.label_map
            .iter()
            .find(|(o, _)| o == original)
            .map(|(_, g)| g.as_str())
            .unwrap_or(original)
    }

    pub fn series_named(&self, original: &str) -> Option<&Series> {
        let name = self.resolve(original);
        self.series.iter().find(|s| s.name == name)
    }

    pub fn category_index(&self, original: &str) -> Option<usize> {
        let name = self.resolve(original);
        self.categories.iter().position(|c| c == name)
    }

    pub fn point_named(&self, original: &str) -> Option<&DataPoint> {
        let name = self.resolve(original);
        self.points.iter().find(|p| p.label.as_deref() == Some(name))
    }

    /// Per-category sum over all series (stack totals).
    pub fn totals(&self) -> Vec<f64> {
        let mut t = alloc::vec![0.0; self.categories.len()];
        for s in &self.series {
            for (i, v) in s.values.iter().enumerate() {
                t[i] += v;
            }
        }
        t
    }

    /// Every numeric value carried by the chart, for range checks.
    pub fn all_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.series.iter().flat_map(|s| s.values.iter().copied()).collect();
        for p in &self.points {
            v.push(p.y);
        }
        v
    }

    /// Stable file stem `{chart_type}_{seed}_{context_mode}`.
    pub fn file_stem(&self) -> String {
        let mut s = self.chart_type.as_str().to_string();
        s.push('_');
        s.push_str(&alloc::format!("{}", self.seed));
        s.push('_');
        s.push_str(self.context_mode.as_str());
        s
    }
}
