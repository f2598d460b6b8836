//! Question templates, ground-truth derivation and answer options.
//!
//! Templates reference chart entities by their contextual names; a
//! decontextualized chart resolves them through its label map, so the same
//! rule works in both modes.

use crate::chart::{ChartInstance, ChartType, ContextMode, TrendDirection, Unit};
use crate::chartgen;
use crate::numfmt::{approx_eq, format_number, format_range, format_value, quantize};
use crate::stats::special::least_squares;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QbankError {
    #[error("constraint violation in template {template}: {reason}")]
    ConstraintViolation { template: u8, reason: String },
    #[error("not enough distinct distractors for template {template}")]
    DistractorExhaustion { template: u8 },
    #[error("no chart supplied for {0}")]
    MissingChart(ChartType),
    #[error("template {template} targets {expected} but chart is {found}")]
    ChartMismatch { template: u8, expected: ChartType, found: ChartType },
    #[error(transparent)]
    Chart(#[from] chartgen::ChartError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskType {
    RetrieveValue,
    FindExtremum,
    DetermineRange,
    FindCorrelationTrend,
    MakeComparisons,
    FindAnomalies,
    FindClusters,
    IdentifyHierarchy,
}

impl TaskType {
    pub const ALL: [TaskType; 8] = [
        TaskType::RetrieveValue,
        TaskType::FindExtremum,
        TaskType::DetermineRange,
        TaskType::FindCorrelationTrend,
        TaskType::MakeComparisons,
        TaskType::FindAnomalies,
        TaskType::FindClusters,
        TaskType::IdentifyHierarchy,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TaskType::RetrieveValue => "Retrieve Value",
            TaskType::FindExtremum => "Find Extremum",
            TaskType::DetermineRange => "Determine Range",
            TaskType::FindCorrelationTrend => "Find Correlation/Trend",
            TaskType::MakeComparisons => "Make Comparisons",
            TaskType::FindAnomalies => "Find Anomalies",
            TaskType::FindClusters => "Find Clusters",
            TaskType::IdentifyHierarchy => "Identify the Hierarchical Structure",
        }
    }

    pub fn index(self) -> usize {
        TaskType::ALL.iter().position(|t| *t == self).unwrap_or(0)
    }

    /// Parse a task label, dropping any parenthesized qualifier.
    pub fn parse(label: &str) -> Option<TaskType> {
        let base = simplify_task_label(label);
        TaskType::ALL.iter().copied().find(|t| t.label() == base)
    }
}

/// Strip a trailing parenthesized qualifier, e.g. "Retrieve Value (Absolute Value)".
pub fn simplify_task_label(label: &str) -> &str {
    match label.find('(') {
        Some(i) => label[..i].trim_end(),
        None => label.trim(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    AbsoluteValue,
    RelativeValue,
    DerivedValue,
    ApproximateValue,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::AbsoluteValue => "(Absolute Value)",
            Variant::RelativeValue => "(Relative Value)",
            Variant::DerivedValue => "(Derived Value)",
            Variant::ApproximateValue => "(Approximate Value)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnswerMode {
    MultipleChoice4,
    MultipleChoice3,
    TrueFalse,
    Open,
}

impl AnswerMode {
    pub fn option_count(self) -> usize {
        match self {
            AnswerMode::MultipleChoice4 => 4,
            AnswerMode::MultipleChoice3 => 3,
            AnswerMode::TrueFalse => 2,
            AnswerMode::Open => 0,
        }
    }
}

/// Oracle procedure that computes a template's answer from raw chart data.
/// Entity arguments are contextual names.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule {
    CellValue { series: &'static str, category: &'static str },
    ShareOfTotal { series: &'static str, category: &'static str },
    CellRatio { num: &'static str, den: &'static str, category: &'static str },
    Extremum { series: &'static str, max: bool },
    ValueRange { series: &'static str },
    Trend { series: &'static str },
    Difference { series: &'static str, from: &'static str, to: &'static str },
    CountBelow { series: &'static str, category: &'static str },
    /// `left > right` when `greater`, else `left < right`; operands are (series, category).
    Compare { left: (&'static str, &'static str), right: (&'static str, &'static str), greater: bool },
    RatioGreater { num: &'static str, den: &'static str, a: &'static str, b: &'static str },
    AlwaysGreater { a: &'static str, b: &'static str },
    ModalBin,
    PointYAtParam { key: &'static str },
    MaxPointX,
    PointYRange,
    AnomalyX,
    AnomalyLabel,
    ClusterAtStated,
    /// Sign of the least-squares slope; `on_size` regresses bubble size on x.
    SlopeStatement { negative: bool, on_size: bool },
    SameXAllEqual { key: &'static str },
    PointY { label: &'static str },
    MaxPointXLabel,
    PointSizeGreater { a: &'static str, b: &'static str },
    ColorBin { state: &'static str },
    MaxState,
    StateGreater { a: &'static str, b: &'static str },
    NestedIn { leaf: &'static str, parent: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuestionTemplate {
    pub id: u8,
    pub chart_type: ChartType,
    pub task: TaskType,
    pub variant: Option<Variant>,
    pub stem_template: &'static str,
    pub answer_mode: AnswerMode,
    pub rule: Rule,
    pub unit: Unit,
    /// Option grid step for numeric answers.
    pub step: f64,
    pub decimals: u8,
    /// Valid numeric domain for distractors.
    pub domain: (f64, f64),
    /// Open-answer acceptance window in grid steps.
    pub tolerance_steps: f64,
}

impl QuestionTemplate {
    pub fn full_task_label(&self) -> String {
        match self.variant {
            Some(v) => format!("{} {}", self.task.label(), v.label()),
            None => self.task.label().to_string(),
        }
    }
}

const INF: f64 = f64::INFINITY;

macro_rules! tpl {
    ($id:expr, $ct:ident, $task:ident, $var:expr, $mode:ident, $stem:expr, $rule:expr) => {
        tpl!($id, $ct, $task, $var, $mode, $stem, $rule, Unit::Count, 1.0, 0, (0.0, INF), 0.5)
    };
    ($id:expr, $ct:ident, $task:ident, $var:expr, $mode:ident, $stem:expr, $rule:expr,
     $unit:expr, $step:expr, $dec:expr, $dom:expr, $tol:expr) => {
        QuestionTemplate {
            id: $id,
            chart_type: ChartType::$ct,
            task: TaskType::$task,
            variant: $var,
            stem_template: $stem,
            answer_mode: AnswerMode::$mode,
            rule: $rule,
            unit: $unit,
            step: $step,
            decimals: $dec,
            domain: $dom,
            tolerance_steps: $tol,
        }
    };
}

use Variant::{AbsoluteValue as Abs, ApproximateValue as Approx, DerivedValue as Der, RelativeValue as Rel};

static TEMPLATES: [QuestionTemplate; 53] = [
    // Line chart
    tpl!(1, Line, RetrieveValue, None, MultipleChoice4,
        "What was the price of a barrel of {e:Oil|lower} in February 2015?",
        Rule::CellValue { series: "Oil", category: "February" },
        Unit::Dollar, 5.0, 0, (0.0, INF), 0.5),
    tpl!(2, Line, FindExtremum, None, MultipleChoice4,
        "In which month was the price of a barrel of {e:Oil|lower} the lowest in 2015?",
        Rule::Extremum { series: "Oil", max: false }),
    tpl!(3, Line, DetermineRange, None, MultipleChoice4,
        "What was the price range of a barrel of {e:Oil|lower} in 2015?",
        Rule::ValueRange { series: "Oil" },
        Unit::Dollar, 5.0, 0, (0.0, INF), 1.0),
    tpl!(4, Line, FindCorrelationTrend, None, MultipleChoice3,
        "Over the course of the second half of 2015, the price of a barrel of {e:Oil|lower} was ____.",
        Rule::Trend { series: "Oil" }),
    tpl!(5, Line, MakeComparisons, None, MultipleChoice4,
        "About how much did the price of a barrel of {e:Oil|lower} rise from June to September in 2015?",
        Rule::Difference { series: "Oil", from: "June", to: "September" },
        Unit::Dollar, 5.0, 0, (0.0, INF), 0.5),
    // Bar chart
    tpl!(6, Bar, RetrieveValue, None, MultipleChoice4,
        "What is the average internet speed in {e:Japan}?",
        Rule::CellValue { series: "Internet speed", category: "Japan" },
        Unit::Mbps, 2.0, 0, (0.0, INF), 0.5),
    tpl!(7, Bar, FindExtremum, None, MultipleChoice4,
        "In which country is the average internet speed the fastest in Asia?",
        Rule::Extremum { series: "Internet speed", max: true }),
    tpl!(8, Bar, DetermineRange, None, MultipleChoice4,
        "What is the range of the average internet speed in Asia?",
        Rule::ValueRange { series: "Internet speed" },
        Unit::Mbps, 2.0, 0, (0.0, INF), 1.0),
    tpl!(9, Bar, MakeComparisons, None, MultipleChoice4,
        "How many countries in Asia is the average Internet speed slower than {e:South Korea}?",
        Rule::CountBelow { series: "Internet speed", category: "South Korea" },
        Unit::Count, 1.0, 0, (0.0, 9.0), 0.5),
    // Stacked bar chart
    tpl!(10, StackedBar, RetrieveValue, Some(Abs), MultipleChoice4,
        "What is the cost of {e:Peanuts|lower} in {e:Las Vegas}?",
        Rule::CellValue { series: "Peanuts", category: "Las Vegas" },
        Unit::Dollar, 2.0, 0, (0.0, INF), 0.5),
    tpl!(11, StackedBar, RetrieveValue, Some(Rel), MultipleChoice4,
        "About what is the ratio of the cost of a {e:Sandwich|lower} to the total cost of room service in {e:Seattle}?",
        Rule::ShareOfTotal { series: "Sandwich", category: "Seattle" },
        Unit::Ratio, 0.05, 2, (0.0, 1.0), 0.5),
    tpl!(12, StackedBar, FindExtremum, None, MultipleChoice4,
        "In which city is the cost of {e:Soda|lower} the highest?",
        Rule::Extremum { series: "Soda", max: true }),
    tpl!(13, StackedBar, MakeComparisons, Some(Abs), TrueFalse,
        "The cost of {e:Water|lower} in {e:Boston} is higher than that of {e:New York City}.",
        Rule::Compare { left: ("Water", "Boston"), right: ("Water", "New York City"), greater: true }),
    tpl!(14, StackedBar, MakeComparisons, Some(Rel), TrueFalse,
        "The ratio of the cost of {e:Peanuts|lower} to the cost of {e:Water|lower} in {e:Las Vegas} is higher than that of {e:San Francisco}.",
        Rule::RatioGreater { num: "Peanuts", den: "Water", a: "Las Vegas", b: "San Francisco" }),
    // 100% stacked bar chart
    tpl!(15, StackedBar100, RetrieveValue, Some(Abs), MultipleChoice4,
        "What is the approval rating of {e:Republicans} among the people who have the education level of Postgraduate Study?",
        Rule::CellValue { series: "Republicans", category: "Postgraduate Study" },
        Unit::Percent, 5.0, 0, (0.0, 100.0), 0.5),
    tpl!(16, StackedBar100, FindExtremum, Some(Rel), MultipleChoice4,
        "What is the education level of people in which the {e:Democrats} have the lowest approval rating?",
        Rule::Extremum { series: "Democrats", max: false }),
    tpl!(17, StackedBar100, MakeComparisons, Some(Rel), TrueFalse,
        "The approval rating of {e:Republicans} for the people who have the education level of Some College Degree is lower than that for the people who have the education level of Postgraduate Study.",
        Rule::Compare { left: ("Republicans", "Some College Degree"), right: ("Republicans", "Postgraduate Study"), greater: false }),
    // Pie chart
    tpl!(18, Pie, RetrieveValue, Some(Rel), MultipleChoice4,
        "About what is the global smartphone market share of {e:Huawei}?",
        Rule::CellValue { series: "Market share", category: "Huawei" },
        Unit::Percent, 5.0, 0, (0.0, 100.0), 0.5),
    tpl!(19, Pie, FindExtremum, Some(Rel), MultipleChoice4,
        "In which company is the global smartphone market share the smallest?",
        Rule::Extremum { series: "Market share", max: false }),
    tpl!(20, Pie, MakeComparisons, Some(Rel), TrueFalse,
        "The global smartphone market share of {e:Lenovo} is larger than that of {e:Samsung}.",
        Rule::Compare { left: ("Market share", "Lenovo"), right: ("Market share", "Samsung"), greater: true }),
    // Histogram
    tpl!(21, Histogram, RetrieveValue, Some(Der), MultipleChoice4,
        "How many people have rated the taxi between 4.0 and 4.2?",
        Rule::CellValue { series: "Number of people", category: "4.0 - 4.2" },
        Unit::Count, 2.0, 0, (0.0, INF), 0.5),
    tpl!(22, Histogram, FindExtremum, Some(Der), MultipleChoice4,
        "What is the rating that the people have rated the taxi the most?",
        Rule::ModalBin,
        Unit::Rating, 0.2, 1, (4.0, 5.0), 0.0),
    tpl!(23, Histogram, MakeComparisons, Some(Der), TrueFalse,
        "More people have rated the taxi between 4.6 and 4.8 than between 4.2 and 4.4.",
        Rule::Compare { left: ("Number of people", "4.6 - 4.8"), right: ("Number of people", "4.2 - 4.4"), greater: true }),
    // Scatterplot
    tpl!(24, Scatterplot, RetrieveValue, None, MultipleChoice4,
        "What is the weight for the person who is {p:rv_height:1} cm tall?",
        Rule::PointYAtParam { key: "rv_height" },
        Unit::Kilogram, 2.0, 1, (0.0, INF), 0.5),
    tpl!(25, Scatterplot, FindExtremum, None, MultipleChoice4,
        "What is the height for the tallest person among the 85 males?",
        Rule::MaxPointX,
        Unit::Centimeter, 2.0, 1, (0.0, INF), 0.5),
    tpl!(26, Scatterplot, DetermineRange, None, MultipleChoice4,
        "What is the range in weight for the 85 males?",
        Rule::PointYRange,
        Unit::Kilogram, 2.0, 1, (0.0, INF), 1.0),
    tpl!(27, Scatterplot, FindAnomalies, None, MultipleChoice4,
        "What is the height for a person who lies outside the others the most?",
        Rule::AnomalyX,
        Unit::Centimeter, 2.0, 1, (0.0, INF), 0.5),
    tpl!(28, Scatterplot, FindClusters, None, TrueFalse,
        "A group of males are gathered around the height of {p:cluster_x:0} cm and the weight of {p:cluster_y:0} kg.",
        Rule::ClusterAtStated),
    tpl!(29, Scatterplot, FindCorrelationTrend, None, TrueFalse,
        "There is a negative linear relationship between the height and the weight of the 85 males.",
        Rule::SlopeStatement { negative: true, on_size: false }),
    tpl!(30, Scatterplot, MakeComparisons, None, TrueFalse,
        "The weights for males with the height of {p:same_height:0} cm are all the same.",
        Rule::SameXAllEqual { key: "same_height" }),
    // Area chart
    tpl!(31, Area, RetrieveValue, None, MultipleChoice4,
        "What was the average price of a pound of {e:Coffee beans|lower} in June 2013?",
        Rule::CellValue { series: "Coffee beans", category: "Jun 2013" },
        Unit::Dollar, 0.5, 2, (0.0, INF), 0.5),
    tpl!(32, Area, FindExtremum, None, MultipleChoice4,
        "When was the average price of a pound of {e:Coffee beans|lower} at minimum?",
        Rule::Extremum { series: "Coffee beans", max: false }),
    tpl!(33, Area, DetermineRange, None, MultipleChoice4,
        "What was the range of the average price of a pound of {e:Coffee beans|lower} between January 2013 and December 2014?",
        Rule::ValueRange { series: "Coffee beans" },
        Unit::Dollar, 0.5, 2, (0.0, INF), 1.0),
    tpl!(34, Area, FindCorrelationTrend, None, MultipleChoice3,
        "Over the course of 2013, the average price of a pound of {e:Coffee beans|lower} was ____.",
        Rule::Trend { series: "Coffee beans" }),
    // Stacked area chart
    tpl!(35, StackedArea, RetrieveValue, Some(Abs), MultipleChoice4,
        "What was the number of girls named '{e:Amelia}' in 2010 in the UK?",
        Rule::CellValue { series: "Amelia", category: "2010" },
        Unit::Count, 500.0, 0, (0.0, INF), 0.5),
    tpl!(36, StackedArea, RetrieveValue, Some(Rel), MultipleChoice4,
        "About what was the ratio of the number of girls named '{e:Amelia}' to those named '{e:Isla}' in 2014 in the UK?",
        Rule::CellRatio { num: "Amelia", den: "Isla", category: "2014" },
        Unit::Ratio, 0.25, 2, (0.0, INF), 0.5),
    tpl!(37, StackedArea, FindExtremum, None, MultipleChoice4,
        "Over the course of years between 2009 and 2014, when was the number of girls named '{e:Amelia}' at the maximum?",
        Rule::Extremum { series: "Amelia", max: true }),
    tpl!(38, StackedArea, FindCorrelationTrend, None, MultipleChoice3,
        "The number of girls named '{e:Isla}' was ____ from 2009 to 2012.",
        Rule::Trend { series: "Isla" }),
    tpl!(39, StackedArea, MakeComparisons, Some(Abs), TrueFalse,
        "In the UK, the number of girls named '{e:Amelia}' in 2014 was more than it was in 2013.",
        Rule::Compare { left: ("Amelia", "2014"), right: ("Amelia", "2013"), greater: true }),
    tpl!(40, StackedArea, MakeComparisons, Some(Rel), TrueFalse,
        "Over the course of years between 2009 and 2014, the number of girls named '{e:Isla}' was always more than '{e:Olivia}'.",
        Rule::AlwaysGreater { a: "Isla", b: "Olivia" }),
    // Bubble chart
    tpl!(41, Bubble, RetrieveValue, None, MultipleChoice4,
        "What is the total length of the metro system in {e:Beijing}?",
        Rule::PointY { label: "Beijing" },
        Unit::Kilometer, 25.0, 0, (0.0, INF), 0.5),
    tpl!(42, Bubble, FindExtremum, None, MultipleChoice4,
        "Which city's metro system has the largest number of stations?",
        Rule::MaxPointXLabel),
    tpl!(43, Bubble, DetermineRange, None, MultipleChoice4,
        "What is the range of the total length of the metro systems?",
        Rule::PointYRange,
        Unit::Kilometer, 25.0, 0, (0.0, INF), 1.0),
    tpl!(44, Bubble, FindAnomalies, None, MultipleChoice4,
        "Which city's metro system does lie outside the relationship between the total system length and the number of stations most?",
        Rule::AnomalyLabel),
    tpl!(45, Bubble, FindClusters, None, TrueFalse,
        "A group of the metro systems of the world has approximately {p:cluster_x:0} stations and around a {p:cluster_y:0} km system length.",
        Rule::ClusterAtStated),
    tpl!(46, Bubble, FindCorrelationTrend, None, TrueFalse,
        "In general, the ridership of the metro system increases as the number of stations increases.",
        Rule::SlopeStatement { negative: false, on_size: true }),
    tpl!(47, Bubble, MakeComparisons, None, TrueFalse,
        "The metro system in {e:Paris} has more ridership than the metro system in {e:New York City}.",
        Rule::PointSizeGreater { a: "Paris", b: "New York City" }),
    // Choropleth map
    tpl!(48, Choropleth, RetrieveValue, Some(Approx), MultipleChoice4,
        "What was the unemployment rate for Indiana (IN) in 2015?",
        Rule::ColorBin { state: "IN" },
        Unit::Percent, 1.0, 1, (0.0, 100.0), 0.0),
    tpl!(49, Choropleth, FindExtremum, Some(Approx), MultipleChoice4,
        "In which state was the unemployment rate the highest in 2015?",
        Rule::MaxState),
    tpl!(50, Choropleth, MakeComparisons, Some(Approx), TrueFalse,
        "In 2015, the unemployment rate for Arizona (AZ) was higher than that of Oklahoma (OK).",
        Rule::StateGreater { a: "AZ", b: "OK" }),
    // Treemap
    tpl!(51, Treemap, FindExtremum, Some(Rel), MultipleChoice4,
        "For which website was the number of unique visitors the largest in 2010?",
        Rule::Extremum { series: "Unique visitors", max: true }),
    tpl!(52, Treemap, MakeComparisons, Some(Rel), TrueFalse,
        "The number of unique visitors for {e:Target} was more than that of {e:Ask} in 2010.",
        Rule::Compare { left: ("Unique visitors", "Target"), right: ("Unique visitors", "Ask"), greater: true }),
    tpl!(53, Treemap, IdentifyHierarchy, None, TrueFalse,
        "{e:Amazon} is nested in the Computer category.",
        Rule::NestedIn { leaf: "Amazon", parent: "Computer" }),
];

/// All 53 templates in table order.
pub fn templates() -> &'static [QuestionTemplate] {
    &TEMPLATES
}

pub fn template(id: u8) -> Option<&'static QuestionTemplate> {
    TEMPLATES.iter().find(|t| t.id == id)
}

pub fn templates_for(chart_type: ChartType) -> impl Iterator<Item = &'static QuestionTemplate> {
    TEMPLATES.iter().filter(move |t| t.chart_type == chart_type)
}

/// The distinct (chart type, simplified task) pairs, in first-seen order.
pub fn tested_pairs() -> Vec<(ChartType, TaskType)> {
    let mut out: Vec<(ChartType, TaskType)> = Vec::new();
    for t in TEMPLATES.iter() {
        if !out.contains(&(t.chart_type, t.task)) {
            out.push((t.chart_type, t.task));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Ground truth

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Answer {
    CategoryLabel { value: String },
    NumericValue { value: f64 },
    NumericRange { low: f64, high: f64 },
    Boolean { value: bool },
    TrendDirection { value: TrendDirection },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroundTruthKind {
    CategoryLabel,
    NumericValue,
    NumericRange,
    Boolean,
    TrendDirection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub answer: Answer,
    pub unit: Unit,
    pub decimals: u8,
    /// Grid step used for numeric distractors.
    pub step: f64,
    /// Open-answer acceptance window (absolute, same unit as the answer).
    pub tolerance: f64,
    /// A single number inside the range counts as correct.
    pub membership: bool,
}

impl GroundTruth {
    pub fn kind(&self) -> GroundTruthKind {
        match self.answer {
            Answer::CategoryLabel { .. } => GroundTruthKind::CategoryLabel,
            Answer::NumericValue { .. } => GroundTruthKind::NumericValue,
            Answer::NumericRange { .. } => GroundTruthKind::NumericRange,
            Answer::Boolean { .. } => GroundTruthKind::Boolean,
            Answer::TrendDirection { .. } => GroundTruthKind::TrendDirection,
        }
    }

    /// Canonical text of the answer, as it appears among the options.
    pub fn display(&self) -> String {
        let d = self.decimals as usize;
        match &self.answer {
            Answer::CategoryLabel { value } => value.clone(),
            Answer::NumericValue { value } => format_value(*value, self.unit, d),
            Answer::NumericRange { low, high } => format_range(*low, *high, self.unit, d),
            Answer::Boolean { value } => bool_label(*value).to_string(),
            Answer::TrendDirection { value } => value.as_answer().to_string(),
        }
    }

    /// Width of a range answer.
    pub fn span(&self) -> Option<f64> {
        match self.answer {
            Answer::NumericRange { low, high } => Some(high - low),
            _ => None,
        }
    }
}

pub fn bool_label(b: bool) -> &'static str {
    if b {
        "True"
    } else {
        "False"
    }
}

fn violation(t: &QuestionTemplate, reason: impl Into<String>) -> QbankError {
    QbankError::ConstraintViolation { template: t.id, reason: reason.into() }
}

fn truth(t: &QuestionTemplate, answer: Answer) -> GroundTruth {
    let tolerance = t.step * t.tolerance_steps;
    GroundTruth { answer, unit: t.unit, decimals: t.decimals, step: t.step, tolerance, membership: false }
}

fn series<'a>(t: &QuestionTemplate, c: &'a ChartInstance, name: &str) -> Result<&'a [f64], QbankError> {
    c.series_named(name)
        .map(|s| s.values.as_slice())
        .ok_or_else(|| violation(t, format!("missing series {name}")))
}

fn cell(t: &QuestionTemplate, c: &ChartInstance, s: &str, cat: &str) -> Result<f64, QbankError> {
    let v = series(t, c, s)?;
    let i = c
        .category_index(cat)
        .ok_or_else(|| violation(t, format!("missing category {cat}")))?;
    Ok(v[i])
}

/// Index of the unique extremum, enforcing the chart's margin against the
/// runner-up: the gap must be at least `margin` times the value spread.
pub fn unique_extremum(values: &[f64], max: bool, margin: f64) -> Option<usize> {
    if values.len() < 2 {
        return None;
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        let o = values[a].partial_cmp(&values[b]).unwrap_or(core::cmp::Ordering::Equal);
        if max {
            o.reverse()
        } else {
            o
        }
    });
    let (top, second) = (values[idx[0]], values[idx[1]]);
    let hi = values.iter().cloned().fold(f64::MIN, f64::max);
    let lo = values.iter().cloned().fold(f64::MAX, f64::min);
    let gap = (top - second).abs();
    if approx_eq(top, second) || gap + 1e-9 < margin * (hi - lo) {
        return None;
    }
    Some(idx[0])
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Trend classification thresholds as fractions of the y-axis span.
pub const TREND_FLAT_RISE: f64 = 0.05;
pub const TREND_CLEAR_RISE: f64 = 0.10;
pub const TREND_FLAT_SPREAD: f64 = 0.15;
/// Minimum |r| for a correlation statement to be decidable.
pub const MIN_STATEMENT_CORRELATION: f64 = 0.3;

/// Classify a window of values by its least-squares rise.
pub fn classify_trend(values: &[f64], axis_span: f64) -> Option<TrendDirection> {
    let xs: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
    let (slope, _, _) = least_squares(&xs, values)?;
    let rise = slope * (values.len() - 1) as f64;
    let (lo, hi) = min_max(values);
    if rise.abs() <= TREND_FLAT_RISE * axis_span && hi - lo <= TREND_FLAT_SPREAD * axis_span {
        Some(TrendDirection::Flat)
    } else if rise >= TREND_CLEAR_RISE * axis_span {
        Some(TrendDirection::Increasing)
    } else if rise <= -TREND_CLEAR_RISE * axis_span {
        Some(TrendDirection::Decreasing)
    } else {
        None
    }
}

fn point_xy(c: &ChartInstance, on_size: bool) -> (Vec<f64>, Vec<f64>) {
    let xs = c.points.iter().map(|p| p.x).collect();
    let ys = c
        .points
        .iter()
        .map(|p| if on_size { p.size.unwrap_or(0.0) } else { p.y })
        .collect();
    (xs, ys)
}

/// Index of the point with the largest absolute residual from the
/// least-squares line, if it exceeds `multiple` times the runner-up.
pub fn anomaly_index(c: &ChartInstance, multiple: f64) -> Option<usize> {
    let (xs, ys) = point_xy(c, false);
    let (slope, intercept, _) = least_squares(&xs, &ys)?;
    let mut res: Vec<(f64, usize)> = xs
        .iter()
        .zip(&ys)
        .enumerate()
        .map(|(i, (x, y))| ((y - (intercept + slope * x)).abs(), i))
        .collect();
    res.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(core::cmp::Ordering::Equal));
    if res.len() < 2 || res[0].0 < multiple * res[1].0 || approx_eq(res[0].0, res[1].0) {
        return None;
    }
    Some(res[0].1)
}

/// Axis-normalized distance between two points of a point chart.
pub fn normalized_distance(c: &ChartInstance, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (x0, x1) = c.axis.x_range.unwrap_or((0.0, 1.0));
    let (y0, y1) = c.axis.y_range;
    let dx = (a.0 - b.0) / (x1 - x0);
    let dy = (a.1 - b.1) / (y1 - y0);
    libm::sqrt(dx * dx + dy * dy)
}

fn bin_of(bins: &[(f64, f64)], v: f64) -> Option<usize> {
    let last = bins.len().checked_sub(1)?;
    bins.iter().enumerate().position(|(i, &(lo, hi))| {
        v >= lo - 1e-9 && (v < hi - 1e-9 || (i == last && v <= hi + 1e-9))
    })
}

/// Compute the ground truth of `template` on `chart`.
pub fn derive_answer(t: &QuestionTemplate, c: &ChartInstance) -> Result<GroundTruth, QbankError> {
    if t.chart_type != c.chart_type {
        return Err(QbankError::ChartMismatch { template: t.id, expected: t.chart_type, found: c.chart_type });
    }
    let margin = c.shaping.extremum_margin;
    let gt = match t.rule {
        Rule::CellValue { series: s, category } => {
            truth(t, Answer::NumericValue { value: cell(t, c, s, category)? })
        }
        Rule::ShareOfTotal { series: s, category } => {
            let v = cell(t, c, s, category)?;
            let i = c.category_index(category).ok_or_else(|| violation(t, "missing category"))?;
            let total = c.totals()[i];
            if total <= 0.0 {
                return Err(violation(t, "zero total"));
            }
            truth(t, Answer::NumericValue { value: quantize(v / total, 0.01) })
        }
        Rule::CellRatio { num, den, category } => {
            let n = cell(t, c, num, category)?;
            let d = cell(t, c, den, category)?;
            if d <= 0.0 {
                return Err(violation(t, "zero denominator"));
            }
            truth(t, Answer::NumericValue { value: quantize(n / d, 0.01) })
        }
        Rule::Extremum { series: s, max } => {
            let v = series(t, c, s)?;
            let i = unique_extremum(v, max, margin).ok_or_else(|| violation(t, "no unique extremum"))?;
            truth(t, Answer::CategoryLabel { value: c.categories[i].clone() })
        }
        Rule::ValueRange { series: s } => {
            let (lo, hi) = min_max(series(t, c, s)?);
            truth(t, Answer::NumericRange { low: lo, high: hi })
        }
        Rule::PointYRange => {
            let ys: Vec<f64> = c.points.iter().map(|p| p.y).collect();
            if ys.is_empty() {
                return Err(violation(t, "no points"));
            }
            let (lo, hi) = min_max(&ys);
            truth(t, Answer::NumericRange { low: lo, high: hi })
        }
        Rule::Trend { series: s } => {
            let shape = c
                .shaping
                .trend
                .as_ref()
                .filter(|tr| tr.series == c.resolve(s))
                .ok_or_else(|| violation(t, "no trend window"))?;
            let v = series(t, c, s)?;
            let w = &v[shape.start..=shape.end.min(v.len() - 1)];
            let span = c.axis.y_range.1 - c.axis.y_range.0;
            let dir = classify_trend(w, span).ok_or_else(|| violation(t, "ambiguous trend"))?;
            truth(t, Answer::TrendDirection { value: dir })
        }
        Rule::Difference { series: s, from, to } => {
            let d = cell(t, c, s, to)? - cell(t, c, s, from)?;
            if d <= 0.0 {
                return Err(violation(t, "no rise between the two months"));
            }
            truth(t, Answer::NumericValue { value: quantize(d, c.axis.resolution) })
        }
        Rule::CountBelow { series: s, category } => {
            let v = series(t, c, s)?;
            let r = cell(t, c, s, category)?;
            let i = c.category_index(category).unwrap_or(usize::MAX);
            if v.iter().enumerate().any(|(j, x)| j != i && approx_eq(*x, r)) {
                return Err(violation(t, "tie with the reference category"));
            }
            let n = v.iter().filter(|x| **x < r).count();
            truth(t, Answer::NumericValue { value: n as f64 })
        }
        Rule::Compare { left, right, greater } => {
            let l = cell(t, c, left.0, left.1)?;
            let r = cell(t, c, right.0, right.1)?;
            if approx_eq(l, r) {
                return Err(violation(t, "tie"));
            }
            truth(t, Answer::Boolean { value: if greater { l > r } else { l < r } })
        }
        Rule::RatioGreater { num, den, a, b } => {
            let (na, da) = (cell(t, c, num, a)?, cell(t, c, den, a)?);
            let (nb, db) = (cell(t, c, num, b)?, cell(t, c, den, b)?);
            if da <= 0.0 || db <= 0.0 {
                return Err(violation(t, "zero denominator"));
            }
            let (ra, rb) = (na / da, nb / db);
            if approx_eq(ra, rb) {
                return Err(violation(t, "tie"));
            }
            truth(t, Answer::Boolean { value: ra > rb })
        }
        Rule::AlwaysGreater { a, b } => {
            let va = series(t, c, a)?;
            let vb = series(t, c, b)?;
            if va.iter().zip(vb).any(|(x, y)| approx_eq(*x, *y)) {
                return Err(violation(t, "tie"));
            }
            truth(t, Answer::Boolean { value: va.iter().zip(vb).all(|(x, y)| x > y) })
        }
        Rule::ModalBin => {
            let v = c.series.first().map(|s| s.values.as_slice()).unwrap_or(&[]);
            let i = unique_extremum(v, true, margin).ok_or_else(|| violation(t, "no unique mode"))?;
            let (lo, hi) = c.axis.bins[i];
            let mut g = truth(t, Answer::NumericRange { low: lo, high: hi });
            g.membership = true;
            g
        }
        Rule::PointYAtParam { key } => {
            let x = c.shaping.param(key).ok_or_else(|| violation(t, "missing probe"))?;
            let hits: Vec<&crate::chart::DataPoint> =
                c.points.iter().filter(|p| approx_eq(p.x, x)).collect();
            if hits.len() != 1 {
                return Err(violation(t, "probe does not identify one point"));
            }
            truth(t, Answer::NumericValue { value: hits[0].y })
        }
        Rule::MaxPointX => {
            let xs: Vec<f64> = c.points.iter().map(|p| p.x).collect();
            let i = unique_extremum(&xs, true, margin).ok_or_else(|| violation(t, "no unique maximum"))?;
            truth(t, Answer::NumericValue { value: xs[i] })
        }
        Rule::MaxPointXLabel => {
            let xs: Vec<f64> = c.points.iter().map(|p| p.x).collect();
            let i = unique_extremum(&xs, true, margin).ok_or_else(|| violation(t, "no unique maximum"))?;
            truth(t, Answer::CategoryLabel { value: c.points[i].label.clone().unwrap_or_default() })
        }
        Rule::AnomalyX | Rule::AnomalyLabel => {
            let multiple = c.shaping.anomaly.as_ref().map(|a| a.multiple).unwrap_or(1.0);
            let i = anomaly_index(c, multiple).ok_or_else(|| violation(t, "no separated anomaly"))?;
            if matches!(t.rule, Rule::AnomalyX) {
                truth(t, Answer::NumericValue { value: c.points[i].x })
            } else {
                truth(t, Answer::CategoryLabel { value: c.points[i].label.clone().unwrap_or_default() })
            }
        }
        Rule::ClusterAtStated => {
            let cl = c.shaping.cluster.as_ref().ok_or_else(|| violation(t, "no planted cluster"))?;
            let d = normalized_distance(c, cl.stated, cl.center);
            truth(t, Answer::Boolean { value: d <= cl.radius })
        }
        Rule::SlopeStatement { negative, on_size } => {
            let (xs, ys) = point_xy(c, on_size);
            let (slope, _, r) = least_squares(&xs, &ys).ok_or_else(|| violation(t, "degenerate fit"))?;
            if r.abs() < MIN_STATEMENT_CORRELATION {
                return Err(violation(t, "relationship too weak to judge"));
            }
            truth(t, Answer::Boolean { value: if negative { slope < 0.0 } else { slope > 0.0 } })
        }
        Rule::SameXAllEqual { key } => {
            let x = c.shaping.param(key).ok_or_else(|| violation(t, "missing probe"))?;
            let ys: Vec<f64> = c.points.iter().filter(|p| approx_eq(p.x, x)).map(|p| p.y).collect();
            if ys.len() < 2 {
                return Err(violation(t, "fewer than two points share the probed x"));
            }
            truth(t, Answer::Boolean { value: ys.iter().all(|y| approx_eq(*y, ys[0])) })
        }
        Rule::PointY { label } => {
            let p = c.point_named(label).ok_or_else(|| violation(t, "missing point"))?;
            truth(t, Answer::NumericValue { value: p.y })
        }
        Rule::PointSizeGreater { a, b } => {
            let pa = c.point_named(a).and_then(|p| p.size).ok_or_else(|| violation(t, "missing point"))?;
            let pb = c.point_named(b).and_then(|p| p.size).ok_or_else(|| violation(t, "missing point"))?;
            if approx_eq(pa, pb) {
                return Err(violation(t, "tie"));
            }
            truth(t, Answer::Boolean { value: pa > pb })
        }
        Rule::ColorBin { state } => {
            let v = cell(t, c, "Unemployment rate", state)?;
            let i = bin_of(&c.axis.bins, v).ok_or_else(|| violation(t, "value outside legend"))?;
            let (lo, hi) = c.axis.bins[i];
            let mut g = truth(t, Answer::NumericRange { low: lo, high: hi });
            g.membership = true;
            g
        }
        Rule::MaxState => {
            let v = series(t, c, "Unemployment rate")?;
            let i = unique_extremum(v, true, margin).ok_or_else(|| violation(t, "no unique maximum"))?;
            let top_bin = bin_of(&c.axis.bins, v[i]);
            if v.iter().enumerate().any(|(j, x)| j != i && bin_of(&c.axis.bins, *x) == top_bin) {
                return Err(violation(t, "maximum shares its color class"));
            }
            let name = crate::geo::state_name(&c.categories[i]).unwrap_or_else(|| c.categories[i].clone());
            truth(t, Answer::CategoryLabel { value: name })
        }
        Rule::StateGreater { a, b } => {
            let va = cell(t, c, "Unemployment rate", a)?;
            let vb = cell(t, c, "Unemployment rate", b)?;
            if bin_of(&c.axis.bins, va) == bin_of(&c.axis.bins, vb) {
                return Err(violation(t, "states share a color class"));
            }
            truth(t, Answer::Boolean { value: va > vb })
        }
        Rule::NestedIn { leaf, parent } => {
            let i = c.category_index(leaf).ok_or_else(|| violation(t, "missing leaf"))?;
            let p = c.parents.get(i).ok_or_else(|| violation(t, "missing parent"))?;
            truth(t, Answer::Boolean { value: p == parent })
        }
    };
    Ok(gt)
}

// ---------------------------------------------------------------------------
// Options

/// Labels an answer of `t` may take on `c`, used for distractors and for
/// recognizing well-formed open answers.
pub fn answer_domain(t: &QuestionTemplate, c: &ChartInstance) -> Vec<String> {
    match t.rule {
        Rule::Extremum { .. } => c.categories.clone(),
        Rule::MaxPointXLabel | Rule::AnomalyLabel => {
            c.points.iter().filter_map(|p| p.label.clone()).collect()
        }
        Rule::MaxState => c
            .categories
            .iter()
            .map(|code| crate::geo::state_name(code).unwrap_or_else(|| code.clone()))
            .collect(),
        Rule::ModalBin | Rule::ColorBin { .. } => c
            .axis
            .bins
            .iter()
            .map(|(lo, hi)| format_range(*lo, *hi, t.unit, t.decimals as usize))
            .collect(),
        _ => match t.answer_mode {
            AnswerMode::TrueFalse => vec!["True".to_string(), "False".to_string()],
            AnswerMode::MultipleChoice3 => trend_options(),
            _ => Vec::new(),
        },
    }
}

fn trend_options() -> Vec<String> {
    [TrendDirection::Increasing, TrendDirection::Decreasing, TrendDirection::Flat]
        .iter()
        .map(|d| d.as_answer().to_string())
        .collect()
}

fn excluded(candidate: &str, exclusions: &[String]) -> bool {
    exclusions.iter().any(|e| answers_match(candidate, e))
}

/// Compare two answer strings numerically when both are numbers, otherwise
/// case-insensitively.
pub fn answers_match(a: &str, b: &str) -> bool {
    let na = crate::scoring::extract_numbers(a);
    let nb = crate::scoring::extract_numbers(b);
    if !na.is_empty() && na.len() == nb.len() && a.chars().any(|ch| ch.is_ascii_digit()) {
        return na.iter().zip(&nb).all(|(x, y)| approx_eq(*x, *y));
    }
    a.trim().eq_ignore_ascii_case(b.trim())
}

fn option_rng(t: &QuestionTemplate, c: &ChartInstance) -> ChaCha8Rng {
    let s = c.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((t.id as u64) << 32) ^ c.attempt as u64;
    ChaCha8Rng::seed_from_u64(s)
}

fn pick<T: Clone>(rng: &mut ChaCha8Rng, pool: &[T], k: usize) -> Vec<T> {
    let mut idx = sample(rng, pool.len(), k).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| pool[i].clone()).collect()
}

/// Build the ordered option list and the index of the correct option.
pub fn make_options(
    truth: &GroundTruth,
    chart: &ChartInstance,
    t: &QuestionTemplate,
    exclusions: &[String],
) -> Result<(Vec<String>, usize), QbankError> {
    let correct = truth.display();
    let exhausted = || QbankError::DistractorExhaustion { template: t.id };
    let mut rng = option_rng(t, chart);
    let d = truth.decimals as usize;
    let options: Vec<String> = match (&truth.answer, t.answer_mode) {
        (Answer::Boolean { .. }, _) => vec!["True".into(), "False".into()],
        (Answer::TrendDirection { .. }, _) => trend_options(),
        _ if truth.membership || matches!(truth.answer, Answer::CategoryLabel { .. }) => {
            let domain = answer_domain(t, chart);
            let pool: Vec<String> = domain
                .iter()
                .filter(|o| **o != correct && !excluded(o, exclusions))
                .cloned()
                .collect();
            if pool.len() < 3 {
                return Err(exhausted());
            }
            let chosen = pick(&mut rng, &pool, 3);
            domain.into_iter().filter(|o| *o == correct || chosen.contains(o)).collect()
        }
        (Answer::NumericValue { value }, _) => {
            let v = *value;
            let mut cands: Vec<f64> = Vec::new();
            for k in [1.0, 2.0, 3.0, 4.0] {
                for s in [-1.0, 1.0] {
                    let x = quantize(v + s * k * truth.step, libm::pow(10.0, -(d as f64)).min(truth.step));
                    if x >= t.domain.0 && x <= t.domain.1 {
                        cands.push(x);
                    }
                }
                if k >= 2.0 && cands.len() >= 3 {
                    break;
                }
            }
            let cands: Vec<f64> = cands
                .into_iter()
                .filter(|x| {
                    let s = format_value(*x, truth.unit, d);
                    s != correct && !excluded(&s, exclusions)
                })
                .collect();
            if cands.len() < 3 {
                return Err(exhausted());
            }
            let mut vals = pick(&mut rng, &cands, 3);
            vals.push(v);
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
            vals.into_iter().map(|x| format_value(x, truth.unit, d)).collect()
        }
        (Answer::NumericRange { low, high }, _) => {
            let s = truth.step;
            let shifts = [(-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (1.0, 1.0), (-2.0, 0.0), (0.0, 2.0), (-2.0, -2.0), (2.0, 2.0)];
            let mut cands: Vec<(f64, f64)> = Vec::new();
            for (a, b) in shifts {
                let lo = low + a * s;
                let hi = high + b * s;
                if lo < hi && lo >= t.domain.0 && hi <= t.domain.1 {
                    let txt = format_range(lo, hi, truth.unit, d);
                    if txt != correct && !excluded(&txt, exclusions) {
                        cands.push((lo, hi));
                    }
                }
            }
            if cands.len() < 3 {
                return Err(exhausted());
            }
            let mut vals = pick(&mut rng, &cands, 3);
            vals.push((*low, *high));
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
            vals.into_iter().map(|(lo, hi)| format_range(lo, hi, truth.unit, d)).collect()
        }
        (Answer::CategoryLabel { .. }, _) => return Err(exhausted()),
    };
    if options.len() != t.answer_mode.option_count() {
        return Err(exhausted());
    }
    let idx = options.iter().position(|o| *o == correct).ok_or_else(exhausted)?;
    Ok((options, idx))
}

// ---------------------------------------------------------------------------
// Item bank

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BankMode {
    Full,
    Decontextualized,
}

/// Per-template overrides applied while building the bank.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BankOptions {
    /// Answers each template must avoid (e.g. the original test's key).
    #[serde(default)]
    pub exclusions: BTreeMap<u8, Vec<String>>,
    /// Open-answer acceptance window in grid steps.
    #[serde(default)]
    pub tolerance_steps: BTreeMap<u8, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionInstance {
    pub id: u8,
    pub chart_type: ChartType,
    pub task: TaskType,
    pub variant: Option<Variant>,
    pub answer_mode: AnswerMode,
    pub chart_seed: u64,
    pub chart_file: String,
    pub context_mode: ContextMode,
    pub stem: String,
    pub options: Vec<String>,
    pub correct_index: usize,
    pub truth: GroundTruth,
    pub answer_domain: Vec<String>,
    pub exclusion_list: Vec<String>,
}

impl QuestionInstance {
    pub fn template(&self) -> &'static QuestionTemplate {
        template(self.id).expect("instance built from a known template")
    }

    pub fn option_count(&self) -> usize {
        self.options.len()
    }

    /// Expected accuracy of uniform guessing.
    pub fn random_rate(&self) -> f64 {
        1.0 / self.options.len() as f64
    }
}

/// Fill `{e:Name}`, `{e:Name|lower}` and `{p:key:decimals}` placeholders.
pub fn resolve_stem(t: &QuestionTemplate, c: &ChartInstance) -> String {
    let src = t.stem_template;
    let mut out = String::new();
    let mut rest = src;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let Some(close) = rest[open..].find('}') else {
            out.push_str(&rest[open..]);
            return out;
        };
        let inner = &rest[open + 1..open + close];
        if let Some(e) = inner.strip_prefix("e:") {
            let (name, lower) = match e.strip_suffix("|lower") {
                Some(n) => (n, true),
                None => (e, false),
            };
            let label = c.resolve(name);
            if lower && c.context_mode == ContextMode::Contextualized {
                out.push_str(&label.to_lowercase());
            } else {
                out.push_str(label);
            }
        } else if let Some(p) = inner.strip_prefix("p:") {
            let mut parts = p.split(':');
            let key = parts.next().unwrap_or("");
            let dec: usize = parts.next().and_then(|d| d.parse().ok()).unwrap_or(0);
            let v = c.shaping.param(key).unwrap_or(f64::NAN);
            out.push_str(&format_number(v, dec));
        } else {
            out.push_str(&rest[open..=open + close]);
        }
        rest = &rest[open + close + 1..];
    }
    out.push_str(rest);
    out
}

/// Build one question instance from a template and its chart.
pub fn build_question(
    t: &QuestionTemplate,
    c: &ChartInstance,
    opts: &BankOptions,
) -> Result<QuestionInstance, QbankError> {
    let mut gt = derive_answer(t, c)?;
    if let Some(steps) = opts.tolerance_steps.get(&t.id) {
        gt.tolerance = gt.step * steps;
    }
    let exclusions = opts.exclusions.get(&t.id).cloned().unwrap_or_default();
    if excluded(&gt.display(), &exclusions) {
        return Err(violation(t, "answer is on the exclusion list"));
    }
    let (options, correct_index) = make_options(&gt, c, t, &exclusions)?;
    Ok(QuestionInstance {
        id: t.id,
        chart_type: t.chart_type,
        task: t.task,
        variant: t.variant,
        answer_mode: t.answer_mode,
        chart_seed: c.seed,
        chart_file: c.file_stem(),
        context_mode: c.context_mode,
        stem: resolve_stem(t, c),
        options,
        correct_index,
        answer_domain: answer_domain(t, c),
        truth: gt,
        exclusion_list: exclusions,
    })
}

/// Build the full (53) or decontextualized (40) item bank.
pub fn build_item_bank(
    charts: &BTreeMap<ChartType, ChartInstance>,
    mode: BankMode,
    opts: &BankOptions,
) -> Result<Vec<QuestionInstance>, QbankError> {
    let mut out = Vec::new();
    for t in TEMPLATES.iter() {
        if mode == BankMode::Decontextualized && !t.chart_type.decontextualizable() {
            continue;
        }
        let chart = charts.get(&t.chart_type).ok_or(QbankError::MissingChart(t.chart_type))?;
        let q = match mode {
            BankMode::Full => build_question(t, chart, opts)?,
            BankMode::Decontextualized => {
                let (dc, _) = chartgen::decontextualize(chart)?;
                build_question(t, &dc, opts)?
            }
        };
        out.push(q);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_partition_and_pairs() {
        let counts: Vec<usize> = ChartType::ALL.iter().map(|c| templates_for(*c).count()).collect();
        assert_eq!(counts, vec![5, 4, 5, 3, 3, 3, 7, 4, 6, 7, 3, 3]);
        assert_eq!(tested_pairs().len(), 49);
        let ids: Vec<u8> = templates().iter().map(|t| t.id).collect();
        assert_eq!(ids, (1..=53).collect::<Vec<u8>>());
    }

    #[test]
    fn option_counts_by_mode() {
        let four = templates().iter().filter(|t| t.answer_mode == AnswerMode::MultipleChoice4).count();
        let three = templates().iter().filter(|t| t.answer_mode == AnswerMode::MultipleChoice3).count();
        let two = templates().iter().filter(|t| t.answer_mode == AnswerMode::TrueFalse).count();
        assert_eq!((four, three, two), (34, 3, 16));
    }

    #[test]
    fn simplify_labels() {
        assert_eq!(simplify_task_label("Retrieve Value (Absolute Value)"), "Retrieve Value");
        assert_eq!(TaskType::parse("Make Comparisons (Relative Value)"), Some(TaskType::MakeComparisons));
        assert_eq!(TaskType::parse("Find Correlation/Trend"), Some(TaskType::FindCorrelationTrend));
    }

    #[test]
    fn extremum_margin() {
        assert_eq!(unique_extremum(&[1.0, 5.0, 3.0], true, 0.1), Some(1));
        assert_eq!(unique_extremum(&[1.0, 5.0, 5.0], true, 0.0), None);
        assert_eq!(unique_extremum(&[0.0, 10.0, 9.5], true, 0.1), None);
        assert_eq!(unique_extremum(&[0.0, 10.0, 8.9], true, 0.1), Some(1));
    }

    #[test]
    fn trend_classes() {
        assert_eq!(classify_trend(&[10.0, 20.0, 30.0], 100.0), Some(TrendDirection::Increasing));
        assert_eq!(classify_trend(&[30.0, 20.0, 10.0], 100.0), Some(TrendDirection::Decreasing));
        assert_eq!(classify_trend(&[50.0, 51.0, 50.0], 100.0), Some(TrendDirection::Flat));
        assert_eq!(classify_trend(&[50.0, 54.0, 57.0], 100.0), None);
    }
}
