//! Binary interaction design over the four dimensions V (chart type),
//! T (simplified task), L (LLM) and P (visualization presence).

use super::StatsError;
use crate::chart::ChartType;
use crate::qbank::{tested_pairs, TaskType};
use crate::scoring::ScoreRecord;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Number of active interaction columns per row (2^4 - 1).
pub const ACTIVE_PER_ROW: usize = 15;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnLabel {
    pub chart: Option<ChartType>,
    pub task: Option<TaskType>,
    pub llm: Option<String>,
    pub vis: Option<bool>,
}

impl ColumnLabel {
    pub fn order(&self) -> usize {
        [self.chart.is_some(), self.task.is_some(), self.llm.is_some(), self.vis.is_some()]
            .iter()
            .filter(|b| **b)
            .count()
    }

    /// Dimension letters present, e.g. "VT" or "VTLP".
    pub fn group(&self) -> String {
        let mut s = String::new();
        if self.chart.is_some() {
            s.push('V');
        }
        if self.task.is_some() {
            s.push('T');
        }
        if self.llm.is_some() {
            s.push('L');
        }
        if self.vis.is_some() {
            s.push('P');
        }
        s
    }

    pub fn label(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        if let Some(c) = self.chart {
            parts.push(format!("V={}", c.as_str()));
        }
        if let Some(t) = self.task {
            parts.push(format!("T={}", t.label()));
        }
        if let Some(l) = &self.llm {
            parts.push(format!("L={l}"));
        }
        if let Some(v) = self.vis {
            parts.push(format!("P={}", vis_label(v)));
        }
        parts.join("|")
    }
}

pub fn vis_label(v: bool) -> &'static str {
    if v {
        "vis"
    } else {
        "novis"
    }
}

/// One fully specified (V, T, L, P) combination.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub chart: ChartType,
    pub task: TaskType,
    pub llm: String,
    pub vis: bool,
}

impl CellKey {
    pub fn label(&self) -> String {
        format!("{}|{}|{}|{}", self.chart.as_str(), self.task.label(), self.llm, vis_label(self.vis))
    }
}

type Key = (Option<u8>, Option<u8>, Option<u8>, Option<u8>);

/// Column and cell layout; independent of any particular record set.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpace {
    pub llms: Vec<String>,
    pub pairs: Vec<(ChartType, TaskType)>,
    pub columns: Vec<ColumnLabel>,
    pub cells: Vec<CellKey>,
    /// Active column indices for each cell, ascending.
    pub cell_active: Vec<[u32; ACTIVE_PER_ROW]>,
    /// For each column, the cells in which it is active.
    pub column_cells: Vec<Vec<u32>>,
    index: BTreeMap<Key, u32>,
}

const PRESENCE: [bool; 2] = [true, false];

impl DesignSpace {
    pub fn new(llms: &[String]) -> DesignSpace {
        let mut pairs = tested_pairs();
        pairs.sort();
        let charts: Vec<ChartType> = ChartType::ALL.to_vec();
        let tasks: Vec<TaskType> = TaskType::ALL.to_vec();
        let nl = llms.len() as u8;
        let ci = |c: ChartType| charts.iter().position(|x| *x == c).unwrap() as u8;
        let ti = |t: TaskType| tasks.iter().position(|x| *x == t).unwrap() as u8;
        let mut keys: Vec<Key> = Vec::new();
        // One-way.
        keys.extend((0..charts.len() as u8).map(|v| (Some(v), None, None, None)));
        keys.extend((0..tasks.len() as u8).map(|t| (None, Some(t), None, None)));
        keys.extend((0..nl).map(|l| (None, None, Some(l), None)));
        keys.extend((0..2u8).map(|p| (None, None, None, Some(p))));
        // Two-way.
        keys.extend(pairs.iter().map(|(c, t)| (Some(ci(*c)), Some(ti(*t)), None, None)));
        for v in 0..charts.len() as u8 {
            keys.extend((0..nl).map(|l| (Some(v), None, Some(l), None)));
        }
        for v in 0..charts.len() as u8 {
            keys.extend((0..2u8).map(|p| (Some(v), None, None, Some(p))));
        }
        for t in 0..tasks.len() as u8 {
            keys.extend((0..nl).map(|l| (None, Some(t), Some(l), None)));
        }
        for t in 0..tasks.len() as u8 {
            keys.extend((0..2u8).map(|p| (None, Some(t), None, Some(p))));
        }
        for l in 0..nl {
            keys.extend((0..2u8).map(|p| (None, None, Some(l), Some(p))));
        }
        // Three-way.
        for (c, t) in &pairs {
            keys.extend((0..nl).map(|l| (Some(ci(*c)), Some(ti(*t)), Some(l), None)));
        }
        for (c, t) in &pairs {
            keys.extend((0..2u8).map(|p| (Some(ci(*c)), Some(ti(*t)), None, Some(p))));
        }
        for v in 0..charts.len() as u8 {
            for l in 0..nl {
                keys.extend((0..2u8).map(|p| (Some(v), None, Some(l), Some(p))));
            }
        }
        for t in 0..tasks.len() as u8 {
            for l in 0..nl {
                keys.extend((0..2u8).map(|p| (None, Some(t), Some(l), Some(p))));
            }
        }
        // Four-way.
        for (c, t) in &pairs {
            for l in 0..nl {
                keys.extend((0..2u8).map(|p| (Some(ci(*c)), Some(ti(*t)), Some(l), Some(p))));
            }
        }

        let columns: Vec<ColumnLabel> = keys
            .iter()
            .map(|(v, t, l, p)| ColumnLabel {
                chart: v.map(|i| charts[i as usize]),
                task: t.map(|i| tasks[i as usize]),
                llm: l.map(|i| llms[i as usize].clone()),
                vis: p.map(|i| PRESENCE[i as usize]),
            })
            .collect();
        let index: BTreeMap<Key, u32> = keys.iter().enumerate().map(|(i, k)| (*k, i as u32)).collect();

        let mut cells = Vec::new();
        let mut cell_active = Vec::new();
        for (c, t) in &pairs {
            for (l, llm) in llms.iter().enumerate() {
                for (p, vis) in PRESENCE.iter().enumerate() {
                    let full = (ci(*c), ti(*t), l as u8, p as u8);
                    let mut act = [0u32; ACTIVE_PER_ROW];
                    let mut n = 0;
                    for mask in 1u8..16 {
                        let k: Key = (
                            (mask & 1 != 0).then_some(full.0),
                            (mask & 2 != 0).then_some(full.1),
                            (mask & 4 != 0).then_some(full.2),
                            (mask & 8 != 0).then_some(full.3),
                        );
                        act[n] = index[&k];
                        n += 1;
                    }
                    act.sort_unstable();
                    cells.push(CellKey { chart: *c, task: *t, llm: llm.clone(), vis: *vis });
                    cell_active.push(act);
                }
            }
        }
        let mut column_cells = alloc::vec![Vec::new(); columns.len()];
        for (ci, act) in cell_active.iter().enumerate() {
            for &j in act {
                column_cells[j as usize].push(ci as u32);
            }
        }
        DesignSpace { llms: llms.to_vec(), pairs, columns, cells, cell_active, column_cells, index }
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Column counts by interaction order (one-way .. four-way).
    pub fn group_counts(&self) -> [usize; 4] {
        let mut g = [0; 4];
        for c in &self.columns {
            g[c.order() - 1] += 1;
        }
        g
    }

    pub fn cell_index(&self, chart: ChartType, task: TaskType, llm: &str, vis: bool) -> Option<usize> {
        let pi = self.pairs.iter().position(|p| *p == (chart, task))?;
        let li = self.llms.iter().position(|l| l == llm)?;
        Some((pi * self.llms.len() + li) * 2 + if vis { 0 } else { 1 })
    }

    pub fn column_index(&self, label: &ColumnLabel) -> Option<usize> {
        let k: Key = (
            label.chart.map(|c| c.index() as u8),
            label.task.map(|t| t.index() as u8),
            match &label.llm {
                Some(l) => Some(self.llms.iter().position(|x| x == l)? as u8),
                None => None,
            },
            label.vis.map(|v| if v { 0 } else { 1 }),
        );
        self.index.get(&k).map(|i| *i as usize)
    }
}

/// Rows are stored as cell indices; every row of a cell shares the same
/// 15 active columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub space: DesignSpace,
    pub row_cell: Vec<u32>,
    pub y: Vec<bool>,
    /// Records dropped because they carried a transport error.
    pub dropped: usize,
}

/// Per-cell trial and success counts (possibly weighted).
#[derive(Debug, Clone, PartialEq)]
pub struct CellCounts {
    pub n: Vec<f64>,
    pub pos: Vec<f64>,
}

impl CellCounts {
    pub fn zeros(cells: usize) -> CellCounts {
        CellCounts { n: alloc::vec![0.0; cells], pos: alloc::vec![0.0; cells] }
    }

    pub fn total(&self) -> f64 {
        self.n.iter().sum()
    }
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.row_cell.len()
    }

    pub fn n_columns(&self) -> usize {
        self.space.n_columns()
    }

    pub fn active(&self, row: usize) -> &[u32; ACTIVE_PER_ROW] {
        &self.space.cell_active[self.row_cell[row] as usize]
    }

    pub fn dense_row(&self, row: usize) -> Vec<u8> {
        let mut r = alloc::vec![0u8; self.n_columns()];
        for &j in self.active(row) {
            r[j as usize] = 1;
        }
        r
    }

    pub fn counts(&self) -> CellCounts {
        self.counts_for(0..self.n_rows())
    }

    pub fn counts_for(&self, rows: impl IntoIterator<Item = usize>) -> CellCounts {
        let mut c = CellCounts::zeros(self.space.n_cells());
        for r in rows {
            let ci = self.row_cell[r] as usize;
            c.n[ci] += 1.0;
            if self.y[r] {
                c.pos[ci] += 1.0;
            }
        }
        c
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|b| **b).count()
    }
}

/// LLM levels found in the records, sorted.
pub fn llm_levels(scores: &[ScoreRecord]) -> Vec<String> {
    let set: BTreeSet<&str> = scores.iter().map(|s| s.llm_id.as_str()).collect();
    set.into_iter().map(|s| s.to_string()).collect()
}

pub fn build_design_matrix(scores: &[ScoreRecord]) -> Result<DesignMatrix, StatsError> {
    build_design_matrix_in(scores, DesignSpace::new(&llm_levels(scores)))
}

pub fn build_design_matrix_in(scores: &[ScoreRecord], space: DesignSpace) -> Result<DesignMatrix, StatsError> {
    let mut row_cell = Vec::with_capacity(scores.len());
    let mut y = Vec::with_capacity(scores.len());
    let mut dropped = 0;
    for s in scores {
        if s.transport_error {
            dropped += 1;
            continue;
        }
        let ci = space.cell_index(s.chart_type, s.task, &s.llm_id, s.vis_present).ok_or_else(|| {
            StatsError::UnknownDimensionValue(format!(
                "{} / {} / {} / {}",
                s.chart_type.as_str(),
                s.task.label(),
                s.llm_id,
                vis_label(s.vis_present)
            ))
        })?;
        row_cell.push(ci as u32);
        y.push(s.correct);
    }
    if row_cell.is_empty() {
        return Err(StatsError::EmptyDesign);
    }
    Ok(DesignMatrix { space, row_cell, y, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn two() -> DesignSpace {
        DesignSpace::new(&["gemini".to_string(), "gpt".to_string()])
    }

    #[test]
    fn group_arithmetic() {
        let s = two();
        assert_eq!(s.group_counts(), [24, 133, 276, 196]);
        assert_eq!(s.n_columns(), 629);
        assert_eq!(s.n_cells(), 196);
    }

    #[test]
    fn fifteen_active_by_enumeration() {
        let s = two();
        for (i, cell) in s.cells.iter().enumerate() {
            // Brute force: a column is active iff every dimension it fixes matches the cell.
            let brute: Vec<u32> = s
                .columns
                .iter()
                .enumerate()
                .filter(|(_, c)| {
                    c.chart.is_none_or(|v| v == cell.chart)
                        && c.task.is_none_or(|t| t == cell.task)
                        && c.llm.as_ref().is_none_or(|l| *l == cell.llm)
                        && c.vis.is_none_or(|p| p == cell.vis)
                })
                .map(|(j, _)| j as u32)
                .collect();
            assert_eq!(brute.len(), 15);
            assert_eq!(brute, s.cell_active[i].to_vec());
        }
    }

    #[test]
    fn untested_pair_has_no_column() {
        let s = two();
        let label = ColumnLabel { chart: Some(ChartType::Line), task: Some(TaskType::FindAnomalies), llm: None, vis: None };
        assert!(s.column_index(&label).is_none());
        assert!(s.cell_index(ChartType::Line, TaskType::FindAnomalies, "gpt", true).is_none());
        let ok = ColumnLabel { chart: Some(ChartType::Line), task: Some(TaskType::RetrieveValue), llm: None, vis: None };
        assert!(s.column_index(&ok).is_some());
        assert_eq!(vec![s.columns[0].group()], vec!["V".to_string()]);
    }
}
