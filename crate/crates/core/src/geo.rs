//! Tile-grid geometry of the 50 US states used by the choropleth map.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

const TILES: &str = include_str!("../data/us_state_tiles.csv");

#[derive(Debug, Clone, PartialEq)]
pub struct StateTile {
    pub code: String,
    pub name: String,
    pub row: u32,
    pub col: u32,
}

pub fn state_tiles() -> Vec<StateTile> {
    TILES
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .filter_map(|l| {
            let mut it = l.split(',');
            let code = it.next()?.to_string();
            let name = it.next()?.to_string();
            let row = it.next()?.trim().parse().ok()?;
            let col = it.next()?.trim().parse().ok()?;
            Some(StateTile { code, name, row, col })
        })
        .collect()
}

pub fn state_name(code: &str) -> Option<String> {
    state_tiles().into_iter().find(|t| t.code == code).map(|t| t.name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifty_states_on_distinct_tiles() {
        let t = state_tiles();
        assert_eq!(t.len(), 50);
        let mut cells: Vec<(u32, u32)> = t.iter().map(|s| (s.row, s.col)).collect();
        cells.sort();
        cells.dedup();
        assert_eq!(cells.len(), 50);
        assert_eq!(state_name("IN").as_deref(), Some("Indiana"));
    }
}
