use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const GRID_H: usize = 19;
pub const GRID_W: usize = 19;

/// Default coordinate table, bundled as data.
pub const DEFAULT_LAYOUT: &str = include_str!("../../layouts/seed62_19x19.txt");

/// The 62 ESI NeuroScan channels in recording order.
pub const SEED_CHANNELS: [&str; 62] = [
    "FP1", "FPZ", "FP2", "AF3", "AF4", "F7", "F5", "F3", "F1", "FZ", "F2", "F4", "F6", "F8", "FT7",
    "FC5", "FC3", "FC1", "FCZ", "FC2", "FC4", "FC6", "FT8", "T7", "C5", "C3", "C1", "CZ", "C2",
    "C4", "C6", "T8", "TP7", "CP5", "CP3", "CP1", "CPZ", "CP2", "CP4", "CP6", "TP8", "P7", "P5",
    "P3", "P1", "PZ", "P2", "P4", "P6", "P8", "PO7", "PO5", "PO3", "POZ", "PO4", "PO6", "PO8",
    "CB1", "O1", "OZ", "O2", "CB2",
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Placement {
    pub channel: String,
    pub row: usize,
    pub col: usize,
}

/// Channel-to-cell assignment on an `h × w` grid, in declared channel order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ElectrodeLayout {
    pub grid_h: usize,
    pub grid_w: usize,
    pub placements: Vec<Placement>,
}

impl ElectrodeLayout {
    /// The bundled 62-channel 19×19 layout.
    pub fn seed62() -> Self {
        Self::parse(DEFAULT_LAYOUT, GRID_H, GRID_W, &SEED_CHANNELS)
            .expect("bundled layout is valid")
    }

    /// Parse `name row col` lines (`#` starts a comment) and validate them
    /// against the grid bounds and the `required` channel set.
    pub fn parse(text: &str, grid_h: usize, grid_w: usize, required: &[&str]) -> Result<Self> {
        let mut placements = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [name, row, col] = fields[..] else {
                return Err(Error::Layout {
                    channel: fields.first().unwrap_or(&"?").to_string(),
                    reason: format!("line {}: expected `name row col`", lineno + 1),
                });
            };
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| Error::Layout {
                    channel: name.to_string(),
                    reason: format!("line {}: bad coordinate {s:?}", lineno + 1),
                })
            };
            placements.push(Placement {
                channel: name.to_ascii_uppercase(),
                row: parse(row)?,
                col: parse(col)?,
            });
        }
        let layout = Self {
            grid_h,
            grid_w,
            placements,
        };
        layout.validate(required)?;
        Ok(layout)
    }

    pub fn validate(&self, required: &[&str]) -> Result<()> {
        let err = |channel: &str, reason: String| Error::Layout {
            channel: channel.to_string(),
            reason,
        };
        let mut cells: HashMap<(usize, usize), &str> = HashMap::new();
        let mut names: HashMap<&str, ()> = HashMap::new();
        for p in &self.placements {
            if p.row >= self.grid_h || p.col >= self.grid_w {
                return Err(err(
                    &p.channel,
                    format!("cell ({}, {}) outside {}x{} grid", p.row, p.col, self.grid_h, self.grid_w),
                ));
            }
            if names.insert(&p.channel, ()).is_some() {
                return Err(err(&p.channel, "listed twice".into()));
            }
            if let Some(other) = cells.insert((p.row, p.col), &p.channel) {
                return Err(err(
                    &p.channel,
                    format!("cell ({}, {}) already holds {other}", p.row, p.col),
                ));
            }
        }
        for r in required {
            if !names.contains_key(r.to_ascii_uppercase().as_str()) {
                return Err(err(r, "missing from layout".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.placements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placements.is_empty()
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.placements.iter().map(|p| p.channel.clone()).collect()
    }

    /// Channel at a cell, if any.
    pub fn channel_at(&self, row: usize, col: usize) -> Option<&str> {
        self.placements
            .iter()
            .find(|p| p.row == row && p.col == col)
            .map(|p| p.channel.as_str())
    }

    /// Row-major occupancy mask of the grid.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.grid_h * self.grid_w];
        for p in &self.placements {
            m[p.row * self.grid_w + p.col] = true;
        }
        m
    }
}

/// Read a layout file that must place all 62 recording channels on 19×19.
pub fn load_layout(path: &Path) -> Result<ElectrodeLayout> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ElectrodeLayout::parse(&text, GRID_H, GRID_W, &SEED_CHANNELS)
}
