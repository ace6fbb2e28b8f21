//! Deterministic 2D grid world: cells, poses, scripted obstacle events and
//! odometry drift.
//!
//! World frame: cell `(row, col)` covers `x ∈ [col·cs, (col+1)·cs)` and
//! `y ∈ [row·cs, (row+1)·cs)`. Yaw is measured from +x towards +y.

mod motion;
mod raycast;
mod sensor;

pub use motion::{MotionResult, Odometry};
pub use raycast::RayHit;
pub use sensor::{LidarScan, ObservationSignature, DEFAULT_MAX_RANGE, DEFAULT_RAYS};

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};

/// Grid cell index `(row, col)`.
pub type CellIndex = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Wall,
    /// Blocks motion but is transparent to the LiDAR.
    Hidden,
    Free(u8),
}

impl Cell {
    pub fn is_free(self) -> bool {
        matches!(self, Cell::Free(_))
    }

    pub fn blocks_lidar(self) -> bool {
        matches!(self, Cell::Wall)
    }

    pub fn blocks_motion(self) -> bool {
        !self.is_free()
    }

    fn from_char(ch: char) -> Option<Cell> {
        match ch {
            '#' => Some(Cell::Wall),
            '!' => Some(Cell::Hidden),
            '.' => Some(Cell::Free(0)),
            'a'..='z' => Some(Cell::Free(ch as u8 - b'a' + 1)),
            _ => None,
        }
    }

    fn to_char(self) -> char {
        match self {
            Cell::Wall => '#',
            Cell::Hidden => '!',
            Cell::Free(0) => '.',
            Cell::Free(l) => (b'a' + l - 1) as char,
        }
    }
}

/// Planar pose; yaw normalized to `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Bearing from `self` to `other` in `[0, 2π)`.
    pub fn bearing_to(&self, other: &Pose) -> f64 {
        normalize_angle((other.y - self.y).atan2(other.x - self.x))
    }

    pub fn offset(&self, angle: f64, dist: f64) -> Pose {
        Pose::new(
            self.x + dist * angle.cos(),
            self.y + dist * angle.sin(),
            self.yaw,
        )
    }
}

pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Per-motion odometry bias.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    #[serde(default)]
    pub dx: f64,
    #[serde(default)]
    pub dy: f64,
    #[serde(default)]
    pub dyaw: f64,
}

impl Drift {
    pub fn is_zero(&self) -> bool {
        self.dx == 0.0 && self.dy == 0.0 && self.dyaw == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObstacleEvent {
    pub step: usize,
    pub from: [usize; 2],
    pub to: [usize; 2],
}

/// On-disk world description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldDescription {
    pub cell_size: f64,
    pub grid: Vec<String>,
    #[serde(default)]
    pub obstacle_events: Vec<ObstacleEvent>,
    #[serde(default)]
    pub drift: Drift,
    /// Optional fixed start cell; otherwise starts are drawn per seed.
    #[serde(default)]
    pub start: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    cells: Vec<Cell>,
    rows: usize,
    cols: usize,
    pub cell_size: f64,
    pub obstacle_events: Vec<ObstacleEvent>,
    pub drift: Drift,
    pub start: Option<CellIndex>,
}

impl World {
    /// Parses and validates a TOML world description.
    pub fn from_toml_str(text: &str) -> Result<World> {
        let desc: WorldDescription =
            toml::from_str(text).map_err(|e| NavError::WorldParse(e.to_string()))?;
        World::from_description(&desc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<World> {
        let text = std::fs::read_to_string(path)?;
        World::from_toml_str(&text)
    }

    pub fn from_description(desc: &WorldDescription) -> Result<World> {
        if !(desc.cell_size.is_finite() && desc.cell_size > 0.0) {
            return Err(NavError::WorldParse(format!(
                "cell_size must be positive, got {}",
                desc.cell_size
            )));
        }
        let rows = desc.grid.len();
        if rows == 0 {
            return Err(NavError::WorldParse("empty grid".into()));
        }
        let cols = desc.grid[0].chars().count();
        let mut cells = Vec::with_capacity(rows * cols);
        for (r, line) in desc.grid.iter().enumerate() {
            let n = line.chars().count();
            if n != cols {
                return Err(NavError::NonRectangular {
                    row: r,
                    found: n,
                    expected: cols,
                });
            }
            for (c, ch) in line.chars().enumerate() {
                let cell = Cell::from_char(ch).ok_or_else(|| {
                    NavError::WorldParse(format!("unknown cell character {ch:?} at ({r}, {c})"))
                })?;
                cells.push(cell);
            }
        }
        let world = World {
            cells,
            rows,
            cols,
            cell_size: desc.cell_size,
            obstacle_events: desc.obstacle_events.clone(),
            drift: desc.drift,
            start: desc.start.map(|[r, c]| (r, c)),
        };
        world.validate()?;
        Ok(world)
    }

    fn validate(&self) -> Result<()> {
        for r in 0..self.rows {
            for c in 0..self.cols {
                let edge = r == 0 || c == 0 || r + 1 == self.rows || c + 1 == self.cols;
                if edge && self.cell((r, c)) != Cell::Wall {
                    return Err(NavError::OpenBoundary { row: r, col: c });
                }
            }
        }
        if !self.cells.iter().any(|c| c.is_free()) {
            return Err(NavError::NoFreeCell);
        }
        if let Some(s) = self.start {
            if !self.in_bounds(s) || !self.cell(s).is_free() {
                return Err(NavError::WorldParse(format!(
                    "start cell {s:?} is not free"
                )));
            }
        }
        // Replay the schedule on a scratch copy so each event is checked
        // against the grid as it will be when it fires.
        let mut order: Vec<usize> = (0..self.obstacle_events.len()).collect();
        order.sort_by_key(|&i| (self.obstacle_events[i].step, i));
        let mut scratch = self.cells.clone();
        for i in order {
            let ev = self.obstacle_events[i];
            let bad = |reason: &str| NavError::InvalidObstacleEvent {
                index: i,
                step: ev.step,
                reason: reason.to_string(),
            };
            let from = (ev.from[0], ev.from[1]);
            let to = (ev.to[0], ev.to[1]);
            if !self.in_bounds(from) || !self.in_bounds(to) {
                return Err(bad("cell out of bounds"));
            }
            if from == to {
                return Err(bad("from and to are the same cell"));
            }
            let is_edge =
                |(r, c): CellIndex| r == 0 || c == 0 || r + 1 == self.rows || c + 1 == self.cols;
            if is_edge(from) || is_edge(to) {
                return Err(bad("boundary cells cannot move"));
            }
            let fi = from.0 * self.cols + from.1;
            let ti = to.0 * self.cols + to.1;
            if scratch[fi].is_free() {
                return Err(bad("from-cell is not occupied"));
            }
            if !scratch[ti].is_free() {
                return Err(bad("to-cell is not free"));
            }
            scratch[ti] = scratch[fi];
            scratch[fi] = Cell::Free(0);
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn in_bounds(&self, (r, c): CellIndex) -> bool {
        r < self.rows && c < self.cols
    }

    pub fn cell(&self, (r, c): CellIndex) -> Cell {
        self.cells[r * self.cols + c]
    }

    pub fn set_cell(&mut self, (r, c): CellIndex, cell: Cell) {
        self.cells[r * self.cols + c] = cell;
    }

    /// Cell containing the world point, if inside the grid.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<CellIndex> {
        if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 {
            return None;
        }
        let c = (x / self.cell_size).floor() as usize;
        let r = (y / self.cell_size).floor() as usize;
        self.in_bounds((r, c)).then_some((r, c))
    }

    pub fn cell_center(&self, (r, c): CellIndex) -> Pose {
        Pose::new(
            (c as f64 + 0.5) * self.cell_size,
            (r as f64 + 0.5) * self.cell_size,
            0.0,
        )
    }

    pub fn is_free_at(&self, pose: &Pose) -> bool {
        self.cell_at(pose.x, pose.y)
            .map(|c| self.cell(c).is_free())
            .unwrap_or(false)
    }

    pub fn free_cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        (0..self.rows)
            .flat_map(move |r| (0..self.cols).map(move |c| (r, c)))
            .filter(move |&rc| self.cell(rc).is_free())
    }

    /// Free cells 4-connected to `start` through free cells.
    pub fn reachable_cells(&self, start: CellIndex) -> Vec<CellIndex> {
        let mut seen = vec![false; self.rows * self.cols];
        let mut out = Vec::new();
        if !self.in_bounds(start) || !self.cell(start).is_free() {
            return out;
        }
        let mut queue = std::collections::VecDeque::from([start]);
        seen[start.0 * self.cols + start.1] = true;
        while let Some((r, c)) = queue.pop_front() {
            out.push((r, c));
            for (nr, nc) in self.neighbors4((r, c)) {
                let i = nr * self.cols + nc;
                if !seen[i] && self.cell((nr, nc)).is_free() {
                    seen[i] = true;
                    queue.push_back((nr, nc));
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn neighbors4(&self, (r, c): CellIndex) -> impl Iterator<Item = CellIndex> {
        let rows = self.rows;
        let cols = self.cols;
        [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)]
            .into_iter()
            .filter_map(move |(dr, dc)| {
                let nr = r as i64 + dr;
                let nc = c as i64 + dc;
                (nr >= 0 && nc >= 0 && (nr as usize) < rows && (nc as usize) < cols)
                    .then_some((nr as usize, nc as usize))
            })
    }

    /// Applies every obstacle event scheduled at `step`. Returns the number
    /// applied; a step without events leaves the world unchanged.
    pub fn apply_obstacle_event(&mut self, step: usize) -> Result<usize> {
        let due: Vec<(usize, ObstacleEvent)> = self
            .obstacle_events
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, e)| e.step == step)
            .collect();
        for &(index, ev) in &due {
            let from = (ev.from[0], ev.from[1]);
            let to = (ev.to[0], ev.to[1]);
            let moving = self.cell(from);
            if moving.is_free() || !self.cell(to).is_free() {
                return Err(NavError::InvalidObstacleEvent {
                    index,
                    step,
                    reason: "event no longer consistent with grid".into(),
                });
            }
            self.set_cell(to, moving);
            self.set_cell(from, Cell::Free(0));
        }
        Ok(due.len())
    }

    /// Renders the grid back to the text form used by world files.
    pub fn grid_lines(&self) -> Vec<String> {
        (0..self.rows)
            .map(|r| {
                (0..self.cols)
                    .map(|c| self.cell((r, c)).to_char())
                    .collect()
            })
            .collect()
    }

    pub fn area_m2(&self) -> f64 {
        self.rows as f64 * self.cols as f64 * self.cell_size * self.cell_size
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desc(grid: &[&str]) -> WorldDescription {
        WorldDescription {
            cell_size: 1.0,
            grid: grid.iter().map(|s| s.to_string()).collect(),
            obstacle_events: vec![],
            drift: Drift::default(),
            start: None,
        }
    }

    #[test]
    fn minimal_world_has_nine_free_cells() {
        let w =
            World::from_description(&desc(&["#####", "#...#", "#...#", "#...#", "#####"])).unwrap();
        assert_eq!(w.free_cells().count(), 9);
    }

    #[test]
    fn rejects_ragged_and_open_grids() {
        let e = World::from_description(&desc(&["####", "#..", "####"])).unwrap_err();
        assert!(matches!(e, NavError::NonRectangular { row: 1, .. }));
        let e = World::from_description(&desc(&["####", "#...", "####"])).unwrap_err();
        assert!(matches!(e, NavError::OpenBoundary { row: 1, col: 3 }));
        let e = World::from_description(&desc(&["###", "###", "###"])).unwrap_err();
        assert!(matches!(e, NavError::NoFreeCell));
    }

    #[test]
    fn labels_parse() {
        let w = World::from_description(&desc(&["####", "#az#", "####"])).unwrap();
        assert_eq!(w.cell((1, 1)), Cell::Free(1));
        assert_eq!(w.cell((1, 2)), Cell::Free(26));
        assert_eq!(w.grid_lines()[1], "#az#");
    }

    #[test]
    fn event_into_wall_is_rejected() {
        let mut d = desc(&["#####", "#.#.#", "#...#", "#####"]);
        d.obstacle_events.push(ObstacleEvent {
            step: 3,
            from: [1, 2],
            to: [0, 2],
        });
        assert!(matches!(
            World::from_description(&d),
            Err(NavError::InvalidObstacleEvent { .. })
        ));
        d.obstacle_events[0].to = [2, 2];
        d.obstacle_events.push(ObstacleEvent {
            step: 5,
            from: [1, 2],
            to: [2, 1],
        });
        // second event's from-cell was vacated by the first
        assert!(World::from_description(&d).is_err());
    }

    #[test]
    fn events_apply_at_their_step_only() {
        let mut d = desc(&["######", "#.#..#", "#..#.#", "#....#", "######"]);
        d.obstacle_events = vec![
            ObstacleEvent {
                step: 4,
                from: [1, 2],
                to: [1, 1],
            },
            ObstacleEvent {
                step: 4,
                from: [2, 3],
                to: [3, 3],
            },
        ];
        let mut w = World::from_description(&d).unwrap();
        let before = w.clone();
        assert_eq!(w.apply_obstacle_event(3).unwrap(), 0);
        assert_eq!(w, before);
        assert_eq!(w.apply_obstacle_event(4).unwrap(), 2);
        assert_eq!(w.cell((1, 1)), Cell::Wall);
        assert_eq!(w.cell((1, 2)), Cell::Free(0));
        assert_eq!(w.cell((3, 3)), Cell::Wall);
        assert_eq!(w.cell((2, 3)), Cell::Free(0));

        // disjoint events commute
        let mut d2 = d.clone();
        d2.obstacle_events.reverse();
        let mut w2 = World::from_description(&d2).unwrap();
        w2.apply_obstacle_event(4).unwrap();
        assert_eq!(w.grid_lines(), w2.grid_lines());
    }

    #[test]
    fn yaw_is_normalized() {
        let p = Pose::new(0.0, 0.0, -0.5);
        assert!((p.yaw - (TAU - 0.5)).abs() < 1e-12);
        assert_eq!(Pose::new(0.0, 0.0, TAU).yaw, 0.0);
        assert!(Pose::new(0.0, 0.0, -1e-20).yaw < TAU);
    }

    #[test]
    fn toml_round_trip() {
        let text = concat!(
            "cell_size = 0.5\n",
            "grid = ['#####', '#.a.#', '#####']\n",
            "drift = { dx = 0.05 }\n",
            "[[obstacle_events]]\n",
            "step = 2\n",
            "from = [1, 2]\n",
            "to = [1, 1]\n",
        );
        assert!(World::from_toml_str(text).is_err()); // from-cell is free
        let ok = text.replace("#.a.#", "#.#.#");
        let w = World::from_toml_str(&ok).unwrap();
        assert_eq!(w.drift.dx, 0.05);
        assert_eq!(w.obstacle_events.len(), 1);
    }
}
