//! Coverage shared by the agent and the frontier baseline: the fraction of
//! reachable free cells whose centre has been in LiDAR line of sight, within
//! range, from some scan point.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::world::{CellIndex, Pose, World};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTracker {
    reachable: Vec<CellIndex>,
    covered: BTreeSet<CellIndex>,
    max_range: f64,
}

impl CoverageTracker {
    /// Tracks the cells 4-connected to `start` in the initial world.
    pub fn new(world: &World, start: CellIndex, max_range: f64) -> Self {
        Self {
            reachable: world.reachable_cells(start),
            covered: BTreeSet::new(),
            max_range,
        }
    }

    pub fn reachable_count(&self) -> usize {
        self.reachable.len()
    }

    pub fn covered_count(&self) -> usize {
        self.covered.len()
    }

    /// Credits every reachable cell visible from `pose`; returns how many
    /// were newly covered.
    pub fn observe(&mut self, world: &World, pose: &Pose) -> usize {
        let before = self.covered.len();
        for &cell in &self.reachable {
            if self.covered.contains(&cell) {
                continue;
            }
            let centre = world.cell_center(cell);
            if centre.distance(pose) <= self.max_range && world.segment_clear(pose, &centre, true) {
                self.covered.insert(cell);
            }
        }
        self.covered.len() - before
    }

    pub fn fraction(&self) -> f64 {
        if self.reachable.is_empty() {
            return 1.0;
        }
        self.covered.len() as f64 / self.reachable.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::WorldDescription;

    fn world(grid: &[&str]) -> World {
        World::from_description(&WorldDescription {
            cell_size: 1.0,
            grid: grid.iter().map(|s| s.to_string()).collect(),
            obstacle_events: vec![],
            drift: Default::default(),
            start: None,
        })
        .unwrap()
    }

    #[test]
    fn open_room_is_covered_from_the_middle() {
        let w = world(&["#####", "#...#", "#...#", "#...#", "#####"]);
        let mut cov = CoverageTracker::new(&w, (2, 2), 12.0);
        assert_eq!(cov.reachable_count(), 9);
        assert_eq!(cov.observe(&w, &w.cell_center((2, 2))), 9);
        assert_eq!(cov.fraction(), 1.0);
        assert_eq!(cov.observe(&w, &w.cell_center((2, 2))), 0);
    }

    #[test]
    fn wall_hides_the_other_room() {
        let w = world(&["#######", "#.....#", "###.###", "#.....#", "#######"]);
        let mut cov = CoverageTracker::new(&w, (1, 1), 12.0);
        cov.observe(&w, &w.cell_center((1, 1)));
        assert!(cov.fraction() < 0.6);
        let short = {
            let mut c = CoverageTracker::new(&w, (1, 1), 1.0);
            c.observe(&w, &w.cell_center((1, 1)));
            c.covered_count()
        };
        assert_eq!(short, 2);
    }
}
