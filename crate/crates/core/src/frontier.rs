//! Nearest-frontier exploration baseline on an occupancy grid.
//!
//! The baseline integrates each scan at its odometry pose, so injected drift
//! corrupts its map. It plans 4-connected shortest paths through known free
//! cells and scans at every cell it reaches.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::agent::{EpisodeLog, StepReport, TerminalReason};
use crate::coverage::CoverageTracker;
use crate::error::Result;
use crate::world::{CellIndex, LidarScan, Odometry, Pose, World, DEFAULT_MAX_RANGE, DEFAULT_RAYS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Occupancy {
    Unknown,
    Free,
    Occupied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    rows: usize,
    cols: usize,
    pub resolution: f64,
    cells: Vec<Occupancy>,
}

impl OccupancyGrid {
    pub fn new(rows: usize, cols: usize, resolution: f64) -> Self {
        Self {
            rows,
            cols,
            resolution,
            cells: vec![Occupancy::Unknown; rows * cols],
        }
    }

    pub fn for_world(world: &World) -> Self {
        Self::new(world.rows(), world.cols(), world.cell_size)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, (r, c): CellIndex) -> Occupancy {
        self.cells[r * self.cols + c]
    }

    /// Marks an unknown cell; known cells never change.
    fn mark(&mut self, (r, c): CellIndex, status: Occupancy) {
        let cell = &mut self.cells[r * self.cols + c];
        if *cell == Occupancy::Unknown {
            *cell = status;
        }
    }

    pub fn cell_at(&self, x: f64, y: f64) -> Option<CellIndex> {
        if x < 0.0 || y < 0.0 {
            return None;
        }
        let (r, c) = (
            (y / self.resolution) as usize,
            (x / self.resolution) as usize,
        );
        (r < self.rows && c < self.cols).then_some((r, c))
    }

    pub fn cell_center(&self, (r, c): CellIndex) -> Pose {
        Pose::new(
            (c as f64 + 0.5) * self.resolution,
            (r as f64 + 0.5) * self.resolution,
            0.0,
        )
    }

    fn neighbors4(&self, (r, c): CellIndex) -> impl Iterator<Item = CellIndex> + '_ {
        let (rows, cols) = (self.rows, self.cols);
        [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)]
            .into_iter()
            .filter_map(move |(dr, dc)| {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                (nr >= 0 && nc >= 0 && (nr as usize) < rows && (nc as usize) < cols)
                    .then(|| (nr as usize, nc as usize))
            })
    }

    pub fn count(&self, status: Occupancy) -> usize {
        self.cells.iter().filter(|&&c| c == status).count()
    }
}

/// Cells whose interior a segment passes through, in order.
fn cells_on_segment(grid: &OccupancyGrid, x: f64, y: f64, angle: f64, len: f64) -> Vec<CellIndex> {
    let cs = grid.resolution;
    let (dx, dy) = (angle.cos(), angle.sin());
    let mut out = Vec::new();
    let Some((mut r, mut c)) = grid.cell_at(x, y) else {
        return out;
    };
    let step = |d: f64| if d > 0.0 { 1i64 } else { -1 };
    let (sx, sy) = (step(dx), step(dy));
    let next_boundary = |p: f64, i: usize, s: i64| {
        if s > 0 {
            (i as f64 + 1.0) * cs - p
        } else {
            p - i as f64 * cs
        }
    };
    let mut t_x = if dx.abs() < 1e-15 {
        f64::INFINITY
    } else {
        next_boundary(x, c, sx) / dx.abs()
    };
    let mut t_y = if dy.abs() < 1e-15 {
        f64::INFINITY
    } else {
        next_boundary(y, r, sy) / dy.abs()
    };
    let d_x = if dx.abs() < 1e-15 {
        f64::INFINITY
    } else {
        cs / dx.abs()
    };
    let d_y = if dy.abs() < 1e-15 {
        f64::INFINITY
    } else {
        cs / dy.abs()
    };
    out.push((r, c));
    loop {
        let t = t_x.min(t_y);
        if t >= len {
            break;
        }
        if t_x <= t_y {
            let nc = c as i64 + sx;
            if nc < 0 || nc as usize >= grid.cols {
                break;
            }
            c = nc as usize;
            t_x += d_x;
        } else {
            let nr = r as i64 + sy;
            if nr < 0 || nr as usize >= grid.rows {
                break;
            }
            r = nr as usize;
            t_y += d_y;
        }
        out.push((r, c));
    }
    out
}

/// Carves each ray into the grid from `pose`: traversed cells become free
/// and the cell just past a hit becomes occupied.
pub fn update_occupancy(grid: &mut OccupancyGrid, pose: &Pose, scan: &LidarScan) {
    for i in 0..scan.len() {
        let angle = scan.ray_angle(i);
        let range = scan.ranges[i];
        let cells = cells_on_segment(grid, pose.x, pose.y, angle, range);
        let hit = scan.is_hit(i).then(|| {
            let p = pose.offset(angle, range + 1e-9);
            grid.cell_at(p.x, p.y)
        });
        for cell in cells {
            if Some(Some(cell)) != hit {
                grid.mark(cell, Occupancy::Free);
            }
        }
        if let Some(Some(cell)) = hit {
            grid.mark(cell, Occupancy::Occupied);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frontier {
    pub cells: Vec<CellIndex>,
    /// Member cell closest to the cluster mean.
    pub centroid: CellIndex,
}

/// Free cells next to unknown space, clustered by 8-connectivity.
pub fn find_frontiers(grid: &OccupancyGrid) -> Vec<Frontier> {
    let is_frontier = |cell: CellIndex| {
        grid.get(cell) == Occupancy::Free
            && grid
                .neighbors4(cell)
                .any(|n| grid.get(n) == Occupancy::Unknown)
    };
    let mut seen = vec![false; grid.rows * grid.cols];
    let mut out = Vec::new();
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            if seen[r * grid.cols + c] || !is_frontier((r, c)) {
                continue;
            }
            let mut cells = Vec::new();
            let mut queue = VecDeque::from([(r, c)]);
            seen[r * grid.cols + c] = true;
            while let Some((cr, cc)) = queue.pop_front() {
                cells.push((cr, cc));
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (nr, nc) = (cr as i64 + dr, cc as i64 + dc);
                        if nr < 0 || nc < 0 || nr as usize >= grid.rows || nc as usize >= grid.cols
                        {
                            continue;
                        }
                        let n = (nr as usize, nc as usize);
                        if !seen[n.0 * grid.cols + n.1] && is_frontier(n) {
                            seen[n.0 * grid.cols + n.1] = true;
                            queue.push_back(n);
                        }
                    }
                }
            }
            cells.sort_unstable();
            let k = cells.len() as f64;
            let mr = cells.iter().map(|c| c.0 as f64).sum::<f64>() / k;
            let mc = cells.iter().map(|c| c.1 as f64).sum::<f64>() / k;
            let centroid = *cells
                .iter()
                .min_by(|a, b| {
                    let da = (a.0 as f64 - mr).powi(2) + (a.1 as f64 - mc).powi(2);
                    let db = (b.0 as f64 - mr).powi(2) + (b.1 as f64 - mc).powi(2);
                    da.total_cmp(&db).then(a.cmp(b))
                })
                .expect("cluster is non-empty");
            out.push(Frontier { cells, centroid });
        }
    }
    out
}

/// Breadth-first distances through free cells from `start`.
pub fn bfs_free(grid: &OccupancyGrid, start: CellIndex) -> Vec<Option<usize>> {
    let mut dist = vec![None; grid.rows * grid.cols];
    dist[start.0 * grid.cols + start.1] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(cell) = queue.pop_front() {
        let d = dist[cell.0 * grid.cols + cell.1].expect("queued cells have a distance");
        for n in grid.neighbors4(cell) {
            let i = n.0 * grid.cols + n.1;
            if dist[i].is_none() && grid.get(n) == Occupancy::Free {
                dist[i] = Some(d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrontierPlan {
    Path(Vec<CellIndex>),
    NoFrontier,
}

/// Shortest 4-connected free path from `start` to the nearest reachable
/// frontier centroid, excluding the start cell itself.
pub fn plan_to_frontier(grid: &OccupancyGrid, start: CellIndex) -> FrontierPlan {
    let frontiers = find_frontiers(grid);
    let dist = bfs_free(grid, start);
    let best = frontiers
        .iter()
        .filter_map(|f| dist[f.centroid.0 * grid.cols + f.centroid.1].map(|d| (d, f.centroid)))
        .filter(|&(d, _)| d > 0)
        .min();
    let Some((_, goal)) = best else {
        return FrontierPlan::NoFrontier;
    };
    let mut path = vec![goal];
    let mut cur = goal;
    while cur != start {
        let d = dist[cur.0 * grid.cols + cur.1].expect("on a reachable path");
        cur = grid
            .neighbors4(cur)
            .filter(|n| dist[n.0 * grid.cols + n.1] == Some(d - 1))
            .min()
            .expect("a predecessor exists");
        if cur != start {
            path.push(cur);
        }
    }
    path.reverse();
    FrontierPlan::Path(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub rays: usize,
    pub max_range: f64,
    pub max_steps: usize,
    pub coverage_target: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            rays: DEFAULT_RAYS,
            max_range: DEFAULT_MAX_RANGE,
            max_steps: 3000,
            coverage_target: 0.95,
        }
    }
}

/// Runs the baseline from the centre of `start`. One step moves one cell.
pub fn run_baseline(
    config: &BaselineConfig,
    world: &mut World,
    start: CellIndex,
) -> Result<(EpisodeLog, OccupancyGrid)> {
    let mut grid = OccupancyGrid::for_world(world);
    let mut coverage = CoverageTracker::new(world, start, config.max_range);
    let mut odometry = Odometry::default();
    let mut true_pose = world.cell_center(start);
    let mut believed = true_pose;
    let mut distance = 0.0;
    let mut reports = Vec::new();
    let mut path: VecDeque<CellIndex> = VecDeque::new();
    let mut terminal = TerminalReason::MaxSteps;
    for step in 0..config.max_steps {
        world.apply_obstacle_event(step)?;
        let scan = world.lidar_scan(
            &Pose {
                yaw: 0.0,
                ..true_pose
            },
            config.rays,
            config.max_range,
        )?;
        update_occupancy(&mut grid, &believed, &scan);
        coverage.observe(world, &true_pose);
        let mut report = StepReport {
            step,
            believed_pose: believed,
            true_pose,
            odometry_pose: believed,
            node: None,
            action: 0,
            target_node: None,
            motion_attempted: false,
            motion_succeeded: true,
            observation_class: None,
            confidence: 1.0,
            new_nodes: Vec::new(),
            updates: Vec::new(),
            distance,
            coverage: coverage.fraction(),
            stuck_event: false,
            goal_reached: false,
            phases: Vec::new(),
            plan: None,
        };
        if report.coverage >= config.coverage_target {
            reports.push(report);
            terminal = TerminalReason::CoverageReached;
            break;
        }
        let here = grid.cell_at(believed.x, believed.y);
        let next_ok = |c: &CellIndex| grid.get(*c) == Occupancy::Free;
        let target_open = path.back().is_some_and(|&t| {
            grid.neighbors4(t)
                .any(|n| grid.get(n) == Occupancy::Unknown)
        });
        if !target_open || !path.iter().all(next_ok) {
            path = match here.map(|h| plan_to_frontier(&grid, h)) {
                Some(FrontierPlan::Path(p)) => p.into(),
                _ => {
                    reports.push(report);
                    terminal = TerminalReason::Stuck;
                    break;
                }
            };
        }
        let next = path.pop_front().expect("fresh plans are non-empty");
        let cmd = grid.cell_center(next);
        let goal = Pose::new(
            true_pose.x + cmd.x - believed.x,
            true_pose.y + cmd.y - believed.y,
            0.0,
        );
        let res = world.execute_motion(&true_pose, &goal, &mut odometry)?;
        report.motion_attempted = true;
        report.motion_succeeded = res.succeeded;
        report.action =
            crate::planner::ActionSpace::default().sector_of(true_pose.bearing_to(&goal));
        if res.succeeded {
            distance += true_pose.distance(&res.true_pose);
            true_pose = res.true_pose;
            believed = res.odometry_pose;
        } else {
            path.clear();
        }
        report.distance = distance;
        reports.push(report);
    }
    Ok((
        EpisodeLog {
            reports,
            terminal,
            stuck_events: 0,
        },
        grid,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_from(rows: &[&str]) -> OccupancyGrid {
        let mut g = OccupancyGrid::new(rows.len(), rows[0].len(), 1.0);
        for (r, line) in rows.iter().enumerate() {
            for (c, ch) in line.chars().enumerate() {
                g.cells[r * g.cols + c] = match ch {
                    '.' => Occupancy::Free,
                    '#' => Occupancy::Occupied,
                    _ => Occupancy::Unknown,
                };
            }
        }
        g
    }

    #[test]
    fn max_range_ray_only_frees() {
        let mut g = OccupancyGrid::new(1, 10, 1.0);
        let scan = LidarScan {
            ranges: vec![5.0],
            max_range: 5.0,
            start_angle: 0.0,
        };
        update_occupancy(&mut g, &Pose::new(0.5, 0.5, 0.0), &scan);
        assert_eq!(g.count(Occupancy::Free), 6);
        assert_eq!(g.count(Occupancy::Occupied), 0);
    }

    #[test]
    fn hit_marks_wall_and_is_idempotent() {
        let mut g = OccupancyGrid::new(1, 10, 1.0);
        let scan = LidarScan {
            ranges: vec![3.0],
            max_range: 12.0,
            start_angle: 0.0,
        };
        let pose = Pose::new(0.5, 0.5, 0.0);
        update_occupancy(&mut g, &pose, &scan);
        assert_eq!(g.get((0, 3)), Occupancy::Occupied);
        assert_eq!(g.get((0, 2)), Occupancy::Free);
        let once = g.clone();
        update_occupancy(&mut g, &pose, &scan);
        assert_eq!(g, once);
    }

    #[test]
    fn frontier_clusters() {
        assert!(find_frontiers(&grid_from(&["###", "#.#", "###"])).is_empty());
        let half = grid_from(&["#####", "#...#", "#...#", "#???#", "#####"]);
        let f = find_frontiers(&half);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].cells, vec![(2, 1), (2, 2), (2, 3)]);
        assert_eq!(f[0].centroid, (2, 2));
        let doors = grid_from(&["#?###?#", "#.....#", "#######"]);
        assert_eq!(find_frontiers(&doors).len(), 2);
    }

    #[test]
    fn plans_follow_bfs() {
        let adj = grid_from(&["#####", "#..?#", "#####"]);
        assert_eq!(
            plan_to_frontier(&adj, (1, 1)),
            FrontierPlan::Path(vec![(1, 2)])
        );
        let detour = grid_from(&["#######", "#..#.?#", "#.##..#", "#.....#", "#######"]);
        match plan_to_frontier(&detour, (1, 1)) {
            FrontierPlan::Path(p) => {
                let d = bfs_free(&detour, (1, 1));
                let last = *p.last().unwrap();
                assert_eq!(Some(p.len()), d[last.0 * detour.cols + last.1]);
                assert_eq!(last, (1, 4));
            }
            FrontierPlan::NoFrontier => panic!("frontier expected"),
        }
        assert_eq!(
            plan_to_frontier(&grid_from(&["###", "#.#", "###"]), (1, 1)),
            FrontierPlan::NoFrontier
        );
    }
}
