//! Independent geometric oracles for the simulator: ray/segment intersection
//! against every wall edge, and a sampled segment sweep for motion.

use proptest::prelude::*;
use toponav::world::{Cell, Odometry, Pose, World, WorldDescription};

/// Brute-force nearest intersection of a ray with the four edges of every
/// LiDAR-blocking cell. Touching an edge endpoint counts as a hit.
fn oracle_range(world: &World, pose: &Pose, angle: f64, max_range: f64) -> f64 {
    let (dx, dy) = (angle.cos(), angle.sin());
    let cs = world.cell_size;
    let mut best = max_range;
    for r in 0..world.rows() {
        for c in 0..world.cols() {
            if world.cell((r, c)) != Cell::Wall {
                continue;
            }
            let (x0, y0) = (c as f64 * cs, r as f64 * cs);
            let (x1, y1) = (x0 + cs, y0 + cs);
            let edges = [
                ((x0, y0), (x1, y0)),
                ((x1, y0), (x1, y1)),
                ((x1, y1), (x0, y1)),
                ((x0, y1), (x0, y0)),
            ];
            for ((ax, ay), (bx, by)) in edges {
                let (ex, ey) = (bx - ax, by - ay);
                let denom = dx * ey - dy * ex;
                if denom.abs() < 1e-15 {
                    continue;
                }
                let (wx, wy) = (ax - pose.x, ay - pose.y);
                let t = (wx * ey - wy * ex) / denom;
                let u = (wx * dy - wy * dx) / denom;
                if t >= 0.0 && (-1e-12..=1.0 + 1e-12).contains(&u) && t < best {
                    best = t;
                }
            }
        }
    }
    best
}

fn random_world(seed: u64, rows: usize, cols: usize, density: f64) -> World {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut grid = Vec::new();
    for r in 0..rows {
        let mut line = String::new();
        for c in 0..cols {
            let edge = r == 0 || c == 0 || r + 1 == rows || c + 1 == cols;
            line.push(if edge || rng.gen::<f64>() < density {
                '#'
            } else {
                '.'
            });
        }
        grid.push(line);
    }
    grid[1].replace_range(1..2, ".");
    World::from_description(&WorldDescription {
        cell_size: 0.5,
        grid,
        obstacle_events: vec![],
        drift: Default::default(),
        start: None,
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lidar_matches_segment_oracle(seed in 0u64..10_000, fx in 0.05f64..0.95, fy in 0.05f64..0.95, yaw in 0.0f64..std::f64::consts::TAU) {
        let world = random_world(seed, 14, 16, 0.2);
        let free: Vec<_> = world.free_cells().collect();
        let cell = free[(seed as usize) % free.len()];
        let pose = Pose::new(
            (cell.1 as f64 + fx) * world.cell_size,
            (cell.0 as f64 + fy) * world.cell_size,
            yaw,
        );
        let scan = world.lidar_scan(&pose, 36, 12.0).unwrap();
        for i in 0..36 {
            let expected = oracle_range(&world, &pose, scan.ray_angle(i), 12.0);
            prop_assert!((scan.ranges[i] - expected).abs() < 1e-9,
                "ray {} got {} expected {}", i, scan.ranges[i], expected);
            prop_assert!(scan.ranges[i] > 0.0 && scan.ranges[i] <= 12.0);
        }
    }

    #[test]
    fn small_moves_change_depth_by_at_most_the_displacement(seed in 0u64..10_000, yaw in 0.0f64..std::f64::consts::TAU) {
        let world = random_world(seed, 12, 12, 0.15);
        let free: Vec<_> = world.free_cells().collect();
        let cell = free[(seed as usize * 7) % free.len()];
        let a = world.cell_center(cell);
        let delta = 0.1 * world.cell_size;
        let b = a.offset(yaw, delta);
        prop_assume!(world.is_free_at(&b));
        let sa = world.panorama_signature(&a, 36, 12.0).unwrap();
        let sb = world.panorama_signature(&b, 36, 12.0).unwrap();
        for i in 0..36 {
            let angle = std::f64::consts::TAU * i as f64 / 36.0;
            let ra = oracle_range(&world, &a, angle, 12.0);
            let rb = oracle_range(&world, &b, angle, 12.0);
            prop_assert!((sa.depth[i] * 12.0 - ra).abs() < 1e-9);
            prop_assert!((sb.depth[i] * 12.0 - rb).abs() < 1e-9);
        }
    }

    #[test]
    fn motion_outcome_matches_sampled_sweep(seed in 0u64..10_000, tx in 1.0f64..7.0, ty in 1.0f64..5.0) {
        let world = random_world(seed, 12, 16, 0.15);
        let free: Vec<_> = world.free_cells().collect();
        let from = world.cell_center(free[(seed as usize) % free.len()]);
        let target = Pose::new(tx, ty, 0.0);
        let mut odo = Odometry::default();
        let res = world.execute_motion(&from, &target, &mut odo).unwrap();
        // dense sampling oracle; skip samples within 1e-6 of a cell edge
        let n = 20_000;
        let mut sampled_block = !world.is_free_at(&target);
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let x = from.x + t * (target.x - from.x);
            let y = from.y + t * (target.y - from.y);
            let cs = world.cell_size;
            let near_edge = ((x / cs) - (x / cs).round()).abs() < 1e-6 || ((y / cs) - (y / cs).round()).abs() < 1e-6;
            if near_edge { continue; }
            if !world.is_free_at(&Pose::new(x, y, 0.0)) {
                sampled_block = true;
                break;
            }
        }
        if sampled_block {
            prop_assert!(!res.succeeded);
        }
        if !res.succeeded {
            prop_assert_eq!(res.true_pose, from);
        } else {
            prop_assert_eq!(res.true_pose, target);
        }
    }
}

#[test]
fn motion_block_cell_matches_segment_oracle() {
    let world = World::from_description(&WorldDescription {
        cell_size: 1.0,
        grid: ["#######", "#.....#", "#..#..#", "#.....#", "#######"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        obstacle_events: vec![],
        drift: Default::default(),
        start: None,
    })
    .unwrap();
    let from = Pose::new(1.5, 2.5, 0.0);
    let res = world
        .execute_motion(&from, &Pose::new(5.5, 2.5, 0.0), &mut Odometry::default())
        .unwrap();
    assert!(!res.succeeded);
    assert_eq!(res.blocked_at, Some((2, 3)));
    // the segment enters the wall cell's left edge at x = 3
    let range = oracle_range(&world, &from, 0.0, 12.0);
    assert!((range - 1.5).abs() < 1e-12);
}
