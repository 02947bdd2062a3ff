//! Cross-module flows: the UAV maps, shares a patch, a UGV plans and
//! predicts against it, and the UAV schedules the resulting request.

use airground_core::estimation::NoiseModel;
use airground_core::mapsync::{encode_map_patch, integrate_scan, TraversabilityIndex, TraversabilityView};
use airground_core::sensors::{simulate_lidar, RpeMeasurement, RpeConfig};
use airground_core::uav_sched::{schedule, SchedulerConfig, UavState};
use airground_core::ugv_nav::{plan_path, smooth_path, NavConfig, NavStatus, UgvNavigator};
use airground_core::world::{ground_truth_occupied, CellState, GridGeometry, GridMap, Obstacle, Scenario};
use airground_core::{Point2, Pose2};

fn wall_world() -> Scenario {
    // a row of disks across the middle with one gap
    let obstacles = (0..10).filter(|&k| k != 6).map(|k| Obstacle { center: Point2::new(6.0, 0.5 + k as f64), radius: 0.5 }).collect();
    Scenario {
        extent: Point2::new(12.0, 10.0),
        obstacles,
        ugv_starts: vec![Pose2::new(1.5, 5.0, 0.0)],
        ugv_goals: vec![Point2::new(10.5, 5.0)],
        uav_start: Pose2::new(3.0, 5.0, 0.0),
        seed: 1,
    }
}

fn mapped(s: &Scenario, from: &[Point2]) -> GridMap {
    let mut map = GridMap::new(GridGeometry::covering(0.1, Point2::zeros(), s.extent));
    for p in from {
        integrate_scan(&mut map, &simulate_lidar(&Pose2::new(p.x, p.y, 0.0), s, 8.0, 720)).unwrap();
    }
    map
}

#[test]
fn shared_map_yields_a_collision_free_route() {
    let s = wall_world();
    let map = mapped(&s, &[Point2::new(4.0, 5.0), Point2::new(8.0, 5.0), Point2::new(6.0, 1.0), Point2::new(6.0, 9.0)]);
    assert!(map.count(CellState::Occupied) > 0);
    let index = TraversabilityIndex::build(&map, 0.4);
    let view = index.view(TraversabilityView::PlanningView);
    let start = s.ugv_starts[0].position();
    let cells = plan_path(&view, &start, &s.ugv_goals[0]).unwrap();
    let route = smooth_path(&view, &start, &cells, &s.ugv_goals[0]);
    for w in route.windows(2) {
        for k in 0..=50 {
            let p = w[0] + (w[1] - w[0]) * (k as f64 / 50.0);
            assert!(!ground_truth_occupied(&s, &p), "route passes through an obstacle at {p:?}");
        }
    }
    // the gap sits at y = 6.5
    assert!(route.iter().any(|p| (p.x - 6.0).abs() < 0.6 && (p.y - 6.5).abs() < 0.6));
}

#[test]
fn navigator_requests_support_and_scheduler_serves_it() {
    let s = wall_world();
    let geometry = GridGeometry::covering(0.1, Point2::zeros(), s.extent);
    let mut nav = UgvNavigator::new(0, s.ugv_starts[0].position(), s.ugv_goals[0], geometry, NavConfig::default(), NoiseModel::default());
    let rpe = RpeConfig::default();
    let start = s.ugv_starts[0];
    nav.receive_rpe(&RpeMeasurement { ugv_id: 0, z_p: start.position(), z_theta: start.theta, noise_cov: rpe.noise_cov(), stamp: 0.0 }).unwrap();

    // only the neighbourhood of the start is known, so the way ahead is blocked in the CP-map
    let map = mapped(&s, &[Point2::new(2.0, 5.0)]);
    nav.receive_patch(&encode_map_patch(&map, &start.position(), 2.5).unwrap()).unwrap();
    let out = nav.update(0.05);
    let request = out.request.expect("unknown space ahead must trigger a request");
    assert!(request.t_pc > request.issued_at);
    assert!((request.p_ps - start.position()).norm() < (request.p_pc - start.position()).norm() + 1e-9);
    assert_ne!(nav.status(), NavStatus::Reached);

    let uav = UavState { position: s.uav_start.position(), velocity: Point2::zeros() };
    let plan = schedule(&uav, &[request], 0.05, &SchedulerConfig::default()).unwrap();
    assert_eq!(plan.tour.order, vec![1]);
    assert!(!plan.fallback);
    assert!(plan.tour.arrival_times[0] <= request.t_pc - 0.05);
}
