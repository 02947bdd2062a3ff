//! UAV-side scheduling: support requests become a routing problem with
//! deadline windows, solved with speed escalation, and the UAV flies the tour.

mod motion;
mod scheduler;
mod travel;
mod vrptw;

pub use motion::step_uav;
pub use scheduler::{
    current_waypoint, escalation_ladder, schedule, schedule_greedy, schedule_without_windows, Reschedule, ScheduleOutcome,
    SchedulerConfig, SchedulingMode, Tour, Trigger, UavScheduler,
};
pub use travel::{travel_time_between, travel_time_from_start};
pub use vrptw::{
    build_vrptw, earliest_close_order, least_violation_order, solve_exact, solve_heuristic, solve_vrptw, NodeMeta, SchedError,
    UavState, VrptwInstance,
};
