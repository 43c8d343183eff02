//! Simulated actuators and the one-goal-at-a-time action server.
//!
//! Motion is constant-speed and noise-free: a goal from position `p` to
//! `target` at `speed` ticks/s takes `ceil(|target - p| * 1000 / speed)`
//! milliseconds. The built-in `timer` server treats the goal target as a
//! duration in milliseconds instead.

use std::collections::BTreeMap;

/// One simulated actuator, e.g. `left_leg`, `right_leg`, `arm`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActuatorModel {
    pub id: String,
    /// Current position in unitless ticks.
    pub position: i64,
    /// Inclusive position limits.
    pub limits: (i64, i64),
    /// Constant motion speed in ticks per second. Must be positive.
    pub speed: u32,
}

impl ActuatorModel {
    pub fn new(id: impl Into<String>, position: i64, limits: (i64, i64), speed: u32) -> Self {
        Self {
            id: id.into(),
            position,
            limits,
            speed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoveMotorGoal {
    pub actuator: String,
    pub target: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalStatus {
    Succeeded,
    Aborted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionResult {
    pub status: GoalStatus,
    pub final_position: i64,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubmitResult {
    Accepted { expected_end: u64 },
    Rejected { reason: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServerKind {
    /// `move_motor` analog: drives one named actuator per goal.
    Motor,
    /// Built-in delay server: goal target is a duration in ms.
    Timer,
}

#[derive(Debug, Clone)]
struct ActiveGoal {
    goal: MoveMotorGoal,
    start_t: u64,
    end_t: u64,
    start_pos: i64,
}

/// An asynchronous goal/result endpoint holding at most one active goal.
#[derive(Debug, Clone)]
pub struct ActionServer {
    pub name: String,
    pub kind: ServerKind,
    actuators: BTreeMap<String, ActuatorModel>,
    active: Option<ActiveGoal>,
}

impl ActionServer {
    pub fn motor(name: impl Into<String>, actuators: Vec<ActuatorModel>) -> Self {
        Self {
            name: name.into(),
            kind: ServerKind::Motor,
            actuators: actuators.into_iter().map(|a| (a.id.clone(), a)).collect(),
            active: None,
        }
    }

    pub fn timer() -> Self {
        Self {
            name: "timer".into(),
            kind: ServerKind::Timer,
            actuators: BTreeMap::new(),
            active: None,
        }
    }

    pub fn busy(&self) -> bool {
        self.active.is_some()
    }

    pub fn actuator(&self, id: &str) -> Option<&ActuatorModel> {
        self.actuators.get(id)
    }

    /// Submits a goal at time `t`. At most one goal may be active.
    pub fn submit_goal(&mut self, goal: MoveMotorGoal, t: u64) -> SubmitResult {
        if self.active.is_some() {
            return SubmitResult::Rejected { reason: "busy" };
        }
        let (start_pos, duration) = match self.kind {
            ServerKind::Timer => {
                if goal.target < 0 {
                    return SubmitResult::Rejected { reason: "limit" };
                }
                (goal.target, goal.target as u64)
            }
            ServerKind::Motor => {
                let Some(actuator) = self.actuators.get(&goal.actuator) else {
                    return SubmitResult::Rejected {
                        reason: "unknown actuator",
                    };
                };
                if goal.target < actuator.limits.0 || goal.target > actuator.limits.1 {
                    return SubmitResult::Rejected { reason: "limit" };
                }
                (
                    actuator.position,
                    motion_duration_ms(actuator.position, goal.target, actuator.speed),
                )
            }
        };
        let end_t = t + duration;
        self.active = Some(ActiveGoal {
            goal,
            start_t: t,
            end_t,
            start_pos,
        });
        SubmitResult::Accepted { expected_end: end_t }
    }

    /// Completes the active goal at its scheduled end instant. `abort`
    /// forces an aborted result (fault injection); the actuator is left
    /// at its interpolated position.
    pub fn complete(&mut self, t: u64, abort: bool) -> ActionResult {
        let active = self.active.take().expect("complete called with an active goal");
        debug_assert_eq!(t, active.end_t);
        let duration_ms = active.end_t - active.start_t;
        if abort {
            let pos = interpolate(active.start_pos, active.goal.target, active.start_t, active.end_t, t);
            if let Some(actuator) = self.actuators.get_mut(&active.goal.actuator) {
                actuator.position = pos;
            }
            return ActionResult {
                status: GoalStatus::Aborted,
                final_position: pos,
                duration_ms,
            };
        }
        if let Some(actuator) = self.actuators.get_mut(&active.goal.actuator) {
            actuator.position = active.goal.target;
        }
        ActionResult {
            status: GoalStatus::Succeeded,
            final_position: active.goal.target,
            duration_ms,
        }
    }

    /// Position of the active goal's actuator at time `t`, on the linear
    /// trajectory between start and target.
    pub fn feedback_position(&self, t: u64) -> Option<i64> {
        let active = self.active.as_ref()?;
        Some(interpolate(
            active.start_pos,
            active.goal.target,
            active.start_t,
            active.end_t,
            t,
        ))
    }
}

/// Millisecond duration of a constant-speed move, rounded up.
pub fn motion_duration_ms(from: i64, to: i64, speed_ticks_per_s: u32) -> u64 {
    let distance = from.abs_diff(to) as u128;
    let speed = speed_ticks_per_s.max(1) as u128;
    (distance * 1000).div_ceil(speed) as u64
}

fn interpolate(start: i64, target: i64, start_t: u64, end_t: u64, t: u64) -> i64 {
    if end_t <= start_t || t >= end_t {
        return target;
    }
    let elapsed = (t - start_t) as i128;
    let span = (end_t - start_t) as i128;
    start + ((target - start) as i128 * elapsed / span) as i64
}
