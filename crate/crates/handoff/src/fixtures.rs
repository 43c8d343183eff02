//! Reference fixtures: a two-robot deploy-and-strike mission used by
//! the CLI examples, the integration tests and the benches. The
//! builders here are the source of truth; the files under `fixtures/`
//! are their serialized form (a test pins the equivalence).
//!
//! Case A is the nominal run: the deployer finishes, the link is up,
//! the trigger crosses the bridge immediately and the stinger runs to
//! completion. Case B opens a link outage right after the stinger's
//! behavior starts, so its completion trigger back to the deployer is
//! deferred until the link returns.

use std::collections::BTreeMap;

use crate::actuation::ActuatorModel;
use crate::bus::{BridgeRule, LinkSchedule};
use crate::hfsm::{
    ActionRef, ContextValue, GoalValue, MachineDef, StateDef, StateKind, TransitionTarget,
    REJECTED_OUTCOME,
};
use crate::scenario::{RobotSpec, Scenario, MOTOR_SERVER};

pub const DEPLOYER: &str = "deployer";
pub const STINGER: &str = "stinger";

/// Case B outage on the deployer–stinger link. Under seed 42 the
/// stinger's trigger arrives at 8324 ms and its behavior completes at
/// 12324 ms, so the window opens after the handoff lands and outlasts
/// the behavior: the completion trigger is deferred until the first
/// probe after the link returns, at 19324 ms.
pub const CASE_B_OUTAGE: (u64, u64) = (9_000, 19_000);

fn atomic(
    name: &str,
    actuator: &str,
    target: GoalValue,
    store: Option<&str>,
) -> StateDef {
    StateDef {
        name: name.to_string(),
        kind: StateKind::Atomic {
            action: ActionRef {
                server: MOTOR_SERVER.to_string(),
                actuator: actuator.to_string(),
                target,
                store: store.map(str::to_string),
            },
            on_success: "done".to_string(),
            on_abort: "fail".to_string(),
        },
    }
}

fn chain_transitions(
    order: &[&str],
    final_outcome: &str,
) -> BTreeMap<(String, String), TransitionTarget> {
    let mut transitions = BTreeMap::new();
    for (i, state) in order.iter().enumerate() {
        let on_done = match order.get(i + 1) {
            Some(next) => TransitionTarget::State(next.to_string()),
            None => TransitionTarget::Terminal(final_outcome.to_string()),
        };
        transitions.insert((state.to_string(), "done".to_string()), on_done);
        transitions.insert(
            (state.to_string(), "fail".to_string()),
            TransitionTarget::Terminal("failed".to_string()),
        );
        transitions.insert(
            (state.to_string(), REJECTED_OUTCOME.to_string()),
            TransitionTarget::Terminal("failed".to_string()),
        );
    }
    transitions
}

fn terminals() -> std::collections::BTreeSet<String> {
    ["finished", "failed"].map(str::to_string).into()
}

/// Deployer behavior: stow the arm, then run the nested deploy
/// sequence (extend, release the gripper, retract). With the fixture
/// actuators this takes 500 + 3000 + 1000 + 3000 = 7500 ms.
pub fn deployer_machine() -> MachineDef {
    let seq = MachineDef {
        name: "DeploySeq".to_string(),
        states: [
            atomic("Extend", "arm", GoalValue::Literal(300), None),
            atomic("Release", "gripper", GoalValue::Literal(100), None),
            atomic("Retract", "arm", GoalValue::Literal(600), None),
        ]
        .map(|s| (s.name.clone(), s))
        .into(),
        initial: "Extend".to_string(),
        transitions: chain_transitions(&["Extend", "Release", "Retract"], "finished"),
        terminal_outcomes: terminals(),
    };
    let deploy = StateDef {
        name: "Deploy".to_string(),
        kind: StateKind::Composite {
            child: seq,
            outcome_map: [
                ("finished".to_string(), "done".to_string()),
                ("failed".to_string(), "fail".to_string()),
            ]
            .into(),
        },
    };
    let stow = atomic("Stow", "arm", GoalValue::Literal(0), None);
    let mut transitions = chain_transitions(&["Stow"], "finished");
    transitions.insert(
        ("Stow".to_string(), "done".to_string()),
        TransitionTarget::State("Deploy".to_string()),
    );
    transitions.insert(
        ("Deploy".to_string(), "done".to_string()),
        TransitionTarget::Terminal("finished".to_string()),
    );
    transitions.insert(
        ("Deploy".to_string(), "fail".to_string()),
        TransitionTarget::Terminal("failed".to_string()),
    );
    MachineDef {
        name: "Deployer".to_string(),
        states: [stow, deploy]
            .map(|s| (s.name.clone(), s))
            .into(),
        initial: "Stow".to_string(),
        transitions,
        terminal_outcomes: terminals(),
    }
}

/// Stinger behavior: two drive legs of 2000 ms each. The first leg
/// stores its end position, the second reads its target from the
/// `strike_target` context parameter.
pub fn stinger_machine() -> MachineDef {
    let states = [
        atomic("LegOne", "drive", GoalValue::Literal(100), Some("leg1_end")),
        atomic(
            "LegTwo",
            "drive",
            GoalValue::ContextKey("strike_target".to_string()),
            None,
        ),
    ];
    MachineDef {
        name: "Stinger".to_string(),
        states: states.map(|s| (s.name.clone(), s)).into(),
        initial: "LegOne".to_string(),
        transitions: chain_transitions(&["LegOne", "LegTwo"], "finished"),
        terminal_outcomes: terminals(),
    }
}

pub fn deployer_actuators() -> Vec<ActuatorModel> {
    vec![
        ActuatorModel::new("arm", 50, (0, 600), 100),
        ActuatorModel::new("gripper", 0, (0, 100), 100),
    ]
}

pub fn stinger_actuators() -> Vec<ActuatorModel> {
    vec![ActuatorModel::new("drive", 0, (0, 200), 50)]
}

fn two_robot_mission(mission: &str, seed: u64) -> Scenario {
    let mut sc = Scenario::new(mission, seed, 60_000);
    let mut deployer = RobotSpec::new(DEPLOYER, 1, deployer_machine());
    deployer.behavior_path = "deployer.machine".to_string();
    deployer.successor = Some(STINGER.to_string());
    deployer.actuators = deployer_actuators();
    let mut stinger = RobotSpec::new(STINGER, 2, stinger_machine());
    stinger.behavior_path = "stinger.machine".to_string();
    stinger.successor = Some(DEPLOYER.to_string());
    stinger.actuators = stinger_actuators();
    stinger
        .params
        .insert("strike_target".to_string(), ContextValue::Int(200));
    sc.robots = vec![deployer, stinger];
    sc.bridges = vec![
        BridgeRule {
            from_domain: 1,
            to_domain: 2,
            topic: format!("trigger_{STINGER}"),
        },
        BridgeRule {
            from_domain: 2,
            to_domain: 1,
            topic: format!("trigger_{DEPLOYER}"),
        },
    ];
    sc
}

/// Nominal handoff, no outages.
pub fn case_a_scenario() -> Scenario {
    two_robot_mission("case_a", 42)
}

/// Same mission with a link outage that defers the stinger's
/// completion trigger; see [`CASE_B_OUTAGE`].
pub fn case_b_scenario() -> Scenario {
    let mut sc = two_robot_mission("case_b", 42);
    sc.links = vec![LinkSchedule::new(
        DEPLOYER,
        STINGER,
        vec![CASE_B_OUTAGE],
    )];
    sc
}
