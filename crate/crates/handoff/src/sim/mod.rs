//! Deterministic discrete-event execution of a scenario.
//!
//! One scheduler owns everything: the bus, every agent's coordinator,
//! behavior execution and action servers. All callbacks run sequentially
//! in timestamp order; ties are broken by (task class, agent id,
//! insertion sequence), which fixes the log record order bit-exactly.

mod events;

pub use events::{verify_log_order, EventKind, EventLog, EventRecord};

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::actuation::{ActionServer, GoalStatus, MoveMotorGoal, SubmitResult};
use crate::bus::Bus;
use crate::coordinator::{Coordinator, CoordinatorPhase, TriggerDecision, TriggerMessage};
use crate::hfsm::{EngineEvent, Execution, ExecutionContext};
use crate::scenario::{
    has_errors, validate_scenario, RobotSpec, Scenario, ScenarioIssue, MOTOR_SERVER, TIMER_SERVER,
};

/// Knobs for fault-injection and protocol stress tests; the defaults
/// run the scenario as written.
#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    pub seed_override: Option<u64>,
    /// Extra redeliveries of every trigger message, for exactly-once
    /// checks. Duplicates surface as TriggerIgnored records.
    pub duplicate_triggers: u32,
    /// (agent id, per-agent goal index) pairs whose goals abort instead
    /// of succeeding.
    pub abort_goals: BTreeSet<(String, u64)>,
}

pub fn run_scenario(sc: &Scenario) -> Result<EventLog, Vec<ScenarioIssue>> {
    run_scenario_with(sc, &SimOptions::default())
}

pub fn run_scenario_with(
    sc: &Scenario,
    opts: &SimOptions,
) -> Result<EventLog, Vec<ScenarioIssue>> {
    let issues = validate_scenario(sc);
    if has_errors(&issues) {
        return Err(issues.into_iter().filter(|i| i.severity == crate::scenario::Severity::Error).collect());
    }
    let mut sim = Sim::new(sc, opts);
    sim.run();
    Ok(sim.into_log())
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Task {
    LinkChange { a: String, b: String, up: bool },
    Deliver(Delivery),
    ActionEnd { agent: String, goal: u64 },
    Feedback { agent: String, goal: u64 },
    Probe { agent: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Delivery {
    to: String,
    msg: TriggerMessage,
    publish_t: u64,
    hops: Vec<u64>,
    envelope: Option<u64>,
}

#[derive(Debug, PartialEq, Eq)]
struct Entry {
    t: u64,
    class: u8,
    agent_key: String,
    seq: u64,
    task: Task,
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.t, self.class, &self.agent_key, self.seq).cmp(&(
            other.t,
            other.class,
            &other.agent_key,
            other.seq,
        ))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

struct InflightAction {
    engine_token: u64,
    server: String,
    goal: u64,
    abort: bool,
}

struct AgentRt {
    spec: RobotSpec,
    coordinator: Coordinator,
    exec: Option<Execution>,
    servers: BTreeMap<String, ActionServer>,
    inflight: Option<InflightAction>,
    goal_count: u64,
    completion_t: u64,
}

struct Sim<'a> {
    sc: &'a Scenario,
    opts: &'a SimOptions,
    seed: u64,
    bus: Bus,
    rng: ChaCha8Rng,
    agents: BTreeMap<String, AgentRt>,
    queue: BinaryHeap<Reverse<Entry>>,
    seq: u64,
    log: Vec<EventRecord>,
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario, opts: &'a SimOptions) -> Self {
        let seed = opts.seed_override.unwrap_or(sc.seed);
        let mut bus = Bus::new(sc.latency);
        for robot in &sc.robots {
            bus.add_domain(robot.domain);
        }
        for rule in &sc.bridges {
            bus.add_domain(rule.from_domain);
            bus.add_domain(rule.to_domain);
        }
        let mut agents = BTreeMap::new();
        for robot in &sc.robots {
            bus.register_agent(robot.id.clone(), robot.domain)
                .expect("domain added above");
            bus.subscribe(robot.domain, robot.trigger_topic.clone(), robot.id.clone())
                .expect("agent registered above");
            let mut servers = BTreeMap::new();
            servers.insert(
                MOTOR_SERVER.to_string(),
                ActionServer::motor(MOTOR_SERVER, robot.actuators.clone()),
            );
            servers.insert(TIMER_SERVER.to_string(), ActionServer::timer());
            agents.insert(
                robot.id.clone(),
                AgentRt {
                    spec: robot.clone(),
                    coordinator: Coordinator::new(robot.id.clone()),
                    exec: None,
                    servers,
                    inflight: None,
                    goal_count: 0,
                    completion_t: 0,
                },
            );
        }
        for rule in &sc.bridges {
            bus.add_bridge_rule(rule.clone()).expect("domains exist");
        }
        for link in &sc.links {
            bus.add_link_schedule(link.clone());
        }

        let mut sim = Sim {
            sc,
            opts,
            seed,
            bus,
            rng: ChaCha8Rng::seed_from_u64(seed),
            agents,
            queue: BinaryHeap::new(),
            seq: 0,
            log: Vec::new(),
        };

        for link in &sc.links {
            for &(start, end) in &link.outages {
                if start <= sc.horizon {
                    sim.schedule(
                        start,
                        0,
                        link.a.clone(),
                        Task::LinkChange {
                            a: link.a.clone(),
                            b: link.b.clone(),
                            up: false,
                        },
                    );
                }
                if end <= sc.horizon {
                    sim.schedule(
                        end,
                        0,
                        link.a.clone(),
                        Task::LinkChange {
                            a: link.a.clone(),
                            b: link.b.clone(),
                            up: true,
                        },
                    );
                }
            }
        }

        // The operator breaks the symmetry: the chain head's first
        // trigger is injected at t=0.
        if let Some(head) = sc.head() {
            sim.schedule(
                0,
                1,
                head.id.clone(),
                Task::Deliver(Delivery {
                    to: head.id.clone(),
                    msg: TriggerMessage {
                        mission_id: sc.mission.clone(),
                        epoch: 0,
                        sender: "operator".into(),
                        sent_at: 0,
                    },
                    publish_t: 0,
                    hops: Vec::new(),
                    envelope: None,
                }),
            );
        }
        sim
    }

    fn schedule(&mut self, t: u64, class: u8, agent_key: String, task: Task) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(Entry {
            t,
            class,
            agent_key,
            seq,
            task,
        }));
    }

    fn run(&mut self) {
        while let Some(Reverse(entry)) = self.queue.pop() {
            if entry.t > self.sc.horizon {
                break;
            }
            match entry.task {
                Task::LinkChange { a, b, up } => self.on_link_change(entry.t, a, b, up),
                Task::Deliver(delivery) => self.on_deliver(entry.t, delivery),
                Task::ActionEnd { agent, goal } => self.on_action_end(entry.t, agent, goal),
                Task::Feedback { agent, goal } => self.on_feedback(entry.t, agent, goal),
                Task::Probe { agent } => self.on_probe(entry.t, agent),
            }
        }
        // Whatever is still unfinished at this point never finishes.
        let horizon = self.sc.horizon;
        let mut stragglers = Vec::new();
        for (id, rt) in &self.agents {
            if rt.coordinator.phase != CoordinatorPhase::MissionDone
                && rt.coordinator.fault.is_none()
            {
                stragglers.push(id.clone());
            }
        }
        for id in stragglers {
            self.log.push(
                EventRecord::new(horizon, id.clone(), EventKind::Fault)
                    .with("reason", "timed_out"),
            );
            if let Some(rt) = self.agents.get_mut(&id) {
                rt.coordinator.set_fault("timed_out");
            }
        }
    }

    fn into_log(self) -> EventLog {
        EventLog {
            mission: self.sc.mission.clone(),
            seed: self.seed,
            horizon: self.sc.horizon,
            records: self.log,
        }
    }

    fn on_link_change(&mut self, t: u64, a: String, b: String, up: bool) {
        let kind = if up { EventKind::LinkUp } else { EventKind::LinkDown };
        self.log.push(EventRecord::new(t, a, kind).with("peer", b));
    }

    fn on_deliver(&mut self, t: u64, delivery: Delivery) {
        let Delivery {
            to,
            msg,
            publish_t,
            hops,
            envelope,
        } = delivery;
        let Some(rt) = self.agents.get_mut(&to) else { return };
        let decision = rt.coordinator.on_trigger(&msg);
        match decision {
            TriggerDecision::Accepted => {
                let mut record = EventRecord::new(t, to.clone(), EventKind::TriggerReceived)
                    .with("epoch", msg.epoch)
                    .with("sender", msg.sender.clone())
                    .with("publish_t", publish_t)
                    .with("latency", t - publish_t);
                for (i, hop) in hops.iter().enumerate() {
                    record = record.with(&format!("hop{i}"), hop);
                }
                if let Some(envelope) = envelope {
                    record = record.with("envelope", envelope);
                }
                self.log.push(record);

                let is_head = self.sc.head().map(|h| h.id == to).unwrap_or(false);
                if is_head && msg.epoch == self.sc.epochs {
                    // The trigger completed the last cycle of a cyclic
                    // mission; the head does not execute again.
                    rt.coordinator.phase = CoordinatorPhase::MissionDone;
                    self.log.push(
                        EventRecord::new(t, to, EventKind::MissionDone)
                            .with("epochs_completed", self.sc.epochs),
                    );
                    return;
                }
                self.start_behavior(t, to);
            }
            TriggerDecision::Duplicate => {
                self.log.push(
                    EventRecord::new(t, to, EventKind::TriggerIgnored)
                        .with("epoch", msg.epoch)
                        .with("sender", msg.sender)
                        .with("reason", "duplicate"),
                );
            }
            TriggerDecision::WrongPhase { reason } => {
                self.log.push(
                    EventRecord::new(t, to, EventKind::TriggerIgnored)
                        .with("epoch", msg.epoch)
                        .with("sender", msg.sender)
                        .with("reason", reason),
                );
            }
        }
    }

    fn start_behavior(&mut self, t: u64, agent: String) {
        let rt = self.agents.get_mut(&agent).expect("agent exists");
        let mut ctx = ExecutionContext::new();
        for (key, value) in &rt.spec.params {
            ctx.set(key.clone(), value.clone());
        }
        match Execution::start(rt.spec.behavior.clone(), ctx) {
            Ok((exec, events)) => {
                rt.exec = Some(exec);
                self.process_engine_events(t, agent, events);
            }
            Err(report) => {
                rt.coordinator.set_fault("invalid behavior");
                let epoch = rt.coordinator.current_epoch;
                self.log.push(
                    EventRecord::new(t, agent, EventKind::Fault)
                        .with("reason", format!("invalid behavior: {} issues", report.issues.len()))
                        .with("epoch", epoch),
                );
            }
        }
    }

    fn process_engine_events(&mut self, t: u64, agent: String, events: Vec<EngineEvent>) {
        let mut pending = events;
        // A machine that maps "rejected" straight back into the same
        // rejected dispatch would spin forever at one instant.
        let mut reject_budget = 100u32;
        while !pending.is_empty() {
            let mut follow = Vec::new();
            for event in std::mem::take(&mut pending) {
                let epoch = self.agents[&agent].coordinator.current_epoch;
                match event {
                    EngineEvent::Entered { state, path } => {
                        self.log.push(
                            EventRecord::new(t, agent.clone(), EventKind::StateEntered)
                                .with("state", state)
                                .with("depth", path.len())
                                .with("epoch", epoch),
                        );
                    }
                    EngineEvent::Exited { state, outcome } => {
                        self.log.push(
                            EventRecord::new(t, agent.clone(), EventKind::StateExited)
                                .with("state", state)
                                .with("outcome", outcome)
                                .with("epoch", epoch),
                        );
                    }
                    EngineEvent::Dispatch { token, action, .. } => {
                        if let Some(feedback) = self.dispatch_goal(t, &agent, token, action) {
                            reject_budget = reject_budget.saturating_sub(1);
                            if reject_budget == 0 {
                                let rt = self.agents.get_mut(&agent).unwrap();
                                rt.coordinator.set_fault("rejection livelock");
                                self.log.push(
                                    EventRecord::new(t, agent.clone(), EventKind::Fault)
                                        .with("reason", "rejection livelock")
                                        .with("epoch", epoch),
                                );
                                return;
                            }
                            follow.extend(feedback);
                        }
                    }
                    EngineEvent::Completed { outcome } => {
                        // Tag the root exit so analyses can find the
                        // behavior-completed instant.
                        if let Some(last) = self
                            .log
                            .iter_mut()
                            .rev()
                            .find(|r| r.agent == agent && r.kind == EventKind::StateExited)
                        {
                            last.detail
                                .insert("machine_outcome".into(), outcome.clone());
                        }
                        self.on_behavior_completed(t, &agent, &outcome);
                    }
                    EngineEvent::Faulted { reason } => {
                        let rt = self.agents.get_mut(&agent).unwrap();
                        rt.coordinator.set_fault(reason.clone());
                        self.log.push(
                            EventRecord::new(t, agent.clone(), EventKind::Fault)
                                .with("reason", reason)
                                .with("epoch", epoch),
                        );
                    }
                }
            }
            pending = follow;
        }
    }

    /// Submits an engine-dispatched goal. Returns engine feedback events
    /// when the goal was rejected synchronously.
    fn dispatch_goal(
        &mut self,
        t: u64,
        agent: &str,
        engine_token: u64,
        action: crate::hfsm::ResolvedAction,
    ) -> Option<Vec<EngineEvent>> {
        let rt = self.agents.get_mut(agent).expect("agent exists");
        let epoch = rt.coordinator.current_epoch;
        let goal = rt.goal_count;
        let Some(server) = rt.servers.get_mut(&action.server) else {
            // Unreachable for validated scenarios; fault loudly anyway.
            let events = rt
                .exec
                .as_mut()
                .map(|e| e.on_action_result(engine_token, crate::hfsm::ActionStatus::Rejected, 0));
            self.log.push(
                EventRecord::new(t, agent.to_string(), EventKind::ActionRejected)
                    .with("reason", "unknown server")
                    .with("server", action.server)
                    .with("epoch", epoch),
            );
            return events;
        };
        match server.submit_goal(
            MoveMotorGoal {
                actuator: action.actuator.clone(),
                target: action.target,
            },
            t,
        ) {
            SubmitResult::Accepted { expected_end } => {
                rt.goal_count += 1;
                let abort = self
                    .opts
                    .abort_goals
                    .contains(&(agent.to_string(), goal));
                rt.inflight = Some(InflightAction {
                    engine_token,
                    server: action.server.clone(),
                    goal,
                    abort,
                });
                self.log.push(
                    EventRecord::new(t, agent.to_string(), EventKind::ActionStarted)
                        .with("server", action.server)
                        .with("actuator", action.actuator)
                        .with("target", action.target)
                        .with("goal", goal)
                        .with("expected_end", expected_end)
                        .with("epoch", epoch),
                );
                let mut feedback_t = t + self.sc.feedback_interval;
                while feedback_t < expected_end {
                    self.schedule(
                        feedback_t,
                        2,
                        agent.to_string(),
                        Task::Feedback {
                            agent: agent.to_string(),
                            goal,
                        },
                    );
                    feedback_t += self.sc.feedback_interval;
                }
                self.schedule(
                    expected_end,
                    2,
                    agent.to_string(),
                    Task::ActionEnd {
                        agent: agent.to_string(),
                        goal,
                    },
                );
                None
            }
            SubmitResult::Rejected { reason } => {
                rt.goal_count += 1;
                self.log.push(
                    EventRecord::new(t, agent.to_string(), EventKind::ActionRejected)
                        .with("reason", reason)
                        .with("server", action.server)
                        .with("actuator", action.actuator)
                        .with("epoch", epoch),
                );
                let events = rt.exec.as_mut().map(|e| {
                    e.on_action_result(engine_token, crate::hfsm::ActionStatus::Rejected, 0)
                });
                events
            }
        }
    }

    fn on_action_end(&mut self, t: u64, agent: String, goal: u64) {
        let rt = self.agents.get_mut(&agent).expect("agent exists");
        let Some(inflight) = rt.inflight.take() else { return };
        if inflight.goal != goal {
            rt.inflight = Some(inflight);
            return;
        }
        let epoch = rt.coordinator.current_epoch;
        let server = rt.servers.get_mut(&inflight.server).expect("server exists");
        let result = server.complete(t, inflight.abort);
        let status = match result.status {
            GoalStatus::Succeeded => crate::hfsm::ActionStatus::Succeeded,
            GoalStatus::Aborted => crate::hfsm::ActionStatus::Aborted,
            GoalStatus::Rejected => crate::hfsm::ActionStatus::Rejected,
        };
        self.log.push(
            EventRecord::new(t, agent.clone(), EventKind::ActionCompleted)
                .with("goal", goal)
                .with(
                    "status",
                    match result.status {
                        GoalStatus::Succeeded => "succeeded",
                        GoalStatus::Aborted => "aborted",
                        GoalStatus::Rejected => "rejected",
                    },
                )
                .with("final_position", result.final_position)
                .with("duration", result.duration_ms)
                .with("epoch", epoch),
        );
        let events = rt
            .exec
            .as_mut()
            .map(|e| e.on_action_result(inflight.engine_token, status, result.final_position));
        if let Some(events) = events {
            self.process_engine_events(t, agent, events);
        }
    }

    fn on_feedback(&mut self, t: u64, agent: String, goal: u64) {
        let rt = self.agents.get_mut(&agent).expect("agent exists");
        let Some(inflight) = rt.inflight.as_ref() else { return };
        if inflight.goal != goal {
            return;
        }
        let epoch = rt.coordinator.current_epoch;
        let server = &rt.servers[&inflight.server];
        if let Some(position) = server.feedback_position(t) {
            self.log.push(
                EventRecord::new(t, agent, EventKind::ActionFeedback)
                    .with("goal", goal)
                    .with("position", position)
                    .with("epoch", epoch),
            );
        }
    }

    fn on_behavior_completed(&mut self, t: u64, agent: &str, outcome: &str) {
        let rt = self.agents.get_mut(agent).expect("agent exists");
        rt.completion_t = t;
        rt.exec = None;
        let epoch = rt.coordinator.current_epoch;
        if outcome != rt.spec.success_outcome {
            rt.coordinator.set_fault("behavior_failed");
            self.log.push(
                EventRecord::new(t, agent.to_string(), EventKind::Fault)
                    .with("reason", "behavior_failed")
                    .with("outcome", outcome.to_string())
                    .with("epoch", epoch),
            );
            return;
        }
        if rt.spec.successor.is_none() {
            rt.coordinator.phase = CoordinatorPhase::MissionDone;
            self.log.push(
                EventRecord::new(t, agent.to_string(), EventKind::MissionDone)
                    .with("epochs_completed", epoch + 1),
            );
            return;
        }
        rt.coordinator.phase = CoordinatorPhase::AwaitingReachability;
        self.schedule(
            t,
            2,
            agent.to_string(),
            Task::Probe {
                agent: agent.to_string(),
            },
        );
    }

    fn on_probe(&mut self, t: u64, agent: String) {
        let interval;
        let peer;
        {
            let rt = self.agents.get_mut(&agent).expect("agent exists");
            if rt.coordinator.phase != CoordinatorPhase::AwaitingReachability {
                return;
            }
            interval = rt.spec.ping_interval.unwrap_or(self.sc.ping_interval);
            peer = rt
                .spec
                .probe_peer()
                .expect("probing agents have a peer")
                .to_string();
        }
        let epoch = self.agents[&agent].coordinator.current_epoch;
        self.log.push(
            EventRecord::new(t, agent.clone(), EventKind::PingAttempt)
                .with("peer", peer.clone())
                .with("epoch", epoch),
        );
        let up = self.bus.probe(&agent, &peer, t).unwrap_or(false);
        self.log.push(
            EventRecord::new(t, agent.clone(), EventKind::PingResult)
                .with("peer", peer.clone())
                .with("ok", up)
                .with("epoch", epoch),
        );
        if up {
            self.emit_trigger(t, agent);
            return;
        }
        let next = t + interval.max(1);
        if next > self.sc.horizon {
            let rt = self.agents.get_mut(&agent).unwrap();
            rt.coordinator.set_fault("timed_out_epoch");
            self.log.push(
                EventRecord::new(t, agent, EventKind::Fault)
                    .with("reason", "timed_out_epoch")
                    .with("epoch", epoch),
            );
            return;
        }
        self.schedule(next, 2, agent.clone(), Task::Probe { agent });
    }

    fn emit_trigger(&mut self, t: u64, agent: String) {
        let head_id = self.sc.head().map(|h| h.id.clone()).unwrap_or_default();
        let (successor_id, domain, epoch_out, wait, epoch) = {
            let rt = self.agents.get_mut(&agent).expect("agent exists");
            let successor_id = rt.spec.successor.clone().expect("trigger needs successor");
            let successor_is_head = successor_id == head_id;
            (
                successor_id,
                rt.spec.domain,
                rt.coordinator.out_epoch(successor_is_head),
                t - rt.completion_t,
                rt.coordinator.current_epoch,
            )
        };
        let topic = self
            .sc
            .robot(&successor_id)
            .map(|r| r.trigger_topic.clone())
            .expect("validated successor");
        let msg = TriggerMessage {
            mission_id: self.sc.mission.clone(),
            epoch: epoch_out,
            sender: agent.clone(),
            sent_at: t,
        };
        self.log.push(
            EventRecord::new(t, agent.clone(), EventKind::TriggerPublished)
                .with("epoch", epoch_out)
                .with("to", successor_id.clone())
                .with("topic", topic.clone())
                .with("wait", wait),
        );
        let planned = self
            .bus
            .publish(domain, &topic, &agent, t, &mut self.rng)
            .expect("publisher registered");
        for plan in planned {
            if plan.dropped {
                continue;
            }
            let delivery = Delivery {
                to: plan.subscriber.clone(),
                msg: msg.clone(),
                publish_t: t,
                hops: plan.hops.clone(),
                envelope: Some(plan.envelope_id),
            };
            for _ in 0..=self.opts.duplicate_triggers {
                self.schedule(
                    plan.delivery_time,
                    1,
                    plan.subscriber.clone(),
                    Task::Deliver(delivery.clone()),
                );
            }
        }

        let rt = self.agents.get_mut(&agent).expect("agent exists");
        rt.coordinator.phase = CoordinatorPhase::TriggerSent;
        let is_head = agent == head_id;
        if is_head && self.sc.is_cyclic() {
            // The head waits for the cycle to come back around.
            rt.coordinator.phase = CoordinatorPhase::WaitingForTrigger;
        } else if epoch + 1 >= self.sc.epochs {
            rt.coordinator.phase = CoordinatorPhase::MissionDone;
            self.log.push(
                EventRecord::new(t, agent, EventKind::MissionDone)
                    .with("epochs_completed", epoch + 1),
            );
        } else {
            rt.coordinator.phase = CoordinatorPhase::WaitingForTrigger;
        }
    }
}
