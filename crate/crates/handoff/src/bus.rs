//! Domain-isolated publish/subscribe with bridge rules, per-link outage
//! schedules and a seeded latency model.
//!
//! The bus is volatile: a message whose delivery instant falls inside a
//! link outage is dropped, never buffered. Reliability lives above the
//! bus, in the coordinator's probe-then-publish loop. Reachability
//! probes sit below pub/sub and ignore domains entirely.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct BridgeRule {
    pub from_domain: u32,
    pub to_domain: u32,
    pub topic: String,
}

/// Outage intervals for one unordered agent pair. Intervals are
/// half-open `[start, end)`, sorted and disjoint after normalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkSchedule {
    /// Lexicographically smaller agent id.
    pub a: String,
    pub b: String,
    pub outages: Vec<(u64, u64)>,
}

impl LinkSchedule {
    pub fn new(x: impl Into<String>, y: impl Into<String>, outages: Vec<(u64, u64)>) -> Self {
        let (x, y) = (x.into(), y.into());
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        Self {
            a,
            b,
            outages: normalize_intervals(outages),
        }
    }

    /// True iff the link is up at `t` (outside every outage interval).
    pub fn link_state(&self, t: u64) -> bool {
        !self.outages.iter().any(|&(s, e)| t >= s && t < e)
    }
}

/// Sorts and merges overlapping or adjacent intervals, dropping empty
/// ones. Returns a disjoint sorted list.
pub fn normalize_intervals(mut intervals: Vec<(u64, u64)>) -> Vec<(u64, u64)> {
    intervals.retain(|&(s, e)| s < e);
    intervals.sort_unstable();
    let mut merged: Vec<(u64, u64)> = Vec::with_capacity(intervals.len());
    for (s, e) in intervals {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    merged
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatencyModel {
    Fixed(u64),
    Uniform { lo: u64, hi: u64 },
}

/// Default model: the recorded 500 ms maximum bounds the draw; the
/// 20 ms lower bound is a config choice.
pub const DEFAULT_LATENCY: LatencyModel = LatencyModel::Uniform { lo: 20, hi: 500 };

impl LatencyModel {
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> u64 {
        match *self {
            LatencyModel::Fixed(d) => d,
            LatencyModel::Uniform { lo, hi } => rng.random_range(lo..=hi),
        }
    }

    pub fn max_ms(&self) -> u64 {
        match *self {
            LatencyModel::Fixed(d) => d,
            LatencyModel::Uniform { hi, .. } => hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BusError {
    #[error("unknown domain: {0}")]
    UnknownDomain(u32),
    #[error("unknown agent: {0}")]
    UnknownAgent(String),
    #[error("agent {agent} not registered on domain {domain}")]
    NotOnDomain { agent: String, domain: u32 },
}

/// One planned delivery produced by a publish call. The caller owns
/// scheduling; dropped deliveries are reported for observability but
/// must not be delivered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedDelivery {
    pub envelope_id: u64,
    pub subscriber: String,
    pub domain: u32,
    pub topic: String,
    pub publish_time: u64,
    pub delivery_time: u64,
    /// Per-hop latency draws; length 1 for in-domain delivery, 2 when a
    /// bridge relayed the message.
    pub hops: Vec<u64>,
    /// True when the subscriber's link to the publisher is down at the
    /// delivery instant; the message is lost for that subscriber.
    pub dropped: bool,
}

#[derive(Debug)]
pub struct Bus {
    domains: BTreeSet<u32>,
    agents: BTreeMap<String, u32>,
    subs: BTreeMap<(u32, String), BTreeSet<String>>,
    bridges: BTreeSet<BridgeRule>,
    links: BTreeMap<(String, String), LinkSchedule>,
    latency: LatencyModel,
    next_envelope: u64,
}

impl Bus {
    pub fn new(latency: LatencyModel) -> Self {
        Self {
            domains: BTreeSet::new(),
            agents: BTreeMap::new(),
            subs: BTreeMap::new(),
            bridges: BTreeSet::new(),
            links: BTreeMap::new(),
            latency,
            next_envelope: 0,
        }
    }

    pub fn latency_model(&self) -> LatencyModel {
        self.latency
    }

    pub fn add_domain(&mut self, domain: u32) {
        self.domains.insert(domain);
    }

    pub fn register_agent(&mut self, agent: impl Into<String>, domain: u32) -> Result<(), BusError> {
        if !self.domains.contains(&domain) {
            return Err(BusError::UnknownDomain(domain));
        }
        self.agents.insert(agent.into(), domain);
        Ok(())
    }

    pub fn add_link_schedule(&mut self, schedule: LinkSchedule) {
        self.links
            .insert((schedule.a.clone(), schedule.b.clone()), schedule);
    }

    /// Adding the same rule twice is a no-op.
    pub fn add_bridge_rule(&mut self, rule: BridgeRule) -> Result<(), BusError> {
        if !self.domains.contains(&rule.from_domain) {
            return Err(BusError::UnknownDomain(rule.from_domain));
        }
        if !self.domains.contains(&rule.to_domain) {
            return Err(BusError::UnknownDomain(rule.to_domain));
        }
        self.bridges.insert(rule);
        Ok(())
    }

    pub fn subscribe(
        &mut self,
        domain: u32,
        topic: impl Into<String>,
        agent: impl Into<String>,
    ) -> Result<(), BusError> {
        let agent = agent.into();
        if !self.domains.contains(&domain) {
            return Err(BusError::UnknownDomain(domain));
        }
        if !self.agents.contains_key(&agent) {
            return Err(BusError::UnknownAgent(agent));
        }
        self.subs
            .entry((domain, topic.into()))
            .or_default()
            .insert(agent);
        Ok(())
    }

    /// Fire-and-forget publish at time `t`. Returns every planned
    /// delivery, including drops, in deterministic order: in-domain
    /// subscribers sorted by agent id, then bridge rules in sorted
    /// order, each with its forwarded subscribers. Bridged copies are
    /// not re-bridged (a relay is a single extra hop).
    pub fn publish(
        &mut self,
        domain: u32,
        topic: &str,
        sender: &str,
        t: u64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<PlannedDelivery>, BusError> {
        match self.agents.get(sender) {
            None => return Err(BusError::UnknownAgent(sender.to_string())),
            Some(d) if *d != domain => {
                return Err(BusError::NotOnDomain {
                    agent: sender.to_string(),
                    domain,
                })
            }
            Some(_) => {}
        }
        let mut planned = Vec::new();
        self.fan_out(domain, topic, sender, t, t, &[], rng, &mut planned);

        let rules: Vec<BridgeRule> = self
            .bridges
            .iter()
            .filter(|r| r.from_domain == domain && r.topic == topic)
            .cloned()
            .collect();
        for rule in rules {
            // The bridge is a relay process: crossing it costs one
            // extra latency draw before domain-local fan-out.
            let relay = self.latency.draw(rng);
            let bridged_t = t + relay;
            self.fan_out(
                rule.to_domain,
                topic,
                sender,
                t,
                bridged_t,
                &[relay],
                rng,
                &mut planned,
            );
        }
        Ok(planned)
    }

    #[allow(clippy::too_many_arguments)]
    fn fan_out(
        &mut self,
        domain: u32,
        topic: &str,
        sender: &str,
        publish_time: u64,
        hop_start: u64,
        prior_hops: &[u64],
        rng: &mut ChaCha8Rng,
        planned: &mut Vec<PlannedDelivery>,
    ) {
        let Some(subscribers) = self.subs.get(&(domain, topic.to_string())) else {
            return;
        };
        for subscriber in subscribers.clone() {
            let draw = self.latency.draw(rng);
            let delivery_time = hop_start + draw;
            let mut hops = prior_hops.to_vec();
            hops.push(draw);
            let up = self.link_state(sender, &subscriber, delivery_time);
            let envelope_id = self.next_envelope;
            self.next_envelope += 1;
            planned.push(PlannedDelivery {
                envelope_id,
                subscriber,
                domain,
                topic: topic.to_string(),
                publish_time,
                delivery_time,
                hops,
                dropped: !up,
            });
        }
    }

    /// Instantaneous IP-level reachability check between two agents.
    pub fn probe(&self, a: &str, b: &str, t: u64) -> Result<bool, BusError> {
        if !self.agents.contains_key(a) {
            return Err(BusError::UnknownAgent(a.to_string()));
        }
        if !self.agents.contains_key(b) {
            return Err(BusError::UnknownAgent(b.to_string()));
        }
        Ok(self.link_state(a, b, t))
    }

    fn link_state(&self, x: &str, y: &str, t: u64) -> bool {
        if x == y {
            return true;
        }
        let key = if x <= y {
            (x.to_string(), y.to_string())
        } else {
            (y.to_string(), x.to_string())
        };
        match self.links.get(&key) {
            Some(schedule) => schedule.link_state(t),
            None => true,
        }
    }
}
