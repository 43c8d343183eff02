//! Post-run analysis: latency statistics and a human-readable mission
//! timeline rendered from an event log alone.

use std::collections::{BTreeMap, BTreeSet};

use crate::sim::{verify_log_order, EventKind, EventLog, EventRecord};

/// Summary statistics over a set of millisecond samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Stats {
    pub count: usize,
    pub min: u64,
    pub max: u64,
    pub mean: f64,
}

impl Stats {
    pub fn from_samples(samples: &[u64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        Self {
            count: samples.len(),
            min: *samples.iter().min().unwrap(),
            max: *samples.iter().max().unwrap(),
            mean: samples.iter().sum::<u64>() as f64 / samples.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LatencyReport {
    /// Individual link-latency draws (one per hop of every delivered
    /// trigger).
    pub hops: Stats,
    /// Publish-to-receive time of delivered robot triggers (the
    /// operator's injected trigger is excluded).
    pub trigger: Stats,
    /// Per epoch: first trigger receipt to last behavior start.
    pub end_to_end: BTreeMap<u32, u64>,
    /// Publish deferrals caused by failed reachability probes
    /// (`wait` on TriggerPublished, zero waits included).
    pub waits: Stats,
    /// Structural problems found while reading the log.
    pub violations: Vec<String>,
}

pub fn compute_latency(log: &EventLog) -> LatencyReport {
    let mut hops = Vec::new();
    let mut trigger = Vec::new();
    let mut waits = Vec::new();
    let mut violations = Vec::new();
    if let Err(index) = verify_log_order(log) {
        violations.push(format!("records out of order at index {index}"));
    }

    // (epoch, receiver) pairs that saw a delivery, to pair publishes
    // with receipts.
    let mut received: BTreeSet<(u64, String)> = BTreeSet::new();
    let mut epoch_first_receive: BTreeMap<u32, u64> = BTreeMap::new();
    let mut epoch_last_start: BTreeMap<u32, u64> = BTreeMap::new();

    for r in &log.records {
        match r.kind {
            EventKind::TriggerReceived => {
                if r.detail.get("sender").map(String::as_str) != Some("operator") {
                    if let Some(latency) = r.detail_u64("latency") {
                        trigger.push(latency);
                    }
                    for (k, v) in &r.detail {
                        if k.starts_with("hop") {
                            if let Ok(v) = v.parse() {
                                hops.push(v);
                            }
                        }
                    }
                }
                if let Some(epoch) = r.detail_u64("epoch") {
                    received.insert((epoch, r.agent.clone()));
                    epoch_first_receive
                        .entry(epoch as u32)
                        .or_insert(r.t);
                }
            }
            EventKind::TriggerPublished => {
                if let Some(w) = r.detail_u64("wait") {
                    waits.push(w);
                }
            }
            EventKind::StateEntered => {
                if let Some(epoch) = r.detail_u64("epoch") {
                    let slot = epoch_last_start.entry(epoch as u32).or_insert(r.t);
                    *slot = (*slot).max(r.t);
                }
            }
            _ => {}
        }
    }

    // A publish whose target never records a receipt for that epoch was
    // lost in flight; the protocol treats this as a mission-level stall.
    for r in &log.records {
        if r.kind != EventKind::TriggerPublished {
            continue;
        }
        let (Some(epoch), Some(to)) = (r.detail_u64("epoch"), r.detail.get("to")) else {
            continue;
        };
        if !received.contains(&(epoch, to.clone())) {
            violations.push(format!(
                "trigger published at t={} by {} for {to} (epoch {epoch}) was never received",
                r.t, r.agent
            ));
        }
    }

    let mut end_to_end = BTreeMap::new();
    for (epoch, first) in &epoch_first_receive {
        if let Some(last) = epoch_last_start.get(epoch) {
            if last >= first {
                end_to_end.insert(*epoch, last - first);
            }
        }
    }

    LatencyReport {
        hops: Stats::from_samples(&hops),
        trigger: Stats::from_samples(&trigger),
        end_to_end,
        waits: Stats::from_samples(&waits),
        violations,
    }
}

pub fn render_latency(report: &LatencyReport) -> String {
    let mut out = String::new();
    let line = |name: &str, s: &Stats| {
        if s.count == 0 {
            format!("{name}: none\n")
        } else {
            format!(
                "{name}: n={} min={}ms max={}ms mean={:.1}ms\n",
                s.count, s.min, s.max, s.mean
            )
        }
    };
    out.push_str(&line("hop latency", &report.hops));
    out.push_str(&line("trigger latency", &report.trigger));
    out.push_str(&line("publish wait", &report.waits));
    for (epoch, ms) in &report.end_to_end {
        out.push_str(&format!("epoch {epoch} span: {ms}ms\n"));
    }
    for v in &report.violations {
        out.push_str(&format!("violation: {v}\n"));
    }
    out
}

const GRID_COLS: usize = 64;

/// Renders a per-agent lane grid followed by the full event listing.
/// Lane glyphs: `=` behavior running, `?` waiting on reachability,
/// `x` link outage (own link down), `T` trigger receipt, `*` mission
/// done, `!` fault, `.` idle.
pub fn render_timeline(log: &EventLog) -> String {
    // Scale the grid to the last event rather than the horizon so short
    // missions under a generous horizon stay readable.
    let span = log.records.last().map(|r| r.t).unwrap_or(0).max(1);
    let col_of = |t: u64| ((t.min(span) as u128 * (GRID_COLS as u128 - 1)) / span as u128) as usize;

    let mut agents: BTreeSet<&str> = BTreeSet::new();
    for r in &log.records {
        if r.agent != "operator" {
            agents.insert(&r.agent);
        }
    }

    let mut lanes: BTreeMap<&str, Vec<char>> = agents
        .iter()
        .map(|a| (*a, vec!['.'; GRID_COLS]))
        .collect();

    let paint = |agent: &str, from: u64, to: u64, glyph: char, lanes: &mut BTreeMap<&str, Vec<char>>| {
        let Some(lane) = lanes.get_mut(agent) else { return };
        for col in col_of(from)..=col_of(to) {
            // Later glyphs win only over idle and lower-priority fill.
            if lane[col] == '.' || (glyph != 'x' && lane[col] == 'x') {
                lane[col] = glyph;
            }
        }
    };

    // First pass: interval fills (behavior spans, deferral spans, outages).
    let mut behavior_start: BTreeMap<(String, u64), u64> = BTreeMap::new();
    let mut link_down_at: BTreeMap<String, u64> = BTreeMap::new();
    for r in &log.records {
        match r.kind {
            EventKind::StateEntered => {
                if r.detail_u64("depth") == Some(1) {
                    let key = (r.agent.clone(), r.detail_u64("epoch").unwrap_or(0));
                    behavior_start.entry(key).or_insert(r.t);
                }
            }
            EventKind::StateExited => {
                if r.detail.contains_key("machine_outcome") {
                    let key = (r.agent.clone(), r.detail_u64("epoch").unwrap_or(0));
                    if let Some(start) = behavior_start.remove(&key) {
                        paint(&r.agent, start, r.t, '=', &mut lanes);
                    }
                }
            }
            EventKind::TriggerPublished => {
                if let Some(wait) = r.detail_u64("wait") {
                    if wait > 0 {
                        paint(&r.agent, r.t - wait, r.t, '?', &mut lanes);
                    }
                }
            }
            EventKind::LinkDown => {
                link_down_at.insert(r.agent.clone(), r.t);
            }
            EventKind::LinkUp => {
                if let Some(start) = link_down_at.remove(&r.agent) {
                    paint(&r.agent, start, r.t, 'x', &mut lanes);
                }
            }
            _ => {}
        }
    }
    // Unclosed intervals run to the end of the span.
    for ((agent, _), start) in behavior_start.clone() {
        paint(&agent, start, span, '=', &mut lanes);
    }
    for (agent, start) in link_down_at.clone() {
        paint(&agent, start, span, 'x', &mut lanes);
    }
    // Second pass: point markers override fills.
    for r in &log.records {
        let glyph = match r.kind {
            EventKind::TriggerReceived => 'T',
            EventKind::MissionDone => '*',
            EventKind::Fault => '!',
            _ => continue,
        };
        if let Some(lane) = lanes.get_mut(r.agent.as_str()) {
            lane[col_of(r.t)] = glyph;
        }
    }

    let width = agents.iter().map(|a| a.len()).max().unwrap_or(0);
    let mut out = format!(
        "mission {} seed {} span 0..{}ms ({}ms/col)\n",
        log.mission,
        log.seed,
        span,
        (span as f64 / GRID_COLS as f64).ceil() as u64
    );
    for (agent, lane) in &lanes {
        out.push_str(&format!(
            "{agent:>width$} |{}|\n",
            lane.iter().collect::<String>()
        ));
    }
    out.push_str("legend: = behavior  ? deferred trigger  x outage  T trigger  * done  ! fault\n");
    out.push('\n');

    // Full listing, one line per record, grouped by agent so each lane
    // can be read top to bottom.
    for agent in &agents {
        out.push_str(&format!("[{agent}]\n"));
        for r in log.records.iter().filter(|r| &r.agent == agent) {
            out.push_str(&format!("  {}\n", r.encode()));
        }
    }
    let operator: Vec<&EventRecord> = log
        .records
        .iter()
        .filter(|r| r.agent == "operator")
        .collect();
    if !operator.is_empty() {
        out.push_str("[operator]\n");
        for r in operator {
            out.push_str(&format!("  {}\n", r.encode()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{case_a_scenario, case_b_scenario};
    use crate::sim::run_scenario;

    #[test]
    fn case_a_latency_report() {
        let log = run_scenario(&case_a_scenario()).unwrap();
        let report = compute_latency(&log);
        assert!(report.violations.is_empty(), "{:?}", report.violations);
        // Two delivered robot triggers, two hops each.
        assert_eq!(report.trigger.count, 2);
        assert_eq!(report.hops.count, 4);
        assert!(report.hops.max <= 500);
        assert_eq!(report.waits.max, 0);
    }

    #[test]
    fn case_b_records_deferral() {
        let log = run_scenario(&case_b_scenario()).unwrap();
        let report = compute_latency(&log);
        assert!(report.violations.is_empty(), "{:?}", report.violations);
        assert!(report.waits.max > 0);
    }

    #[test]
    fn timeline_renders_every_record_once() {
        let log = run_scenario(&case_b_scenario()).unwrap();
        let text = render_timeline(&log);
        for r in &log.records {
            assert!(text.contains(&r.encode()), "missing {:?}", r);
        }
        assert!(text.contains('x'), "outage band missing:\n{text}");
        assert!(text.contains('?'), "deferral band missing:\n{text}");
    }

    #[test]
    fn timeline_of_empty_log_is_stable() {
        let log = EventLog {
            mission: "m".into(),
            seed: 0,
            horizon: 1000,
            records: Vec::new(),
        };
        let text = render_timeline(&log);
        assert!(text.starts_with("mission m seed 0"));
    }
}
