//! Event records and the structured log encoding.
//!
//! One record per line: `t=<ms> agent=<id> kind=<Kind>` followed by the
//! detail pairs in sorted key order. Detail values are escaped so a
//! record always stays on one line. Header and footer lines start with
//! `#`. The full format lives in `docs/log-format.md`.

use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    LinkDown,
    LinkUp,
    TriggerReceived,
    TriggerIgnored,
    StateEntered,
    StateExited,
    ActionStarted,
    ActionFeedback,
    ActionCompleted,
    ActionRejected,
    PingAttempt,
    PingResult,
    TriggerPublished,
    MissionDone,
    Fault,
}

impl EventKind {
    pub const ALL: [EventKind; 15] = [
        EventKind::LinkDown,
        EventKind::LinkUp,
        EventKind::TriggerReceived,
        EventKind::TriggerIgnored,
        EventKind::StateEntered,
        EventKind::StateExited,
        EventKind::ActionStarted,
        EventKind::ActionFeedback,
        EventKind::ActionCompleted,
        EventKind::ActionRejected,
        EventKind::PingAttempt,
        EventKind::PingResult,
        EventKind::TriggerPublished,
        EventKind::MissionDone,
        EventKind::Fault,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::LinkDown => "LinkDown",
            EventKind::LinkUp => "LinkUp",
            EventKind::TriggerReceived => "TriggerReceived",
            EventKind::TriggerIgnored => "TriggerIgnored",
            EventKind::StateEntered => "StateEntered",
            EventKind::StateExited => "StateExited",
            EventKind::ActionStarted => "ActionStarted",
            EventKind::ActionFeedback => "ActionFeedback",
            EventKind::ActionCompleted => "ActionCompleted",
            EventKind::ActionRejected => "ActionRejected",
            EventKind::PingAttempt => "PingAttempt",
            EventKind::PingResult => "PingResult",
            EventKind::TriggerPublished => "TriggerPublished",
            EventKind::MissionDone => "MissionDone",
            EventKind::Fault => "Fault",
        }
    }

    pub fn from_str(s: &str) -> Option<EventKind> {
        EventKind::ALL.iter().copied().find(|k| k.as_str() == s)
    }

    /// Tie-break class at equal timestamps: link changes first, then
    /// message deliveries, then agent-local events.
    pub fn class(self) -> u8 {
        match self {
            EventKind::LinkDown | EventKind::LinkUp => 0,
            EventKind::TriggerReceived | EventKind::TriggerIgnored => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub t: u64,
    pub agent: String,
    pub kind: EventKind,
    pub detail: BTreeMap<String, String>,
}

impl EventRecord {
    pub fn new(t: u64, agent: impl Into<String>, kind: EventKind) -> Self {
        Self {
            t,
            agent: agent.into(),
            kind,
            detail: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.detail.insert(key.to_string(), value.to_string());
        self
    }

    pub fn detail_u64(&self, key: &str) -> Option<u64> {
        self.detail.get(key)?.parse().ok()
    }

    pub fn encode(&self) -> String {
        let mut line = format!(
            "t={} agent={} kind={}",
            self.t,
            escape(&self.agent),
            self.kind.as_str()
        );
        for (k, v) in &self.detail {
            line.push(' ');
            line.push_str(k);
            line.push('=');
            line.push_str(&escape(v));
        }
        line
    }

    pub fn decode(line: &str) -> Result<EventRecord, String> {
        let mut t = None;
        let mut agent = None;
        let mut kind = None;
        let mut detail = BTreeMap::new();
        for field in line.split(' ') {
            if field.is_empty() {
                continue;
            }
            let (key, raw) = field
                .split_once('=')
                .ok_or_else(|| format!("field without '=': {field}"))?;
            let value = unescape(raw)?;
            match key {
                "t" => t = Some(value.parse::<u64>().map_err(|e| format!("bad t: {e}"))?),
                "agent" => agent = Some(value),
                "kind" => {
                    kind = Some(
                        EventKind::from_str(&value).ok_or_else(|| format!("unknown kind: {value}"))?,
                    )
                }
                _ => {
                    if detail.insert(key.to_string(), value).is_some() {
                        return Err(format!("duplicate detail key: {key}"));
                    }
                }
            }
        }
        Ok(EventRecord {
            t: t.ok_or("missing t")?,
            agent: agent.ok_or("missing agent")?,
            kind: kind.ok_or("missing kind")?,
            detail,
        })
    }
}

/// Escapes '%', space, '=', and newline so values stay single-token.
fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '%' => out.push_str("%25"),
            ' ' => out.push_str("%20"),
            '=' => out.push_str("%3D"),
            '\n' => out.push_str("%0A"),
            other => out.push(other),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '%' {
            out.push(c);
            continue;
        }
        let hex: String = chars.by_ref().take(2).collect();
        match hex.as_str() {
            "25" => out.push('%'),
            "20" => out.push(' '),
            "3D" => out.push('='),
            "0A" => out.push('\n'),
            other => return Err(format!("bad escape: %{other}")),
        }
    }
    Ok(out)
}

/// A complete simulation log plus the run parameters that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventLog {
    pub mission: String,
    pub seed: u64,
    pub horizon: u64,
    pub records: Vec<EventRecord>,
}

impl EventLog {
    /// Canonical structured encoding: UTF-8, LF line endings, bit-exact
    /// across runs with the same scenario and seed.
    pub fn to_structured(&self) -> String {
        let mut out = String::new();
        out.push_str("# handoff-log v1\n");
        out.push_str(&format!(
            "# mission={} seed={} horizon={}\n",
            escape(&self.mission),
            self.seed,
            self.horizon
        ));
        for record in &self.records {
            out.push_str(&record.encode());
            out.push('\n');
        }
        out.push_str(&format!("# end records={}\n", self.records.len()));
        out
    }

    pub fn parse_structured(text: &str) -> Result<EventLog, String> {
        let mut lines = text.lines();
        let magic = lines.next().ok_or("empty log")?;
        if magic != "# handoff-log v1" {
            return Err(format!("not a handoff log: {magic}"));
        }
        let header = lines.next().ok_or("missing header line")?;
        let header = header
            .strip_prefix("# ")
            .ok_or("malformed header line")?;
        let mut mission = String::new();
        let mut seed = 0u64;
        let mut horizon = 0u64;
        for field in header.split(' ') {
            if let Some((k, v)) = field.split_once('=') {
                match k {
                    "mission" => mission = unescape(v)?,
                    "seed" => seed = v.parse().map_err(|e| format!("bad seed: {e}"))?,
                    "horizon" => horizon = v.parse().map_err(|e| format!("bad horizon: {e}"))?,
                    _ => return Err(format!("unknown header field: {k}")),
                }
            }
        }
        let mut records = Vec::new();
        for line in lines {
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            records.push(EventRecord::decode(line)?);
        }
        Ok(EventLog {
            mission,
            seed,
            horizon,
            records,
        })
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &EventRecord> {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    /// First state entry of an agent's execution for the given epoch:
    /// the "behavior started" instant.
    pub fn behavior_started(&self, agent: &str, epoch: u32) -> Option<&EventRecord> {
        self.records.iter().find(|r| {
            r.kind == EventKind::StateEntered
                && r.agent == agent
                && r.detail.get("epoch").map(String::as_str) == Some(epoch.to_string().as_str())
        })
    }

    /// Root-level state exit carrying the machine's terminal outcome:
    /// the "behavior completed" instant.
    pub fn behavior_completed(&self, agent: &str, epoch: u32) -> Option<&EventRecord> {
        self.records.iter().find(|r| {
            r.kind == EventKind::StateExited
                && r.agent == agent
                && r.detail.contains_key("machine_outcome")
                && r.detail.get("epoch").map(String::as_str) == Some(epoch.to_string().as_str())
        })
    }

    /// Agents that reached MissionDone.
    pub fn done_agents(&self) -> Vec<&str> {
        self.of_kind(EventKind::MissionDone)
            .map(|r| r.agent.as_str())
            .collect()
    }

    pub fn faults(&self) -> Vec<&EventRecord> {
        self.of_kind(EventKind::Fault).collect()
    }
}

/// Checks the documented total order: non-decreasing `t`; at equal `t`
/// non-decreasing tie-break class; within one (t, class) group agent
/// ids non-decreasing. Returns the index of the first violation.
pub fn verify_log_order(log: &EventLog) -> Result<(), usize> {
    for (i, pair) in log.records.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        if b.t < a.t {
            return Err(i + 1);
        }
        if b.t == a.t {
            let (ca, cb) = (a.kind.class(), b.kind.class());
            if cb < ca {
                return Err(i + 1);
            }
            if cb == ca && ca != 2 && b.agent < a.agent {
                // Link and delivery tasks are strictly agent-ordered;
                // local causal chains may interleave agents only across
                // class boundaries.
                return Err(i + 1);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_roundtrip_with_escapes() {
        let record = EventRecord::new(42, "deployer", EventKind::Fault)
            .with("reason", "context key never written: left target")
            .with("pct", "100%");
        let decoded = EventRecord::decode(&record.encode()).unwrap();
        assert_eq!(decoded, record);
    }

    #[test]
    fn log_roundtrip() {
        let log = EventLog {
            mission: "drill handoff".into(),
            seed: 42,
            horizon: 60_000,
            records: vec![
                EventRecord::new(0, "deployer", EventKind::TriggerReceived).with("epoch", 0),
                EventRecord::new(5, "deployer", EventKind::StateEntered).with("state", "MoveToHome"),
            ],
        };
        let parsed = EventLog::parse_structured(&log.to_structured()).unwrap();
        assert_eq!(parsed, log);
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(EventRecord::decode("nonsense").is_err());
        assert!(EventRecord::decode("t=abc agent=x kind=Fault").is_err());
        assert!(EventRecord::decode("t=1 agent=x kind=NotAKind").is_err());
        assert!(EventLog::parse_structured("random text").is_err());
    }

    #[test]
    fn order_check_flags_regression() {
        let mut log = EventLog {
            mission: "m".into(),
            seed: 0,
            horizon: 100,
            records: vec![
                EventRecord::new(10, "a", EventKind::StateEntered),
                EventRecord::new(5, "a", EventKind::StateEntered),
            ],
        };
        assert_eq!(verify_log_order(&log), Err(1));
        log.records[1].t = 10;
        assert_eq!(verify_log_order(&log), Ok(()));
        // Local events before a link change at the same instant violate
        // the class order.
        log.records[1] = EventRecord::new(10, "a", EventKind::LinkUp);
        assert_eq!(verify_log_order(&log), Err(1));
    }
}
