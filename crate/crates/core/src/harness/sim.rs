//! Discrete-event runner for one scenario: client, server and an optional
//! man-in-the-middle exchanging encoded messages over a virtual clock.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::scenario::{LogDbSource, ScenarioConfig};
use super::HarnessError;
use crate::attacker::{attacker_step, AttackOutcome, AttackerEvent, AttackerState, Side, Verdict};
use crate::dlog::{logdb_load, precompute_logdb, EngineOptions, LogDb};
use crate::tls::{
    advance_client, advance_server, decode_message, encode_message, Event, HandshakeMessage, Phase,
    SessionState, TlsError,
};

/// Runs stop here even if events remain queued.
pub const MAX_VIRTUAL_MS: u64 = 1 << 40;
pub const MAX_EVENTS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Node {
    Client,
    Server,
    Mitm,
}

impl Node {
    fn name(self) -> &'static str {
        match self {
            Node::Client => "client",
            Node::Server => "server",
            Node::Mitm => "mitm",
        }
    }
}

#[derive(Debug, Clone)]
enum Item {
    Start,
    Deliver {
        from: Node,
        to: Node,
        bytes: Vec<u8>,
    },
    Tick(Node),
}

/// One transmitted message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub direction: String,
    pub time: u64,
    #[serde(rename = "type")]
    pub kind: String,
    pub hex: String,
}

impl TranscriptRecord {
    pub fn decode(&self) -> Result<HandshakeMessage, TlsError> {
        let bytes = hex::decode(&self.hex).map_err(|e| TlsError::Decode(e.to_string()))?;
        decode_message(&bytes)
    }
}

/// Parses a line-delimited JSON transcript.
pub fn parse_transcript(text: &str) -> Result<Vec<TranscriptRecord>, HarnessError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| HarnessError::config(format!("line {}", i + 1), e.to_string()))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub client: SessionState,
    pub server: SessionState,
    pub attacker: Option<AttackerState>,
    pub outcome: Option<AttackOutcome>,
    pub transcript: Vec<TranscriptRecord>,
    pub end_time: u64,
}

impl ScenarioReport {
    pub fn verdict(&self) -> Option<Verdict> {
        self.outcome.as_ref().map(|o| o.verdict)
    }

    pub fn transcript_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.transcript {
            out.push_str(&serde_json::to_string(r).expect("plain record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn summary(&self) -> String {
        if let Some(o) = &self.outcome {
            let mut line = format!("verdict: {}", o.verdict);
            if let Some(ms) = o.descent_virtual_ms {
                line.push_str(&format!(" descent_ms={ms}"));
            }
            for pt in &o.recovered_plaintexts {
                line.push_str(&format!(" recovered={:?}", String::from_utf8_lossy(pt)));
            }
            return line;
        }
        match (&self.client.phase, &self.server.phase) {
            (Phase::Established, Phase::Established) => format!(
                "handshake: ESTABLISHED suite={}",
                self.client.suite.map_or("?", |s| s.name())
            ),
            (c, s) => format!("handshake: FAILED client={c:?} server={s:?}"),
        }
    }
}

/// Loads or builds the configured log db, then runs.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioReport, HarnessError> {
    let mut dbs = Vec::new();
    if let Some(a) = &cfg.attacker {
        match &a.logdb {
            LogDbSource::None => {}
            LogDbSource::File(path) => {
                let db = logdb_load(path).map_err(|e| HarnessError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                dbs.push(Arc::new(db));
            }
            LogDbSource::PrecomputeShared => {
                let group = cfg.shared_export_group()?;
                let db = precompute_logdb(
                    &group,
                    None,
                    cfg.seed,
                    &EngineOptions::with_workers(a.workers.max(1)),
                )?;
                dbs.push(Arc::new(db));
            }
        }
    }
    run_scenario_with(cfg, &dbs)
}

struct Sim {
    queue: BTreeMap<(u64, u64), Item>,
    seq: u64,
    ticks: BTreeSet<(u64, Node)>,
    delay: u64,
    transcript: Vec<TranscriptRecord>,
}

impl Sim {
    fn push(&mut self, at: u64, item: Item) {
        self.queue.insert((at, self.seq), item);
        self.seq += 1;
    }

    fn tick(&mut self, at: u64, node: Node) {
        if self.ticks.insert((at, node)) {
            self.push(at, Item::Tick(node));
        }
    }

    fn send(&mut self, now: u64, from: Node, to: Node, m: &HandshakeMessage) {
        let bytes = match encode_message(m) {
            Ok(b) => b,
            Err(e) => {
                log::warn!("{} dropped an unencodable {}: {e}", from.name(), m.kind());
                return;
            }
        };
        self.transcript.push(TranscriptRecord {
            direction: format!("{}->{}", from.name(), to.name()),
            time: now,
            kind: m.kind().to_string(),
            hex: hex::encode(&bytes),
        });
        self.push(now + self.delay, Item::Deliver { from, to, bytes });
    }
}

/// Runs with the given log dbs; the scenario's own `logdb` setting is ignored.
pub fn run_scenario_with(
    cfg: &ScenarioConfig,
    logdbs: &[Arc<LogDb>],
) -> Result<ScenarioReport, HarnessError> {
    cfg.validate()?;
    let (cp, sp) = cfg.policies()?;
    sp.validate()
        .map_err(|e| HarnessError::config("server.suites", e.to_string()))?;
    let mut client = SessionState::new_client(cfg.client_seed(), cfg.plaintext.clone());
    let mut server = SessionState::new_server(cfg.server_seed());
    let mut mitm = cfg
        .attacker
        .as_ref()
        .map(|a| AttackerState::new(cfg.attacker_config(a, logdbs.to_vec())));
    let (client_peer, server_peer) = if mitm.is_some() {
        (Node::Mitm, Node::Mitm)
    } else {
        (Node::Server, Node::Client)
    };

    let mut sim = Sim {
        queue: BTreeMap::new(),
        seq: 0,
        ticks: BTreeSet::new(),
        delay: cfg.link_delay_ms,
        transcript: Vec::new(),
    };
    sim.push(0, Item::Start);
    let mut now = 0;
    let mut events = 0;
    while let Some(((at, _), item)) = sim.queue.pop_first() {
        if at > MAX_VIRTUAL_MS || events >= MAX_EVENTS {
            log::warn!("run stopped at t={at} after {events} events");
            break;
        }
        now = at;
        events += 1;
        let (node, input) = match item {
            Item::Start => (Node::Client, Some(Event::Start)),
            Item::Tick(n) => {
                sim.ticks.remove(&(at, n));
                (n, Some(Event::Tick))
            }
            Item::Deliver { to: Node::Mitm, .. } => (Node::Mitm, None),
            Item::Deliver { to, ref bytes, .. } => match decode_message(bytes) {
                Ok(m) => (to, Some(Event::Receive(m))),
                Err(e) => {
                    log::warn!("{} could not decode a message: {e}", to.name());
                    continue;
                }
            },
        };
        match node {
            Node::Client => {
                let (st, out) = advance_client(&cp, client, now, input.expect("endpoint event"));
                client = st;
                for m in &out {
                    sim.send(now, Node::Client, client_peer, m);
                }
                if let (Some(d), false) = (client.deadline, client.phase.is_terminal()) {
                    sim.tick(d.max(now), Node::Client);
                }
            }
            Node::Server => {
                let (st, out) = advance_server(&sp, server, now, input.expect("endpoint event"));
                server = st;
                for m in &out {
                    sim.send(now, Node::Server, server_peer, m);
                }
            }
            Node::Mitm => {
                let event = match &item {
                    Item::Deliver { from, bytes, .. } => match decode_message(bytes) {
                        Ok(m) if *from == Node::Client => AttackerEvent::FromClient(m),
                        Ok(m) => AttackerEvent::FromServer(m),
                        Err(e) => {
                            log::warn!("mitm could not decode a message: {e}");
                            continue;
                        }
                    },
                    _ => AttackerEvent::Tick,
                };
                let (st, out) = attacker_step(mitm.take().expect("attacker present"), now, event);
                for (side, m) in &out {
                    let to = match side {
                        Side::Client => Node::Client,
                        Side::Server => Node::Server,
                    };
                    sim.send(now, Node::Mitm, to, m);
                }
                if let Some(w) = st.next_wakeup() {
                    sim.tick(w.max(now + 1), Node::Mitm);
                }
                mitm = Some(st);
            }
        }
    }
    let outcome = mitm
        .as_ref()
        .map(|a| AttackOutcome::from_states(&client, &server, a));
    Ok(ScenarioReport {
        client,
        server,
        attacker: mitm,
        outcome,
        transcript: sim.transcript,
        end_time: now,
    })
}
