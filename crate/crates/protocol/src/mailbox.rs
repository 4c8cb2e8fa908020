//! The server-mediated channel. Every message passes through here; the
//! server relays it and the counters see both legs.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::Serialize;

use crate::wire::{Envelope, Kind, BROADCAST, SERVER};

pub type TamperHook = Box<dyn FnMut(&mut Envelope) + Send>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Traffic {
    pub sent: u64,
    pub received: u64,
}

impl Traffic {
    pub fn total(&self) -> u64 {
        self.sent + self.received
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptRecord {
    pub round: u8,
    pub sender: u32,
    pub recipient: u32,
    pub bytes: usize,
    pub kind: Option<Kind>,
}

pub struct Mailbox {
    clients: Vec<u32>,
    dropouts: BTreeMap<u32, u8>,
    pending: Vec<(usize, Envelope)>,
    relayed: Vec<Envelope>,
    seq: usize,
    hooks: Vec<TamperHook>,
    counters: BTreeMap<(u32, u8), Traffic>,
    transcript: Option<Vec<TranscriptRecord>>,
}

impl std::fmt::Debug for Mailbox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mailbox")
            .field("clients", &self.clients.len())
            .field("pending", &self.pending.len())
            .field("hooks", &self.hooks.len())
            .finish()
    }
}

impl Mailbox {
    pub fn new(clients: Vec<u32>) -> Self {
        Mailbox {
            clients,
            dropouts: BTreeMap::new(),
            pending: Vec::new(),
            relayed: Vec::new(),
            seq: 0,
            hooks: Vec::new(),
            counters: BTreeMap::new(),
            transcript: None,
        }
    }

    pub fn clients(&self) -> &[u32] {
        &self.clients
    }

    /// Party id to the first round in which it stays silent.
    pub fn set_dropouts(&mut self, schedule: BTreeMap<u32, u8>) {
        self.dropouts = schedule;
    }

    pub fn dropouts(&self) -> &BTreeMap<u32, u8> {
        &self.dropouts
    }

    pub fn is_active(&self, party: u32, round: u8) -> bool {
        self.dropouts.get(&party).map_or(true, |&r| round < r)
    }

    pub fn add_hook(&mut self, hook: TamperHook) {
        self.hooks.push(hook);
    }

    pub fn clear_hooks(&mut self) {
        self.hooks.clear();
    }

    pub fn enable_transcript(&mut self) {
        self.transcript.get_or_insert_with(Vec::new);
    }

    fn count(&mut self, party: u32, round: u8, sent: u64, received: u64) {
        let t = self.counters.entry((party, round)).or_default();
        t.sent += sent;
        t.received += received;
    }

    fn record(&mut self, e: &Envelope) {
        if let Some(t) = self.transcript.as_mut() {
            t.push(TranscriptRecord {
                round: e.round,
                sender: e.sender,
                recipient: e.recipient,
                bytes: e.wire_len(),
                kind: e.kind(),
            });
        }
    }

    /// Queues a message. Returns false, and drops it, if the sender is
    /// silent in that round.
    pub fn post(&mut self, e: Envelope) -> bool {
        if e.sender != SERVER && !self.is_active(e.sender, e.round) {
            return false;
        }
        let len = e.wire_len() as u64;
        self.count(e.sender, e.round, len, 0);
        if e.sender != SERVER {
            self.count(SERVER, e.round, 0, len);
        }
        self.record(&e);
        self.pending.push((self.seq, e));
        self.seq += 1;
        true
    }

    fn recipients(&self, e: &Envelope) -> Vec<u32> {
        if e.recipient == BROADCAST {
            self.clients
                .iter()
                .copied()
                .filter(|&c| c != e.sender && self.is_active(c, e.round))
                .collect()
        } else if e.recipient == SERVER || self.is_active(e.recipient, e.round) {
            vec![e.recipient]
        } else {
            Vec::new()
        }
    }

    /// Delivers everything queued, ordered by (round, sender, recipient).
    /// Broadcasts are expanded to every active client but the sender.
    pub fn deliver(&mut self) -> Vec<Envelope> {
        let mut pending = std::mem::take(&mut self.pending);
        pending.sort_by_key(|(seq, e)| (e.round, e.sender, e.recipient, *seq));
        let mut out = Vec::new();
        for (_, e) in pending {
            let targets = self.recipients(&e);
            for r in targets {
                let mut copy = e.clone();
                if e.recipient == BROADCAST {
                    copy.recipient = r;
                }
                for h in self.hooks.iter_mut() {
                    h(&mut copy);
                }
                if r != SERVER {
                    let len = copy.wire_len() as u64;
                    self.count(r, copy.round, 0, len);
                    if e.sender != SERVER {
                        self.count(SERVER, copy.round, len, 0);
                    }
                }
                out.push(copy);
            }
            self.relayed.push(e);
        }
        out
    }

    /// Messages as posted, before tamper hooks, from the last deliveries.
    /// The server keeps these to adjudicate complaints.
    pub fn take_relayed(&mut self) -> Vec<Envelope> {
        std::mem::take(&mut self.relayed)
    }

    /// Counts a message of `len` body bytes without materializing it; used
    /// by the size-only mode. Mirrors [`Mailbox::post`] plus delivery.
    pub fn account(&mut self, sender: u32, recipient: u32, round: u8, kind: Kind, body_len: usize) {
        let e = Envelope::new(sender, recipient, round, Vec::new());
        let len = (e.wire_len() + body_len) as u64;
        self.count(sender, round, len, 0);
        if sender != SERVER {
            self.count(SERVER, round, 0, len);
        }
        if let Some(t) = self.transcript.as_mut() {
            t.push(TranscriptRecord {
                round,
                sender,
                recipient,
                bytes: len as usize,
                kind: Some(kind),
            });
        }
        for r in self.recipients(&e) {
            if r != SERVER {
                self.count(r, round, 0, len);
                if sender != SERVER {
                    self.count(SERVER, round, len, 0);
                }
            }
        }
    }

    pub fn traffic(&self, party: u32, round: u8) -> Traffic {
        self.counters
            .get(&(party, round))
            .copied()
            .unwrap_or_default()
    }

    pub fn party_total(&self, party: u32) -> Traffic {
        self.counters
            .range((party, 0)..=(party, u8::MAX))
            .fold(Traffic::default(), |a, (_, t)| Traffic {
                sent: a.sent + t.sent,
                received: a.received + t.received,
            })
    }

    pub fn counters(&self) -> &BTreeMap<(u32, u8), Traffic> {
        &self.counters
    }

    pub fn reset_counters(&mut self) {
        self.counters.clear();
        if let Some(t) = self.transcript.as_mut() {
            t.clear();
        }
    }

    pub fn transcript(&self) -> &[TranscriptRecord] {
        self.transcript.as_deref().unwrap_or(&[])
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in self.transcript() {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}
