//! Queue network of the transmitter and slot-level packet movement.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::channel::ErasurePattern;
use crate::gf2::PacketId;
use crate::region::Action;

/// One buffered item. `send` is the original packet put on the air when the
/// item is served; `credit` is the original its owner decodes once the item
/// reaches Q4. They differ for items created from poisoned packets, where a
/// remedy stands in for its partner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub send: PacketId,
    pub credit: PacketId,
}

impl Entry {
    pub fn original(id: PacketId) -> Self {
        Self { send: id, credit: id }
    }
}

/// A pending remedy, seen by both receivers (Q3 of Rx1 and Q3 of Rx2).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Remedy {
    /// constituents of the poisoned packet, Rx1's first
    pub poison: [PacketId; 2],
    /// the constituent to transmit
    pub send: PacketId,
    /// what each receiver decodes once the remedy reaches it
    pub credit: [PacketId; 2],
    /// reception pattern of the poisoned packet
    pub pattern: ErasurePattern,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueueId {
    Q1,
    Q2,
    Q3,
    Q4,
}

/// A packet moving between two queues of receiver `rx`'s network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Movement {
    pub rx: usize,
    pub from: QueueId,
    pub to: QueueId,
    pub packet: PacketId,
}

impl Movement {
    /// Whether this is one of the six links of the queue network.
    pub fn is_network_edge(&self) -> bool {
        use QueueId::*;
        matches!(
            (self.from, self.to),
            (Q1, Q2) | (Q1, Q3) | (Q1, Q4) | (Q2, Q4) | (Q3, Q2) | (Q3, Q4)
        )
    }
}

/// What the transmitter does in a slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Decision {
    Idle,
    Act(Action),
    /// Uncoded resend of the head of Q2 of receiver `rx` (stand-in for a
    /// coded packet when the other Q2 is empty).
    Retransmit(usize),
}

impl Decision {
    /// Action number written to traces; a lone retransmission counts as 3.
    pub fn code(self) -> u8 {
        match self {
            Decision::Idle => 0,
            Decision::Act(a) => a.number(),
            Decision::Retransmit(_) => 3,
        }
    }

    pub fn label(self) -> String {
        match self {
            Decision::Idle => "idle".into(),
            Decision::Act(a) => a.number().to_string(),
            Decision::Retransmit(rx) => format!("3-lone-rx{}", rx + 1),
        }
    }
}

/// One transmission with its reception flags and the deliveries it caused.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transmission {
    pub slot: u64,
    pub action: u8,
    pub combo: Vec<PacketId>,
    pub received_rx1: bool,
    pub received_rx2: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub delivered_rx1: Vec<PacketId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub delivered_rx2: Vec<PacketId>,
}

impl Transmission {
    pub fn received(&self, rx: usize) -> bool {
        if rx == 0 {
            self.received_rx1
        } else {
            self.received_rx2
        }
    }

    pub fn delivered(&self, rx: usize) -> &[PacketId] {
        if rx == 0 {
            &self.delivered_rx1
        } else {
            &self.delivered_rx2
        }
    }

    fn delivered_mut(&mut self, rx: usize) -> &mut Vec<PacketId> {
        if rx == 0 {
            &mut self.delivered_rx1
        } else {
            &mut self.delivered_rx2
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepOutcome {
    pub movements: Vec<Movement>,
    pub transmission: Option<Transmission>,
}

/// Contents of all transmitter queues. Q4 only keeps counters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QueueState {
    pub slot: u64,
    q1: [VecDeque<Entry>; 2],
    q2: [VecDeque<Entry>; 2],
    remedies: VecDeque<Remedy>,
    arrivals: [u64; 2],
    delivered: [u64; 2],
    next_id: PacketId,
}

impl QueueState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Enqueues a fresh original packet for receiver `rx` and returns its id.
    pub fn arrive(&mut self, rx: usize) -> PacketId {
        let id = self.next_id;
        self.next_id += 1;
        self.q1[rx].push_back(Entry::original(id));
        self.arrivals[rx] += 1;
        id
    }

    pub fn q1(&self, rx: usize) -> &VecDeque<Entry> {
        &self.q1[rx]
    }

    pub fn q2(&self, rx: usize) -> &VecDeque<Entry> {
        &self.q2[rx]
    }

    pub fn remedies(&self) -> &VecDeque<Remedy> {
        &self.remedies
    }

    /// `|Q_l^(rx)|` for `l` in 1..=3.
    pub fn len(&self, rx: usize, queue: QueueId) -> usize {
        match queue {
            QueueId::Q1 => self.q1[rx].len(),
            QueueId::Q2 => self.q2[rx].len(),
            QueueId::Q3 => self.remedies.len(),
            QueueId::Q4 => 0,
        }
    }

    pub fn arrivals(&self, rx: usize) -> u64 {
        self.arrivals[rx]
    }

    pub fn delivered(&self, rx: usize) -> u64 {
        self.delivered[rx]
    }

    /// Packets of `rx` still inside the network.
    pub fn in_system(&self, rx: usize) -> u64 {
        (self.q1[rx].len() + self.q2[rx].len() + self.remedies.len()) as u64
    }

    /// Sum of all six queue lengths.
    pub fn total(&self) -> u64 {
        self.in_system(0) + self.in_system(1)
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// `arrivals = queued + delivered` for both receivers.
    pub fn conserves(&self) -> bool {
        (0..2).all(|j| self.arrivals[j] == self.in_system(j) + self.delivered[j])
    }

    pub fn is_feasible(&self, decision: Decision) -> bool {
        match decision {
            Decision::Idle => true,
            Decision::Act(Action::SendRx1) => !self.q1[0].is_empty(),
            Decision::Act(Action::SendRx2) => !self.q1[1].is_empty(),
            Decision::Act(Action::Coded) => !self.q2[0].is_empty() && !self.q2[1].is_empty(),
            Decision::Act(Action::Poison) => !self.q1[0].is_empty() && !self.q1[1].is_empty(),
            Decision::Act(Action::Remedy) => !self.remedies.is_empty(),
            Decision::Retransmit(rx) => !self.q2[rx].is_empty(),
        }
    }

    fn deliver(&mut self, rx: usize, from: QueueId, credit: PacketId, out: &mut StepOutcome) {
        self.delivered[rx] += 1;
        out.movements.push(Movement {
            rx,
            from,
            to: QueueId::Q4,
            packet: credit,
        });
        if let Some(tx) = out.transmission.as_mut() {
            tx.delivered_mut(rx).push(credit);
        }
    }

    /// Applies one slot: transmits according to `decision` and moves packets
    /// according to which receivers got the transmission.
    pub fn step(&mut self, decision: Decision, z: ErasurePattern) -> Result<StepOutcome, SimError> {
        if !self.is_feasible(decision) {
            return Err(SimError::InfeasibleAction {
                slot: self.slot,
                decision,
            });
        }
        let got = [z.received(0), z.received(1)];
        let mut out = StepOutcome::default();
        let combo = match decision {
            Decision::Idle => None,
            Decision::Act(Action::SendRx1) => Some(vec![self.q1[0][0].send]),
            Decision::Act(Action::SendRx2) => Some(vec![self.q1[1][0].send]),
            Decision::Act(Action::Coded) => Some(vec![self.q2[0][0].send, self.q2[1][0].send]),
            Decision::Act(Action::Poison) => Some(vec![self.q1[0][0].send, self.q1[1][0].send]),
            Decision::Act(Action::Remedy) => Some(vec![self.remedies[0].send]),
            Decision::Retransmit(rx) => Some(vec![self.q2[rx][0].send]),
        };
        out.transmission = combo.map(|combo| Transmission {
            slot: self.slot,
            action: decision.code(),
            combo,
            received_rx1: got[0],
            received_rx2: got[1],
            delivered_rx1: Vec::new(),
            delivered_rx2: Vec::new(),
        });

        match decision {
            Decision::Idle => {}
            Decision::Act(Action::SendRx1) | Decision::Act(Action::SendRx2) => {
                let j = if decision == Decision::Act(Action::SendRx1) { 0 } else { 1 };
                if got[j] {
                    let e = self.q1[j].pop_front().unwrap();
                    self.deliver(j, QueueId::Q1, e.credit, &mut out);
                } else if got[1 - j] {
                    let e = self.q1[j].pop_front().unwrap();
                    self.q2[j].push_back(e);
                    out.movements.push(Movement {
                        rx: j,
                        from: QueueId::Q1,
                        to: QueueId::Q2,
                        packet: e.credit,
                    });
                }
            }
            Decision::Act(Action::Coded) => {
                for j in 0..2 {
                    if got[j] {
                        let e = self.q2[j].pop_front().unwrap();
                        self.deliver(j, QueueId::Q2, e.credit, &mut out);
                    }
                }
            }
            Decision::Retransmit(j) => {
                if got[j] {
                    let e = self.q2[j].pop_front().unwrap();
                    self.deliver(j, QueueId::Q2, e.credit, &mut out);
                }
            }
            Decision::Act(Action::Poison) => {
                if got[0] || got[1] {
                    let p1 = self.q1[0].pop_front().unwrap().send;
                    let p2 = self.q1[1].pop_front().unwrap().send;
                    // received at Rx2 (alone or with Rx1): remedy is p1,
                    // received only at Rx1: remedy is p2
                    let send = if got[1] { p1 } else { p2 };
                    self.remedies.push_back(Remedy {
                        poison: [p1, p2],
                        send,
                        credit: [p1, p2],
                        pattern: z,
                    });
                    for (j, p) in [p1, p2].into_iter().enumerate() {
                        out.movements.push(Movement {
                            rx: j,
                            from: QueueId::Q1,
                            to: QueueId::Q3,
                            packet: p,
                        });
                    }
                }
            }
            Decision::Act(Action::Remedy) => {
                if got[0] || got[1] {
                    let rem = self.remedies.pop_front().unwrap();
                    for j in 0..2 {
                        if got[j] {
                            self.deliver(j, QueueId::Q3, rem.credit[j], &mut out);
                        } else {
                            // the other receiver now knows `send`
                            self.q2[j].push_back(Entry {
                                send: rem.send,
                                credit: rem.credit[j],
                            });
                            out.movements.push(Movement {
                                rx: j,
                                from: QueueId::Q3,
                                to: QueueId::Q2,
                                packet: rem.credit[j],
                            });
                        }
                    }
                }
            }
        }
        self.slot += 1;
        Ok(out)
    }
}
