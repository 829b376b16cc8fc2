//! QoS accounting: energy, time, bits, packet loss, active links, throughput
//! and the energy fairness ratio.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::shannon_latency;
use crate::engine::RoundOutcome;
use crate::topology::{EdgeAttrs, Topology};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("fairness ratio needs at least two clients with positive energy")]
    Degenerate,
    #[error("round {0} has zero duration")]
    ZeroDuration(usize),
    #[error("round {0} was not recorded")]
    UnknownRound(usize),
}

/// How much radio-on time a client whose upload missed the window pays for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DroppedAirtime {
    /// The whole attempted airtime.
    #[default]
    Full,
    /// Airtime up to the close of the window.
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargeOptions {
    pub dropped_airtime: DroppedAirtime,
    pub time_window_s: f64,
    /// Charge the server for broadcasting the global model.
    pub downlink_energy: bool,
}

/// Per-round QoS entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundQos {
    pub round: usize,
    pub duration_s: f64,
    pub energy_j: f64,
    pub bits_attempted: u64,
    pub bits_delivered: u64,
    pub lost_bits: u64,
    pub packets_lost: u64,
    pub active_links: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QosLedger {
    pub energy_j: BTreeMap<String, f64>,
    pub total_energy_j: f64,
    pub total_time_s: f64,
    pub bits_attempted: u64,
    pub bits_delivered: u64,
    pub packets_lost: u64,
    pub active_links_per_round: Vec<usize>,
    pub throughput_bps: Vec<f64>,
    pub rounds: Vec<RoundQos>,
    clients: BTreeSet<String>,
}

impl QosLedger {
    pub fn new<I: IntoIterator<Item = String>>(clients: I) -> Self {
        let clients: BTreeSet<String> = clients.into_iter().collect();
        let energy_j = clients.iter().map(|c| (c.clone(), 0.0)).collect();
        Self { energy_j, clients, ..Default::default() }
    }

    fn add_energy(&mut self, agent: &str, joules: f64, round: &mut RoundQos) {
        *self.energy_j.entry(agent.to_string()).or_insert(0.0) += joules;
        self.total_energy_j += joules;
        round.energy_j += joules;
    }

    /// Sum of the per-agent entries.
    pub fn energy_sum(&self) -> f64 {
        self.energy_j.values().sum()
    }

    pub fn client_energies(&self) -> Vec<f64> {
        self.clients.iter().map(|c| self.energy_j.get(c).copied().unwrap_or(0.0)).collect()
    }

    /// Account one round.
    pub fn charge_round(
        &mut self,
        outcome: &RoundOutcome,
        topology: &Topology,
        opts: &ChargeOptions,
    ) -> Result<(), MetricsError> {
        let mut rq = RoundQos {
            round: outcome.round_index,
            duration_s: outcome.round_duration_s,
            energy_j: 0.0,
            bits_attempted: 0,
            bits_delivered: 0,
            lost_bits: 0,
            packets_lost: 0,
            active_links: outcome.activated.len(),
        };
        let activated: BTreeSet<&str> = outcome.activated.iter().map(String::as_str).collect();
        for (id, compute_s) in &outcome.compute_times {
            let agent = topology.agent(id).map_err(|_| MetricsError::UnknownAgent(id.clone()))?;
            let delivered = activated.contains(id.as_str());
            let hop = topology.uplink_path(id).map_err(|_| MetricsError::UnknownAgent(id.clone()))?;
            let channel = hop.first().and_then(|h| h.attrs.channel());
            let packet_bits = channel.map_or(crate::channel::ChannelParams::default().packet_bits, |c| c.packet_bits);

            let mut joules = agent.compute_power_w * compute_s;
            let attempts = match (outcome.uplink_samples.get(id), channel) {
                (Some(link), Some(c)) => {
                    let airtime = if !delivered && opts.dropped_airtime == DroppedAirtime::Truncated {
                        link.total_time_s.min(opts.time_window_s)
                    } else {
                        link.total_time_s
                    };
                    joules += c.transmit_power_w * airtime;
                    u64::from(link.retransmissions)
                }
                _ => 1,
            };
            self.add_energy(id, joules, &mut rq);

            rq.bits_attempted += packet_bits * attempts;
            let lost = if delivered { attempts - 1 } else { attempts };
            rq.packets_lost += lost;
            rq.lost_bits += packet_bits * lost;
            if delivered {
                rq.bits_delivered += packet_bits;
            }
        }

        if opts.downlink_energy && !outcome.compute_times.is_empty() {
            let server =
                topology.agent(topology.server_id()).map_err(|_| MetricsError::UnknownAgent("server".into()))?;
            if server.transmit_power_w > 0.0 {
                let mut first_hops = BTreeMap::new();
                for id in outcome.compute_times.keys() {
                    if let Ok(path) = topology.uplink_path(id) {
                        let bits = path.first().and_then(|h| h.attrs.channel()).map_or(1000, |c| c.packet_bits);
                        if let Some(last) = path.last() {
                            let e = first_hops.entry(last.from.clone()).or_insert(0u64);
                            *e = (*e).max(bits);
                        }
                    }
                }
                let mut airtime = 0.0;
                for (neighbor, bits) in first_hops {
                    airtime += match &server.adj[&neighbor] {
                        EdgeAttrs::PointToPoint { rate_bps, .. } => bits as f64 / rate_bps,
                        EdgeAttrs::Wireless(c) => {
                            let c = crate::channel::ChannelParams { packet_bits: bits, ..c.clone() };
                            shannon_latency(&c, c.mean_path_gain()).unwrap_or(0.0)
                        }
                    };
                }
                let id = server.id.clone();
                self.add_energy(&id, server.transmit_power_w * airtime, &mut rq);
            }
        }

        self.total_time_s += outcome.round_duration_s;
        self.bits_attempted += rq.bits_attempted;
        self.bits_delivered += rq.bits_delivered;
        self.packets_lost += rq.packets_lost;
        self.active_links_per_round.push(rq.active_links);
        let tp = if rq.duration_s > 0.0 { rq.bits_delivered as f64 / rq.duration_s } else { 0.0 };
        self.throughput_bps.push(tp);
        self.rounds.push(rq);
        Ok(())
    }

    /// Delivered bits of a recorded round over its duration.
    pub fn throughput(&self, round: usize) -> Result<f64, MetricsError> {
        let rq = self.rounds.iter().find(|r| r.round == round).ok_or(MetricsError::UnknownRound(round))?;
        if rq.duration_s <= 0.0 {
            return Err(MetricsError::ZeroDuration(round));
        }
        Ok(rq.bits_delivered as f64 / rq.duration_s)
    }

    /// Max over min cumulative client energy.
    pub fn fairness_ratio(&self) -> Result<f64, MetricsError> {
        fairness_ratio(&self.client_energies())
    }

    /// Combine two ledgers covering disjoint agents of the same rounds.
    pub fn merge(&self, other: &QosLedger) -> QosLedger {
        let mut out = self.clone();
        for (k, v) in &other.energy_j {
            *out.energy_j.entry(k.clone()).or_insert(0.0) += v;
        }
        out.clients.extend(other.clients.iter().cloned());
        out.total_energy_j += other.total_energy_j;
        out.total_time_s = out.total_time_s.max(other.total_time_s);
        out.bits_attempted += other.bits_attempted;
        out.bits_delivered += other.bits_delivered;
        out.packets_lost += other.packets_lost;
        let mut by_round: BTreeMap<usize, RoundQos> = BTreeMap::new();
        for r in self.rounds.iter().chain(&other.rounds) {
            by_round
                .entry(r.round)
                .and_modify(|acc| {
                    acc.duration_s = acc.duration_s.max(r.duration_s);
                    acc.energy_j += r.energy_j;
                    acc.bits_attempted += r.bits_attempted;
                    acc.bits_delivered += r.bits_delivered;
                    acc.lost_bits += r.lost_bits;
                    acc.packets_lost += r.packets_lost;
                    acc.active_links += r.active_links;
                })
                .or_insert_with(|| r.clone());
        }
        out.rounds = by_round.into_values().collect();
        out.active_links_per_round = out.rounds.iter().map(|r| r.active_links).collect();
        out.throughput_bps = out
            .rounds
            .iter()
            .map(|r| if r.duration_s > 0.0 { r.bits_delivered as f64 / r.duration_s } else { 0.0 })
            .collect();
        out
    }
}

/// Max over min of per-client energies; every entry must be positive.
pub fn fairness_ratio(energies: &[f64]) -> Result<f64, MetricsError> {
    if energies.len() < 2 || energies.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(MetricsError::Degenerate);
    }
    let max = energies.iter().copied().fold(f64::MIN, f64::max);
    let min = energies.iter().copied().fold(f64::MAX, f64::min);
    Ok(max / min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelParams, LinkSample};
    use crate::topology::{AgentSpec, Role};
    use proptest::prelude::*;

    fn single_client(pt: f64) -> Topology {
        let mut server = AgentSpec::new("server", Role::Server);
        server.transmit_power_w = 2.0;
        let mut c = AgentSpec::new("c0", Role::Client);
        c.cell_id = Some("cell".into());
        c.compute_power_w = 3.0;
        let channel = ChannelParams { transmit_power_w: pt, packet_bits: 1000, ..ChannelParams::default() };
        c.adj.insert("server".into(), EdgeAttrs::Wireless(channel));
        Topology::from_agents(vec![server, c]).unwrap()
    }

    fn outcome(activated: bool, link: LinkSample, compute_s: f64, duration: f64) -> RoundOutcome {
        let mut o = RoundOutcome { round_index: 0, round_duration_s: duration, ..Default::default() };
        o.compute_times.insert("c0".into(), compute_s);
        o.uplink_samples.insert("c0".into(), link);
        if activated {
            o.activated.push("c0".into());
        } else {
            o.dropped.push("c0".into());
        }
        o
    }

    const OPTS: ChargeOptions =
        ChargeOptions { dropped_airtime: DroppedAirtime::Full, time_window_s: 1.0, downlink_energy: false };

    #[test]
    fn nothing_scheduled_leaves_energy_unchanged() {
        let t = single_client(0.72);
        let mut l = QosLedger::new(["c0".to_string()]);
        let o = RoundOutcome { round_duration_s: 1.0, ..Default::default() };
        l.charge_round(&o, &t, &OPTS).unwrap();
        assert_eq!(l.total_energy_j, 0.0);
        assert_eq!(l.bits_attempted, 0);
    }

    #[test]
    fn airtime_energy() {
        let t = single_client(0.72);
        let mut l = QosLedger::new(["c0".to_string()]);
        l.charge_round(&outcome(true, LinkSample::new(1.0, 1.0, 1), 0.0, 1.0), &t, &OPTS).unwrap();
        assert!((l.energy_j["c0"] - 0.72).abs() < 1e-15);
    }

    #[test]
    fn retransmission_bits() {
        let t = single_client(0.72);
        let mut l = QosLedger::new(["c0".to_string()]);
        l.charge_round(&outcome(true, LinkSample::new(1.0, 0.1, 3), 0.5, 1.0), &t, &OPTS).unwrap();
        assert_eq!(l.bits_attempted, 3000);
        assert_eq!(l.bits_delivered, 1000);
        assert_eq!(l.packets_lost, 2);
        // radio plus compute
        assert!((l.energy_j["c0"] - (0.72 * 0.30000000000000004 + 3.0 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn dropped_client_loses_every_attempt() {
        let t = single_client(1.0);
        let mut full = QosLedger::new(["c0".to_string()]);
        full.charge_round(&outcome(false, LinkSample::new(1.0, 1.5, 2), 0.0, 1.0), &t, &OPTS).unwrap();
        assert_eq!(full.packets_lost, 2);
        assert_eq!(full.bits_delivered, 0);
        assert!((full.total_energy_j - 3.0).abs() < 1e-15);

        let mut cut = QosLedger::new(["c0".to_string()]);
        let opts = ChargeOptions { dropped_airtime: DroppedAirtime::Truncated, ..OPTS };
        cut.charge_round(&outcome(false, LinkSample::new(1.0, 1.5, 2), 0.0, 1.0), &t, &opts).unwrap();
        assert!((cut.total_energy_j - 1.0).abs() < 1e-15);
    }

    #[test]
    fn downlink_charged_to_server() {
        let t = single_client(1.0);
        let mut l = QosLedger::new(["c0".to_string()]);
        let opts = ChargeOptions { downlink_energy: true, ..OPTS };
        l.charge_round(&outcome(true, LinkSample::new(1.0, 0.25, 1), 0.0, 1.0), &t, &opts).unwrap();
        assert!(l.energy_j["server"] > 0.0);
        assert!((l.energy_sum() - l.total_energy_j).abs() <= 1e-9 * l.total_energy_j);
    }

    #[test]
    fn unknown_agent() {
        let t = single_client(1.0);
        let mut l = QosLedger::new(["c0".to_string()]);
        let mut o = RoundOutcome { round_duration_s: 1.0, ..Default::default() };
        o.compute_times.insert("ghost".into(), 0.0);
        assert_eq!(l.charge_round(&o, &t, &OPTS), Err(MetricsError::UnknownAgent("ghost".into())));
    }

    #[test]
    fn throughput_examples() {
        let t = single_client(1.0);
        let mut l = QosLedger::new(["c0".to_string()]);
        l.charge_round(&outcome(true, LinkSample::new(1.0, 0.1, 1), 0.0, 1.0), &t, &OPTS).unwrap();
        assert_eq!(l.throughput(0).unwrap(), 1000.0);
        let mut o = outcome(false, LinkSample::new(1.0, 2.0, 1), 0.0, 1.0);
        o.round_index = 1;
        l.charge_round(&o, &t, &OPTS).unwrap();
        assert_eq!(l.throughput(1).unwrap(), 0.0);
        assert_eq!(l.throughput(7), Err(MetricsError::UnknownRound(7)));

        let mut z = QosLedger::default();
        z.rounds.push(RoundQos {
            round: 0,
            duration_s: 0.5,
            energy_j: 0.0,
            bits_attempted: 4000,
            bits_delivered: 4000,
            lost_bits: 0,
            packets_lost: 0,
            active_links: 4,
        });
        assert_eq!(z.throughput(0).unwrap(), 8000.0);
        z.rounds[0].duration_s = 0.0;
        assert_eq!(z.throughput(0), Err(MetricsError::ZeroDuration(0)));
    }

    #[test]
    fn fairness_examples() {
        assert_eq!(fairness_ratio(&[2.0, 2.0, 2.0]).unwrap(), 1.0);
        assert_eq!(fairness_ratio(&[6.19, 1.0]).unwrap(), 6.19);
        assert_eq!(fairness_ratio(&[0.0, 0.0]), Err(MetricsError::Degenerate));
        assert_eq!(fairness_ratio(&[1.0]), Err(MetricsError::Degenerate));
    }

    proptest! {
        #[test]
        fn fairness_scale_invariant(e in prop::collection::vec(0.01f64..100.0, 2..10), c in 0.01f64..100.0) {
            let scaled: Vec<f64> = e.iter().map(|v| v * c).collect();
            let a = fairness_ratio(&e).unwrap();
            let b = fairness_ratio(&scaled).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a);
            prop_assert!(a >= 1.0);
        }

        #[test]
        fn merge_is_commutative(ea in 0.0f64..10.0, eb in 0.0f64..10.0, ba in 0u64..5000, bb in 0u64..5000) {
            let mut a = QosLedger::new(["a".to_string()]);
            a.energy_j.insert("a".into(), ea);
            a.total_energy_j = ea;
            a.bits_attempted = ba;
            a.rounds.push(RoundQos { round: 0, duration_s: 1.0, energy_j: ea, bits_attempted: ba, bits_delivered: 0, lost_bits: ba, packets_lost: 1, active_links: 0 });
            let mut b = QosLedger::new(["b".to_string()]);
            b.energy_j.insert("b".into(), eb);
            b.total_energy_j = eb;
            b.bits_attempted = bb;
            b.rounds.push(RoundQos { round: 0, duration_s: 2.0, energy_j: eb, bits_attempted: bb, bits_delivered: 0, lost_bits: bb, packets_lost: 1, active_links: 1 });
            let ab = a.merge(&b);
            let ba_ = b.merge(&a);
            prop_assert_eq!(&ab, &ba_);
            prop_assert_eq!(ab.rounds[0].bits_attempted, ba + bb);
            prop_assert_eq!(ab.rounds[0].duration_s, 2.0);
        }
    }
}
