//! Agent configuration and network graph.
//!
//! The configuration document is a JSON object with one entry per agent id.
//! The first layer of each entry holds the agent's own attributes (`role`,
//! `cell_id`, compute figures, battery, position); the `adj` entry is keyed by
//! neighbor id and holds the attributes of the directed edge to that neighbor.
//!
//! ```json
//! {
//!   "server": { "role": "server", "adj": { "ap0": { "p2p_rate_bps": 5e8, "p2p_delay_s": 0.02 } } },
//!   "ap0":    { "role": "ap", "cell_id": "cell0", "adj": { "client0": { "channel": {} } } },
//!   "client0": { "role": "client", "cell_id": "cell0", "compute_time_per_epoch_s": 0.01 }
//! }
//! ```
//!
//! An edge given in one direction only is mirrored with the same attributes.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::channel::ChannelParams;

/// Backhaul defaults: 500 Mbps with 20 ms delay.
pub const DEFAULT_P2P_RATE_BPS: f64 = 5.0e8;
pub const DEFAULT_P2P_DELAY_S: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("topology document is not valid JSON: {0}")]
    Parse(String),
    #[error("duplicate agent id `{0}`")]
    DuplicateId(String),
    #[error("no agent has role `server`")]
    MissingServer,
    #[error("more than one server: {0:?}")]
    MultipleServers(Vec<String>),
    #[error("client `{0}` cannot reach the server")]
    UnreachableClient(String),
    #[error("malformed attribute on {}: {detail}", location(.agent, .edge))]
    MalformedAttribute { agent: String, edge: Option<String>, detail: String },
    #[error("unknown agent id `{0}`")]
    UnknownId(String),
}

fn location(agent: &str, edge: &Option<String>) -> String {
    match edge {
        Some(n) => format!("edge `{agent}` -> `{n}`"),
        None => format!("agent `{agent}`"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Server,
    Ap,
    Client,
}

impl Role {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "server" => Some(Role::Server),
            "ap" => Some(Role::Ap),
            "client" => Some(Role::Client),
            _ => None,
        }
    }
}

/// Attributes of one directed edge.
#[derive(Debug, Clone, PartialEq)]
pub enum EdgeAttrs {
    Wireless(ChannelParams),
    PointToPoint { rate_bps: f64, delay_s: f64 },
}

impl EdgeAttrs {
    pub fn channel(&self) -> Option<&ChannelParams> {
        match self {
            EdgeAttrs::Wireless(c) => Some(c),
            EdgeAttrs::PointToPoint { .. } => None,
        }
    }

    /// Time to push `bits` over a point-to-point hop.
    pub fn p2p_time(&self, bits: u64) -> Option<f64> {
        match self {
            EdgeAttrs::PointToPoint { rate_bps, delay_s } => Some(delay_s + bits as f64 / rate_bps),
            EdgeAttrs::Wireless(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    channel: Option<ChannelParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p2p_rate_bps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p2p_delay_s: Option<f64>,
}

impl RawEdge {
    fn into_attrs(self) -> Result<EdgeAttrs, String> {
        match (self.channel, self.p2p_rate_bps, self.p2p_delay_s) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                Err("edge carries both wireless channel and point-to-point attributes".into())
            }
            (Some(c), None, None) => {
                c.validate().map_err(|e| e.to_string())?;
                Ok(EdgeAttrs::Wireless(c))
            }
            (None, None, None) => Err("edge needs either `channel` or `p2p_rate_bps`/`p2p_delay_s`".into()),
            (None, rate, delay) => {
                let rate_bps = rate.unwrap_or(DEFAULT_P2P_RATE_BPS);
                let delay_s = delay.unwrap_or(DEFAULT_P2P_DELAY_S);
                if !(rate_bps.is_finite() && rate_bps > 0.0) {
                    return Err(format!("p2p_rate_bps must be positive, got {rate_bps}"));
                }
                if !(delay_s.is_finite() && delay_s >= 0.0) {
                    return Err(format!("p2p_delay_s must be nonnegative, got {delay_s}"));
                }
                Ok(EdgeAttrs::PointToPoint { rate_bps, delay_s })
            }
        }
    }

    fn from_attrs(attrs: &EdgeAttrs) -> Self {
        match attrs {
            EdgeAttrs::Wireless(c) => RawEdge { channel: Some(c.clone()), p2p_rate_bps: None, p2p_delay_s: None },
            EdgeAttrs::PointToPoint { rate_bps, delay_s } => {
                RawEdge { channel: None, p2p_rate_bps: Some(*rate_bps), p2p_delay_s: Some(*delay_s) }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    #[serde(default)]
    role: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cell_id: Option<String>,
    #[serde(default)]
    compute_power_w: f64,
    #[serde(default)]
    compute_time_per_epoch_s: f64,
    #[serde(default)]
    transmit_power_w: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    battery_j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    position: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speed_mps: Option<f64>,
    #[serde(default)]
    adj: EntryList,
}

/// Map entries in document order, keeping duplicates so they can be reported.
#[derive(Debug, Clone, Default)]
struct EntryList(Vec<(String, serde_json::Value)>);

impl<'de> Deserialize<'de> for EntryList {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct EntryVisitor;
        impl<'de> Visitor<'de> for EntryVisitor {
            type Value = EntryList;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object keyed by agent id")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<EntryList, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, serde_json::Value>()? {
                    entries.push((k, v));
                }
                Ok(EntryList(entries))
            }
        }
        deserializer.deserialize_map(EntryVisitor)
    }
}

impl Serialize for EntryList {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

/// One agent with its outgoing edges.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub id: String,
    pub role: Role,
    pub cell_id: Option<String>,
    pub compute_power_w: f64,
    pub compute_time_per_epoch_s: f64,
    /// Radio power used by the server for downlink broadcasts.
    pub transmit_power_w: f64,
    pub battery_j: Option<f64>,
    pub position: Option<[f64; 2]>,
    pub speed_mps: Option<f64>,
    pub adj: BTreeMap<String, EdgeAttrs>,
}

impl AgentSpec {
    pub fn new(id: impl Into<String>, role: Role) -> Self {
        Self {
            id: id.into(),
            role,
            cell_id: None,
            compute_power_w: 0.0,
            compute_time_per_epoch_s: 0.0,
            transmit_power_w: 0.0,
            battery_j: None,
            position: None,
            speed_mps: None,
            adj: BTreeMap::new(),
        }
    }

    fn malformed(&self, detail: impl Into<String>) -> TopologyError {
        TopologyError::MalformedAttribute { agent: self.id.clone(), edge: None, detail: detail.into() }
    }

    fn check_scalars(&self) -> Result<(), TopologyError> {
        if !(self.compute_power_w.is_finite() && self.compute_power_w >= 0.0) {
            return Err(self.malformed("compute_power_w must be nonnegative"));
        }
        if !(self.compute_time_per_epoch_s.is_finite() && self.compute_time_per_epoch_s >= 0.0) {
            return Err(self.malformed("compute_time_per_epoch_s must be nonnegative"));
        }
        if !(self.transmit_power_w.is_finite() && self.transmit_power_w >= 0.0) {
            return Err(self.malformed("transmit_power_w must be nonnegative"));
        }
        if let Some(b) = self.battery_j {
            if !(b.is_finite() && b > 0.0) {
                return Err(self.malformed("battery_j must be positive"));
            }
        }
        if self.role != Role::Server && self.cell_id.as_deref().is_none_or(str::is_empty) {
            return Err(self.malformed("clients and access points need a `cell_id`"));
        }
        Ok(())
    }
}

/// One directed hop on an uplink path.
#[derive(Debug, Clone, PartialEq)]
pub struct Hop {
    pub from: String,
    pub to: String,
    pub attrs: EdgeAttrs,
}

/// Validated graph of one server, access points and clients.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    agents: BTreeMap<String, AgentSpec>,
    server_id: String,
    cells: BTreeMap<String, Vec<String>>,
}

impl Topology {
    /// Parse and validate a configuration document.
    pub fn parse(document: &str) -> Result<Self, TopologyError> {
        let entries: EntryList = serde_json::from_str(document).map_err(|e| TopologyError::Parse(e.to_string()))?;
        let mut seen = BTreeSet::new();
        let mut agents = Vec::with_capacity(entries.0.len());
        for (id, value) in entries.0 {
            if !seen.insert(id.clone()) {
                return Err(TopologyError::DuplicateId(id));
            }
            agents.push(parse_agent(id, value)?);
        }
        Self::from_agents(agents)
    }

    /// Validate a set of agents and complete the reverse edges.
    pub fn from_agents(agents: Vec<AgentSpec>) -> Result<Self, TopologyError> {
        let mut map = BTreeMap::new();
        for a in agents {
            if map.contains_key(&a.id) {
                return Err(TopologyError::DuplicateId(a.id));
            }
            map.insert(a.id.clone(), a);
        }
        for a in map.values() {
            a.check_scalars()?;
            for n in a.adj.keys() {
                if n == &a.id {
                    return Err(TopologyError::MalformedAttribute {
                        agent: a.id.clone(),
                        edge: Some(n.clone()),
                        detail: "self loop".into(),
                    });
                }
                if !map.contains_key(n) {
                    return Err(TopologyError::MalformedAttribute {
                        agent: a.id.clone(),
                        edge: Some(n.clone()),
                        detail: format!("neighbor `{n}` is not a declared agent"),
                    });
                }
            }
        }

        let mut mirrored = Vec::new();
        for a in map.values() {
            for (n, attrs) in &a.adj {
                if !map[n].adj.contains_key(&a.id) {
                    mirrored.push((n.clone(), a.id.clone(), attrs.clone()));
                }
            }
        }
        for (from, to, attrs) in mirrored {
            map.get_mut(&from).expect("checked").adj.insert(to, attrs);
        }

        let servers: Vec<String> = map.values().filter(|a| a.role == Role::Server).map(|a| a.id.clone()).collect();
        let server_id = match servers.len() {
            0 => return Err(TopologyError::MissingServer),
            1 => servers[0].clone(),
            _ => return Err(TopologyError::MultipleServers(servers)),
        };

        let reach = bfs_parents(&map, &server_id);
        for a in map.values() {
            if a.role == Role::Client && !reach.contains_key(&a.id) {
                return Err(TopologyError::UnreachableClient(a.id.clone()));
            }
        }

        let mut cells: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for a in map.values().filter(|a| a.role == Role::Client) {
            cells.entry(a.cell_id.clone().unwrap_or_default()).or_default().push(a.id.clone());
        }
        Ok(Self { agents: map, server_id, cells })
    }

    /// Canonical document: every attribute explicit, both edge directions listed.
    pub fn to_document(&self) -> String {
        let mut root = serde_json::Map::new();
        for a in self.agents.values() {
            let adj = EntryList(
                a.adj
                    .iter()
                    .map(|(n, e)| (n.clone(), serde_json::to_value(RawEdge::from_attrs(e)).expect("serializable")))
                    .collect(),
            );
            let raw = RawAgent {
                role: Some(serde_json::to_value(a.role).expect("role").as_str().expect("str").to_string()),
                cell_id: a.cell_id.clone(),
                compute_power_w: a.compute_power_w,
                compute_time_per_epoch_s: a.compute_time_per_epoch_s,
                transmit_power_w: a.transmit_power_w,
                battery_j: a.battery_j,
                position: a.position,
                speed_mps: a.speed_mps,
                adj,
            };
            root.insert(a.id.clone(), serde_json::to_value(raw).expect("serializable"));
        }
        serde_json::to_string_pretty(&serde_json::Value::Object(root)).expect("serializable")
    }

    pub fn server_id(&self) -> &str {
        &self.server_id
    }

    pub fn agents(&self) -> impl Iterator<Item = &AgentSpec> {
        self.agents.values()
    }

    pub fn agent(&self, id: &str) -> Result<&AgentSpec, TopologyError> {
        self.agents.get(id).ok_or_else(|| TopologyError::UnknownId(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    /// Client ids in sorted order.
    pub fn client_ids(&self) -> Vec<String> {
        self.agents.values().filter(|a| a.role == Role::Client).map(|a| a.id.clone()).collect()
    }

    /// Cell id to sorted client ids.
    pub fn cells(&self) -> &BTreeMap<String, Vec<String>> {
        &self.cells
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.agents.values().map(|a| a.adj.len()).sum::<usize>() / 2
    }

    /// Neighbors of `id`, sorted by neighbor id.
    pub fn neighbors(&self, id: &str) -> Result<Vec<(&str, &EdgeAttrs)>, TopologyError> {
        Ok(self.agent(id)?.adj.iter().map(|(n, e)| (n.as_str(), e)).collect())
    }

    /// Shortest hop sequence from `client_id` to the server. Ties between
    /// equally short paths go to the lexicographically smaller neighbor.
    pub fn uplink_path(&self, client_id: &str) -> Result<Vec<Hop>, TopologyError> {
        self.agent(client_id)?;
        // Parents in a BFS rooted at the client point back toward it, so walk
        // from the server and reverse.
        let parents = bfs_parents(&self.agents, client_id);
        if !parents.contains_key(&self.server_id) {
            return Err(TopologyError::UnreachableClient(client_id.to_string()));
        }
        let mut nodes = vec![self.server_id.clone()];
        let mut cur = self.server_id.as_str();
        while cur != client_id {
            cur = parents[cur].as_deref().expect("non-root has a parent");
            nodes.push(cur.to_string());
        }
        nodes.reverse();
        Ok(nodes
            .windows(2)
            .map(|w| Hop { from: w[0].clone(), to: w[1].clone(), attrs: self.agents[&w[0]].adj[&w[1]].clone() })
            .collect())
    }
}

fn parse_agent(id: String, value: serde_json::Value) -> Result<AgentSpec, TopologyError> {
    let malformed = |detail: String| TopologyError::MalformedAttribute { agent: id.clone(), edge: None, detail };
    let raw: RawAgent = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
    let role_str = raw.role.ok_or_else(|| malformed("missing `role`".into()))?;
    let role = Role::parse(&role_str).ok_or_else(|| malformed(format!("unknown role `{role_str}`")))?;
    let mut adj = BTreeMap::new();
    for (n, v) in raw.adj.0 {
        let edge_err =
            |detail: String| TopologyError::MalformedAttribute { agent: id.clone(), edge: Some(n.clone()), detail };
        if adj.contains_key(&n) {
            return Err(edge_err("neighbor listed twice".into()));
        }
        let raw_edge: RawEdge = serde_json::from_value(v).map_err(|e| edge_err(e.to_string()))?;
        let attrs = raw_edge.into_attrs().map_err(edge_err)?;
        adj.insert(n, attrs);
    }
    Ok(AgentSpec {
        id: id.clone(),
        role,
        cell_id: raw.cell_id,
        compute_power_w: raw.compute_power_w,
        compute_time_per_epoch_s: raw.compute_time_per_epoch_s,
        transmit_power_w: raw.transmit_power_w,
        battery_j: raw.battery_j,
        position: raw.position,
        speed_mps: raw.speed_mps,
        adj,
    })
}

fn bfs_parents(agents: &BTreeMap<String, AgentSpec>, root: &str) -> BTreeMap<String, Option<String>> {
    let mut parents = BTreeMap::new();
    parents.insert(root.to_string(), None);
    let mut queue = VecDeque::from([root.to_string()]);
    while let Some(cur) = queue.pop_front() {
        for n in agents[&cur].adj.keys() {
            if !parents.contains_key(n) {
                parents.insert(n.clone(), Some(cur.clone()));
                queue.push_back(n.clone());
            }
        }
    }
    parents
}

/// Parameters for [`cellular_layout`].
#[derive(Debug, Clone)]
pub struct CellularLayout {
    pub cells: usize,
    pub clients_per_cell: usize,
    pub channel: ChannelParams,
    pub backhaul_rate_bps: f64,
    pub backhaul_delay_s: f64,
    pub client_compute_power_w: f64,
    pub client_compute_time_per_epoch_s: f64,
    pub server_transmit_power_w: f64,
}

impl Default for CellularLayout {
    fn default() -> Self {
        Self {
            cells: 2,
            clients_per_cell: 4,
            channel: ChannelParams::default(),
            backhaul_rate_bps: DEFAULT_P2P_RATE_BPS,
            backhaul_delay_s: DEFAULT_P2P_DELAY_S,
            client_compute_power_w: 0.0,
            client_compute_time_per_epoch_s: 0.0,
            server_transmit_power_w: 0.0,
        }
    }
}

/// Server plus `cells` access points, each serving `clients_per_cell`
/// clients over identical wireless links. Ids are zero-padded so sorted order
/// matches numeric order.
pub fn cellular_layout(layout: &CellularLayout) -> Result<Topology, TopologyError> {
    let cell_w = digits(layout.cells);
    let client_w = digits(layout.cells * layout.clients_per_cell);
    let mut server = AgentSpec::new("server", Role::Server);
    server.transmit_power_w = layout.server_transmit_power_w;
    let mut agents = Vec::new();
    let mut client_idx = 0;
    for c in 0..layout.cells {
        let cell = format!("cell{c:0cell_w$}");
        let ap_id = format!("ap{c:0cell_w$}");
        server.adj.insert(
            ap_id.clone(),
            EdgeAttrs::PointToPoint { rate_bps: layout.backhaul_rate_bps, delay_s: layout.backhaul_delay_s },
        );
        let mut ap = AgentSpec::new(ap_id.clone(), Role::Ap);
        ap.cell_id = Some(cell.clone());
        for _ in 0..layout.clients_per_cell {
            let mut client = AgentSpec::new(format!("client{client_idx:0client_w$}"), Role::Client);
            client.cell_id = Some(cell.clone());
            client.compute_power_w = layout.client_compute_power_w;
            client.compute_time_per_epoch_s = layout.client_compute_time_per_epoch_s;
            client.adj.insert(ap_id.clone(), EdgeAttrs::Wireless(layout.channel.clone()));
            agents.push(client);
            client_idx += 1;
        }
        agents.push(ap);
    }
    agents.push(server);
    Topology::from_agents(agents)
}

fn digits(n: usize) -> usize {
    n.saturating_sub(1).to_string().len()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "server": { "role": "server", "adj": { "ap0": { "p2p_rate_bps": 5e8, "p2p_delay_s": 0.02 } } },
        "ap0": { "role": "ap", "cell_id": "cell0", "adj": { "client0": { "channel": {} } } },
        "client0": { "role": "client", "cell_id": "cell0", "compute_power_w": 1.5, "compute_time_per_epoch_s": 0.01,
                     "battery_j": 100.0, "position": [1.0, 2.0] }
    }"#;

    #[test]
    fn minimal_document() {
        let t = Topology::parse(MINIMAL).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.edge_count(), 2);
        assert_eq!(t.server_id(), "server");
        assert_eq!(t.cells().get("cell0").unwrap(), &vec!["client0".to_string()]);
        let client = t.agent("client0").unwrap();
        assert_eq!(client.battery_j, Some(100.0));
        assert_eq!(client.position, Some([1.0, 2.0]));
        // reverse edge defaulted from the AP side
        assert_eq!(client.adj["ap0"], EdgeAttrs::Wireless(ChannelParams::default()));
    }

    #[test]
    fn neighbors_sorted_and_unknown() {
        let t = Topology::parse(MINIMAL).unwrap();
        let n = t.neighbors("server").unwrap();
        assert_eq!(n.len(), 1);
        assert_eq!(n[0].0, "ap0");
        assert_eq!(n[0].1, &EdgeAttrs::PointToPoint { rate_bps: 5e8, delay_s: 0.02 });
        assert_eq!(t.neighbors("nobody"), Err(TopologyError::UnknownId("nobody".into())));
    }

    #[test]
    fn missing_role_names_agent() {
        let doc = MINIMAL.replace(r#""role": "ap", "#, "");
        match Topology::parse(&doc) {
            Err(TopologyError::MalformedAttribute { agent, edge: None, .. }) => assert_eq!(agent, "ap0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_detected() {
        let doc = MINIMAL.replacen(
            r#""client0": { "role""#,
            r#""client0": { "role": "client", "cell_id": "cell0" }, "client0": { "role""#,
            1,
        );
        assert_eq!(Topology::parse(&doc), Err(TopologyError::DuplicateId("client0".into())));
    }

    #[test]
    fn server_count_checked() {
        let doc = MINIMAL.replace(r#""role": "server""#, r#""role": "client", "cell_id": "x""#);
        assert_eq!(Topology::parse(&doc), Err(TopologyError::MissingServer));
        let doc = MINIMAL.replace(r#""role": "ap""#, r#""role": "server""#);
        assert!(matches!(Topology::parse(&doc), Err(TopologyError::MultipleServers(v)) if v.len() == 2));
    }

    #[test]
    fn unreachable_client() {
        let doc = r#"{
            "server": { "role": "server" },
            "client0": { "role": "client", "cell_id": "c" }
        }"#;
        assert_eq!(Topology::parse(doc), Err(TopologyError::UnreachableClient("client0".into())));
    }

    #[test]
    fn bad_edge_is_named() {
        let doc = MINIMAL.replace(r#""channel": {}"#, r#""channel": { "per": 1.5 }"#);
        match Topology::parse(&doc) {
            Err(TopologyError::MalformedAttribute { agent, edge, .. }) => {
                assert_eq!(agent, "ap0");
                assert_eq!(edge.as_deref(), Some("client0"));
            }
            other => panic!("{other:?}"),
        }
        let doc = MINIMAL.replace(r#""channel": {}"#, r#""channel": {}, "p2p_delay_s": 0.1"#);
        assert!(matches!(Topology::parse(&doc), Err(TopologyError::MalformedAttribute { .. })));
        let doc = MINIMAL.replace(r#"{ "channel": {} }"#, "{}");
        assert!(matches!(Topology::parse(&doc), Err(TopologyError::MalformedAttribute { .. })));
    }

    #[test]
    fn uplink_paths() {
        let t = Topology::parse(MINIMAL).unwrap();
        let path = t.uplink_path("client0").unwrap();
        assert_eq!(path.len(), 2);
        assert_eq!((path[0].from.as_str(), path[0].to.as_str()), ("client0", "ap0"));
        assert_eq!((path[1].from.as_str(), path[1].to.as_str()), ("ap0", "server"));
        assert!(path[0].attrs.channel().is_some());
        assert!(path[1].attrs.p2p_time(1000).is_some());

        let direct = r#"{
            "server": { "role": "server", "adj": { "c": { "channel": {} } } },
            "c": { "role": "client", "cell_id": "cell" }
        }"#;
        let t = Topology::parse(direct).unwrap();
        let path = t.uplink_path("c").unwrap();
        assert_eq!(path.len(), 1);
        assert_eq!(path[0].to, "server");
    }

    #[test]
    fn canonical_round_trip() {
        let t = Topology::parse(MINIMAL).unwrap();
        let doc = t.to_document();
        let again = Topology::parse(&doc).unwrap();
        assert_eq!(t, again);
        assert_eq!(doc, again.to_document());
    }

    #[test]
    fn layout_builder() {
        let t = cellular_layout(&CellularLayout { cells: 12, clients_per_cell: 3, ..Default::default() }).unwrap();
        assert_eq!(t.client_ids().len(), 36);
        assert_eq!(t.cells().len(), 12);
        assert_eq!(t.client_ids()[0], "client00");
        assert_eq!(t.uplink_path("client35").unwrap().len(), 2);
    }
}
