mod common;

use flsim::topology::{cellular_layout, CellularLayout, EdgeAttrs, Topology, TopologyError};
use proptest::prelude::*;
use serde_json::{json, Value};

use common::fixture_path;

fn fixture_text() -> String {
    std::fs::read_to_string(fixture_path("experiment_11.json")).expect("fixture present")
}

#[test]
fn experiment_layout_has_eleven_agents() {
    let topo = Topology::parse(&fixture_text()).unwrap();
    assert_eq!(topo.len(), 11);
    assert_eq!(topo.cells().len(), 2);
    assert!(topo.cells().values().all(|c| c.len() == 4));
    assert_eq!(topo, cellular_layout(&CellularLayout::default()).unwrap());
}

#[test]
fn client_has_single_neighbor_and_two_hops() {
    let topo = Topology::parse(&fixture_text()).unwrap();
    let n = topo.neighbors("client0").unwrap();
    assert_eq!(n.len(), 1);
    assert_eq!(n[0].0, "ap0");
    for id in topo.client_ids() {
        let path = topo.uplink_path(&id).unwrap();
        assert_eq!(path.len(), 2, "{id}");
        assert!(matches!(path[0].attrs, EdgeAttrs::Wireless(_)));
        assert_eq!(path[1].attrs, EdgeAttrs::PointToPoint { rate_bps: 5e8, delay_s: 0.02 });
    }
}

#[test]
fn canonical_document_round_trips() {
    let topo = Topology::parse(&fixture_text()).unwrap();
    assert_eq!(Topology::parse(&topo.to_document()).unwrap(), topo);
}

/// Which error class a mutation must produce.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Expect {
    Malformed { on_edge: bool },
    MissingServer,
    MultipleServers,
    Unreachable,
}

const AGENTS: [&str; 11] =
    ["server", "ap0", "ap1", "client0", "client1", "client2", "client3", "client4", "client5", "client6", "client7"];

fn client_ap(client: &str) -> &'static str {
    let i: usize = client.trim_start_matches("client").parse().unwrap();
    if i < 4 {
        "ap0"
    } else {
        "ap1"
    }
}

/// Apply mutation `kind` to `agent`, returning the expected error class
/// and the agent it must name, when the mutation applies to that agent.
fn mutate(doc: &mut Value, kind: usize, agent: &str) -> Option<(Expect, Option<String>)> {
    let is_client = agent.starts_with("client");
    let malformed = |on_edge| Some((Expect::Malformed { on_edge }, Some(agent.to_string())));
    let entry = &mut doc[agent];
    match kind {
        0 => {
            entry.as_object_mut()?.remove("role");
            malformed(false)
        }
        1 => {
            entry["role"] = json!("router");
            malformed(false)
        }
        2 => {
            entry["compute_power_w"] = json!(-1.0);
            malformed(false)
        }
        3 => {
            entry["battery_j"] = json!("full");
            malformed(false)
        }
        4 => {
            entry["adj"]["nowhere"] = json!({ "channel": {} });
            malformed(true)
        }
        5 if is_client => {
            entry["adj"][client_ap(agent)] = json!({ "channel": {}, "p2p_rate_bps": 1e6 });
            malformed(true)
        }
        6 if is_client => {
            entry["adj"][client_ap(agent)] = json!({ "channel": { "per": 1.5 } });
            malformed(true)
        }
        7 if agent != "server" => {
            entry["role"] = json!("server");
            Some((Expect::MultipleServers, None))
        }
        8 if agent == "server" => {
            entry["role"] = json!("ap");
            entry["cell_id"] = json!("cell9");
            Some((Expect::MissingServer, None))
        }
        9 if is_client => {
            entry["adj"] = json!({});
            let ap = client_ap(agent);
            doc[ap]["adj"].as_object_mut()?.remove(agent);
            Some((Expect::Unreachable, Some(agent.to_string())))
        }
        _ => None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn each_mutation_maps_to_its_error(kind in 0usize..10, idx in 0usize..11) {
        let agent = AGENTS[idx];
        let mut doc: Value = serde_json::from_str(&fixture_text()).unwrap();
        let Some((expect, named)) = mutate(&mut doc, kind, agent) else {
            return Ok(());
        };
        let err = Topology::parse(&doc.to_string()).unwrap_err();
        match (expect, &err) {
            (Expect::Malformed { on_edge }, TopologyError::MalformedAttribute { agent: a, edge, .. }) => {
                prop_assert_eq!(Some(a.clone()), named);
                prop_assert_eq!(edge.is_some(), on_edge);
            }
            (Expect::MissingServer, TopologyError::MissingServer) => {}
            (Expect::MultipleServers, TopologyError::MultipleServers(ids)) => {
                prop_assert!(ids.iter().any(|i| i == agent));
            }
            (Expect::Unreachable, TopologyError::UnreachableClient(id)) => {
                prop_assert_eq!(Some(id.clone()), named);
            }
            _ => prop_assert!(false, "mutation {} on {}: expected {:?}, got {:?}", kind, agent, expect, err),
        }
    }
}

#[test]
fn invalid_json_is_a_parse_error() {
    let text = fixture_text();
    assert!(matches!(Topology::parse(&text[..text.len() / 2]), Err(TopologyError::Parse(_))));
}
