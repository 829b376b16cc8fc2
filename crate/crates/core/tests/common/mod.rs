//! Fixtures shared by the integration test targets.
#![allow(dead_code)]

use std::path::PathBuf;

use flsim::channel::ChannelParams;
use flsim::learning::{generate_task, ConvexTask, SyntheticSpec};
use flsim::topology::{AgentSpec, EdgeAttrs, Role, Topology};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// Server, one access point on a near-instant backhaul, and `n` clients
/// sharing `channel`. Client ids are `c00`, `c01`, ...
pub fn star(n: usize, channel: &ChannelParams, compute_power_w: f64, compute_time_s: f64) -> Topology {
    let mut server = AgentSpec::new("server", Role::Server);
    server.adj.insert("ap".into(), EdgeAttrs::PointToPoint { rate_bps: 1e12, delay_s: 0.0 });
    let mut ap = AgentSpec::new("ap", Role::Ap);
    ap.cell_id = Some("cell0".into());
    let mut agents = vec![server, ap];
    for i in 0..n {
        let mut c = AgentSpec::new(format!("c{i:02}"), Role::Client);
        c.cell_id = Some("cell0".into());
        c.compute_power_w = compute_power_w;
        c.compute_time_per_epoch_s = compute_time_s;
        c.adj.insert("ap".into(), EdgeAttrs::Wireless(channel.clone()));
        agents.push(c);
    }
    Topology::from_agents(agents).expect("star topology is valid")
}

/// Two-client ridge problem with non-identical client optima.
pub fn two_client_ridge(topology: &Topology) -> ConvexTask {
    let spec =
        SyntheticSpec { dim: 2, samples: 40, lambda: 0.1, label_noise: 0.5, heterogeneity: 1.0, ..Default::default() };
    generate_task(&spec, &topology.client_ids(), 3).expect("fixture task")
}

/// Four-client ridge problem used by the robustness checks.
pub fn four_client_ridge(topology: &Topology) -> ConvexTask {
    let spec = SyntheticSpec { dim: 3, samples: 80, lambda: 0.1, label_noise: 0.2, ..Default::default() };
    generate_task(&spec, &topology.client_ids(), 11).expect("fixture task")
}
