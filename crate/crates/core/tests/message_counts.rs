mod common;

use common::{activate, cost_of, topology, user_join};
use smsn::crypto::NodeId;
use smsn::protocol::Intent;
use smsn::simnet::{self, SimConfig};

#[test]
fn sensor_activation_takes_six() {
    assert_eq!(cost_of(&[], activate().1), 6);
}

#[test]
fn same_group_reauth_takes_three() {
    assert_eq!(cost_of(&[activate()], Intent::Switch { node: NodeId::sensor(1), sink: NodeId::sink(2) }), 3);
}

#[test]
fn cross_group_reauth_takes_six() {
    assert_eq!(cost_of(&[activate()], Intent::Switch { node: NodeId::sensor(1), sink: NodeId::sink(3) }), 6);
}

#[test]
fn user_activation_takes_three() {
    assert_eq!(cost_of(&[], user_join().1), 3);
}

#[test]
fn user_sink_access_takes_three() {
    assert_eq!(cost_of(&[user_join()], Intent::Switch { node: NodeId::user(1), sink: NodeId::sink(2) }), 3);
}

#[test]
fn user_sensor_access_takes_four() {
    assert_eq!(cost_of(&[activate(), user_join()], Intent::AccessSensor { user: NodeId::user(1), sensor: NodeId::sensor(1) }), 4);
}

#[test]
fn every_exchange_ends_in_a_session_on_both_sides() {
    let cfg = SimConfig::new(3, topology())
        .schedule(2, activate().1)
        .schedule(2, user_join().1)
        .schedule(30, Intent::Switch { node: NodeId::sensor(1), sink: NodeId::sink(2) })
        .schedule(50, Intent::Switch { node: NodeId::sensor(1), sink: NodeId::sink(3) })
        .schedule(70, Intent::AccessSensor { user: NodeId::user(1), sensor: NodeId::sensor(1) });
    let out = simnet::run(&cfg).unwrap();
    let n1 = out.initiator(NodeId::sensor(1)).unwrap();
    for s in 1..=3 {
        let sink = NodeId::sink(s);
        let here = &n1.sessions[&sink].key;
        assert_eq!(&out.sink(sink).unwrap().sessions[&NodeId::sensor(1)].key, here);
    }
    let u1 = out.initiator(NodeId::user(1)).unwrap();
    assert_eq!(u1.sessions[&NodeId::sensor(1)].private_key, n1.sessions[&NodeId::user(1)].private_key);
    assert!(u1.sessions[&NodeId::sensor(1)].private_key.is_some());
}
