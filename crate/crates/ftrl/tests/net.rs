use std::io::Cursor;
use std::time::{Duration, Instant};

use ftrl::net::{read_frame, resolve_address, write_frame, ServerHandle, TcpLink, SERVER_ADDR_ENV};
use ftrl_core::ddpg::{AgentModel, DdpgHyperparams, ModelBundle};
use ftrl_core::federation::FederationLink;
use ftrl_core::wire::{encode_envelope, MessageKind, ModelEnvelope};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn networks(seed: u64) -> ModelBundle {
    let hyper = DdpgHyperparams {
        hidden_layers: vec![8],
        ..DdpgHyperparams::default()
    };
    AgentModel::new(60, hyper, &mut ChaCha8Rng::seed_from_u64(seed))
        .unwrap()
        .networks()
        .clone()
}

fn wait_for_round(server: &ServerHandle, round: u32) {
    let start = Instant::now();
    while server.round() < round {
        assert!(
            start.elapsed() < Duration::from_secs(10),
            "no aggregation within 10 s"
        );
        std::thread::sleep(Duration::from_millis(5));
    }
}

#[test]
fn loopback_push_pull_and_aggregate() {
    let server = ServerHandle::start("127.0.0.1:0", Duration::from_millis(150)).unwrap();
    let mut a = TcpLink::new(server.addr().to_string());
    let mut b = TcpLink::new(server.addr().to_string());
    let (na, nb) = (networks(1), networks(2));

    // Nothing aggregated yet: the pull reports no snapshot.
    assert!(a.exchange(1, &na).unwrap().is_none() || server.round() > 0);
    b.exchange(2, &nb).unwrap();
    wait_for_round(&server, 1);

    let snap = a
        .exchange(1, &na)
        .unwrap()
        .expect("a snapshot after aggregation");
    assert!(snap.round >= 1);
    let history = server.shutdown();
    let round = &history[snap.round as usize - 1];
    assert_eq!(round.round, snap.round);
    let members: Vec<_> = round
        .participants
        .iter()
        .map(|&id| (id, if id == 1 { &na } else { &nb }))
        .collect();
    assert!(
        members.len() == 2 || snap.round > 1,
        "the first round may miss a late push only"
    );
    let expected = ftrl_core::federation::fedavg_bundles(&members).unwrap();
    assert_eq!(snap.networks, expected);
}

#[test]
fn empty_server_pull_is_none() {
    let server = ServerHandle::start("127.0.0.1:0", Duration::from_secs(3600)).unwrap();
    let mut link = TcpLink::new(server.addr().to_string());
    assert!(link.exchange(4, &networks(4)).unwrap().is_none());
    assert_eq!(server.round(), 0);
    assert!(server.shutdown().is_empty());
}

#[test]
fn mismatched_push_is_rejected() {
    let server = ServerHandle::start("127.0.0.1:0", Duration::from_secs(3600)).unwrap();
    let mut link = TcpLink::new(server.addr().to_string());
    link.exchange(1, &networks(1)).unwrap();
    let other = {
        let hyper = DdpgHyperparams {
            hidden_layers: vec![5, 5],
            ..DdpgHyperparams::default()
        };
        AgentModel::new(60, hyper, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap()
            .networks()
            .clone()
    };
    let e = link.exchange(2, &other).unwrap_err();
    assert!(
        matches!(e, ftrl_core::Error::Aggregation { agent: 2, .. }),
        "{e}"
    );
    server.shutdown();
}

#[test]
fn no_server_means_link_unavailable() {
    let addr = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap()
    };
    let mut link = TcpLink::new(addr.to_string());
    let e = link.exchange(1, &networks(1)).unwrap_err();
    assert!(matches!(e, ftrl_core::Error::LinkUnavailable(_)), "{e}");
}

#[test]
fn environment_overrides_the_address() {
    std::env::remove_var(SERVER_ADDR_ENV);
    assert_eq!(resolve_address("127.0.0.1:7878"), "127.0.0.1:7878");
    std::env::set_var(SERVER_ADDR_ENV, "10.1.2.3:9000");
    assert_eq!(resolve_address("127.0.0.1:7878"), "10.1.2.3:9000");
    std::env::set_var(SERVER_ADDR_ENV, "");
    assert_eq!(resolve_address("127.0.0.1:7878"), "127.0.0.1:7878");
    std::env::remove_var(SERVER_ADDR_ENV);
}

#[test]
fn frames_round_trip_through_a_stream() {
    let env = ModelEnvelope::new(
        MessageKind::Snapshot,
        3,
        17,
        ftrl_core::wire::payload_from_bundle(&networks(3)),
    );
    let mut buf = Vec::new();
    write_frame(&mut buf, &env).unwrap();
    write_frame(&mut buf, &env).unwrap();
    let mut rd = Cursor::new(buf);
    assert_eq!(read_frame(&mut rd).unwrap(), Some(env.clone()));
    assert_eq!(read_frame(&mut rd).unwrap(), Some(env));
    assert_eq!(read_frame(&mut rd).unwrap(), None);
}

#[test]
fn truncated_frames_are_errors() {
    let bytes = encode_envelope(&ModelEnvelope::new(MessageKind::Ack, 1, 2, vec![]));
    assert!(read_frame(&mut Cursor::new(&bytes[..10])).is_err());
    let full = encode_envelope(&ModelEnvelope::new(
        MessageKind::PushModel,
        1,
        0,
        ftrl_core::wire::payload_from_bundle(&networks(1)),
    ));
    assert!(read_frame(&mut Cursor::new(&full[..full.len() - 3])).is_err());
}
