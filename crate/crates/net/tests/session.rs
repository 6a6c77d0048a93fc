use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::Duration;

use wvlab_core::pointer::GaussianPointer;
use wvlab_core::protocol::{sample_shots, Scenario, Selection, EVENT_SEQUENCE};
use wvlab_core::qmath::{pauli_z, Observable, PureState};
use wvlab_core::resources::ResourceKind;
use wvlab_core::C64;
use wvlab_net::codec::{read_frame, write_frame};
use wvlab_net::session::SessionConfig;
use wvlab_net::{
    read_transcript, run_bob, serve_alice, AbortReason, Body, Direction, Message, NetError, Role,
};

fn scenario(resource: ResourceKind, g: f64) -> Scenario {
    Scenario::new(
        resource,
        Observable::spectral(pauli_z()).unwrap(),
        Selection::Pure(PureState::plus()),
        Selection::Pure(PureState::zero()),
        g,
        GaussianPointer::new(1.0).unwrap(),
    )
    .unwrap()
}

fn listener() -> (TcpListener, String) {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap().to_string();
    (l, addr)
}

fn pair(
    alice: SessionConfig,
    bob: SessionConfig,
) -> (
    Result<wvlab_net::SessionOutcome, NetError>,
    Result<wvlab_net::SessionOutcome, NetError>,
) {
    let (l, addr) = listener();
    let a = thread::spawn(move || serve_alice(&l, &alice));
    let b = run_bob(&addr, &bob);
    (a.join().unwrap(), b)
}

#[test]
fn session_matches_in_process_sampling() {
    let dir = tempfile::tempdir().unwrap();
    for (resource, g) in [
        (ResourceKind::Singlet, 0.2),
        (ResourceKind::NonMax(C64::new(0.5, 0.2)), 0.3),
        (ResourceKind::Werner(0.7), 0.1),
    ] {
        let s = scenario(resource, g);
        let mut ca = SessionConfig::new(s.clone(), "h", 10_000, 42);
        ca.transcript = Some(dir.path().join("alice.jsonl"));
        let mut cb = ca.clone();
        cb.transcript = Some(dir.path().join("bob.jsonl"));
        let (a, b) = pair(ca, cb);
        let (a, b) = (a.unwrap(), b.unwrap());
        let local = sample_shots(&s, 10_000, 42).unwrap();
        assert_eq!(a.result, local);
        assert_eq!(b.result, local);
        assert_eq!(a.session_id, b.session_id);
        assert_eq!(a.sent, b.received);
        assert_eq!(b.sent, a.received);
        assert_eq!(
            local.transcript.iter().map(|e| e.stage).collect::<Vec<_>>(),
            EVENT_SEQUENCE
        );

        let records = read_transcript(&dir.path().join("alice.jsonl")).unwrap();
        assert_eq!(records.len() as u64, a.sent + a.received);
        assert!(records.windows(2).all(|w| w[0].ts_ms <= w[1].ts_ms));
        let seqs: Vec<u64> = records
            .iter()
            .filter(|r| r.dir == Direction::Sent)
            .map(|r| r.message.as_ref().unwrap().seq)
            .collect();
        assert!(seqs.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn message_order_within_accepted_shots() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(ResourceKind::Singlet, 0.2);
    let mut ca = SessionConfig::new(s, "h", 200, 3);
    ca.transcript = Some(dir.path().join("alice.jsonl"));
    let (a, _) = pair(
        ca.clone(),
        SessionConfig {
            transcript: None,
            ..ca.clone()
        },
    );
    a.unwrap();
    let kinds: Vec<&'static str> = read_transcript(&dir.path().join("alice.jsonl"))
        .unwrap()
        .iter()
        .map(|r| r.message.as_ref().unwrap().body.kind())
        .collect();
    assert_eq!(
        &kinds[..5],
        ["HELLO", "HELLO", "SCENARIO", "COUPLE_DONE", "COUPLE_DONE"]
    );
    assert_eq!(*kinds.last().unwrap(), "POINTER_REPORT");
    for (i, k) in kinds.iter().enumerate() {
        if *k == "POSTSELECT_REQUEST" {
            assert_eq!(kinds[i - 1], "BELL_RESULT");
            assert_eq!(kinds[i + 1], "POSTSELECT_RESULT");
            assert_eq!(kinds[i + 2], "POSTSELECT_RESULT");
        }
    }
}

#[test]
fn scenario_hash_mismatch_aborts() {
    let s = scenario(ResourceKind::Singlet, 0.2);
    let ca = SessionConfig::new(s.clone(), "aaaa", 100, 1);
    let cb = SessionConfig::new(s, "bbbb", 100, 1);
    let (a, b) = pair(ca, cb);
    assert_eq!(
        a.unwrap_err().abort_reason(),
        Some(AbortReason::ScenarioMismatch)
    );
    assert_eq!(
        b.unwrap_err().abort_reason(),
        Some(AbortReason::ScenarioMismatch)
    );
}

#[test]
fn seed_mismatch_aborts() {
    let s = scenario(ResourceKind::Singlet, 0.2);
    let ca = SessionConfig::new(s.clone(), "h", 100, 1);
    let cb = SessionConfig::new(s, "h", 100, 2);
    let (a, b) = pair(ca, cb);
    assert_eq!(
        b.unwrap_err().abort_reason(),
        Some(AbortReason::ScenarioMismatch)
    );
    assert_eq!(
        a.unwrap_err().abort_reason(),
        Some(AbortReason::ScenarioMismatch)
    );
}

fn hello(stream: &mut TcpStream, seq: u64) {
    write_frame(
        stream,
        &Message {
            session_id: 77,
            seq,
            body: Body::Hello {
                role: Role::Bob,
                scenario_hash: "h".into(),
            },
        },
    )
    .unwrap();
}

#[test]
fn postselect_result_before_bell_result_aborts() {
    let dir = tempfile::tempdir().unwrap();
    let (l, addr) = listener();
    let mut cfg = SessionConfig::new(scenario(ResourceKind::Singlet, 0.2), "h", 100, 1);
    cfg.transcript = Some(dir.path().join("alice.jsonl"));
    let a = thread::spawn(move || serve_alice(&l, &cfg));

    let mut bob = TcpStream::connect(&addr).unwrap();
    hello(&mut bob, 1);
    for _ in 0..3 {
        read_frame(&mut bob).unwrap();
    }
    write_frame(
        &mut bob,
        &Message {
            session_id: 77,
            seq: 2,
            body: Body::PostselectResult {
                shot: 0,
                success: true,
            },
        },
    )
    .unwrap();
    let abort = read_frame(&mut bob).unwrap();
    assert!(matches!(
        abort.body,
        Body::Abort {
            reason: AbortReason::Order,
            ..
        }
    ));
    let err = a.join().unwrap().unwrap_err();
    assert_eq!(err.abort_reason(), Some(AbortReason::Order));
    let records = read_transcript(&dir.path().join("alice.jsonl")).unwrap();
    assert!(records
        .last()
        .unwrap()
        .note
        .as_ref()
        .unwrap()
        .contains("order"));
}

#[test]
fn repeated_sequence_number_aborts() {
    let (l, addr) = listener();
    let cfg = SessionConfig::new(scenario(ResourceKind::Singlet, 0.2), "h", 100, 1);
    let a = thread::spawn(move || serve_alice(&l, &cfg));
    let mut bob = TcpStream::connect(&addr).unwrap();
    hello(&mut bob, 5);
    for _ in 0..3 {
        read_frame(&mut bob).unwrap();
    }
    write_frame(
        &mut bob,
        &Message {
            session_id: 77,
            seq: 5,
            body: Body::CoupleDone { g: 0.2 },
        },
    )
    .unwrap();
    assert_eq!(
        a.join().unwrap().unwrap_err().abort_reason(),
        Some(AbortReason::Order)
    );
}

#[test]
fn silent_peer_times_out_and_flushes_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let (l, addr) = listener();
    let mut cfg = SessionConfig::new(scenario(ResourceKind::Singlet, 0.2), "h", 100, 1);
    cfg.timeout = Duration::from_millis(300);
    cfg.transcript = Some(dir.path().join("alice.jsonl"));
    let a = thread::spawn(move || serve_alice(&l, &cfg));
    let mut bob = TcpStream::connect(&addr).unwrap();
    hello(&mut bob, 1);
    // never answer COUPLE_DONE
    let err = a.join().unwrap().unwrap_err();
    assert_eq!(err.abort_reason(), Some(AbortReason::Timeout));
    let records = read_transcript(&dir.path().join("alice.jsonl")).unwrap();
    assert_eq!(records[0].message.as_ref().unwrap().body.kind(), "HELLO");
    assert!(records
        .iter()
        .any(|r| r.note.as_deref().is_some_and(|n| n.contains("timeout"))));
    drop(bob);
}

#[test]
fn dropped_link_mid_session() {
    let (l, addr) = listener();
    let cfg = SessionConfig::new(scenario(ResourceKind::Singlet, 0.2), "h", 100, 1);
    let a = thread::spawn(move || serve_alice(&l, &cfg));
    let mut bob = TcpStream::connect(&addr).unwrap();
    hello(&mut bob, 1);
    read_frame(&mut bob).unwrap();
    bob.flush().unwrap();
    drop(bob);
    let err = a.join().unwrap().unwrap_err();
    assert!(matches!(
        err.abort_reason(),
        Some(AbortReason::Disconnected | AbortReason::Timeout)
    ));
}

#[test]
fn missing_counterpart_times_out() {
    let (l, addr) = listener();
    drop(l);
    let mut cfg = SessionConfig::new(scenario(ResourceKind::Singlet, 0.2), "h", 10, 1);
    cfg.timeout = Duration::from_millis(300);
    assert_eq!(
        run_bob(&addr, &cfg).unwrap_err().abort_reason(),
        Some(AbortReason::Timeout)
    );

    let (l, _) = listener();
    assert_eq!(
        serve_alice(&l, &cfg).unwrap_err().abort_reason(),
        Some(AbortReason::Timeout)
    );
}

#[test]
fn concurrent_sessions_are_isolated() {
    let s = scenario(ResourceKind::Singlet, 0.2);
    let handles: Vec<_> = (0..3u64)
        .map(|k| {
            let s = s.clone();
            thread::spawn(move || {
                let mut cfg = SessionConfig::new(s, "h", 2000, k);
                cfg.session_id = Some(1000 + k);
                let (a, b) = pair(cfg.clone(), cfg);
                (a.unwrap(), b.unwrap())
            })
        })
        .collect();
    for (k, h) in handles.into_iter().enumerate() {
        let (a, b) = h.join().unwrap();
        assert_eq!(a.session_id, 1000 + k as u64);
        assert_eq!(a.result, sample_shots(&s, 2000, k as u64).unwrap());
        assert_eq!(b.result, a.result);
    }
}
