use std::path::PathBuf;

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use rand::{Rng, SeedableRng};
use wvlab_net::{decode, encode, AbortReason, Body, DecodeError, Message, Role};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6..1e6f64,
        any::<f64>().prop_filter("finite", |x| x.is_finite()),
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
    ]
}

fn role() -> impl Strategy<Value = Role> {
    prop_oneof![Just(Role::Alice), Just(Role::Bob)]
}

fn reason() -> impl Strategy<Value = AbortReason> {
    prop_oneof![
        Just(AbortReason::Order),
        Just(AbortReason::Timeout),
        Just(AbortReason::ScenarioMismatch),
        Just(AbortReason::Disconnected),
        Just(AbortReason::Malformed),
    ]
}

fn body() -> impl Strategy<Value = Body> {
    prop_oneof![
        (role(), "[0-9a-f]{0,64}").prop_map(|(role, scenario_hash)| Body::Hello {
            role,
            scenario_hash
        }),
        ("[0-9a-f]{64}", any::<u64>(), any::<u64>()).prop_map(|(scenario_hash, shots, seed)| {
            Body::Scenario {
                scenario_hash,
                shots,
                seed,
            }
        }),
        finite().prop_map(|g| Body::CoupleDone { g }),
        (any::<u64>(), 1u8..=4).prop_map(|(shot, outcome)| Body::BellResult { shot, outcome }),
        (
            any::<u64>(),
            prop::array::uniform4(prop::array::uniform2(finite()))
        )
            .prop_map(|(shot, projector)| Body::PostselectRequest { shot, projector }),
        (any::<u64>(), any::<bool>())
            .prop_map(|(shot, success)| Body::PostselectResult { shot, success }),
        (
            any::<u64>(),
            any::<u64>(),
            prop::option::of(finite()),
            prop::option::of(finite()),
            any::<u64>(),
            prop::array::uniform4(finite()),
            any::<u64>()
        )
            .prop_map(|(shots, accepted, mean_q, mean_p, q_count, s, p_count)| {
                Body::PointerReport {
                    shots,
                    accepted,
                    mean_q,
                    mean_p,
                    q_count,
                    q_sum: s[0],
                    q_sum_sq: s[1],
                    p_count,
                    p_sum: s[2],
                    p_sum_sq: s[3],
                }
            }),
        (reason(), ".{0,40}").prop_map(|(reason, detail)| Body::Abort { reason, detail }),
    ]
}

fn message() -> impl Strategy<Value = Message> {
    (any::<u64>(), any::<u64>(), body()).prop_map(|(session_id, seq, body)| Message {
        session_id,
        seq,
        body,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn round_trip_is_identity(m in message()) {
        let frame = encode(&m);
        let back = decode(&frame).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(encode(&back), frame);
    }
}

fn sample_frames() -> Vec<Vec<u8>> {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    (0..50)
        .map(|_| encode(&message().new_tree(&mut runner).unwrap().current()))
        .collect()
}

#[test]
fn mutated_frames_are_rejected() {
    let frames = sample_frames();
    let mut rng = rand::rngs::StdRng::seed_from_u64(2024);
    for i in 0..1000 {
        let mut f = frames[i % frames.len()].clone();
        let body_len = f.len() - 4;
        let err = match i % 5 {
            0 => {
                let cut = rng.random_range(0..f.len());
                f.truncate(cut);
                decode(&f).unwrap_err()
            }
            1 => {
                let bumped = (body_len as u32 + rng.random_range(1..100u32)).to_be_bytes();
                f[..4].copy_from_slice(&bumped);
                decode(&f).unwrap_err()
            }
            2 => {
                f.push(rng.random());
                decode(&f).unwrap_err()
            }
            3 => {
                let at = rng.random_range(4..f.len());
                f[at] = 0xFF;
                decode(&f).unwrap_err()
            }
            _ => {
                // the opening brace is structural
                f[4] = rng.random_range(b'a'..=b'z');
                decode(&f).unwrap_err()
            }
        };
        if let Some(offset) = err.offset() {
            assert!(offset <= f.len().max(4), "{err:?}");
        }
    }
}

#[test]
fn random_byte_flips_never_panic() {
    let frames = sample_frames();
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    for i in 0..1000 {
        let mut f = frames[i % frames.len()].clone();
        for _ in 0..rng.random_range(1..4) {
            let at = rng.random_range(0..f.len());
            f[at] = rng.random();
        }
        if let Ok(m) = decode(&f) {
            assert_eq!(decode(&encode(&m)).unwrap(), m);
        }
    }
}

#[test]
fn oversized_length_is_rejected_before_reading() {
    let mut f = vec![0x00, 0x10, 0x00, 0x01];
    f.extend_from_slice(b"{}");
    assert!(matches!(decode(&f), Err(DecodeError::Oversized { .. })));
}

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/postselect_request.frame")
}

fn golden_message() -> Message {
    let third = 1.0 / 3.0;
    let off = (2.0f64).sqrt() / 3.0;
    Message {
        session_id: 0x0123_4567_89AB_CDEF,
        seq: 42,
        body: Body::PostselectRequest {
            shot: 1001,
            projector: [[third, 0.0], [0.0, -off], [0.0, off], [1.0 - third, 0.0]],
        },
    }
}

#[test]
fn golden_postselect_request_frame() {
    if std::env::var_os("WVLAB_RECORD_GOLDEN").is_some() {
        std::fs::write(golden_path(), encode(&golden_message())).unwrap();
    }
    let recorded = std::fs::read(golden_path()).unwrap();
    let m = decode(&recorded).unwrap();
    assert_eq!(m, golden_message());
    assert_eq!(encode(&m), recorded);
}
