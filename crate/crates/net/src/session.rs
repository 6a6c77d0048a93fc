//! Alice listens, Bob connects. Per shot, Alice announces her Bell outcome;
//! on the accepted outcome Bob sends a postselection request, Alice's
//! state-holder answers with the projection result and Bob reports that
//! result back. The session ends with Alice's pointer report.

use std::io::{self, BufReader, BufWriter, ErrorKind, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use thiserror::Error;
use wvlab_core::protocol::{
    sampled_result, Accumulator, ConditionalModel, ProtocolError, ProtocolResult, SampleStats,
    Scenario, ShotOutcome, ShotSampler,
};
use wvlab_core::qmath::CMatrix;
use wvlab_core::resources::BellOutcome;

use crate::codec::{self, FrameError};
use crate::message::{AbortReason, Body, Message, Role, WireMatrix};
use crate::transcript::Transcript;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum NetError {
    #[error("session aborted ({reason}{}): {detail}", if *.by_peer { ", by peer" } else { "" })]
    Aborted {
        reason: AbortReason,
        detail: String,
        by_peer: bool,
    },

    #[error("network error: {0}")]
    Io(#[from] io::Error),

    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

impl NetError {
    pub fn abort_reason(&self) -> Option<AbortReason> {
        match self {
            NetError::Aborted { reason, .. } => Some(*reason),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, NetError>;

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub scenario: Scenario,
    pub scenario_hash: String,
    pub shots: u64,
    pub seed: u64,
    pub timeout: Duration,
    pub transcript: Option<PathBuf>,
    /// Bob proposes the session id; Alice adopts it.
    pub session_id: Option<u64>,
}

impl SessionConfig {
    pub fn new(
        scenario: Scenario,
        scenario_hash: impl Into<String>,
        shots: u64,
        seed: u64,
    ) -> Self {
        Self {
            scenario,
            scenario_hash: scenario_hash.into(),
            shots,
            seed,
            timeout: DEFAULT_TIMEOUT,
            transcript: None,
            session_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub role: Role,
    pub session_id: u64,
    pub result: ProtocolResult,
    pub sent: u64,
    pub received: u64,
}

pub fn matrix_to_wire(m: &CMatrix) -> WireMatrix {
    let mut out = [[0.0; 2]; 4];
    for r in 0..2 {
        for c in 0..2 {
            let z = m[(r, c)];
            out[2 * r + c] = [z.re, z.im];
        }
    }
    out
}

struct Channel {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    session_id: Option<u64>,
    next_seq: u64,
    last_peer_seq: Option<u64>,
    transcript: Transcript,
    sent: u64,
    received: u64,
}

impl Channel {
    fn new(stream: TcpStream, timeout: Duration, transcript: Transcript) -> io::Result<Self> {
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
            session_id: None,
            next_seq: 1,
            last_peer_seq: None,
            transcript,
            sent: 0,
            received: 0,
        })
    }

    /// Queues a message; it goes out on the next receive or on `finish`.
    fn send(&mut self, body: Body) -> Result<()> {
        let msg = Message {
            session_id: self.session_id.expect("session id set before sending"),
            seq: self.next_seq,
            body,
        };
        self.next_seq += 1;
        let frame = codec::encode(&msg);
        if let Err(e) = self.writer.write_all(&frame) {
            return Err(self.fail(io_reason(&e), format!("write failed: {e}")));
        }
        self.transcript.sent(&msg)?;
        self.sent += 1;
        Ok(())
    }

    fn recv(&mut self) -> Result<Body> {
        if let Err(e) = self.writer.flush() {
            return Err(self.fail(io_reason(&e), format!("write failed: {e}")));
        }
        let msg = match codec::read_frame(&mut self.reader) {
            Ok(m) => m,
            Err(FrameError::Io(e)) => {
                let reason = io_reason(&e);
                return Err(self.abort(reason, format!("while waiting for the peer: {e}")));
            }
            Err(FrameError::Decode(e)) => {
                return Err(self.abort(AbortReason::Malformed, e.to_string()));
            }
        };
        self.transcript.received(&msg)?;
        self.received += 1;
        match self.session_id {
            None => self.session_id = Some(msg.session_id),
            Some(id) if id != msg.session_id => {
                return Err(self.abort(
                    AbortReason::Order,
                    format!(
                        "message for session {:#x} in session {id:#x}",
                        msg.session_id
                    ),
                ))
            }
            Some(_) => {}
        }
        if let Some(last) = self.last_peer_seq {
            if msg.seq <= last {
                return Err(self.abort(
                    AbortReason::Order,
                    format!("sequence number {} after {last}", msg.seq),
                ));
            }
        }
        self.last_peer_seq = Some(msg.seq);
        if let Body::Abort { reason, detail } = msg.body {
            let _ = self.transcript.flush();
            return Err(NetError::Aborted {
                reason,
                detail,
                by_peer: true,
            });
        }
        Ok(msg.body)
    }

    fn expect(&mut self, wanted: &str) -> Result<Body> {
        let body = self.recv()?;
        if body.kind() != wanted {
            let got = body.kind();
            return Err(self.abort(AbortReason::Order, format!("expected {wanted}, got {got}")));
        }
        Ok(body)
    }

    /// Records a local failure without telling the peer (the link is gone).
    fn fail(&mut self, reason: AbortReason, detail: String) -> NetError {
        let _ = self.transcript.note(&format!("abort ({reason}): {detail}"));
        let _ = self.transcript.flush();
        NetError::Aborted {
            reason,
            detail,
            by_peer: false,
        }
    }

    /// Tells the peer why the session ends, when the link still allows it.
    fn abort(&mut self, reason: AbortReason, detail: String) -> NetError {
        if self.session_id.is_some() && !matches!(reason, AbortReason::Disconnected) {
            let body = Body::Abort {
                reason,
                detail: detail.clone(),
            };
            if self.send(body).is_ok() {
                let _ = self.writer.flush();
            }
        }
        self.fail(reason, detail)
    }

    fn finish(mut self) -> Result<(u64, u64, u64)> {
        self.writer.flush()?;
        self.transcript.flush()?;
        Ok((self.session_id.unwrap_or(0), self.sent, self.received))
    }
}

fn io_reason(e: &io::Error) -> AbortReason {
    match e.kind() {
        ErrorKind::WouldBlock | ErrorKind::TimedOut => AbortReason::Timeout,
        _ => AbortReason::Disconnected,
    }
}

fn fresh_session_id() -> u64 {
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0);
    nanos ^ ((std::process::id() as u64) << 32)
}

fn timeout_error(transcript: &mut Transcript, detail: String) -> NetError {
    let _ = transcript.note(&format!("abort (timeout): {detail}"));
    let _ = transcript.flush();
    NetError::Aborted {
        reason: AbortReason::Timeout,
        detail,
        by_peer: false,
    }
}

fn accept_within(
    listener: &TcpListener,
    timeout: Duration,
    transcript: &mut Transcript,
) -> Result<TcpStream> {
    listener.set_nonblocking(true)?;
    let deadline = Instant::now() + timeout;
    loop {
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false)?;
                return Ok(stream);
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(timeout_error(
                        transcript,
                        format!("no counterpart connected within {timeout:?}"),
                    ));
                }
                thread::sleep(Duration::from_millis(10));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

fn connect_within(
    endpoint: &str,
    timeout: Duration,
    transcript: &mut Transcript,
) -> Result<TcpStream> {
    let deadline = Instant::now() + timeout;
    loop {
        let mut last = None;
        for addr in endpoint.to_socket_addrs()? {
            match TcpStream::connect_timeout(&addr, timeout) {
                Ok(s) => return Ok(s),
                Err(e) => last = Some(e),
            }
        }
        if Instant::now() >= deadline {
            let why = last
                .map(|e| e.to_string())
                .unwrap_or_else(|| "no address".into());
            return Err(timeout_error(
                transcript,
                format!("could not reach {endpoint} within {timeout:?}: {why}"),
            ));
        }
        thread::sleep(Duration::from_millis(50));
    }
}

/// Alice's side on an already-bound listener.
pub fn serve_alice(listener: &TcpListener, cfg: &SessionConfig) -> Result<SessionOutcome> {
    let mut transcript = Transcript::create(cfg.transcript.as_deref(), Role::Alice)?;
    let stream = accept_within(listener, cfg.timeout, &mut transcript)?;
    let mut ch = Channel::new(stream, cfg.timeout, transcript)?;
    let s = &cfg.scenario;

    match ch.expect("HELLO")? {
        Body::Hello {
            role: Role::Bob,
            scenario_hash,
        } => {
            if scenario_hash != cfg.scenario_hash {
                return Err(ch.abort(
                    AbortReason::ScenarioMismatch,
                    format!(
                        "Bob's scenario hash {scenario_hash} differs from {}",
                        cfg.scenario_hash
                    ),
                ));
            }
        }
        _ => return Err(ch.abort(AbortReason::Order, "HELLO must come from Bob".into())),
    }
    ch.send(Body::Hello {
        role: Role::Alice,
        scenario_hash: cfg.scenario_hash.clone(),
    })?;
    ch.send(Body::Scenario {
        scenario_hash: cfg.scenario_hash.clone(),
        shots: cfg.shots,
        seed: cfg.seed,
    })?;

    let model = ConditionalModel::build(s, s.g)?;
    let effect = matrix_to_wire(s.bob_effect()?.mat());
    let sampler = ShotSampler::new(model, cfg.seed);
    ch.send(Body::CoupleDone { g: s.g })?;
    ch.expect("COUPLE_DONE")?;

    let mut stats = SampleStats::default();
    for shot in 0..cfg.shots {
        let outcome = sampler.bell_outcome(shot);
        ch.send(Body::BellResult {
            shot,
            outcome: outcome.label(),
        })?;
        let mut record = ShotOutcome {
            outcome,
            success: None,
            sample: None,
        };
        if outcome == s.accepted_outcome {
            match ch.expect("POSTSELECT_REQUEST")? {
                Body::PostselectRequest { shot: k, projector } if k == shot => {
                    if projector != effect {
                        return Err(ch.abort(
                            AbortReason::ScenarioMismatch,
                            format!(
                                "shot {shot}: requested projector differs from the shared scenario"
                            ),
                        ));
                    }
                }
                other => {
                    return Err(ch.abort(
                        AbortReason::Order,
                        format!("shot {shot}: unexpected {other:?}"),
                    ));
                }
            }
            let success = sampler.bob_success(shot);
            ch.send(Body::PostselectResult { shot, success })?;
            match ch.expect("POSTSELECT_RESULT")? {
                Body::PostselectResult {
                    shot: k,
                    success: echoed,
                } if k == shot && echoed == success => {}
                other => {
                    return Err(ch.abort(
                        AbortReason::Order,
                        format!("shot {shot}: bad report {other:?}"),
                    ));
                }
            }
            record.success = Some(success);
            if success {
                record.sample = Some(sampler.pointer_sample(shot)?);
            }
        }
        stats.record(&record);
    }

    ch.send(Body::PointerReport {
        shots: cfg.shots,
        accepted: stats.accepted,
        mean_q: stats.q.mean(),
        mean_p: stats.p.mean(),
        q_count: stats.q.count,
        q_sum: stats.q.sum,
        q_sum_sq: stats.q.sum_sq,
        p_count: stats.p.count,
        p_sum: stats.p.sum,
        p_sum_sq: stats.p.sum_sq,
    })?;
    let (session_id, sent, received) = ch.finish()?;
    let result = sampled_result(s, &sampler.model, stats, cfg.shots)?;
    Ok(SessionOutcome {
        role: Role::Alice,
        session_id,
        result,
        sent,
        received,
    })
}

/// Bob's side: connects to Alice, retrying until the timeout.
pub fn run_bob(endpoint: &str, cfg: &SessionConfig) -> Result<SessionOutcome> {
    let mut transcript = Transcript::create(cfg.transcript.as_deref(), Role::Bob)?;
    let stream = connect_within(endpoint, cfg.timeout, &mut transcript)?;
    let mut ch = Channel::new(stream, cfg.timeout, transcript)?;
    ch.session_id = Some(cfg.session_id.unwrap_or_else(fresh_session_id));
    let s = &cfg.scenario;

    ch.send(Body::Hello {
        role: Role::Bob,
        scenario_hash: cfg.scenario_hash.clone(),
    })?;
    match ch.expect("HELLO")? {
        Body::Hello {
            role: Role::Alice,
            scenario_hash,
        } if scenario_hash == cfg.scenario_hash => {}
        Body::Hello {
            role: Role::Alice,
            scenario_hash,
        } => {
            return Err(ch.abort(
                AbortReason::ScenarioMismatch,
                format!(
                    "Alice's scenario hash {scenario_hash} differs from {}",
                    cfg.scenario_hash
                ),
            ))
        }
        _ => return Err(ch.abort(AbortReason::Order, "HELLO must come from Alice".into())),
    }
    match ch.expect("SCENARIO")? {
        Body::Scenario {
            scenario_hash,
            shots,
            seed,
        } if scenario_hash == cfg.scenario_hash && shots == cfg.shots && seed == cfg.seed => {}
        other => {
            return Err(ch.abort(
                AbortReason::ScenarioMismatch,
                format!("run parameters differ: {other:?}"),
            ))
        }
    }
    match ch.expect("COUPLE_DONE")? {
        Body::CoupleDone { g } if g == s.g => {}
        other => {
            return Err(ch.abort(
                AbortReason::ScenarioMismatch,
                format!("coupling differs: {other:?}"),
            ))
        }
    }
    ch.send(Body::CoupleDone { g: s.g })?;

    let projector = matrix_to_wire(s.bob_effect()?.mat());
    let mut stats = SampleStats::default();
    for shot in 0..cfg.shots {
        let outcome = match ch.expect("BELL_RESULT")? {
            Body::BellResult { shot: k, outcome } if k == shot => {
                BellOutcome::new(outcome).expect("validated by the codec")
            }
            other => {
                return Err(ch.abort(
                    AbortReason::Order,
                    format!("shot {shot}: unexpected {other:?}"),
                ))
            }
        };
        let mut record = ShotOutcome {
            outcome,
            success: None,
            sample: None,
        };
        if outcome == s.accepted_outcome {
            ch.send(Body::PostselectRequest { shot, projector })?;
            let success = match ch.expect("POSTSELECT_RESULT")? {
                Body::PostselectResult { shot: k, success } if k == shot => success,
                other => {
                    return Err(ch.abort(
                        AbortReason::Order,
                        format!("shot {shot}: unexpected {other:?}"),
                    ))
                }
            };
            ch.send(Body::PostselectResult { shot, success })?;
            record.success = Some(success);
        }
        stats.record(&record);
    }

    match ch.expect("POINTER_REPORT")? {
        Body::PointerReport {
            shots,
            accepted,
            q_count,
            q_sum,
            q_sum_sq,
            p_count,
            p_sum,
            p_sum_sq,
            ..
        } => {
            if shots != cfg.shots || accepted != stats.accepted {
                return Err(ch.abort(
                    AbortReason::ScenarioMismatch,
                    format!(
                        "report counts {accepted}/{shots}, Bob saw {}/{}",
                        stats.accepted, cfg.shots
                    ),
                ));
            }
            stats.q = Accumulator {
                count: q_count,
                sum: q_sum,
                sum_sq: q_sum_sq,
            };
            stats.p = Accumulator {
                count: p_count,
                sum: p_sum,
                sum_sq: p_sum_sq,
            };
        }
        _ => unreachable!("expect checked the kind"),
    }
    let (session_id, sent, received) = ch.finish()?;
    let model = ConditionalModel::build(s, s.g)?;
    let result = sampled_result(s, &model, stats, cfg.shots)?;
    Ok(SessionOutcome {
        role: Role::Bob,
        session_id,
        result,
        sent,
        received,
    })
}

/// Alice binds `endpoint` and waits for Bob; Bob connects to it.
pub fn run_session(role: Role, endpoint: &str, cfg: &SessionConfig) -> Result<SessionOutcome> {
    match role {
        Role::Alice => {
            let listener = TcpListener::bind(endpoint)?;
            serve_alice(&listener, cfg)
        }
        Role::Bob => run_bob(endpoint, cfg),
    }
}
