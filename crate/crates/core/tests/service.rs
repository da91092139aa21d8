mod common;

use std::io::{BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use common::*;
use poseguide::calibration::{read_observations, CalibrationResult, SolverConfig};
use poseguide::pose_space::{score_pose_set, ScoringConfig};
use poseguide::service::wire::{recv, write_frame};
use poseguide::service::{
    parse_document, read_event_log, render_document, render_event_log, serve_session, ArtifactKind,
    ArtifactStore, CalibrationFile, ClientBody, ClientMessage, DisconnectPolicy, ErrorCode,
    PoseSetFile, ServerBody, ServerMessage, SessionClient, SessionHost, SessionRecord,
    SessionService,
};
use poseguide::session::{finalize, CaptureMode, Phase, SessionConfig, SessionEvent};
use poseguide::synthetic::{Frame, NoiseModel, OperatorRun, VirtualCamera};

fn fixture(mode: CaptureMode, seed: u64) -> (VirtualCamera, SessionConfig, OperatorRun) {
    let camera = lens1();
    let config = session_config(&camera, sampled_poses(&camera, 8, seed), mode);
    let run = rehearsal(&camera, config.clone(), 0.1, seed);
    assert!(run.state.is_complete(), "rehearsal did not complete");
    (camera, config, run)
}

/// Client messages that replay `frames`, numbered from `seq0`.
fn replay(id: &str, frames: &[Frame], seq0: u64) -> Vec<ClientMessage> {
    let mut seq = seq0;
    let mut out = Vec::new();
    for f in frames {
        let body = ClientBody::CornerUpdate {
            frame_token: f.frame_token,
            corners: f.corners.clone(),
        };
        out.push(ClientMessage::new(id, seq, body));
        seq += 1;
        if f.manual_capture {
            out.push(ClientMessage::new(
                id,
                seq,
                ClientBody::ManualCaptureRequest {},
            ));
            seq += 1;
        }
    }
    out
}

fn error_code(batch: &[ServerMessage]) -> Option<ErrorCode> {
    match batch {
        [m] => match &m.body {
            ServerBody::ServerError { code, .. } => Some(*code),
            _ => None,
        },
        _ => None,
    }
}

#[test]
fn host_replay_equals_direct_transitions() {
    for mode in [CaptureMode::Auto, CaptureMode::Manual] {
        let (_, config, run) = fixture(mode, 4);
        let mut host = SessionHost::new("s", config, SolverConfig::default()).unwrap();
        for msg in replay("s", &run.frames, 0) {
            host.handle(&msg);
        }
        assert_eq!(host.state(), &run.state, "{mode:?}");
        assert_eq!(host.events(), run.events.as_slice(), "{mode:?}");
        let direct = finalize(&run.state, &SolverConfig::default()).unwrap();
        assert_eq!(host.result(), Some(&direct));
    }
}

#[test]
fn reply_batches_follow_the_capture_rule() {
    let (_, config, run) = fixture(CaptureMode::Auto, 6);
    let total = config.pose_set.poses.len();
    let mut host = SessionHost::new("s", config, SolverConfig::default()).unwrap();
    let mut next_seq = 0;
    let mut captures = Vec::new();
    for msg in replay("s", &run.frames, 0) {
        let batch = host.handle(&msg);
        assert!(!batch.is_empty());
        for m in &batch {
            assert_eq!(m.seq, next_seq);
            assert_eq!(m.session_id, "s");
            next_seq += 1;
        }
        assert!(!matches!(
            batch.last().unwrap().body,
            ServerBody::ServerCapture { .. }
        ));
        for (i, m) in batch.iter().enumerate() {
            if let ServerBody::ServerCapture {
                target_index,
                captured,
                ..
            } = m.body
            {
                captures.push(target_index);
                assert_eq!(captured, captures.len());
                match &batch[i + 1].body {
                    ServerBody::ServerTarget {
                        target_index: t, ..
                    } => assert_eq!(*t, target_index + 1),
                    ServerBody::ServerComplete { .. } => assert_eq!(captured, total),
                    other => panic!("unexpected {other:?}"),
                }
            }
        }
    }
    assert_eq!(captures, (0..total).collect::<Vec<_>>());
}

#[test]
fn stale_and_foreign_messages_leave_state_untouched() {
    let (_, config, run) = fixture(CaptureMode::Auto, 8);
    let mut host = SessionHost::new("s", config, SolverConfig::default()).unwrap();
    let msgs = replay("s", &run.frames[..10], 10);
    for m in &msgs[..5] {
        host.handle(m);
    }
    let before = host.state().clone();
    let events = host.events().len();
    for seq in [14, 3, 0] {
        let m = ClientMessage::new("s", seq, msgs[6].body.clone());
        assert_eq!(error_code(&host.handle(&m)), Some(ErrorCode::StaleSequence));
    }
    let foreign = ClientMessage::new("other", 99, msgs[6].body.clone());
    assert_eq!(
        error_code(&host.handle(&foreign)),
        Some(ErrorCode::NoSession)
    );
    let manual = ClientMessage::new("s", 100, ClientBody::ManualCaptureRequest {});
    assert_eq!(
        error_code(&host.handle(&manual)),
        Some(ErrorCode::ModeMismatch)
    );
    assert_eq!(host.state(), &before);
    assert_eq!(host.events().len(), events);
}

#[test]
fn tcp_session_completes_and_result_resolves_in_the_store() {
    let (_, config, run) = fixture(CaptureMode::Auto, 10);
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(ArtifactStore::open(dir.path()).unwrap());
    let host = SessionHost::new("tcp", config.clone(), SolverConfig::default())
        .unwrap()
        .with_store(Arc::clone(&store))
        .unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = thread::spawn(move || serve_session(host, listener, DisconnectPolicy::Abort));

    let mut client = SessionClient::connect(addr, "tcp").unwrap();
    let hello = client.exchange(ClientBody::ClientHello {}).unwrap();
    assert!(matches!(
        hello[0].body,
        ServerBody::ServerTarget {
            target_index: 0,
            ..
        }
    ));
    let mut last = None;
    for f in &run.frames {
        let batch = client
            .exchange(ClientBody::CornerUpdate {
                frame_token: f.frame_token,
                corners: f.corners.clone(),
            })
            .unwrap();
        last = batch.last().cloned();
    }
    let Some(ServerBody::ServerComplete { result_ref, mre }) = last.map(|m| m.body) else {
        panic!("no completion");
    };
    drop(client);
    let host = server.join().unwrap().unwrap();
    assert_eq!(host.state(), &run.state);
    assert!(host.persistence_errors().is_empty());

    let stored: CalibrationFile = store.get_json(&result_ref).unwrap();
    assert_eq!(stored.result.mre, mre);
    assert_eq!(Some(&stored.result), host.result());
    assert_eq!(stored.session_id.as_deref(), Some("tcp"));

    let kinds: Vec<ArtifactKind> = store.index().unwrap().iter().map(|e| e.kind).collect();
    for k in [
        ArtifactKind::Session,
        ArtifactKind::Observations,
        ArtifactKind::EventLog,
        ArtifactKind::CalibrationResult,
    ] {
        assert!(kinds.contains(&k), "{k:?} missing");
    }
    let streamed = std::fs::File::open(dir.path().join("sessions/tcp/events.jsonl")).unwrap();
    let logged = read_event_log(BufReader::new(streamed)).unwrap();
    let events: Vec<SessionEvent> = logged.into_iter().map(|e| e.event).collect();
    assert_eq!(events, run.events);
    assert!(matches!(
        events.last(),
        Some(SessionEvent::Completed { captured: 8 })
    ));

    let record_ref = store
        .index()
        .unwrap()
        .into_iter()
        .find(|e| e.kind == ArtifactKind::Session)
        .unwrap()
        .artifact_ref;
    let record: SessionRecord = store.get_json(&record_ref).unwrap();
    assert_eq!(record.config, config);
}

/// Serves every connection on its own thread, without ever shutting down.
fn spawn_service(service: Arc<SessionService>) -> std::net::SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let service = Arc::clone(&service);
            let stream = stream.unwrap();
            thread::spawn(move || service.handle_connection(stream));
        }
    });
    addr
}

fn wait_for(mut cond: impl FnMut() -> bool) {
    let deadline = Instant::now() + Duration::from_secs(10);
    while !cond() {
        assert!(Instant::now() < deadline, "timed out");
        thread::sleep(Duration::from_millis(5));
    }
}

#[test]
fn transport_level_errors() {
    let (_, config, run) = fixture(CaptureMode::Auto, 12);
    let service = Arc::new(SessionService::new(DisconnectPolicy::Suspend));
    service.add_session(SessionHost::new("s", config, SolverConfig::default()).unwrap());
    let addr = spawn_service(Arc::clone(&service));

    let mut stranger = SessionClient::connect(addr, "nope").unwrap();
    assert_eq!(
        error_code(&stranger.exchange(ClientBody::ClientHello {}).unwrap()),
        Some(ErrorCode::NoSession)
    );

    let mut first = SessionClient::connect(addr, "s").unwrap();
    first.exchange(ClientBody::ClientHello {}).unwrap();
    let mut second = SessionClient::connect(addr, "s").unwrap();
    assert_eq!(
        error_code(&second.exchange(ClientBody::ClientHello {}).unwrap()),
        Some(ErrorCode::SessionBusy)
    );

    let mut raw = TcpStream::connect(addr).unwrap();
    write_frame(&mut raw, b"{\"not\": \"a message\"}").unwrap();
    raw.flush().unwrap();
    let reply: ServerMessage = recv(&mut raw).unwrap().unwrap();
    assert!(matches!(
        reply.body,
        ServerBody::ServerError {
            code: ErrorCode::BadMessage,
            ..
        }
    ));

    let f = &run.frames[0];
    let update = ClientBody::CornerUpdate {
        frame_token: f.frame_token,
        corners: f.corners.clone(),
    };
    first.send_with_seq(7, update.clone()).unwrap();
    first.recv_batch().unwrap();
    let before = service.with_session("s", |h| h.state().clone()).unwrap();
    first.send_with_seq(7, update).unwrap();
    assert_eq!(
        error_code(&first.recv_batch().unwrap()),
        Some(ErrorCode::StaleSequence)
    );
    first
        .send_with_seq(8, ClientBody::ManualCaptureRequest {})
        .unwrap();
    assert_eq!(
        error_code(&first.recv_batch().unwrap()),
        Some(ErrorCode::ModeMismatch)
    );
    assert_eq!(
        service.with_session("s", |h| h.state().clone()).unwrap(),
        before
    );
}

#[test]
fn abort_policy_closes_an_abandoned_session() {
    let (_, config, run) = fixture(CaptureMode::Auto, 14);
    let service = Arc::new(SessionService::new(DisconnectPolicy::Abort));
    service.add_session(SessionHost::new("s", config, SolverConfig::default()).unwrap());
    let addr = spawn_service(Arc::clone(&service));

    let mut client = SessionClient::connect(addr, "s").unwrap();
    for msg in replay("s", &run.frames[..3], 0) {
        client.send_with_seq(msg.seq, msg.body).unwrap();
        client.recv_batch().unwrap();
    }
    drop(client);
    wait_for(|| service.with_session("s", |h| h.state().phase) == Some(Phase::Aborted));

    let mut again = SessionClient::connect(addr, "s").unwrap();
    again
        .send_with_seq(100, ClientBody::ClientHello {})
        .unwrap();
    assert_eq!(
        error_code(&again.recv_batch().unwrap()),
        Some(ErrorCode::SessionClosed)
    );
    let f = &run.frames[3];
    again
        .send_with_seq(
            101,
            ClientBody::CornerUpdate {
                frame_token: f.frame_token,
                corners: f.corners.clone(),
            },
        )
        .unwrap();
    assert_eq!(
        error_code(&again.recv_batch().unwrap()),
        Some(ErrorCode::SessionClosed)
    );
}

#[test]
fn suspend_policy_resumes_on_reconnect() {
    let (_, config, run) = fixture(CaptureMode::Auto, 16);
    let service = Arc::new(SessionService::new(DisconnectPolicy::Suspend));
    service.add_session(SessionHost::new("s", config, SolverConfig::default()).unwrap());
    let addr = spawn_service(Arc::clone(&service));

    let msgs = replay("s", &run.frames, 0);
    let half = msgs.len() / 2;
    let mut client = SessionClient::connect(addr, "s").unwrap();
    for m in &msgs[..half] {
        client.send_with_seq(m.seq, m.body.clone()).unwrap();
        client.recv_batch().unwrap();
    }
    drop(client);
    // the slot is released once the worker notices the disconnect
    let mut client = loop {
        let mut c = SessionClient::connect(addr, "s").unwrap();
        c.send_with_seq(half as u64, ClientBody::ClientHello {})
            .unwrap();
        let batch = c.recv_batch().unwrap();
        if error_code(&batch) != Some(ErrorCode::SessionBusy) {
            assert!(matches!(batch[0].body, ServerBody::ServerTarget { .. }));
            break c;
        }
        thread::sleep(Duration::from_millis(5));
    };
    let mut last = None;
    for m in &msgs[half..] {
        client.send_with_seq(m.seq + 1, m.body.clone()).unwrap();
        last = client.recv_batch().unwrap().pop();
    }
    assert!(matches!(
        last.unwrap().body,
        ServerBody::ServerComplete { .. }
    ));
    let state = service.with_session("s", |h| h.state().clone()).unwrap();
    assert_eq!(state, run.state);
}

#[test]
fn persisted_documents_round_trip() {
    let (camera, config, run) = fixture(CaptureMode::Manual, 18);
    let log = render_event_log("s", &run.events);
    let back: Vec<SessionEvent> = read_event_log(&log[..])
        .unwrap()
        .into_iter()
        .map(|e| e.event)
        .collect();
    assert_eq!(back, run.events);
    assert_eq!(
        log.iter().filter(|&&b| b == b'\n').count(),
        run.events.len()
    );

    let result: CalibrationResult = finalize(&run.state, &SolverConfig::default()).unwrap();
    let doc = CalibrationFile::new(Some("s".into()), result);
    let parsed: CalibrationFile = parse_document(&render_document(&doc)).unwrap();
    assert_eq!(parsed, doc);

    let record = SessionRecord {
        schema_version: poseguide::SCHEMA_VERSION,
        session_id: "s".into(),
        config: config.clone(),
    };
    let parsed: SessionRecord = parse_document(&render_document(&record)).unwrap();
    assert_eq!(parsed, record);

    let mut obs = Vec::new();
    poseguide::calibration::write_observations(&mut obs, &run.state.captured).unwrap();
    assert_eq!(read_observations(&obs[..]).unwrap(), run.state.captured);

    let space = dms(&camera);
    let report = score_pose_set(
        &config.pose_set,
        &space,
        &camera.truth,
        &NoiseModel::gaussian(0.1, 18),
        &ScoringConfig::default(),
    );
    let set_file = PoseSetFile {
        schema_version: poseguide::SCHEMA_VERSION,
        space_id: space.id(),
        board: config.board,
        image: config.image,
        reference_intrinsics: camera.truth,
        pose_set: config.pose_set.clone(),
        report,
    };
    let parsed: PoseSetFile = parse_document(&render_document(&set_file)).unwrap();
    assert_eq!(parsed, set_file);
    assert_eq!(parsed.session_config().pose_set, config.pose_set);
}
