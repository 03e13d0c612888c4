use hubsim_client::{Client, ClientError};
use hubsim_core::api::CreateSession;
use hubsim_core::wire::WireBody;
use hubsim_core::{Difficulty, ModelKind};
use hubsim_server::{bind, ServerConfig};

async fn client() -> Client {
    let (addr, serve) = bind("127.0.0.1:0".parse().unwrap(), ServerConfig::default()).await.unwrap();
    tokio::spawn(serve);
    Client::new(format!("http://{addr}/"))
}

#[tokio::test]
async fn api_errors_carry_kind_and_status() {
    let c = client().await;
    match c.log("missing").await {
        Err(ClientError::Api { status, body }) => assert_eq!((status, body.kind.as_str()), (404, "lookup")),
        other => panic!("{other:?}"),
    }
    match c.metrics("{}".into()).await {
        Err(ClientError::Api { status, body }) => assert_eq!((status, body.kind.as_str()), (400, "parse")),
        other => panic!("{other:?}"),
    }
}

#[tokio::test]
async fn live_session_sequence_numbers_increase() {
    let c = client().await;
    let created = c.create_session(&CreateSession::new(ModelKind::M3, Difficulty::Hard, 5)).await.unwrap();
    assert_eq!(created.ws_path, format!("/sessions/{}/ws", created.session_id));
    let mut live = c.connect(&created.session_id).await.unwrap();
    assert_eq!(live.session_id(), created.session_id);
    let hello = live.join().await.unwrap();
    assert_eq!((hello.model, hello.difficulty, hello.hubs.len()), (ModelKind::M3, Difficulty::Hard, 4));
    let mut last = 0;
    for _ in 0..3 {
        let m = live.recv().await.unwrap().unwrap();
        assert_eq!(m.session_id, created.session_id);
        assert!(m.seq > last);
        last = m.seq;
    }
    assert_eq!(live.send(WireBody::Pause { paused: true }).await.unwrap(), 2);
    live.close().await.unwrap();
}
