use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use csd_core::{LanguageModel, TokenId};
use socket2::{Domain, Protocol, Socket, Type};
use tiny_http::{Header, Method, Request, Response, Server};

use crate::wire::{ErrorBody, ScoreRequest, ScoreResponse, ServerInfo};

type RowHook = dyn Fn(&mut Vec<Vec<f64>>) + Send + Sync;

/// Knobs for scripting the stub in tests.
#[derive(Clone)]
pub struct StubOptions {
    /// Value reported by `/v1/info`.
    pub deterministic: bool,
    /// Overrides the reported vocabulary size.
    pub vocab_size: Option<usize>,
    /// Answer this many requests with 503 before serving normally.
    pub fail_first: usize,
    /// Applied to every score response before it is sent.
    pub tamper: Option<Arc<RowHook>>,
}

impl Default for StubOptions {
    fn default() -> Self {
        StubOptions {
            deterministic: true,
            vocab_size: None,
            fail_first: 0,
            tamper: None,
        }
    }
}

impl std::fmt::Debug for StubOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StubOptions")
            .field("deterministic", &self.deterministic)
            .field("vocab_size", &self.vocab_size)
            .field("fail_first", &self.fail_first)
            .field("tamper", &self.tamper.is_some())
            .finish()
    }
}

struct State {
    model: Arc<dyn LanguageModel>,
    options: StubOptions,
    requests: AtomicUsize,
    scores: AtomicUsize,
}

/// Serves an in-process model over the scoring protocol on a loopback port.
/// Stops when dropped.
pub struct StubServer {
    server: Arc<Server>,
    state: Arc<State>,
    url: String,
    worker: Option<JoinHandle<()>>,
}

/// Loopback listener whose accepted sockets inherit `TCP_NODELAY`, so small
/// responses are not held back by delayed acknowledgements.
fn nodelay_listener() -> std::io::Result<std::net::TcpListener> {
    let socket = Socket::new(Domain::IPV4, Type::STREAM, Some(Protocol::TCP))?;
    socket.set_nodelay(true)?;
    socket.bind(&SocketAddr::from(([127, 0, 0, 1], 0)).into())?;
    socket.listen(128)?;
    Ok(socket.into())
}

impl StubServer {
    pub fn start(model: Arc<dyn LanguageModel>) -> std::io::Result<Self> {
        Self::with_options(model, StubOptions::default())
    }

    pub fn with_options(model: Arc<dyn LanguageModel>, options: StubOptions) -> std::io::Result<Self> {
        let server = Server::from_listener(nodelay_listener()?, None).map_err(std::io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("stub bound to a non-IP address"))?;
        let server = Arc::new(server);
        let state = Arc::new(State {
            model,
            options,
            requests: AtomicUsize::new(0),
            scores: AtomicUsize::new(0),
        });
        let worker = {
            let server = Arc::clone(&server);
            let state = Arc::clone(&state);
            std::thread::spawn(move || {
                for request in server.incoming_requests() {
                    handle(&state, request);
                }
            })
        };
        Ok(StubServer {
            server,
            state,
            url: format!("http://{addr}"),
            worker: Some(worker),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Score requests answered successfully.
    pub fn score_requests(&self) -> usize {
        self.state.scores.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

fn json_header() -> Header {
    Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).expect("static header")
}

fn reply(request: Request, status: u16, body: String) {
    let response = Response::from_string(body)
        .with_status_code(status)
        .with_header(json_header());
    let _ = request.respond(response);
}

fn reply_error(request: Request, status: u16, message: impl Into<String>) {
    let body = serde_json::to_string(&ErrorBody { error: message.into() }).expect("error body serializes");
    reply(request, status, body);
}

fn handle(state: &State, mut request: Request) {
    let n = state.requests.fetch_add(1, Ordering::SeqCst);
    if n < state.options.fail_first {
        reply_error(request, 503, "scripted outage");
        return;
    }
    match (request.method(), request.url()) {
        (Method::Get, "/v1/info") => {
            let info = ServerInfo {
                vocab_size: state
                    .options
                    .vocab_size
                    .unwrap_or_else(|| state.model.vocab().size()),
                name: state.model.descriptor().to_string(),
                deterministic: state.options.deterministic,
            };
            reply(request, 200, serde_json::to_string(&info).expect("info serializes"));
        }
        (Method::Post, "/v1/score") => {
            let mut body = String::new();
            if let Err(e) = request.as_reader().read_to_string(&mut body) {
                reply_error(request, 400, format!("unreadable body: {e}"));
                return;
            }
            let parsed: ScoreRequest = match serde_json::from_str(&body) {
                Ok(r) => r,
                Err(e) => {
                    reply_error(request, 400, format!("bad request: {e}"));
                    return;
                }
            };
            let tokens: Vec<TokenId> = parsed.tokens.iter().map(|&t| TokenId(t)).collect();
            match state.model.evaluate(&tokens, parsed.start) {
                Ok(dists) => {
                    let mut rows: Vec<Vec<f64>> = dists.into_iter().map(|d| d.into_probs()).collect();
                    if let Some(tamper) = &state.options.tamper {
                        tamper(&mut rows);
                    }
                    state.scores.fetch_add(1, Ordering::SeqCst);
                    let body = serde_json::to_string(&ScoreResponse { dists: rows }).expect("rows serialize");
                    reply(request, 200, body);
                }
                Err(e) => reply_error(request, 400, e.to_string()),
            }
        }
        _ => reply_error(request, 404, "unknown endpoint"),
    }
}
