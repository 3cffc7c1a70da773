//! Remote scoring client and an in-process stub server.
//!
//! Wire protocol (HTTP/1.1, `application/json`):
//!
//! - `GET /v1/info` returns `{"vocab_size": int, "name": str, "deterministic": bool}`.
//! - `POST /v1/score` takes `{"tokens": [int], "start": int}` and returns
//!   `{"dists": [[float]]}`, one row per position `start..=len + 1`.
//! - Failures return a non-2xx status with `{"error": str}`.

mod client;
mod stub;
mod wire;

pub use client::{handshake, remote_evaluate, RemoteModel, RemoteModelSpec};
pub use stub::{StubOptions, StubServer};
pub use wire::{ErrorBody, ScoreRequest, ScoreResponse, ServerInfo, ROW_TOLERANCE};
