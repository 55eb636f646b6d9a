//! Blocking HTTP client for the job API.

use std::time::Duration;

use mizsrv_core::wire::{
    CancelResponse, ErrorBody, FormatResponse, LintResponse, StatusDocument, SubmitResponse,
    TextRequest, VersionsResponse,
};
use mizsrv_core::{FormatConfig, JobId, JobRequest};
use reqwest::blocking::{Client, RequestBuilder, Response};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use thiserror::Error;

use crate::config::ClientConfig;

const REQUEST_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot reach server: {0}")]
    Transport(String),
    #[error("authentication failed (HTTP 401)")]
    Unauthorized,
    #[error("not found: {0}")]
    NotFound(String),
    #[error("server rejected the request (HTTP {status}, {reason}): {message}")]
    Rejected {
        status: u16,
        reason: String,
        message: String,
    },
    #[error("unexpected response: {0}")]
    Protocol(String),
    #[error("{0}")]
    Setup(String),
}

impl ClientError {
    pub fn reason(&self) -> Option<&str> {
        match self {
            ClientError::Rejected { reason, .. } => Some(reason),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ApiClient {
    http: Client,
    base: String,
    token: Option<String>,
}

impl ApiClient {
    pub fn new(cfg: &ClientConfig) -> Result<Self, ClientError> {
        let mut builder = Client::builder().timeout(REQUEST_TIMEOUT);
        if let Some(path) = &cfg.ca_cert {
            let pem = std::fs::read(path)
                .map_err(|e| ClientError::Setup(format!("{}: {e}", path.display())))?;
            let cert = reqwest::Certificate::from_pem(&pem)
                .map_err(|e| ClientError::Setup(format!("{}: {e}", path.display())))?;
            builder = builder.add_root_certificate(cert);
        }
        let http = builder
            .build()
            .map_err(|e| ClientError::Setup(e.to_string()))?;
        Ok(ApiClient {
            http,
            base: cfg.server_url.trim_end_matches('/').to_owned(),
            token: cfg.token.clone(),
        })
    }

    fn with_auth(&self, req: RequestBuilder) -> RequestBuilder {
        match &self.token {
            Some(t) => req.bearer_auth(t),
            None => req,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn send<T: DeserializeOwned>(&self, req: RequestBuilder) -> Result<T, ClientError> {
        let resp = self
            .with_auth(req)
            .send()
            .map_err(|e| ClientError::Transport(error_chain(&e)))?;
        decode(resp)
    }

    pub fn submit(&self, req: &JobRequest) -> Result<JobId, ClientError> {
        let r: SubmitResponse = self.send(self.http.post(self.url("/api/v1/jobs")).json(req))?;
        Ok(r.job_id)
    }

    pub fn status(&self, id: &str) -> Result<StatusDocument, ClientError> {
        self.send(self.http.get(self.url(&format!("/api/v1/jobs/{id}"))))
    }

    pub fn cancel(&self, id: &str) -> Result<bool, ClientError> {
        let r: CancelResponse =
            self.send(self.http.delete(self.url(&format!("/api/v1/jobs/{id}"))))?;
        Ok(r.canceled)
    }

    pub fn versions(&self) -> Result<VersionsResponse, ClientError> {
        self.send(self.http.get(self.url("/api/v1/versions")))
    }

    pub fn format(&self, text: &str, options: FormatConfig) -> Result<String, ClientError> {
        let body = TextRequest {
            text: text.to_owned(),
            options,
        };
        let r: FormatResponse = self.send(self.http.post(self.url("/api/v1/format")).json(&body))?;
        Ok(r.formatted)
    }

    pub fn lint(&self, text: &str, options: FormatConfig) -> Result<LintResponse, ClientError> {
        let body = TextRequest {
            text: text.to_owned(),
            options,
        };
        self.send(self.http.post(self.url("/api/v1/lint")).json(&body))
    }
}

fn error_chain(e: &dyn std::error::Error) -> String {
    let mut out = e.to_string();
    let mut src = e.source();
    while let Some(s) = src {
        out.push_str(": ");
        out.push_str(&s.to_string());
        src = s.source();
    }
    out
}

fn decode<T: DeserializeOwned>(resp: Response) -> Result<T, ClientError> {
    let status = resp.status();
    let bytes = resp
        .bytes()
        .map_err(|e| ClientError::Transport(error_chain(&e)))?;
    if status.is_success() {
        return serde_json::from_slice(&bytes).map_err(|e| ClientError::Protocol(e.to_string()));
    }
    let body: Option<ErrorBody> = serde_json::from_slice(&bytes).ok();
    let message = body
        .as_ref()
        .map_or_else(|| String::from_utf8_lossy(&bytes).into_owned(), |b| b.message.clone());
    Err(match status {
        StatusCode::UNAUTHORIZED => ClientError::Unauthorized,
        StatusCode::NOT_FOUND => ClientError::NotFound(message),
        _ => ClientError::Rejected {
            status: status.as_u16(),
            reason: body.map_or_else(|| "unknown".to_owned(), |b| b.reason),
            message,
        },
    })
}
