//! Blocking client for the sync server, used for knowledge and fix-time
//! commands when a server URL is configured.

use reqwest::blocking::{Client, Response};
use reqwest::Url;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::CliError;

pub struct Remote {
    base: Url,
    client: Client,
}

impl Remote {
    pub fn new(base: &str) -> Result<Self, CliError> {
        let base = Url::parse(base).map_err(|e| CliError::invalid(format!("invalid server URL `{base}`: {e}")))?;
        if base.cannot_be_a_base() {
            return Err(CliError::invalid(format!("invalid server URL `{base}`")));
        }
        Ok(Self { base, client: Client::new() })
    }

    fn url(&self, segments: &[&str]) -> Url {
        let mut url = self.base.clone();
        url.path_segments_mut().expect("checked in new").pop_if_empty().extend(["api", "v1"]).extend(segments);
        url
    }

    pub fn get<R: DeserializeOwned>(&self, segments: &[&str]) -> Result<R, CliError> {
        read(self.client.get(self.url(segments)).send())
    }

    pub fn post<B: Serialize, R: DeserializeOwned>(&self, segments: &[&str], body: &B) -> Result<R, CliError> {
        read(self.client.post(self.url(segments)).json(body).send())
    }
}

fn read<R: DeserializeOwned>(sent: reqwest::Result<Response>) -> Result<R, CliError> {
    let response = sent.map_err(|e| CliError::Io(format!("server unreachable: {e}")))?;
    let status = response.status();
    let bytes = response.bytes().map_err(|e| CliError::Io(e.to_string()))?;
    if status.is_success() {
        return serde_json::from_slice(&bytes).map_err(|e| CliError::Io(format!("unexpected server response: {e}")));
    }
    let message = serde_json::from_slice::<serde_json::Value>(&bytes)
        .ok()
        .and_then(|v| v["error"].as_str().map(str::to_owned))
        .unwrap_or_else(|| String::from_utf8_lossy(&bytes).into_owned());
    if status.is_client_error() {
        Err(CliError::Validation(format!("server rejected the request ({status}): {message}")))
    } else {
        Err(CliError::Io(format!("server error ({status}): {message}")))
    }
}
