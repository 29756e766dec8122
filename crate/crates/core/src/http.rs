//! JSON-over-HTTP calls with bounded retries, shared by the remote clients.

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// POSTs `body` and decodes the answer. Server errors, timeouts and refused
/// connections are retried up to `retries` more times.
pub(crate) async fn post_json<B: Serialize + ?Sized, R: DeserializeOwned>(
    client: &reqwest::Client,
    endpoint: &str,
    body: &B,
    retries: u32,
) -> Result<R> {
    let mut attempts = 0;
    loop {
        attempts += 1;
        match client.post(endpoint).json(body).send().await {
            Ok(resp) if resp.status().is_success() => {
                let bytes = resp.bytes().await.map_err(|e| Error::Backend(e.to_string()))?;
                return serde_json::from_slice(&bytes)
                    .map_err(|e| Error::MalformedResponse(format!("{e}: {}", String::from_utf8_lossy(&bytes))));
            }
            Ok(resp) if resp.status().is_server_error() => {
                if attempts > retries {
                    return Err(Error::Backend(format!("{endpoint} returned {}", resp.status())));
                }
            }
            Ok(resp) => return Err(Error::Backend(format!("{endpoint} returned {}", resp.status()))),
            Err(e) if e.is_timeout() || e.is_connect() => {
                if attempts > retries {
                    return Err(Error::BackendTimeout { attempts });
                }
            }
            Err(e) => return Err(Error::Backend(e.to_string())),
        }
    }
}

pub(crate) fn client(timeout: std::time::Duration) -> Result<reqwest::Client> {
    reqwest::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| Error::Backend(e.to_string()))
}
