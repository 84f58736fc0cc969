//! Upstream fallback for layer requests the local store cannot answer.

use std::time::Duration;

use axum::http::HeaderMap;
use url::Url;

use crate::ServiceError;

pub const SOURCE_HEADER: &str = "x-gaps-source";
pub const BBOX_HEADER: &str = "x-gaps-bbox";

/// Headers copied from an upstream answer.
const FORWARDED: [&str; 2] = ["content-type", BBOX_HEADER];

#[derive(Debug, Clone)]
pub struct Upstream {
    base: Url,
    client: reqwest::Client,
}

#[derive(Debug)]
pub struct UpstreamResponse {
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Upstream {
    pub fn new(base: &str) -> Result<Self, ServiceError> {
        Self::with_timeout(base, Duration::from_secs(10))
    }

    pub fn with_timeout(base: &str, timeout: Duration) -> Result<Self, ServiceError> {
        let base = Url::parse(base).map_err(|e| ServiceError::Config(format!("upstream url {base:?}: {e}")))?;
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ServiceError::Config(e.to_string()))?;
        Ok(Upstream { base, client })
    }

    /// Resolves the request path and query against the base URL.
    pub fn url_for(&self, path: &str, query: Option<&str>) -> Url {
        let mut u = self.base.clone();
        let joined = format!("{}{}", u.path().trim_end_matches('/'), path);
        u.set_path(&joined);
        u.set_query(query.filter(|q| !q.is_empty()));
        u
    }

    /// Any transport failure or non-success status counts as unavailable.
    pub async fn fetch(&self, path: &str, query: Option<&str>) -> Result<UpstreamResponse, String> {
        let url = self.url_for(path, query);
        let resp = self.client.get(url.clone()).send().await.map_err(|e| format!("{url}: {e}"))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("{url}: upstream answered {status}"));
        }
        let headers = forwarded_headers(resp.headers());
        let body = resp.bytes().await.map_err(|e| format!("{url}: {e}"))?.to_vec();
        Ok(UpstreamResponse { headers, body })
    }
}

fn forwarded_headers(h: &HeaderMap) -> Vec<(String, String)> {
    FORWARDED
        .iter()
        .filter_map(|name| {
            h.get(*name)
                .and_then(|v| v.to_str().ok())
                .map(|v| (name.to_string(), v.to_string()))
        })
        .collect()
}
