use std::sync::OnceLock;
use std::time::Duration;

use url::Url;

use super::ModelError;

/// Resolves a URL to its bytes.
pub trait Fetcher: Send + Sync {
    fn fetch(&self, url: &Url) -> Result<Vec<u8>, ModelError>;
}

/// Handles `file://` directly and `http(s)://` through a blocking client.
/// The client is built on the first HTTP fetch; fetching (and dropping a
/// fetcher that has fetched over HTTP) must happen outside async runtime
/// workers.
pub struct UrlFetcher {
    timeout: Duration,
    client: OnceLock<reqwest::blocking::Client>,
}

impl UrlFetcher {
    pub fn new(timeout: Duration) -> Self {
        UrlFetcher { timeout, client: OnceLock::new() }
    }

    fn client(&self) -> &reqwest::blocking::Client {
        self.client.get_or_init(|| {
            reqwest::blocking::Client::builder()
                .timeout(self.timeout)
                .build()
                .expect("tls backend available")
        })
    }
}

impl Default for UrlFetcher {
    fn default() -> Self {
        UrlFetcher::new(Duration::from_secs(60))
    }
}

impl Fetcher for UrlFetcher {
    fn fetch(&self, url: &Url) -> Result<Vec<u8>, ModelError> {
        let fail = |reason: String| ModelError::Fetch { url: url.to_string(), reason };
        match url.scheme() {
            "file" => {
                let path = url.to_file_path().map_err(|_| fail("not a local path".into()))?;
                std::fs::read(&path).map_err(|e| fail(e.to_string()))
            }
            "http" | "https" => {
                let resp = self.client().get(url.clone()).send().map_err(|e| fail(e.to_string()))?;
                let status = resp.status();
                if !status.is_success() {
                    return Err(fail(format!("HTTP {status}")));
                }
                resp.bytes().map(|b| b.to_vec()).map_err(|e| fail(e.to_string()))
            }
            other => Err(fail(format!("unsupported scheme {other:?}"))),
        }
    }
}
