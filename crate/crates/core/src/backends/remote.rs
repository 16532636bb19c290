use std::io::Read;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde_json::{json, Map, Value};

use super::{BackendRequestContext, DepthInpainter, DepthToImage, GeneratedShape, ImageTo3d, MIN_SAMPLE_COUNT};
use crate::error::{BackendFailure, Error, Result};
use crate::io::{read_depth_pgm, read_ply, read_ppm, write_depth_pgm, write_mask_pgm, write_ppm};
use crate::raster::{BinaryMask, DepthImage, RgbImage};

/// Attempts per call; only transport failures are retried.
pub const MAX_ATTEMPTS: u32 = 3;

/// JSON-over-HTTP client for the three model endpoints. Payloads are
/// base64-encoded PGM/PPM/PLY. Plain `http://` only.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    base_url: String,
    sample_count: usize,
}

impl RemoteBackend {
    pub fn new(base_url: &str, sample_count: usize) -> Result<Self> {
        if !base_url.starts_with("http://") {
            return Err(Error::invalid(format!(
                "remote backend needs an http:// url (no TLS support), got {base_url:?}"
            )));
        }
        if sample_count < MIN_SAMPLE_COUNT {
            return Err(Error::invalid(format!("sample_count must be at least {MIN_SAMPLE_COUNT}")));
        }
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            sample_count,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// POST `body` to `/v1/<operation>` and return the decoded base64 field `field`.
    fn call(&self, operation: &'static str, mut body: Map<String, Value>, ctx: &BackendRequestContext, field: &str) -> Result<Vec<u8>> {
        ctx.validate()?;
        body.insert("prompt".into(), json!(ctx.text_prompt));
        body.insert("seed".into(), json!(ctx.rng_seed));
        let payload = Value::Object(body).to_string();
        let url = format!("{}/v1/{operation}", self.base_url);
        let deadline = Instant::now() + ctx.timeout;
        let fail = |kind, attempts, message: String| Error::Backend {
            kind,
            operation,
            attempts,
            message,
        };

        let mut attempts = 0;
        let response = loop {
            attempts += 1;
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                return Err(fail(BackendFailure::Transport, attempts - 1, "deadline exceeded".into()));
            }
            let agent = ureq::AgentBuilder::new().timeout(remaining).build();
            match agent
                .post(&url)
                .set("Content-Type", "application/json")
                .send_string(&payload)
            {
                Ok(r) => break r,
                Err(ureq::Error::Status(code, r)) => {
                    let text = r.into_string().unwrap_or_default();
                    let snippet: String = text.chars().take(200).collect();
                    return Err(fail(BackendFailure::Protocol, attempts, format!("HTTP {code}: {snippet}")));
                }
                Err(ureq::Error::Transport(t)) => {
                    if attempts >= MAX_ATTEMPTS {
                        return Err(fail(BackendFailure::Transport, attempts, t.to_string()));
                    }
                    let pause = Duration::from_millis(50 * attempts as u64);
                    if Instant::now() + pause >= deadline {
                        return Err(fail(BackendFailure::Transport, attempts, t.to_string()));
                    }
                    std::thread::sleep(pause);
                }
            }
        };

        let mut text = String::new();
        if let Err(e) = response.into_reader().read_to_string(&mut text) {
            let kind = if e.kind() == std::io::ErrorKind::InvalidData {
                BackendFailure::Protocol
            } else {
                BackendFailure::Transport
            };
            return Err(fail(kind, attempts, format!("reading response: {e}")));
        }
        let reply: Value = serde_json::from_str(&text)
            .map_err(|e| fail(BackendFailure::Protocol, attempts, format!("response is not JSON: {e}")))?;
        let encoded = reply
            .get(field)
            .and_then(Value::as_str)
            .ok_or_else(|| fail(BackendFailure::Protocol, attempts, format!("response lacks string field {field:?}")))?;
        STANDARD
            .decode(encoded)
            .map_err(|e| fail(BackendFailure::Protocol, attempts, format!("{field}: bad base64: {e}")))
    }
}

fn protocol(operation: &'static str, e: Error) -> Error {
    Error::Backend {
        kind: BackendFailure::Protocol,
        operation,
        attempts: 1,
        message: format!("undecodable payload: {e}"),
    }
}

impl DepthInpainter for RemoteBackend {
    fn inpaint_depth(&self, raw: &DepthImage, mask: &BinaryMask, ctx: &BackendRequestContext) -> Result<DepthImage> {
        if raw.dims() != mask.dims() {
            return Err(Error::invalid("inpaint mask and depth differ in size"));
        }
        let mut body = Map::new();
        body.insert("depth_pgm_b64".into(), json!(STANDARD.encode(write_depth_pgm(raw))));
        body.insert("mask_pgm_b64".into(), json!(STANDARD.encode(write_mask_pgm(mask))));
        let bytes = self.call("inpaint-depth", body, ctx, "depth_pgm_b64")?;
        let mut out = read_depth_pgm(&bytes).map_err(|e| protocol("inpaint-depth", e))?;
        if out.dims() != raw.dims() {
            return Err(protocol("inpaint-depth", Error::invalid("reply has the wrong size")));
        }
        // the wire format quantizes depth; known pixels are restored exactly
        let (w, h) = raw.dims();
        for row in 0..h {
            for col in 0..w {
                if let Some(d) = raw.get(col, row) {
                    out.set(col, row, d);
                }
            }
        }
        Ok(out)
    }
}

impl DepthToImage for RemoteBackend {
    fn depth_to_image(&self, depth: &DepthImage, ctx: &BackendRequestContext) -> Result<RgbImage> {
        if depth.valid_count() == 0 {
            return Err(Error::invalid("depth has no valid pixel"));
        }
        let mut body = Map::new();
        body.insert("depth_pgm_b64".into(), json!(STANDARD.encode(write_depth_pgm(depth))));
        let bytes = self.call("depth-to-image", body, ctx, "image_ppm_b64")?;
        read_ppm(&bytes).map_err(|e| protocol("depth-to-image", e))
    }
}

impl ImageTo3d for RemoteBackend {
    fn image_to_3d(&self, image: &RgbImage, ctx: &BackendRequestContext) -> Result<GeneratedShape> {
        if image.is_empty() {
            return Err(Error::invalid("image is empty"));
        }
        let mut body = Map::new();
        body.insert("image_ppm_b64".into(), json!(STANDARD.encode(write_ppm(image))));
        body.insert("sample_count".into(), json!(self.sample_count));
        let bytes = self.call("image-to-3d", body, ctx, "ply_b64")?;
        let cloud = read_ply(&bytes).map_err(|e| protocol("image-to-3d", e))?;
        GeneratedShape::new(cloud, format!("remote:{}", self.base_url)).map_err(|e| protocol("image-to-3d", e))
    }
}
