//! The three generative stages behind traits: depth inpainting,
//! depth-conditioned image generation and image-to-3D. Deterministic mocks
//! and an HTTP client implement them.

mod mock;
#[cfg(feature = "remote")]
mod remote;

use std::time::Duration;

pub use mock::{
    colormap, colormap_inverse, ColormapImager, ColormapLift, DiffusionInpainter, GroundTruthShapeMock,
};
#[cfg(feature = "remote")]
pub use remote::RemoteBackend;

use crate::error::{Error, Result};
use crate::geometry::{CameraPose, ColoredPointCloud};
use crate::raster::{BinaryMask, DepthImage, RgbImage};

/// Smallest point count a generated shape may have.
pub const MIN_SAMPLE_COUNT: usize = 1024;
pub const DEFAULT_SAMPLE_COUNT: usize = 8192;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Debug, Clone, PartialEq)]
pub struct BackendRequestContext {
    pub text_prompt: String,
    pub rng_seed: u64,
    pub timeout: Duration,
    /// Scan camera the prompt images were rendered from. Local mocks use it
    /// to place their output in the world frame; it is not sent over HTTP.
    pub view: Option<CameraPose>,
}

impl BackendRequestContext {
    pub fn new(text_prompt: impl Into<String>, rng_seed: u64) -> Self {
        Self {
            text_prompt: text_prompt.into(),
            rng_seed,
            timeout: DEFAULT_TIMEOUT,
            view: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout.is_zero() {
            return Err(Error::invalid("backend timeout must be positive"));
        }
        Ok(())
    }
}

/// A generated complete shape, uniformly sampled and coloured.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedShape {
    pub cloud: ColoredPointCloud,
    pub sample_count: usize,
    /// `mock:<name>` or the remote model id.
    pub provenance: String,
}

impl GeneratedShape {
    pub fn new(cloud: ColoredPointCloud, provenance: impl Into<String>) -> Result<Self> {
        if !cloud.has_colors() {
            return Err(Error::invalid("generated shape must be coloured"));
        }
        if cloud.len() < MIN_SAMPLE_COUNT {
            return Err(Error::invalid(format!(
                "generated shape has {} points, at least {MIN_SAMPLE_COUNT} required",
                cloud.len()
            )));
        }
        Ok(Self {
            sample_count: cloud.len(),
            cloud,
            provenance: provenance.into(),
        })
    }
}

pub trait DepthInpainter: Send + Sync {
    /// Fill the masked pixels. Valid unmasked pixels must come back unchanged.
    fn inpaint_depth(&self, raw: &DepthImage, mask: &BinaryMask, ctx: &BackendRequestContext) -> Result<DepthImage>;
}

pub trait DepthToImage: Send + Sync {
    fn depth_to_image(&self, depth: &DepthImage, ctx: &BackendRequestContext) -> Result<RgbImage>;
}

pub trait ImageTo3d: Send + Sync {
    fn image_to_3d(&self, image: &RgbImage, ctx: &BackendRequestContext) -> Result<GeneratedShape>;
}

/// One implementation per generative stage.
pub struct Backends {
    pub inpainter: Box<dyn DepthInpainter>,
    pub imager: Box<dyn DepthToImage>,
    pub generator: Box<dyn ImageTo3d>,
}

impl Backends {
    /// Diffusion inpainter, colormap imager and colormap-lift generator.
    pub fn mock() -> Self {
        Self {
            inpainter: Box::new(DiffusionInpainter::default()),
            imager: Box::new(ColormapImager),
            generator: Box::new(ColormapLift::default()),
        }
    }

    /// `mock:` selects [`Backends::mock`]; `http://host:port` the remote client.
    pub fn from_url(url: &str, sample_count: usize) -> Result<Self> {
        if url.starts_with("mock:") {
            let mut b = Self::mock();
            b.generator = Box::new(ColormapLift { sample_count });
            return Ok(b);
        }
        #[cfg(feature = "remote")]
        if url.starts_with("http://") {
            let client = RemoteBackend::new(url, sample_count)?;
            return Ok(Self {
                inpainter: Box::new(client.clone()),
                imager: Box::new(client.clone()),
                generator: Box::new(client),
            });
        }
        Err(Error::invalid(format!("unsupported backend url {url:?}")))
    }

    /// Replace the image-to-3D stage.
    pub fn with_generator(mut self, generator: impl ImageTo3d + 'static) -> Self {
        self.generator = Box::new(generator);
        self
    }
}
