use std::fmt;

use thiserror::Error;

/// Pipeline stage names used to tag errors raised inside [`crate::pipeline::complete`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    PlaceCameras,
    SelectViewpoint,
    ProjectDepth,
    InpaintDepth,
    DepthToImage,
    Colorize,
    ImageTo3d,
    Normalize,
    ScaleAdaptation,
    RemoveOverlap,
    Fuse,
    Dump,
    Resume,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::PlaceCameras => "place_cameras",
            Stage::SelectViewpoint => "select_viewpoint",
            Stage::ProjectDepth => "project_depth",
            Stage::InpaintDepth => "inpaint_depth",
            Stage::DepthToImage => "depth_to_image",
            Stage::Colorize => "colorize",
            Stage::ImageTo3d => "image_to_3d",
            Stage::Normalize => "normalize",
            Stage::ScaleAdaptation => "scale_adaptation",
            Stage::RemoveOverlap => "remove_overlap",
            Stage::Fuse => "fuse",
            Stage::Dump => "dump",
            Stage::Resume => "resume",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How a remote backend call failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendFailure {
    /// Connection refused, DNS failure, timeout.
    Transport,
    /// The server answered, but not with what the protocol requires.
    Protocol,
}

impl fmt::Display for BackendFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendFailure::Transport => f.write_str("transport"),
            BackendFailure::Protocol => f.write_str("protocol"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{format} parse error at byte {offset}: {message}")]
    Parse {
        format: &'static str,
        offset: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("{kind} backend error in {operation} after {attempts} attempt(s): {message}")]
    Backend {
        kind: BackendFailure,
        operation: &'static str,
        attempts: u32,
        message: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn parse(format: &'static str, offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            format,
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }

    pub(crate) fn degenerate(message: impl Into<String>) -> Self {
        Error::Degenerate(message.into())
    }

    pub fn at_stage(self, stage: Stage) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, with stage tags peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 2 input/parse, 3 backend, 4 degeneracy.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Parse { .. } | Error::InvalidInput(_) | Error::Io(_) => 2,
            Error::Backend { .. } => 3,
            Error::Degenerate(_) => 4,
            Error::Stage { .. } => unreachable!("root() strips stage tags"),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_tag_keeps_exit_code_of_cause() {
        let e = Error::degenerate("flat").at_stage(Stage::SelectViewpoint);
        assert_eq!(e.exit_code(), 4);
        assert!(e.to_string().contains("select_viewpoint"));
        let b = Error::Backend {
            kind: BackendFailure::Transport,
            operation: "inpaint-depth",
            attempts: 3,
            message: "refused".into(),
        }
        .at_stage(Stage::InpaintDepth);
        assert_eq!(b.exit_code(), 3);
        assert_eq!(Error::parse("ply", 4, "x").exit_code(), 2);
    }
}
