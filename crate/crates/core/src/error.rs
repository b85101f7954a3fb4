use thiserror::Error;

#[derive(Debug, Error)]
pub enum NavError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("point ({x:.3}, {y:.3}) lies outside the terrain extent")]
    OutOfBounds { x: f64, y: f64 },

    #[error("camera at z = {camera_z:.3} m is not above the terrain surface ({ground_z:.3} m)")]
    CameraBelowTerrain { camera_z: f64, ground_z: f64 },

    #[error("feature ray altitude {ray_height:.3} m is not above the terrain ({ground_z:.3} m)")]
    RayBelowTerrain { ray_height: f64, ground_z: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("grid dimensions do not match: {0}")]
    GridMismatch(String),

    #[error("goal cell is untraversable")]
    GoalBlocked,

    #[error("no path from start to goal")]
    Unreachable,

    #[error("no feasible arc among {0} candidates")]
    NoFeasibleArc(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },

    #[error("image export failed: {0}")]
    Image(#[from] image::ImageError),
}

impl NavError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        NavError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        NavError::InvalidConfig(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, NavError>;
