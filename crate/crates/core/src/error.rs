use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid link index {index} for a chain with {dof} links")]
    LinkIndex { index: usize, dof: usize },

    #[error("invalid chain: {0}")]
    Chain(String),

    #[error("invalid skin layout: {0}")]
    Skin(String),

    #[error("non-unit taxel normals: {}", format_normals(.0))]
    TaxelNormals(Vec<(u32, f64)>),

    #[error("invalid receptive field: {0}")]
    ReceptiveField(String),

    #[error("negative stimulus distance {0}")]
    NegativeDistance(f64),

    #[error("valence {0} outside [-1, 1]")]
    Valence(f64),

    #[error("activation {0} outside [0, 1]")]
    Activation(f64),

    #[error("unknown keypoint label `{0}`")]
    UnknownKeypoint(String),

    #[error("invalid trajectory: {0}")]
    Trajectory(String),

    #[error("keypoint stream rejected: {malformed} of {total} records malformed (first: {first})")]
    MalformedStream {
        malformed: usize,
        total: usize,
        first: String,
    },

    #[error("invalid controller config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_normals(list: &[(u32, f64)]) -> String {
    list.iter()
        .map(|(id, norm)| format!("taxel {id} has |n| = {norm}"))
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
