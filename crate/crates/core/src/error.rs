use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Some (z, x) slice carries no probability mass, so overlap fails.
    #[error("cell `{cell}`: assignment arm z={arm} has zero mass (overlap violated)")]
    EmptyCell { cell: String, arm: u8 },

    #[error("not a probability distribution: {0}")]
    NotADistribution(String),

    #[error(
        "cell `{cell}`: joint entry (y={y}, d={d}, z={z}) = {value} lies on the boundary of [0,1]"
    )]
    InteriorViolation {
        cell: String,
        y: u8,
        d: u8,
        z: u8,
        value: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid reaches c = {max_c}, beyond the regular-regime cap {cap} (c must stay below min(p, 1-p) in every cell)")]
    GridOutsideRegime { max_c: f64, cap: f64 },

    /// A covariate cell has no records in one assignment arm.
    #[error("cell `{cell}` has no records with z={arm}")]
    EmptyArm { cell: String, arm: u8 },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("column `{column}`, row {row}: value `{value}` is not binary (expected 0 or 1)")]
    NonBinary {
        column: String,
        row: usize,
        value: String,
    },

    #[error(
        "covariate column `{0}` takes a single value; its calibration statistic is trivially 0"
    )]
    SingleValueColumn(String),

    #[error(
        "no latent response-type model is consistent with the cell at c = {c}, pi_def = {pi_def}"
    )]
    Infeasible { c: f64, pi_def: f64 },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
