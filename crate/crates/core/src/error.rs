use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-integrable point: intensity {0} on the boundary of [0, mu_max]")]
    NonIntegrablePoint(f64),
    #[error("vacuum sample, undefined polarization")]
    VacuumSample,
    #[error("invalid Bloch vector (norm {0})")]
    InvalidBlochVector(f64),
    #[error("degenerate region: postselection probability is zero")]
    DegenerateRegion,
    #[error("region too small for requested accuracy ({accepted} accepted samples)")]
    RegionTooSmall { accepted: usize },
    #[error("LP infeasible: widen tolerances or raise N_cut")]
    Infeasible,
    #[error("LP unbounded")]
    Unbounded,
    #[error("LP iteration limit reached")]
    IterationLimit,
    #[error("empty bucket: Pr(single click | KG) is zero")]
    EmptyBucket,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
