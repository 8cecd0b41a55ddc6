use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("curve is not regular: min |sigma'| = {min_speed:e}")]
    NotRegular { min_speed: f64 },

    #[error(
        "curve self-intersects: off-band chord {min_chord:e} at arc positions ({s:.6}, {t:.6})"
    )]
    SelfIntersection { min_chord: f64, s: f64, t: f64 },

    #[error("arc-length reparametrization failed: max |speed - 1| = {defect:e} exceeds {tol:e}")]
    Reparametrization { defect: f64, tol: f64 },

    #[error(
        "point at distance {distance:e} from the curve is inside the exclusion radius {radius:e}"
    )]
    TooClose { distance: f64, radius: f64 },

    #[error("eigensolver did not converge for a {0}x{0} matrix")]
    EigenNonConvergence(usize),

    #[error("eigenvalue curve nu_{k} not monotone: nu({lo}) = {v_lo} but nu({hi}) = {v_hi}")]
    Monotonicity {
        k: usize,
        lo: f64,
        hi: f64,
        v_lo: f64,
        v_hi: f64,
    },

    #[error("count {count} reaches the trusted mode range {trusted}; refine the grid")]
    GridTooCoarse { count: usize, trusted: usize },

    #[error("no spectral floor with nu_1 < {alpha} found after {doublings} doublings")]
    FloorNotFound { alpha: f64, doublings: usize },

    #[error("no bound state: {0}")]
    NoBoundState(String),

    #[error("matrix numerically singular (condition estimate {0:e})")]
    Singular(f64),

    #[error("no admissible eta among the candidates")]
    NoAdmissibleEta,

    #[error("problem too large: {entries} matrix entries exceed the cap {cap}")]
    TooLarge { entries: usize, cap: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
