use thiserror::Error;

use crate::group::Element;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("element {0} does not belong to this group")]
    GroupMismatch(String),
    #[error("degree mismatch: {0} vs {1}")]
    DegreeMismatch(usize, usize),
    #[error("image sequence is not a bijection of 0..{0}")]
    NotABijection(usize),
    #[error("window would exceed the cap of {cap} elements")]
    WindowTooLarge { cap: usize },
    #[error("degree {degree} exceeds the cap of {cap} points")]
    DegreeCap { degree: usize, cap: usize },
    #[error("no word of length <= {cap} represents {element}")]
    LengthCapExceeded { element: String, cap: usize },
    #[error("element {0} is not in the window")]
    NotInWindow(Element),
    #[error("closure requirement violated: {} missing element(s), first {}", .missing.len(), .missing.first().map(|e| e.to_string()).unwrap_or_default())]
    ClosureViolation { missing: Vec<Element> },
    #[error("pattern is not subgroup-consistent: {0}")]
    InconsistentPattern(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("brute force is limited to degree <= {max}, got {got}")]
    TooLargeForBruteForce { max: usize, got: usize },
    #[error(
        "no good sample after {tries} tries (best residual {best_residual:.3e}, tol {tol:.3e})"
    )]
    MaxTriesExhausted {
        tries: usize,
        best_residual: f64,
        tol: f64,
    },
    #[error("set {0} is not in the declared family")]
    MissingSet(String),
    #[error("window mismatch")]
    WindowMismatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("decode error: {0}")]
    Decode(String),
}
