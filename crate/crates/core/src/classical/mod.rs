//! Classical void-filling baselines: inverse distance weighting, ordinary
//! kriging and Navier-Stokes (Bertalmio) inpainting.
//!
//! All fills leave known pixels bit-identical and only write masked ones.

mod idw;
mod kriging;
mod linalg;
mod neighbors;
mod ns;

use thiserror::Error;

use crate::grid::Heightmap;
use crate::maskgen::{Mask, MaskError};

pub use idw::{idw_estimate, idw_fill, IdwConfig};
pub use kriging::{
    empirical_variogram, fit_variogram, krige_fill, EmpiricalVariogram, KrigingPredictor, VariogramKind, VariogramModel,
};
pub use linalg::solve_dense;
pub use neighbors::{KnownPoint, NeighborIndex};
pub use ns::{ns_inpaint, NsConfig};

#[derive(Debug, Error)]
pub enum FillError {
    #[error("need at least {needed} known pixels, have {have}")]
    InsufficientKnown { needed: usize, have: usize },
    #[error("kriging system is singular")]
    SingularSystem,
    #[error("no known pixel borders the masked region")]
    NoBoundary,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("known pixel contains nodata at index {0}")]
    KnownNodata(usize),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

pub type Result<T> = std::result::Result<T, FillError>;

/// Which baseline to run, used by the harness and CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassicalMethod {
    Idw,
    Kriging,
    NavierStokes,
}

fn check_inputs(h: &Heightmap, m: &Mask) -> Result<()> {
    m.check_size(h.width(), h.height())?;
    if let Some(i) = h.values().iter().zip(m.bits()).position(|(v, &masked)| !masked && v.is_nan()) {
        return Err(FillError::KnownNodata(i));
    }
    Ok(())
}

/// Range of the known values, used to clamp estimates.
fn known_range(h: &Heightmap, m: &Mask) -> Option<(f32, f32)> {
    h.values().iter().zip(m.bits()).filter(|(_, &masked)| !masked).fold(None, |acc, (&v, _)| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

/// Copy `h`, replacing masked pixels with `estimate(x, y)`.
fn fill_masked(h: &Heightmap, m: &Mask, mut estimate: impl FnMut(usize, usize) -> Result<f32>) -> Result<Heightmap> {
    let w = h.width();
    let mut values = h.values().to_vec();
    for (i, v) in values.iter_mut().enumerate() {
        if m.bits()[i] {
            *v = estimate(i % w, i / w)?;
        }
    }
    Ok(Heightmap::new(w, h.height(), values).expect("estimates are finite"))
}

/// True when `out` equals `input` bit-for-bit on every known pixel.
pub fn known_pixels_preserved(input: &Heightmap, out: &Heightmap, m: &Mask) -> bool {
    input.width() == out.width()
        && input.height() == out.height()
        && input
            .values()
            .iter()
            .zip(out.values())
            .zip(m.bits())
            .all(|((a, b), &masked)| masked || a.to_bits() == b.to_bits())
}
