//! Thick curves and knots.
//!
//! Discrete curves with tube radius, doubly critical self-distance and thickness,
//! planar Dubins caps, shrink-on-no-overlap tightening, the stacked overhand
//! constructions and the aperture diagnostics that accompany them.

// `!(x > 0.0)` style checks are deliberate: they reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constructions;
pub mod curve;
pub mod diagnostics;
pub mod dubins;
pub mod error;
pub mod geom;
pub mod io;
pub mod mesh;
pub mod thickness;
pub mod tighten;

pub use curve::{Configuration, DiscreteCurve, GeometricReport};
pub use error::{Error, Result};
pub use geom::Vec3;
