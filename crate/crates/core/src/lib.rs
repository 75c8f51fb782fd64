//! Mass univariate statistical parametric mapping on triangle meshes.
//!
//! The pipeline fits a general linear model at every mesh vertex
//! ([`glm`]), enhances the resulting t-map with threshold-free cluster
//! enhancement using mesh-aware cluster extents ([`tfce`]), derives
//! vertex-wise p-values by Freedman-Lane permutation and corrects them for
//! multiple comparisons ([`inference`]). [`synth`] injects known signals
//! into null data to measure sensitivity and false discoveries, and [`io`]
//! with [`pipeline`] provide file formats and the command implementations.

pub mod error;
pub mod glm;
pub mod inference;
pub mod io;
pub mod mesh;
pub mod pipeline;
pub mod synth;
pub mod tfce;

pub use error::{Error, ErrorKind, Result};
