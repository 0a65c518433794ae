//! Discrete minimization and diagnostics for the thin one-phase free boundary
//! problem: minimize `int |grad u|^2 + H^n({u > 0} on the slit)` over fields
//! that are even across the slit `{x_{n+1} = 0}`.

pub mod closedform;
pub mod cones;
pub mod energy;
pub mod error;
pub mod fbdiag;
pub mod grid;
pub mod harmonic;
pub mod minimize;
pub mod weiss;

pub use closedform::{TrivialCone, VField, VParams, MINIMAL_CONE_AMPLITUDE};
pub use cones::{AngularField, AngularMesh, ConeClass};
pub use energy::Region;
pub use error::{Error, Result};
pub use fbdiag::{ExpansionFit, FBPolyline};
pub use grid::{Field, FnField, Grid, PositivitySet, ScalarField};
pub use minimize::{MinimizeOptions, MinimizeReport};
pub use weiss::WeissProfile;
