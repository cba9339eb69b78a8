//! Spherical mean Radon transform with centers on the boundary of an
//! ellipsoid: forward simulation, back-projection inversion in even and odd
//! dimensions, and numerical checks of the identities the inversion rests on.

pub mod error;
pub mod filtering;
pub mod forward;
pub mod geometry;
pub mod interp;
pub mod io;
pub mod phantom;
pub mod quadrature;
pub mod reconstruction;
pub mod verification;

pub use error::{Error, Result};
