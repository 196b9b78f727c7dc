//! Group-equivariant convolutional networks on the plane symmetry groups
//! Z², p4 and p4m.

pub mod checkpoint;
pub mod checks;
pub mod data;
pub mod error;
pub mod gconv;
pub mod gfunc;
pub mod group;
pub mod layers;
pub mod model;
pub mod real;
pub mod train;

pub use error::{Error, Result};
pub use gfunc::{GStack, PlanarStack};
pub use group::{GroupElement, GroupId};
pub use real::Real;
