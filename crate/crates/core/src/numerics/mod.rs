//! Deterministic numerical kernels shared by the rest of the crate.

mod normal;
mod quadrature;
mod rng;
mod roots;

pub use self::normal::{normal_cdf, normal_quantile, normal_sf};
pub use self::quadrature::{integrate, QuadratureSettings};
pub use self::rng::RngStream;
pub use self::roots::{find_root, RootSettings};
