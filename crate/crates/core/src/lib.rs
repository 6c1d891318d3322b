//! Geometric preferential attachment on finite and continuous location
//! spaces: graph growth, limiting edge-end measures, degree laws and the
//! fitness special case.

pub mod degree;
pub mod equilibrium;
pub mod error;
pub mod fitness;
pub mod numeric;
pub mod report;
pub mod rng;
pub mod simulate;
pub mod space;
pub mod special;

pub use error::{Error, Result};
pub use report::Check;
pub use space::{
    discretize, ContinuousSpaceSpec, DensityShape, DiscretizedSpace, Domain, FiniteLocationSpace,
    Kernel,
};

/// Floats in CSV output: 17 significant digits, round-trip exact.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV writer with the output dialect used throughout: comma separated,
/// header row, LF line endings.
pub fn csv_writer<W: std::io::Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}
