//! City- and metropolitan-area-level scientometric indicators.
//!
//! Publication records are ingested from JSONL or CSV, their affiliation
//! strings parsed and resolved against a gazetteer, localities grouped into
//! metropolitan areas by one of several delineation strategies, and credit
//! counted under integer, deduplicated and fractional regimes.

pub mod collab;
pub mod counting;
pub mod delineation;
pub mod fixture;
pub mod gazetteer;
pub mod record;
pub mod report;
pub mod scalar;
pub mod text;

pub use scalar::{Credit, Rational};

/// Reports and matrices over `f64` credit.
pub type CountReport = counting::CountReport<f64>;
pub type DyadMatrix = collab::DyadMatrix<f64>;
pub type RankedTable = report::RankedTable<f64>;
pub type RegimeSummary = report::RegimeSummary<f64>;

/// Exact rational counterparts.
pub type ExactCountReport = counting::CountReport<Rational>;
pub type ExactDyadMatrix = collab::DyadMatrix<Rational>;
