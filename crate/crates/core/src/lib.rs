//! Nowcasting the impact of economic shocks on electricity load and GDP.

pub mod calendar;
pub mod diagnostics;
pub mod exec;
pub mod gdp;
pub mod impact;
pub mod ingest;
pub mod linalg;
pub mod pipeline;
pub mod prefilter;
pub mod synth;
