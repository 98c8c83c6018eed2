//! Heat-wave forecasting from gridded satellite summaries.
//!
//! The crate covers the whole pipeline: ingesting a daily cell panel
//! ([`grid_data`]), building crossover gain and classification designs
//! ([`design`]), bagged CART forests with out-of-bag error ([`forest`]),
//! importance and partial dependence ([`diagnostics`]), genetic synthesis of
//! ideal-type predictor profiles ([`ga_synth`]), split conformal prediction
//! sets ([`conformal`]), Manski–Lerman reweighting ([`sampling`]) and a
//! synthetic panel generator with planted signal ([`synthgen`]).

pub mod conformal;
pub mod design;
pub mod diagnostics;
pub mod error;
pub mod forest;
pub mod ga_synth;
pub mod grid_data;
pub mod rng;
pub mod sampling;
pub mod synthgen;
pub mod table;

pub use error::{Error, Result};
pub use forest::{Forest, ForestParams};
pub use grid_data::{CellId, DateRange, Panel, Variable};
pub use table::{Task, TrainingTable};

// Book chapters are compiled and run as doctests.
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/panels.md")]
mod book_panels {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/designs.md")]
mod book_designs {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/forests.md")]
mod book_forests {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/diagnostics.md")]
mod book_diagnostics {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/ideal-types.md")]
mod book_ideal_types {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/conformal.md")]
mod book_conformal {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/reweighting.md")]
mod book_reweighting {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/synthetic.md")]
mod book_synthetic {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
