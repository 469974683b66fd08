//! Batch toolkit for auditing how recommendation algorithms treat
//! age-defined user groups.
//!
//! The crate covers two experiments over interaction logs with age and genre
//! metadata:
//!
//! - a *preference deviation exploration*: per-user and per-age-group genre
//!   profiles, their in-group and between-group divergences, and a
//!   popularity extension (interaction counts, profile sizes, overall and
//!   same-age profile popularity);
//! - an *RS experiment*: binarize / k-core / split preprocessing, four
//!   recommenders (Random, MostPop, RP3beta, iALS) trained on the General
//!   Set and on the Child Set, top-N generation, ranking accuracy, genre
//!   miscalibration and popularity lift per age group.
//!
//! Nonparametric significance testing (Kruskal-Wallis, pairwise
//! Mann-Whitney U with Holm correction at p < 0.01) annotates every group
//! table. A seeded synthetic-log generator closes the loop by letting the
//! pipeline verify that injected effects are recovered.

pub mod domain;
pub mod error;
pub mod evaluation;
pub mod ingest;
pub mod preprocess;
pub mod profiles;
pub mod recommenders;
pub mod rng;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
