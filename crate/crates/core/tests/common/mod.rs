//! Shared proptest strategies.

#![allow(dead_code)]

use proptest::prelude::*;
use robust_agg::{AggregatorGrid, InformationStructure};

/// Valid structure with an interior prior. Each agent is informative unless
/// both of its draws collapse onto the prior.
pub fn structure() -> impl Strategy<Value = InformationStructure> {
    (
        0.02f64..0.98,
        0.0f64..=1.0,
        0.0f64..=1.0,
        0.0f64..=1.0,
        0.0f64..=1.0,
    )
        .prop_map(|(mu, u0, u1, v0, v1)| InformationStructure {
            mu,
            a0: mu * u0,
            a1: mu + (1.0 - mu) * u1,
            b0: mu * v0,
            b1: mu + (1.0 - mu) * v1,
        })
}

/// Structure whose posteriors lie strictly on both sides of the prior.
pub fn strict_structure() -> impl Strategy<Value = InformationStructure> {
    (
        0.05f64..0.95,
        0.05f64..0.95,
        0.05f64..0.95,
        0.05f64..0.95,
        0.05f64..0.95,
    )
        .prop_map(|(mu, u0, u1, v0, v1)| InformationStructure {
            mu,
            a0: mu * u0,
            a1: mu + (1.0 - mu) * u1,
            b0: mu * v0,
            b1: mu + (1.0 - mu) * v1,
        })
}

/// Random grid aggregator at resolution `n`.
pub fn grid(n: u32) -> impl Strategy<Value = AggregatorGrid> {
    let side = (n + 1) as usize;
    prop::collection::vec(0.0f64..=1.0, side * side)
        .prop_map(move |v| AggregatorGrid::new(n, v).unwrap())
}
