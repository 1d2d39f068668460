// Copyright 2026 The closnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Clos-topology block-sparse fully-connected layers.
//!
//! A dense `I x O` layer is replaced by a cascade of three block-diagonal
//! matrices joined by fixed permutations, following the wiring of a
//! three-stage Clos switching network. The crate provides the topology
//! arithmetic, trainable layers (Clos plus dense, low-rank, and pruned
//! baselines), a small SGD training engine, MNIST ingestion, and a
//! cycle-level simulator of the layer mapped onto a 2D torus of processing
//! nodes.

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod layers;
pub mod matrix;
pub mod scalar;
pub mod topology;
pub mod torus_sim;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;
