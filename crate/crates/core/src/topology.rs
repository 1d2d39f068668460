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

//! Clos topology descriptors.
//!
//! A Clos layer is a three-stage cascade. The input stage has one dense block
//! per input router, mapping that router's share of the inputs onto `R_m`
//! outputs. The middle stage has one `R_i x R_o` block per middle router. The
//! output stage has one block per output router, mapping `R_m` inputs onto
//! that router's share of the outputs. Two fixed, weight-free permutations
//! connect the stages.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// The `(I, O, R_i, R_m, R_o)` descriptor of a Clos layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ClosSpec {
    pub inputs: usize,
    pub outputs: usize,
    pub input_routers: usize,
    pub middle_routers: usize,
    pub output_routers: usize,
}

impl ClosSpec {
    pub const fn new(
        inputs: usize,
        outputs: usize,
        input_routers: usize,
        middle_routers: usize,
        output_routers: usize,
    ) -> Self {
        Self {
            inputs,
            outputs,
            input_routers,
            middle_routers,
            output_routers,
        }
    }

    pub fn validate(self) -> Result<ValidatedClosSpec> {
        validate_spec(self)
    }

    pub fn as_array(&self) -> [usize; 5] {
        [
            self.inputs,
            self.outputs,
            self.input_routers,
            self.middle_routers,
            self.output_routers,
        ]
    }
}

impl fmt::Display for ClosSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{},{},{})",
            self.inputs, self.outputs, self.input_routers, self.middle_routers, self.output_routers
        )
    }
}

/// Parses `I,O,Ri,Rm,Ro`, optionally wrapped in parentheses.
impl FromStr for ClosSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim().trim_start_matches('(').trim_end_matches(')');
        let fields = trimmed
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<i64>()
                    .map_err(|_| Error::InvalidSpec(format!("cannot parse field {f:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if fields.len() != 5 {
            return Err(Error::InvalidSpec(format!(
                "expected 5 comma-separated fields, found {}",
                fields.len()
            )));
        }
        if let Some(bad) = fields.iter().find(|&&v| v < 1) {
            return Err(Error::InvalidSpec(format!(
                "fields must be >= 1, found {bad}"
            )));
        }
        let f: Vec<usize> = fields.into_iter().map(|v| v as usize).collect();
        Ok(ClosSpec::new(f[0], f[1], f[2], f[3], f[4]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    Input,
    Middle,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Input => "input",
            Stage::Middle => "middle",
            Stage::Output => "output",
        })
    }
}

/// Block layout of one stage: a `(rows, cols)` pair per router, where rows
/// count the block's inputs and cols its outputs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageShape {
    pub stage: Stage,
    pub blocks: Vec<(usize, usize)>,
}

impl StageShape {
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn in_width(&self) -> usize {
        self.blocks.iter().map(|b| b.0).sum()
    }

    pub fn out_width(&self) -> usize {
        self.blocks.iter().map(|b| b.1).sum()
    }

    pub fn weight_count(&self) -> usize {
        self.blocks.iter().map(|b| b.0 * b.1).sum()
    }

    /// Start offsets of each block's input range, plus the total width.
    pub fn in_offsets(&self) -> Vec<usize> {
        prefix_offsets(self.blocks.iter().map(|b| b.0))
    }

    /// Start offsets of each block's output range, plus the total width.
    pub fn out_offsets(&self) -> Vec<usize> {
        prefix_offsets(self.blocks.iter().map(|b| b.1))
    }
}

fn prefix_offsets(sizes: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut offsets = vec![0];
    let mut acc = 0;
    for s in sizes {
        acc += s;
        offsets.push(acc);
    }
    offsets
}

/// A fixed reordering of activations. `mapping[src] = dst`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ScatterPermutation {
    mapping: Vec<usize>,
}

impl ScatterPermutation {
    pub fn identity(len: usize) -> Self {
        Self {
            mapping: (0..len).collect(),
        }
    }

    /// Builds a permutation from an explicit mapping, checking bijectivity.
    pub fn from_mapping(mapping: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; mapping.len()];
        for &d in &mapping {
            if d >= mapping.len() || seen[d] {
                return Err(Error::InvalidSpec(format!(
                    "mapping is not a bijection (entry {d})"
                )));
            }
            seen[d] = true;
        }
        Ok(Self { mapping })
    }

    /// Permutation sending position `a * cols + b` of an `rows x cols` grid to
    /// position `b * rows + a`.
    pub fn transpose(rows: usize, cols: usize) -> Self {
        let mut mapping = vec![0; rows * cols];
        for a in 0..rows {
            for b in 0..cols {
                mapping[a * cols + b] = b * rows + a;
            }
        }
        Self { mapping }
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    #[inline]
    pub fn dest(&self, src: usize) -> usize {
        self.mapping[src]
    }

    pub fn inverse(&self) -> Self {
        let mut mapping = vec![0; self.mapping.len()];
        for (src, &dst) in self.mapping.iter().enumerate() {
            mapping[dst] = src;
        }
        Self { mapping }
    }

    pub fn is_identity(&self) -> bool {
        self.mapping.iter().enumerate().all(|(i, &d)| i == d)
    }

    /// Scatters `src` into `dst`: `dst[mapping[i]] = src[i]`.
    #[inline]
    pub fn apply<T: Copy>(&self, src: &[T], dst: &mut [T]) {
        debug_assert_eq!(src.len(), self.mapping.len());
        debug_assert_eq!(dst.len(), self.mapping.len());
        for (&v, &d) in src.iter().zip(&self.mapping) {
            dst[d] = v;
        }
    }

    /// Gathers back through the permutation: `dst[i] = src[mapping[i]]`.
    #[inline]
    pub fn apply_inverse<T: Copy>(&self, src: &[T], dst: &mut [T]) {
        debug_assert_eq!(src.len(), self.mapping.len());
        debug_assert_eq!(dst.len(), self.mapping.len());
        for (out, &d) in dst.iter_mut().zip(&self.mapping) {
            *out = src[d];
        }
    }

    pub fn permute_vec<T: Copy + Default>(&self, src: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); src.len()];
        self.apply(src, &mut out);
        out
    }
}

/// A spec that passed validation, with its derived block structure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidatedClosSpec {
    spec: ClosSpec,
    input_partition: Vec<usize>,
    output_partition: Vec<usize>,
    stages: [StageShape; 3],
}

impl ValidatedClosSpec {
    pub fn spec(&self) -> ClosSpec {
        self.spec
    }

    /// Number of inputs owned by each input router.
    pub fn input_partition(&self) -> &[usize] {
        &self.input_partition
    }

    /// Number of outputs owned by each output router.
    pub fn output_partition(&self) -> &[usize] {
        &self.output_partition
    }

    pub fn stages(&self) -> &[StageShape; 3] {
        &self.stages
    }

    pub fn stage(&self, stage: Stage) -> &StageShape {
        match stage {
            Stage::Input => &self.stages[0],
            Stage::Middle => &self.stages[1],
            Stage::Output => &self.stages[2],
        }
    }

    /// Activation widths `[I, R_i*R_m, R_m*R_o, O]` along the cascade.
    pub fn widths(&self) -> [usize; 4] {
        let s = self.spec;
        [
            s.inputs,
            s.input_routers * s.middle_routers,
            s.middle_routers * s.output_routers,
            s.outputs,
        ]
    }

    pub fn param_count(&self) -> usize {
        param_count(self)
    }

    pub fn path_diversity(&self) -> usize {
        path_diversity(self)
    }
}

/// Splits `n` items over `parts` owners; the first `n % parts` get one extra.
pub fn balanced_partition(n: usize, parts: usize) -> Vec<usize> {
    let base = n / parts;
    let extra = n % parts;
    (0..parts).map(|p| base + usize::from(p < extra)).collect()
}

pub fn validate_spec(spec: ClosSpec) -> Result<ValidatedClosSpec> {
    let names = ["I", "O", "R_i", "R_m", "R_o"];
    for (name, v) in names.iter().zip(spec.as_array()) {
        if v == 0 {
            return Err(Error::InvalidSpec(format!("{name} must be >= 1")));
        }
    }
    if spec.input_routers > spec.inputs {
        return Err(Error::InvalidSpec(format!(
            "R_i = {} exceeds I = {}",
            spec.input_routers, spec.inputs
        )));
    }
    if spec.output_routers > spec.outputs {
        return Err(Error::InvalidSpec(format!(
            "R_o = {} exceeds O = {}",
            spec.output_routers, spec.outputs
        )));
    }

    let input_partition = balanced_partition(spec.inputs, spec.input_routers);
    let output_partition = balanced_partition(spec.outputs, spec.output_routers);
    let rm = spec.middle_routers;

    let input_stage = StageShape {
        stage: Stage::Input,
        blocks: input_partition.iter().map(|&n| (n, rm)).collect(),
    };
    let middle_stage = StageShape {
        stage: Stage::Middle,
        blocks: vec![(spec.input_routers, spec.output_routers); rm],
    };
    let output_stage = StageShape {
        stage: Stage::Output,
        blocks: output_partition.iter().map(|&n| (rm, n)).collect(),
    };

    Ok(ValidatedClosSpec {
        spec,
        input_partition,
        output_partition,
        stages: [input_stage, middle_stage, output_stage],
    })
}

/// Exact number of scalar weights over all blocks of all three stages.
pub fn param_count(spec: &ValidatedClosSpec) -> usize {
    spec.stages.iter().map(StageShape::weight_count).sum()
}

/// Number of distinct router paths between any input and output.
pub fn path_diversity(spec: &ValidatedClosSpec) -> usize {
    spec.spec.middle_routers
}

/// The two inter-stage wirings.
///
/// Output `m` of input router `i` feeds input `i` of middle router `m`, and
/// output `o` of middle router `m` feeds input `m` of output router `o`.
pub fn build_permutations(spec: &ValidatedClosSpec) -> (ScatterPermutation, ScatterPermutation) {
    let s = spec.spec;
    (
        ScatterPermutation::transpose(s.input_routers, s.middle_routers),
        ScatterPermutation::transpose(s.middle_routers, s.output_routers),
    )
}

/// One route through the router graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClosPath {
    pub input_router: usize,
    pub middle_router: usize,
    pub output_router: usize,
}

fn block_containing(offsets: &[usize], pos: usize) -> usize {
    // offsets has one more entry than there are blocks
    offsets
        .windows(2)
        .position(|w| w[0] <= pos && pos < w[1])
        .expect("position inside stage width")
}

/// Enumerates every router path from `input_index` to `output_index` by
/// walking the block/permutation graph.
pub fn enumerate_paths(
    spec: &ValidatedClosSpec,
    input_index: usize,
    output_index: usize,
) -> Result<Vec<ClosPath>> {
    let s = spec.spec;
    if input_index >= s.inputs {
        return Err(Error::IndexOutOfRange {
            context: "input neuron",
            index: input_index,
            len: s.inputs,
        });
    }
    if output_index >= s.outputs {
        return Err(Error::IndexOutOfRange {
            context: "output neuron",
            index: output_index,
            len: s.outputs,
        });
    }
    let (p1, p2) = build_permutations(spec);
    let [first, middle, last] = &spec.stages;
    let first_in = first.in_offsets();
    let first_out = first.out_offsets();
    let mid_in = middle.in_offsets();
    let mid_out = middle.out_offsets();
    let last_in = last.in_offsets();
    let last_out = last.out_offsets();

    let mut paths = Vec::new();
    let ir = block_containing(&first_in, input_index);
    for pos1 in first_out[ir]..first_out[ir + 1] {
        let mr = block_containing(&mid_in, p1.dest(pos1));
        for pos2 in mid_out[mr]..mid_out[mr + 1] {
            let or = block_containing(&last_in, p2.dest(pos2));
            if (last_out[or]..last_out[or + 1]).contains(&output_index) {
                paths.push(ClosPath {
                    input_router: ir,
                    middle_router: mr,
                    output_router: or,
                });
            }
        }
    }
    Ok(paths)
}
