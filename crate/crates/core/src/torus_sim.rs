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

//! Cycle-level simulation of a square Clos layer mapped onto a 2D torus.
//!
//! Every torus node hosts one neuron of each activation vector. The three
//! stages run as three ring-AllReduce phases: one ring per torus row, then
//! one per column, then one per row again. Within a ring every node starts
//! with one value and forwards it to its neighbour each step until the value
//! has visited the whole ring. Each node multiplies every value it sees by
//! the matching weight of its own neuron and commits the products to an
//! accumulator in ascending source order, which is the summation order of
//! [`ClosLayer::forward`], so the simulated outputs are bit-identical.
//!
//! Inference moves values east (row rings) and south (column rings). The
//! backward pass replays the phases in reverse over the opposite links,
//! west and north. Weight gradients are accumulated in-node from values
//! cached during inference.
//!
//! # Cycle model
//!
//! A hop takes `hop_cost` cycles and a multiply-accumulate `mac_cost`
//! cycles. Forwarding is cut-through and overlaps with the MAC unit. In a
//! ring of length `k` a node spends `mac_cost` on its own value and then
//! receives one value per step, so one phase takes
//!
//! ```text
//! mac_cost + (k - 1) * max(hop_cost, mac_cost)
//! ```
//!
//! cycles, and phases are separated by a barrier. During backpropagation a
//! second MAC unit accumulates the `k` local weight gradients in parallel,
//! which never lengthens a phase. [`predicted_cycles`] evaluates this closed
//! form; the event-driven simulator must agree with it.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;

use crate::error::{Error, Result};
use crate::layers::{Activation, ClosLayer};
use crate::scalar::Scalar;
use crate::topology::{ClosSpec, ValidatedClosSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TorusConfig {
    pub rows: usize,
    pub cols: usize,
    pub hop_cost: u64,
    pub mac_cost: u64,
}

impl TorusConfig {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            hop_cost: 1,
            mac_cost: 1,
        }
    }

    pub fn with_costs(mut self, hop_cost: u64, mac_cost: u64) -> Self {
        self.hop_cost = hop_cost;
        self.mac_cost = mac_cost;
        self
    }

    pub fn nodes(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub fn node(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }
}

/// Parses `RxC`, e.g. `2x2`.
impl fmt::Display for TorusConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl std::str::FromStr for TorusConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (r, c) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::Config(format!("torus must look like RxC, got {s:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::Config(format!("bad torus dimension {v:?}")))
        };
        Ok(TorusConfig::new(parse(r)?, parse(c)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    North,
    South,
    East,
    West,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RingAxis {
    /// One ring per torus row.
    Row,
    /// One ring per torus column.
    Column,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhasePlan {
    pub axis: RingAxis,
    pub ring_length: usize,
    pub ring_count: usize,
}

/// Placement of a square-stage Clos layer on a torus.
///
/// `placement[v][k]` is the node hosting entry `k` of activation vector `v`:
/// the layer input, the stage-1 output, the stage-2 output, and the layer
/// output, each indexed the way [`ClosLayer`] orders it. Stage-1 output
/// `(i, m)` of input router `i` sits at node `(i, m)`. Stage-2 output `(m, o)`
/// of middle router `m` sits at node `(o, m)`, i.e. transposed, so that on a
/// 2x2 torus the second and third positions trade places. This keeps every
/// router's inputs and outputs on one ring and every transfer a single hop.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TorusMapping {
    spec: ValidatedClosSpec,
    torus: TorusConfig,
    placement: [Vec<usize>; 4],
    phases: [PhasePlan; 3],
}

impl TorusMapping {
    pub fn spec(&self) -> &ValidatedClosSpec {
        &self.spec
    }

    pub fn torus(&self) -> TorusConfig {
        self.torus
    }

    pub fn placement(&self, vector: usize) -> &[usize] {
        &self.placement[vector]
    }

    pub fn phases(&self) -> &[PhasePlan; 3] {
        &self.phases
    }

    /// Rings of a phase as node lists in ascending ring position.
    fn rings(&self, axis: RingAxis) -> Vec<Vec<usize>> {
        let t = self.torus;
        match axis {
            RingAxis::Row => (0..t.rows)
                .map(|r| (0..t.cols).map(|c| t.node(r, c)).collect())
                .collect(),
            RingAxis::Column => (0..t.cols)
                .map(|c| (0..t.rows).map(|r| t.node(r, c)).collect())
                .collect(),
        }
    }
}

/// Whether the spec has the square-stage shape the torus mapping needs.
pub fn is_conforming(spec: ClosSpec, torus: TorusConfig) -> bool {
    map_to_torus(spec, torus).is_ok()
}

pub fn map_to_torus(spec: ClosSpec, torus: TorusConfig) -> Result<TorusMapping> {
    let vspec = spec.validate()?;
    let n = torus.nodes();
    let s = spec;
    let widths = [
        ("I", s.inputs),
        ("O", s.outputs),
        ("R_i*R_m", s.input_routers * s.middle_routers),
        ("R_m*R_o", s.middle_routers * s.output_routers),
    ];
    for (name, w) in widths {
        if w != n {
            return Err(Error::NonConforming(format!(
                "{name} = {w} but the {}x{} torus has {n} nodes",
                torus.rows, torus.cols
            )));
        }
    }
    if torus.rows != s.input_routers || torus.cols != s.middle_routers {
        return Err(Error::NonConforming(format!(
            "torus {}x{} must have R_i = {} rows and R_m = {} columns",
            torus.rows, torus.cols, s.input_routers, s.middle_routers
        )));
    }
    let (r, c) = (torus.rows, torus.cols);
    let identity: Vec<usize> = (0..n).collect();
    let mut stage2 = vec![0; n];
    for m in 0..c {
        for o in 0..r {
            stage2[m * r + o] = torus.node(o, m);
        }
    }
    let mapping = TorusMapping {
        spec: vspec,
        torus,
        placement: [identity.clone(), identity.clone(), stage2, identity],
        phases: [
            PhasePlan {
                axis: RingAxis::Row,
                ring_length: c,
                ring_count: r,
            },
            PhasePlan {
                axis: RingAxis::Column,
                ring_length: r,
                ring_count: c,
            },
            PhasePlan {
                axis: RingAxis::Row,
                ring_length: c,
                ring_count: r,
            },
        ],
    };
    verify_locality(&mapping)?;
    Ok(mapping)
}

/// Checks that each stage assigns one neuron per node and that every router
/// keeps its inputs and outputs on a single ring of its phase.
fn verify_locality(mapping: &TorusMapping) -> Result<()> {
    let n = mapping.torus.nodes();
    for p in &mapping.placement {
        let mut seen = vec![false; n];
        for &node in p {
            if std::mem::replace(&mut seen[node], true) {
                return Err(Error::NonConforming("placement is not a bijection".into()));
            }
        }
    }
    let s = mapping.spec.spec();
    let (rm, ri, ro) = (s.middle_routers, s.input_routers, s.output_routers);
    let ring_of = |axis: RingAxis, node: usize| match axis {
        RingAxis::Row => node / mapping.torus.cols,
        RingAxis::Column => node % mapping.torus.cols,
    };
    // (phase, router, router's input entries in the previous vector, output entries)
    let in_pos = |v: usize, k: usize| mapping.placement[v][k];
    let mut routers: Vec<(usize, Vec<usize>, Vec<usize>)> = Vec::new();
    let per_in = s.inputs / ri;
    for i in 0..ri {
        routers.push((
            0,
            (0..per_in).map(|j| in_pos(0, i * per_in + j)).collect(),
            (0..rm).map(|m| in_pos(1, i * rm + m)).collect(),
        ));
    }
    for m in 0..rm {
        routers.push((
            1,
            (0..ri).map(|i| in_pos(1, i * rm + m)).collect(),
            (0..ro).map(|o| in_pos(2, m * ro + o)).collect(),
        ));
    }
    let per_out = s.outputs / ro;
    for o in 0..ro {
        routers.push((
            2,
            (0..rm).map(|m| in_pos(2, m * ro + o)).collect(),
            (0..per_out).map(|j| in_pos(3, o * per_out + j)).collect(),
        ));
    }
    for (phase, ins, outs) in routers {
        let axis = mapping.phases[phase].axis;
        let ring = ring_of(axis, outs[0]);
        if ins.iter().chain(&outs).any(|&nd| ring_of(axis, nd) != ring) {
            return Err(Error::NonConforming(format!(
                "a phase-{} router spans more than one ring",
                phase + 1
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pass {
    Forward,
    Backward,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhaseReport {
    pub name: String,
    pub cycles: u64,
    pub hops: u64,
    pub macs: u64,
    /// Transfers per direction: north, south, east, west.
    pub directions: [u64; 4],
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CycleReport {
    pub phases: Vec<PhaseReport>,
}

pub const CYCLE_REPORT_HEADER: [&str; 8] = ["phase", "cycles", "hops", "macs", "n", "s", "e", "w"];

impl CycleReport {
    pub fn total_cycles(&self) -> u64 {
        self.phases.iter().map(|p| p.cycles).sum()
    }

    pub fn total_hops(&self) -> u64 {
        self.phases.iter().map(|p| p.hops).sum()
    }

    pub fn total_macs(&self) -> u64 {
        self.phases.iter().map(|p| p.macs).sum()
    }

    /// Summed transfers: north, south, east, west.
    pub fn direction_histogram(&self) -> [u64; 4] {
        let mut h = [0; 4];
        for p in &self.phases {
            for (a, b) in h.iter_mut().zip(p.directions) {
                *a += b;
            }
        }
        h
    }

    /// One row per phase plus a `total` row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CYCLE_REPORT_HEADER)?;
        let row = |name: &str, c: u64, h: u64, m: u64, d: [u64; 4]| {
            vec![
                name.to_string(),
                c.to_string(),
                h.to_string(),
                m.to_string(),
                d[0].to_string(),
                d[1].to_string(),
                d[2].to_string(),
                d[3].to_string(),
            ]
        };
        for p in &self.phases {
            w.write_record(row(&p.name, p.cycles, p.hops, p.macs, p.directions))?;
        }
        w.write_record(row(
            "total",
            self.total_cycles(),
            self.total_hops(),
            self.total_macs(),
            self.direction_histogram(),
        ))?;
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("ascii csv"))
    }
}

impl fmt::Display for CycleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<18} {:>8} {:>6} {:>6} {:>4} {:>4} {:>4} {:>4}",
            "phase", "cycles", "hops", "macs", "N", "S", "E", "W"
        )?;
        for p in &self.phases {
            let d = p.directions;
            writeln!(
                f,
                "{:<18} {:>8} {:>6} {:>6} {:>4} {:>4} {:>4} {:>4}",
                p.name, p.cycles, p.hops, p.macs, d[0], d[1], d[2], d[3]
            )?;
        }
        let d = self.direction_histogram();
        write!(
            f,
            "{:<18} {:>8} {:>6} {:>6} {:>4} {:>4} {:>4} {:>4}",
            "total",
            self.total_cycles(),
            self.total_hops(),
            self.total_macs(),
            d[0],
            d[1],
            d[2],
            d[3]
        )
    }
}

fn phase_direction(axis: RingAxis, pass: Pass) -> Direction {
    match (axis, pass) {
        (RingAxis::Row, Pass::Forward) => Direction::East,
        (RingAxis::Column, Pass::Forward) => Direction::South,
        (RingAxis::Row, Pass::Backward) => Direction::West,
        (RingAxis::Column, Pass::Backward) => Direction::North,
    }
}

fn direction_slot(d: Direction) -> usize {
    match d {
        Direction::North => 0,
        Direction::South => 1,
        Direction::East => 2,
        Direction::West => 3,
    }
}

/// Cycles of one ring phase under the pipelined model.
pub fn phase_cycles(ring_length: usize, hop_cost: u64, mac_cost: u64) -> u64 {
    mac_cost + (ring_length as u64 - 1) * hop_cost.max(mac_cost)
}

/// Closed-form cycle count of one pass (forward or backward; they coincide).
pub fn predicted_cycles(mapping: &TorusMapping) -> u64 {
    let t = mapping.torus;
    mapping
        .phases
        .iter()
        .map(|p| phase_cycles(p.ring_length, t.hop_cost, t.mac_cost))
        .sum()
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Arrival {
    time: u64,
    seq: u64,
    ring: usize,
    at: usize,
    src: usize,
    hops: usize,
}

struct NodeState<T> {
    busy_until: u64,
    slots: Vec<Option<T>>,
    next_commit: usize,
    acc: T,
}

/// Outcome of one ring phase: per-node accumulators (by node id) and stats.
struct PhaseOutcome<T> {
    acc: Vec<T>,
    finish: u64,
    hops: u64,
    macs: u64,
}

/// Event-driven ring all-gather with in-node multiply-accumulate.
///
/// `values[node]` is the value each node injects; `product(node, ring_pos_of_src, value)`
/// is the MAC operand the receiving node forms. Products are committed in
/// ascending source position.
fn run_ring_phase<T: Scalar>(
    rings: &[Vec<usize>],
    nodes: usize,
    forward_dir: bool,
    hop_cost: u64,
    mac_cost: u64,
    values: &[T],
    product: impl Fn(usize, usize, T) -> T,
) -> PhaseOutcome<T> {
    let mut acc = vec![T::ZERO; nodes];
    let mut queue = BinaryHeap::new();
    let mut seq = 0u64;
    let mut states: Vec<Vec<NodeState<T>>> = rings
        .iter()
        .map(|ring| {
            ring.iter()
                .map(|_| NodeState {
                    busy_until: 0,
                    slots: vec![None; ring.len()],
                    next_commit: 0,
                    acc: T::ZERO,
                })
                .collect()
        })
        .collect();
    for (r, ring) in rings.iter().enumerate() {
        for pos in 0..ring.len() {
            queue.push(Reverse(Arrival {
                time: 0,
                seq,
                ring: r,
                at: pos,
                src: pos,
                hops: 0,
            }));
            seq += 1;
        }
    }
    let (mut hops, mut macs, mut finish) = (0u64, 0u64, 0u64);
    while let Some(Reverse(ev)) = queue.pop() {
        let ring = &rings[ev.ring];
        let k = ring.len();
        let node = ring[ev.at];
        let value = values[ring[ev.src]];
        let st = &mut states[ev.ring][ev.at];

        let start = ev.time.max(st.busy_until);
        st.busy_until = start + mac_cost;
        finish = finish.max(st.busy_until);
        macs += 1;
        st.slots[ev.src] = Some(product(node, ev.src, value));
        while st.next_commit < k {
            match st.slots[st.next_commit] {
                Some(p) => {
                    st.acc += p;
                    st.next_commit += 1;
                }
                None => break,
            }
        }

        if ev.hops + 1 < k {
            let next = if forward_dir {
                (ev.at + 1) % k
            } else {
                (ev.at + k - 1) % k
            };
            hops += 1;
            queue.push(Reverse(Arrival {
                time: ev.time + hop_cost,
                seq,
                ring: ev.ring,
                at: next,
                src: ev.src,
                hops: ev.hops + 1,
            }));
            seq += 1;
        }
    }
    for (r, ring) in rings.iter().enumerate() {
        for (pos, &node) in ring.iter().enumerate() {
            debug_assert_eq!(states[r][pos].next_commit, ring.len());
            acc[node] = states[r][pos].acc;
        }
    }
    PhaseOutcome {
        acc,
        finish,
        hops,
        macs,
    }
}

/// Per-node values recorded by [`simulate_inference`] for the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct SimCache<T> {
    spec: ClosSpec,
    activation: Activation,
    /// Node-indexed values entering phases 1, 2, 3.
    phase_inputs: [Vec<T>; 3],
    /// Node-indexed pre-activation results of phases 1 and 2.
    pre: [Vec<T>; 2],
}

#[derive(Clone, Debug)]
pub struct SimForward<T> {
    pub output: Vec<T>,
    pub report: CycleReport,
    pub cache: SimCache<T>,
}

#[derive(Clone, Debug)]
pub struct SimBackward<T> {
    pub input_grad: Vec<T>,
    /// One tensor per block, in the order of the layer's parameters.
    pub weight_grads: Vec<Vec<T>>,
    pub report: CycleReport,
}

fn check_layer<T: Scalar>(mapping: &TorusMapping, layer: &ClosLayer<T>) -> Result<()> {
    if layer.spec() != &mapping.spec {
        return Err(Error::NonConforming(format!(
            "layer spec {} differs from mapped spec {}",
            layer.spec().spec(),
            mapping.spec.spec()
        )));
    }
    Ok(())
}

fn phase_name(pass: Pass, phase: usize, axis: RingAxis) -> String {
    format!(
        "{}.{}.{}",
        match pass {
            Pass::Forward => "forward",
            Pass::Backward => "backward",
        },
        phase + 1,
        match axis {
            RingAxis::Row => "row",
            RingAxis::Column => "column",
        }
    )
}

fn phase_report(
    mapping: &TorusMapping,
    pass: Pass,
    phase: usize,
    outcome_finish: u64,
    hops: u64,
    macs: u64,
) -> PhaseReport {
    let axis = mapping.phases[phase].axis;
    let mut directions = [0; 4];
    directions[direction_slot(phase_direction(axis, pass))] = hops;
    PhaseReport {
        name: phase_name(pass, phase, axis),
        cycles: outcome_finish,
        hops,
        macs,
        directions,
    }
}

/// Runs the three forward ring phases for one input vector.
pub fn simulate_inference<T: Scalar>(
    mapping: &TorusMapping,
    layer: &ClosLayer<T>,
    input: &[T],
) -> Result<SimForward<T>> {
    check_layer(mapping, layer)?;
    let t = mapping.torus;
    let n = t.nodes();
    if input.len() != n {
        return Err(Error::DimensionMismatch {
            context: "simulator input",
            expected: n,
            found: input.len(),
        });
    }
    let (r, c) = (t.rows, t.cols);
    let [s1, s2, s3] = layer.stages();
    let act = layer.activation();

    // Node-indexed values entering phase 1: node (i, j) holds x[i*c + j].
    let mut v0 = vec![T::ZERO; n];
    for (k, &node) in mapping.placement[0].iter().enumerate() {
        v0[node] = input[k];
    }

    let mut report = CycleReport::default();
    let rows = mapping.rings(RingAxis::Row);
    let cols = mapping.rings(RingAxis::Column);

    // Phase 1: node (i, m) forms output m of input router i from the row's inputs.
    let p1 = run_ring_phase(
        &rows,
        n,
        true,
        t.hop_cost,
        t.mac_cost,
        &v0,
        |node, src, v| {
            let (i, m) = (node / c, node % c);
            v * s1.block(i).get(src, m)
        },
    );
    report.phases.push(phase_report(
        mapping,
        Pass::Forward,
        0,
        p1.finish,
        p1.hops,
        p1.macs,
    ));
    let pre1 = p1.acc;
    let v1: Vec<T> = pre1.iter().map(|&z| act.apply(z)).collect();

    // Phase 2: node (o, m) forms output o of middle router m from column m.
    let p2 = run_ring_phase(
        &cols,
        n,
        true,
        t.hop_cost,
        t.mac_cost,
        &v1,
        |node, src, v| {
            let (o, m) = (node / c, node % c);
            v * s2.block(m).get(src, o)
        },
    );
    report.phases.push(phase_report(
        mapping,
        Pass::Forward,
        1,
        p2.finish,
        p2.hops,
        p2.macs,
    ));
    let pre2 = p2.acc;
    let v2: Vec<T> = pre2.iter().map(|&z| act.apply(z)).collect();

    // Phase 3: node (o, j) forms output j of output router o from row o.
    let p3 = run_ring_phase(
        &rows,
        n,
        true,
        t.hop_cost,
        t.mac_cost,
        &v2,
        |node, src, v| {
            let (o, j) = (node / c, node % c);
            v * s3.block(o).get(src, j)
        },
    );
    report.phases.push(phase_report(
        mapping,
        Pass::Forward,
        2,
        p3.finish,
        p3.hops,
        p3.macs,
    ));

    let output = mapping.placement[3]
        .iter()
        .map(|&node| p3.acc[node])
        .collect();
    debug_assert_eq!(r * c, n);
    Ok(SimForward {
        output,
        report,
        cache: SimCache {
            spec: mapping.spec.spec(),
            activation: act,
            phase_inputs: [v0, v1, v2],
            pre: [pre1, pre2],
        },
    })
}

/// Replays the phases in reverse over west/north links, producing the input
/// gradient and every block's weight gradient for one sample.
pub fn simulate_backward<T: Scalar>(
    mapping: &TorusMapping,
    layer: &ClosLayer<T>,
    cache: Option<&SimCache<T>>,
    upstream: &[T],
) -> Result<SimBackward<T>> {
    check_layer(mapping, layer)?;
    let cache = cache.ok_or(Error::MissingCache)?;
    if cache.spec != mapping.spec.spec() || cache.activation != layer.activation() {
        return Err(Error::MissingCache);
    }
    let t = mapping.torus;
    let n = t.nodes();
    if upstream.len() != n {
        return Err(Error::DimensionMismatch {
            context: "simulator upstream gradient",
            expected: n,
            found: upstream.len(),
        });
    }
    let (r, c) = (t.rows, t.cols);
    let [s1, s2, s3] = layer.stages();
    let act = layer.activation();
    let rows = mapping.rings(RingAxis::Row);
    let cols = mapping.rings(RingAxis::Column);
    let mut report = CycleReport::default();

    let mut g3 = vec![T::ZERO; n];
    for (k, &node) in mapping.placement[3].iter().enumerate() {
        g3[node] = upstream[k];
    }

    // Weight gradients need only node-local data: node (o, j) holds g3 and
    // the row-o stage-3 inputs it saw during inference.
    let mut dw3: Vec<Vec<T>> = (0..r).map(|_| vec![T::ZERO; c * c]).collect();
    for o in 0..r {
        for j in 0..c {
            let g = g3[t.node(o, j)];
            for m in 0..c {
                let a = cache.phase_inputs[2][t.node(o, m)];
                dw3[o][m * c + j] = T::ZERO + a * g;
            }
        }
    }
    // Reverse phase 3: node (o, m) gathers g3 along row o and forms the
    // gradient of stage-3 input m.
    let b3 = run_ring_phase(
        &rows,
        n,
        false,
        t.hop_cost,
        t.mac_cost,
        &g3,
        |node, src, g| {
            let (o, m) = (node / c, node % c);
            s3.block(o).get(m, src) * g
        },
    );
    report.phases.push(phase_report(
        mapping,
        Pass::Backward,
        2,
        b3.finish,
        b3.hops,
        b3.macs + (n * c) as u64,
    ));
    let g2: Vec<T> = b3
        .acc
        .iter()
        .zip(&cache.pre[1])
        .map(|(&g, &z)| act.backprop(z, g))
        .collect();

    let mut dw2: Vec<Vec<T>> = (0..c).map(|_| vec![T::ZERO; r * r]).collect();
    for m in 0..c {
        for o in 0..r {
            let g = g2[t.node(o, m)];
            for i in 0..r {
                let a = cache.phase_inputs[1][t.node(i, m)];
                dw2[m][i * r + o] = T::ZERO + a * g;
            }
        }
    }
    // Reverse phase 2: node (i, m) gathers along column m.
    let b2 = run_ring_phase(
        &cols,
        n,
        false,
        t.hop_cost,
        t.mac_cost,
        &g2,
        |node, src, g| {
            let (i, m) = (node / c, node % c);
            s2.block(m).get(i, src) * g
        },
    );
    report.phases.push(phase_report(
        mapping,
        Pass::Backward,
        1,
        b2.finish,
        b2.hops,
        b2.macs + (n * r) as u64,
    ));
    let g1: Vec<T> = b2
        .acc
        .iter()
        .zip(&cache.pre[0])
        .map(|(&g, &z)| act.backprop(z, g))
        .collect();

    let mut dw1: Vec<Vec<T>> = (0..r).map(|_| vec![T::ZERO; c * c]).collect();
    for i in 0..r {
        for m in 0..c {
            let g = g1[t.node(i, m)];
            for j in 0..c {
                let a = cache.phase_inputs[0][t.node(i, j)];
                dw1[i][j * c + m] = T::ZERO + a * g;
            }
        }
    }
    // Reverse phase 1: node (i, j) gathers along row i.
    let b1 = run_ring_phase(
        &rows,
        n,
        false,
        t.hop_cost,
        t.mac_cost,
        &g1,
        |node, src, g| {
            let (i, j) = (node / c, node % c);
            s1.block(i).get(j, src) * g
        },
    );
    report.phases.push(phase_report(
        mapping,
        Pass::Backward,
        0,
        b1.finish,
        b1.hops,
        b1.macs + (n * c) as u64,
    ));
    let input_grad = mapping.placement[0]
        .iter()
        .map(|&node| b1.acc[node])
        .collect();

    let mut weight_grads = dw1;
    weight_grads.extend(dw2);
    weight_grads.extend(dw3);
    Ok(SimBackward {
        input_grad,
        weight_grads,
        report,
    })
}
