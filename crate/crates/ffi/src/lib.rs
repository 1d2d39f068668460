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

//! C ABI over the closnet core.
//!
//! Objects cross the boundary as opaque handles created by a `*_new`
//! function and released by the matching `*_free`. Every fallible call
//! returns a [`ClosnetStatus`]; on failure the message is available from
//! [`closnet_last_error_message`] on the same thread until the next failing
//! call. Panics never unwind into C; they are reported as
//! `CLOSNET_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{self, AssertUnwindSafe};
use std::ptr;

use closnet::layers::{Activation, ClosLayer, InitRule};
use closnet::topology::{ClosSpec, ValidatedClosSpec};
use closnet::torus_sim::{map_to_torus, simulate_inference, TorusConfig};
use closnet::{Error, Matrix};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClosnetStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// The Clos 5-tuple failed validation.
    InvalidSpec = 2,
    /// An argument was out of range (unknown activation, zero batch, ...).
    InvalidArgument = 3,
    /// The spec cannot be mapped onto the requested torus.
    NonConforming = 4,
    /// Unexpected internal failure, including caught panics.
    Internal = 5,
}

/// Inter-stage activation codes accepted by [`closnet_layer_new`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClosnetActivation {
    None = 0,
    Relu = 1,
}

/// A validated Clos spec.
pub struct ClosnetSpec {
    inner: ValidatedClosSpec,
}

/// A Clos layer with `f64` weights.
pub struct ClosnetLayer {
    inner: ClosLayer<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: ClosnetStatus, msg: impl Into<String>) -> ClosnetStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> ClosnetStatus {
    match e {
        Error::InvalidSpec(_) => ClosnetStatus::InvalidSpec,
        Error::NonConforming(_) => ClosnetStatus::NonConforming,
        Error::DimensionMismatch { .. } | Error::Config(_) => ClosnetStatus::InvalidArgument,
        _ => ClosnetStatus::Internal,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), ClosnetStatus>) -> ClosnetStatus {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ClosnetStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(ClosnetStatus::Internal, "internal panic"),
    }
}

fn check(e: Error) -> ClosnetStatus {
    fail(status_of(&e), e.to_string())
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), ClosnetStatus> {
    if p.is_null() {
        Err(fail(ClosnetStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// Message for the most recent failure on this thread, or null if none.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn closnet_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Validates `(inputs, outputs, input_routers, middle_routers,
/// output_routers)` and stores a new handle in `*out`.
///
/// # Safety
/// `out` must be null or valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn closnet_spec_new(
    inputs: usize,
    outputs: usize,
    input_routers: usize,
    middle_routers: usize,
    output_routers: usize,
    out: *mut *mut ClosnetSpec,
) -> ClosnetStatus {
    guard(|| {
        non_null(out, "out")?;
        let spec = ClosSpec::new(
            inputs,
            outputs,
            input_routers,
            middle_routers,
            output_routers,
        );
        let inner = spec.validate().map_err(check)?;
        *out = Box::into_raw(Box::new(ClosnetSpec { inner }));
        Ok(())
    })
}

/// Releases a spec handle. Null is ignored.
///
/// # Safety
/// `spec` must be null or a handle from [`closnet_spec_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn closnet_spec_free(spec: *mut ClosnetSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Stores the layer's weight count `R_m (I + O + R_i R_o)` in `*out`.
///
/// # Safety
/// `spec` must be a live handle; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn closnet_spec_param_count(
    spec: *const ClosnetSpec,
    out: *mut usize,
) -> ClosnetStatus {
    guard(|| {
        non_null(spec, "spec")?;
        non_null(out, "out")?;
        *out = (*spec).inner.param_count();
        Ok(())
    })
}

/// Stores the number of distinct paths between any input and output.
///
/// # Safety
/// `spec` must be a live handle; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn closnet_spec_path_diversity(
    spec: *const ClosnetSpec,
    out: *mut usize,
) -> ClosnetStatus {
    guard(|| {
        non_null(spec, "spec")?;
        non_null(out, "out")?;
        *out = (*spec).inner.path_diversity();
        Ok(())
    })
}

/// Builds a layer with seeded per-block Glorot weights. `activation` is a
/// [`ClosnetActivation`] code.
///
/// # Safety
/// `spec` must be a live handle; `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn closnet_layer_new(
    spec: *const ClosnetSpec,
    seed: u64,
    activation: u32,
    out: *mut *mut ClosnetLayer,
) -> ClosnetStatus {
    guard(|| {
        non_null(spec, "spec")?;
        non_null(out, "out")?;
        let act = match activation {
            0 => Activation::None,
            1 => Activation::Relu,
            other => {
                return Err(fail(
                    ClosnetStatus::InvalidArgument,
                    format!("unknown activation {other}"),
                ))
            }
        };
        let inner = ClosLayer::new(&(*spec).inner, InitRule::BlockGlorot, seed, act);
        *out = Box::into_raw(Box::new(ClosnetLayer { inner }));
        Ok(())
    })
}

/// Releases a layer handle. Null is ignored.
///
/// # Safety
/// `layer` must be null or a handle from [`closnet_layer_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn closnet_layer_free(layer: *mut ClosnetLayer) {
    if !layer.is_null() {
        drop(Box::from_raw(layer));
    }
}

/// Forward pass over `batch` row-major samples: reads `batch * inputs`
/// values from `input` and writes `batch * outputs` values to `output`.
///
/// # Safety
/// `layer` must be a live handle and both buffers must hold the stated
/// number of `double`s.
#[no_mangle]
pub unsafe extern "C" fn closnet_layer_forward(
    layer: *const ClosnetLayer,
    input: *const f64,
    batch: usize,
    output: *mut f64,
) -> ClosnetStatus {
    guard(|| {
        non_null(layer, "layer")?;
        non_null(input, "input")?;
        non_null(output, "output")?;
        if batch == 0 {
            return Err(fail(ClosnetStatus::InvalidArgument, "batch must be >= 1"));
        }
        let l = &(*layer).inner;
        let (n, m) = (l.inputs(), l.outputs());
        let x = std::slice::from_raw_parts(input, batch * n).to_vec();
        let x = Matrix::from_vec(batch, n, x).map_err(check)?;
        let y = l.forward(&x).map_err(check)?;
        std::slice::from_raw_parts_mut(output, batch * m).copy_from_slice(y.as_slice());
        Ok(())
    })
}

/// Runs one sample through the layer mapped onto a `rows x cols` torus
/// with unit hop and MAC costs. Writes `outputs` values to `output` and,
/// when `cycles` is non-null, the simulated cycle count to `*cycles`.
///
/// # Safety
/// `layer` must be a live handle; `input` and `output` must hold `inputs`
/// and `outputs` `double`s; `cycles` must be null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn closnet_simulate_inference(
    layer: *const ClosnetLayer,
    rows: usize,
    cols: usize,
    input: *const f64,
    output: *mut f64,
    cycles: *mut u64,
) -> ClosnetStatus {
    guard(|| {
        non_null(layer, "layer")?;
        non_null(input, "input")?;
        non_null(output, "output")?;
        let l = &(*layer).inner;
        let mapping = map_to_torus(l.spec().spec(), TorusConfig::new(rows, cols)).map_err(check)?;
        let x = std::slice::from_raw_parts(input, l.inputs());
        let sim = simulate_inference(&mapping, l, x).map_err(check)?;
        std::slice::from_raw_parts_mut(output, l.outputs()).copy_from_slice(&sim.output);
        if !cycles.is_null() {
            *cycles = sim.report.total_cycles();
        }
        Ok(())
    })
}
