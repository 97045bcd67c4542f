//! C interface.
//!
//! Graphs are opaque `FppGraph` handles created by `fpp_graph_sample` or
//! `fpp_graph_load` and released with `fpp_graph_free`. Every fallible call
//! returns an `FppStatus`; on failure a message is kept per thread and can be
//! copied out with `fpp_last_error`. Panics never cross the boundary.

use fpp_core::cost::{assign_costs_with_mu, cost_distance, hop_distance, CostedGraph};
use fpp_core::geometry::Cube;
use fpp_core::io::{load_graph, save_graph};
use fpp_core::model::{sample_graph, LDist, ModelParams, TopologyKind, VertexModel};
use fpp_core::theory::{classify_phase, thresholds, Phase, PhaseParams, Regime};
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FppStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    BufferTooSmall = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FppRegime {
    Explosive = 0,
    Polylog = 1,
    Polynomial = 2,
    Linear = 3,
}

/// A phase; `lower == upper` except exactly on a threshold.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FppPhase {
    pub lower: FppRegime,
    pub upper: FppRegime,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FppThresholds {
    pub mu_expl: f64,
    pub mu_log: f64,
    pub mu_pol: f64,
}

/// Model parameters. `alpha` or `beta` may be infinite (threshold kernel,
/// constant `L`). A finite `beta` gives `L` with `P(L <= t) = t^beta` on `[0, 1]`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FppModel {
    pub d: u32,
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    /// Nonzero: integer lattice vertices; zero: uniform (Poisson) points.
    pub lattice: u8,
    /// Nonzero: torus metric; zero: Euclidean.
    pub torus: u8,
}

/// Opaque graph with costs for its current `mu`.
pub struct FppGraph {
    costed: CostedGraph,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn guard(f: impl FnOnce() -> Result<(), (FppStatus, String)>) -> FppStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FppStatus::Ok,
        Ok(Err((s, m))) => {
            set_error(m);
            s
        }
        Err(p) => {
            let m = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {m}"));
            FppStatus::Panic
        }
    }
}

fn invalid<E: std::fmt::Display>(e: E) -> (FppStatus, String) {
    (FppStatus::InvalidArgument, e.to_string())
}

fn null() -> (FppStatus, String) {
    (FppStatus::NullPointer, "null pointer argument".into())
}

unsafe fn graph<'a>(g: *const FppGraph) -> Result<&'a FppGraph, (FppStatus, String)> {
    g.as_ref().ok_or_else(null)
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, (FppStatus, String)> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map(Path::new).map_err(invalid)
}

fn model_params(m: &FppModel) -> ModelParams {
    let mut p = ModelParams::girg(m.d as usize, m.tau, m.alpha, m.mu);
    p.l_dist = if m.beta.is_infinite() { LDist::Constant { value: 1.0 } } else { LDist::Power { beta: m.beta } };
    p.vertex_model = if m.lattice != 0 { VertexModel::Lattice } else { VertexModel::Poisson };
    p.topology = if m.torus != 0 { TopologyKind::Torus } else { TopologyKind::Euclidean };
    p
}

fn regime(r: Regime) -> FppRegime {
    match r {
        Regime::Explosive => FppRegime::Explosive,
        Regime::Polylog => FppRegime::Polylog,
        Regime::Polynomial => FppRegime::Polynomial,
        Regime::Linear => FppRegime::Linear,
    }
}

/// Copies the calling thread's last error message (NUL-terminated, truncated
/// to fit) into `buf` and returns the full message length in bytes.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn fpp_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let k = e.len().min(len - 1);
            std::ptr::copy_nonoverlapping(e.as_ptr(), buf as *mut u8, k);
            *buf.add(k) = 0;
        }
        e.len()
    })
}

/// Phase of `model` in the phase map.
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fpp_classify_phase(model: *const FppModel, out: *mut FppPhase) -> FppStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(null)?;
        let out = out.as_mut().ok_or_else(null)?;
        let par = PhaseParams::new(m.d as usize, m.tau, m.alpha, m.beta, m.mu);
        *out = match classify_phase(&par).map_err(invalid)? {
            Phase::Explosive => FppPhase { lower: FppRegime::Explosive, upper: FppRegime::Explosive },
            Phase::Polylog => FppPhase { lower: FppRegime::Polylog, upper: FppRegime::Polylog },
            Phase::Polynomial => FppPhase { lower: FppRegime::Polynomial, upper: FppRegime::Polynomial },
            Phase::Linear => FppPhase { lower: FppRegime::Linear, upper: FppRegime::Linear },
            Phase::Boundary(a, b) => FppPhase { lower: regime(a), upper: regime(b) },
        };
        Ok(())
    })
}

/// Thresholds `mu_expl`, `mu_log`, `mu_pol` (`mu` is ignored).
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fpp_thresholds(model: *const FppModel, out: *mut FppThresholds) -> FppStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(null)?;
        let out = out.as_mut().ok_or_else(null)?;
        let t = thresholds(&PhaseParams::new(m.d as usize, m.tau, m.alpha, m.beta, m.mu)).map_err(invalid)?;
        *out = FppThresholds { mu_expl: t.mu_expl, mu_log: t.mu_log, mu_pol: t.mu_pol };
        Ok(())
    })
}

/// `out` must be non-null and writable.
unsafe fn boxed(costed: CostedGraph, out: *mut *mut FppGraph) {
    *out = Box::into_raw(Box::new(FppGraph { costed }));
}

/// Samples a realization on `[0, side)^d` and stores a new handle in `*out`.
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fpp_graph_sample(
    model: *const FppModel,
    side: f64,
    seed: u64,
    out: *mut *mut FppGraph,
) -> FppStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        let p = model_params(m);
        let cube = Cube::origin(p.d, side).map_err(invalid)?;
        let g = sample_graph(&p, &cube, None, seed).map_err(invalid)?;
        boxed(assign_costs_with_mu(Arc::new(g), m.mu).map_err(invalid)?, out);
        Ok(())
    })
}

/// Reads a graph file written by `fpp gen` or `fpp_graph_save`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fpp_graph_load(path: *const c_char, out: *mut *mut FppGraph) -> FppStatus {
    guard(|| {
        let p = path_arg(path)?;
        if out.is_null() {
            return Err(null());
        }
        let g = load_graph(p).map_err(|e| (FppStatus::Io, e.to_string()))?;
        let mu = g.params.mu;
        boxed(assign_costs_with_mu(Arc::new(g), mu).map_err(invalid)?, out);
        Ok(())
    })
}

/// # Safety
/// `g` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fpp_graph_save(g: *const FppGraph, path: *const c_char) -> FppStatus {
    guard(|| {
        let g = graph(g)?;
        save_graph(&g.costed.base, path_arg(path)?).map_err(|e| (FppStatus::Io, e.to_string()))
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `g` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fpp_graph_free(g: *mut FppGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// # Safety
/// `g` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fpp_graph_vertex_count(g: *const FppGraph) -> usize {
    g.as_ref().map_or(0, |g| g.costed.n())
}

/// # Safety
/// `g` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fpp_graph_edge_count(g: *const FppGraph) -> usize {
    g.as_ref().map_or(0, |g| g.costed.base.edges.len())
}

/// Weight of vertex `v`.
///
/// # Safety
/// `g` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fpp_graph_weight(g: *const FppGraph, v: usize, out: *mut f64) -> FppStatus {
    guard(|| {
        let g = graph(g)?;
        let out = out.as_mut().ok_or_else(null)?;
        if v >= g.costed.n() {
            return Err((FppStatus::OutOfRange, format!("vertex {v} of {}", g.costed.n())));
        }
        *out = g.costed.base.weight(v);
        Ok(())
    })
}

/// Recomputes edge costs for a new penalty exponent; edges and `L` are kept.
///
/// # Safety
/// `g` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fpp_graph_set_mu(g: *mut FppGraph, mu: f64) -> FppStatus {
    guard(|| {
        let g = g.as_mut().ok_or_else(null)?;
        g.costed = assign_costs_with_mu(g.costed.base.clone(), mu).map_err(invalid)?;
        Ok(())
    })
}

/// Cost distances from `src` to every vertex, written to `out[0..n]`;
/// unreachable vertices get `+inf`. `len` must be at least the vertex count.
///
/// # Safety
/// `g` must be a live handle and `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fpp_cost_distance(g: *const FppGraph, src: usize, out: *mut f64, len: usize) -> FppStatus {
    guard(|| {
        let g = graph(g)?;
        let n = g.costed.n();
        if out.is_null() {
            return Err(null());
        }
        if len < n {
            return Err((FppStatus::BufferTooSmall, format!("need {n} entries, got {len}")));
        }
        if src >= n {
            return Err((FppStatus::OutOfRange, format!("vertex {src} of {n}")));
        }
        let f = cost_distance(&g.costed, src, None).map_err(invalid)?;
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&f.dist);
        Ok(())
    })
}

/// Hop distances from `src`; unreachable vertices get `UINT32_MAX`.
///
/// # Safety
/// `g` must be a live handle and `out` valid for `len` entries.
#[no_mangle]
pub unsafe extern "C" fn fpp_hop_distance(g: *const FppGraph, src: usize, out: *mut u32, len: usize) -> FppStatus {
    guard(|| {
        let g = graph(g)?;
        let n = g.costed.n();
        if out.is_null() {
            return Err(null());
        }
        if len < n {
            return Err((FppStatus::BufferTooSmall, format!("need {n} entries, got {len}")));
        }
        if src >= n {
            return Err((FppStatus::OutOfRange, format!("vertex {src} of {n}")));
        }
        let h = hop_distance(&g.costed, src);
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&h);
        Ok(())
    })
}
