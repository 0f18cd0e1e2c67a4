//! Python bindings for the multicast laboratory: experiments,
//! scenario checks, trace verification, and the small stat helpers,
//! exposed as plain functions returning dicts and lists.

use std::path::PathBuf;
use std::str::FromStr;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use amcast_lab::config::{ProtocolKind, RunConfig, WorkloadKind};
use amcast_lab::metrics;
use amcast_lab::runner;
use amcast_lab::scenarios;
use amcast_lab::trace;
use amcast_lab::verify::{Check, VerifyReport};

fn check_dict<'py>(py: Python<'py>, c: &Check) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("ok", c.ok)?;
    d.set_item("violations", c.violations)?;
    d.set_item("witness", c.witness.as_deref())?;
    Ok(d)
}

fn report_dict<'py>(py: Python<'py>, r: &VerifyReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("ok", r.all_ok())?;
    d.set_item("validity", check_dict(py, &r.validity)?)?;
    d.set_item("agreement", check_dict(py, &r.agreement)?)?;
    d.set_item("integrity", check_dict(py, &r.integrity)?)?;
    d.set_item("prefix", check_dict(py, &r.prefix)?)?;
    d.set_item("acyclic", check_dict(py, &r.acyclic)?)?;
    d.set_item("minimality", check_dict(py, &r.minimality)?)?;
    Ok(d)
}

/// Run one experiment configuration and return its results.
///
/// Arguments mirror the run config: protocol (flexcast, skeen,
/// hierarchical), overlay preset or file, clients per group, locality,
/// workload (full, global-only, uniform), stop conditions, seeds, and
/// the flush interval. Returns a dict with the per-seed stats and the
/// CSV text of the result table.
#[pyfunction]
#[pyo3(signature = (
    protocol = "flexcast",
    overlay = "o1",
    matrix = None,
    clients = 4,
    locality = 0.9,
    payment_remote = 0.15,
    workload = "full",
    duration_s = None,
    max_msgs = 5000,
    think_ms = 0.0,
    seeds = None,
    trim = 0.10,
    flush_every = 1000,
    jitter = None,
    client_link_ms = 1.0,
    verify = true,
    out = None,
    trace_out = None,
))]
#[allow(clippy::too_many_arguments)]
fn run_experiment(
    py: Python<'_>,
    protocol: &str,
    overlay: &str,
    matrix: Option<PathBuf>,
    clients: u32,
    locality: f64,
    payment_remote: f64,
    workload: &str,
    duration_s: Option<f64>,
    max_msgs: Option<u64>,
    think_ms: f64,
    seeds: Option<Vec<u64>>,
    trim: f64,
    flush_every: u64,
    jitter: Option<f64>,
    client_link_ms: f64,
    verify: bool,
    out: Option<PathBuf>,
    trace_out: Option<PathBuf>,
) -> PyResult<Py<PyDict>> {
    let cfg = RunConfig {
        protocol: ProtocolKind::from_str(protocol).map_err(PyValueError::new_err)?,
        overlay: overlay.to_string(),
        matrix,
        clients,
        locality,
        payment_remote,
        workload: WorkloadKind::from_str(workload).map_err(PyValueError::new_err)?,
        duration_s,
        max_msgs,
        think_ms,
        seeds: seeds.unwrap_or_else(|| vec![1]),
        trim,
        flush_every,
        jitter,
        client_link_ms,
        verify,
        out,
        trace_out,
    };
    let outcome = runner::run_experiment(&cfg).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;

    if let Some(p) = &cfg.out {
        std::fs::write(p, outcome.csv(&cfg))
            .map_err(|e| PyRuntimeError::new_err(format!("{}: {}", p.display(), e)))?;
    }
    if let Some(base) = &cfg.trace_out {
        for r in &outcome.runs {
            let path = if outcome.runs.len() == 1 {
                base.clone()
            } else {
                let mut s = base.as_os_str().to_owned();
                s.push(format!(".{}", r.seed));
                PathBuf::from(s)
            };
            std::fs::write(&path, trace::write_trace(&r.trace))
                .map_err(|e| PyRuntimeError::new_err(format!("{}: {}", path.display(), e)))?;
        }
    }

    let d = PyDict::new(py);
    d.set_item("overlay", &outcome.overlay_label)?;
    d.set_item("n", outcome.n)?;
    d.set_item("ok", outcome.ok)?;
    d.set_item("csv", outcome.csv(&cfg))?;
    let runs = PyList::empty(py);
    for r in &outcome.runs {
        let rd = PyDict::new(py);
        rd.set_item("seed", r.seed)?;
        rd.set_item("throughput_tps", r.stats.throughput_tps)?;
        rd.set_item("completed", r.completed)?;
        rd.set_item("issued", r.issued)?;
        rd.set_item("peak_history", r.peak_history)?;
        rd.set_item("verify_ok", r.verify_ok)?;
        let ranks = PyList::empty(py);
        for rs in &r.stats.per_rank {
            let kd = PyDict::new(py);
            kd.set_item("rank", rs.rank)?;
            kd.set_item("samples", rs.samples)?;
            kd.set_item("p90_ms", rs.p90_ms)?;
            kd.set_item("p95_ms", rs.p95_ms)?;
            kd.set_item("p99_ms", rs.p99_ms)?;
            ranks.append(kd)?;
        }
        rd.set_item("per_rank", ranks)?;
        runs.append(rd)?;
    }
    d.set_item("runs", runs)?;
    Ok(d.unbind())
}

/// Run the fixed hand-checkable scenarios; one dict per scenario with
/// its pass flag and detail line.
#[pyfunction]
fn run_scenarios(py: Python<'_>) -> PyResult<Py<PyList>> {
    let reports = scenarios::run_all();
    let l = PyList::empty(py);
    for r in &reports {
        let d = PyDict::new(py);
        d.set_item("name", r.name)?;
        d.set_item("ok", r.ok)?;
        d.set_item("detail", &r.detail)?;
        l.append(d)?;
    }
    Ok(l.unbind())
}

/// Check a trace text against the atomic multicast properties.
/// `n` overrides the group count inferred from the trace.
#[pyfunction]
#[pyo3(signature = (text, n = None))]
fn verify_trace(py: Python<'_>, text: &str, n: Option<u8>) -> PyResult<Py<PyDict>> {
    let events = trace::parse_trace(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    if events.is_empty() {
        return Err(PyValueError::new_err("empty trace"));
    }
    let n = n.unwrap_or_else(|| runner::trace_group_count(&events));
    let report = amcast_lab::verify::verify(&events, n);
    Ok(report_dict(py, &report)?.unbind())
}

/// Built-in overlay presets accepted by run_experiment.
#[pyfunction]
fn presets(py: Python<'_>) -> PyResult<Py<PyList>> {
    let l = PyList::empty(py);
    for (name, kind) in [
        ("o1", "chain"),
        ("o2", "chain"),
        ("t1", "tree"),
        ("t2", "tree"),
        ("t3", "tree"),
    ] {
        let d = PyDict::new(py);
        d.set_item("name", name)?;
        d.set_item("kind", kind)?;
        l.append(d)?;
    }
    Ok(l.unbind())
}

/// Nearest-rank percentile of a sample, p in [0, 100].
#[pyfunction]
fn percentile(values: Vec<f64>, p: f64) -> PyResult<f64> {
    if values.is_empty() {
        return Err(PyValueError::new_err("empty sample"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(PyValueError::new_err(format!(
            "percentile {} outside [0, 100]",
            p
        )));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(PyValueError::new_err("sample contains NaN"));
    }
    let mut sorted = values;
    sorted.sort_by(f64::total_cmp);
    Ok(metrics::percentile(&sorted, p))
}

#[pymodule]
fn amcast_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(verify_trace, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(percentile, m)?)?;
    Ok(())
}
