//! Python bindings: sources, functions, partitions, chain entropies, rates
//! and protocol runs. Reports come back as plain dicts and lists.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde_json::Value;

use ttcomp_core::descriptions::{self, lemma_partition as core_lemma_partition};
use ttcomp_core::entropy;
use ttcomp_core::figures;
use ttcomp_core::model::{self, FunctionKind};
use ttcomp_core::rates::{self, CutFamily};
use ttcomp_core::sim::{self, TraceDetail};
use ttcomp_core::ensembles::Ensemble;
use ttcomp_core::{Label, Limits, Partition, ShiftPolicy, SimConfig, SourceModel, TypeThresholdFunction};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_bound_py_any(py)?,
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_bound_py_any(py)?,
            (_, Some(u)) => u.into_bound_py_any(py)?,
            _ => n.as_f64().unwrap_or(f64::NAN).into_bound_py_any(py)?,
        },
        Value::String(s) => s.into_bound_py_any(py)?,
        Value::Array(items) => {
            let list = PyList::empty(py);
            for x in items {
                list.append(to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let d = PyDict::new(py);
            for (k, x) in map {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn serialize<'py, T: serde::Serialize>(py: Python<'py>, x: &T) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(x).map_err(err)?)
}

fn label_to_py<'py>(py: Python<'py>, l: &Label) -> PyResult<Bound<'py, PyAny>> {
    match l {
        Label::Int(v) => v.into_bound_py_any(py),
        Label::Set(s) => s.clone().into_bound_py_any(py),
        Label::Ratio { sum, count } => (*sum, *count).into_bound_py_any(py),
    }
}

/// Independent per-sensor PMFs over `[0:q-1]`.
#[pyclass(name = "SourceModel", module = "ttcomp", frozen)]
struct PySource {
    inner: SourceModel,
}

#[pymethods]
impl PySource {
    #[new]
    fn new(q: usize, pmfs: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PySource { inner: SourceModel::new(q, pmfs).map_err(err)? })
    }

    #[staticmethod]
    fn iid(m: usize, pmf: Vec<f64>) -> PyResult<Self> {
        Ok(PySource { inner: SourceModel::iid(m, pmf).map_err(err)? })
    }

    #[staticmethod]
    fn bernoulli_iid(m: usize, beta: f64) -> PyResult<Self> {
        Ok(PySource { inner: SourceModel::bernoulli_iid(m, beta).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PySource { inner: serde_json::from_str(text).map_err(err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(err)
    }

    #[getter]
    fn q(&self) -> usize {
        self.inner.q()
    }

    #[getter]
    fn num_sensors(&self) -> usize {
        self.inner.num_sensors()
    }

    fn pmfs(&self) -> Vec<Vec<f64>> {
        self.inner.pmfs().to_vec()
    }

    fn indicator_probs(&self, symbol: usize) -> Vec<f64> {
        self.inner.indicator_probs(symbol)
    }

    fn __repr__(&self) -> String {
        format!("SourceModel(q={}, M={})", self.inner.q(), self.inner.num_sensors())
    }
}

/// Threshold vector plus a reducer over the clipped box.
#[pyclass(name = "TypeThresholdFunction", module = "ttcomp", frozen)]
struct PyFunction {
    inner: TypeThresholdFunction,
}

#[pymethods]
impl PyFunction {
    /// `kind` is `maximum`, `distinct_count`, `avg_top:<l>`,
    /// `frequency_indicator:<l>` or `heavy_hitters:<T>`.
    #[staticmethod]
    fn standard(kind: &str, q: usize) -> PyResult<Self> {
        let k = FunctionKind::parse(kind).map_err(err)?;
        Ok(PyFunction { inner: TypeThresholdFunction::standard(k, q).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyFunction { inner: serde_json::from_str(text).map_err(err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(err)
    }

    #[getter]
    fn q(&self) -> usize {
        self.inner.q()
    }

    #[getter]
    fn theta(&self) -> Vec<usize> {
        self.inner.theta().to_vec()
    }

    fn evaluate<'py>(&self, py: Python<'py>, symbols: Vec<usize>) -> PyResult<Bound<'py, PyAny>> {
        let l = self.inner.evaluate(&symbols).map_err(err)?;
        label_to_py(py, &l)
    }

    fn evaluate_clipped<'py>(&self, py: Python<'py>, clipped: Vec<usize>) -> PyResult<Bound<'py, PyAny>> {
        let l = self.inner.evaluate_clipped(&clipped).map_err(err)?;
        label_to_py(py, l)
    }

    fn __repr__(&self) -> String {
        format!("TypeThresholdFunction(q={}, theta={:?})", self.inner.q(), self.inner.theta())
    }
}

/// Ordered partition of the sensors; groups use 1-based indices.
#[pyclass(name = "Partition", module = "ttcomp", frozen)]
struct PyPartition {
    inner: Partition,
}

#[pymethods]
impl PyPartition {
    #[new]
    fn new(groups: Vec<Vec<usize>>) -> PyResult<Self> {
        Ok(PyPartition { inner: Partition::from_one_based(groups).map_err(err)? })
    }

    /// Consecutive groups of size `a` (the last may be shorter).
    #[staticmethod]
    fn a_partition(m: usize, a: usize) -> PyResult<Self> {
        Ok(PyPartition { inner: descriptions::a_partition(m, a).map_err(err)? })
    }

    #[staticmethod]
    fn lemma(p: Vec<f64>, theta: usize) -> PyResult<Self> {
        Ok(PyPartition { inner: core_lemma_partition(&p, theta).map_err(err)?.partition })
    }

    #[getter]
    fn groups(&self) -> Vec<Vec<usize>> {
        self.inner.to_one_based()
    }

    #[getter]
    fn num_groups(&self) -> usize {
        self.inner.num_groups()
    }

    #[getter]
    fn num_sensors(&self) -> usize {
        self.inner.num_sensors()
    }

    fn __repr__(&self) -> String {
        format!("Partition({})", self.inner.describe())
    }
}

fn collect_partitions(parts: &[PyRef<'_, PyPartition>]) -> Vec<Partition> {
    parts.iter().map(|p| p.inner.clone()).collect()
}

/// `None` / `"none"`, `"uniform"` or an integer rotation.
fn shift_policy(shift: Option<&Bound<'_, PyAny>>) -> PyResult<ShiftPolicy> {
    let Some(s) = shift else {
        return Ok(ShiftPolicy::None);
    };
    if s.is_none() {
        return Ok(ShiftPolicy::None);
    }
    if let Ok(d) = s.extract::<usize>() {
        return Ok(ShiftPolicy::Fixed { d });
    }
    match s.extract::<String>()?.as_str() {
        "none" => Ok(ShiftPolicy::None),
        "uniform" => Ok(ShiftPolicy::UniformRandom),
        other => Err(PyValueError::new_err(format!("unknown shift `{other}`"))),
    }
}

#[pyfunction]
fn type_vector(symbols: Vec<usize>, q: usize) -> PyResult<Vec<usize>> {
    Ok(model::type_vector(&symbols, q).map_err(err)?.counts().to_vec())
}

/// Exact law of the clipped type vector as `{tuple: probability}`.
#[pyfunction]
#[pyo3(signature = (src, theta, initial=None))]
fn clipped_type_distribution<'py>(
    py: Python<'py>,
    src: &PySource,
    theta: Vec<usize>,
    initial: Option<Vec<usize>>,
) -> PyResult<Bound<'py, PyDict>> {
    let dist = model::clipped_type_distribution(&src.inner, &theta, initial.as_deref(), Limits::default())
        .map_err(err)?;
    let d = PyDict::new(py);
    for (b, p) in dist.iter() {
        d.set_item(pyo3::types::PyTuple::new(py, b)?, p)?;
    }
    Ok(d)
}

/// `H(f(S))`, or `H(f(S) | S_cond)` with 0-based sensor indices.
#[pyfunction]
#[pyo3(signature = (f, src, conditioning=None))]
fn function_entropy(f: &PyFunction, src: &PySource, conditioning: Option<Vec<usize>>) -> PyResult<f64> {
    model::function_entropy(&f.inner, &src.inner, conditioning.as_deref(), Limits::default()).map_err(err)
}

/// Chain entropy of symbol `l` under a rotation `shift` of the groups:
/// `{"per_step": [...], "total": ..., "bound": ...}`.
#[pyfunction]
#[pyo3(signature = (src, l, theta, partition, shift=0))]
fn chain_entropy<'py>(
    py: Python<'py>,
    src: &PySource,
    l: usize,
    theta: usize,
    partition: &PyPartition,
    shift: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let law = descriptions::chain_law(&src.inner, l, theta, &partition.inner, shift).map_err(err)?;
    let e = entropy::chain_entropy(&law);
    let d = PyDict::new(py);
    d.set_item("per_step", e.per_step)?;
    d.set_item("total", e.total)?;
    d.set_item("bound", e.bound)?;
    d.set_item("state_pmfs", law.state_pmfs().to_vec())?;
    Ok(d.into_any())
}

/// Description entropy of the binary maximum for Bernoulli(beta) sources
/// and the a-partition.
#[pyfunction]
fn binary_max_entropy_closed_form(m: usize, beta: f64, a: usize) -> PyResult<f64> {
    entropy::binary_max_entropy_closed_form(m, beta, a, entropy::ClosedFormVariant::Consistent).map_err(err)
}

#[pyfunction]
fn poisson_binomial_pmf(p: Vec<f64>) -> Vec<f64> {
    entropy::poisson_binomial_pmf(&p)
}

#[pyfunction]
fn entropy_bits(pmf: Vec<f64>) -> f64 {
    entropy::entropy_bits(&pmf)
}

#[pyfunction]
fn lemma_bound(theta: usize) -> f64 {
    entropy::lemma_bound(theta)
}

#[pyfunction]
fn cf_rate(group_size: usize, power: f64) -> PyResult<f64> {
    rates::cf_rate(group_size, power).map_err(err)
}

#[pyfunction]
fn mrgb_rate_finite_field<'py>(
    py: Python<'py>,
    f: &PyFunction,
    src: &PySource,
    partitions: Vec<PyRef<'py, PyPartition>>,
    capacity: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let r = rates::mrgb_rate_finite_field(&f.inner, &src.inner, &collect_partitions(&partitions), capacity).map_err(err)?;
    serialize(py, &r)
}

/// Gaussian group-broadcast rate with equal time per round.
#[pyfunction]
#[pyo3(signature = (f, src, partitions, power, shift=None))]
fn mrgb_rate_gaussian<'py>(
    py: Python<'py>,
    f: &PyFunction,
    src: &PySource,
    partitions: Vec<PyRef<'py, PyPartition>>,
    power: f64,
    shift: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let parts = collect_partitions(&partitions);
    let policy = match shift {
        None => ShiftPolicy::UniformRandom,
        s => shift_policy(s)?,
    };
    let alloc = rates::GaussianAllocation::equal_time(&parts, f.inner.theta(), power).map_err(err)?;
    let r = rates::mrgb_rate_gaussian(&f.inner, &src.inner, &parts, power, &alloc, policy).map_err(err)?;
    serialize(py, &r)
}

#[pyfunction]
#[pyo3(signature = (f, src, power, j_min=None))]
fn mrgb_rate_gaussian_corollary<'py>(
    py: Python<'py>,
    f: &PyFunction,
    src: &PySource,
    power: f64,
    j_min: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let j = match j_min {
        Some(j) => j,
        None => rates::lemma_j_min(&f.inner, &src.inner).map_err(err)?,
    };
    serialize(py, &rates::mrgb_rate_gaussian_corollary(&f.inner, &src.inner, power, j).map_err(err)?)
}

#[pyfunction]
fn irr_upper_bound<'py>(py: Python<'py>, i_total: f64, m: usize, power: f64) -> PyResult<Bound<'py, PyAny>> {
    serialize(py, &rates::irr_upper_bound(i_total, m, power).map_err(err)?)
}

#[pyfunction]
fn binary_max_irr_denominator(m: usize, alpha: f64) -> PyResult<f64> {
    rates::binary_max_irr_denominator(m, alpha).map_err(err)
}

/// Cut-set upper bound; `cuts` lists 0-based sensor sets, `None` uses the
/// default family.
#[pyfunction]
#[pyo3(signature = (f, src, power, cuts=None))]
fn cutset_bound_gaussian<'py>(
    py: Python<'py>,
    f: &PyFunction,
    src: &PySource,
    power: f64,
    cuts: Option<Vec<Vec<usize>>>,
) -> PyResult<Bound<'py, PyAny>> {
    let family = cuts.map(CutFamily::Custom).unwrap_or_default();
    let r = rates::cutset_bound_gaussian(&f.inner, &src.inner, power, &rates::default_rho_grid(), &family)
        .map_err(err)?;
    serialize(py, &r)
}

/// Runs the protocol over `k` source columns; returns the trace summary.
#[pyfunction]
#[pyo3(signature = (f, src, partitions, k, seed=0, shift=None, early_termination=true, binary_search=false))]
#[allow(clippy::too_many_arguments)]
fn run_protocol<'py>(
    py: Python<'py>,
    f: &PyFunction,
    src: &PySource,
    partitions: Vec<PyRef<'py, PyPartition>>,
    k: usize,
    seed: u64,
    shift: Option<&Bound<'py, PyAny>>,
    early_termination: bool,
    binary_search: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = SimConfig {
        function: f.inner.clone(),
        source: src.inner.clone(),
        partitions: collect_partitions(&partitions),
        shift: shift_policy(shift)?,
        k,
        seed,
        early_termination,
        detail: TraceDetail::Summary,
    };
    let trace = py
        .detach(|| if binary_search { sim::run_binary_search_max(&cfg) } else { sim::run_protocol(&cfg) })
        .map_err(err)?;
    serialize(py, &trace.summary())
}

/// Stage partitions for the binary-search maximum.
#[pyfunction]
fn binary_search_stage_partitions(src: &PySource) -> PyResult<Vec<PyPartition>> {
    Ok(descriptions::binary_search_stage_partitions(&src.inner)
        .map_err(err)?
        .into_iter()
        .map(|inner| PyPartition { inner })
        .collect())
}

fn parse_ensemble(name: &str, c: Option<f64>) -> PyResult<Ensemble> {
    match (name, c) {
        ("inverse_m", _) => Ok(Ensemble::InverseM),
        ("inverse_sqrt_m", _) => Ok(Ensemble::InverseSqrtM),
        ("constant", Some(c)) => Ok(Ensemble::Constant { c }),
        _ => Err(PyValueError::new_err("ensemble is inverse_m, inverse_sqrt_m or constant with c")),
    }
}

#[pyfunction]
#[pyo3(signature = (m, ensemble="inverse_sqrt_m", c=None))]
fn figure3_row<'py>(py: Python<'py>, m: usize, ensemble: &str, c: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    serialize(py, &figures::figure3_row(m, parse_ensemble(ensemble, c)?).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (m, power=100.0, ensemble="inverse_sqrt_m", c=None))]
fn figure4_row<'py>(
    py: Python<'py>,
    m: usize,
    power: f64,
    ensemble: &str,
    c: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    serialize(py, &figures::figure4_row(m, parse_ensemble(ensemble, c)?, power).map_err(err)?)
}

#[pymodule]
fn ttcomp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySource>()?;
    m.add_class::<PyFunction>()?;
    m.add_class::<PyPartition>()?;
    m.add_function(wrap_pyfunction!(type_vector, m)?)?;
    m.add_function(wrap_pyfunction!(clipped_type_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(function_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(chain_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(binary_max_entropy_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(poisson_binomial_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(entropy_bits, m)?)?;
    m.add_function(wrap_pyfunction!(lemma_bound, m)?)?;
    m.add_function(wrap_pyfunction!(cf_rate, m)?)?;
    m.add_function(wrap_pyfunction!(mrgb_rate_finite_field, m)?)?;
    m.add_function(wrap_pyfunction!(mrgb_rate_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(mrgb_rate_gaussian_corollary, m)?)?;
    m.add_function(wrap_pyfunction!(irr_upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(binary_max_irr_denominator, m)?)?;
    m.add_function(wrap_pyfunction!(cutset_bound_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(run_protocol, m)?)?;
    m.add_function(wrap_pyfunction!(binary_search_stage_partitions, m)?)?;
    m.add_function(wrap_pyfunction!(figure3_row, m)?)?;
    m.add_function(wrap_pyfunction!(figure4_row, m)?)?;
    Ok(())
}
