//! Python bindings: ranking with a Python callable or the oracle, the
//! convergence detectors, output repair, and the call-graph clustering.

use std::collections::HashMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use siftrank::convergence::{find_inflection_elbow, find_inflection_gap, CurveError, Inflection, ScoreCurve};
use siftrank::graphrank::{self, CallGraph, FunctionWeight, RankedChain};
use siftrank::rankers::{self, BatchOrdering, BatchRanker, BatchRequest, NoiseKind, NoiseModel, RankerError, TokenUsage};
use siftrank::{Document, InflectionMethod, RankOutcome, Statistic};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Parameters of a ranking run.
#[pyclass(name = "RankConfig", module = "siftrank", from_py_object)]
#[derive(Clone)]
struct PyRankConfig {
    inner: siftrank::RankConfig,
}

#[pymethods]
impl PyRankConfig {
    #[new]
    #[pyo3(signature = (
        batch_size=10, max_trials=50, stability_window=5, statistic="mean", inflection="elbow",
        tolerance=0, concurrency=1, seed=0, retries=3, max_requests=None
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        batch_size: usize,
        max_trials: usize,
        stability_window: usize,
        statistic: &str,
        inflection: &str,
        tolerance: usize,
        concurrency: usize,
        seed: u64,
        retries: u32,
        max_requests: Option<u64>,
    ) -> PyResult<Self> {
        let inner = siftrank::RankConfig {
            batch_size,
            max_trials,
            stability_window,
            statistic: statistic.parse::<Statistic>().map_err(value_err)?,
            inflection_method: inflection.parse::<InflectionMethod>().map_err(value_err)?,
            inflection_tolerance: tolerance,
            concurrency_cap: concurrency,
            rng_seed: seed,
            retry_limit: retries,
            max_requests,
        };
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Batch size 5, otherwise defaults.
    #[staticmethod]
    fn security_preset() -> Self {
        Self {
            inner: siftrank::RankConfig::security_preset(),
        }
    }

    #[getter]
    fn batch_size(&self) -> usize {
        self.inner.batch_size
    }

    #[getter]
    fn max_trials(&self) -> usize {
        self.inner.max_trials
    }

    #[getter]
    fn stability_window(&self) -> usize {
        self.inner.stability_window
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.rng_seed
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "RankConfig(batch_size={}, max_trials={}, stability_window={}, statistic='{}', inflection='{}', seed={})",
            c.batch_size, c.max_trials, c.stability_window, c.statistic, c.inflection_method, c.rng_seed
        )
    }
}

/// Ranker with a known order and optional noise, for simulation.
#[pyclass(name = "OracleRanker", module = "siftrank", skip_from_py_object)]
struct PyOracleRanker {
    inner: rankers::OracleRanker,
}

#[pymethods]
impl PyOracleRanker {
    /// `order` lists document ids from most to least relevant. `noise` is
    /// `"none"`, `"swap"` or `"shuffle"`.
    #[new]
    #[pyo3(signature = (order, noise="none", parameter=0.0, seed=0))]
    fn new(order: Vec<String>, noise: &str, parameter: f64, seed: u64) -> PyResult<Self> {
        let kind = match noise {
            "none" => NoiseKind::None,
            "swap" => NoiseKind::AdjacentSwap,
            "shuffle" => NoiseKind::UniformShuffle,
            other => return Err(PyValueError::new_err(format!("unknown noise kind {other:?}"))),
        };
        let model = NoiseModel::new(kind, parameter, seed).map_err(value_err)?;
        Ok(Self {
            inner: rankers::OracleRanker::new(order, model),
        })
    }
}

/// Adapts a Python callable `(query, [(key, text), ...]) -> list[str] | str`.
/// A string return is treated as raw model output and repaired.
struct CallableRanker {
    func: Py<PyAny>,
}

impl BatchRanker for CallableRanker {
    fn rank_batch(&self, request: &BatchRequest<'_>) -> Result<BatchOrdering, RankerError> {
        Python::attach(|py| {
            let batch: Vec<(String, String)> =
                request.entries.iter().map(|e| (e.key.clone(), e.text.to_string())).collect();
            let out = self
                .func
                .call1(py, (request.query, batch))
                .map_err(|e| RankerError::Transport(format!("python ranker raised: {e}")))?;
            let out = out.bind(py);
            let ordered_keys = if let Ok(raw) = out.extract::<String>() {
                rankers::parse_and_repair(&raw, &request.keys())?
            } else {
                out.extract::<Vec<String>>()
                    .map_err(|_| RankerError::Malformed("ranker must return a list of keys or a string".into()))?
            };
            Ok(BatchOrdering {
                ordered_keys,
                reasoning: None,
                usage: TokenUsage::default(),
            })
        })
    }
}

fn documents(items: &Bound<'_, PyAny>) -> PyResult<Vec<Document>> {
    let mut docs = Vec::new();
    for (i, item) in items.try_iter()?.enumerate() {
        let item = item?;
        let doc = if let Ok(text) = item.extract::<String>() {
            Document::new((i + 1).to_string(), text, i)
        } else if let Ok((id, text)) = item.extract::<(String, String)>() {
            Document::new(id, text, i)
        } else if let Ok(d) = item.cast::<PyDict>() {
            let text: String = d
                .get_item("text")?
                .ok_or_else(|| PyValueError::new_err(format!("document {i} has no 'text'")))?
                .extract()?;
            let id = match d.get_item("id")? {
                Some(v) => v.str()?.to_string(),
                None => (i + 1).to_string(),
            };
            let mut doc = Document::new(id, text, i);
            doc.summary = d.get_item("summary")?.map(|s| s.extract()).transpose()?;
            doc
        } else {
            return Err(PyValueError::new_err(format!(
                "document {i} must be a str, an (id, text) tuple or a dict"
            )));
        };
        docs.push(doc);
    }
    Ok(docs)
}

/// Result of a ranking run.
#[pyclass(name = "RankResult", module = "siftrank", skip_from_py_object)]
struct PyRankResult {
    outcome: RankOutcome,
}

#[pymethods]
impl PyRankResult {
    /// Document ids, best first.
    #[getter]
    fn ids(&self) -> Vec<String> {
        self.outcome.ranked.iter().map(|d| d.id.clone()).collect()
    }

    #[getter]
    fn ranker_calls(&self) -> u64 {
        self.outcome.ranker_calls()
    }

    /// One dict per document: id, final_rank, last_score, iterations_survived, exposures.
    #[getter]
    fn ranked<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.outcome
            .ranked
            .iter()
            .map(|d| {
                let out = PyDict::new(py);
                out.set_item("id", &d.id)?;
                out.set_item("final_rank", d.final_rank)?;
                out.set_item("last_score", d.last_score)?;
                out.set_item("iterations_survived", d.iterations_survived)?;
                out.set_item("exposures", d.exposures)?;
                Ok(out)
            })
            .collect()
    }

    /// One dict per iteration: iteration, corpus_size, convergence_trial, reason, inflection, ranker_calls.
    #[getter]
    fn iterations<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.outcome
            .iterations
            .iter()
            .map(|it| {
                let out = PyDict::new(py);
                out.set_item("iteration", it.iteration)?;
                out.set_item("corpus_size", it.corpus_size)?;
                out.set_item("convergence_trial", it.convergence_trial)?;
                let reason = match it.reason {
                    siftrank::ConvergenceReason::OrderingStable => "ordering_stable",
                    siftrank::ConvergenceReason::InflectionStable => "inflection_stable",
                    siftrank::ConvergenceReason::MaxTrials => "max_trials",
                };
                out.set_item("reason", reason)?;
                out.set_item("inflection", it.inflection)?;
                out.set_item("ranker_calls", it.ranker_calls)?;
                Ok(out)
            })
            .collect()
    }

    fn __len__(&self) -> usize {
        self.outcome.ranked.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "RankResult({} documents, {} iterations, {} ranker calls)",
            self.outcome.ranked.len(),
            self.outcome.iterations.len(),
            self.outcome.ranker_calls()
        )
    }
}

/// Rank `documents` against `query`.
///
/// `documents` holds strings (ids become 1-based positions), `(id, text)`
/// tuples, or dicts with `text` and optional `id`/`summary`. `ranker` is an
/// `OracleRanker` or a callable taking `(query, [(key, text), ...])` and
/// returning the keys best first. The GIL is released while the engine runs.
#[pyfunction]
#[pyo3(signature = (documents, query, ranker, config=None))]
fn rank(
    py: Python<'_>,
    documents: &Bound<'_, PyAny>,
    query: &str,
    ranker: &Bound<'_, PyAny>,
    config: Option<PyRankConfig>,
) -> PyResult<PyRankResult> {
    let docs = self::documents(documents)?;
    let config = config.map(|c| c.inner).unwrap_or_default();
    let query = query.to_string();
    let result = if let Ok(oracle) = ranker.cast::<PyOracleRanker>() {
        let oracle = oracle.borrow().inner.clone();
        py.detach(|| siftrank::run_ranking(&docs, &query, &config, &oracle))
    } else if ranker.is_callable() {
        let callable = CallableRanker { func: ranker.clone().unbind() };
        py.detach(|| siftrank::run_ranking(&docs, &query, &config, &callable))
    } else {
        return Err(PyValueError::new_err("ranker must be an OracleRanker or a callable"));
    };
    match result {
        Ok(outcome) => Ok(PyRankResult { outcome }),
        Err(e @ (siftrank::RankError::Aborted(_) | siftrank::RankError::Invariant(_))) => {
            Err(PyRuntimeError::new_err(e.to_string()))
        }
        Err(e) => Err(value_err(e)),
    }
}

fn curve(values: Vec<f64>) -> PyResult<ScoreCurve> {
    ScoreCurve::new(values).map_err(|e: CurveError| value_err(e))
}

/// Elbow of an ascending score curve as a count of kept items, or `None`
/// when the curve has no curvature.
#[pyfunction]
fn find_elbow(values: Vec<f64>) -> PyResult<Option<usize>> {
    match find_inflection_elbow(&curve(values)?).map_err(value_err)? {
        Inflection::At(i) => Ok(Some(i)),
        Inflection::Degenerate => Ok(None),
    }
}

/// Position of the largest gap in an ascending score curve, as a count of kept items.
#[pyfunction]
fn find_gap(values: Vec<f64>) -> PyResult<usize> {
    Ok(find_inflection_gap(&curve(values)?))
}

/// Recover an ordering of `keys` from raw model output; raises `ValueError`
/// when nothing in the output can be recognized.
#[pyfunction]
fn parse_and_repair(raw: &str, keys: Vec<String>) -> PyResult<Vec<String>> {
    rankers::parse_and_repair(raw, &keys).map_err(value_err)
}

/// Function weights from ranked chains.
///
/// `chains` holds `(chain, rank, iterations)` where `chain` is an id like
/// `"a -> b"` or a list of function names. Returns `{function: weight}`.
#[pyfunction]
#[pyo3(signature = (chains, survivors_only=false))]
fn function_weights(chains: Vec<(Bound<'_, PyAny>, usize, usize)>, survivors_only: bool) -> PyResult<HashMap<String, f64>> {
    let mut ranked = Vec::with_capacity(chains.len());
    for (chain, rank, iterations) in chains {
        let functions = match chain.extract::<String>() {
            Ok(id) => graphrank::parse_chain_id(&id).map_err(value_err)?,
            Err(_) => chain.extract::<Vec<String>>()?,
        };
        ranked.push(RankedChain { functions, rank, iterations });
    }
    Ok(graphrank::compute_function_weights(&ranked, survivors_only)
        .into_iter()
        .map(|w| (w.function, w.weight))
        .collect())
}

/// Ranked clusters over a call graph.
///
/// `edges` are `(caller, callee)` pairs, `weights` maps function to weight.
/// Returns dicts with seed, diameter, diameter_bound, members, mass, density
/// and score, best first.
#[pyfunction]
#[pyo3(signature = (edges, weights, diameters=vec![1, 2, 3]))]
fn clusters<'py>(
    py: Python<'py>,
    edges: Vec<(String, String)>,
    weights: HashMap<String, f64>,
    diameters: Vec<usize>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut graph = CallGraph::from_edges(edges);
    let mut ws: Vec<FunctionWeight> = weights
        .into_iter()
        .map(|(function, weight)| FunctionWeight {
            function,
            best_rank: 1,
            max_iterations: 1,
            weight,
        })
        .collect();
    ws.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.function.cmp(&b.function)));
    for w in &ws {
        graph.add_node(&w.function);
    }
    let ranked = py.detach(|| graphrank::score_clusters(graphrank::build_clusters(&graph, &ws, &diameters)));
    ranked
        .into_iter()
        .map(|c| {
            let out = PyDict::new(py);
            out.set_item("seed", c.seed)?;
            out.set_item("diameter", c.diameter)?;
            out.set_item("diameter_bound", c.diameter_bound)?;
            out.set_item("members", c.members)?;
            out.set_item("mass", c.mass)?;
            out.set_item("density", c.density)?;
            out.set_item("score", c.score)?;
            Ok(out)
        })
        .collect()
}

#[pymodule]
#[pyo3(name = "siftrank")]
pub fn siftrank_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRankConfig>()?;
    m.add_class::<PyOracleRanker>()?;
    m.add_class::<PyRankResult>()?;
    m.add_function(wrap_pyfunction!(rank, m)?)?;
    m.add_function(wrap_pyfunction!(find_elbow, m)?)?;
    m.add_function(wrap_pyfunction!(find_gap, m)?)?;
    m.add_function(wrap_pyfunction!(parse_and_repair, m)?)?;
    m.add_function(wrap_pyfunction!(function_weights, m)?)?;
    m.add_function(wrap_pyfunction!(clusters, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
