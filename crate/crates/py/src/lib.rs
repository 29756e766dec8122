//! Python bindings: metrics, marker serialization, tier aggregation, the stub
//! author, the baseline classifier and an event-sourced pipeline handle.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

use hscn_core::author::{stub_generate as core_stub_generate, GenerationRequest};
use hscn_core::corpus::{parse_stream as core_parse, HsCnPair, MarkerFormat, PairId, Source};
use hscn_core::metrics::{self, NoveltyIndex, NoveltyVariant, RRConfig};
use hscn_core::orchestrator::{self as orch, Action, ExpertDecision, PipelineConfig, ReportOptions, ReviewerMode, Sampling};
use hscn_core::review::{self, BaselineConfig, ConfusionMatrix, Label, LabeledPair, Provenance, ReviewScore, Score};
use hscn_core::text::NormalizationPolicy;

create_exception!(hscn, HscnError, PyException, "Raised for any pipeline error; args are (code, message).");

fn err(e: hscn_core::Error) -> PyErr {
    HscnError::new_err((e.code(), e.to_string()))
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| err(e.into()))?;
    to_py(py, &v)
}

fn policy(case_sensitive: bool) -> NormalizationPolicy {
    if case_sensitive {
        NormalizationPolicy::case_sensitive()
    } else {
        NormalizationPolicy::default()
    }
}

fn variant(name: &str) -> PyResult<NoveltyVariant> {
    match name {
        "max" => Ok(NoveltyVariant::Max),
        "mean" => Ok(NoveltyVariant::Mean),
        other => Err(err(hscn_core::Error::InvalidConfig(format!("unknown novelty variant {other:?}")))),
    }
}

fn mode(name: &str) -> PyResult<ReviewerMode> {
    name.parse().map_err(err)
}

/// Repetition rate (x100) of a list of CNs.
#[pyfunction]
#[pyo3(signature = (cns, window_words=1000, max_n=4, shuffles=5, seed=0, case_sensitive=false))]
fn repetition_rate(
    cns: Vec<String>,
    window_words: usize,
    max_n: usize,
    shuffles: usize,
    seed: u64,
    case_sensitive: bool,
) -> PyResult<f64> {
    let cfg = RRConfig {
        window_words,
        window_stride: window_words,
        max_n,
        shuffles,
        rng_seed: seed,
    };
    metrics::repetition_rate(&cns, &cfg, &policy(case_sensitive)).map_err(err)
}

#[pyfunction]
fn novelty(candidate: &str, training: Vec<String>) -> PyResult<f64> {
    metrics::novelty(candidate, &training, &NormalizationPolicy::default()).map_err(err)
}

/// Mean novelty of `candidates`, or None for an empty list.
#[pyfunction]
#[pyo3(signature = (candidates, training, variant_name="max"))]
fn corpus_novelty(candidates: Vec<String>, training: Vec<String>, variant_name: &str) -> PyResult<Option<f64>> {
    let index = NoveltyIndex::new(&training, NormalizationPolicy::default()).map_err(err)?;
    Ok(index.corpus_novelty(&candidates, variant(variant_name)?))
}

#[pyfunction]
fn corpus_bleu(candidates: Vec<String>, references: Vec<Vec<String>>) -> PyResult<f64> {
    metrics::corpus_bleu(&candidates, &references, &NormalizationPolicy::default()).map_err(err)
}

#[pyfunction]
fn edit_rate(machine_cn: &str, postedited_cn: &str) -> PyResult<f64> {
    metrics::edit_rate(machine_cn, postedited_cn, &NormalizationPolicy::default()).map_err(err)
}

#[pyfunction]
fn serialize_pair(hs: &str, cn: &str) -> PyResult<String> {
    MarkerFormat::default().serialize_texts(hs, cn).map_err(err)
}

/// Returns `(blocks, fragments)`: blocks are `(hs or None, cn)` tuples,
/// fragments are `(offset, text, reason)` tuples.
#[pyfunction]
fn parse_stream<'py>(py: Python<'py>, raw: &str) -> PyResult<(Vec<(Option<String>, String)>, Bound<'py, PyAny>)> {
    let parsed = core_parse(raw, &MarkerFormat::default());
    let fragments: Vec<(usize, String, Value)> = parsed
        .fragments
        .iter()
        .map(|f| (f.offset, f.text.clone(), serde_json::to_value(f.reason).unwrap_or(Value::Null)))
        .collect();
    let blocks = parsed.blocks.into_iter().map(|b| (b.hs, b.cn)).collect();
    Ok((blocks, to_dict(py, &fragments)?))
}

/// Tier of one pair from `(annotator, score, bad_hs)` judgments.
#[pyfunction]
fn aggregate(judgments: Vec<(String, u8, bool)>) -> PyResult<&'static str> {
    let scores = judgments
        .into_iter()
        .map(|(annotator, score, bad_hs)| {
            Ok(ReviewScore {
                pair_id: PairId::new("pair"),
                annotator_id: annotator,
                score: Score::new(score)?,
                bad_hs,
                elapsed_ms: 0,
            })
        })
        .collect::<hscn_core::Result<Vec<_>>>()
        .map_err(err)?;
    review::aggregate(&scores).map(|t| t.as_str()).map_err(err)
}

#[pyfunction]
fn tier_report<'py>(
    py: Python<'py>,
    geq2: usize,
    geq1_only: usize,
    discarded: usize,
    bad_hs: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let counts = review::TierCounts {
        geq2,
        geq1_only,
        discarded,
        bad_hs,
        pending: 0,
    };
    to_dict(py, &counts.report())
}

#[pyfunction]
#[pyo3(signature = (rate, seconds_per_judgment=35.0, judgments_per_pair=2.0))]
fn crowd_time_per_pair(rate: f64, seconds_per_judgment: f64, judgments_per_pair: f64) -> Option<f64> {
    orch::crowd_time_per_pair(
        rate,
        &orch::CrowdCost {
            seconds_per_judgment,
            judgments_per_pair,
        },
    )
}

/// Precision, recall, F1 and accuracy with `True` (suitable) as positive.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, gold: Vec<bool>, predicted: Vec<bool>) -> PyResult<Bound<'py, PyAny>> {
    if gold.is_empty() {
        return Err(err(hscn_core::Error::EmptyTestSet));
    }
    let eval: review::ClassifierEval = ConfusionMatrix::from_predictions(&gold, &predicted).into();
    to_dict(py, &eval)
}

#[pyfunction]
#[pyo3(signature = (hs, seed=0, n_samples=1, max_new_tokens=128))]
fn stub_generate(hs: &str, seed: u64, n_samples: usize, max_new_tokens: usize) -> PyResult<String> {
    let req = GenerationRequest {
        n_samples,
        max_new_tokens,
        ..GenerationRequest::for_hs(hs, &MarkerFormat::default()).map_err(err)?
    };
    req.validate().map_err(err)?;
    Ok(core_stub_generate(&req, seed))
}

/// Hashed-feature logistic regression over (hs, cn) pairs.
#[pyclass(module = "hscn")]
struct BaselineScorer {
    inner: review::BaselineScorer,
}

#[pymethods]
impl BaselineScorer {
    #[staticmethod]
    #[pyo3(signature = (hs, cn, labels, seed=0, epochs=15))]
    fn train(hs: Vec<String>, cn: Vec<String>, labels: Vec<bool>, seed: u64, epochs: usize) -> PyResult<Self> {
        if hs.len() != cn.len() || hs.len() != labels.len() {
            return Err(err(hscn_core::Error::InvalidConfig("hs, cn and labels differ in length".into())));
        }
        let data: Vec<LabeledPair> = hs
            .into_iter()
            .zip(cn)
            .zip(labels)
            .map(|((hs, cn), l)| LabeledPair {
                hs,
                cn,
                label: Label::from_bool(l),
                provenance: Provenance::SeedDataset,
                pair_id: None,
            })
            .collect();
        let cfg = BaselineConfig {
            rng_seed: seed,
            epochs,
            ..Default::default()
        };
        Ok(Self {
            inner: review::BaselineScorer::train(&data, cfg).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: review::BaselineScorer::load(path.as_ref()).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path.as_ref()).map_err(err)
    }

    fn confidence(&self, hs: &str, cn: &str) -> f64 {
        self.inner.confidence(hs, cn)
    }

    fn is_suitable(&self, hs: &str, cn: &str) -> bool {
        self.inner.confidence(hs, cn) >= self.inner.config.threshold
    }
}

/// Event-sourced pipeline, in memory or backed by a log directory.
#[pyclass(module = "hscn", unsendable)]
struct Pipeline {
    inner: orch::Pipeline,
}

fn parse_source(name: &str) -> PyResult<Source> {
    serde_json::from_value(Value::String(name.to_owned())).map_err(|e| err(e.into()))
}

#[pymethods]
impl Pipeline {
    #[new]
    #[pyo3(signature = (path=None))]
    fn new(path: Option<&str>) -> PyResult<Self> {
        let inner = match path {
            Some(p) => orch::Pipeline::open(p).map_err(err)?,
            None => orch::Pipeline::in_memory(),
        };
        Ok(Self { inner })
    }

    #[pyo3(signature = (pair_id, hs, cn, source="generated"))]
    fn add_pair(&mut self, pair_id: &str, hs: &str, cn: &str, source: &str) -> PyResult<u64> {
        let pair = HsCnPair::new(PairId::new(pair_id), hs, cn, parse_source(source)?).map_err(err)?;
        self.inner.add_pair(pair, None).map_err(err)
    }

    #[pyo3(signature = (pair_id, annotator, score, bad_hs=false, elapsed_ms=0, key=None))]
    fn submit_score(
        &mut self,
        pair_id: &str,
        annotator: &str,
        score: u8,
        bad_hs: bool,
        elapsed_ms: u64,
        key: Option<String>,
    ) -> PyResult<u64> {
        let score = ReviewScore {
            pair_id: PairId::new(pair_id),
            annotator_id: annotator.to_owned(),
            score: Score::new(score).map_err(err)?,
            bad_hs,
            elapsed_ms,
        };
        self.inner.submit_score(score, key).map_err(err)
    }

    fn tier(&self, pair_id: &str) -> PyResult<&'static str> {
        self.inner.state().tier(&PairId::new(pair_id)).map(|t| t.as_str()).map_err(err)
    }

    /// Records machine scores from a trained baseline for the given pairs.
    fn machine_review(&mut self, scorer: &BaselineScorer, pair_ids: Vec<String>) -> PyResult<usize> {
        let ids: Vec<PairId> = pair_ids.into_iter().map(PairId::new).collect();
        self.inner.machine_review(&scorer.inner, &ids).map_err(err)
    }

    #[pyo3(signature = (experiment, operators, seed=0))]
    fn open_experiment(&mut self, experiment: &str, operators: Vec<String>, seed: u64) -> PyResult<u64> {
        self.inner.open_experiment(experiment, operators, seed).map_err(err)
    }

    /// Routes a condition; returns `{passed, filtered_out, routed}` counts.
    #[pyo3(signature = (experiment, condition, session_size=Some(20), seed=0, uniform=false))]
    fn route<'py>(
        &mut self,
        py: Python<'py>,
        experiment: &str,
        condition: &str,
        session_size: Option<usize>,
        seed: u64,
        uniform: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let cfg = PipelineConfig {
            reviewer_mode: mode(condition)?,
            sampling: if uniform { Sampling::Uniform } else { Sampling::Stratified },
            session_size,
            rng_seed: seed,
        };
        let plan = self.inner.route_condition(experiment, &cfg, None).map_err(err)?;
        to_dict(py, &plan)
    }

    #[pyo3(signature = (operator))]
    fn next_for_operator<'py>(&self, py: Python<'py>, operator: &str) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.inner.next_for_operator(operator))
    }

    #[pyo3(signature = (pair_id, operator, action, edited_cn=None, elapsed_ms=0, key=None))]
    fn record_decision(
        &mut self,
        pair_id: &str,
        operator: &str,
        action: &str,
        edited_cn: Option<String>,
        elapsed_ms: u64,
        key: Option<String>,
    ) -> PyResult<u64> {
        let action = match action {
            "validate" => Action::Validate,
            "edit" => Action::Edit,
            "discard" => Action::Discard,
            other => return Err(err(hscn_core::Error::InvalidConfig(format!("unknown action {other:?}")))),
        };
        let decision = ExpertDecision {
            pair_id: PairId::new(pair_id),
            operator_id: operator.to_owned(),
            action,
            edited_cn,
            elapsed_ms,
        };
        self.inner.record_decision(decision, key).map_err(err)
    }

    fn close_experiment(&mut self, experiment: &str) -> PyResult<u64> {
        self.inner.close_experiment(experiment).map_err(err)
    }

    fn effort_report<'py>(&self, py: Python<'py>, experiment: &str, condition: &str) -> PyResult<Bound<'py, PyAny>> {
        let report = self
            .inner
            .effort_report(experiment, mode(condition)?, &ReportOptions::default())
            .map_err(err)?;
        to_dict(py, &report)
    }

    fn export_accepted<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.inner.export_accepted())
    }

    /// Canonical JSON export of the whole state.
    fn export_state(&self) -> PyResult<String> {
        self.inner.state().export().map_err(err)
    }

    /// True when replaying the log from scratch reproduces the current state.
    fn verify_replay(&self) -> PyResult<bool> {
        let replayed = hscn_core::corpus::StoreState::replay(self.inner.log().records()).map_err(err)?;
        Ok(replayed.export().map_err(err)? == self.inner.state().export().map_err(err)?)
    }

    fn __len__(&self) -> usize {
        self.inner.log().records().len()
    }
}

#[pymodule]
fn hscn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("HscnError", m.py().get_type::<HscnError>())?;
    m.add_function(wrap_pyfunction!(repetition_rate, m)?)?;
    m.add_function(wrap_pyfunction!(novelty, m)?)?;
    m.add_function(wrap_pyfunction!(corpus_novelty, m)?)?;
    m.add_function(wrap_pyfunction!(corpus_bleu, m)?)?;
    m.add_function(wrap_pyfunction!(edit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(serialize_pair, m)?)?;
    m.add_function(wrap_pyfunction!(parse_stream, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(tier_report, m)?)?;
    m.add_function(wrap_pyfunction!(crowd_time_per_pair, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(stub_generate, m)?)?;
    m.add_class::<BaselineScorer>()?;
    m.add_class::<Pipeline>()?;
    Ok(())
}
