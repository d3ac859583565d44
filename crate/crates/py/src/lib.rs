//! Python module `pet_router_py`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pet_router::embed::{ProjectionCheckpoint, Projector};
use pet_router::eval;
use pet_router::metrics::{self, MetricWeights};
use pet_router::pets::{self, PetId};
use pet_router::select::{SelectorCheckpoint, SelectorModel};
use pet_router::{embed, rank};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Complexity metrics of a Python snippet as a dict.
#[pyfunction]
#[pyo3(signature = (source, weights = None))]
fn analyze<'py>(py: Python<'py>, source: &str, weights: Option<[f64; 5]>) -> PyResult<Bound<'py, PyDict>> {
    let weights = match weights {
        Some(w) => MetricWeights::try_from(w).map_err(value_error)?,
        None => MetricWeights::default(),
    };
    let r = metrics::analyze(source, &weights).map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("loc", r.loc)?;
    d.set_item("cyclomatic", r.cyclomatic)?;
    d.set_item("halstead_volume", r.halstead_volume)?;
    d.set_item("cognitive", r.cognitive)?;
    d.set_item("maintainability", r.maintainability)?;
    d.set_item("combined", r.combined)?;
    Ok(d)
}

#[pyfunction]
fn extract_code(response: &str) -> String {
    pets::extract_code(response)
}

/// `(pet, stage, template)` triples.
#[pyfunction]
fn templates() -> Vec<(String, String, String)> {
    pets::template_dump()
        .into_iter()
        .map(|(pet, stage, text)| (pet.slug().to_string(), format!("{stage:?}").to_lowercase(), text.to_string()))
        .collect()
}

#[pyfunction]
fn r_score(tokens: u64, max_tokens: u64, passed: bool) -> PyResult<f64> {
    rank::r_score(tokens, max_tokens, passed).map_err(value_error)
}

/// The winning PET slug for a `{slug: score}` dict.
#[pyfunction]
fn label(scores: BTreeMap<String, f64>) -> PyResult<Option<String>> {
    let parsed = scores
        .into_iter()
        .map(|(k, v)| Ok((k.parse::<PetId>().map_err(value_error)?, v)))
        .collect::<PyResult<BTreeMap<PetId, f64>>>()?;
    Ok(rank::label(&parsed).map(|p| p.slug().to_string()))
}

#[pyfunction]
fn mrr(rankings: Vec<Vec<usize>>, relevance: Vec<Vec<f64>>) -> PyResult<f64> {
    eval::mrr(&rankings, &relevance).map_err(value_error)
}

#[pyfunction]
fn ndcg(ranking: Vec<usize>, relevance: Vec<f64>) -> PyResult<f64> {
    eval::ndcg(&ranking, &relevance).map_err(value_error)
}

/// `(train, test)` id lists per fold.
#[pyfunction]
fn kfold(ids: Vec<String>, k: usize, seed: u64) -> PyResult<Vec<(Vec<String>, Vec<String>)>> {
    let plan = eval::kfold(&ids, k, seed).map_err(value_error)?;
    Ok(plan.folds.into_iter().map(|f| (f.train, f.test)).collect())
}

#[pyfunction]
fn cosine_distance(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    embed::cosine_distance(&u, &v).map_err(value_error)
}

#[pyfunction]
#[pyo3(signature = (anchor, positive, negative, margin = 1.0))]
fn triplet_loss(anchor: Vec<f64>, positive: Vec<f64>, negative: Vec<f64>, margin: f64) -> PyResult<f64> {
    embed::triplet_loss(&anchor, &positive, &negative, margin).map_err(value_error)
}

/// A trained selector, optionally preceded by a trained projection.
#[pyclass(frozen)]
struct Router {
    model: SelectorModel,
    projector: Projector,
}

#[pymethods]
impl Router {
    #[new]
    #[pyo3(signature = (selector, projection = None))]
    fn new(selector: PathBuf, projection: Option<PathBuf>) -> PyResult<Self> {
        let model = SelectorCheckpoint::load(&selector).and_then(|c| c.model()).map_err(value_error)?;
        let projector = match projection {
            None => Projector::Identity,
            Some(p) => {
                Projector::Trained(ProjectionCheckpoint::load(&p).and_then(|c| c.projection()).map_err(value_error)?)
            }
        };
        Ok(Self { model, projector })
    }

    /// `(pet, probability)` pairs, best first, for a raw query embedding.
    fn predict(&self, embedding: Vec<f64>) -> PyResult<Vec<(String, f64)>> {
        let x = self.projector.apply(&embedding).map_err(value_error)?;
        let ranking = self.model.predict_ranking(&x).map_err(value_error)?;
        Ok(ranking.into_iter().map(|(p, prob)| (p.slug().to_string(), prob)).collect())
    }

    #[getter]
    fn pets(&self) -> Vec<String> {
        self.model.pet_pool.iter().map(|p| p.slug().to_string()).collect()
    }
}

#[pymodule]
fn pet_router_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(extract_code, m)?)?;
    m.add_function(wrap_pyfunction!(templates, m)?)?;
    m.add_function(wrap_pyfunction!(r_score, m)?)?;
    m.add_function(wrap_pyfunction!(label, m)?)?;
    m.add_function(wrap_pyfunction!(mrr, m)?)?;
    m.add_function(wrap_pyfunction!(ndcg, m)?)?;
    m.add_function(wrap_pyfunction!(kfold, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_distance, m)?)?;
    m.add_function(wrap_pyfunction!(triplet_loss, m)?)?;
    m.add_class::<Router>()?;
    Ok(())
}
