//! Python bindings: load an instance file and run the pipeline, the
//! validators and the exhaustive oracle from Python.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;

use submax_core::instance::{parse_instance, Instance as CoreInstance, SchemeKind, SchemeOptions};
use submax_core::rng::derive;
use submax_core::rounding::{maximize_constrained, relax, Algorithm, PipelineConfig};
use submax_core::submodular::multilinear_exact;
use submax_core::verification::{balance_estimate, brute_force_max, correlation_gap_estimate};
use submax_core::{Error, Subset};

fn err(e: Error) -> PyErr {
    match e {
        Error::Capacity { .. } | Error::Numeric(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn subset(n: usize, elements: &[usize]) -> PyResult<Subset> {
    if let Some(e) = elements.iter().find(|&&e| e >= n) {
        return Err(PyValueError::new_err(format!("element {e} outside a ground set of {n}")));
    }
    Ok(Subset::from_elements(elements.iter().copied()))
}

/// A parsed and validated instance.
#[pyclass(module = "submax", frozen)]
struct Instance {
    inner: CoreInstance,
}

impl Instance {
    fn kind(&self, scheme: Option<&str>) -> PyResult<SchemeKind> {
        match scheme {
            Some(s) => s.parse().map_err(err),
            None => Ok(self.inner.file.pipeline.as_ref().and_then(|p| p.scheme).unwrap_or_else(|| self.inner.default_scheme())),
        }
    }

    fn scale(&self, kind: SchemeKind, b: Option<f64>) -> f64 {
        b.or(self.inner.file.pipeline.as_ref().and_then(|p| p.b)).unwrap_or_else(|| self.inner.default_b(kind))
    }

    fn config(&self, algo: Option<&str>, b: f64, reps: usize, seed: u64) -> PyResult<PipelineConfig> {
        let defaults = self.inner.file.pipeline.clone().unwrap_or_default();
        let algo = match algo {
            Some(a) => a.parse::<Algorithm>().map_err(err)?,
            None => defaults.algo.unwrap_or(Algorithm::Ls25),
        };
        let mut cfg = PipelineConfig { algo, b, t: defaults.t, reps, seed, ..Default::default() };
        cfg.local_search.q = defaults.q;
        cfg.local_search.delta = defaults.delta;
        if let Some(h) = defaults.samples {
            cfg.local_search.estimator.samples = h;
        }
        if let Some(m) = defaults.max_iters {
            cfg.local_search.max_iters = m;
        }
        Ok(cfg)
    }
}

#[pymethods]
impl Instance {
    /// Parse TOML text. Raises ValueError listing every diagnostic.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let file = parse_instance(text).map_err(|ds| {
            PyValueError::new_err(ds.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))
        })?;
        Ok(Self { inner: file.build().map_err(err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PyValueError::new_err(format!("{path}: {e}")))?;
        Self::from_toml(&text)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn name(&self) -> Option<String> {
        self.inner.file.name.clone()
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.file.to_toml().map_err(err)
    }

    fn value(&self, elements: Vec<usize>) -> PyResult<f64> {
        Ok(self.inner.f.value(subset(self.inner.len(), &elements)?))
    }

    fn is_feasible(&self, elements: Vec<usize>) -> PyResult<bool> {
        Ok(self.inner.is_feasible(subset(self.inner.len(), &elements)?))
    }

    /// Exact multilinear extension.
    fn multilinear(&self, x: Vec<f64>) -> PyResult<f64> {
        multilinear_exact(&self.inner.f, &x).map_err(err)
    }

    /// Ratio of the multilinear extension to the concave closure at `x`.
    fn correlation_gap(&self, py: Python<'_>, x: Vec<f64>) -> PyResult<f64> {
        py.detach(|| correlation_gap_estimate(&self.inner.f, &x)).map_err(err)
    }

    /// Best feasible set by enumeration, or None.
    fn brute_force(&self, py: Python<'_>) -> PyResult<Option<(Vec<usize>, f64)>> {
        let inst = &self.inner;
        let best = py.detach(|| brute_force_max(&inst.f, |s| inst.is_feasible(s))).map_err(err)?;
        Ok(best.map(|(s, v)| (s.to_vec(), v)))
    }

    /// Relax, round and keep the best of `reps` rounded sets.
    #[pyo3(signature = (seed=0, scheme=None, algo=None, b=None, reps=100))]
    fn solve(
        &self,
        py: Python<'_>,
        seed: u64,
        scheme: Option<&str>,
        algo: Option<&str>,
        b: Option<f64>,
        reps: usize,
    ) -> PyResult<Py<PyAny>> {
        let kind = self.kind(scheme)?;
        let cfg = self.config(algo, self.scale(kind, b), reps, seed)?;
        let inst = &self.inner;
        let r = py
            .detach(|| {
                let factory = |x: &[f64], b: f64, s: u64| inst.scheme(kind, x, b, &SchemeOptions { seed: s, ..Default::default() });
                maximize_constrained(&inst.f, &inst.polytope()?, &factory, &cfg)
            })
            .map_err(err)?;
        let v = serde_json::json!({
            "set": r.set.to_vec(),
            "value": r.value,
            "feasible": inst.is_feasible(r.set),
            "report": r.report,
        });
        to_py(py, &v)
    }

    /// Per-element balance of the scheme at `point` (default: the relaxed
    /// optimum over `b·P`).
    #[pyo3(signature = (point=None, seed=0, trials=20000, scheme=None, b=None))]
    fn balance(
        &self,
        py: Python<'_>,
        point: Option<Vec<f64>>,
        seed: u64,
        trials: usize,
        scheme: Option<&str>,
        b: Option<f64>,
    ) -> PyResult<Py<PyAny>> {
        let kind = self.kind(scheme)?;
        let b = self.scale(kind, b);
        let cfg = self.config(None, b, 1, seed)?;
        let inst = &self.inner;
        let (s, rep) = py
            .detach(|| {
                let x = match point {
                    Some(p) => p,
                    None => relax(&inst.f, &inst.polytope()?, &cfg)?.point.into_coords(),
                };
                let s = inst.scheme(kind, &x, b, &SchemeOptions { seed: derive(seed, 2), ..Default::default() })?;
                let rep = balance_estimate(&s, trials, derive(seed, 6))?;
                Ok::<_, Error>((s, rep))
            })
            .map_err(err)?;
        let v = serde_json::json!({
            "scheme": s.name(),
            "b": s.b(),
            "claimed": s.c(),
            "monotone": s.is_monotone(),
            "point": s.point(),
            "report": rep,
        });
        to_py(py, &v)
    }

    fn __repr__(&self) -> String {
        format!("Instance(name={:?}, n={})", self.inner.file.name.as_deref().unwrap_or(""), self.inner.len())
    }
}

#[pymodule]
fn submax(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Instance>()?;
    m.add("SCHEMES", ["matroid-span", "matroid-opt", "knapsack", "sparse", "sparse-width", "ufp", "cpip", "compose"])?;
    m.add("ALGORITHMS", ["ls25", "ls309", "lsgen"])?;
    Ok(())
}
