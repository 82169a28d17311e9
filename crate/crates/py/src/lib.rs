//! Python bindings. Reports come back as plain dicts and lists.

use std::sync::Arc;

use fml_core::cube::{build_adic_system, build_distorted_carpet, build_subsampled_dyadic, pushforward_power};
use fml_core::fatthin::{choose_rho, fat_thin_on, restricted_doubling_scan, survivor_mass, RhoRule};
use fml_core::measure::{MeasureTree, N0Policy};
use fml_core::scan::{doubling_scan, PointSource, Sampling};
use fml_core::{AlphaSequence, CubeSystem, Point, SpaceModel};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn point(x: &[f64]) -> PyResult<Point> {
    match x {
        [a] => Ok(Point::new1(*a)),
        [a, b] => Ok(Point::new2(*a, *b)),
        _ => Err(err("a point has 1 or 2 coordinates")),
    }
}

fn rho_rule(rho: &Bound<'_, PyAny>) -> PyResult<RhoRule> {
    if let Ok(s) = rho.extract::<String>() {
        return match s.as_str() {
            "fat" => Ok(RhoRule::Fat),
            "thin" => Ok(RhoRule::Thin),
            _ => Err(err(format!("rho '{s}' is not a number, fat or thin"))),
        };
    }
    Ok(RhoRule::Fixed { rho: rho.extract::<f64>()? })
}

fn source(s: &str) -> PyResult<PointSource> {
    let level = |v: &str| v.parse::<usize>().map_err(err);
    match s.split_once(':') {
        None if s == "uniform" => Ok(PointSource::Uniform),
        Some(("centers", l)) => Ok(PointSource::CubeCenters { level: level(l)? }),
        Some(("survivors", l)) => Ok(PointSource::SurvivorPoints { level: level(l)? }),
        _ => Err(err(format!("point source '{s}' is not uniform, centers:L or survivors:L"))),
    }
}

/// A cube system.
#[pyclass(frozen, module = "fml")]
struct System {
    inner: Arc<CubeSystem>,
}

#[pymethods]
impl System {
    /// Products of base-N splits; `bases` is e.g. "7", "3,5,7" or "odd:2n+1".
    #[staticmethod]
    #[pyo3(signature = (dim, bases, depth, lazy = true))]
    fn adic(dim: usize, bases: &str, depth: usize, lazy: bool) -> PyResult<Self> {
        let space = SpaceModel::new(dim).map_err(err)?;
        let s = build_adic_system(space, bases.parse().map_err(err)?, depth, lazy).map_err(err)?;
        Ok(Self { inner: Arc::new(s) })
    }

    /// Subsampled b-adic layout driven by a sequence such as "geometric:0.5".
    #[staticmethod]
    #[pyo3(signature = (dim, sequence, depth, base = 2, lazy = true))]
    fn subsampled(dim: usize, sequence: &str, depth: usize, base: u64, lazy: bool) -> PyResult<Self> {
        let space = SpaceModel::new(dim).map_err(err)?;
        let alpha = AlphaSequence::new(sequence.parse().map_err(err)?).map_err(err)?;
        let s = build_subsampled_dyadic(space, base, alpha, depth, lazy).map_err(err)?;
        Ok(Self { inner: Arc::new(s) })
    }

    #[staticmethod]
    #[pyo3(signature = (bases, depth, lazy = true))]
    fn distorted_carpet(bases: &str, depth: usize, lazy: bool) -> PyResult<Self> {
        let s = build_distorted_carpet(bases.parse().map_err(err)?, depth, lazy).map_err(err)?;
        Ok(Self { inner: Arc::new(s) })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(err)?;
        Ok(Self { inner: Arc::new(CubeSystem::from_json(&v).map_err(err)?) })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner.to_json().map_err(err)?).map_err(err)
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn alpha(&self, n: usize) -> PyResult<f64> {
        self.inner.alpha_at(n).map_err(err)
    }

    fn survivor_count(&self, n: usize) -> PyResult<usize> {
        Ok(self.inner.survivors(n).map_err(err)?.len())
    }

    fn pushforward(&self, beta: f64) -> PyResult<Self> {
        Ok(Self { inner: Arc::new(pushforward_power(&self.inner, beta).map_err(err)?) })
    }

    #[pyo3(signature = (depth = None, ts = vec![2.0, 4.0, 8.0]))]
    fn validate<'py>(&self, py: Python<'py>, depth: Option<usize>, ts: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
        let rep = fml_core::validate(&self.inner, depth.unwrap_or(self.inner.depth()), &ts).map_err(err)?;
        to_py(py, &rep)
    }

    /// `rho` is a number, "fat" or "thin"; `n0` is None for the automatic choice.
    #[pyo3(signature = (rho, n0 = None, depth = None, tau = 1e-8))]
    fn measure(&self, rho: &Bound<'_, PyAny>, n0: Option<usize>, depth: Option<usize>, tau: f64) -> PyResult<Measure> {
        let rho = choose_rho(&self.inner, rho_rule(rho)?).map_err(err)?;
        let n0 = n0.map_or(N0Policy::Auto, N0Policy::Fixed);
        let depth = depth.unwrap_or(self.inner.depth());
        let tree = MeasureTree::new(self.inner.clone(), rho, n0, depth, tau).map_err(err)?;
        Ok(Measure { inner: tree })
    }
}

/// A weighted cube system.
#[pyclass(frozen, module = "fml")]
struct Measure {
    inner: MeasureTree,
}

#[pymethods]
impl Measure {
    #[getter]
    fn rho(&self) -> f64 {
        self.inner.rho()
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth()
    }

    /// Lower, exact and upper estimates of the mass of B(x, r).
    fn ball_mass<'py>(&self, py: Python<'py>, x: Vec<f64>, r: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.ball_mass(&point(&x)?, r).map_err(err)?)
    }

    fn conservation<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.conservation_audit().map_err(err)?)
    }

    fn survivor_mass(&self, n: usize) -> PyResult<f64> {
        survivor_mass(&self.inner, n).map_err(err)
    }

    fn fat_thin<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &fat_thin_on(&self.inner).map_err(err)?)
    }

    #[pyo3(signature = (samples = 1000, seed = 0, r_min = 1e-4, r_max = 0.25, source = "uniform"))]
    fn doubling_scan<'py>(
        &self,
        py: Python<'py>,
        samples: usize,
        seed: u64,
        r_min: f64,
        r_max: f64,
        source: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let sampling = Sampling { count: samples, seed, source: self::source(source)?, r_min, r_max };
        to_py(py, &doubling_scan(&self.inner, &sampling).map_err(err)?)
    }

    #[pyo3(signature = (level = None, samples = 1000, seed = 0, factor = 6.0))]
    fn restricted_scan<'py>(
        &self,
        py: Python<'py>,
        level: Option<usize>,
        samples: usize,
        seed: u64,
        factor: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let sampling = Sampling { count: samples, seed, source: PointSource::Uniform, r_min: 1e-4, r_max: 0.25 };
        let level = level.unwrap_or(self.inner.depth());
        to_py(py, &restricted_doubling_scan(&self.inner, level, &sampling, factor).map_err(err)?)
    }
}

#[pymodule]
fn fml(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<System>()?;
    m.add_class::<Measure>()?;
    Ok(())
}
