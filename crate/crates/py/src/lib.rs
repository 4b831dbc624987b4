//! Python bindings for `coxnet`.

use std::collections::HashMap;

use coxnet::analytic::{self, AnalyticSettings, KernelForm, ServingTier};
use coxnet::cox::{build_realization, PalmKind};
use coxnet::sim::{self, McSettings};
use coxnet::{Error, Stream};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

type Curves = HashMap<&'static str, (Vec<f64>, Vec<f64>)>;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter { .. } | Error::MissingKey(_) | Error::ConfigSyntax { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

#[pyclass(name = "NetworkConfig", module = "pycoxnet", from_py_object)]
#[derive(Clone)]
pub struct PyNetworkConfig {
    inner: coxnet::NetworkConfig,
}

#[pymethods]
impl PyNetworkConfig {
    #[new]
    #[pyo3(signature = (lambda_l, mu_s, mu_r, mu_u, p_s=1.0, p_r=1.0, alpha=2.5, beta=3.5, w=20.0, w2=10.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        lambda_l: f64,
        mu_s: f64,
        mu_r: f64,
        mu_u: f64,
        p_s: f64,
        p_r: f64,
        alpha: f64,
        beta: f64,
        w: f64,
        w2: f64,
    ) -> PyResult<Self> {
        let inner = coxnet::NetworkConfig::new(lambda_l, mu_s, mu_r, mu_u)
            .with_powers(p_s, p_r)
            .with_exponents(alpha, beta)
            .with_bandwidth(w, w2);
        inner.validate().map_err(to_py)?;
        Ok(PyNetworkConfig { inner })
    }

    /// Reads a `key = value` config file.
    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        let (inner, _) = coxnet::config::load_config(path).map_err(to_py)?;
        Ok(PyNetworkConfig { inner })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        let (inner, _) = coxnet::config::parse_config(text).map_err(to_py)?;
        Ok(PyNetworkConfig { inner })
    }

    fn to_config_string(&self) -> String {
        self.inner.to_config_string()
    }

    /// Copy with one parameter changed, by config key.
    fn with_value(&self, key: &str, value: f64) -> PyResult<Self> {
        let mut inner = self.inner.clone();
        inner.set_by_key(key, value).map_err(to_py)?;
        inner.validate().map_err(to_py)?;
        Ok(PyNetworkConfig { inner })
    }

    #[getter]
    fn lambda_l(&self) -> f64 {
        self.inner.lambda_l
    }
    #[getter]
    fn mu_s(&self) -> f64 {
        self.inner.mu_s
    }
    #[getter]
    fn mu_r(&self) -> f64 {
        self.inner.mu_r
    }
    #[getter]
    fn mu_u(&self) -> f64 {
        self.inner.mu_u
    }
    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }
    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }
    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }
    #[getter]
    fn w1(&self) -> f64 {
        self.inner.w1
    }
    #[getter]
    fn w2(&self) -> f64 {
        self.inner.w2
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "NetworkConfig(lambda_l={}, mu_s={}, mu_r={}, mu_u={}, gamma={}, alpha={}, beta={}, w1={}, w2={})",
            c.lambda_l,
            c.mu_s,
            c.mu_r,
            c.mu_u,
            c.gamma(),
            c.alpha,
            c.beta,
            c.w1,
            c.w2
        )
    }
}

fn tier(name: &str) -> PyResult<ServingTier> {
    match name {
        "rsu" => Ok(ServingTier::Rsu),
        "relay" => Ok(ServingTier::Relay),
        _ => Err(PyValueError::new_err(format!("tier must be 'rsu' or 'relay', got {name:?}"))),
    }
}

/// Analytic engine. Thresholds are in dB.
#[pyclass(name = "Analytic", module = "pycoxnet")]
pub struct PyAnalytic {
    cfg: coxnet::NetworkConfig,
    settings: AnalyticSettings,
}

impl PyAnalytic {
    fn engine(&self) -> PyResult<analytic::Analytic> {
        analytic::Analytic::new(&self.cfg, self.settings).map_err(to_py)
    }

    fn run<T: Send>(&self, py: Python<'_>, f: impl FnOnce(&analytic::Analytic) -> coxnet::Result<T> + Send) -> PyResult<T> {
        let cfg = self.cfg.clone();
        let settings = self.settings;
        py.detach(move || f(&analytic::Analytic::new(&cfg, settings)?)).map_err(to_py)
    }
}

#[pymethods]
impl PyAnalytic {
    #[new]
    #[pyo3(signature = (cfg, tol=None, kernels="derived"))]
    fn new(cfg: &PyNetworkConfig, tol: Option<f64>, kernels: &str) -> PyResult<Self> {
        let mut settings = tol.map_or_else(AnalyticSettings::default, AnalyticSettings::with_tol);
        settings.form = match kernels {
            "derived" => KernelForm::Derived,
            "as-printed" | "as_printed" => KernelForm::AsPrinted,
            _ => return Err(PyValueError::new_err(format!("unknown kernels {kernels:?}"))),
        };
        let a = PyAnalytic {
            cfg: cfg.inner.clone(),
            settings,
        };
        a.engine()?;
        Ok(a)
    }

    fn assoc_prob_rsu(&self, py: Python<'_>) -> PyResult<f64> {
        self.run(py, |a| a.assoc_prob_rsu())
    }

    fn mean_loads(&self, py: Python<'_>) -> PyResult<HashMap<&'static str, Option<f64>>> {
        let l = self.run(py, |a| a.mean_loads())?;
        Ok(HashMap::from([
            ("users_per_rsu", Some(l.u_bar_s)),
            ("users_per_relay", l.u_bar_r),
            ("relays_per_rsu", Some(l.r_bar_s)),
        ]))
    }

    fn user_coverage(&self, py: Python<'_>, tau_db: f64) -> PyResult<HashMap<&'static str, f64>> {
        let c = self.run(py, |a| a.user_coverage(db(tau_db)))?;
        Ok(HashMap::from([
            ("total", c.total),
            ("p_e_as", c.p_e_as),
            ("p_ec_as", c.p_ec_as),
            ("p_e_ar", c.p_e_ar),
            ("p_ec_ar", c.p_ec_ar),
        ]))
    }

    fn user_coverage_equal_power(&self, py: Python<'_>, tau_db: f64) -> PyResult<f64> {
        self.run(py, |a| a.user_coverage_equal_power(db(tau_db)))
    }

    fn relay_coverage(&self, py: Python<'_>, tau_db: f64) -> PyResult<f64> {
        self.run(py, |a| a.relay_coverage(db(tau_db)))
    }

    /// Coverage given the serving tier, `"rsu"` or `"relay"`.
    fn cond_coverage(&self, py: Python<'_>, tau_db: f64, tier_name: &str) -> PyResult<f64> {
        let t = tier(tier_name)?;
        self.run(py, |a| a.cond_coverage(db(tau_db), t))
    }

    fn throughput(&self, py: Python<'_>) -> PyResult<HashMap<&'static str, f64>> {
        let t = self.run(py, |a| a.throughput())?;
        Ok(HashMap::from([
            ("t_total", t.t_total),
            ("t_s", t.t_s),
            ("t_r", t.t_r),
            ("backhaul_branch", t.backhaul_branch),
            ("access_branch", t.access_branch),
            ("p_as", t.p_as),
            ("i_su", t.i_su),
            ("i_ru", t.i_ru),
            ("i_sr", t.i_sr),
        ]))
    }

    /// Total throughput for each `w2` value, from one set of spectral
    /// efficiencies.
    fn throughput_vs_w2(&self, py: Python<'_>, w2_values: Vec<f64>) -> PyResult<Vec<f64>> {
        let cfg = self.cfg.clone();
        self.run(py, move |a| {
            let set = a.spectral_set()?;
            w2_values
                .iter()
                .map(|&w2| {
                    let c = cfg.clone().with_bandwidth(cfg.w, w2);
                    c.validate()?;
                    Ok(analytic::throughput_from(&c, &set)?.t_total)
                })
                .collect()
        })
    }

    fn throughput_gain(&self, py: Python<'_>) -> PyResult<f64> {
        self.run(py, |a| a.throughput_gain())
    }
}

fn mc(cfg: &coxnet::NetworkConfig, reps: usize, window_km: Option<f64>, seed: u64) -> McSettings {
    McSettings::new(reps, window_km.unwrap_or_else(|| sim::default_window_radius(cfg)), seed)
}

/// Monte Carlo association frequencies.
#[pyfunction]
#[pyo3(signature = (cfg, reps=100_000, window_km=None, seed=1))]
fn estimate_association(
    py: Python<'_>,
    cfg: &PyNetworkConfig,
    reps: usize,
    window_km: Option<f64>,
    seed: u64,
) -> PyResult<HashMap<&'static str, f64>> {
    let c = cfg.inner.clone();
    let s = py
        .detach(|| sim::estimate_association(&c, &mc(&c, reps, window_km, seed)))
        .map_err(to_py)?;
    Ok(HashMap::from([
        ("n", s.n as f64),
        ("p_as", s.p_as),
        ("p_ar", s.p_ar),
        ("p_as_e", s.p_as_e),
        ("p_as_ec", s.p_as_ec),
        ("p_ar_e", s.p_ar_e),
        ("p_ar_ec", s.p_ar_ec),
        ("ci_halfwidth", s.ci_halfwidth),
    ]))
}

/// Monte Carlo user coverage: `{kind: (probs, ci_halfwidths)}`.
#[pyfunction]
#[pyo3(signature = (cfg, taus_db, reps=20_000, window_km=None, seed=1))]
fn estimate_user_coverage(
    py: Python<'_>,
    cfg: &PyNetworkConfig,
    taus_db: Vec<f64>,
    reps: usize,
    window_km: Option<f64>,
    seed: u64,
) -> PyResult<Curves> {
    let c = cfg.inner.clone();
    let u = py
        .detach(|| sim::estimate_user_coverage(&c, &taus_db, &mc(&c, reps, window_km, seed)))
        .map_err(to_py)?;
    Ok([u.total, u.given_as, u.given_ar]
        .into_iter()
        .map(|k| (k.kind.as_str(), (k.probs, k.ci_halfwidths)))
        .collect())
}

/// Monte Carlo relay backhaul coverage: `(probs, ci_halfwidths)`.
#[pyfunction]
#[pyo3(signature = (cfg, taus_db, reps=20_000, window_km=None, seed=1))]
fn estimate_relay_coverage(
    py: Python<'_>,
    cfg: &PyNetworkConfig,
    taus_db: Vec<f64>,
    reps: usize,
    window_km: Option<f64>,
    seed: u64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let c = cfg.inner.clone();
    let r = py
        .detach(|| sim::estimate_relay_coverage(&c, &taus_db, &mc(&c, reps, window_km, seed)))
        .map_err(to_py)?;
    Ok((r.curve.probs, r.curve.ci_halfwidths))
}

/// Counting estimates of the mean loads: `{name: (value, ci_halfwidth)}`.
#[pyfunction]
#[pyo3(signature = (cfg, reps=200, window_km=None, seed=1))]
fn estimate_loads(
    py: Python<'_>,
    cfg: &PyNetworkConfig,
    reps: usize,
    window_km: Option<f64>,
    seed: u64,
) -> PyResult<HashMap<&'static str, (f64, f64)>> {
    let c = cfg.inner.clone();
    let l = py
        .detach(|| sim::estimate_loads(&c, &mc(&c, reps, window_km, seed), 10_000))
        .map_err(to_py)?;
    let mut out = HashMap::from([
        ("users_per_rsu", (l.count_users_per_rsu.value, l.count_users_per_rsu.ci_halfwidth)),
        ("relays_per_rsu", (l.count_relays_per_rsu.value, l.count_relays_per_rsu.ci_halfwidth)),
    ]);
    if let Some(r) = l.count_users_per_relay {
        out.insert("users_per_relay", (r.value, r.ci_halfwidth));
    }
    Ok(out)
}

/// One Palm realization as CSV text (`entity_kind,line_index,x_km,y_km`).
#[pyfunction]
#[pyo3(signature = (cfg, window_km=10.0, seed=1))]
fn sample_realization_csv(cfg: &PyNetworkConfig, window_km: f64, seed: u64) -> PyResult<String> {
    let real = build_realization(&cfg.inner, window_km, PalmKind::TypicalUser, Stream::new(seed)).map_err(to_py)?;
    let mut buf = Vec::new();
    real.write_csv(&mut buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn pycoxnet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetworkConfig>()?;
    m.add_class::<PyAnalytic>()?;
    m.add_function(wrap_pyfunction!(estimate_association, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_user_coverage, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_relay_coverage, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_loads, m)?)?;
    m.add_function(wrap_pyfunction!(sample_realization_csv, m)?)?;
    Ok(())
}
