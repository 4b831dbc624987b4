//! Adaptive quadrature for iterated 1-D integrals on finite and
//! semi-infinite ranges.

mod gk;
mod memo;

pub use memo::MemoKernel;

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Change of variable applied before the adaptive rule.
///
/// On `[a, inf)` each variant folds the range onto a unit interval. On a
/// finite `[a, b]` only `TanHalf` acts, as `u = a + (b - a) sin^2(pi t / 2)`,
/// which flattens inverse square-root endpoint singularities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Transform {
    /// `u = a + s t / (1 - t)`
    #[default]
    None,
    /// `u = a + s tan(pi t / 2)`
    TanHalf,
    /// `u = a + s (1 / t - 1)`
    Inverse,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Maximum bisection depth of any panel.
    pub max_depth: u32,
    pub transform: Transform,
    /// Length scale `s` of the semi-infinite map.
    pub scale: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            rel_tol: 1e-7,
            abs_tol: 1e-10,
            max_depth: 30,
            transform: Transform::None,
            scale: 1.0,
        }
    }
}

impl QuadSpec {
    pub fn new(rel_tol: f64, abs_tol: f64) -> Self {
        QuadSpec {
            rel_tol,
            abs_tol,
            ..Default::default()
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_transform(mut self, transform: Transform) -> Self {
        self.transform = transform;
        self
    }

    /// Both tolerances multiplied by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.rel_tol *= factor;
        self.abs_tol *= factor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::invalid("rel_tol", format!("{} must be > 0", self.rel_tol)));
        }
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return Err(Error::invalid("abs_tol", format!("{} must be > 0", self.abs_tol)));
        }
        if self.max_depth == 0 || self.max_depth > 60 {
            return Err(Error::invalid("max_depth", format!("{} outside 1..=60", self.max_depth)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::invalid("scale", format!("{} must be > 0", self.scale)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
    pub converged: bool,
}

impl QuadResult {
    /// The value, or a quadrature error attributed to `kernel`.
    pub fn require(self, kernel: &'static str) -> Result<f64> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(Error::Quadrature {
                kernel,
                error_estimate: self.error_estimate,
            })
        }
    }
}

/// `int_a^b f`. Reversed limits flip the sign.
pub fn integrate_finite<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadSpec) -> QuadResult {
    if b < a {
        let mut r = integrate_finite(f, b, a, spec);
        r.value = -r.value;
        return r;
    }
    let r = if spec.transform == Transform::TanHalf {
        let mut f = f;
        let w = b - a;
        let g = move |t: f64| {
            let x = FRAC_PI_2 * t;
            let (s, c) = x.sin_cos();
            f(a + w * s * s) * w * FRAC_PI_2 * 2.0 * s * c
        };
        gk::adaptive(g, 0.0, 1.0, spec.rel_tol, spec.abs_tol, spec.max_depth)
    } else {
        gk::adaptive(f, a, b, spec.rel_tol, spec.abs_tol, spec.max_depth)
    };
    QuadResult {
        value: r.value,
        error_estimate: r.error,
        evaluations: r.evaluations,
        converged: r.converged,
    }
}

/// `int_a^inf f`, requiring `f(u) = O(u^-p)` with `p > 1`.
pub fn integrate_semi_infinite<F: FnMut(f64) -> f64>(mut f: F, a: f64, spec: &QuadSpec) -> QuadResult {
    let s = spec.scale;
    let g = move |t: f64| -> f64 {
        let (u, jac) = match spec.transform {
            Transform::None => {
                let q = 1.0 - t;
                (a + s * t / q, s / (q * q))
            }
            Transform::TanHalf => {
                let x = FRAC_PI_2 * t;
                let c = x.cos();
                (a + s * x.tan(), s * FRAC_PI_2 / (c * c))
            }
            Transform::Inverse => (a + s * (1.0 / t - 1.0), s / (t * t)),
        };
        if !u.is_finite() || !jac.is_finite() {
            return 0.0;
        }
        let v = f(u);
        if v == 0.0 {
            0.0
        } else {
            v * jac
        }
    };
    let r = gk::adaptive(g, 0.0, 1.0, spec.rel_tol, spec.abs_tol, spec.max_depth);
    QuadResult {
        value: r.value,
        error_estimate: r.error,
        evaluations: r.evaluations,
        converged: r.converged,
    }
}
