//! Joint coverage terms `P(SIR > tau, serving on own road or not, tier)`.
//!
//! Every coverage expression in this crate is an instance of two integrals
//! over the serving distance `r`:
//!
//! ```text
//! same road:   int 2c exp(-2 v0 r - I_own(r) - L(r)) dr
//! other road:  int exp(-2 v0 r - I_own(r) - L(r)) 4 lambda c r
//!                  int_0^{pi/2} exp(-2 v r sin phi - I_cross*(r, phi)) dphi dr
//! ```
//!
//! where `I_own` is the Laplace exponent of the interferers on the receiver's
//! road beyond `r`, `L` is the probability generating functional of the
//! other roads (each a void probability times a Laplace factor), and
//! `I_cross*` is the interference from the serving road beyond the serving
//! point. Interferer tiers enter as `(mu_j, a_j)` with `a_j` the serving
//! power over the tier power.

use std::cell::Cell;
use std::f64::consts::FRAC_PI_2;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::quad::{integrate_finite, integrate_semi_infinite, MemoKernel, QuadResult, QuadSpec};

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Tier {
    pub mu: f64,
    pub a: f64,
}

/// Kernel labels used in quality errors: own road, roads crossing the
/// ball, roads outside the ball, serving road (other-road terms only).
#[derive(Clone, Copy, Debug)]
pub(crate) struct Names {
    pub own: &'static str,
    pub near: &'static str,
    pub far: &'static str,
    pub angular: &'static str,
}

pub(crate) const G: Names = Names {
    own: "G1",
    near: "G2",
    far: "G3",
    angular: "G1",
};
pub(crate) const H: Names = Names {
    own: "H1",
    near: "H2",
    far: "H3",
    angular: "H4",
};
pub(crate) const JK: [Names; 2] = [
    Names {
        own: "J1",
        near: "J2",
        far: "J3",
        angular: "J1",
    },
    Names {
        own: "K1",
        near: "K2",
        far: "K3",
        angular: "K4",
    },
];
pub(crate) const BAR_JK: [Names; 2] = [
    Names {
        own: "bar-J1",
        near: "bar-J2",
        far: "bar-J3",
        angular: "bar-J1",
    },
    Names {
        own: "bar-K1",
        near: "bar-K2",
        far: "bar-K3",
        angular: "bar-K4",
    },
];

#[derive(Clone, Debug)]
pub(crate) struct Term {
    /// Serving transmitter on the receiver's own road.
    pub same_road: bool,
    pub tiers: Vec<Tier>,
    /// Tiers interfering from the serving road (other-road terms).
    pub star: Vec<Tier>,
    /// Density of the serving tier.
    pub c: f64,
    /// Void density on the receiver's road.
    pub void_own: f64,
    /// Void density on every other road.
    pub void_lines: f64,
    pub names: Names,
}

/// First quadrature failure seen inside a nested evaluation.
#[derive(Default)]
pub(crate) struct Diag {
    failure: Cell<Option<(&'static str, f64)>>,
}

impl Diag {
    fn take(&self, r: QuadResult, kernel: &'static str) -> f64 {
        if !r.converged && self.failure.get().is_none() {
            self.failure.set(Some((kernel, r.error_estimate)));
        }
        r.value
    }

    fn reset(&self) {
        self.failure.set(None);
    }

    fn check(&self) -> Result<()> {
        match self.failure.get() {
            None => Ok(()),
            Some((kernel, error_estimate)) => Err(Error::Quadrature { kernel, error_estimate }),
        }
    }
}

type Kernel = MemoKernel<Box<dyn Fn(f64) -> f64>>;

const SERIES_BELOW: f64 = 1e-6;
const MEMO_ABOVE: f64 = 1e9;

/// `t -> int_0^inf t g / (1 + t g) dw` with `g = (1 + w^2)^(-beta/2)`, the
/// per-unit Laplace exponent of a whole road at unit distance.
struct RoadKernel {
    memo: Kernel,
    series: [f64; 3],
}

/// `t -> int_1^inf t w^-alpha / (1 + t w^-alpha) dw`, the same for the
/// half-road beyond the serving distance.
struct TailKernel {
    memo: Kernel,
    series: [f64; 3],
}

fn road_direct(beta: f64, spec: QuadSpec, diag: Rc<Diag>) -> impl Fn(f64) -> f64 {
    move |t: f64| {
        let s = spec.with_scale(t.powf(1.0 / beta).max(1.0));
        let r = integrate_semi_infinite(|w| t / ((1.0 + w * w).powf(0.5 * beta) + t), 0.0, &s);
        diag.take(r, "G3")
    }
}

fn tail_direct(alpha: f64, spec: QuadSpec, diag: Rc<Diag>) -> impl Fn(f64) -> f64 {
    move |t: f64| {
        let s = spec.with_scale(t.powf(1.0 / alpha).max(1.0));
        let r = integrate_semi_infinite(|w| t / (w.powf(alpha) + t), 1.0, &s);
        diag.take(r, "G1")
    }
}

impl RoadKernel {
    fn new(beta: f64, spec: QuadSpec, diag: Rc<Diag>) -> Self {
        let tight = spec.scaled(0.01);
        let mut series = [0.0; 3];
        for (k, c) in series.iter_mut().enumerate() {
            let e = 0.5 * beta * (k + 1) as f64;
            *c = integrate_semi_infinite(|w| (1.0 + w * w).powf(-e), 0.0, &tight).value;
        }
        let f: Box<dyn Fn(f64) -> f64> = Box::new(road_direct(beta, spec.scaled(0.1), diag));
        RoadKernel {
            memo: MemoKernel::new(f, SERIES_BELOW, MEMO_ABOVE, 0.1 * spec.rel_tol),
            series,
        }
    }

    fn eval(&self, t: f64) -> f64 {
        if t < SERIES_BELOW {
            let [g1, g2, g3] = self.series;
            t * (g1 - t * (g2 - t * g3))
        } else {
            self.memo.eval(t)
        }
    }
}

impl TailKernel {
    fn new(alpha: f64, spec: QuadSpec, diag: Rc<Diag>) -> Self {
        let series = [1.0 / (alpha - 1.0), 1.0 / (2.0 * alpha - 1.0), 1.0 / (3.0 * alpha - 1.0)];
        let f: Box<dyn Fn(f64) -> f64> = Box::new(tail_direct(alpha, spec.scaled(0.1), diag));
        TailKernel {
            memo: MemoKernel::new(f, SERIES_BELOW, MEMO_ABOVE, 0.1 * spec.rel_tol),
            series,
        }
    }

    fn eval(&self, t: f64) -> f64 {
        if t < SERIES_BELOW {
            let [p1, p2, p3] = self.series;
            t * (p1 - t * (p2 - t * p3))
        } else {
            self.memo.eval(t)
        }
    }
}

/// Evaluator for one `(lambda_l, alpha, beta)` and quadrature setting.
/// Holds per-instance kernel caches; not shared across threads.
pub(crate) struct Engine {
    lambda_l: f64,
    alpha: f64,
    beta: f64,
    inner: QuadSpec,
    outer: QuadSpec,
    road: RoadKernel,
    tail: TailKernel,
    diag: Rc<Diag>,
}

fn one_minus_exp(x: f64) -> f64 {
    -(-x).exp_m1()
}

/// `sum_j 2 mu_j x / (a_j + x)`
fn saturation(tiers: &[Tier], x: f64) -> f64 {
    tiers.iter().map(|t| 2.0 * t.mu * x / (t.a + x)).sum()
}

impl Engine {
    pub fn new(lambda_l: f64, alpha: f64, beta: f64, inner: QuadSpec, outer: QuadSpec) -> Self {
        let diag = Rc::new(Diag::default());
        Engine {
            lambda_l,
            alpha,
            beta,
            road: RoadKernel::new(beta, inner, diag.clone()),
            tail: TailKernel::new(alpha, inner, diag.clone()),
            inner,
            outer,
            diag,
        }
    }

    fn own_road(&self, tiers: &[Tier], r: f64, kappa0: f64) -> f64 {
        r * tiers.iter().map(|t| 2.0 * t.mu * self.tail.eval(kappa0 / t.a)).sum::<f64>()
    }

    /// Interference from a road at distance `r cos phi` beyond the chord
    /// half-length `r sin phi`, with `kappa = tau r^(sigma - beta)`.
    fn cross(&self, tiers: &[Tier], r: f64, phi: f64, kappa: f64, name: &'static str) -> f64 {
        let (s, c) = phi.sin_cos();
        let c2 = c * c;
        let hb = -0.5 * self.beta;
        let spec = self.inner.with_scale(kappa.powf(1.0 / self.beta).max(1.0));
        let q = integrate_semi_infinite(|w| saturation(tiers, kappa * (c2 + w * w).powf(hb)), s, &spec);
        r * self.diag.take(q, name)
    }

    /// `-ln` of the generating functional of the roads other than the
    /// receiver's and the serving one.
    fn lines(&self, term: &Term, r: f64, kappa: f64) -> f64 {
        if self.lambda_l == 0.0 {
            return 0.0;
        }
        let v = term.void_lines;
        let near_q = integrate_finite(
            |phi| {
                let x = 2.0 * v * r * phi.sin() + self.cross(&term.tiers, r, phi, kappa, term.names.near);
                one_minus_exp(x) * phi.sin()
            },
            0.0,
            FRAC_PI_2,
            &self.inner,
        );
        let near = r * self.diag.take(near_q, term.names.near);

        let g1 = self.road.series[0];
        let weight: f64 = term.tiers.iter().map(|t| 2.0 * t.mu / t.a).sum();
        let knee = (weight * g1 * kappa * r).powf(1.0 / (self.beta - 1.0));
        let spec = self.inner.with_scale(knee.max(1.0));
        let far_q = integrate_semi_infinite(
            |s| {
                let k = kappa * s.powf(-self.beta);
                let x = r * s * term.tiers.iter().map(|t| 2.0 * t.mu * self.road.eval(k / t.a)).sum::<f64>();
                one_minus_exp(x)
            },
            1.0,
            &spec,
        );
        let far = r * self.diag.take(far_q, term.names.far);
        2.0 * self.lambda_l * (near + far)
    }

    fn serving_road(&self, term: &Term, r: f64, kappa: f64) -> f64 {
        let v = term.void_lines;
        let q = integrate_finite(
            |phi| (-2.0 * v * r * phi.sin() - self.cross(&term.star, r, phi, kappa, term.names.angular)).exp(),
            0.0,
            FRAC_PI_2,
            &self.inner,
        );
        4.0 * self.lambda_l * term.c * r * self.diag.take(q, term.names.angular)
    }

    fn integrand(&self, term: &Term, tau: f64, r: f64) -> f64 {
        let sigma = if term.same_road { self.alpha } else { self.beta };
        let kappa0 = tau * r.powf(sigma - self.alpha);
        let kappa = tau * r.powf(sigma - self.beta);
        let base = 2.0 * term.void_own * r + self.own_road(&term.tiers, r, kappa0);
        if base > 745.0 {
            return 0.0;
        }
        let log_outer = base + self.lines(term, r, kappa);
        if log_outer > 745.0 {
            return 0.0;
        }
        let outer = (-log_outer).exp();
        if term.same_road {
            2.0 * term.c * outer
        } else {
            outer * self.serving_road(term, r, kappa)
        }
    }

    /// Break points for the outer integral: geometric refinement toward
    /// `r = 0` scaled by the SIR threshold, and a cut where the void
    /// factors have killed the integrand.
    fn breaks(&self, term: &Term, tau: f64) -> Vec<f64> {
        let rate = 2.0 * term.void_own + self.lambda_l;
        let scale = 1.0 / (2.0 * (term.void_lines + self.lambda_l));
        let lo = scale * tau.powf(-1.0 / self.alpha).min(1.0) / 64.0;
        let peak = 2.0 * term.c * (1.0 + std::f64::consts::PI * self.lambda_l);
        let mut r_max = 1.0 / rate;
        while r_max < 1e4 && peak * (1.0 + r_max) * (-rate * r_max).exp() > 1e-15 {
            r_max *= 1.5;
        }
        let mut b = vec![0.0];
        let mut x = lo;
        while x < r_max {
            b.push(x);
            x *= 4.0;
        }
        b.push(r_max);
        b
    }

    pub fn term(&self, term: &Term, tau: f64) -> Result<f64> {
        if term.c == 0.0 || (!term.same_road && self.lambda_l == 0.0) {
            return Ok(0.0);
        }
        self.diag.reset();
        let breaks = self.breaks(term, tau);
        let mut total = 0.0;
        for w in breaks.windows(2) {
            let q = integrate_finite(|r| self.integrand(term, tau, r), w[0], w[1], &self.outer);
            total += q.require(if term.same_road { term.names.own } else { term.names.angular })?;
        }
        self.diag.check()?;
        Ok(total)
    }
}
