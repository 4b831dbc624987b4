use std::cell::{Cell, RefCell};
use std::collections::HashMap;

const PROBES: usize = 64;
const MAX_HALVINGS: u32 = 12;
const START_STEP: f64 = 0.25;

/// Lazily tabulated positive kernel `t -> f(t)` on `[t_lo, t_hi]`.
///
/// Values are interpolated in `(ln t, ln f)` by cubic Hermite splines on a
/// uniform grid whose nodes are evaluated on first use. Derivatives come
/// from 5-point differences and pass through a Fritsch-Carlson limiter, so
/// monotone kernels stay monotone. Queries outside the range, or near a
/// node where `f` is not positive and finite, go straight to `f`.
///
/// The cache is not shared between threads; build one per worker.
pub struct MemoKernel<F> {
    f: F,
    ln_lo: f64,
    ln_hi: f64,
    step: f64,
    nodes: RefCell<HashMap<i64, f64>>,
    calls: Cell<usize>,
}

impl<F: Fn(f64) -> f64> MemoKernel<F> {
    /// Grid step chosen by probing until the interpolation error at
    /// off-grid points is below `rel_budget` relative.
    pub fn new(f: F, t_lo: f64, t_hi: f64, rel_budget: f64) -> Self {
        let mut k = Self::with_step(f, t_lo, t_hi, START_STEP);
        let span = k.ln_hi - k.ln_lo;
        for _ in 0..MAX_HALVINGS {
            let mut worst = 0.0f64;
            for j in 0..PROBES {
                // low-discrepancy offsets so probes never sit on nodes
                let frac = ((j as f64 + 0.5) * 0.618_033_988_749_895).fract();
                let x = k.ln_lo + span * (j as f64 + frac) / PROBES as f64;
                let t = x.exp();
                let direct = k.direct(t);
                if let Some(v) = k.interpolate(x) {
                    if direct != 0.0 {
                        worst = worst.max((v / direct - 1.0).abs());
                    }
                }
            }
            if worst <= rel_budget {
                break;
            }
            k.step *= 0.5;
            k.nodes.borrow_mut().clear();
        }
        k
    }

    pub fn with_step(f: F, t_lo: f64, t_hi: f64, step: f64) -> Self {
        assert!(t_lo > 0.0 && t_hi > t_lo && step > 0.0);
        MemoKernel {
            f,
            ln_lo: t_lo.ln(),
            ln_hi: t_hi.ln(),
            step,
            nodes: RefCell::new(HashMap::new()),
            calls: Cell::new(0),
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Total calls made to the underlying kernel.
    pub fn evaluations(&self) -> usize {
        self.calls.get()
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t > 0.0 {
            let x = t.ln();
            if x >= self.ln_lo && x <= self.ln_hi {
                if let Some(v) = self.interpolate(x) {
                    return v;
                }
            }
        }
        self.direct(t)
    }

    fn direct(&self, t: f64) -> f64 {
        self.calls.set(self.calls.get() + 1);
        (self.f)(t)
    }

    fn node(&self, i: i64) -> f64 {
        if let Some(&v) = self.nodes.borrow().get(&i) {
            return v;
        }
        let t = (self.ln_lo + i as f64 * self.step).exp();
        let v = self.direct(t);
        let lv = if v > 0.0 && v.is_finite() { v.ln() } else { f64::NAN };
        self.nodes.borrow_mut().insert(i, lv);
        lv
    }

    fn interpolate(&self, x: f64) -> Option<f64> {
        let h = self.step;
        let pos = (x - self.ln_lo) / h;
        let i = pos.floor() as i64;
        let u = pos - i as f64;
        let v: Vec<f64> = (i - 2..=i + 3).map(|j| self.node(j)).collect();
        if v.iter().any(|y| y.is_nan()) {
            return None;
        }
        let (y0, y1) = (v[2], v[3]);
        let mut d0 = (v[0] - 8.0 * v[1] + 8.0 * v[3] - v[4]) / (12.0 * h);
        let mut d1 = (v[1] - 8.0 * v[2] + 8.0 * v[4] - v[5]) / (12.0 * h);
        let secant = (y1 - y0) / h;
        if secant == 0.0 {
            d0 = 0.0;
            d1 = 0.0;
        } else {
            let (a, b) = (d0 / secant, d1 / secant);
            if a < 0.0 {
                d0 = 0.0;
            }
            if b < 0.0 {
                d1 = 0.0;
            }
            let r2 = a * a + b * b;
            if r2 > 9.0 {
                let s = 3.0 / r2.sqrt();
                d0 *= s;
                d1 *= s;
            }
        }
        let u2 = u * u;
        let u3 = u2 * u;
        let y = (2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * h * d0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * h * d1;
        Some(y.exp())
    }
}
