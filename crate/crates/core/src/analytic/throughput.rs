use std::cell::RefCell;

use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::quad::{integrate_finite, QuadSpec};

/// Coverage below which the spectral integrand is dropped.
const COVERAGE_FLOOR: f64 = 1e-5;
const XI_CAP: f64 = 256.0;

/// `int_0^inf P(SIR > 2^xi - 1) dxi = E[log2(1 + SIR)]`, truncated where
/// the coverage falls below 1e-5. `coverage` takes a linear threshold.
pub fn spectral_integral<F>(coverage: F, spec: &QuadSpec) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let coverage = RefCell::new(coverage);
    let cov = |xi: f64| -> Result<f64> { (coverage.borrow_mut())(xi.exp2() - 1.0) };

    // bracket the truncation point, then narrow it coarsely
    let mut hi = 1.0;
    while hi < XI_CAP && cov(hi)? >= COVERAGE_FLOOR {
        hi *= 2.0;
    }
    let mut lo = if hi > 1.0 { 0.5 * hi } else { 0.0 };
    for _ in 0..8 {
        let mid = 0.5 * (lo + hi);
        if cov(mid)? >= COVERAGE_FLOOR {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let mut failed = None;
    let q = integrate_finite(
        |xi| match cov(xi) {
            Ok(v) => v,
            Err(e) => {
                failed.get_or_insert(e);
                0.0
            }
        },
        0.0,
        hi,
        spec,
    );
    if let Some(e) = failed {
        return Err(e);
    }
    q.require("spectral")
}

/// Association probability and the three spectral efficiencies (bits/s/Hz):
/// RSU to user, relay to user, RSU to relay. None depends on the bandwidth
/// split, so one set serves a whole sweep over `W2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralSet {
    pub p_as: f64,
    pub i_su: f64,
    pub i_ru: f64,
    pub i_sr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Backhaul,
    Access,
    /// No relays.
    Absent,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThroughputReport {
    /// Mbps with bandwidths in MHz.
    pub t_total: f64,
    pub t_s: f64,
    pub t_r: f64,
    pub backhaul_branch: f64,
    pub access_branch: f64,
    pub limiting: Branch,
    pub p_as: f64,
    pub p_ar: f64,
    pub u_bar_s: f64,
    pub u_bar_r: f64,
    pub r_bar_s: f64,
    pub i_su: f64,
    pub i_ru: f64,
    pub i_sr: f64,
}

/// Mean-load normalized user throughput for the bandwidths in `cfg`.
pub fn throughput_from(cfg: &NetworkConfig, s: &SpectralSet) -> Result<ThroughputReport> {
    let NetworkConfig { mu_s, mu_r, mu_u, w1, w2, .. } = *cfg;
    if mu_s == 0.0 {
        return Err(Error::UndefinedLoad("no RSUs (mu_s = 0)"));
    }
    if mu_u == 0.0 {
        return Err(Error::UndefinedLoad("no users (mu_u = 0)"));
    }
    let p_as = s.p_as;
    let p_ar = 1.0 - p_as;
    let u_bar_s = mu_u * p_as / mu_s;
    let r_bar_s = mu_r / mu_s;
    let t_s = w1 * s.i_su / u_bar_s;
    let (u_bar_r, backhaul_branch, access_branch, t_r, limiting) = if mu_r > 0.0 {
        let u_bar_r = mu_u * p_ar / mu_r;
        let back = w2 * s.i_sr / (r_bar_s * u_bar_r);
        let access = w1 * s.i_ru / u_bar_r;
        let limiting = if back < access { Branch::Backhaul } else { Branch::Access };
        (u_bar_r, back, access, back.min(access), limiting)
    } else {
        (0.0, 0.0, 0.0, 0.0, Branch::Absent)
    };
    Ok(ThroughputReport {
        t_total: p_as * t_s + p_ar * t_r,
        t_s,
        t_r,
        backhaul_branch,
        access_branch,
        limiting,
        p_as,
        p_ar,
        u_bar_s,
        u_bar_r,
        r_bar_s,
        i_su: s.i_su,
        i_ru: s.i_ru,
        i_sr: s.i_sr,
    })
}
