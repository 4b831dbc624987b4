//! Palm Monte Carlo estimators: association, coverage, spectral efficiency
//! and mean loads.
//!
//! Replication `i` draws everything from `Stream::new(seed).child(i)`, so
//! results do not depend on the number of worker threads. Partial
//! statistics are computed per chunk and merged in chunk order.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::channel::{sir_relay, sir_user, KeyedFading};
use crate::config::NetworkConfig;
use crate::cox::{build_realization_with, nearest_lazily, nearest_rsu, nearest_transmitter, PalmKind, TransmitterKind};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::stream::Stream;

const CHUNK: usize = 256;
const FADING_TAG: u64 = 0xFAD;
const BOTH: [TransmitterKind; 2] = [TransmitterKind::Rsu, TransmitterKind::Relay];
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McSettings {
    pub reps: usize,
    pub window_radius: f64,
    pub seed: u64,
}

impl McSettings {
    pub fn new(reps: usize, window_radius: f64, seed: u64) -> Self {
        McSettings {
            reps,
            window_radius,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::invalid("reps", "must be >= 1"));
        }
        if !(self.window_radius > 0.0) || !self.window_radius.is_finite() {
            return Err(Error::invalid("window_radius", format!("{} must be finite and > 0", self.window_radius)));
        }
        Ok(())
    }

    fn stream(&self, rep: usize) -> Stream {
        Stream::new(self.seed).child(rep as u64)
    }
}

pub const DEFAULT_ASSOC_REPS: usize = 100_000;
pub const DEFAULT_COVERAGE_REPS: usize = 20_000;

/// `15 / min(mu_s + mu_r, lambda_l)` km clamped to `[10, 50]`.
pub fn default_window_radius(cfg: &NetworkConfig) -> f64 {
    let m = cfg.mu_tx().min(cfg.lambda_l);
    if m > 0.0 {
        (15.0 / m).clamp(10.0, 50.0)
    } else {
        50.0
    }
}

/// Wilson score interval at 95%: `(center, halfwidth)`.
pub fn wilson(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = Z95 * Z95;
    let d = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / d;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / d;
    (center, half)
}

fn chunked<T, F>(reps: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync,
{
    let n_chunks = reps.div_ceil(CHUNK);
    (0..n_chunks)
        .into_par_iter()
        .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(reps)))
        .collect()
}

/// One Palm sample of the typical user's downlink.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UserSample {
    pub kind: TransmitterKind,
    pub same_line: bool,
    pub distance: f64,
    pub sir: f64,
}

/// `None` when the window holds no transmitter.
pub fn sample_user(cfg: &NetworkConfig, window_radius: f64, stream: Stream) -> Result<Option<UserSample>> {
    let real = build_realization_with(cfg, window_radius, PalmKind::TypicalUser, stream, false)?;
    let a = match nearest_transmitter(&real) {
        Ok(a) => a,
        Err(Error::NoTransmitter) => return Ok(None),
        Err(e) => return Err(e),
    };
    let b = sir_user(cfg, &real, &a, &mut KeyedFading(stream.child(FADING_TAG)))?;
    Ok(Some(UserSample {
        kind: a.transmitter.kind,
        same_line: a.same_line,
        distance: a.distance,
        sir: b.sir,
    }))
}

/// SIR of the typical relay's backhaul; `None` without an RSU in the window.
pub fn sample_relay_sir(cfg: &NetworkConfig, window_radius: f64, stream: Stream) -> Result<Option<f64>> {
    let real = build_realization_with(cfg, window_radius, PalmKind::TypicalRelay, stream, false)?;
    let a = match nearest_rsu(&real) {
        Ok(a) => a,
        Err(Error::NoTransmitter) => return Ok(None),
        Err(e) => return Err(e),
    };
    Ok(Some(sir_relay(cfg, &real, &a, &mut KeyedFading(stream.child(FADING_TAG)))?.sir))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssociationStats {
    /// Replications with at least one transmitter in the window.
    pub n: u64,
    pub n_empty: u64,
    pub n_as_e: u64,
    pub n_as_ec: u64,
    pub n_ar_e: u64,
    pub n_ar_ec: u64,
    pub p_as: f64,
    pub p_ar: f64,
    pub p_as_e: f64,
    pub p_as_ec: f64,
    pub p_ar_e: f64,
    pub p_ar_ec: f64,
    /// 95% Wilson halfwidth for `p_as`.
    pub ci_halfwidth: f64,
}

impl AssociationStats {
    fn from_counts(c: [u64; 5]) -> Self {
        let [as_e, as_ec, ar_e, ar_ec, empty] = c;
        let n = as_e + as_ec + ar_e + ar_ec;
        let nf = n as f64;
        let (_, half) = wilson(as_e + as_ec, n);
        AssociationStats {
            n,
            n_empty: empty,
            n_as_e: as_e,
            n_as_ec: as_ec,
            n_ar_e: ar_e,
            n_ar_ec: ar_ec,
            p_as: (as_e + as_ec) as f64 / nf,
            p_ar: (ar_e + ar_ec) as f64 / nf,
            p_as_e: as_e as f64 / nf,
            p_as_ec: as_ec as f64 / nf,
            p_ar_e: ar_e as f64 / nf,
            p_ar_ec: ar_ec as f64 / nf,
            ci_halfwidth: half,
        }
    }
}

fn association_counts(cfg: &NetworkConfig, mc: &McSettings) -> Result<[u64; 5]> {
    let parts = chunked(mc.reps, |range| -> Result<[u64; 5]> {
        let mut c = [0u64; 5];
        for i in range {
            match nearest_lazily(cfg, mc.window_radius, PalmKind::TypicalUser, mc.stream(i), &BOTH)? {
                Some(a) => {
                    let slot = match (a.kind, a.same_line) {
                        (TransmitterKind::Rsu, true) => 0,
                        (TransmitterKind::Rsu, false) => 1,
                        (TransmitterKind::Relay, true) => 2,
                        (TransmitterKind::Relay, false) => 3,
                    };
                    c[slot] += 1;
                }
                None => c[4] += 1,
            }
        }
        Ok(c)
    });
    let mut total = [0u64; 5];
    for p in parts {
        for (t, x) in total.iter_mut().zip(p?) {
            *t += x;
        }
    }
    Ok(total)
}

pub fn estimate_association(cfg: &NetworkConfig, mc: &McSettings) -> Result<AssociationStats> {
    cfg.validate()?;
    mc.validate()?;
    Ok(AssociationStats::from_counts(association_counts(cfg, mc)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveKind {
    UserTotal,
    UserGivenAs,
    UserGivenAr,
    Relay,
}

impl CurveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveKind::UserTotal => "user_total",
            CurveKind::UserGivenAs => "user_given_As",
            CurveKind::UserGivenAr => "user_given_Ar",
            CurveKind::Relay => "relay",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverageCurve {
    pub kind: CurveKind,
    pub taus_db: Vec<f64>,
    pub taus: Vec<f64>,
    /// Samples behind every point of the curve.
    pub n: u64,
    pub covered: Vec<u64>,
    pub probs: Vec<f64>,
    pub ci_halfwidths: Vec<f64>,
}

impl CoverageCurve {
    fn new(kind: CurveKind, taus_db: &[f64], n: u64, covered: Vec<u64>) -> Self {
        let probs = covered.iter().map(|&k| if n > 0 { k as f64 / n as f64 } else { f64::NAN }).collect();
        let ci_halfwidths = covered.iter().map(|&k| wilson(k, n).1).collect();
        CoverageCurve {
            kind,
            taus_db: taus_db.to_vec(),
            taus: taus_db.iter().map(|&d| 10f64.powf(d / 10.0)).collect(),
            n,
            covered,
            probs,
            ci_halfwidths,
        }
    }
}

/// Sample mean of `log2(1 + SIR)` with a 95% normal halfwidth. Samples
/// without interference are left out.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RateEstimate {
    pub mean: f64,
    pub ci_halfwidth: f64,
    pub n: u64,
}

#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    n: u64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    fn estimate(&self) -> RateEstimate {
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = (self.sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
        RateEstimate {
            mean,
            ci_halfwidth: Z95 * (var / n).sqrt(),
            n: self.n,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserCoverage {
    pub total: CoverageCurve,
    pub given_as: CoverageCurve,
    pub given_ar: CoverageCurve,
    pub association: AssociationStats,
    /// Covered counts per threshold, split as RSU same road, RSU other
    /// road, relay same road, relay other road. Divided by `total.n` these
    /// are the joint coverage components.
    pub joint_covered: [Vec<u64>; 4],
    /// Mean spectral efficiency of RSU-served and relay-served users.
    pub rate_as: RateEstimate,
    pub rate_ar: RateEstimate,
}

fn check_taus(taus_db: &[f64]) -> Result<()> {
    if taus_db.is_empty() {
        return Err(Error::invalid("taus", "need at least one threshold"));
    }
    if taus_db.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("taus", "thresholds must be finite"));
    }
    Ok(())
}

#[derive(Clone, Default)]
struct UserPartial {
    assoc: [u64; 5],
    cov: [Vec<u64>; 4],
    rate_as: Moments,
    rate_ar: Moments,
}

pub fn estimate_user_coverage(cfg: &NetworkConfig, taus_db: &[f64], mc: &McSettings) -> Result<UserCoverage> {
    cfg.validate()?;
    mc.validate()?;
    check_taus(taus_db)?;
    let taus: Vec<f64> = taus_db.iter().map(|&d| 10f64.powf(d / 10.0)).collect();
    let parts = chunked(mc.reps, |range| -> Result<UserPartial> {
        let mut p = UserPartial {
            cov: std::array::from_fn(|_| vec![0; taus.len()]),
            ..Default::default()
        };
        for i in range {
            let Some(s) = sample_user(cfg, mc.window_radius, mc.stream(i))? else {
                p.assoc[4] += 1;
                continue;
            };
            let (slot, rate) = match s.kind {
                TransmitterKind::Rsu => (if s.same_line { 0 } else { 1 }, &mut p.rate_as),
                TransmitterKind::Relay => (if s.same_line { 2 } else { 3 }, &mut p.rate_ar),
            };
            p.assoc[slot] += 1;
            for (k, &t) in p.cov[slot].iter_mut().zip(&taus) {
                if s.sir > t {
                    *k += 1;
                }
            }
            if s.sir.is_finite() {
                rate.push((1.0 + s.sir).log2());
            }
        }
        Ok(p)
    });
    let mut acc = UserPartial {
        cov: std::array::from_fn(|_| vec![0; taus.len()]),
        ..Default::default()
    };
    for p in parts {
        let p = p?;
        for (a, b) in acc.assoc.iter_mut().zip(p.assoc) {
            *a += b;
        }
        for (acc_c, c) in acc.cov.iter_mut().zip(&p.cov) {
            for (a, b) in acc_c.iter_mut().zip(c) {
                *a += b;
            }
        }
        acc.rate_as.merge(&p.rate_as);
        acc.rate_ar.merge(&p.rate_ar);
    }
    let association = AssociationStats::from_counts(acc.assoc);
    let n_as = association.n_as_e + association.n_as_ec;
    let n_ar = association.n_ar_e + association.n_ar_ec;
    let sum = |x: usize, y: usize| -> Vec<u64> { acc.cov[x].iter().zip(&acc.cov[y]).map(|(a, b)| a + b).collect() };
    let cov_as = sum(0, 1);
    let cov_ar = sum(2, 3);
    let covered_total = cov_as.iter().zip(&cov_ar).map(|(a, b)| a + b).collect();
    Ok(UserCoverage {
        total: CoverageCurve::new(CurveKind::UserTotal, taus_db, association.n, covered_total),
        given_as: CoverageCurve::new(CurveKind::UserGivenAs, taus_db, n_as, cov_as),
        given_ar: CoverageCurve::new(CurveKind::UserGivenAr, taus_db, n_ar, cov_ar),
        association,
        joint_covered: acc.cov,
        rate_as: acc.rate_as.estimate(),
        rate_ar: acc.rate_ar.estimate(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelayCoverage {
    pub curve: CoverageCurve,
    pub rate: RateEstimate,
    /// Replications without an RSU in the window.
    pub n_empty: u64,
}

pub fn estimate_relay_coverage(cfg: &NetworkConfig, taus_db: &[f64], mc: &McSettings) -> Result<RelayCoverage> {
    cfg.validate()?;
    mc.validate()?;
    check_taus(taus_db)?;
    let taus: Vec<f64> = taus_db.iter().map(|&d| 10f64.powf(d / 10.0)).collect();
    let parts = chunked(mc.reps, |range| -> Result<(Vec<u64>, u64, u64, Moments)> {
        let mut cov = vec![0u64; taus.len()];
        let (mut n, mut empty) = (0u64, 0u64);
        let mut rate = Moments::default();
        for i in range {
            match sample_relay_sir(cfg, mc.window_radius, mc.stream(i))? {
                None => empty += 1,
                Some(sir) => {
                    n += 1;
                    for (k, &t) in cov.iter_mut().zip(&taus) {
                        if sir > t {
                            *k += 1;
                        }
                    }
                    if sir.is_finite() {
                        rate.push((1.0 + sir).log2());
                    }
                }
            }
        }
        Ok((cov, n, empty, rate))
    });
    let mut cov = vec![0u64; taus.len()];
    let (mut n, mut n_empty) = (0u64, 0u64);
    let mut rate = Moments::default();
    for p in parts {
        let (c, k, e, r) = p?;
        for (a, b) in cov.iter_mut().zip(c) {
            *a += b;
        }
        n += k;
        n_empty += e;
        rate.merge(&r);
    }
    Ok(RelayCoverage {
        curve: CoverageCurve::new(CurveKind::Relay, taus_db, n, cov),
        rate: rate.estimate(),
        n_empty,
    })
}

/// Ratio estimate with a 95% delta-method halfwidth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioEstimate {
    pub value: f64,
    pub ci_halfwidth: f64,
}

fn ratio(pairs: &[(f64, f64)]) -> RatioEstimate {
    let n = pairs.len() as f64;
    let sx: f64 = pairs.iter().map(|p| p.0).sum();
    let sy: f64 = pairs.iter().map(|p| p.1).sum();
    let r = sx / sy;
    let ybar = sy / n;
    let var = pairs.iter().map(|&(x, y)| (x - r * y).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    RatioEstimate {
        value: r,
        ci_halfwidth: Z95 * (var / n).sqrt() / ybar,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadStats {
    /// Palm ratio estimates from the association frequencies.
    pub palm_users_per_rsu: RatioEstimate,
    pub palm_users_per_relay: Option<RatioEstimate>,
    /// Direct counts in the inner half of the window.
    pub count_users_per_rsu: RatioEstimate,
    pub count_users_per_relay: Option<RatioEstimate>,
    pub count_relays_per_rsu: RatioEstimate,
    /// Inner window under four typical association distances.
    pub small_window_warning: bool,
    pub inner_radius: f64,
}

/// Uniform bucket grid over `[-r, r]^2` for nearest-point queries.
struct Grid {
    r: f64,
    cell: f64,
    side: usize,
    buckets: Vec<Vec<(Point2, TransmitterKind)>>,
}

impl Grid {
    fn new(r: f64, cell: f64, pts: impl Iterator<Item = (Point2, TransmitterKind)>) -> Self {
        let side = ((2.0 * r / cell).ceil() as usize).max(1);
        let mut g = Grid {
            r,
            cell,
            side,
            buckets: vec![Vec::new(); side * side],
        };
        for (p, k) in pts {
            let (i, j) = g.index(p);
            g.buckets[j * side + i].push((p, k));
        }
        g
    }

    fn index(&self, p: Point2) -> (usize, usize) {
        let f = |x: f64| (((x + self.r) / self.cell).floor().max(0.0) as usize).min(self.side - 1);
        (f(p.x), f(p.y))
    }

    fn nearest(&self, q: Point2) -> Option<TransmitterKind> {
        let (ci, cj) = self.index(q);
        let mut best: Option<(f64, TransmitterKind)> = None;
        for ring in 0..self.side {
            // every point outside this ring is at least `ring * cell` away
            if let Some((d, _)) = best {
                if d < (ring as f64 - 1.0).max(0.0) * self.cell {
                    break;
                }
            }
            let lo_i = ci.saturating_sub(ring);
            let hi_i = (ci + ring).min(self.side - 1);
            let lo_j = cj.saturating_sub(ring);
            let hi_j = (cj + ring).min(self.side - 1);
            for j in lo_j..=hi_j {
                for i in lo_i..=hi_i {
                    let on_ring = i.abs_diff(ci) == ring || j.abs_diff(cj) == ring;
                    if !on_ring {
                        continue;
                    }
                    for &(p, k) in &self.buckets[j * self.side + i] {
                        let d = p.distance(q);
                        let better = match best {
                            None => true,
                            Some((bd, bk)) => d < bd || (d == bd && k < bk),
                        };
                        if better {
                            best = Some((d, k));
                        }
                    }
                }
            }
        }
        best.map(|b| b.1)
    }
}

pub fn estimate_loads(cfg: &NetworkConfig, mc: &McSettings, palm_reps: usize) -> Result<LoadStats> {
    cfg.validate()?;
    mc.validate()?;
    let NetworkConfig { mu_s, mu_r, mu_u, .. } = *cfg;
    if mu_s == 0.0 {
        return Err(Error::UndefinedLoad("no RSUs (mu_s = 0)"));
    }
    let assoc = estimate_association(cfg, &McSettings { reps: palm_reps, ..*mc })?;
    let scale_s = mu_u / mu_s;
    let palm_users_per_rsu = RatioEstimate {
        value: scale_s * assoc.p_as,
        ci_halfwidth: scale_s * assoc.ci_halfwidth,
    };
    let palm_users_per_relay = (mu_r > 0.0).then(|| RatioEstimate {
        value: mu_u / mu_r * assoc.p_ar,
        ci_halfwidth: mu_u / mu_r * assoc.ci_halfwidth,
    });

    let inner = 0.5 * mc.window_radius;
    let typical = 1.0 / (2.0 * cfg.mu_tx());
    let cell = (1.0 / cfg.mu_tx().max(1e-9)).clamp(0.05, mc.window_radius);
    // per replication: users->RSU, users->relay, RSUs, relays, relays->RSU
    let parts = chunked(mc.reps, |range| -> Result<Vec<[f64; 5]>> {
        let mut out = Vec::with_capacity(range.len());
        for i in range {
            let real = build_realization_with(cfg, mc.window_radius, PalmKind::None, mc.stream(i), true)?;
            let mut tx = Vec::new();
            let mut rsus = Vec::new();
            let mut row = [0.0; 5];
            for (line, pts) in real.lines.lines.iter().zip(&real.points) {
                for &t in &pts.rsus {
                    let p = line.point_at(t);
                    tx.push((p, TransmitterKind::Rsu));
                    rsus.push((p, TransmitterKind::Rsu));
                    if p.norm() <= inner {
                        row[2] += 1.0;
                    }
                }
                for &t in &pts.relays {
                    let p = line.point_at(t);
                    tx.push((p, TransmitterKind::Relay));
                    if p.norm() <= inner {
                        row[3] += 1.0;
                    }
                }
            }
            let grid = Grid::new(mc.window_radius, cell, tx.into_iter());
            let rsu_grid = Grid::new(mc.window_radius, (1.0 / mu_s).clamp(0.05, mc.window_radius), rsus.into_iter());
            for (line, pts) in real.lines.lines.iter().zip(&real.points) {
                for &t in &pts.users {
                    let p = line.point_at(t);
                    if p.norm() > inner {
                        continue;
                    }
                    match grid.nearest(p) {
                        Some(TransmitterKind::Rsu) => row[0] += 1.0,
                        Some(TransmitterKind::Relay) => row[1] += 1.0,
                        None => {}
                    }
                }
                for &t in &pts.relays {
                    let p = line.point_at(t);
                    if p.norm() <= inner && rsu_grid.nearest(p).is_some() {
                        row[4] += 1.0;
                    }
                }
            }
            out.push(row);
        }
        Ok(out)
    });
    let mut rows = Vec::with_capacity(mc.reps);
    for p in parts {
        rows.extend(p?);
    }
    let col = |x: usize, y: usize| ratio(&rows.iter().map(|r| (r[x], r[y])).collect::<Vec<_>>());
    Ok(LoadStats {
        palm_users_per_rsu,
        palm_users_per_relay,
        count_users_per_rsu: col(0, 2),
        count_users_per_relay: (mu_r > 0.0).then(|| col(1, 3)),
        count_relays_per_rsu: col(4, 2),
        small_window_warning: inner < 4.0 * typical,
        inner_radius: inner,
    })
}

/// `tau_db,p_cov,ci,kind` rows for each curve.
pub fn coverage_csv(curves: &[&CoverageCurve]) -> String {
    let mut s = String::from("tau_db,p_cov,ci,kind\n");
    for c in curves {
        for i in 0..c.taus_db.len() {
            let _ = writeln!(s, "{},{:.6},{:.6},{}", c.taus_db[i], c.probs[i], c.ci_halfwidths[i], c.kind.as_str());
        }
    }
    s
}
