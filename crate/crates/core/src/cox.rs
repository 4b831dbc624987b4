//! Network realizations: RSU, relay and user Poisson processes placed on a
//! shared line-process sample.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::geometry::{palm_condition_line, sample_line_process, LineProcessSample, Point2};
use crate::stream::{mix64, Stream};

/// Points on a line are generated in unit blocks of arc length, one
/// substream per block, so a longer chord only appends points.
const BLOCK_KM: f64 = 1.0;

const TIE_KM: f64 = 1e-12;

const LINES_TAG: u64 = 1;
const PALM_TAG: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TransmitterKind {
    Rsu,
    Relay,
}

impl TransmitterKind {
    fn tag(self) -> u64 {
        match self {
            TransmitterKind::Rsu => 0x525355,
            TransmitterKind::Relay => 0x524C59,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TransmitterKind::Rsu => "rsu",
            TransmitterKind::Relay => "relay",
        }
    }
}

const USER_TAG: u64 = 0x555352;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PalmKind {
    None,
    TypicalUser,
    TypicalRelay,
}

/// Sorted 1-D coordinates (km along the line, measured from the foot of
/// the perpendicular) of the points on one line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinePoints {
    pub rsus: Vec<f64>,
    pub relays: Vec<f64>,
    pub users: Vec<f64>,
}

impl LinePoints {
    pub fn transmitters(&self, kind: TransmitterKind) -> &[f64] {
        match kind {
            TransmitterKind::Rsu => &self.rsus,
            TransmitterKind::Relay => &self.relays,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Realization {
    pub lines: LineProcessSample,
    pub points: Vec<LinePoints>,
    pub palm_kind: PalmKind,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transmitter {
    pub position: Point2,
    pub kind: TransmitterKind,
    pub line_index: usize,
    /// Coordinate along `lines[line_index]`.
    pub coordinate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Association {
    pub transmitter: Transmitter,
    pub distance: f64,
    /// The transmitter lies on the Palm line (the receiver's own road).
    pub same_line: bool,
}

pub fn sample_ppp_on_segment<R: Rng + ?Sized>(intensity: f64, halfspan: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !intensity.is_finite() || intensity < 0.0 {
        return Err(Error::invalid("intensity", format!("{intensity} must be finite and >= 0")));
    }
    if !halfspan.is_finite() || halfspan <= 0.0 {
        return Err(Error::invalid("halfspan", format!("{halfspan} must be finite and > 0")));
    }
    let mean = 2.0 * halfspan * intensity;
    if mean == 0.0 {
        return Ok(Vec::new());
    }
    let n = Poisson::new(mean).expect("positive mean").sample(rng) as usize;
    let mut pts: Vec<f64> = (0..n).map(|_| halfspan * (2.0 * rng.random::<f64>() - 1.0)).collect();
    pts.sort_by(f64::total_cmp);
    Ok(pts)
}

/// Points of block `j` that fall in `[lo, hi]`, appended sorted.
fn sample_block(per_block: &Poisson<f64>, j: i64, lo: f64, hi: f64, stream: Stream, out: &mut Vec<f64>) {
    let mut rng = stream.child_signed(j).rng();
    let n = per_block.sample(&mut rng) as usize;
    let start = out.len();
    for _ in 0..n {
        let t = (j as f64 + rng.random::<f64>()) * BLOCK_KM;
        if t >= lo && t <= hi {
            out.push(t);
        }
    }
    out[start..].sort_by(f64::total_cmp);
}

/// Poisson process of `intensity` on `[lo, hi]`, generated block by block.
fn sample_ppp_blocks(intensity: f64, lo: f64, hi: f64, stream: Stream) -> Vec<f64> {
    if intensity == 0.0 || hi < lo {
        return Vec::new();
    }
    let per_block = Poisson::new(intensity * BLOCK_KM).expect("positive mean");
    let first = (lo / BLOCK_KM).floor() as i64;
    let last = (hi / BLOCK_KM).floor() as i64;
    let mut out = Vec::new();
    for j in first..=last {
        sample_block(&per_block, j, lo, hi, stream, &mut out);
    }
    out
}

/// Serving transmitter found by [`nearest_lazily`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NearestInfo {
    pub kind: TransmitterKind,
    pub line_index: usize,
    pub coordinate: f64,
    pub distance: f64,
    pub same_line: bool,
}

/// Nearest transmitter of `kinds` to the origin, sampling only the blocks
/// that can hold it. Returns the same transmitter as building the full
/// realization with `palm_kind` and calling the matching `nearest_*`.
pub fn nearest_lazily(
    cfg: &NetworkConfig,
    window_radius: f64,
    palm_kind: PalmKind,
    stream: Stream,
    kinds: &[TransmitterKind],
) -> Result<Option<NearestInfo>> {
    if !window_radius.is_finite() || window_radius <= 0.0 {
        return Err(Error::invalid("window_radius", format!("{window_radius} must be finite and > 0")));
    }
    cfg.validate()?;
    let mut lines = sample_line_process(cfg.lambda_l, window_radius, stream.child(LINES_TAG))?;
    if palm_kind != PalmKind::None {
        lines = palm_condition_line(lines, stream.child(PALM_TAG));
    }
    let mut order: Vec<usize> = (0..lines.len()).collect();
    order.sort_by(|&a, &b| lines.lines[a].r.abs().total_cmp(&lines.lines[b].r.abs()));

    let mut best: Option<(f64, TransmitterKind, usize, f64)> = None;
    let consider = |d: f64, kind: TransmitterKind, li: usize, t: f64, best: &mut Option<(f64, TransmitterKind, usize, f64)>| {
        let better = match *best {
            None => true,
            Some((bd, bk, bl, bt)) => {
                if (d - bd).abs() <= TIE_KM {
                    (kind, li, t) < (bk, bl, bt)
                } else {
                    d < bd
                }
            }
        };
        if better {
            *best = Some((d, kind, li, t));
        }
    };
    let out_of_reach = |d: f64, best: &Option<(f64, TransmitterKind, usize, f64)>| best.is_some_and(|b| d > b.0 + TIE_KM);

    for li in order {
        let line = lines.lines[li];
        if out_of_reach(line.r.abs(), &best) {
            break;
        }
        let half = line.half_chord(window_radius).unwrap_or(0.0);
        for &kind in kinds {
            let intensity = match kind {
                TransmitterKind::Rsu => cfg.mu_s,
                TransmitterKind::Relay => cfg.mu_r,
            };
            let palm_here = palm_kind == PalmKind::TypicalRelay && kind == TransmitterKind::Relay && lines.palm_line == Some(li);
            if palm_here {
                consider(0.0, kind, li, 0.0, &mut best);
            }
            if intensity == 0.0 {
                continue;
            }
            let per_block = Poisson::new(intensity * BLOCK_KM).expect("positive mean");
            let s = lines.streams[li].child(kind.tag());
            let first = (-half / BLOCK_KM).floor() as i64;
            let last = (half / BLOCK_KM).floor() as i64;
            // forward side: smallest t >= 0; backward side: largest t < 0
            for forward in [true, false] {
                let mut buf = Vec::new();
                let mut m: i64 = 0;
                loop {
                    let j = if forward { m } else { -1 - m };
                    if j < first || j > last {
                        break;
                    }
                    let edge = m as f64 * BLOCK_KM;
                    if out_of_reach(line.distance_from_origin(edge), &best) {
                        break;
                    }
                    buf.clear();
                    sample_block(&per_block, j, -half, half, s, &mut buf);
                    let hit = if forward {
                        buf.iter().copied().find(|&t| t >= 0.0)
                    } else {
                        buf.iter().rev().copied().find(|&t| t < 0.0)
                    };
                    if let Some(t) = hit {
                        consider(line.distance_from_origin(t), kind, li, t, &mut best);
                        break;
                    }
                    m += 1;
                }
            }
        }
    }
    Ok(best.map(|(distance, kind, line_index, coordinate)| NearestInfo {
        kind,
        line_index,
        coordinate,
        distance,
        same_line: lines.palm_line == Some(line_index),
    }))
}

fn insert_sorted(v: &mut Vec<f64>, x: f64) {
    let i = v.partition_point(|&t| t < x);
    v.insert(i, x);
}

pub fn build_realization(cfg: &NetworkConfig, window_radius: f64, palm_kind: PalmKind, stream: Stream) -> Result<Realization> {
    build_realization_with(cfg, window_radius, palm_kind, stream, true)
}

/// As [`build_realization`], optionally skipping the user process when
/// only transmitters matter.
pub fn build_realization_with(
    cfg: &NetworkConfig,
    window_radius: f64,
    palm_kind: PalmKind,
    stream: Stream,
    with_users: bool,
) -> Result<Realization> {
    if !window_radius.is_finite() || window_radius <= 0.0 {
        return Err(Error::invalid("window_radius", format!("{window_radius} must be finite and > 0")));
    }
    cfg.validate()?;
    let mut lines = sample_line_process(cfg.lambda_l, window_radius, stream.child(LINES_TAG))?;
    if palm_kind != PalmKind::None {
        lines = palm_condition_line(lines, stream.child(PALM_TAG));
    }
    let mut points: Vec<LinePoints> = lines
        .lines
        .iter()
        .zip(&lines.streams)
        .map(|(line, s)| {
            let half = line.half_chord(window_radius).unwrap_or(0.0);
            LinePoints {
                rsus: sample_ppp_blocks(cfg.mu_s, -half, half, s.child(TransmitterKind::Rsu.tag())),
                relays: sample_ppp_blocks(cfg.mu_r, -half, half, s.child(TransmitterKind::Relay.tag())),
                users: if with_users {
                    sample_ppp_blocks(cfg.mu_u, -half, half, s.child(USER_TAG))
                } else {
                    Vec::new()
                },
            }
        })
        .collect();
    if let Some(p) = lines.palm_line {
        match palm_kind {
            PalmKind::TypicalUser => insert_sorted(&mut points[p].users, 0.0),
            PalmKind::TypicalRelay => insert_sorted(&mut points[p].relays, 0.0),
            PalmKind::None => {}
        }
    }
    Ok(Realization {
        lines,
        points,
        palm_kind,
    })
}

impl Realization {
    pub fn transmitter(&self, kind: TransmitterKind, line_index: usize, coordinate: f64) -> Transmitter {
        Transmitter {
            position: self.lines.lines[line_index].point_at(coordinate),
            kind,
            line_index,
            coordinate,
        }
    }

    /// Stable identity of a transmitter, independent of window size and line order.
    pub fn transmitter_key(&self, kind: TransmitterKind, line_index: usize, coordinate: f64) -> u64 {
        mix64(self.lines.streams[line_index].key() ^ mix64(kind.tag() ^ coordinate.to_bits()))
    }

    pub fn transmitter_count(&self) -> usize {
        self.points.iter().map(|p| p.rsus.len() + p.relays.len()).sum()
    }

    /// Nearest point to the origin among `kinds`, with the documented tie-break.
    fn nearest_of(&self, kinds: &[TransmitterKind]) -> Result<Association> {
        let mut best: Option<(f64, TransmitterKind, usize, f64)> = None;
        for (li, (line, pts)) in self.lines.lines.iter().zip(&self.points).enumerate() {
            for &kind in kinds {
                let coords = pts.transmitters(kind);
                let i = coords.partition_point(|&t| t < 0.0);
                for &t in coords[i.saturating_sub(1)..(i + 1).min(coords.len())].iter() {
                    let d = line.distance_from_origin(t);
                    let better = match best {
                        None => true,
                        Some((bd, bk, bl, bt)) => {
                            if (d - bd).abs() <= TIE_KM {
                                (kind, li, t) < (bk, bl, bt)
                            } else {
                                d < bd
                            }
                        }
                    };
                    if better {
                        best = Some((d, kind, li, t));
                    }
                }
            }
        }
        let (distance, kind, line_index, coordinate) = best.ok_or(Error::NoTransmitter)?;
        Ok(Association {
            transmitter: self.transmitter(kind, line_index, coordinate),
            distance,
            same_line: self.lines.palm_line == Some(line_index),
        })
    }

    /// Writes `entity_kind,line_index,x_km,y_km` rows for every point.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "entity_kind,line_index,x_km,y_km")?;
        for (li, (line, pts)) in self.lines.lines.iter().zip(&self.points).enumerate() {
            for (kind, coords) in [("rsu", &pts.rsus), ("relay", &pts.relays), ("user", &pts.users)] {
                for &t in coords {
                    let p = line.point_at(t);
                    writeln!(out, "{kind},{li},{:.6},{:.6}", p.x, p.y)?;
                }
            }
        }
        Ok(())
    }
}

/// Nearest RSU or relay to the origin; ties within 1e-12 km go to the RSU,
/// then the lower line index, then the lower coordinate.
pub fn nearest_transmitter(real: &Realization) -> Result<Association> {
    real.nearest_of(&[TransmitterKind::Rsu, TransmitterKind::Relay])
}

pub fn nearest_rsu(real: &Realization) -> Result<Association> {
    real.nearest_of(&[TransmitterKind::Rsu])
}
