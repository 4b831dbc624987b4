//! Isotropic Poisson line process and its Palm version.
//!
//! A line is parameterized by its signed distance `r` to the origin and the
//! angle `theta` in `[0, pi)` of its direction with the x-axis. The
//! generating point process has intensity `lambda_l / pi` on the strip
//! `R x [0, pi)`, so the number of lines hitting a disk of radius `R` is
//! Poisson with mean `2 lambda_l R`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::stream::Stream;

/// Width (km) of the distance bands the line process is generated in.
/// Lines in band `k` have `|r|` in `[k, k + 1)`, each band from its own
/// substream, so growing the window only appends lines.
const BAND_KM: f64 = 1.0;

const PALM_TAG: u64 = 0x5041_4C4D;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Line {
    /// Signed perpendicular distance to the origin (km).
    pub r: f64,
    /// Direction angle in `[0, pi)`.
    pub theta: f64,
}

impl Line {
    pub fn new(r: f64, theta: f64) -> Result<Self> {
        if !r.is_finite() {
            return Err(Error::invalid("r", "line distance must be finite"));
        }
        if !(0.0..PI).contains(&theta) {
            return Err(Error::invalid("theta", format!("{theta} is outside [0, pi)")));
        }
        Ok(Line { r, theta })
    }

    pub fn through_origin(theta: f64) -> Self {
        Line { r: 0.0, theta }
    }

    pub fn direction(&self) -> Point2 {
        Point2::new(self.theta.cos(), self.theta.sin())
    }

    /// Unit normal; the foot of the perpendicular from the origin is `r * normal`.
    pub fn normal(&self) -> Point2 {
        Point2::new(-self.theta.sin(), self.theta.cos())
    }

    /// Point at signed arc length `t` from the foot of the perpendicular.
    pub fn point_at(&self, t: f64) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        Point2::new(-self.r * s + t * c, self.r * c + t * s)
    }

    /// Distance from the origin to the point at coordinate `t`.
    pub fn distance_from_origin(&self, t: f64) -> f64 {
        self.r.hypot(t)
    }

    /// Perpendicular distance from `p` to the line.
    pub fn distance_to(&self, p: Point2) -> f64 {
        let n = self.normal();
        (p.x * n.x + p.y * n.y - self.r).abs()
    }

    /// Half-length of the chord cut by the disk of radius `radius` about the origin.
    pub fn half_chord(&self, radius: f64) -> Option<f64> {
        (self.r.abs() <= radius).then(|| (radius * radius - self.r * self.r).max(0.0).sqrt())
    }

    /// The same geometric line rotated about the origin by `angle`.
    pub fn rotated(&self, angle: f64) -> Line {
        let mut theta = (self.theta + angle).rem_euclid(2.0 * PI);
        let mut r = self.r;
        if theta >= PI {
            // reversing the direction flips the normal
            theta -= PI;
            r = -r;
        }
        Line { r, theta }
    }
}

pub fn point_on_line(line: &Line, t: f64) -> Point2 {
    line.point_at(t)
}

#[derive(Clone, Debug)]
pub struct LineProcessSample {
    pub lines: Vec<Line>,
    pub window_radius: f64,
    /// Index of the line forced through the origin, if Palm-conditioned.
    pub palm_line: Option<usize>,
    /// Substream of each line, used to populate it with points.
    pub streams: Vec<Stream>,
}

impl LineProcessSample {
    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }
}

pub fn sample_line_process(lambda_l: f64, window_radius: f64, stream: Stream) -> Result<LineProcessSample> {
    if !lambda_l.is_finite() || lambda_l < 0.0 {
        return Err(Error::invalid("lambda_l", format!("{lambda_l} must be finite and >= 0")));
    }
    if !window_radius.is_finite() || window_radius <= 0.0 {
        return Err(Error::invalid("window_radius", format!("{window_radius} must be finite and > 0")));
    }
    let mut lines = Vec::new();
    let mut streams = Vec::new();
    if lambda_l > 0.0 {
        let per_band = Poisson::new(2.0 * lambda_l * BAND_KM).expect("positive mean");
        let bands = (window_radius / BAND_KM).ceil() as u64;
        for k in 0..bands {
            let band = stream.child(k);
            let mut rng = band.rng();
            let n = per_band.sample(&mut rng) as u64;
            for i in 0..n {
                let dist = (k as f64 + rng.random::<f64>()) * BAND_KM;
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let theta = PI * rng.random::<f64>();
                if dist <= window_radius {
                    lines.push(Line { r: sign * dist, theta });
                    streams.push(band.child(i + 1));
                }
            }
        }
    }
    Ok(LineProcessSample {
        lines,
        window_radius,
        palm_line: None,
        streams,
    })
}

/// Appends a line through the origin with uniform direction, flagged as the Palm line.
pub fn palm_condition_line(sample: LineProcessSample, stream: Stream) -> LineProcessSample {
    let palm = stream.child(PALM_TAG);
    let theta = PI * palm.rng().random::<f64>();
    let mut out = sample;
    out.palm_line = Some(out.lines.len());
    out.lines.push(Line::through_origin(theta));
    out.streams.push(palm.child(1));
    out
}
