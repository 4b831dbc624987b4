//! Dual-slope path loss, Rayleigh fading and SIR at the origin.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::config::NetworkConfig;
use crate::cox::{Association, Realization, TransmitterKind};
use crate::error::{Error, Result};
use crate::stream::{mix64, Stream};

/// `d^-alpha` on the receiver's road, `d^-beta` across roads. No
/// near-field truncation.
pub fn path_loss(d: f64, same_road: bool, alpha: f64, beta: f64) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::invalid("d", format!("{d} must be finite and > 0")));
    }
    Ok(d.powf(-if same_road { alpha } else { beta }))
}

pub fn sample_fading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// Source of fading gains for the transmitters of a realization.
pub trait Fading {
    fn gain(&mut self, real: &Realization, kind: TransmitterKind, line_index: usize, coordinate: f64) -> f64;
}

/// Exp(1) gains keyed on transmitter identity: the same transmitter gets the
/// same gain whatever window it was generated in.
#[derive(Clone, Copy, Debug)]
pub struct KeyedFading(pub Stream);

impl Fading for KeyedFading {
    fn gain(&mut self, real: &Realization, kind: TransmitterKind, line_index: usize, coordinate: f64) -> f64 {
        let key = real.transmitter_key(kind, line_index, coordinate);
        sample_fading(&mut self.0.child(mix64(key)).rng())
    }
}

/// Deterministic unit gains.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoFading;

impl Fading for NoFading {
    fn gain(&mut self, _: &Realization, _: TransmitterKind, _: usize, _: f64) -> f64 {
        1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkBudget {
    pub serving_power: f64,
    pub interference_power: f64,
    /// `f64::INFINITY` when nothing interferes.
    pub sir: f64,
}

impl LinkBudget {
    fn new(serving_power: f64, interference_power: f64) -> Self {
        let sir = if interference_power > 0.0 {
            serving_power / interference_power
        } else {
            f64::INFINITY
        };
        LinkBudget {
            serving_power,
            interference_power,
            sir,
        }
    }

    pub fn covered(&self, tau: f64) -> bool {
        self.sir > tau
    }
}

/// Transmit power relative to an RSU.
fn weight(cfg: &NetworkConfig, kind: TransmitterKind) -> f64 {
    match kind {
        TransmitterKind::Rsu => 1.0,
        TransmitterKind::Relay => cfg.gamma(),
    }
}

fn budget(
    cfg: &NetworkConfig,
    real: &Realization,
    serving: &Association,
    interferers: &[TransmitterKind],
    fading: &mut impl Fading,
) -> Result<LinkBudget> {
    let own = real.lines.palm_line;
    let s = serving.transmitter;
    let h = fading.gain(real, s.kind, s.line_index, s.coordinate);
    let signal = weight(cfg, s.kind) * h * path_loss(serving.distance, serving.same_line, cfg.alpha, cfg.beta)?;
    let mut interference = 0.0;
    for (li, (line, pts)) in real.lines.lines.iter().zip(&real.points).enumerate() {
        let same_road = own == Some(li);
        for &kind in interferers {
            let w = weight(cfg, kind);
            for &t in pts.transmitters(kind) {
                if kind == s.kind && li == s.line_index && t == s.coordinate {
                    continue;
                }
                let d = line.distance_from_origin(t);
                if d == 0.0 {
                    // the receiver itself
                    continue;
                }
                interference += w * fading.gain(real, kind, li, t) * path_loss(d, same_road, cfg.alpha, cfg.beta)?;
            }
        }
    }
    Ok(LinkBudget::new(signal, interference))
}

/// SIR of the user at the origin on band W1: every other RSU and relay interferes.
pub fn sir_user(cfg: &NetworkConfig, real: &Realization, serving: &Association, fading: &mut impl Fading) -> Result<LinkBudget> {
    budget(cfg, real, serving, &[TransmitterKind::Rsu, TransmitterKind::Relay], fading)
}

/// SIR of the relay at the origin on band W2: only RSUs interfere.
pub fn sir_relay(cfg: &NetworkConfig, real: &Realization, serving_rsu: &Association, fading: &mut impl Fading) -> Result<LinkBudget> {
    if serving_rsu.transmitter.kind != TransmitterKind::Rsu {
        return Err(Error::invalid("serving_rsu", "relay backhaul must be served by an RSU"));
    }
    budget(cfg, real, serving_rsu, &[TransmitterKind::Rsu], fading)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cox::tests::hand_realization;
    use crate::cox::{build_realization, nearest_rsu, nearest_transmitter, LinePoints, PalmKind};
    use crate::geometry::Line;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn path_loss_examples() {
        assert_eq!(path_loss(1.0, true, 2.5, 3.5).unwrap(), 1.0);
        assert!(close(path_loss(2.0, true, 2.5, 3.5).unwrap(), 0.176777, 1e-6));
        assert!(close(path_loss(2.0, false, 2.5, 3.5).unwrap(), 0.088388, 1e-6));
        assert!(path_loss(0.0, true, 2.5, 3.5).is_err());
        assert!(path_loss(-1.0, true, 2.5, 3.5).is_err());
        // no truncation below 1 km
        assert!(path_loss(0.5, true, 2.5, 3.5).unwrap() > 1.0);
    }

    #[test]
    fn fading_moments() {
        let mut rng = Stream::new(41).rng();
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_fading(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let tail = xs.iter().filter(|&&h| h > 1.0).count() as f64 / n as f64;
        assert!(close(mean, 1.0, 0.003), "{mean}");
        assert!(close(tail, (-1.0f64).exp(), 0.002), "{tail}");
        // lag-1 autocorrelation, sd ~ 1/sqrt(n)
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        let cov = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>();
        assert!((cov / var).abs() < 4.0 / (n as f64).sqrt());
    }

    fn two_on_one_line() -> Realization {
        hand_realization(
            vec![Line::through_origin(0.3)],
            vec![LinePoints {
                rsus: vec![1.0],
                relays: vec![-2.0],
                users: vec![0.0],
            }],
            Some(0),
        )
    }

    #[test]
    fn two_term_hand_computation() {
        let cfg = NetworkConfig::new(1.0, 1.0, 1.0, 1.0);
        let real = two_on_one_line();
        let a = nearest_transmitter(&real).unwrap();
        let b = sir_user(&cfg, &real, &a, &mut NoFading).unwrap();
        assert!(close(b.sir, 2f64.powf(2.5), 1e-12));
        assert!(close(b.sir, 5.6569, 1e-4));
        assert!(b.covered(5.0) && !b.covered(6.0));
    }

    #[test]
    fn cross_road_interferer_uses_beta() {
        let cfg = NetworkConfig::new(1.0, 1.0, 1.0, 1.0);
        let real = hand_realization(
            vec![Line::through_origin(0.0), Line::new(2.0, 1.0).unwrap()],
            vec![
                LinePoints {
                    rsus: vec![1.0],
                    ..Default::default()
                },
                LinePoints {
                    relays: vec![0.0],
                    ..Default::default()
                },
            ],
            Some(0),
        );
        let a = nearest_transmitter(&real).unwrap();
        let b = sir_user(&cfg, &real, &a, &mut NoFading).unwrap();
        assert!(close(b.sir, 2f64.powf(3.5), 1e-9));
    }

    #[test]
    fn relay_power_weights_interference() {
        let cfg = NetworkConfig::new(1.0, 1.0, 1.0, 1.0).with_powers(1.0, 2.0);
        let real = two_on_one_line();
        let a = nearest_transmitter(&real).unwrap();
        let b = sir_user(&cfg, &real, &a, &mut NoFading).unwrap();
        assert!(close(b.sir, 2f64.powf(2.5) / 2.0, 1e-12));
    }

    #[test]
    fn lone_rsu_gives_infinite_sir() {
        let cfg = NetworkConfig::new(1.0, 1.0, 1.0, 1.0);
        let real = hand_realization(
            vec![Line::through_origin(0.0)],
            vec![LinePoints {
                rsus: vec![0.7],
                relays: vec![0.0, 3.0],
                ..Default::default()
            }],
            Some(0),
        );
        let a = nearest_rsu(&real).unwrap();
        let b = sir_relay(&cfg, &real, &a, &mut NoFading).unwrap();
        assert!(b.sir.is_infinite());
        assert_eq!(b.interference_power, 0.0);
        assert!(b.covered(1e12));
    }

    #[test]
    fn relay_sir_ignores_relays() {
        // same RSU layout, very different relay densities
        let lo = NetworkConfig::new(2.0, 1.0, 1.0, 0.0);
        let hi = NetworkConfig::new(2.0, 1.0, 10.0, 0.0);
        for i in 0..20 {
            let s = Stream::new(43).child(i);
            let a = build_realization(&lo, 8.0, PalmKind::TypicalRelay, s).unwrap();
            let b = build_realization(&hi, 8.0, PalmKind::TypicalRelay, s).unwrap();
            let (na, nb) = (nearest_rsu(&a), nearest_rsu(&b));
            let (Ok(na), Ok(nb)) = (na, nb) else { continue };
            let f = KeyedFading(s.child(7));
            let sa = sir_relay(&lo, &a, &na, &mut f.clone()).unwrap();
            let sb = sir_relay(&hi, &b, &nb, &mut f.clone()).unwrap();
            assert_eq!(sa, sb);
        }
    }

    #[test]
    fn keyed_fading_is_stable() {
        let cfg = NetworkConfig::new(2.0, 1.0, 1.0, 0.0);
        let real = build_realization(&cfg, 5.0, PalmKind::TypicalUser, Stream::new(47)).unwrap();
        let mut f = KeyedFading(Stream::new(1));
        let p = real.lines.palm_line.unwrap();
        let x = f.gain(&real, TransmitterKind::Rsu, p, 0.25);
        let y = f.gain(&real, TransmitterKind::Rsu, p, 0.25);
        let z = f.gain(&real, TransmitterKind::Relay, p, 0.25);
        assert_eq!(x, y);
        assert_ne!(x, z);
    }

    proptest! {
        #[test]
        fn joint_power_scaling_is_exact(seed in 0u64..1000, k in 0usize..4, gi in 0usize..4) {
            let c = [1.0, 2.0, 7.0, 0.5][k];
            let g = [1.0, 0.5, 2.0, 4.0][gi];
            let base = NetworkConfig::new(2.0, 1.0, 2.0, 0.0);
            let cfg1 = base.clone().with_powers(1.0, g);
            let cfg2 = base.with_powers(c, c * g);
            let s = Stream::new(seed);
            let real = build_realization(&cfg1, 6.0, PalmKind::TypicalUser, s).unwrap();
            if let Ok(a) = nearest_transmitter(&real) {
                let f = KeyedFading(s.child(9));
                let x = sir_user(&cfg1, &real, &a, &mut f.clone()).unwrap();
                let y = sir_user(&cfg2, &real, &a, &mut f.clone()).unwrap();
                prop_assert_eq!(x.sir.to_bits(), y.sir.to_bits());
            }
        }

        #[test]
        fn path_loss_monotone(d1 in 0.01f64..100.0, d2 in 0.01f64..100.0, alpha in 2.01f64..5.0, extra in 0.0f64..2.0) {
            let beta = alpha + extra;
            let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(path_loss(lo, true, alpha, beta).unwrap() >= path_loss(hi, true, alpha, beta).unwrap());
            if lo >= 1.0 {
                prop_assert!(path_loss(lo, true, alpha, beta).unwrap() >= path_loss(lo, false, alpha, beta).unwrap());
            }
        }
    }
}
