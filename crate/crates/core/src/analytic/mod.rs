//! Numerical evaluation of the closed-form association, load, coverage and
//! throughput expressions.

mod kernels;
mod throughput;

pub use throughput::{spectral_integral, throughput_from, Branch, SpectralSet, ThroughputReport};

use std::f64::consts::FRAC_PI_2;

use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::quad::{integrate_finite, QuadSpec, Transform};
use kernels::{Engine, Names, Term, Tier, BAR_JK, G, H, JK};

/// Which form of the general (unequal power) coverage kernels to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum KernelForm {
    /// Void and density factors consistent with the equal-power and relay
    /// kernels: the own-road void and the serving-road interference carry
    /// both tiers, and the relay-served same-road density is `2 mu_r`.
    #[default]
    Derived,
    /// The general kernels exactly as typeset: own-road void `2 mu_s r`,
    /// same-road density `2 mu_s` for either tier, and serving-road
    /// interference from the serving tier alone at unit weight.
    AsPrinted,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticSettings {
    /// Innermost and angular integrals.
    pub inner: QuadSpec,
    /// Integrals over the serving distance and the spectral variable.
    pub outer: QuadSpec,
    pub form: KernelForm,
}

impl Default for AnalyticSettings {
    fn default() -> Self {
        AnalyticSettings {
            inner: QuadSpec::new(1e-7, 1e-10),
            outer: QuadSpec::new(1e-6, 1e-10),
            form: KernelForm::Derived,
        }
    }
}

impl AnalyticSettings {
    /// Outer relative tolerance `tol`, inner one decade tighter.
    pub fn with_tol(tol: f64) -> Self {
        AnalyticSettings {
            inner: QuadSpec::new(0.1 * tol, 1e-4 * tol),
            outer: QuadSpec::new(tol, 1e-4 * tol),
            form: KernelForm::Derived,
        }
    }

    /// All tolerances multiplied by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.inner = self.inner.scaled(factor);
        self.outer = self.outer.scaled(factor);
        self
    }

    pub fn with_form(mut self, form: KernelForm) -> Self {
        self.form = form;
        self
    }
}

/// The four joint coverage terms, split by same road (E) / other road (Ec)
/// and serving tier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoverageComponents {
    pub p_e_as: f64,
    pub p_e_ar: f64,
    pub p_ec_as: f64,
    pub p_ec_ar: f64,
    /// `p_e_as + p_e_ar + p_ec_as + p_ec_ar`, summed in that order.
    pub total: f64,
}

impl CoverageComponents {
    fn new(p_e_as: f64, p_e_ar: f64, p_ec_as: f64, p_ec_ar: f64) -> Self {
        CoverageComponents {
            p_e_as,
            p_e_ar,
            p_ec_as,
            p_ec_ar,
            total: p_e_as + p_e_ar + p_ec_as + p_ec_ar,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanLoads {
    /// Mean users per RSU.
    pub u_bar_s: f64,
    /// Mean users per relay; `None` without relays.
    pub u_bar_r: Option<f64>,
    /// Mean relays per RSU.
    pub r_bar_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ServingTier {
    Rsu,
    Relay,
}

/// Analytic evaluator bound to one configuration.
pub struct Analytic {
    cfg: NetworkConfig,
    settings: AnalyticSettings,
    engine: Engine,
}

pub fn thinning_ratio(cfg: &NetworkConfig) -> f64 {
    cfg.mu_s / cfg.mu_tx()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl Analytic {
    pub fn new(cfg: &NetworkConfig, settings: AnalyticSettings) -> Result<Self> {
        cfg.validate()?;
        settings.inner.validate()?;
        settings.outer.validate()?;
        Ok(Analytic {
            cfg: cfg.clone(),
            settings,
            engine: Engine::new(cfg.lambda_l, cfg.alpha, cfg.beta, settings.inner, settings.outer),
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn settings(&self) -> &AnalyticSettings {
        &self.settings
    }

    /// Probability that the typical user's nearest transmitter is an RSU,
    /// as the sum of the same-road and other-road nearest-RSU densities.
    pub fn assoc_prob_rsu(&self) -> Result<f64> {
        let NetworkConfig { lambda_l, mu_s, .. } = self.cfg;
        let mu = self.cfg.mu_tx();
        if mu_s == 0.0 {
            return Ok(0.0);
        }
        let inner = self.settings.inner.with_transform(Transform::TanHalf);
        let chord_void = |r: f64| -> Result<f64> {
            if lambda_l == 0.0 {
                return Ok(0.0);
            }
            let q = integrate_finite(|u| -(-2.0 * mu * (r * r - u * u).max(0.0).sqrt()).exp_m1(), 0.0, r, &inner);
            Ok(2.0 * lambda_l * q.require("association")?)
        };
        let mut failed: Option<Error> = None;
        let mut outer = |f: &mut dyn FnMut(f64) -> Result<f64>| -> f64 {
            let rate = 2.0 * mu + lambda_l;
            let r_max = 40.0 / rate;
            let mut total = 0.0;
            for (a, b) in [(0.0, 0.1 / rate), (0.1 / rate, 1.0 / rate), (1.0 / rate, 5.0 / rate), (5.0 / rate, r_max)] {
                let q = integrate_finite(
                    |r| match f(r) {
                        Ok(v) => v,
                        Err(e) => {
                            failed.get_or_insert(e);
                            0.0
                        }
                    },
                    a,
                    b,
                    &self.settings.outer,
                );
                if !q.converged {
                    failed.get_or_insert(Error::Quadrature {
                        kernel: "association",
                        error_estimate: q.error_estimate,
                    });
                }
                total += q.value;
            }
            total
        };
        let same = outer(&mut |r| Ok(2.0 * mu_s * (-2.0 * mu * r - chord_void(r)?).exp()));
        let cross = if lambda_l == 0.0 {
            0.0
        } else {
            let angular = |r: f64| -> Result<f64> {
                let q = integrate_finite(|t| (-2.0 * r * mu * t.sin()).exp(), 0.0, FRAC_PI_2, &self.settings.inner);
                q.require("association")
            };
            4.0 * mu_s * lambda_l * outer(&mut |r| Ok(r * (-2.0 * r * mu - chord_void(r)?).exp() * angular(r)?))
        };
        if let Some(e) = failed {
            return Err(e);
        }
        Ok((same + cross).clamp(0.0, 1.0))
    }

    /// `(P(A_s), P(A_r))` with `P(A_r) = 1 - P(A_s)`.
    pub fn assoc_probs(&self) -> Result<(f64, f64)> {
        let p = self.assoc_prob_rsu()?;
        Ok((p, 1.0 - p))
    }

    pub fn mean_loads(&self) -> Result<MeanLoads> {
        let NetworkConfig { mu_s, mu_r, mu_u, .. } = self.cfg;
        if mu_s == 0.0 {
            return Err(Error::UndefinedLoad("no RSUs (mu_s = 0)"));
        }
        let (p_as, p_ar) = self.assoc_probs()?;
        Ok(MeanLoads {
            u_bar_s: mu_u * p_as / mu_s,
            u_bar_r: (mu_r > 0.0).then(|| mu_u * p_ar / mu_r),
            r_bar_s: mu_r / mu_s,
        })
    }

    fn general_terms(&self, serving: ServingTier) -> [Term; 2] {
        let NetworkConfig { mu_s, mu_r, .. } = self.cfg;
        let g = self.cfg.gamma();
        let mu = mu_s + mu_r;
        let (a, b, c) = match serving {
            ServingTier::Rsu => (1.0, 1.0 / g, mu_s),
            ServingTier::Relay => (g, 1.0, mu_r),
        };
        let tiers = vec![Tier { mu: mu_s, a }, Tier { mu: mu_r, a: b }];
        let (same_c, void_own, star) = match self.settings.form {
            KernelForm::Derived => (c, mu, tiers.clone()),
            KernelForm::AsPrinted => (mu_s, mu_s, vec![Tier { mu: c, a: 1.0 }]),
        };
        [
            Term {
                same_road: true,
                tiers: tiers.clone(),
                star: tiers.clone(),
                c: same_c,
                void_own,
                void_lines: mu,
                names: G,
            },
            Term {
                same_road: false,
                tiers,
                star,
                c,
                void_own,
                void_lines: mu,
                names: H,
            },
        ]
    }

    fn single_tier(&self, tau: f64, mu: f64, names: [Names; 2]) -> Result<f64> {
        let tiers = vec![Tier { mu, a: 1.0 }];
        let mk = |same_road: bool, names: Names| Term {
            same_road,
            tiers: tiers.clone(),
            star: tiers.clone(),
            c: mu,
            void_own: mu,
            void_lines: mu,
            names,
        };
        Ok(self.engine.term(&mk(true, names[0]), tau)? + self.engine.term(&mk(false, names[1]), tau)?)
    }

    /// The joint terms for one serving tier: `(same road, other road)`.
    pub fn joint_terms(&self, tau: f64, serving: ServingTier) -> Result<(f64, f64)> {
        check_tau(tau)?;
        let [e, ec] = self.general_terms(serving);
        Ok((self.engine.term(&e, tau)?, self.engine.term(&ec, tau)?))
    }

    /// Coverage of the typical user at linear threshold `tau`, general powers.
    pub fn user_coverage(&self, tau: f64) -> Result<CoverageComponents> {
        let (e_as, ec_as) = self.joint_terms(tau, ServingTier::Rsu)?;
        let (e_ar, ec_ar) = self.joint_terms(tau, ServingTier::Relay)?;
        Ok(CoverageComponents::new(e_as, e_ar, ec_as, ec_ar))
    }

    /// Coverage of the typical user when RSUs and relays transmit at equal
    /// power; ignores `p_s`, `p_r`.
    pub fn user_coverage_equal_power(&self, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        self.single_tier(tau, self.cfg.mu_tx(), JK)
    }

    /// Coverage of the typical relay on the RSU backhaul band.
    pub fn relay_coverage(&self, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        self.single_tier(tau, self.cfg.mu_s, BAR_JK)
    }

    /// Coverage conditioned on the serving tier.
    pub fn cond_coverage(&self, tau: f64, which: ServingTier) -> Result<f64> {
        let (p_as, p_ar) = self.assoc_probs()?;
        self.cond_coverage_with(tau, which, p_as, p_ar)
    }

    fn cond_coverage_with(&self, tau: f64, which: ServingTier, p_as: f64, p_ar: f64) -> Result<f64> {
        let (p, name) = match which {
            ServingTier::Rsu => (p_as, "RSU"),
            ServingTier::Relay => (p_ar, "relay"),
        };
        if p <= 1e-12 {
            return Err(Error::VanishingAssociation(name));
        }
        let (e, ec) = self.joint_terms(tau, which)?;
        Ok(((e + ec) / p).clamp(0.0, 1.0))
    }

    /// The three spectral efficiencies entering the throughput.
    pub fn spectral_set(&self) -> Result<SpectralSet> {
        let (p_as, p_ar) = self.assoc_probs()?;
        let spec = &self.settings.outer;
        let i_su = spectral_integral(|t| self.cond_coverage_with(t, ServingTier::Rsu, p_as, p_ar), spec)?;
        let i_ru = if self.cfg.mu_r > 0.0 {
            spectral_integral(|t| self.cond_coverage_with(t, ServingTier::Relay, p_as, p_ar), spec)?
        } else {
            0.0
        };
        let i_sr = spectral_integral(|t| self.relay_coverage(t), spec)?;
        Ok(SpectralSet { p_as, i_su, i_ru, i_sr })
    }

    pub fn throughput(&self) -> Result<ThroughputReport> {
        throughput_from(&self.cfg, &self.spectral_set()?)
    }

    /// Throughput gain over the same network without relays. Requires
    /// equal powers.
    pub fn throughput_gain(&self) -> Result<f64> {
        self.throughput_gain_from(&self.spectral_set()?)
    }

    pub fn throughput_gain_from(&self, s: &SpectralSet) -> Result<f64> {
        if (self.cfg.gamma() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("gamma", "throughput gain is defined for p_s = p_r"));
        }
        if self.cfg.mu_s == 0.0 {
            return Err(Error::UndefinedLoad("no RSUs (mu_s = 0)"));
        }
        // without relays the user sees the RSU-only equal-power network,
        // whose coverage is the relay backhaul coverage
        let i0 = s.i_sr;
        Ok(s.i_su / i0 + self.cfg.mu_r / self.cfg.mu_s * s.i_ru / i0)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::invalid("tau", format!("{tau} must be finite and >= 0")));
    }
    Ok(())
}

pub fn assoc_prob_rsu(cfg: &NetworkConfig, settings: AnalyticSettings) -> Result<f64> {
    Analytic::new(cfg, settings)?.assoc_prob_rsu()
}

pub fn mean_loads(cfg: &NetworkConfig) -> Result<MeanLoads> {
    Analytic::new(cfg, AnalyticSettings::default())?.mean_loads()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast() -> AnalyticSettings {
        AnalyticSettings::with_tol(1e-6)
    }

    #[test]
    fn association_without_relays_is_one() {
        for lambda in [0.5, 2.0, 5.0] {
            let cfg = NetworkConfig::new(lambda, 1.0, 0.0, 1.0);
            let p = assoc_prob_rsu(&cfg, fast()).unwrap();
            assert!((p - 1.0).abs() < 1e-6, "{p}");
        }
    }

    #[test]
    fn association_equals_thinning_ratio() {
        for mu_r in [0.5, 1.0, 2.0, 4.0] {
            let cfg = NetworkConfig::new(2.0, 1.0, mu_r, 1.0);
            let p = assoc_prob_rsu(&cfg, fast()).unwrap();
            assert!((p - thinning_ratio(&cfg)).abs() < 1e-6, "{mu_r}: {p}");
        }
    }

    #[test]
    fn loads() {
        let cfg = NetworkConfig::new(3.0, 1.0, 3.0, 15.0);
        let l = mean_loads(&cfg).unwrap();
        assert!((l.r_bar_s - 3.0).abs() < 1e-15);
        assert!((l.u_bar_s - 15.0 * 0.25).abs() < 1e-5);
        assert!((l.u_bar_r.unwrap() - 15.0 * 0.75 / 3.0).abs() < 1e-5);

        let l = mean_loads(&NetworkConfig::new(3.0, 2.0, 0.0, 15.0)).unwrap();
        assert!((l.u_bar_s - 7.5).abs() < 1e-5);
        assert_eq!(l.u_bar_r, None);
        assert!(matches!(mean_loads(&NetworkConfig::new(3.0, 0.0, 1.0, 15.0)), Err(Error::UndefinedLoad(_))));
    }

    #[test]
    fn tiny_threshold_is_covered() {
        let cfg = NetworkConfig::new(2.0, 1.0, 2.0, 1.0);
        let a = Analytic::new(&cfg, fast()).unwrap();
        let c = a.user_coverage(1e-6).unwrap();
        assert!(c.total >= 0.999, "{c:?}");
        assert!(a.relay_coverage(1e-6).unwrap() >= 0.999);
    }

    #[test]
    fn general_kernels_reduce_to_equal_power() {
        let cfg = NetworkConfig::new(2.0, 1.0, 2.0, 1.0);
        let a = Analytic::new(&cfg, fast()).unwrap();
        for tau_db in [-10.0, 0.0, 10.0] {
            let t = db_to_linear(tau_db);
            let c = a.user_coverage(t).unwrap();
            let j = a.user_coverage_equal_power(t).unwrap();
            assert!((c.total - j).abs() < 2e-6, "{tau_db}: {} {j}", c.total);
        }
    }

    #[test]
    fn relay_coverage_is_equal_power_without_relays() {
        let cfg = NetworkConfig::new(2.0, 1.0, 3.0, 1.0);
        let a = Analytic::new(&cfg, fast()).unwrap();
        let b = Analytic::new(&NetworkConfig::new(2.0, 1.0, 0.0, 1.0), fast()).unwrap();
        let t = 1.0;
        assert!((a.relay_coverage(t).unwrap() - b.user_coverage_equal_power(t).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn equal_power_depends_on_total_density_only() {
        let a = Analytic::new(&NetworkConfig::new(2.0, 1.0, 2.0, 1.0), fast()).unwrap();
        let b = Analytic::new(&NetworkConfig::new(2.0, 2.5, 0.5, 1.0), fast()).unwrap();
        assert_eq!(a.user_coverage_equal_power(2.0).unwrap(), b.user_coverage_equal_power(2.0).unwrap());
    }

    #[test]
    fn conditional_coverages_reconstruct_total() {
        let cfg = NetworkConfig::new(2.0, 1.0, 2.0, 1.0).with_powers(1.0, 0.5);
        let a = Analytic::new(&cfg, fast()).unwrap();
        let (p_as, p_ar) = a.assoc_probs().unwrap();
        let t = 1.0;
        let c = a.user_coverage(t).unwrap();
        let s = a.cond_coverage(t, ServingTier::Rsu).unwrap();
        let r = a.cond_coverage(t, ServingTier::Relay).unwrap();
        assert!((p_as * s + p_ar * r - c.total).abs() < 1e-6);
        let none = Analytic::new(&NetworkConfig::new(2.0, 1.0, 0.0, 1.0), fast()).unwrap();
        assert!(matches!(none.cond_coverage(t, ServingTier::Relay), Err(Error::VanishingAssociation(_))));
        let s = none.cond_coverage(t, ServingTier::Rsu).unwrap();
        assert!((s - none.user_coverage(t).unwrap().total).abs() < 1e-6);
    }

    #[test]
    fn as_printed_kernels_differ() {
        let cfg = NetworkConfig::new(2.0, 1.0, 2.0, 1.0);
        let d = Analytic::new(&cfg, fast()).unwrap();
        let p = Analytic::new(&cfg, fast().with_form(KernelForm::AsPrinted)).unwrap();
        let t = 1.0;
        assert!((d.user_coverage(t).unwrap().total - p.user_coverage(t).unwrap().total).abs() > 1e-3);
    }

    #[test]
    fn invalid_threshold() {
        let a = Analytic::new(&NetworkConfig::new(2.0, 1.0, 2.0, 1.0), fast()).unwrap();
        assert!(a.user_coverage(-1.0).is_err());
        assert!(a.relay_coverage(f64::NAN).is_err());
    }
}
