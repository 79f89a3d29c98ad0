//! Velocity transition functions applied at switch events.
//!
//! Three maps are provided: pure reflection `v -> -v`, the bouncy particle
//! sampler's reflection across the hyperplane normal to the gradient, and the
//! nonlinear [`hyperspherical`] map, which changes speed as well as direction.

pub mod hyperspherical;

use std::sync::Arc;

use thiserror::Error;

use crate::rng::RandomSource;
use crate::vecops::{all_finite, dot, norm};

pub use hyperspherical::{theta_prime_asymptotic, Angle, HypersphericalMap, ThetaMode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransitionError {
    #[error("gradient is zero or non-finite; the switching rate vanishes and no transition should fire")]
    GradientDegenerate,
    #[error("transition invoked with v . g = {dot} > 0 (switches only happen while moving downhill)")]
    ContractViolation { dot: f64 },
    #[error("r'({theta}) undefined: angle below the map's range starting at {theta_at_zero}")]
    InverseUndefined { theta: f64, theta_at_zero: f64 },
    #[error("speed {r} below the map's domain starting at {r_lo}")]
    RadiusBelowDomain { r: f64, r_lo: f64 },
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("hyperspherical map needs dimension >= 3, got {0}")]
    InvalidDimension(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl TransitionError {
    /// States near the origin where the hyperspherical map is undefined.
    pub fn is_outside_map_domain(&self) -> bool {
        matches!(
            self,
            TransitionError::InverseUndefined { .. } | TransitionError::RadiusBelowDomain { .. }
        )
    }
}

/// `v` resolved in the plane spanned by `v` and `g`.
///
/// `v = r cos(theta_in) u_g + r sin(theta_in) u_perp` where `theta_in` is the
/// angle between `v` and `+g`.
#[derive(Debug, Clone)]
pub struct PlaneDecomposition {
    pub r: f64,
    pub theta_in: f64,
    pub u_g: Vec<f64>,
    pub u_perp: Vec<f64>,
    /// `v . u_g`
    pub along: f64,
    /// `v . u_perp >= 0`
    pub across: f64,
    pub g_norm: f64,
}

impl PlaneDecomposition {
    pub fn new(v: &[f64], g: &[f64]) -> Result<Self, TransitionError> {
        if v.len() != g.len() {
            return Err(TransitionError::DimensionMismatch {
                expected: g.len(),
                got: v.len(),
            });
        }
        let g_norm = norm(g);
        if !(g_norm > 0.0) || !g_norm.is_finite() {
            return Err(TransitionError::GradientDegenerate);
        }
        if !all_finite(v) {
            return Err(TransitionError::OutOfRange("non-finite velocity".into()));
        }
        let u_g: Vec<f64> = g.iter().map(|x| x / g_norm).collect();
        let r = norm(v);
        let along = dot(v, &u_g);
        let mut w: Vec<f64> = v.iter().zip(&u_g).map(|(vi, ui)| vi - along * ui).collect();
        // One re-orthogonalisation pass keeps |u_g . u_perp| at rounding level.
        let again = dot(&w, &u_g);
        for (wi, ui) in w.iter_mut().zip(&u_g) {
            *wi -= again * ui;
        }
        let mut across = norm(&w);
        let u_perp = if across > 1e-14 * r.max(f64::MIN_POSITIVE) && across > 0.0 {
            w.iter().map(|x| x / across).collect()
        } else {
            across = 0.0;
            orthonormal_completion(&u_g)
        };
        let theta_in = across.atan2(along);
        Ok(Self {
            r,
            theta_in,
            u_g,
            u_perp,
            along,
            across,
            g_norm,
        })
    }
}

/// First canonical basis vector not parallel to `u`, Gram-Schmidt'd against it.
fn orthonormal_completion(u: &[f64]) -> Vec<f64> {
    let p = u.len();
    for i in 0..p {
        if u[i].abs() < 0.9 || p == 1 {
            let mut e: Vec<f64> = u.iter().map(|ui| -u[i] * ui).collect();
            e[i] += 1.0;
            let n = norm(&e);
            if n > 1e-8 {
                return e.iter().map(|x| x / n).collect();
            }
        }
    }
    // p == 1: no orthogonal direction exists.
    vec![0.0; p]
}

/// `F(v) = -v`.
pub fn pure_reflection(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| -x).collect()
}

/// `F(v) = v - 2 (v . g / |g|^2) g`.
pub fn bps_reflection(v: &[f64], g: &[f64]) -> Result<Vec<f64>, TransitionError> {
    if v.len() != g.len() {
        return Err(TransitionError::DimensionMismatch {
            expected: g.len(),
            got: v.len(),
        });
    }
    let gg = dot(g, g);
    if !(gg > 0.0) || !gg.is_finite() {
        return Err(TransitionError::GradientDegenerate);
    }
    let scale = 2.0 * dot(v, g) / gg;
    Ok(v.iter().zip(g).map(|(vi, gi)| vi - scale * gi).collect())
}

/// Result of applying a transition at a switch event.
#[derive(Debug, Clone, PartialEq)]
pub struct Jump {
    pub velocity: Vec<f64>,
    /// The state fell outside the hyperspherical map's domain and the
    /// velocity was refreshed from N(0, I) instead.
    pub fallback: bool,
}

/// Hyperspherical transition with the refresh fallback near the origin.
///
/// The incoming angle is measured against `-g` and the outgoing one against
/// `+g`, so a velocity with `v . g <= 0` leaves with `v' . g >= 0`.
pub fn hyperspherical_transition(
    v: &[f64],
    g: &[f64],
    map: &HypersphericalMap,
    rng: &mut dyn RandomSource,
) -> Result<Jump, TransitionError> {
    match map.map_velocity(v, g) {
        Ok(velocity) => Ok(Jump {
            velocity,
            fallback: false,
        }),
        Err(e) if e.is_outside_map_domain() => {
            let mut velocity = vec![0.0; v.len()];
            rng.fill_std_normal(&mut velocity);
            Ok(Jump {
                velocity,
                fallback: true,
            })
        }
        Err(e) => Err(e),
    }
}

/// The transition function used by a sampler.
#[derive(Debug, Clone)]
pub enum Transition {
    PureReflection,
    Bps,
    Hyperspherical(Arc<HypersphericalMap>),
}

impl Transition {
    pub fn name(&self) -> String {
        match self {
            Transition::PureReflection => "pure-reflection".into(),
            Transition::Bps => "bps".into(),
            Transition::Hyperspherical(m) => match m.mode() {
                ThetaMode::Asymptotic => "hyperspherical".into(),
                ThetaMode::ExactQuadrature => "hyperspherical-exact".into(),
            },
        }
    }

    /// Deterministic `F_x(v)`. For the hyperspherical map `v . g` must be
    /// non-positive and the state must lie in the map's domain.
    pub fn map(&self, v: &[f64], g: &[f64]) -> Result<Vec<f64>, TransitionError> {
        match self {
            Transition::PureReflection => Ok(pure_reflection(v)),
            Transition::Bps => bps_reflection(v, g),
            Transition::Hyperspherical(m) => m.map_velocity(v, g),
        }
    }

    /// `F_x^{-1}(v)` on the whole velocity space.
    ///
    /// Both reflections are involutions. The hyperspherical map sends
    /// `v . g <= 0` to `v . g >= 0`; on the other half-space it is extended by
    /// its inverse, the same construction with `g` replaced by `-g`, which
    /// makes it an involution as well.
    pub fn inverse(&self, v: &[f64], g: &[f64]) -> Result<Vec<f64>, TransitionError> {
        match self {
            Transition::PureReflection => Ok(pure_reflection(v)),
            Transition::Bps => bps_reflection(v, g),
            Transition::Hyperspherical(m) => {
                if dot(v, g) > 0.0 {
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    m.map_velocity(v, &neg)
                } else {
                    m.map_velocity(v, g)
                }
            }
        }
    }

    /// Transition at a switch event, including the refresh fallback.
    pub fn apply(
        &self,
        v: &[f64],
        g: &[f64],
        rng: &mut dyn RandomSource,
    ) -> Result<Jump, TransitionError> {
        match self {
            Transition::Hyperspherical(m) => hyperspherical_transition(v, g, m, rng),
            other => other.map(v, g).map(|velocity| Jump {
                velocity,
                fallback: false,
            }),
        }
    }
}
