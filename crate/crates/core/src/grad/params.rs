//! Raw (unconstrained) parameterization of a [`Splat2D`].
//!
//! Scales are optimized in log space, opacity as a logit, everything else
//! directly. Each splat owns [`PARAMS_PER_SPLAT`] consecutive slots.

use std::fmt;

use crate::geometry::Splat2D;
use crate::hermite::BASIS_LEN;
use crate::kernel::KernelKind;

pub const PARAMS_PER_SPLAT: usize = 30;

const COLOR_BASE: usize = 6;
const C_BASE: usize = 9;
const D_BASE: usize = C_BASE + BASIS_LEN;
const BETA: usize = D_BASE + BASIS_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamId {
    MuX,
    MuY,
    Theta,
    LogScaleU,
    LogScaleV,
    OpacityLogit,
    Color(usize),
    C(usize),
    D(usize),
    Beta,
}

/// Learning-rate and reporting groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    Mu,
    Theta,
    Scale,
    Opacity,
    Color,
    GhC,
    GhD,
    Beta,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 8] = [
        ParamGroup::Mu,
        ParamGroup::Theta,
        ParamGroup::Scale,
        ParamGroup::Opacity,
        ParamGroup::Color,
        ParamGroup::GhC,
        ParamGroup::GhD,
        ParamGroup::Beta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Mu => "mu",
            ParamGroup::Theta => "theta",
            ParamGroup::Scale => "scales",
            ParamGroup::Opacity => "opacity",
            ParamGroup::Color => "color",
            ParamGroup::GhC => "gh_c",
            ParamGroup::GhD => "gh_d",
            ParamGroup::Beta => "beta",
        }
    }
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl ParamId {
    pub fn index(self) -> usize {
        match self {
            ParamId::MuX => 0,
            ParamId::MuY => 1,
            ParamId::Theta => 2,
            ParamId::LogScaleU => 3,
            ParamId::LogScaleV => 4,
            ParamId::OpacityLogit => 5,
            ParamId::Color(k) => COLOR_BASE + k,
            ParamId::C(n) => C_BASE + n,
            ParamId::D(n) => D_BASE + n,
            ParamId::Beta => BETA,
        }
    }

    pub fn from_index(i: usize) -> ParamId {
        match i {
            0 => ParamId::MuX,
            1 => ParamId::MuY,
            2 => ParamId::Theta,
            3 => ParamId::LogScaleU,
            4 => ParamId::LogScaleV,
            5 => ParamId::OpacityLogit,
            i if i < C_BASE => ParamId::Color(i - COLOR_BASE),
            i if i < D_BASE => ParamId::C(i - C_BASE),
            i if i < BETA => ParamId::D(i - D_BASE),
            BETA => ParamId::Beta,
            _ => panic!("parameter index {i} out of range"),
        }
    }

    pub fn all() -> impl Iterator<Item = ParamId> {
        (0..PARAMS_PER_SPLAT).map(ParamId::from_index)
    }

    pub fn group(self) -> ParamGroup {
        match self {
            ParamId::MuX | ParamId::MuY => ParamGroup::Mu,
            ParamId::Theta => ParamGroup::Theta,
            ParamId::LogScaleU | ParamId::LogScaleV => ParamGroup::Scale,
            ParamId::OpacityLogit => ParamGroup::Opacity,
            ParamId::Color(_) => ParamGroup::Color,
            ParamId::C(_) => ParamGroup::GhC,
            ParamId::D(_) => ParamGroup::GhD,
            ParamId::Beta => ParamGroup::Beta,
        }
    }

    /// Whether the parameter influences a splat of this kind at all.
    pub fn applies_to(self, kind: KernelKind) -> bool {
        match self {
            ParamId::C(_) | ParamId::D(_) => matches!(kind, KernelKind::GaussianHermite),
            ParamId::Beta => matches!(kind, KernelKind::Ges { .. }),
            _ => true,
        }
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamId::MuX => f.write_str("mu_x"),
            ParamId::MuY => f.write_str("mu_y"),
            ParamId::Theta => f.write_str("theta"),
            ParamId::LogScaleU => f.write_str("log_scale_u"),
            ParamId::LogScaleV => f.write_str("log_scale_v"),
            ParamId::OpacityLogit => f.write_str("opacity_logit"),
            ParamId::Color(k) => write!(f, "color[{k}]"),
            ParamId::C(n) => write!(f, "c[{n}]"),
            ParamId::D(n) => write!(f, "d[{n}]"),
            ParamId::Beta => f.write_str("beta"),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Value of a raw parameter.
pub fn raw_param(s: &Splat2D, id: ParamId) -> f64 {
    match id {
        ParamId::MuX => s.mu[0],
        ParamId::MuY => s.mu[1],
        ParamId::Theta => s.theta,
        ParamId::LogScaleU => s.scale[0].ln(),
        ParamId::LogScaleV => s.scale[1].ln(),
        ParamId::OpacityLogit => logit(s.opacity),
        ParamId::Color(k) => s.color[k],
        ParamId::C(n) => s.gh.c[n],
        ParamId::D(n) => s.gh.d[n],
        ParamId::Beta => s.kind.beta().unwrap_or(0.0),
    }
}

/// Writes a raw parameter back. Setting `Beta` on a non-GES splat is a no-op.
pub fn set_raw_param(s: &mut Splat2D, id: ParamId, value: f64) {
    match id {
        ParamId::MuX => s.mu[0] = value,
        ParamId::MuY => s.mu[1] = value,
        ParamId::Theta => s.theta = value,
        ParamId::LogScaleU => s.scale[0] = value.exp(),
        ParamId::LogScaleV => s.scale[1] = value.exp(),
        ParamId::OpacityLogit => s.opacity = sigmoid(value),
        ParamId::Color(k) => s.color[k] = value,
        ParamId::C(n) => s.gh.c[n] = value,
        ParamId::D(n) => s.gh.d[n] = value,
        ParamId::Beta => {
            if let KernelKind::Ges { beta } = &mut s.kind {
                *beta = value;
            }
        }
    }
}

/// Gradient of a scalar loss with respect to one splat's raw parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradientRecord {
    pub d_mu: [f64; 2],
    pub d_theta: f64,
    /// With respect to log-scales.
    pub d_scale: [f64; 2],
    pub d_opacity_logit: f64,
    pub d_color: [f64; 3],
    pub d_c: [f64; BASIS_LEN],
    pub d_d: [f64; BASIS_LEN],
    pub d_beta: f64,
}

impl GradientRecord {
    pub fn from_array(a: &[f64; PARAMS_PER_SPLAT]) -> Self {
        let mut d_c = [0.0; BASIS_LEN];
        let mut d_d = [0.0; BASIS_LEN];
        d_c.copy_from_slice(&a[C_BASE..D_BASE]);
        d_d.copy_from_slice(&a[D_BASE..BETA]);
        GradientRecord {
            d_mu: [a[0], a[1]],
            d_theta: a[2],
            d_scale: [a[3], a[4]],
            d_opacity_logit: a[5],
            d_color: [a[6], a[7], a[8]],
            d_c,
            d_d,
            d_beta: a[BETA],
        }
    }

    pub fn to_array(&self) -> [f64; PARAMS_PER_SPLAT] {
        let mut a = [0.0; PARAMS_PER_SPLAT];
        a[0] = self.d_mu[0];
        a[1] = self.d_mu[1];
        a[2] = self.d_theta;
        a[3] = self.d_scale[0];
        a[4] = self.d_scale[1];
        a[5] = self.d_opacity_logit;
        a[COLOR_BASE..C_BASE].copy_from_slice(&self.d_color);
        a[C_BASE..D_BASE].copy_from_slice(&self.d_c);
        a[D_BASE..BETA].copy_from_slice(&self.d_d);
        a[BETA] = self.d_beta;
        a
    }

    pub fn get(&self, id: ParamId) -> f64 {
        self.to_array()[id.index()]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}
