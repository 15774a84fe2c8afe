//! Splat kernels in local `(u, v)` coordinates.
//!
//! Four families are supported: the plain Gaussian, the Gaussian passed
//! through the GL activation, the generalized exponential (GES) and the
//! Gaussian-Hermite (GH) kernel. Every family has an analytic gradient with
//! respect to `(u, v)`, opacity and its own shape parameters.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hermite::{fill_hermite, HermiteRank, BASIS_LEN};

pub const GES_BETA_MIN: f64 = 1.0;
pub const GES_BETA_MAX: f64 = 8.0;

/// Cramér's constant: `|He_n(x)| <= K sqrt(n!) exp(x^2 / 4)`.
const CRAMER_K: f64 = 1.086_435;

/// Per-axis Hermite coefficients of a GH splat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GhParams {
    pub c: [f64; BASIS_LEN],
    pub d: [f64; BASIS_LEN],
    pub active_rank: HermiteRank,
}

impl Default for GhParams {
    fn default() -> Self {
        Self::gaussian()
    }
}

impl GhParams {
    /// Rank 0 with `c_0 = d_0 = 1`: identical to the plain Gaussian.
    pub fn gaussian() -> Self {
        let mut c = [0.0; BASIS_LEN];
        let mut d = [0.0; BASIS_LEN];
        c[0] = 1.0;
        d[0] = 1.0;
        GhParams {
            c,
            d,
            active_rank: HermiteRank::ZERO,
        }
    }

    /// Raises or lowers the active rank. Coefficients above the new rank are zeroed.
    pub fn set_rank(&mut self, rank: HermiteRank) {
        self.active_rank = rank;
        for n in rank.get() + 1..BASIS_LEN {
            self.c[n] = 0.0;
            self.d[n] = 0.0;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.active_rank.get();
        for n in 0..BASIS_LEN {
            if !self.c[n].is_finite() || !self.d[n].is_finite() {
                return Err(Error::Argument(format!(
                    "non-finite hermite coefficient at index {n}"
                )));
            }
            if n > r && (self.c[n] != 0.0 || self.d[n] != 0.0) {
                return Err(Error::Argument(format!(
                    "hermite coefficient {n} is nonzero above active rank {r}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    Gaussian,
    GaussianGl,
    Ges { beta: f64 },
    GaussianHermite,
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Gaussian => "gaussian",
            KernelKind::GaussianGl => "gaussian-gl",
            KernelKind::Ges { .. } => "ges",
            KernelKind::GaussianHermite => "gh",
        }
    }

    pub fn uses_gl(&self) -> bool {
        matches!(self, KernelKind::GaussianGl | KernelKind::GaussianHermite)
    }

    /// GES with the default shape `beta = 2`, i.e. starting as a Gaussian.
    pub fn ges() -> Self {
        KernelKind::Ges { beta: 2.0 }
    }

    pub fn beta(&self) -> Option<f64> {
        match self {
            KernelKind::Ges { beta } => Some(*beta),
            _ => None,
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KernelKind::Gaussian),
            "gaussian-gl" => Ok(KernelKind::GaussianGl),
            "ges" => Ok(KernelKind::ges()),
            "gh" => Ok(KernelKind::GaussianHermite),
            other => Err(Error::Argument(format!(
                "unknown kernel '{other}' (expected gaussian, gaussian-gl, ges or gh)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlConfig {
    pub sigma: f64,
}

impl Default for GlConfig {
    fn default() -> Self {
        GlConfig { sigma: 5.0 }
    }
}

#[inline]
pub fn clamp_beta(beta: f64) -> f64 {
    beta.clamp(GES_BETA_MIN, GES_BETA_MAX)
}

/// Unactivated GH kernel `exp(-(u²+v²)/2) (Σ c_n H_n(u)) (Σ d_m H_m(v))`.
pub fn gh_kernel(u: f64, v: f64, p: &GhParams) -> f64 {
    let rank = p.active_rank.get();
    let mut hu = [0.0; BASIS_LEN];
    let mut hv = [0.0; BASIS_LEN];
    fill_hermite(u, rank, &mut hu);
    fill_hermite(v, rank, &mut hv);
    let (pu, pv) = series(p, rank, &hu, &hv);
    gaussian(u, v) * pu * pv
}

#[inline]
fn series(p: &GhParams, rank: usize, hu: &[f64; BASIS_LEN], hv: &[f64; BASIS_LEN]) -> (f64, f64) {
    let mut pu = p.c[0] * hu[0];
    let mut pv = p.d[0] * hv[0];
    for n in 1..=rank {
        pu += p.c[n] * hu[n];
        pv += p.d[n] * hv[n];
    }
    (pu, pv)
}

#[inline]
fn gaussian(u: f64, v: f64) -> f64 {
    (-0.5 * (u * u + v * v)).exp()
}

/// `1 - exp(-σ t²)`, even in `t`, with range `[0, 1)`.
#[inline]
pub fn gl_activation(t: f64, cfg: GlConfig) -> f64 {
    -(-cfg.sigma * (t * t)).exp_m1()
}

/// `exp(-r^β / 2)` with `r = sqrt(u² + v²)`; `β` is clamped to `[1, 8]`.
pub fn ges_kernel(u: f64, v: f64, beta: f64) -> f64 {
    let r = (u * u + v * v).sqrt();
    (-0.5 * r.powf(clamp_beta(beta))).exp()
}

/// Opacity-weighted response of a splat at local coordinates `(u, v)`.
#[inline]
pub fn splat_response(
    u: f64,
    v: f64,
    kind: KernelKind,
    p: &GhParams,
    opacity: f64,
    cfg: GlConfig,
) -> f64 {
    match kind {
        KernelKind::Gaussian => opacity * gaussian(u, v),
        KernelKind::GaussianGl => opacity * gl_activation(gaussian(u, v), cfg),
        KernelKind::Ges { beta } => opacity * ges_kernel(u, v, beta),
        KernelKind::GaussianHermite => opacity * gl_activation(gh_kernel(u, v, p), cfg),
    }
}

/// Response value and all of its partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseGrad {
    pub value: f64,
    pub du: f64,
    pub dv: f64,
    /// Nonzero only up to the active rank.
    pub dc: [f64; BASIS_LEN],
    pub dd: [f64; BASIS_LEN],
    pub dopacity: f64,
    /// GES only; zero when `β` sits on a clamp boundary.
    pub dbeta: f64,
}

impl ResponseGrad {
    fn zero() -> Self {
        ResponseGrad {
            value: 0.0,
            du: 0.0,
            dv: 0.0,
            dc: [0.0; BASIS_LEN],
            dd: [0.0; BASIS_LEN],
            dopacity: 0.0,
            dbeta: 0.0,
        }
    }
}

/// Analytic gradient of [`splat_response`]. `value` is bit-identical to it.
pub fn splat_response_grad(
    u: f64,
    v: f64,
    kind: KernelKind,
    p: &GhParams,
    opacity: f64,
    cfg: GlConfig,
) -> ResponseGrad {
    let mut out = ResponseGrad::zero();
    // kernel value before activation and its partials
    let (g, dg_du, dg_dv) = match kind {
        KernelKind::Gaussian | KernelKind::GaussianGl => {
            let e = gaussian(u, v);
            (e, e * (0.0 - u), e * (0.0 - v))
        }
        KernelKind::Ges { beta } => {
            let b = clamp_beta(beta);
            let r2 = u * u + v * v;
            let r = r2.sqrt();
            let rb = r.powf(b);
            let g = (-0.5 * rb).exp();
            if r > 0.0 {
                // d(r^b)/du = b r^(b-2) u
                let k = -0.5 * g * b * rb / r2;
                if beta > GES_BETA_MIN && beta < GES_BETA_MAX {
                    out.dbeta = -0.5 * g * rb * r.ln();
                }
                (g, k * u, k * v)
            } else {
                (g, 0.0, 0.0)
            }
        }
        KernelKind::GaussianHermite => {
            let rank = p.active_rank.get();
            let mut hu = [0.0; BASIS_LEN];
            let mut hv = [0.0; BASIS_LEN];
            fill_hermite(u, rank, &mut hu);
            fill_hermite(v, rank, &mut hv);
            let (pu, pv) = series(p, rank, &hu, &hv);
            let e = gaussian(u, v);
            let g = e * pu * pv;
            let mut dpu = 0.0;
            let mut dpv = 0.0;
            for n in 1..=rank {
                dpu += p.c[n] * (n as f64 * hu[n - 1]);
                dpv += p.d[n] * (n as f64 * hv[n - 1]);
            }
            let e_pv = e * pv;
            let e_pu = e * pu;
            for n in 0..=rank {
                out.dc[n] = e_pv * hu[n];
                out.dd[n] = e_pu * hv[n];
            }
            (g, e_pv * (dpu - u * pu), e_pu * (dpv - v * pv))
        }
    };

    // activation
    let (act, dact_dg) = if kind.uses_gl() {
        let s = cfg.sigma;
        let act = gl_activation(g, cfg);
        (act, 2.0 * s * g * (-s * (g * g)).exp())
    } else {
        (g, 1.0)
    };

    out.value = opacity * act;
    out.dopacity = act;
    let da_dg = opacity * dact_dg;
    out.du = da_dg * dg_du;
    out.dv = da_dg * dg_dv;
    out.dbeta *= opacity;
    if matches!(kind, KernelKind::GaussianHermite) {
        for n in 0..=p.active_rank.get() {
            out.dc[n] *= da_dg;
            out.dd[n] *= da_dg;
        }
    }
    out
}

/// Local radius outside of which the response is guaranteed to stay below
/// `floor`. `None` means no point of the splat can reach `floor`;
/// `Some(f64::INFINITY)` is returned when `floor <= 0`.
pub fn cutoff_radius(
    kind: KernelKind,
    p: &GhParams,
    opacity: f64,
    cfg: GlConfig,
    floor: f64,
) -> Option<f64> {
    if floor <= 0.0 {
        return Some(f64::INFINITY);
    }
    let ratio = floor / opacity;
    if !(ratio < 1.0) {
        // opacity <= floor: response can only touch floor at an exact maximum of 1
        return if ratio == 1.0 { Some(0.0) } else { None };
    }
    // bound on |kernel| needed for response >= floor
    let g_thr = if kind.uses_gl() {
        (-(-ratio).ln_1p() / cfg.sigma).sqrt()
    } else {
        ratio
    };
    let r = match kind {
        KernelKind::Gaussian | KernelKind::GaussianGl => {
            if g_thr >= 1.0 {
                return None;
            }
            (-2.0 * g_thr.ln()).sqrt()
        }
        KernelKind::Ges { beta } => {
            if g_thr >= 1.0 {
                return None;
            }
            (-2.0 * g_thr.ln()).powf(1.0 / clamp_beta(beta))
        }
        KernelKind::GaussianHermite => gh_cutoff(p, g_thr),
    };
    Some(r * (1.0 + 1e-9) + 1e-9)
}

fn gh_cutoff(p: &GhParams, g_thr: f64) -> f64 {
    let rank = p.active_rank.get();
    let top = |coef: &[f64; BASIS_LEN]| (0..=rank).rev().find(|&n| coef[n] != 0.0);
    let (Some(top_c), Some(top_d)) = (top(&p.c), top(&p.d)) else {
        return 0.0;
    };

    // Cramér bound: |g| <= K² Σ|c_n|√n! Σ|d_m|√m! exp(-r²/4)
    let mut fact_sqrt = [1.0; BASIS_LEN];
    for n in 1..BASIS_LEN {
        fact_sqrt[n] = fact_sqrt[n - 1] * (n as f64).sqrt();
    }
    let sc: f64 = (0..=rank).map(|n| p.c[n].abs() * fact_sqrt[n]).sum();
    let sd: f64 = (0..=rank).map(|n| p.d[n].abs() * fact_sqrt[n]).sum();
    let amp = CRAMER_K * CRAMER_K * sc * sd;
    let r_cramer = if amp <= g_thr {
        0.0
    } else {
        (4.0 * (amp / g_thr).ln()).sqrt()
    };

    // Majorant bound: |Σ c_n H_n(u)| <= Σ |c_n| A_n(r) for |u| <= r, with
    // A_{n+1} = r A_n + n A_{n-1}. exp(-r²/2) A(r) B(r) decreases for r² > deg.
    let majorant = |r: f64| -> f64 {
        let mut a = [0.0; BASIS_LEN];
        a[0] = 1.0;
        if rank > 0 {
            a[1] = r;
        }
        for n in 1..rank {
            a[n + 1] = r * a[n] + n as f64 * a[n - 1];
        }
        let pc: f64 = (0..=rank).map(|n| p.c[n].abs() * a[n]).sum();
        let pd: f64 = (0..=rank).map(|n| p.d[n].abs() * a[n]).sum();
        (-0.5 * r * r).exp() * pc * pd
    };
    let r0 = ((top_c + top_d) as f64).sqrt();
    let r_poly = if majorant(r0) <= g_thr {
        r0
    } else {
        let mut lo = r0;
        let mut hi = r0 + 1.0;
        while majorant(hi) > g_thr {
            lo = hi;
            hi *= 2.0;
            if hi > 1e6 {
                return r_cramer;
            }
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if majorant(mid) > g_thr {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    r_cramer.min(r_poly)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rank(n: usize) -> HermiteRank {
        HermiteRank::new(n).unwrap()
    }

    #[test]
    fn gh_kernel_examples() {
        let p = GhParams::gaussian();
        assert_eq!(gh_kernel(0.0, 0.0, &p), 1.0);
        let (u, v) = (0.7, -1.3);
        assert_eq!(gh_kernel(u, v, &p), (-(u * u + v * v) / 2.0f64).exp());

        let mut p = GhParams::gaussian();
        p.set_rank(rank(1));
        p.c = [0.0; BASIS_LEN];
        p.c[1] = 1.0;
        assert!((gh_kernel(1.0, 0.0, &p) - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn gl_examples() {
        let cfg = GlConfig::default();
        assert_eq!(gl_activation(0.0, cfg), 0.0);
        assert!((gl_activation(1.0, cfg) - 0.993_262).abs() < 1e-6);
        assert_eq!(gl_activation(-1.0, cfg), gl_activation(1.0, cfg));
    }

    #[test]
    fn ges_examples() {
        let (u, v) = (0.4, 1.1);
        assert!((ges_kernel(u, v, 2.0) - (-(u * u + v * v) / 2.0f64).exp()).abs() < 1e-15);
        assert_eq!(ges_kernel(0.0, 0.0, 5.3), 1.0);
        let s = 0.5f64.sqrt();
        assert!((ges_kernel(s, s, 4.0) - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn response_examples() {
        let cfg = GlConfig::default();
        let p = GhParams::gaussian();
        assert_eq!(
            splat_response(0.0, 0.0, KernelKind::Gaussian, &p, 0.8, cfg),
            0.8
        );
        let a = splat_response(0.0, 0.0, KernelKind::GaussianHermite, &p, 1.0, cfg);
        assert!((a - (1.0 - (-5.0f64).exp())).abs() < 1e-15);
        for kind in [
            KernelKind::Gaussian,
            KernelKind::GaussianGl,
            KernelKind::ges(),
            KernelKind::GaussianHermite,
        ] {
            assert_eq!(splat_response(0.3, 0.2, kind, &p, 0.0, cfg), 0.0);
        }
    }

    #[test]
    fn grad_trivial_cases() {
        let cfg = GlConfig::default();
        let p = GhParams::gaussian();
        let g = splat_response_grad(0.0, 0.0, KernelKind::GaussianHermite, &p, 0.7, cfg);
        assert_eq!(g.du, 0.0);
        let g = splat_response_grad(0.5, -0.2, KernelKind::Gaussian, &p, 0.7, cfg);
        assert!((g.dopacity - g.value / 0.7).abs() < 1e-15);
    }

    #[test]
    fn grad_value_matches_response() {
        let cfg = GlConfig::default();
        let mut p = GhParams::gaussian();
        p.set_rank(rank(4));
        p.c[3] = 0.2;
        p.d[4] = -0.1;
        for kind in [
            KernelKind::Gaussian,
            KernelKind::GaussianGl,
            KernelKind::Ges { beta: 3.1 },
            KernelKind::GaussianHermite,
        ] {
            let a = splat_response(0.9, -0.4, kind, &p, 0.6, cfg);
            let g = splat_response_grad(0.9, -0.4, kind, &p, 0.6, cfg);
            assert_eq!(a.to_bits(), g.value.to_bits(), "{kind}");
        }
    }

    #[test]
    fn rank_zero_gh_matches_gaussian_gl_bitwise() {
        let cfg = GlConfig::default();
        let p = GhParams::gaussian();
        for &(u, v) in &[(0.1, 0.2), (-1.7, 2.2), (3.0, -0.5)] {
            let a = splat_response_grad(u, v, KernelKind::GaussianHermite, &p, 0.4, cfg);
            let b = splat_response_grad(u, v, KernelKind::GaussianGl, &p, 0.4, cfg);
            assert_eq!(a.value.to_bits(), b.value.to_bits());
            assert_eq!(a.du.to_bits(), b.du.to_bits());
            assert_eq!(a.dv.to_bits(), b.dv.to_bits());
            assert_eq!(a.dopacity.to_bits(), b.dopacity.to_bits());
        }
    }

    #[test]
    fn gradients_above_rank_are_zero() {
        let mut p = GhParams::gaussian();
        p.set_rank(rank(3));
        p.c[2] = 0.3;
        let g = splat_response_grad(
            0.5,
            0.5,
            KernelKind::GaussianHermite,
            &p,
            0.9,
            GlConfig::default(),
        );
        assert!(g.dc[4..].iter().all(|&x| x == 0.0));
        assert!(g.dd[4..].iter().all(|&x| x == 0.0));
        assert!(g.dc[3] != 0.0);
    }

    #[test]
    fn set_rank_zeroes_tail_and_validate() {
        let mut p = GhParams::gaussian();
        p.set_rank(rank(5));
        p.c[5] = 1.0;
        assert!(p.validate().is_ok());
        p.set_rank(rank(2));
        assert_eq!(p.c[5], 0.0);
        p.d[7] = 0.1;
        assert!(p.validate().is_err());
    }

    #[test]
    fn cutoff_gaussian_is_exact() {
        let p = GhParams::gaussian();
        let r = cutoff_radius(
            KernelKind::Gaussian,
            &p,
            1.0,
            GlConfig::default(),
            1.0 / 512.0,
        )
        .unwrap();
        assert!((r - (2.0 * 512f64.ln()).sqrt()).abs() < 1e-6);
        assert!(r > 3.0);
        assert!(cutoff_radius(
            KernelKind::Gaussian,
            &p,
            1e-3,
            GlConfig::default(),
            1.0 / 512.0
        )
        .is_none());
        assert_eq!(
            cutoff_radius(
                KernelKind::GaussianHermite,
                &p,
                0.5,
                GlConfig::default(),
                0.0
            ),
            Some(f64::INFINITY)
        );
    }

    #[test]
    fn parse_kind_names() {
        for s in ["gaussian", "gaussian-gl", "ges", "gh"] {
            assert_eq!(s.parse::<KernelKind>().unwrap().name(), s);
        }
        assert!("sigmoid".parse::<KernelKind>().is_err());
    }
}
