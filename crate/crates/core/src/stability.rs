//! Linear stability of equilibria via the transcendental characteristic
//! equation of the delay system.
//!
//! Perturbations advect through each vessel with its equilibrium transit
//! time, so the linearisation closes into
//!
//! `chi(lambda) = a K(lambda tau_A) + (b + d e^(-lambda tau_C)) K(lambda tau_B)
//!               + c K(lambda tau_C) - 1`
//!
//! with the delay kernel `K(z) = (1 - e^(-z)) / z`. Roots `sigma + i omega`
//! are located as intersections of the zero contours of the real and
//! imaginary parts, refined by Newton iteration; right-half-plane root
//! counts come from the argument principle.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::equilibrium::{psi_residual, state_at, CurvePoint, EquilibriumCurve, EquilibriumState};
use crate::error::{Error, Result};
use crate::network::NetworkConfig;
use crate::numeric::solve_dense;

/// Frequencies below this are treated as fold/real-root territory rather
/// than Hopf candidates.
pub const OMEGA_MIN: f64 = 0.05;

/// Default refinement target for `|chi|` at a root.
pub const ROOT_TOL: f64 = 1e-10;

/// Coefficients and delays of the characteristic equation at an equilibrium.
#[derive(Debug, Clone, Copy)]
pub struct CharCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub tau_a: f64,
    pub tau_b: f64,
    pub tau_c: f64,
}

/// Build the characteristic coefficients at a converged equilibrium.
///
/// States with `q_c < 0` are analysed through the exchanged problem, which
/// has the same spectrum; the caller's `cfg` must be the configuration the
/// state was computed at.
pub fn char_coefficients(
    cfg: &NetworkConfig,
    state: &EquilibriumState,
) -> Result<CharCoefficients> {
    if state.q_c < 0.0 {
        let sw = cfg.swapped();
        let mirrored = state_at(&sw, -state.q_c)?;
        return char_coefficients(&sw, &mirrored);
    }
    let q1 = cfg.inlets.q1();
    let x = if state.q_c == 0.0 {
        0.0
    } else {
        state.q_c / q1
    };
    if cfg.separation.fraction(x)? == 0.0 && x > 0.0 && cfg.separation.x_times_deriv(x)? != 0.0 {
        return Err(Error::Singular(format!(
            "f = 0 at x = {x} with f' != 0: relative fraction perturbation diverges"
        )));
    }
    // grouped term phi_C (q_c/q1) (f'/f) in its finite closed form
    let g = cfg.inlets.phi1() * cfg.separation.x_times_deriv(x)?;
    let sum_r = state.res_a + state.res_b + state.res_c;
    let la = cfg.viscosity.dln_mu_dphi(state.phi_a)?;
    let lb = cfg.viscosity.dln_mu_dphi(state.phi_b)?;
    let lc = cfg.viscosity.dln_mu_dphi(state.phi_c)?;
    Ok(CharCoefficients {
        a: -((state.phi_c - state.phi_a) + g) * (state.res_a / sum_r) * la,
        b: -(state.phi_c - state.phi_b) * (state.res_b / sum_r) * lb,
        c: -g * (state.res_c / sum_r) * lc,
        d: -g * (state.res_b / sum_r) * lb,
        tau_a: state.tau_a,
        tau_b: state.tau_b,
        tau_c: state.tau_c,
    })
}

/// `e^w - 1` without cancellation for small `|w|`.
fn expm1_complex(w: Complex64) -> Complex64 {
    // e^w - 1 = expm1(re) cos(im) - 2 sin^2(im/2) + i e^re sin(im)
    let half = (0.5 * w.im).sin();
    Complex64::new(
        w.re.exp_m1() * w.im.cos() - 2.0 * half * half,
        w.re.exp() * w.im.sin(),
    )
}

/// Delay kernel `(1 - e^(-z)) / z`, switching to its Taylor branch for
/// small `|z|` where the quotient degenerates.
pub fn delay_kernel(z: Complex64) -> Complex64 {
    if z.norm() < 1e-4 {
        // 1 - z/2 + z^2/6 - z^3/24
        Complex64::new(1.0, 0.0) - z / 2.0 + z * z / 6.0 - z * z * z / 24.0
    } else {
        -expm1_complex(-z) / z
    }
}

/// Derivative of the delay kernel.
pub fn delay_kernel_deriv(z: Complex64) -> Complex64 {
    if z.norm() < 1e-4 {
        // -1/2 + z/3 - z^2/8 + z^3/30
        Complex64::new(-0.5, 0.0) + z / 3.0 - z * z / 8.0 + z * z * z / 30.0
    } else {
        // (e^(-z)(z + 1) - 1) / z^2 in cancellation-free form
        (expm1_complex(-z) * (z + 1.0) + z) / (z * z)
    }
}

impl CharCoefficients {
    /// Characteristic function `chi(lambda)`; roots are the linear modes.
    pub fn chi(&self, lambda: Complex64) -> Complex64 {
        let mut out = Complex64::new(-1.0, 0.0);
        if self.a != 0.0 {
            out += self.a * delay_kernel(lambda * self.tau_a);
        }
        let bd = if self.d != 0.0 {
            Complex64::new(self.b, 0.0) + self.d * (-lambda * self.tau_c).exp()
        } else {
            Complex64::new(self.b, 0.0)
        };
        if bd.re != 0.0 || bd.im != 0.0 {
            out += bd * delay_kernel(lambda * self.tau_b);
        }
        if self.c != 0.0 {
            out += self.c * delay_kernel(lambda * self.tau_c);
        }
        out
    }

    /// `d chi / d lambda`.
    pub fn chi_deriv(&self, lambda: Complex64) -> Complex64 {
        let mut out = Complex64::new(0.0, 0.0);
        if self.a != 0.0 {
            out += self.a * self.tau_a * delay_kernel_deriv(lambda * self.tau_a);
        }
        if self.b != 0.0 || self.d != 0.0 {
            let kbp = delay_kernel_deriv(lambda * self.tau_b);
            if self.d != 0.0 {
                let e = (-lambda * self.tau_c).exp();
                let kb = delay_kernel(lambda * self.tau_b);
                out += (Complex64::new(self.b, 0.0) + self.d * e) * self.tau_b * kbp;
                out -= self.d * self.tau_c * e * kb;
            } else {
                out += self.b * self.tau_b * kbp;
            }
        }
        if self.c != 0.0 {
            out += self.c * self.tau_c * delay_kernel_deriv(lambda * self.tau_c);
        }
        out
    }

    /// `chi(0) + 1 = a + b + c + d`, the static loop gain. Equals the
    /// equilibrium derivative `d psi / d q_c`, so a gain above one marks a
    /// real unstable (saddle) mode.
    pub fn static_gain(&self) -> f64 {
        self.a + self.b + self.c + self.d
    }

    /// Radius bound: every root with non-negative real part satisfies
    /// `|lambda| <= 2 (|a|/tau_A + (|b|+|d|)/tau_B + |c|/tau_C)`.
    pub fn unstable_radius_bound(&self) -> f64 {
        let term = |c: f64, tau: f64| if c == 0.0 { 0.0 } else { c.abs() / tau };
        2.0 * (term(self.a, self.tau_a)
            + term(self.b.abs() + self.d.abs(), self.tau_b)
            + term(self.c, self.tau_c))
    }
}

/// Rectangle in the complex plane scanned for roots.
#[derive(Debug, Clone, Copy)]
pub struct Window {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub omega_min: f64,
    pub omega_max: f64,
}

impl Default for Window {
    fn default() -> Self {
        Self {
            sigma_min: -2.0,
            sigma_max: 1.0,
            omega_min: 0.0,
            omega_max: 40.0,
        }
    }
}

/// Sampled real and imaginary parts of `chi` over a window.
#[derive(Debug, Clone)]
pub struct ContourField {
    pub sigmas: Vec<f64>,
    pub omegas: Vec<f64>,
    /// Row-major `[i_omega * n_sigma + i_sigma]`.
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ContourField {
    pub fn at(&self, i_omega: usize, i_sigma: usize) -> (f64, f64) {
        let k = i_omega * self.sigmas.len() + i_sigma;
        (self.re[k], self.im[k])
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| a + (b - a) * (i as f64) / ((n - 1) as f64))
        .collect()
}

/// Sample `chi` over the window on an `n_sigma x n_omega` grid.
pub fn eigen_contours(
    co: &CharCoefficients,
    window: &Window,
    n_sigma: usize,
    n_omega: usize,
) -> ContourField {
    let sigmas = linspace(window.sigma_min, window.sigma_max, n_sigma.max(2));
    let omegas = linspace(window.omega_min, window.omega_max, n_omega.max(2));
    let rows: Vec<Vec<(f64, f64)>> = omegas
        .par_iter()
        .map(|&w| {
            sigmas
                .iter()
                .map(|&s| {
                    let z = co.chi(Complex64::new(s, w));
                    (z.re, z.im)
                })
                .collect()
        })
        .collect();
    let mut re = Vec::with_capacity(sigmas.len() * omegas.len());
    let mut im = Vec::with_capacity(sigmas.len() * omegas.len());
    for row in rows {
        for (r, i) in row {
            re.push(r);
            im.push(i);
        }
    }
    ContourField {
        sigmas,
        omegas,
        re,
        im,
    }
}

/// Zero-contour segments of a scalar field on one grid cell, by splitting
/// the cell into four triangles about its centre (no ambiguous cases).
fn cell_segments(
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    f00: f64,
    f10: f64,
    f01: f64,
    f11: f64,
) -> Vec<[(f64, f64); 2]> {
    let xc = 0.5 * (x0 + x1);
    let yc = 0.5 * (y0 + y1);
    let fc = 0.25 * (f00 + f10 + f01 + f11);
    let corners = [
        ((x0, y0), f00),
        ((x1, y0), f10),
        ((x1, y1), f11),
        ((x0, y1), f01),
    ];
    let mut segs = Vec::new();
    for k in 0..4 {
        let (p_a, f_a) = corners[k];
        let (p_b, f_b) = corners[(k + 1) % 4];
        let tri = [(p_a, f_a), (p_b, f_b), ((xc, yc), fc)];
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(3);
        for e in 0..3 {
            let ((xa, ya), fa) = tri[e];
            let ((xb, yb), fb) = tri[(e + 1) % 3];
            if fa == 0.0 && fb == 0.0 {
                continue;
            }
            if fa * fb < 0.0 || (fa == 0.0 && fb != 0.0) {
                let t = if fa == 0.0 { 0.0 } else { fa / (fa - fb) };
                pts.push((xa + t * (xb - xa), ya + t * (yb - ya)));
            }
        }
        pts.dedup_by(|p, q| p.0 == q.0 && p.1 == q.1);
        if pts.len() == 2 {
            segs.push([pts[0], pts[1]]);
        }
    }
    segs
}

fn segment_intersection(s1: &[(f64, f64); 2], s2: &[(f64, f64); 2]) -> Option<(f64, f64)> {
    let (p, q) = (s1[0], s1[1]);
    let (r, w) = (s2[0], s2[1]);
    let d1 = (q.0 - p.0, q.1 - p.1);
    let d2 = (w.0 - r.0, w.1 - r.1);
    let den = d1.0 * d2.1 - d1.1 * d2.0;
    if den.abs() < 1e-300 {
        return None;
    }
    let t = ((r.0 - p.0) * d2.1 - (r.1 - p.1) * d2.0) / den;
    let u = ((r.0 - p.0) * d1.1 - (r.1 - p.1) * d1.0) / den;
    if (-1e-12..=1.0 + 1e-12).contains(&t) && (-1e-12..=1.0 + 1e-12).contains(&u) {
        Some((p.0 + t * d1.0, p.1 + t * d1.1))
    } else {
        None
    }
}

/// Intersections of the zero contours of two fields sampled on a common
/// grid: candidate points where both vanish.
fn contour_intersections(xs: &[f64], ys: &[f64], f: &[f64], g: &[f64]) -> Vec<(f64, f64)> {
    let nx = xs.len();
    let mut out = Vec::new();
    for iy in 0..ys.len() - 1 {
        for ix in 0..nx - 1 {
            let idx = |iiy: usize, iix: usize| iiy * nx + iix;
            let fv = [
                f[idx(iy, ix)],
                f[idx(iy, ix + 1)],
                f[idx(iy + 1, ix)],
                f[idx(iy + 1, ix + 1)],
            ];
            if fv.iter().all(|v| *v > 0.0) || fv.iter().all(|v| *v < 0.0) {
                continue;
            }
            let gv = [
                g[idx(iy, ix)],
                g[idx(iy, ix + 1)],
                g[idx(iy + 1, ix)],
                g[idx(iy + 1, ix + 1)],
            ];
            if gv.iter().all(|v| *v > 0.0) || gv.iter().all(|v| *v < 0.0) {
                continue;
            }
            let (x0, x1, y0, y1) = (xs[ix], xs[ix + 1], ys[iy], ys[iy + 1]);
            let segs_f = cell_segments(x0, x1, y0, y1, fv[0], fv[1], fv[2], fv[3]);
            let segs_g = cell_segments(x0, x1, y0, y1, gv[0], gv[1], gv[2], gv[3]);
            for sf in &segs_f {
                for sg in &segs_g {
                    if let Some(p) = segment_intersection(sf, sg) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

/// One root of the characteristic equation.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct Eigenvalue {
    pub sigma: f64,
    pub omega: f64,
}

/// Result of a windowed eigenvalue search.
#[derive(Debug, Clone)]
pub struct EigenScan {
    /// Converged roots, sorted by descending growth rate.
    pub eigenvalues: Vec<Eigenvalue>,
    /// Contour-intersection seeds Newton could not converge.
    pub unconverged: Vec<(f64, f64)>,
}

impl EigenScan {
    pub fn dominant(&self) -> Option<&Eigenvalue> {
        self.eigenvalues.first()
    }
}

fn newton_root(co: &CharCoefficients, seed: Complex64, tol: f64) -> Option<Complex64> {
    let mut lam = seed;
    let mut best = co.chi(lam).norm();
    for _ in 0..80 {
        if best < tol {
            return Some(lam);
        }
        let dchi = co.chi_deriv(lam);
        if dchi.norm() == 0.0 {
            return None;
        }
        let full = co.chi(lam) / dchi;
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..8 {
            let cand = lam - full * scale;
            let n = co.chi(cand).norm();
            if n < best {
                lam = cand;
                best = n;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (best < tol).then_some(lam)
}

/// Locate roots of `chi` inside the window: marching-squares intersections
/// of the zero contours of the real and imaginary parts are refined by a
/// damped Newton iteration; purely real roots are found by a 1-D bracket
/// scan of `chi` on the real axis when the window includes `omega = 0`.
pub fn find_eigenvalues(
    co: &CharCoefficients,
    window: &Window,
    n_sigma: usize,
    n_omega: usize,
    tol: f64,
) -> EigenScan {
    let field = eigen_contours(co, window, n_sigma, n_omega);
    let seeds = contour_intersections(&field.sigmas, &field.omegas, &field.re, &field.im);

    let mut roots: Vec<Eigenvalue> = Vec::new();
    let mut unconverged: Vec<(f64, f64)> = Vec::new();
    fn push_root(lam: Complex64, roots: &mut Vec<Eigenvalue>) {
        let (s, w) = (lam.re, lam.im.abs());
        if !roots
            .iter()
            .any(|r| (r.sigma - s).abs() < 1e-6 && (r.omega - w).abs() < 1e-6)
        {
            roots.push(Eigenvalue { sigma: s, omega: w });
        }
    }

    let d_omega = field.omegas[1] - field.omegas[0];
    for (s, w) in seeds {
        // just above the axis is real-root territory handled by the 1-D scan
        if window.omega_min <= 0.0 && w.abs() < 0.5 * d_omega {
            continue;
        }
        match newton_root(co, Complex64::new(s, w), tol) {
            Some(lam) => push_root(lam, &mut roots),
            None => unconverged.push((s, w)),
        }
    }

    // real roots: chi restricted to the real axis
    if window.omega_min <= 0.0 {
        let n = (4 * n_sigma).max(64);
        let xs = linspace(window.sigma_min, window.sigma_max, n);
        let vals: Vec<f64> = xs
            .iter()
            .map(|&s| co.chi(Complex64::new(s, 0.0)).re)
            .collect();
        for k in 0..n - 1 {
            if vals[k].signum() != vals[k + 1].signum() {
                let seed = Complex64::new(0.5 * (xs[k] + xs[k + 1]), 0.0);
                match newton_root(co, seed, tol) {
                    Some(lam) if lam.im.abs() < 1e-9 => {
                        push_root(Complex64::new(lam.re, 0.0), &mut roots)
                    }
                    Some(_) | None => unconverged.push((seed.re, 0.0)),
                }
            }
        }
    }

    // keep roots inside (a hair beyond) the window
    let margin = 1e-6;
    roots.retain(|r| {
        r.sigma >= window.sigma_min - margin
            && r.sigma <= window.sigma_max + margin
            && r.omega <= window.omega_max + margin
    });
    roots.sort_by(|p, q| q.sigma.partial_cmp(&p.sigma).unwrap());
    EigenScan {
        eigenvalues: roots,
        unconverged,
    }
}

/// Count of characteristic roots with positive real part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnstableCount {
    /// Real positive roots.
    pub real: usize,
    /// Conjugate pairs with positive real part and nonzero frequency.
    pub complex_pairs: usize,
}

impl UnstableCount {
    pub fn total(&self) -> usize {
        self.real + 2 * self.complex_pairs
    }
}

/// Accumulated argument change of `chi` along the straight segment from
/// `za` to `zb`, subdividing until each piece turns by less than pi/2.
fn arg_change(co: &CharCoefficients, za: Complex64, zb: Complex64, depth: usize) -> f64 {
    let d = (co.chi(zb).arg() - co.chi(za).arg() + std::f64::consts::PI)
        .rem_euclid(2.0 * std::f64::consts::PI)
        - std::f64::consts::PI;
    if d.abs() < std::f64::consts::FRAC_PI_2 || depth >= 46 {
        return d;
    }
    let mid = 0.5 * (za + zb);
    arg_change(co, za, mid, depth + 1) + arg_change(co, mid, zb, depth + 1)
}

/// Number of right-half-plane roots by the argument principle over the
/// rectangle that provably contains them, split into real roots and
/// conjugate pairs.
pub fn count_unstable(co: &CharCoefficients) -> UnstableCount {
    let bound = co.unstable_radius_bound();
    if bound == 0.0 {
        return UnstableCount {
            real: 0,
            complex_pairs: 0,
        };
    }
    let r = bound + 0.25;
    let eps = 1e-9;
    let corners = [
        Complex64::new(eps, -r),
        Complex64::new(r, -r),
        Complex64::new(r, r),
        Complex64::new(eps, r),
    ];
    let per_edge = 48;
    let mut total_arg = 0.0;
    for k in 0..4 {
        let za = corners[k];
        let zb = corners[(k + 1) % 4];
        for m in 0..per_edge {
            let t0 = m as f64 / per_edge as f64;
            let t1 = (m + 1) as f64 / per_edge as f64;
            total_arg += arg_change(co, za + (zb - za) * t0, za + (zb - za) * t1, 0);
        }
    }
    let total = (total_arg / (2.0 * std::f64::consts::PI)).round();
    let total = if total.is_finite() && total >= 0.0 {
        total as usize
    } else {
        0
    };

    // real positive roots by dense sign scan on (0, r]
    let n = 512;
    let mut real = 0usize;
    let mut prev = co.chi(Complex64::new(eps, 0.0)).re;
    for k in 1..=n {
        let s = eps + (r - eps) * (k as f64) / (n as f64);
        let v = co.chi(Complex64::new(s, 0.0)).re;
        if prev.signum() != v.signum() {
            real += 1;
        }
        prev = v;
    }
    let complex_pairs = total.saturating_sub(real) / 2;
    UnstableCount {
        real,
        complex_pairs,
    }
}

/// Stability class of one equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum StabilityLabel {
    /// All characteristic roots in the left half-plane.
    Stable,
    /// A real positive root (static gain above one): saddle-type state.
    Saddle,
    /// A complex pair with positive real part: limit-cycle territory.
    Oscillatory,
}

/// Classify an equilibrium from its characteristic coefficients.
pub fn classify_state(co: &CharCoefficients) -> StabilityLabel {
    // static gain above one forces a real positive root
    if co.static_gain() > 1.0 + 1e-12 {
        return StabilityLabel::Saddle;
    }
    let count = count_unstable(co);
    if count.real > 0 {
        StabilityLabel::Saddle
    } else if count.complex_pairs > 0 {
        StabilityLabel::Oscillatory
    } else {
        StabilityLabel::Stable
    }
}

/// A Hopf bifurcation point: a conjugate pair crossing the imaginary axis.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct HopfPoint {
    pub q1: f64,
    pub q_c: f64,
    pub contrast: f64,
    pub omega: f64,
}

/// Outcome of scanning an equilibrium curve for Hopf bifurcations.
#[derive(Debug, Clone)]
pub struct HopfScanResult {
    /// Refined Hopf points ordered along the curve.
    pub points: Vec<HopfPoint>,
    /// Curve-point indices whose coefficients were singular and skipped.
    pub gaps: Vec<usize>,
}

/// Newton refinement of the Hopf-defining system at fixed contrast:
/// unknowns `(q1, q_c, omega)`, equations
/// `[psi - q_c, Re chi(i omega), Im chi(i omega)]`.
pub fn refine_hopf(cfg: &NetworkConfig, q1: f64, q_c: f64, omega: f64) -> Result<HopfPoint> {
    let mut u = [q1, q_c, omega];
    let eval = |u: &[f64; 3]| -> Result<[f64; 3]> {
        let c = cfg.with_q1(u[0])?;
        let st = state_at(&c, u[1])?;
        let co = char_coefficients(&c, &st)?;
        let z = co.chi(Complex64::new(0.0, u[2]));
        Ok([psi_residual(&c, u[1])?, z.re, z.im])
    };
    for _ in 0..60 {
        let f = eval(&u)?;
        if f.iter().all(|v| v.abs() < 1e-10) {
            return Ok(HopfPoint {
                q1: u[0],
                q_c: u[1],
                contrast: cfg.contrast(),
                omega: u[2],
            });
        }
        let mut jac = [0.0f64; 9];
        for j in 0..3 {
            let h = 1e-7 * (1.0 + u[j].abs());
            let mut up = u;
            let mut um = u;
            up[j] += h;
            um[j] -= h;
            let fp = eval(&up)?;
            let fm = eval(&um)?;
            for i in 0..3 {
                jac[i * 3 + j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let mut rhs = [-f[0], -f[1], -f[2]];
        solve_dense(&mut jac, &mut rhs, 3)?;
        let max_step = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let damp = 1.0f64.min(0.2 / max_step.max(1e-30));
        for j in 0..3 {
            u[j] += damp * rhs[j];
        }
        if !u.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    Err(Error::Solver(format!(
        "Hopf refinement did not converge from (q1 = {q1}, q_c = {q_c}, omega = {omega})"
    )))
}

/// Sample `Re chi(i omega)` and `Im chi(i omega)` along an equilibrium
/// curve: the x-axis carries the curve arclength, each row one frequency.
/// Curve points with singular coefficients are filled with a benign
/// nonzero constant and reported in the second return value.
pub fn hopf_contours(
    cfg: &NetworkConfig,
    curve: &EquilibriumCurve,
    omega_range: (f64, f64),
    n_omega: usize,
) -> Result<(ContourField, Vec<usize>)> {
    let pts = &curve.points;
    if pts.len() < 3 {
        return Err(Error::Precondition(
            "curve too short for a Hopf scan".into(),
        ));
    }
    let omega_lo = omega_range.0.max(OMEGA_MIN);
    let omegas = linspace(omega_lo, omega_range.1, n_omega.max(2));

    let coeffs: Vec<Option<CharCoefficients>> = pts
        .par_iter()
        .map(|p| {
            cfg.with_q1(p.q1)
                .and_then(|c| char_coefficients(&c, &p.state))
                .ok()
        })
        .collect();
    let gaps: Vec<usize> = coeffs
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.is_none().then_some(i))
        .collect();

    let xs: Vec<f64> = pts.iter().map(|p| p.s).collect();
    let rows: Vec<Vec<(f64, f64)>> = omegas
        .par_iter()
        .map(|&w| {
            coeffs
                .iter()
                .map(|co| match co {
                    Some(co) => {
                        let z = co.chi(Complex64::new(0.0, w));
                        (z.re, z.im)
                    }
                    None => (1.0, 1.0),
                })
                .collect()
        })
        .collect();
    let mut re = vec![0.0; pts.len() * omegas.len()];
    let mut im = vec![0.0; pts.len() * omegas.len()];
    for (iw, row) in rows.into_iter().enumerate() {
        for (is, (r, i)) in row.into_iter().enumerate() {
            re[iw * pts.len() + is] = r;
            im[iw * pts.len() + is] = i;
        }
    }
    Ok((
        ContourField {
            sigmas: xs,
            omegas,
            re,
            im,
        },
        gaps,
    ))
}

/// Scan an equilibrium curve for Hopf bifurcations: on the `(s, omega)`
/// rectangle with `sigma = 0`, intersections of the zero contours of
/// `Re chi` and `Im chi` mark crossings, each refined on the full
/// three-equation system.
pub fn hopf_scan(
    cfg: &NetworkConfig,
    curve: &EquilibriumCurve,
    omega_range: (f64, f64),
    n_omega: usize,
) -> Result<HopfScanResult> {
    let pts = &curve.points;
    let (field, gaps) = hopf_contours(cfg, curve, omega_range, n_omega)?;
    let seeds = contour_intersections(&field.sigmas, &field.omegas, &field.re, &field.im);
    let mut out: Vec<HopfPoint> = Vec::new();
    for (s_arc, w) in seeds {
        // arclength is strictly increasing along the trace
        let i = pts.partition_point(|p| p.s < s_arc).clamp(1, pts.len() - 1) - 1;
        let span = pts[i + 1].s - pts[i].s;
        let t = if span > 0.0 {
            ((s_arc - pts[i].s) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q1 = pts[i].q1 * (1.0 - t) + pts[i + 1].q1 * t;
        let qc = pts[i].state.q_c * (1.0 - t) + pts[i + 1].state.q_c * t;
        if let Ok(h) = refine_hopf(cfg, q1, qc, w) {
            if h.omega >= OMEGA_MIN
                && !out
                    .iter()
                    .any(|p| (p.q1 - h.q1).abs() < 1e-6 && (p.omega - h.omega).abs() < 1e-5)
            {
                out.push(h);
            }
        }
    }
    out.sort_by(|p, q| p.q1.partial_cmp(&q.q1).unwrap());
    Ok(HopfScanResult { points: out, gaps })
}

/// Per-point stability labels along an equilibrium curve.
pub fn classify_stability(
    cfg: &NetworkConfig,
    curve: &EquilibriumCurve,
) -> Result<Vec<StabilityLabel>> {
    curve
        .points
        .par_iter()
        .map(|p: &CurvePoint| {
            let c = cfg.with_q1(p.q1)?;
            let co = char_coefficients(&c, &p.state)?;
            Ok(classify_state(&co))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{continue_curve, detect_folds, solve_equilibria, StepControl};
    use crate::network::{
        InletConditions, NetworkConfig, NetworkGeometry, SeparationLaw, VesselGeometry,
        ViscosityLaw,
    };
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn example1(contrast: f64, q1: f64) -> NetworkConfig {
        NetworkConfig::new(
            NetworkGeometry::from_vessels(
                VesselGeometry::new(1.0, 1.0).unwrap(),
                VesselGeometry::new(1.0, 1.0).unwrap(),
                VesselGeometry::new(2.5, 0.75).unwrap(),
            )
            .unwrap(),
            InletConditions::new(q1, 0.82, 0.82).unwrap(),
            ViscosityLaw::arrhenius(contrast).unwrap(),
            SeparationLaw::microvascular(2.0).unwrap(),
        )
    }

    fn example2(contrast: f64, q1: f64) -> NetworkConfig {
        NetworkConfig::new(
            NetworkGeometry::from_vessels(
                VesselGeometry::new(1.0, 1.0).unwrap(),
                VesselGeometry::new(0.5, 1.0).unwrap(),
                VesselGeometry::new(2.5, 0.75).unwrap(),
            )
            .unwrap(),
            InletConditions::new(q1, 0.8, 0.8).unwrap(),
            ViscosityLaw::arrhenius(contrast).unwrap(),
            SeparationLaw::stratified(1.0).unwrap(),
        )
    }

    fn fig4_coeffs() -> CharCoefficients {
        let cfg = example1(50.0, 0.5);
        let st = solve_equilibria(&cfg).unwrap()[0];
        char_coefficients(&cfg, &st).unwrap()
    }

    #[test]
    fn coefficients_vanish_without_viscosity_contrast() {
        let cfg = example1(1.0, 0.4);
        let st = solve_equilibria(&cfg).unwrap()[0];
        let co = char_coefficients(&cfg, &st).unwrap();
        assert_eq!((co.a, co.b, co.c, co.d), (0.0, 0.0, 0.0, 0.0));
        // chi is identically -1: no roots anywhere
        assert_eq!(co.chi(Complex64::new(0.3, 5.0)), Complex64::new(-1.0, 0.0));
        let scan = find_eigenvalues(&co, &Window::default(), 100, 100, ROOT_TOL);
        assert!(scan.eigenvalues.is_empty());
        assert_eq!(count_unstable(&co).total(), 0);
    }

    #[test]
    fn only_b_survives_without_separation() {
        let cfg = NetworkConfig::new(
            example1(20.0, 0.37).geometry,
            InletConditions::new(0.37, 0.82, 0.4).unwrap(),
            ViscosityLaw::arrhenius(20.0).unwrap(),
            SeparationLaw::None,
        );
        let st = solve_equilibria(&cfg).unwrap()[0];
        let co = char_coefficients(&cfg, &st).unwrap();
        assert_eq!(co.a, 0.0);
        assert_eq!(co.c, 0.0);
        assert_eq!(co.d, 0.0);
        assert!(co.b != 0.0);
    }

    #[test]
    fn fig4_coefficients_frozen() {
        let co = fig4_coeffs();
        assert_abs_diff_eq!(co.a, -1.130059385825, epsilon = 1e-8);
        assert_abs_diff_eq!(co.b, 0.202124731126, epsilon = 1e-8);
        assert_abs_diff_eq!(co.c, -0.009535779728, epsilon = 1e-8);
        assert_abs_diff_eq!(co.d, -0.956229076368, epsilon = 1e-8);
        assert_abs_diff_eq!(co.tau_a, 0.482242261864, epsilon = 1e-8);
        assert_abs_diff_eq!(co.tau_b, 0.216738569978, epsilon = 1e-8);
        assert_abs_diff_eq!(co.tau_c, 3.690644238681, epsilon = 1e-8);
    }

    #[test]
    fn static_gain_matches_psi_derivative() {
        // chi(0) + 1 must equal d psi / d q_c at the equilibrium
        for (cfg, pick) in [
            (example1(50.0, 0.5), 0usize),
            (example1(10.0, 0.45), 0),
            (example2(20.0, 0.97), 1),
        ] {
            let sts = solve_equilibria(&cfg).unwrap();
            let st = sts[pick.min(sts.len() - 1)];
            let co = char_coefficients(&cfg, &st).unwrap();
            let d = crate::equilibrium::dpsi_dqc(&cfg, st.q_c).unwrap();
            assert_abs_diff_eq!(co.static_gain(), d, epsilon = 1e-5);
        }
    }

    #[test]
    fn delay_kernel_limits() {
        let k0 = delay_kernel(Complex64::new(0.0, 0.0));
        assert_abs_diff_eq!(k0.re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k0.im, 0.0, epsilon = 1e-15);

        let kpi = delay_kernel(Complex64::new(0.0, std::f64::consts::PI));
        assert_abs_diff_eq!(kpi.re, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(kpi.im, -2.0 / std::f64::consts::PI, epsilon = 1e-14);
    }

    #[test]
    fn delay_kernel_branch_consistency() {
        // direct and series formulas agree where the branch switches
        for k in 0..16 {
            let th = 2.0 * std::f64::consts::PI * (k as f64) / 16.0;
            let z = Complex64::from_polar(1e-4, th);
            let series = Complex64::new(1.0, 0.0) - z / 2.0 + z * z / 6.0 - z * z * z / 24.0;
            let direct = -expm1_complex(-z) / z;
            assert!((series - direct).norm() < 1e-12);
            assert!((delay_kernel(z) - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn chi_conjugate_symmetry() {
        let co = fig4_coeffs();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let lam = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-50.0..50.0));
            let diff = co.chi(lam.conj()) - co.chi(lam).conj();
            assert!(diff.norm() < 1e-12);
        }
    }

    #[test]
    fn chi_real_on_real_axis() {
        let co = fig4_coeffs();
        for s in [-1.5, -0.3, 0.0, 0.7] {
            assert!(co.chi(Complex64::new(s, 0.0)).im.abs() < 1e-15);
        }
    }

    #[test]
    fn chi_derivative_matches_finite_difference() {
        let co = fig4_coeffs();
        let h = 1e-6;
        for lam in [
            Complex64::new(0.1, 9.0),
            Complex64::new(-0.4, 2.3),
            Complex64::new(0.0, 14.0),
        ] {
            let fd = (co.chi(lam + h) - co.chi(lam - h)) / (2.0 * h);
            assert!((fd - co.chi_deriv(lam)).norm() < 1e-6);
        }
    }

    #[test]
    fn fig4_dominant_eigenvalue() {
        let co = fig4_coeffs();
        assert!(co.chi(Complex64::new(0.039485, 9.168604)).norm() < 1e-3);
        let scan = find_eigenvalues(
            &co,
            &Window {
                sigma_min: -1.0,
                sigma_max: 0.5,
                omega_min: 0.0,
                omega_max: 15.0,
            },
            220,
            260,
            ROOT_TOL,
        );
        let dom = scan.dominant().expect("dominant root");
        assert_abs_diff_eq!(dom.sigma, 0.039485, epsilon = 1e-4);
        assert_abs_diff_eq!(dom.omega, 9.168604, epsilon = 1e-3);
        // exactly one strongly unstable root in this window (the two
        // marginal secondary pairs sit below sigma = 0.01)
        let strongly_unstable: Vec<_> =
            scan.eigenvalues.iter().filter(|e| e.sigma > 0.01).collect();
        assert_eq!(strongly_unstable.len(), 1);
        for e in &scan.eigenvalues {
            let z = co.chi(Complex64::new(e.sigma, e.omega));
            assert!(z.norm() < ROOT_TOL);
        }
    }

    #[test]
    fn stable_state_has_no_unstable_roots() {
        let cfg = example1(5.0, 0.2);
        let st = solve_equilibria(&cfg).unwrap()[0];
        let co = char_coefficients(&cfg, &st).unwrap();
        let scan = find_eigenvalues(
            &co,
            &Window {
                sigma_min: -1.0,
                sigma_max: 0.5,
                omega_min: 0.0,
                omega_max: 15.0,
            },
            150,
            200,
            ROOT_TOL,
        );
        assert!(scan.eigenvalues.iter().all(|e| e.sigma < 0.0));
        // frozen oracle: dominant root near -0.392 + 10.58i
        let dom = scan.dominant().unwrap();
        assert_abs_diff_eq!(dom.sigma, -0.3924, epsilon = 2e-3);
        assert_eq!(count_unstable(&co).total(), 0);
        assert_eq!(classify_state(&co), StabilityLabel::Stable);
    }

    #[test]
    fn refined_roots_independent_of_grid() {
        let co = fig4_coeffs();
        let w = Window {
            sigma_min: -0.5,
            sigma_max: 0.3,
            omega_min: 5.0,
            omega_max: 12.0,
        };
        let coarse = find_eigenvalues(&co, &w, 80, 100, ROOT_TOL);
        let fine = find_eigenvalues(&co, &w, 160, 200, ROOT_TOL);
        assert!(!coarse.eigenvalues.is_empty());
        for r in &coarse.eigenvalues {
            let nearest = fine
                .eigenvalues
                .iter()
                .map(|f| ((f.sigma - r.sigma).powi(2) + (f.omega - r.omega).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(
                nearest < 1e-8,
                "root {r:?} moved {nearest:.2e} on refinement"
            );
        }
    }

    #[test]
    fn winding_count_matches_scan_at_fig4() {
        let co = fig4_coeffs();
        let c = count_unstable(&co);
        // three unstable pairs, two of them marginal (frozen oracle:
        // sigma = 0.0395, 0.0039, 0.0003)
        assert_eq!(c.real, 0);
        assert_eq!(c.complex_pairs, 3);
        assert_eq!(classify_state(&co), StabilityLabel::Oscillatory);
    }

    #[test]
    fn middle_equilibrium_is_saddle() {
        let cfg = example1(30.0, 0.5);
        let sts = solve_equilibria(&cfg).unwrap();
        assert_eq!(sts.len(), 3);
        let co_mid = char_coefficients(&cfg, &sts[1]).unwrap();
        assert!(co_mid.static_gain() > 1.0);
        assert_eq!(classify_state(&co_mid), StabilityLabel::Saddle);
        // outer states at contrast 30, q1 = 0.5 are stable (region ii)
        for st in [sts[0], sts[2]] {
            let co = char_coefficients(&cfg, &st).unwrap();
            assert_eq!(classify_state(&co), StabilityLabel::Stable);
        }
    }

    #[test]
    fn no_separation_only_real_roots() {
        // without phase separation oscillatory dynamics are ruled out
        for (q1, contrast) in [(0.37, 20.0), (0.6, 80.0), (0.5, 300.0)] {
            let cfg = NetworkConfig::new(
                example1(contrast, q1).geometry,
                InletConditions::new(q1, 0.82, 0.3).unwrap(),
                ViscosityLaw::arrhenius(contrast).unwrap(),
                SeparationLaw::None,
            );
            for st in solve_equilibria(&cfg).unwrap() {
                let co = char_coefficients(&cfg, &st).unwrap();
                let scan = find_eigenvalues(&co, &Window::default(), 200, 300, ROOT_TOL);
                for e in &scan.eigenvalues {
                    assert!(e.omega < 1e-6, "complex root {e:?} with no separation");
                }
                assert_eq!(count_unstable(&co).complex_pairs, 0);
            }
        }
    }

    #[test]
    fn spectrum_exchange_symmetry() {
        // coefficients at (q1, q_c) match those of the swapped problem at
        // (1 - q1, -q_c); with asymmetric inlets for a nontrivial check
        let cfg = NetworkConfig::new(
            example2(25.0, 0.93).geometry,
            InletConditions::new(0.93, 0.8, 0.65).unwrap(),
            ViscosityLaw::arrhenius(25.0).unwrap(),
            SeparationLaw::stratified(1.0).unwrap(),
        );
        for st in solve_equilibria(&cfg).unwrap() {
            let co = char_coefficients(&cfg, &st).unwrap();
            let sw_cfg = cfg.swapped();
            let sw_st = crate::equilibrium::state_at(&sw_cfg, -st.q_c).unwrap();
            let co_sw = char_coefficients(&sw_cfg, &sw_st).unwrap();
            for (x, y) in [
                (co.a, co_sw.a),
                (co.b, co_sw.b),
                (co.c, co_sw.c),
                (co.d, co_sw.d),
                (co.tau_a, co_sw.tau_a),
                (co.tau_b, co_sw.tau_b),
                (co.tau_c, co_sw.tau_c),
            ] {
                assert_abs_diff_eq!(x, y, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn hopf_scan_contrast_structure() {
        let ctrl = StepControl::default();
        // contrast 2: no Hopf bifurcations anywhere on the curve
        let cfg2 = example1(2.0, 0.5);
        let curve2 = continue_curve(&cfg2, 0.03, 0.97, &ctrl).unwrap();
        let scan2 = hopf_scan(&cfg2, &curve2, (OMEGA_MIN, 40.0), 240).unwrap();
        assert!(scan2.points.is_empty());

        // contrast 50: symmetric pairs, including low frequencies near folds
        let cfg50 = example1(50.0, 0.5);
        let curve50 = continue_curve(&cfg50, 0.03, 0.97, &ctrl).unwrap();
        let scan50 = hopf_scan(&cfg50, &curve50, (OMEGA_MIN, 40.0), 300).unwrap();
        assert!(scan50.points.len() >= 4);
        for h in &scan50.points {
            let mirror = scan50
                .points
                .iter()
                .find(|m| (m.q1 - (1.0 - h.q1)).abs() < 1e-4 && (m.omega - h.omega).abs() < 1e-3);
            assert!(
                mirror.is_some(),
                "no mirror for Hopf point at q1 = {}",
                h.q1
            );
        }
        let folds = detect_folds(&cfg50, &curve50).unwrap();
        let low_freq_near_fold = scan50
            .points
            .iter()
            .any(|h| h.omega < 2.0 && folds.iter().any(|f| (f.q1 - h.q1).abs() < 0.05));
        assert!(
            low_freq_near_fold,
            "expected low-frequency crossings near the folds"
        );

        // all rows of the defining system vanish at the refined points
        for h in &scan50.points {
            let c = cfg50.with_q1(h.q1).unwrap();
            let st = state_at(&c, h.q_c).unwrap();
            let co = char_coefficients(&c, &st).unwrap();
            assert!(psi_residual(&c, h.q_c).unwrap().abs() < 1e-10);
            let z = co.chi(Complex64::new(0.0, h.omega));
            assert!(z.re.abs() < 1e-10 && z.im.abs() < 1e-10);
        }
    }

    #[test]
    fn hopf_scan_example2_one_sided() {
        let cfg = example2(50.0, 0.5);
        let curve = continue_curve(&cfg, 0.03, 0.9995, &StepControl::default()).unwrap();
        let scan = hopf_scan(&cfg, &curve, (OMEGA_MIN, 40.0), 300).unwrap();
        assert!(!scan.points.is_empty());
        for h in &scan.points {
            assert!(
                h.q_c > 0.0,
                "stratified example: crossings only on the positive branch, got {h:?}"
            );
        }
    }
}
