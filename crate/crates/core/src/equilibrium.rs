//! Equilibrium states of the flow equation, curve continuation in `q1`,
//! fold detection, and the closed-form onset criterion.
//!
//! At equilibrium every vessel carries a uniform volume fraction, so the
//! loop flow satisfies the scalar fixed-point relation `q_c = psi(q_c)`
//! where `psi` evaluates the phase distribution, the mixture viscosities,
//! and the Kirchhoff flow balance.

use crate::error::{Error, Result};
use crate::network::NetworkConfig;
use crate::numeric::{bisect, solve_dense};

/// Both ends of the admissible `q_c` interval are pulled in by this margin
/// to avoid starved-vessel division by zero.
pub const INTERVAL_SHRINK: f64 = 1e-9;

/// Residual magnitude accepted for a converged equilibrium.
pub const RESIDUAL_TOL: f64 = 1e-12;

/// Number of brackets in the dense root scan.
pub const SCAN_BRACKETS: usize = 2001;

/// Which one-sided constitutive branch applies at `q_c = 0`, where the
/// separation rule switches between the two nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Positive,
    Negative,
}

impl Side {
    fn of(q_c: f64) -> Side {
        if q_c >= 0.0 {
            Side::Positive
        } else {
            Side::Negative
        }
    }
}

/// Equilibrium volume fractions in the three vessels.
#[derive(Debug, Clone, Copy)]
pub struct PhaseDistribution {
    pub phi_a: f64,
    pub phi_b: f64,
    pub phi_c: f64,
}

fn phases_positive(cfg: &NetworkConfig, q_c: f64) -> Result<PhaseDistribution> {
    debug_assert!(q_c >= 0.0);
    let q1 = cfg.inlets.q1();
    let q2 = cfg.inlets.q2();
    let (phi1, phi2) = (cfg.inlets.phi1(), cfg.inlets.phi2());
    let x = if q_c == 0.0 {
        0.0
    } else if q1 > 0.0 {
        q_c / q1
    } else {
        return Err(Error::Domain {
            name: "q_c",
            value: q_c,
            lo: 0.0,
            hi: 0.0,
        });
    };
    let phi_c = phi1 * cfg.separation.fraction(x)?;
    let phi_a = phi1 * cfg.separation.complement_fraction(x)?;
    let q_b = q2 + q_c;
    let phi_b = if q_b > 0.0 {
        (phi2 * q2 + phi_c * q_c) / q_b
    } else {
        phi_c // q1 = 1, q_c = 0: vessel B holds the q_c -> 0 limit fluid
    };
    Ok(PhaseDistribution {
        phi_a,
        phi_b,
        phi_c,
    })
}

/// Equilibrium phase distribution for a signed `q_c` with an explicit
/// constitutive side (the two coincide except exactly at `q_c = 0`).
pub fn phase_distribution_sided(
    cfg: &NetworkConfig,
    q_c: f64,
    side: Side,
) -> Result<PhaseDistribution> {
    match side {
        Side::Positive => phases_positive(cfg, q_c),
        Side::Negative => {
            let sw = phases_positive(&cfg.swapped(), -q_c)?;
            Ok(PhaseDistribution {
                phi_a: sw.phi_b,
                phi_b: sw.phi_a,
                phi_c: sw.phi_c,
            })
        }
    }
}

/// Equilibrium phase distribution at `q_c`, taking the side from its sign.
pub fn phase_distribution(cfg: &NetworkConfig, q_c: f64) -> Result<PhaseDistribution> {
    phase_distribution_sided(cfg, q_c, Side::of(q_c))
}

fn psi_sided(cfg: &NetworkConfig, q_c: f64, side: Side) -> Result<f64> {
    let ph = phase_distribution_sided(cfg, q_c, side)?;
    let [ra, rb, rc] = cfg.geometry.res();
    let res_a = ra * cfg.viscosity.rel_viscosity(ph.phi_a)?;
    let res_b = rb * cfg.viscosity.rel_viscosity(ph.phi_b)?;
    let res_c = rc * cfg.viscosity.rel_viscosity(ph.phi_c)?;
    Ok((cfg.inlets.q1() * res_a - cfg.inlets.q2() * res_b) / (res_a + res_b + res_c))
}

/// Right-hand side of the fixed-point form of the flow equation.
pub fn psi(cfg: &NetworkConfig, q_c: f64) -> Result<f64> {
    psi_sided(cfg, q_c, Side::of(q_c))
}

/// Residual `psi(q_c) - q_c`; zero at an equilibrium.
pub fn psi_residual(cfg: &NetworkConfig, q_c: f64) -> Result<f64> {
    Ok(psi(cfg, q_c)? - q_c)
}

pub fn psi_residual_sided(cfg: &NetworkConfig, q_c: f64, side: Side) -> Result<f64> {
    Ok(psi_sided(cfg, q_c, side)? - q_c)
}

/// `d psi / d q_c` by central difference with step 1e-6, shrunk near the
/// interval ends. Used by the fold-defining system.
pub fn dpsi_dqc(cfg: &NetworkConfig, q_c: f64) -> Result<f64> {
    let (lo, hi) = admissible_interval(cfg);
    let h = 1e-6f64.min(0.25 * (hi - q_c).min(q_c - lo).max(1e-12));
    Ok((psi(cfg, q_c + h)? - psi(cfg, q_c - h)?) / (2.0 * h))
}

/// Open interval of admissible loop flows, shrunk at both ends.
pub fn admissible_interval(cfg: &NetworkConfig) -> (f64, f64) {
    (
        -cfg.inlets.q2() + INTERVAL_SHRINK,
        cfg.inlets.q1() - INTERVAL_SHRINK,
    )
}

/// One equilibrium of the network with every derived quantity attached.
///
/// Resistances are on the geometry's common nominal-resistance scale (the
/// flow equation is homogeneous in that scale). Transit times use the
/// network volume as the unit, matching the dimensionless wave speeds.
#[derive(Debug, Clone, Copy)]
pub struct EquilibriumState {
    pub q_c: f64,
    pub q_a: f64,
    pub q_b: f64,
    pub phi_a: f64,
    pub phi_b: f64,
    pub phi_c: f64,
    pub mu_a: f64,
    pub mu_b: f64,
    pub mu_c: f64,
    pub res_a: f64,
    pub res_b: f64,
    pub res_c: f64,
    pub tau_a: f64,
    pub tau_b: f64,
    pub tau_c: f64,
}

impl EquilibriumState {
    pub fn residual(&self, cfg: &NetworkConfig) -> Result<f64> {
        psi_residual(cfg, self.q_c)
    }
}

/// Expand a loop flow into the full equilibrium state (the residual is not
/// required to vanish; continuation correctors evaluate off-curve states).
pub fn state_at(cfg: &NetworkConfig, q_c: f64) -> Result<EquilibriumState> {
    state_at_sided(cfg, q_c, Side::of(q_c))
}

pub fn state_at_sided(cfg: &NetworkConfig, q_c: f64, side: Side) -> Result<EquilibriumState> {
    let q_a = cfg.inlets.q1() - q_c;
    let q_b = cfg.inlets.q2() + q_c;
    if q_a < 0.0 || q_b < 0.0 {
        return Err(Error::Domain {
            name: "q_c",
            value: q_c,
            lo: -cfg.inlets.q2(),
            hi: cfg.inlets.q1(),
        });
    }
    let ph = phase_distribution_sided(cfg, q_c, side)?;
    let mu_a = cfg.viscosity.rel_viscosity(ph.phi_a)?;
    let mu_b = cfg.viscosity.rel_viscosity(ph.phi_b)?;
    let mu_c = cfg.viscosity.rel_viscosity(ph.phi_c)?;
    let [ra, rb, rc] = cfg.geometry.res();
    let [va, vb, vc] = cfg.geometry.vol();
    let tau = |v: f64, q: f64| if q == 0.0 { f64::INFINITY } else { v / q.abs() };
    Ok(EquilibriumState {
        q_c,
        q_a,
        q_b,
        phi_a: ph.phi_a,
        phi_b: ph.phi_b,
        phi_c: ph.phi_c,
        mu_a,
        mu_b,
        mu_c,
        res_a: ra * mu_a,
        res_b: rb * mu_b,
        res_c: rc * mu_c,
        tau_a: tau(va, q_a),
        tau_b: tau(vb, q_b),
        tau_c: tau(vc, q_c),
    })
}

/// All equilibria of the configuration, found by a dense bracketing scan
/// of the residual followed by bisection, sorted by `q_c`.
///
/// The residual is scanned separately on the negative and positive sides of
/// `q_c = 0` because the separation rule switches nodes there; `q_c = 0`
/// itself is accepted as a root when both one-sided residuals vanish.
pub fn solve_equilibria(cfg: &NetworkConfig) -> Result<Vec<EquilibriumState>> {
    let (lo, hi) = admissible_interval(cfg);
    if !(hi > lo) {
        return Err(Error::Precondition(format!(
            "empty admissible interval [{lo}, {hi}]"
        )));
    }
    let mut roots: Vec<f64> = Vec::new();

    if lo < 0.0 && hi > 0.0 {
        let n_neg = ((SCAN_BRACKETS as f64) * (-lo) / (hi - lo)).ceil().max(8.0) as usize;
        let n_pos = ((SCAN_BRACKETS as f64) * hi / (hi - lo)).ceil().max(8.0) as usize;
        scan_segment(cfg, lo, 0.0, Side::Negative, n_neg, &mut roots)?;
        // q_c = 0 is a root only if both one-sided residuals vanish
        let r_neg = psi_residual_sided(cfg, 0.0, Side::Negative)?;
        let r_pos = psi_residual_sided(cfg, 0.0, Side::Positive)?;
        if r_neg.abs() < RESIDUAL_TOL && r_pos.abs() < RESIDUAL_TOL {
            roots.push(0.0);
        }
        scan_segment(cfg, 0.0, hi, Side::Positive, n_pos, &mut roots)?;
    } else {
        let side = if hi <= 0.0 {
            Side::Negative
        } else {
            Side::Positive
        };
        scan_segment(cfg, lo, hi, side, SCAN_BRACKETS, &mut roots)?;
    }

    roots.sort_by(|p, q| p.partial_cmp(q).unwrap());
    roots.dedup_by(|p, q| (*p - *q).abs() < 1e-9);

    let mut states = Vec::with_capacity(roots.len());
    for r in roots {
        let st = state_at(cfg, r)?;
        let resid = psi_residual(cfg, r)?;
        if resid.abs() > RESIDUAL_TOL {
            return Err(Error::Solver(format!(
                "root polish left residual {resid:.3e} at q_c = {r}"
            )));
        }
        states.push(st);
    }
    Ok(states)
}

fn scan_segment(
    cfg: &NetworkConfig,
    a: f64,
    b: f64,
    side: Side,
    n: usize,
    roots: &mut Vec<f64>,
) -> Result<()> {
    if !(b > a) {
        return Ok(());
    }
    let f = |x: f64| psi_residual_sided(cfg, x, side);
    let mut x_prev = a;
    let mut f_prev = f(a)?;
    for k in 1..=n {
        // the lerp can overshoot an endpoint by one ulp; keep on-segment
        let x = (a + (b - a) * (k as f64) / (n as f64)).clamp(a, b);
        let fx = f(x)?;
        if f_prev == 0.0 {
            roots.push(x_prev);
        } else if f_prev.signum() != fx.signum() {
            roots.push(bisect(f, x_prev, f_prev, x, fx, 200)?);
        }
        x_prev = x;
        f_prev = fx;
    }
    if f_prev == 0.0 {
        roots.push(x_prev);
    }
    Ok(())
}

/// A point on an equilibrium curve.
#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    /// Accumulated arclength in the (q1, q_c) plane.
    pub s: f64,
    pub q1: f64,
    pub state: EquilibriumState,
}

/// Equilibrium curve traced by pseudo-arclength continuation.
#[derive(Debug, Clone)]
pub struct EquilibriumCurve {
    pub points: Vec<CurvePoint>,
    /// Indices where `d q1 / d s` changes sign (saddle-node folds).
    pub fold_indices: Vec<usize>,
}

/// Step-size control for pseudo-arclength continuation.
#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub ds_init: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_steps: usize,
    pub residual_tol: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            ds_init: 1e-3,
            ds_min: 1e-10,
            ds_max: 2.5e-3,
            max_steps: 40_000,
            residual_tol: RESIDUAL_TOL,
        }
    }
}

/// Solve the 1-D equilibrium problem in `q_c` at fixed `q1` by damped
/// Newton from a seed, falling back to a local bracketing search.
fn converge_qc(cfg: &NetworkConfig, seed: f64, tol: f64) -> Result<f64> {
    let (lo, hi) = admissible_interval(cfg);
    let mut x = seed.clamp(lo, hi);
    for _ in 0..60 {
        let f = psi_residual(cfg, x)?;
        if f.abs() < tol {
            return Ok(x);
        }
        let h = 1e-7 * (1.0 + x.abs());
        let fp = (psi_residual(cfg, (x + h).min(hi))? - psi_residual(cfg, (x - h).max(lo))?)
            / ((x + h).min(hi) - (x - h).max(lo));
        if fp == 0.0 || !fp.is_finite() {
            break;
        }
        let mut step = -f / fp;
        // keep iterates inside the admissible interval
        while x + step <= lo || x + step >= hi {
            step *= 0.5;
            if step.abs() < 1e-16 {
                break;
            }
        }
        x += step;
    }
    let f = psi_residual(cfg, x)?;
    if f.abs() < tol {
        Ok(x)
    } else {
        Err(Error::Solver(format!(
            "q_c converge failed at q1 = {}, residual {f:.3e}",
            cfg.inlets.q1(),
        )))
    }
}

/// Trace the equilibrium curve across `[q1_lo, q1_hi]` by pseudo-arclength
/// continuation, passing smoothly through folds. The trace starts from the
/// lowest-`q_c` equilibrium at `q1_lo` and ends when `q1` leaves the range.
pub fn continue_curve(
    cfg: &NetworkConfig,
    q1_lo: f64,
    q1_hi: f64,
    ctrl: &StepControl,
) -> Result<EquilibriumCurve> {
    if !(q1_hi > q1_lo) {
        return Err(Error::Precondition("empty q1 range".into()));
    }
    let at = |q1: f64| cfg.with_q1(q1);

    let cfg0 = at(q1_lo)?;
    let seeds = solve_equilibria(&cfg0)?;
    let first = seeds
        .first()
        .ok_or_else(|| Error::Solver(format!("no seed equilibrium at q1 = {q1_lo}")))?;

    let mut points: Vec<CurvePoint> = vec![CurvePoint {
        s: 0.0,
        q1: q1_lo,
        state: *first,
    }];

    // second point by natural continuation
    let dq1 = (ctrl.ds_init).min((q1_hi - q1_lo) * 0.5);
    let q1b = q1_lo + dq1;
    let qc_b = converge_qc(&at(q1b)?, first.q_c, ctrl.residual_tol)?;
    let ds0 = (dq1 * dq1 + (qc_b - first.q_c).powi(2)).sqrt();
    points.push(CurvePoint {
        s: ds0,
        q1: q1b,
        state: state_at(&at(q1b)?, qc_b)?,
    });

    let mut ds = ctrl.ds_init;
    let mut steps = 0usize;
    loop {
        steps += 1;
        if steps > ctrl.max_steps {
            break;
        }
        let n = points.len();
        let (p_prev, p_last) = (&points[n - 2], &points[n - 1]);
        // secant tangent
        let mut t = [p_last.q1 - p_prev.q1, p_last.state.q_c - p_prev.state.q_c];
        let norm = (t[0] * t[0] + t[1] * t[1]).sqrt();
        if norm == 0.0 {
            break;
        }
        t[0] /= norm;
        t[1] /= norm;

        let u_last = [p_last.q1, p_last.state.q_c];
        let mut accepted = None;
        while accepted.is_none() {
            let pred = [u_last[0] + ds * t[0], u_last[1] + ds * t[1]];
            match correct_on_hyperplane(cfg, pred, t, ctrl.residual_tol) {
                Ok(u) => accepted = Some(u),
                Err(_) => {
                    ds *= 0.5;
                    if ds < ctrl.ds_min {
                        return Err(Error::StepCollapse {
                            min_step: ctrl.ds_min,
                            context: format!("equilibrium curve at q1 = {}", u_last[0]),
                        });
                    }
                }
            }
        }
        let [q1_new, qc_new] = accepted.unwrap();

        // clean exit when q1 leaves the requested range
        if q1_new > q1_hi || q1_new < q1_lo {
            let q1_end = q1_new.clamp(q1_lo, q1_hi);
            if (q1_end - u_last[0]).abs() > 1e-14 {
                if let Ok(qc_end) = converge_qc(&at(q1_end)?, qc_new, ctrl.residual_tol) {
                    let slast = points.last().unwrap().s;
                    let dss = ((q1_end - u_last[0]).powi(2) + (qc_end - u_last[1]).powi(2)).sqrt();
                    points.push(CurvePoint {
                        s: slast + dss,
                        q1: q1_end,
                        state: state_at(&at(q1_end)?, qc_end)?,
                    });
                }
            }
            break;
        }

        let slast = points.last().unwrap().s;
        let dss = ((q1_new - u_last[0]).powi(2) + (qc_new - u_last[1]).powi(2)).sqrt();
        points.push(CurvePoint {
            s: slast + dss,
            q1: q1_new,
            state: state_at(&at(q1_new)?, qc_new)?,
        });
        ds = (ds * 1.3).min(ctrl.ds_max);
    }

    let fold_indices = fold_indices(&points);
    Ok(EquilibriumCurve {
        points,
        fold_indices,
    })
}

/// Newton corrector for the augmented system
/// `[psi(q_c; q1) - q_c, t . (u - u_pred)] = 0`.
fn correct_on_hyperplane(
    cfg: &NetworkConfig,
    pred: [f64; 2],
    t: [f64; 2],
    tol: f64,
) -> Result<[f64; 2]> {
    let mut u = pred;
    for _ in 0..14 {
        let c = cfg.with_q1(u[0])?;
        let f1 = psi_residual(&c, u[1])?;
        let f2 = t[0] * (u[0] - pred[0]) + t[1] * (u[1] - pred[1]);
        if f1.abs() < tol && f2.abs() < 1e-12 {
            return Ok(u);
        }
        let h1 = 1e-7 * (1.0 + u[0].abs());
        let h2 = 1e-7 * (1.0 + u[1].abs());
        let d_q1 = (psi_residual(&cfg.with_q1(u[0] + h1)?, u[1])?
            - psi_residual(&cfg.with_q1(u[0] - h1)?, u[1])?)
            / (2.0 * h1);
        let d_qc = (psi_residual(&c, u[1] + h2)? - psi_residual(&c, u[1] - h2)?) / (2.0 * h2);
        let mut jac = [d_q1, d_qc, t[0], t[1]];
        let mut rhs = [-f1, -f2];
        solve_dense(&mut jac, &mut rhs, 2)?;
        u[0] += rhs[0];
        u[1] += rhs[1];
        if !(u[0].is_finite() && u[1].is_finite()) {
            return Err(Error::Solver("corrector diverged".into()));
        }
    }
    Err(Error::Solver("corrector did not converge".into()))
}

fn fold_indices(points: &[CurvePoint]) -> Vec<usize> {
    let mut out = Vec::new();
    for i in 1..points.len().saturating_sub(1) {
        let d_prev = points[i].q1 - points[i - 1].q1;
        let d_next = points[i + 1].q1 - points[i].q1;
        if d_prev * d_next < 0.0 {
            out.push(i);
        }
    }
    out
}

/// A saddle-node (fold) point of the equilibrium relation.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SaddleNodePoint {
    pub q1: f64,
    pub q_c: f64,
    pub contrast: f64,
    /// Sign of the loop flow at the fold (+1 / -1 / 0).
    pub side: i8,
}

/// Refine a fold seed by Newton on the defining system
/// `F_S = [psi - q_c, d psi / d q_c - 1]` in the unknowns `(q1, q_c)`.
pub fn refine_fold(cfg: &NetworkConfig, q1_seed: f64, qc_seed: f64) -> Result<SaddleNodePoint> {
    let mut u = [q1_seed, qc_seed];
    for _ in 0..40 {
        let c = cfg.with_q1(u[0])?;
        let f1 = psi_residual(&c, u[1])?;
        let f2 = dpsi_dqc(&c, u[1])? - 1.0;
        if f1.abs() < 1e-11 && f2.abs() < 1e-9 {
            return Ok(SaddleNodePoint {
                q1: u[0],
                q_c: u[1],
                contrast: cfg.contrast(),
                side: if u[1] > 0.0 {
                    1
                } else if u[1] < 0.0 {
                    -1
                } else {
                    0
                },
            });
        }
        let h = 1e-6;
        let mut jac = [0.0; 4];
        let mut rhs = [-f1, -f2];
        let cq = cfg.with_q1(u[0] + h)?;
        let cq_m = cfg.with_q1(u[0] - h)?;
        jac[0] = (psi_residual(&cq, u[1])? - psi_residual(&cq_m, u[1])?) / (2.0 * h);
        jac[1] = (psi_residual(&c, u[1] + h)? - psi_residual(&c, u[1] - h)?) / (2.0 * h);
        jac[2] = (dpsi_dqc(&cq, u[1])? - dpsi_dqc(&cq_m, u[1])?) / (2.0 * h);
        jac[3] = (dpsi_dqc(&c, u[1] + h)? - dpsi_dqc(&c, u[1] - h)?) / (2.0 * h);
        solve_dense(&mut jac, &mut rhs, 2)?;
        // damp large steps
        let scale = 1.0f64.min(0.05 / rhs[0].abs().max(rhs[1].abs()).max(1e-30));
        u[0] += scale * rhs[0];
        u[1] += scale * rhs[1];
        if !(u[0].is_finite() && u[1].is_finite()) {
            break;
        }
    }
    Err(Error::Solver(format!(
        "fold refinement did not converge from ({q1_seed}, {qc_seed})"
    )))
}

/// Locate the folds of a traced curve: sign changes of `d q1 / d s`
/// refined on the fold-defining system.
pub fn detect_folds(cfg: &NetworkConfig, curve: &EquilibriumCurve) -> Result<Vec<SaddleNodePoint>> {
    let mut out: Vec<SaddleNodePoint> = Vec::new();
    for &i in &curve.fold_indices {
        let p = &curve.points[i];
        let fold = refine_fold(cfg, p.q1, p.state.q_c)?;
        if !out
            .iter()
            .any(|f| (f.q1 - fold.q1).abs() < 1e-8 && (f.q_c - fold.q_c).abs() < 1e-8)
        {
            out.push(fold);
        }
    }
    Ok(out)
}

/// Relative residual of the exact fold identity evaluated from the state:
/// `sum R * (1 + L q_c phi_C') = L (R_A (phi_A - phi_C) + R_B (phi_B - phi_C))`
/// where `L = d ln mu / d phi`. Vanishes at every fold.
pub fn fold_criterion_residual(cfg: &NetworkConfig, q1: f64, q_c: f64) -> Result<f64> {
    // orient so the loop flow is non-negative
    let (cfg, q_c) = if q_c < 0.0 {
        (cfg.with_q1(q1)?.swapped(), -q_c)
    } else {
        (cfg.with_q1(q1)?, q_c)
    };
    let st = state_at(&cfg, q_c)?;
    let sum_r = st.res_a + st.res_b + st.res_c;
    let big_l = cfg.viscosity.dln_mu_dphi(st.phi_c)?;
    let q1v = cfg.inlets.q1();
    let x = if q1v > 0.0 { q_c / q1v } else { 0.0 };
    let dphic = cfg.inlets.phi1() / q1v * cfg.separation.fraction_deriv(x)?;
    let lhs = sum_r * (1.0 + big_l * q_c * dphic);
    let rhs = big_l * (st.res_a * (st.phi_a - st.phi_c) + st.res_b * (st.phi_b - st.phi_c));
    Ok((lhs - rhs) / sum_r)
}

/// Relative residual of the onset form of the criterion, which replaces the
/// equilibrium fractions by the inlet fractions and drops the `phi_C'`
/// correction. It is exact only as the fold approaches `q_c = 0`.
pub fn onset_criterion_residual(cfg: &NetworkConfig, q1: f64, q_c: f64) -> Result<f64> {
    let cfg = cfg.with_q1(q1)?;
    let st = state_at(&cfg, q_c)?;
    let sum_r = st.res_a + st.res_b + st.res_c;
    let big_l = cfg.viscosity.dln_mu_dphi(st.phi_c)?;
    let rhs = big_l
        * (st.res_a * (cfg.inlets.phi1() - st.phi_c) + st.res_b * (cfg.inlets.phi2() - st.phi_c));
    Ok((sum_r - rhs) / sum_r)
}

/// Critical viscosity contrast at which multiple equilibria are born at
/// `q_c = 0`, plus the thin-connector approximation `e^(1/phi1)`.
#[derive(Debug, Clone, Copy)]
pub struct OnsetContrast {
    /// Root of the reduced transcendental criterion
    /// `1 + (1/mu1) r_C/(r_A + r_B) = ln(mu1)` mapped back to the contrast.
    pub exact: f64,
    /// The `r_C << r_A + r_B` limit `e^(1/phi1)`.
    pub approximation: f64,
}

/// Solve the reduced onset criterion. Requires equal inlet fluids and a
/// separation rule with `f(0) = 0` (both example laws), so that the
/// connector carries pure thin phase at `q_c = 0`.
pub fn onset_contrast(cfg: &NetworkConfig) -> Result<OnsetContrast> {
    let phi1 = cfg.inlets.phi1();
    if (phi1 - cfg.inlets.phi2()).abs() > 1e-12 {
        return Err(Error::Precondition(
            "onset criterion requires phi1 = phi2".into(),
        ));
    }
    let f0 = cfg.separation.fraction(0.0)?;
    if f0.abs() > 1e-12 {
        return Err(Error::Precondition(format!(
            "onset criterion requires f(0) = 0, got {f0}"
        )));
    }
    if phi1 <= 0.0 {
        return Err(Error::Precondition(
            "onset criterion requires phi1 > 0".into(),
        ));
    }
    let [ra, rb, rc] = cfg.geometry.res();
    let rho = rc / (ra + rb);
    // g(mu1) = ln(mu1) - 1 - rho/mu1 is increasing for mu1 >= e and brackets zero
    let g = |mu1: f64| Ok(mu1.ln() - 1.0 - rho / mu1);
    let lo = std::f64::consts::E;
    let hi = (1.0 + rho / std::f64::consts::E).exp() + 1e-9;
    let mu1 = bisect(g, lo, g(lo)?, hi, g(hi)?, 200)?;
    Ok(OnsetContrast {
        exact: mu1.powf(1.0 / phi1),
        approximation: (1.0 / phi1).exp(),
    })
}
