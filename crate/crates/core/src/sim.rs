//! Direct numerical simulation of the coupled volume-fraction wave
//! equations with node boundary conditions and quasi-static flow feedback.
//!
//! Each vessel's profile obeys pure advection at a spatially uniform,
//! time-varying speed, so the method of characteristics is exact: the
//! profile is carried as a queue of fluid parcels (piecewise-constant in
//! the Lagrangian frame) that are shifted, injected at the inflow end, and
//! trimmed at the outflow end every step. No per-step re-interpolation
//! touches the stored values, which keeps the transport delays sharp —
//! smearing them would shift the Hopf frequencies the simulation exists to
//! validate. Interpolation appears only when sampling snapshots onto a
//! uniform grid.
//!
//! The flow equation carries no inertia, so `q_c` is updated algebraically
//! from the refreshed mean viscosities after each advection step.

use std::collections::VecDeque;

use serde::Serialize;

use crate::equilibrium::{solve_equilibria, EquilibriumState};
use crate::error::{Error, Result};
use crate::network::NetworkConfig;

/// Which vessel receives the initial perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VesselId {
    A,
    B,
    #[default]
    C,
}

/// Discretisation and run-control parameters.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    /// Grid resolution per vessel; sets the CFL time step and snapshots.
    pub cells_per_vessel: usize,
    /// Courant safety factor in (0, 1].
    pub cfl: f64,
    pub t_end: f64,
    pub transient_skip: f64,
    /// Relative amplitude applied to one vessel's initial profile.
    pub perturbation: f64,
    pub perturb_vessel: VesselId,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            cells_per_vessel: 512,
            cfl: 0.9,
            t_end: 100.0,
            transient_skip: 50.0,
            perturbation: 1e-4,
            perturb_vessel: VesselId::C,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cells_per_vessel < 16 {
            return Err(Error::Precondition("cells_per_vessel must be >= 16".into()));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Precondition("cfl must be in (0, 1]".into()));
        }
        if !(self.t_end > self.transient_skip && self.transient_skip >= 0.0) {
            return Err(Error::Precondition(
                "need t_end > transient_skip >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Parcel {
    phi: f64,
    width: f64,
    /// Cached relative viscosity of the parcel fluid.
    mu: f64,
}

/// One vessel's profile as parcels ordered from x = 0 (front) to x = 1
/// (back); total width is always 1.
#[derive(Debug, Clone)]
struct ParcelVessel {
    parcels: VecDeque<Parcel>,
    /// Running integral of mu over the vessel.
    mu_integral: f64,
    advances: u32,
}

impl ParcelVessel {
    fn uniform(phi: f64, mu: f64) -> Self {
        Self {
            parcels: VecDeque::from([Parcel {
                phi,
                width: 1.0,
                mu,
            }]),
            mu_integral: mu,
            advances: 0,
        }
    }

    fn head_value(&self) -> f64 {
        self.parcels.front().unwrap().phi
    }

    fn tail_value(&self) -> f64 {
        self.parcels.back().unwrap().phi
    }

    fn mu_mean(&self) -> f64 {
        self.mu_integral
    }

    /// Shift the contents by `delta` (positive toward x = 1), inject the
    /// inflow parcel and trim the outflow overhang.
    fn advance(&mut self, delta: f64, inflow_phi: f64, inflow_mu: f64) {
        if delta == 0.0 {
            return;
        }
        let d = delta.abs();
        let new = Parcel {
            phi: inflow_phi,
            width: d,
            mu: inflow_mu,
        };
        self.mu_integral += inflow_mu * d;
        if delta > 0.0 {
            self.parcels.push_front(new);
        } else {
            self.parcels.push_back(new);
        }
        let mut need = d;
        while need > 0.0 {
            let out = if delta > 0.0 {
                self.parcels.back_mut()
            } else {
                self.parcels.front_mut()
            };
            let Some(p) = out else { break };
            if p.width <= need {
                need -= p.width;
                self.mu_integral -= p.mu * p.width;
                if delta > 0.0 {
                    self.parcels.pop_back();
                } else {
                    self.parcels.pop_front();
                }
            } else {
                p.width -= need;
                self.mu_integral -= p.mu * need;
                need = 0.0;
            }
        }
        self.advances += 1;
        if self.advances.is_multiple_of(4096) {
            self.refresh();
        }
    }

    /// Recompute the running integral to cancel accumulated round-off.
    fn refresh(&mut self) {
        self.mu_integral = self.parcels.iter().map(|p| p.mu * p.width).sum();
    }

    /// Sample the piecewise-constant profile at `n + 1` uniform nodes.
    fn sample(&self, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n + 1);
        let mut it = self.parcels.iter();
        let mut acc = 0.0;
        let mut cur = it.next().copied().unwrap_or(Parcel {
            phi: 0.0,
            width: 1.0,
            mu: 1.0,
        });
        for k in 0..=n {
            let x = k as f64 / n as f64;
            while x > acc + cur.width && it.len() > 0 {
                acc += cur.width;
                cur = *it.next().unwrap();
            }
            out.push(cur.phi);
        }
        out
    }
}

/// Instantaneous simulation state.
#[derive(Debug, Clone)]
pub struct SimState {
    vessel_a: ParcelVessel,
    vessel_b: ParcelVessel,
    vessel_c: ParcelVessel,
    pub q_c: f64,
    pub t: f64,
}

/// Profiles sampled on uniform grids over [0, 1].
#[derive(Debug, Clone)]
pub struct Profiles {
    pub x: Vec<f64>,
    pub phi_a: Vec<f64>,
    pub phi_b: Vec<f64>,
    pub phi_c: Vec<f64>,
}

impl SimState {
    pub fn profiles(&self, cells: usize) -> Profiles {
        let n = cells.max(1);
        Profiles {
            x: (0..=n).map(|k| k as f64 / n as f64).collect(),
            phi_a: self.vessel_a.sample(n),
            phi_b: self.vessel_b.sample(n),
            phi_c: self.vessel_c.sample(n),
        }
    }

    /// All stored parcel values stay inside [0, 1] (within round-off).
    pub fn bounds_ok(&self) -> bool {
        [&self.vessel_a, &self.vessel_b, &self.vessel_c]
            .iter()
            .all(|v| {
                v.parcels
                    .iter()
                    .all(|p| (-1e-12..=1.0 + 1e-12).contains(&p.phi))
            })
    }
}

fn clamp_fraction(phi: f64, what: &str) -> Result<f64> {
    if !(-1e-12..=1.0 + 1e-12).contains(&phi) {
        return Err(Error::Solver(format!(
            "{what}: fraction {phi} outside [0, 1]"
        )));
    }
    Ok(phi.clamp(0.0, 1.0))
}

/// Initialise at an equilibrium with a relative perturbation applied to
/// one vessel's profile; `q_c` comes from the flow equation evaluated on
/// the perturbed profiles.
pub fn init(cfg: &NetworkConfig, seed: &EquilibriumState, sim: &SimConfig) -> Result<SimState> {
    sim.validate()?;
    let mu = |phi: f64| cfg.viscosity.rel_viscosity(phi);
    let bump = |phi: f64, hit: bool| -> Result<f64> {
        let v = if hit {
            phi * (1.0 + sim.perturbation)
        } else {
            phi
        };
        clamp_fraction(v, "initial profile")
    };
    let pa = bump(seed.phi_a, sim.perturb_vessel == VesselId::A)?;
    let pb = bump(seed.phi_b, sim.perturb_vessel == VesselId::B)?;
    let pc = bump(seed.phi_c, sim.perturb_vessel == VesselId::C)?;
    let vessel_a = ParcelVessel::uniform(pa, mu(pa)?);
    let vessel_b = ParcelVessel::uniform(pb, mu(pb)?);
    let vessel_c = ParcelVessel::uniform(pc, mu(pc)?);
    let q_c = flow_update(cfg, &vessel_a, &vessel_b, &vessel_c);
    Ok(SimState {
        vessel_a,
        vessel_b,
        vessel_c,
        q_c,
        t: 0.0,
    })
}

fn flow_update(cfg: &NetworkConfig, a: &ParcelVessel, b: &ParcelVessel, c: &ParcelVessel) -> f64 {
    let [ra, rb, rc] = cfg.geometry.res();
    let res_a = ra * a.mu_mean();
    let res_b = rb * b.mu_mean();
    let res_c = rc * c.mu_mean();
    (cfg.inlets.q1() * res_a - cfg.inlets.q2() * res_b) / (res_a + res_b + res_c)
}

/// Largest step allowed by the CFL rule at the current speeds.
pub fn cfl_dt(cfg: &NetworkConfig, state: &SimState, sim: &SimConfig) -> f64 {
    let [va, vb, vc] = cfg.geometry.vol();
    let q_a = cfg.inlets.q1() - state.q_c;
    let q_b = cfg.inlets.q2() + state.q_c;
    let speed = (q_a / va)
        .abs()
        .max((q_b / vb).abs())
        .max((state.q_c / vc).abs());
    let dx = 1.0 / sim.cells_per_vessel as f64;
    sim.cfl * dx / speed.max(1e-12)
}

/// Advance one step of size `dt`: inject boundary parcels, advect each
/// profile by its current speed, then refresh the loop flow from the new
/// mean viscosities.
pub fn step(cfg: &NetworkConfig, state: &mut SimState, sim: &SimConfig, dt: f64) -> Result<()> {
    let bound = cfl_dt(cfg, state, sim);
    if dt > bound * (1.0 + 1e-9) {
        return Err(Error::CflViolation { dt, bound });
    }
    let q1 = cfg.inlets.q1();
    let q2 = cfg.inlets.q2();
    let (phi1, phi2) = (cfg.inlets.phi1(), cfg.inlets.phi2());
    let q_c = state.q_c;
    let q_a = q1 - q_c;
    let q_b = q2 + q_c;
    if q_a <= 0.0 {
        return Err(Error::StarvedVessel {
            vessel: 'A',
            t: state.t,
        });
    }
    if q_b <= 0.0 {
        return Err(Error::StarvedVessel {
            vessel: 'B',
            t: state.t,
        });
    }

    // constituent conservation at the nodes fixes the inflow fractions
    let (phi_c_in, phi_a_in, phi_b_in) = if q_c >= 0.0 {
        let pc = if q_c == 0.0 {
            phi1 * cfg.separation.fraction(0.0)?
        } else {
            phi1 * cfg.separation.fraction(q_c / q1)?
        };
        let pa = (phi1 * q1 - pc * q_c) / q_a;
        let pb = (phi2 * q2 + state.vessel_c.tail_value() * q_c) / q_b;
        (pc, pa, pb)
    } else {
        let pc = phi2 * cfg.separation.fraction(-q_c / q2)?;
        let pa = (phi1 * q1 - state.vessel_c.head_value() * q_c) / q_a;
        let pb = (phi2 * q2 + pc * q_c) / q_b;
        (pc, pa, pb)
    };
    let phi_c_in = clamp_fraction(phi_c_in, "vessel C inflow")?;
    let phi_a_in = clamp_fraction(phi_a_in, "vessel A inflow")?;
    let phi_b_in = clamp_fraction(phi_b_in, "vessel B inflow")?;

    let [va, vb, vc] = cfg.geometry.vol();
    let mu = |phi: f64| cfg.viscosity.rel_viscosity(phi);
    state
        .vessel_a
        .advance(q_a / va * dt, phi_a_in, mu(phi_a_in)?);
    state
        .vessel_b
        .advance(q_b / vb * dt, phi_b_in, mu(phi_b_in)?);
    state
        .vessel_c
        .advance(q_c / vc * dt, phi_c_in, mu(phi_c_in)?);

    state.q_c = flow_update(cfg, &state.vessel_a, &state.vessel_b, &state.vessel_c);
    state.t += dt;
    Ok(())
}

/// A completed run: the recorded loop-flow series and the final state.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub times: Vec<f64>,
    pub q_c: Vec<f64>,
    pub final_state: SimState,
}

/// Integrate from an equilibrium seed to `t_end` with the CFL step
/// recomputed every step; records `q_c` at every step. Deterministic.
pub fn run(cfg: &NetworkConfig, seed: &EquilibriumState, sim: &SimConfig) -> Result<SimRun> {
    let mut state = init(cfg, seed, sim)?;
    let mut times = Vec::with_capacity(1 << 16);
    let mut q_c = Vec::with_capacity(1 << 16);
    times.push(0.0);
    q_c.push(state.q_c);
    while state.t < sim.t_end {
        let dt = cfl_dt(cfg, &state, sim).min(sim.t_end - state.t);
        step(cfg, &mut state, sim, dt)?;
        times.push(state.t);
        q_c.push(state.q_c);
    }
    Ok(SimRun {
        times,
        q_c,
        final_state: state,
    })
}

/// Cycle measurements extracted from a `q_c` time series.
#[derive(Debug, Clone, Serialize)]
pub struct CycleStats {
    /// Mean same-direction zero-crossing interval after the transient.
    pub period: Option<f64>,
    /// `2 pi / period`.
    pub omega: Option<f64>,
    pub amplitude_min: f64,
    pub amplitude_max: f64,
    /// Envelope growth rate fitted where the amplitude is below 10% of
    /// saturation.
    pub growth_rate: Option<f64>,
    /// Frequency measured in the same small-amplitude window.
    pub small_amplitude_omega: Option<f64>,
    /// Waveform-purity deficit of the post-transient cycle: one minus the
    /// fraction of the signal RMS captured by its best-fit fundamental
    /// sinusoid. Zero for a clean sine; grows as the waveform develops
    /// abrupt changes.
    pub harmonic_distortion: Option<f64>,
    /// Last three periods agree within 1%.
    pub converged: bool,
}

fn up_crossings(times: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 1..y.len() {
        if y[k - 1] < 0.0 && y[k] >= 0.0 {
            let f = -y[k - 1] / (y[k] - y[k - 1]);
            out.push(times[k - 1] + f * (times[k] - times[k - 1]));
        }
    }
    out
}

/// Analyse a recorded series: period/amplitude after `transient_skip`, and
/// growth rate plus small-amplitude frequency from the pre-saturation
/// envelope (the deviation is anchored to the initial value there, since
/// the cycle mean drifts away from the equilibrium as it saturates).
pub fn analyze_cycle(times: &[f64], q_c: &[f64], transient_skip: f64) -> CycleStats {
    assert_eq!(times.len(), q_c.len());
    let post0 = times.partition_point(|&t| t < transient_skip);
    let post_t = &times[post0..];
    let post_q = &q_c[post0..];
    let (amplitude_min, amplitude_max) = post_q
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });

    // saturated-cycle measurements
    let mean_post = post_q.iter().sum::<f64>() / post_q.len().max(1) as f64;
    let detr: Vec<f64> = post_q.iter().map(|v| v - mean_post).collect();
    let span = amplitude_max - amplitude_min;
    let mut period = None;
    let mut omega = None;
    let mut converged = false;
    let mut harmonic_distortion = None;
    if span > 1e-9 {
        let tz = up_crossings(post_t, &detr);
        if tz.len() >= 3 {
            let intervals: Vec<f64> = tz.windows(2).map(|w| w[1] - w[0]).collect();
            let mean_p = intervals.iter().sum::<f64>() / intervals.len() as f64;
            period = Some(mean_p);
            let w = 2.0 * std::f64::consts::PI / mean_p;
            omega = Some(w);
            if intervals.len() >= 3 {
                let last3 = &intervals[intervals.len() - 3..];
                let lo = last3.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = last3.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                converged = hi / lo - 1.0 < 0.01;
            }
            // fundamental fit a sin(wt) + b cos(wt) by least squares
            let (mut ss, mut sc, mut scc, mut sys, mut syc) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (t, y) in post_t.iter().zip(&detr) {
                let (s, c) = (w * t).sin_cos();
                ss += s * s;
                sc += s * c;
                scc += c * c;
                sys += y * s;
                syc += y * c;
            }
            let det = ss * scc - sc * sc;
            if det.abs() > 0.0 {
                let a = (sys * scc - syc * sc) / det;
                let b = (syc * ss - sys * sc) / det;
                let mut fund = 0.0;
                let mut total = 0.0;
                for (t, y) in post_t.iter().zip(&detr) {
                    let (s, c) = (w * t).sin_cos();
                    let f = a * s + b * c;
                    fund += f * f;
                    total += y * y;
                }
                if total > 0.0 {
                    harmonic_distortion = Some(1.0 - (fund / total).sqrt());
                }
            }
        }
    }

    // pre-saturation envelope, anchored to the initial value
    let dev: Vec<f64> = q_c.iter().map(|v| v - q_c[0]).collect();
    let mut peaks: Vec<(f64, f64)> = Vec::new();
    for k in 1..dev.len() - 1 {
        let m = dev[k].abs();
        if m >= dev[k - 1].abs() && m > dev[k + 1].abs() && m > 0.0 {
            peaks.push((times[k], m));
        }
    }
    let sat = peaks
        .iter()
        .map(|p| p.1)
        .fold(0.0f64, f64::max)
        .max(span / 2.0);
    let mut growth_rate = None;
    let mut small_amplitude_omega = None;
    if sat > 0.0 && peaks.len() >= 4 {
        let growing = peaks.last().unwrap().1 > 2.0 * peaks[0].1;
        let t_hit = peaks
            .iter()
            .find(|p| p.1 > 0.1 * sat)
            .map(|p| p.0)
            .unwrap_or(times[times.len() - 1]);
        let window: Vec<(f64, f64)> = if growing {
            // drop the earliest fifth of the window while modes sort out
            let t_min = 0.2 * t_hit;
            peaks
                .iter()
                .filter(|p| p.0 >= t_min && p.0 <= t_hit)
                .cloned()
                .collect()
        } else {
            let t_min = times[times.len() - 1] * 0.1;
            peaks.iter().filter(|p| p.0 >= t_min).cloned().collect()
        };
        if window.len() >= 4 {
            // least squares on ln(peak)
            let n = window.len() as f64;
            let sx: f64 = window.iter().map(|p| p.0).sum();
            let sy: f64 = window.iter().map(|p| p.1.ln()).sum();
            let sxx: f64 = window.iter().map(|p| p.0 * p.0).sum();
            let sxy: f64 = window.iter().map(|p| p.0 * p.1.ln()).sum();
            let denom = n * sxx - sx * sx;
            if denom.abs() > 0.0 {
                growth_rate = Some((n * sxy - sx * sy) / denom);
            }
            let t0 = window.first().unwrap().0;
            let t1 = window.last().unwrap().0;
            let k0 = times.partition_point(|&t| t < t0);
            let k1 = times.partition_point(|&t| t < t1);
            if k1 > k0 + 4 {
                let tz = up_crossings(&times[k0..k1], &dev[k0..k1]);
                if tz.len() >= 3 {
                    let mean_p = (tz[tz.len() - 1] - tz[0]) / (tz.len() - 1) as f64;
                    small_amplitude_omega = Some(2.0 * std::f64::consts::PI / mean_p);
                }
            }
        }
    }

    CycleStats {
        period,
        omega,
        amplitude_min,
        amplitude_max,
        growth_rate,
        small_amplitude_omega,
        harmonic_distortion,
        converged,
    }
}

/// Which equilibrium branch seeds a bistability probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchSide {
    Positive,
    Negative,
}

/// Attractor reached by a probe run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProbeOutcome {
    SettledPositive,
    SettledNegative,
    CyclePositive,
    CycleNegative,
    CycleSpanning,
    Unclassified,
}

/// Run from a seed on the chosen branch and classify the attractor.
pub fn bistability_probe(
    cfg: &NetworkConfig,
    sim: &SimConfig,
    side: BranchSide,
) -> Result<(ProbeOutcome, CycleStats)> {
    let states = solve_equilibria(cfg)?;
    let seed = match side {
        BranchSide::Positive => states.last(),
        BranchSide::Negative => states.first(),
    }
    .copied()
    .ok_or_else(|| Error::Solver("no equilibrium to seed the probe".into()))?;
    let run = run(cfg, &seed, sim)?;
    let stats = analyze_cycle(&run.times, &run.q_c, sim.transient_skip);
    let post0 = run.times.partition_point(|&t| t < sim.transient_skip);
    let post = &run.q_c[post0..];
    let mean = post.iter().sum::<f64>() / post.len().max(1) as f64;
    let span = stats.amplitude_max - stats.amplitude_min;
    let outcome = if span < 1e-8 {
        if mean >= 0.0 {
            ProbeOutcome::SettledPositive
        } else {
            ProbeOutcome::SettledNegative
        }
    } else if stats.converged {
        if stats.amplitude_min < 0.0 && stats.amplitude_max > 0.0 {
            ProbeOutcome::CycleSpanning
        } else if mean >= 0.0 {
            ProbeOutcome::CyclePositive
        } else {
            ProbeOutcome::CycleNegative
        }
    } else {
        ProbeOutcome::Unclassified
    };
    Ok((outcome, stats))
}
