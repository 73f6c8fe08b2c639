//! Tracking of saddle-node and Hopf loci through the (q1, contrast) plane
//! and classification of the phase-diagram regions.
//!
//! Both loci are continued by pseudo-arclength in the augmented unknowns
//! (`q1`, `q_c`, optionally `omega`, `ln contrast`): the defining system
//! (`F_S` with two rows, `F_H` with three) plus a moving hyperplane
//! constraint. The viscosity contrast enters through its logarithm because
//! the diagrams span two decades.

use rayon::prelude::*;
use serde::Serialize;

use crate::equilibrium::{
    continue_curve, detect_folds, dpsi_dqc, onset_contrast, psi_residual, solve_equilibria,
    state_at, SaddleNodePoint, StepControl,
};
use crate::error::{Error, Result};
use crate::network::NetworkConfig;
use crate::numeric::solve_dense;
use crate::stability::{
    char_coefficients, classify_state, hopf_scan, HopfPoint, StabilityLabel, OMEGA_MIN,
};
use num_complex::Complex64;

/// Which bifurcation a tracked curve follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BifurcationKind {
    SaddleNode,
    Hopf,
}

/// One point of a tracked bifurcation curve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BifurcationPoint {
    pub q1: f64,
    pub q_c: f64,
    pub contrast: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}

/// A locus of saddle-node or Hopf points in the (q1, contrast) plane.
#[derive(Debug, Clone, Serialize)]
pub struct BifurcationCurve {
    pub kind: BifurcationKind,
    pub points: Vec<BifurcationPoint>,
}

impl BifurcationCurve {
    /// Point of minimum contrast: where the branch emerges.
    pub fn emergence_point(&self) -> Option<&BifurcationPoint> {
        self.points
            .iter()
            .min_by(|p, q| p.contrast.partial_cmp(&q.contrast).unwrap())
    }

    /// Contrasts at which the branch crosses a given `q1`, in increasing
    /// order (linear interpolation between tracked points).
    pub fn crossings_at_q1(&self, q1: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for w in self.points.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let da = a.q1 - q1;
            let db = b.q1 - q1;
            if da == 0.0 {
                out.push(a.contrast);
            } else if da.signum() != db.signum() && db != 0.0 {
                let t = da / (da - db);
                out.push(a.contrast * (1.0 - t) + b.contrast * t);
            }
        }
        out.sort_by(|p, q| p.partial_cmp(q).unwrap());
        out.dedup_by(|p, q| (*p - *q).abs() < 1e-9 * (1.0 + q.abs()));
        out
    }

    /// Contrast at which the branch reaches the `q1` boundary (0 or 1):
    /// the first crossing, or a short linear extrapolation when tracking
    /// stopped just short of the boundary.
    pub fn boundary_reach_contrast(&self, boundary: f64) -> Option<f64> {
        let crossings = self.crossings_at_q1(boundary);
        if let Some(&c) = crossings.first() {
            return Some(c);
        }
        // nearest approach, extrapolated from its adjacent segment
        let (k, best) = self
            .points
            .iter()
            .enumerate()
            .map(|(k, p)| (k, (p.q1 - boundary).abs()))
            .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())?;
        if best > 0.02 {
            return None;
        }
        let other = if k + 1 < self.points.len() {
            &self.points[k + 1]
        } else if k > 0 {
            &self.points[k - 1]
        } else {
            return None;
        };
        let p = &self.points[k];
        if (other.q1 - p.q1).abs() < 1e-12 {
            return Some(p.contrast);
        }
        let slope = (other.contrast - p.contrast) / (other.q1 - p.q1);
        Some(p.contrast + slope * (boundary - p.q1))
    }

    /// Interpolated `q1` of the branch at a given contrast, if spanned.
    /// Where the branch crosses a contrast more than once, returns the
    /// crossing closest to `near_q1`.
    pub fn q1_at_contrast(&self, contrast: f64, near_q1: f64) -> Option<f64> {
        let mut cands = Vec::new();
        for w in self.points.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let da = a.contrast - contrast;
            let db = b.contrast - contrast;
            if da == 0.0 {
                cands.push(a.q1);
            } else if da.signum() != db.signum() && db != 0.0 {
                let t = da / (da - db);
                cands.push(a.q1 * (1.0 - t) + b.q1 * t);
            }
        }
        cands.into_iter().min_by(|x, y| {
            (x - near_q1)
                .abs()
                .partial_cmp(&(y - near_q1).abs())
                .unwrap()
        })
    }
}

/// Step control for two-parameter curve tracking.
#[derive(Debug, Clone, Copy)]
pub struct TrackOptions {
    pub ds_init: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_steps: usize,
    /// Weight of the frequency component in the arclength metric.
    pub omega_weight: f64,
    /// Margin from the q1 boundaries at which tracking stops cleanly.
    pub q1_margin: f64,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            ds_init: 0.01,
            ds_min: 1e-9,
            ds_max: 0.05,
            max_steps: 6000,
            omega_weight: 0.1,
            q1_margin: 5e-4,
        }
    }
}

// Augmented-system plumbing shared by the two trackers. The state vector is
// (q1, q_c, ln contrast) for folds and (q1, q_c, omega, ln contrast) for
// Hopf curves.

fn fold_system(cfg: &NetworkConfig, u: &[f64]) -> Result<Vec<f64>> {
    let c = cfg.with_q1(u[0])?.with_contrast(u[2].exp())?;
    Ok(vec![psi_residual(&c, u[1])?, dpsi_dqc(&c, u[1])? - 1.0])
}

fn hopf_system(cfg: &NetworkConfig, u: &[f64]) -> Result<Vec<f64>> {
    let c = cfg.with_q1(u[0])?.with_contrast(u[3].exp())?;
    let st = state_at(&c, u[1])?;
    let co = char_coefficients(&c, &st)?;
    let z = co.chi(Complex64::new(0.0, u[2]));
    Ok(vec![psi_residual(&c, u[1])?, z.re, z.im])
}

/// Corrector: Newton on the defining system plus the hyperplane constraint
/// `t . (u - pred) = 0`, with central-difference Jacobian (relative step
/// 1e-6).
fn correct_augmented<F>(
    system: &F,
    pred: &[f64],
    tangent: &[f64],
    weights: &[f64],
    tol: f64,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = pred.len();
    let mut u = pred.to_vec();
    for _ in 0..16 {
        let mut f = system(&u)?;
        let plane: f64 = (0..n)
            .map(|j| tangent[j] * (u[j] - pred[j]) * weights[j] * weights[j])
            .sum();
        f.push(plane);
        if f.iter().all(|v| v.abs() < tol) {
            return Ok(u);
        }
        let mut jac = vec![0.0; n * n];
        for j in 0..n {
            let h = 1e-6 * (1.0 + u[j].abs());
            let mut up = u.clone();
            let mut um = u.clone();
            up[j] += h;
            um[j] -= h;
            let fp = system(&up)?;
            let fm = system(&um)?;
            for i in 0..n - 1 {
                jac[i * n + j] = (fp[i] - fm[i]) / (2.0 * h);
            }
            jac[(n - 1) * n + j] = tangent[j] * weights[j] * weights[j];
        }
        let mut rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        solve_dense(&mut jac, &mut rhs, n)?;
        for j in 0..n {
            u[j] += rhs[j];
        }
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::Solver("corrector diverged".into()));
        }
    }
    Err(Error::Solver("corrector did not converge".into()))
}

/// Generic pseudo-arclength tracker over `ln contrast`, starting from a
/// converged point and walking both directions until the contrast range or
/// a `q1` boundary is left, or `valid` rejects the next point (used to end
/// Hopf branches at the zero-frequency corner).
fn track_branch<F, V>(
    system: F,
    u_seed: Vec<f64>,
    weights: Vec<f64>,
    contrast_range: (f64, f64),
    opts: &TrackOptions,
    valid: V,
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
    V: Fn(&[f64]) -> bool,
{
    let n = u_seed.len();
    let t_idx = n - 1;
    let (t_lo, t_hi) = (contrast_range.0.ln(), contrast_range.1.ln());
    let scaled_dist = |a: &[f64], b: &[f64]| -> f64 {
        (0..n)
            .map(|j| ((a[j] - b[j]) * weights[j]).powi(2))
            .sum::<f64>()
            .sqrt()
    };

    let mut halves: Vec<Vec<Vec<f64>>> = Vec::new();
    for dir in [1.0f64, -1.0] {
        let mut pts: Vec<Vec<f64>> = vec![u_seed.clone()];
        // first step: nudge contrast, re-converge with frozen q-plane
        let mut tangent = vec![0.0; n];
        tangent[t_idx] = dir;
        let mut ds = opts.ds_init;
        let mut steps = 0usize;
        loop {
            steps += 1;
            if steps > opts.max_steps {
                break;
            }
            let last = pts.last().unwrap().clone();
            if pts.len() >= 2 {
                let prev = &pts[pts.len() - 2];
                let mut t = vec![0.0; n];
                let mut norm = 0.0;
                for j in 0..n {
                    t[j] = last[j] - prev[j];
                    norm += (t[j] * weights[j]).powi(2);
                }
                let norm = norm.sqrt();
                if norm == 0.0 {
                    break;
                }
                for v in t.iter_mut() {
                    *v /= norm;
                }
                tangent = t;
            }
            let mut accepted: Option<Vec<f64>> = None;
            while accepted.is_none() {
                let pred: Vec<f64> = (0..n).map(|j| last[j] + ds * tangent[j]).collect();
                match correct_augmented(&system, &pred, &tangent, &weights, 1e-10) {
                    Ok(u) => accepted = Some(u),
                    Err(_) => {
                        ds *= 0.5;
                        if ds < opts.ds_min {
                            break;
                        }
                    }
                }
            }
            let Some(u) = accepted else {
                // step collapse: legal at a branch endpoint (the locus nose
                // at q_c = 0, where the constitutive rule switches sides)
                if last[1].abs() < 5e-3 || pts.len() > 2 {
                    break;
                }
                return Err(Error::StepCollapse {
                    min_step: opts.ds_min,
                    context: format!("branch tracking at q1 = {}", last[0]),
                });
            };
            if !valid(&u) {
                break;
            }
            let exits_range = u[t_idx] < t_lo || u[t_idx] > t_hi;
            let exits_boundary = u[0] < opts.q1_margin || u[0] > 1.0 - opts.q1_margin;
            if scaled_dist(&u, &last) > 1e-14 {
                pts.push(u.clone());
            }
            if exits_range || exits_boundary {
                break;
            }
            ds = (ds * 1.3).min(opts.ds_max);
        }
        halves.push(pts);
    }

    let mut back = halves.pop().unwrap();
    let fwd = halves.pop().unwrap();
    back.reverse();
    back.pop(); // drop duplicated seed
    back.extend(fwd);
    Ok(back)
}

/// Continue a saddle-node locus from a converged fold across a contrast
/// range.
pub fn track_saddle_node(
    cfg: &NetworkConfig,
    seed: &SaddleNodePoint,
    contrast_range: (f64, f64),
    opts: &TrackOptions,
) -> Result<BifurcationCurve> {
    let u_seed = vec![seed.q1, seed.q_c, seed.contrast.ln()];
    // verify the seed satisfies its system
    let f = fold_system(cfg, &u_seed)?;
    if !f.iter().all(|v| v.abs() < 1e-6) {
        return Err(Error::Precondition(format!(
            "fold seed does not satisfy F_S: {f:?}"
        )));
    }
    let pts = track_branch(
        |u| fold_system(cfg, u),
        u_seed,
        vec![1.0, 1.0, 1.0],
        contrast_range,
        opts,
        |_| true,
    )?;
    Ok(BifurcationCurve {
        kind: BifurcationKind::SaddleNode,
        points: pts
            .into_iter()
            .map(|u| BifurcationPoint {
                q1: u[0],
                q_c: u[1],
                contrast: u[2].exp(),
                omega: None,
            })
            .collect(),
    })
}

/// Continue a Hopf locus from a converged Hopf point across a contrast
/// range.
pub fn track_hopf(
    cfg: &NetworkConfig,
    seed: &HopfPoint,
    contrast_range: (f64, f64),
    opts: &TrackOptions,
) -> Result<BifurcationCurve> {
    let u_seed = vec![seed.q1, seed.q_c, seed.omega, seed.contrast.ln()];
    let f = hopf_system(cfg, &u_seed)?;
    if !f.iter().all(|v| v.abs() < 1e-6) {
        return Err(Error::Precondition(format!(
            "Hopf seed does not satisfy F_H: {f:?}"
        )));
    }
    let pts = track_branch(
        |u| hopf_system(cfg, u),
        u_seed,
        vec![1.0, 1.0, opts.omega_weight, 1.0],
        contrast_range,
        opts,
        // the locus degenerates into fold territory as omega -> 0
        |u| u[2] > 0.5 * OMEGA_MIN,
    )?;
    Ok(BifurcationCurve {
        kind: BifurcationKind::Hopf,
        points: pts
            .into_iter()
            .map(|u| BifurcationPoint {
                q1: u[0],
                q_c: u[1],
                contrast: u[3].exp(),
                omega: Some(u[2]),
            })
            .collect(),
    })
}

/// Crossings of a Hopf branch with a saddle-node branch in the
/// (q1, contrast) plane: contrasts at which the Hopf locus enters or
/// leaves the multiple-equilibria region bounded by that fold arm.
pub fn hopf_sn_crossings(hopf: &BifurcationCurve, sn: &BifurcationCurve) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let diff = |p: &BifurcationPoint| -> Option<f64> {
        sn.q1_at_contrast(p.contrast, p.q1).map(|q| p.q1 - q)
    };
    for w in hopf.points.windows(2) {
        let (Some(da), Some(db)) = (diff(&w[0]), diff(&w[1])) else {
            continue;
        };
        if da == 0.0 {
            out.push((w[0].q1, w[0].contrast));
        } else if da.signum() != db.signum() && db != 0.0 {
            let t = da / (da - db);
            out.push((
                w[0].q1 * (1.0 - t) + w[1].q1 * t,
                w[0].contrast * (1.0 - t) + w[1].contrast * t,
            ));
        }
    }
    out
}

/// Phase-diagram region labels.
///
/// i: unique stable equilibrium. ii: two stable equilibria. iii: one
/// stable state coexisting with one Hopf-unstable state. iv: a single
/// Hopf-unstable equilibrium. v: two Hopf-unstable equilibria
/// (coexisting limit cycles). The saddle between coexisting states is not
/// counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    I,
    II,
    III,
    IV,
    V,
}

impl Region {
    pub fn numeral(&self) -> &'static str {
        match self {
            Region::I => "i",
            Region::II => "ii",
            Region::III => "iii",
            Region::IV => "iv",
            Region::V => "v",
        }
    }
}

/// Classify one (q1, contrast) cell by counting equilibria and their
/// stability classes.
pub fn classify_region(cfg: &NetworkConfig) -> Result<Region> {
    let states = solve_equilibria(cfg)?;
    if states.len() % 2 == 0 {
        return Err(Error::AmbiguousCount(format!(
            "{} equilibria at q1 = {}, contrast = {} (fold grazing or missed root)",
            states.len(),
            cfg.inlets.q1(),
            cfg.contrast()
        )));
    }
    let mut stable = 0usize;
    let mut osc = 0usize;
    let mut saddle = 0usize;
    for st in &states {
        match classify_state(&char_coefficients(cfg, st)?) {
            StabilityLabel::Stable => stable += 1,
            StabilityLabel::Oscillatory => osc += 1,
            StabilityLabel::Saddle => saddle += 1,
        }
    }
    match (states.len(), stable, osc, saddle) {
        (1, 1, 0, 0) => Ok(Region::I),
        (1, 0, 1, 0) => Ok(Region::IV),
        (3, 2, 0, 1) => Ok(Region::II),
        (3, 1, 1, 1) => Ok(Region::III),
        (3, 0, 2, 1) => Ok(Region::V),
        _ => Err(Error::AmbiguousCount(format!(
            "unrecognised ({}, {stable} stable, {osc} oscillatory, {saddle} saddle) at q1 = {}, contrast = {}",
            states.len(),
            cfg.inlets.q1(),
            cfg.contrast()
        ))),
    }
}

/// A failed raster cell with its diagnostic.
#[derive(Debug, Clone, Serialize)]
pub struct CellFailure {
    pub i_q1: usize,
    pub i_contrast: usize,
    pub message: String,
}

/// Region raster plus the overlaid bifurcation curves.
#[derive(Debug, Clone)]
pub struct PhaseDiagram {
    pub q1s: Vec<f64>,
    pub contrasts: Vec<f64>,
    /// Row-major `[i_q1 * contrasts.len() + i_contrast]`.
    pub labels: Vec<Option<Region>>,
    pub failures: Vec<CellFailure>,
    pub saddle_node_curves: Vec<BifurcationCurve>,
    pub hopf_curves: Vec<BifurcationCurve>,
}

/// Options for assembling a phase diagram.
#[derive(Debug, Clone)]
pub struct DiagramOptions {
    /// Contrast slices scanned to seed Hopf branches.
    pub hopf_seed_contrasts: Vec<f64>,
    /// q1 span scanned for the seed slices and fold seeds.
    pub q1_span: (f64, f64),
    pub track: TrackOptions,
    /// Skip the per-cell raster (curves only).
    pub curves_only: bool,
}

impl Default for DiagramOptions {
    fn default() -> Self {
        Self {
            hopf_seed_contrasts: vec![50.0],
            q1_span: (0.01, 0.99),
            track: TrackOptions::default(),
            curves_only: false,
        }
    }
}

/// Default q1 grid (uniform) and contrast grid (logarithmic) for rasters.
pub fn default_grids(contrast_range: (f64, f64)) -> (Vec<f64>, Vec<f64>) {
    let q1s: Vec<f64> = (0..201)
        .map(|i| 0.005 + 0.99 * (i as f64) / 200.0)
        .collect();
    let (lo, hi) = contrast_range;
    let contrasts: Vec<f64> = (0..120)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * (i as f64) / 119.0).exp())
        .collect();
    (q1s, contrasts)
}

/// Track the fold loci of a configuration: seeds found just above onset
/// when the reduced criterion applies, otherwise from folds of the
/// mid-range equilibrium curve.
pub fn track_saddle_node_curves(
    cfg: &NetworkConfig,
    contrast_range: (f64, f64),
    opts: &DiagramOptions,
) -> Result<Vec<BifurcationCurve>> {
    let seed_contrast = match onset_contrast(cfg) {
        Ok(onset) => (onset.exact * 1.05).clamp(contrast_range.0, contrast_range.1),
        Err(_) => (contrast_range.0 * contrast_range.1).sqrt(),
    };
    let c = cfg.with_contrast(seed_contrast)?;
    let curve = continue_curve(&c, opts.q1_span.0, opts.q1_span.1, &StepControl::default())?;
    let folds = detect_folds(&c, &curve)?;
    let mut out: Vec<BifurcationCurve> = Vec::new();
    for fold in &folds {
        let branch = track_saddle_node(&c, fold, contrast_range, &opts.track)?;
        if !out
            .iter()
            .any(|b| is_duplicate_branch(b, &branch, opts.track.omega_weight))
        {
            out.push(branch);
        }
    }
    Ok(out)
}

/// Distance from a point to a polyline in the scaled
/// (q1, ln contrast, weighted omega) metric.
fn branch_distance(curve: &BifurcationCurve, q1: f64, lnc: f64, w: f64, w_weight: f64) -> f64 {
    let coord = |p: &BifurcationPoint| (p.q1, p.contrast.ln(), p.omega.unwrap_or(0.0) * w_weight);
    let target = (q1, lnc, w * w_weight);
    let mut best = f64::INFINITY;
    for seg in curve.points.windows(2) {
        let a = coord(&seg[0]);
        let b = coord(&seg[1]);
        let d = (b.0 - a.0, b.1 - a.1, b.2 - a.2);
        let r = (target.0 - a.0, target.1 - a.1, target.2 - a.2);
        let dd = d.0 * d.0 + d.1 * d.1 + d.2 * d.2;
        let t = if dd > 0.0 {
            ((r.0 * d.0 + r.1 * d.1 + r.2 * d.2) / dd).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let e = (r.0 - t * d.0, r.1 - t * d.1, r.2 - t * d.2);
        best = best.min((e.0 * e.0 + e.1 * e.1 + e.2 * e.2).sqrt());
    }
    best
}

/// A candidate duplicates an existing branch when essentially all of it
/// lies on that branch. Samples are spaced uniformly in metric arclength:
/// step refinement piles points up near degenerate corners where sibling
/// bands coincide, and index-based sampling there would merge branches
/// that separate everywhere else.
fn is_duplicate_branch(
    existing: &BifurcationCurve,
    candidate: &BifurcationCurve,
    w_weight: f64,
) -> bool {
    if candidate.points.len() < 2 || existing.points.len() < 2 {
        return false;
    }
    let coord = |p: &BifurcationPoint| (p.q1, p.contrast.ln(), p.omega.unwrap_or(0.0) * w_weight);
    let mut arcs = Vec::with_capacity(candidate.points.len());
    let mut total = 0.0;
    arcs.push(0.0);
    for seg in candidate.points.windows(2) {
        let a = coord(&seg[0]);
        let b = coord(&seg[1]);
        total += ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2) + (b.2 - a.2).powi(2)).sqrt();
        arcs.push(total);
    }
    if total == 0.0 {
        return true;
    }
    let n_samples = 25usize;
    let mut hits = 0usize;
    let mut k = 0usize;
    for m in 0..=n_samples {
        let target = total * (m as f64) / (n_samples as f64);
        while k + 1 < arcs.len() && arcs[k + 1] < target {
            k += 1;
        }
        let p = &candidate.points[k];
        let d = branch_distance(
            existing,
            p.q1,
            p.contrast.ln(),
            p.omega.unwrap_or(0.0),
            w_weight,
        );
        if d < 0.02 {
            hits += 1;
        }
    }
    hits * 100 >= (n_samples + 1) * 92
}

/// Seed and track every Hopf branch visible on the configured contrast
/// slices, deduplicated and ordered by emergence frequency.
pub fn track_hopf_curves(
    cfg: &NetworkConfig,
    contrast_range: (f64, f64),
    opts: &DiagramOptions,
) -> Result<Vec<BifurcationCurve>> {
    let w_weight = opts.track.omega_weight;
    let mut branches: Vec<BifurcationCurve> = Vec::new();
    for &slice in &opts.hopf_seed_contrasts {
        let slice = slice.clamp(contrast_range.0, contrast_range.1);
        let c = cfg.with_contrast(slice)?;
        let curve = continue_curve(&c, opts.q1_span.0, opts.q1_span.1, &StepControl::default())?;
        let scan = hopf_scan(&c, &curve, (OMEGA_MIN, 40.0), 300)?;
        for h in &scan.points {
            // skip seeds already on a tracked branch; the gate must stay
            // below the spacing of sibling bands near a fold corner
            let covered = branches
                .iter()
                .any(|b| branch_distance(b, h.q1, h.contrast.ln(), h.omega, w_weight) < 3e-3);
            if covered {
                continue;
            }
            if let Ok(branch) = track_hopf(&c, h, contrast_range, &opts.track) {
                if !branches
                    .iter()
                    .any(|b| is_duplicate_branch(b, &branch, w_weight))
                {
                    branches.push(branch);
                }
            }
        }
    }
    branches.sort_by(|a, b| {
        let fa = a.emergence_point().and_then(|p| p.omega).unwrap_or(0.0);
        let fb = b.emergence_point().and_then(|p| p.omega).unwrap_or(0.0);
        fa.partial_cmp(&fb).unwrap()
    });
    Ok(branches)
}

/// Build the full phase diagram: per-cell region raster plus tracked
/// bifurcation curves.
pub fn build_phase_diagram(
    cfg: &NetworkConfig,
    q1s: Vec<f64>,
    contrasts: Vec<f64>,
    opts: &DiagramOptions,
) -> Result<PhaseDiagram> {
    if q1s.len() < 2 || contrasts.len() < 2 {
        return Err(Error::Precondition(
            "grids need at least 2 points per axis".into(),
        ));
    }
    let contrast_range = (
        contrasts.first().copied().unwrap(),
        contrasts.last().copied().unwrap(),
    );
    let sn = track_saddle_node_curves(cfg, contrast_range, opts).unwrap_or_default();
    let hopf = track_hopf_curves(cfg, contrast_range, opts).unwrap_or_default();

    let mut labels = vec![None; q1s.len() * contrasts.len()];
    let mut failures = Vec::new();
    if !opts.curves_only {
        let cells: Vec<(usize, usize)> = (0..q1s.len())
            .flat_map(|i| (0..contrasts.len()).map(move |j| (i, j)))
            .collect();
        let results: Vec<(usize, usize, std::result::Result<Region, String>)> = cells
            .par_iter()
            .map(|&(i, j)| {
                let r = cfg
                    .with_q1(q1s[i])
                    .and_then(|c| c.with_contrast(contrasts[j]))
                    .and_then(|c| classify_region(&c))
                    .map_err(|e| e.to_string());
                (i, j, r)
            })
            .collect();
        for (i, j, r) in results {
            match r {
                Ok(region) => labels[i * contrasts.len() + j] = Some(region),
                Err(message) => failures.push(CellFailure {
                    i_q1: i,
                    i_contrast: j,
                    message,
                }),
            }
        }
    }
    Ok(PhaseDiagram {
        q1s,
        contrasts,
        labels,
        failures,
        saddle_node_curves: sn,
        hopf_curves: hopf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{
        InletConditions, NetworkGeometry, SeparationLaw, VesselGeometry, ViscosityLaw,
    };
    use approx::assert_abs_diff_eq;

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

    fn fold_seed(cfg: &NetworkConfig, span: (f64, f64)) -> Vec<SaddleNodePoint> {
        let curve = continue_curve(cfg, span.0, span.1, &StepControl::default()).unwrap();
        detect_folds(cfg, &curve).unwrap()
    }

    #[test]
    fn saddle_node_emergence_example1() {
        let cfg = example1(10.0, 0.5);
        let folds = fold_seed(&cfg, (0.3, 0.7));
        assert_eq!(folds.len(), 2);
        let branch =
            track_saddle_node(&cfg, &folds[0], (3.0, 60.0), &TrackOptions::default()).unwrap();
        let nose = branch.emergence_point().unwrap();
        assert_abs_diff_eq!(nose.q1, 0.5, epsilon = 5e-3);
        assert_abs_diff_eq!(nose.contrast, 3.4001, epsilon = 0.05);
        // widens with contrast: |q1 - 0.5| grows along the upper arm
        let top = branch
            .points
            .iter()
            .max_by(|p, q| p.contrast.partial_cmp(&q.contrast).unwrap())
            .unwrap();
        assert!((top.q1 - 0.5).abs() > (nose.q1 - 0.5).abs() + 0.02);
    }

    #[test]
    fn saddle_node_branches_mirror_for_symmetric_network() {
        let cfg = example1(10.0, 0.5);
        let folds = fold_seed(&cfg, (0.3, 0.7));
        let b0 = track_saddle_node(&cfg, &folds[0], (4.0, 40.0), &TrackOptions::default()).unwrap();
        for p in b0.points.iter().step_by(7) {
            // the mirrored point satisfies F_S of the same (symmetric) config
            let c = cfg.with_contrast(p.contrast).unwrap();
            let mirrored = crate::equilibrium::refine_fold(&c, 1.0 - p.q1, -p.q_c).unwrap();
            assert_abs_diff_eq!(mirrored.q1, 1.0 - p.q1, epsilon = 1e-8);
            assert_abs_diff_eq!(mirrored.q_c, -p.q_c, epsilon = 1e-8);
        }
    }

    #[test]
    fn tracked_points_reverify_from_scratch() {
        let cfg = example1(10.0, 0.5);
        let folds = fold_seed(&cfg, (0.3, 0.7));
        let branch =
            track_saddle_node(&cfg, &folds[1], (4.0, 30.0), &TrackOptions::default()).unwrap();
        for p in branch.points.iter().step_by(11) {
            let c = cfg
                .with_q1(p.q1)
                .unwrap()
                .with_contrast(p.contrast)
                .unwrap();
            assert!(psi_residual(&c, p.q_c).unwrap().abs() < 1e-8);
            assert!((dpsi_dqc(&c, p.q_c).unwrap() - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn saddle_node_emergence_example2() {
        let cfg = example2(10.0, 0.5);
        let folds = fold_seed(&cfg, (0.85, 0.999));
        assert_eq!(folds.len(), 2);
        let branch =
            track_saddle_node(&cfg, &folds[0], (3.0, 40.0), &TrackOptions::default()).unwrap();
        let nose = branch.emergence_point().unwrap();
        assert_abs_diff_eq!(nose.q1, 16.0 / 17.0, epsilon = 5e-3);
        assert_abs_diff_eq!(nose.contrast, 3.4922, epsilon = 0.08);
    }

    #[test]
    fn hopf_branch_tracks_through_contrast() {
        let cfg = example1(50.0, 0.5);
        let curve = continue_curve(&cfg, 0.05, 0.95, &StepControl::default()).unwrap();
        let scan = hopf_scan(&cfg, &curve, (OMEGA_MIN, 40.0), 300).unwrap();
        // take a high-frequency crossing on the negative branch
        let seed = scan
            .points
            .iter()
            .filter(|h| h.omega > 5.0 && h.q_c < 0.0)
            .min_by(|a, b| a.q1.partial_cmp(&b.q1).unwrap())
            .expect("high-frequency Hopf point");
        let branch = track_hopf(&cfg, seed, (20.0, 80.0), &TrackOptions::default()).unwrap();
        assert!(branch.points.len() > 10);
        // frequency stays positive and every point re-verifies
        for p in branch.points.iter().step_by(9) {
            let w = p.omega.unwrap();
            assert!(w > OMEGA_MIN);
            let c = cfg
                .with_q1(p.q1)
                .unwrap()
                .with_contrast(p.contrast)
                .unwrap();
            let st = state_at(&c, p.q_c).unwrap();
            let co = char_coefficients(&c, &st).unwrap();
            let z = co.chi(Complex64::new(0.0, w));
            assert!(psi_residual(&c, p.q_c).unwrap().abs() < 1e-8);
            assert!(z.norm() < 1e-8);
        }
    }

    #[test]
    fn region_classification_examples() {
        assert_eq!(classify_region(&example1(2.0, 0.5)).unwrap(), Region::I);
        assert_eq!(classify_region(&example1(10.0, 0.5)).unwrap(), Region::II);
        assert_eq!(classify_region(&example1(30.0, 0.33)).unwrap(), Region::IV);
        assert_eq!(classify_region(&example1(36.0, 0.45)).unwrap(), Region::III);
        assert_eq!(classify_region(&example1(5.0, 0.2)).unwrap(), Region::I);
        // coexisting limit cycles at q1 = 0.5 appear crossing contrast 35.5
        assert_eq!(classify_region(&example1(35.0, 0.5)).unwrap(), Region::II);
        assert_eq!(classify_region(&example1(37.0, 0.5)).unwrap(), Region::V);
    }

    #[test]
    fn curves_only_diagram_smoke() {
        let cfg = example1(10.0, 0.5);
        let (q1s, contrasts) = (
            vec![0.2, 0.35, 0.5, 0.65, 0.8],
            vec![2.0, 5.0, 12.0, 31.0, 40.0],
        );
        let opts = DiagramOptions {
            hopf_seed_contrasts: vec![40.0],
            ..Default::default()
        };
        let pd = build_phase_diagram(&cfg, q1s, contrasts, &opts).unwrap();
        // one trace can round the smooth fold nose and cover both arms
        assert!((1..=2).contains(&pd.saddle_node_curves.len()));
        assert!(!pd.hopf_curves.is_empty());
        assert!(pd.labels.iter().filter(|l| l.is_some()).count() >= 20);
        assert!(pd.failures.is_empty());
        // symmetric config: raster symmetric about q1 = 0.5
        let n = pd.contrasts.len();
        for j in 0..n {
            assert_eq!(pd.labels[j], pd.labels[4 * n + j]);
            assert_eq!(pd.labels[n + j], pd.labels[3 * n + j]);
        }
    }
}
