//! Dimensionless network description and constitutive laws.
//!
//! The loop has vessels A and B fed by inlets 1 and 2 and a connecting
//! vessel C whose signed flow `q_c` is the dynamical variable (`q_c > 0`
//! runs from the inlet-1 node to the inlet-2 node). Only dimensionless
//! groups matter: resistance ratios, volume shares, the inlet flow split
//! `q1`, inlet fractions, the viscosity contrast, and the separation rule.

use serde::Deserialize;

use crate::error::{Error, Result};

/// Inputs within this band of [0, 1] are clamped; beyond it they error.
/// Continuation arithmetic produces harmless round-off excursions.
pub const FRACTION_TOL: f64 = 1e-12;

fn clamp_unit(name: &'static str, x: f64) -> Result<f64> {
    if !(-FRACTION_TOL..=1.0 + FRACTION_TOL).contains(&x) {
        return Err(Error::Domain {
            name,
            value: x,
            lo: 0.0,
            hi: 1.0,
        });
    }
    Ok(x.clamp(0.0, 1.0))
}

/// Raw vessel shape. Diameter and length are in arbitrary common units;
/// only ratios of the derived quantities survive nondimensionalisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VesselGeometry {
    pub diameter: f64,
    pub length: f64,
}

impl VesselGeometry {
    pub fn new(diameter: f64, length: f64) -> Result<Self> {
        if !(diameter > 0.0 && diameter.is_finite()) {
            return Err(Error::Domain {
                name: "diameter",
                value: diameter,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Domain {
                name: "length",
                value: length,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        Ok(Self { diameter, length })
    }

    /// Nominal resistance up to the constant factor 128 mu_alpha / pi,
    /// which cancels from every dimensionless group.
    pub fn nominal_resistance(&self) -> f64 {
        self.length / self.diameter.powi(4)
    }

    /// Volume up to the constant factor pi / 4.
    pub fn volume(&self) -> f64 {
        self.diameter * self.diameter * self.length
    }
}

/// Canonical dimensionless geometry: nominal resistances (arbitrary common
/// scale; the flow equation is homogeneous in them) and volume shares
/// normalised so the network volume is 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkGeometry {
    res: [f64; 3],
    vol: [f64; 3],
}

impl NetworkGeometry {
    pub fn from_vessels(a: VesselGeometry, b: VesselGeometry, c: VesselGeometry) -> Result<Self> {
        let res = [
            a.nominal_resistance(),
            b.nominal_resistance(),
            c.nominal_resistance(),
        ];
        let v = [a.volume(), b.volume(), c.volume()];
        let total = v[0] + v[1] + v[2];
        Self::check([res, [v[0] / total, v[1] / total, v[2] / total]])
    }

    /// Build directly from the four dimensionless ratios.
    pub fn from_ratios(ra_rc: f64, rb_rc: f64, va_vc: f64, vb_vc: f64) -> Result<Self> {
        let res = [ra_rc, rb_rc, 1.0];
        let total = va_vc + vb_vc + 1.0;
        Self::check([res, [va_vc / total, vb_vc / total, 1.0 / total]])
    }

    fn check(rv: [[f64; 3]; 2]) -> Result<Self> {
        let [res, vol] = rv;
        for (name, v) in [("resistance ratio", res), ("volume share", vol)] {
            for x in v {
                if !(x > 0.0 && x.is_finite()) {
                    return Err(Error::Config(format!(
                        "{name} must be finite and positive, got {x}"
                    )));
                }
            }
        }
        Ok(Self { res, vol })
    }

    /// Nominal resistances (r_a, r_b, r_c) on their common arbitrary scale.
    pub fn res(&self) -> [f64; 3] {
        self.res
    }

    /// Volume shares (v_a, v_b, v_c) summing to 1.
    pub fn vol(&self) -> [f64; 3] {
        self.vol
    }

    pub fn res_ratio_a_c(&self) -> f64 {
        self.res[0] / self.res[2]
    }

    pub fn res_ratio_a_b(&self) -> f64 {
        self.res[0] / self.res[1]
    }

    pub fn vol_ratio_a_c(&self) -> f64 {
        self.vol[0] / self.vol[2]
    }

    pub fn vol_ratio_a_b(&self) -> f64 {
        self.vol[0] / self.vol[1]
    }

    /// Exchange vessels A and B.
    pub fn swapped(&self) -> Self {
        Self {
            res: [self.res[1], self.res[0], self.res[2]],
            vol: [self.vol[1], self.vol[0], self.vol[2]],
        }
    }
}

/// Inlet flow split and volume fractions. `q2` is stored explicitly so the
/// exchange swap is a bit-exact involution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InletConditions {
    q1: f64,
    q2: f64,
    phi1: f64,
    phi2: f64,
}

impl InletConditions {
    pub fn new(q1: f64, phi1: f64, phi2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q1) || !q1.is_finite() {
            return Err(Error::Domain {
                name: "q1",
                value: q1,
                lo: 0.0,
                hi: 1.0,
            });
        }
        Ok(Self {
            q1,
            q2: 1.0 - q1,
            phi1: clamp_unit("phi1", phi1)?,
            phi2: clamp_unit("phi2", phi2)?,
        })
    }

    pub fn q1(&self) -> f64 {
        self.q1
    }

    /// Flow fraction of inlet 2, fixed at construction as 1 - q1.
    pub fn q2(&self) -> f64 {
        self.q2
    }

    pub fn phi1(&self) -> f64 {
        self.phi1
    }

    pub fn phi2(&self) -> f64 {
        self.phi2
    }

    pub fn swapped(&self) -> Self {
        Self {
            q1: self.q2,
            q2: self.q1,
            phi1: self.phi2,
            phi2: self.phi1,
        }
    }
}

/// Effective-viscosity law for the mixed phases, relative to the thin phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViscosityLaw {
    /// `mu_rel(phi) = contrast^phi`, the Arrhenius mixing rule.
    Arrhenius { contrast: f64 },
}

impl ViscosityLaw {
    pub fn arrhenius(contrast: f64) -> Result<Self> {
        if !(contrast >= 1.0 && contrast.is_finite()) {
            return Err(Error::Domain {
                name: "contrast",
                value: contrast,
                lo: 1.0,
                hi: f64::INFINITY,
            });
        }
        Ok(Self::Arrhenius { contrast })
    }

    pub fn contrast(&self) -> f64 {
        match *self {
            Self::Arrhenius { contrast } => contrast,
        }
    }

    /// Relative mixture viscosity at volume fraction `phi`.
    pub fn rel_viscosity(&self, phi: f64) -> Result<f64> {
        let phi = clamp_unit("phi", phi)?;
        match *self {
            Self::Arrhenius { contrast } => Ok((phi * contrast.ln()).exp()),
        }
    }

    /// d ln(mu) / d phi. Constant for the Arrhenius law.
    pub fn dln_mu_dphi(&self, phi: f64) -> Result<f64> {
        clamp_unit("phi", phi)?;
        match *self {
            Self::Arrhenius { contrast } => Ok(contrast.ln()),
        }
    }
}

/// Phase-separation rule at a diverging node: maps the normalised flow
/// `x = q_side / q_in` of the side branch to its normalised volume fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeparationLaw {
    /// Empirical microvascular ("plasma skimming") fit,
    /// `f(x) = x^(p-1) / (x^p + (1-x)^p)` with p > 1.
    Microvascular { exponent: f64 },
    /// Stratified laminar-flow fit, `f(x) = 1 - gamma (1-x)^2`.
    Stratified { gamma: f64 },
    /// No separation: both daughters inherit the parent fraction.
    None,
}

impl SeparationLaw {
    pub fn microvascular(exponent: f64) -> Result<Self> {
        if !(exponent > 1.0 && exponent.is_finite()) {
            return Err(Error::Domain {
                name: "p",
                value: exponent,
                lo: 1.0,
                hi: f64::INFINITY,
            });
        }
        Ok(Self::Microvascular { exponent })
    }

    pub fn stratified(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Domain {
                name: "gamma",
                value: gamma,
                lo: 0.0,
                hi: 1.0,
            });
        }
        Ok(Self::Stratified { gamma })
    }

    /// Normalised side-branch fraction `f(x)`.
    pub fn fraction(&self, x: f64) -> Result<f64> {
        let x = clamp_unit("x", x)?;
        Ok(match *self {
            Self::Microvascular { exponent: p } => {
                if x == 0.0 {
                    0.0
                } else {
                    x.powf(p - 1.0) / (x.powf(p) + (1.0 - x).powf(p))
                }
            }
            Self::Stratified { gamma } => 1.0 - gamma * (1.0 - x) * (1.0 - x),
            Self::None => 1.0,
        })
    }

    /// Analytic derivative `f'(x)`.
    ///
    /// For the microvascular law with p < 2 the derivative diverges at
    /// x = 0, which is reported as a singularity.
    pub fn fraction_deriv(&self, x: f64) -> Result<f64> {
        let x = clamp_unit("x", x)?;
        match *self {
            Self::Microvascular { exponent: p } => {
                if x == 0.0 {
                    if p < 2.0 {
                        return Err(Error::Singular(format!(
                            "f'(0) diverges for the microvascular law with p = {p} < 2"
                        )));
                    }
                    // p = 2 gives f'(0) = 1; p > 2 gives 0.
                    return Ok(if p == 2.0 { 1.0 } else { 0.0 });
                }
                let d = x.powf(p) + (1.0 - x).powf(p);
                let n = x.powf(p - 1.0);
                let np = (p - 1.0) * x.powf(p - 2.0);
                let dp = p * (x.powf(p - 1.0) - (1.0 - x).powf(p - 1.0));
                Ok((np * d - n * dp) / (d * d))
            }
            Self::Stratified { gamma } => Ok(2.0 * gamma * (1.0 - x)),
            Self::None => Ok(0.0),
        }
    }

    /// The grouped product `x f'(x)`, which stays finite down to x = 0 for
    /// every admissible law and is what the linearised coefficients need.
    pub fn x_times_deriv(&self, x: f64) -> Result<f64> {
        let x = clamp_unit("x", x)?;
        match *self {
            Self::Microvascular { exponent: p } => {
                if x == 0.0 {
                    return Ok(0.0);
                }
                let d = x.powf(p) + (1.0 - x).powf(p);
                let dp = p * (x.powf(p - 1.0) - (1.0 - x).powf(p - 1.0));
                Ok(((p - 1.0) * x.powf(p - 1.0) * d - x.powf(p) * dp) / (d * d))
            }
            Self::Stratified { gamma } => Ok(2.0 * gamma * x * (1.0 - x)),
            Self::None => Ok(0.0),
        }
    }

    /// Straight-branch fraction `(1 - x f(x)) / (1 - x)` forced by node
    /// conservation. Singular at x = 1 (the straight branch is starved).
    pub fn complement_fraction(&self, x: f64) -> Result<f64> {
        let x = clamp_unit("x", x)?;
        if x == 1.0 {
            return Err(Error::Singular(
                "complement fraction diverges at x = 1 (straight branch starved)".into(),
            ));
        }
        Ok((1.0 - self.fraction(x)? * x) / (1.0 - x))
    }
}

/// Full dimensionless problem description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    pub geometry: NetworkGeometry,
    pub inlets: InletConditions,
    pub viscosity: ViscosityLaw,
    pub separation: SeparationLaw,
}

impl NetworkConfig {
    pub fn new(
        geometry: NetworkGeometry,
        inlets: InletConditions,
        viscosity: ViscosityLaw,
        separation: SeparationLaw,
    ) -> Self {
        Self {
            geometry,
            inlets,
            viscosity,
            separation,
        }
    }

    /// The exchanged problem: `q_c <-> -q_c`, inlet 1 <-> inlet 2,
    /// vessel A <-> vessel B. Analysing a state with `q_c < 0` reduces to
    /// analysing the swapped state with `q_c > 0`. Applying the swap twice
    /// returns the original configuration bit-exactly.
    pub fn swapped(&self) -> Self {
        Self {
            geometry: self.geometry.swapped(),
            inlets: self.inlets.swapped(),
            viscosity: self.viscosity,
            separation: self.separation,
        }
    }

    pub fn with_q1(&self, q1: f64) -> Result<Self> {
        Ok(Self {
            inlets: InletConditions::new(q1, self.inlets.phi1, self.inlets.phi2)?,
            ..*self
        })
    }

    pub fn with_contrast(&self, contrast: f64) -> Result<Self> {
        Ok(Self {
            viscosity: ViscosityLaw::arrhenius(contrast)?,
            ..*self
        })
    }

    pub fn contrast(&self) -> f64 {
        self.viscosity.contrast()
    }

    /// Parse a JSON configuration document.
    ///
    /// Geometry accepts either raw vessel shapes
    /// `{"dA":..,"dB":..,"dC":..,"lA":..,"lB":..,"lC":..}` or the four
    /// dimensionless ratios
    /// `{"rA_over_rC":..,"rB_over_rC":..,"vA_over_vC":..,"vB_over_vC":..}`.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: RawConfig =
            serde_json::from_str(s).map_err(|e| Error::Config(format!("parse error: {e}")))?;
        raw.build()
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&s)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    geometry: RawGeometry,
    inlets: RawInlets,
    viscosity: RawViscosity,
    separation: RawSeparation,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawGeometry {
    Vessels {
        #[serde(rename = "dA")]
        d_a: f64,
        #[serde(rename = "dB")]
        d_b: f64,
        #[serde(rename = "dC")]
        d_c: f64,
        #[serde(rename = "lA")]
        l_a: f64,
        #[serde(rename = "lB")]
        l_b: f64,
        #[serde(rename = "lC")]
        l_c: f64,
    },
    Ratios {
        #[serde(rename = "rA_over_rC")]
        ra_rc: f64,
        #[serde(rename = "rB_over_rC")]
        rb_rc: f64,
        #[serde(rename = "vA_over_vC")]
        va_vc: f64,
        #[serde(rename = "vB_over_vC")]
        vb_vc: f64,
    },
}

#[derive(Deserialize)]
struct RawInlets {
    q1: f64,
    phi1: f64,
    phi2: f64,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum RawViscosity {
    Arrhenius { contrast: f64 },
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum RawSeparation {
    Microvascular { p: f64 },
    Stratified { gamma: f64 },
    None {},
}

impl RawConfig {
    fn build(self) -> Result<NetworkConfig> {
        let geometry = match self.geometry {
            RawGeometry::Vessels {
                d_a,
                d_b,
                d_c,
                l_a,
                l_b,
                l_c,
            } => NetworkGeometry::from_vessels(
                VesselGeometry::new(d_a, l_a)?,
                VesselGeometry::new(d_b, l_b)?,
                VesselGeometry::new(d_c, l_c)?,
            )?,
            RawGeometry::Ratios {
                ra_rc,
                rb_rc,
                va_vc,
                vb_vc,
            } => NetworkGeometry::from_ratios(ra_rc, rb_rc, va_vc, vb_vc)?,
        };
        let inlets = InletConditions::new(self.inlets.q1, self.inlets.phi1, self.inlets.phi2)?;
        let viscosity = match self.viscosity {
            RawViscosity::Arrhenius { contrast } => ViscosityLaw::arrhenius(contrast)?,
        };
        let separation = match self.separation {
            RawSeparation::Microvascular { p } => SeparationLaw::microvascular(p)?,
            RawSeparation::Stratified { gamma } => SeparationLaw::stratified(gamma)?,
            RawSeparation::None {} => SeparationLaw::None,
        };
        Ok(NetworkConfig::new(geometry, inlets, viscosity, separation))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn example1_geometry() -> NetworkGeometry {
        NetworkGeometry::from_vessels(
            VesselGeometry::new(1.0, 1.0).unwrap(),
            VesselGeometry::new(1.0, 1.0).unwrap(),
            VesselGeometry::new(2.5, 0.75).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn example1_resistance_ratio() {
        let g = example1_geometry();
        let expected = 4.0 * 2.5f64.powi(4) / 3.0;
        assert!((g.res_ratio_a_c() - expected).abs() < 1e-12);
        assert_abs_diff_eq!(g.vol_ratio_a_c(), 0.2133, epsilon = 5e-5);
        assert_eq!(g.res_ratio_a_b(), 1.0);
    }

    #[test]
    fn example2_ratios() {
        let g = NetworkGeometry::from_vessels(
            VesselGeometry::new(1.0, 1.0).unwrap(),
            VesselGeometry::new(0.5, 1.0).unwrap(),
            VesselGeometry::new(2.5, 0.75).unwrap(),
        )
        .unwrap();
        assert_abs_diff_eq!(g.res_ratio_a_b(), 1.0 / 16.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.vol_ratio_a_b(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn rel_viscosity_endpoints() {
        let law = ViscosityLaw::arrhenius(50.0).unwrap();
        assert_eq!(law.rel_viscosity(0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(law.rel_viscosity(1.0).unwrap(), 50.0, epsilon = 1e-12);
        let law4 = ViscosityLaw::arrhenius(4.0).unwrap();
        assert_abs_diff_eq!(law4.rel_viscosity(0.5).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rel_viscosity_domain() {
        let law = ViscosityLaw::arrhenius(50.0).unwrap();
        // inside the clamp band
        assert_eq!(law.rel_viscosity(-0.5e-12).unwrap(), 1.0);
        assert!(law.rel_viscosity(-1e-9).is_err());
        assert!(law.rel_viscosity(1.0 + 1e-9).is_err());
    }

    #[test]
    fn dln_mu_is_log_contrast() {
        let law = ViscosityLaw::arrhenius(std::f64::consts::E).unwrap();
        assert_abs_diff_eq!(law.dln_mu_dphi(0.3).unwrap(), 1.0, epsilon = 1e-15);
        let law50 = ViscosityLaw::arrhenius(50.0).unwrap();
        assert_abs_diff_eq!(law50.dln_mu_dphi(0.3).unwrap(), 50f64.ln(), epsilon = 1e-15);
        let law1 = ViscosityLaw::arrhenius(1.0).unwrap();
        assert_eq!(law1.dln_mu_dphi(0.7).unwrap(), 0.0);
    }

    #[test]
    fn separation_values() {
        let micro = SeparationLaw::microvascular(2.0).unwrap();
        assert_eq!(micro.fraction(1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(micro.fraction(0.5).unwrap(), 1.0, epsilon = 1e-15);
        let strat = SeparationLaw::stratified(1.0).unwrap();
        assert_abs_diff_eq!(strat.fraction(0.5).unwrap(), 0.75, epsilon = 1e-15);
        assert_eq!(SeparationLaw::None.fraction(0.3).unwrap(), 1.0);
    }

    #[test]
    fn separation_derivatives() {
        let strat = SeparationLaw::stratified(1.0).unwrap();
        assert_abs_diff_eq!(strat.fraction_deriv(0.5).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(strat.fraction_deriv(1.0).unwrap(), 0.0);
        let micro = SeparationLaw::microvascular(2.0).unwrap();
        // frozen from the central-difference oracle below
        assert_abs_diff_eq!(micro.fraction_deriv(0.5).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn fraction_deriv_matches_finite_difference() {
        let laws = [
            SeparationLaw::microvascular(2.0).unwrap(),
            SeparationLaw::microvascular(3.5).unwrap(),
            SeparationLaw::stratified(1.0).unwrap(),
            SeparationLaw::stratified(0.4).unwrap(),
        ];
        let h = 1e-6;
        for law in laws {
            for i in 1..100 {
                let x = i as f64 / 100.0;
                let fd = (law.fraction(x + h).unwrap() - law.fraction(x - h).unwrap()) / (2.0 * h);
                let an = law.fraction_deriv(x).unwrap();
                assert!(
                    (fd - an).abs() < 1e-6,
                    "law {law:?} x={x}: fd={fd} analytic={an}"
                );
            }
        }
    }

    #[test]
    fn micro_deriv_singular_below_p2() {
        let law = SeparationLaw::microvascular(1.5).unwrap();
        assert!(matches!(law.fraction_deriv(0.0), Err(Error::Singular(_))));
        // the grouped product stays finite
        assert_eq!(law.x_times_deriv(0.0).unwrap(), 0.0);
    }

    #[test]
    fn complement_fraction_values() {
        let strat = SeparationLaw::stratified(1.0).unwrap();
        assert_abs_diff_eq!(
            strat.complement_fraction(0.5).unwrap(),
            1.25,
            epsilon = 1e-15
        );
        let micro = SeparationLaw::microvascular(2.0).unwrap();
        assert_abs_diff_eq!(
            micro.complement_fraction(0.5).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_eq!(micro.complement_fraction(0.0).unwrap(), 1.0);
        assert!(micro.complement_fraction(1.0).is_err());
    }

    #[test]
    fn x_times_deriv_matches_product() {
        let laws = [
            SeparationLaw::microvascular(2.0).unwrap(),
            SeparationLaw::microvascular(4.0).unwrap(),
            SeparationLaw::stratified(0.8).unwrap(),
        ];
        for law in laws {
            for i in 1..50 {
                let x = i as f64 / 50.0 * 0.98;
                let grouped = law.x_times_deriv(x).unwrap();
                let direct = x * law.fraction_deriv(x).unwrap();
                assert!((grouped - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn swap_is_involution_and_fixed_point() {
        let cfg = NetworkConfig::new(
            example1_geometry(),
            InletConditions::new(0.37, 0.82, 0.61).unwrap(),
            ViscosityLaw::arrhenius(31.0).unwrap(),
            SeparationLaw::microvascular(2.0).unwrap(),
        );
        assert_eq!(cfg.swapped().swapped(), cfg);

        // symmetric geometry, equal inlets, q1 = 0.5 maps to itself
        let sym = NetworkConfig::new(
            example1_geometry(),
            InletConditions::new(0.5, 0.82, 0.82).unwrap(),
            ViscosityLaw::arrhenius(10.0).unwrap(),
            SeparationLaw::microvascular(2.0).unwrap(),
        );
        assert_eq!(sym.swapped(), sym);
    }

    #[test]
    fn swap_inverts_resistance_ratio() {
        let g = NetworkGeometry::from_vessels(
            VesselGeometry::new(1.0, 1.0).unwrap(),
            VesselGeometry::new(0.5, 1.0).unwrap(),
            VesselGeometry::new(2.5, 0.75).unwrap(),
        )
        .unwrap();
        assert_abs_diff_eq!(g.swapped().res_ratio_a_b(), 16.0, epsilon = 1e-12);
    }

    #[test]
    fn q2_complement_bit_exact_under_swap() {
        for q1 in [0.1, 0.3, 0.7312986, 0.9999] {
            let inl = InletConditions::new(q1, 0.5, 0.5).unwrap();
            let twice = inl.swapped().swapped();
            assert_eq!(twice.q1().to_bits(), inl.q1().to_bits());
            assert_eq!(twice.q2().to_bits(), inl.q2().to_bits());
        }
    }

    #[test]
    fn config_json_round_trip() {
        let json = r#"{
            "geometry": {"dA": 1.0, "dB": 1.0, "dC": 2.5, "lA": 1.0, "lB": 1.0, "lC": 0.75},
            "inlets": {"q1": 0.5, "phi1": 0.82, "phi2": 0.82},
            "viscosity": {"type": "arrhenius", "contrast": 50.0},
            "separation": {"type": "microvascular", "p": 2.0}
        }"#;
        let cfg = NetworkConfig::from_json_str(json).unwrap();
        assert_eq!(cfg.contrast(), 50.0);
        assert!((cfg.geometry.res_ratio_a_c() - 4.0 * 2.5f64.powi(4) / 3.0).abs() < 1e-12);

        let ratios = r#"{
            "geometry": {"rA_over_rC": 52.0833333, "rB_over_rC": 52.0833333,
                         "vA_over_vC": 0.2133333, "vB_over_vC": 0.2133333},
            "inlets": {"q1": 0.5, "phi1": 0.82, "phi2": 0.82},
            "viscosity": {"type": "arrhenius", "contrast": 2.0},
            "separation": {"type": "stratified", "gamma": 1.0}
        }"#;
        let cfg2 = NetworkConfig::from_json_str(ratios).unwrap();
        assert!((cfg2.geometry.res_ratio_a_c() - 52.0833333).abs() < 1e-9);

        assert!(NetworkConfig::from_json_str("{\"geometry\": 3}").is_err());
    }
}
