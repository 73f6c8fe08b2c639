//! Simulation/linear-analysis cross-checks: the fitted envelope growth
//! rate and small-amplitude frequency of a perturbed run must match the
//! dominant characteristic root, and nodal constituent conservation must
//! hold at every step.

use trinet_core::equilibrium::solve_equilibria;
use trinet_core::network::{
    InletConditions, NetworkConfig, NetworkGeometry, SeparationLaw, VesselGeometry, ViscosityLaw,
};
use trinet_core::sim::{analyze_cycle, cfl_dt, init, run, step, SimConfig};
use trinet_core::stability::{char_coefficients, find_eigenvalues, Window, ROOT_TOL};

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

#[test]
fn growth_and_frequency_match_dominant_root() {
    // three Hopf-unstable configurations with a clearly dominant mode
    let cases: Vec<(NetworkConfig, usize)> = vec![
        (example1(50.0, 0.5), 0),  // the reference limit-cycle state
        (example1(35.0, 0.33), 0), // inside the first high-frequency band
        (example2(20.0, 0.955), 1),
    ];
    for (cfg, pick) in cases {
        let states = solve_equilibria(&cfg).unwrap();
        let seed = states[pick.min(states.len() - 1)];
        let co = char_coefficients(&cfg, &seed).unwrap();
        let scan = find_eigenvalues(
            &co,
            &Window {
                sigma_min: -0.5,
                sigma_max: 0.5,
                omega_min: 0.0,
                omega_max: 30.0,
            },
            200,
            240,
            ROOT_TOL,
        );
        let dom = *scan.dominant().expect("dominant root");
        assert!(dom.sigma > 0.0, "config not Hopf-unstable: {dom:?}");

        // long enough for several e-foldings of the envelope
        let t_end = (60.0 / dom.sigma).clamp(80.0, 2000.0);
        let sim = SimConfig {
            cells_per_vessel: 512,
            t_end,
            transient_skip: 0.75 * t_end,
            perturbation: 1e-5,
            ..Default::default()
        };
        let out = run(&cfg, &seed, &sim).unwrap();
        let stats = analyze_cycle(&out.times, &out.q_c, sim.transient_skip);
        let growth = stats.growth_rate.expect("growth fit");
        let omega = stats.small_amplitude_omega.expect("frequency fit");
        let g_err = (growth - dom.sigma).abs() / dom.sigma;
        let w_err = (omega - dom.omega).abs() / dom.omega;
        assert!(
            g_err < 0.02,
            "growth {growth:.5} vs sigma {:.5} ({:.1}% off) at q1 = {}, contrast = {}",
            dom.sigma,
            g_err * 100.0,
            cfg.inlets.q1(),
            cfg.contrast()
        );
        assert!(
            w_err < 0.01,
            "frequency {omega:.4} vs omega {:.4} ({:.2}% off) at q1 = {}, contrast = {}",
            dom.omega,
            w_err * 100.0,
            cfg.inlets.q1(),
            cfg.contrast()
        );
    }
}

#[test]
fn node_conservation_each_step() {
    // with q_c > 0 throughout, the freshly injected boundary values must
    // satisfy constituent conservation at both nodes to round-off
    let cfg = example2(20.0, 0.955);
    let states = solve_equilibria(&cfg).unwrap();
    let seed = *states.last().unwrap();
    assert!(seed.q_c > 0.0);
    let sim = SimConfig {
        cells_per_vessel: 64,
        t_end: 5.0,
        transient_skip: 0.0,
        perturbation: 1e-2,
        ..Default::default()
    };
    let mut state = init(&cfg, &seed, &sim).unwrap();
    let (q1, q2) = (cfg.inlets.q1(), cfg.inlets.q2());
    let (phi1, phi2) = (cfg.inlets.phi1(), cfg.inlets.phi2());
    for _ in 0..400 {
        let q_c = state.q_c;
        assert!(q_c > 0.0);
        let q_a = q1 - q_c;
        let q_b = q2 + q_c;
        let tail_before = state.profiles(64).phi_c[64];
        let dt = cfl_dt(&cfg, &state, &sim);
        step(&cfg, &mut state, &sim, dt).unwrap();
        let prof = state.profiles(64);
        let (head_a, head_b, head_c) = (prof.phi_a[0], prof.phi_b[0], prof.phi_c[0]);
        // diverging node: inlet 1 splits into A and C
        assert!((head_a * q_a + head_c * q_c - phi1 * q1).abs() < 1e-12);
        // converging node: inlet 2 plus the C outflow feed B
        assert!((head_b * q_b - phi2 * q2 - tail_before * q_c).abs() < 1e-12);
    }
}
