use proptest::prelude::*;
use std::f64::consts::TAU as TWO_PI;

use sivsaw::dynamics::{rotating_frame, Frame};
use sivsaw::dynamics::{evolve, ket_bra, rabi_analytic, EvolveOptions, MasterEquation};
use sivsaw::{DensityMatrix, DriveTerm, Envelope, Operator, C64};

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn qubit_h0(freq: f64) -> Operator {
    let mut h = Operator::zeros(2, 2);
    h[(0, 0)] = c(-0.5 * TWO_PI * freq);
    h[(1, 1)] = c(0.5 * TWO_PI * freq);
    h
}

fn sigma_x() -> Operator {
    ket_bra(2, 0, 1) + ket_bra(2, 1, 0)
}

/// Random full-rank state from a Ginibre matrix.
fn random_state(entries: &[(f64, f64)], n: usize) -> DensityMatrix {
    let g = Operator::from_fn(n, n, |i, j| {
        let (re, im) = entries[i * n + j];
        C64::new(re, im)
    });
    let m = &g * g.adjoint();
    let tr = m.trace();
    DensityMatrix::new(m / tr).unwrap()
}

fn random_hermitian(entries: &[(f64, f64)], n: usize, scale: f64) -> Operator {
    let g = Operator::from_fn(n, n, |i, j| {
        let (re, im) = entries[i * n + j];
        C64::new(re, im)
    });
    (&g + g.adjoint()) * c(0.5 * scale)
}

fn entries(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n * n)
}

fn resonant_rabi(omega: f64) -> MasterEquation {
    // Rotating frame at resonance under the RWA: H = (Ω/2)·2π·σx.
    MasterEquation::new(Operator::zeros(2, 2)).with_drive(DriveTerm {
        operator: sigma_x(),
        envelope: Envelope::Constant(0.5 * TWO_PI * omega),
        carrier_freq: 0.0,
        carrier_phase: 0.0,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    // Dephasing-type (Hermitian) jump operators give a unital channel, for
    // which purity can only fall. Non-unital channels such as decay can purify.
    #[test]
    fn purity_never_rises_under_unital_collapse(
        rho in entries(3), l1 in entries(3), l2 in entries(3), h in entries(3)
    ) {
        let rho0 = random_state(&rho, 3);
        let eq = MasterEquation::new(random_hermitian(&h, 3, 1e8))
            .with_collapse(random_hermitian(&l1, 3, 1e4))
            .with_collapse(random_hermitian(&l2, 3, 1e4));
        let samples: Vec<f64> = (1..=40).map(|i| i as f64 * 5e-9).collect();
        let res = evolve(&rho0, &eq, (0.0, 200e-9), &samples, &EvolveOptions::with_tol(1e-10)).unwrap();
        let mut last = rho0.purity();
        for s in &res.states {
            let p = s.purity();
            prop_assert!(p <= last + 1e-9, "purity rose from {last} to {p}");
            last = p;
        }
    }

    #[test]
    fn states_stay_physical_under_drive_and_decay(
        rho in entries(3), h in entries(3), omega in 1e6..100e6f64, gamma in 1e6..1e9f64
    ) {
        let rho0 = random_state(&rho, 3);
        let eq = MasterEquation::new(random_hermitian(&h, 3, 1e8))
            .with_drive(DriveTerm {
                operator: ket_bra(3, 0, 1) + ket_bra(3, 1, 0),
                envelope: Envelope::Rect { start: 10e-9, end: 60e-9, amplitude: TWO_PI * omega },
                carrier_freq: 0.0,
                carrier_phase: 0.0,
            })
            .with_collapse(ket_bra(3, 0, 2) * c(gamma.sqrt()));
        let samples: Vec<f64> = (1..=20).map(|i| i as f64 * 5e-9).collect();
        let opts = EvolveOptions { check_invariants: true, ..EvolveOptions::with_tol(1e-10) };
        let res = evolve(&rho0, &eq, (0.0, 100e-9), &samples, &opts).unwrap();
        for s in &res.states {
            prop_assert!(s.check_invariants().is_ok());
        }
    }

    #[test]
    fn evolution_is_bitwise_deterministic(rho in entries(2), omega in 1e6..100e6f64) {
        let rho0 = random_state(&rho, 2);
        let eq = resonant_rabi(omega).with_collapse(ket_bra(2, 0, 0) * c(1e4));
        let samples = [10e-9, 37e-9, 50e-9];
        let a = evolve(&rho0, &eq, (0.0, 50e-9), &samples, &EvolveOptions::default()).unwrap();
        let b = evolve(&rho0, &eq, (0.0, 50e-9), &samples, &EvolveOptions::default()).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            prop_assert!(x.matrix() == y.matrix());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn lab_and_rotating_frames_agree(detuning in -30e6..30e6f64, phase in 0.0..6.28f64, omega in 10e6..60e6f64) {
        let fq = 3.43e9;
        let drive = DriveTerm {
            operator: sigma_x(),
            envelope: Envelope::Rect { start: 2e-9, end: 17e-9, amplitude: TWO_PI * omega },
            carrier_freq: fq + detuning,
            carrier_phase: phase,
        };
        let rho0 = DensityMatrix::from_populations(&[1.0, 0.0]).unwrap();
        let samples: Vec<f64> = (1..=20).map(|i| i as f64 * 1e-9).collect();
        let opts = EvolveOptions::with_tol(1e-12);

        let lab = MasterEquation::new(qubit_h0(fq)).with_drive(drive.clone());
        let lab_res = evolve(&rho0, &lab, (0.0, 20e-9), &samples, &opts).unwrap();

        let frame = Frame::new(fq, vec![-0.5, 0.5]).unwrap();
        let (h, drives) = rotating_frame(&qubit_h0(fq), &drive, &frame, false).unwrap();
        let mut rot = MasterEquation::new(h);
        rot.drives = drives;
        let rot_res = evolve(&rho0, &rot, (0.0, 20e-9), &samples, &opts).unwrap();

        for (a, b) in lab_res.states.iter().zip(&rot_res.states) {
            prop_assert!((a.population(1) - b.population(1)).abs() < 1e-8);
        }
    }
}

#[test]
fn halving_tolerance_converges_on_resonant_rabi() {
    let omega = 48e6;
    let eq = resonant_rabi(omega);
    let rho0 = DensityMatrix::from_populations(&[1.0, 0.0]).unwrap();
    let t = 100e-9;
    let exact = rabi_analytic(omega, 0.0, t);
    for tol in [1e-6, 1e-8, 1e-10] {
        let a = evolve(&rho0, &eq, (0.0, t), &[], &EvolveOptions::with_tol(tol)).unwrap();
        let b = evolve(&rho0, &eq, (0.0, t), &[], &EvolveOptions::with_tol(0.5 * tol)).unwrap();
        let (pa, pb) = (a.final_state().unwrap().population(1), b.final_state().unwrap().population(1));
        assert!((pa - pb).abs() < tol, "tol {tol}: {pa} vs {pb}");
        assert!((pb - exact).abs() < 100.0 * tol, "tol {tol}: {pb} vs {exact}");
    }
}
