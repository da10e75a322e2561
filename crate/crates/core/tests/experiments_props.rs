use proptest::prelude::*;
use sivsaw::dynamics::rabi_analytic;
use sivsaw::experiments::{
    measure, odar_sequence, run_histogram, run_odar, run_rabi, run_ramsey, sample_shot_noise, DEFAULT_QUBIT_FREQ,
};
use sivsaw::saw_device::power_to_rabi;
use sivsaw::sequence::EnvelopeMode;
use sivsaw::siv_model::{default_field_angle, field_direction, Decoherence};
use sivsaw::{ExperimentContext, SivModelParams};

fn context_at(qubit_freq: f64) -> ExperimentContext {
    let model = SivModelParams::default()
        .tuned(qubit_freq, &field_direction(default_field_angle()))
        .unwrap();
    ExperimentContext {
        model,
        ..Default::default()
    }
}

fn grid(a: f64, step: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + step * i as f64).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn populations_are_finite_and_non_negative(freq in 3.2e9..3.6e9f64, power in 0.0..8e-3f64, duration in 1e-9..60e-9f64) {
        let ctx = ExperimentContext { workers: 1, ..Default::default() };
        let scan = run_odar(&[freq], duration, power, &ctx).unwrap();
        prop_assert!(scan.population.iter().all(|p| p.is_finite() && *p >= 0.0));
    }
}

#[test]
fn odar_peak_follows_the_qubit_frequency() {
    let step = 5e6;
    let base = ExperimentContext::default();
    let target = power_to_rabi(2e-3, DEFAULT_QUBIT_FREQ, &base.device, &base.calibration).unwrap();
    for qubit in [3.35e9, 3.40e9, 3.43e9] {
        let ctx = context_at(qubit);
        // Same pulse area as the default operating point; nearer the
        // transducer center 2 mW would rotate past π and dip on resonance.
        let unit = power_to_rabi(1.0, qubit, &ctx.device, &ctx.calibration).unwrap();
        let power = (target / unit).powi(2);
        let freqs = grid(qubit - 60e6, step, 25);
        let scan = run_odar(&freqs, 20e-9, power, &ctx).unwrap();
        let (k, _) = scan
            .population
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert!((freqs[k] - qubit).abs() <= step, "qubit {qubit:e}: peak at {:e}", freqs[k]);
    }
}

#[test]
fn rabi_scan_matches_analytic_transfer() {
    let mut ctx = ExperimentContext::default();
    ctx.timings.init = 1e-6;
    ctx.compile.decoherence = Decoherence::default();
    ctx.compile.envelope = EnvelopeMode::Rect;
    ctx.tol = 1e-10;
    let power = 4e-3;
    let omega = power_to_rabi(power, DEFAULT_QUBIT_FREQ, &ctx.device, &ctx.calibration).unwrap();
    let durations = grid(0.0, 1e-9, 41);
    let scan = run_rabi(&durations, power, DEFAULT_QUBIT_FREQ, &ctx).unwrap();
    // The init window sees the thermal ↓ population of ½; the readout window
    // sees what the pulse transferred out of ↑.
    for (t, p) in durations.iter().zip(&scan.population) {
        let expected = 2.0 * rabi_analytic(omega, 0.0, *t);
        assert!((p - expected).abs() < 1e-4, "t = {t:e}: {p} vs {expected}");
    }
}

#[test]
fn ramsey_fringe_sits_at_the_detuning() {
    let ctx = ExperimentContext::default();
    let n = 121;
    let delays = grid(0.0, 1e-9, n);
    let df = 1.0 / (n as f64 * 1e-9);
    for detuning in [20e6, 50e6, 80e6] {
        let scan = run_ramsey(&delays, detuning, 4e-3, &ctx).unwrap();
        let mean = scan.population.iter().sum::<f64>() / n as f64;
        let power = |k: usize| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, y) in scan.population.iter().enumerate() {
                let phase = std::f64::consts::TAU * (k * j) as f64 / n as f64;
                re += (y - mean) * phase.cos();
                im -= (y - mean) * phase.sin();
            }
            re * re + im * im
        };
        let k = (1..n / 2).max_by(|&a, &b| power(a).total_cmp(&power(b))).unwrap();
        let f = k as f64 * df;
        assert!((f - detuning).abs() <= df, "detuning {detuning:e}: DFT peak at {f:e}");
    }
}

#[test]
fn shot_noise_is_reproducible_and_unbiased() {
    let mut ctx = ExperimentContext::default();
    let seq = odar_sequence(&ctx, DEFAULT_QUBIT_FREQ, 20e-9, 2e-3).unwrap();
    let expected = run_histogram(&seq, &ctx).unwrap();

    ctx.shot_noise.enabled = true;
    ctx.seed = 11;
    let (pa, a) = measure(&seq, &ctx, 3).unwrap();
    let (pb, b) = measure(&seq, &ctx, 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(pa.to_bits(), pb.to_bits());

    let reps = ctx.shot_noise.repetitions;
    let runs = 10_000;
    let mut sums = vec![0.0; expected.bins.len()];
    for stream in 0..runs {
        let h = sample_shot_noise(&expected, reps, ctx.seed, stream).unwrap();
        for (s, v) in sums.iter_mut().zip(&h.bins) {
            *s += v;
        }
    }
    let scale = expected.bin_width * reps;
    // Window totals over 10 bins and the whole record.
    for (a, b) in [(0, 10), (270, 280), (0, expected.bins.len())] {
        let mean_counts: f64 = (a..b).map(|k| scale * expected.bins[k]).sum();
        let observed = sums[a..b].iter().sum::<f64>() / runs as f64;
        let sigma = (mean_counts / runs as f64).sqrt();
        assert!((observed - mean_counts).abs() <= 3.0 * sigma, "[{a}, {b}): {observed} vs {mean_counts} ± {sigma}");
    }
}
