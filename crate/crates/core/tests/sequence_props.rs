use proptest::prelude::*;
use sivsaw::saw_device::{power_to_rabi, propagation_delay};
use sivsaw::sequence::{compile, correct_timing, CompileOptions, EnvelopeMode};
use sivsaw::{ExperimentContext, Pulse, PulseKind, PulseSequence};

const KINDS: [PulseKind; 3] = [PulseKind::OpticalC1, PulseKind::OpticalC3, PulseKind::Acoustic];

/// Back-to-back pulses separated by gaps (possibly zero), plus a trailing gap.
fn sequence() -> impl Strategy<Value = PulseSequence> {
    prop::collection::vec((0usize..3, 0.0..80e-9f64, 1e-9..150e-9f64, 3.3e9..3.5e9f64, 0.0..4e-3f64), 1..7)
        .prop_flat_map(|items| (Just(items), 0.0..50e-9f64))
        .prop_map(|(items, tail)| {
            let mut t = 0.0;
            let mut pulses = Vec::new();
            for (k, gap, duration, freq, power) in items {
                t += gap;
                pulses.push(match KINDS[k] {
                    PulseKind::Acoustic => Pulse::acoustic(t, duration, freq, power, 0.0),
                    kind => Pulse::optical(kind, t, duration, 3.7e7),
                });
                t += duration;
            }
            PulseSequence::new(pulses, t + tail).unwrap()
        })
}

fn opts(envelope: EnvelopeMode) -> CompileOptions {
    CompileOptions {
        envelope,
        require_timing_correction: false,
        ..CompileOptions::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn segments_tile_the_sequence(seq in sequence()) {
        let ctx = ExperimentContext::default();
        let s = compile(&seq, &ctx.model, &ctx.device, &ctx.calibration, &opts(EnvelopeMode::Shaped)).unwrap();
        prop_assert_eq!(s.segments[0].start, 0.0);
        prop_assert_eq!(s.segments.last().unwrap().end, seq.total_duration());
        for w in s.segments.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
            prop_assert!(w[0].duration() > 0.0);
        }
        let total: f64 = s.segments.iter().map(|g| g.duration()).sum();
        prop_assert!((total - seq.total_duration()).abs() <= 1e-15 * seq.total_duration());
    }

    #[test]
    fn timing_correction_keeps_durations_and_order(seq in sequence()) {
        let ctx = ExperimentContext::default();
        let delay = propagation_delay(300e-6, &ctx.device).unwrap();
        let fixed = match correct_timing(&seq, 300e-6, &ctx.device) {
            Ok(f) => f,
            // Shifting can push an acoustic pulse onto a later optical one.
            Err(sivsaw::Error::UnflaggedOverlap { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let acoustic = |s: &PulseSequence| -> Vec<Pulse> {
            s.pulses().iter().filter(|p| p.kind == PulseKind::Acoustic).cloned().collect()
        };
        let (before, after) = (acoustic(&seq), acoustic(&fixed));
        prop_assert_eq!(before.len(), after.len());
        for (a, b) in before.iter().zip(&after) {
            prop_assert_eq!(a.duration, b.duration);
            prop_assert_eq!(a.freq, b.freq);
            prop_assert!((b.start - a.start - delay).abs() < 1e-21);
        }
        prop_assert!(fixed.delay_corrected());
    }

    #[test]
    fn mirrored_sequence_has_mirrored_boundaries(seq in sequence()) {
        let ctx = ExperimentContext::default();
        let o = opts(EnvelopeMode::Rect);
        let a = compile(&seq, &ctx.model, &ctx.device, &ctx.calibration, &o).unwrap();
        let b = compile(&seq.mirrored(), &ctx.model, &ctx.device, &ctx.calibration, &o).unwrap();
        let t = seq.total_duration();
        let edges = |s: &sivsaw::CompiledSchedule| -> Vec<f64> {
            s.segments.iter().map(|g| g.start).chain([s.total_duration]).collect()
        };
        let (ea, mut eb) = (edges(&a), edges(&b));
        eb.reverse();
        prop_assert_eq!(ea.len(), eb.len());
        for (x, y) in ea.iter().zip(&eb) {
            prop_assert!((x - (t - y)).abs() <= 1e-15 * t, "{x} vs {}", t - y);
        }
        let labels_a: Vec<&str> = a.segments.iter().map(|g| g.label.as_str()).collect();
        let mut labels_b: Vec<&str> = b.segments.iter().map(|g| g.label.as_str()).collect();
        labels_b.reverse();
        prop_assert_eq!(labels_a, labels_b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn drive_peak_is_the_calibrated_rabi_frequency(power in 1e-5..1e-2f64, freq in 3.35e9..3.5e9f64, duration in 2e-9..100e-9f64) {
        let ctx = ExperimentContext::default();
        let seq = PulseSequence::new(vec![Pulse::acoustic(10e-9, duration, freq, power, 0.0)], 200e-9).unwrap();
        for mode in [EnvelopeMode::Rect, EnvelopeMode::Shaped] {
            let s = compile(&seq, &ctx.model, &ctx.device, &ctx.calibration, &opts(mode)).unwrap();
            let rabi = power_to_rabi(power, s.qubit_freq, &ctx.device, &ctx.calibration).unwrap();
            let expected = std::f64::consts::TAU * rabi;
            // A shaped pulse shorter than the impulse response never reaches full amplitude.
            let reach = match mode {
                EnvelopeMode::Rect => 1.0,
                EnvelopeMode::Shaped => (duration / ctx.device.impulse_duration()).min(1.0),
            };
            let peak = s.lab_drives[0].envelope.peak();
            prop_assert!((peak - expected * reach).abs() <= 1e-12 * expected, "{mode:?}: {peak} vs {}", expected * reach);
        }
    }
}
