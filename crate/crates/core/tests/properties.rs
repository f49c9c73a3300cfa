use ndarray::Array2;
use neuroaudio::audio::{synth_dataset, AudioBuffer, SynthConfig};
use neuroaudio::coding::{decode_rate, encode_rate, CodecParams, Scheme};
use neuroaudio::dsp::{StftConfig, StftEngine};
use neuroaudio::metrics::si_snr;
use neuroaudio::model::{softmax_rows, MacCounter, Model, ModelConfig, PreparedSample, TrainConfig};
use neuroaudio::neuron::{FixedLif, FixedPointFormat, LifParams};
use neuroaudio::perf::{
    attention_mac_mapping, efficiency, mac_embedding, mac_snn, mac_total, mac_transformer, mac_transformer_terms,
    throughput, PerfConfig,
};
use num_complex::Complex;
use proptest::prelude::*;

fn small_config(spiking_attention: bool, snn_stage: bool, seed: u64) -> ModelConfig {
    ModelConfig {
        embed_dim: 8,
        num_heads: 2,
        num_layers: 1,
        snn_neurons: 8,
        snn_steps: 4,
        spiking_attention,
        snn_stage,
        seed,
        ..ModelConfig::default()
    }
}

fn spectrogram(frames: usize, seed: u64) -> neuroaudio::dsp::Spectrogram<f64> {
    let cfg = StftConfig::default();
    let bins = cfg.num_bins();
    let data = Array2::from_shape_fn((frames, bins), |(t, k)| {
        let h = (seed as usize).wrapping_mul(31).wrapping_add(t * 131 + k * 7) % 97;
        Complex::new(h as f64 / 10.0, (h % 13) as f64 / 10.0 - 0.6)
    });
    neuroaudio::dsp::Spectrogram::new(data, cfg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_are_distributions(
        rows in 1usize..8,
        cols in 1usize..16,
        values in prop::collection::vec(-300.0f64..300.0, 128),
    ) {
        let x = Array2::from_shape_fn((rows, cols), |(i, j)| values[(i * cols + j) % values.len()]);
        let p = softmax_rows(&x).unwrap();
        for r in p.rows() {
            prop_assert!((r.sum() - 1.0).abs() <= 1e-9);
            prop_assert!(r.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn softmax_is_shift_invariant(values in prop::collection::vec(-20.0f64..20.0, 1..12), shift in -100.0f64..100.0) {
        let a = Array2::from_shape_vec((1, values.len()), values.clone()).unwrap();
        let b = a.mapv(|v| v + shift);
        let pa = softmax_rows(&a).unwrap();
        let pb = softmax_rows(&b).unwrap();
        for (x, y) in pa.iter().zip(pb.iter()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn stft_round_trip_holds_in_the_interior(len in 512usize..6000, seed in any::<u64>()) {
        let cfg = StftConfig::default();
        let engine = StftEngine::<f64>::new(cfg).unwrap();
        let x: Vec<f64> = (0..len)
            .map(|i| ((i as u64 ^ seed).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 40) as f64 / (1u64 << 24) as f64 - 0.5)
            .collect();
        let spec = engine.stft(&AudioBuffer::new(x.clone(), cfg.sample_rate_hz).unwrap()).unwrap();
        prop_assert_eq!(spec.num_frames(), 1 + (len - 512) / 128);
        prop_assert_eq!(spec.num_bins(), 257);
        let y = engine.istft_with_len(&spec, len).unwrap();
        prop_assert_eq!(y.len(), len);
        for i in cfg.interior(spec.num_frames()) {
            prop_assert!((y.samples()[i] - x[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn si_snr_is_scale_invariant(
        s in prop::collection::vec(-1.0f64..1.0, 16..64),
        noise in prop::collection::vec(-0.5f64..0.5, 64),
        alpha in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
    ) {
        let e: Vec<f64> = s.iter().zip(&noise).map(|(a, b)| a + b).collect();
        let scaled: Vec<f64> = e.iter().map(|v| alpha * v).collect();
        let (Ok(a), Ok(b)) = (si_snr(&e, &s), si_snr(&scaled, &s)) else {
            return Ok(());
        };
        if let (Some(a), Some(b)) = (a.value.db(), b.value.db()) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn throughput_round_trips(macs in 1e6f64..1e12, latency in 0.01f64..1e4, power in 0.1f64..500.0) {
        let tp = throughput(macs, latency).unwrap();
        prop_assert!(((tp * 1e9 * latency / 1000.0) - macs).abs() <= 1e-9 * macs);
        let eff = efficiency(tp, power).unwrap();
        prop_assert!((eff * power - tp).abs() <= 1e-12 * tp.max(1.0));
    }

    #[test]
    fn mac_terms_add_up(d in 1u64..600, s in 1u64..256, t in 1u64..8, n in 0u64..256, t_sim in 1u64..64) {
        let c = PerfConfig { d, s, t, n, t_sim };
        let (a, b) = mac_transformer_terms(&c);
        prop_assert_eq!(a + b, mac_transformer(&c));
        prop_assert_eq!(mac_total(&c), mac_embedding(&c) + mac_transformer(&c) + mac_snn(&c));
        prop_assert_eq!(mac_embedding(&c), d * s);
        prop_assert_eq!(mac_snn(&c), n * t_sim);
    }

    #[test]
    fn rate_decoding_is_deterministic(xs in prop::collection::vec(0.0f64..1.0, 1..16), seed in any::<u64>()) {
        let mut p = CodecParams::with_scheme(Scheme::Rate, 64);
        p.seed = seed;
        let a: Vec<f64> = decode_rate(&encode_rate(&xs, &p).unwrap(), &p).unwrap();
        let b: Vec<f64> = decode_rate(&encode_rate(&xs, &p).unwrap(), &p).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn fixed_point_membranes_stay_on_the_grid(inputs in prop::collection::vec(-2.0f64..2.0, 1..100)) {
        let p = LifParams { decay: 0.9, threshold: 1.0, reset: 0.0, refractory_steps: 1 };
        let fmt = FixedPointFormat::Q8_8;
        let mut lif = FixedLif::new(1, &p, fmt).unwrap();
        for x in inputs {
            lif.step(&[x]).unwrap();
            let v = lif.membrane()[0];
            prop_assert_eq!((v / fmt.step()).fract(), 0.0);
            prop_assert!(v <= fmt.max_value() && v >= fmt.min_value());
        }
    }
}

proptest! {
    // fixed seed: a 3σ bound fails by design on ~0.3% of draws
    #![proptest_config(ProptestConfig {
        cases: 12,
        rng_seed: proptest::test_runner::RngSeed::Fixed(12),
        ..ProptestConfig::default()
    })]

    #[test]
    fn rate_decoding_is_unbiased_within_three_sigma(x in 0.0f64..1.0, seed in any::<u64>()) {
        let mut p = CodecParams::with_scheme(Scheme::Rate, 4096);
        p.seed = seed;
        let y: Vec<f64> = decode_rate(&encode_rate(&[x], &p).unwrap(), &p).unwrap();
        let sigma = (x * (1.0 - x) / 4096.0).sqrt();
        // 3σ plus one count for the discreteness of the estimate
        prop_assert!((y[0] - x).abs() <= 3.0 * sigma + 1.0 / 4096.0);
    }

    #[test]
    fn forward_is_deterministic_and_shaped(
        frames in 1usize..6,
        seed in 0u64..1000,
        spiking in any::<bool>(),
        snn in any::<bool>(),
    ) {
        let model = Model::<f64>::new(small_config(spiking, snn, seed)).unwrap();
        let spec = spectrogram(frames, seed);
        let a = model.forward_with(&spec, None).unwrap();
        let b = model.forward_with(&spec, None).unwrap();
        prop_assert_eq!(a.mask.dim(), (frames, 257));
        prop_assert!(a.mask.iter().all(|m| (0.0..=1.0).contains(m)));
        prop_assert_eq!(&a.mask, &b.mask);
        prop_assert_eq!(a.spectrogram.frames(), b.spectrogram.frames());
    }

    #[test]
    fn attention_counters_follow_the_mapping(frames in 1usize..6, spiking in any::<bool>(), snn in any::<bool>()) {
        let cfg = small_config(spiking, snn, 3);
        let model = Model::<f64>::new(cfg.clone()).unwrap();
        let counter = MacCounter::new();
        model.forward_with(&spectrogram(frames, 1), Some(&counter)).unwrap();
        let c = counter.snapshot();
        let (proj, scores) = attention_mac_mapping(&cfg, frames);
        prop_assert_eq!(c.attention_projection, proj);
        prop_assert_eq!(c.attention_scores, scores);
        prop_assert_eq!(c.embedding, (frames * 257 * 8) as u64);
        let snn_macs = if snn { (frames * 8 * 4) as u64 } else { 0 };
        prop_assert_eq!(c.snn, snn_macs);
    }
}

#[test]
fn overfitting_one_sample_lowers_the_loss() {
    let data = synth_dataset::<f64>(&SynthConfig {
        count: 1,
        duration_s: 0.5,
        seed: 21,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut model = Model::<f64>::new(small_config(true, true, 21)).unwrap();
    let engine = StftEngine::new(model.config.stft).unwrap();
    let sample = PreparedSample::new(&data[0], &engine).unwrap();
    let before = model.loss(&sample, &engine).unwrap();
    let tc = TrainConfig {
        steps: 10,
        batch_size: 1,
        learning_rate: 0.01,
        ..TrainConfig::default()
    };
    let state = neuroaudio::model::train(&mut model, &data, &tc, |_| {}).unwrap();
    let after = model.loss(&sample, &engine).unwrap();
    assert_eq!(state.step, 10);
    assert!(after < before, "loss {before} → {after}");
}
