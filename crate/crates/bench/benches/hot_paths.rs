//! Benchmarks for the pipeline hot paths: waveform synthesis, the
//! resampler, frame detection, despreading, channel estimation, full
//! beacon decoding, and SVM training.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use wlanfp::dsss_modem::{
    barker_spread, code_phase_search, dbpsk_encode, despread_symbols, extract_chips,
    resample_rational, synthesize_waveform,
};
use wlanfp::phy_frames::{encode_beacon_psdu, BeaconPayload};
use wlanfp::receiver::{beacon_waveform, sync_reference_chips, IqCapture};
use wlanfp::svm::{BinarySvm, Kernel, SvmParams};
use wlanfp::{decode_capture, wiener_estimate, ModemConfig, Waveform};

fn beacon_tx(cfg: &ModemConfig) -> Waveform {
    let payload = BeaconPayload::new("TEST24", "C0-3F-0E-90-EE-13".parse().unwrap());
    let psdu = encode_beacon_psdu(&payload).unwrap();
    beacon_waveform(&psdu, cfg).unwrap()
}

/// Beacon with a 300-sample quiet lead, as produced by the channel.
fn padded_capture(cfg: &ModemConfig) -> Waveform {
    let tx = beacon_tx(cfg);
    let zero = num_complex::Complex64::new(0.0, 0.0);
    let mut samples = vec![zero; 300];
    samples.extend_from_slice(&tx.samples);
    samples.extend(vec![zero; 500]);
    Waveform::new(samples, cfg.sample_rate())
}

fn bench_modem(c: &mut Criterion) {
    let cfg = ModemConfig::default();
    let payload = BeaconPayload::new("TEST24", "C0-3F-0E-90-EE-13".parse().unwrap());
    let psdu = encode_beacon_psdu(&payload).unwrap();
    let ppdu = wlanfp::phy_frames::assemble_ppdu(&psdu).unwrap();
    let chips = barker_spread(&dbpsk_encode(&ppdu.transmit_bits(), 1.0));
    c.bench_function("synthesize_waveform/beacon", |b| {
        b.iter(|| synthesize_waveform(black_box(&chips), &cfg))
    });

    let tx = beacon_tx(&cfg);
    c.bench_function("resample/22_to_25_mhz", |b| {
        b.iter(|| resample_rational(black_box(&tx), 25e6).unwrap())
    });

    let padded = padded_capture(&cfg);
    let detect_ref = sync_reference_chips(16);
    c.bench_function("code_phase_search/beacon", |b| {
        b.iter(|| code_phase_search(black_box(&padded), &cfg, &detect_ref))
    });

    let n_chips = tx.len() / cfg.samples_per_chip;
    c.bench_function("extract_and_despread/beacon", |b| {
        b.iter(|| {
            let chips = extract_chips(black_box(&tx), 0, n_chips, &cfg).unwrap();
            despread_symbols(&chips, &cfg)
        })
    });

    let full_ref = sync_reference_chips(128);
    c.bench_function("wiener_estimate/5_taps", |b| {
        b.iter(|| wiener_estimate(black_box(&tx), &full_ref, 0, &cfg, 5, 1e-6).unwrap())
    });
}

fn bench_decode(c: &mut Criterion) {
    let cfg = ModemConfig::default();
    let cap = IqCapture::from_waveform(padded_capture(&cfg), 2.412e9, 30.0);
    let mut group = c.benchmark_group("decode_capture");
    group.sample_size(20);
    group.bench_function("one_beacon", |b| {
        b.iter(|| decode_capture(black_box(&cap), &cfg).unwrap())
    });
    group.finish();
}

fn bench_svm(c: &mut Criterion) {
    // Two interleaved Gaussian-ish rings, 120 rows x 6 features — the
    // shape of a per-pair problem in the localization sweep.
    let n = 120;
    let dims = 6;
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    for i in 0..n {
        let cls = if i % 2 == 0 { 1.0 } else { -1.0 };
        rows.push((0..dims).map(|_| next() + 0.4 * cls).collect::<Vec<f64>>());
        y.push(cls);
    }
    let params = SvmParams { kernel: Kernel::rbf_auto(dims), ..SvmParams::default() };
    let mut group = c.benchmark_group("svm");
    group.sample_size(30);
    group.bench_function("binary_train/120x6", |b| {
        b.iter(|| BinarySvm::train(black_box(&rows), &y, &params).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_modem, bench_decode, bench_svm);
criterion_main!(benches);
