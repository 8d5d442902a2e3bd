//! End-to-end capture processing: resample, synchronize, estimate the
//! channel, equalize, despread, descramble, parse the beacon, and emit
//! fingerprint samples with RSS.

use std::path::Path;

use num_complex::Complex64;

use crate::bits::u16_to_bits;
use crate::channel_sim::{wiener_estimate, ChannelEstimate};
use crate::dsss_modem::{
    apply_cfo_correction, barker_spread, code_phase_search, dbpsk_encode, despread_symbols,
    diff_decode, estimate_coarse_cfo, extract_chips, resample_rational, ModemConfig, Waveform,
    CHIPS_PER_SYMBOL,
};
use crate::error::{Error, Result};
use crate::linalg::solve_complex;
use crate::phy_frames::{
    decode_beacon_psdu, descramble, parse_plcp, scrambled_sync_bits, MacAddr, PlcpHeader,
    HEADER_BITS, PREAMBLE_BITS, SFD, SYNC_BITS,
};

/// Native capture rate of the simulated front end.
pub const CAPTURE_RATE: f64 = 25e6;
/// Number of SYNC bits used by the detection correlator.
const DETECT_SYNC_BITS: usize = 16;
/// Chip-spaced equalizer length and its decision delay.
const EQ_TAPS: usize = 7;
const EQ_DELAY: usize = 3;

/// Raw IQ capture plus front-end metadata.
#[derive(Debug, Clone)]
pub struct IqCapture {
    pub waveform: Waveform,
    pub center_freq: f64,
    pub capture_seconds: f64,
    pub gain_db: f64,
}

impl IqCapture {
    /// Wrap a waveform, deriving the capture length from its samples.
    pub fn from_waveform(waveform: Waveform, center_freq: f64, gain_db: f64) -> Self {
        let capture_seconds = waveform.len() as f64 / waveform.sample_rate;
        IqCapture { waveform, center_freq, capture_seconds, gain_db }
    }
}

/// One decoded beacon observation: the content of one survey log row.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintSample {
    pub ssid: String,
    pub mac: MacAddr,
    pub rss_db: f64,
    pub taps_re: [f64; 5],
    pub taps_im: [f64; 5],
}

impl FingerprintSample {
    pub fn estimate(&self) -> ChannelEstimate {
        let mut taps = [Complex64::new(0.0, 0.0); 5];
        for k in 0..5 {
            taps[k] = Complex64::new(self.taps_re[k], self.taps_im[k]);
        }
        ChannelEstimate { taps }
    }
}

/// Known scrambled-SYNC chip sequence for the first `n_bits` SYNC bits;
/// the data-independent reference used for detection, CFO estimation,
/// and channel estimation.
pub fn sync_reference_chips(n_bits: usize) -> Vec<f64> {
    assert!(n_bits <= SYNC_BITS);
    let bits = scrambled_sync_bits();
    barker_spread(&dbpsk_encode(&bits[..n_bits], 1.0))
}

/// Mean received power over a frame window, in dB.
pub fn compute_rss(wf: &Waveform, frame_start: usize, total_len_samples: usize) -> Result<f64> {
    if total_len_samples == 0 {
        return Err(Error::Empty("RSS window".into()));
    }
    let end = frame_start + total_len_samples;
    if end > wf.len() {
        return Err(Error::InsufficientSamples { need: end, have: wf.len() });
    }
    let power = wf.samples[frame_start..end].iter().map(|s| s.norm_sqr()).sum::<f64>()
        / total_len_samples as f64;
    Ok(10.0 * power.log10())
}

/// Total frame length in samples: (preamble + header + MPDU) bits at
/// 1 Mbps, 11 chips per bit.
pub fn frame_window(header: &PlcpHeader, cfg: &ModemConfig) -> usize {
    (PREAMBLE_BITS + HEADER_BITS + header.length_bits as usize)
        * CHIPS_PER_SYMBOL
        * cfg.samples_per_chip
}

/// Per-tap magnitudes of a channel estimate, order preserved.
pub fn tap_magnitudes(est: &ChannelEstimate) -> [f64; 5] {
    est.magnitudes()
}

/// Least-squares inverse of the estimated channel: chip-spaced FIR taps
/// minimizing ||h * e - delta|| with a small ridge term.
fn design_equalizer(est: &ChannelEstimate) -> Result<Vec<Complex64>> {
    let h: Vec<Complex64> = est.taps.to_vec();
    let h_power: f64 = h.iter().map(|t| t.norm_sqr()).sum();
    if h_power <= 0.0 {
        return Err(Error::Singular);
    }
    let rows = h.len() + EQ_TAPS - 1;
    let conv = |m: usize, k: usize| -> Complex64 {
        if m >= k && m - k < h.len() { h[m - k] } else { Complex64::new(0.0, 0.0) }
    };
    let ridge = 1e-3 * h_power;
    let mut a = vec![vec![Complex64::new(0.0, 0.0); EQ_TAPS]; EQ_TAPS];
    let mut b = vec![Complex64::new(0.0, 0.0); EQ_TAPS];
    for j in 0..EQ_TAPS {
        for k in 0..EQ_TAPS {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..rows {
                acc += conv(m, j).conj() * conv(m, k);
            }
            a[j][k] = acc;
        }
        a[j][j] += ridge;
        b[j] = conv(EQ_DELAY, j).conj();
    }
    solve_complex(&a, &b)
}

/// Filter chip-rate samples with the equalizer, compensating its delay.
fn equalize_chips(chips: &[Complex64], eq: &[Complex64]) -> Vec<Complex64> {
    (0..chips.len())
        .map(|i| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &e) in eq.iter().enumerate() {
                let idx = i as isize + EQ_DELAY as isize - k as isize;
                if idx >= 0 && (idx as usize) < chips.len() {
                    acc += e * chips[idx as usize];
                }
            }
            acc
        })
        .collect()
}

/// Decode every beacon in a capture into fingerprint samples, ordered by
/// frame start time. Frames failing any integrity check are skipped.
pub fn decode_capture(cap: &IqCapture, cfg: &ModemConfig) -> Result<Vec<FingerprintSample>> {
    let working_rate = cfg.sample_rate();
    let wf = if (cap.waveform.sample_rate - working_rate).abs() < 1e-3 {
        cap.waveform.clone()
    } else {
        resample_rational(&cap.waveform, working_rate)?
    };

    let detect_ref = sync_reference_chips(DETECT_SYNC_BITS);
    let full_ref = sync_reference_chips(SYNC_BITS);
    let ssym = cfg.samples_per_symbol();
    let sync_samples = SYNC_BITS * ssym;

    let mut samples_out = Vec::new();
    let mut search_start = 0usize;
    while search_start + sync_samples < wf.len() {
        let view = Waveform::new(wf.samples[search_start..].to_vec(), working_rate);
        let det = code_phase_search(&view, cfg, &detect_ref);
        if !det.found {
            break;
        }
        let frame_start = search_start + det.offset;
        // Default advance when this detection does not yield a frame.
        let mut next_search = frame_start + ssym;

        if let Some(sample) =
            decode_frame(&wf, frame_start, cfg, &full_ref, &mut next_search)
        {
            samples_out.push(sample);
        }
        search_start = next_search;
    }
    Ok(samples_out)
}

/// Attempt to decode one frame at a synchronized offset. On success,
/// `next_search` is advanced past the frame.
fn decode_frame(
    wf: &Waveform,
    frame_start: usize,
    cfg: &ModemConfig,
    full_ref: &[f64],
    next_search: &mut usize,
) -> Option<FingerprintSample> {
    let ssym = cfg.samples_per_symbol();
    let plcp_bits = PREAMBLE_BITS + HEADER_BITS;
    if frame_start + plcp_bits * ssym > wf.len() {
        return None;
    }

    // Frame-local processing: CFO from the SYNC, applied from the frame
    // start onward.
    let frame = Waveform::new(wf.samples[frame_start..].to_vec(), wf.sample_rate);
    let cfo = estimate_coarse_cfo(&frame, cfg, 0..SYNC_BITS * ssym, full_ref).ok()?;
    let frame = apply_cfo_correction(&frame, cfo);

    // Channel estimate, regularized by the noise level of the capture
    // head when one exists.
    let noise_reg = if frame_start >= 64 {
        let head_power = wf.samples[..frame_start.min(1024)]
            .iter()
            .map(|s| s.norm_sqr())
            .sum::<f64>()
            / frame_start.min(1024) as f64;
        (head_power / cfg.samples_per_chip as f64).max(1e-12)
    } else {
        1e-12
    };
    let est = wiener_estimate(&frame, full_ref, 0, cfg, 5, noise_reg).ok()?;
    let eq = design_equalizer(&est).ok()?;

    // Stage 1: preamble + header.
    let hdr_chips = extract_chips(&frame, 0, plcp_bits * CHIPS_PER_SYMBOL, cfg).ok()?;
    let bits = descramble(
        &diff_decode(&despread_symbols(&equalize_chips(&hdr_chips, &eq), cfg), Complex64::new(1.0, 0.0)),
        0,
    );
    // The self-synchronizing descrambler needs 7 bits to settle and the
    // first symbol has no phase reference, so judge the SYNC from bit 8.
    let ones = bits[8..SYNC_BITS].iter().filter(|&&b| b == 1).count();
    if ones * 10 < (SYNC_BITS - 8) * 9 {
        return None;
    }
    if bits[SYNC_BITS..PREAMBLE_BITS] != u16_to_bits(SFD) {
        return None;
    }
    let header = parse_plcp(&bits[PREAMBLE_BITS..plcp_bits]).ok()?;
    if !header.crc_ok {
        return None;
    }

    let total_bits = plcp_bits + header.length_bits as usize;
    let window = frame_window(&header, cfg);
    if frame_start + window > wf.len() {
        return None; // truncated frame
    }

    // Stage 2: the whole frame in one differential/descrambling pass.
    let chips = extract_chips(&frame, 0, total_bits * CHIPS_PER_SYMBOL, cfg).ok()?;
    let bits = descramble(
        &diff_decode(&despread_symbols(&equalize_chips(&chips, &eq), cfg), Complex64::new(1.0, 0.0)),
        0,
    );
    let payload = decode_beacon_psdu(&bits[plcp_bits..]).ok()?;

    let rss_db = compute_rss(wf, frame_start, window).ok()?;
    *next_search = frame_start + window;
    Some(FingerprintSample {
        ssid: payload.ssid,
        mac: payload.mac,
        rss_db,
        taps_re: est.taps.map(|t| t.re),
        taps_im: est.taps.map(|t| t.im),
    })
}

/// Write a capture as interleaved little-endian f32 I/Q plus a sidecar
/// metadata file.
pub fn write_iq_capture(cap: &IqCapture, iq_path: &Path, meta_path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(cap.waveform.len() * 8);
    for s in &cap.waveform.samples {
        bytes.extend_from_slice(&(s.re as f32).to_le_bytes());
        bytes.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    std::fs::write(iq_path, bytes)?;
    let meta = format!(
        "sample_rate = {:?}\ncenter_freq = {:?}\ncapture_seconds = {:?}\ngain_db = {:?}\n",
        cap.waveform.sample_rate, cap.center_freq, cap.capture_seconds, cap.gain_db
    );
    std::fs::write(meta_path, meta)?;
    Ok(())
}

/// Read a capture written by [`write_iq_capture`], validating that the
/// IQ payload length matches the metadata.
pub fn read_iq_capture(iq_path: &Path, meta_path: &Path) -> Result<IqCapture> {
    #[derive(serde::Deserialize)]
    struct Meta {
        sample_rate: f64,
        center_freq: f64,
        capture_seconds: f64,
        gain_db: f64,
    }
    let meta: Meta = toml::from_str(&std::fs::read_to_string(meta_path)?)
        .map_err(|e| Error::Parse(format!("capture metadata: {e}")))?;
    let bytes = std::fs::read(iq_path)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Parse(format!("IQ file length {} not a multiple of 8", bytes.len())));
    }
    let n = bytes.len() / 8;
    let expected = (meta.capture_seconds * meta.sample_rate).round() as usize;
    if n != expected {
        return Err(Error::Parse(format!(
            "IQ file has {n} samples but metadata declares {expected}"
        )));
    }
    let samples = bytes
        .chunks_exact(8)
        .map(|c| {
            Complex64::new(
                f32::from_le_bytes(c[0..4].try_into().unwrap()) as f64,
                f32::from_le_bytes(c[4..8].try_into().unwrap()) as f64,
            )
        })
        .collect();
    Ok(IqCapture {
        waveform: Waveform::new(samples, meta.sample_rate),
        center_freq: meta.center_freq,
        capture_seconds: meta.capture_seconds,
        gain_db: meta.gain_db,
    })
}

/// Build the transmit waveform of a beacon PPDU at the working rate.
pub fn beacon_waveform(psdu_bits: &[u8], cfg: &ModemConfig) -> Result<Waveform> {
    let ppdu = crate::phy_frames::assemble_ppdu(psdu_bits)?;
    let chips = barker_spread(&dbpsk_encode(&ppdu.transmit_bits(), 1.0));
    Ok(crate::dsss_modem::synthesize_waveform(&chips, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_sim::{apply_channel, MultipathChannel};
    use crate::phy_frames::{encode_beacon_psdu, BeaconPayload};

    fn test_payload() -> BeaconPayload {
        BeaconPayload::new("TEST24", "C0-3F-0E-90-EE-13".parse().unwrap())
    }

    fn clean_capture(lead: usize, cfg: &ModemConfig) -> (IqCapture, usize, usize) {
        let psdu = encode_beacon_psdu(&test_payload()).unwrap();
        let tx = beacon_waveform(&psdu, cfg).unwrap();
        let window = tx.len();
        let mut samples = vec![Complex64::new(0.0, 0.0); lead];
        samples.extend_from_slice(&tx.samples);
        samples.extend(vec![Complex64::new(0.0, 0.0); 200]);
        let wf = Waveform::new(samples, cfg.sample_rate());
        (IqCapture::from_waveform(wf, 2.412e9, 30.0), lead, window)
    }

    #[test]
    fn loopback_decodes_one_beacon() {
        let cfg = ModemConfig::default();
        let (cap, lead, window) = clean_capture(300, &cfg);
        let out = decode_capture(&cap, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].ssid, "TEST24");
        assert_eq!(out[0].mac.to_string(), "C0-3F-0E-90-EE-13");
        let rss = compute_rss(&cap.waveform, lead, window).unwrap();
        assert!((out[0].rss_db - rss).abs() < 1e-9);
        // Clean unit-amplitude frame sits at 0 dB.
        assert!(rss.abs() < 1e-9, "rss {rss}");
    }

    #[test]
    fn noise_only_capture_is_empty() {
        use rand::SeedableRng;
        let cfg = ModemConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let samples: Vec<Complex64> =
            (0..20_000).map(|_| crate::channel_sim::complex_gaussian(&mut rng) * 0.1).collect();
        let cap = IqCapture::from_waveform(Waveform::new(samples, cfg.sample_rate()), 2.412e9, 30.0);
        assert!(decode_capture(&cap, &cfg).unwrap().is_empty());
    }

    #[test]
    fn rss_gain_equivariance_through_decode() {
        let cfg = ModemConfig::default();
        let (cap, _, _) = clean_capture(250, &cfg);
        let base = decode_capture(&cap, &cfg).unwrap();
        let g = 0.5;
        let scaled = IqCapture::from_waveform(cap.waveform.scaled(g), cap.center_freq, cap.gain_db);
        let shifted = decode_capture(&scaled, &cfg).unwrap();
        assert_eq!(base.len(), shifted.len());
        let delta = shifted[0].rss_db - base[0].rss_db;
        assert!((delta - 20.0 * g.log10()).abs() < 1e-9, "delta {delta}");
        assert!((delta + 6.0206).abs() < 1e-4);
    }

    #[test]
    fn rss_basic_values() {
        let wf = Waveform::new(vec![Complex64::new(1.0, 0.0); 100], 22e6);
        assert!(compute_rss(&wf, 0, 100).unwrap().abs() < 1e-12);
        let half = wf.scaled(0.5);
        let rss = compute_rss(&half, 0, 100).unwrap();
        assert!((rss + 6.0206).abs() < 1e-3, "rss {rss}");
        assert!(compute_rss(&wf, 0, 0).is_err());
        assert!(compute_rss(&wf, 50, 100).is_err());
    }

    #[test]
    fn frame_window_arithmetic() {
        let cfg = ModemConfig::default();
        let h800 = PlcpHeader::for_length(800);
        assert_eq!(frame_window(&h800, &cfg), 992 * 11 * 2);
        assert_eq!(frame_window(&h800, &cfg), 21824);
        let h0 = PlcpHeader::for_length(0);
        assert_eq!(frame_window(&h0, &cfg), 192 * 22);
        // 992 bits at 1 Mbps last 992 us.
        let seconds = frame_window(&h800, &cfg) as f64 / cfg.sample_rate();
        assert!((seconds - 992e-6).abs() < 1e-12);
    }

    #[test]
    fn tap_magnitude_values() {
        let mut taps = [Complex64::new(0.0, 0.0); 5];
        taps[0] = Complex64::new(1.0, 0.0);
        assert_eq!(tap_magnitudes(&ChannelEstimate { taps }), [1.0, 0.0, 0.0, 0.0, 0.0]);
        // Representative survey-log tap value.
        taps[0] = Complex64::new(-1.90709, 2.842852);
        let mags = tap_magnitudes(&ChannelEstimate { taps });
        assert!((mags[0] - 3.42325).abs() < 1e-3, "got {}", mags[0]);
        // Global phase rotation leaves magnitudes unchanged.
        let rot = Complex64::from_polar(1.0, 1.234);
        let rotated = ChannelEstimate { taps: taps.map(|t| t * rot) };
        for (a, b) in tap_magnitudes(&ChannelEstimate { taps }).iter().zip(rotated.magnitudes().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn capture_at_25mhz_decodes() {
        let cfg = ModemConfig::default();
        let (cap22, _, _) = clean_capture(400, &cfg);
        let native = resample_rational(&cap22.waveform, CAPTURE_RATE).unwrap();
        let cap = IqCapture::from_waveform(native, 2.412e9, 30.0);
        let out = decode_capture(&cap, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].ssid, "TEST24");
        assert_eq!(out[0].mac.to_string(), "C0-3F-0E-90-EE-13");
    }

    #[test]
    fn second_beacon_beyond_capture_end_is_dropped() {
        let cfg = ModemConfig::default();
        let psdu = encode_beacon_psdu(&test_payload()).unwrap();
        let tx = beacon_waveform(&psdu, &cfg).unwrap();
        let mut samples = vec![Complex64::new(0.0, 0.0); 300];
        samples.extend_from_slice(&tx.samples);
        samples.extend(vec![Complex64::new(0.0, 0.0); 2000]);
        // Second frame starts but the capture truncates it halfway.
        samples.extend_from_slice(&tx.samples[..tx.len() / 2]);
        let cap = IqCapture::from_waveform(Waveform::new(samples, cfg.sample_rate()), 2.412e9, 30.0);
        let out = decode_capture(&cap, &cfg).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn multipath_frame_still_decodes() {
        let cfg = ModemConfig::default();
        let psdu = encode_beacon_psdu(&test_payload()).unwrap();
        let tx = beacon_waveform(&psdu, &cfg).unwrap();
        let mut ok = 0;
        for seed in 0..100u64 {
            let ch = MultipathChannel {
                taps: vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.5)],
                delay_samples: 150,
                cfo_hz: 0.0,
                snr_db: 30.0,
                seed,
            };
            let rx = apply_channel(&tx, &ch, &cfg);
            let cap = IqCapture::from_waveform(rx, 2.412e9, 30.0);
            let out = decode_capture(&cap, &cfg).unwrap();
            if out.len() == 1 && out[0].ssid == "TEST24" {
                ok += 1;
            }
        }
        assert!(ok >= 99, "decoded {ok}/100");
    }

    #[test]
    fn iq_file_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModemConfig::default();
        let (cap, _, _) = clean_capture(100, &cfg);
        let iq = dir.path().join("cap.iq");
        let meta = dir.path().join("cap.meta");
        write_iq_capture(&cap, &iq, &meta).unwrap();
        let back = read_iq_capture(&iq, &meta).unwrap();
        assert_eq!(back.waveform.len(), cap.waveform.len());
        assert_eq!(back.waveform.sample_rate, cap.waveform.sample_rate);
        // f32 storage precision
        for (a, b) in back.waveform.samples.iter().zip(cap.waveform.samples.iter()) {
            assert!((a - b).norm() < 1e-6);
        }
        // Truncated IQ payload fails validation.
        let bytes = std::fs::read(&iq).unwrap();
        std::fs::write(&iq, &bytes[..bytes.len() - 16]).unwrap();
        assert!(matches!(read_iq_capture(&iq, &meta), Err(Error::Parse(_))));
    }
}
