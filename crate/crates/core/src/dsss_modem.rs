//! Chip-level DSSS modem: DBPSK, 11-chip Barker spreading, waveform
//! synthesis, chip matched filtering, rational resampling, coarse CFO
//! estimation, and code-phase synchronization.

use std::ops::Range;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// The 802.11 spreading sequence.
pub const BARKER: [f64; 11] = [1.0, -1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0];
/// Chips per DBPSK symbol.
pub const CHIPS_PER_SYMBOL: usize = 11;

/// Complex baseband sample sequence with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<Complex64>,
    pub sample_rate: f64,
}

impl Waveform {
    pub fn new(samples: Vec<Complex64>, sample_rate: f64) -> Self {
        assert!(sample_rate > 0.0);
        Waveform { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean power over all samples.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    /// Scale every sample by a real gain.
    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Modem configuration; the default matches the 22 MHz working rate with
/// 2 samples per chip.
#[derive(Debug, Clone)]
pub struct ModemConfig {
    pub chip_rate: f64,
    pub samples_per_chip: usize,
    pub barker: [f64; 11],
    /// Normalized correlation threshold for frame detection, in [0, 1].
    pub detection_threshold: f64,
}

impl Default for ModemConfig {
    fn default() -> Self {
        ModemConfig {
            chip_rate: 11e6,
            samples_per_chip: 2,
            barker: BARKER,
            detection_threshold: 0.6,
        }
    }
}

impl ModemConfig {
    /// Working sample rate: chip rate times samples per chip.
    pub fn sample_rate(&self) -> f64 {
        self.chip_rate * self.samples_per_chip as f64
    }

    /// Samples per DBPSK symbol (one spread bit).
    pub fn samples_per_symbol(&self) -> usize {
        CHIPS_PER_SYMBOL * self.samples_per_chip
    }
}

/// Differentially encode bits: a 1 flips the phase, a 0 keeps it.
pub fn dbpsk_encode(bits: &[u8], initial_phase: f64) -> Vec<f64> {
    let mut prev = initial_phase;
    bits.iter()
        .map(|&b| {
            let sym = if b & 1 == 1 { -prev } else { prev };
            prev = sym;
            sym
        })
        .collect()
}

/// Spread each symbol into 11 Barker chips.
pub fn barker_spread(symbols: &[f64]) -> Vec<f64> {
    let mut chips = Vec::with_capacity(symbols.len() * CHIPS_PER_SYMBOL);
    for &s in symbols {
        chips.extend(BARKER.iter().map(|&c| s * c));
    }
    chips
}

/// Rectangular-pulse waveform at the working rate, unit chip amplitude.
pub fn synthesize_waveform(chips: &[f64], cfg: &ModemConfig) -> Waveform {
    let spc = cfg.samples_per_chip;
    let mut samples = Vec::with_capacity(chips.len() * spc);
    for &c in chips {
        for _ in 0..spc {
            samples.push(Complex64::new(c, 0.0));
        }
    }
    Waveform::new(samples, cfg.sample_rate())
}

/// Chip matched filter: causal moving average over one chip, same
/// length as the input. Chip-centered outputs sit at the last sample of
/// each chip interval.
pub fn matched_filter(wf: &Waveform, cfg: &ModemConfig) -> Result<Waveform> {
    let expected = cfg.sample_rate();
    if (wf.sample_rate - expected).abs() > 1e-3 {
        return Err(Error::RateMismatch { expected, actual: wf.sample_rate });
    }
    let spc = cfg.samples_per_chip;
    let scale = 1.0 / spc as f64;
    let mut out = Vec::with_capacity(wf.len());
    let mut acc = Complex64::new(0.0, 0.0);
    for (n, &s) in wf.samples.iter().enumerate() {
        acc += s;
        if n >= spc {
            acc -= wf.samples[n - spc];
        }
        out.push(acc * scale);
    }
    Ok(Waveform::new(out, wf.sample_rate))
}

/// Reduce a rate ratio to a small rational up/down pair.
fn rational_ratio(source: f64, target: f64) -> Result<(usize, usize)> {
    const MAX_DEN: usize = 512;
    let ratio = target / source;
    if !ratio.is_finite() || ratio <= 0.0 {
        return Err(Error::BadRatio(source, target));
    }
    let mut best: Option<(usize, usize, f64)> = None;
    for den in 1..=MAX_DEN {
        let num = (ratio * den as f64).round();
        if num < 1.0 || num > 1e6 {
            continue;
        }
        let err = (num / den as f64 - ratio).abs() / ratio;
        if best.map_or(true, |(_, _, e)| err < e) {
            best = Some((num as usize, den, err));
        }
        if err < 1e-12 {
            break;
        }
    }
    match best {
        Some((num, den, err)) if err < 1e-9 => {
            let g = gcd(num, den);
            Ok((num / g, den / g))
        }
        _ => Err(Error::BadRatio(source, target)),
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Polyphase rational resampler with a windowed-sinc prototype filter.
/// Group delay is compensated so output sample j corresponds to input
/// time j * M / L.
pub fn resample_rational(wf: &Waveform, target_rate: f64) -> Result<Waveform> {
    let (up, down) = rational_ratio(wf.sample_rate, target_rate)?;
    if up == 1 && down == 1 {
        return Ok(Waveform::new(wf.samples.clone(), target_rate));
    }
    let n_in = wf.len();
    let n_out = (n_in as f64 * up as f64 / down as f64).round() as usize;

    // Prototype lowpass at the upsampled rate. Cutoff at the tighter of
    // the input/output Nyquist frequencies; gain `up` compensates the
    // zero insertion.
    let taps_per_phase = 24usize;
    let n_taps = taps_per_phase * up.max(down).max(2);
    let n_taps = if n_taps % 2 == 0 { n_taps + 1 } else { n_taps };
    let center = (n_taps - 1) / 2;
    let fc = 0.5 / up.max(down) as f64;
    let mut h = vec![0.0f64; n_taps];
    for (n, tap) in h.iter_mut().enumerate() {
        let t = n as f64 - center as f64;
        let sinc = if t == 0.0 {
            2.0 * fc
        } else {
            (2.0 * std::f64::consts::PI * fc * t).sin() / (std::f64::consts::PI * t)
        };
        // Blackman window
        let w = 0.42
            - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / (n_taps - 1) as f64).cos()
            + 0.08 * (4.0 * std::f64::consts::PI * n as f64 / (n_taps - 1) as f64).cos();
        *tap = up as f64 * sinc * w;
    }

    let mut out = Vec::with_capacity(n_out);
    for j in 0..n_out {
        // y[j] = sum_k x[k] h[j*down + center - k*up]
        let m = j * down + center;
        let mut acc = Complex64::new(0.0, 0.0);
        let k_min = if m >= n_taps - 1 { (m - (n_taps - 1)).div_ceil(up) } else { 0 };
        let k_max = (m / up).min(n_in.saturating_sub(1));
        for k in k_min..=k_max {
            let idx = m - k * up;
            acc += wf.samples[k] * h[idx];
        }
        out.push(acc);
    }
    Ok(Waveform::new(out, target_rate))
}

/// Estimate the carrier frequency offset by delayed autocorrelation at
/// one-symbol lag over a span of known chip structure. `reference_chips`
/// must cover the span (chip-rate, ±1) and be aligned with `span.start`;
/// the known modulation is stripped before correlating, giving an
/// unambiguous range of ±(symbol rate / 2).
pub fn estimate_coarse_cfo(
    wf: &Waveform,
    cfg: &ModemConfig,
    span: Range<usize>,
    reference_chips: &[f64],
) -> Result<f64> {
    let lag = cfg.samples_per_symbol();
    let span_len = span.end.saturating_sub(span.start);
    if span.end > wf.len() || span_len < 2 * lag {
        return Err(Error::InsufficientSamples { need: 2 * lag, have: span_len.min(wf.len()) });
    }
    let spc = cfg.samples_per_chip;
    let usable = span_len.min(reference_chips.len() * spc);
    if usable < 2 * lag {
        return Err(Error::InsufficientSamples { need: 2 * lag, have: usable });
    }
    // Strip modulation, then correlate against the one-symbol delayed copy.
    let stripped: Vec<Complex64> = (0..usable)
        .map(|n| wf.samples[span.start + n] * reference_chips[n / spc])
        .collect();
    let mut acc = Complex64::new(0.0, 0.0);
    for n in 0..usable - lag {
        acc += stripped[n + lag] * stripped[n].conj();
    }
    let ts = 1.0 / wf.sample_rate;
    Ok(acc.arg() / (2.0 * std::f64::consts::PI * lag as f64 * ts))
}

/// Rotate the waveform by minus the given frequency offset.
pub fn apply_cfo_correction(wf: &Waveform, cfo: f64) -> Waveform {
    let step = -2.0 * std::f64::consts::PI * cfo / wf.sample_rate;
    let samples = wf
        .samples
        .iter()
        .enumerate()
        .map(|(n, s)| s * Complex64::from_polar(1.0, step * n as f64))
        .collect();
    Waveform::new(samples, wf.sample_rate)
}

/// Frame detection result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub found: bool,
    pub offset: usize,
    /// Normalized correlation in [0, 1].
    pub peak: f64,
}

/// Slide a despreading correlator over the waveform looking for the
/// known reference chips. Returns the earliest local peak at or above
/// the detection threshold; when nothing crosses it, `found` is false
/// and `offset`/`peak` describe the best candidate seen.
/// Chip-spaced lags pooled by the detection metric; matches the
/// 5-tap channel estimator, so a resolvable multipath channel keeps
/// its full energy in the metric.
const DETECT_CHANNEL_CHIPS: usize = 5;

/// Fraction of the strongest lag's correlation power a sample must
/// carry to be accepted as the leading channel tap. Half-chip offsets
/// of a tap carry about a quarter of its power, so 0.35 rejects them
/// while accepting any leading tap within ~4.5 dB of the strongest.
const LEADING_TAP_FRACTION: f64 = 0.35;

pub fn code_phase_search(wf: &Waveform, cfg: &ModemConfig, reference_chips: &[f64]) -> Detection {
    let spc = cfg.samples_per_chip;
    let window = reference_chips.len() * spc;
    if wf.len() < window || window == 0 {
        return Detection { found: false, offset: 0, peak: 0.0 };
    }
    // Prefix sums of |x|^2 for the normalization term.
    let mut energy = vec![0.0f64; wf.len() + 1];
    for (n, s) in wf.samples.iter().enumerate() {
        energy[n + 1] = energy[n] + s.norm_sqr();
    }
    let e_ref = window as f64; // chips are ±1, one sample each repeated spc times
    let last = wf.len() - window;

    // Squared correlation magnitude at a single lag, memoized so the
    // pooled metric costs one correlation per offset.
    let mut corr_cache = vec![-1.0f64; last + 1];
    let corr_at = |o: usize, cache: &mut Vec<f64>| -> f64 {
        if cache[o] < 0.0 {
            let mut acc = Complex64::new(0.0, 0.0);
            for (n, s) in wf.samples[o..o + window].iter().enumerate() {
                acc += s * reference_chips[n / spc];
            }
            cache[o] = acc.norm_sqr();
        }
        cache[o]
    };
    // Pooled metric: correlation energy captured by a channel window
    // of DETECT_CHANNEL_CHIPS chip-spaced taps starting at `o`.
    let metric = |o: usize, cache: &mut Vec<f64>| -> f64 {
        let mut acc = 0.0;
        for k in 0..DETECT_CHANNEL_CHIPS {
            let lag = o + k * spc;
            if lag > last {
                break;
            }
            acc += corr_at(lag, cache);
        }
        let e_win = energy[o + window] - energy[o];
        if e_win <= 0.0 {
            0.0
        } else {
            (acc / (e_ref * e_win)).min(1.0)
        }
    };

    let mut best = Detection { found: false, offset: 0, peak: 0.0 };
    let mut o = 0usize;
    while o <= last {
        let m = metric(o, &mut corr_cache);
        if m > best.peak {
            best.offset = o;
            best.peak = m;
        }
        if m >= cfg.detection_threshold {
            // Crossed the threshold: refine to the local argmax within
            // one symbol span, then stop at the earliest frame.
            let refine_end = (o + cfg.samples_per_symbol()).min(last);
            let (mut peak_off, mut peak_val) = (o, m);
            for r in o + 1..=refine_end {
                let mr = metric(r, &mut corr_cache);
                if mr > peak_val {
                    peak_off = r;
                    peak_val = mr;
                }
            }
            // The pooled metric plateaus while the channel window
            // slides onto the first tap; snap the offset forward to
            // the first sample with a significant single-lag peak.
            let span_end = (peak_off + (DETECT_CHANNEL_CHIPS - 1) * spc).min(last);
            let max_corr = (peak_off..=span_end)
                .map(|r| corr_at(r, &mut corr_cache))
                .fold(0.0f64, f64::max);
            let mut offset = peak_off;
            for r in peak_off..=span_end {
                if corr_at(r, &mut corr_cache) >= LEADING_TAP_FRACTION * max_corr {
                    offset = r;
                    break;
                }
            }
            return Detection { found: true, offset, peak: peak_val };
        }
        o += 1;
    }
    best
}

/// Average the samples of each chip interval starting at `offset`.
pub fn extract_chips(
    wf: &Waveform,
    offset: usize,
    n_chips: usize,
    cfg: &ModemConfig,
) -> Result<Vec<Complex64>> {
    let spc = cfg.samples_per_chip;
    let need = offset + n_chips * spc;
    if need > wf.len() {
        return Err(Error::InsufficientSamples { need, have: wf.len() });
    }
    let scale = 1.0 / spc as f64;
    Ok((0..n_chips)
        .map(|i| {
            let start = offset + i * spc;
            wf.samples[start..start + spc].iter().sum::<Complex64>() * scale
        })
        .collect())
}

/// Correlate each 11-chip group against the Barker sequence, one complex
/// value per symbol, normalized so a clean symbol has unit magnitude.
pub fn despread_symbols(chips: &[Complex64], cfg: &ModemConfig) -> Vec<Complex64> {
    chips
        .chunks_exact(CHIPS_PER_SYMBOL)
        .map(|group| {
            group
                .iter()
                .zip(cfg.barker.iter())
                .map(|(c, &b)| c * b)
                .sum::<Complex64>()
                / CHIPS_PER_SYMBOL as f64
        })
        .collect()
}

/// Differentially decode despread symbols back to bits; a phase flip
/// relative to the previous symbol is a 1.
pub fn diff_decode(symbols: &[Complex64], initial: Complex64) -> Vec<u8> {
    let mut prev = initial;
    symbols
        .iter()
        .map(|&s| {
            let bit = if (s * prev.conj()).re < 0.0 { 1 } else { 0 };
            prev = s;
            bit
        })
        .collect()
}

/// Despread and differentially decode `n_bits` symbols starting at a
/// synchronized sample offset. Returns the decoded bits and the
/// per-symbol correlation values for diagnostics.
pub fn despread_dbpsk_decode(
    wf: &Waveform,
    offset: usize,
    cfg: &ModemConfig,
    n_bits: usize,
) -> Result<(Vec<u8>, Vec<Complex64>)> {
    let chips = extract_chips(wf, offset, n_bits * CHIPS_PER_SYMBOL, cfg)?;
    let soft = despread_symbols(&chips, cfg);
    let bits = diff_decode(&soft, Complex64::new(1.0, 0.0));
    Ok((bits, soft))
}
