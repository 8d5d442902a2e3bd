//! Parametric multipath channel simulation standing in for the
//! over-the-air capture path, plus the Wiener channel estimator and the
//! deterministic synthetic-world channel model.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsss_modem::{extract_chips, ModemConfig, Waveform};
use crate::error::{Error, Result};
use crate::linalg::solve_complex;
use crate::radiomap::LocationGrid;

/// Discrete FIR channel at chip-spaced delays plus delay, CFO and AWGN.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipathChannel {
    /// Up to 5 complex tap gains, chip-spaced.
    pub taps: Vec<Complex64>,
    pub delay_samples: usize,
    pub cfo_hz: f64,
    /// SNR relative to a unit-power transmit waveform; `f64::INFINITY`
    /// disables noise.
    pub snr_db: f64,
    pub seed: u64,
}

impl MultipathChannel {
    pub fn identity() -> Self {
        MultipathChannel {
            taps: vec![Complex64::new(1.0, 0.0)],
            delay_samples: 0,
            cfo_hz: 0.0,
            snr_db: f64::INFINITY,
            seed: 0,
        }
    }
}

/// Five complex Wiener taps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelEstimate {
    pub taps: [Complex64; 5],
}

impl ChannelEstimate {
    /// Per-tap magnitudes, order preserved.
    pub fn magnitudes(&self) -> [f64; 5] {
        let mut out = [0.0; 5];
        for (o, t) in out.iter_mut().zip(self.taps.iter()) {
            *o = t.norm();
        }
        out
    }
}

pub(crate) fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub(crate) fn complex_gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(gaussian(rng), gaussian(rng))
}

/// Apply delay, chip-spaced FIR taps, CFO rotation, and AWGN. The noise
/// realization is fixed by the channel seed.
pub fn apply_channel(wf: &Waveform, ch: &MultipathChannel, cfg: &ModemConfig) -> Waveform {
    assert!(ch.taps.iter().any(|t| t.norm() > 0.0), "channel needs a nonzero tap");
    let spc = cfg.samples_per_chip;
    let span = (ch.taps.len() - 1) * spc;
    let n_out = ch.delay_samples + wf.len() + span;
    let mut out = vec![Complex64::new(0.0, 0.0); n_out];
    for (k, &tap) in ch.taps.iter().enumerate() {
        if tap.norm() == 0.0 {
            continue;
        }
        let shift = ch.delay_samples + k * spc;
        for (n, &s) in wf.samples.iter().enumerate() {
            out[shift + n] += tap * s;
        }
    }
    if ch.cfo_hz != 0.0 {
        let step = 2.0 * std::f64::consts::PI * ch.cfo_hz / wf.sample_rate;
        for (n, s) in out.iter_mut().enumerate() {
            *s *= Complex64::from_polar(1.0, step * n as f64);
        }
    }
    if ch.snr_db.is_finite() {
        let sigma = (10f64.powf(-ch.snr_db / 10.0) / 2.0).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(ch.seed);
        for s in out.iter_mut() {
            *s += Complex64::new(sigma * gaussian(&mut rng), sigma * gaussian(&mut rng));
        }
    }
    Waveform::new(out, wf.sample_rate)
}

/// Wiener estimate of a chip-spaced channel from the known reference
/// chips. Solves the regularized normal equations
/// `(R + noise_reg I) w = p` built at chip rate from the reference
/// autocorrelation and the reference/received cross-correlation.
pub fn wiener_estimate(
    received: &Waveform,
    reference_chips: &[f64],
    offset: usize,
    cfg: &ModemConfig,
    n_taps: usize,
    noise_reg: f64,
) -> Result<ChannelEstimate> {
    assert!(n_taps >= 1 && n_taps <= 5);
    let n_ref = reference_chips.len();
    if n_ref < 4 * n_taps {
        return Err(Error::InsufficientSamples { need: 4 * n_taps, have: n_ref });
    }
    let y = extract_chips(received, offset, n_ref, cfg)?;
    let mut r = vec![vec![Complex64::new(0.0, 0.0); n_taps]; n_taps];
    let mut p = vec![Complex64::new(0.0, 0.0); n_taps];
    for i in (n_taps - 1)..n_ref {
        for a in 0..n_taps {
            let ra = reference_chips[i - a];
            p[a] += y[i] * ra;
            for b in 0..n_taps {
                r[a][b] += ra * reference_chips[i - b];
            }
        }
    }
    for (a, row) in r.iter_mut().enumerate() {
        row[a] += noise_reg;
    }
    let w = solve_complex(&r, &p)?;
    let mut taps = [Complex64::new(0.0, 0.0); 5];
    taps[..n_taps].copy_from_slice(&w);
    Ok(ChannelEstimate { taps })
}

/// One access point of the synthetic world.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ApConfig {
    pub ssid: String,
    pub mac: String,
    pub x_m: f64,
    pub y_m: f64,
}

/// Synthetic-world configuration, loadable from a TOML file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WorldConfig {
    pub seed: u64,
    #[serde(default = "default_path_loss_exp")]
    pub path_loss_exp: f64,
    #[serde(default = "default_shadowing_sigma")]
    pub shadowing_sigma_db: f64,
    /// SNR of the unit-power transmit waveform before path loss.
    #[serde(default = "default_tx_snr")]
    pub tx_snr_db: f64,
    /// Per-capture multiplicative tap perturbation (fractional).
    #[serde(default = "default_tap_jitter")]
    pub tap_jitter: f64,
    /// Exponential power-delay-profile decay per chip.
    #[serde(default = "default_pdp_decay")]
    pub pdp_decay: f64,
    /// Number of active multipath taps (1..=5).
    #[serde(default = "default_pdp_taps")]
    pub pdp_taps: usize,
    /// Per-AP oscillator offset magnitude bound.
    #[serde(default = "default_cfo_max")]
    pub cfo_max_hz: f64,
    /// Optional grid CSV path overriding the built-in survey grid.
    #[serde(default)]
    pub grid_file: Option<String>,
    pub aps: Vec<ApConfig>,
}

fn default_path_loss_exp() -> f64 { 3.0 }
fn default_shadowing_sigma() -> f64 { 4.0 }
fn default_tx_snr() -> f64 { 70.0 }
fn default_tap_jitter() -> f64 { 0.08 }
fn default_pdp_decay() -> f64 { 0.9 }
fn default_pdp_taps() -> usize { 4 }
fn default_cfo_max() -> f64 { 10e3 }

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 1,
            path_loss_exp: default_path_loss_exp(),
            shadowing_sigma_db: default_shadowing_sigma(),
            tx_snr_db: default_tx_snr(),
            tap_jitter: default_tap_jitter(),
            pdp_decay: default_pdp_decay(),
            pdp_taps: default_pdp_taps(),
            cfo_max_hz: default_cfo_max(),
            grid_file: None,
            aps: vec![
                ApConfig {
                    ssid: "TEST24".into(),
                    mac: "C0-3F-0E-90-EE-13".into(),
                    x_m: 3.0,
                    y_m: 2.5,
                },
                ApConfig {
                    ssid: "TEST25".into(),
                    mac: "44-94-FC-65-F7-BA".into(),
                    x_m: 21.4,
                    y_m: 8.5,
                },
            ],
        }
    }
}

impl WorldConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: WorldConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("world config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("world config serializes")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.aps.is_empty() {
            return Err(Error::Config("world needs at least one AP".into()));
        }
        if self.pdp_taps == 0 || self.pdp_taps > 5 {
            return Err(Error::Config(format!("pdp_taps {} out of 1..=5", self.pdp_taps)));
        }
        for ap in &self.aps {
            ap.mac.parse::<crate::phy_frames::MacAddr>()?;
        }
        Ok(())
    }
}

/// splitmix64-style seed mixing so every (world, location, ap, capture)
/// tuple gets an independent deterministic stream.
fn mix_seed(parts: &[u64]) -> u64 {
    let mut z = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        z ^= p.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Log-distance path loss in dB at distance `d_m` (1 m reference).
pub fn path_loss_db(world: &WorldConfig, d_m: f64) -> f64 {
    10.0 * world.path_loss_exp * (d_m.max(1.0)).log10()
}

/// Deterministic base channel for one (location, AP) pair: exponential
/// power-delay profile with Rayleigh tap draws, scaled by log-distance
/// path loss and per-location shadowing.
pub fn location_channel_model(
    world: &WorldConfig,
    grid: &LocationGrid,
    location_id: u32,
    ap_index: usize,
) -> Result<MultipathChannel> {
    capture_channel(world, grid, location_id, ap_index, 0)
}

/// Channel for one capture: the base channel for the pair plus small
/// per-capture tap jitter, a fresh noise seed, and CFO drift.
pub fn capture_channel(
    world: &WorldConfig,
    grid: &LocationGrid,
    location_id: u32,
    ap_index: usize,
    capture_index: u32,
) -> Result<MultipathChannel> {
    let (x, y) = grid
        .coordinates(location_id)
        .ok_or(Error::UnknownLocation(location_id))?;
    let ap = world
        .aps
        .get(ap_index)
        .ok_or_else(|| Error::Config(format!("AP index {ap_index} out of range")))?;
    let d = ((x - ap.x_m).powi(2) + (y - ap.y_m).powi(2)).sqrt();

    let base_seed = mix_seed(&[world.seed, location_id as u64, ap_index as u64]);
    let mut base_rng = ChaCha8Rng::seed_from_u64(base_seed);
    let shadow_db = world.shadowing_sigma_db * gaussian(&mut base_rng);
    let amplitude = 10f64.powf(-(path_loss_db(world, d) + shadow_db) / 20.0);

    // Normalized exponential PDP.
    let powers: Vec<f64> = (0..world.pdp_taps).map(|k| (-world.pdp_decay * k as f64).exp()).collect();
    let total: f64 = powers.iter().sum();
    let mut taps: Vec<Complex64> = powers
        .iter()
        .map(|&p| complex_gaussian(&mut base_rng) * ((p / total) / 2.0).sqrt() * amplitude)
        .collect();
    // Keep the first tap dominant enough for reliable sync: re-draw
    // weaker leading taps against the strongest is avoided; instead the
    // profile already decays, but a pathological draw can still zero the
    // whole channel, so guard against that.
    if taps.iter().all(|t| t.norm() < 1e-12 * amplitude) {
        taps[0] = Complex64::new(amplitude, 0.0);
    }
    let base_cfo = world.cfo_max_hz * (base_rng.gen::<f64>() * 2.0 - 1.0);

    // Per-capture perturbation.
    let cap_seed = mix_seed(&[world.seed, location_id as u64, ap_index as u64, 0xCAFE + capture_index as u64]);
    let mut cap_rng = ChaCha8Rng::seed_from_u64(cap_seed);
    for t in taps.iter_mut() {
        let z = complex_gaussian(&mut cap_rng) * (world.tap_jitter / std::f64::consts::SQRT_2);
        *t *= Complex64::new(1.0, 0.0) + z;
    }
    let cfo_hz = base_cfo + 200.0 * (cap_rng.gen::<f64>() * 2.0 - 1.0);
    let delay_samples = 120 + (cap_rng.gen::<u32>() % 200) as usize;

    Ok(MultipathChannel {
        taps,
        delay_samples,
        cfo_hz,
        snr_db: world.tx_snr_db,
        seed: mix_seed(&[cap_seed, 0x4015E]),
    })
}
