//! Offline-phase data model: survey grids, fingerprint sample logs,
//! labeled dataset assembly, grid decimation, and synthetic survey
//! generation through the full transmit/channel/receive chain.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write as _;
use std::path::Path;

use crate::channel_sim::{apply_channel, capture_channel, WorldConfig};
use crate::dsss_modem::ModemConfig;
use crate::error::{Error, Result};
use crate::phy_frames::{encode_beacon_psdu, BeaconPayload, MacAddr};
use crate::receiver::{beacon_waveform, decode_capture, FingerprintSample, IqCapture};

/// 4 ft in meters; the survey grid spacing.
pub const FOUR_FT_M: f64 = 1.2192;

/// Discrete survey locations with coordinates in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationGrid {
    entries: BTreeMap<u32, (f64, f64)>,
    pub spacing_m: f64,
}

impl LocationGrid {
    pub fn new(entries: BTreeMap<u32, (f64, f64)>, spacing_m: f64) -> Self {
        LocationGrid { entries, spacing_m }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.keys().copied()
    }

    pub fn coordinates(&self, id: u32) -> Option<(f64, f64)> {
        self.entries.get(&id).copied()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.entries.contains_key(&id)
    }

    /// Euclidean distance in meters between two locations.
    pub fn distance(&self, a: u32, b: u32) -> Result<f64> {
        let (xa, ya) = self.coordinates(a).ok_or(Error::UnknownLocation(a))?;
        let (xb, yb) = self.coordinates(b).ok_or(Error::UnknownLocation(b))?;
        Ok(((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt())
    }

    /// Write as CSV (`id,x_m,y_m`) with the spacing carried in a
    /// leading comment.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!("# spacing_m={}\n", fmt_sig(self.spacing_m)));
        out.push_str("id,x_m,y_m\n");
        for (id, (x, y)) in &self.entries {
            out.push_str(&format!("{id},{},{}\n", fmt_sig(*x), fmt_sig(*y)));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut spacing = FOUR_FT_M;
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("spacing_m=") {
                    spacing = v
                        .parse()
                        .map_err(|_| Error::Parse(format!("line {}: bad spacing", lineno + 1)))?;
                }
                continue;
            }
            if line.starts_with("id,") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!(
                    "line {}: expected 3 grid columns, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let id: u32 = fields[0]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad location id", lineno + 1)))?;
            let x: f64 = fields[1]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad x coordinate", lineno + 1)))?;
            let y: f64 = fields[2]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad y coordinate", lineno + 1)))?;
            entries.insert(id, (x, y));
        }
        if entries.is_empty() {
            return Err(Error::Parse("grid file has no locations".into()));
        }
        Ok(LocationGrid::new(entries, spacing))
    }
}

/// The default 59-point survey: a rectangular perimeter loop walked at
/// 4 ft steps.
pub fn default_grid() -> LocationGrid {
    const W: f64 = 24.4;
    const H: f64 = 11.0;
    let corners = [(0.0, 0.0), (W, 0.0), (W, H), (0.0, H)];
    let lens = [W, H, W, H];
    let mut entries = BTreeMap::new();
    for id in 1u32..=59 {
        let mut s = (id - 1) as f64 * FOUR_FT_M;
        let mut point = corners[0];
        for (corner, len) in corners.iter().zip(lens.iter()) {
            if s <= *len {
                let next = corners[(corners
                    .iter()
                    .position(|c| c == corner)
                    .unwrap()
                    + 1)
                    % 4];
                let t = s / len;
                point = (corner.0 + (next.0 - corner.0) * t, corner.1 + (next.1 - corner.1) * t);
                break;
            }
            s -= len;
        }
        entries.insert(id, point);
    }
    LocationGrid::new(entries, FOUR_FT_M)
}

/// Feature layout of a labeled dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FeatureMode {
    RssOnly,
    RssPlusChannel,
}

impl FeatureMode {
    /// Features contributed per AP.
    pub fn features_per_ap(&self) -> usize {
        match self {
            FeatureMode::RssOnly => 1,
            FeatureMode::RssPlusChannel => 6,
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureMode::RssOnly => write!(f, "rss_only"),
            FeatureMode::RssPlusChannel => write!(f, "rss_plus_channel"),
        }
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rss_only" | "rss" => Ok(FeatureMode::RssOnly),
            "rss_plus_channel" | "rss+channel" => Ok(FeatureMode::RssPlusChannel),
            other => Err(Error::Parse(format!("unknown feature mode {other:?}"))),
        }
    }
}

/// Location grid plus per-location ordered fingerprint samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioMap {
    pub grid: LocationGrid,
    pub aps: Vec<(String, MacAddr)>,
    pub samples: BTreeMap<u32, Vec<FingerprintSample>>,
}

/// Labeled feature matrix; rows grouped by location.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u32>,
    pub feature_mode: FeatureMode,
    pub ap_set: Vec<(String, MacAddr)>,
}

impl RadioMap {
    pub fn total_samples(&self) -> usize {
        self.samples.values().map(Vec::len).sum()
    }

    fn samples_for_ap(&self, location: u32, ap: &(String, MacAddr)) -> Vec<&FingerprintSample> {
        self.samples
            .get(&location)
            .map(|rows| {
                rows.iter()
                    .filter(|s| s.ssid == ap.0 && s.mac == ap.1)
                    .collect()
            })
            .unwrap_or_default()
    }
}

const LOG_HEADER: &str =
    "SSID,MAC-ID,RSSI (dB),W1 R,W2 R,W3 R,W4 R,W5 R,W1 I,W2 I,W3 I,W4 I,W5 I,location_id";
const PER_LOCATION_HEADER: &str =
    "SSID,MAC-ID,RSSI (dB),W1 R,W2 R,W3 R,W4 R,W5 R,W1 I,W2 I,W3 I,W4 I,W5 I";

/// Format with 6 significant digits, trailing zeros trimmed.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{:.*}", decimals, x);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn sample_row(s: &FingerprintSample) -> String {
    let mut fields = vec![s.ssid.clone(), s.mac.to_string(), fmt_sig(s.rss_db)];
    fields.extend(s.taps_re.iter().map(|&v| fmt_sig(v)));
    fields.extend(s.taps_im.iter().map(|&v| fmt_sig(v)));
    fields.join(",")
}

/// Write the survey log CSV: the survey-tool column set plus a trailing
/// `location_id` column.
pub fn write_survey_log(map: &RadioMap, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{LOG_HEADER}")?;
    for (loc, rows) in &map.samples {
        for s in rows {
            writeln!(out, "{},{loc}", sample_row(s))?;
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Survey-tool-compatible mode: one file per location, without the
/// location_id column. Files are named `location_<id>.csv`.
pub fn write_survey_log_per_location(map: &RadioMap, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (loc, rows) in &map.samples {
        let mut out = Vec::new();
        writeln!(out, "{PER_LOCATION_HEADER}")?;
        for s in rows {
            writeln!(out, "{}", sample_row(s))?;
        }
        std::fs::write(dir.join(format!("location_{loc}.csv")), out)?;
    }
    Ok(())
}

fn parse_sample_fields(fields: &[&str], lineno: usize) -> Result<FingerprintSample> {
    let bad = |what: &str| Error::Parse(format!("line {lineno}: bad {what}"));
    let ssid = fields[0].to_string();
    let mac: MacAddr = fields[1].parse().map_err(|_| bad("MAC"))?;
    let rss_db: f64 = fields[2].parse().map_err(|_| bad("RSSI"))?;
    let mut taps_re = [0.0; 5];
    let mut taps_im = [0.0; 5];
    for k in 0..5 {
        taps_re[k] = fields[3 + k].parse().map_err(|_| bad("tap real part"))?;
        taps_im[k] = fields[8 + k].parse().map_err(|_| bad("tap imaginary part"))?;
    }
    Ok(FingerprintSample { ssid, mac, rss_db, taps_re, taps_im })
}

/// Read a survey log back into (location, sample) rows in file order.
pub fn read_survey_log(path: &Path) -> Result<Vec<(u32, FingerprintSample)>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with("SSID,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 14 {
            return Err(Error::Parse(format!(
                "line {lineno}: expected 14 columns, got {}",
                fields.len()
            )));
        }
        let loc: u32 = fields[13]
            .parse()
            .map_err(|_| Error::Parse(format!("line {lineno}: bad location_id")))?;
        rows.push((loc, parse_sample_fields(&fields[..13], lineno)?));
    }
    Ok(rows)
}

/// Assemble a radio map from log rows and a grid. The AP list is
/// collected from the rows in first-seen order.
pub fn assemble_radio_map(grid: LocationGrid, rows: Vec<(u32, FingerprintSample)>) -> Result<RadioMap> {
    let mut aps: Vec<(String, MacAddr)> = Vec::new();
    let mut samples: BTreeMap<u32, Vec<FingerprintSample>> = BTreeMap::new();
    for (loc, sample) in rows {
        if !grid.contains(loc) {
            return Err(Error::UnknownLocation(loc));
        }
        let key = (sample.ssid.clone(), sample.mac);
        if !aps.contains(&key) {
            aps.push(key);
        }
        samples.entry(loc).or_default().push(sample);
    }
    Ok(RadioMap { grid, aps, samples })
}

/// Concatenate per-AP features into labeled observations. The k-th
/// sample of each requested AP at a location forms one row.
pub fn build_dataset(
    map: &RadioMap,
    ap_set: &[(String, MacAddr)],
    feature_mode: FeatureMode,
) -> Result<LabeledDataset> {
    if ap_set.is_empty() {
        return Err(Error::Empty("AP set".into()));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for loc in map.grid.ids() {
        let per_ap: Vec<Vec<&FingerprintSample>> =
            ap_set.iter().map(|ap| map.samples_for_ap(loc, ap)).collect();
        for (ap, rows) in ap_set.iter().zip(per_ap.iter()) {
            if rows.is_empty() {
                return Err(Error::Survey(format!(
                    "location {loc} has no samples for AP {} {}",
                    ap.0, ap.1
                )));
            }
        }
        let n_obs = per_ap.iter().map(Vec::len).min().unwrap_or(0);
        for k in 0..n_obs {
            let mut row = Vec::with_capacity(ap_set.len() * feature_mode.features_per_ap());
            for rows in &per_ap {
                let s = rows[k];
                row.push(s.rss_db);
                if feature_mode == FeatureMode::RssPlusChannel {
                    row.extend(s.estimate().magnitudes());
                }
            }
            features.push(row);
            labels.push(loc);
        }
    }
    Ok(LabeledDataset { features, labels, feature_mode, ap_set: ap_set.to_vec() })
}

/// Keep locations with id = 1 (mod factor); spacing metadata scales by
/// the factor. Factor 1 is the identity.
pub fn decimate(map: &RadioMap, factor: u32) -> RadioMap {
    assert!((1..=3).contains(&factor), "decimation factor {factor} not in 1..=3");
    let entries: BTreeMap<u32, (f64, f64)> = map
        .grid
        .ids()
        .filter(|id| (id - 1) % factor == 0)
        .map(|id| (id, map.grid.coordinates(id).unwrap()))
        .collect();
    let grid = LocationGrid::new(entries, map.grid.spacing_m * factor as f64);
    let samples = map
        .samples
        .iter()
        .filter(|(id, _)| grid.contains(**id))
        .map(|(id, rows)| (*id, rows.clone()))
        .collect();
    RadioMap { grid, aps: map.aps.clone(), samples }
}

/// Run the full synthetic pipeline for every (location, AP, sample)
/// triple: beacon -> modulate -> per-capture channel -> decode. Failed
/// decodes are retried up to 10x the requested count per AP.
pub fn synthesize_survey(
    world: &WorldConfig,
    grid: &LocationGrid,
    samples_per_ap: usize,
) -> Result<RadioMap> {
    let cfg = ModemConfig::default();
    let mut aps = Vec::new();
    let mut tx_waveforms = Vec::new();
    for ap in &world.aps {
        let mac: MacAddr = ap.mac.parse()?;
        let psdu = encode_beacon_psdu(&BeaconPayload::new(&ap.ssid, mac))?;
        tx_waveforms.push(beacon_waveform(&psdu, &cfg)?);
        aps.push((ap.ssid.clone(), mac));
    }

    let mut samples: BTreeMap<u32, Vec<FingerprintSample>> = BTreeMap::new();
    for loc in grid.ids() {
        let mut per_ap: Vec<Vec<FingerprintSample>> = Vec::new();
        for (ap_idx, tx) in tx_waveforms.iter().enumerate() {
            let mut collected = Vec::with_capacity(samples_per_ap);
            let mut attempt = 0u32;
            while collected.len() < samples_per_ap {
                if attempt as usize >= samples_per_ap * 10 {
                    return Err(Error::Survey(format!(
                        "retry cap hit at location {loc}, AP {}",
                        aps[ap_idx].0
                    )));
                }
                let ch = capture_channel(world, grid, loc, ap_idx, attempt)?;
                attempt += 1;
                let mut rx = apply_channel(tx, &ch, &cfg);
                rx.samples.extend(vec![num_complex::Complex64::new(0.0, 0.0); 10 * cfg.samples_per_chip]);
                let cap = IqCapture::from_waveform(rx, 2.412e9, 30.0);
                match decode_capture(&cap, &cfg) {
                    Ok(decoded) if decoded.len() == 1 && decoded[0].ssid == aps[ap_idx].0 => {
                        collected.push(decoded.into_iter().next().unwrap());
                    }
                    _ => continue,
                }
            }
            per_ap.push(collected);
        }
        // Interleave per-AP samples in capture order, as a live survey would.
        let rows = samples.entry(loc).or_default();
        for k in 0..samples_per_ap {
            for ap_rows in &per_ap {
                rows.push(ap_rows[k].clone());
            }
        }
    }
    Ok(RadioMap { grid: grid.clone(), aps, samples })
}
