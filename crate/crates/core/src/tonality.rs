//! Pitch-class profiles per instrumentation class, key normalization by
//! circular-shift correlation, mode templates and correlation densities.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::{prepare, AudioClip, TARGET_RATE};
use crate::dsp::{hpcp_raw_frames, HPCP_FRAME_LEN};
use crate::error::{Error, Result};
use crate::segmenter::{Segment, SegmentLabel};

/// Bundled major template; see the file header for its origin.
pub const DEFAULT_MAJOR_TEMPLATE: &str = include_str!("../templates/major.txt");

pub const KDE_GRID: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileClass {
    Vocal,
    Picked,
    Strummed,
}

impl ProfileClass {
    pub const ALL: [ProfileClass; 3] = [ProfileClass::Vocal, ProfileClass::Picked, ProfileClass::Strummed];

    pub fn name(self) -> &'static str {
        match self {
            ProfileClass::Vocal => "vocal",
            ProfileClass::Picked => "picked",
            ProfileClass::Strummed => "strummed",
        }
    }

    fn of(label: SegmentLabel) -> Option<Self> {
        match label {
            SegmentLabel::Vocal => Some(ProfileClass::Vocal),
            SegmentLabel::GuitarPicked => Some(ProfileClass::Picked),
            SegmentLabel::GuitarStrummed => Some(ProfileClass::Strummed),
            SegmentLabel::Silence => None,
        }
    }
}

/// Twelve non-negative values, C first; peak 1 unless all zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchClassProfile {
    pub values: [f64; 12],
    pub class: ProfileClass,
}

fn max_normalized(mut v: [f64; 12]) -> [f64; 12] {
    let max = v.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        v.iter_mut().for_each(|x| *x /= max);
    }
    v
}

/// Move the energy of pitch class `c` to `c + k`.
pub fn rotate(values: &[f64; 12], k: usize) -> [f64; 12] {
    let mut out = [0.0; 12];
    for (i, &v) in values.iter().enumerate() {
        out[(i + k) % 12] = v;
    }
    out
}

/// Pearson correlation; `ConstantInput` when either side has zero variance.
pub fn pearson(a: &[f64; 12], b: &[f64; 12]) -> Result<f64> {
    let ma = a.iter().sum::<f64>() / 12.0;
    let mb = b.iter().sum::<f64>() / 12.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::ConstantInput);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Shift `k` maximizing the correlation of `profile` with `rotate(reference, k)`,
/// so `key_shift(&rotate(p, k), p) == k`. Ties go to the smallest shift.
pub fn key_shift(profile: &[f64; 12], reference: &[f64; 12]) -> Result<usize> {
    let mut best = (0, f64::NEG_INFINITY);
    for k in 0..12 {
        let r = pearson(profile, &rotate(reference, k))?;
        if r > best.1 {
            best = (k, r);
        }
    }
    Ok(best.0)
}

/// Rotate `profile` into the key of `reference`.
pub fn normalize_key(profile: &[f64; 12], reference: &[f64; 12]) -> Result<[f64; 12]> {
    let k = key_shift(profile, reference)?;
    Ok(rotate(profile, (12 - k) % 12))
}

/// Mean raw HPCP per segment class, max-normalized once. Frames are assigned
/// by the segment covering their center; classes with no frame are omitted,
/// so a silence-only annotation yields an empty list.
pub fn segment_profiles(clip: &AudioClip, segments: &[Segment]) -> Result<Vec<PitchClassProfile>> {
    let mono = prepare(clip)?.mono;
    let mut sums = [[0.0f64; 12]; 3];
    let mut counts = [0usize; 3];
    for (i, frame) in hpcp_raw_frames(&mono).iter().enumerate() {
        let center = (i * HPCP_FRAME_LEN + HPCP_FRAME_LEN / 2) as f64 / TARGET_RATE as f64;
        let covering = segments.iter().enumerate().find(|(j, s)| {
            s.start <= center && (center < s.end || (*j == segments.len() - 1 && center <= s.end))
        });
        let Some(class) = covering.and_then(|(_, s)| ProfileClass::of(s.label)) else {
            continue;
        };
        let c = class as usize;
        counts[c] += 1;
        for (acc, v) in sums[c].iter_mut().zip(frame) {
            *acc += v;
        }
    }
    Ok(ProfileClass::ALL
        .iter()
        .filter(|&&c| counts[c as usize] > 0)
        .map(|&c| {
            let n = counts[c as usize] as f64;
            PitchClassProfile { values: max_normalized(sums[c as usize].map(|v| v / n)), class: c }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Major,
    Flamenco,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateSource {
    LiteratureConfig,
    CorpusDerived,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Major => "major",
            Mode::Flamenco => "flamenco",
        }
    }
}

impl TemplateSource {
    pub fn name(self) -> &'static str {
        match self {
            TemplateSource::LiteratureConfig => "literature-config",
            TemplateSource::CorpusDerived => "corpus-derived",
        }
    }
}

/// A mode template; the values are never all equal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchClassTemplate {
    values: [f64; 12],
    pub mode: Mode,
    pub source: TemplateSource,
}

impl PitchClassTemplate {
    pub fn new(values: [f64; 12], mode: Mode, source: TemplateSource) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) || values.iter().all(|&v| v == values[0]) {
            return Err(Error::ConstantInput);
        }
        Ok(Self { values, mode, source })
    }

    pub fn values(&self) -> &[f64; 12] {
        &self.values
    }

    /// Parse `key=value` header lines (`mode`, `source`) followed by one line
    /// of 12 comma-separated values. `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let (mut mode, mut source, mut values) = (None, None, None);
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            if let Some((key, value)) = line.split_once('=') {
                let value = value.trim();
                match key.trim() {
                    "mode" => {
                        mode = Some(match value {
                            "major" => Mode::Major,
                            "flamenco" => Mode::Flamenco,
                            other => return Err(Error::Metadata(format!("unknown template mode {other:?}"))),
                        })
                    }
                    "source" => {
                        source = Some(match value {
                            "literature-config" => TemplateSource::LiteratureConfig,
                            "corpus-derived" => TemplateSource::CorpusDerived,
                            other => return Err(Error::Metadata(format!("unknown template source {other:?}"))),
                        })
                    }
                    other => return Err(Error::Metadata(format!("unknown template key {other:?}"))),
                }
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
            let parsed = parsed.map_err(|e| Error::Metadata(format!("template value: {e}")))?;
            let arr: [f64; 12] = parsed
                .try_into()
                .map_err(|v: Vec<f64>| Error::Metadata(format!("template has {} values, need 12", v.len())))?;
            values = Some(arr);
        }
        let missing = |what: &str| Error::Metadata(format!("template is missing {what}"));
        Self::new(values.ok_or_else(|| missing("values"))?, mode.ok_or_else(|| missing("mode"))?, source.ok_or_else(|| missing("source"))?)
    }

    pub fn to_text(&self) -> String {
        let values: Vec<String> = self.values.iter().map(|v| v.to_string()).collect();
        format!("# Pitch-class template, C first.\nmode={}\nsource={}\n{}\n", self.mode.name(), self.source.name(), values.join(","))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn default_major() -> Self {
        Self::parse(DEFAULT_MAJOR_TEMPLATE).expect("bundled major template parses")
    }
}

/// Flamenco-mode template from a set of recordings' profiles. Every profile
/// is rotated into the key of the one with the smallest id, the results are
/// averaged in id order and max-normalized.
pub fn derive_template(profiles: &[(&str, [f64; 12])]) -> Result<PitchClassTemplate> {
    let mut sorted: Vec<&(&str, [f64; 12])> = profiles.iter().collect();
    // Ties on id fall back to the values so the sum order never depends on the input order.
    sorted.sort_by(|a, b| a.0.cmp(b.0).then_with(|| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal)));
    let reference = sorted.first().ok_or_else(|| Error::InvalidArgument("no profiles to derive a template from".into()))?.1;
    let mut acc = [0.0; 12];
    for (_, p) in &sorted {
        for (a, v) in acc.iter_mut().zip(normalize_key(p, &reference)?) {
            *a += v;
        }
    }
    let n = sorted.len() as f64;
    PitchClassTemplate::new(max_normalized(acc.map(|v| v / n)), Mode::Flamenco, TemplateSource::CorpusDerived)
}

/// Pearson correlation after rotating `profile` into the template's key.
pub fn template_correlation(profile: &[f64; 12], template: &PitchClassTemplate) -> Result<f64> {
    pearson(&normalize_key(profile, &template.values)?, &template.values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub id: String,
    pub style: Option<String>,
    pub class: ProfileClass,
    pub r_major: f64,
    pub r_flamenco: f64,
}

pub fn write_correlations_csv(writer: impl std::io::Write, rows: &[CorrelationRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "style", "class", "r_major", "r_flamenco"])?;
    for r in rows {
        w.write_record([
            r.id.as_str(),
            r.style.as_deref().unwrap_or(""),
            r.class.name(),
            &r.r_major.to_string(),
            &r.r_flamenco.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Density on a `KDE_GRID`² grid of cell centers over [-1, 1]²; `values[iy * KDE_GRID + ix]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub bandwidth: [f64; 2],
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn cell_size() -> f64 {
        2.0 / KDE_GRID as f64
    }

    pub fn center(i: usize) -> f64 {
        -1.0 + (i as f64 + 0.5) * Self::cell_size()
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * KDE_GRID + ix]
    }

    /// Riemann sum of the density over the grid.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * Self::cell_size().powi(2)
    }

    /// One row per grid row, `y` first then the densities along `x`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("y");
        for ix in 0..KDE_GRID {
            let _ = write!(s, ",{:.6}", Self::center(ix));
        }
        s.push('\n');
        for iy in 0..KDE_GRID {
            let _ = write!(s, "{:.6}", Self::center(iy));
            for ix in 0..KDE_GRID {
                let _ = write!(s, ",{}", self.get(ix, iy));
            }
            s.push('\n');
        }
        s
    }
}

/// Used when an axis has no spread (a single point or identical values).
const FALLBACK_BANDWIDTH: f64 = 0.1;

fn silverman(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    // Silverman's rule in two dimensions: sigma * n^(-1/6).
    let h = var.sqrt() * n.powf(-1.0 / 6.0);
    if h > 0.0 {
        h
    } else {
        FALLBACK_BANDWIDTH
    }
}

/// Gaussian KDE of correlation pairs with a per-axis Silverman bandwidth,
/// rescaled so the grid mass is 1 (kernel tails outside [-1, 1]² are folded back in).
pub fn kde_grid(points: &[(f64, f64)]) -> Result<DensityGrid> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("density needs at least one point".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (hx, hy) = (silverman(&xs), silverman(&ys));
    let mut values = vec![0.0; KDE_GRID * KDE_GRID];
    for iy in 0..KDE_GRID {
        let y = DensityGrid::center(iy);
        for ix in 0..KDE_GRID {
            let x = DensityGrid::center(ix);
            values[iy * KDE_GRID + ix] = points
                .iter()
                .map(|&(px, py)| (-0.5 * (((x - px) / hx).powi(2) + ((y - py) / hy).powi(2))).exp())
                .sum::<f64>();
        }
    }
    let mut grid = DensityGrid { bandwidth: [hx, hy], values };
    let mass = grid.mass();
    if mass > 0.0 {
        grid.values.iter_mut().for_each(|v| *v /= mass);
    }
    Ok(grid)
}
