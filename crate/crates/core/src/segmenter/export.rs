//! Annotation files (JSON) and timeline drawings (SVG).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{profile, Annotated, Interval, ProfileReport, Segment, SegmentLabel};
use crate::error::{Error, Result};
use crate::images::DECISION_HOP;

pub const ANNOTATION_SCHEMA_VERSION: u32 = 1;

/// On-disk form of one recording's annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub schema_version: u32,
    pub recording_id: String,
    pub duration: f64,
    pub decision_hop: f64,
    pub segments: Vec<Segment>,
    pub palmas: Vec<Interval>,
    pub profile: ProfileReport,
    /// (vocal, palmas, picked) per second.
    pub sequence_1hz: Vec<[u8; 3]>,
    pub short_input: bool,
}

impl AnnotationFile {
    pub fn new(recording_id: &str, annotated: &Annotated) -> Self {
        Self {
            schema_version: ANNOTATION_SCHEMA_VERSION,
            recording_id: recording_id.to_string(),
            duration: annotated.annotation.duration,
            decision_hop: DECISION_HOP,
            segments: annotated.annotation.segments.clone(),
            palmas: annotated.annotation.palmas.clone(),
            profile: profile(&annotated.track),
            sequence_1hz: super::sequence_1hz(&annotated.track),
            short_input: annotated.short_input,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text)?;
        if file.schema_version != ANNOTATION_SCHEMA_VERSION {
            return Err(Error::Metadata(format!(
                "annotation schema {} is not supported (expected {ANNOTATION_SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

const WIDTH: f64 = 960.0;
const MARGIN: f64 = 90.0;
const LANE_H: f64 = 28.0;

fn colour(label: SegmentLabel) -> &'static str {
    match label {
        SegmentLabel::Vocal => "#d9534f",
        SegmentLabel::GuitarPicked => "#5b9bd5",
        SegmentLabel::GuitarStrummed => "#2e5e8c",
        SegmentLabel::Silence => "#e6e6e6",
    }
}

/// Two-lane timeline: instrumentation segments on top, palmas below.
pub fn render_svg(file: &AnnotationFile) -> String {
    let scale = if file.duration > 0.0 { (WIDTH - MARGIN - 20.0) / file.duration } else { 0.0 };
    let x = |t: f64| MARGIN + t * scale;
    let height = 40.0 + 2.0 * (LANE_H + 12.0) + 40.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<text x="10" y="20">{}</text>"#, escape(&file.recording_id));
    let seg_y = 40.0;
    let palmas_y = seg_y + LANE_H + 12.0;
    let _ = writeln!(s, r#"<text x="10" y="{}">segments</text>"#, seg_y + 18.0);
    let _ = writeln!(s, r#"<text x="10" y="{}">palmas</text>"#, palmas_y + 18.0);
    for seg in &file.segments {
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{seg_y}" width="{:.2}" height="{LANE_H}" fill="{}"><title>{} {:.2}-{:.2} s</title></rect>"#,
            x(seg.start),
            (seg.end - seg.start) * scale,
            colour(seg.label),
            seg.label.name(),
            seg.start,
            seg.end
        );
    }
    for iv in &file.palmas {
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{palmas_y}" width="{:.2}" height="{LANE_H}" fill="#f0ad4e"><title>palmas {:.2}-{:.2} s</title></rect>"##,
            x(iv.start),
            (iv.end - iv.start) * scale,
            iv.start,
            iv.end
        );
    }
    let axis_y = palmas_y + LANE_H + 16.0;
    let step = tick_step(file.duration);
    let mut t = 0.0;
    while t <= file.duration + 1e-9 {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{axis_y}" text-anchor="middle">{t}</text>"#, x(t));
        t += step;
    }
    let mut lx = MARGIN;
    for label in [SegmentLabel::Vocal, SegmentLabel::GuitarPicked, SegmentLabel::GuitarStrummed, SegmentLabel::Silence] {
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            axis_y + 10.0,
            colour(label),
            lx + 14.0,
            axis_y + 19.0,
            label.name()
        );
        lx += 130.0;
    }
    s.push_str("</svg>\n");
    s
}

fn tick_step(duration: f64) -> f64 {
    [1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 60.0, 120.0, 300.0]
        .into_iter()
        .find(|&s| duration / s <= 12.0)
        .unwrap_or(600.0)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
