use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tracker::{BBox, Detection};

/// One line of a MOTChallenge file. Raw detections carry `id == -1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotRow {
    pub frame: u32,
    pub id: i64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub conf: f64,
    pub class: i64,
    pub visibility: f64,
}

impl MotRow {
    pub fn result(frame: u32, id: u64, b: BBox, conf: f64) -> Self {
        Self {
            frame,
            id: id as i64,
            x: b.x,
            y: b.y,
            w: b.w,
            h: b.h,
            conf,
            class: -1,
            visibility: -1.0,
        }
    }

    pub fn detection(frame: u32, b: BBox, conf: f64) -> Self {
        Self {
            id: -1,
            class: 1,
            visibility: 1.0,
            ..Self::result(frame, 0, b, conf)
        }
    }

    pub fn bbox(&self) -> BBox {
        BBox {
            x: self.x,
            y: self.y,
            w: self.w,
            h: self.h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedMot {
    pub rows: Vec<MotRow>,
    /// 0-based index of each accepted row among the non-blank lines, which
    /// is the alignment key for feature sidecars.
    pub source_index: Vec<usize>,
    pub rejected: Vec<Rejection>,
}

fn field<T: std::str::FromStr>(s: &str, line: usize, name: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("{name} field {s:?} is not numeric"),
    })
}

/// Integer fields are accepted in integral float spelling (`"3.0"`).
fn int_field(s: &str, line: usize, name: &str) -> Result<i64> {
    if let Ok(v) = s.trim().parse::<i64>() {
        return Ok(v);
    }
    let v: f64 = field(s, line, name)?;
    if v.fract() != 0.0 || !v.is_finite() || v.abs() > 9.0e15 {
        return Err(Error::Parse {
            line,
            message: format!("{name} field {s:?} is not an integer"),
        });
    }
    Ok(v as i64)
}

/// Parses comma-separated MOTChallenge text. Blank lines are skipped;
/// missing `conf`, `class`, and `visibility` default to 1.
pub fn parse_mot(text: &str) -> Result<ParsedMot> {
    let mut out = ParsedMot::default();
    let mut data_index = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let source = data_index;
        data_index += 1;
        let f: Vec<&str> = raw.split(',').collect();
        if f.len() < 6 {
            return Err(Error::Parse {
                line,
                message: format!("expected at least 6 fields, found {}", f.len()),
            });
        }
        let frame = int_field(f[0], line, "frame")?;
        let id = int_field(f[1], line, "id")?;
        let [x, y, w, h] = [2, 3, 4, 5].map(|k| field::<f64>(f[k], line, "box"));
        let (x, y, w, h) = (x?, y?, w?, h?);
        let conf = f
            .get(6)
            .map(|s| field::<f64>(s, line, "conf"))
            .transpose()?
            .unwrap_or(1.0);
        let class = f
            .get(7)
            .map(|s| int_field(s, line, "class"))
            .transpose()?
            .unwrap_or(1);
        let visibility = f
            .get(8)
            .map(|s| field::<f64>(s, line, "visibility"))
            .transpose()?
            .unwrap_or(1.0);
        if ![x, y, w, h, conf, visibility].iter().all(|v| v.is_finite()) {
            return Err(Error::Parse {
                line,
                message: "non-finite value".into(),
            });
        }
        let reject = if frame < 1 || frame > u32::MAX as i64 {
            Some(format!("frame {frame} out of range"))
        } else if w <= 0.0 || h <= 0.0 {
            Some(format!("non-positive size {w}x{h}"))
        } else {
            None
        };
        if let Some(reason) = reject {
            out.rejected.push(Rejection { line, reason });
            continue;
        }
        out.rows.push(MotRow {
            frame: frame as u32,
            id,
            x,
            y,
            w,
            h,
            conf,
            class,
            visibility,
        });
        out.source_index.push(source);
    }
    Ok(out)
}

fn fmt2(out: &mut String, v: f64) {
    let s = format!("{v:.2}");
    // -0.00 and 0.00 must serialize identically
    if s == "-0.00" {
        out.push_str("0.00");
    } else {
        out.push_str(&s);
    }
}

fn write_rows(rows: &[MotRow], id_of: impl Fn(&MotRow) -> i64) -> String {
    let mut out = String::new();
    for r in rows {
        let _ = write!(out, "{},{},", r.frame, id_of(r));
        for v in [r.x, r.y, r.w, r.h, r.conf] {
            fmt2(&mut out, v);
            out.push(',');
        }
        out.push_str("-1,-1,-1\n");
    }
    out
}

/// Canonical result file: `frame,id,x,y,w,h,conf,-1,-1,-1`, two decimals,
/// sorted by `(frame, id)`.
pub fn write_mot_results(rows: &[MotRow]) -> Result<String> {
    if let Some(r) = rows.iter().find(|r| r.id < 1) {
        return Err(Error::InvalidRow(format!(
            "result row in frame {} has id {}",
            r.frame, r.id
        )));
    }
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|r| (r.frame, r.id));
    Ok(write_rows(&sorted, |r| r.id))
}

/// Detection file in input order with `id = -1`.
pub fn write_mot_detections(rows: &[MotRow]) -> String {
    write_rows(rows, |_| -1)
}

/// Ground-truth file `frame,id,x,y,w,h,conf,class,visibility` in input order.
pub fn write_mot_ground_truth(rows: &[MotRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let _ = write!(out, "{},{},", r.frame, r.id);
        for v in [r.x, r.y, r.w, r.h, r.conf] {
            fmt2(&mut out, v);
            out.push(',');
        }
        let _ = write!(out, "{},", r.class);
        fmt2(&mut out, r.visibility);
        out.push('\n');
    }
    out
}

/// One comma-separated feature vector per non-blank line.
pub fn parse_features(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let v = raw
            .split(',')
            .map(|s| field::<f64>(s, i + 1, "feature"))
            .collect::<Result<Vec<f64>>>()?;
        out.push(v);
    }
    Ok(out)
}

/// Shortest round-trip formatting, so parsing restores the exact values.
pub fn write_features(features: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for f in features {
        let line: Vec<String> = f.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Builds detections from parsed rows, attaching sidecar features by source
/// line, and orders them by frame (stable within a frame).
pub fn detections_from_parsed(
    parsed: &ParsedMot,
    features: Option<&[Vec<f64>]>,
) -> Result<Vec<Detection>> {
    let mut dets = Vec::with_capacity(parsed.rows.len());
    for (r, &src) in parsed.rows.iter().zip(&parsed.source_index) {
        let feature = match features {
            None => None,
            Some(fs) => Some(
                fs.get(src)
                    .ok_or_else(|| {
                        Error::Feature(format!(
                            "feature sidecar has {} rows, detection line {} needs one",
                            fs.len(),
                            src + 1
                        ))
                    })?
                    .clone(),
            ),
        };
        dets.push(Detection::new(r.frame, r.bbox(), r.conf, feature)?);
    }
    if let Some(fs) = features {
        let lines = parsed.source_index.len() + parsed.rejected.len();
        if fs.len() != lines {
            return Err(Error::Feature(format!(
                "feature sidecar has {} rows for {lines} detection lines",
                fs.len()
            )));
        }
    }
    dets.sort_by_key(|d| d.frame);
    Ok(dets)
}
