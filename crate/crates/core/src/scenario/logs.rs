//! Per-run CSV logs. Floats are written with 9 significant digits and empty
//! fields mark values that do not exist at that step.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::target::FusionMode;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const RELATIVE_FILE: &str = "relative.csv";
pub const TARGET_FILE: &str = "target.csv";
pub const CONTROL_FILE: &str = "control.csv";
pub const UWB_FILE: &str = "uwb.csv";
pub const MESSAGES_FILE: &str = "messages.csv";
pub const METRICS_FILE: &str = "metrics.json";

/// Formats with 9 significant digits, using the shortest text that reads back
/// to the rounded value.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    rounded.to_string()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub k: u64,
    pub t: f64,
    /// 0 for the target.
    pub body: usize,
    pub alive: bool,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeRow {
    pub k: u64,
    pub t: f64,
    pub agent: usize,
    pub neighbor: usize,
    pub estimator: String,
    pub px_hat: f64,
    pub py_hat: f64,
    pub px_true: f64,
    pub py_true: f64,
    pub error: f64,
    pub trace_p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetRow {
    pub k: u64,
    pub t: f64,
    pub agent: usize,
    pub mode: FusionMode,
    pub visible: bool,
    pub meas_error: Option<f64>,
    pub est_error: Option<f64>,
    pub px_hat: Option<f64>,
    pub py_hat: Option<f64>,
    pub trace_p: Option<f64>,
    pub numerical_failure: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlRow {
    pub k: u64,
    pub t: f64,
    pub agent: usize,
    pub theta: Option<f64>,
    pub pstar_x: Option<f64>,
    pub pstar_y: Option<f64>,
    pub u1_raw_x: f64,
    pub u1_raw_y: f64,
    pub u2_raw_x: f64,
    pub u2_raw_y: f64,
    pub ux: f64,
    pub uy: f64,
    pub psi: f64,
    pub psi_hat: Option<f64>,
    pub radius_error_est: Option<f64>,
    pub radius_error: f64,
    pub yaw_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UwbRow {
    pub k: u64,
    pub t: f64,
    pub i: usize,
    pub j: usize,
    pub d_true: f64,
    pub d_filtered: Option<f64>,
    pub held: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MessageRow {
    pub step: u64,
    pub sender: usize,
    pub recipient: usize,
    pub kind: String,
    pub delivered: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LogSet {
    pub trajectory: Vec<TrajectoryRow>,
    pub relative: Vec<RelativeRow>,
    pub target: Vec<TargetRow>,
    pub control: Vec<ControlRow>,
    pub uwb: Vec<UwbRow>,
    pub messages: Option<Vec<MessageRow>>,
}

const TRAJECTORY_HEADER: [&str; 9] = ["k", "t", "body", "alive", "x", "y", "vx", "vy", "psi"];
const RELATIVE_HEADER: [&str; 11] = [
    "k",
    "t",
    "agent",
    "neighbor",
    "estimator",
    "px_hat",
    "py_hat",
    "px_true",
    "py_true",
    "error",
    "trace_p",
];
const TARGET_HEADER: [&str; 11] = [
    "k",
    "t",
    "agent",
    "mode",
    "visible",
    "meas_error",
    "est_error",
    "px_hat",
    "py_hat",
    "trace_p",
    "numerical_failure",
];
const CONTROL_HEADER: [&str; 17] = [
    "k",
    "t",
    "agent",
    "theta",
    "pstar_x",
    "pstar_y",
    "u1_raw_x",
    "u1_raw_y",
    "u2_raw_x",
    "u2_raw_y",
    "ux",
    "uy",
    "psi",
    "psi_hat",
    "radius_error_est",
    "radius_error",
    "yaw_error",
];
const UWB_HEADER: [&str; 7] = ["k", "t", "i", "j", "d_true", "d_filtered", "held"];
const MESSAGES_HEADER: [&str; 5] = ["step", "sender", "recipient", "kind", "delivered"];

fn b(v: bool) -> String {
    u8::from(v).to_string()
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

impl LogSet {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_csv(
            &dir.join(TRAJECTORY_FILE),
            &TRAJECTORY_HEADER,
            self.trajectory.iter().map(|r| {
                vec![
                    r.k.to_string(),
                    fmt_sig(r.t),
                    r.body.to_string(),
                    b(r.alive),
                    fmt_sig(r.x),
                    fmt_sig(r.y),
                    fmt_sig(r.vx),
                    fmt_sig(r.vy),
                    fmt_sig(r.psi),
                ]
            }),
        )?;
        write_csv(
            &dir.join(RELATIVE_FILE),
            &RELATIVE_HEADER,
            self.relative.iter().map(|r| {
                vec![
                    r.k.to_string(),
                    fmt_sig(r.t),
                    r.agent.to_string(),
                    r.neighbor.to_string(),
                    r.estimator.clone(),
                    fmt_sig(r.px_hat),
                    fmt_sig(r.py_hat),
                    fmt_sig(r.px_true),
                    fmt_sig(r.py_true),
                    fmt_sig(r.error),
                    fmt_sig(r.trace_p),
                ]
            }),
        )?;
        write_csv(
            &dir.join(TARGET_FILE),
            &TARGET_HEADER,
            self.target.iter().map(|r| {
                vec![
                    r.k.to_string(),
                    fmt_sig(r.t),
                    r.agent.to_string(),
                    r.mode.as_str().to_string(),
                    b(r.visible),
                    fmt_opt(r.meas_error),
                    fmt_opt(r.est_error),
                    fmt_opt(r.px_hat),
                    fmt_opt(r.py_hat),
                    fmt_opt(r.trace_p),
                    b(r.numerical_failure),
                ]
            }),
        )?;
        write_csv(
            &dir.join(CONTROL_FILE),
            &CONTROL_HEADER,
            self.control.iter().map(|r| {
                vec![
                    r.k.to_string(),
                    fmt_sig(r.t),
                    r.agent.to_string(),
                    fmt_opt(r.theta),
                    fmt_opt(r.pstar_x),
                    fmt_opt(r.pstar_y),
                    fmt_sig(r.u1_raw_x),
                    fmt_sig(r.u1_raw_y),
                    fmt_sig(r.u2_raw_x),
                    fmt_sig(r.u2_raw_y),
                    fmt_sig(r.ux),
                    fmt_sig(r.uy),
                    fmt_sig(r.psi),
                    fmt_opt(r.psi_hat),
                    fmt_opt(r.radius_error_est),
                    fmt_sig(r.radius_error),
                    fmt_sig(r.yaw_error),
                ]
            }),
        )?;
        write_csv(
            &dir.join(UWB_FILE),
            &UWB_HEADER,
            self.uwb.iter().map(|r| {
                vec![
                    r.k.to_string(),
                    fmt_sig(r.t),
                    r.i.to_string(),
                    r.j.to_string(),
                    fmt_sig(r.d_true),
                    fmt_opt(r.d_filtered),
                    r.held.to_string(),
                ]
            }),
        )?;
        if let Some(msgs) = &self.messages {
            write_csv(
                &dir.join(MESSAGES_FILE),
                &MESSAGES_HEADER,
                msgs.iter().map(|r| {
                    vec![
                        r.step.to_string(),
                        r.sender.to_string(),
                        r.recipient.to_string(),
                        r.kind.clone(),
                        b(r.delivered),
                    ]
                }),
            )?;
        }
        Ok(())
    }

    /// Reads a log directory back. A missing column yields a schema error
    /// naming the file and column; `messages.csv` is optional.
    pub fn read(dir: &Path) -> Result<Self> {
        let trajectory = read_csv(dir, TRAJECTORY_FILE, &TRAJECTORY_HEADER, |r| {
            Ok(TrajectoryRow {
                k: r.parse("k")?,
                t: r.parse("t")?,
                body: r.parse("body")?,
                alive: r.flag("alive")?,
                x: r.parse("x")?,
                y: r.parse("y")?,
                vx: r.parse("vx")?,
                vy: r.parse("vy")?,
                psi: r.parse("psi")?,
            })
        })?;
        let relative = read_csv(dir, RELATIVE_FILE, &RELATIVE_HEADER, |r| {
            Ok(RelativeRow {
                k: r.parse("k")?,
                t: r.parse("t")?,
                agent: r.parse("agent")?,
                neighbor: r.parse("neighbor")?,
                estimator: r.get("estimator")?.to_string(),
                px_hat: r.parse("px_hat")?,
                py_hat: r.parse("py_hat")?,
                px_true: r.parse("px_true")?,
                py_true: r.parse("py_true")?,
                error: r.parse("error")?,
                trace_p: r.parse("trace_p")?,
            })
        })?;
        let target = read_csv(dir, TARGET_FILE, &TARGET_HEADER, |r| {
            let mode = match r.get("mode")? {
                "direct" => FusionMode::Direct,
                "indirect" => FusionMode::Indirect,
                "none" => FusionMode::None,
                other => return Err(r.bad("mode", other)),
            };
            Ok(TargetRow {
                k: r.parse("k")?,
                t: r.parse("t")?,
                agent: r.parse("agent")?,
                mode,
                visible: r.flag("visible")?,
                meas_error: r.opt("meas_error")?,
                est_error: r.opt("est_error")?,
                px_hat: r.opt("px_hat")?,
                py_hat: r.opt("py_hat")?,
                trace_p: r.opt("trace_p")?,
                numerical_failure: r.flag("numerical_failure")?,
            })
        })?;
        let control = read_csv(dir, CONTROL_FILE, &CONTROL_HEADER, |r| {
            Ok(ControlRow {
                k: r.parse("k")?,
                t: r.parse("t")?,
                agent: r.parse("agent")?,
                theta: r.opt("theta")?,
                pstar_x: r.opt("pstar_x")?,
                pstar_y: r.opt("pstar_y")?,
                u1_raw_x: r.parse("u1_raw_x")?,
                u1_raw_y: r.parse("u1_raw_y")?,
                u2_raw_x: r.parse("u2_raw_x")?,
                u2_raw_y: r.parse("u2_raw_y")?,
                ux: r.parse("ux")?,
                uy: r.parse("uy")?,
                psi: r.parse("psi")?,
                psi_hat: r.opt("psi_hat")?,
                radius_error_est: r.opt("radius_error_est")?,
                radius_error: r.parse("radius_error")?,
                yaw_error: r.parse("yaw_error")?,
            })
        })?;
        let uwb = read_csv(dir, UWB_FILE, &UWB_HEADER, |r| {
            Ok(UwbRow {
                k: r.parse("k")?,
                t: r.parse("t")?,
                i: r.parse("i")?,
                j: r.parse("j")?,
                d_true: r.parse("d_true")?,
                d_filtered: r.opt("d_filtered")?,
                held: r.parse("held")?,
            })
        })?;
        let messages = if dir.join(MESSAGES_FILE).exists() {
            Some(read_csv(dir, MESSAGES_FILE, &MESSAGES_HEADER, |r| {
                Ok(MessageRow {
                    step: r.parse("step")?,
                    sender: r.parse("sender")?,
                    recipient: r.parse("recipient")?,
                    kind: r.get("kind")?.to_string(),
                    delivered: r.flag("delivered")?,
                })
            })?)
        } else {
            None
        };
        Ok(LogSet {
            trajectory,
            relative,
            target,
            control,
            uwb,
            messages,
        })
    }
}

struct Row<'a> {
    file: &'a str,
    line: u64,
    columns: &'a HashMap<String, usize>,
    record: &'a csv::StringRecord,
}

impl Row<'_> {
    fn get(&self, column: &str) -> Result<&str> {
        let idx = self.columns.get(column).ok_or_else(|| Error::Schema {
            file: self.file.to_string(),
            column: column.to_string(),
        })?;
        self.record
            .get(*idx)
            .ok_or_else(|| Error::Io(format!("{}:{}: short row", self.file, self.line)))
    }

    fn bad(&self, column: &str, value: &str) -> Error {
        Error::Io(format!(
            "{}:{}: bad value `{value}` in column `{column}`",
            self.file, self.line
        ))
    }

    fn parse<T: std::str::FromStr>(&self, column: &str) -> Result<T> {
        let s = self.get(column)?;
        s.parse().map_err(|_| self.bad(column, s))
    }

    fn opt(&self, column: &str) -> Result<Option<f64>> {
        let s = self.get(column)?;
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| self.bad(column, s))
        }
    }

    fn flag(&self, column: &str) -> Result<bool> {
        match self.get(column)? {
            "1" => Ok(true),
            "0" => Ok(false),
            other => Err(self.bad(column, other)),
        }
    }
}

fn read_csv<T>(
    dir: &Path,
    file: &str,
    header: &[&str],
    mut f: impl FnMut(&Row) -> Result<T>,
) -> Result<Vec<T>> {
    let path = dir.join(file);
    let mut rdr =
        csv::Reader::from_path(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let columns: HashMap<String, usize> = rdr
        .headers()?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.to_string(), i))
        .collect();
    if let Some(missing) = header.iter().find(|h| !columns.contains_key(**h)) {
        return Err(Error::Schema {
            file: file.to_string(),
            column: missing.to_string(),
        });
    }
    let mut out = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let record = rec?;
        out.push(f(&Row {
            file,
            line: n as u64 + 2,
            columns: &columns,
            record: &record,
        })?);
    }
    Ok(out)
}
