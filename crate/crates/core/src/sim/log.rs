//! Tick-by-tick episode log and its CSV form.
//!
//! Column order: `time`, body pose (`px py pz qw qx qy qz`), world-frame
//! body twist (`vx vy vz wx wy wz`), commanded tips (`cmd_<leg>_<axis>`),
//! actual tips (`act_<leg>_<axis>`), joint torques (`tau_<leg>_<joint>`),
//! contact flags (`contact_<leg>`), clamp flags (`clamp_<leg>_<joint>`),
//! then the commanded planar twist (`cmd_vx cmd_vy cmd_wz`) and
//! `global_phase`. Tips are body-frame positions.

use crate::kinematics::JOINT_NAMES;
use crate::model::LegId;
use crate::trajectory::PlanarTwist;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use std::io::{Read, Write};
use thiserror::Error;

const AXES: [&str; 3] = ["x", "y", "z"];

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log row {row}: {message}")]
    Schema { row: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub time: f64,
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub linear_velocity: Vector3<f64>,
    /// World frame.
    pub angular_velocity: Vector3<f64>,
    pub commanded_tips: [Vector3<f64>; 6],
    pub actual_tips: [Vector3<f64>; 6],
    pub torques: [Vector3<f64>; 6],
    pub contacts: [bool; 6],
    pub clamped: [[bool; 3]; 6],
    pub command: PlanarTwist,
    pub global_phase: f64,
}

impl LogRow {
    /// Body velocity expressed in the body frame.
    pub fn body_velocity(&self) -> Vector3<f64> {
        self.orientation.inverse() * self.linear_velocity
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeLog {
    pub rows: Vec<LogRow>,
}

pub fn header() -> Vec<String> {
    let mut h: Vec<String> = ["time", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for prefix in ["cmd", "act"] {
        for leg in LegId::ALL {
            for a in AXES {
                h.push(format!("{prefix}_{leg}_{a}"));
            }
        }
    }
    for leg in LegId::ALL {
        for j in JOINT_NAMES {
            h.push(format!("tau_{leg}_{j}"));
        }
    }
    for leg in LegId::ALL {
        h.push(format!("contact_{leg}"));
    }
    for leg in LegId::ALL {
        for j in JOINT_NAMES {
            h.push(format!("clamp_{leg}_{j}"));
        }
    }
    h.extend(["cmd_vx", "cmd_vy", "cmd_wz", "global_phase"].map(String::from));
    h
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

fn record(r: &LogRow) -> Vec<String> {
    let f9 = |v: f64| format!("{v:.9}");
    let f6 = |v: f64| format!("{v:.6}");
    let q = r.orientation.quaternion();
    let mut out = vec![f6(r.time)];
    out.extend(r.position.iter().map(|v| f9(*v)));
    out.extend([q.w, q.i, q.j, q.k].map(f9));
    out.extend(r.linear_velocity.iter().chain(r.angular_velocity.iter()).map(|v| f9(*v)));
    for tips in [&r.commanded_tips, &r.actual_tips] {
        for t in tips {
            out.extend(t.iter().map(|v| f9(*v)));
        }
    }
    for t in &r.torques {
        out.extend(t.iter().map(|v| f6(*v)));
    }
    out.extend(r.contacts.map(flag));
    for c in &r.clamped {
        out.extend(c.map(flag));
    }
    out.extend([r.command.vx, r.command.vy, r.command.wz].map(f9));
    out.push(f9(r.global_phase));
    out
}

impl EpisodeLog {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), LogError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(header())?;
        for r in &self.rows {
            wr.write_record(record(r))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: Read>(r: R) -> Result<EpisodeLog, LogError> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let expected = header();
        let got: Vec<String> = rd.headers()?.iter().map(String::from).collect();
        if got != expected {
            let at = got
                .iter()
                .zip(&expected)
                .position(|(a, b)| a != b)
                .unwrap_or(got.len().min(expected.len()));
            return Err(LogError::Schema {
                row: 1,
                message: format!(
                    "header mismatch at column {}: expected `{}`, found `{}`",
                    at + 1,
                    expected.get(at).map_or("<end>", |s| s.as_str()),
                    got.get(at).map_or("<end>", |s| s.as_str())
                ),
            });
        }
        let mut rows = Vec::new();
        for (k, rec) in rd.records().enumerate() {
            // Row numbers count the header as row 1.
            let row = k + 2;
            let rec = rec.map_err(|e| LogError::Schema {
                row,
                message: e.to_string(),
            })?;
            rows.push(parse_row(&rec, row)?);
        }
        Ok(EpisodeLog { rows })
    }
}

fn parse_row(rec: &csv::StringRecord, row: usize) -> Result<LogRow, LogError> {
    if rec.len() != header().len() {
        return Err(LogError::Schema {
            row,
            message: format!("expected {} fields, found {}", header().len(), rec.len()),
        });
    }
    let mut it = rec.iter().enumerate();
    let mut num = || -> Result<f64, LogError> {
        let (col, s) = it.next().expect("length checked");
        s.trim().parse::<f64>().map_err(|_| LogError::Schema {
            row,
            message: format!("column {} (`{}`): cannot parse `{s}` as a number", col + 1, header()[col]),
        })
    };
    let time = num()?;
    let v3 =
        |num: &mut dyn FnMut() -> Result<f64, LogError>| -> Result<Vector3<f64>, LogError> { Ok(Vector3::new(num()?, num()?, num()?)) };
    let position = v3(&mut num)?;
    let (w, i, j, k) = (num()?, num()?, num()?, num()?);
    let orientation = UnitQuaternion::new_normalize(Quaternion::new(w, i, j, k));
    let linear_velocity = v3(&mut num)?;
    let angular_velocity = v3(&mut num)?;
    let mut commanded_tips = [Vector3::zeros(); 6];
    for t in &mut commanded_tips {
        *t = v3(&mut num)?;
    }
    let mut actual_tips = [Vector3::zeros(); 6];
    for t in &mut actual_tips {
        *t = v3(&mut num)?;
    }
    let mut torques = [Vector3::zeros(); 6];
    for t in &mut torques {
        *t = v3(&mut num)?;
    }
    let mut contacts = [false; 6];
    for c in &mut contacts {
        *c = num()? != 0.0;
    }
    let mut clamped = [[false; 3]; 6];
    for c in clamped.iter_mut().flatten() {
        *c = num()? != 0.0;
    }
    let command = PlanarTwist::new(num()?, num()?, num()?);
    let global_phase = num()?;
    Ok(LogRow {
        time,
        position,
        orientation,
        linear_velocity,
        angular_velocity,
        commanded_tips,
        actual_tips,
        torques,
        contacts,
        clamped,
        command,
        global_phase,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64) -> LogRow {
        LogRow {
            time: t,
            position: Vector3::new(0.1, -0.2, 0.55),
            orientation: UnitQuaternion::from_euler_angles(0.01, -0.02, 0.3),
            linear_velocity: Vector3::new(0.3, 0.01, 0.0),
            angular_velocity: Vector3::new(0.0, 0.0, 0.1),
            commanded_tips: std::array::from_fn(|i| Vector3::new(i as f64, 0.5, -0.55)),
            actual_tips: std::array::from_fn(|i| Vector3::new(i as f64, 0.49, -0.55)),
            torques: std::array::from_fn(|i| Vector3::new(1.0, -26.5 - i as f64, 3.25)),
            contacts: [true, false, true, false, true, false],
            clamped: std::array::from_fn(|i| [i == 2, false, false]),
            command: PlanarTwist::forward(0.3),
            global_phase: t * 0.5,
        }
    }

    #[test]
    fn header_has_the_documented_width() {
        assert_eq!(header().len(), 1 + 7 + 6 + 18 + 18 + 18 + 6 + 18 + 4);
        assert_eq!(header()[0], "time");
        assert_eq!(header()[14], "cmd_fl_x");
    }

    #[test]
    fn csv_round_trips() {
        let log = EpisodeLog {
            rows: (0..5).map(|k| row(k as f64 / 800.0)).collect(),
        };
        let text = log.to_csv_string();
        let back = EpisodeLog::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.rows.len(), 5);
        assert_eq!(back.to_csv_string(), text);
        assert_eq!(back.rows[2].contacts, log.rows[2].contacts);
        assert!((back.rows[3].position - log.rows[3].position).norm() < 1e-9);
    }

    #[test]
    fn malformed_rows_name_their_row() {
        let log = EpisodeLog {
            rows: (0..3).map(|k| row(k as f64)).collect(),
        };
        let text = log.to_csv_string();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[3] = lines[3].replacen("0.550000000", "oops", 1);
        let err = EpisodeLog::read_csv(lines.join("\n").as_bytes()).unwrap_err();
        match err {
            LogError::Schema { row, .. } => assert_eq!(row, 4),
            other => panic!("{other}"),
        }
    }
}
