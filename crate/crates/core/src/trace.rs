//! Per-tick plant traces and wrench trajectories as CSV.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::jacobian::join;
use crate::plant::Wrench;

/// One row of the plant trace format.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub tick: usize,
    pub time: f64,
    pub actuation: Vec<f64>,
    pub raw_sensors: Vec<f64>,
    pub sensors: Vec<f64>,
    pub deformation: Vec<f64>,
    pub object_pose: [f64; 3],
    pub contact_force: [f64; 2],
}

/// Column header for a trace with the given channel labels.
pub fn trace_header(actuation_labels: &[String], sensor_labels: &[String]) -> String {
    let mut cols = vec!["tick".to_string(), "time".to_string()];
    cols.extend(actuation_labels.iter().map(|l| format!("a_{l}")));
    cols.extend(sensor_labels.iter().map(|l| format!("raw_{l}")));
    cols.extend(sensor_labels.iter().map(|l| format!("s_{l}")));
    cols.extend(sensor_labels.iter().map(|l| format!("ds_{l}")));
    cols.extend(["obj_x", "obj_y", "obj_theta", "force_x", "force_y"].map(String::from));
    cols.join(",")
}

pub fn write_trace<W: Write>(
    mut w: W,
    actuation_labels: &[String],
    sensor_labels: &[String],
    rows: &[TraceRow],
) -> Result<()> {
    writeln!(w, "{}", trace_header(actuation_labels, sensor_labels))?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.tick,
            r.time,
            join(r.actuation.iter()),
            join(r.raw_sensors.iter()),
            join(r.sensors.iter()),
            join(r.deformation.iter()),
            join(r.object_pose.iter()),
            join(r.contact_force.iter()),
        )?;
    }
    Ok(())
}

/// Reads a trace back; channel counts are recovered from the header.
pub fn read_trace<R: Read>(r: R) -> Result<Vec<TraceRow>> {
    let mut reader = csv::Reader::from_reader(r);
    let headers = reader.headers()?.clone();
    let count = |prefix: &str| headers.iter().filter(|h| h.starts_with(prefix)).count();
    let (m, n) = (count("a_"), count("raw_"));
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let v: Vec<f64> = record
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|_| Error::Format(format!("bad trace value {f:?}"))))
            .collect::<Result<_>>()?;
        if v.len() != 2 + m + 3 * n + 5 {
            return Err(Error::Format(format!("trace row has {} fields", v.len())));
        }
        let mut k = 2;
        let mut take = |len: usize| {
            let s = v[k..k + len].to_vec();
            k += len;
            s
        };
        let actuation = take(m);
        let raw_sensors = take(n);
        let sensors = take(n);
        let deformation = take(n);
        let tail = take(5);
        rows.push(TraceRow {
            tick: v[0] as usize,
            time: v[1],
            actuation,
            raw_sensors,
            sensors,
            deformation,
            object_pose: [tail[0], tail[1], tail[2]],
            contact_force: [tail[3], tail[4]],
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedWrench {
    pub t: f64,
    pub wrench: Wrench,
}

/// Parses a wrench trajectory with header `t,fx,fy,torque`.
pub fn read_wrench_trajectory<R: Read>(r: R) -> Result<Vec<TimedWrench>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if headers != ["t", "fx", "fy", "torque"] {
        return Err(Error::Format(format!("wrench header must be t,fx,fy,torque, got {headers:?}")));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let v: Vec<f64> = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| Error::Format(format!("bad wrench value {f:?}"))))
            .collect::<Result<_>>()?;
        out.push(TimedWrench { t: v[0], wrench: Wrench::new(v[1], v[2], v[3]) });
    }
    Ok(out)
}

pub fn write_wrench_trajectory<W: Write>(mut w: W, samples: &[TimedWrench]) -> Result<()> {
    writeln!(w, "t,fx,fy,torque")?;
    for s in samples {
        writeln!(w, "{},{},{},{}", s.t, s.wrench.fx, s.wrench.fy, s.wrench.torque)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_round_trip() {
        let rows = vec![TraceRow {
            tick: 3,
            time: 0.2,
            actuation: vec![0.5, 0.25],
            raw_sensors: vec![1.5],
            sensors: vec![0.3],
            deformation: vec![-0.01],
            object_pose: [0.0, 2.5, 0.1],
            contact_force: [0.0, -1.0],
        }];
        let mut buf = Vec::new();
        write_trace(&mut buf, &["p".into(), "q".into()], &["c".into()], &rows).unwrap();
        assert_eq!(read_trace(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn wrench_file_parsing() {
        let text = "t, fx, fy, torque\n0, 0.5, 0, 0\n0.1, 1.0, -0.5, 0.25\n";
        let w = read_wrench_trajectory(text.as_bytes()).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[1].wrench, Wrench::new(1.0, -0.5, 0.25));
        assert!(read_wrench_trajectory("a,b\n1,2\n".as_bytes()).is_err());
    }
}
