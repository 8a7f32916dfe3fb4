//! CSV and JSON emitters for pulses, grids, trajectories and reports.
//!
//! All CSVs use `,` separators, `\n` line endings and one header row. Floats
//! are written in shortest round-trip form, so a pulse read back is
//! bit-identical to the one written.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{invalid, Result};
use crate::propagation::ControlSignal;
use crate::synthesis::{ErrorGrid, PopulationSample, SynthesisReport};

pub const PULSE_HEADER: [&str; 5] = ["t", "u1x", "u1y", "u2x", "u2y"];
pub const GRID_HEADER: [&str; 3] = ["alpha", "beta", "error"];
pub const TRAJECTORY_HEADER: [&str; 7] = ["t", "p00", "p01", "p10", "p11", "trace", "purity"];

fn io_err(e: impl std::fmt::Display) -> crate::Error {
    invalid(e.to_string())
}

fn format_f64(v: f64) -> String {
    if v.is_finite() {
        ryu::Buffer::new().format_finite(v).to_owned()
    } else {
        v.to_string()
    }
}

fn write_rows<W: Write>(
    out: W,
    header: &[&str],
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format_f64(*v)))
            .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path)
        .map_err(|e| invalid(format!("cannot write {}: {e}", path.display())))
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))
}

/// One row per step: `t_k = k·dt` followed by the four amplitudes.
pub fn write_pulses<W: Write>(out: W, pulse: &ControlSignal) -> Result<()> {
    let dt = pulse.dt();
    write_rows(
        out,
        &PULSE_HEADER,
        pulse.samples().iter().enumerate().map(|(k, s)| {
            let mut row = vec![k as f64 * dt];
            row.extend_from_slice(s);
            row
        }),
    )
}

/// Reads a pulse CSV. The step size is taken from `dt`, which must match
/// the configuration; the `t` column is checked against it.
pub fn read_pulses<R: Read>(input: R, dt: f64) -> Result<ControlSignal> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = r.headers().map_err(io_err)?.clone();
    if header.iter().collect::<Vec<_>>() != PULSE_HEADER {
        return Err(invalid(format!(
            "pulse header must be `{}`, got `{}`",
            PULSE_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut samples = Vec::new();
    for (k, record) in r.records().enumerate() {
        let record = record.map_err(io_err)?;
        let values = record
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| invalid(format!("pulse row {}: {e}", k + 1)))?;
        let t = values[0];
        if (t - k as f64 * dt).abs() > 1e-9 * (1.0 + t.abs()) {
            return Err(invalid(format!(
                "pulse row {} has t = {t}, expected {} for dt = {dt}",
                k + 1,
                k as f64 * dt
            )));
        }
        samples.push([values[1], values[2], values[3], values[4]]);
    }
    ControlSignal::new(samples, dt)
}

pub fn save_pulses(path: &Path, pulse: &ControlSignal) -> Result<()> {
    write_pulses(create(path)?, pulse)
}

pub fn load_pulses(path: &Path, dt: f64) -> Result<ControlSignal> {
    read_pulses(open(path)?, dt)
}

/// Row-major over α then β.
pub fn write_grid<W: Write>(out: W, grid: &ErrorGrid) -> Result<()> {
    write_rows(
        out,
        &GRID_HEADER,
        grid.rows().map(|(a, b, e)| vec![a, b, e]),
    )
}

pub fn save_grid(path: &Path, grid: &ErrorGrid) -> Result<()> {
    write_grid(create(path)?, grid)
}

pub fn write_trajectory<W: Write>(out: W, samples: &[PopulationSample]) -> Result<()> {
    write_rows(
        out,
        &TRAJECTORY_HEADER,
        samples.iter().map(|s| {
            let mut row = vec![s.t];
            row.extend_from_slice(&s.populations);
            row.push(s.trace);
            row.push(s.purity);
            row
        }),
    )
}

pub fn save_trajectory(path: &Path, samples: &[PopulationSample]) -> Result<()> {
    write_trajectory(create(path)?, samples)
}

/// Pretty-printed JSON. Rejected trials that never produced an objective
/// appear as `null`.
pub fn write_report<W: Write>(mut out: W, report: &SynthesisReport) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, report).map_err(io_err)?;
    out.write_all(b"\n").map_err(io_err)
}

pub fn save_report(path: &Path, report: &SynthesisReport) -> Result<()> {
    write_report(create(path)?, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pulse_round_trip_is_exact() {
        let samples = vec![
            [0.1, -1.0 / 3.0, 9.999999999999998, 1e-300],
            [std::f64::consts::PI, 0.0, -0.0, 2.5],
        ];
        let pulse = ControlSignal::new(samples, 0.01).unwrap();
        let mut buf = Vec::new();
        write_pulses(&mut buf, &pulse).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,u1x,u1y,u2x,u2y\n0.0,0.1,"));
        assert!(!text.contains('\r'));
        let back = read_pulses(buf.as_slice(), 0.01).unwrap();
        assert_eq!(back, pulse);
    }

    #[test]
    fn pulse_reader_rejects_bad_input() {
        assert!(read_pulses("t,a,b,c,d\n0,1,2,3,4\n".as_bytes(), 0.1).is_err());
        assert!(read_pulses("t,u1x,u1y,u2x,u2y\n0,1,2,x,4\n".as_bytes(), 0.1).is_err());
        assert!(read_pulses("t,u1x,u1y,u2x,u2y\n0,1,2,3\n".as_bytes(), 0.1).is_err());
        assert!(read_pulses(
            "t,u1x,u1y,u2x,u2y\n0,1,2,3,4\n0.5,1,2,3,4\n".as_bytes(),
            0.1
        )
        .is_err());
        assert!(read_pulses("t,u1x,u1y,u2x,u2y\n".as_bytes(), 0.1).is_err());
    }

    proptest::proptest! {
        #[test]
        fn any_finite_pulse_round_trips(
            values in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 4..40),
            dt in 1e-6f64..1.0,
        ) {
            let samples: Vec<[f64; 4]> = values.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
            let pulse = ControlSignal::new(samples, dt).unwrap();
            let mut buf = Vec::new();
            write_pulses(&mut buf, &pulse).unwrap();
            proptest::prop_assert_eq!(read_pulses(buf.as_slice(), dt).unwrap(), pulse);
        }
    }

    #[test]
    fn grid_rows_are_alpha_major() {
        let grid = ErrorGrid {
            alpha_values: vec![0.0, 2.0],
            beta_values: vec![0.8, 1.0, 1.2],
            errors: nalgebra::DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
        };
        let mut buf = Vec::new();
        write_grid(&mut buf, &grid).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "alpha,beta,error");
        assert_eq!(lines[1], "0.0,0.8,1.0");
        assert_eq!(lines[3], "0.0,1.2,3.0");
        assert_eq!(lines[4], "2.0,0.8,4.0");
        assert_eq!(lines.len(), 7);
    }
}
