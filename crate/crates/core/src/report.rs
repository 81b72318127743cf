//! Text artifacts of a run: `trajectory.csv`, `summary.txt`, `plots.gp`, and
//! the per-source comparison table.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::dynamics::DynamicTrajectory;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const TRAJECTORY_HEADER: &str = "i,k_i,T_i,v1,v2,v3,trace_err_est,trace_err_actual";
pub const COMPARE_HEADER: &str = "source,pchip_rel_err,hutch_ainv_rel_err,hutch_e_rel_err";

/// Ten significant digits, scientific notation.
pub fn fmt_sig<T: Scalar>(v: T) -> String {
    format!("{:.9e}", v.as_f64())
}

fn fmt_opt<T: Scalar>(v: Option<T>) -> String {
    v.map(fmt_sig).unwrap_or_else(|| "NA".to_string())
}

pub fn write_trajectory_csv<T: Scalar>(traj: &DynamicTrajectory<T>, mut w: impl Write) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for r in &traj.records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.i,
            r.k_i,
            fmt_sig(r.trace_fit),
            fmt_sig(r.var.v1),
            fmt_opt(r.var.v2),
            fmt_opt(r.var.v3),
            fmt_opt(r.trace_err_est),
            fmt_opt(r.trace_err_actual),
        )?;
    }
    Ok(())
}

/// `config` lines are echoed verbatim under a `[config]` header.
pub fn write_summary<T: Scalar>(
    traj: &DynamicTrajectory<T>,
    config: &[(String, String)],
    oracle_trace: Option<T>,
    mut w: impl Write,
) -> io::Result<()> {
    writeln!(w, "final_trace = {}", fmt_opt(traj.final_trace()))?;
    writeln!(w, "steps = {}", traj.records.len())?;
    if let Some(last) = traj.records.last() {
        writeln!(w, "fit_points = {}", last.k_i)?;
        writeln!(w, "trace_err_est = {}", fmt_opt(last.trace_err_est))?;
        let names = [
            "var_unit_Efit_per_sample",
            "var_hutch_E_per_sample",
            "var_hutch_Ainv_per_sample",
        ];
        for (name, v) in names.iter().zip(last.var.per_sample) {
            writeln!(w, "{name} = {}", fmt_opt(v))?;
        }
    }
    if let Some(t) = oracle_trace {
        writeln!(w, "oracle_trace = {}", fmt_sig(t))?;
    }
    let chosen = traj
        .chosen_followup
        .map(|f| f.to_string())
        .unwrap_or_else(|| "NA".into());
    writeln!(w, "chosen_followup = {chosen}")?;
    writeln!(w, "linear_solves = {}", traj.solves)?;
    writeln!(w, "seed = {}", traj.config.seed)?;
    if let Some(msg) = &traj.aborted {
        writeln!(w, "aborted = {msg}")?;
    }
    writeln!(w, "[config]")?;
    for (k, v) in config {
        writeln!(w, "{k} = {v}")?;
    }
    Ok(())
}

/// Gnuplot script plotting the trajectory columns against fit points.
pub fn write_plots(mut w: impl Write, with_actual: bool) -> io::Result<()> {
    writeln!(w, "set datafile separator ','")?;
    writeln!(w, "set datafile missing 'NA'")?;
    writeln!(w, "set terminal pngcairo size 900,600")?;
    writeln!(w, "set logscale y")?;
    writeln!(w, "set xlabel 'fitting points'")?;
    writeln!(w)?;
    writeln!(w, "set output 'trace_error.png'")?;
    writeln!(w, "set ylabel 'relative trace error'")?;
    if with_actual {
        writeln!(
            w,
            "plot 'trajectory.csv' every ::1 using 2:7 with linespoints title 'estimated', \\\n     '' every ::1 using 2:8 with linespoints title 'actual'"
        )?;
    } else {
        writeln!(
            w,
            "plot 'trajectory.csv' every ::1 using 2:7 with linespoints title 'estimated'"
        )?;
    }
    writeln!(w)?;
    writeln!(w, "set output 'variances.png'")?;
    writeln!(w, "set ylabel 'estimated variance'")?;
    writeln!(
        w,
        "plot 'trajectory.csv' every ::1 using 2:4 with linespoints title 'Hutchinson on inv(A)', \\\n     '' every ::1 using 2:5 with linespoints title 'Hutchinson on E', \\\n     '' every ::1 using 2:6 with linespoints title 'unit vector on E_fit'"
    )?;
    writeln!(w)?;
    writeln!(w, "set output 'trace.png'")?;
    writeln!(w, "unset logscale y")?;
    writeln!(w, "set ylabel 'fitted trace'")?;
    writeln!(
        w,
        "plot 'trajectory.csv' every ::1 using 2:3 with linespoints title 'T_i'"
    )?;
    Ok(())
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `trajectory.csv`, `summary.txt` and `plots.gp` into `dir`.
pub fn write_run_artifacts<T: Scalar>(
    dir: &Path,
    traj: &DynamicTrajectory<T>,
    config: &[(String, String)],
    oracle_trace: Option<T>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut buf = Vec::new();
    write_trajectory_csv(traj, &mut buf).expect("in-memory write");
    let p = dir.join("trajectory.csv");
    fs::write(&p, buf).map_err(io_err(&p))?;
    let mut buf = Vec::new();
    write_summary(traj, config, oracle_trace, &mut buf).expect("in-memory write");
    let p = dir.join("summary.txt");
    fs::write(&p, buf).map_err(io_err(&p))?;
    let mut buf = Vec::new();
    write_plots(&mut buf, oracle_trace.is_some()).expect("in-memory write");
    let p = dir.join("plots.gp");
    fs::write(&p, buf).map_err(io_err(&p))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow<T> {
    pub source: String,
    pub pchip_rel_err: T,
    pub hutch_ainv_rel_err: T,
    pub hutch_e_rel_err: Option<T>,
}

pub fn write_compare_csv<T: Scalar>(rows: &[CompareRow<T>], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "{COMPARE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.source,
            fmt_sig(r.pchip_rel_err),
            fmt_sig(r.hutch_ainv_rel_err),
            fmt_opt(r.hutch_e_rel_err)
        )?;
    }
    Ok(())
}

/// Parses a `trajectory.csv` body back into rows of optional numbers.
pub fn parse_trajectory_csv(text: &str) -> Result<Vec<Vec<Option<f64>>>> {
    let mut lines = text.lines();
    if lines.next() != Some(TRAJECTORY_HEADER) {
        return Err(Error::Parse {
            line: 1,
            msg: "unexpected trajectory header".into(),
        });
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            line.split(',')
                .map(|f| {
                    if f == "NA" {
                        Ok(None)
                    } else {
                        f.parse::<f64>().map(Some).map_err(|e| Error::Parse {
                            line: k + 2,
                            msg: format!("{f:?}: {e}"),
                        })
                    }
                })
                .collect()
        })
        .collect()
}
