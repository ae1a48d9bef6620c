//! CSV and JSON emitters. Floats carry nine significant digits, lines end
//! in `\n`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::bell::Landscape;
use crate::counting::{CountRecord, ExperimentReport, SlicePoint};
use crate::error::{Error, Result};
use crate::schmidt::SchmidtSpectrum;

pub const LANDSCAPE_HEADER: &str = "theta1,theta2,E";
pub const SCHMIDT_HEADER: &str = "n,lambda_n,lambda_n_squared,cumulative";
pub const COUNTS_HEADER: &str = "theta1,theta2,n_pp,n_pm,n_mp,n_mm";
pub const SLICE_HEADER: &str = "theta1,n_pp,sigma";

/// Nine significant digits in scientific notation.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

fn csv(header: &str, rows: impl Iterator<Item = String>) -> String {
    let mut out = String::with_capacity(64);
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

pub fn landscape_csv(l: &Landscape) -> String {
    csv(
        LANDSCAPE_HEADER,
        l.theta1.iter().enumerate().flat_map(|(i, t1)| {
            l.theta2.iter().enumerate().map(move |(j, t2)| {
                format!(
                    "{},{},{}",
                    fmt_float(*t1),
                    fmt_float(*t2),
                    fmt_float(l.get(i, j))
                )
            })
        }),
    )
}

pub fn schmidt_csv(s: &SchmidtSpectrum) -> String {
    csv(
        SCHMIDT_HEADER,
        s.rows().into_iter().map(|(n, l, l2, c)| {
            format!("{n},{},{},{}", fmt_float(l), fmt_float(l2), fmt_float(c))
        }),
    )
}

pub fn counts_csv(recs: &[CountRecord]) -> String {
    csv(
        COUNTS_HEADER,
        recs.iter().map(|r| {
            format!(
                "{},{},{},{},{},{}",
                fmt_float(r.theta1),
                fmt_float(r.theta2),
                r.n_pp,
                r.n_pm,
                r.n_mp,
                r.n_mm
            )
        }),
    )
}

pub fn slice_csv(points: &[SlicePoint]) -> String {
    csv(
        SLICE_HEADER,
        points
            .iter()
            .map(|p| format!("{},{},{}", fmt_float(p.theta1), p.n_pp, fmt_float(p.sigma))),
    )
}

pub fn report_json(report: &ExperimentReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn parse_report(text: &str) -> Result<ExperimentReport> {
    Ok(serde_json::from_str(text)?)
}

/// Write `contents` to `path`, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(contents.as_bytes()).map_err(io)?;
    Ok(())
}

pub fn write_csv(path: &Path, contents: &str) -> Result<()> {
    write_text(path, contents)
}

pub fn write_report(report: &ExperimentReport, path: &Path) -> Result<()> {
    write_text(path, &report_json(report)?)
}

pub fn read_report(path: &Path) -> Result<ExperimentReport> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_report(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::{optimal_settings, ThetaAxis};
    use crate::schmidt::SchmidtOptions;

    fn report() -> ExperimentReport {
        let rec = |t1: f64, t2: f64, n: [u64; 4]| CountRecord {
            theta1: t1,
            theta2: t2,
            n_pp: n[0],
            n_pm: n[1],
            n_mp: n[2],
            n_mm: n[3],
            flux: 1e4,
        };
        let s = optimal_settings(0.0);
        let p = s.pairs();
        ExperimentReport {
            state_label: "phi=0.000000".into(),
            b: 2.3891234567891234,
            sigma_b: 0.016,
            n_sigma: Some(24.3),
            settings: s,
            per_setting_counts: vec![
                rec(p[0].0, p[0].1, [4200, 800, 790, 4210]),
                rec(p[1].0, p[1].1, [4100, 900, 880, 4120]),
                rec(p[2].0, p[2].1, [4150, 850, 860, 4140]),
                rec(p[3].0, p[3].1, [820, 4180, 4170, 830]),
            ],
        }
    }

    #[test]
    fn headers() {
        let l = Landscape {
            theta1: vec![0.0, 1.0],
            theta2: vec![0.5, 2.0],
            values: vec![1.0, 0.5, -0.25, 0.0],
        };
        let text = landscape_csv(&l);
        assert!(text.starts_with("theta1,theta2,E\n"));
        assert_eq!(text.lines().count(), 5);
        assert!(!text.contains('\r'));
        assert_eq!(
            text.lines().nth(3).unwrap(),
            "1.00000000e0,5.00000000e-1,-2.50000000e-1"
        );
        let s = SchmidtSpectrum::from_singular_values(vec![0.8, 0.6], SchmidtOptions::default())
            .unwrap();
        let text = schmidt_csv(&s);
        assert!(text
            .starts_with("n,lambda_n,lambda_n_squared,cumulative\n0,8.00000000e-1,6.40000000e-1,"));
        assert!(counts_csv(&report().per_setting_counts)
            .starts_with("theta1,theta2,n_pp,n_pm,n_mp,n_mm\n"));
        let _ = ThetaAxis::full_turn(2);
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_float(std::f64::consts::PI), "3.14159265e0");
        assert_eq!(fmt_float(-1.0 / 3.0e5), "-3.33333333e-6");
        let back: f64 = fmt_float(0.123456789123).parse().unwrap();
        assert!((back - 0.123456789).abs() < 1e-15);
    }

    #[test]
    fn report_round_trip() {
        let r = report();
        let text = report_json(&r).unwrap();
        for field in [
            "state_label",
            "\"B\"",
            "sigma_B",
            "n_sigma",
            "settings",
            "per_setting_counts",
        ] {
            assert!(text.contains(field), "{field}");
        }
        assert_eq!(parse_report(&text).unwrap(), r);
        let mut none = r.clone();
        none.n_sigma = None;
        assert_eq!(parse_report(&report_json(&none).unwrap()).unwrap(), none);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/report.json");
        write_report(&r, &path).unwrap();
        assert_eq!(read_report(&path).unwrap(), r);
    }

    #[test]
    fn io_errors_carry_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let err = write_csv(&blocker.join("sub/out.csv"), "a\n").unwrap_err();
        assert!(err.to_string().contains("file"), "{err}");
        let err = read_report(&dir.path().join("missing.json")).unwrap_err();
        assert!(err.to_string().contains("missing.json"));
    }
}
