use std::path::Path;

use mspd_core::eval::{CurvePoint, MissRateCurve};

use super::{content_lines, parse_f64, write, DataError, Result};

const SIGNIFICANT_DIGITS: i32 = 9;
const HEADER: &str = "fppi,miss_rate";
const LAMR_PREFIX: &str = "# log_average_mr=";

/// Plain decimal notation with nine significant digits.
pub fn format_decimal(v: f64) -> String {
    if v == 0.0 {
        return format!("{:.*}", (SIGNIFICANT_DIGITS - 1) as usize, 0.0);
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (SIGNIFICANT_DIGITS - 1 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

/// CSV text: header, one row per point in curve order, then the
/// log-average miss rate as a trailing comment.
pub fn format_curve(curve: &MissRateCurve) -> String {
    let mut out = format!("{HEADER}\n");
    for p in curve.points() {
        out.push_str(&format!("{},{}\n", format_decimal(p.fppi), format_decimal(p.miss_rate)));
    }
    out.push_str(&format!("{LAMR_PREFIX}{}\n", format_decimal(curve.log_average_mr())));
    out
}

pub fn export_curve(curve: &MissRateCurve, path: &Path) -> Result<()> {
    write(path, &format_curve(curve))
}

/// Reads back a curve written by [`format_curve`]. The log-average is
/// recomputed from the points; the comment line is not trusted.
pub fn parse_curve_str(text: &str, origin: &str) -> Result<MissRateCurve> {
    let syntax = |line, message: String| DataError::Syntax { origin: origin.into(), line, message };
    let mut lines = content_lines(text);
    match lines.next() {
        Some((_, HEADER)) => {}
        Some((line, other)) => return Err(syntax(line, format!("expected header `{HEADER}`, found `{other}`"))),
        None => return Err(syntax(1, format!("missing header `{HEADER}`"))),
    }
    let mut points = Vec::new();
    let mut last = 1;
    for (line, row) in lines {
        let (fppi, mr) = row.split_once(',').ok_or_else(|| syntax(line, format!("expected two columns in `{row}`")))?;
        points.push(CurvePoint {
            fppi: parse_f64(origin, line, "fppi", fppi.trim())?,
            miss_rate: parse_f64(origin, line, "miss_rate", mr.trim())?,
        });
        last = line;
    }
    MissRateCurve::from_points(points).map_err(|cause| DataError::Invalid { origin: origin.into(), line: last, cause })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(points: &[(f64, f64)]) -> MissRateCurve {
        MissRateCurve::from_points(points.iter().map(|&(fppi, miss_rate)| CurvePoint { fppi, miss_rate }).collect())
            .unwrap()
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(format_decimal(0.0), "0.00000000");
        assert_eq!(format_decimal(1.0), "1.00000000");
        assert_eq!(format_decimal(1.0 / 3.0), "0.333333333");
        assert_eq!(format_decimal(2.0 / 3.0), "0.666666667");
        assert_eq!(format_decimal(12.5), "12.5000000");
        assert_eq!(format_decimal(1e-10), "0.000000000100000000");
    }

    #[test]
    fn single_point_file() {
        let text = format_curve(&curve(&[(0.0, 1.0)]));
        assert_eq!(text, "fppi,miss_rate\n0.00000000,1.00000000\n# log_average_mr=1.00000000\n");
    }

    #[test]
    fn unordered_points_are_written_sorted() {
        let text = format_curve(&curve(&[(1.0, 0.2), (0.0, 1.0), (0.5, 0.5)]));
        let rows: Vec<&str> = text.lines().skip(1).take(3).collect();
        assert_eq!(rows, ["0.00000000,1.00000000", "0.500000000,0.500000000", "1.00000000,0.200000000"]);
    }

    #[test]
    fn reparsed_text_is_a_fixed_point() {
        let c = curve(&[(0.0, 1.0), (1.0 / 3.0, 0.75), (2.0 / 3.0, 0.25), (7.0, 0.1)]);
        let text = format_curve(&c);
        let back = parse_curve_str(&text, "c").unwrap();
        assert_eq!(format_curve(&back), text);
        for (a, b) in c.points().iter().zip(back.points()) {
            assert!((a.fppi - b.fppi).abs() <= 5e-9 * a.fppi.max(1.0));
            assert!((a.miss_rate - b.miss_rate).abs() <= 5e-9);
        }
    }

    #[test]
    fn malformed_csv_rejected_with_position() {
        assert!(parse_curve_str("", "c").is_err());
        let err = parse_curve_str("fppi,miss_rate\n0,1\n0.5\n", "c.csv").unwrap_err();
        assert!(err.to_string().starts_with("c.csv:3:"), "{err}");
        assert!(parse_curve_str("x,y\n0,1\n", "c").is_err());
    }
}
