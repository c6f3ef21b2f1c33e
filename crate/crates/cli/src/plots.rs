//! gnuplot script emitters. Scripts refer to their data file by bare name, so they run from
//! the output directory.

use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PlotKind {
    /// `eps,S` columns: shooting map with the cone level.
    Scan,
    /// Continuation trace: `min u` and `λ_min` against t.
    Trace,
    /// Radial profiles in blank-line separated blocks of `r u du`.
    Profiles,
}

impl PlotKind {
    pub fn stem(&self) -> &'static str {
        match self {
            PlotKind::Scan => "scan",
            PlotKind::Trace => "trace",
            PlotKind::Profiles => "profiles",
        }
    }
}

/// `(ε, S(ε))` on a log axis with a horizontal line at the cone level.
pub fn scan_script(data: &str, cone_level: f64) -> String {
    let mut s = header("scan.png");
    let _ = writeln!(s, "set logscale x");
    let _ = writeln!(s, "set xlabel \"eps\"");
    let _ = writeln!(s, "set ylabel \"S(eps)\"");
    let _ = writeln!(
        s,
        "plot \"{data}\" using 1:2 every ::1 with lines title \"S\", {cone_level:.12} with lines dashtype 2 title \"C = {cone_level:.6}\""
    );
    s
}

/// Two stacked panels from the trace CSV (t, boundary_level, min_u, lambda_min, ...).
pub fn trace_script(data: &str) -> String {
    let mut s = header("trace.png");
    let _ = writeln!(s, "set multiplot layout 2,1");
    let _ = writeln!(s, "set xlabel \"t\"");
    let _ = writeln!(s, "set ylabel \"min u\"");
    let _ = writeln!(s, "plot \"{data}\" using 1:3 every ::1 with linespoints title \"min u\"");
    let _ = writeln!(s, "set ylabel \"lambda_min\"");
    let _ = writeln!(
        s,
        "plot \"{data}\" using 1:4 every ::1 with linespoints title \"lambda_min\", 0 with lines dashtype 2 notitle"
    );
    let _ = writeln!(s, "unset multiplot");
    s
}

/// One curve per data block plus the line `u = slope·r`.
pub fn profiles_script(data: &str, labels: &[String], slope: f64) -> String {
    let mut s = header("profiles.png");
    let _ = writeln!(s, "set xlabel \"r\"");
    let _ = writeln!(s, "set ylabel \"u\"");
    let mut parts: Vec<String> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| format!("\"{data}\" index {i} using 1:2 with lines title \"{l}\""))
        .collect();
    parts.push(format!("{slope:.12}*x with lines dashtype 2 title \"cone\""));
    let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    s
}

fn header(png: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator \",\"");
    let _ = writeln!(s, "set terminal pngcairo size 900,700");
    let _ = writeln!(s, "set output \"{png}\"");
    let _ = writeln!(s, "set grid");
    s
}

/// Profiles data as comma-separated blocks separated by two blank lines.
pub fn profiles_data(blocks: &[(f64, Vec<(f64, f64, f64)>)]) -> String {
    let mut s = String::new();
    for (k, (eps, rows)) in blocks.iter().enumerate() {
        if k > 0 {
            s.push_str("\n\n");
        }
        let _ = writeln!(s, "# eps = {eps:e}");
        for (r, u, du) in rows {
            let _ = writeln!(s, "{r:.17e},{u:.17e},{du:.17e}");
        }
    }
    s
}

/// Labels for a profiles data file, read from its `# eps = ...` block headers.
pub fn profile_labels(data: &str) -> Vec<String> {
    data.lines().filter_map(|l| l.strip_prefix("# ")).map(|l| l.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripts_reference_their_data() {
        let s = scan_script("scan.csv", 1.0);
        assert!(s.contains("\"scan.csv\" using 1:2"));
        assert!(s.contains("1.000000000000 with lines"));
        let t = trace_script("trace.csv");
        assert!(t.contains("using 1:3") && t.contains("using 1:4") && t.contains("multiplot"));
        let p = profiles_script("profiles.dat", &["eps = 0.1".into(), "eps = 1".into()], 1.0);
        assert!(p.contains("index 1") && p.contains("*x with lines"));
    }

    #[test]
    fn profile_blocks_round_trip_labels() {
        let d = profiles_data(&[(0.1, vec![(0.0, 0.1, 0.0)]), (1.0, vec![(0.0, 1.0, 0.0)])]);
        assert_eq!(profile_labels(&d), vec!["eps = 1e-1".to_string(), "eps = 1e0".to_string()]);
        assert_eq!(d.matches("\n\n\n").count(), 1);
    }
}
