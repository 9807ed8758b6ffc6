use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use super::fit::{ExponentFit, Statistic};
use super::record::TrialRecord;

const W: f64 = 520.0;
const H: f64 = 380.0;
const PAD: f64 = 56.0;

/// Writes `summary.md` and one SVG per fit into `dir`; with no fits, a
/// single `empty.svg`. Returns the paths written.
pub fn write_report(
    records: &[TrialRecord],
    fits: &[ExponentFit],
    dir: &Path,
) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut svgs = Vec::new();
    for f in fits {
        let name = format!("{}_{}_d{}.svg", f.statistic.name(), f.mode, f.dim);
        let path = dir.join(&name);
        std::fs::write(&path, svg_for(f))?;
        written.push(path);
        svgs.push(name);
    }
    if fits.is_empty() {
        let path = dir.join("empty.svg");
        std::fs::write(&path, empty_svg())?;
        written.push(path);
    }
    let path = dir.join("summary.md");
    std::fs::write(&path, summary(records, fits, &svgs))?;
    written.push(path);
    Ok(written)
}

pub fn summary(records: &[TrialRecord], fits: &[ExponentFit], svgs: &[String]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Exponent summary\n");
    let failed = records.iter().filter(|r| !r.ok()).count();
    let _ = writeln!(
        s,
        "{} records, {} with an error tag.\n",
        records.len(),
        failed
    );
    let mut tags: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.ok()) {
        *tags.entry(r.error_tag.as_str()).or_default() += 1;
    }
    for (tag, count) in &tags {
        let _ = writeln!(s, "- `{tag}`: {count}");
    }
    if !tags.is_empty() {
        s.push('\n');
    }

    let _ = writeln!(
        s,
        "| statistic | mode | d | points | slope | stderr | R² | target | deviation | verdict |"
    );
    let _ = writeln!(s, "|---|---|---|---|---|---|---|---|---|---|");
    if fits.is_empty() {
        for st in Statistic::ALL {
            let _ = writeln!(s, "| {} | | | 0 | no data | | | | | |", st.name());
        }
    }
    for f in fits {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {:.4} | {:.4} | {:.4} | {} | {} | {} |",
            f.statistic.name(),
            f.mode,
            f.dim,
            f.points.len(),
            f.slope,
            f.slope_stderr,
            f.r_squared,
            f.target.map(|t| t.describe()).unwrap_or_else(|| "-".into()),
            f.deviation
                .map(|d| format!("{d:+.4}"))
                .unwrap_or_else(|| "-".into()),
            f.verdict.as_str(),
        );
    }

    let with_windows: Vec<_> = fits.iter().filter(|f| !f.windows.is_empty()).collect();
    if !with_windows.is_empty() {
        let _ = writeln!(s, "\n## Window slopes\n");
        for f in with_windows {
            let ws: Vec<String> = f
                .windows
                .iter()
                .map(|w| format!("[{}, {}]: {:.3}", w.n_lo, w.n_hi, w.slope))
                .collect();
            let _ = writeln!(
                s,
                "- {} ({}, d={}): {}",
                f.statistic.name(),
                f.mode,
                f.dim,
                ws.join("; ")
            );
        }
    }
    if !svgs.is_empty() {
        let _ = writeln!(s, "\n## Plots\n");
        for name in svgs {
            let _ = writeln!(s, "- [{name}]({name})");
        }
    }
    s
}

fn empty_svg() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">no data</text>\n</svg>\n",
        W / 2.0,
        H / 2.0
    )
}

/// Log-log plot: per-n means, the fitted line, and a guide line with the
/// target slope through the centroid of the points.
pub fn svg_for(f: &ExponentFit) -> String {
    let xs: Vec<f64> = f.points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = f.points.iter().map(|p| p.1).collect();
    let (x0, x1) = bounds(&xs);
    let xm = xs.iter().sum::<f64>() / xs.len().max(1) as f64;
    let ym = ys.iter().sum::<f64>() / ys.len().max(1) as f64;
    let fit_at = |x: f64| f.intercept + f.slope * x;
    let guide_at = |x: f64| f.target.map(|t| ym + t.exponent * (x - xm));
    let mut all_y = ys.clone();
    all_y.extend([fit_at(x0), fit_at(x1)]);
    if let (Some(a), Some(b)) = (guide_at(x0), guide_at(x1)) {
        all_y.extend([a, b]);
    }
    let (y0, y1) = bounds(&all_y);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(s, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">");
    let _ = writeln!(
        s,
        "<rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{} ({}, d={}): slope {:.3}</text>",
        W / 2.0,
        f.statistic.name(),
        f.mode,
        f.dim,
        f.slope
    );
    let _ = writeln!(
        s,
        "<path d=\"M{:.1},{:.1} V{:.1} H{:.1}\" stroke=\"black\" fill=\"none\"/>",
        PAD,
        PAD,
        H - PAD,
        W - PAD
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">ln n</text>",
        W / 2.0,
        H - 16.0
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">mean ln {}</text>",
        H / 2.0,
        H / 2.0,
        f.statistic.name()
    );
    for (x, y) in [(x0, y0), (x1, y1)] {
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\">{:.2}</text>",
            sx(x) - 10.0,
            H - PAD + 14.0,
            x
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{:.2}</text>",
            PAD - 4.0,
            sy(y) + 4.0,
            y
        );
    }
    let _ = writeln!(
        s,
        "<line class=\"fit\" data-slope=\"{}\" x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#1f77b4\" stroke-width=\"2\"/>",
        f.slope,
        sx(x0),
        sy(fit_at(x0)),
        sx(x1),
        sy(fit_at(x1))
    );
    if let (Some(t), Some(a), Some(b)) = (f.target, guide_at(x0), guide_at(x1)) {
        let _ = writeln!(
            s,
            "<line class=\"target\" data-slope=\"{}\" x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#d62728\" stroke-dasharray=\"6 4\" stroke-width=\"1.5\"/>",
            t.exponent,
            sx(x0),
            sy(a),
            sx(x1),
            sy(b)
        );
    }
    for (x, y) in xs.iter().zip(&ys) {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"black\"/>",
            sx(*x),
            sy(*y)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}
