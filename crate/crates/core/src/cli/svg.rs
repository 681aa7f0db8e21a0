use std::fmt::Write;

use crate::eval::{EvalReport, Group};

const W: f64 = 640.0;
const H: f64 = 480.0;
const PAD: f64 = 50.0;

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        out,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let m = 0.05 * (hi - lo);
        (lo - m, hi + m)
    }
}

fn marker(out: &mut String, group: Group, x: f64, y: f64) {
    let _ = match group {
        Group::Low => writeln!(out, r#"<circle class="low" cx="{x:.2}" cy="{y:.2}" r="4" fill="steelblue"/>"#),
        Group::High => writeln!(
            out,
            r#"<rect class="high" x="{:.2}" y="{:.2}" width="8" height="8" fill="firebrick"/>"#,
            x - 4.0,
            y - 4.0
        ),
        Group::Test => writeln!(
            out,
            r#"<path class="test" d="M{x:.2} {:.2} L{:.2} {:.2} L{:.2} {:.2} Z" fill="none" stroke="dimgray"/>"#,
            y - 4.5,
            x + 4.0,
            y + 3.5,
            x - 4.0,
            y + 3.5
        ),
    };
}

/// First two principal components, one marker shape per group.
pub fn pca_scatter(report: &EvalReport) -> String {
    let mut out = String::new();
    header(&mut out, "Embeddings, first two principal components");
    let (x0, x1) = range(report.pca.iter().map(|p| p.pc1));
    let (y0, y1) = range(report.pca.iter().map(|p| p.pc2));
    let sx = |v: f64| PAD + (v - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |v: f64| H - PAD - (v - y0) / (y1 - y0) * (H - 2.0 * PAD);
    // test points first so the training groups stay visible on top
    for g in [Group::Test, Group::Low, Group::High] {
        for p in report.pca.iter().filter(|p| p.group == g) {
            marker(&mut out, g, sx(p.pc1), sy(p.pc2));
        }
    }
    for (i, (g, label)) in [(Group::Low, "low-score group"), (Group::High, "high-score group"), (Group::Test, "test")]
        .into_iter()
        .enumerate()
    {
        let y = PAD + 16.0 + 16.0 * i as f64;
        marker(&mut out, g, W - PAD - 120.0, y);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{label}</text>"#, W - PAD - 108.0, y + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">PC1</text>"#, W / 2.0, H - 15.0);
    let _ = writeln!(
        out,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">PC2</text>"#,
        H / 2.0,
        H / 2.0
    );
    out.push_str("</svg>\n");
    out
}

/// Histogram of absolute prediction errors with unit-width bins.
pub fn error_histogram(report: &EvalReport) -> String {
    let diffs: Vec<f64> = report.predictions.iter().map(|p| p.abs_diff).collect();
    let max = diffs.iter().copied().fold(0.0f64, f64::max);
    let bins = (max.floor() as usize + 1).max(1);
    let mut counts = vec![0usize; bins];
    for d in &diffs {
        counts[(d.floor() as usize).min(bins - 1)] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let mut out = String::new();
    header(&mut out, "Absolute difference between prediction and true score");
    let bw = (W - 2.0 * PAD) / bins as f64;
    for (i, &c) in counts.iter().enumerate() {
        let h = c as f64 / top * (H - 2.0 * PAD);
        let _ = writeln!(
            out,
            r#"<rect class="bin" x="{:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="steelblue" stroke="white"><title>[{i}, {}): {c}</title></rect>"#,
            PAD + i as f64 * bw,
            H - PAD - h,
            bw,
            i + 1
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle" font-size="10">{i}</text>"#,
            PAD + i as f64 * bw,
            H - PAD + 14.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">|prediction - truth| (mean {:.2}, sd {:.2})</text>"#,
        W / 2.0,
        H - 12.0,
        report.mae_mean,
        report.mae_sd
    );
    let _ = writeln!(out, r#"<text x="{PAD}" y="{}">max count {}</text>"#, PAD - 6.0, top as usize);
    out.push_str("</svg>\n");
    out
}
