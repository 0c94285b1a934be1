//! Text tables, trace CSV and SVG convergence plots. Output is a pure
//! function of its input so repeated runs produce identical bytes.

use std::fmt::Write as _;

use tap_core::optimizer::{AllChannels, ChannelOptimization};
use tap_core::partition::Channel;
use tap_core::search::{CorpusStats, SearchHit};

/// Left-aligned columns separated by two spaces.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out += &line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
    for r in rows {
        out += &line(r.iter().map(String::as_str).collect());
    }
    out
}

fn fmt_thresholds(t: &[f64]) -> String {
    t.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
}

pub fn optimize_table(result: &AllChannels) -> String {
    let rows: Vec<Vec<String>> = Channel::ALL
        .into_iter()
        .map(|c| {
            let r = result.get(c);
            vec![
                c.key().to_string(),
                fmt_thresholds(r.thresholds()),
                format!("{:.6}", r.objective()),
                format!("{:.4}", r.epsilon),
                r.runs.len().to_string(),
                r.best_run().epochs_used().to_string(),
            ]
        })
        .collect();
    table(&["channel", "thresholds", "J", "epsilon", "seeds", "epochs"], &rows)
}

/// Trace of the winning run per channel: epoch, channel, J, thresholds.
pub fn trace_csv(result: &AllChannels) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "channel", "J", "theta_1", "theta_2", "theta_3"])?;
    for c in Channel::ALL {
        let run = result.get(c).best_run();
        for e in std::iter::once(&run.initial).chain(&run.epochs) {
            let mut rec = vec![e.epoch.to_string(), c.key().to_string(), e.objective.to_string()];
            rec.extend(e.thresholds.iter().map(f64::to_string));
            rec.resize(6, String::new());
            w.write_record(&rec)?;
        }
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

/// J against epoch, one line per seed run. The winning run is drawn thicker.
pub fn convergence_svg(result: &ChannelOptimization) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 50.0);
    let series: Vec<Vec<(usize, f64)>> = result
        .runs
        .iter()
        .map(|r| std::iter::once(&r.initial).chain(&r.epochs).map(|e| (e.epoch, e.objective)).collect())
        .collect();
    let max_epoch = series.iter().flatten().map(|p| p.0).max().unwrap_or(0).max(1) as f64;
    let (mut lo, mut hi) = series.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let x = |e: f64| left + (w - left - right) * e / max_epoch;
    let y = |j: f64| top + (h - top - bottom) * (1.0 - (j - lo) / (hi - lo));

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">J per epoch, channel {}</text>"#, w / 2.0, result.channel.key());
    let (x0, x1, y0, y1) = (left, w - right, top, h - bottom);
    let _ = writeln!(s, r#"<path d="M{x0} {y0} L{x0} {y1} L{x1} {y1}" stroke="black" fill="none"/>"#);
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (ex, jy) = (max_epoch * f, lo + (hi - lo) * f);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{:.0}</text>"#, x(ex), y1 + 18.0, ex);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{:.4}</text>"#, x0 - 6.0, y(jy) + 4.0, jy);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#, (x0 + x1) / 2.0, h - 10.0);
    let _ = writeln!(s, r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">J</text>"#, (y0 + y1) / 2.0, (y0 + y1) / 2.0);
    for (i, pts) in series.iter().enumerate() {
        let d: Vec<String> = pts.iter().map(|&(e, j)| format!("{:.2},{:.2}", x(e as f64), y(j))).collect();
        let width = if i == result.best { 2.5 } else { 1.0 };
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="{width}"><title>seed {i}</title></polyline>"#,
            d.join(" "),
            PALETTE[i % PALETTE.len()]
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn hits_table(hits: &[SearchHit]) -> String {
    let rows: Vec<Vec<String>> = hits.iter().map(|h| vec![h.scenario_id.clone(), h.vehicle_id.clone(), h.distance.to_string()]).collect();
    table(&["scenario_id", "vehicle_id", "distance"], &rows)
}

pub fn stats_report(st: &CorpusStats) -> String {
    let mut out = format!("level {}, {} records, {} unique\n\n", st.level, st.records, st.unique);
    for (name, counts) in [("lateral", &st.lateral), ("longitudinal", &st.longitudinal)] {
        let rows: Vec<Vec<String>> = counts
            .iter()
            .map(|(k, v)| vec![k.clone(), v.to_string(), format!("{:.1}%", 100.0 * *v as f64 / st.records.max(1) as f64)])
            .collect();
        out += &table(&[name, "records", "share"], &rows);
        out.push('\n');
    }
    let rows: Vec<Vec<String>> = st.signatures.iter().map(|(sig, c)| vec![c.to_string(), sig.clone()]).collect();
    out += &table(&["records", "signature"], &rows);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_pads_columns() {
        let t = table(&["a", "long"], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    long\n---  ----\nxyz  1\n");
    }
}
