//! Flat CSV tables and small standalone SVG plots for reports and traces.

use std::fmt::Write;

use serde::Serialize;

use crate::geom::{KeypointSet, Point2};
use crate::harness::EvalReport;
use crate::joint::{Branch, RolloutTrace};
use crate::manifold::ManifoldModel;
use crate::sim::Region;

fn to_csv<R: Serialize>(rows: impl IntoIterator<Item = R>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory CSV encoding cannot fail");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush cannot fail")).expect("CSV output is UTF-8")
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    policy: &'a str,
    region: Region,
    n_seeds: usize,
    successes: usize,
    success_rate: f64,
    mean_steps_to_success: Option<f64>,
    fingerprint: &'a str,
}

/// One row per report.
pub fn summary_csv(reports: &[EvalReport]) -> String {
    to_csv(reports.iter().map(|r| SummaryRow {
        policy: &r.policy,
        region: r.region,
        n_seeds: r.n_seeds,
        successes: r.successes,
        success_rate: r.success_rate,
        mean_steps_to_success: r.mean_steps_to_success,
        fingerprint: &r.fingerprint,
    }))
}

#[derive(Serialize)]
struct OutcomeRow<'a> {
    policy: &'a str,
    region: Region,
    seed: u64,
    success: bool,
    ticks: usize,
    final_coverage: f64,
    recover_decisions: usize,
}

/// One row per seed.
pub fn outcomes_csv(report: &EvalReport) -> String {
    to_csv(report.outcomes.iter().map(|o| OutcomeRow {
        policy: &report.policy,
        region: report.region,
        seed: o.seed,
        success: o.success,
        ticks: o.ticks,
        final_coverage: o.final_coverage,
        recover_decisions: o.recover_decisions,
    }))
}

#[derive(Serialize)]
struct TraceRow {
    tick: usize,
    branch: Branch,
    eta_rec: Option<f64>,
    delta_x: Option<f64>,
    delta_y: Option<f64>,
    block_x: f64,
    block_y: f64,
    block_theta: f64,
    ee_x: f64,
    ee_y: f64,
    executed: usize,
}

/// One row per decision point.
pub fn trace_csv(trace: &RolloutTrace) -> String {
    to_csv(trace.steps.iter().map(|s| TraceRow {
        tick: s.tick,
        branch: s.branch,
        eta_rec: s.eta_rec,
        delta_x: s.delta_rec.map(|d| d.x),
        delta_y: s.delta_rec.map(|d| d.y),
        block_x: s.state.block_pose.x,
        block_y: s.state.block_pose.y,
        block_theta: s.state.block_pose.theta,
        ee_x: s.state.ee_pos.x,
        ee_y: s.state.ee_pos.y,
        executed: s.executed,
    }))
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;

fn open_svg(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        W / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Success rate per report as vertical bars.
pub fn success_bars_svg(reports: &[EvalReport], title: &str) -> String {
    let mut svg = open_svg(title);
    let plot_h = H - 2.0 * PAD;
    let n = reports.len().max(1) as f64;
    let slot = (W - 2.0 * PAD) / n;
    let _ = writeln!(
        svg,
        "<line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        H - PAD,
        W - PAD,
        H - PAD
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let y = H - PAD - tick * plot_h;
        let _ = writeln!(
            svg,
            "<line x1=\"{PAD}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#ddd\"/><text x=\"{}\" y=\"{}\" text-anchor=\"end\">{tick:.2}</text>",
            W - PAD,
            PAD - 6.0,
            y + 4.0
        );
    }
    for (i, r) in reports.iter().enumerate() {
        let x = PAD + slot * (i as f64 + 0.2);
        let h = r.success_rate * plot_h;
        let color = if r.region == Region::Ood { "#d95f02" } else { "#1b9e77" };
        let _ = writeln!(
            svg,
            "<rect x=\"{x}\" y=\"{}\" width=\"{}\" height=\"{h}\" fill=\"{color}\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{:.2}</text>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{} {}</text>",
            H - PAD - h,
            slot * 0.6,
            x + slot * 0.3,
            H - PAD - h - 6.0,
            r.success_rate,
            x + slot * 0.3,
            H - PAD + 18.0,
            escape(&r.policy),
            r.region
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// `log10 eta_rec` at each decision point, coloured by branch, with the
/// switching threshold as a dashed line.
pub fn density_svg(trace: &RolloutTrace, threshold: Option<f64>, title: &str) -> String {
    let mut svg = open_svg(title);
    let pts: Vec<(f64, f64, Branch)> = trace
        .steps
        .iter()
        .filter_map(|s| {
            s.eta_rec
                .map(|e| (s.tick as f64, e.max(f64::MIN_POSITIVE).log10(), s.branch))
        })
        .collect();
    if pts.is_empty() {
        svg.push_str(
            "<text x=\"320\" y=\"200\" text-anchor=\"middle\">no density values in this trace</text>\n</svg>\n",
        );
        return svg;
    }
    let t_max = (trace.ticks.max(1)) as f64;
    let mut lo = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let mut hi = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if let Some(t) = threshold {
        lo = lo.min(t.log10());
        hi = hi.max(t.log10());
    }
    if hi - lo < 1e-9 {
        hi = lo + 1.0;
    }
    let sx = |t: f64| PAD + t / t_max * (W - 2.0 * PAD);
    let sy = |v: f64| H - PAD - (v - lo) / (hi - lo) * (H - 2.0 * PAD);
    let _ = writeln!(
        svg,
        "<line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">tick</text>\
         <text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">log10 density</text>\
         <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{hi:.1}</text><text x=\"{}\" y=\"{}\" text-anchor=\"end\">{lo:.1}</text>",
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD,
        W / 2.0,
        H - 12.0,
        H / 2.0,
        H / 2.0,
        PAD - 4.0,
        PAD + 4.0,
        PAD - 4.0,
        H - PAD
    );
    if let Some(t) = threshold {
        let y = sy(t.log10());
        let _ = writeln!(
            svg,
            "<line x1=\"{PAD}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"gray\" stroke-dasharray=\"6 4\"/>",
            W - PAD
        );
    }
    let path: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
    let _ = writeln!(
        svg,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#999\"/>",
        path.join(" ")
    );
    for (t, v, b) in &pts {
        let color = if *b == Branch::Base { "#1b9e77" } else { "#d95f02" };
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
            sx(*t),
            sy(*v)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Modified-gradient field of one keypoint's mixture on a grid over the
/// workspace, with an optional keypoint snapshot drawn on top.
pub fn quiver_svg(
    manifold: &ManifoldModel,
    keypoint: usize,
    workspace: (Point2, Point2),
    grid: usize,
    snapshot: Option<&KeypointSet>,
    title: &str,
) -> String {
    let mut svg = open_svg(title);
    let (lo, hi) = workspace;
    let side = (H - 2.0 * PAD).min(W - 2.0 * PAD);
    let scale = side / (hi.x - lo.x).max(hi.y - lo.y);
    let x0 = (W - side) / 2.0;
    let map = |p: Point2| Point2::new(x0 + (p.x - lo.x) * scale, H - PAD - (p.y - lo.y) * scale);
    let _ = writeln!(
        svg,
        "<rect x=\"{x0}\" y=\"{PAD}\" width=\"{side}\" height=\"{side}\" fill=\"none\" stroke=\"black\"/>"
    );
    let n = grid.max(2);
    let cell = (hi.x - lo.x) / n as f64;
    let max_len = 0.45 * cell * scale;
    let mut max_mag: f64 = 0.0;
    let mut arrows = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let p = Point2::new(
                lo.x + (i as f64 + 0.5) * cell,
                lo.y + (j as f64 + 0.5) * (hi.y - lo.y) / n as f64,
            );
            let d = manifold.modified_grad(keypoint, p);
            max_mag = max_mag.max(d.norm());
            arrows.push((p, d));
        }
    }
    for (p, d) in arrows {
        if max_mag <= 0.0 {
            break;
        }
        let a = map(p);
        let v = d * (max_len / max_mag);
        let b = Point2::new(a.x + v.x, a.y - v.y);
        let _ = writeln!(
            svg,
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#377eb8\"/><circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"1.2\" fill=\"#377eb8\"/>",
            a.x, a.y, b.x, b.y, b.x, b.y
        );
    }
    if let Some(k) = snapshot {
        for (i, p) in k.iter().enumerate() {
            let q = map(*p);
            let color = if i == keypoint { "#e41a1c" } else { "#555" };
            let _ = writeln!(
                svg,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"{color}\"/>",
                q.x, q.y
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::SeedOutcome;

    fn report(rate_num: usize) -> EvalReport {
        let outcomes: Vec<SeedOutcome> = (0..4)
            .map(|i| SeedOutcome {
                seed: i,
                success: (i as usize) < rate_num,
                ticks: 10 + i as usize,
                final_coverage: 0.5,
                recover_decisions: 0,
            })
            .collect();
        EvalReport {
            policy: "base".into(),
            region: Region::Ood,
            n_seeds: 4,
            successes: rate_num,
            success_rate: rate_num as f64 / 4.0,
            mean_steps_to_success: None,
            outcomes,
            fingerprint: "abc".into(),
        }
    }

    #[test]
    fn csv_has_one_row_per_item() {
        let r = report(1);
        let s = summary_csv(&[r.clone(), r.clone()]);
        assert_eq!(s.lines().count(), 3);
        assert!(s.lines().nth(1).unwrap().starts_with("base,ood,4,1,0.25,,abc"));
        assert_eq!(outcomes_csv(&r).lines().count(), 5);
    }

    #[test]
    fn svgs_are_closed_documents() {
        let svg = success_bars_svg(&[report(3), report(0)], "a < b");
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<rect").count(), 1 + 2);
    }
}
