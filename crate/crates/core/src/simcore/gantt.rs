use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{EventKind, Result, Timeline};

const LABEL_W: f64 = 160.0;
const PLOT_W: f64 = 1000.0;
const LANE_H: f64 = 24.0;
const TOP: f64 = 20.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One lane per resource; compute and transfer bars are filled, waits are
/// drawn hollow.
pub fn gantt_svg(timeline: &Timeline) -> String {
    let lanes = timeline.resources();
    let span = timeline
        .events
        .iter()
        .map(|e| e.end)
        .fold(timeline.makespan, f64::max);
    let height = TOP + LANE_H * lanes.len() as f64 + 20.0;
    let width = LABEL_W + PLOT_W + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="monospace" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="4" y="14">makespan {:.3} cycles</text>"#, timeline.makespan);
    for (i, lane) in lanes.iter().enumerate() {
        let y = TOP + LANE_H * i as f64;
        let _ = writeln!(
            s,
            r##"<rect class="lane" x="{LABEL_W}" y="{y}" width="{PLOT_W}" height="{LANE_H}" fill="none" stroke="#ccc"/>"##
        );
        let _ = writeln!(s, r#"<text x="4" y="{:.1}">{}</text>"#, y + 16.0, escape(lane));
    }
    for e in &timeline.events {
        let lane = lanes.iter().position(|l| *l == e.resource).expect("lane");
        let y = TOP + LANE_H * lane as f64 + 3.0;
        let (x, w) = if span > 0.0 {
            (LABEL_W + e.start / span * PLOT_W, (e.end - e.start) / span * PLOT_W)
        } else {
            (LABEL_W, 0.0)
        };
        let style = match e.kind {
            EventKind::Compute => r##"fill="#4a7ebb" stroke="#234""##,
            EventKind::Transfer => r##"fill="#e0a030" stroke="#642""##,
            EventKind::Wait => r##"fill="none" stroke="#888""##,
        };
        let _ = writeln!(
            s,
            r#"<rect class="{:?}" x="{x:.3}" y="{y:.1}" width="{w:.3}" height="{:.1}" {style}><title>{} {:.3}-{:.3}</title></rect>"#,
            e.kind,
            LANE_H - 6.0,
            escape(&e.label),
            e.start,
            e.end
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn gantt_json(timeline: &Timeline) -> String {
    let doc = serde_json::json!({
        "lanes": timeline.resources(),
        "makespan": timeline.makespan,
        "busy": timeline.busy,
        "events": timeline.events,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("json");
    s.push('\n');
    s
}

/// Write `path` (SVG) and its `.json` twin; returns both paths.
pub fn export_gantt(timeline: &Timeline, path: &Path) -> Result<(PathBuf, PathBuf)> {
    let svg = path.to_path_buf();
    let json = path.with_extension("json");
    std::fs::write(&svg, gantt_svg(timeline))?;
    std::fs::write(&json, gantt_json(timeline))?;
    Ok((svg, json))
}
