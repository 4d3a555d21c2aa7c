//! Static SVG Gantt charts of one day's schedule.
//!
//! One lane per room. The standard opening window is shaded, surgeries are
//! dark blocks and setup/cleanup are light flanks on either side.

use std::fmt::Write;

use crate::domain::{Instance, PatientClass, Schedule};

const LANE: f64 = 22.0;
const GAP: f64 = 6.0;
const LEFT: f64 = 48.0;
const TOP: f64 = 28.0;
const PX_PER_HOUR: f64 = 40.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders `schedule` against `instance`. The time axis spans from the
/// earliest occupied instant (or 0) to the latest (or one full day).
pub fn gantt_svg(schedule: &Schedule, instance: &Instance, title: &str) -> String {
    let h = &instance.horizon;
    let mut t0: f64 = 0.0;
    let mut t1: f64 = h.lambda_star;
    for pl in schedule.placements() {
        let (a, b) = pl.occupied(instance.patient(pl.patient));
        t0 = t0.min(a.floor());
        t1 = t1.max(b.ceil());
    }
    let x = |t: f64| LEFT + (t - t0) * PX_PER_HOUR;
    let width = x(t1) + 12.0;
    let height = TOP + instance.rooms.len() as f64 * (LANE + GAP) + 24.0;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(out, r#"<text x="{LEFT}" y="14" font-size="12">{}</text>"#, esc(title));
    let lanes_bottom = TOP + instance.rooms.len() as f64 * (LANE + GAP);
    let _ = writeln!(
        out,
        r##"<rect x="{:.2}" y="{TOP}" width="{:.2}" height="{:.2}" fill="#eef3f8"/>"##,
        x(h.tau),
        h.lambda * PX_PER_HOUR,
        lanes_bottom - TOP
    );
    let mut hour = t0.ceil() as i64;
    while (hour as f64) <= t1 {
        let xi = x(hour as f64);
        let _ = writeln!(
            out,
            r##"<line x1="{xi:.2}" y1="{TOP}" x2="{xi:.2}" y2="{lanes_bottom:.2}" stroke="#d0d0d0" stroke-width="0.5"/>"##
        );
        if hour % 2 == 0 {
            let _ = writeln!(out, r#"<text x="{xi:.2}" y="{:.2}" text-anchor="middle">{hour}</text>"#, lanes_bottom + 14.0);
        }
        hour += 1;
    }
    for (i, room) in instance.rooms.iter().enumerate() {
        let y = TOP + i as f64 * (LANE + GAP);
        let label = if room.working { room.id.to_string() } else { format!("{} x", room.id) };
        let _ = writeln!(out, r#"<text x="4" y="{:.2}">{label}</text>"#, y + LANE * 0.65);
        for pl in schedule.room_timeline(room.id) {
            let p = instance.patient(pl.patient);
            let (a, b) = pl.occupied(p);
            let _ = writeln!(
                out,
                r##"<rect x="{:.2}" y="{y:.2}" width="{:.2}" height="{LANE}" fill="#b9c7d6"/>"##,
                x(a),
                (b - a) * PX_PER_HOUR
            );
            let fill = if p.class == PatientClass::NonElective { "#8c2d19" } else { "#1f3b57" };
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{y:.2}" width="{:.2}" height="{LANE}" fill="{fill}"><title>{} {} {:.2}-{:.2}</title></rect>"#,
                x(pl.start),
                (pl.end - pl.start) * PX_PER_HOUR,
                pl.patient,
                pl.surgeon,
                pl.start,
                pl.end
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::fixtures::*;

    #[test]
    fn one_block_and_two_flanks_per_surgery() {
        let inst = instance(
            2,
            1,
            vec![patient(0, PatientClass::ScheduledElective, 2.0), patient(1, PatientClass::NonElective, 1.0)],
        );
        let mut s = Schedule::new();
        s.insert(place(0, 0, 0, 0.25, 2.25));
        s.insert(place(1, 1, 0, 3.0, 4.0));
        let svg = gantt_svg(&s, &inst, "day <0>");
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("day &lt;0&gt;"));
        assert_eq!(svg.matches("<title>").count(), 2);
        // window + one flank rect per surgery + one block per surgery
        assert_eq!(svg.matches("<rect").count(), 1 + 2 + 2);
        assert_eq!(svg, gantt_svg(&s, &inst, "day <0>"));
    }
}
