//! Timeline pictures of a trace: a terminal-friendly ASCII grid and an SVG.
//!
//! ASCII rows hold one character per tick: `#` on-time execution, `!`
//! execution at or after the job's deadline, `.` anything else. Under each
//! task row a marker row shows `^` at activations, `|` at deadlines and `+`
//! where both coincide.

use std::fmt::Write as _;

use crate::sim::trace::{EventKind, Trace};
use crate::taskmodel::{TaskId, Tick};

fn markers(trace: &Trace, task: TaskId) -> Vec<char> {
    let h = trace.horizon.max(0) as usize;
    let mut row = vec![' '; h];
    let mut put = |t: Tick, c: char| {
        if (0..trace.horizon).contains(&t) {
            let cell = &mut row[t as usize];
            *cell = match (*cell, c) {
                (' ', c) => c,
                (a, b) if a == b => a,
                _ => '+',
            };
        }
    };
    for j in trace.jobs_of(task) {
        put(j.arrival, '^');
        put(j.abs_deadline, '|');
    }
    for e in trace.events_of(task) {
        if e.kind == EventKind::Arrival && trace.jobs.is_empty() {
            put(e.tick, '^');
        }
    }
    row
}

fn label(task: TaskId) -> String {
    format!("t{task}")
}

pub fn render_ascii(trace: &Trace) -> String {
    let h = trace.horizon.max(0) as usize;
    let width = trace.tasks.iter().map(|t| label(*t).len()).max().unwrap_or(1).max(2);
    let mut out = String::new();
    let pad = " ".repeat(width + 1);
    let tens: String = (0..h)
        .map(|t| if t % 10 == 0 { char::from_digit(((t / 10) % 10) as u32, 10).unwrap_or(' ') } else { ' ' })
        .collect();
    let units: String = (0..h).map(|t| char::from_digit((t % 10) as u32, 10).unwrap_or(' ')).collect();
    let _ = writeln!(out, "{pad}{tens}");
    let _ = writeln!(out, "{pad}{units}");
    for &task in &trace.tasks {
        let row: String = (0..h)
            .map(|t| match trace.slots.get(t).copied().flatten() {
                Some(s) if s.task == task && s.late => '!',
                Some(s) if s.task == task => '#',
                _ => '.',
            })
            .collect();
        let _ = writeln!(out, "{:<width$} {row}", label(task));
        let marks: String = markers(trace, task).into_iter().collect();
        let _ = writeln!(out, "{pad}{}", marks.trim_end());
    }
    out
}

const CELL: f64 = 24.0;
const ROW: f64 = 48.0;
const LEFT: f64 = 40.0;
const TOP: f64 = 30.0;

pub fn render_svg(trace: &Trace) -> String {
    let h = trace.horizon.max(0);
    let width = LEFT + CELL * h as f64 + 20.0;
    let height = TOP + ROW * trace.tasks.len() as f64 + 30.0;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" font-family="monospace" font-size="11">"#
    );
    let axis_y = TOP + ROW * trace.tasks.len() as f64;
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{axis_y}" x2="{}" y2="{axis_y}" stroke="black"/>"#,
        LEFT + CELL * h as f64
    );
    for t in 0..=h {
        let x = LEFT + CELL * t as f64;
        let _ = writeln!(s, r#"<line x1="{x}" y1="{axis_y}" x2="{x}" y2="{}" stroke="black"/>"#, axis_y + 4.0);
        if t % 2 == 0 {
            let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{t}</text>"#, axis_y + 16.0);
        }
    }
    for (row, &task) in trace.tasks.iter().enumerate() {
        let base = TOP + ROW * (row as f64 + 1.0) - 8.0;
        let _ = writeln!(s, r#"<text x="4" y="{}">{}</text>"#, base - 4.0, label(task));
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{base}" x2="{}" y2="{base}" stroke="#999"/>"##,
            LEFT + CELL * h as f64
        );
        // Merge runs of the same job and lateness into one rectangle.
        let mut t = 0usize;
        while t < h as usize {
            match trace.slots.get(t).copied().flatten() {
                Some(sl) if sl.task == task => {
                    let mut end = t + 1;
                    while trace.slots.get(end).copied().flatten() == Some(sl) {
                        end += 1;
                    }
                    let fill = if sl.late { "#d62728" } else { "#b0b0b0" };
                    let class = if sl.late { "late" } else { "exec" };
                    let _ = writeln!(
                        s,
                        r#"<rect class="{class}" x="{}" y="{}" width="{}" height="18" fill="{fill}" stroke="black"/>"#,
                        LEFT + CELL * t as f64,
                        base - 18.0,
                        CELL * (end - t) as f64
                    );
                    t = end;
                }
                _ => t += 1,
            }
        }
        for j in trace.jobs_of(task) {
            if (0..=h).contains(&j.arrival) {
                let x = LEFT + CELL * j.arrival as f64;
                let _ = writeln!(
                    s,
                    r#"<path class="arrival" d="M{x} {base} V{} M{} {} L{x} {} L{} {}" stroke="black" fill="none"/>"#,
                    base - 30.0,
                    x - 3.0,
                    base - 25.0,
                    base - 30.0,
                    x + 3.0,
                    base - 25.0
                );
            }
            if (0..=h).contains(&j.abs_deadline) {
                let x = LEFT + CELL * j.abs_deadline as f64;
                let _ = writeln!(
                    s,
                    r#"<path class="deadline" d="M{x} {} V{base} M{} {} L{x} {base} L{} {}" stroke="black" fill="none"/>"#,
                    base - 30.0,
                    x - 3.0,
                    base - 5.0,
                    x + 3.0,
                    base - 5.0
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, SchedulerConfig};
    use crate::taskmodel::{ReservationSpec, TaskSpec};

    #[test]
    fn empty_trace_has_axes_only() {
        let t = Trace {
            horizon: 12,
            ..Trace::default()
        };
        let a = render_ascii(&t);
        let lines: Vec<&str> = a.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].trim(), "012345678901");
        let svg = render_svg(&t);
        assert!(svg.contains("<svg") && svg.contains("<line") && !svg.contains("<rect"));
    }

    #[test]
    fn rows_span_the_horizon() {
        let tasks = [TaskSpec::periodic(1, 1, 3), TaskSpec::periodic(2, 2, 5)];
        let trace = simulate(&tasks, &SchedulerConfig::edf(15), 0).unwrap();
        let a = render_ascii(&trace);
        let row = a.lines().nth(2).unwrap();
        assert_eq!(row.len(), 3 + 15);
        assert_eq!(&row[3..6], "#..");
        let marks = a.lines().nth(3).unwrap();
        assert_eq!(&marks[3..7], "^  +");
        let svg = render_svg(&trace);
        assert_eq!(svg.matches(r#"class="late""#).count(), 0);
    }

    #[test]
    fn late_blocks_are_marked() {
        let tasks = [TaskSpec::periodic(1, 3, 4), TaskSpec::periodic(2, 3, 5)];
        let trace = simulate(&tasks, &SchedulerConfig::cbs([(1, ReservationSpec::new(3, 4)), (2, ReservationSpec::new(3, 5))], 20), 0).unwrap();
        assert!(render_ascii(&trace).contains('!'));
        assert!(render_svg(&trace).contains(r#"class="late""#));
    }
}
