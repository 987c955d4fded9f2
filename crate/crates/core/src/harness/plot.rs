//! Static SVG charts of aggregated results: bars with interval whiskers
//! per method, or one line per method across sweep values.

use std::fmt::Write;

use super::table::Aggregate;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 40.0, 110.0); // left, right, top, bottom
const COLORS: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    lo: f64,
    hi: f64,
}

impl Frame {
    fn new(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Self { lo: 0.0, hi: 1.0 };
        }
        let pad = ((hi - lo) * 0.08).max(1e-9 * hi.abs().max(1.0));
        Self { lo: if lo >= 0.0 && lo - pad < 0.0 { 0.0 } else { lo - pad }, hi: hi + pad }
    }

    fn y(&self, v: f64) -> f64 {
        let (_, _, top, bottom) = MARGIN;
        let h = HEIGHT - top - bottom;
        top + h * (1.0 - (v - self.lo) / (self.hi - self.lo))
    }
}

fn header(out: &mut String, title: &str, frame: &Frame) {
    let (left, right, top, bottom) = MARGIN;
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>
<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>
<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>
"#,
        WIDTH / 2.0,
        escape(title),
        HEIGHT - bottom,
        HEIGHT - bottom,
        WIDTH - right,
        HEIGHT - bottom
    );
    for i in 0..=4 {
        let v = frame.lo + (frame.hi - frame.lo) * i as f64 / 4.0;
        let y = frame.y(v);
        let _ = writeln!(
            out,
            r##"<line x1="{}" y1="{y:.1}" x2="{left}" y2="{y:.1}" stroke="black"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"##,
            left - 4.0,
            left - 6.0,
            y + 4.0,
            tick(v)
        );
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == 0.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

/// Bars of `mean ± ci_half` for every aggregate of `metric`.
pub fn bar_chart(aggs: &[Aggregate], metric: &str, title: &str) -> String {
    let items: Vec<&Aggregate> = aggs.iter().filter(|a| a.metric == metric).collect();
    let frame = Frame::new(items.iter().flat_map(|a| {
        let h = a.ci_half.unwrap_or(0.0);
        // bars start at zero
        [a.mean - h, a.mean + h, 0.0]
    }));
    let mut out = String::new();
    header(&mut out, title, &frame);
    let (left, right, _, bottom) = MARGIN;
    let slot = (WIDTH - left - right) / items.len().max(1) as f64;
    let base = frame.y(frame.lo.max(0.0).min(frame.hi));
    for (i, a) in items.iter().enumerate() {
        let x = left + slot * (i as f64 + 0.2);
        let w = slot * 0.6;
        let y = frame.y(a.mean);
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="{w:.1}" height="{:.1}" fill="{}"/>"#,
            y.min(base),
            (base - y).abs(),
            COLORS[i % COLORS.len()]
        );
        if let Some(h) = a.ci_half {
            let cx = x + w / 2.0;
            let _ = writeln!(
                out,
                r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
                frame.y(a.mean - h),
                frame.y(a.mean + h)
            );
        }
        let lx = x + w / 2.0;
        let ly = HEIGHT - bottom + 12.0;
        let _ = writeln!(
            out,
            r#"<text x="{lx:.1}" y="{ly:.1}" text-anchor="end" transform="rotate(-40 {lx:.1} {ly:.1})">{}</text>"#,
            escape(&a.method)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One line per method across sweep values. Methods are labelled
/// `name@parameter=value`; other labels are ignored.
pub fn line_chart(aggs: &[Aggregate], metric: &str, title: &str) -> String {
    let mut series: Vec<(String, Vec<(f64, f64, f64)>)> = Vec::new();
    for a in aggs.iter().filter(|a| a.metric == metric) {
        let Some((name, point)) = a.method.split_once('@') else { continue };
        let Some(x) = point.split_once('=').and_then(|(_, v)| v.parse::<f64>().ok()) else { continue };
        let entry = match series.iter_mut().position(|(n, _)| n == name) {
            Some(i) => &mut series[i].1,
            None => {
                series.push((name.to_string(), Vec::new()));
                &mut series.last_mut().expect("just pushed").1
            }
        };
        entry.push((x, a.mean, a.ci_half.unwrap_or(0.0)));
    }
    let frame = Frame::new(series.iter().flat_map(|(_, pts)| pts.iter().flat_map(|&(_, m, h)| [m - h, m + h])));
    let xs: Vec<f64> = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)).collect();
    let xlo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let xhi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (left, right, _, bottom) = MARGIN;
    let px = |x: f64| {
        if xhi > xlo {
            left + 20.0 + (WIDTH - left - right - 40.0) * (x - xlo) / (xhi - xlo)
        } else {
            (left + WIDTH - right) / 2.0
        }
    };
    let mut out = String::new();
    header(&mut out, title, &frame);
    let mut seen = Vec::new();
    for &x in &xs {
        if !seen.contains(&x) {
            seen.push(x);
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, px(x), HEIGHT - bottom + 16.0, tick(x));
        }
    }
    for (i, (name, pts)) in series.iter_mut().enumerate() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let color = COLORS[i % COLORS.len()];
        let band: Vec<String> = pts
            .iter()
            .map(|&(x, m, h)| format!("{:.1},{:.1}", px(x), frame.y(m + h)))
            .chain(pts.iter().rev().map(|&(x, m, h)| format!("{:.1},{:.1}", px(x), frame.y(m - h))))
            .collect();
        let _ = writeln!(out, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2"/>"#, band.join(" "));
        let line: Vec<String> = pts.iter().map(|&(x, m, _)| format!("{:.1},{:.1}", px(x), frame.y(m))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let ly = HEIGHT - bottom + 40.0 + 14.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{left}" y1="{ly:.1}" x2="{}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{}" y="{:.1}">{}</text>"#,
            left + 20.0,
            left + 26.0,
            ly + 4.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agg(method: &str, mean: f64, ci: Option<f64>) -> Aggregate {
        Aggregate { method: method.into(), metric: "max_mse".into(), mean, ci_half: ci, n: 3 }
    }

    #[test]
    fn bars_have_one_rect_per_method() {
        let svg = bar_chart(&[agg("rf", 25.0, Some(0.5)), agg("posthoc<w>", 17.0, None)], "max_mse", "Table");
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<rect x=").count(), 2);
        assert!(svg.contains("posthoc&lt;w&gt;"));
    }

    #[test]
    fn lines_group_by_method() {
        let aggs = [agg("rf@k=2", 3.0, Some(0.1)), agg("rf@k=4", 4.0, Some(0.2)), agg("mm@k=2", 2.0, None), agg("plain", 1.0, None)];
        let svg = line_chart(&aggs, "max_mse", "sweep");
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn empty_input_still_renders() {
        assert!(bar_chart(&[], "max_mse", "none").ends_with("</svg>\n"));
        assert!(line_chart(&[], "max_mse", "none").ends_with("</svg>\n"));
    }
}
