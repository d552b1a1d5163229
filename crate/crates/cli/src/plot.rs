//! Minimal static SVG plots. Every point is written with its data
//! coordinates in a `data-*` attribute so the figures stay inspectable.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn color(label: usize) -> &'static str {
    PALETTE[label % PALETTE.len()]
}

/// Affine map from a data interval onto a pixel interval.
#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, px_lo: f64, px_hi: f64) -> Self {
        let (mut lo, mut hi) = values
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
                (l.min(v), h.max(v))
            });
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
            let pad = lo.abs().max(1.0) * 0.5;
            (lo, hi) = (lo - pad, hi + pad);
        } else {
            let pad = 0.05 * (hi - lo);
            (lo, hi) = (lo - pad, hi + pad);
        }
        Axis {
            lo,
            hi,
            px_lo,
            px_hi,
        }
    }

    fn px(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn frame(out: &mut String, x: &Axis, y: &Axis, x_label: &str, y_label: &str) {
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        out,
        "<rect x=\"{l}\" y=\"{t}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>",
        r - l,
        b - t
    );
    for (v, anchor_x, anchor_y, anchor) in
        [(x.lo, l, b + 16.0, "start"), (x.hi, r, b + 16.0, "end")]
    {
        let _ = writeln!(
            out,
            "<text x=\"{anchor_x}\" y=\"{anchor_y}\" text-anchor=\"{anchor}\">{}</text>",
            tick(v)
        );
    }
    for (v, py) in [(y.lo, b), (y.hi, t + 10.0)] {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{py}\" text-anchor=\"end\">{}</text>",
            l - 4.0,
            tick(v)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    format!("{v:.3e}")
}

fn legend(out: &mut String, names: &[String]) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN + 14.0 + 16.0 * i as f64;
        let x = WIDTH - MARGIN - 110.0;
        let _ = writeln!(
            out,
            "<rect x=\"{x}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/>\
             <text x=\"{}\" y=\"{y}\">{}</text>",
            y - 9.0,
            color(i),
            x + 14.0,
            escape(name)
        );
    }
}

fn cluster_names(labels: &[usize]) -> Vec<String> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    (0..k).map(|c| format!("cluster {c}")).collect()
}

fn points(
    out: &mut String,
    xs: &[f64],
    ys: &[f64],
    labels: &[usize],
    x: &Axis,
    y: &Axis,
    data: &dyn Fn(usize) -> String,
) {
    for (i, &label) in labels.iter().enumerate() {
        let _ = writeln!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{}\" fill-opacity=\"0.7\" data-node=\"{i}\" data-label=\"{label}\" data-value=\"{}\"/>",
            x.px(xs[i]),
            y.px(ys[i]),
            color(label),
            data(i)
        );
    }
}

/// 1-D embedding: one horizontal lane per true label.
pub fn strip(values: &[f64], labels: &[usize], title: &str) -> String {
    let k = labels.iter().max().map_or(1, |m| m + 1);
    let x = Axis::new(values.iter().copied(), MARGIN, WIDTH - MARGIN);
    let y = Axis {
        lo: -0.5,
        hi: k as f64 - 0.5,
        px_lo: HEIGHT - MARGIN,
        px_hi: MARGIN,
    };
    // Deterministic vertical jitter inside each lane.
    let lanes: Vec<f64> = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| l as f64 + 0.3 * (((i * 37) % 11) as f64 / 10.0 - 0.5))
        .collect();
    let mut out = header(title);
    frame(&mut out, &x, &y, "x", "true cluster");
    points(&mut out, values, &lanes, labels, &x, &y, &|i| {
        values[i].to_string()
    });
    legend(&mut out, &cluster_names(labels));
    out.push_str("</svg>\n");
    out
}

/// 2-D embedding scatter.
pub fn scatter(xs: &[f64], ys: &[f64], labels: &[usize], title: &str) -> String {
    let x = Axis::new(xs.iter().copied(), MARGIN, WIDTH - MARGIN);
    let y = Axis::new(ys.iter().copied(), HEIGHT - MARGIN, MARGIN);
    let mut out = header(title);
    frame(&mut out, &x, &y, "x_1", "x_2");
    points(&mut out, xs, ys, labels, &x, &y, &|i| {
        format!("{} {}", xs[i], ys[i])
    });
    legend(&mut out, &cluster_names(labels));
    out.push_str("</svg>\n");
    out
}

/// 3-D embedding under a fixed oblique projection.
pub fn projected(coords: &[[f64; 3]], labels: &[usize], title: &str) -> String {
    let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
    let us: Vec<f64> = coords.iter().map(|p| (p[0] - p[1]) * c).collect();
    let vs: Vec<f64> = coords
        .iter()
        .map(|p| p[2] + (p[0] + p[1]) * s * 0.5)
        .collect();
    let x = Axis::new(us.iter().copied(), MARGIN, WIDTH - MARGIN);
    let y = Axis::new(vs.iter().copied(), HEIGHT - MARGIN, MARGIN);
    let mut out = header(title);
    frame(
        &mut out,
        &x,
        &y,
        "(x_1 - x_2) cos 30°",
        "x_3 + (x_1 + x_2) sin 30° / 2",
    );
    points(&mut out, &us, &vs, labels, &x, &y, &|i| {
        format!("{} {} {}", coords[i][0], coords[i][1], coords[i][2])
    });
    legend(&mut out, &cluster_names(labels));
    out.push_str("</svg>\n");
    out
}

/// Several named series against a shared integer x axis.
pub fn lines(series: &[(String, Vec<f64>)], x_label: &str, y_label: &str, title: &str) -> String {
    let len = series.iter().map(|(_, v)| v.len()).max().unwrap_or(1);
    let x = Axis {
        lo: 0.0,
        hi: (len.max(2) - 1) as f64,
        px_lo: MARGIN,
        px_hi: WIDTH - MARGIN,
    };
    let y = Axis::new(
        series
            .iter()
            .flat_map(|(_, v)| v.iter().copied())
            .chain([0.0]),
        HEIGHT - MARGIN,
        MARGIN,
    );
    let mut out = header(title);
    frame(&mut out, &x, &y, x_label, y_label);
    for (idx, (name, values)) in series.iter().enumerate() {
        let pts: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(t, v)| format!("{:.2},{:.2}", x.px(t as f64), y.px(*v)))
            .collect();
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\" data-series=\"{}\" data-values=\"{}\"/>",
            color(idx),
            pts.join(" "),
            escape(name),
            values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
        );
    }
    let names: Vec<String> = series.iter().map(|(n, _)| n.clone()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}
