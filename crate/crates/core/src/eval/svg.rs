//! Thin SVG writers for the two plots batch runs emit: accuracy-vs-data
//! ablation curves and a 2-D scatter (MDS embeddings). Fixed viewport,
//! no interactivity.

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn header() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    )
}

fn axes(x_label: &str, y_label: &str) -> String {
    let x0 = MARGIN;
    let y0 = HEIGHT - MARGIN;
    let x1 = WIDTH - MARGIN;
    let y1 = MARGIN;
    format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 {} {})\">{y_label}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - MARGIN / 3.0,
        MARGIN / 3.0,
        (y0 + y1) / 2.0,
        MARGIN / 3.0,
        (y0 + y1) / 2.0,
    )
}

fn scale(v: f64, lo: f64, hi: f64, out_lo: f64, out_hi: f64) -> f64 {
    if hi <= lo {
        return (out_lo + out_hi) / 2.0;
    }
    out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)
}

/// Accuracy (percent) against data size in MB, one polyline per series.
pub fn ablation_curves(series: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut svg = header();
    svg.push_str(&axes("unlabeled data (MB)", "accuracy (%)"));
    let xs: Vec<f64> = series.iter().flat_map(|(_, pts)| pts.iter().map(|p| p.0)).collect();
    let x_max = xs.iter().cloned().fold(1.0f64, f64::max);
    for (i, (name, points)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut sorted = points.clone();
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let path: Vec<String> = sorted
            .iter()
            .map(|&(mb, acc)| {
                let x = scale(mb, 0.0, x_max, MARGIN, WIDTH - MARGIN);
                let y = scale(acc * 100.0, 0.0, 100.0, HEIGHT - MARGIN, MARGIN);
                format!("{x:.1},{y:.1}")
            })
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            path.join(" ")
        ));
        for &(mb, acc) in &sorted {
            let x = scale(mb, 0.0, x_max, MARGIN, WIDTH - MARGIN);
            let y = scale(acc * 100.0, 0.0, 100.0, HEIGHT - MARGIN, MARGIN);
            svg.push_str(&format!("<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"3\" fill=\"{color}\"/>\n"));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{name}</text>\n",
            WIDTH - MARGIN + 5.0,
            MARGIN + 16.0 * i as f64
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Labeled 2-D scatter with equal-ish framing around the data.
pub fn scatter(points: &[(String, f64, f64)]) -> String {
    let mut svg = header();
    svg.push_str(&axes("dimension 1", "dimension 2"));
    let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(_, x, y) in points {
        lo_x = lo_x.min(x);
        hi_x = hi_x.max(x);
        lo_y = lo_y.min(y);
        hi_y = hi_y.max(y);
    }
    if points.is_empty() {
        lo_x = 0.0;
        hi_x = 1.0;
        lo_y = 0.0;
        hi_y = 1.0;
    }
    let pad_x = (hi_x - lo_x).max(1e-9) * 0.1;
    let pad_y = (hi_y - lo_y).max(1e-9) * 0.1;
    for (i, (label, x, y)) in points.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let px = scale(*x, lo_x - pad_x, hi_x + pad_x, MARGIN, WIDTH - MARGIN);
        let py = scale(*y, lo_y - pad_y, hi_y + pad_y, HEIGHT - MARGIN, MARGIN);
        svg.push_str(&format!("<circle cx=\"{px:.1}\" cy=\"{py:.1}\" r=\"4\" fill=\"{color}\"/>\n"));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\">{label}</text>\n",
            px + 6.0,
            py - 6.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
