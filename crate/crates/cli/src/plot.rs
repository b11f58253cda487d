//! Minimal self-contained SVG curve rendering.

const WIDTH: f64 = 520.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;

/// Extracts two named numeric columns from a CSV with a header row.
pub fn columns_from_csv(text: &str, x_col: &str, y_col: &str) -> Result<(Vec<f64>, Vec<f64>), String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty csv")?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let xi = names
        .iter()
        .position(|&n| n == x_col)
        .ok_or_else(|| format!("column {x_col} not in header {header}"))?;
    let yi = names
        .iter()
        .position(|&n| n == y_col)
        .ok_or_else(|| format!("column {y_col} not in header {header}"))?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse = |i: usize| -> Result<f64, String> {
            fields
                .get(i)
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| format!("bad row: {line}"))
        };
        xs.push(parse(xi)?);
        ys.push(parse(yi)?);
    }
    if xs.is_empty() {
        return Err("csv has no data rows".into());
    }
    Ok((xs, ys))
}

fn extent(vs: &[f64]) -> (f64, f64) {
    let lo = vs.iter().cloned().fold(f64::MAX, f64::min);
    let hi = vs.iter().cloned().fold(f64::MIN, f64::max);
    if (hi - lo).abs() < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Polyline plot of (xs, ys) with labeled axes; one `<polyline>` element.
pub fn curve_svg(xs: &[f64], ys: &[f64], x_label: &str, y_label: &str) -> String {
    let (x_lo, x_hi) = extent(xs);
    let (y_lo, y_hi) = extent(ys);
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);
    let points: Vec<String> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let (ax0, ax1) = (MARGIN, WIDTH - MARGIN);
    let (ay0, ay1) = (HEIGHT - MARGIN, MARGIN);
    svg.push_str(&format!(
        "<line x1=\"{ax0}\" y1=\"{ay0}\" x2=\"{ax1}\" y2=\"{ay0}\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "<line x1=\"{ax0}\" y1=\"{ay0}\" x2=\"{ax0}\" y2=\"{ay1}\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        WIDTH / 2.0,
        HEIGHT - 18.0,
        x_label
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        y_label
    ));
    for (value, x) in [(x_lo, ax0), (x_hi, ax1)] {
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{value:.2}</text>\n",
            ay0 + 16.0
        ));
    }
    for (value, y) in [(y_lo, ay0), (y_hi, ay1)] {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{y}\" text-anchor=\"end\" font-size=\"11\">{value:.2}</text>\n",
            ax0 - 6.0
        ));
    }
    svg.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        points.join(" ")
    ));
    svg.push_str("</svg>\n");
    svg
}

/// PR plot with fixed [0, 1] axes.
pub fn pr_curve_svg(recall: &[f64], precision: &[f64]) -> String {
    curve_svg(recall, precision, "recall", "precision")
}
