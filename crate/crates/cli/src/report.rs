//! Rendering of persisted run artifacts into CSV and a static SVG forest
//! plot. Everything here reads prior outputs; nothing recomputes predictions.

use cope_core::stats::{ForestRow, MetricCi, MetricReport};

pub fn metrics_csv(report: &MetricReport) -> String {
    let mut out = String::from("metric,point,ci_lo,ci_hi,n,excluded_parse_failed,excluded_backend_failed,excluded_missing_label\n");
    let mut row = |name: &str, m: &MetricCi| {
        out.push_str(&format!(
            "{name},{},{},{},{},{},{},{}\n",
            m.point,
            m.ci_lo,
            m.ci_hi,
            report.n,
            report.excluded.parse_failed,
            report.excluded.backend_failed,
            report.excluded.missing_label,
        ));
    };
    row("mae", &report.mae);
    row("acc", &report.acc);
    row("within1_acc", &report.within1_acc);
    out
}

pub fn forest_csv(rows: &[ForestRow]) -> String {
    let mut out = String::from("axis,band,n,mae,ci_lo,ci_hi\n");
    for row in rows {
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.axis,
            csv_quote(&row.band),
            row.n,
            fmt(row.mae),
            fmt(row.ci_lo),
            fmt(row.ci_hi),
        ));
    }
    out
}

fn csv_quote(field: &str) -> String {
    if field.contains(',') || field.contains('"') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Static forest plot: one row per band, square at the MAE, whiskers to the
/// CI bounds, grouped by axis.
pub fn forest_svg(rows: &[ForestRow], title: &str) -> String {
    const WIDTH: f64 = 780.0;
    const ROW_H: f64 = 24.0;
    const TOP: f64 = 56.0;
    const LEFT: f64 = 230.0;
    const PLOT_W: f64 = 400.0;

    let max_value = rows
        .iter()
        .flat_map(|r| [r.ci_hi, r.mae])
        .flatten()
        .fold(1.0f64, f64::max)
        * 1.1;
    let x = |value: f64| LEFT + PLOT_W * (value / max_value);
    let height = TOP + ROW_H * rows.len() as f64 + 48.0;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"24\" font-size=\"15\" font-weight=\"bold\">{}</text>\n",
        xml_escape(title)
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"40\" fill=\"#555\">MAE with 95% bootstrap CI</text>\n",
        LEFT
    ));

    // x axis with ticks every quarter of the range.
    let axis_y = TOP + ROW_H * rows.len() as f64 + 12.0;
    svg.push_str(&format!(
        "<line x1=\"{LEFT}\" y1=\"{axis_y}\" x2=\"{}\" y2=\"{axis_y}\" stroke=\"#333\"/>\n",
        LEFT + PLOT_W
    ));
    for i in 0..=4 {
        let value = max_value * i as f64 / 4.0;
        let tick_x = x(value);
        svg.push_str(&format!(
            "<line x1=\"{tick_x}\" y1=\"{axis_y}\" x2=\"{tick_x}\" y2=\"{}\" stroke=\"#333\"/>\n",
            axis_y + 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{tick_x}\" y=\"{}\" text-anchor=\"middle\" fill=\"#333\">{value:.2}</text>\n",
            axis_y + 18.0
        ));
    }

    let mut previous_axis = "";
    for (i, row) in rows.iter().enumerate() {
        let y = TOP + ROW_H * i as f64 + ROW_H / 2.0;
        if row.axis != previous_axis {
            svg.push_str(&format!(
                "<text x=\"16\" y=\"{}\" font-weight=\"bold\">{}</text>\n",
                y + 4.0,
                xml_escape(&row.axis)
            ));
            previous_axis = &row.axis;
        }
        svg.push_str(&format!(
            "<text x=\"110\" y=\"{}\" fill=\"#222\">{}</text>\n",
            y + 4.0,
            xml_escape(&row.band)
        ));
        match (row.mae, row.ci_lo, row.ci_hi) {
            (Some(mae), Some(lo), Some(hi)) => {
                svg.push_str(&format!(
                    "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#456\" stroke-width=\"1.5\"/>\n",
                    x(lo),
                    x(hi)
                ));
                svg.push_str(&format!(
                    "<rect x=\"{}\" y=\"{}\" width=\"8\" height=\"8\" fill=\"#245\"/>\n",
                    x(mae) - 4.0,
                    y - 4.0
                ));
                svg.push_str(&format!(
                    "<text x=\"{}\" y=\"{}\" fill=\"#333\">{:.2} ({:.2}-{:.2})  n={}</text>\n",
                    LEFT + PLOT_W + 12.0,
                    y + 4.0,
                    mae,
                    lo,
                    hi,
                    row.n
                ));
            }
            (Some(mae), _, _) => {
                svg.push_str(&format!(
                    "<rect x=\"{}\" y=\"{}\" width=\"8\" height=\"8\" fill=\"#245\"/>\n",
                    x(mae) - 4.0,
                    y - 4.0
                ));
                svg.push_str(&format!(
                    "<text x=\"{}\" y=\"{}\" fill=\"#333\">{:.2} (no CI)  n={}</text>\n",
                    LEFT + PLOT_W + 12.0,
                    y + 4.0,
                    mae,
                    row.n
                ));
            }
            _ => {
                svg.push_str(&format!(
                    "<text x=\"{}\" y=\"{}\" fill=\"#999\">empty  n=0</text>\n",
                    LEFT + PLOT_W + 12.0,
                    y + 4.0
                ));
            }
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
