//! Deterministic SVG rendering of the result figures. Pure functions of
//! their input: identical input yields byte-identical output.
//!
//! Geometry is fixed at 800x400 with 10% margins; travel-time charts draw
//! one polyline per protocol, distribution charts draw two labeled bars.

use crate::model::Protocol;

use super::{DistributionSummary, TravelPoint};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const MARGIN_X: f64 = WIDTH * 0.10;
const MARGIN_Y: f64 = HEIGHT * 0.10;
const PLOT_W: f64 = WIDTH - 2.0 * MARGIN_X;
const PLOT_H: f64 = HEIGHT - 2.0 * MARGIN_Y;

fn color_of(protocol: Protocol) -> &'static str {
    match protocol {
        Protocol::Mqtt => "#1f77b4",
        Protocol::Coap => "#ff7f0e",
    }
}

fn svg_open(out: &mut String) {
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
}

fn axes(out: &mut String) {
    let left = MARGIN_X;
    let right = MARGIN_X + PLOT_W;
    let top = MARGIN_Y;
    let bottom = MARGIN_Y + PLOT_H;
    out.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{bottom}\" stroke=\"black\"/>\n"
    ));
    out.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{bottom}\" x2=\"{right}\" y2=\"{bottom}\" stroke=\"black\"/>\n"
    ));
}

fn no_data(out: &mut String) {
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"16\">no data</text>\n",
        WIDTH / 2.0,
        HEIGHT / 2.0
    ));
}

fn legend(out: &mut String) {
    for (i, protocol) in Protocol::ALL.iter().enumerate() {
        let x = MARGIN_X + PLOT_W - 110.0;
        let y = MARGIN_Y + 14.0 + 18.0 * i as f64;
        out.push_str(&format!(
            "<rect x=\"{x}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
            y - 10.0,
            color_of(*protocol)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{y}\" font-family=\"monospace\" font-size=\"12\">{protocol}</text>\n",
            x + 16.0
        ));
    }
}

/// Travel-time line chart: time on x, sec_diff on y, one polyline per
/// protocol present in the input.
pub fn render_travel_time_svg(rows: &[TravelPoint]) -> String {
    let mut out = String::new();
    svg_open(&mut out);
    axes(&mut out);
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\">inserted_ts</text>\n",
        WIDTH / 2.0,
        HEIGHT - 8.0
    ));
    out.push_str(&format!(
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\" transform=\"rotate(-90 14 {})\">sec_diff (s)</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0
    ));

    if rows.is_empty() {
        no_data(&mut out);
        out.push_str("</svg>\n");
        return out;
    }

    let t_min = rows.iter().map(|p| p.inserted_ts.micros()).min().unwrap();
    let t_max = rows.iter().map(|p| p.inserted_ts.micros()).max().unwrap();
    let v_min = rows
        .iter()
        .map(|p| p.sec_diff)
        .fold(f64::INFINITY, f64::min);
    let v_max = rows
        .iter()
        .map(|p| p.sec_diff)
        .fold(f64::NEG_INFINITY, f64::max);

    let x_of = |t: i64| -> f64 {
        if t_max == t_min {
            MARGIN_X + PLOT_W / 2.0
        } else {
            MARGIN_X + (t - t_min) as f64 / (t_max - t_min) as f64 * PLOT_W
        }
    };
    let y_of = |v: f64| -> f64 {
        if v_max == v_min {
            MARGIN_Y + PLOT_H / 2.0
        } else {
            MARGIN_Y + PLOT_H - (v - v_min) / (v_max - v_min) * PLOT_H
        }
    };

    // Axis extent labels.
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"10\">{}</text>\n",
        MARGIN_X,
        MARGIN_Y + PLOT_H + 14.0,
        crate::model::Timestamp::from_micros(t_min)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"10\">{}</text>\n",
        MARGIN_X + PLOT_W,
        MARGIN_Y + PLOT_H + 14.0,
        crate::model::Timestamp::from_micros(t_max)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"10\">{v_max:.6}</text>\n",
        MARGIN_X - 4.0,
        MARGIN_Y + 4.0
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"10\">{v_min:.6}</text>\n",
        MARGIN_X - 4.0,
        MARGIN_Y + PLOT_H + 4.0
    ));

    for protocol in Protocol::ALL {
        let points: Vec<String> = rows
            .iter()
            .filter(|p| p.protocol == protocol)
            .map(|p| {
                format!(
                    "{:.2},{:.2}",
                    x_of(p.inserted_ts.micros()),
                    y_of(p.sec_diff)
                )
            })
            .collect();
        if points.is_empty() {
            continue;
        }
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            color_of(protocol),
            points.join(" ")
        ));
    }
    legend(&mut out);
    out.push_str("</svg>\n");
    out
}

/// Distribution bar chart: one bar per protocol with count and percentage
/// labels.
pub fn render_distribution_svg(summary: &DistributionSummary) -> String {
    let mut out = String::new();
    svg_open(&mut out);
    axes(&mut out);

    if summary.empty {
        no_data(&mut out);
        out.push_str("</svg>\n");
        return out;
    }

    let max_count = summary.mqtt.max(summary.coap).max(1) as f64;
    let bar_w = PLOT_W / 5.0;
    let bars = [
        (Protocol::Mqtt, summary.mqtt, summary.mqtt_pct),
        (Protocol::Coap, summary.coap, summary.coap_pct),
    ];
    for (i, (protocol, count, pct)) in bars.iter().enumerate() {
        let x = MARGIN_X + PLOT_W * (0.25 + 0.5 * i as f64) - bar_w / 2.0;
        let h = *count as f64 / max_count * (PLOT_H * 0.9);
        let y = MARGIN_Y + PLOT_H - h;
        out.push_str(&format!(
            "<rect class=\"bar\" x=\"{x:.2}\" y=\"{y:.2}\" width=\"{bar_w:.2}\" height=\"{h:.2}\" fill=\"{}\"/>\n",
            color_of(*protocol)
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"14\">{count} ({pct:.1}%)</text>\n",
            x + bar_w / 2.0,
            y - 6.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"14\">{protocol}</text>\n",
            x + bar_w / 2.0,
            MARGIN_Y + PLOT_H + 18.0
        ));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::summarize_counts;
    use crate::model::Timestamp;

    fn point(us: i64, protocol: Protocol, sec_diff: f64) -> TravelPoint {
        TravelPoint {
            inserted_ts: Timestamp::from_micros(us),
            protocol,
            sec_diff,
        }
    }

    /// Counts coordinate pairs across all polylines.
    pub(crate) fn polyline_point_counts(svg: &str) -> Vec<usize> {
        svg.lines()
            .filter(|l| l.starts_with("<polyline"))
            .map(|l| {
                let start = l.find("points=\"").unwrap() + 8;
                let end = l[start..].find('"').unwrap() + start;
                l[start..end].split_whitespace().count()
            })
            .collect()
    }

    #[test]
    fn empty_series_renders_axes_and_no_data_label() {
        let svg = render_travel_time_svg(&[]);
        assert!(svg.contains("no data"));
        assert!(svg.contains("<line"));
        assert!(!svg.contains("<polyline"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let rows = vec![
            point(0, Protocol::Mqtt, 0.010),
            point(1_000_000, Protocol::Coap, 0.002),
            point(2_000_000, Protocol::Mqtt, 0.020),
        ];
        assert_eq!(render_travel_time_svg(&rows), render_travel_time_svg(&rows));
        let summary = summarize_counts(7, 3);
        assert_eq!(
            render_distribution_svg(&summary),
            render_distribution_svg(&summary)
        );
    }

    #[test]
    fn polyline_points_match_input_rows_per_protocol() {
        let rows = vec![
            point(0, Protocol::Mqtt, 0.010),
            point(1_000_000, Protocol::Coap, 0.002),
            point(2_000_000, Protocol::Mqtt, 0.020),
            point(3_000_000, Protocol::Mqtt, 0.030),
        ];
        let svg = render_travel_time_svg(&rows);
        // Protocol order is fixed: mqtt first, coap second.
        assert_eq!(polyline_point_counts(&svg), vec![3, 1]);
    }

    #[test]
    fn distribution_bars_carry_count_and_pct_labels() {
        let svg = render_distribution_svg(&summarize_counts(5, 5));
        assert!(svg.contains("5 (50.0%)"));
        assert_eq!(svg.matches("class=\"bar\"").count(), 2);

        let empty = render_distribution_svg(&summarize_counts(0, 0));
        assert!(empty.contains("no data"));
    }
}
