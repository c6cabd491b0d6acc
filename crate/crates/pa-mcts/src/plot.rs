//! Plot-data JSON and a small-multiples SVG rendering of sweep results.
//!
//! The JSON groups cells by environment, then alpha, with (budget, mean,
//! std) triples sorted by budget: exactly the series needed to redraw the
//! convergence panels. The SVG renderer draws one panel per (env, alpha)
//! pair, mean versus budget with ±std error bars.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::experiment::{CellResult, ExperimentError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub budget: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSeries {
    pub alpha: f64,
    pub points: Vec<PlotPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvPanel {
    pub env_label: String,
    pub series: Vec<AlphaSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub envs: Vec<EnvPanel>,
}

impl PlotData {
    /// Group cells by env label, then alpha, points sorted by budget.
    /// Envs and alphas appear in their order of first appearance.
    pub fn from_results(results: &[CellResult]) -> PlotData {
        let mut envs: Vec<EnvPanel> = Vec::new();
        for cell in results {
            let panel = match envs.iter_mut().find(|p| p.env_label == cell.env_label) {
                Some(p) => p,
                None => {
                    envs.push(EnvPanel {
                        env_label: cell.env_label.clone(),
                        series: Vec::new(),
                    });
                    envs.last_mut().unwrap()
                }
            };
            let series = match panel.series.iter_mut().find(|s| s.alpha == cell.alpha) {
                Some(s) => s,
                None => {
                    panel.series.push(AlphaSeries {
                        alpha: cell.alpha,
                        points: Vec::new(),
                    });
                    panel.series.last_mut().unwrap()
                }
            };
            series.points.push(PlotPoint {
                budget: cell.budget,
                mean: cell.mean,
                std: cell.std_dev,
            });
        }
        for panel in &mut envs {
            for series in &mut panel.series {
                series.points.sort_by_key(|p| p.budget);
            }
        }
        PlotData { envs }
    }

    pub fn write_json(&self, path: &Path) -> Result<(), ExperimentError> {
        let mut file = std::fs::File::create(path)?;
        let text = serde_json::to_string_pretty(self).expect("plot data serializes infallibly");
        file.write_all(text.as_bytes())?;
        file.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<PlotData, ExperimentError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| ExperimentError::Malformed {
            line: 0,
            reason: format!("plot json: {e}"),
        })
    }
}

const PANEL_WIDTH: f64 = 190.0;
const PANEL_HEIGHT: f64 = 150.0;
const PANEL_PAD_LEFT: f64 = 46.0;
const PANEL_PAD_BOTTOM: f64 = 30.0;
const PANEL_PAD_TOP: f64 = 22.0;
const PANEL_PAD_RIGHT: f64 = 12.0;
const MARGIN: f64 = 10.0;

/// Render the small-multiples chart: one row per environment, one column
/// per alpha, shared y-range across every panel.
pub fn render_svg(data: &PlotData, path: &Path) -> Result<(), ExperimentError> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(svg_document(data).as_bytes())?;
    Ok(())
}

fn svg_document(data: &PlotData) -> String {
    let cols = data
        .envs
        .iter()
        .map(|p| p.series.len())
        .max()
        .unwrap_or(0)
        .max(1);
    let rows = data.envs.len().max(1);
    let width = MARGIN * 2.0 + cols as f64 * PANEL_WIDTH;
    let height = MARGIN * 2.0 + rows as f64 * PANEL_HEIGHT;

    // Shared axis ranges.
    let mut y_max = f64::MIN;
    let mut y_min: f64 = 0.0;
    let mut budgets: Vec<usize> = Vec::new();
    for panel in &data.envs {
        for series in &panel.series {
            for p in &series.points {
                y_max = y_max.max(p.mean + p.std);
                y_min = y_min.min(p.mean - p.std);
                if !budgets.contains(&p.budget) {
                    budgets.push(p.budget);
                }
            }
        }
    }
    budgets.sort_unstable();
    if y_max <= y_min {
        y_max = y_min + 1.0;
    }

    let mut svg = String::new();
    svg.push_str(&format!(
        concat!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" "#,
            r#"viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="10">"#,
            "\n"
        ),
        w = width,
        h = height
    ));
    svg.push_str(&format!(
        "<rect width=\"{width:.0}\" height=\"{height:.0}\" fill=\"white\"/>\n"
    ));

    for (row, panel) in data.envs.iter().enumerate() {
        for (col, series) in panel.series.iter().enumerate() {
            let ox = MARGIN + col as f64 * PANEL_WIDTH;
            let oy = MARGIN + row as f64 * PANEL_HEIGHT;
            svg.push_str(&panel_svg(
                series,
                &panel.env_label,
                ox,
                oy,
                &budgets,
                y_min,
                y_max,
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn panel_svg(
    series: &AlphaSeries,
    env_label: &str,
    ox: f64,
    oy: f64,
    budgets: &[usize],
    y_min: f64,
    y_max: f64,
) -> String {
    let x0 = ox + PANEL_PAD_LEFT;
    let y0 = oy + PANEL_PAD_TOP;
    let plot_w = PANEL_WIDTH - PANEL_PAD_LEFT - PANEL_PAD_RIGHT;
    let plot_h = PANEL_HEIGHT - PANEL_PAD_TOP - PANEL_PAD_BOTTOM;

    let b_lo = *budgets.first().unwrap_or(&0) as f64;
    let b_hi = *budgets.last().unwrap_or(&1) as f64;
    let x_of = |budget: usize| {
        if b_hi > b_lo {
            x0 + (budget as f64 - b_lo) / (b_hi - b_lo) * plot_w
        } else {
            x0 + plot_w / 2.0
        }
    };
    let y_of = |v: f64| y0 + plot_h - (v - y_min) / (y_max - y_min) * plot_h;

    let mut s = String::new();
    s.push_str(&format!(
        "<g><text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{} — α = {}</text>\n",
        x0 + plot_w / 2.0,
        y0 - 8.0,
        xml_escape(env_label),
        series.alpha
    ));
    // Axes.
    s.push_str(&format!(
        "<path d=\"M {x0:.1} {y0:.1} V {yb:.1} H {x1:.1}\" fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>\n",
        x0 = x0,
        y0 = y0,
        yb = y0 + plot_h,
        x1 = x0 + plot_w
    ));
    // Y ticks.
    for i in 0..=3 {
        let v = y_min + (y_max - y_min) * i as f64 / 3.0;
        let y = y_of(v);
        s.push_str(&format!(
            concat!(
                "<line x1=\"{x0:.1}\" y1=\"{y:.1}\" x2=\"{x2:.1}\" y2=\"{y:.1}\" stroke=\"#ccc\" stroke-width=\"0.5\"/>",
                "<text x=\"{tx:.1}\" y=\"{ty:.1}\" text-anchor=\"end\">{v:.0}</text>\n"
            ),
            x0 = x0,
            x2 = x0 + plot_w,
            y = y,
            tx = x0 - 4.0,
            ty = y + 3.0,
            v = v
        ));
    }
    // X ticks at the actual budgets.
    for &b in budgets {
        let x = x_of(b);
        s.push_str(&format!(
            concat!(
                "<line x1=\"{x:.1}\" y1=\"{y1:.1}\" x2=\"{x:.1}\" y2=\"{y2:.1}\" stroke=\"#444\" stroke-width=\"1\"/>",
                "<text x=\"{x:.1}\" y=\"{ty:.1}\" text-anchor=\"middle\">{b}</text>\n"
            ),
            x = x,
            y1 = y0 + plot_h,
            y2 = y0 + plot_h + 3.0,
            ty = y0 + plot_h + 14.0,
            b = b
        ));
    }
    // Error bars, polyline, dots.
    for p in &series.points {
        let x = x_of(p.budget);
        let (top, bot) = (y_of(p.mean + p.std), y_of(p.mean - p.std));
        s.push_str(&format!(
            concat!(
                "<line x1=\"{x:.1}\" y1=\"{top:.1}\" x2=\"{x:.1}\" y2=\"{bot:.1}\" stroke=\"#1f77b4\" stroke-width=\"1\"/>",
                "<line x1=\"{xl:.1}\" y1=\"{top:.1}\" x2=\"{xr:.1}\" y2=\"{top:.1}\" stroke=\"#1f77b4\" stroke-width=\"1\"/>",
                "<line x1=\"{xl:.1}\" y1=\"{bot:.1}\" x2=\"{xr:.1}\" y2=\"{bot:.1}\" stroke=\"#1f77b4\" stroke-width=\"1\"/>\n"
            ),
            x = x,
            xl = x - 3.0,
            xr = x + 3.0,
            top = top,
            bot = bot
        ));
    }
    if series.points.len() > 1 {
        let pts: Vec<String> = series
            .points
            .iter()
            .map(|p| format!("{:.1},{:.1}", x_of(p.budget), y_of(p.mean)))
            .collect();
        s.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.2\"/>\n",
            pts.join(" ")
        ));
    }
    for p in &series.points {
        s.push_str(&format!(
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2.4\" fill=\"#1f77b4\"/>\n",
            x_of(p.budget),
            y_of(p.mean)
        ));
    }
    s.push_str("</g>\n");
    s
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
