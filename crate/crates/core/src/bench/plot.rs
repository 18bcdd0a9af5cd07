//! Self-contained SVG figures. Every plotted number is also printed as text and attached as a
//! `data-*` attribute so outputs can be checked by parsing.

use std::fmt::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::methods::MethodKind;
use crate::metrics::{CellResult, Metric, MetricStats};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeatmapValue {
    /// Oracle mean minus method mean.
    DeltaFromOracle,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SummaryKind {
    Box,
    LineBySize,
    SubpopBars,
}

impl FromStr for SummaryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box" => Ok(SummaryKind::Box),
            "line-by-size" => Ok(SummaryKind::LineBySize),
            "subpop-bars" => Ok(SummaryKind::SubpopBars),
            other => Err(Error::Usage(format!(
                "unknown plot kind {other:?}; expected box, line-by-size or subpop-bars"
            ))),
        }
    }
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Three decimals, without a negative sign on zero.
pub(crate) fn label(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    MetricStats::from_values(values).mean
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn header(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = write!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="20" text-anchor="middle" font-size="14" class="title">{}</text>
"##,
        width / 2.0,
        esc(title)
    );
}

/// One cell per (event rate, non-selection rate) for `method`, pooling sizes and seeds.
///
/// Cells with no present values are hatched and carry no number.
pub fn render_heatmap(cells: &[CellResult], metric: Metric, method: MethodKind, value: HeatmapValue) -> Result<String> {
    if !cells.iter().any(|c| c.method == method) {
        return Err(Error::Usage(format!("results contain no rows for method {method}")));
    }
    if value == HeatmapValue::DeltaFromOracle && !cells.iter().any(|c| c.method == MethodKind::Oracle) {
        return Err(Error::Usage("delta-from-oracle needs oracle rows in the results".into()));
    }
    let events = sorted_unique(cells.iter().map(|c| c.config.event_rate).collect());
    let nonselects = sorted_unique(cells.iter().map(|c| c.config.nonselect_rate).collect());
    let pooled = |m: MethodKind, e: f64, ns: f64| -> Option<f64> {
        let v: Vec<f64> = cells
            .iter()
            .filter(|c| c.method == m && c.config.event_rate == e && c.config.nonselect_rate == ns)
            .filter_map(|c| c.metric(metric))
            .collect();
        mean(&v)
    };
    let mut grid: Vec<(f64, f64, Option<f64>)> = Vec::new();
    for &ns in &nonselects {
        for &e in &events {
            let v = match value {
                HeatmapValue::Mean => pooled(method, e, ns),
                HeatmapValue::DeltaFromOracle => match (pooled(MethodKind::Oracle, e, ns), pooled(method, e, ns)) {
                    (Some(o), Some(m)) => Some(o - m),
                    _ => None,
                },
            };
            grid.push((e, ns, v));
        }
    }
    let scale = grid
        .iter()
        .filter_map(|g| g.2)
        .map(f64::abs)
        .fold(0.0f64, f64::max)
        .max(1e-12);

    let (cw, ch, left, top) = (80.0, 50.0, 110.0, 50.0);
    let width = left + cw * events.len() as f64 + 30.0;
    let height = top + ch * nonselects.len() as f64 + 60.0;
    let what = match value {
        HeatmapValue::DeltaFromOracle => format!("oracle minus {method}, {metric}"),
        HeatmapValue::Mean => format!("{method}, mean {metric}"),
    };
    let mut out = String::new();
    header(&mut out, width, height, &what);
    out.push_str(
        r##"<defs><pattern id="hatch" width="8" height="8" patternUnits="userSpaceOnUse" patternTransform="rotate(45)"><rect width="8" height="8" fill="#f0f0f0"/><line x1="0" y1="0" x2="0" y2="8" stroke="#999" stroke-width="2"/></pattern></defs>
"##,
    );
    let _ = writeln!(
        out,
        r#"<g class="heatmap" data-method="{method}" data-metric="{metric}" data-rows="{}" data-cols="{}">"#,
        nonselects.len(),
        events.len()
    );
    for (idx, (e, ns, v)) in grid.iter().enumerate() {
        let col = idx % events.len();
        let row = idx / events.len();
        let x = left + col as f64 * cw;
        let y = top + row as f64 * ch;
        match v {
            Some(v) => {
                let t = (v.abs() / scale).min(1.0);
                let fade = (255.0 * (1.0 - 0.75 * t)).round() as u8;
                let fill = if *v >= 0.0 {
                    format!("rgb(255,{fade},{fade})")
                } else {
                    format!("rgb({fade},{fade},255)")
                };
                let _ = writeln!(
                    out,
                    r#"<g class="cell" data-event-rate="{e}" data-nonselect-rate="{ns}" data-value="{v}"><rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="{fill}" stroke="white"/><text x="{}" y="{}" text-anchor="middle">{}</text></g>"#,
                    x + cw / 2.0,
                    y + ch / 2.0 + 4.0,
                    label(*v)
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    r#"<g class="cell" data-event-rate="{e}" data-nonselect-rate="{ns}" data-missing="true"><rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="url(#hatch)" stroke="white"/></g>"#
                );
            }
        }
    }
    out.push_str("</g>\n");
    for (col, e) in events.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text class="axis-x" x="{}" y="{}" text-anchor="middle">{e}</text>"#,
            left + col as f64 * cw + cw / 2.0,
            top + ch * nonselects.len() as f64 + 18.0
        );
    }
    for (row, ns) in nonselects.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text class="axis-y" x="{}" y="{}" text-anchor="end">{ns}</text>"#,
            left - 8.0,
            top + row as f64 * ch + ch / 2.0 + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">event rate</text>"#,
        left + cw * events.len() as f64 / 2.0,
        height - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">non-selection rate</text>"#,
        top + ch * nonselects.len() as f64 / 2.0,
        top + ch * nonselects.len() as f64 / 2.0
    );
    out.push_str("</svg>\n");
    Ok(out)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

struct Axis {
    lo: f64,
    hi: f64,
    top: f64,
    bottom: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, top: f64, bottom: f64) -> Self {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            lo = 0.0;
            hi = 1.0;
        }
        let pad = ((hi - lo) * 0.1).max(0.05);
        Axis {
            lo: lo - pad,
            hi: hi + pad,
            top,
            bottom,
        }
    }

    fn y(&self, v: f64) -> f64 {
        self.bottom - (v - self.lo) / (self.hi - self.lo) * (self.bottom - self.top)
    }

    fn draw(&self, out: &mut String, x: f64, caption: &str) {
        let _ = writeln!(
            out,
            r##"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#333"/>"##,
            self.top, self.bottom
        );
        for k in 0..=4 {
            let v = self.lo + (self.hi - self.lo) * k as f64 / 4.0;
            let _ = writeln!(
                out,
                r#"<text class="tick" x="{}" y="{}" text-anchor="end">{}</text>"#,
                x - 6.0,
                self.y(v) + 4.0,
                label(v)
            );
        }
        let mid = (self.top + self.bottom) / 2.0;
        let _ = writeln!(
            out,
            r#"<text x="14" y="{mid}" transform="rotate(-90 14 {mid})" text-anchor="middle">{}</text>"#,
            esc(caption)
        );
    }
}

fn methods_in(cells: &[CellResult]) -> Vec<MethodKind> {
    let mut m: Vec<MethodKind> = cells.iter().map(|c| c.method).collect();
    m.sort();
    m.dedup();
    m
}

/// Box plots, size curves or subpopulation bars over every cell in `cells`.
pub fn render_summary(cells: &[CellResult], kind: SummaryKind) -> Result<String> {
    if cells.is_empty() {
        return Err(Error::Usage("results are empty".into()));
    }
    Ok(match kind {
        SummaryKind::Box => render_box(cells),
        SummaryKind::LineBySize => render_lines(cells),
        SummaryKind::SubpopBars => render_bars(cells),
    })
}

fn render_box(cells: &[CellResult]) -> String {
    let methods = methods_in(cells);
    let (left, top, slot) = (70.0, 40.0, 80.0);
    let width = left + slot * methods.len() as f64 + 20.0;
    let height = 340.0;
    let axis = Axis::new(cells.iter().filter_map(|c| c.auc_overall), top, height - 50.0);
    let mut out = String::new();
    header(&mut out, width, height, "auc_overall by method");
    axis.draw(&mut out, left, "auc_overall");
    for (k, &m) in methods.iter().enumerate() {
        let cx = left + slot * (k as f64 + 0.5);
        let mut v: Vec<f64> = cells.iter().filter(|c| c.method == m).filter_map(|c| c.auc_overall).collect();
        let _ = writeln!(
            out,
            r#"<text class="axis-x" x="{cx}" y="{}" text-anchor="middle">{m}</text>"#,
            height - 30.0
        );
        if v.is_empty() {
            let _ = writeln!(out, r#"<g class="box" data-method="{m}" data-missing="true"></g>"#);
            continue;
        }
        v.sort_by(f64::total_cmp);
        let (mn, q1, med, q3, mx) = (v[0], quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75), v[v.len() - 1]);
        let color = PALETTE[k % PALETTE.len()];
        let half = slot * 0.3;
        let _ = writeln!(
            out,
            r##"<g class="box" data-method="{m}" data-count="{}" data-min="{mn}" data-q1="{q1}" data-median="{med}" data-q3="{q3}" data-max="{mx}">
<line x1="{cx}" y1="{}" x2="{cx}" y2="{}" stroke="#333"/>
<rect x="{}" y="{}" width="{}" height="{}" fill="{color}" fill-opacity="0.4" stroke="{color}"/>
<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#000" stroke-width="2"/>
<text x="{cx}" y="{}" text-anchor="middle">{}</text>
</g>"##,
            v.len(),
            axis.y(mx),
            axis.y(mn),
            cx - half,
            axis.y(q3),
            2.0 * half,
            axis.y(q1) - axis.y(q3),
            cx - half,
            axis.y(med),
            cx + half,
            axis.y(med),
            axis.y(mx) - 6.0,
            label(med)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn render_lines(cells: &[CellResult]) -> String {
    let methods = methods_in(cells);
    let mut sizes: Vec<usize> = cells.iter().map(|c| c.config.n_total).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let series: Vec<(MethodKind, Vec<(usize, MetricStats)>)> = methods
        .iter()
        .map(|&m| {
            let pts = sizes
                .iter()
                .map(|&n| {
                    let v: Vec<f64> = cells
                        .iter()
                        .filter(|c| c.method == m && c.config.n_total == n)
                        .filter_map(|c| c.auc_overall)
                        .collect();
                    (n, MetricStats::from_values(&v))
                })
                .filter(|(_, s)| s.mean.is_some())
                .collect();
            (m, pts)
        })
        .collect();
    let (left, top, right) = (70.0, 40.0, 140.0);
    let width = 640.0;
    let height = 360.0;
    let plot_w = width - left - right;
    let axis = Axis::new(
        series.iter().flat_map(|(_, pts)| {
            pts.iter().flat_map(|(_, s)| {
                let m = s.mean.unwrap();
                let d = s.std.unwrap_or(0.0);
                [m - d, m + d]
            })
        }),
        top,
        height - 50.0,
    );
    let x_of = |n: usize| -> f64 {
        if sizes.len() == 1 {
            left + plot_w / 2.0
        } else {
            let (a, b) = (sizes[0] as f64, sizes[sizes.len() - 1] as f64);
            left + (n as f64 - a) / (b - a) * plot_w
        }
    };
    let mut out = String::new();
    header(&mut out, width, height, "auc_overall by dataset size (mean ± 1 sd)");
    axis.draw(&mut out, left, "auc_overall");
    for &n in &sizes {
        let _ = writeln!(
            out,
            r#"<text class="axis-x" x="{}" y="{}" text-anchor="middle">{n}</text>"#,
            x_of(n),
            height - 30.0
        );
    }
    for (k, (m, pts)) in series.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let color = PALETTE[k % PALETTE.len()];
        let upper: Vec<String> = pts
            .iter()
            .map(|(n, s)| format!("{},{}", x_of(*n), axis.y(s.mean.unwrap() + s.std.unwrap_or(0.0))))
            .collect();
        let lower: Vec<String> = pts
            .iter()
            .rev()
            .map(|(n, s)| format!("{},{}", x_of(*n), axis.y(s.mean.unwrap() - s.std.unwrap_or(0.0))))
            .collect();
        let line: Vec<String> = pts
            .iter()
            .map(|(n, s)| format!("{},{}", x_of(*n), axis.y(s.mean.unwrap())))
            .collect();
        let _ = writeln!(out, r#"<g class="series" data-method="{m}">"#);
        let _ = writeln!(
            out,
            r#"<polygon class="band" points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        for (n, s) in pts {
            let mean = s.mean.unwrap();
            let sd = s.std.unwrap_or(0.0);
            let _ = writeln!(
                out,
                r#"<g class="point" data-size="{n}" data-mean="{mean}" data-std="{sd}" data-count="{}"><circle cx="{}" cy="{}" r="3" fill="{color}"/><text x="{}" y="{}" font-size="10" text-anchor="middle">{}</text></g>"#,
                s.count,
                x_of(*n),
                axis.y(mean),
                x_of(*n),
                axis.y(mean) - 8.0,
                label(mean)
            );
        }
        out.push_str("</g>\n");
        let _ = writeln!(
            out,
            r#"<text class="legend" x="{}" y="{}" fill="{color}">{m}</text>"#,
            width - right + 16.0,
            top + 16.0 * k as f64
        );
    }
    out.push_str("</svg>\n");
    out
}

fn render_bars(cells: &[CellResult]) -> String {
    let methods = methods_in(cells);
    let slices = [
        (Metric::AucSelected, "selected", "#2ca02c"),
        (Metric::AucNonselected, "non-selected", "#d62728"),
        (Metric::AucOverall, "overall", "#1f77b4"),
    ];
    let means: Vec<Vec<Option<f64>>> = methods
        .iter()
        .map(|&m| {
            slices
                .iter()
                .map(|(metric, _, _)| {
                    let v: Vec<f64> = cells.iter().filter(|c| c.method == m).filter_map(|c| c.metric(*metric)).collect();
                    mean(&v)
                })
                .collect()
        })
        .collect();
    let (left, top, slot) = (70.0, 40.0, 110.0);
    let width = left + slot * methods.len() as f64 + 120.0;
    let height = 360.0;
    let bottom = height - 50.0;
    let axis = Axis {
        lo: 0.0,
        hi: 1.0,
        top,
        bottom,
    };
    let mut out = String::new();
    header(&mut out, width, height, "AUC by subpopulation");
    axis.draw(&mut out, left, "AUC");
    let bar = slot * 0.25;
    for (k, m) in methods.iter().enumerate() {
        let x0 = left + slot * k as f64 + slot * 0.125;
        let _ = writeln!(out, r#"<g class="group" data-method="{m}">"#);
        for (j, (metric, name, color)) in slices.iter().enumerate() {
            let Some(v) = means[k][j] else { continue };
            let x = x0 + bar * j as f64;
            let _ = writeln!(
                out,
                r#"<g class="bar" data-slice="{name}" data-metric="{metric}" data-value="{v}"><rect x="{x}" y="{}" width="{bar}" height="{}" fill="{color}"/><text x="{}" y="{}" font-size="9" text-anchor="middle">{}</text></g>"#,
                axis.y(v),
                bottom - axis.y(v),
                x + bar / 2.0,
                axis.y(v) - 4.0,
                label(v)
            );
        }
        out.push_str("</g>\n");
        let _ = writeln!(
            out,
            r#"<text class="axis-x" x="{}" y="{}" text-anchor="middle">{m}</text>"#,
            x0 + bar * 1.5,
            height - 30.0
        );
    }
    for (j, (_, name, color)) in slices.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text class="legend" x="{}" y="{}" fill="{color}">{name}</text>"#,
            width - 100.0,
            top + 16.0 * j as f64
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::CellConfig;

    fn cell(method: MethodKind, e: f64, ns: f64, seed: u32, auc: Option<f64>) -> CellResult {
        CellResult {
            method,
            config: CellConfig {
                dataset: "d".into(),
                n_total: 1000,
                event_rate: e,
                nonselect_rate: ns,
                seed_index: seed,
                hparams: String::new(),
            },
            auc_overall: auc,
            auc_selected: auc,
            auc_nonselected: None,
            auc_identification: None,
            deferral_rate: 0.0,
            wall_time: 0.0,
        }
    }

    #[test]
    fn zero_labels_have_no_sign() {
        assert_eq!(label(-0.0), "0.000");
        assert_eq!(label(-1e-9), "0.000");
        assert_eq!(label(0.12345), "0.123");
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&[7.0], 0.25), 7.0);
    }

    #[test]
    fn heatmap_requires_known_method() {
        let cells = vec![cell(MethodKind::Oracle, 0.1, 0.1, 0, Some(0.9))];
        assert!(matches!(
            render_heatmap(&cells, Metric::AucOverall, MethodKind::Kmm, HeatmapValue::DeltaFromOracle),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn missing_group_is_hatched() {
        let cells = vec![
            cell(MethodKind::Oracle, 0.1, 0.1, 0, Some(0.9)),
            cell(MethodKind::Oracle, 0.2, 0.1, 0, Some(0.8)),
            cell(MethodKind::Naive, 0.1, 0.1, 0, Some(0.7)),
            cell(MethodKind::Naive, 0.2, 0.1, 0, None),
        ];
        let svg = render_heatmap(&cells, Metric::AucOverall, MethodKind::Naive, HeatmapValue::DeltaFromOracle).unwrap();
        assert_eq!(svg.matches(r#"class="cell""#).count(), 2);
        assert_eq!(svg.matches(r#"data-missing="true""#).count(), 1);
        assert!(svg.contains(">0.200</text>"));
    }

    #[test]
    fn unknown_summary_kind() {
        assert!(matches!("violin".parse::<SummaryKind>(), Err(Error::Usage(_))));
        assert_eq!("line-by-size".parse::<SummaryKind>().unwrap(), SummaryKind::LineBySize);
    }
}
