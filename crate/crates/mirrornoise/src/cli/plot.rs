//! CSV ingestion and deterministic SVG chart emission.
//!
//! Charts are self-contained SVG with one polyline per y column, linear or
//! logarithmic axes, and decade ticks on log axes. Identical input yields
//! byte-identical output.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("csv error: {0}")]
    Csv(String),
    #[error("column '{0}' not found")]
    MissingColumn(String),
    #[error("need at least 2 rows, found {0}")]
    TooFewRows(usize),
    #[error("no plottable points for column '{0}'")]
    NoPoints(String),
}

/// A parsed CSV table; non-numeric cells become NaN and are skipped when
/// plotting.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn parse(text: &str) -> Result<Self, PlotError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| PlotError::Csv(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| PlotError::Csv(e.to_string()))?;
            rows.push(
                record
                    .iter()
                    .map(|cell| cell.trim().parse().unwrap_or(f64::NAN))
                    .collect(),
            );
        }
        Ok(Self { headers, rows })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

/// Axis and series selection for one chart.
#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub x: String,
    pub y: Vec<String>,
    pub logx: bool,
    pub logy: bool,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 560.0;
const MARGIN_L: f64 = 86.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 58.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

struct Axis {
    log: bool,
    min: f64,
    max: f64,
}

impl Axis {
    fn from_values(values: impl Iterator<Item = f64>, log: bool) -> Option<Axis> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            let t = if log {
                if v <= 0.0 {
                    continue;
                }
                v.log10()
            } else {
                v
            };
            min = min.min(t);
            max = max.max(t);
        }
        if !min.is_finite() || !max.is_finite() {
            return None;
        }
        if min == max {
            min -= 1.0;
            max += 1.0;
        } else if !log {
            let pad = 0.05 * (max - min);
            min -= pad;
            max += pad;
        }
        Some(Axis { log, min, max })
    }

    fn transform(&self, v: f64) -> Option<f64> {
        if self.log {
            if v <= 0.0 {
                return None;
            }
            Some(v.log10())
        } else {
            Some(v)
        }
    }

    fn fraction(&self, t: f64) -> f64 {
        (t - self.min) / (self.max - self.min)
    }

    /// Tick positions in transformed coordinates with their labels.
    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            // Decade ticks at powers of ten spanning the data.
            let lo = self.min.ceil() as i64;
            let hi = self.max.floor() as i64;
            (lo..=hi).map(|k| (k as f64, format!("1e{k}"))).collect()
        } else {
            let span = self.max - self.min;
            let raw = span / 6.0;
            let mag = 10f64.powf(raw.log10().floor());
            let step = [1.0, 2.0, 5.0, 10.0]
                .iter()
                .map(|s| s * mag)
                .find(|s| span / s <= 7.0)
                .unwrap_or(mag * 10.0);
            let first = (self.min / step).ceil() as i64;
            let last = (self.max / step).floor() as i64;
            (first..=last)
                .map(|i| (i as f64 * step, fmt_tick(i as f64 * step)))
                .collect()
        }
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1.0e-3..1.0e5).contains(&a) {
        // Trim float dust without losing real digits.
        let s = format!("{:.6}", v);
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:e}")
    }
}

/// Render a chart from a table. Requires at least two data rows and every
/// named column present.
pub fn emit_svg(table: &CsvTable, spec: &PlotSpec) -> Result<String, PlotError> {
    if table.rows.len() < 2 {
        return Err(PlotError::TooFewRows(table.rows.len()));
    }
    let xi = table
        .column_index(&spec.x)
        .ok_or_else(|| PlotError::MissingColumn(spec.x.clone()))?;
    let mut series = Vec::new();
    for name in &spec.y {
        let yi = table
            .column_index(name)
            .ok_or_else(|| PlotError::MissingColumn(name.clone()))?;
        let points: Vec<(f64, f64)> = table
            .rows
            .iter()
            .map(|r| (r[xi], r[yi]))
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .collect();
        series.push((name.clone(), points));
    }

    let x_axis = Axis::from_values(
        series
            .iter()
            .flat_map(|(_, pts)| pts.iter().map(|(x, _)| *x)),
        spec.logx,
    )
    .ok_or_else(|| PlotError::NoPoints(spec.x.clone()))?;
    let y_axis = Axis::from_values(
        series
            .iter()
            .flat_map(|(_, pts)| pts.iter().map(|(_, y)| *y)),
        spec.logy,
    )
    .ok_or_else(|| PlotError::NoPoints(spec.y.join(",")))?;

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |t: f64| MARGIN_L + x_axis.fraction(t) * plot_w;
    let py = |t: f64| MARGIN_T + (1.0 - y_axis.fraction(t)) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    // Grid and ticks.
    for (t, label) in x_axis.ticks() {
        let x = px(t);
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{MARGIN_T}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            MARGIN_T + plot_h
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\" \
             fill=\"#333333\">{label}</text>\n",
            MARGIN_T + plot_h + 18.0
        ));
    }
    for (t, label) in y_axis.ticks() {
        let y = py(t);
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            MARGIN_L + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"end\" \
             fill=\"#333333\">{label}</text>\n",
            MARGIN_L - 6.0,
            y + 4.0
        ));
    }

    // Axes frame.
    svg.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w:.2}\" height=\"{plot_h:.2}\" \
         fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n"
    ));
    // Axis titles.
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\" \
         fill=\"#000000\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 14.0,
        spec.x
    ));

    // Series.
    for (i, (name, points)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = points
            .iter()
            .filter_map(|(x, y)| {
                let tx = x_axis.transform(*x)?;
                let ty = y_axis.transform(*y)?;
                Some(format!("{:.2},{:.2}", px(tx), py(ty)))
            })
            .collect();
        if coords.is_empty() {
            return Err(PlotError::NoPoints(name.clone()));
        }
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
            coords.join(" ")
        ));
        // Legend entry.
        let ly = MARGIN_T + 16.0 + 18.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" \
             stroke-width=\"2\"/>\n",
            MARGIN_L + plot_w - 150.0,
            MARGIN_L + plot_w - 126.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" fill=\"#000000\">{name}</text>\n",
            MARGIN_L + plot_w - 120.0,
            ly + 4.0
        ));
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(csv: &str) -> CsvTable {
        CsvTable::parse(csv).unwrap()
    }

    fn spec(x: &str, y: &[&str], logx: bool) -> PlotSpec {
        PlotSpec {
            x: x.to_string(),
            y: y.iter().map(|s| s.to_string()).collect(),
            logx,
            logy: false,
        }
    }

    #[test]
    fn two_point_table_renders_single_segment() {
        let t = table("x,y\n0,1\n1,3\n");
        let svg = emit_svg(&t, &spec("x", &["y"], false)).unwrap();
        let polylines = svg.matches("<polyline").count();
        assert_eq!(polylines, 1);
        let coords = svg
            .split("points=\"")
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap();
        assert_eq!(coords.split(' ').count(), 2);
    }

    #[test]
    fn identical_input_gives_identical_bytes() {
        let t = table("freq_hz,mag\n1,0.5\n10,0.4\n100,0.2\n");
        let s = spec("freq_hz", &["mag"], true);
        let a = emit_svg(&t, &s).unwrap();
        let b = emit_svg(&t, &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn log_axis_places_decade_ticks() {
        let t = table("f,v\n1,1\n100000,2\n");
        let svg = emit_svg(&t, &spec("f", &["v"], true)).unwrap();
        for k in 0..=5 {
            assert!(
                svg.contains(&format!(">1e{k}</text>")),
                "missing decade 1e{k}"
            );
        }
    }

    #[test]
    fn missing_column_is_an_error() {
        let t = table("x,y\n0,1\n1,2\n");
        assert!(matches!(
            emit_svg(&t, &spec("x", &["z"], false)),
            Err(PlotError::MissingColumn(_))
        ));
    }

    #[test]
    fn single_row_is_an_error() {
        let t = table("x,y\n0,1\n");
        assert!(matches!(
            emit_svg(&t, &spec("x", &["y"], false)),
            Err(PlotError::TooFewRows(1))
        ));
    }

    #[test]
    fn non_numeric_cells_are_skipped() {
        let t = table("x,y\nfoo,1\n1,2\n2,3\n");
        let svg = emit_svg(&t, &spec("x", &["y"], false)).unwrap();
        let coords = svg
            .split("points=\"")
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap();
        assert_eq!(coords.split(' ').count(), 2);
    }

    #[test]
    fn multiple_series_get_distinct_colors() {
        let t = table("x,a,b\n0,1,2\n1,2,4\n2,3,8\n");
        let svg = emit_svg(&t, &spec("x", &["a", "b"], false)).unwrap();
        assert!(svg.contains(PALETTE[0]) && svg.contains(PALETTE[1]));
    }
}
