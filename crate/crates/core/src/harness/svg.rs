//! Deterministic, self-contained SVG 1.1 plots: a fit plot (data vs
//! predictions) and an SSE-per-iteration trace with optional log scale.
//! Coordinates are formatted with fixed precision so identical inputs give
//! byte-identical files.

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;

fn check_nonempty(name: &str, series: &[f64]) -> Result<()> {
    if series.is_empty() {
        return Err(Error::Parse {
            context: format!("{name} plot"),
            message: "empty series".into(),
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{name} plot series")));
    }
    Ok(())
}

fn range(series: &[&[f64]]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in series {
        for &v in *s {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if lo == hi {
        lo -= 1.0;
        hi += 1.0;
    }
    (lo, hi)
}

struct Frame {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x_lo) / (self.x_hi - self.x_lo) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y_lo) / (self.y_hi - self.y_lo) * (HEIGHT - 2.0 * MARGIN)
    }

    fn polyline(&self, xs: &[f64], ys: &[f64], color: &str) -> String {
        let pts: Vec<String> = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        )
    }
}

fn document(title: &str, body: &str) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
         width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-family=\"monospace\" \
         font-size=\"14\">{title}</text>\n\
         <rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{:.2}\" height=\"{:.2}\" \
         fill=\"none\" stroke=\"black\"/>\n{body}</svg>\n",
        WIDTH / 2.0,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN,
    )
}

fn legend(entries: &[(&str, &str)]) -> String {
    let mut out = String::new();
    for (i, (label, color)) in entries.iter().enumerate() {
        let y = MARGIN + 16.0 + 18.0 * i as f64;
        out.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
             stroke=\"{color}\" stroke-width=\"1.5\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"12\">{label}</text>\n",
            MARGIN + 8.0,
            MARGIN + 36.0,
            MARGIN + 42.0,
            y + 4.0,
        ));
    }
    out
}

/// Data and prediction curves over a shared scalar axis.
pub fn fit_svg(x: &[f64], y: &[f64], yhat: &[f64]) -> Result<String> {
    check_nonempty("fit", x)?;
    check_nonempty("fit", y)?;
    check_nonempty("fit", yhat)?;
    if x.len() != y.len() || x.len() != yhat.len() {
        return Err(Error::ShapeMismatch(format!(
            "fit plot series lengths {} / {} / {}",
            x.len(),
            y.len(),
            yhat.len()
        )));
    }
    let (x_lo, x_hi) = range(&[x]);
    let (y_lo, y_hi) = range(&[y, yhat]);
    let frame = Frame { x_lo, x_hi, y_lo, y_hi };
    let mut body = frame.polyline(x, y, "black");
    body.push_str(&frame.polyline(x, yhat, "crimson"));
    body.push_str(&legend(&[("data", "black"), ("model", "crimson")]));
    Ok(document("model vs data", &body))
}

/// SSE per iteration; log_scale plots log10(SSE).
pub fn sse_svg(trace: &[f64], log_scale: bool) -> Result<String> {
    check_nonempty("sse", trace)?;
    let xs: Vec<f64> = (1..=trace.len()).map(|i| i as f64).collect();
    let ys: Vec<f64> = if log_scale {
        trace.iter().map(|&v| v.max(f64::MIN_POSITIVE).log10()).collect()
    } else {
        trace.to_vec()
    };
    let (x_lo, x_hi) = range(&[&xs]);
    let (y_lo, y_hi) = range(&[&ys]);
    let frame = Frame { x_lo, x_hi, y_lo, y_hi };
    let body = frame.polyline(&xs, &ys, "steelblue");
    let title = if log_scale {
        "log10 sum of squared errors per iteration"
    } else {
        "sum of squared errors per iteration"
    };
    Ok(document(title, &body))
}
