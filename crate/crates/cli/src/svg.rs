//! Static SVG figures.

use std::fmt::Write;

use svgpvae::numerics::Tensor;

const PALETTE: [&str; 2] = ["#1f77b4", "#d62728"];

/// Two 2-d paths (`truth` and the aligned prediction) in one panel.
pub fn trajectory_svg(truth: &Tensor, pred: &Tensor) -> String {
    let (w, h, pad) = (420.0, 420.0, 30.0);
    let all: Vec<f64> = truth.data().iter().chain(pred.data()).copied().collect();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-9);
    let sx = |v: f64| pad + (v - lo) / span * (w - 2.0 * pad);
    let sy = |v: f64| h - pad - (v - lo) / span * (h - 2.0 * pad);
    let mut s = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    s += "\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (k, (label, t)) in [("truth", truth), ("prediction", pred)].iter().enumerate() {
        let pts: Vec<String> = (0..t.rows())
            .map(|i| format!("{:.2},{:.2}", sx(t.get(i, 0)), sy(t.get(i, 1))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            pts.join(" "),
            PALETTE[k]
        );
        for p in &pts {
            let (x, y) = p.split_once(',').expect("formatted pair");
            let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="2.5" fill="{}"/>"#, PALETTE[k]);
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" fill="{}">{label}</text>"#,
            pad,
            16.0 + 14.0 * k as f64,
            PALETTE[k]
        );
    }
    s + "</svg>\n"
}

/// Rows of square grayscale images (values clamped to `[0, 1]`), one
/// labelled row per tensor; each tensor row is an image.
pub fn image_grid_svg(rows: &[(&str, &Tensor)], side: usize, max_cols: usize) -> String {
    let cell = 2.0;
    let gap = 6.0;
    let label_w = 90.0;
    let cols = rows.iter().map(|(_, t)| t.rows().min(max_cols)).max().unwrap_or(0);
    let img = side as f64 * cell;
    let w = label_w + cols as f64 * (img + gap);
    let h = rows.len() as f64 * (img + gap) + gap;
    let mut s = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    s += "\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (r, (label, t)) in rows.iter().enumerate() {
        let y0 = gap + r as f64 * (img + gap);
        let _ = writeln!(s, r#"<text x="4" y="{:.1}" font-size="12">{label}</text>"#, y0 + img / 2.0);
        for c in 0..t.rows().min(max_cols) {
            let x0 = label_w + c as f64 * (img + gap);
            let px = t.row(c);
            for (k, v) in px.iter().enumerate() {
                let g = (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8;
                if g == 255 {
                    continue;
                }
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.1}" y="{:.1}" width="{cell}" height="{cell}" fill="rgb({g},{g},{g})"/>"#,
                    x0 + (k % side) as f64 * cell,
                    y0 + (k / side) as f64 * cell
                );
            }
        }
    }
    s + "</svg>\n"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_is_well_formed() {
        let t = Tensor::from_fn(5, 2, |i, j| (i + j) as f64);
        let s = trajectory_svg(&t, &t);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert_eq!(s.matches("<circle").count(), 10);
    }

    #[test]
    fn blank_images_draw_no_pixels() {
        let t = Tensor::zeros(2, 4);
        let s = image_grid_svg(&[("a", &t)], 2, 8);
        assert_eq!(s.matches("<rect").count(), 1);
    }
}
