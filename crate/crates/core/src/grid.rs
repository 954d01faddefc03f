//! Neighbourhood filters on row-major f64 grids. Windows are clipped at the
//! grid border.

/// Mean over the `(2r+1)`-square window around every cell.
pub(crate) fn box_mean(values: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let mut sat = vec![0.0f64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += values[y * w + x];
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    let at = |x: usize, y: usize| sat[y * (w + 1) + x];
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let sum = at(x1, y1) - at(x0, y1) - at(x1, y0) + at(x0, y0);
            out.push(sum / ((x1 - x0) * (y1 - y0)) as f64);
        }
    }
    out
}

/// Maximum over the `(2r+1)`-square window, computed separably.
pub(crate) fn local_max(values: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let mut rows = vec![f64::NEG_INFINITY; w * h];
    for y in 0..h {
        for x in 0..w {
            let line = &values[y * w + x.saturating_sub(r)..y * w + (x + r + 1).min(w)];
            rows[y * w + x] = line.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    let mut out = vec![f64::NEG_INFINITY; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] =
                (y.saturating_sub(r)..(y + r + 1).min(h)).map(|yy| rows[yy * w + x]).fold(f64::NEG_INFINITY, f64::max);
        }
    }
    out
}
