use std::io::Write;

use super::AttributionMap;

/// `row,col,value` rows, row-major.
pub fn write_map_csv<W: Write>(mut out: W, map: &AttributionMap) -> std::io::Result<()> {
    writeln!(out, "row,col,value")?;
    let g = &map.values;
    for r in 0..g.height() {
        for c in 0..g.width() {
            writeln!(out, "{r},{c},{}", g.get(r, c))?;
        }
    }
    Ok(())
}

/// ASCII PGM with values min-max scaled to 0..=255. `comment` lines are
/// written after the magic number.
pub fn write_map_pgm<W: Write>(mut out: W, map: &AttributionMap, comment: &str) -> std::io::Result<()> {
    let g = &map.values;
    writeln!(out, "P2")?;
    for line in comment.lines() {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "# method={} target={}", map.method, map.target)?;
    writeln!(out, "{} {}", g.width(), g.height())?;
    writeln!(out, "255")?;
    let lo = g.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = g.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for r in 0..g.height() {
        let row: Vec<String> = (0..g.width())
            .map(|c| {
                let v = if span > 0.0 { (g.get(r, c) - lo) / span } else { 0.0 };
                ((v * 255.0).round() as u8).to_string()
            })
            .collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::edge_detector;
    use crate::numeric::ImageGrid;

    #[test]
    fn pgm_scales_to_bytes() {
        let mut x = ImageGrid::filled(3, 3, 0.0, (0.0, 1.0));
        x.set(1, 2, 1.0);
        let map = edge_detector(&x).unwrap();
        let mut buf = Vec::new();
        write_map_pgm(&mut buf, &map, "seed=1").unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "P2");
        assert_eq!(lines[1], "# seed=1");
        assert_eq!(lines[3], "3 3");
        assert!(s.contains("255"));
    }

    #[test]
    fn csv_has_every_pixel() {
        let x = ImageGrid::filled(2, 3, 0.0, (0.0, 1.0));
        let map = edge_detector(&x).unwrap();
        let mut buf = Vec::new();
        write_map_csv(&mut buf, &map).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 7);
        assert_eq!(s.lines().nth(6), Some("1,2,0"));
    }
}
