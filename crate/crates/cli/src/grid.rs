/// Parses `start:stop:step` (inclusive) or a comma-separated list into an
/// ascending grid.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("not a number: {s:?}"));
    let grid = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(format!("expected start:stop:step, got {text:?}"));
        };
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if !(step > 0.0) || !step.is_finite() || !(stop >= start) {
            return Err(format!("bad range {text:?}"));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| start + step * i as f64).collect()
    } else {
        text.split(',').map(num).collect::<Result<Vec<f64>, _>>()?
    };
    if grid.is_empty() || grid.iter().any(|v| !v.is_finite()) {
        return Err(format!("empty or non-finite grid {text:?}"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(format!("grid must be strictly ascending: {text:?}"));
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_and_lists() {
        assert_eq!(parse_grid("0:9:1").unwrap(), (0..=9).map(f64::from).collect::<Vec<_>>());
        assert_eq!(parse_grid("1,2.5,4").unwrap(), vec![1.0, 2.5, 4.0]);
        assert_eq!(parse_grid("0:1:0.25").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(parse_grid("3,1").is_err());
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("0:1:0").is_err());
    }
}
