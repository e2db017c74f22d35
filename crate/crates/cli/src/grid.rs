use breakfront::frontier::linspace;

use crate::error::CliError;

/// Parses `grid(lo,hi,n)` or a plain number.
pub fn parse(spec: &str, flag: &str) -> Result<Vec<f64>, CliError> {
    let bad = |why: &str| CliError::Usage(format!("{flag} `{spec}`: {why}"));
    let s = spec.trim();
    let Some(inner) = s.strip_prefix("grid(").and_then(|r| r.strip_suffix(')')) else {
        let v: f64 = s
            .parse()
            .map_err(|_| bad("expected a number or grid(lo,hi,n)"))?;
        if !v.is_finite() {
            return Err(bad("not finite"));
        }
        return Ok(vec![v]);
    };
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    let [lo, hi, n] = parts.as_slice() else {
        return Err(bad("grid takes three arguments"));
    };
    let lo: f64 = lo.parse().map_err(|_| bad("lower end is not a number"))?;
    let hi: f64 = hi.parse().map_err(|_| bad("upper end is not a number"))?;
    let n: usize = n
        .parse()
        .map_err(|_| bad("point count is not a positive integer"))?;
    if n == 0 || !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(bad("need lo <= hi and n >= 1"));
    }
    if n == 1 && lo != hi {
        return Err(bad("a single point needs lo == hi"));
    }
    Ok(linspace(lo, hi, n))
}
