//! Time-change specs: `identity`, `full`, `lookahead:DELTA` and
//! `table:t:v,t:v,...` (piecewise linear through the listed points).

use causal_hjb::timechange::TimeChange;

use crate::{usage, CliError};

pub fn parse_tau(spec: &str, horizon: f64) -> Result<TimeChange, CliError> {
    let spec = spec.trim();
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    match kind {
        "identity" | "id" if rest.is_empty() => Ok(TimeChange::identity(horizon)),
        "full" if rest.is_empty() => Ok(TimeChange::full(horizon)),
        "lookahead" => {
            let delta: f64 = rest.parse().map_err(|_| CliError::Usage(format!("bad lookahead '{rest}'")))?;
            Ok(TimeChange::lookahead(delta, horizon)?)
        }
        "table" => {
            let mut pts = Vec::new();
            for pair in rest.split(',') {
                let (t, v) = pair.split_once(':').ok_or_else(|| CliError::Usage(format!("bad table point '{pair}'")))?;
                let t: f64 = t.trim().parse().map_err(|_| CliError::Usage(format!("bad time '{t}'")))?;
                let v: f64 = v.trim().parse().map_err(|_| CliError::Usage(format!("bad value '{v}'")))?;
                pts.push((t, v));
            }
            Ok(TimeChange::table(pts, horizon)?)
        }
        _ => usage(format!("unknown time change '{spec}'")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs() {
        assert_eq!(parse_tau("lookahead:0.25", 1.0).unwrap().tau(0.5), 0.75);
        assert_eq!(parse_tau("identity", 2.0).unwrap().tau(0.5), 0.5);
        assert_eq!(parse_tau("full", 1.0).unwrap().tau(0.1), 1.0);
        assert!((parse_tau("table:0:0.1,1:1", 1.0).unwrap().tau(0.5) - 0.55).abs() < 1e-15);
        assert!(parse_tau("nope", 1.0).is_err());
        assert!(parse_tau("lookahead:x", 1.0).is_err());
    }
}
