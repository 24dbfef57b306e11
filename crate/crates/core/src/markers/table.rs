//! Delimited `(polarity, mean, variance)` table for marker posteriors.

use super::{MarkerPosterior, Polarity};
use crate::error::{Error, Result};

const HEADER: &str = "polarity,mean,variance";

pub fn write_posterior_table(q: &MarkerPosterior) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for e in 0..q.len() {
        let pol = match q.polarity[e] {
            Polarity::Positive => "pos",
            Polarity::Negative => "neg",
        };
        out.push_str(&format!("{pol},{},{}\n", q.mean[e], q.variance(e)));
    }
    out
}

pub fn parse_posterior_table(text: &str) -> Result<MarkerPosterior> {
    let bad = |line: usize, msg: String| Error::Parse {
        path: "<marker table>".into(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        _ => return Err(bad(1, format!("expected header `{HEADER}`"))),
    }
    let mut q = MarkerPosterior {
        mean: Vec::new(),
        log_var: Vec::new(),
        polarity: Vec::new(),
    };
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(bad(i + 1, format!("expected 3 fields, found {}", f.len())));
        }
        let pol = match f[0] {
            "pos" => Polarity::Positive,
            "neg" => Polarity::Negative,
            other => return Err(bad(i + 1, format!("unknown polarity `{other}`"))),
        };
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(i + 1, format!("`{s}`: {e}")));
        let (m, v) = (num(f[1])?, num(f[2])?);
        if !(v > 0.0) {
            return Err(bad(i + 1, format!("variance must be positive, got {v}")));
        }
        q.polarity.push(pol);
        q.mean.push(m);
        q.log_var.push(v.ln());
    }
    q.validate()?;
    Ok(q)
}
