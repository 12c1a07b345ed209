//! Plain-text dump of a kinetic and/or fluid state.
//!
//! ```text
//! overdamp-snapshot 1
//! t 5.0000000000000000e-1
//! eps 2.0000000000000001e-1
//! delta 2.0000000000000000e0
//! confinement quadratic
//! interaction true
//! x -8.0000000000000000e0 8.0000000000000000e0 128
//! v 1.8888543819998318e1 256
//! f
//! <n_x lines of n_v values>
//! rho_bar
//! <one line of n_x values>
//! end
//! ```
//!
//! The `v` line and `f` block are absent for fluid-only snapshots, and the
//! `rho_bar` block is optional for kinetic ones. Values are written with 17
//! significant digits so they round-trip exactly.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{PhaseGrid, SpatialGrid, VelocityGrid};
use crate::kinetic::{Confinement, ScalingParams};

const MAGIC: &str = "overdamp-snapshot 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub eps: f64,
    pub delta: f64,
    pub confinement: Confinement,
    pub interaction: bool,
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    /// `(v_max, n_v)` when `f` is present.
    pub velocity: Option<(f64, usize)>,
    /// Row-major, `n_x × n_v`.
    pub f: Option<Vec<f64>>,
    pub rho_bar: Option<Vec<f64>>,
}

fn snap_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Snapshot(format!("line {line}: {msg}"))
}

impl Snapshot {
    pub fn params(&self) -> Result<ScalingParams<f64>> {
        let p = ScalingParams::new(self.eps, self.delta, self.confinement)?;
        Ok(if self.interaction { p } else { p.without_interaction() })
    }

    pub fn spatial_grid(&self) -> Result<SpatialGrid<f64>> {
        SpatialGrid::new(self.x_min, self.x_max, self.n_x)
    }

    pub fn phase_grid(&self) -> Result<Option<PhaseGrid<f64>>> {
        match self.velocity {
            Some((v_max, n_v)) => Ok(Some(PhaseGrid::new(self.spatial_grid()?, VelocityGrid::new(v_max, n_v)?))),
            None => Ok(None),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "t {:.16e}", self.t);
        let _ = writeln!(s, "eps {:.16e}", self.eps);
        let _ = writeln!(s, "delta {:.16e}", self.delta);
        let conf = match self.confinement {
            Confinement::Quadratic => "quadratic",
            Confinement::None => "none",
        };
        let _ = writeln!(s, "confinement {conf}");
        let _ = writeln!(s, "interaction {}", self.interaction);
        let _ = writeln!(s, "x {:.16e} {:.16e} {}", self.x_min, self.x_max, self.n_x);
        if let (Some((v_max, n_v)), Some(f)) = (self.velocity, &self.f) {
            let _ = writeln!(s, "v {v_max:.16e} {n_v}");
            s.push_str("f\n");
            for row in f.chunks(n_v) {
                push_row(&mut s, row);
            }
        }
        if let Some(rb) = &self.rho_bar {
            s.push_str("rho_bar\n");
            push_row(&mut s, rb);
        }
        s.push_str("end\n");
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| -> Result<(usize, &str)> {
            lines
                .next()
                .ok_or_else(|| Error::Snapshot(format!("unexpected end of file, expected {what}")))
        };
        let (n, l) = next("header")?;
        if l != MAGIC {
            return Err(snap_err(n, format!("expected `{MAGIC}`")));
        }
        let t = scalar(next("t")?, "t")?;
        let eps = scalar(next("eps")?, "eps")?;
        let delta = scalar(next("delta")?, "delta")?;
        let (n, l) = next("confinement")?;
        let confinement = match l {
            "confinement quadratic" => Confinement::Quadratic,
            "confinement none" => Confinement::None,
            _ => return Err(snap_err(n, "expected `confinement quadratic|none`")),
        };
        let (n, l) = next("interaction")?;
        let interaction = match l {
            "interaction true" => true,
            "interaction false" => false,
            _ => return Err(snap_err(n, "expected `interaction true|false`")),
        };
        let (n, l) = next("x")?;
        let xs = fields(n, l, "x", 3)?;
        let (x_min, x_max, n_x) = (num::<f64>(n, xs[0])?, num::<f64>(n, xs[1])?, num::<usize>(n, xs[2])?);

        let mut snap = Snapshot {
            t,
            eps,
            delta,
            confinement,
            interaction,
            x_min,
            x_max,
            n_x,
            velocity: None,
            f: None,
            rho_bar: None,
        };
        let (mut n, mut l) = next("v, f, rho_bar or end")?;
        if l.starts_with("v ") {
            let vs = fields(n, l, "v", 2)?;
            let (v_max, n_v) = (num::<f64>(n, vs[0])?, num::<usize>(n, vs[1])?);
            let (m, header) = next("f")?;
            if header != "f" {
                return Err(snap_err(m, "expected `f`"));
            }
            let mut f = Vec::with_capacity(n_x * n_v);
            for _ in 0..n_x {
                let (m, row) = next("f row")?;
                f.extend(values(m, row, n_v)?);
            }
            snap.velocity = Some((v_max, n_v));
            snap.f = Some(f);
            (n, l) = next("rho_bar or end")?;
        }
        if l == "rho_bar" {
            let (m, row) = next("rho_bar row")?;
            snap.rho_bar = Some(values(m, row, n_x)?);
            (n, l) = next("end")?;
        }
        if l != "end" {
            return Err(snap_err(n, "expected `end`"));
        }
        if snap.f.is_none() && snap.rho_bar.is_none() {
            return Err(Error::Snapshot("snapshot holds neither f nor rho_bar".into()));
        }
        Ok(snap)
    }
}

fn push_row(s: &mut String, row: &[f64]) {
    for (k, v) in row.iter().enumerate() {
        if k > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v:.16e}");
    }
    s.push('\n');
}

fn fields<'a>(n: usize, l: &'a str, key: &str, count: usize) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = l.split_whitespace().collect();
    if parts.first() != Some(&key) || parts.len() != count + 1 {
        return Err(snap_err(n, format!("expected `{key}` followed by {count} values")));
    }
    Ok(parts[1..].to_vec())
}

fn scalar((n, l): (usize, &str), key: &str) -> Result<f64> {
    let parts = fields(n, l, key, 1)?;
    num(n, parts[0])
}

fn num<T: FromStr>(n: usize, s: &str) -> Result<T> {
    s.parse().map_err(|_| snap_err(n, format!("cannot parse `{s}`")))
}

fn values(n: usize, l: &str, count: usize) -> Result<Vec<f64>> {
    let v: Vec<f64> = l.split_whitespace().map(|s| num(n, s)).collect::<Result<_>>()?;
    if v.len() != count {
        return Err(snap_err(n, format!("expected {count} values, found {}", v.len())));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Snapshot {
        Snapshot {
            t: 0.1,
            eps: 0.2,
            delta: 2.0,
            confinement: Confinement::Quadratic,
            interaction: true,
            x_min: -1.0,
            x_max: 1.0,
            n_x: 8,
            velocity: Some((3.0, 8)),
            f: Some((0..64).map(|k| k as f64 / 7.0).collect()),
            rho_bar: Some((0..8).map(|k| 1.0 / (k as f64 + 3.0)).collect()),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let s = sample();
        assert_eq!(Snapshot::parse(&s.to_text()).unwrap(), s);
        let fluid = Snapshot {
            velocity: None,
            f: None,
            confinement: Confinement::None,
            interaction: false,
            ..sample()
        };
        assert_eq!(Snapshot::parse(&fluid.to_text()).unwrap(), fluid);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = sample().to_text().replace("eps 2", "eps x2");
        let err = Snapshot::parse(&text).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let short: String = sample().to_text().lines().take(12).map(|l| format!("{l}\n")).collect();
        assert!(Snapshot::parse(&short).is_err());
        assert!(Snapshot::parse("hello").is_err());
    }
}
