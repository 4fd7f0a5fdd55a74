//! Bound sweeps over bandwidth, aperture or SDNR for every multipath case and
//! synchronization mode.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fim::{compute_bounds, BoundsReport, FimOptions, SyncMode};
use crate::harness::scenario::{MultipathCase, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepVar {
    /// Total bandwidth in Hz (subcarrier count fixed).
    Bandwidth,
    /// Antennas per stripe.
    Aperture,
    /// SDNR in dB.
    Sdnr,
}

impl SweepVar {
    pub fn label(&self) -> &'static str {
        match self {
            SweepVar::Bandwidth => "bandwidth_hz",
            SweepVar::Aperture => "antennas",
            SweepVar::Sdnr => "sdnr_db",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bandwidth" => Ok(SweepVar::Bandwidth),
            "aperture" => Ok(SweepVar::Aperture),
            "sdnr" => Ok(SweepVar::Sdnr),
            _ => Err(Error::SemanticError(format!("unknown sweep variable `{s}`"))),
        }
    }

    pub fn apply(&self, s: &Scenario, v: f64) -> Scenario {
        match self {
            SweepVar::Bandwidth => s.with_bandwidth(v),
            SweepVar::Aperture => s.with_antennas(v.round() as usize),
            SweepVar::Sdnr => {
                let mut c = s.clone();
                c.sdnr_db = v;
                c
            }
        }
    }
}

/// Multipath case plus whether reflection phases are treated as known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CaseSpec {
    pub case: MultipathCase,
    pub known_rp_phases: bool,
}

impl CaseSpec {
    pub const ALL: [CaseSpec; 4] = [
        CaseSpec {
            case: MultipathCase::LosOnly,
            known_rp_phases: false,
        },
        CaseSpec {
            case: MultipathCase::LosRp,
            known_rp_phases: false,
        },
        CaseSpec {
            case: MultipathCase::Full,
            known_rp_phases: false,
        },
        CaseSpec {
            case: MultipathCase::Full,
            known_rp_phases: true,
        },
    ];

    pub fn label(&self) -> String {
        if self.known_rp_phases {
            format!("{}+known", self.case.label())
        } else {
            self.case.label().to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sweep_var: SweepVar,
    pub value: f64,
    pub case: String,
    pub sync: SyncMode,
    pub bounds: BoundsReport,
}

pub const CSV_HEADER: &str = "sweep_var,value,case,sync,peb_m,ceb_s,ceb_m,cpeb_rad,sp_peb_m,efim_cond";

/// Parses `a,b,c`, `lo:hi:linN` or `lo:hi:logN`.
pub fn parse_values(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::SemanticError(format!("bad value list `{spec}`"));
    let spec = spec.trim();
    if spec.is_empty() {
        return Ok(Vec::new());
    }
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 1 {
        return spec.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| bad())).collect();
    }
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let (log, n) = if let Some(n) = parts[2].strip_prefix("log") {
        (true, n)
    } else if let Some(n) = parts[2].strip_prefix("lin") {
        (false, n)
    } else {
        return Err(bad());
    };
    let n: usize = n.parse().map_err(|_| bad())?;
    if n == 0 || (log && !(lo > 0.0 && hi > 0.0)) {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            if log {
                (lo.ln() + t * (hi.ln() - lo.ln())).exp()
            } else {
                lo + t * (hi - lo)
            }
        })
        .collect())
}

/// Bounds for every value, case and sync mode; singular points are reported as infinite.
pub fn run_bounds_sweep(
    scenario: &Scenario,
    var: SweepVar,
    values: &[f64],
    cases: &[CaseSpec],
    syncs: &[SyncMode],
) -> Vec<SweepRow> {
    let mut jobs = Vec::new();
    for &v in values {
        for c in cases {
            for s in syncs {
                jobs.push((v, *c, *s));
            }
        }
    }
    jobs.par_iter()
        .map(|&(v, c, sync)| {
            let s = var.apply(scenario, v).with_case(c.case);
            let opts = FimOptions {
                sync_mode: sync,
                dim: s.dim,
                known_rp_phases: c.known_rp_phases,
            };
            let bounds = compute_bounds(&s, &opts).unwrap_or_else(|_| BoundsReport::infinite(s.num_scatterers()));
            SweepRow {
                sweep_var: var,
                value: v,
                case: c.label(),
                sync,
                bounds,
            }
        })
        .collect()
}

pub fn write_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        let sp: Vec<String> = r.bounds.sp_peb.iter().map(|v| format!("{v:e}")).collect();
        writeln!(
            out,
            "{},{:e},{},{},{:e},{:e},{:e},{:e},{},{:e}",
            r.sweep_var.label(),
            r.value,
            r.case,
            r.sync.label(),
            r.bounds.peb,
            r.bounds.ceb_s,
            r.bounds.ceb_m,
            r.bounds.cpeb,
            sp.join(";"),
            r.bounds.efim_cond
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_range() {
        let v = parse_values("1e6:1e9:log4").unwrap();
        assert_eq!(v.len(), 4);
        assert!((v[1] - 1e7).abs() < 1e-3 && (v[3] - 1e9).abs() < 1e-3);
    }

    #[test]
    fn lists_and_errors() {
        assert_eq!(parse_values("1, 2,3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(parse_values("0:1:lin3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_values("0:1:log3").is_err());
        assert!(parse_values("x").is_err());
        assert!(parse_values("").unwrap().is_empty());
    }

    #[test]
    fn empty_sweep_writes_header_only() {
        let rows = run_bounds_sweep(&Scenario::canonical(), SweepVar::Bandwidth, &[], &CaseSpec::ALL, &[SyncMode::Cp]);
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn cp_much_tighter_than_ncp_at_10_mhz() {
        let rows = run_bounds_sweep(
            &Scenario::canonical(),
            SweepVar::Bandwidth,
            &[10e6],
            &CaseSpec::ALL[2..3],
            &[SyncMode::Cp, SyncMode::Ncp],
        );
        assert!(rows[0].bounds.peb < rows[1].bounds.peb / 10.0);
    }
}
