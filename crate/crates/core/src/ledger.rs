//! Per-path time series of norms, dissipation integrals and cutoff values.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::FieldDiagnostics;

pub const CSV_SCHEMA: &str = "snse-ledger v1";

/// Time integrals accumulated by the trapezoid rule up to the current time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunningIntegrals {
    pub h15_sq: f64,
    pub h2_sq: f64,
    pub dissip3: f64,
    pub dissip6: f64,
}

impl RunningIntegrals {
    pub fn advance(&mut self, dt: f64, a: &FieldDiagnostics, b: &FieldDiagnostics) {
        let h = 0.5 * dt;
        self.h15_sq += h * (a.h15 * a.h15 + b.h15 * b.h15);
        self.h2_sq += h * (a.h2 * a.h2 + b.h2 * b.h2);
        self.dissip3 += h * (a.dissip3 + b.dissip3);
        self.dissip6 += h * (a.dissip6 + b.dissip6);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: f64,
    pub diag: FieldDiagnostics,
    pub integrals: RunningIntegrals,
    pub frozen: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub rows: Vec<LedgerRow>,
    pub cutoff_names: Vec<String>,
    /// One entry per row; empty vectors when the drift has no cutoffs.
    pub cutoffs: Vec<Vec<f64>>,
}

impl EnergyLedger {
    pub fn new(cutoff_names: Vec<String>) -> Self {
        Self {
            rows: Vec::new(),
            cutoff_names,
            cutoffs: Vec::new(),
        }
    }

    pub fn push(&mut self, row: LedgerRow, cutoffs: Vec<f64>) {
        self.rows.push(row);
        self.cutoffs.push(cutoffs);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> &LedgerRow {
        self.rows.last().expect("ledger has the initial row")
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.t)
    }

    /// First recorded time at which `value(row) ≥ threshold`.
    pub fn first_hit<F: Fn(&LedgerRow) -> f64>(&self, value: F, threshold: f64) -> Option<f64> {
        self.rows.iter().find(|r| value(r) >= threshold).map(|r| r.t)
    }

    /// `max_{t ≤ until} value(row)`.
    pub fn sup_until<F: Fn(&LedgerRow) -> f64>(&self, value: F, until: f64) -> f64 {
        self.rows
            .iter()
            .take_while(|r| r.t <= until + 1e-12)
            .map(value)
            .fold(0.0, f64::max)
    }

    /// Row with the largest time not exceeding `t`.
    pub fn at(&self, t: f64) -> &LedgerRow {
        let idx = self.rows.partition_point(|r| r.t <= t + 1e-12);
        &self.rows[idx.saturating_sub(1)]
    }

    /// Checks that times increase strictly and integrals never decrease.
    pub fn validate(&self) -> Result<()> {
        for w in self.rows.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if !(b.t > a.t) {
                return Err(Error::Format(format!("times not increasing at t = {}", b.t)));
            }
            let ia = &a.integrals;
            let ib = &b.integrals;
            if ib.h15_sq < ia.h15_sq
                || ib.h2_sq < ia.h2_sq
                || ib.dissip3 < ia.dissip3
                || ib.dissip6 < ia.dissip6
            {
                return Err(Error::Format(format!("integral decreased at t = {}", b.t)));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {CSV_SCHEMA}");
        out.push_str(
            "t,L2,L3,L6,H05,H1,H15,H2,dissip3,dissip6,int_H15_sq,int_H2_sq,int_dissip3,int_dissip6",
        );
        for name in &self.cutoff_names {
            out.push(',');
            out.push_str(name);
        }
        out.push_str(",frozen\n");
        for (row, cut) in self.rows.iter().zip(&self.cutoffs) {
            let d = &row.diag;
            let i = &row.integrals;
            let _ = write!(
                out,
                "{:.9},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                row.t,
                d.l2,
                d.l3,
                d.l6,
                d.h05,
                d.h1,
                d.h15,
                d.h2,
                d.dissip3,
                d.dissip6,
                i.h15_sq,
                i.h2_sq,
                i.dissip3,
                i.dissip6
            );
            for (k, _) in self.cutoff_names.iter().enumerate() {
                let v = cut.get(k).copied().unwrap_or(f64::NAN);
                let _ = write!(out, ",{v:.12e}");
            }
            let _ = writeln!(out, ",{}", row.frozen as u8);
        }
        out
    }
}
