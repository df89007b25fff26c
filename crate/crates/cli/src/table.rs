//! The header-overhead table: computed percentages for 2..=5 fragments at
//! 9 B and 1 B fragment headers, against published reference values.

use fragsim_core::metrics::header_overhead;
use fragsim_core::phy::RadioConfig;

use crate::CliError;

/// Published reference overhead (percent) for a 200 B payload split into
/// 2..=5 fragments, per header size.
pub const REFERENCE_9B: [f64; 4] = [8.93, 19.0, 26.8, 35.71];
pub const REFERENCE_1B: [f64; 4] = [5.71, 12.61, 17.14, 22.86];

/// One table cell: the computed overhead and, when available, the reference
/// value it is compared with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub computed_pct: f64,
    pub reference_pct: Option<f64>,
}

impl Cell {
    pub fn delta(&self) -> Option<f64> {
        self.reference_pct.map(|r| self.computed_pct - r)
    }
}

#[derive(Debug, Clone)]
pub struct TableRow {
    pub n_f: u8,
    pub cells: Vec<Cell>,
}

fn reference_for(payload_bytes: u32, header_bytes: u32, n_f: u8) -> Option<f64> {
    if payload_bytes != 200 || !(2..=5).contains(&n_f) {
        return None;
    }
    let idx = (n_f - 2) as usize;
    match header_bytes {
        9 => Some(REFERENCE_9B[idx]),
        1 => Some(REFERENCE_1B[idx]),
        _ => None,
    }
}

/// Computes the overhead table for the given radio, payload and header
/// sizes.
pub fn build_table(
    radio: &RadioConfig,
    payload_bytes: u32,
    header_sizes: &[u32],
    fragment_counts: &[u8],
) -> Result<Vec<TableRow>, CliError> {
    let mut rows = Vec::new();
    for &n_f in fragment_counts {
        let mut cells = Vec::new();
        for &header in header_sizes {
            let computed = header_overhead(n_f, payload_bytes, header, radio)
                .map_err(|e| CliError::usage(format!("overhead for {n_f} fragments: {e}")))?;
            cells.push(Cell {
                computed_pct: computed,
                reference_pct: reference_for(payload_bytes, header, n_f),
            });
        }
        rows.push(TableRow { n_f, cells });
    }
    Ok(rows)
}

/// Formats the table for the terminal, one fragment count per line.
pub fn render(header_sizes: &[u32], rows: &[TableRow]) -> String {
    let mut out = String::new();
    out.push_str("fragments");
    for h in header_sizes {
        out.push_str(&format!(
            " | {h:>2} B hdr {:>9} {:>6}",
            "reference", "delta"
        ));
    }
    out.push('\n');
    let dash_width = 9 + header_sizes.len() * 31;
    out.push_str(&"-".repeat(dash_width));
    out.push('\n');
    for row in rows {
        out.push_str(&format!("{:>9}", row.n_f));
        for cell in &row.cells {
            match (cell.reference_pct, cell.delta()) {
                (Some(r), Some(d)) => out.push_str(&format!(
                    " | {:>8.2}% {:>8.2}% {:>+5.2}",
                    cell.computed_pct, r, d
                )),
                _ => out.push_str(&format!(
                    " | {:>8.2}% {:>8} {:>6}",
                    cell.computed_pct, "-", "-"
                )),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table_has_references_everywhere() {
        let rows = build_table(&RadioConfig::default(), 200, &[9, 1], &[2, 3, 4, 5]).unwrap();
        assert_eq!(rows.len(), 4);
        for row in &rows {
            assert!(row.cells.iter().all(|c| c.reference_pct.is_some()));
        }
    }

    #[test]
    fn custom_payload_has_no_references() {
        let rows = build_table(&RadioConfig::default(), 120, &[9], &[2]).unwrap();
        assert!(rows[0].cells[0].reference_pct.is_none());
    }

    #[test]
    fn custom_radio_stays_monotone_in_fragments() {
        let radio = RadioConfig {
            spreading_factor: 8,
            ..RadioConfig::default()
        };
        let rows = build_table(&radio, 200, &[9], &[2, 3, 4, 5]).unwrap();
        let values: Vec<f64> = rows.iter().map(|r| r.cells[0].computed_pct).collect();
        assert!(values.windows(2).all(|w| w[0] < w[1]), "{values:?}");
    }

    #[test]
    fn render_mentions_every_fragment_count() {
        let rows = build_table(&RadioConfig::default(), 200, &[9, 1], &[2, 3, 4, 5]).unwrap();
        let text = render(&[9, 1], &rows);
        for n in 2..=5 {
            assert!(text.contains(&format!("{n}")));
        }
    }
}
