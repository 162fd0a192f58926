use trajembed::linalg::{CMatrix, C64};

fn entry(z: C64) -> String {
    let clean = |v: f64| if v.abs() < 5e-13 { 0.0 } else { v };
    format!("{:.6}{:+.6}i", clean(z.re), clean(z.im))
}

/// Rows of `a+bi` entries padded to a common width.
pub fn matrix(m: &CMatrix, indent: usize) -> String {
    let cells: Vec<Vec<String>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| entry(m[(i, j)])).collect())
        .collect();
    let width = cells.iter().flatten().map(String::len).max().unwrap_or(0);
    let pad = " ".repeat(indent);
    cells
        .iter()
        .map(|row| {
            let parts: Vec<String> = row.iter().map(|c| format!("{c:>width$}")).collect();
            format!("{pad}[ {} ]", parts.join("  "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn bits(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "diverges".into(),
    }
}
