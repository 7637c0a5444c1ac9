//! MatrixMarket coordinate format (real or integer, general or symmetric).

use std::fmt::Write as _;
use std::path::Path;

use super::{LinalgError, Operator, SparseOperator};

/// Parses MatrixMarket text. Symmetric storage is expanded to both triangles.
pub fn parse_matrixmarket(text: &str) -> Result<SparseOperator, LinalgError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let parse_err = |line: usize, message: String| LinalgError::Parse { line, message };
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "empty file".into()))?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(hline, format!("malformed header `{header}`")));
    }
    if tokens[2] != "coordinate" {
        return Err(LinalgError::Unsupported(format!("{} storage (only coordinate is read)", tokens[2])));
    }
    match tokens[3].as_str() {
        "real" | "integer" | "double" => {}
        other => return Err(LinalgError::Unsupported(format!("{other} matrices"))),
    }
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(LinalgError::Unsupported(format!("{other} symmetry"))),
    };
    let mut data = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (sline, size) = data.next().ok_or_else(|| parse_err(hline + 1, "missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| parse_err(sline, format!("bad size entry `{t}`"))))
        .collect::<Result<_, _>>()?;
    if dims.len() != 3 {
        return Err(parse_err(sline, "size line needs rows, columns and entries".into()));
    }
    let (rows, cols, entries) = (dims[0], dims[1], dims[2]);
    if rows != cols {
        return Err(parse_err(sline, format!("matrix is {rows}x{cols}, expected square")));
    }
    let mut triplets = Vec::with_capacity(if symmetric { 2 * entries } else { entries });
    let mut seen = 0usize;
    for (ln, l) in data {
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() != 3 {
            return Err(parse_err(ln, format!("expected `row col value`, got `{}`", l.trim())));
        }
        let index = |s: &str| -> Result<usize, LinalgError> {
            let v = s.parse::<usize>().map_err(|_| parse_err(ln, format!("bad index `{s}`")))?;
            if v == 0 || v > rows {
                return Err(parse_err(ln, format!("index {v} outside 1..={rows}")));
            }
            Ok(v - 1)
        };
        let (i, j) = (index(t[0])?, index(t[1])?);
        let v = t[2].parse::<f64>().map_err(|_| parse_err(ln, format!("bad value `{}`", t[2])))?;
        triplets.push((i, j, v));
        if symmetric && i != j {
            triplets.push((j, i, v));
        }
        seen += 1;
    }
    if seen != entries {
        return Err(parse_err(sline, format!("header announces {entries} entries, found {seen}")));
    }
    SparseOperator::from_triplets(rows, triplets)
}

pub fn load_matrixmarket(path: &Path) -> Result<SparseOperator, LinalgError> {
    let text = std::fs::read_to_string(path).map_err(|e| LinalgError::Io(format!("{}: {e}", path.display())))?;
    parse_matrixmarket(&text)
}

/// General coordinate text with shortest round-trip value formatting.
pub fn format_matrixmarket(a: &SparseOperator) -> String {
    let mut out = String::new();
    out.push_str("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(out, "{} {} {}", a.n(), a.n(), a.nnz());
    for i in 0..a.n() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            let _ = writeln!(out, "{} {} {:e}", i + 1, j + 1, v);
        }
    }
    out
}

pub fn write_matrixmarket(a: &SparseOperator, path: &Path) -> Result<(), LinalgError> {
    std::fs::write(path, format_matrixmarket(a)).map_err(|e| LinalgError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_file() {
        let a = parse_matrixmarket("%%MatrixMarket matrix coordinate real general\n% c\n3 3 3\n1 1 1\n2 2 1\n3 3 1\n").unwrap();
        assert_eq!(a.nnz(), 3);
        assert_eq!(a, SparseOperator::identity(3));
    }

    #[test]
    fn symmetric_lower_triangle_is_expanded() {
        let a = parse_matrixmarket("%%MatrixMarket matrix coordinate real symmetric\n3 3 4\n1 1 4\n2 1 -1\n2 2 4\n3 2 -1\n").unwrap();
        assert_eq!(a.nnz(), 6);
        assert_eq!(a.get(0, 1), -1.0);
        assert_eq!(a.get(1, 2), -1.0);
    }

    #[test]
    fn rejections_carry_line_numbers() {
        assert!(matches!(
            parse_matrixmarket("%%MatrixMarket matrix coordinate pattern general\n2 2 1\n1 1\n"),
            Err(LinalgError::Unsupported(_))
        ));
        assert!(matches!(
            parse_matrixmarket("%%MatrixMarket matrix coordinate complex general\n2 2 1\n1 1 1 0\n"),
            Err(LinalgError::Unsupported(_))
        ));
        assert_eq!(
            parse_matrixmarket("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 x 1\n").unwrap_err(),
            LinalgError::Parse { line: 3, message: "bad index `x`".into() }
        );
    }

    #[test]
    fn round_trip_is_exact() {
        let a = SparseOperator::from_triplets(3, vec![(0, 0, 0.1), (0, 2, -1.0 / 3.0), (2, 1, 1e-300), (1, 1, 123456789.125)]).unwrap();
        assert_eq!(parse_matrixmarket(&format_matrixmarket(&a)).unwrap(), a);
    }
}
