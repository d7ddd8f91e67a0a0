use super::SparseMatrix;
use crate::error::{Error, Result};
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_header(line_no: usize, line: &str) -> Result<Symmetry> {
    let tokens: Vec<String> = line
        .split_whitespace()
        .map(str::to_ascii_lowercase)
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" {
        return Err(parse_err(
            line_no,
            "header must read `%%MatrixMarket matrix coordinate <field> <symmetry>`",
        ));
    }
    if tokens[1] != "matrix" {
        return Err(parse_err(
            line_no,
            format!("unsupported object `{}`", tokens[1]),
        ));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(
            line_no,
            format!("unsupported format `{}`", tokens[2]),
        ));
    }
    match tokens[3].as_str() {
        "real" | "integer" | "double" => {}
        other => return Err(Error::UnsupportedField(other.to_string())),
    }
    match tokens[4].as_str() {
        "general" => Ok(Symmetry::General),
        "symmetric" => Ok(Symmetry::Symmetric),
        "skew-symmetric" => Ok(Symmetry::SkewSymmetric),
        other => Err(parse_err(
            line_no,
            format!("unsupported symmetry `{other}`"),
        )),
    }
}

/// Reads a Matrix Market coordinate stream into CSR.
///
/// Symmetric and skew-symmetric storage is expanded to the full matrix and
/// duplicate entries are summed.
pub fn parse_matrix_market<R: BufRead>(reader: R) -> Result<SparseMatrix> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));

    let symmetry = match lines.next() {
        Some((no, line)) => parse_header(no, &line?)?,
        None => return Err(parse_err(1, "empty stream")),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    let mut seen = 0usize;
    for (no, line) in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        match size {
            None => {
                let mut next = || -> Result<usize> {
                    fields
                        .next()
                        .ok_or_else(|| parse_err(no, "size line needs `rows cols nnz`"))?
                        .parse::<usize>()
                        .map_err(|e| parse_err(no, format!("bad size field: {e}")))
                };
                let dims = (next()?, next()?, next()?);
                if fields.next().is_some() {
                    return Err(parse_err(no, "trailing data on size line"));
                }
                if symmetry != Symmetry::General && dims.0 != dims.1 {
                    return Err(parse_err(no, "symmetric storage requires a square matrix"));
                }
                size = Some(dims);
            }
            Some((rows, cols, nnz)) => {
                if seen == nnz {
                    return Err(parse_err(
                        no,
                        format!("more than the declared {nnz} entries"),
                    ));
                }
                let i = parse_index(fields.next(), no, rows)?;
                let j = parse_index(fields.next(), no, cols)?;
                let v: f64 = fields
                    .next()
                    .ok_or_else(|| parse_err(no, "missing value"))?
                    .parse()
                    .map_err(|e| parse_err(no, format!("bad value: {e}")))?;
                if !v.is_finite() {
                    return Err(parse_err(no, "non-finite value"));
                }
                triplets.push((i, j, v));
                match symmetry {
                    Symmetry::General => {}
                    Symmetry::Symmetric if i != j => triplets.push((j, i, v)),
                    Symmetry::SkewSymmetric if i != j => triplets.push((j, i, -v)),
                    Symmetry::SkewSymmetric => {
                        return Err(parse_err(
                            no,
                            "skew-symmetric storage with a diagonal entry",
                        ))
                    }
                    Symmetry::Symmetric => {}
                }
                seen += 1;
            }
        }
    }
    let (rows, cols, nnz) = size.ok_or_else(|| parse_err(1, "missing size line"))?;
    if seen != nnz {
        return Err(parse_err(
            0,
            format!("declared {nnz} entries, found {seen}"),
        ));
    }
    SparseMatrix::from_triplets(rows, cols, &triplets)
}

fn parse_index(field: Option<&str>, line: usize, bound: usize) -> Result<usize> {
    let raw: usize = field
        .ok_or_else(|| parse_err(line, "missing index"))?
        .parse()
        .map_err(|e| parse_err(line, format!("bad index: {e}")))?;
    if raw == 0 || raw > bound {
        return Err(parse_err(line, format!("index {raw} outside 1..={bound}")));
    }
    Ok(raw - 1)
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    let file = std::fs::File::open(path.as_ref())?;
    parse_matrix_market(std::io::BufReader::new(file))
}

/// Writes general coordinate storage with 1-based indices.
pub fn write_matrix_market<W: Write>(a: &SparseMatrix, mut out: W) -> Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz())?;
    for i in 0..a.n_rows() {
        for (j, v) in a.row(i) {
            writeln!(out, "{} {} {:e}", i + 1, j + 1, v)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(s: &str) -> Result<SparseMatrix> {
        parse_matrix_market(s.as_bytes())
    }

    #[test]
    fn diagonal_file() {
        let a =
            parse("%%MatrixMarket matrix coordinate real general\n% c\n2 2 2\n1 1 3.0\n2 2 4.0\n")
                .unwrap();
        assert_eq!(a, SparseMatrix::from_diagonal(&[3.0, 4.0]));
    }

    #[test]
    fn symmetric_expansion() {
        let a = parse("%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n2 1 5.0\n").unwrap();
        assert_eq!(a.get(1, 0), 5.0);
        assert_eq!(a.get(0, 1), 5.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn skew_expansion_and_integer_field() {
        let a = parse("%%MatrixMarket matrix coordinate integer skew-symmetric\n3 3 1\n3 1 2\n")
            .unwrap();
        assert_eq!(a.get(2, 0), 2.0);
        assert_eq!(a.get(0, 2), -2.0);
    }

    #[test]
    fn duplicates_are_summed() {
        let a = parse(
            "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 2 1.5\n1 2 2.5\n2 1 1\n",
        )
        .unwrap();
        assert_eq!(a.get(0, 1), 4.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn rejects_unsupported_fields() {
        assert!(matches!(
            parse("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n"),
            Err(Error::UnsupportedField(f)) if f == "complex"
        ));
        assert!(matches!(
            parse("%%MatrixMarket matrix coordinate pattern general\n1 1 1\n1 1\n"),
            Err(Error::UnsupportedField(_))
        ));
    }

    #[test]
    fn reports_line_numbers() {
        let err =
            parse("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
        let err = parse("%%MatrixMarket matrix array real general\n2 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse("garbage\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err =
            parse("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    proptest! {
        #[test]
        fn dense_reconstruction_round_trips(
            entries in proptest::collection::vec((0usize..12, 0usize..9, -1e3f64..1e3), 0..200)
        ) {
            let mut text = format!(
                "%%MatrixMarket matrix coordinate real general\n12 9 {}\n",
                entries.len()
            );
            let mut dense = vec![vec![0.0f64; 9]; 12];
            for &(i, j, v) in &entries {
                text.push_str(&format!("{} {} {:e}\n", i + 1, j + 1, v));
                dense[i][j] += v;
            }
            let a = parse(&text).unwrap();
            prop_assert_eq!(a.to_dense(), dense);

            let mut buf = Vec::new();
            write_matrix_market(&a, &mut buf).unwrap();
            let again = parse_matrix_market(buf.as_slice()).unwrap();
            prop_assert_eq!(again, a);
        }
    }
}
