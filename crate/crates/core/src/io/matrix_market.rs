//! Matrix Market reader and writer for real matrices.
//!
//! Coordinate files load as sparse matrices, array files as dense ones.
//! Symmetric files are expanded on load. Values are written with 17
//! significant digits so a write/read cycle is exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Coordinate,
    Array,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_matrix_market(&text).map_err(|e| match e {
        Error::MatrixMarket { line, msg, .. } => Error::MatrixMarket {
            path: path.display().to_string(),
            line,
            msg,
        },
        other => other,
    })
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::MatrixMarket {
        path: "<input>".into(),
        line,
        msg: msg.into(),
    }
}

pub fn parse_matrix_market(text: &str) -> Result<Matrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let words: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(bad(1, format!("malformed header {header:?}")));
    }
    let format = match words[2].as_str() {
        "coordinate" => Format::Coordinate,
        "array" => Format::Array,
        other => return Err(bad(1, format!("unknown format {other:?}"))),
    };
    match words[3].as_str() {
        "real" | "integer" | "double" => {}
        other => return Err(bad(1, format!("unsupported field {other:?}; only real matrices are read"))),
    }
    let symmetry = match words[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(bad(1, format!("unsupported symmetry {other:?}"))),
    };

    let mut data = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = data.next().ok_or_else(|| bad(1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|w| w.parse().map_err(|_| bad(size_line, format!("bad size entry {w:?}"))))
        .collect::<Result<_>>()?;
    let expected = if format == Format::Coordinate { 3 } else { 2 };
    if dims.len() != expected {
        return Err(bad(size_line, format!("size line needs {expected} integers")));
    }
    let (rows, cols) = (dims[0], dims[1]);
    if symmetry == Symmetry::Symmetric && rows != cols {
        return Err(bad(size_line, "symmetric matrix must be square"));
    }

    let parse_value = |line: usize, w: &str| -> Result<f64> {
        w.parse::<f64>().map_err(|_| bad(line, format!("bad value {w:?}")))
    };

    match format {
        Format::Coordinate => {
            let nnz = dims[2];
            let mut triplets = Vec::with_capacity(nnz * 2);
            let mut count = 0;
            for (ln, l) in data {
                let w: Vec<&str> = l.split_whitespace().collect();
                if w.len() != 3 {
                    return Err(bad(ln, "coordinate entry needs row, column and value"));
                }
                let i: usize = w[0].parse().map_err(|_| bad(ln, format!("bad row index {:?}", w[0])))?;
                let j: usize = w[1].parse().map_err(|_| bad(ln, format!("bad column index {:?}", w[1])))?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(bad(ln, format!("entry ({i}, {j}) outside {rows}x{cols}")));
                }
                if symmetry == Symmetry::Symmetric && j > i {
                    return Err(bad(ln, "symmetric file has an entry above the diagonal"));
                }
                let v = parse_value(ln, w[2])?;
                triplets.push((i - 1, j - 1, v));
                if symmetry == Symmetry::Symmetric && i != j {
                    triplets.push((j - 1, i - 1, v));
                }
                count += 1;
            }
            if count != nnz {
                return Err(bad(size_line, format!("declared {nnz} entries, found {count}")));
            }
            if rows != cols {
                return Err(bad(size_line, format!("matrix must be square, got {rows}x{cols}")));
            }
            Matrix::from_triplets(rows, cols, triplets)
        }
        Format::Array => {
            let mut values = Vec::new();
            let mut last_line = size_line;
            for (ln, l) in data {
                for w in l.split_whitespace() {
                    values.push(parse_value(ln, w)?);
                }
                last_line = ln;
            }
            let expected = match symmetry {
                Symmetry::General => rows * cols,
                Symmetry::Symmetric => rows * (rows + 1) / 2,
            };
            if values.len() != expected {
                return Err(bad(last_line, format!("expected {expected} values, found {}", values.len())));
            }
            if rows != cols {
                return Err(bad(size_line, format!("matrix must be square, got {rows}x{cols}")));
            }
            let mut m = DMatrix::zeros(rows, cols);
            let mut it = values.into_iter();
            // column-major; symmetric files list the lower triangle
            for j in 0..cols {
                let start = if symmetry == Symmetry::Symmetric { j } else { 0 };
                for i in start..rows {
                    let v = it.next().expect("count checked above");
                    m[(i, j)] = v;
                    if symmetry == Symmetry::Symmetric {
                        m[(j, i)] = v;
                    }
                }
            }
            Ok(Matrix::Dense(m))
        }
    }
}

fn fmt_value(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes sparse matrices in coordinate format and dense ones in array
/// format, both `real general`.
pub fn write_matrix_market<W: Write>(m: &Matrix, mut w: W) -> Result<()> {
    match m {
        Matrix::Sparse(s) => {
            writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
            writeln!(w, "{} {} {}", s.nrows(), s.ncols(), s.nnz())?;
            for (i, j, v) in s.triplet_iter() {
                writeln!(w, "{} {} {}", i + 1, j + 1, fmt_value(*v))?;
            }
        }
        Matrix::Dense(d) => {
            writeln!(w, "%%MatrixMarket matrix array real general")?;
            writeln!(w, "{} {}", d.nrows(), d.ncols())?;
            for v in d.iter() {
                writeln!(w, "{}", fmt_value(*v))?;
            }
        }
    }
    Ok(())
}

pub fn save_matrix_market(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_matrix_market(m, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::builtin::THREE_DOF_STIFFNESS;

    #[test]
    fn scalar_array_file() {
        let m = parse_matrix_market("%%MatrixMarket matrix array real general\n1 1\n2.0\n").unwrap();
        assert!(!m.is_sparse());
        assert_eq!(m.get(0, 0), 2.0);
    }

    #[test]
    fn symmetric_coordinate_is_expanded() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 3\n1 1 1.0\n2 1 3\n2 2 4.0\n";
        let m = parse_matrix_market(text).unwrap();
        assert!(m.is_sparse());
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), 3.0);
        assert_eq!(m.get(1, 1), 4.0);
    }

    #[test]
    fn symmetric_array_lists_lower_triangle() {
        let text = "%%MatrixMarket matrix array real symmetric\n2 2\n1\n2\n3\n";
        let m = parse_matrix_market(text).unwrap().to_dense();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]));
    }

    #[test]
    fn array_is_column_major() {
        let text = "%%MatrixMarket matrix array real general\n2 2\n1 2\n3 4\n";
        let m = parse_matrix_market(text).unwrap().to_dense();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]));
    }

    #[test]
    fn malformed_inputs_are_rejected_with_line_numbers() {
        let cases = [
            ("", 1),
            ("%%MatrixMarket vector array real general\n", 1),
            ("%%MatrixMarket matrix array complex general\n1 1\n1 0\n", 1),
            ("%%MatrixMarket matrix array pattern general\n1 1\n", 1),
            ("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n", 2),
            ("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n", 3),
            ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 abc\n", 3),
            ("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n", 5),
            ("%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 1.0\n", 3),
            ("%%MatrixMarket matrix array real general\n2 3\n1\n2\n3\n4\n5\n6\n", 2),
        ];
        for (text, line) in cases {
            match parse_matrix_market(text) {
                Err(Error::MatrixMarket { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?} gave {other:?}"),
            }
        }
    }

    #[test]
    fn three_dof_stiffness_round_trips_exactly() {
        let k = Matrix::from_row_slice(3, &THREE_DOF_STIFFNESS);
        for m in [k.clone(), k.clone().into_storage(true)] {
            let mut buf = Vec::new();
            write_matrix_market(&m, &mut buf).unwrap();
            let back = parse_matrix_market(std::str::from_utf8(&buf).unwrap()).unwrap();
            assert_eq!(back.is_sparse(), m.is_sparse());
            assert_eq!(back.to_dense(), k.to_dense());
        }
    }

    #[test]
    fn files_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("k.mtx");
        let k = Matrix::from_row_slice(2, &[1.0 / 3.0, 0.1, 0.1, 2.0]);
        save_matrix_market(&k, &p).unwrap();
        assert_eq!(load_matrix_market(&p).unwrap().to_dense(), k.to_dense());
        fs::write(&p, "%%MatrixMarket matrix array real general\n1 1\nx\n").unwrap();
        match load_matrix_market(&p) {
            Err(Error::MatrixMarket { path, line, .. }) => {
                assert!(path.ends_with("k.mtx"));
                assert_eq!(line, 3);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(load_matrix_market(dir.path().join("missing.mtx")), Err(Error::Io(_))));
    }
}
