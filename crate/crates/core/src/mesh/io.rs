//! Plain-text mesh format.
//!
//! ```text
//! # comment lines start with '#'
//! dim n_vertices n_cells
//! x [y]              one line per vertex
//! i j [k]            one line per cell, 0-based vertex indices
//! b0 b1 ... b_{n-1}  boundary flags (0/1), one per vertex
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{Domain, Mesh, Point};
use crate::error::{Error, Result};

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_mesh(mesh)).map_err(|e| Error::io(path, e))
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mesh(&text)
}

/// Serializes with 17 significant digits so coordinates round-trip exactly.
pub fn write_mesh(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# simplicial mesh: dim n_vertices n_cells / vertices / cells / boundary flags");
    let _ = writeln!(s, "{} {} {}", mesh.dim(), mesh.n_vertices(), mesh.n_cells());
    for p in mesh.vertices() {
        if mesh.dim() == 1 {
            let _ = writeln!(s, "{:.16e}", p[0]);
        } else {
            let _ = writeln!(s, "{:.16e} {:.16e}", p[0], p[1]);
        }
    }
    for cell in mesh.cells() {
        let line: Vec<String> = cell.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    let flags: Vec<&str> = mesh
        .boundary_flags()
        .iter()
        .map(|&b| if b { "1" } else { "0" })
        .collect();
    let _ = writeln!(s, "{}", flags.join(" "));
    s
}

pub fn parse_mesh(text: &str) -> Result<Mesh> {
    let mut lines = text.lines().enumerate().filter_map(|(i, raw)| {
        let content = raw.split('#').next().unwrap_or("").trim();
        (!content.is_empty()).then_some((i + 1, content))
    });
    let mut next = |what: &str| {
        lines.next().ok_or_else(|| Error::Parse {
            line: text.lines().count() + 1,
            msg: format!("unexpected end of file, expected {what}"),
        })
    };

    let (line, header) = next("header")?;
    let head: Vec<usize> = parse_fields(line, header)?;
    let [dim, nv, nc] = head[..] else {
        return Err(Error::Parse {
            line,
            msg: format!("header needs `dim n_vertices n_cells`, found {} fields", head.len()),
        });
    };
    if !(dim == 1 || dim == 2) {
        return Err(Error::Parse {
            line,
            msg: format!("unsupported dimension {dim}"),
        });
    }

    let mut vertices: Vec<Point> = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, content) = next("vertex coordinates")?;
        let xs: Vec<f64> = parse_fields(line, content)?;
        if xs.len() != dim {
            return Err(Error::Parse {
                line,
                msg: format!("expected {dim} coordinates, found {}", xs.len()),
            });
        }
        vertices.push([xs[0], if dim == 2 { xs[1] } else { 0.0 }]);
    }
    let mut cells = Vec::with_capacity(nc * (dim + 1));
    for _ in 0..nc {
        let (line, content) = next("cell connectivity")?;
        let ids: Vec<usize> = parse_fields(line, content)?;
        if ids.len() != dim + 1 {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} vertex indices, found {}", dim + 1, ids.len()),
            });
        }
        cells.extend(ids);
    }
    let (line, content) = next("boundary flags")?;
    let raw_flags: Vec<u8> = parse_fields(line, content)?;
    if let Some(b) = raw_flags.iter().find(|&&b| b > 1) {
        return Err(Error::Parse {
            line,
            msg: format!("boundary flag must be 0 or 1, found {b}"),
        });
    }
    let flags: Vec<bool> = raw_flags.into_iter().map(|b| b == 1).collect();
    if let Some((line, _)) = lines.next() {
        return Err(Error::Parse {
            line,
            msg: "trailing content after boundary flags".into(),
        });
    }

    let domain = infer_domain(dim, &vertices, &flags);
    Mesh::with_boundary_flags(dim, domain, vertices, cells, &flags)
}

fn parse_fields<T: std::str::FromStr>(line: usize, content: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    content
        .split_whitespace()
        .map(|tok| {
            tok.parse::<T>().map_err(|e| Error::Parse {
                line,
                msg: format!("cannot parse `{tok}`: {e}"),
            })
        })
        .collect()
}

fn infer_domain(dim: usize, vertices: &[Point], flags: &[bool]) -> Domain {
    if dim == 1 {
        let (a, b) = vertices
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[0]), hi.max(p[0])));
        return Domain::Interval { a, b };
    }
    let radii: Vec<f64> = vertices
        .iter()
        .zip(flags)
        .filter(|(_, &b)| b)
        .map(|(p, _)| (p[0] * p[0] + p[1] * p[1]).sqrt())
        .collect();
    match radii.first() {
        Some(&r0) if r0 > 0.0 && radii.iter().all(|r| (r - r0).abs() <= 1e-12 * r0.max(1.0)) => {
            Domain::Disk { radius: r0 }
        }
        _ => Domain::Polygon,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_disk_mesh, generate_interval_mesh};

    #[test]
    fn interval_round_trip() {
        let m = generate_interval_mesh(4).unwrap();
        assert_eq!(parse_mesh(&write_mesh(&m)).unwrap(), m);
    }

    #[test]
    fn disk_round_trip_is_bitwise() {
        let m = generate_disk_mesh(0.3).unwrap();
        let back = parse_mesh(&write_mesh(&m)).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.domain(), Domain::Disk { radius: 1.0 });
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join(format!("subdiff-mesh-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.mesh");
        let m = generate_interval_mesh(7).unwrap();
        save_mesh(&m, &path).unwrap();
        assert_eq!(load_mesh(&path).unwrap(), m);
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let text = "# a mesh\n\n1 3 2  # header\n0\n0.5\n1\n0 1\n1 2\n1 0 1\n";
        let m = parse_mesh(text).unwrap();
        assert_eq!(m.n_cells(), 2);
    }

    #[test]
    fn cell_index_out_of_range_is_validation_error() {
        let text = "1 3 2\n0\n0.5\n1\n0 1\n1 3\n1 0 1\n";
        assert!(matches!(parse_mesh(text), Err(Error::Validation(_))));
    }

    #[test]
    fn inverted_triangle_is_validation_error() {
        let text = "2 4 2\n0 0\n1 0\n0 1\n1 1\n0 1 2\n1 2 3\n1 1 1 1\n";
        assert!(matches!(parse_mesh(text), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_number_reports_line() {
        let text = "# c\n1 3 2\n0\nabc\n1\n0 1\n1 2\n1 0 1\n";
        match parse_mesh(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_boundary_flags_rejected() {
        let text = "1 3 2\n0\n0.5\n1\n0 1\n1 2\n1 1 1\n";
        assert!(matches!(parse_mesh(text), Err(Error::Validation(_))));
    }

    #[test]
    fn truncated_file_is_parse_error() {
        assert!(matches!(parse_mesh("1 3 2\n0\n0.5\n"), Err(Error::Parse { .. })));
    }
}
