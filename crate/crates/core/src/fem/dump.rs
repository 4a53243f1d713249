//! Text dump of a nodal field for plotting scripts.
//!
//! ```text
//! # field: q_star
//! # mesh: coarse.mesh
//! # space: V_h
//! 0 1.0468750000000000e0
//! 1 ...
//! ```
//! Each data line is `vertex_index value`; X_h dumps list interior vertices
//! only.

use std::fmt::Write as _;
use std::path::Path;

use super::{Field, FemSpace, Space};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub name: String,
    pub mesh: String,
    pub space: Space,
    /// (vertex index, value)
    pub entries: Vec<(usize, f64)>,
}

impl FieldDump {
    pub fn from_field(fem: &FemSpace, field: &Field, name: &str, mesh_file: &str) -> Self {
        let entries = match field.space() {
            Space::Full => field.values().iter().copied().enumerate().collect(),
            Space::Interior => fem
                .interior_vertices()
                .iter()
                .copied()
                .zip(field.values().iter().copied())
                .collect(),
        };
        Self {
            name: name.to_string(),
            mesh: mesh_file.to_string(),
            space: field.space(),
            entries,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# field: {}", self.name);
        let _ = writeln!(s, "# mesh: {}", self.mesh);
        let _ = writeln!(s, "# space: {}", self.space.label());
        for (v, x) in &self.entries {
            let _ = writeln!(s, "{v} {x:.16e}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut name = None;
        let mut mesh = None;
        let mut space = None;
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                if let Some((key, value)) = header.split_once(':') {
                    let value = value.trim().to_string();
                    match key.trim() {
                        "field" => name = Some(value),
                        "mesh" => mesh = Some(value),
                        "space" => {
                            space = Some(match value.as_str() {
                                "V_h" => Space::Full,
                                "X_h" => Space::Interior,
                                other => {
                                    return Err(Error::Parse {
                                        line: i + 1,
                                        msg: format!("unknown space `{other}`"),
                                    })
                                }
                            })
                        }
                        _ => {}
                    }
                }
                continue;
            }
            let bad = |msg: String| Error::Parse { line: i + 1, msg };
            let mut parts = line.split_whitespace();
            let (Some(v), Some(x), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad("expected `vertex_index value`".into()));
            };
            let v = v.parse().map_err(|e| bad(format!("bad vertex index: {e}")))?;
            let x = x.parse().map_err(|e| bad(format!("bad value: {e}")))?;
            entries.push((v, x));
        }
        Ok(Self {
            name: name.unwrap_or_default(),
            mesh: mesh.unwrap_or_default(),
            space: space.ok_or(Error::Parse {
                line: 1,
                msg: "missing `# space:` header".into(),
            })?,
            entries,
        })
    }

    pub fn into_field(self, fem: &FemSpace) -> Result<Field> {
        let mut vertex_values = vec![0.0; fem.mesh().n_vertices()];
        for (v, x) in &self.entries {
            if *v >= vertex_values.len() {
                return Err(Error::InvalidArgument(format!("vertex {v} is not on the mesh")));
            }
            vertex_values[*v] = *x;
        }
        let field = fem.from_vertex_values(self.space, &vertex_values);
        if self.entries.len() != field.len() {
            return Err(Error::InvalidArgument(format!(
                "dump has {} entries, the {} space has {} dofs",
                self.entries.len(),
                self.space.label(),
                field.len()
            )));
        }
        Ok(field)
    }
}

pub fn write_field_dump(
    path: impl AsRef<Path>,
    fem: &FemSpace,
    field: &Field,
    name: &str,
    mesh_file: &str,
) -> Result<()> {
    let path = path.as_ref();
    let text = FieldDump::from_field(fem, field, name, mesh_file).to_text();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_field_dump(path: impl AsRef<Path>) -> Result<FieldDump> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    FieldDump::parse(&text)
}
