//! Reader for Gmsh MSH 2.2 ASCII files.
//!
//! Only 2-node lines (type 1) and 3-node triangles (type 2) are used; other
//! element types are skipped. Line elements on the boundary carry the tag of
//! their physical group, resolved through an [`MshTagMap`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use super::{free_edges, sorted_pair, BoundaryEdge, BoundaryTag, Mesh, MeshError};
use crate::scalar::Real;

/// Cylinder vertices within this distance of the unit circle are projected
/// onto it.
const SNAP_TOLERANCE: f64 = 1e-6;

/// Maps physical groups to boundary tags.
///
/// A physical group number is looked up in `by_number` first, then its name
/// in `by_name`. Failing both, the name is parsed as a tag, so groups named
/// `cylinder`, `outer` or `wall` need no entry. Unnamed groups without an
/// entry become `Named("<number>")`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MshTagMap {
    pub by_name: BTreeMap<String, BoundaryTag>,
    pub by_number: BTreeMap<i32, BoundaryTag>,
}

impl MshTagMap {
    fn resolve(&self, number: i32, names: &HashMap<i32, String>) -> BoundaryTag {
        if let Some(t) = self.by_number.get(&number) {
            return t.clone();
        }
        match names.get(&number) {
            Some(name) => self
                .by_name
                .get(name)
                .cloned()
                .unwrap_or_else(|| name.parse().unwrap()),
            None => BoundaryTag::Named(number.to_string()),
        }
    }
}

pub fn import_msh<T: Real>(path: &Path, tag_map: &MshTagMap) -> Result<Mesh<T>, MeshError> {
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_msh(&text, &path.display().to_string(), tag_map)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    path: &'a str,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Option<(usize, &'a str)> {
        for (i, l) in self.inner.by_ref() {
            let l = l.trim();
            if !l.is_empty() {
                self.last = i + 1;
                return Some((i + 1, l));
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str), MeshError> {
        self.next_line().ok_or_else(|| MeshError::Parse {
            path: self.path.to_string(),
            line: self.last,
            message: format!("unexpected end of file, expected {what}"),
        })
    }

    fn err(&self, line: usize, message: impl Into<String>) -> MeshError {
        MeshError::Parse {
            path: self.path.to_string(),
            line,
            message: message.into(),
        }
    }
}

fn parse_num<N: std::str::FromStr>(lines: &Lines, line: usize, tok: Option<&str>) -> Result<N, MeshError> {
    let tok = tok.ok_or_else(|| lines.err(line, "missing field"))?;
    tok.parse()
        .map_err(|_| lines.err(line, format!("cannot parse '{tok}'")))
}

/// Parses MSH 2.2 text. `path` only labels error messages.
pub fn parse_msh<T: Real>(text: &str, path: &str, tag_map: &MshTagMap) -> Result<Mesh<T>, MeshError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        path,
        last: 0,
    };
    let mut have_format = false;
    let mut names: HashMap<i32, String> = HashMap::new();
    let mut nodes: Option<(Vec<[f64; 2]>, HashMap<u64, usize>)> = None;
    // (line number, physical, node ids)
    let mut raw_lines: Vec<(usize, i32, [u64; 2])> = Vec::new();
    let mut raw_tris: Vec<(usize, i32, [u64; 3])> = Vec::new();
    let mut have_elements = false;

    while let Some((ln, header)) = lines.next_line() {
        match header {
            "$MeshFormat" => {
                let (ln, l) = lines.expect("format line")?;
                let mut it = l.split_whitespace();
                let version: String = parse_num(&lines, ln, it.next())?;
                let file_type: i32 = parse_num(&lines, ln, it.next())?;
                if !version.starts_with("2.") && version != "2" {
                    return Err(lines.err(ln, format!("unsupported MSH version {version}")));
                }
                if file_type != 0 {
                    return Err(lines.err(ln, "binary MSH files are not supported"));
                }
                have_format = true;
            }
            "$PhysicalNames" => {
                let (ln, l) = lines.expect("physical name count")?;
                let n: usize = parse_num(&lines, ln, Some(l))?;
                for _ in 0..n {
                    let (ln, l) = lines.expect("physical name")?;
                    let mut it = l.splitn(3, char::is_whitespace);
                    let _dim: i32 = parse_num(&lines, ln, it.next())?;
                    let num: i32 = parse_num(&lines, ln, it.next())?;
                    let name = it
                        .next()
                        .ok_or_else(|| lines.err(ln, "missing physical name"))?
                        .trim()
                        .trim_matches('"')
                        .to_string();
                    names.insert(num, name);
                }
            }
            "$Nodes" => {
                let (ln, l) = lines.expect("node count")?;
                let n: usize = parse_num(&lines, ln, Some(l))?;
                let mut coords = Vec::with_capacity(n);
                let mut index = HashMap::with_capacity(n);
                for _ in 0..n {
                    let (ln, l) = lines.expect("node")?;
                    let mut it = l.split_whitespace();
                    let id: u64 = parse_num(&lines, ln, it.next())?;
                    let x: f64 = parse_num(&lines, ln, it.next())?;
                    let y: f64 = parse_num(&lines, ln, it.next())?;
                    if index.insert(id, coords.len()).is_some() {
                        return Err(lines.err(ln, format!("duplicate node id {id}")));
                    }
                    coords.push([x, y]);
                }
                nodes = Some((coords, index));
            }
            "$Elements" => {
                let (ln, l) = lines.expect("element count")?;
                let n: usize = parse_num(&lines, ln, Some(l))?;
                for _ in 0..n {
                    let (ln, l) = lines.expect("element")?;
                    let mut it = l.split_whitespace();
                    let _id: u64 = parse_num(&lines, ln, it.next())?;
                    let kind: u32 = parse_num(&lines, ln, it.next())?;
                    let ntags: usize = parse_num(&lines, ln, it.next())?;
                    let mut physical = 0;
                    for k in 0..ntags {
                        let t: i32 = parse_num(&lines, ln, it.next())?;
                        if k == 0 {
                            physical = t;
                        }
                    }
                    match kind {
                        1 => {
                            let a = parse_num(&lines, ln, it.next())?;
                            let b = parse_num(&lines, ln, it.next())?;
                            raw_lines.push((ln, physical, [a, b]));
                        }
                        2 => {
                            let a = parse_num(&lines, ln, it.next())?;
                            let b = parse_num(&lines, ln, it.next())?;
                            let c = parse_num(&lines, ln, it.next())?;
                            raw_tris.push((ln, physical, [a, b, c]));
                        }
                        _ => {}
                    }
                }
                have_elements = true;
            }
            _ if header.starts_with("$End") => continue,
            _ if header.starts_with('$') => {
                // Unknown section: skip to its end marker.
                let end = format!("$End{}", &header[1..]);
                loop {
                    let (_, l) = lines.expect(&end)?;
                    if l == end {
                        break;
                    }
                }
            }
            _ => return Err(lines.err(ln, format!("unexpected content '{header}'"))),
        }
    }

    let missing = |section: &str| MeshError::Import {
        path: path.to_string(),
        message: format!("missing ${section} section"),
    };
    if !have_format {
        return Err(missing("MeshFormat"));
    }
    let (mut coords, index) = nodes.ok_or_else(|| missing("Nodes"))?;
    if !have_elements {
        return Err(missing("Elements"));
    }
    let lookup = |ln: usize, id: u64| {
        index
            .get(&id)
            .copied()
            .ok_or_else(|| lines.err(ln, format!("unknown node id {id}")))
    };

    let mut triangles = Vec::with_capacity(raw_tris.len());
    let mut regions = Vec::with_capacity(raw_tris.len());
    for &(ln, physical, ids) in &raw_tris {
        let mut tri = [lookup(ln, ids[0])?, lookup(ln, ids[1])?, lookup(ln, ids[2])?];
        let [a, b, c] = tri.map(|v| coords[v]);
        let area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
        if area == 0.0 {
            return Err(lines.err(ln, "triangle has zero area"));
        }
        if area < 0.0 {
            log::warn!("{path}: line {ln}: clockwise triangle reoriented");
            tri.swap(1, 2);
        }
        triangles.push(tri);
        regions.push(physical);
    }

    let boundary: HashSet<[usize; 2]> = free_edges(&triangles)
        .into_iter()
        .map(sorted_pair)
        .collect();
    let mut seen = HashSet::new();
    let mut boundary_edges = Vec::new();
    for &(ln, physical, ids) in &raw_lines {
        let pair = [lookup(ln, ids[0])?, lookup(ln, ids[1])?];
        let key = sorted_pair(pair);
        if !boundary.contains(&key) {
            log::warn!("{path}: line {ln}: line element is not on the boundary, ignored");
            continue;
        }
        if !seen.insert(key) {
            continue;
        }
        boundary_edges.push(BoundaryEdge {
            vertices: pair,
            tag: tag_map.resolve(physical, &names),
        });
    }

    for be in &boundary_edges {
        if be.tag == BoundaryTag::Cylinder {
            for &v in &be.vertices {
                let [x, y] = coords[v];
                let r = x.hypot(y);
                if (r - 1.0).abs() <= SNAP_TOLERANCE {
                    coords[v] = [x / r, y / r];
                }
            }
        }
    }

    let vertices = coords
        .into_iter()
        .map(|[x, y]| [T::lit(x), T::lit(y)])
        .collect();
    Mesh::new(vertices, triangles, boundary_edges, Some(regions))
}
