//! JSON files for spaces, graphs and maps.
//!
//! Floats are written in shortest round-trip form and parsed exactly, so a
//! write followed by a read reproduces every distance bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::SpaceMap;
use crate::error::{Error, Result};
use crate::generate::Generated;
use crate::graph::WeightedGraph;
use crate::space::{MeasuredSpace, PointId, QuasimetricSpace};

/// `{ "points": [...], "dist": [[...], ...], "mass": [...], "infinity": id }`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceFile {
    pub points: Vec<PointId>,
    pub dist: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infinity: Option<PointId>,
}

impl SpaceFile {
    pub fn from_space(m: &MeasuredSpace) -> Self {
        let s = m.space();
        SpaceFile {
            points: s.ids().to_vec(),
            dist: (0..s.len()).map(|i| s.row(i).to_vec()).collect(),
            mass: Some(m.mass().to_vec()),
            infinity: s.infinity_id().cloned(),
        }
    }

    /// Validates the table; missing masses default to uniform.
    pub fn into_space(self) -> Result<MeasuredSpace> {
        let n = self.points.len();
        if let Some((i, row)) = self.dist.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::InvalidSpace(format!(
                "row {i} has {} entries for {n} points",
                row.len()
            )));
        }
        if self.dist.len() != n {
            return Err(Error::InvalidSpace(format!("{} rows for {n} points", self.dist.len())));
        }
        let space = QuasimetricSpace::new(self.points, self.dist.concat(), self.infinity)?;
        match self.mass {
            Some(m) => MeasuredSpace::new(space, m),
            None => Ok(MeasuredSpace::uniform(space)),
        }
    }
}

/// `{ "vertices": [...], "edges": [[u, v, len], ...], "boundary": {...}, "base": id }`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub vertices: Vec<PointId>,
    pub edges: Vec<(PointId, PointId, f64)>,
    #[serde(default)]
    pub boundary: BTreeMap<String, Vec<PointId>>,
    /// Defaults to the first vertex.
    #[serde(default)]
    pub base: Option<PointId>,
}

impl GraphFile {
    pub fn from_graph(g: &WeightedGraph) -> Self {
        let id = |v: usize| g.vertex(v).clone();
        GraphFile {
            vertices: g.vertices().to_vec(),
            edges: g.edges().iter().map(|&(u, v, l)| (id(u), id(v), l)).collect(),
            boundary: g
                .boundary_sets()
                .iter()
                .map(|(k, vs)| (k.clone(), vs.iter().map(|&v| id(v)).collect()))
                .collect(),
            base: Some(id(g.base())),
        }
    }

    pub fn into_graph(self) -> Result<WeightedGraph> {
        let base = match self.base {
            Some(b) => b,
            None => self
                .vertices
                .first()
                .cloned()
                .ok_or_else(|| Error::InvalidGraph("graph has no vertices".into()))?,
        };
        WeightedGraph::new(self.vertices, self.edges, self.boundary, base)
    }
}

/// `{ "source": path, "target": path, "pairs": [[id, id], ...] }` with paths
/// relative to the map file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapFile {
    pub source: String,
    pub target: String,
    pub pairs: Vec<(PointId, PointId)>,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

pub fn space_from_json(text: &str) -> Result<MeasuredSpace> {
    serde_json::from_str::<SpaceFile>(text)?.into_space()
}

pub fn space_to_json(m: &MeasuredSpace) -> String {
    to_json(&SpaceFile::from_space(m))
}

pub fn graph_from_json(text: &str) -> Result<WeightedGraph> {
    serde_json::from_str::<GraphFile>(text)?.into_graph()
}

pub fn graph_to_json(g: &WeightedGraph) -> String {
    to_json(&GraphFile::from_graph(g))
}

pub fn read_space(path: impl AsRef<Path>) -> Result<MeasuredSpace> {
    space_from_json(&read_to_string(path.as_ref())?)
}

pub fn write_space(path: impl AsRef<Path>, m: &MeasuredSpace) -> Result<()> {
    write_text(path, &space_to_json(m))
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<WeightedGraph> {
    graph_from_json(&read_to_string(path.as_ref())?)
}

pub fn write_graph(path: impl AsRef<Path>, g: &WeightedGraph) -> Result<()> {
    write_text(path, &graph_to_json(g))
}

pub fn write_generated(path: impl AsRef<Path>, g: &Generated) -> Result<()> {
    match g {
        Generated::Space(s) => write_space(path, s),
        Generated::Graph(g) => write_graph(path, g),
    }
}

/// Loads both spaces of a map file. Returns the map and the resolved paths
/// of the two space files.
pub fn read_map(path: impl AsRef<Path>) -> Result<(SpaceMap, [std::path::PathBuf; 2])> {
    let path = path.as_ref();
    let file: MapFile = serde_json::from_str(&read_to_string(path)?)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let (sp, tp) = (dir.join(&file.source), dir.join(&file.target));
    let source = read_space(&sp)?.into_space();
    let target = read_space(&tp)?.into_space();
    Ok((SpaceMap::new(source, target, &file.pairs)?, [sp, tp]))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write_text(path, &to_json(value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::GeneratorSpec;
    use proptest::prelude::*;

    #[test]
    fn reads_the_documented_shape() {
        let m = space_from_json(r#"{"points": ["a", "b", 3], "dist": [[0, 1, 2], [1, 0, 1.5], [2, 1.5, 0]]}"#).unwrap();
        assert_eq!(m.space().d(0, 2), 2.0);
        assert_eq!(m.space().id(2).as_str(), "3");
        assert_eq!(m.mass(), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn asymmetric_file_names_the_pair() {
        let err = space_from_json(r#"{"points": ["a", "b"], "dist": [[0, 1], [2, 0]]}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('a') && msg.contains('b'), "{msg}");
        assert!(space_from_json(r#"{"points": ["a", "b"], "dist": [[0, 1]]}"#).is_err());
        assert!(space_from_json(r#"{"points": ["a"], "dist": [[0]], "extra": 1}"#).is_err());
    }

    #[test]
    fn graph_shape_and_roundtrip() {
        let g = graph_from_json(
            r#"{"vertices": [0, 1, 2], "edges": [[0, 1, 1.0], [1, 2, 0.5]], "boundary": {"ends": [0, 2]}, "base": 1}"#,
        )
        .unwrap();
        assert_eq!(g.d(0, 2), 1.5);
        assert_eq!(g.base(), 1);
        let back = graph_from_json(&graph_to_json(&g)).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.distances(), g.distances());
    }

    #[test]
    fn map_file_resolves_relative_paths() {
        let dir = std::env::temp_dir().join(format!("qmetric-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let s = GeneratorSpec::EuclideanSample { n: 5, dim: 1 }.generate(1).unwrap().into_space().unwrap();
        write_space(dir.join("a.json"), &s).unwrap();
        write_space(dir.join("b.json"), &s).unwrap();
        let pairs: Vec<_> = (0..5).map(|i| (PointId::from(i), PointId::from(4 - i))).collect();
        write_json(dir.join("map.json"), &MapFile { source: "a.json".into(), target: "b.json".into(), pairs }).unwrap();
        let (map, _) = read_map(dir.join("map.json")).unwrap();
        assert_eq!(map.image(0), 4);
        fs::remove_dir_all(&dir).unwrap();
    }

    proptest! {
        #[test]
        fn space_roundtrip_is_bit_exact(seed in any::<u64>(), n in 2usize..12, alpha in 0.05f64..1.0) {
            let m = GeneratorSpec::Snowflake { n, dim: 2, alpha }.generate(seed).unwrap().into_space().unwrap();
            let back = space_from_json(&space_to_json(&m)).unwrap();
            let bits = |s: &MeasuredSpace| s.space().table().iter().map(|d| d.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back), bits(&m));
            prop_assert_eq!(back, m);
        }

        #[test]
        fn tagged_space_roundtrip(seed in any::<u64>()) {
            let m = GeneratorSpec::EuclideanSample { n: 6, dim: 1 }.generate(seed).unwrap().into_space().unwrap();
            let s = crate::transforms::sphericalize(&m, "2").unwrap();
            let back = space_from_json(&space_to_json(&s)).unwrap();
            prop_assert_eq!(back, s);
        }

        #[test]
        fn graph_roundtrip_keeps_lengths(lens in proptest::collection::vec(0.001f64..1e3, 1..10)) {
            let edges: Vec<_> = lens.iter().enumerate().map(|(i, &l)| (i, i + 1, l)).collect();
            let g = WeightedGraph::from_edges(lens.len() + 1, &edges).unwrap();
            let back = graph_from_json(&graph_to_json(&g)).unwrap();
            prop_assert_eq!(back.distances(), g.distances());
        }
    }
}
