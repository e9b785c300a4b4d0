//! Dataset metadata as triples: coverage, type, inclusion and the
//! agent relations `has`, `created_by`, `created_from`.
//!
//! Coverage is an axis-aligned rectangle written as a five-point WKT
//! polygon literal.

use std::collections::{BTreeMap, BTreeSet};

use uuid::Uuid;

use crate::error::DatasetError;
use crate::term::{Graph, Pattern, Term, Triple};

pub const GEO_HAS_GEOMETRY: &str = "http://www.opengis.net/ont/geosparql#hasGeometry";
pub const GEO_WKT_LITERAL: &str = "http://www.opengis.net/ont/geosparql#wktLiteral";
pub const AIICS: &str = "http://example.org/aiics#";
pub const DATASET_TYPE: &str = "http://example.org/aiics#dataset_type";
pub const DATASET_INCLUDE: &str = "http://example.org/aiics#dataset_include";
pub const HAS: &str = "http://example.org/aiics#has";
pub const CREATED_BY: &str = "http://example.org/aiics#created_by";
pub const CREATED_FROM: &str = "http://example.org/aiics#created_from";
pub const POINTS_CLOUD: &str = "http://example.org/aiics#points_cloud";
pub const IMAGE: &str = "http://example.org/aiics#image";
pub const LIDAR_SCAN: &str = "http://example.org/aiics#lidar_scan";

/// IRI naming an agent in dataset relations.
pub fn agent_iri(agent: Uuid) -> String {
    format!("urn:uuid:{agent}")
}

pub fn agent_from_iri(iri: &str) -> Option<Uuid> {
    iri.strip_prefix("urn:uuid:").and_then(|s| Uuid::parse_str(s).ok())
}

/// Axis-aligned rectangle in map units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self, DatasetError> {
        let ok = [min_x, min_y, max_x, max_y].iter().all(|v| v.is_finite()) && min_x <= max_x && min_y <= max_y;
        if !ok {
            return Err(DatasetError::InvalidRect);
        }
        Ok(Rect {
            min_x,
            min_y,
            max_x,
            max_y,
        })
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Overlap with positive area, if any. Rectangles sharing only an edge
    /// do not intersect.
    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let r = Rect {
            min_x: self.min_x.max(other.min_x),
            min_y: self.min_y.max(other.min_y),
            max_x: self.max_x.min(other.max_x),
            max_y: self.max_y.min(other.max_y),
        };
        (r.min_x < r.max_x && r.min_y < r.max_y).then_some(r)
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.intersection(other).is_some()
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    /// `POLYGON((x0 y0, x1 y0, x1 y1, x0 y1, x0 y0))`
    pub fn to_wkt(&self) -> String {
        let (a, b, c, d) = (self.min_x, self.min_y, self.max_x, self.max_y);
        format!("POLYGON(({a} {b}, {c} {b}, {c} {d}, {a} {d}, {a} {b}))")
    }

    pub fn from_wkt(text: &str) -> Result<Rect, DatasetError> {
        let bad = || DatasetError::Geometry(text.to_string());
        let inner = text
            .trim()
            .strip_prefix("POLYGON")
            .map(str::trim_start)
            .and_then(|s| s.strip_prefix("(("))
            .and_then(|s| s.strip_suffix("))"))
            .ok_or_else(bad)?;
        let mut points = Vec::new();
        for pair in inner.split(',') {
            let mut it = pair.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y)), None) => points.push((x, y)),
                _ => return Err(bad()),
            }
        }
        if points.len() != 5 || points[0] != points[4] {
            return Err(bad());
        }
        let min_x = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let max_x = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let min_y = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let max_y = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let corner = |&(x, y): &(f64, f64)| (x == min_x || x == max_x) && (y == min_y || y == max_y);
        if !points.iter().all(corner) {
            return Err(bad());
        }
        Rect::new(min_x, min_y, max_x, max_y).map_err(|_| bad())
    }

    /// Disjoint pieces of `self` outside `cut`.
    fn subtract(&self, cut: &Rect) -> Vec<Rect> {
        let Some(i) = self.intersection(cut) else {
            return vec![*self];
        };
        let mut out = Vec::with_capacity(4);
        let mut push = |r: Rect| {
            if r.area() > 0.0 {
                out.push(r);
            }
        };
        // full-width bands below and above, then the left and right slabs
        push(Rect { max_y: i.min_y, ..*self });
        push(Rect { min_y: i.max_y, ..*self });
        push(Rect {
            max_x: i.min_x,
            min_y: i.min_y,
            max_y: i.max_y,
            ..*self
        });
        push(Rect {
            min_x: i.max_x,
            min_y: i.min_y,
            max_y: i.max_y,
            ..*self
        });
        out
    }
}

/// `target` minus the union of `covered`, as pairwise disjoint rectangles.
pub fn remaining_region(target: &Rect, covered: &[Rect]) -> Vec<Rect> {
    let mut pieces = vec![*target];
    for c in covered {
        pieces = pieces.iter().flat_map(|p| p.subtract(c)).collect();
    }
    pieces.retain(|p| p.area() > 0.0);
    pieces
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub uri: String,
    pub coverage: Rect,
    pub dataset_type: String,
    pub includes: BTreeSet<String>,
}

impl DatasetMeta {
    pub fn new(uri: impl Into<String>, coverage: Rect, dataset_type: impl Into<String>) -> Self {
        DatasetMeta {
            uri: uri.into(),
            coverage,
            dataset_type: dataset_type.into(),
            includes: BTreeSet::new(),
        }
    }

    pub fn include(mut self, dataset: impl Into<String>) -> Self {
        self.includes.insert(dataset.into());
        self
    }
}

/// `Has` and `CreatedBy` link an agent to a dataset; `CreatedFrom` links a
/// dataset to its source and is recorded for provenance only.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum DatasetRelation {
    Has { agent: Uuid, dataset: String },
    CreatedBy { dataset: String, agent: Uuid },
    CreatedFrom { dataset: String, source: String },
}

impl DatasetRelation {
    pub fn to_triple(&self) -> Result<Triple, DatasetError> {
        Ok(match self {
            DatasetRelation::Has { agent, dataset } => Triple::iris(&agent_iri(*agent), HAS, dataset)?,
            DatasetRelation::CreatedBy { dataset, agent } => Triple::iris(dataset, CREATED_BY, &agent_iri(*agent))?,
            DatasetRelation::CreatedFrom { dataset, source } => Triple::iris(dataset, CREATED_FROM, source)?,
        })
    }

    fn from_triple(t: &Triple) -> Option<DatasetRelation> {
        let s = t.subject().as_iri()?;
        let o = t.object().as_iri()?;
        match t.predicate().as_iri()? {
            HAS => Some(DatasetRelation::Has {
                agent: agent_from_iri(s)?,
                dataset: o.to_string(),
            }),
            CREATED_BY => Some(DatasetRelation::CreatedBy {
                dataset: s.to_string(),
                agent: agent_from_iri(o)?,
            }),
            CREATED_FROM => Some(DatasetRelation::CreatedFrom {
                dataset: s.to_string(),
                source: o.to_string(),
            }),
            _ => None,
        }
    }
}

pub fn meta_triples(meta: &DatasetMeta) -> Result<BTreeSet<Triple>, DatasetError> {
    if meta.includes.contains(&meta.uri) {
        return Err(DatasetError::SelfInclude(meta.uri.clone()));
    }
    let subject = Term::iri(&meta.uri)?;
    let mut out = BTreeSet::new();
    out.insert(Triple::new(
        subject.clone(),
        Term::iri(GEO_HAS_GEOMETRY)?,
        Term::typed_literal(meta.coverage.to_wkt(), GEO_WKT_LITERAL)?,
    )?);
    out.insert(Triple::iris(&meta.uri, DATASET_TYPE, &meta.dataset_type)?);
    for inc in &meta.includes {
        out.insert(Triple::iris(&meta.uri, DATASET_INCLUDE, inc)?);
    }
    Ok(out)
}

pub fn dataset_to_triples(meta: &DatasetMeta, relations: &[DatasetRelation]) -> Result<BTreeSet<Triple>, DatasetError> {
    let mut out = meta_triples(meta)?;
    for r in relations {
        out.insert(r.to_triple()?);
    }
    Ok(out)
}

fn objects(graph: &Graph, subject: &Term, predicate: &str) -> Result<Vec<Term>, DatasetError> {
    let pattern = Pattern {
        subject: Some(subject.clone()),
        predicate: Some(Term::iri(predicate)?),
        object: None,
    };
    Ok(graph.matching(&pattern).into_iter().map(|t| t.object().clone()).collect())
}

/// Reads the description of `uri` back from a graph.
pub fn meta_from_graph(graph: &Graph, uri: &str) -> Result<DatasetMeta, DatasetError> {
    let subject = Term::iri(uri)?;
    let missing = |field| DatasetError::Missing {
        dataset: uri.to_string(),
        field,
    };
    let geometry = objects(graph, &subject, GEO_HAS_GEOMETRY)?.into_iter().next().ok_or_else(|| missing("geometry"))?;
    let coverage = Rect::from_wkt(geometry.value())?;
    let dataset_type = objects(graph, &subject, DATASET_TYPE)?
        .into_iter()
        .find_map(|t| t.as_iri().map(str::to_string))
        .ok_or_else(|| missing("type"))?;
    let includes: BTreeSet<String> = objects(graph, &subject, DATASET_INCLUDE)?
        .iter()
        .filter_map(|t| t.as_iri().map(str::to_string))
        .collect();
    if includes.contains(uri) {
        return Err(DatasetError::SelfInclude(uri.to_string()));
    }
    Ok(DatasetMeta {
        uri: uri.to_string(),
        coverage,
        dataset_type,
        includes,
    })
}

/// Every dataset described in the graph, keyed by IRI. Subjects with a
/// malformed description are skipped.
pub fn datasets(graph: &Graph) -> BTreeMap<String, DatasetMeta> {
    let Ok(pred) = Term::iri(GEO_HAS_GEOMETRY) else {
        return BTreeMap::new();
    };
    let pattern = Pattern {
        predicate: Some(pred),
        ..Pattern::any()
    };
    graph
        .matching(&pattern)
        .iter()
        .filter_map(|t| t.subject().as_iri())
        .filter_map(|uri| meta_from_graph(graph, uri).ok())
        .map(|m| (m.uri.clone(), m))
        .collect()
}

pub fn relations(graph: &Graph) -> BTreeSet<DatasetRelation> {
    graph.triples().iter().filter_map(DatasetRelation::from_triple).collect()
}

/// Agents holding a copy of `dataset`.
pub fn holders(graph: &Graph, dataset: &str) -> BTreeSet<Uuid> {
    relations(graph)
        .into_iter()
        .filter_map(|r| match r {
            DatasetRelation::Has { agent, dataset: d } if d == dataset => Some(agent),
            _ => None,
        })
        .collect()
}

/// Datasets whose coverage overlaps `region` with positive area, with the
/// agents holding them.
pub fn discover(graph: &Graph, region: &Rect) -> Vec<(String, Vec<Uuid>)> {
    let rels = relations(graph);
    datasets(graph)
        .into_values()
        .filter(|m| m.coverage.intersects(region))
        .map(|m| {
            let holders = rels
                .iter()
                .filter_map(|r| match r {
                    DatasetRelation::Has { agent, dataset } if *dataset == m.uri => Some(*agent),
                    _ => None,
                })
                .collect();
            (m.uri, holders)
        })
        .collect()
}

/// Raw bytes of a dataset split into fixed-size chunks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payload {
    pub dataset: String,
    pub blob_type: String,
    chunks: Vec<Vec<u8>>,
}

impl Payload {
    pub fn from_bytes(dataset: impl Into<String>, blob_type: impl Into<String>, bytes: &[u8], chunk_size: usize) -> Self {
        assert!(chunk_size > 0, "chunk size must be positive");
        Payload {
            dataset: dataset.into(),
            blob_type: blob_type.into(),
            chunks: bytes.chunks(chunk_size).map(<[u8]>::to_vec).collect(),
        }
    }

    pub fn chunks(&self) -> &[Vec<u8>] {
        &self.chunks
    }

    pub fn chunk(&self, sequence: u64) -> Option<&[u8]> {
        self.chunks.get(usize::try_from(sequence).ok()?).map(Vec::as_slice)
    }

    pub fn total_bytes(&self) -> u64 {
        self.chunks.iter().map(|c| c.len() as u64).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.chunks.concat()
    }

    /// Sequence of the final chunk, `-1` when empty.
    pub fn last_sequence(&self) -> i64 {
        self.chunks.len() as i64 - 1
    }
}
