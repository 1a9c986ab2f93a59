use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{ProbingCurve, SimilarityEdge};

/// Where a language sits on the map and which family it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMeta {
    pub latitude: f64,
    pub longitude: f64,
    pub family: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub language: String,
    pub category: String,
    /// `None` when no metadata is known for the language.
    pub lat: Option<f64>,
    pub lon: Option<f64>,
    pub family: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphExport {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<SimilarityEdge>,
}

impl GraphExport {
    /// One node per curve, with metadata looked up by language code.
    pub fn build<F>(curves: &[ProbingCurve], edges: Vec<SimilarityEdge>, meta: F) -> Self
    where
        F: Fn(&str) -> Option<NodeMeta>,
    {
        let nodes = curves
            .iter()
            .map(|c| {
                let m = meta(&c.id.language);
                GraphNode {
                    id: c.id.label(),
                    language: c.id.language.clone(),
                    category: c.id.category.clone(),
                    lat: m.as_ref().map(|m| m.latitude),
                    lon: m.as_ref().map(|m| m.longitude),
                    family: m.map(|m| m.family),
                }
            })
            .collect();
        GraphExport { nodes, edges }
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// GraphML with the same node and edge attributes as the JSON export.
/// Missing coordinates or family are omitted from the node.
pub fn write_graphml<W: Write>(graph: &GraphExport, mut out: W) -> io::Result<()> {
    writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(out, r#"<graphml xmlns="http://graphml.graphdrawing.org/xmlns">"#)?;
    for (id, target, ty) in [
        ("language", "node", "string"),
        ("category", "node", "string"),
        ("lat", "node", "double"),
        ("lon", "node", "double"),
        ("family", "node", "string"),
        ("frechet", "edge", "double"),
        ("pearson", "edge", "double"),
    ] {
        writeln!(out, r#"  <key id="{id}" for="{target}" attr.name="{id}" attr.type="{ty}"/>"#)?;
    }
    writeln!(out, r#"  <graph id="similarity" edgedefault="undirected">"#)?;
    for n in &graph.nodes {
        writeln!(out, r#"    <node id="{}">"#, escape(&n.id))?;
        writeln!(out, r#"      <data key="language">{}</data>"#, escape(&n.language))?;
        writeln!(out, r#"      <data key="category">{}</data>"#, escape(&n.category))?;
        if let Some(lat) = n.lat {
            writeln!(out, r#"      <data key="lat">{lat}</data>"#)?;
        }
        if let Some(lon) = n.lon {
            writeln!(out, r#"      <data key="lon">{lon}</data>"#)?;
        }
        if let Some(family) = &n.family {
            writeln!(out, r#"      <data key="family">{}</data>"#, escape(family))?;
        }
        writeln!(out, "    </node>")?;
    }
    for e in &graph.edges {
        writeln!(out, r#"    <edge source="{}" target="{}">"#, escape(&e.a), escape(&e.b))?;
        writeln!(out, r#"      <data key="frechet">{}</data>"#, e.frechet)?;
        writeln!(out, r#"      <data key="pearson">{}</data>"#, e.pearson)?;
        writeln!(out, "    </edge>")?;
    }
    writeln!(out, "  </graph>")?;
    writeln!(out, "</graphml>")?;
    Ok(())
}
