//! JSON file format for record graphs.
//!
//! ```json
//! {
//!   "root": "p1",
//!   "nodes": [
//!     {
//!       "id": "p1",
//!       "type": "person",
//!       "fields": [
//!         {"name": "name", "type": "java.lang.String", "text": "Vangelis"},
//!         {"name": "address", "type": "Address", "ref": "a1"}
//!       ]
//!     },
//!     {
//!       "id": "a1",
//!       "type": "address",
//!       "fields": [{"name": "address", "type": "java.lang.String", "text": "St Andrews"}]
//!     }
//!   ]
//! }
//! ```
//!
//! A field carries exactly one of `text` or `ref`. An optional
//! `code_base64` on a node holds an opaque code payload.

use base64::Engine;
use serde::{Deserialize, Serialize};

use xbase::model::BitString;
use xbase::recordcast::{Field, FieldValue, NodeId, RecordGraph, RecordNode};

#[derive(Serialize, Deserialize)]
struct GraphFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    root: Option<String>,
    nodes: Vec<NodeFile>,
}

#[derive(Serialize, Deserialize)]
struct NodeFile {
    id: String,
    #[serde(rename = "type")]
    type_name: String,
    #[serde(default)]
    fields: Vec<FieldFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    code_base64: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct FieldFile {
    name: String,
    #[serde(rename = "type")]
    type_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(rename = "ref", default, skip_serializing_if = "Option::is_none")]
    reference: Option<String>,
}

pub fn from_json(json: &str) -> Result<RecordGraph, String> {
    let file: GraphFile = serde_json::from_str(json).map_err(|e| e.to_string())?;
    let mut graph = RecordGraph::new();
    for node in file.nodes {
        let mut record = RecordNode::new(NodeId::new(&node.id), &node.type_name);
        for field in node.fields {
            let value = match (field.text, field.reference) {
                (Some(text), None) => FieldValue::Text(text),
                (None, Some(target)) => FieldValue::Reference(NodeId::new(target)),
                _ => {
                    return Err(format!(
                        "field {:?} of node {:?} needs exactly one of \"text\" or \"ref\"",
                        field.name, node.id
                    ))
                }
            };
            record.fields.push(Field { name: field.name, declared_type: field.type_name, value });
        }
        if let Some(encoded) = node.code_base64 {
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(encoded.trim())
                .map_err(|e| format!("bad code_base64 on node {:?}: {e}", node.id))?;
            record.code = Some(BitString::from(bytes));
        }
        graph.insert(record);
    }
    if let Some(root) = file.root {
        let root = NodeId::new(root);
        if graph.node(&root).is_none() {
            return Err(format!("root {:?} is not among the nodes", root.as_str()));
        }
        graph.root = Some(root);
    }
    if graph.root.is_none() {
        return Err("the graph file lists no nodes".into());
    }
    Ok(graph)
}

pub fn to_json(graph: &RecordGraph) -> Result<String, String> {
    let nodes = graph
        .nodes
        .values()
        .map(|node| NodeFile {
            id: node.id.as_str().to_string(),
            type_name: node.type_name.clone(),
            fields: node
                .fields
                .iter()
                .map(|f| {
                    let (text, reference) = match &f.value {
                        FieldValue::Text(t) => (Some(t.clone()), None),
                        FieldValue::Reference(r) => (None, Some(r.as_str().to_string())),
                    };
                    FieldFile {
                        name: f.name.clone(),
                        type_name: f.declared_type.clone(),
                        text,
                        reference,
                    }
                })
                .collect(),
            code_base64: node
                .code
                .as_ref()
                .map(|b| base64::engine::general_purpose::STANDARD.encode(b.as_bytes())),
        })
        .collect();
    let file = GraphFile { root: graph.root.as_ref().map(|r| r.as_str().to_string()), nodes };
    let mut json = serde_json::to_string_pretty(&file).map_err(|e| e.to_string())?;
    json.push('\n');
    Ok(json)
}
