//! Casting of record graphs: typed nodes with named fields whose values
//! are primitive text or references to other nodes, possibly cyclic.
//!
//! Reification emits one fragment per reachable node. A node fragment
//! wraps a `<fields>` element (fields numbered `field1`, `field2`, ... in
//! declaration order, each carrying `<name>`, `<type>` and `<value>`;
//! reference values hold an `<XBaseRef ref="..."/>`) and, when the node
//! carries a code payload, a `<code>` element naming the code fragment.
//! Code fragments wrap `<code><className>...</className><bytes>base64
//! </bytes></code>`; payloads are stored as opaque bytes and never
//! executed. A visited set guarantees exactly one fragment per node no
//! matter how nodes are shared, and cycles terminate.
//!
//! System ids follow `ip-type-counter` (`192.0.0.1-person-1`) for nodes
//! and `ip-class_type-counter` for code, with counters kept per node type
//! in the graph's id map so unchanged nodes reify to identical bytes.

use std::collections::HashMap;

use indexmap::IndexMap;

use crate::error::{Result, XbaseError};
use crate::model::{derive_key, BitString, Key, Name};
use crate::namer::Namer;
use crate::store::Store;
use crate::xml::Element;
use crate::xmlfrag::{
    store_fragments, update_fragments, Fragment, FragmentKind, FragmentResolver, StoreResolver,
    UpdateReport, UpdateStrategy,
};

/// Opaque identity of a node within one graph.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> NodeId {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum FieldValue {
    /// A primitive rendered as text.
    Text(String),
    /// A reference to another node in the graph.
    Reference(NodeId),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Field {
    pub name: String,
    pub declared_type: String,
    pub value: FieldValue,
}

impl Field {
    pub fn text(name: &str, declared_type: &str, value: &str) -> Field {
        Field {
            name: name.into(),
            declared_type: declared_type.into(),
            value: FieldValue::Text(value.into()),
        }
    }

    pub fn reference(name: &str, declared_type: &str, target: NodeId) -> Field {
        Field {
            name: name.into(),
            declared_type: declared_type.into(),
            value: FieldValue::Reference(target),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RecordNode {
    pub id: NodeId,
    pub type_name: String,
    pub fields: Vec<Field>,
    /// Optional opaque code payload, stored but never executed.
    pub code: Option<BitString>,
}

impl RecordNode {
    pub fn new(id: NodeId, type_name: impl Into<String>) -> RecordNode {
        RecordNode { id, type_name: type_name.into(), fields: Vec::new(), code: None }
    }

    pub fn with_field(mut self, field: Field) -> RecordNode {
        self.fields.push(field);
        self
    }
}

/// Identity bookkeeping across reifications: node ids to fragment names,
/// code payloads to code fragment names, and per-type name counters.
#[derive(Clone, Default, PartialEq, Debug)]
pub struct RecordIdMap {
    node_names: HashMap<NodeId, Name>,
    code_names: HashMap<(String, Key), Name>,
    counters: HashMap<String, u64>,
}

impl RecordIdMap {
    fn assign_node(&mut self, id: &NodeId, type_name: &str, node_ip: &str) -> Name {
        if let Some(name) = self.node_names.get(id) {
            return name.clone();
        }
        let counter = self.bump(node_ip, type_name);
        let name = Name::new(format!("{node_ip}-{type_name}-{counter}"))
            .expect("system ids are valid names");
        self.node_names.insert(id.clone(), name.clone());
        name
    }

    fn assign_code(&mut self, type_name: &str, payload: &BitString, node_ip: &str) -> Name {
        let key = (type_name.to_string(), derive_key(payload));
        if let Some(name) = self.code_names.get(&key) {
            return name.clone();
        }
        let code_type = format!("class_{type_name}");
        let counter = self.bump(node_ip, &code_type);
        let name = Name::new(format!("{node_ip}-{code_type}-{counter}"))
            .expect("system ids are valid names");
        self.code_names.insert(key, name.clone());
        name
    }

    fn bump(&mut self, node_ip: &str, type_name: &str) -> u64 {
        let counter = self
            .counters
            .entry(format!("{node_ip}|{type_name}"))
            .or_insert(0);
        *counter += 1;
        *counter
    }

    fn retain_nodes(&mut self, live: &HashMap<NodeId, Name>) {
        self.node_names.retain(|id, _| live.contains_key(id));
    }

    pub fn name_of(&self, id: &NodeId) -> Option<&Name> {
        self.node_names.get(id)
    }
}

/// A graph of record nodes with a designated root.
#[derive(Clone, Default, Debug)]
pub struct RecordGraph {
    pub nodes: IndexMap<NodeId, RecordNode>,
    pub root: Option<NodeId>,
    pub id_map: RecordIdMap,
}

impl RecordGraph {
    pub fn new() -> RecordGraph {
        RecordGraph::default()
    }

    pub fn insert(&mut self, node: RecordNode) {
        if self.root.is_none() {
            self.root = Some(node.id.clone());
        }
        self.nodes.insert(node.id.clone(), node);
    }

    pub fn node(&self, id: &NodeId) -> Option<&RecordNode> {
        self.nodes.get(id)
    }

    pub fn node_mut(&mut self, id: &NodeId) -> Option<&mut RecordNode> {
        self.nodes.get_mut(id)
    }
}

// ---------------------------------------------------------------------------
// Reify
// ---------------------------------------------------------------------------

/// Flattens the graph into fragments: the root node first, then the other
/// reachable nodes in depth-first field order, then code fragments. The
/// visited set guarantees exactly one fragment per node regardless of
/// sharing or cycles.
pub fn reify_graph(graph: &mut RecordGraph, node_ip: &str) -> Result<Vec<Fragment>> {
    let root = graph
        .root
        .clone()
        .ok_or_else(|| XbaseError::Reify("record graph has no root".into()))?;
    if !graph.nodes.contains_key(&root) {
        return Err(XbaseError::Reify(format!("root node {root:?} is not in the graph")));
    }

    // First pass: reachability in depth-first field order, assigning names.
    let mut order: Vec<NodeId> = Vec::new();
    let mut named: HashMap<NodeId, Name> = HashMap::new();
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        if named.contains_key(&id) {
            continue;
        }
        let node = graph
            .nodes
            .get(&id)
            .ok_or_else(|| XbaseError::Reify(format!("dangling reference to {id:?}")))?;
        let name = graph.id_map.assign_node(&id, &node.type_name, node_ip);
        named.insert(id.clone(), name);
        order.push(id.clone());
        for field in node.fields.iter().rev() {
            if let FieldValue::Reference(target) = &field.value {
                stack.push(target.clone());
            }
        }
    }
    graph.id_map.retain_nodes(&named);

    // Second pass: emit node fragments, collecting code payloads.
    let mut fragments = Vec::new();
    let mut code_fragments = Vec::new();
    for id in &order {
        let node = &graph.nodes[id];
        let name = named[id].clone();
        let mut fields = Element::new("fields");
        for (i, field) in node.fields.iter().enumerate() {
            let value = match &field.value {
                FieldValue::Text(text) => Element::new("value").with_text(text.clone()),
                FieldValue::Reference(target) => Element::new("value").with_child(
                    Element::new("XBaseRef").with_attr("ref", named[target].as_str()),
                ),
            };
            fields = fields.with_child(
                Element::new(format!("field{}", i + 1))
                    .with_child(Element::new("name").with_text(&field.name))
                    .with_child(Element::new("type").with_text(&field.declared_type))
                    .with_child(value),
            );
        }
        let mut body = vec![fields];
        if let Some(payload) = &node.code {
            let code_name = graph.id_map.assign_code(&node.type_name, payload, node_ip);
            body.push(Element::new("code").with_text(code_name.as_str()));
            if !code_fragments.iter().any(|f: &Fragment| f.name == code_name) {
                code_fragments.push(code_fragment(&code_name, &node.type_name, payload));
            }
        }
        fragments.push(Fragment {
            name,
            schema_ref: None,
            body,
            kind: FragmentKind::Element,
        });
    }
    fragments.extend(code_fragments);
    Ok(fragments)
}

fn code_fragment(name: &Name, type_name: &str, payload: &BitString) -> Fragment {
    Fragment::new(
        name.clone(),
        Element::new("code")
            .with_child(Element::new("className").with_text(type_name))
            .with_child(Element::new("bytes").with_text(base64_encode(payload.as_bytes()))),
        FragmentKind::Element,
    )
}

// ---------------------------------------------------------------------------
// Reflect
// ---------------------------------------------------------------------------

/// Rebuilds a graph from fragments. The first node fragment in the given
/// set is the root; references resolve against the given set first, then
/// the resolver. Two references to one fragment name yield one node
/// referenced twice, and cyclic fragment sets terminate.
pub fn reflect_graph(
    fragments: Vec<Fragment>,
    resolver: &dyn FragmentResolver,
) -> Result<RecordGraph> {
    let root_name = fragments
        .iter()
        .find(|f| is_node_fragment(f))
        .map(|f| f.name.clone())
        .ok_or_else(|| XbaseError::Reflect("no record fragment among the given".into()))?;
    let mut given: HashMap<Name, Fragment> = HashMap::new();
    for fragment in fragments {
        given.entry(fragment.name.clone()).or_insert(fragment);
    }
    let mut builder = GraphBuilder {
        given,
        resolver,
        graph: RecordGraph::new(),
        visited: HashMap::new(),
    };
    let root = builder.build_node(&root_name)?;
    builder.graph.root = Some(root);
    let mut graph = builder.graph;
    // Rebuild identity so a later update reuses the same names.
    let live: HashMap<NodeId, Name> = graph
        .nodes
        .keys()
        .map(|id| (id.clone(), Name::new(id.as_str()).expect("node ids are names")))
        .collect();
    for (id, name) in &live {
        let node_type = graph.nodes[id].type_name.clone();
        graph.id_map.node_names.insert(id.clone(), name.clone());
        if let Some(counter) = name.as_str().rsplit('-').next().and_then(|c| c.parse().ok()) {
            let ip = name
                .as_str()
                .split('-')
                .next()
                .unwrap_or_default()
                .to_string();
            let entry = graph
                .id_map
                .counters
                .entry(format!("{ip}|{node_type}"))
                .or_insert(0);
            *entry = (*entry).max(counter);
        }
    }
    Ok(graph)
}

fn is_node_fragment(fragment: &Fragment) -> bool {
    fragment
        .body
        .first()
        .is_some_and(|el| el.local_name() == "fields")
}

fn is_code_fragment(fragment: &Fragment) -> bool {
    fragment.body.len() == 1
        && fragment.body[0].local_name() == "code"
        && fragment.body[0].first_child_element("bytes").is_some()
}

struct GraphBuilder<'a> {
    given: HashMap<Name, Fragment>,
    resolver: &'a dyn FragmentResolver,
    graph: RecordGraph,
    visited: HashMap<Name, NodeId>,
}

impl GraphBuilder<'_> {
    fn lookup(&self, name: &Name) -> Result<Fragment> {
        if let Some(fragment) = self.given.get(name) {
            return Ok(fragment.clone());
        }
        self.resolver
            .resolve(name)?
            .ok_or_else(|| XbaseError::Reflect(format!("unresolved reference {name}")))
    }

    /// Builds the node for a fragment name, reusing the already-built node
    /// on a repeat visit so aliasing and cycles are preserved.
    fn build_node(&mut self, name: &Name) -> Result<NodeId> {
        if let Some(id) = self.visited.get(name) {
            return Ok(id.clone());
        }
        let fragment = self.lookup(name)?;
        if !is_node_fragment(&fragment) {
            return Err(XbaseError::Reflect(format!(
                "fragment {name} is not a record fragment"
            )));
        }
        let id = NodeId::new(name.as_str());
        self.visited.insert(name.clone(), id.clone());
        let mut node = RecordNode::new(id.clone(), type_from_name(name));
        // Insert the shell first: a cycle back to this node must find it.
        self.graph.nodes.insert(id.clone(), node.clone());

        let fields_el = fragment.body[0].clone();
        for (i, field_el) in fields_el.child_elements().enumerate() {
            node.fields.push(self.build_field(name, i, field_el)?);
        }
        if let Some(code_el) = fragment
            .body
            .iter()
            .find(|el| el.local_name() == "code")
        {
            let code_name = Name::new(code_el.text().trim())
                .map_err(|e| XbaseError::Reflect(e.to_string()))?;
            node.code = Some(self.load_code(&code_name)?);
        }
        self.graph.nodes.insert(id.clone(), node);
        Ok(id)
    }

    fn build_field(&mut self, owner: &Name, index: usize, field_el: &Element) -> Result<Field> {
        let part = |tag: &str| {
            field_el.first_child_element(tag).ok_or_else(|| {
                XbaseError::Reflect(format!(
                    "fragment {owner} field {} has no <{tag}>",
                    index + 1
                ))
            })
        };
        let name = part("name")?.text().trim().to_string();
        let declared_type = part("type")?.text().trim().to_string();
        let value_el = part("value")?;
        let value = match value_el
            .child_elements()
            .find(|el| el.local_name() == "XBaseRef" || el.local_name() == "XbaseRef")
        {
            Some(reference) => {
                let target = reference
                    .attr("ref")
                    .ok_or_else(|| {
                        XbaseError::Reflect("reference without ref attribute".into())
                    })
                    .and_then(|v| Name::new(v).map_err(|e| XbaseError::Reflect(e.to_string())))?;
                FieldValue::Reference(self.build_node(&target)?)
            }
            None => FieldValue::Text(value_el.text()),
        };
        Ok(Field { name, declared_type, value })
    }

    fn load_code(&mut self, code_name: &Name) -> Result<BitString> {
        let fragment = self.lookup(code_name)?;
        if !is_code_fragment(&fragment) {
            return Err(XbaseError::Reflect(format!(
                "fragment {code_name} is not a code fragment"
            )));
        }
        let bytes_text = fragment.body[0]
            .first_child_element("bytes")
            .expect("checked by is_code_fragment")
            .text();
        base64_decode(bytes_text.trim())
            .map(BitString::from)
            .ok_or_else(|| XbaseError::Reflect(format!("bad code bytes in {code_name}")))
    }
}

/// The node's type as embedded in its system id (`ip-type-counter`); names
/// that do not follow the pattern are used whole.
fn type_from_name(name: &Name) -> String {
    let text = name.as_str();
    let Some(first) = text.find('-') else { return text.to_string() };
    let Some(last) = text.rfind('-') else { return text.to_string() };
    if last > first && text[last + 1..].chars().all(|c| c.is_ascii_digit()) {
        text[first + 1..last].to_string()
    } else {
        text.to_string()
    }
}

// ---------------------------------------------------------------------------
// Pipelines (shared with the XML fragment machinery)
// ---------------------------------------------------------------------------

/// Reifies and stores the graph, binding every fragment name; returns the
/// root node's fragment name.
pub fn store_record_graph(
    graph: &mut RecordGraph,
    store: &dyn Store,
    namer: &Namer,
    node_ip: &str,
) -> Result<Name> {
    let fragments = reify_graph(graph, node_ip)?;
    store_fragments(&fragments, store, namer)?;
    Ok(fragments[0].name.clone())
}

/// Fetches the root fragment by name and reflects the graph with the
/// namer-and-store resolver.
pub fn get_record_graph(root_name: &Name, store: &dyn Store, namer: &Namer) -> Result<RecordGraph> {
    let key = namer.lookup_latest(root_name)?;
    let root = Fragment::from_bits(&store.get(&key)?)?;
    reflect_graph(vec![root], &StoreResolver { store, namer })
}

/// Re-reifies with stable ids and stores only the changed fragments,
/// exactly like an XML entity update.
pub fn update_record_graph(
    graph: &mut RecordGraph,
    store: &dyn Store,
    namer: &Namer,
    strategy: UpdateStrategy,
    node_ip: &str,
) -> Result<UpdateReport> {
    let fragments = reify_graph(graph, node_ip)?;
    update_fragments(&fragments, store, namer, strategy)
}

fn base64_encode(bytes: &[u8]) -> String {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

fn base64_decode(text: &str) -> Option<Vec<u8>> {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.decode(text).ok()
}

#[cfg(test)]
mod tests;
