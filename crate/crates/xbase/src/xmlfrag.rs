//! Schema-driven XML document fragmentation and reassembly.
//!
//! Reifying an XML entity shreds its document into a set of fragments: one
//! per element matched by a granularity rule, plus the transformed root and
//! the schema itself. A granularity rule is an `xsd:element ref="..."` in
//! the entity's schema; each full document path at which a ref occurs
//! becomes a cut point. Shredded elements are replaced in their parent by
//! `<XBaseRef ref="NAME"/>` and emitted wrapped in an `<XBaseName
//! ref="NAME">` envelope; nested cut points shred deepest-first, so a
//! person fragment carries a reference to its address fragment.
//!
//! Fragment wire format: an XML declaration, then `<XBaseName ref="...">`
//! (with `schemaRef="..."` on the root fragment only) wrapping exactly one
//! child element; schema fragments wrap an `xsd:schema` element. Input
//! accepts the `XbaseName`/`XbaseRef` casing as well.
//!
//! Names are system generated and stable: the entity's id map remembers the
//! name assigned to each node locator (element path plus occurrence index),
//! so an unchanged element reifies to byte-identical fragment bytes across
//! edits. Reflection resolves references against the given fragment set
//! first and then a [`FragmentResolver`], records visited names to
//! terminate on cycles, and rebuilds the id map from the substituted names.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::str::FromStr;

use indexmap::IndexMap;

use crate::error::{Result, XbaseError};
use crate::model::{BitString, Key, Name, VersionTuple};
use crate::namer::Namer;
use crate::store::Store;
use crate::xml::{self, Document, Element, Node};

// ---------------------------------------------------------------------------
// Paths, locators and the id map
// ---------------------------------------------------------------------------

/// A chain of element names from the document root, e.g.
/// `/XBaseMembers/teachingStaff/person`. A path matches every element whose
/// ancestor tag chain equals the sequence; there are no predicates.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct ElementPath(Vec<String>);

impl ElementPath {
    pub fn root(name: impl Into<String>) -> ElementPath {
        ElementPath(vec![name.into()])
    }

    pub fn child(&self, name: impl Into<String>) -> ElementPath {
        let mut segments = self.0.clone();
        segments.push(name.into());
        ElementPath(segments)
    }

    pub fn segments(&self) -> &[String] {
        &self.0
    }

    pub fn last(&self) -> &str {
        self.0.last().expect("paths are never empty")
    }

    /// Segments joined with `/`, without the leading slash; the form used
    /// inside system-generated names.
    pub fn joined(&self) -> String {
        self.0.join("/")
    }
}

impl std::fmt::Display for ElementPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "/{}", self.joined())
    }
}

/// Identity of one node in a document: its path plus its occurrence index
/// among same-path elements in document order.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Locator {
    pub path: ElementPath,
    pub occurrence: usize,
}

/// What a system-generated name identifies.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SysIdKind {
    Element,
    Root,
    Schema,
}

/// Builds a system-generated fragment name:
/// element kind `192.0.0.1-XBaseMembers/researchFellows/person-1`,
/// root kind `192.0.0.1-XBaseMembersOuterMostTag-1`,
/// schema kind the root name plus `-schema`.
pub fn generate_sys_id(node_ip: &str, path: &ElementPath, counter: u64, kind: SysIdKind) -> Name {
    let text = match kind {
        SysIdKind::Element => format!("{node_ip}-{}-{counter}", path.joined()),
        SysIdKind::Root => format!("{node_ip}-{}OuterMostTag-{counter}", path.last()),
        SysIdKind::Schema => format!("{node_ip}-{}OuterMostTag-{counter}-schema", path.last()),
    };
    Name::new(text).expect("system ids are valid names")
}

/// The mapping from node locators to fragment names, plus the per-path
/// counters that keep fresh names from colliding with retired ones.
#[derive(Clone, Default, PartialEq, Debug)]
pub struct IdMap {
    names: HashMap<Locator, Name>,
    counters: HashMap<ElementPath, u64>,
}

impl IdMap {
    pub fn name_for(&self, locator: &Locator) -> Option<&Name> {
        self.names.get(locator)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Name for a locator: the remembered one when present, otherwise a
    /// fresh one past the highest counter ever used for the path.
    fn assign(&mut self, locator: Locator, node_ip: &str, kind: SysIdKind) -> Name {
        if let Some(name) = self.names.get(&locator) {
            return name.clone();
        }
        let counter = self.counters.entry(locator.path.clone()).or_insert(0);
        *counter += 1;
        let name = generate_sys_id(node_ip, &locator.path, *counter, kind);
        self.names.insert(locator, name.clone());
        name
    }

    /// Records a name observed at a locator during reflection, advancing the
    /// path counter past the counter embedded in the name.
    fn observe(&mut self, locator: Locator, name: Name) {
        if let Some(counter) = trailing_counter(name.as_str()) {
            let entry = self.counters.entry(locator.path.clone()).or_insert(0);
            *entry = (*entry).max(counter);
        }
        self.names.entry(locator).or_insert(name);
    }

    /// Drops locators that no longer resolve to a node. Counters persist so
    /// retired names are never reissued.
    fn retain_live(&mut self, live: &HashSet<Locator>) {
        self.names.retain(|locator, _| live.contains(locator));
    }
}

fn trailing_counter(name: &str) -> Option<u64> {
    let name = name.strip_suffix("-schema").unwrap_or(name);
    name.rsplit('-').next()?.parse().ok()
}

// ---------------------------------------------------------------------------
// Fragments and resolvers
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FragmentKind {
    Root,
    Element,
    Schema,
}

/// One shredded piece of an entity, wrapped in its name-carrying envelope.
#[derive(Clone, PartialEq, Debug)]
pub struct Fragment {
    pub name: Name,
    /// Present on root fragments only; names the schema fragment.
    pub schema_ref: Option<Name>,
    pub body: Vec<Element>,
    pub kind: FragmentKind,
}

const WRAPPER_TAG: &str = "XBaseName";
const REF_TAG: &str = "XBaseRef";

fn is_wrapper_tag(name: &str) -> bool {
    name == "XBaseName" || name == "XbaseName"
}

fn is_ref_tag(name: &str) -> bool {
    name == "XBaseRef" || name == "XbaseRef"
}

impl Fragment {
    pub fn new(name: Name, body: Element, kind: FragmentKind) -> Fragment {
        Fragment { name, schema_ref: None, body: vec![body], kind }
    }

    pub fn to_document(&self) -> Document {
        let mut root = Element::new(WRAPPER_TAG).with_attr("ref", self.name.as_str());
        if let Some(schema_ref) = &self.schema_ref {
            root = root.with_attr("schemaRef", schema_ref.as_str());
        }
        for el in &self.body {
            root = root.with_child(el.clone());
        }
        Document::new(root)
    }

    /// The canonical bytes of the fragment; the form stores and keys see.
    pub fn to_bits(&self) -> BitString {
        BitString::from(xml::canonical_bytes(&self.to_document()))
    }

    pub fn from_bits(bits: &BitString) -> Result<Fragment> {
        let doc = xml::parse_bytes(bits.as_bytes())
            .map_err(|e| XbaseError::Reflect(format!("invalid fragment: {e}")))?;
        Fragment::from_document(&doc)
    }

    pub fn from_document(doc: &Document) -> Result<Fragment> {
        let root = &doc.root;
        if !is_wrapper_tag(&root.name) {
            return Err(XbaseError::Reflect(format!(
                "fragment root is <{}>, expected <{WRAPPER_TAG}>",
                root.name
            )));
        }
        let name = root
            .attr("ref")
            .ok_or_else(|| XbaseError::Reflect("fragment without ref attribute".into()))
            .and_then(|v| Name::new(v).map_err(|e| XbaseError::Reflect(e.to_string())))?;
        let schema_ref = match root.attr("schemaRef") {
            Some(v) => Some(Name::new(v).map_err(|e| XbaseError::Reflect(e.to_string()))?),
            None => None,
        };
        let body: Vec<Element> = root.child_elements().cloned().collect();
        if body.is_empty() {
            return Err(XbaseError::Reflect(format!("fragment {name} wraps no element")));
        }
        let kind = if schema_ref.is_some() {
            FragmentKind::Root
        } else if body.len() == 1 && body[0].local_name() == "schema" {
            FragmentKind::Schema
        } else {
            FragmentKind::Element
        };
        Ok(Fragment { name, schema_ref, body, kind })
    }
}

/// Read-only source of fragments consulted when a reference is not among
/// the fragments given to reflect.
pub trait FragmentResolver {
    fn resolve(&self, name: &Name) -> Result<Option<Fragment>>;
}

/// Resolves nothing; reflect then requires a self-contained fragment set.
pub struct NoResolver;

impl FragmentResolver for NoResolver {
    fn resolve(&self, _name: &Name) -> Result<Option<Fragment>> {
        Ok(None)
    }
}

/// An in-memory fragment set.
pub struct SetResolver {
    fragments: HashMap<Name, Fragment>,
}

impl SetResolver {
    pub fn new(fragments: impl IntoIterator<Item = Fragment>) -> SetResolver {
        SetResolver {
            fragments: fragments.into_iter().map(|f| (f.name.clone(), f)).collect(),
        }
    }
}

impl FragmentResolver for SetResolver {
    fn resolve(&self, name: &Name) -> Result<Option<Fragment>> {
        Ok(self.fragments.get(name).cloned())
    }
}

/// The namer-and-store chain: resolve the name to its latest key, present
/// the key to the store, parse the result as a fragment.
pub struct StoreResolver<'a> {
    pub store: &'a dyn Store,
    pub namer: &'a Namer,
}

impl FragmentResolver for StoreResolver<'_> {
    fn resolve(&self, name: &Name) -> Result<Option<Fragment>> {
        let key = match self.namer.lookup_latest(name) {
            Ok(key) => key,
            Err(XbaseError::NameNotFound(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let bits = self.store.get(&key)?;
        Ok(Some(Fragment::from_bits(&bits)?))
    }
}

// ---------------------------------------------------------------------------
// The entity
// ---------------------------------------------------------------------------

/// An XML document coupled with its granularity schema and the identity
/// map of its shredded nodes.
#[derive(Clone, Debug)]
pub struct XmlEntity {
    pub document: Document,
    pub schema: Option<Document>,
    pub id_map: IdMap,
}

impl XmlEntity {
    pub fn new(document: Document) -> XmlEntity {
        XmlEntity { document, schema: None, id_map: IdMap::default() }
    }

    pub fn with_schema(document: Document, schema: Document) -> XmlEntity {
        XmlEntity { document, schema: Some(schema), id_map: IdMap::default() }
    }
}

// ---------------------------------------------------------------------------
// Schema handling
// ---------------------------------------------------------------------------

/// Generates the default granularity: a schema declaring exactly the root
/// element, which yields zero cut points.
pub fn default_schema(document: &Document) -> Document {
    Document::new(
        Element::new("xsd:schema")
            .with_attr("xmlns:xsd", "http://www.w3.org/2001/XMLSchema")
            .with_child(Element::new("xsd:element").with_attr("name", &document.root.name)),
    )
}

/// Extracts the full document paths at which an element reference occurs,
/// expanding a ref inside a referenced element's definition at every usage
/// site. Supported constructs: `xsd:schema`, `xsd:element` (`name=` or
/// `ref=`), `xsd:complexType`, `xsd:sequence`; `minOccurs`/`maxOccurs` are
/// ignored. Anything else fails with a ReifyError naming the construct.
pub fn collect_ref_paths(schema: &Document) -> Result<BTreeSet<ElementPath>> {
    if schema.root.local_name() != "schema" {
        return Err(XbaseError::Reify(format!(
            "unsupported schema construct <{}>",
            schema.root.name
        )));
    }
    let defs = top_level_definitions(schema)?;
    let mut paths = BTreeSet::new();
    if let Some((root_name, root_def)) = defs.first() {
        let mut visiting = vec![root_name.clone()];
        expand_definition(
            root_def,
            &ElementPath::root(root_name.clone()),
            &defs,
            &mut paths,
            &mut visiting,
        )?;
    }
    Ok(paths)
}

fn top_level_definitions(schema: &Document) -> Result<IndexMap<String, Element>> {
    let mut defs = IndexMap::new();
    for child in schema.root.child_elements() {
        if child.local_name() != "element" {
            return Err(XbaseError::Reify(format!(
                "unsupported schema construct <{}>",
                child.name
            )));
        }
        let name = child.attr("name").ok_or_else(|| {
            XbaseError::Reify("top-level schema element without a name".into())
        })?;
        defs.insert(name.to_string(), child.clone());
    }
    Ok(defs)
}

/// Walks one element definition, recording ref paths under `at`.
fn expand_definition(
    def: &Element,
    at: &ElementPath,
    defs: &IndexMap<String, Element>,
    paths: &mut BTreeSet<ElementPath>,
    visiting: &mut Vec<String>,
) -> Result<()> {
    for child in def.child_elements() {
        match child.local_name() {
            "complexType" | "sequence" => {
                expand_definition(child, at, defs, paths, visiting)?;
            }
            "element" => {
                if let Some(referenced) = child.attr("ref") {
                    let path = at.child(referenced);
                    paths.insert(path.clone());
                    let target = defs.get(referenced).ok_or_else(|| {
                        XbaseError::Reify(format!(
                            "reference to undefined element {referenced:?}"
                        ))
                    })?;
                    if visiting.iter().any(|v| v == referenced) {
                        return Err(XbaseError::Reify(format!(
                            "recursive element reference {referenced:?}"
                        )));
                    }
                    visiting.push(referenced.to_string());
                    expand_definition(&target.clone(), &path, defs, paths, visiting)?;
                    visiting.pop();
                } else if let Some(name) = child.attr("name") {
                    expand_definition(child, &at.child(name), defs, paths, visiting)?;
                } else {
                    return Err(XbaseError::Reify(
                        "schema element without name or ref".into(),
                    ));
                }
            }
            other => {
                return Err(XbaseError::Reify(format!(
                    "unsupported schema construct <{other}>"
                )));
            }
        }
    }
    Ok(())
}

/// Validation within the supported subset: the document root must be the
/// first element the schema declares.
fn validate(document: &Document, schema: &Document) -> Result<()> {
    let defs = top_level_definitions(schema)?;
    let (root_name, _) = defs
        .first()
        .ok_or_else(|| XbaseError::Reify("schema declares no elements".into()))?;
    if *root_name != document.root.name {
        return Err(XbaseError::Reify(format!(
            "document root <{}> does not validate against schema root element <{root_name}>",
            document.root.name
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Reify
// ---------------------------------------------------------------------------

struct ShredContext<'a> {
    node_ip: &'a str,
    ref_paths: &'a BTreeSet<ElementPath>,
    counts: HashMap<ElementPath, usize>,
    live: HashSet<Locator>,
    fragments: Vec<Fragment>,
    id_map: &'a mut IdMap,
}

impl ShredContext<'_> {
    fn next_occurrence(&mut self, path: &ElementPath) -> usize {
        let count = self.counts.entry(path.clone()).or_insert(0);
        let occurrence = *count;
        *count += 1;
        occurrence
    }
}

/// Shreds the entity's document according to its schema (generating the
/// default schema when none is set) and returns the fragments: one per cut
/// point match, then the transformed root, then the schema. The entity's
/// id map is reused for stable names, extended at new locators and pruned
/// of dead ones.
pub fn reify_xml(entity: &mut XmlEntity, node_ip: &str) -> Result<Vec<Fragment>> {
    if entity.schema.is_none() {
        entity.schema = Some(default_schema(&entity.document));
    }
    let schema = entity.schema.clone().expect("schema was just ensured");
    validate(&entity.document, &schema)?;
    let ref_paths = collect_ref_paths(&schema)?;

    let mut ctx = ShredContext {
        node_ip,
        ref_paths: &ref_paths,
        counts: HashMap::new(),
        live: HashSet::new(),
        fragments: Vec::new(),
        id_map: &mut entity.id_map,
    };
    let root_path = ElementPath::root(&entity.document.root.name);
    let shredded = shred(entity.document.root.clone(), &root_path, &mut ctx);
    let Node::Element(transformed_root) = shredded else {
        unreachable!("the document root is never a cut point");
    };

    let root_locator = Locator { path: root_path.clone(), occurrence: 0 };
    let root_name = ctx.id_map.assign(root_locator.clone(), node_ip, SysIdKind::Root);
    ctx.live.insert(root_locator);
    let schema_name = Name::new(format!("{root_name}-schema")).expect("valid name");

    let ShredContext { live, fragments: mut emitted, id_map, .. } = ctx;
    id_map.retain_live(&live);
    emitted.push(Fragment {
        name: root_name,
        schema_ref: Some(schema_name.clone()),
        body: vec![transformed_root],
        kind: FragmentKind::Root,
    });
    emitted.push(Fragment {
        name: schema_name,
        schema_ref: None,
        body: vec![schema.root.clone()],
        kind: FragmentKind::Schema,
    });
    Ok(emitted)
}

/// Depth-first shredding. Occurrence indices are assigned in document
/// order; children are replaced before their parent is emitted, so nested
/// cut points shred deepest-first.
fn shred(mut el: Element, path: &ElementPath, ctx: &mut ShredContext<'_>) -> Node {
    let occurrence = ctx.next_occurrence(path);
    el.children = el
        .children
        .drain(..)
        .map(|child| match child {
            Node::Element(c) => {
                let child_path = path.child(&c.name);
                shred(c, &child_path, ctx)
            }
            text => text,
        })
        .collect();
    if ctx.ref_paths.contains(path) {
        let locator = Locator { path: path.clone(), occurrence };
        let name = ctx.id_map.assign(locator.clone(), ctx.node_ip, SysIdKind::Element);
        ctx.live.insert(locator);
        ctx.fragments.push(Fragment::new(name.clone(), el, FragmentKind::Element));
        Node::Element(Element::new(REF_TAG).with_attr("ref", name.as_str()))
    } else {
        Node::Element(el)
    }
}

// ---------------------------------------------------------------------------
// Reflect
// ---------------------------------------------------------------------------

/// Parses raw fragment bytes and reassembles the entity; any malformed
/// input fails the whole reflection.
pub fn reflect_xml(reps: &[BitString], resolver: &dyn FragmentResolver) -> Result<XmlEntity> {
    let fragments = reps.iter().map(Fragment::from_bits).collect::<Result<Vec<_>>>()?;
    reflect_fragments(fragments, resolver)
}

/// Reassembles an entity from fragments: locates the root fragment (the
/// one carrying `schemaRef`), substitutes every reference with the body of
/// the named fragment (given set first, then the resolver), and rebuilds
/// the id map from the substituted names.
pub fn reflect_fragments(
    fragments: Vec<Fragment>,
    resolver: &dyn FragmentResolver,
) -> Result<XmlEntity> {
    let root = fragments
        .iter()
        .find(|f| f.schema_ref.is_some())
        .cloned()
        .ok_or_else(|| XbaseError::Reflect("no root fragment among the given".into()))?;
    let mut given: HashMap<Name, Fragment> = HashMap::new();
    for fragment in fragments {
        given.entry(fragment.name.clone()).or_insert(fragment);
    }

    let schema_name = root.schema_ref.clone().expect("root fragment carries schemaRef");
    let schema_fragment = lookup_fragment(&schema_name, &given, resolver)?;
    let schema_body = single_body(&schema_fragment)?;
    let schema = Document::new(schema_body.clone());

    let mut document_root = single_body(&root)?.clone();
    let mut ctx = AssembleContext {
        given: &given,
        resolver,
        counts: HashMap::new(),
        id_map: IdMap::default(),
        expanding: vec![root.name.clone()],
    };
    let root_path = ElementPath::root(&document_root.name);
    ctx.next_occurrence(&root_path);
    ctx.id_map
        .observe(Locator { path: root_path.clone(), occurrence: 0 }, root.name.clone());
    substitute(&mut document_root, &root_path, &mut ctx)?;

    Ok(XmlEntity {
        document: Document::new(document_root),
        schema: Some(schema),
        id_map: ctx.id_map,
    })
}

struct AssembleContext<'a> {
    given: &'a HashMap<Name, Fragment>,
    resolver: &'a dyn FragmentResolver,
    counts: HashMap<ElementPath, usize>,
    id_map: IdMap,
    /// Names currently being expanded; a repeat is a reference cycle.
    expanding: Vec<Name>,
}

impl AssembleContext<'_> {
    fn next_occurrence(&mut self, path: &ElementPath) -> usize {
        let count = self.counts.entry(path.clone()).or_insert(0);
        let occurrence = *count;
        *count += 1;
        occurrence
    }
}

fn lookup_fragment(
    name: &Name,
    given: &HashMap<Name, Fragment>,
    resolver: &dyn FragmentResolver,
) -> Result<Fragment> {
    if let Some(fragment) = given.get(name) {
        return Ok(fragment.clone());
    }
    resolver
        .resolve(name)?
        .ok_or_else(|| XbaseError::Reflect(format!("unresolved reference {name}")))
}

fn single_body(fragment: &Fragment) -> Result<&Element> {
    if fragment.body.len() != 1 {
        return Err(XbaseError::Reflect(format!(
            "fragment {} wraps {} elements, expected exactly one",
            fragment.name,
            fragment.body.len()
        )));
    }
    Ok(&fragment.body[0])
}

fn substitute(el: &mut Element, path: &ElementPath, ctx: &mut AssembleContext<'_>) -> Result<()> {
    for slot in el.children.iter_mut() {
        let Node::Element(child) = slot else { continue };
        if is_ref_tag(&child.name) {
            let name = child
                .attr("ref")
                .ok_or_else(|| XbaseError::Reflect("reference without ref attribute".into()))
                .and_then(|v| Name::new(v).map_err(|e| XbaseError::Reflect(e.to_string())))?;
            if ctx.expanding.contains(&name) {
                return Err(XbaseError::Reflect(format!("reference cycle through {name}")));
            }
            let fragment = lookup_fragment(&name, ctx.given, ctx.resolver)?;
            let body = single_body(&fragment)?.clone();
            *slot = Node::Element(body);
            let Node::Element(substituted) = slot else { unreachable!() };
            let child_path = path.child(&substituted.name);
            let occurrence = ctx.next_occurrence(&child_path);
            ctx.id_map
                .observe(Locator { path: child_path.clone(), occurrence }, name.clone());
            ctx.expanding.push(name);
            substitute(substituted, &child_path, ctx)?;
            ctx.expanding.pop();
        } else {
            let child_path = path.child(&child.name);
            ctx.next_occurrence(&child_path);
            substitute(child, &child_path, ctx)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Store, retrieve and update pipelines
// ---------------------------------------------------------------------------

/// Puts content, treating "already present" as success with the existing
/// key. Returns whether the blob was new.
pub fn put_or_existing(store: &dyn Store, bits: &BitString) -> Result<(Key, bool)> {
    match store.put(bits) {
        Ok(key) => Ok((key, true)),
        Err(XbaseError::KeyExists(key)) => Ok((key, false)),
        Err(e) => Err(e),
    }
}

/// Puts every fragment and binds its name to the resulting key.
pub fn store_fragments(
    fragments: &[Fragment],
    store: &dyn Store,
    namer: &Namer,
) -> Result<()> {
    for fragment in fragments {
        let (key, _) = put_or_existing(store, &fragment.to_bits())?;
        namer.bind(&fragment.name, key);
    }
    Ok(())
}

/// Reifies the entity, stores every fragment (duplicates are already
/// present and kept as-is), binds each fragment name, and returns the root
/// fragment's name.
pub fn store_xml_entity(
    entity: &mut XmlEntity,
    store: &dyn Store,
    namer: &Namer,
    node_ip: &str,
) -> Result<Name> {
    let fragments = reify_xml(entity, node_ip)?;
    store_fragments(&fragments, store, namer)?;
    let root = fragments
        .iter()
        .find(|f| f.kind == FragmentKind::Root)
        .expect("reify always emits a root fragment");
    Ok(root.name.clone())
}

/// Resolves the recorded root name to its latest version, fetches the root
/// and schema fragments, and reflects the document with the namer-and-store
/// resolver supplying everything else.
pub fn get_xml_entity(root_name: &Name, store: &dyn Store, namer: &Namer) -> Result<XmlEntity> {
    let key = namer.lookup_latest(root_name)?;
    let root = Fragment::from_bits(&store.get(&key)?)?;
    let schema_name = root.schema_ref.clone().ok_or_else(|| {
        XbaseError::Reflect(format!("fragment {root_name} is not a root fragment"))
    })?;
    let schema_key = namer.lookup_latest(&schema_name)?;
    let schema = Fragment::from_bits(&store.get(&schema_key)?)?;
    reflect_fragments(vec![root, schema], &StoreResolver { store, namer })
}

/// How an update decides which fragments changed.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum UpdateStrategy {
    /// Present every fragment to the store; a KeyExists complaint means the
    /// fragment is unchanged.
    StoreFeedback,
    /// Fetch the prior fragment bytes through the namer and compare before
    /// putting.
    SourceCompare,
}

impl FromStr for UpdateStrategy {
    type Err = XbaseError;

    fn from_str(s: &str) -> Result<UpdateStrategy> {
        match s {
            "store-feedback" => Ok(UpdateStrategy::StoreFeedback),
            "source-compare" => Ok(UpdateStrategy::SourceCompare),
            other => Err(XbaseError::Interpretation(format!(
                "unknown update strategy {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UpdateReport {
    /// Number of fragments whose representation changed.
    pub new_fragments: usize,
    /// Names rebound to a fresh version, in fragment order.
    pub rebound: Vec<Name>,
}

/// Re-reifies a previously stored entity with stable ids and records only
/// the changed fragments: new blobs are stored and their names rebound
/// with a fresh version. Both strategies select the same changed set.
pub fn update_xml_entity(
    entity: &mut XmlEntity,
    store: &dyn Store,
    namer: &Namer,
    strategy: UpdateStrategy,
    node_ip: &str,
) -> Result<UpdateReport> {
    let fragments = reify_xml(entity, node_ip)?;
    update_fragments(&fragments, store, namer, strategy)
}

pub fn update_fragments(
    fragments: &[Fragment],
    store: &dyn Store,
    namer: &Namer,
    strategy: UpdateStrategy,
) -> Result<UpdateReport> {
    let mut rebound = Vec::new();
    for fragment in fragments {
        let bits = fragment.to_bits();
        let changed_key = match strategy {
            UpdateStrategy::StoreFeedback => match store.put(&bits) {
                Ok(key) => Some(key),
                Err(XbaseError::KeyExists(_)) => None,
                Err(e) => return Err(e),
            },
            UpdateStrategy::SourceCompare => {
                let prior = match namer.lookup_latest(&fragment.name) {
                    Ok(key) => Some(store.get(&key)?),
                    Err(XbaseError::NameNotFound(_)) => None,
                    Err(e) => return Err(e),
                };
                if prior.as_ref() == Some(&bits) {
                    None
                } else {
                    Some(put_or_existing(store, &bits)?.0)
                }
            }
        };
        if let Some(key) = changed_key {
            namer.bind_versioned(&VersionTuple::now(fragment.name.clone()), key);
            rebound.push(fragment.name.clone());
        }
    }
    Ok(UpdateReport { new_fragments: rebound.len(), rebound })
}

impl<'a> StoreResolver<'a> {
    pub fn new(store: &'a dyn Store, namer: &'a Namer) -> StoreResolver<'a> {
        StoreResolver { store, namer }
    }
}
