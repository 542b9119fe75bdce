use super::*;
use crate::store::{BlobDirStore, StoreHandle};
use crate::xml::canonical;
use crate::xmlfrag::NoResolver;

const IP: &str = "192.0.0.1";

/// The person/address pair: a Person whose `address` field references an
/// Address instance.
fn person_graph() -> RecordGraph {
    let mut graph = RecordGraph::new();
    let person = NodeId::new("p");
    let address = NodeId::new("a");
    graph.insert(
        RecordNode::new(person, "person")
            .with_field(Field::text("name", "java.lang.String", "Vangelis"))
            .with_field(Field::reference("address", "Address", address.clone())),
    );
    graph.insert(
        RecordNode::new(address, "address")
            .with_field(Field::text("address", "java.lang.String", "St Andrews")),
    );
    graph
}

fn temp_store(dir: &tempfile::TempDir) -> StoreHandle {
    StoreHandle::BlobDir(BlobDirStore::create(&[dir.path().join("store")]).unwrap())
}

fn blob_count(store: &StoreHandle) -> usize {
    match store {
        StoreHandle::BlobDir(s) => s.keys().len(),
        _ => unreachable!(),
    }
}

/// Brute-force reachability oracle: nodes reachable from the root plus the
/// distinct `(type, payload)` code pairs among them.
fn expected_fragment_count(graph: &RecordGraph) -> usize {
    let mut seen = std::collections::HashSet::new();
    let mut code = std::collections::HashSet::new();
    let mut stack = vec![graph.root.clone().unwrap()];
    while let Some(id) = stack.pop() {
        if !seen.insert(id.clone()) {
            continue;
        }
        let node = graph.node(&id).unwrap();
        if let Some(payload) = &node.code {
            code.insert((node.type_name.clone(), payload.clone()));
        }
        for field in &node.fields {
            if let FieldValue::Reference(target) = &field.value {
                stack.push(target.clone());
            }
        }
    }
    seen.len() + code.len()
}

/// Structural signature for isomorphism checks: nodes in discovery order
/// with references replaced by discovery indices.
type NodeSignature = (String, Vec<(String, String, String)>, Option<BitString>);

fn signature(graph: &RecordGraph) -> Vec<NodeSignature> {
    let mut index: HashMap<NodeId, usize> = HashMap::new();
    let mut order = Vec::new();
    let mut stack = vec![graph.root.clone().unwrap()];
    while let Some(id) = stack.pop() {
        if index.contains_key(&id) {
            continue;
        }
        index.insert(id.clone(), index.len());
        order.push(id.clone());
        let node = graph.node(&id).unwrap();
        for field in node.fields.iter().rev() {
            if let FieldValue::Reference(target) = &field.value {
                stack.push(target.clone());
            }
        }
    }
    // Second sweep now that every reachable node has an index.
    order
        .iter()
        .map(|id| {
            let node = graph.node(id).unwrap();
            let fields = node
                .fields
                .iter()
                .map(|f| {
                    let value = match &f.value {
                        FieldValue::Text(t) => format!("text:{t}"),
                        FieldValue::Reference(r) => format!("ref:{}", index[r]),
                    };
                    (f.name.clone(), f.declared_type.clone(), value)
                })
                .collect();
            (node.type_name.clone(), fields, node.code.clone())
        })
        .collect()
}

#[test]
fn person_address_reifies_to_two_fragments_in_the_skeleton_shape() {
    let mut graph = person_graph();
    let fragments = reify_graph(&mut graph, IP).unwrap();
    assert_eq!(fragments.len(), 2);

    let person = &fragments[0];
    assert_eq!(person.name.as_str(), "192.0.0.1-person-1");
    let text = canonical(&person.to_document());
    assert!(text.contains("<name>name</name>"), "{text}");
    assert!(text.contains("<type>java.lang.String</type>"), "{text}");
    assert!(text.contains("<value>Vangelis</value>"), "{text}");
    assert!(text.contains("<XBaseRef ref=\"192.0.0.1-address-1\"/>"), "{text}");
    assert!(text.contains("<field1>") && text.contains("<field2>"), "{text}");

    let address = &fragments[1];
    assert_eq!(address.name.as_str(), "192.0.0.1-address-1");
    let text = canonical(&address.to_document());
    assert!(text.contains("<value>St Andrews</value>"), "{text}");
}

#[test]
fn round_trip_preserves_the_person_graph() {
    let mut graph = person_graph();
    let fragments = reify_graph(&mut graph, IP).unwrap();
    let reflected = reflect_graph(fragments, &NoResolver).unwrap();
    assert_eq!(signature(&reflected), signature(&graph));
}

#[test]
fn cycles_terminate_and_round_trip() {
    let mut graph = RecordGraph::new();
    let a = NodeId::new("a");
    let b = NodeId::new("b");
    graph.insert(RecordNode::new(a.clone(), "ping").with_field(Field::reference(
        "next",
        "Pong",
        b.clone(),
    )));
    graph.insert(RecordNode::new(b, "pong").with_field(Field::reference("next", "Ping", a)));
    let fragments = reify_graph(&mut graph, IP).unwrap();
    assert_eq!(fragments.len(), 2);
    let reflected = reflect_graph(fragments, &NoResolver).unwrap();
    assert_eq!(signature(&reflected), signature(&graph));
    // The cycle is really there: a -> b -> a.
    let root = reflected.root.clone().unwrap();
    let FieldValue::Reference(to_b) = &reflected.node(&root).unwrap().fields[0].value else {
        panic!("root field must be a reference");
    };
    let FieldValue::Reference(back) = &reflected.node(to_b).unwrap().fields[0].value else {
        panic!("b field must be a reference");
    };
    assert_eq!(back, &root);
}

#[test]
fn diamond_sharing_emits_the_shared_node_once() {
    let mut graph = RecordGraph::new();
    let (root, x, y, z) =
        (NodeId::new("r"), NodeId::new("x"), NodeId::new("y"), NodeId::new("z"));
    graph.insert(
        RecordNode::new(root, "root")
            .with_field(Field::reference("left", "X", x.clone()))
            .with_field(Field::reference("right", "Y", y.clone())),
    );
    graph.insert(RecordNode::new(x, "x").with_field(Field::reference("z", "Z", z.clone())));
    graph.insert(RecordNode::new(y, "y").with_field(Field::reference("z", "Z", z.clone())));
    graph.insert(RecordNode::new(z.clone(), "z").with_field(Field::text("v", "int", "7")));

    let mut expected = expected_fragment_count(&graph);
    assert_eq!(expected, 4);
    let fragments = reify_graph(&mut graph, IP).unwrap();
    assert_eq!(fragments.len(), expected);

    let reflected = reflect_graph(fragments, &NoResolver).unwrap();
    assert_eq!(signature(&reflected), signature(&graph));
    // Aliasing preserved: both parents reference the same rebuilt node.
    let rr = reflected.root.clone().unwrap();
    let get_ref = |id: &NodeId, i: usize| match &reflected.node(id).unwrap().fields[i].value {
        FieldValue::Reference(t) => t.clone(),
        _ => panic!("expected reference"),
    };
    let (xx, yy) = (get_ref(&rr, 0), get_ref(&rr, 1));
    assert_eq!(get_ref(&xx, 0), get_ref(&yy, 0));
    expected = reflected.nodes.len();
    assert_eq!(expected, 4);
}

#[test]
fn unreachable_nodes_are_not_reified() {
    let mut graph = person_graph();
    graph.insert(RecordNode::new(NodeId::new("orphan"), "orphan"));
    let fragments = reify_graph(&mut graph, IP).unwrap();
    assert_eq!(fragments.len(), 2);
}

#[test]
fn code_payloads_become_their_own_fragments() {
    let mut graph = person_graph();
    let payload = BitString::from(b"\xCA\xFE\xBA\xBEopaque class bytes".as_slice());
    graph.node_mut(&NodeId::new("p")).unwrap().code = Some(payload.clone());
    let fragments = reify_graph(&mut graph, IP).unwrap();
    assert_eq!(fragments.len(), expected_fragment_count(&graph));
    assert_eq!(fragments.len(), 3);
    let code = &fragments[2];
    assert_eq!(code.name.as_str(), "192.0.0.1-class_person-1");
    let text = canonical(&code.to_document());
    assert!(text.contains("<className>person</className>"), "{text}");

    // The person fragment names its code fragment.
    let person = canonical(&fragments[0].to_document());
    assert!(person.contains("<code>192.0.0.1-class_person-1</code>"), "{person}");

    // Payload returns byte-identical after reflection; never executed.
    let reflected = reflect_graph(fragments, &NoResolver).unwrap();
    let root = reflected.root.clone().unwrap();
    assert_eq!(reflected.node(&root).unwrap().code.as_ref(), Some(&payload));
}

#[test]
fn shared_code_payload_is_stored_once() {
    let mut graph = RecordGraph::new();
    let payload = BitString::from(b"shared class".as_slice());
    let (a, b) = (NodeId::new("a"), NodeId::new("b"));
    let mut node_a = RecordNode::new(a, "person").with_field(Field::reference(
        "peer",
        "Person",
        b.clone(),
    ));
    node_a.code = Some(payload.clone());
    let mut node_b = RecordNode::new(b, "person");
    node_b.code = Some(payload);
    graph.insert(node_a);
    graph.insert(node_b);
    let fragments = reify_graph(&mut graph, IP).unwrap();
    assert_eq!(fragments.len(), expected_fragment_count(&graph));
    assert_eq!(fragments.len(), 3);
}

#[test]
fn missing_reference_is_a_reflect_error() {
    let mut graph = person_graph();
    let fragments = reify_graph(&mut graph, IP).unwrap();
    let person_only = vec![fragments[0].clone()];
    match reflect_graph(person_only, &NoResolver) {
        Err(XbaseError::Reflect(msg)) => assert!(msg.contains("address"), "{msg}"),
        other => panic!("expected ReflectError, got {other:?}"),
    }
}

#[test]
fn rootless_graph_fails_reification() {
    let mut graph = RecordGraph::new();
    assert!(matches!(reify_graph(&mut graph, IP), Err(XbaseError::Reify(_))));
}

#[test]
fn store_get_update_pipeline_mutates_one_blob_per_field_edit() {
    for strategy in [UpdateStrategy::StoreFeedback, UpdateStrategy::SourceCompare] {
        let dir = tempfile::tempdir().unwrap();
        let store = temp_store(&dir);
        let namer = Namer::new();
        let mut graph = person_graph();

        let root_name = store_record_graph(&mut graph, &store, &namer, IP).unwrap();
        assert_eq!(root_name.as_str(), "192.0.0.1-person-1");
        assert_eq!(blob_count(&store), 2);

        let fetched = get_record_graph(&root_name, &store, &namer).unwrap();
        assert_eq!(signature(&fetched), signature(&graph));

        // Mutate one primitive field on the fetched copy and update.
        let mut edited = fetched;
        let root = edited.root.clone().unwrap();
        edited.node_mut(&root).unwrap().fields[0].value = FieldValue::Text("Evangelos".into());
        let report = update_record_graph(&mut edited, &store, &namer, strategy, IP).unwrap();
        assert_eq!(report.new_fragments, 1, "{strategy:?}");
        assert_eq!(report.rebound[0], root_name, "{strategy:?}");
        assert_eq!(blob_count(&store), 3, "{strategy:?}");

        let latest = get_record_graph(&root_name, &store, &namer).unwrap();
        let root = latest.root.clone().unwrap();
        assert_eq!(
            latest.node(&root).unwrap().fields[0].value,
            FieldValue::Text("Evangelos".into()),
            "{strategy:?}"
        );
    }
}

#[test]
fn base64_round_trips() {
    for input in [&b""[..], b"a", b"ab", b"abc", b"\x00\xff\x10"] {
        let encoded = base64_encode(input);
        assert_eq!(base64_decode(&encoded).unwrap(), input);
    }
    assert!(base64_decode("not base64!!").is_none());
}
