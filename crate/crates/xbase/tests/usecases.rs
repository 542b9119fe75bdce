//! Scenario tests composing the components end to end: root store usage,
//! namers and interpreters around it, stores as data, proxy roots, remote
//! hosts, request redirection, and the XML persistence pipelines.

use std::sync::Arc;

use xbase::codecs::{self, Caster, StoreCaster};
use xbase::model::{derive_key, BitString, Key, Name};
use xbase::netd::{self, RemoteUrl, Registry};
use xbase::runtime::{RootStoreKind, Runtime};
use xbase::samples;
use xbase::store::{BlobDirStore, Store, StoreHandle, Target};
use xbase::xml::{self, canonical};
use xbase::xmlfrag::{self, reflect_xml, reify_xml, Fragment, UpdateStrategy, XmlEntity};
use xbase::XbaseError;

/// The person representation used across the scenarios: name and age as text.
fn person_rep(name: &str, age: u32) -> BitString {
    BitString::from(format!("{name},{age}").into_bytes())
}

fn members_entity() -> XmlEntity {
    XmlEntity::with_schema(
        xml::parse(samples::MEMBERS_XML).unwrap(),
        xml::parse(samples::MEMBERS_GRANULARITY_SCHEMA).unwrap(),
    )
}

// UC1: create an entity, add it to the root store, retrieve it with the
// recorded key.
#[test]
fn uc1_root_store_put_and_get_by_key() {
    let home = tempfile::tempdir().unwrap();
    let runtime = Runtime::with_home(home.path(), RootStoreKind::Local);
    let root = runtime.root_store().unwrap();
    let graham = person_rep("Graham", 35);
    let graham_key = root.put(&graham).unwrap();

    // Later, through the root store again.
    let root_again = runtime.root_store().unwrap();
    let reflected = root_again.get(&graham_key).unwrap();
    assert_eq!(reflected, graham);
}

// UC2: encrypt an entity, add it to the root store, record the name, then
// resolve the name through a namer retrieved from the store itself.
#[test]
fn uc2_namer_and_encryption_around_the_root_store() {
    let home = tempfile::tempdir().unwrap();
    let runtime = Runtime::with_home(home.path(), RootStoreKind::Local);
    let root = runtime.root_store().unwrap();
    let namer = runtime.root_namer().unwrap();

    let vangelis = person_rep("Vangelis", 29);
    let encrypted = codecs::interpret_invert(&vangelis);
    let vangelis_key = root.put(&encrypted).unwrap();
    namer.bind(&Name::new("Vangelis").unwrap(), vangelis_key);
    let namer_key = root.put(&codecs::namer_reify(&namer).unwrap()).unwrap();

    // Retrieval: reflect the namer, find the key by name, decrypt.
    let reflected_namer = codecs::namer_reflect(&root.get(&namer_key).unwrap()).unwrap();
    let keys = reflected_namer.lookup(&Name::new("Vangelis").unwrap()).unwrap();
    let rep = root.get(&keys[0]).unwrap();
    let decrypted = codecs::interpret_invert(&rep);
    assert_eq!(decrypted, person_rep("Vangelis", 29));
}

// UC3: representations of different entity kinds all live in one root
// store; the duplicate-put complaint is the dedup signal.
#[test]
fn uc3_mixed_entity_kinds_in_one_store() {
    let home = tempfile::tempdir().unwrap();
    let runtime = Runtime::with_home(home.path(), RootStoreKind::Local);
    let root = runtime.root_store().unwrap();

    let word_doc = BitString::from(b"\xD0\xCF\x11\xE0 word bytes".as_slice());
    let audio_clip = BitString::from(b"RIFF....WAVE audio bytes".as_slice());
    let image = BitString::from(b"GIF89a image bytes".as_slice());
    let xml_doc = BitString::from(samples::MEMBERS_XML.as_bytes().to_vec());

    let mut keys: Vec<Key> = Vec::new();
    for rep in [&word_doc, &audio_clip, &image, &xml_doc] {
        keys.push(root.put(rep).unwrap());
    }
    for (key, rep) in keys.iter().zip([&word_doc, &audio_clip, &image, &xml_doc]) {
        assert_eq!(&root.get(key).unwrap(), rep);
    }
    assert!(matches!(root.put(&image), Err(XbaseError::KeyExists(k)) if k == keys[2]));
}

// UC4: a local store is itself an entity: reify it, store the
// representation in the root store, reflect it later and read through it.
#[test]
fn uc4_store_stored_in_a_store() {
    let home = tempfile::tempdir().unwrap();
    let runtime = Runtime::with_home(home.path(), RootStoreKind::Local);
    let root = runtime.root_store().unwrap();

    let my_local = Arc::new(StoreHandle::BlobDir(
        BlobDirStore::create(&[home.path().join("my-local")]).unwrap(),
    ));
    let xml_rep = BitString::from(samples::MEMBERS_XML.as_bytes().to_vec());
    let xml_key = my_local.put(&xml_rep).unwrap();

    let caster = StoreCaster;
    let store_rep = caster.reify(&my_local).unwrap();
    let store_key = root.put(&store_rep).unwrap();

    // Retrieval: reflect the stored store and get the document through it.
    let reflected_store = caster.reflect(&root.get(&store_key).unwrap()).unwrap();
    assert_eq!(reflected_store.get(&xml_key).unwrap(), xml_rep);
}

// UC5: the root store is a proxy; a shareable local store added as a
// target answers the get through the root.
#[test]
fn uc5_proxy_root_store_with_a_local_target() {
    let home = tempfile::tempdir().unwrap();
    let runtime = Runtime::with_home(home.path(), RootStoreKind::Proxy);
    let root = runtime.root_store().unwrap();
    let proxy = root.as_proxy().expect("proxy root store");

    let my_local = Arc::new(StoreHandle::BlobDir(
        BlobDirStore::create(&[home.path().join("shared")]).unwrap(),
    ));
    runtime.set_shareable(&my_local, true);
    let xml_rep = BitString::from(samples::MEMBERS_XML.as_bytes().to_vec());
    let xml_key = my_local.put(&xml_rep).unwrap();
    proxy.add_target(Target::Embedded(my_local));

    assert_eq!(root.get(&xml_key).unwrap(), xml_rep);
}

// UC6: a proxy on one host forwards puts and gets to the shareable stores
// of another host.
#[test]
fn uc6_remote_store_operations() {
    let dir = tempfile::tempdir().unwrap();

    // ouzo: a shareable local store served by a daemon.
    let ouzo_registry = Registry::new();
    let ouzo_store = Arc::new(StoreHandle::BlobDir(
        BlobDirStore::create(&[dir.path().join("ouzo")]).unwrap(),
    ));
    ouzo_registry.set_shareable(&ouzo_store, true);
    let ouzo = netd::serve(ouzo_registry, 0).unwrap();

    let vangelis_image = BitString::from(b"GIF89a vangelis".as_slice());
    let vangelis_key = ouzo_store.put(&vangelis_image).unwrap();

    // tsipouro: a proxy aware of every shareable store on ouzo.
    let proxy = xbase::store::ProxyStore::new();
    proxy.add_target(Target::Remote(RemoteUrl::new("127.0.0.1", ouzo.port())));

    // The proxy has no local targets, so the put lands on ouzo.
    let graham_image = BitString::from(b"GIF89a graham".as_slice());
    let graham_key = proxy.put(&graham_image).unwrap();
    assert_eq!(ouzo_store.get(&graham_key).unwrap(), graham_image);

    // Both representations come back to tsipouro.
    assert_eq!(proxy.get(&vangelis_key).unwrap(), vangelis_image);
    assert_eq!(proxy.get(&graham_key).unwrap(), graham_image);
}

// UC7: requests are redirected across three hosts; the far store answers.
#[test]
fn uc7_redirection_across_three_hosts() {
    let dir = tempfile::tempdir().unwrap();

    let panda_registry = Registry::new();
    let panda_store = Arc::new(StoreHandle::BlobDir(
        BlobDirStore::create(&[dir.path().join("panda")]).unwrap(),
    ));
    panda_registry.set_shareable(&panda_store, true);
    let panda = netd::serve(panda_registry, 0).unwrap();

    let ouzo_registry = Registry::new();
    let ouzo_proxy = xbase::store::ProxyStore::new();
    ouzo_proxy.add_target(Target::Remote(RemoteUrl::new("127.0.0.1", panda.port())));
    let ouzo_store = Arc::new(StoreHandle::Proxy(ouzo_proxy));
    ouzo_registry.set_shareable(&ouzo_store, true);
    let ouzo = netd::serve(ouzo_registry, 0).unwrap();

    let tsipouro = xbase::store::ProxyStore::new();
    tsipouro.add_target(Target::Remote(RemoteUrl::new("127.0.0.1", ouzo.port())));

    let xml_rep = BitString::from(samples::MEMBERS_XML.as_bytes().to_vec());
    let xml_key = tsipouro.put(&xml_rep).unwrap();
    assert_eq!(xml_key, derive_key(&xml_rep));
    assert_eq!(panda_store.get(&xml_key).unwrap(), xml_rep);
    assert_eq!(tsipouro.get(&xml_key).unwrap(), xml_rep);
}

// XML UC1: the caller keeps all the keys; the caster is given every
// fragment back for reflection.
#[test]
fn xml_uc1_store_and_retrieve_by_keys() {
    let home = tempfile::tempdir().unwrap();
    let runtime = Runtime::with_home(home.path(), RootStoreKind::Proxy);
    let root = runtime.root_store().unwrap();
    let local = Arc::new(StoreHandle::BlobDir(
        BlobDirStore::create(&[home.path().join("local")]).unwrap(),
    ));
    runtime.set_shareable(&local, true);
    root.as_proxy().unwrap().add_target(Target::Embedded(local));

    let mut entity = members_entity();
    let original = canonical(&entity.document);
    let fragments = reify_xml(&mut entity, "127.0.0.1").unwrap();
    let keys: Vec<Key> =
        fragments.iter().map(|f| root.put(&f.to_bits()).unwrap()).collect();

    let reps: Vec<BitString> = keys.iter().map(|k| root.get(k).unwrap()).collect();
    let retrieved = reflect_xml(&reps, &xbase::xmlfrag::NoResolver).unwrap();
    assert_eq!(canonical(&retrieved.document), original);
}

// XML UC2: the caller remembers one name; everything else resolves through
// the root namer and root store, surviving a restart via stabilisation.
#[test]
fn xml_uc2_store_and_retrieve_by_recorded_name() {
    let home = tempfile::tempdir().unwrap();
    let recorded_name;
    let original;
    {
        let runtime = Runtime::with_home(home.path(), RootStoreKind::Proxy);
        let root = runtime.root_store().unwrap();
        let local = Arc::new(StoreHandle::BlobDir(
            BlobDirStore::create(&[home.path().join("local")]).unwrap(),
        ));
        runtime.set_shareable(&local, true);
        root.as_proxy().unwrap().add_target(Target::Embedded(local));
        let namer = runtime.root_namer().unwrap();

        let mut entity = members_entity();
        original = canonical(&entity.document);
        recorded_name =
            xmlfrag::store_xml_entity(&mut entity, root.as_ref(), &namer, "127.0.0.1").unwrap();
        runtime.stabilise().unwrap();
    }
    // A fresh runtime over the same home: restart.
    let runtime = Runtime::with_home(home.path(), RootStoreKind::Proxy);
    let root = runtime.root_store().unwrap();
    let namer = runtime.root_namer().unwrap();
    let entity = xmlfrag::get_xml_entity(&recorded_name, root.as_ref(), &namer).unwrap();
    assert_eq!(canonical(&entity.document), original);
}

// XML UC3: retrieve by name, modify, update; only modified or new
// fragments reach the store, and retrieval sees the edit.
#[test]
fn xml_uc3_versioned_update_by_name() {
    let home = tempfile::tempdir().unwrap();
    let runtime = Runtime::with_home(home.path(), RootStoreKind::Local);
    let root = runtime.root_store().unwrap();
    let namer = runtime.root_namer().unwrap();

    let mut entity = members_entity();
    let name = xmlfrag::store_xml_entity(&mut entity, root.as_ref(), &namer, "127.0.0.1").unwrap();
    runtime.stabilise().unwrap();

    // Retrieve, change the age, update.
    let mut fetched = xmlfrag::get_xml_entity(&name, root.as_ref(), &namer).unwrap();
    let text = canonical(&fetched.document).replace("<age>29</age>", "<age>30</age>");
    fetched.document = xml::parse(&text).unwrap();
    let report = xmlfrag::update_xml_entity(
        &mut fetched,
        root.as_ref(),
        &namer,
        UpdateStrategy::StoreFeedback,
        "127.0.0.1",
    )
    .unwrap();
    assert_eq!(report.new_fragments, 1);
    runtime.stabilise().unwrap();

    let latest = xmlfrag::get_xml_entity(&name, root.as_ref(), &namer).unwrap();
    assert!(canonical(&latest.document).contains("<age>30</age>"));
    // The namer still resolves the previous version of the edited fragment.
    let edited = &report.rebound[0];
    assert_eq!(namer.lookup(edited).unwrap().len(), 2);
}

// A reflected fragment set equals its source even when only the root and
// schema travel and the resolver supplies the rest from the store.
#[test]
fn fragments_resolve_through_the_namer_chain() {
    let home = tempfile::tempdir().unwrap();
    let runtime = Runtime::with_home(home.path(), RootStoreKind::Local);
    let root = runtime.root_store().unwrap();
    let namer = runtime.root_namer().unwrap();

    let mut entity = members_entity();
    let original = canonical(&entity.document);
    let name = xmlfrag::store_xml_entity(&mut entity, root.as_ref(), &namer, "127.0.0.1").unwrap();

    let root_key = namer.lookup_latest(&name).unwrap();
    let root_fragment = Fragment::from_bits(&root.get(&root_key).unwrap()).unwrap();
    let schema_name = root_fragment.schema_ref.clone().unwrap();
    let schema_key = namer.lookup_latest(&schema_name).unwrap();
    let schema_fragment = Fragment::from_bits(&root.get(&schema_key).unwrap()).unwrap();

    let resolver = xbase::xmlfrag::StoreResolver { store: root.as_ref(), namer: &namer };
    let entity = xbase::xmlfrag::reflect_fragments(
        vec![root_fragment, schema_fragment],
        &resolver,
    )
    .unwrap();
    assert_eq!(canonical(&entity.document), original);
}
