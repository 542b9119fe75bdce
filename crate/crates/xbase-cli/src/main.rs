//! `xbase` — command-line surface over the storage toolkit.
//!
//! Configuration precedence: flags > environment (`XBASE_HOME`,
//! `XBASE_NODE_IP`, `XBASE_ROOT_STORE_KIND`, `XBASE_PORT`) > defaults.
//! Keys and names pass on the command line as text; bytes travel via stdin,
//! stdout and files. Failures exit with the error-kind code (10..=21) and a
//! message naming the kind.

mod graphfile;

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use xbase::codecs;
use xbase::model::{parse_key, BitString, Name, StoreId};
use xbase::netd::{self, RemoteUrl, RequestId, DEFAULT_HOP_BUDGET, DEFAULT_PORT};
use xbase::runtime::{Runtime, RuntimeConfig};
use xbase::store::{BlobDirStore, Store, StoreHandle, Target};
use xbase::xml;
use xbase::xmlfrag::{
    self, reflect_xml, reify_xml, Fragment, NoResolver, UpdateStrategy, XmlEntity,
};
use xbase::{recordcast, XbaseError};

#[derive(Parser)]
#[command(name = "xbase", version, about = "Content-addressed, append-only storage toolkit")]
struct Cli {
    /// Home directory holding the persistence roots.
    #[arg(long, global = true, env = "XBASE_HOME", default_value = "./xbase-home")]
    home: PathBuf,

    /// Address embedded in system-generated fragment names.
    #[arg(long, global = true, env = "XBASE_NODE_IP", default_value = "127.0.0.1")]
    node_ip: String,

    /// Kind of a freshly created root store: "local" or "proxy".
    #[arg(long, global = true, env = "XBASE_ROOT_STORE_KIND", default_value = "local")]
    root_store_kind: String,

    /// Daemon port used by `serve`.
    #[arg(long, global = true, env = "XBASE_PORT", default_value_t = DEFAULT_PORT)]
    port: u16,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Put bytes (stdin or --file) into the root store and print the key.
    Put {
        #[arg(long)]
        file: Option<PathBuf>,
        /// Interpreter applied before storing (e.g. "invert").
        #[arg(long)]
        encrypt: Option<String>,
        /// Send to a remote daemon instead of the root store.
        #[arg(long)]
        url: Option<String>,
    },
    /// Get the bytes stored under a key and write them to stdout or --out.
    Get {
        key: String,
        /// Interpreter applied after retrieval (e.g. "invert").
        #[arg(long)]
        decrypt: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fetch from a remote daemon instead of the root store.
        #[arg(long)]
        url: Option<String>,
    },
    /// Print the root store's id.
    Id,
    /// Bind a name to a key in the root namer.
    Bind { name: String, key: String },
    /// Print the keys bound to a name, one per line.
    Lookup { name: String },
    /// Remove a name-to-key binding from the root namer.
    Unbind { name: String, key: String },
    /// Run the shareability daemon, serving this host's shareable stores.
    Serve,
    /// Switch a store's shareability on or off, locally or via --url.
    Share {
        store_id: String,
        #[arg(value_parser = ["on", "off"])]
        state: String,
        #[arg(long)]
        url: Option<String>,
    },
    /// Edit the root proxy store's target list.
    Target {
        #[command(subcommand)]
        action: TargetAction,
    },
    /// Stabilise the persistence roots to the home directory.
    Stabilise,
    /// Shred an XML document into fragment files.
    Shred {
        file: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, default_value = "fragments")]
        out_dir: PathBuf,
    },
    /// Reassemble a document from fragment files (or a directory of them).
    Assemble {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shred an XML document and store the fragments under the root store
    /// and namer; prints the recorded root name.
    Xstore {
        file: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Retrieve a stored XML document by its recorded name.
    Xget {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Store only the changed fragments of an edited document.
    Xupdate {
        name: String,
        file: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, default_value = "store-feedback")]
        strategy: String,
    },
    /// Store a record graph (JSON file); prints the root node's name.
    Gstore { file: PathBuf },
    /// Retrieve a stored record graph as JSON.
    Gget {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fragmentation and update measurements over the sample document.
    Bench {
        #[command(subcommand)]
        what: BenchCommand,
    },
}

#[derive(Subcommand)]
enum TargetAction {
    /// Add a target: an http://host:port URL or a local store directory.
    Add { target: String },
    /// Remove the first matching target.
    Remove { target: String },
    /// Print the ordered target list.
    List,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Fragment counts and byte totals for the sample document.
    Xbasemembers,
    /// Changed-fragment counts per update strategy.
    Update {
        #[arg(long, default_value = "edit", value_parser = ["edit", "add", "delete", "noop"])]
        scenario: String,
    },
}

enum AppError {
    Xbase(XbaseError),
    Usage(String),
}

impl From<XbaseError> for AppError {
    fn from(e: XbaseError) -> AppError {
        AppError::Xbase(e)
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> AppError {
        AppError::Usage(e.to_string())
    }
}

type AppResult<T> = Result<T, AppError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Xbase(e)) => {
            eprintln!("{}: {e}", e.kind().name());
            ExitCode::from(e.kind().code())
        }
        Err(AppError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> AppResult<()> {
    let runtime = Runtime::new(RuntimeConfig {
        home: cli.home.clone(),
        node_ip: cli.node_ip.clone(),
        root_store_kind: cli.root_store_kind.parse()?,
    });
    match cli.command {
        Command::Put { file, encrypt, url } => cmd_put(&runtime, file, encrypt, url),
        Command::Get { key, decrypt, out, url } => cmd_get(&runtime, key, decrypt, out, url),
        Command::Id => {
            let store = runtime.root_store()?;
            println!("{}", text(&store.get_store_id()));
            Ok(())
        }
        Command::Bind { name, key } => {
            let namer = runtime.root_namer()?;
            namer.bind(&parse_name(&name)?, parse_key(&key)?);
            runtime.stabilise()?;
            Ok(())
        }
        Command::Lookup { name } => {
            let namer = runtime.root_namer()?;
            for key in namer.lookup(&parse_name(&name)?)? {
                println!("{key}");
            }
            Ok(())
        }
        Command::Unbind { name, key } => {
            let namer = runtime.root_namer()?;
            namer.unbind(&parse_name(&name)?, &parse_key(&key)?)?;
            runtime.stabilise()?;
            Ok(())
        }
        Command::Serve => cmd_serve(&runtime, cli.port),
        Command::Share { store_id, state, url } => cmd_share(&runtime, store_id, state, url),
        Command::Target { action } => cmd_target(&runtime, action),
        Command::Stabilise => Ok(runtime.stabilise()?),
        Command::Shred { file, schema, out_dir } => cmd_shred(&runtime, file, schema, out_dir),
        Command::Assemble { inputs, out } => cmd_assemble(inputs, out),
        Command::Xstore { file, schema } => cmd_xstore(&runtime, file, schema),
        Command::Xget { name, out } => {
            let entity = xmlfrag::get_xml_entity(
                &parse_name(&name)?,
                runtime.root_store()?.as_ref(),
                runtime.root_namer()?.as_ref(),
            )?;
            write_output(out.as_deref(), xml::canonical(&entity.document).as_bytes())
        }
        Command::Xupdate { name, file, schema, strategy } => {
            cmd_xupdate(&runtime, name, file, schema, strategy)
        }
        Command::Gstore { file } => cmd_gstore(&runtime, file),
        Command::Gget { name, out } => {
            let graph = recordcast::get_record_graph(
                &parse_name(&name)?,
                runtime.root_store()?.as_ref(),
                runtime.root_namer()?.as_ref(),
            )?;
            let json = graphfile::to_json(&graph).map_err(AppError::Usage)?;
            write_output(out.as_deref(), json.as_bytes())
        }
        Command::Bench { what } => match what {
            BenchCommand::Xbasemembers => bench_members(),
            BenchCommand::Update { scenario } => bench_update(&scenario),
        },
    }
}

fn parse_name(text: &str) -> AppResult<Name> {
    Name::new(text).map_err(|e| AppError::Usage(e.to_string()))
}

fn text(bits: &BitString) -> String {
    String::from_utf8_lossy(bits.as_bytes()).into_owned()
}

fn read_input(file: Option<&Path>) -> AppResult<BitString> {
    let mut bytes = Vec::new();
    match file {
        Some(path) => {
            bytes = std::fs::read(path)?;
        }
        None => {
            std::io::stdin().read_to_end(&mut bytes)?;
        }
    }
    Ok(BitString::from(bytes))
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> AppResult<()> {
    match out {
        Some(path) => std::fs::write(path, bytes)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn cmd_put(
    runtime: &Runtime,
    file: Option<PathBuf>,
    encrypt: Option<String>,
    url: Option<String>,
) -> AppResult<()> {
    let mut content = read_input(file.as_deref())?;
    if let Some(name) = encrypt {
        content = codecs::interpreter_by_name(&name)?.interpret(&content)?;
    }
    let key = match url {
        Some(url) => netd::remote_put(
            &RemoteUrl::parse(&url)?,
            &content,
            DEFAULT_HOP_BUDGET,
            RequestId::fresh(),
        )?,
        None => runtime.root_store()?.put(&content)?,
    };
    println!("{key}");
    Ok(())
}

fn cmd_get(
    runtime: &Runtime,
    key: String,
    decrypt: Option<String>,
    out: Option<PathBuf>,
    url: Option<String>,
) -> AppResult<()> {
    let key = parse_key(&key)?;
    let mut content = match url {
        Some(url) => netd::remote_get(
            &RemoteUrl::parse(&url)?,
            &key,
            DEFAULT_HOP_BUDGET,
            RequestId::fresh(),
        )?,
        None => runtime.root_store()?.get(&key)?,
    };
    if let Some(name) = decrypt {
        content = codecs::interpreter_by_name(&name)?.interpret(&content)?;
    }
    write_output(out.as_deref(), content.as_bytes())
}

fn cmd_serve(runtime: &Runtime, port: u16) -> AppResult<()> {
    let root = runtime.root_store()?;
    let daemon = netd::serve(runtime.registry().clone(), port)?;
    println!("listening on 0.0.0.0:{}", daemon.port());
    println!(
        "root store {} ({})",
        root.store_id(),
        if root.is_shareable() { "shareable" } else { "private" }
    );
    for store in runtime.registry().stores() {
        if store.store_id() != root.store_id() {
            println!(
                "store {} ({})",
                store.store_id(),
                if store.is_shareable() { "shareable" } else { "private" }
            );
        }
    }
    std::io::stdout().flush()?;
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}

fn cmd_share(
    runtime: &Runtime,
    store_id: String,
    state: String,
    url: Option<String>,
) -> AppResult<()> {
    let id = StoreId::parse(&store_id)?;
    let on = state == "on";
    match url {
        Some(url) => netd::remote_set_shareable(&RemoteUrl::parse(&url)?, &id, on)?,
        None => {
            runtime.root_store()?;
            let store = runtime.registry().find(&id).ok_or_else(|| {
                XbaseError::StoreNotFound(format!("no store {id} under this home"))
            })?;
            runtime.set_shareable(&store, on);
            runtime.stabilise()?;
        }
    }
    Ok(())
}

fn root_proxy(runtime: &Runtime) -> AppResult<Arc<StoreHandle>> {
    let root = runtime.root_store()?;
    if root.as_proxy().is_none() {
        return Err(AppError::Usage(
            "the root store is not a proxy store; create the home with \
             --root-store-kind proxy"
                .into(),
        ));
    }
    Ok(root)
}

fn parse_target(text: &str) -> AppResult<Target> {
    if text.starts_with("http://") {
        Ok(Target::Remote(RemoteUrl::parse(text)?))
    } else {
        let store = BlobDirStore::open(&[PathBuf::from(text)])?;
        Ok(Target::Embedded(Arc::new(StoreHandle::BlobDir(store))))
    }
}

fn cmd_target(runtime: &Runtime, action: TargetAction) -> AppResult<()> {
    let root = root_proxy(runtime)?;
    let proxy = root.as_proxy().expect("checked by root_proxy");
    match action {
        TargetAction::Add { target } => {
            proxy.add_target(parse_target(&target)?);
            runtime.registry().register_tree(&root);
            runtime.stabilise()?;
        }
        TargetAction::Remove { target } => {
            proxy.remove_target(&parse_target(&target)?);
            runtime.stabilise()?;
        }
        TargetAction::List => {
            for target in proxy.lookup_target() {
                match target {
                    Target::Remote(url) => println!("{url}"),
                    Target::Embedded(store) => {
                        println!("store {}", store.store_id())
                    }
                }
            }
        }
    }
    Ok(())
}

fn load_entity(file: &Path, schema: Option<&Path>) -> AppResult<XmlEntity> {
    let document = parse_xml_file(file)?;
    let entity = match schema {
        Some(path) => XmlEntity::with_schema(document, parse_xml_file(path)?),
        None => XmlEntity::new(document),
    };
    Ok(entity)
}

fn parse_xml_file(path: &Path) -> AppResult<xml::Document> {
    let bytes = std::fs::read(path)?;
    xml::parse_bytes(&bytes)
        .map_err(|e| AppError::Xbase(XbaseError::Reify(format!("{}: {e}", path.display()))))
}

/// Fragment file name: the fragment name with '/' replaced by '_', plus .xml.
fn fragment_file_name(fragment: &Fragment) -> String {
    format!("{}.xml", fragment.name.as_str().replace('/', "_"))
}

fn cmd_shred(
    runtime: &Runtime,
    file: PathBuf,
    schema: Option<PathBuf>,
    out_dir: PathBuf,
) -> AppResult<()> {
    let mut entity = load_entity(&file, schema.as_deref())?;
    let fragments = reify_xml(&mut entity, runtime.node_ip())?;
    std::fs::create_dir_all(&out_dir)?;
    for fragment in &fragments {
        let path = out_dir.join(fragment_file_name(fragment));
        std::fs::write(&path, fragment.to_bits().as_bytes())?;
        println!("{}", path.display());
    }
    eprintln!("{} fragments", fragments.len());
    Ok(())
}

fn cmd_assemble(inputs: Vec<PathBuf>, out: Option<PathBuf>) -> AppResult<()> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(&input)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "xml"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(input);
        }
    }
    if files.is_empty() {
        return Err(AppError::Usage("no fragment files given".into()));
    }
    let mut bits = Vec::new();
    for file in &files {
        bits.push(BitString::from(std::fs::read(file)?));
    }
    let entity = reflect_xml(&bits, &NoResolver)?;
    write_output(out.as_deref(), xml::canonical(&entity.document).as_bytes())
}

fn cmd_xstore(runtime: &Runtime, file: PathBuf, schema: Option<PathBuf>) -> AppResult<()> {
    let mut entity = load_entity(&file, schema.as_deref())?;
    let store = runtime.root_store()?;
    let namer = runtime.root_namer()?;
    let root_name =
        xmlfrag::store_xml_entity(&mut entity, store.as_ref(), &namer, runtime.node_ip())?;
    runtime.stabilise()?;
    println!("{root_name}");
    Ok(())
}

fn cmd_xupdate(
    runtime: &Runtime,
    name: String,
    file: PathBuf,
    schema: Option<PathBuf>,
    strategy: String,
) -> AppResult<()> {
    let strategy: UpdateStrategy = strategy.parse()?;
    let store = runtime.root_store()?;
    let namer = runtime.root_namer()?;
    // Start from the stored entity so node identity is preserved, then
    // swap in the edited document.
    let mut entity = xmlfrag::get_xml_entity(&parse_name(&name)?, store.as_ref(), &namer)?;
    entity.document = parse_xml_file(&file)?;
    if let Some(path) = schema {
        entity.schema = Some(parse_xml_file(&path)?);
    }
    let report =
        xmlfrag::update_xml_entity(&mut entity, store.as_ref(), &namer, strategy, runtime.node_ip())?;
    runtime.stabilise()?;
    println!("changed {}", report.new_fragments);
    for name in report.rebound {
        println!("{name}");
    }
    Ok(())
}

fn cmd_gstore(runtime: &Runtime, file: PathBuf) -> AppResult<()> {
    let json = std::fs::read_to_string(&file)?;
    let mut graph = graphfile::from_json(&json).map_err(AppError::Usage)?;
    let store = runtime.root_store()?;
    let namer = runtime.root_namer()?;
    let root_name =
        recordcast::store_record_graph(&mut graph, store.as_ref(), &namer, runtime.node_ip())?;
    runtime.stabilise()?;
    println!("{root_name}");
    Ok(())
}

// ---------------------------------------------------------------------------
// Bench
// ---------------------------------------------------------------------------

fn bench_env() -> AppResult<(tempfile::TempDir, StoreHandle, xbase::namer::Namer)> {
    let dir = tempfile::tempdir()?;
    let store = StoreHandle::BlobDir(BlobDirStore::create(&[dir.path().join("store")])?);
    Ok((dir, store, xbase::namer::Namer::new()))
}

fn members_entity(granularity: bool) -> XmlEntity {
    let document = xml::parse(xbase::samples::MEMBERS_XML).expect("sample parses");
    if granularity {
        XmlEntity::with_schema(
            document,
            xml::parse(xbase::samples::MEMBERS_GRANULARITY_SCHEMA).expect("sample parses"),
        )
    } else {
        XmlEntity::new(document)
    }
}

fn bench_members() -> AppResult<()> {
    println!("{:<28}{:>18}{:>22}", "XBaseMembers", "with granularity", "without granularity");
    let mut rows: Vec<[u64; 2]> = vec![[0; 2]; 4];
    for (column, granularity) in [true, false].into_iter().enumerate() {
        let (_dir, store, namer) = bench_env()?;
        let mut entity = members_entity(granularity);
        let fragments = reify_xml(&mut entity, "127.0.0.1")?;
        xmlfrag::store_fragments(&fragments, &store, &namer)?;
        rows[0][column] = fragments.len() as u64;
        rows[1][column] = fragments.iter().map(|f| f.to_bits().len() as u64).sum();
        rows[2][column] = match &store {
            StoreHandle::BlobDir(s) => s
                .keys()
                .iter()
                .map(|k| store.get(k).map(|b| b.len() as u64).unwrap_or(0))
                .sum(),
            _ => 0,
        };
        rows[3][column] = codecs::namer_reify(&namer)?.len() as u64;
    }
    for (label, row) in
        ["fragments created", "fragment bytes", "local store bytes", "namer rep bytes"]
            .iter()
            .zip(&rows)
    {
        println!("{label:<28}{:>18}{:>22}", row[0], row[1]);
    }
    Ok(())
}

fn bench_update(scenario: &str) -> AppResult<()> {
    let mut results = Vec::new();
    for strategy in [UpdateStrategy::StoreFeedback, UpdateStrategy::SourceCompare] {
        let (_dir, store, namer) = bench_env()?;
        let mut entity = members_entity(true);
        xmlfrag::store_xml_entity(&mut entity, &store, &namer, "127.0.0.1")?;
        apply_scenario(&mut entity, scenario);
        let report = xmlfrag::update_xml_entity(&mut entity, &store, &namer, strategy, "127.0.0.1")?;
        println!(
            "{:<16} changed {:>2}  [{}]",
            format!("{strategy:?}"),
            report.new_fragments,
            report
                .rebound
                .iter()
                .map(|n| n.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        );
        results.push(report.rebound.into_iter().collect::<std::collections::BTreeSet<_>>());
    }
    println!("strategies agree: {}", results[0] == results[1]);
    Ok(())
}

fn apply_scenario(entity: &mut XmlEntity, scenario: &str) {
    use xbase::xml::{Element, Node};
    let root = &mut entity.document.root;
    let staff = root
        .children
        .iter_mut()
        .find_map(|n| match n {
            Node::Element(e) if e.name == "teachingStaff" => Some(e),
            _ => None,
        })
        .expect("sample document has teachingStaff");
    match scenario {
        "edit" => {
            // Bump the first age found under teachingStaff.
            fn first_age(el: &mut Element) -> Option<&mut Element> {
                if el.name == "age" {
                    return Some(el);
                }
                el.children.iter_mut().find_map(|n| match n {
                    Node::Element(e) => first_age(e),
                    _ => None,
                })
            }
            let age = first_age(staff).expect("an age element");
            age.children = vec![Node::Text("37".into())];
        }
        "add" => {
            staff.children.push(Node::Element(
                Element::new("person")
                    .with_child(Element::new("name").with_text(" New Member"))
                    .with_child(
                        Element::new("address")
                            .with_child(Element::new("town").with_text("Dundee")),
                    )
                    .with_child(Element::new("age").with_text("40")),
            ));
        }
        "delete" => {
            let last = staff
                .children
                .iter()
                .rposition(|n| matches!(n, Node::Element(e) if e.name == "person"))
                .expect("a person element");
            staff.children.remove(last);
        }
        _ => {} // noop
    }
}
