//! Minimal XML tree model with a parser and a canonical writer.
//!
//! The canonical form is the byte representation used for content-derived
//! keys, so it is fixed precisely: UTF-8, `<?xml version="1.0"
//! encoding="UTF-8"?>` declaration, LF newlines, 2-space indentation,
//! attributes in stored order, empty elements self-closed.
//! Whitespace-only text nodes are not significant and are dropped; any
//! other text is preserved exactly. Comments and processing instructions
//! are accepted on input and dropped.
//!
//! The parser covers the subset the toolkit exchanges: elements,
//! attributes, character data, entity/character references, CDATA sections
//! and comments. DOCTYPE declarations are rejected.

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Document {
    pub root: Element,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Element {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<Node>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Node {
    Element(Element),
    Text(String),
}

impl Document {
    pub fn new(root: Element) -> Document {
        Document { root }
    }
}

impl Element {
    pub fn new(name: impl Into<String>) -> Element {
        Element { name: name.into(), attrs: Vec::new(), children: Vec::new() }
    }

    pub fn with_attr(mut self, name: impl Into<String>, value: impl Into<String>) -> Element {
        self.attrs.push((name.into(), value.into()));
        self
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Element {
        self.children.push(Node::Text(text.into()));
        self
    }

    pub fn with_child(mut self, child: Element) -> Element {
        self.children.push(Node::Element(child));
        self
    }

    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_str())
    }

    /// The tag name with any namespace prefix removed.
    pub fn local_name(&self) -> &str {
        self.name.rsplit(':').next().unwrap_or(&self.name)
    }

    pub fn child_elements(&self) -> impl Iterator<Item = &Element> {
        self.children.iter().filter_map(|n| match n {
            Node::Element(e) => Some(e),
            Node::Text(_) => None,
        })
    }

    pub fn first_child_element(&self, local: &str) -> Option<&Element> {
        self.child_elements().find(|e| e.local_name() == local)
    }

    /// Concatenated character data of the direct text children.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for n in &self.children {
            if let Node::Text(t) = n {
                out.push_str(t);
            }
        }
        out
    }
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("xml error at byte {offset}: {message}")]
pub struct XmlError {
    pub message: String,
    pub offset: usize,
}

pub type XmlResult<T> = std::result::Result<T, XmlError>;

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

pub fn parse(input: &str) -> XmlResult<Document> {
    let mut p = Parser { input: input.as_bytes(), pos: 0 };
    p.skip_bom();
    p.skip_prolog()?;
    let root = p.parse_element()?;
    p.skip_misc()?;
    if p.pos != p.input.len() {
        return Err(p.err("trailing content after document element"));
    }
    Ok(Document { root })
}

pub fn parse_bytes(input: &[u8]) -> XmlResult<Document> {
    let text = std::str::from_utf8(input)
        .map_err(|e| XmlError { message: format!("invalid UTF-8: {e}"), offset: 0 })?;
    parse(text)
}

struct Parser<'a> {
    input: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, message: impl Into<String>) -> XmlError {
        XmlError { message: message.into(), offset: self.pos }
    }

    fn peek(&self) -> Option<u8> {
        self.input.get(self.pos).copied()
    }

    fn starts_with(&self, s: &str) -> bool {
        self.input[self.pos..].starts_with(s.as_bytes())
    }

    fn expect(&mut self, s: &str) -> XmlResult<()> {
        if self.starts_with(s) {
            self.pos += s.len();
            Ok(())
        } else {
            Err(self.err(format!("expected {s:?}")))
        }
    }

    fn skip_bom(&mut self) {
        if self.input[self.pos..].starts_with(&[0xEF, 0xBB, 0xBF]) {
            self.pos += 3;
        }
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\r' | b'\n')) {
            self.pos += 1;
        }
    }

    fn skip_until(&mut self, end: &str) -> XmlResult<()> {
        match self.input[self.pos..]
            .windows(end.len())
            .position(|w| w == end.as_bytes())
        {
            Some(i) => {
                self.pos += i + end.len();
                Ok(())
            }
            None => Err(self.err(format!("unterminated construct, expected {end:?}"))),
        }
    }

    /// Whitespace, comments and processing instructions outside elements.
    fn skip_misc(&mut self) -> XmlResult<()> {
        loop {
            self.skip_ws();
            if self.starts_with("<!--") {
                self.pos += 4;
                self.skip_until("-->")?;
            } else if self.starts_with("<?") {
                self.pos += 2;
                self.skip_until("?>")?;
            } else {
                return Ok(());
            }
        }
    }

    fn skip_prolog(&mut self) -> XmlResult<()> {
        self.skip_ws();
        if self.starts_with("<?xml") {
            self.pos += 5;
            self.skip_until("?>")?;
        }
        self.skip_misc()?;
        if self.starts_with("<!DOCTYPE") {
            return Err(self.err("DOCTYPE declarations are not supported"));
        }
        Ok(())
    }

    fn parse_name(&mut self) -> XmlResult<String> {
        let start = self.pos;
        match self.peek() {
            Some(b) if b.is_ascii_alphabetic() || b == b'_' || b == b':' => self.pos += 1,
            _ => return Err(self.err("expected a name")),
        }
        while let Some(b) = self.peek() {
            if b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.' | b':') {
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok(std::str::from_utf8(&self.input[start..self.pos]).unwrap().to_string())
    }

    fn parse_reference(&mut self) -> XmlResult<char> {
        self.expect("&")?;
        let end = self.input[self.pos..]
            .iter()
            .position(|&b| b == b';')
            .ok_or_else(|| self.err("unterminated entity reference"))?;
        let body = std::str::from_utf8(&self.input[self.pos..self.pos + end])
            .map_err(|_| self.err("bad entity reference"))?;
        let c = match body {
            "amp" => '&',
            "lt" => '<',
            "gt" => '>',
            "quot" => '"',
            "apos" => '\'',
            _ => {
                let code = if let Some(hex) = body.strip_prefix("#x") {
                    u32::from_str_radix(hex, 16).ok()
                } else if let Some(dec) = body.strip_prefix('#') {
                    dec.parse().ok()
                } else {
                    None
                };
                code.and_then(char::from_u32)
                    .ok_or_else(|| self.err(format!("unknown entity &{body};")))?
            }
        };
        self.pos += end + 1;
        Ok(c)
    }

    fn parse_attr_value(&mut self) -> XmlResult<String> {
        let quote = match self.peek() {
            Some(q @ (b'"' | b'\'')) => q,
            _ => return Err(self.err("expected quoted attribute value")),
        };
        self.pos += 1;
        let mut value = String::new();
        loop {
            match self.peek() {
                None => return Err(self.err("unterminated attribute value")),
                Some(q) if q == quote => {
                    self.pos += 1;
                    return Ok(value);
                }
                Some(b'&') => value.push(self.parse_reference()?),
                Some(b'<') => return Err(self.err("'<' in attribute value")),
                Some(_) => {
                    let start = self.pos;
                    while let Some(b) = self.peek() {
                        if b == quote || b == b'&' || b == b'<' {
                            break;
                        }
                        self.pos += 1;
                    }
                    value.push_str(
                        std::str::from_utf8(&self.input[start..self.pos])
                            .map_err(|_| self.err("invalid UTF-8"))?,
                    );
                }
            }
        }
    }

    fn parse_element(&mut self) -> XmlResult<Element> {
        self.expect("<")?;
        let name = self.parse_name()?;
        let mut element = Element::new(name);
        loop {
            let before = self.pos;
            self.skip_ws();
            if self.starts_with("/>") {
                self.pos += 2;
                return Ok(element);
            }
            if self.starts_with(">") {
                self.pos += 1;
                break;
            }
            if self.pos == before {
                return Err(self.err("expected whitespace before attribute"));
            }
            let attr_name = self.parse_name()?;
            self.skip_ws();
            self.expect("=")?;
            self.skip_ws();
            let value = self.parse_attr_value()?;
            if element.attr(&attr_name).is_some() {
                return Err(self.err(format!("duplicate attribute {attr_name:?}")));
            }
            element.attrs.push((attr_name, value));
        }
        // Content until the matching end tag.
        loop {
            match self.peek() {
                None => return Err(self.err(format!("unterminated element <{}>", element.name))),
                Some(b'<') => {
                    if self.starts_with("</") {
                        self.pos += 2;
                        let end_name = self.parse_name()?;
                        if end_name != element.name {
                            return Err(self.err(format!(
                                "mismatched end tag </{end_name}> for <{}>",
                                element.name
                            )));
                        }
                        self.skip_ws();
                        self.expect(">")?;
                        return Ok(element);
                    } else if self.starts_with("<!--") {
                        self.pos += 4;
                        self.skip_until("-->")?;
                    } else if self.starts_with("<![CDATA[") {
                        self.pos += 9;
                        let start = self.pos;
                        self.skip_until("]]>")?;
                        let text = std::str::from_utf8(&self.input[start..self.pos - 3])
                            .map_err(|_| self.err("invalid UTF-8"))?;
                        push_text(&mut element, text);
                    } else if self.starts_with("<?") {
                        self.pos += 2;
                        self.skip_until("?>")?;
                    } else if self.starts_with("<!") {
                        return Err(self.err("unsupported markup declaration"));
                    } else {
                        let child = self.parse_element()?;
                        element.children.push(Node::Element(child));
                    }
                }
                Some(b'&') => {
                    let c = self.parse_reference()?;
                    push_text(&mut element, &c.to_string());
                }
                Some(_) => {
                    let start = self.pos;
                    while let Some(b) = self.peek() {
                        if b == b'<' || b == b'&' {
                            break;
                        }
                        self.pos += 1;
                    }
                    let text = std::str::from_utf8(&self.input[start..self.pos])
                        .map_err(|_| self.err("invalid UTF-8"))?;
                    push_text(&mut element, text);
                }
            }
        }
    }
}

fn push_text(element: &mut Element, text: &str) {
    if let Some(Node::Text(prev)) = element.children.last_mut() {
        prev.push_str(text);
    } else {
        element.children.push(Node::Text(text.to_string()));
    }
}

// ---------------------------------------------------------------------------
// Canonical writing
// ---------------------------------------------------------------------------

/// Renders the canonical byte form of a document. Two observationally equal
/// documents always canonicalise to identical bytes.
pub fn canonical(doc: &Document) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    write_element(&doc.root, 0, &mut out);
    out
}

pub fn canonical_bytes(doc: &Document) -> Vec<u8> {
    canonical(doc).into_bytes()
}

/// True when the two documents have the same canonical form.
pub fn canonically_equal(a: &Document, b: &Document) -> bool {
    canonical(a) == canonical(b)
}

fn significant_children(el: &Element) -> Vec<&Node> {
    el.children
        .iter()
        .filter(|n| match n {
            Node::Text(t) => !t.chars().all(char::is_whitespace),
            Node::Element(_) => true,
        })
        .collect()
}

fn write_open_tag(el: &Element, out: &mut String) {
    out.push('<');
    out.push_str(&el.name);
    for (name, value) in &el.attrs {
        out.push(' ');
        out.push_str(name);
        out.push_str("=\"");
        escape_attr(value, out);
        out.push('"');
    }
}

fn write_element(el: &Element, depth: usize, out: &mut String) {
    let indent = "  ".repeat(depth);
    let children = significant_children(el);
    out.push_str(&indent);
    write_open_tag(el, out);
    if children.is_empty() {
        out.push_str("/>\n");
        return;
    }
    let has_text = children.iter().any(|n| matches!(n, Node::Text(_)));
    if has_text {
        // Text or mixed content: everything inline, text preserved exactly.
        out.push('>');
        for node in &children {
            write_node_inline(node, out);
        }
        out.push_str("</");
        out.push_str(&el.name);
        out.push_str(">\n");
    } else {
        out.push_str(">\n");
        for node in &children {
            if let Node::Element(child) = node {
                write_element(child, depth + 1, out);
            }
        }
        out.push_str(&indent);
        out.push_str("</");
        out.push_str(&el.name);
        out.push_str(">\n");
    }
}

fn write_node_inline(node: &Node, out: &mut String) {
    match node {
        Node::Text(t) => escape_text(t, out),
        Node::Element(el) => {
            let children = significant_children(el);
            write_open_tag(el, out);
            if children.is_empty() {
                out.push_str("/>");
            } else {
                out.push('>');
                for c in &children {
                    write_node_inline(c, out);
                }
                out.push_str("</");
                out.push_str(&el.name);
                out.push('>');
            }
        }
    }
}

fn escape_text(text: &str, out: &mut String) {
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            _ => out.push(c),
        }
    }
}

fn escape_attr(text: &str, out: &mut String) {
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
}
