//! A small PDF reader covering classic (non-xref-stream) files: objects,
//! the page tree, content streams with no filter or FlateDecode, text
//! showing operators and full-page image XObjects.
//!
//! Glyph advances use fixed pitch: 0.6 em for Courier, 0.5 em otherwise.

use std::collections::HashMap;
use std::io::Read;

use super::{reading_order, BBox, IngestError, RawDocument, Token, TokenSource};
use crate::model::TokenId;
use crate::preprocess::PageImage;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Obj {
    Null,
    Bool(bool),
    Num(f64),
    Str(Vec<u8>),
    Name(String),
    Array(Vec<Obj>),
    Dict(Dict),
    Ref(u32),
    Stream(Dict, Vec<u8>),
    /// Bare keyword; only appears inside content streams.
    Op(String),
}

pub(crate) type Dict = HashMap<String, Obj>;

impl Obj {
    fn as_num(&self) -> Option<f64> {
        match self {
            Obj::Num(n) => Some(*n),
            _ => None,
        }
    }

    fn as_name(&self) -> Option<&str> {
        match self {
            Obj::Name(n) => Some(n),
            _ => None,
        }
    }
}

fn corrupt(msg: impl Into<String>) -> IngestError {
    IngestError::CorruptPdf(msg.into())
}

fn is_ws(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\r' | b'\n' | b'\x0c' | b'\0')
}

fn is_delim(b: u8) -> bool {
    matches!(b, b'(' | b')' | b'<' | b'>' | b'[' | b']' | b'{' | b'}' | b'/' | b'%')
}

struct Lexer<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(data: &'a [u8]) -> Self {
        Lexer { data, pos: 0 }
    }

    fn peek(&self) -> Option<u8> {
        self.data.get(self.pos).copied()
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.data.len()
    }

    fn skip_ws(&mut self) {
        while let Some(b) = self.peek() {
            if is_ws(b) {
                self.pos += 1;
            } else if b == b'%' {
                while let Some(c) = self.peek() {
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn starts_with(&self, kw: &[u8]) -> bool {
        self.data[self.pos..].starts_with(kw)
    }

    fn regular_word(&mut self) -> &'a [u8] {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if is_ws(b) || is_delim(b) {
                break;
            }
            self.pos += 1;
        }
        &self.data[start..self.pos]
    }

    /// Parse one object. Keywords other than true/false/null come back as
    /// `Obj::Op`. `R` references are folded when `fold_refs` is set.
    fn object(&mut self, fold_refs: bool) -> Result<Obj, IngestError> {
        self.skip_ws();
        let b = self.peek().ok_or_else(|| corrupt("unexpected end of data"))?;
        match b {
            b'/' => {
                self.pos += 1;
                let raw = self.regular_word();
                Ok(Obj::Name(decode_name(raw)))
            }
            b'(' => self.literal_string().map(Obj::Str),
            b'<' if self.starts_with(b"<<") => {
                self.pos += 2;
                let mut dict = Dict::new();
                loop {
                    self.skip_ws();
                    if self.starts_with(b">>") {
                        self.pos += 2;
                        break;
                    }
                    let key = match self.object(fold_refs)? {
                        Obj::Name(n) => n,
                        other => return Err(corrupt(format!("dictionary key {other:?}"))),
                    };
                    let value = self.object(fold_refs)?;
                    dict.insert(key, value);
                }
                Ok(Obj::Dict(dict))
            }
            b'<' => self.hex_string().map(Obj::Str),
            b'[' => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(b']') => {
                            self.pos += 1;
                            break;
                        }
                        None => return Err(corrupt("unterminated array")),
                        _ => items.push(self.object(fold_refs)?),
                    }
                }
                Ok(Obj::Array(items))
            }
            b'+' | b'-' | b'.' | b'0'..=b'9' => {
                let word = self.regular_word();
                let text = std::str::from_utf8(word).map_err(|_| corrupt("bad number"))?;
                let n: f64 = text.parse().map_err(|_| corrupt(format!("bad number {text:?}")))?;
                if fold_refs && is_integer(text) {
                    let save = self.pos;
                    if let Some(r) = self.try_reference(n) {
                        return Ok(r);
                    }
                    self.pos = save;
                }
                Ok(Obj::Num(n))
            }
            b')' | b'>' | b']' | b'}' | b'{' => {
                self.pos += 1;
                Err(corrupt(format!("unexpected delimiter {:?}", b as char)))
            }
            _ => {
                let word = self.regular_word();
                if word.is_empty() {
                    self.pos += 1;
                    return Err(corrupt("unexpected byte"));
                }
                let w = String::from_utf8_lossy(word).into_owned();
                Ok(match w.as_str() {
                    "true" => Obj::Bool(true),
                    "false" => Obj::Bool(false),
                    "null" => Obj::Null,
                    _ => Obj::Op(w),
                })
            }
        }
    }

    fn try_reference(&mut self, num: f64) -> Option<Obj> {
        self.skip_ws();
        let gen = self.regular_word();
        if gen.is_empty() || !gen.iter().all(u8::is_ascii_digit) {
            return None;
        }
        self.skip_ws();
        if self.peek() == Some(b'R') {
            let next = self.data.get(self.pos + 1).copied();
            if next.is_none_or(|c| is_ws(c) || is_delim(c)) {
                self.pos += 1;
                return Some(Obj::Ref(num as u32));
            }
        }
        None
    }

    fn literal_string(&mut self) -> Result<Vec<u8>, IngestError> {
        self.pos += 1;
        let mut out = Vec::new();
        let mut depth = 1;
        loop {
            let b = self.peek().ok_or_else(|| corrupt("unterminated string"))?;
            self.pos += 1;
            match b {
                b'\\' => {
                    let e = self.peek().ok_or_else(|| corrupt("unterminated escape"))?;
                    self.pos += 1;
                    match e {
                        b'n' => out.push(b'\n'),
                        b'r' => out.push(b'\r'),
                        b't' => out.push(b'\t'),
                        b'b' => out.push(8),
                        b'f' => out.push(12),
                        b'0'..=b'7' => {
                            let mut v = (e - b'0') as u32;
                            for _ in 0..2 {
                                match self.peek() {
                                    Some(d @ b'0'..=b'7') => {
                                        v = v * 8 + (d - b'0') as u32;
                                        self.pos += 1;
                                    }
                                    _ => break,
                                }
                            }
                            out.push((v & 0xFF) as u8);
                        }
                        b'\r' => {
                            if self.peek() == Some(b'\n') {
                                self.pos += 1;
                            }
                        }
                        b'\n' => {}
                        other => out.push(other),
                    }
                }
                b'(' => {
                    depth += 1;
                    out.push(b);
                }
                b')' => {
                    depth -= 1;
                    if depth == 0 {
                        break;
                    }
                    out.push(b);
                }
                _ => out.push(b),
            }
        }
        Ok(out)
    }

    fn hex_string(&mut self) -> Result<Vec<u8>, IngestError> {
        self.pos += 1;
        let mut digits = Vec::new();
        loop {
            let b = self.peek().ok_or_else(|| corrupt("unterminated hex string"))?;
            self.pos += 1;
            match b {
                b'>' => break,
                _ if is_ws(b) => {}
                _ => {
                    let d = (b as char)
                        .to_digit(16)
                        .ok_or_else(|| corrupt("bad hex digit"))?;
                    digits.push(d as u8);
                }
            }
        }
        if digits.len() % 2 == 1 {
            digits.push(0);
        }
        Ok(digits.chunks(2).map(|p| p[0] << 4 | p[1]).collect())
    }
}

fn is_integer(text: &str) -> bool {
    !text.is_empty() && text.bytes().all(|b| b.is_ascii_digit())
}

fn decode_name(raw: &[u8]) -> String {
    let mut out = Vec::with_capacity(raw.len());
    let mut i = 0;
    while i < raw.len() {
        if raw[i] == b'#' && i + 2 < raw.len() {
            if let Ok(v) = u8::from_str_radix(&String::from_utf8_lossy(&raw[i + 1..i + 3]), 16) {
                out.push(v);
                i += 3;
                continue;
            }
        }
        out.push(raw[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

/// Parsed object table of a PDF file.
pub struct PdfDocument {
    objects: HashMap<u32, Obj>,
    trailer: Dict,
}

impl PdfDocument {
    pub fn parse(data: &[u8]) -> Result<Self, IngestError> {
        if !data.starts_with(b"%PDF-") {
            return Err(IngestError::NotPdf);
        }
        let tail = &data[data.len().saturating_sub(1024)..];
        if !tail.windows(5).any(|w| w == b"%%EOF") {
            return Err(corrupt("missing %%EOF marker (truncated file?)"));
        }
        let mut lx = Lexer::new(data);
        let mut objects = HashMap::new();
        let mut trailer = Dict::new();
        while !lx.at_end() {
            if lx.starts_with(b"xref") {
                // skip the table; objects are located by scanning
                while !lx.at_end() && !lx.starts_with(b"trailer") {
                    lx.pos += 1;
                }
                continue;
            }
            if lx.starts_with(b"trailer") {
                lx.pos += 7;
                if let Obj::Dict(d) = lx.object(true)? {
                    trailer.extend(d);
                }
                continue;
            }
            if lx.starts_with(b"startxref") {
                lx.pos += 9;
                lx.object(false)?;
                continue;
            }
            let num = match lx.object(false)? {
                Obj::Num(n) if n >= 0.0 => n as u32,
                other => return Err(corrupt(format!("expected object number, found {other:?}"))),
            };
            match lx.object(false)? {
                Obj::Num(_) => {}
                _ => return Err(corrupt("expected generation number")),
            }
            match lx.object(false)? {
                Obj::Op(op) if op == "obj" => {}
                _ => return Err(corrupt("expected 'obj'")),
            }
            let mut obj = lx.object(true)?;
            lx.skip_ws();
            if lx.starts_with(b"stream") {
                let dict = match obj {
                    Obj::Dict(d) => d,
                    _ => return Err(corrupt("stream without dictionary")),
                };
                lx.pos += 6;
                if lx.peek() == Some(b'\r') {
                    lx.pos += 1;
                }
                if lx.peek() == Some(b'\n') {
                    lx.pos += 1;
                }
                let start = lx.pos;
                let direct_len = dict.get("Length").and_then(Obj::as_num).map(|n| n as usize);
                let end = match direct_len {
                    Some(len) if start + len <= data.len() => start + len,
                    _ => find(data, b"endstream", start)
                        .ok_or_else(|| corrupt("unterminated stream"))?,
                };
                let body = data[start..end].to_vec();
                lx.pos = end;
                lx.skip_ws();
                if !lx.starts_with(b"endstream") {
                    return Err(corrupt("missing endstream"));
                }
                lx.pos += 9;
                obj = Obj::Stream(dict, body);
            }
            match lx.object(false)? {
                Obj::Op(op) if op == "endobj" => {}
                _ => return Err(corrupt(format!("object {num} missing endobj"))),
            }
            objects.insert(num, obj);
        }
        if objects.is_empty() {
            return Err(corrupt("no objects"));
        }
        Ok(PdfDocument { objects, trailer })
    }

    fn resolve<'b>(&'b self, obj: &'b Obj) -> &'b Obj {
        let mut cur = obj;
        for _ in 0..32 {
            match cur {
                Obj::Ref(n) => match self.objects.get(n) {
                    Some(o) => cur = o,
                    None => return &Obj::Null,
                },
                _ => return cur,
            }
        }
        &Obj::Null
    }

    fn dict<'b>(&'b self, obj: &'b Obj) -> Option<&'b Dict> {
        match self.resolve(obj) {
            Obj::Dict(d) | Obj::Stream(d, _) => Some(d),
            _ => None,
        }
    }

    pub fn is_encrypted(&self) -> bool {
        self.trailer.contains_key("Encrypt")
    }

    /// String value of a key in the document information dictionary.
    pub fn info(&self, key: &str) -> Option<String> {
        let info = self.dict(self.trailer.get("Info")?)?;
        match self.resolve(info.get(key)?) {
            Obj::Str(s) => Some(decode_text(s)),
            _ => None,
        }
    }

    fn catalog(&self) -> Result<&Dict, IngestError> {
        if let Some(d) = self.trailer.get("Root").and_then(|r| self.dict(r)) {
            return Ok(d);
        }
        let mut nums: Vec<_> = self.objects.keys().copied().collect();
        nums.sort_unstable();
        nums.iter()
            .filter_map(|n| match &self.objects[n] {
                Obj::Dict(d) if d.get("Type").and_then(Obj::as_name) == Some("Catalog") => Some(d),
                _ => None,
            })
            .next()
            .ok_or_else(|| corrupt("no document catalog"))
    }

    /// Page dictionaries in document order, with inheritable attributes
    /// (MediaBox, Resources) copied down from the tree.
    fn pages(&self) -> Result<Vec<Dict>, IngestError> {
        let root = self.catalog()?;
        let pages_root = root.get("Pages").ok_or_else(|| corrupt("catalog without Pages"))?;
        let mut out = Vec::new();
        self.walk_pages(pages_root, &Dict::new(), &mut out, 0)?;
        Ok(out)
    }

    fn walk_pages(
        &self,
        node: &Obj,
        inherited: &Dict,
        out: &mut Vec<Dict>,
        depth: usize,
    ) -> Result<(), IngestError> {
        if depth > 64 {
            return Err(corrupt("page tree too deep"));
        }
        let dict = self.dict(node).ok_or_else(|| corrupt("page tree node is not a dictionary"))?;
        let mut inh = inherited.clone();
        for key in ["MediaBox", "Resources"] {
            if let Some(v) = dict.get(key) {
                inh.insert(key.to_string(), v.clone());
            }
        }
        match dict.get("Type").and_then(Obj::as_name) {
            Some("Pages") => {
                let kids = match dict.get("Kids").map(|k| self.resolve(k)) {
                    Some(Obj::Array(a)) => a,
                    _ => return Err(corrupt("Pages node without Kids")),
                };
                for kid in kids {
                    self.walk_pages(kid, &inh, out, depth + 1)?;
                }
            }
            _ => {
                let mut page = dict.clone();
                for (k, v) in inh {
                    page.entry(k).or_insert(v);
                }
                out.push(page);
            }
        }
        Ok(())
    }

    pub fn page_count(&self) -> Result<usize, IngestError> {
        Ok(self.pages()?.len())
    }

    /// (width, height) of each page's media box in pixels at `dpi`.
    pub fn page_sizes(&self, dpi: u32) -> Result<Vec<(f64, f64)>, IngestError> {
        let d = f64::from(dpi);
        Ok(self
            .pages()?
            .iter()
            .map(|p| {
                let m = self.media_box(p);
                ((m[2] - m[0]).abs() * d / 72.0, (m[3] - m[1]).abs() * d / 72.0)
            })
            .collect())
    }

    fn media_box(&self, page: &Dict) -> [f64; 4] {
        if let Some(Obj::Array(a)) = page.get("MediaBox").map(|m| self.resolve(m)) {
            let v: Vec<f64> = a.iter().filter_map(|o| self.resolve(o).as_num()).collect();
            if v.len() == 4 {
                return [v[0], v[1], v[2], v[3]];
            }
        }
        [0.0, 0.0, 612.0, 792.0]
    }

    fn stream_data(&self, obj: &Obj) -> Result<Option<(Dict, Vec<u8>)>, IngestError> {
        match self.resolve(obj) {
            Obj::Stream(d, raw) => Ok(Some((d.clone(), decode_stream(d, raw)?))),
            _ => Ok(None),
        }
    }

    fn page_content(&self, page: &Dict) -> Result<Vec<u8>, IngestError> {
        let mut out = Vec::new();
        let contents = match page.get("Contents") {
            Some(c) => c,
            None => return Ok(out),
        };
        let parts: Vec<&Obj> = match self.resolve(contents) {
            Obj::Array(a) => a.iter().collect(),
            _ => vec![contents],
        };
        for part in parts {
            if let Some((_, data)) = self.stream_data(part)? {
                out.extend_from_slice(&data);
                out.push(b'\n');
            }
        }
        Ok(out)
    }

    fn resources<'b>(&'b self, page: &'b Dict) -> Option<&'b Dict> {
        page.get("Resources").and_then(|r| self.dict(r))
    }

    fn font_pitch(&self, page: &Dict, font: &str) -> f64 {
        let base = self
            .resources(page)
            .and_then(|r| r.get("Font"))
            .and_then(|f| self.dict(f))
            .and_then(|fonts| fonts.get(font))
            .and_then(|f| self.dict(f))
            .and_then(|f| f.get("BaseFont"))
            .and_then(|b| self.resolve(b).as_name().map(str::to_string));
        match base {
            Some(b) if b.contains("Courier") => 0.6,
            _ => 0.5,
        }
    }

    /// Positioned tokens for every page, in pixels at `dpi`.
    pub fn text_tokens(&self, dpi: u32) -> Result<Vec<Token>, IngestError> {
        let mut tokens = Vec::new();
        for (index, page) in self.pages()?.iter().enumerate() {
            let content = self.page_content(page)?;
            let media = self.media_box(page);
            let glyphs = interpret_text(&content, |font| self.font_pitch(page, font))?;
            tokens.extend(glyphs_to_tokens(&glyphs, index as u32, media, dpi));
        }
        Ok(reading_order(tokens))
    }

    /// Full-page image XObjects (scanned pages), one per page when present.
    pub fn page_images(&self) -> Result<Vec<Option<PageImage>>, IngestError> {
        let mut out = Vec::new();
        for (index, page) in self.pages()?.iter().enumerate() {
            let content = self.page_content(page)?;
            let media = self.media_box(page);
            let mut found = None;
            for name in invoked_xobjects(&content) {
                let xobj = self
                    .resources(page)
                    .and_then(|r| r.get("XObject"))
                    .and_then(|x| self.dict(x))
                    .and_then(|x| x.get(&name));
                if let Some(xobj) = xobj {
                    if let Some(img) = self.decode_image(xobj, index as u32, media)? {
                        found = Some(img);
                        break;
                    }
                }
            }
            out.push(found);
        }
        Ok(out)
    }

    fn decode_image(&self, obj: &Obj, page: u32, media: [f64; 4]) -> Result<Option<PageImage>, IngestError> {
        let (dict, data) = match self.stream_data(obj)? {
            Some(s) => s,
            None => return Ok(None),
        };
        if dict.get("Subtype").and_then(Obj::as_name) != Some("Image") {
            return Ok(None);
        }
        let get = |k: &str| dict.get(k).map(|o| self.resolve(o)).and_then(Obj::as_num);
        let (w, h) = match (get("Width"), get("Height")) {
            (Some(w), Some(h)) if w >= 1.0 && h >= 1.0 => (w as usize, h as usize),
            _ => return Err(corrupt("image without dimensions")),
        };
        if get("BitsPerComponent").unwrap_or(8.0) as u32 != 8 {
            return Err(IngestError::Unsupported("image bit depth".into()));
        }
        let channels = match dict.get("ColorSpace").map(|c| self.resolve(c)) {
            Some(Obj::Name(n)) if n == "DeviceRGB" => 3,
            Some(Obj::Name(n)) if n == "DeviceGray" => 1,
            None => 1,
            _ => return Err(IngestError::Unsupported("image color space".into())),
        };
        if data.len() < w * h * channels {
            return Err(corrupt("image data shorter than declared size"));
        }
        let pixels: Vec<u8> = if channels == 1 {
            data[..w * h].to_vec()
        } else {
            data.chunks_exact(3)
                .take(w * h)
                .map(|p| ((p[0] as u32 * 299 + p[1] as u32 * 587 + p[2] as u32 * 114) / 1000) as u8)
                .collect()
        };
        let page_width_in = (media[2] - media[0]).abs() / 72.0;
        let dpi = if page_width_in > 0.0 {
            (w as f64 / page_width_in).round().max(1.0) as u32
        } else {
            300
        };
        let mut img = PageImage::new(w as u32, h as u32, dpi, pixels)
            .map_err(|e| corrupt(e.to_string()))?;
        img.page = page;
        img.tag = self.info("FixtureId");
        Ok(Some(img))
    }
}

fn find(hay: &[u8], needle: &[u8], from: usize) -> Option<usize> {
    hay.get(from..)?
        .windows(needle.len())
        .position(|w| w == needle)
        .map(|p| p + from)
}

fn decode_stream(dict: &Dict, raw: &[u8]) -> Result<Vec<u8>, IngestError> {
    let filters: Vec<String> = match dict.get("Filter") {
        None => Vec::new(),
        Some(Obj::Name(n)) => vec![n.clone()],
        Some(Obj::Array(a)) => a.iter().filter_map(|o| o.as_name().map(str::to_string)).collect(),
        Some(_) => return Err(corrupt("bad Filter entry")),
    };
    let mut data = raw.to_vec();
    for f in filters {
        match f.as_str() {
            "FlateDecode" => {
                let mut out = Vec::new();
                flate2::read::ZlibDecoder::new(&data[..])
                    .read_to_end(&mut out)
                    .map_err(|e| corrupt(format!("flate: {e}")))?;
                data = out;
            }
            other => return Err(IngestError::Unsupported(format!("stream filter {other}"))),
        }
    }
    Ok(data)
}

/// WinAnsi code point to char for the byte range that differs from Latin-1.
fn winansi(b: u8) -> char {
    const HIGH: [char; 32] = [
        '€', '\u{81}', '‚', 'ƒ', '„', '…', '†', '‡', 'ˆ', '‰', 'Š', '‹', 'Œ', '\u{8d}', 'Ž',
        '\u{8f}', '\u{90}', '‘', '’', '“', '”', '•', '–', '—', '˜', '™', 'š', '›', 'œ', '\u{9d}',
        'ž', 'Ÿ',
    ];
    match b {
        0x80..=0x9F => HIGH[(b - 0x80) as usize],
        _ => b as char,
    }
}

fn decode_text(bytes: &[u8]) -> String {
    if bytes.starts_with(&[0xFE, 0xFF]) {
        let units: Vec<u16> = bytes[2..]
            .chunks(2)
            .map(|c| u16::from_be_bytes([c[0], *c.get(1).unwrap_or(&0)]))
            .collect();
        return String::from_utf16_lossy(&units);
    }
    bytes.iter().map(|&b| winansi(b)).collect()
}

#[derive(Debug, Clone, PartialEq)]
struct Glyph {
    ch: char,
    /// Left and right edge, baseline, and size, in PDF user space.
    x0: f64,
    x1: f64,
    baseline: f64,
    size: f64,
}

type Matrix = [f64; 6];
const IDENTITY: Matrix = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0];

fn mul(m: &Matrix, n: &Matrix) -> Matrix {
    [
        m[0] * n[0] + m[1] * n[2],
        m[0] * n[1] + m[1] * n[3],
        m[2] * n[0] + m[3] * n[2],
        m[2] * n[1] + m[3] * n[3],
        m[4] * n[0] + m[5] * n[2] + n[4],
        m[4] * n[1] + m[5] * n[3] + n[5],
    ]
}

fn apply(m: &Matrix, x: f64, y: f64) -> (f64, f64) {
    (m[0] * x + m[2] * y + m[4], m[1] * x + m[3] * y + m[5])
}

struct TextState {
    tm: Matrix,
    tlm: Matrix,
    size: f64,
    pitch: f64,
    leading: f64,
    char_spacing: f64,
    word_spacing: f64,
}

fn interpret_text(content: &[u8], pitch_of: impl Fn(&str) -> f64) -> Result<Vec<Glyph>, IngestError> {
    let mut lx = Lexer::new(content);
    let mut operands: Vec<Obj> = Vec::new();
    let mut glyphs = Vec::new();
    let mut ctm = IDENTITY;
    let mut stack: Vec<Matrix> = Vec::new();
    let mut ts = TextState {
        tm: IDENTITY,
        tlm: IDENTITY,
        size: 12.0,
        pitch: 0.5,
        leading: 0.0,
        char_spacing: 0.0,
        word_spacing: 0.0,
    };

    let num = |ops: &[Obj], i: usize| ops.get(i).and_then(Obj::as_num).unwrap_or(0.0);

    while !lx.at_end() {
        // inline images carry binary data; skip to EI
        if lx.starts_with(b"BI") && lx.data.get(lx.pos + 2).is_some_and(|&b| is_ws(b)) {
            match find(lx.data, b"EI", lx.pos) {
                Some(p) => lx.pos = p + 2,
                None => return Err(corrupt("unterminated inline image")),
            }
            operands.clear();
            continue;
        }
        let obj = lx.object(false)?;
        let op = match obj {
            Obj::Op(op) => op,
            other => {
                operands.push(other);
                continue;
            }
        };
        match op.as_str() {
            "q" => stack.push(ctm),
            "Q" => ctm = stack.pop().unwrap_or(IDENTITY),
            "cm" if operands.len() >= 6 => {
                let m = [
                    num(&operands, 0),
                    num(&operands, 1),
                    num(&operands, 2),
                    num(&operands, 3),
                    num(&operands, 4),
                    num(&operands, 5),
                ];
                ctm = mul(&m, &ctm);
            }
            "BT" => {
                ts.tm = IDENTITY;
                ts.tlm = IDENTITY;
            }
            "Tf" if operands.len() >= 2 => {
                ts.size = num(&operands, 1);
                if let Some(name) = operands[0].as_name() {
                    ts.pitch = pitch_of(name);
                }
            }
            "TL" => ts.leading = num(&operands, 0),
            "Tc" => ts.char_spacing = num(&operands, 0),
            "Tw" => ts.word_spacing = num(&operands, 0),
            "Td" | "TD" => {
                let (tx, ty) = (num(&operands, 0), num(&operands, 1));
                if op == "TD" {
                    ts.leading = -ty;
                }
                ts.tlm = mul(&[1.0, 0.0, 0.0, 1.0, tx, ty], &ts.tlm);
                ts.tm = ts.tlm;
            }
            "Tm" if operands.len() >= 6 => {
                ts.tlm = [
                    num(&operands, 0),
                    num(&operands, 1),
                    num(&operands, 2),
                    num(&operands, 3),
                    num(&operands, 4),
                    num(&operands, 5),
                ];
                ts.tm = ts.tlm;
            }
            "T*" => next_line(&mut ts),
            "Tj" => {
                if let Some(Obj::Str(s)) = operands.first() {
                    show(&mut ts, &ctm, s, &mut glyphs);
                }
            }
            "'" => {
                next_line(&mut ts);
                if let Some(Obj::Str(s)) = operands.first() {
                    show(&mut ts, &ctm, s, &mut glyphs);
                }
            }
            "\"" => {
                ts.word_spacing = num(&operands, 0);
                ts.char_spacing = num(&operands, 1);
                next_line(&mut ts);
                if let Some(Obj::Str(s)) = operands.get(2) {
                    show(&mut ts, &ctm, s, &mut glyphs);
                }
            }
            "TJ" => {
                if let Some(Obj::Array(items)) = operands.first() {
                    for item in items {
                        match item {
                            Obj::Str(s) => show(&mut ts, &ctm, s, &mut glyphs),
                            Obj::Num(adj) => {
                                let dx = -adj / 1000.0 * ts.size;
                                ts.tm = mul(&[1.0, 0.0, 0.0, 1.0, dx, 0.0], &ts.tm);
                            }
                            _ => {}
                        }
                    }
                }
            }
            _ => {}
        }
        operands.clear();
    }
    Ok(glyphs)
}

fn next_line(ts: &mut TextState) {
    ts.tlm = mul(&[1.0, 0.0, 0.0, 1.0, 0.0, -ts.leading], &ts.tlm);
    ts.tm = ts.tlm;
}

fn show(ts: &mut TextState, ctm: &Matrix, bytes: &[u8], out: &mut Vec<Glyph>) {
    for &b in bytes {
        let advance = ts.pitch * ts.size;
        let trm = mul(&ts.tm, ctm);
        let (x0, y) = apply(&trm, 0.0, 0.0);
        let (x1, _) = apply(&trm, advance, 0.0);
        let scale_y = (trm[2] * trm[2] + trm[3] * trm[3]).sqrt() * ts.size.abs();
        let ch = winansi(b);
        out.push(Glyph {
            ch,
            x0: x0.min(x1),
            x1: x0.max(x1),
            baseline: y,
            size: scale_y.max(1e-6),
        });
        let mut tx = advance + ts.char_spacing;
        if b == b' ' {
            tx += ts.word_spacing;
        }
        ts.tm = mul(&[1.0, 0.0, 0.0, 1.0, tx, 0.0], &ts.tm);
    }
}

/// Group glyphs into whitespace-separated tokens. A token also breaks when
/// the next glyph is not adjacent on the same baseline.
fn glyphs_to_tokens(glyphs: &[Glyph], page: u32, media: [f64; 4], dpi: u32) -> Vec<Token> {
    let scale = dpi as f64 / 72.0;
    let top = media[3];
    let left = media[0];
    let mut tokens = Vec::new();
    let mut current: Vec<&Glyph> = Vec::new();

    let flush = |current: &mut Vec<&Glyph>, tokens: &mut Vec<Token>| {
        if current.is_empty() {
            return;
        }
        let text: String = current.iter().map(|g| g.ch).collect();
        let x0 = current.iter().map(|g| g.x0).fold(f64::INFINITY, f64::min);
        let x1 = current.iter().map(|g| g.x1).fold(f64::NEG_INFINITY, f64::max);
        let base = current[0].baseline;
        let size = current.iter().map(|g| g.size).fold(0.0, f64::max);
        let bbox = BBox::new(
            (x0 - left) * scale,
            (top - (base + 0.8 * size)) * scale,
            (x1 - left) * scale,
            (top - (base - 0.2 * size)) * scale,
        );
        tokens.push(Token {
            id: TokenId(0),
            text,
            bbox,
            page,
            confidence: 1.0,
            source: TokenSource::Embedded,
        });
        current.clear();
    };

    for g in glyphs {
        if g.ch.is_whitespace() || g.ch.is_control() {
            flush(&mut current, &mut tokens);
            continue;
        }
        if let Some(prev) = current.last() {
            let same_line = (prev.baseline - g.baseline).abs() < 0.1 * prev.size;
            let adjacent = (g.x0 - prev.x1).abs() < 0.15 * prev.size;
            if !(same_line && adjacent) {
                flush(&mut current, &mut tokens);
            }
        }
        current.push(g);
    }
    flush(&mut current, &mut tokens);
    tokens.retain(|t| t.bbox.is_valid());
    tokens
}

fn invoked_xobjects(content: &[u8]) -> Vec<String> {
    let mut lx = Lexer::new(content);
    let mut last_name = None;
    let mut names = Vec::new();
    while !lx.at_end() {
        match lx.object(false) {
            Ok(Obj::Name(n)) => last_name = Some(n),
            Ok(Obj::Op(op)) if op == "Do" => {
                if let Some(n) = last_name.take() {
                    names.push(n);
                }
            }
            Ok(_) => {}
            Err(_) => break,
        }
    }
    names
}

/// Embedded text tokens of a PDF in reading order, positioned at `dpi`.
/// A PDF without text operators yields an empty list.
pub fn extract_embedded_text(doc: &RawDocument, dpi: u32) -> Result<Vec<Token>, IngestError> {
    if doc.format != super::DocumentFormat::Pdf {
        return Err(IngestError::NotPdf);
    }
    let pdf = PdfDocument::parse(&doc.bytes)?;
    if pdf.is_encrypted() {
        return Err(IngestError::EncryptedPdf);
    }
    pdf.text_tokens(dpi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_pdf(content: &str, extra_trailer: &str) -> Vec<u8> {
        let objs = [
            "<< /Type /Catalog /Pages 2 0 R >>".to_string(),
            "<< /Type /Pages /Kids [3 0 R] /Count 1 /MediaBox [0 0 612 792] >>".to_string(),
            "<< /Type /Page /Parent 2 0 R /Contents 4 0 R /Resources << /Font << /F1 5 0 R >> >> >>"
                .to_string(),
            format!("<< /Length {} >>\nstream\n{}\nendstream", content.len(), content),
            "<< /Type /Font /Subtype /Type1 /BaseFont /Courier >>".to_string(),
        ];
        let mut out = b"%PDF-1.4\n".to_vec();
        for (i, o) in objs.iter().enumerate() {
            out.extend_from_slice(format!("{} 0 obj\n{}\nendobj\n", i + 1, o).as_bytes());
        }
        out.extend_from_slice(
            format!("trailer\n<< /Size 6 /Root 1 0 R {extra_trailer} >>\nstartxref\n0\n%%EOF\n").as_bytes(),
        );
        out
    }

    fn doc(bytes: Vec<u8>) -> RawDocument {
        RawDocument::from_bytes(bytes, "t.pdf")
    }

    #[test]
    fn extracts_tokens_in_order() {
        let pdf = minimal_pdf("BT /F1 10 Tf 72 700 Td (INVOICE No: 42) Tj ET", "");
        let tokens = extract_embedded_text(&doc(pdf), 72).unwrap();
        let texts: Vec<_> = tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["INVOICE", "No:", "42"]);
        assert!(tokens.windows(2).all(|w| w[0].bbox.x0 < w[1].bbox.x0));
        // Courier: 6pt per glyph at 10pt, 72 dpi means 1px per point
        assert!((tokens[0].bbox.x0 - 72.0).abs() < 1e-9);
        assert!((tokens[0].bbox.x1 - 114.0).abs() < 1e-9);
        assert!((tokens[0].bbox.y0 - (792.0 - 708.0)).abs() < 1e-9);
        assert!(tokens.iter().all(|t| t.confidence == 1.0));
    }

    #[test]
    fn page_size_from_media_box() {
        let pdf = PdfDocument::parse(&minimal_pdf("", "")).unwrap();
        assert_eq!(pdf.page_sizes(300).unwrap(), vec![(2550.0, 3300.0)]);
    }

    #[test]
    fn tj_arrays_and_line_moves() {
        let pdf = minimal_pdf(
            "BT /F1 10 Tf 14 TL 72 700 Td [(Hello) -600 (World)] TJ T* (Next) Tj ET",
            "",
        );
        let tokens = extract_embedded_text(&doc(pdf), 72).unwrap();
        let texts: Vec<_> = tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["Hello", "World", "Next"]);
        assert!(tokens[2].bbox.y0 > tokens[0].bbox.y0);
    }

    #[test]
    fn escapes_and_hex_strings() {
        let pdf = minimal_pdf(r"BT /F1 10 Tf 72 700 Td (a\(b\)\101) Tj 0 -20 Td <48 49> Tj ET", "");
        let tokens = extract_embedded_text(&doc(pdf), 72).unwrap();
        let texts: Vec<_> = tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["a(b)A", "HI"]);
    }

    #[test]
    fn no_text_yields_empty() {
        let pdf = minimal_pdf("0 0 m 100 100 l S", "");
        assert!(extract_embedded_text(&doc(pdf), 300).unwrap().is_empty());
    }

    #[test]
    fn truncated_is_corrupt() {
        let pdf = minimal_pdf("BT /F1 10 Tf 72 700 Td (X) Tj ET", "");
        let cut = pdf[..pdf.len() / 2].to_vec();
        assert!(matches!(
            extract_embedded_text(&doc(cut), 300),
            Err(IngestError::CorruptPdf(_))
        ));
    }

    #[test]
    fn encrypted_is_reported() {
        let pdf = minimal_pdf("BT ET", "/Encrypt << /Filter /Standard >>");
        assert!(matches!(
            extract_embedded_text(&doc(pdf), 300),
            Err(IngestError::EncryptedPdf)
        ));
    }

    #[test]
    fn flate_streams_decode() {
        use flate2::write::ZlibEncoder;
        use std::io::Write;
        let content = b"BT /F1 10 Tf 72 700 Td (Total) Tj ET";
        let mut enc = ZlibEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(content).unwrap();
        let z = enc.finish().unwrap();
        let mut out = b"%PDF-1.4\n1 0 obj\n<< /Type /Catalog /Pages 2 0 R >>\nendobj\n".to_vec();
        out.extend_from_slice(b"2 0 obj\n<< /Type /Pages /Kids [3 0 R] /Count 1 >>\nendobj\n");
        out.extend_from_slice(b"3 0 obj\n<< /Type /Page /Parent 2 0 R /Contents 4 0 R >>\nendobj\n");
        out.extend_from_slice(
            format!("4 0 obj\n<< /Length {} /Filter /FlateDecode >>\nstream\n", z.len()).as_bytes(),
        );
        out.extend_from_slice(&z);
        out.extend_from_slice(b"\nendstream\nendobj\ntrailer\n<< /Root 1 0 R >>\n%%EOF\n");
        let tokens = extract_embedded_text(&doc(out), 72).unwrap();
        assert_eq!(tokens.len(), 1);
        assert_eq!(tokens[0].text, "Total");
    }

    #[test]
    fn info_dictionary_and_page_count() {
        let mut pdf = minimal_pdf("BT ET", "/Info 6 0 R");
        let tail = pdf.split_off(pdf.windows(7).position(|w| w == b"trailer").unwrap());
        pdf.extend_from_slice(b"6 0 obj\n<< /FixtureId (inv-0007) >>\nendobj\n");
        pdf.extend_from_slice(&tail);
        let parsed = PdfDocument::parse(&pdf).unwrap();
        assert_eq!(parsed.info("FixtureId").as_deref(), Some("inv-0007"));
        assert_eq!(parsed.page_count().unwrap(), 1);
    }
}
