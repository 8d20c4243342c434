//! Lightweight lossless lexer shared by comment stripping and the mutation
//! operators.
//!
//! The lexer is not a parser. It recognises identifiers, keywords, numbers,
//! string and character literals, comments and punctuation for each of the
//! supported languages, and nothing more. Every byte of the input belongs to
//! exactly one token, so concatenating the token texts reproduces the source.

use crate::lang::Language;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommentKind {
    /// `//` or `#` to end of line.
    Line,
    /// `/* ... */`, possibly nested in Kotlin, Scala and Swift.
    Block,
    /// Ruby `=begin`/`=end` and Perl POD (`=pod` ... `=cut`).
    Embedded,
    /// Python triple-quoted string in statement position.
    Docstring,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Whitespace,
    Ident,
    Keyword,
    Number,
    Str,
    Comment(CommentKind),
    Punct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
    /// For string literals: the byte range between the delimiters.
    pub content: Option<(usize, usize)>,
    /// Token sits on a C/C++/C# preprocessor line.
    pub directive: bool,
}

impl Token {
    pub fn is_comment(&self) -> bool {
        matches!(self.kind, TokenKind::Comment(_))
    }

    pub fn is_trivia(&self) -> bool {
        self.kind == TokenKind::Whitespace || self.is_comment()
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Debug, Clone)]
pub struct Lexed<'a> {
    pub src: &'a str,
    pub lang: Language,
    pub tokens: Vec<Token>,
    /// A block comment ran to end of input without its terminator.
    pub unterminated_comment: bool,
}

impl<'a> Lexed<'a> {
    pub fn text(&self, index: usize) -> &'a str {
        let t = &self.tokens[index];
        &self.src[t.start..t.end]
    }

    /// Index of the nearest non-trivia token before `index`.
    pub fn prev_significant(&self, index: usize) -> Option<usize> {
        (0..index).rev().find(|&i| !self.tokens[i].is_trivia())
    }

    /// Index of the nearest non-trivia token after `index`.
    pub fn next_significant(&self, index: usize) -> Option<usize> {
        (index + 1..self.tokens.len()).find(|&i| !self.tokens[i].is_trivia())
    }

    /// Whether a newline occurs strictly between tokens `a` and `b`.
    pub fn newline_between(&self, a: usize, b: usize) -> bool {
        let from = self.tokens[a].end;
        let to = self.tokens[b].start;
        from < to && self.src[from..to].contains('\n')
    }

    pub fn is_punct(&self, index: usize, text: &str) -> bool {
        self.tokens[index].kind == TokenKind::Punct && self.text(index) == text
    }

    pub fn is_keyword(&self, index: usize, text: &str) -> bool {
        self.tokens[index].kind == TokenKind::Keyword && self.text(index) == text
    }

    /// Given an opening bracket token, the index of its matching closer.
    pub fn matching_close(&self, open: usize) -> Option<usize> {
        let (o, c) = match self.text(open) {
            "(" => ("(", ")"),
            "[" => ("[", "]"),
            "{" => ("{", "}"),
            _ => return None,
        };
        let mut depth = 0usize;
        for i in open..self.tokens.len() {
            if self.tokens[i].kind != TokenKind::Punct {
                continue;
            }
            let t = self.text(i);
            if t == o {
                depth += 1;
            } else if t == c {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
        }
        None
    }

    /// Byte offset of the start of the line containing `offset`.
    pub fn line_start(&self, offset: usize) -> usize {
        self.src[..offset].rfind('\n').map_or(0, |p| p + 1)
    }

    /// Byte offset just past the newline ending the line containing `offset`
    /// (or end of input).
    pub fn line_end_inclusive(&self, offset: usize) -> usize {
        self.src[offset..]
            .find('\n')
            .map_or(self.src.len(), |p| offset + p + 1)
    }

    /// Whether only horizontal whitespace precedes `offset` on its line.
    pub fn starts_line(&self, offset: usize) -> bool {
        self.src[self.line_start(offset)..offset]
            .bytes()
            .all(|b| b == b' ' || b == b'\t')
    }
}

pub fn lex(src: &str, lang: Language) -> Lexed<'_> {
    let mut lexer = Lexer {
        src,
        b: src.as_bytes(),
        pos: 0,
        lang,
        out: Vec::new(),
        unterminated: false,
    };
    lexer.run();
    let mut tokens = lexer.out;
    if lang == Language::Python {
        mark_docstrings(src, &mut tokens);
    }
    if matches!(lang, Language::Cpp | Language::CSharp) {
        mark_directives(src, &mut tokens);
    }
    Lexed {
        src,
        lang,
        tokens,
        unterminated_comment: lexer.unterminated,
    }
}

const COMMON_OPERATORS: &[&str] = &[
    ">>>=", "<<=", ">>=", ">>>", "===", "!==", "**=", "...", "<=>", "&&=", "||=", "??=", "::",
    "->", "=>", "==", "!=", "<=", ">=", "&&", "||", "<<", ">>", "++", "--", "+=", "-=", "*=",
    "/=", "%=", "&=", "|=", "^=", "**", "??", "?.",
];

fn extra_operators(lang: Language) -> &'static [&'static str] {
    match lang {
        Language::Python => &["//=", "//", ":=", "@="],
        Language::Kotlin => &["!!", "?:", "..<", ".."],
        Language::Go => &["<-", ":=", "&^=", "&^"],
        Language::Scala => &["<-"],
        Language::Ruby => &["=~", "!~", ".."],
        Language::Perl => &["=~", "!~", "..", ".="],
        Language::Php => &["?->", ".="],
        Language::Swift => &["..<"],
        Language::Cpp => &["->*", ".*"],
        _ => &[],
    }
}

struct Lexer<'a> {
    src: &'a str,
    b: &'a [u8],
    pos: usize,
    lang: Language,
    out: Vec<Token>,
    unterminated: bool,
}

impl<'a> Lexer<'a> {
    fn run(&mut self) {
        while self.pos < self.b.len() {
            let start = self.pos;
            let c = self.b[start];
            if is_space(c) {
                while self.pos < self.b.len() && is_space(self.b[self.pos]) {
                    self.pos += 1;
                }
                self.push(TokenKind::Whitespace, start, None);
                continue;
            }
            if self.at_column_zero() && self.embedded_doc() {
                continue;
            }
            if self.comment() || self.string() {
                continue;
            }
            if self.is_ident_start(c) {
                self.ident();
                continue;
            }
            if c.is_ascii_digit() || (c == b'.' && self.peek(1).is_some_and(|d| d.is_ascii_digit()))
            {
                self.number();
                continue;
            }
            self.punct();
        }
    }

    fn push(&mut self, kind: TokenKind, start: usize, content: Option<(usize, usize)>) {
        self.out.push(Token {
            kind,
            start,
            end: self.pos,
            content,
            directive: false,
        });
    }

    fn peek(&self, ahead: usize) -> Option<u8> {
        self.b.get(self.pos + ahead).copied()
    }

    fn rest(&self) -> &'a [u8] {
        &self.b[self.pos..]
    }

    fn at_column_zero(&self) -> bool {
        self.pos == 0 || self.b[self.pos - 1] == b'\n'
    }

    fn end_of_line(&self, from: usize) -> usize {
        self.b[from..]
            .iter()
            .position(|&c| c == b'\n')
            .map_or(self.b.len(), |p| from + p)
    }

    /// Ruby `=begin`..`=end`, Perl POD `=word`..`=cut`.
    fn embedded_doc(&mut self) -> bool {
        let rest = self.rest();
        let (opens, terminator): (bool, &[u8]) = match self.lang {
            Language::Ruby => (
                rest.starts_with(b"=begin")
                    && rest.get(6).is_none_or(|c| c.is_ascii_whitespace()),
                b"=end",
            ),
            Language::Perl => (
                rest.len() > 1 && rest[0] == b'=' && rest[1].is_ascii_alphabetic(),
                b"=cut",
            ),
            _ => return false,
        };
        if !opens {
            return false;
        }
        let start = self.pos;
        let mut line = self.end_of_line(start);
        loop {
            if line >= self.b.len() {
                if self.lang == Language::Ruby {
                    self.unterminated = true;
                }
                self.pos = self.b.len();
                break;
            }
            let next = line + 1;
            let tail = &self.b[next..];
            if tail.starts_with(terminator)
                && tail
                    .get(terminator.len())
                    .is_none_or(|c| c.is_ascii_whitespace())
            {
                self.pos = self.end_of_line(next);
                break;
            }
            line = self.end_of_line(next);
        }
        self.push(TokenKind::Comment(CommentKind::Embedded), start, None);
        true
    }

    fn has_c_comments(&self) -> bool {
        !matches!(
            self.lang,
            Language::Python | Language::Ruby | Language::Perl
        )
    }

    fn comment(&mut self) -> bool {
        let start = self.pos;
        let rest = self.rest();
        if self.has_c_comments() && rest.starts_with(b"/*") {
            let nested = matches!(
                self.lang,
                Language::Kotlin | Language::Scala | Language::Swift
            );
            let mut depth = 0usize;
            let mut i = start;
            loop {
                if i + 1 >= self.b.len() {
                    self.unterminated = true;
                    self.pos = self.b.len();
                    break;
                }
                if self.b[i] == b'/' && self.b[i + 1] == b'*' && (depth == 0 || nested) {
                    depth += 1;
                    i += 2;
                } else if self.b[i] == b'*' && self.b[i + 1] == b'/' {
                    depth -= 1;
                    i += 2;
                    if depth == 0 {
                        self.pos = i;
                        break;
                    }
                } else {
                    i += 1;
                }
            }
            self.push(TokenKind::Comment(CommentKind::Block), start, None);
            return true;
        }
        let line_comment = match self.lang {
            Language::Python | Language::Ruby => rest[0] == b'#',
            Language::Perl => rest[0] == b'#' && !(start > 0 && self.b[start - 1] == b'$'),
            Language::Php => {
                rest.starts_with(b"//") || (rest[0] == b'#' && rest.get(1) != Some(&b'['))
            }
            _ => rest.starts_with(b"//"),
        };
        if line_comment {
            self.pos = self.end_of_line(start);
            self.push(TokenKind::Comment(CommentKind::Line), start, None);
            return true;
        }
        false
    }

    fn string(&mut self) -> bool {
        match self.lang {
            Language::Python => self.python_string(),
            Language::Cpp => self.cpp_string(),
            Language::CSharp => self.csharp_string(),
            Language::Swift => self.swift_string(),
            Language::Java | Language::Kotlin | Language::Scala => self.jvm_string(),
            Language::Go => self.simple_string(&[(b'"', false), (b'\'', false), (b'`', true)], b"`"),
            Language::JavaScript | Language::TypeScript => {
                self.simple_string(&[(b'"', false), (b'\'', false), (b'`', true)], b"")
            }
            Language::Php | Language::Perl | Language::Ruby => {
                self.simple_string(&[(b'"', true), (b'\'', true), (b'`', true)], b"")
            }
        }
    }

    /// Scans a literal whose body starts at `body` and ends at `close`.
    /// Returns `(content_end, token_end)`.
    fn scan_body(
        &self,
        body: usize,
        close: &[u8],
        escapes: bool,
        multiline: bool,
        doubled_quote_escape: bool,
    ) -> (usize, usize) {
        let mut i = body;
        while i < self.b.len() {
            let c = self.b[i];
            if escapes && c == b'\\' {
                i += 2;
                continue;
            }
            if doubled_quote_escape && c == b'"' && self.b.get(i + 1) == Some(&b'"') {
                i += 2;
                continue;
            }
            if self.b[i..].starts_with(close) {
                return (i, i + close.len());
            }
            if !multiline && c == b'\n' {
                return (i, i);
            }
            i += 1;
        }
        (self.b.len(), self.b.len())
    }

    fn emit_string(&mut self, start: usize, body: usize, content_end: usize, end: usize) -> bool {
        self.pos = end.min(self.b.len());
        let content_end = content_end.max(body).min(self.pos);
        self.push(TokenKind::Str, start, Some((body, content_end)));
        true
    }

    fn python_string(&mut self) -> bool {
        let start = self.pos;
        let mut i = start;
        while i < self.b.len() && i - start < 2 && matches!(self.b[i], b'r' | b'R' | b'b' | b'B' | b'u' | b'U' | b'f' | b'F')
        {
            i += 1;
        }
        let Some(&q) = self.b.get(i) else {
            return false;
        };
        if q != b'"' && q != b'\'' {
            return false;
        }
        let triple = [q, q, q];
        if self.b[i..].starts_with(&triple) {
            let body = i + 3;
            let (ce, end) = self.scan_body(body, &triple, true, true, false);
            return self.emit_string(start, body, ce, end);
        }
        let body = i + 1;
        let (ce, end) = self.scan_body(body, &[q], true, false, false);
        self.emit_string(start, body, ce, end)
    }

    fn cpp_string(&mut self) -> bool {
        let start = self.pos;
        let mut i = start;
        for prefix in [&b"u8"[..], b"u", b"U", b"L"] {
            if self.b[i..].starts_with(prefix) {
                let after = i + prefix.len();
                if matches!(self.b.get(after), Some(b'"' | b'\'' | b'R')) {
                    i = after;
                }
                break;
            }
        }
        if self.b.get(i) == Some(&b'R') && self.b.get(i + 1) == Some(&b'"') {
            let delim_start = i + 2;
            if let Some(paren) = self.b[delim_start..].iter().position(|&c| c == b'(') {
                let delim = &self.src[delim_start..delim_start + paren];
                let body = delim_start + paren + 1;
                let close = format!("){delim}\"");
                let (ce, end) = self.scan_body(body, close.as_bytes(), false, true, false);
                return self.emit_string(start, body, ce, end);
            }
        }
        match self.b.get(i) {
            Some(&q @ (b'"' | b'\'')) => {
                let body = i + 1;
                let (ce, end) = self.scan_body(body, &[q], true, false, false);
                self.emit_string(start, body, ce, end)
            }
            _ => false,
        }
    }

    fn csharp_string(&mut self) -> bool {
        let start = self.pos;
        let mut i = start;
        let mut verbatim = false;
        while i < self.b.len() && i - start < 2 && matches!(self.b[i], b'@' | b'$') {
            verbatim |= self.b[i] == b'@';
            i += 1;
        }
        match self.b.get(i) {
            Some(b'"') => {
                let body = i + 1;
                let (ce, end) = if verbatim {
                    self.scan_body(body, b"\"", false, true, true)
                } else {
                    self.scan_body(body, b"\"", true, false, false)
                };
                self.emit_string(start, body, ce, end)
            }
            Some(b'\'') if i == start => {
                let body = i + 1;
                let (ce, end) = self.scan_body(body, b"'", true, false, false);
                self.emit_string(start, body, ce, end)
            }
            _ => false,
        }
    }

    fn swift_string(&mut self) -> bool {
        let start = self.pos;
        let hashes = self.rest().iter().take_while(|&&c| c == b'#').count();
        let i = start + hashes;
        if self.b.get(i) != Some(&b'"') {
            return false;
        }
        let pad = "#".repeat(hashes);
        let escapes = hashes == 0;
        if self.b[i..].starts_with(b"\"\"\"") {
            let body = i + 3;
            let close = format!("\"\"\"{pad}");
            let (ce, end) = self.scan_body(body, close.as_bytes(), escapes, true, false);
            return self.emit_string(start, body, ce, end);
        }
        let body = i + 1;
        let close = format!("\"{pad}");
        let (ce, end) = self.scan_body(body, close.as_bytes(), escapes, false, false);
        self.emit_string(start, body, ce, end)
    }

    fn jvm_string(&mut self) -> bool {
        let start = self.pos;
        let rest = self.rest();
        if rest.starts_with(b"\"\"\"") {
            let body = start + 3;
            let escapes = self.lang == Language::Java;
            let (ce, end) = self.scan_body(body, b"\"\"\"", escapes, true, false);
            return self.emit_string(start, body, ce, end);
        }
        match rest[0] {
            b'"' => {
                let body = start + 1;
                let (ce, end) = self.scan_body(body, b"\"", true, false, false);
                self.emit_string(start, body, ce, end)
            }
            b'\'' => {
                // Scala symbol literals ('sym) are not character literals.
                if self.lang == Language::Scala
                    && !(rest.get(1) == Some(&b'\\') || rest.get(2) == Some(&b'\''))
                {
                    return false;
                }
                let body = start + 1;
                let (ce, end) = self.scan_body(body, b"'", true, false, false);
                self.emit_string(start, body, ce, end)
            }
            _ => false,
        }
    }

    /// `quotes` lists (quote byte, may span lines); quotes listed in `raw`
    /// take no backslash escapes.
    fn simple_string(&mut self, quotes: &[(u8, bool)], raw: &[u8]) -> bool {
        let start = self.pos;
        let c = self.b[start];
        let Some(&(q, multiline)) = quotes.iter().find(|(q, _)| *q == c) else {
            return false;
        };
        let body = start + 1;
        let (ce, end) = self.scan_body(body, &[q], !raw.contains(&q), multiline, false);
        self.emit_string(start, body, ce, end)
    }

    fn is_ident_start(&self, c: u8) -> bool {
        c.is_ascii_alphabetic() || c == b'_' || c >= 0x80 || (c == b'$' && self.dollar_in_ident())
    }

    fn dollar_in_ident(&self) -> bool {
        matches!(
            self.lang,
            Language::Java | Language::JavaScript | Language::TypeScript | Language::Scala
        )
    }

    fn ident(&mut self) {
        let start = self.pos;
        while self.pos < self.b.len() {
            let c = self.b[self.pos];
            if c.is_ascii_alphanumeric() || c == b'_' || c >= 0x80 || (c == b'$' && self.dollar_in_ident()) {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.lang == Language::Ruby
            && matches!(self.peek(0), Some(b'?' | b'!'))
            && !matches!(self.peek(1), Some(b'=' | b'~'))
        {
            self.pos += 1;
        }
        let word = &self.src[start..self.pos];
        let kind = if self.lang.is_keyword(word) && !self.after_member_access_or_sigil(start) {
            TokenKind::Keyword
        } else {
            TokenKind::Ident
        };
        self.push(kind, start, None);
    }

    fn after_member_access_or_sigil(&self, start: usize) -> bool {
        if start > 0 && matches!(self.b[start - 1], b'$' | b'@' | b'%') {
            return true;
        }
        self.out
            .iter()
            .rev()
            .find(|t| !t.is_trivia())
            .map(|t| &self.src[t.start..t.end])
            .is_some_and(|p| matches!(p, "." | "->" | "?." | "?->" | "::"))
    }

    fn number(&mut self) {
        let start = self.pos;
        let hex = self.rest().starts_with(b"0x") || self.rest().starts_with(b"0X");
        while self.pos < self.b.len() {
            let c = self.b[self.pos];
            let next = self.peek(1);
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.pos += 1;
                if !hex && (c == b'e' || c == b'E') && matches!(self.peek(0), Some(b'+' | b'-'))
                    && self.peek(1).is_some_and(|d| d.is_ascii_digit())
                {
                    self.pos += 1;
                }
            } else if (c == b'.' && next.is_some_and(|d| d.is_ascii_digit()))
                || (c == b'\'' && self.lang == Language::Cpp && next.is_some_and(|d| d.is_ascii_alphanumeric()))
            {
                self.pos += 1;
            } else {
                break;
            }
        }
        self.push(TokenKind::Number, start, None);
    }

    fn punct(&mut self) {
        let start = self.pos;
        let rest = self.rest();
        let best = extra_operators(self.lang)
            .iter()
            .chain(COMMON_OPERATORS)
            .filter(|op| rest.starts_with(op.as_bytes()))
            .map(|op| op.len())
            .max();
        let len = match best {
            Some(n) => n,
            None => utf8_len(rest[0]),
        };
        self.pos += len;
        self.push(TokenKind::Punct, start, None);
    }
}

fn is_space(c: u8) -> bool {
    matches!(c, b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c)
}

fn utf8_len(first: u8) -> usize {
    match first {
        0xf0..=0xff => 4,
        0xe0..=0xef => 3,
        0xc0..=0xdf => 2,
        _ => 1,
    }
}

/// Triple-quoted strings that form a whole statement are docstrings.
fn mark_docstrings(src: &str, tokens: &mut [Token]) {
    let mut depth: i32 = 0;
    for i in 0..tokens.len() {
        let t = tokens[i];
        match t.kind {
            TokenKind::Punct => match &src[t.start..t.end] {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => depth = (depth - 1).max(0),
                _ => {}
            },
            TokenKind::Str if depth == 0 && is_triple_quoted(&src[t.start..t.end]) => {
                let line_start = src[..t.start].rfind('\n').map_or(0, |p| p + 1);
                let leads_line = src[line_start..t.start]
                    .bytes()
                    .all(|b| b == b' ' || b == b'\t');
                let continued = line_start >= 2 && src[..line_start - 1].ends_with('\\');
                let ends_line = tokens[i + 1..]
                    .iter()
                    .take_while(|n| n.is_trivia())
                    .map(|n| &src[n.start..n.end])
                    .collect::<String>()
                    .contains('\n')
                    || tokens[i + 1..].iter().all(|n| n.is_trivia());
                if leads_line && !continued && ends_line {
                    tokens[i].kind = TokenKind::Comment(CommentKind::Docstring);
                    tokens[i].content = None;
                }
            }
            _ => {}
        }
    }
}

fn is_triple_quoted(text: &str) -> bool {
    let body = text.trim_start_matches(|c: char| c.is_ascii_alphabetic());
    body.starts_with("\"\"\"") || body.starts_with("'''")
}

fn mark_directives(src: &str, tokens: &mut [Token]) {
    let mut in_directive = false;
    for t in tokens.iter_mut() {
        let text = &src[t.start..t.end];
        if t.kind == TokenKind::Whitespace {
            if text.contains('\n') {
                // A trailing backslash continues the directive.
                in_directive = in_directive && src[..t.start].ends_with('\\');
            }
            t.directive = in_directive;
            continue;
        }
        if !in_directive && text == "#" {
            let line_start = src[..t.start].rfind('\n').map_or(0, |p| p + 1);
            in_directive = src[line_start..t.start].bytes().all(|b| b == b' ' || b == b'\t');
        }
        t.directive = in_directive;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str, lang: Language) -> Vec<(TokenKind, String)> {
        let lx = lex(src, lang);
        lx.tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.kind != TokenKind::Whitespace)
            .map(|(i, t)| (t.kind, lx.text(i).to_string()))
            .collect()
    }

    #[test]
    fn lossless_for_every_language() {
        let src = "a = \"x // y # z\" /* c */ // d\n# e\n'q' `r` @\"v\"\"w\" =begin\n";
        for lang in Language::ALL {
            let lx = lex(src, lang);
            let joined: String = (0..lx.tokens.len()).map(|i| lx.text(i)).collect();
            assert_eq!(joined, src, "{lang}");
        }
    }

    #[test]
    fn python_hash_inside_string_is_not_comment() {
        let toks = kinds("s = \"# not a comment\"  # real", Language::Python);
        assert_eq!(toks[2], (TokenKind::Str, "\"# not a comment\"".into()));
        assert_eq!(toks[3], (TokenKind::Comment(CommentKind::Line), "# real".into()));
    }

    #[test]
    fn python_docstring_only_in_statement_position() {
        let src = "def f():\n    \"\"\"doc\"\"\"\n    x = \"\"\"value\"\"\"\n    return x\n";
        let toks = kinds(src, Language::Python);
        assert!(toks.contains(&(TokenKind::Comment(CommentKind::Docstring), "\"\"\"doc\"\"\"".into())));
        assert!(toks.contains(&(TokenKind::Str, "\"\"\"value\"\"\"".into())));
    }

    #[test]
    fn floor_division_is_an_operator_in_python() {
        let toks = kinds("a // b", Language::Python);
        assert_eq!(toks[1], (TokenKind::Punct, "//".into()));
    }

    #[test]
    fn nested_block_comments_in_swift_but_not_java() {
        let src = "/* a /* b */ c */ x";
        let swift = kinds(src, Language::Swift);
        assert_eq!(swift.len(), 2);
        let java = kinds(src, Language::Java);
        assert_eq!(java[0].1, "/* a /* b */");
    }

    #[test]
    fn unterminated_block_comment_runs_to_end() {
        let lx = lex("int x; /* open", Language::Java);
        assert!(lx.unterminated_comment);
        assert_eq!(lx.text(lx.tokens.len() - 1), "/* open");
    }

    #[test]
    fn perl_pod_and_last_index_sigil() {
        let src = "my $n = $#arr;\n=pod\n\ndocs # here\n\n=cut\nprint 1; # c\n";
        let toks = kinds(src, Language::Perl);
        assert!(toks.iter().any(|(k, t)| *k == TokenKind::Comment(CommentKind::Embedded) && t.ends_with("=cut")));
        assert!(!toks.iter().any(|(_, t)| t.starts_with("#arr")));
        assert_eq!(toks.last().unwrap().1, "# c");
    }

    #[test]
    fn ruby_begin_end_block() {
        let src = "=begin\nnotes\n=end\nputs 1\n";
        let toks = kinds(src, Language::Ruby);
        assert_eq!(toks[0], (TokenKind::Comment(CommentKind::Embedded), "=begin\nnotes\n=end".into()));
    }

    #[test]
    fn cpp_raw_string_and_directive() {
        let src = "#include <vector>\nauto s = R\"x(// not)x\";";
        let lx = lex(src, Language::Cpp);
        assert!(lx.tokens.iter().all(|t| !t.is_comment()));
        assert!(lx.tokens[0].directive);
        let s = lx.tokens.iter().find(|t| t.kind == TokenKind::Str).unwrap();
        assert_eq!(&src[s.content.unwrap().0..s.content.unwrap().1], "// not");
    }

    #[test]
    fn keywords_after_member_access_are_identifiers() {
        let toks = kinds("obj.class + $this->list", Language::Php);
        assert_eq!(toks[2], (TokenKind::Ident, "class".into()));
        assert!(toks.contains(&(TokenKind::Ident, "list".into())));
    }

    #[test]
    fn php_attribute_is_not_a_comment() {
        let toks = kinds("#[Pure]\nfunction f() {} # c", Language::Php);
        assert_eq!(toks[0], (TokenKind::Punct, "#".into()));
        assert_eq!(toks.last().unwrap().1, "# c");
    }

    #[test]
    fn csharp_verbatim_string() {
        let toks = kinds("var p = @\"C:\\dir\"\"//x\"; // c", Language::CSharp);
        assert_eq!(toks[3].0, TokenKind::Str);
        assert_eq!(toks[3].1, "@\"C:\\dir\"\"//x\"");
    }
}
