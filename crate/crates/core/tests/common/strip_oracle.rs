//! Reference comment stripper: a character scanner driven by a per-language
//! table of comment and string delimiters.

use racg::Language;

struct StrForm {
    open: &'static str,
    close: &'static str,
    escapes: bool,
    multiline: bool,
    /// `""` inside the literal stands for one quote.
    doubled: bool,
}

/// Single-line literal.
const fn s(open: &'static str, close: &'static str, escapes: bool) -> StrForm {
    StrForm {
        open,
        close,
        escapes,
        multiline: false,
        doubled: false,
    }
}

/// Literal that may span lines.
const fn m(open: &'static str, close: &'static str, escapes: bool) -> StrForm {
    StrForm {
        multiline: true,
        ..s(open, close, escapes)
    }
}

struct Syntax {
    line: &'static [&'static str],
    block: bool,
    nested: bool,
    strings: Vec<StrForm>,
}

fn syntax(lang: Language) -> Syntax {
    use Language::*;
    let c_line: &[&str] = &["//"];
    match lang {
        Python => Syntax {
            line: &["#"],
            block: false,
            nested: false,
            strings: vec![m("\"\"\"", "\"\"\"", true), m("'''", "'''", true), s("\"", "\"", true), s("'", "'", true)],
        },
        Ruby => Syntax {
            line: &["#"],
            block: false,
            nested: false,
            strings: vec![m("\"", "\"", true), m("'", "'", true), m("`", "`", true)],
        },
        Perl => Syntax {
            line: &["#"],
            block: false,
            nested: false,
            strings: vec![m("\"", "\"", true), m("'", "'", true), m("`", "`", true)],
        },
        Php => Syntax {
            line: &["//", "#"],
            block: true,
            nested: false,
            strings: vec![m("\"", "\"", true), m("'", "'", true), m("`", "`", true)],
        },
        Java => Syntax {
            line: c_line,
            block: true,
            nested: false,
            strings: vec![m("\"\"\"", "\"\"\"", true), s("\"", "\"", true), s("'", "'", true)],
        },
        Kotlin | Scala => Syntax {
            line: c_line,
            block: true,
            nested: true,
            strings: vec![m("\"\"\"", "\"\"\"", false), s("\"", "\"", true), s("'", "'", true)],
        },
        Swift => Syntax {
            line: c_line,
            block: true,
            nested: true,
            strings: vec![
                m("#\"\"\"", "\"\"\"#", false),
                s("#\"", "\"#", false),
                m("\"\"\"", "\"\"\"", true),
                s("\"", "\"", true),
            ],
        },
        Go => Syntax {
            line: c_line,
            block: true,
            nested: false,
            strings: vec![m("`", "`", false), s("\"", "\"", true), s("'", "'", true)],
        },
        JavaScript | TypeScript => Syntax {
            line: c_line,
            block: true,
            nested: false,
            strings: vec![m("`", "`", true), s("\"", "\"", true), s("'", "'", true)],
        },
        CSharp => Syntax {
            line: c_line,
            block: true,
            nested: false,
            strings: vec![
                StrForm {
                    open: "@\"",
                    close: "\"",
                    escapes: false,
                    multiline: true,
                    doubled: true,
                },
                StrForm {
                    open: "$@\"",
                    close: "\"",
                    escapes: false,
                    multiline: true,
                    doubled: true,
                },
                s("$\"", "\"", true),
                s("\"", "\"", true),
                s("'", "'", true),
            ],
        },
        Cpp => Syntax {
            line: c_line,
            block: true,
            nested: false,
            strings: vec![s("\"", "\"", true), s("'", "'", true)],
        },
    }
}

/// Byte ranges of every comment in `code`.
pub fn comment_spans(code: &str, lang: Language) -> Vec<(usize, usize)> {
    let syn = syntax(lang);
    let b = code.as_bytes();
    let at = |i: usize, pat: &str| b[i..].starts_with(pat.as_bytes());
    let line_end = |i: usize| b[i..].iter().position(|&c| c == b'\n').map_or(b.len(), |p| i + p);
    let mut spans = Vec::new();
    let mut triple_strings = Vec::new();
    let mut i = 0;
    'scan: while i < b.len() {
        let col0 = i == 0 || b[i - 1] == b'\n';
        // Ruby =begin/=end and Perl POD blocks.
        let embedded = match lang {
            Language::Ruby if col0 && at(i, "=begin") => Some("=end"),
            Language::Perl if col0 && b[i] == b'=' && b.get(i + 1).is_some_and(u8::is_ascii_alphabetic) => Some("=cut"),
            _ => None,
        };
        if let Some(term) = embedded {
            let mut j = line_end(i);
            while j < b.len() {
                if at(j + 1, term) {
                    j = line_end(j + 1);
                    break;
                }
                j = line_end(j + 1);
            }
            spans.push((i, j));
            i = j;
            continue;
        }
        if syn.block && at(i, "/*") {
            let mut depth = 0;
            let mut j = i;
            while j + 1 < b.len() {
                if at(j, "/*") && (depth == 0 || syn.nested) {
                    depth += 1;
                    j += 2;
                } else if at(j, "*/") {
                    depth -= 1;
                    j += 2;
                    if depth == 0 {
                        break;
                    }
                } else {
                    j += 1;
                }
            }
            let end = if depth == 0 { j } else { b.len() };
            spans.push((i, end));
            i = end;
            continue;
        }
        for opener in syn.line {
            if at(i, opener) {
                let attribute = lang == Language::Php && at(i, "#[");
                let array_index = lang == Language::Perl && i > 0 && b[i - 1] == b'$';
                if !attribute && !array_index {
                    let end = line_end(i);
                    spans.push((i, end));
                    i = end;
                    continue 'scan;
                }
            }
        }
        if lang == Language::Cpp && at(i, "R\"") {
            if let Some(p) = code[i + 2..].find('(') {
                let delim = &code[i + 2..i + 2 + p];
                let close = format!("){delim}\"");
                let body = i + 3 + p;
                i = code[body..].find(&close).map_or(b.len(), |q| body + q + close.len());
                continue;
            }
        }
        for form in &syn.strings {
            if at(i, form.open) {
                let start = i;
                let mut j = i + form.open.len();
                while j < b.len() {
                    if form.escapes && b[j] == b'\\' {
                        j += 2;
                        continue;
                    }
                    if form.doubled && at(j, "\"\"") {
                        j += 2;
                        continue;
                    }
                    if at(j, form.close) {
                        j += form.close.len();
                        break;
                    }
                    if b[j] == b'\n' && !form.multiline {
                        break;
                    }
                    j += 1;
                }
                let j = j.min(b.len());
                if lang == Language::Python && (form.open == "\"\"\"" || form.open == "'''") {
                    triple_strings.push((start, j));
                }
                i = j;
                continue 'scan;
            }
        }
        i += 1;
    }
    if lang == Language::Python {
        for (start, end) in triple_strings {
            let before = &code[code[..start].rfind('\n').map_or(0, |p| p + 1)..start];
            let after = &code[end..line_end(end)];
            let after_ok = after.trim().is_empty() || after.trim_start().starts_with('#');
            if before.trim().is_empty() && after_ok {
                spans.push((start, end));
            }
        }
        spans.sort();
    }
    spans
}

fn horizontal(c: u8) -> bool {
    c == b' ' || c == b'\t' || c == b'\r'
}

/// Removes comments: a line holding only comments disappears, an
/// end-of-line comment takes its leading blanks with it, and a comment
/// wedged between two tokens leaves one space.
pub fn strip(code: &str, lang: Language) -> String {
    let b = code.as_bytes();
    // Merge comments separated by blanks on the same line.
    let mut groups: Vec<(usize, usize)> = Vec::new();
    for (s, e) in comment_spans(code, lang) {
        if let Some(last) = groups.last_mut() {
            if b[last.1..s].iter().all(|&c| horizontal(c)) {
                last.1 = e;
                continue;
            }
        }
        groups.push((s, e));
    }
    let mut out = String::new();
    let mut pos = 0;
    for (s, e) in groups {
        let line_begin = code[..s].rfind('\n').map_or(0, |p| p + 1);
        let mut after = e;
        while after < b.len() && horizontal(b[after]) {
            after += 1;
        }
        let at_eol = after == b.len() || b[after] == b'\n';
        let alone = code[line_begin..s].bytes().all(horizontal);
        let (cut_from, cut_to, fill) = if alone && at_eol {
            (line_begin, (after + 1).min(b.len()), "")
        } else if at_eol {
            let mut from = s;
            while from > 0 && horizontal(b[from - 1]) {
                from -= 1;
            }
            (from, after, "")
        } else {
            let glued = s > 0 && !b[s - 1].is_ascii_whitespace() && !b[e].is_ascii_whitespace();
            (s, e, if glued { " " } else { "" })
        };
        let cut_from = cut_from.max(pos);
        out.push_str(&code[pos..cut_from]);
        out.push_str(fill);
        pos = cut_to.max(pos);
    }
    out.push_str(&code[pos..]);
    out
}
