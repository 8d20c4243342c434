//! Site discovery for each operator, on top of the shared lexer.

use std::collections::HashSet;

use super::{MutationSite, MutationType, SiteKind};
use crate::lang::Language;
use crate::lexer::{lex, Lexed, TokenKind};

pub fn find_sites(code: &str, language: Language, mutation: MutationType) -> Vec<MutationSite> {
    let lx = lex(code, language);
    match mutation {
        MutationType::LogicalKeyword => logic_sites(&lx),
        MutationType::ControlFlow => control_flow_sites(&lx),
        MutationType::Syntax => identifier_char_sites(&lx),
        MutationType::Lexicon => lexicon_sites(&lx),
    }
}

fn site(lx: &Lexed, start: usize, end: usize, kind: SiteKind) -> MutationSite {
    MutationSite {
        byte_span: (start, end),
        kind,
        token_text: lx.src[start..end].to_string(),
    }
}

/// Inverse of a logic token; `""` means the token is deleted.
pub fn logic_inverse(token: &str) -> Option<&'static str> {
    Some(match token {
        "and" => "or",
        "or" => "and",
        "&&" => "||",
        "||" => "&&",
        "==" => "!=",
        "!=" => "==",
        "===" => "!==",
        "!==" => "===",
        "<" => ">=",
        ">=" => "<",
        ">" => "<=",
        "<=" => ">",
        "not" | "!" => "",
        _ => return None,
    })
}

fn logic_sites(lx: &Lexed) -> Vec<MutationSite> {
    let generic = generic_brackets(lx);
    let word_ops = matches!(
        lx.lang,
        Language::Python | Language::Ruby | Language::Perl | Language::Php
    );
    let strict_eq = matches!(lx.lang, Language::JavaScript | Language::TypeScript | Language::Php);
    let mut sites = Vec::new();
    for (i, tok) in lx.tokens.iter().enumerate() {
        if tok.directive {
            continue;
        }
        let text = lx.text(i);
        let hit = match tok.kind {
            TokenKind::Punct => match text {
                "&&" | "||" | "!" => lx.lang != Language::Python,
                "===" | "!==" => strict_eq,
                "==" | "!=" | "<=" | ">=" => true,
                "<" | ">" => !generic.contains(&i),
                _ => false,
            },
            TokenKind::Keyword => word_ops && matches!(text, "and" | "or" | "not"),
            _ => false,
        };
        if hit {
            sites.push(site(lx, tok.start, tok.end, SiteKind::LogicOperator));
        }
    }
    sites
}

/// Indices of `<`/`>` tokens that delimit type arguments rather than compare.
fn generic_brackets(lx: &Lexed) -> HashSet<usize> {
    let mut marked = HashSet::new();
    let typed = matches!(
        lx.lang,
        Language::Cpp
            | Language::CSharp
            | Language::Java
            | Language::Kotlin
            | Language::Swift
            | Language::TypeScript
            | Language::Scala
    );
    if !typed {
        return marked;
    }
    let sig: Vec<usize> = (0..lx.tokens.len())
        .filter(|&i| !lx.tokens[i].is_trivia())
        .collect();
    for (p, &i) in sig.iter().enumerate() {
        if marked.contains(&i) || !lx.is_punct(i, "<") || p == 0 {
            continue;
        }
        let prev = sig[p - 1];
        let prev_ok = matches!(lx.tokens[prev].kind, TokenKind::Ident | TokenKind::Keyword)
            || matches!(lx.text(prev), "." | "::");
        if !prev_ok {
            continue;
        }
        let mut depth: i32 = 1;
        let mut parens: i32 = 0;
        let mut angles = vec![i];
        for &j in sig[p + 1..].iter().take(64) {
            let t = lx.text(j);
            let ok = match lx.tokens[j].kind {
                TokenKind::Ident | TokenKind::Keyword => true,
                TokenKind::Number => lx.lang == Language::Cpp,
                TokenKind::Punct => match t {
                    "<" => {
                        depth += 1;
                        angles.push(j);
                        true
                    }
                    ">" | ">>" | ">>>" => {
                        depth -= t.len() as i32;
                        angles.push(j);
                        true
                    }
                    "(" => {
                        parens += 1;
                        matches!(lx.lang, Language::Cpp | Language::TypeScript)
                    }
                    ")" => {
                        parens -= 1;
                        parens >= 0
                    }
                    "=>" => lx.lang == Language::TypeScript && parens == 0,
                    "," | "." | "?" | "::" | "[" | "]" | "*" | "&" | ":" => true,
                    _ => false,
                },
                _ => false,
            };
            if !ok || depth < 0 {
                break;
            }
            if depth == 0 {
                marked.extend(angles.iter().copied());
                break;
            }
        }
    }
    marked
}

fn continue_keyword(lang: Language) -> Option<&'static str> {
    match lang {
        Language::Ruby | Language::Perl => Some("next"),
        Language::Scala => None,
        _ => Some("continue"),
    }
}

/// Else-if clauses, loop continuations, and bare `else` clauses when the
/// code has no else-if.
fn control_flow_sites(lx: &Lexed) -> Vec<MutationSite> {
    let mut else_ifs = Vec::new();
    let mut elses = Vec::new();
    match lx.lang {
        Language::Python => python_clauses(lx, &mut else_ifs, &mut elses),
        Language::Ruby => ruby_clauses(lx, &mut else_ifs, &mut elses),
        _ => brace_clauses(lx, &mut else_ifs, &mut elses),
    }
    let mut sites = else_ifs;
    if sites.is_empty() {
        sites = elses;
    }
    if let Some(kw) = continue_keyword(lx.lang) {
        for (i, tok) in lx.tokens.iter().enumerate() {
            if !tok.directive && lx.is_keyword(i, kw) {
                sites.push(site(lx, tok.start, tok.end, SiteKind::BranchClause));
            }
        }
    }
    sites.sort_by_key(|s| s.byte_span);
    sites
}

/// Bracket depth before each token.
fn depths(lx: &Lexed) -> Vec<i32> {
    let mut out = Vec::with_capacity(lx.tokens.len());
    let mut depth = 0i32;
    for (i, tok) in lx.tokens.iter().enumerate() {
        out.push(depth);
        if tok.kind == TokenKind::Punct {
            match lx.text(i) {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => depth = (depth - 1).max(0),
                _ => {}
            }
        }
    }
    out
}

fn python_clauses(lx: &Lexed, else_ifs: &mut Vec<MutationSite>, elses: &mut Vec<MutationSite>) {
    let depth = depths(lx);
    let continued = |offset: usize| {
        let ls = lx.line_start(offset);
        ls >= 2 && lx.src[..ls - 1].trim_end_matches('\r').ends_with('\\')
    };
    for (i, tok) in lx.tokens.iter().enumerate() {
        let is_elif = lx.is_keyword(i, "elif");
        if !(is_elif || lx.is_keyword(i, "else")) {
            continue;
        }
        if depth[i] != 0 || !lx.starts_line(tok.start) || continued(tok.start) {
            continue;
        }
        let start = lx.line_start(tok.start);
        let indent = tok.start - start;
        let mut end = lx.src.len();
        for j in i + 1..lx.tokens.len() {
            let t = &lx.tokens[j];
            if t.is_trivia() || depth[j] != 0 || !lx.starts_line(t.start) || continued(t.start) {
                continue;
            }
            if t.start - lx.line_start(t.start) <= indent {
                end = lx.line_start(t.start);
                break;
            }
        }
        let s = site(lx, start, end, SiteKind::BranchClause);
        if is_elif {
            else_ifs.push(s);
        } else {
            elses.push(s);
        }
    }
}

fn ruby_clauses(lx: &Lexed, else_ifs: &mut Vec<MutationSite>, elses: &mut Vec<MutationSite>) {
    let sig: Vec<usize> = (0..lx.tokens.len())
        .filter(|&i| !lx.tokens[i].is_trivia())
        .collect();
    let opens_block = |p: usize| -> bool {
        let i = sig[p];
        let t = lx.text(i);
        let first_on_line = lx.starts_line(lx.tokens[i].start);
        let after_value_start = p > 0 && matches!(lx.text(sig[p - 1]), "=" | "(" | "," | "return" | "||=" | "&&=" | "<<");
        match t {
            "def" | "class" | "module" | "begin" | "case" => true,
            "do" => !loop_header_on_line(lx, &sig, p),
            "if" | "unless" | "while" | "until" => first_on_line || after_value_start,
            "for" => first_on_line,
            _ => false,
        }
    };
    for (p, &i) in sig.iter().enumerate() {
        let is_elsif = lx.is_keyword(i, "elsif");
        if !(is_elsif || lx.is_keyword(i, "else")) || !lx.starts_line(lx.tokens[i].start) {
            continue;
        }
        let mut depth = 0i32;
        let mut end = None;
        for q in p + 1..sig.len() {
            let j = sig[q];
            if lx.tokens[j].kind != TokenKind::Keyword {
                continue;
            }
            if opens_block(q) {
                depth += 1;
            } else if lx.text(j) == "end" {
                if depth == 0 {
                    end = Some(lx.line_start(lx.tokens[j].start));
                    break;
                }
                depth -= 1;
            } else if depth == 0 && matches!(lx.text(j), "elsif" | "else" | "when" | "rescue" | "ensure") {
                end = Some(lx.line_start(lx.tokens[j].start));
                break;
            }
        }
        let Some(end) = end else { continue };
        let s = site(lx, lx.line_start(lx.tokens[i].start), end, SiteKind::BranchClause);
        if is_elsif {
            else_ifs.push(s);
        } else {
            elses.push(s);
        }
    }
}

/// Whether `do` at `sig[p]` belongs to a `while`/`until`/`for` on its line.
fn loop_header_on_line(lx: &Lexed, sig: &[usize], p: usize) -> bool {
    let line = lx.line_start(lx.tokens[sig[p]].start);
    sig[..p]
        .iter()
        .rev()
        .take_while(|&&i| lx.tokens[i].start >= line)
        .any(|&i| matches!(lx.text(i), "while" | "until" | "for") && lx.tokens[i].kind == TokenKind::Keyword)
}

fn brace_clauses(lx: &Lexed, else_ifs: &mut Vec<MutationSite>, elses: &mut Vec<MutationSite>) {
    for (i, tok) in lx.tokens.iter().enumerate() {
        if tok.kind != TokenKind::Keyword || tok.directive {
            continue;
        }
        let text = lx.text(i);
        let (is_else_if, end) = match text {
            "elsif" | "elseif" => (true, end_of_if(lx, i)),
            "else" => {
                let Some(next) = lx.next_significant(i) else { continue };
                if lx.lang == Language::Kotlin && lx.is_punct(next, "->") {
                    continue;
                }
                if lx.lang == Language::Swift
                    && !lx.prev_significant(i).is_some_and(|p| lx.is_punct(p, "}"))
                {
                    continue;
                }
                if lx.is_punct(next, ":") {
                    continue;
                }
                if lx.is_keyword(next, "if") {
                    (true, end_of_if(lx, next))
                } else {
                    (false, end_of_body(lx, next))
                }
            }
            _ => continue,
        };
        let Some(end) = end else { continue };
        let s = site(lx, tok.start, end, SiteKind::BranchClause);
        if is_else_if {
            else_ifs.push(s);
        } else {
            elses.push(s);
        }
    }
}

/// Byte offset just past the body of the `if` (or `elsif`) at `kw`.
fn end_of_if(lx: &Lexed, kw: usize) -> Option<usize> {
    let first = lx.next_significant(kw)?;
    if lx.is_punct(first, "(") {
        let close = lx.matching_close(first)?;
        return end_of_body(lx, lx.next_significant(close)?);
    }
    // Go and Swift: the condition runs up to the first top-level `{`.
    let mut depth = 0i32;
    let mut j = first;
    loop {
        if lx.tokens[j].kind == TokenKind::Punct {
            match lx.text(j) {
                "{" if depth == 0 => return end_of_body(lx, j),
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => depth -= 1,
                _ => {}
            }
        }
        j = lx.next_significant(j)?;
    }
}

/// Byte offset just past the block or single statement starting at `first`.
fn end_of_body(lx: &Lexed, first: usize) -> Option<usize> {
    if lx.is_punct(first, "{") {
        let close = lx.matching_close(first)?;
        return Some(lx.tokens[close].end);
    }
    let newline_ends = matches!(lx.lang, Language::Kotlin | Language::Scala | Language::Swift | Language::Go);
    let mut depth = 0i32;
    let mut last = first;
    let mut j = first;
    loop {
        if depth == 0 && newline_ends && j != first && lx.newline_between(last, j) {
            return Some(lx.tokens[last].end);
        }
        if lx.tokens[j].kind == TokenKind::Punct {
            match lx.text(j) {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => {
                    depth -= 1;
                    if depth < 0 {
                        return Some(lx.tokens[last].end);
                    }
                }
                ";" if depth == 0 => return Some(lx.tokens[j].end),
                _ => {}
            }
        }
        last = j;
        match lx.next_significant(j) {
            Some(n) => j = n,
            None => return Some(lx.tokens[last].end),
        }
    }
}

fn identifier_char_sites(lx: &Lexed) -> Vec<MutationSite> {
    let mut sites = Vec::new();
    for tok in lx.tokens.iter().filter(|t| t.kind == TokenKind::Ident) {
        for (off, b) in lx.src[tok.start..tok.end].bytes().enumerate() {
            if b.is_ascii_lowercase() {
                let at = tok.start + off;
                sites.push(site(lx, at, at + 1, SiteKind::IdentifierChar));
            }
        }
    }
    sites
}

fn lexicon_sites(lx: &Lexed) -> Vec<MutationSite> {
    let mut sites = Vec::new();
    for tok in &lx.tokens {
        match tok.kind {
            TokenKind::Ident => sites.push(site(lx, tok.start, tok.end, SiteKind::Identifier)),
            TokenKind::Keyword => sites.push(site(lx, tok.start, tok.end, SiteKind::Keyword)),
            TokenKind::Str => {
                if let Some((s, e)) = tok.content.filter(|(s, e)| s < e) {
                    sites.push(site(lx, s, e, SiteKind::StringConstant));
                }
            }
            _ => {}
        }
    }
    sites
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(code: &str, lang: Language, m: MutationType) -> Vec<String> {
        find_sites(code, lang, m).into_iter().map(|s| s.token_text).collect()
    }

    #[test]
    fn python_logic_sites() {
        assert_eq!(texts("if a and b == c:\n    pass\n", Language::Python, MutationType::LogicalKeyword), ["and", "=="]);
    }

    #[test]
    fn logic_tokens_in_strings_and_comments_are_ignored() {
        let code = "x = \"a and b\"  # c or d\nif x != 1: pass\n";
        assert_eq!(texts(code, Language::Python, MutationType::LogicalKeyword), ["!="]);
    }

    #[test]
    fn java_generics_are_not_comparisons() {
        let code = "List<Map<String, Integer>> m = new ArrayList<>();\nif (a < b && c > d) {}\n";
        assert_eq!(texts(code, Language::Java, MutationType::LogicalKeyword), ["<", "&&", ">"]);
    }

    #[test]
    fn cpp_include_brackets_are_skipped() {
        let code = "#include <vector>\nbool f(int a) { return a > 0; }\n";
        assert_eq!(texts(code, Language::Cpp, MutationType::LogicalKeyword), [">"]);
    }

    #[test]
    fn branch_free_code_has_no_control_flow_sites() {
        assert!(texts("x = 1\ny = x + 2\n", Language::Python, MutationType::ControlFlow).is_empty());
        assert!(texts("int f() { return 1; }", Language::Java, MutationType::ControlFlow).is_empty());
    }

    #[test]
    fn python_elif_clause_by_indentation() {
        let code = "def f(x):\n    if x > 0:\n        return 1\n    elif x < 0:\n        y = -1\n        return y\n    else:\n        return 0\n";
        let sites = texts(code, Language::Python, MutationType::ControlFlow);
        assert_eq!(sites, ["    elif x < 0:\n        y = -1\n        return y\n"]);
    }

    #[test]
    fn python_bare_else_when_no_elif() {
        let code = "if x:\n    a()\nelse:\n    b()\nc()\n";
        assert_eq!(texts(code, Language::Python, MutationType::ControlFlow), ["else:\n    b()\n"]);
    }

    #[test]
    fn python_ternary_else_is_not_a_clause() {
        let code = "y = a if c else b\n";
        assert!(texts(code, Language::Python, MutationType::ControlFlow).is_empty());
    }

    #[test]
    fn brace_else_if_clause() {
        let code = "if (a) { x(); } else if (b) { y(); } else { z(); }";
        assert_eq!(texts(code, Language::Java, MutationType::ControlFlow), ["else if (b) { y(); }"]);
    }

    #[test]
    fn brace_else_without_braces() {
        let code = "if (a) x = 1;\nelse x = 2;\nreturn x;";
        assert_eq!(texts(code, Language::Cpp, MutationType::ControlFlow), ["else x = 2;"]);
    }

    #[test]
    fn go_else_if_without_parens() {
        let code = "if a > 1 {\n\tx = 1\n} else if b {\n\tx = 2\n}\n";
        assert_eq!(texts(code, Language::Go, MutationType::ControlFlow), ["else if b {\n\tx = 2\n}"]);
    }

    #[test]
    fn continue_is_a_site() {
        let code = "for (;;) { if (a) continue; }";
        assert_eq!(texts(code, Language::JavaScript, MutationType::ControlFlow), ["continue"]);
    }

    #[test]
    fn ruby_elsif_up_to_next_clause() {
        let code = "if a\n  x = 1\nelsif b\n  [1].each do |v|\n    x = v\n  end\nelse\n  x = 3\nend\n";
        assert_eq!(
            texts(code, Language::Ruby, MutationType::ControlFlow),
            ["elsif b\n  [1].each do |v|\n    x = v\n  end\n"]
        );
    }

    #[test]
    fn syntax_sites_are_lowercase_identifier_chars() {
        let sites = texts("int aB = 1;", Language::Java, MutationType::Syntax);
        assert_eq!(sites, ["a"]);
    }

    #[test]
    fn lexicon_sites_cover_identifiers_strings_keywords() {
        let sites = find_sites("return f(\"hi\", '')", Language::JavaScript, MutationType::Lexicon);
        let kinds: Vec<SiteKind> = sites.iter().map(|s| s.kind).collect();
        assert_eq!(kinds, [SiteKind::Keyword, SiteKind::Identifier, SiteKind::StringConstant]);
    }

    #[test]
    fn involution_holds_for_swap_pairs() {
        for t in ["and", "or", "&&", "||", "==", "!=", "===", "!==", "<", ">=", ">", "<="] {
            assert_eq!(logic_inverse(logic_inverse(t).unwrap()), Some(t));
        }
    }
}
