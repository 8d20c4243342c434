//! The thirteen supported programming languages and their static tables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Cpp,
    CSharp,
    Go,
    Java,
    JavaScript,
    Kotlin,
    Perl,
    Php,
    Python,
    Ruby,
    Scala,
    Swift,
    TypeScript,
}

impl Language {
    pub const ALL: [Language; 13] = [
        Language::Cpp,
        Language::CSharp,
        Language::Go,
        Language::Java,
        Language::JavaScript,
        Language::Kotlin,
        Language::Perl,
        Language::Php,
        Language::Python,
        Language::Ruby,
        Language::Scala,
        Language::Swift,
        Language::TypeScript,
    ];

    /// Wire identifier, as used in JSONL files and on the command line.
    pub fn id(self) -> &'static str {
        match self {
            Language::Cpp => "cpp",
            Language::CSharp => "csharp",
            Language::Go => "go",
            Language::Java => "java",
            Language::JavaScript => "javascript",
            Language::Kotlin => "kotlin",
            Language::Perl => "perl",
            Language::Php => "php",
            Language::Python => "python",
            Language::Ruby => "ruby",
            Language::Scala => "scala",
            Language::Swift => "swift",
            Language::TypeScript => "typescript",
        }
    }

    /// Human-readable name used in prompts and reports.
    pub fn display_name(self) -> &'static str {
        match self {
            Language::Cpp => "C++",
            Language::CSharp => "C#",
            Language::Go => "Go",
            Language::Java => "Java",
            Language::JavaScript => "JavaScript",
            Language::Kotlin => "Kotlin",
            Language::Perl => "Perl",
            Language::Php => "PHP",
            Language::Python => "Python",
            Language::Ruby => "Ruby",
            Language::Scala => "Scala",
            Language::Swift => "Swift",
            Language::TypeScript => "TypeScript",
        }
    }

    /// Markdown fence info string.
    pub fn fence_tag(self) -> &'static str {
        self.id()
    }

    /// Fence info strings that a model might plausibly use for this language.
    pub fn fence_aliases(self) -> &'static [&'static str] {
        match self {
            Language::Cpp => &["cpp", "c++", "cxx", "cc", "c"],
            Language::CSharp => &["csharp", "cs", "c#"],
            Language::Go => &["go", "golang"],
            Language::Java => &["java"],
            Language::JavaScript => &["javascript", "js", "node", "jsx"],
            Language::Kotlin => &["kotlin", "kt"],
            Language::Perl => &["perl", "pl"],
            Language::Php => &["php"],
            Language::Python => &["python", "py", "python3"],
            Language::Ruby => &["ruby", "rb"],
            Language::Scala => &["scala"],
            Language::Swift => &["swift"],
            Language::TypeScript => &["typescript", "ts", "tsx"],
        }
    }

    /// Prefix that turns a line of prose into a line comment.
    pub fn line_comment_prefix(self) -> &'static str {
        match self {
            Language::Python | Language::Ruby | Language::Perl => "#",
            _ => "//",
        }
    }

    pub fn keywords(self) -> &'static [&'static str] {
        match self {
            Language::Python => PYTHON_KEYWORDS,
            Language::Ruby => RUBY_KEYWORDS,
            Language::Perl => PERL_KEYWORDS,
            Language::Php => PHP_KEYWORDS,
            Language::Cpp => CPP_KEYWORDS,
            Language::CSharp => CSHARP_KEYWORDS,
            Language::Go => GO_KEYWORDS,
            Language::Java => JAVA_KEYWORDS,
            Language::JavaScript => JS_KEYWORDS,
            Language::TypeScript => TS_KEYWORDS,
            Language::Kotlin => KOTLIN_KEYWORDS,
            Language::Scala => SCALA_KEYWORDS,
            Language::Swift => SWIFT_KEYWORDS,
        }
    }

    pub fn is_keyword(self, word: &str) -> bool {
        self.keywords().contains(&word)
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown language `{0}`")]
pub struct UnknownLanguage(pub String);

impl FromStr for Language {
    type Err = UnknownLanguage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Language::ALL
            .into_iter()
            .find(|l| l.id() == lower || l.fence_aliases().contains(&lower.as_str()))
            .ok_or_else(|| UnknownLanguage(s.to_string()))
    }
}

const PYTHON_KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class",
    "continue", "def", "del", "elif", "else", "except", "finally", "for", "from", "global",
    "if", "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return",
    "try", "while", "with", "yield",
];

const RUBY_KEYWORDS: &[&str] = &[
    "BEGIN", "END", "alias", "and", "begin", "break", "case", "class", "def", "do", "else",
    "elsif", "end", "ensure", "false", "for", "if", "in", "module", "next", "nil", "not", "or",
    "redo", "rescue", "retry", "return", "self", "super", "then", "true", "undef", "unless",
    "until", "when", "while", "yield",
];

const PERL_KEYWORDS: &[&str] = &[
    "my", "our", "local", "sub", "if", "elsif", "else", "unless", "while", "until", "for",
    "foreach", "do", "last", "next", "redo", "return", "and", "or", "not", "xor", "eq", "ne",
    "lt", "gt", "le", "ge", "cmp", "use", "package", "require", "no", "undef",
];

const PHP_KEYWORDS: &[&str] = &[
    "abstract", "and", "array", "as", "break", "callable", "case", "catch", "class", "clone",
    "const", "continue", "declare", "default", "do", "echo", "else", "elseif", "empty",
    "enddeclare", "endfor", "endforeach", "endif", "endswitch", "endwhile", "extends", "final",
    "finally", "fn", "for", "foreach", "function", "global", "goto", "if", "implements",
    "include", "instanceof", "insteadof", "interface", "isset", "list", "match", "namespace",
    "new", "or", "print", "private", "protected", "public", "readonly", "require", "return",
    "static", "switch", "throw", "trait", "try", "unset", "use", "var", "while", "xor", "yield",
    "true", "false", "null",
];

const CPP_KEYWORDS: &[&str] = &[
    "alignas", "alignof", "auto", "bool", "break", "case", "catch", "char", "class", "const",
    "constexpr", "continue", "decltype", "default", "delete", "do", "double", "else", "enum",
    "explicit", "extern", "false", "float", "for", "friend", "goto", "if", "inline", "int",
    "long", "mutable", "namespace", "new", "noexcept", "nullptr", "operator", "private",
    "protected", "public", "register", "return", "short", "signed", "sizeof", "static",
    "static_cast", "struct", "switch", "template", "this", "throw", "true", "try", "typedef",
    "typename", "union", "unsigned", "using", "virtual", "void", "volatile", "while",
];

const CSHARP_KEYWORDS: &[&str] = &[
    "abstract", "as", "base", "bool", "break", "byte", "case", "catch", "char", "checked",
    "class", "const", "continue", "decimal", "default", "delegate", "do", "double", "else",
    "enum", "event", "explicit", "extern", "false", "finally", "fixed", "float", "for",
    "foreach", "goto", "if", "implicit", "in", "int", "interface", "internal", "is", "lock",
    "long", "namespace", "new", "null", "object", "operator", "out", "override", "params",
    "private", "protected", "public", "readonly", "ref", "return", "sbyte", "sealed", "short",
    "sizeof", "static", "string", "struct", "switch", "this", "throw", "true", "try", "typeof",
    "uint", "ulong", "unchecked", "unsafe", "ushort", "using", "var", "virtual", "void",
    "volatile", "while",
];

const GO_KEYWORDS: &[&str] = &[
    "break", "case", "chan", "const", "continue", "default", "defer", "else", "fallthrough",
    "for", "func", "go", "goto", "if", "import", "interface", "map", "package", "range",
    "return", "select", "struct", "switch", "type", "var", "true", "false", "nil",
];

const JAVA_KEYWORDS: &[&str] = &[
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char", "class",
    "const", "continue", "default", "do", "double", "else", "enum", "extends", "final",
    "finally", "float", "for", "goto", "if", "implements", "import", "instanceof", "int",
    "interface", "long", "native", "new", "package", "private", "protected", "public",
    "return", "short", "static", "strictfp", "super", "switch", "synchronized", "this",
    "throw", "throws", "transient", "try", "void", "volatile", "while", "true", "false", "null",
    "var",
];

const JS_KEYWORDS: &[&str] = &[
    "async", "await", "break", "case", "catch", "class", "const", "continue", "debugger",
    "default", "delete", "do", "else", "export", "extends", "false", "finally", "for",
    "function", "if", "import", "in", "instanceof", "let", "new", "null", "of", "return",
    "super", "switch", "this", "throw", "true", "try", "typeof", "var", "void", "while",
    "with", "yield",
];

const TS_KEYWORDS: &[&str] = &[
    "abstract", "any", "as", "async", "await", "boolean", "break", "case", "catch", "class",
    "const", "continue", "debugger", "declare", "default", "delete", "do", "else", "enum",
    "export", "extends", "false", "finally", "for", "function", "if", "implements", "import",
    "in", "instanceof", "interface", "keyof", "let", "namespace", "never", "new", "null",
    "number", "of", "private", "protected", "public", "readonly", "return", "string", "super",
    "switch", "this", "throw", "true", "try", "type", "typeof", "unknown", "var", "void",
    "while", "with", "yield",
];

const KOTLIN_KEYWORDS: &[&str] = &[
    "as", "break", "class", "companion", "continue", "data", "do", "else", "false", "for",
    "fun", "if", "in", "interface", "internal", "is", "null", "object", "open", "override",
    "package", "private", "protected", "public", "return", "super", "this", "throw", "true",
    "try", "typealias", "val", "var", "when", "while",
];

const SCALA_KEYWORDS: &[&str] = &[
    "abstract", "case", "catch", "class", "def", "do", "else", "extends", "false", "final",
    "finally", "for", "forSome", "if", "implicit", "import", "lazy", "match", "new", "null",
    "object", "override", "package", "private", "protected", "return", "sealed", "super",
    "this", "throw", "trait", "try", "true", "type", "val", "var", "while", "with", "yield",
];

const SWIFT_KEYWORDS: &[&str] = &[
    "associatedtype", "class", "deinit", "enum", "extension", "func", "import", "init",
    "inout", "internal", "let", "operator", "private", "protocol", "public", "static",
    "struct", "subscript", "typealias", "var", "break", "case", "continue", "default", "defer",
    "do", "else", "fallthrough", "for", "guard", "if", "in", "repeat", "return", "switch",
    "where", "while", "as", "catch", "false", "is", "nil", "rethrows", "super", "self", "Self",
    "throw", "throws", "true", "try",
];
