use std::collections::BTreeMap;
use std::env;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExecError;
use crate::lang::Language;

pub const WORKDIR: &str = "{workdir}";

fn default_timeout() -> f64 {
    10.0
}

fn default_compile_timeout() -> f64 {
    60.0
}

/// How to build and run one language's programs. Command templates are argv
/// lists; `{workdir}` expands to the private working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageRunner {
    #[serde(skip)]
    pub language: Option<Language>,
    #[serde(default)]
    pub compile_cmd: Option<Vec<String>>,
    pub run_cmd: Vec<String>,
    /// File receiving the candidate code (and the tests, when merged).
    pub file_name: String,
    /// Separate file for the tests, for languages that need one.
    #[serde(default)]
    pub test_file_name: Option<String>,
    /// Additional fixed files written into the workdir.
    #[serde(default)]
    pub support_files: BTreeMap<String, String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_compile_timeout")]
    pub compile_timeout_s: f64,
    /// Output substrings that identify a failed assertion, as opposed to a
    /// crash, when the test process exits nonzero.
    #[serde(default)]
    pub assertion_markers: Vec<String>,
}

impl LanguageRunner {
    fn new(language: Language, file_name: &str, compile: Option<&[&str]>, run: &[&str], markers: &[&str]) -> Self {
        let own = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        LanguageRunner {
            language: Some(language),
            compile_cmd: compile.map(own),
            run_cmd: own(run),
            file_name: file_name.to_string(),
            test_file_name: None,
            support_files: BTreeMap::new(),
            timeout_s: default_timeout(),
            compile_timeout_s: default_compile_timeout(),
            assertion_markers: own(markers),
        }
    }

    pub fn validate(&self) -> Result<(), ExecError> {
        let name = self.language.map_or("?", Language::id);
        if self.run_cmd.is_empty() {
            return Err(ExecError::Config(format!("{name}: run_cmd is empty")));
        }
        let mentions_workdir = |cmd: &[String]| cmd.iter().any(|a| a.contains(WORKDIR));
        if !mentions_workdir(&self.run_cmd) {
            return Err(ExecError::Config(format!("{name}: run_cmd must reference {WORKDIR}")));
        }
        if let Some(c) = &self.compile_cmd {
            if c.is_empty() || !mentions_workdir(c) {
                return Err(ExecError::Config(format!("{name}: compile_cmd must reference {WORKDIR}")));
            }
        }
        if self.timeout_s <= 0.0 || self.compile_timeout_s <= 0.0 {
            return Err(ExecError::Config(format!("{name}: timeouts must be positive")));
        }
        Ok(())
    }

    /// Programs the runner invokes, for toolchain probing.
    pub fn programs(&self) -> Vec<&str> {
        self.compile_cmd
            .iter()
            .flatten()
            .take(1)
            .chain(self.run_cmd.iter().take(1))
            .map(String::as_str)
            .filter(|p| !p.contains(WORKDIR))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolchainReport {
    pub available: Vec<Language>,
    /// Language and the first program that could not be found.
    pub missing: Vec<(Language, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunnerRegistry {
    runners: BTreeMap<Language, LanguageRunner>,
}

impl RunnerRegistry {
    pub fn defaults() -> Self {
        use Language::*;
        let w = |s: &str| s.replace("@", WORKDIR);
        let mut runners = BTreeMap::new();
        let mut add = |r: LanguageRunner| {
            let mut r = r;
            r.compile_cmd = r.compile_cmd.map(|c| c.iter().map(|a| w(a)).collect());
            r.run_cmd = r.run_cmd.iter().map(|a| w(a)).collect();
            runners.insert(r.language.unwrap(), r);
        };
        add(LanguageRunner::new(
            Python,
            "main.py",
            Some(&["python3", "-m", "py_compile", "@/main.py"]),
            &["python3", "@/main.py"],
            &["AssertionError"],
        ));
        add(LanguageRunner::new(
            JavaScript,
            "main.js",
            Some(&["node", "--check", "@/main.js"]),
            &["node", "@/main.js"],
            &["AssertionError", "ERR_ASSERTION"],
        ));
        add(LanguageRunner::new(
            TypeScript,
            "main.ts",
            Some(&["tsc", "--target", "es2020", "--module", "commonjs", "--types", "node", "--outDir", "@", "@/main.ts"]),
            &["node", "@/main.js"],
            &["AssertionError", "ERR_ASSERTION"],
        ));
        add(LanguageRunner::new(
            Cpp,
            "main.cpp",
            Some(&["g++", "-std=c++17", "-O1", "-o", "@/main", "@/main.cpp"]),
            &["@/main"],
            &["Assertion", "assert"],
        ));
        add(LanguageRunner::new(
            Java,
            "Main.java",
            Some(&["javac", "-d", "@", "@/Main.java"]),
            &["java", "-cp", "@", "-ea", "Main"],
            &["AssertionError"],
        ));
        add(LanguageRunner::new(
            CSharp,
            "main.cs",
            Some(&["mcs", "-out:@/main.exe", "@/main.cs"]),
            &["mono", "@/main.exe"],
            &["AssertionError", "Assert"],
        ));
        let mut go = LanguageRunner::new(
            Go,
            "solution.go",
            Some(&["go", "test", "-c", "-o", "@/solution.test", "@"]),
            &["@/solution.test"],
            &["--- FAIL"],
        );
        go.test_file_name = Some("solution_test.go".into());
        go.support_files
            .insert("go.mod".into(), "module racgtask\n\ngo 1.18\n".into());
        add(go);
        add(LanguageRunner::new(
            Kotlin,
            "main.kt",
            Some(&["kotlinc", "@/main.kt", "-include-runtime", "-d", "@/main.jar"]),
            &["java", "-ea", "-jar", "@/main.jar"],
            &["AssertionError"],
        ));
        add(LanguageRunner::new(
            Scala,
            "Main.scala",
            Some(&["scalac", "-d", "@", "@/Main.scala"]),
            &["scala", "-cp", "@", "Main"],
            &["AssertionError", "assertion failed"],
        ));
        add(LanguageRunner::new(
            Swift,
            "main.swift",
            Some(&["swiftc", "-o", "@/main", "@/main.swift"]),
            &["@/main"],
            &["Assertion failed", "Fatal error"],
        ));
        add(LanguageRunner::new(
            Php,
            "main.php",
            Some(&["php", "-l", "@/main.php"]),
            &["php", "@/main.php"],
            &["AssertionError", "Assertion failed"],
        ));
        add(LanguageRunner::new(
            Perl,
            "main.pl",
            Some(&["perl", "-c", "@/main.pl"]),
            &["perl", "@/main.pl"],
            &["Assertion failed", "not ok"],
        ));
        add(LanguageRunner::new(
            Ruby,
            "main.rb",
            Some(&["ruby", "-c", "@/main.rb"]),
            &["ruby", "@/main.rb"],
            &["AssertionError", "Assertion failed"],
        ));
        RunnerRegistry { runners }
    }

    /// Parses a runner table keyed by language id. Entries replace the
    /// defaults for their language; other languages keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self, ExecError> {
        let table: BTreeMap<String, LanguageRunner> =
            toml::from_str(text).map_err(|e| ExecError::Config(e.to_string()))?;
        let mut registry = Self::defaults();
        for (key, mut runner) in table {
            let lang: Language = key.parse().map_err(|e: crate::lang::UnknownLanguage| ExecError::Config(e.to_string()))?;
            runner.language = Some(lang);
            runner.validate()?;
            registry.runners.insert(lang, runner);
        }
        Ok(registry)
    }

    pub fn load(path: &Path) -> Result<Self, ExecError> {
        let text = std::fs::read_to_string(path).map_err(ExecError::Sandbox)?;
        Self::from_toml_str(&text)
    }

    pub fn get(&self, language: Language) -> Option<&LanguageRunner> {
        self.runners.get(&language)
    }

    pub fn insert(&mut self, language: Language, mut runner: LanguageRunner) {
        runner.language = Some(language);
        self.runners.insert(language, runner);
    }

    pub fn probe(&self) -> ToolchainReport {
        let mut available = Vec::new();
        let mut missing = Vec::new();
        for (&lang, runner) in &self.runners {
            match runner.programs().into_iter().find(|p| find_program(p).is_none()) {
                Some(p) => missing.push((lang, p.to_string())),
                None => available.push(lang),
            }
        }
        ToolchainReport { available, missing }
    }
}

/// Resolves a program name against `PATH`, or checks an explicit path.
pub fn find_program(program: &str) -> Option<PathBuf> {
    if program.contains('/') {
        let p = PathBuf::from(program);
        return p.is_file().then_some(p);
    }
    let path = env::var_os("PATH")?;
    env::split_paths(&path)
        .map(|dir| dir.join(program))
        .find(|candidate| is_executable(candidate))
}

fn is_executable(path: &Path) -> bool {
    use std::os::unix::fs::PermissionsExt;
    path.metadata()
        .map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
        .unwrap_or(false)
}
