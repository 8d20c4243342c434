use serde::{Deserialize, Serialize};

use super::LanguageRunner;
use crate::corpus::CodeInstance;
use crate::lang::Language;

/// Files to materialise in a workdir, as (relative name, contents).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFiles {
    pub files: Vec<(String, String)>,
}

impl SourceFiles {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_str())
    }
}

/// Lays out candidate code and the instance's tests the way `runner`
/// expects. Single-file languages get `code + "\n" + tests`; Java and C#
/// have their imports hoisted above the merged body; PHP gets one opening
/// tag; runners with a `test_file_name` receive the tests separately.
pub fn assemble_program(code: &str, instance: &CodeInstance, runner: &LanguageRunner) -> SourceFiles {
    let tests = instance.test_cases.as_str();
    let mut files = Vec::new();
    match (&runner.test_file_name, instance.language) {
        (Some(test_file), Language::Go) => {
            files.push((runner.file_name.clone(), with_go_package(code)));
            files.push((test_file.clone(), with_go_package(tests)));
        }
        (Some(test_file), _) => {
            files.push((runner.file_name.clone(), code.to_string()));
            files.push((test_file.clone(), tests.to_string()));
        }
        (None, Language::Java) => {
            files.push((runner.file_name.clone(), hoist_headers(code, tests, &["import "], &["package "])));
        }
        (None, Language::CSharp) => {
            files.push((runner.file_name.clone(), hoist_headers(code, tests, &["using "], &[])));
        }
        (None, Language::Php) => {
            let body = format!("{}\n{}", php_body(code), php_body(tests));
            files.push((runner.file_name.clone(), format!("<?php\n{body}")));
        }
        (None, _) => files.push((runner.file_name.clone(), format!("{code}\n{tests}"))),
    }
    for (name, contents) in &runner.support_files {
        files.push((name.clone(), contents.clone()));
    }
    SourceFiles { files }
}

/// Moves top-level header lines (imports, usings) of both parts to the top,
/// de-duplicated in first-seen order, and drops lines matching `drop`.
fn hoist_headers(code: &str, tests: &str, hoist: &[&str], drop: &[&str]) -> String {
    let mut headers: Vec<&str> = Vec::new();
    let mut bodies = Vec::new();
    for part in [code, tests] {
        let mut body = Vec::new();
        for line in part.lines() {
            let t = line.trim_start();
            let is_header = line.len() == t.len() && t.trim_end().ends_with(';');
            if is_header && hoist.iter().any(|h| t.starts_with(h)) && !t.starts_with("using (") {
                if !headers.contains(&t.trim_end()) {
                    headers.push(t.trim_end());
                }
            } else if is_header && drop.iter().any(|d| t.starts_with(d)) {
                continue;
            } else {
                body.push(line);
            }
        }
        bodies.push(body.join("\n"));
    }
    let mut out = String::new();
    for h in &headers {
        out.push_str(h);
        out.push('\n');
    }
    if !headers.is_empty() {
        out.push('\n');
    }
    out.push_str(&bodies[0]);
    out.push('\n');
    out.push_str(&bodies[1]);
    out.push('\n');
    out
}

fn php_body(part: &str) -> &str {
    let t = part.trim();
    let t = t.strip_prefix("<?php").unwrap_or(t);
    t.strip_suffix("?>").unwrap_or(t)
}

fn with_go_package(part: &str) -> String {
    let has_package = part
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with("//"))
        .is_some_and(|l| l.starts_with("package "));
    if has_package {
        part.to_string()
    } else {
        format!("package main\n\n{part}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::execute::RunnerRegistry;

    fn instance(lang: Language, tests: &str) -> CodeInstance {
        CodeInstance {
            instance_id: "t/0".into(),
            language: lang,
            nl_prompt: String::new(),
            reference_solution: String::new(),
            test_cases: tests.into(),
            entry_point: "f".into(),
            family_id: "0".into(),
        }
    }

    #[test]
    fn python_is_plain_concatenation() {
        let reg = RunnerRegistry::defaults();
        let inst = instance(Language::Python, "assert f() == 1\n");
        let files = assemble_program("def f():\n    return 1\n", &inst, reg.get(Language::Python).unwrap());
        assert_eq!(files.files.len(), 1);
        assert_eq!(files.get("main.py").unwrap(), "def f():\n    return 1\n\nassert f() == 1\n");
    }

    #[test]
    fn java_hoists_imports_into_one_file() {
        let reg = RunnerRegistry::defaults();
        let code = "import java.util.*;\n\nclass Solution {\n    List<Integer> f() { return new ArrayList<>(); }\n}\n";
        let tests = "import java.util.*;\nimport java.util.stream.*;\npublic class Main {\n    public static void main(String[] a) {}\n}\n";
        let inst = instance(Language::Java, tests);
        let files = assemble_program(code, &inst, reg.get(Language::Java).unwrap());
        let main = files.get("Main.java").unwrap();
        assert!(main.starts_with("import java.util.*;\nimport java.util.stream.*;\n\n"));
        assert_eq!(main.matches("import java.util.*;").count(), 1);
        assert!(main.find("class Solution").unwrap() < main.find("public class Main").unwrap());
    }

    #[test]
    fn go_gets_separate_test_file_and_module() {
        let reg = RunnerRegistry::defaults();
        let inst = instance(Language::Go, "import \"testing\"\nfunc TestF(t *testing.T) {}\n");
        let files = assemble_program("func f() int { return 1 }\n", &inst, reg.get(Language::Go).unwrap());
        assert!(files.get("solution.go").unwrap().starts_with("package main\n"));
        assert!(files.get("solution_test.go").unwrap().starts_with("package main\n"));
        assert!(files.get("go.mod").is_some());
    }

    #[test]
    fn php_has_single_open_tag() {
        let reg = RunnerRegistry::defaults();
        let inst = instance(Language::Php, "<?php\nassert(f() == 1);\n");
        let files = assemble_program("<?php\nfunction f() { return 1; }\n?>", &inst, reg.get(Language::Php).unwrap());
        assert_eq!(files.get("main.php").unwrap().matches("<?php").count(), 1);
    }

    #[test]
    fn assembly_is_deterministic() {
        let reg = RunnerRegistry::defaults();
        for lang in Language::ALL {
            let inst = instance(lang, "test body");
            let r = reg.get(lang).unwrap();
            assert_eq!(assemble_program("code", &inst, r), assemble_program("code", &inst, r));
        }
    }
}
