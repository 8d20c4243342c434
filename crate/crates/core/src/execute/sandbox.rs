//! Subprocess sandbox: private temp workdir, scrubbed environment, its own
//! session (so the whole process group can be killed on timeout), resource
//! limits, and a fresh network namespace where the kernel allows one.

use std::fs;
use std::io::Read;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

use super::runner::{find_program, WORKDIR};
use super::{ExecError, ExecutionResult, LanguageRunner, SourceFiles, Verdict};

#[derive(Debug, Clone, PartialEq)]
pub struct SandboxConfig {
    /// Bytes kept from the end of each output stream.
    pub output_limit: usize,
    pub isolate_network: bool,
    /// RLIMIT_FSIZE for the child, in bytes.
    pub file_size_limit: u64,
    /// RLIMIT_AS for the child, in bytes. Off by default: JVMs reserve far
    /// more address space than they use.
    pub memory_limit: Option<u64>,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            output_limit: 4096,
            isolate_network: true,
            file_size_limit: 64 << 20,
            memory_limit: None,
        }
    }
}

enum Exit {
    Code(i32),
    Signal(i32),
    TimedOut,
}

struct Phase {
    exit: Exit,
    stdout: String,
    stderr: String,
    elapsed: f64,
}

/// Compiles (if the runner has a compile step) and runs `files` in a fresh
/// workdir and maps the outcome to a verdict.
pub fn run_tests(files: &SourceFiles, runner: &LanguageRunner, config: &SandboxConfig) -> Result<ExecutionResult, ExecError> {
    let language = runner
        .language
        .ok_or_else(|| ExecError::Config("runner has no language".into()))?;
    if let Some(program) = runner.programs().into_iter().find(|p| find_program(p).is_none()) {
        return Err(ExecError::SandboxUnavailable {
            language,
            program: program.to_string(),
        });
    }
    let workdir = tempfile::Builder::new()
        .prefix("racg-run-")
        .tempdir()
        .map_err(ExecError::Sandbox)?;
    for (name, contents) in &files.files {
        let path = workdir.path().join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(ExecError::Sandbox)?;
        }
        fs::write(&path, contents).map_err(ExecError::Sandbox)?;
    }

    let mut wall_time = 0.0;
    if let Some(compile) = &runner.compile_cmd {
        let phase = run_phase(compile, workdir.path(), runner.compile_timeout_s, config)?;
        wall_time += phase.elapsed;
        match phase.exit {
            Exit::Code(0) => {}
            Exit::TimedOut => return Ok(result(Verdict::Timeout, phase, wall_time)),
            _ => return Ok(result(Verdict::CompileError, phase, wall_time)),
        }
    }

    let phase = run_phase(&runner.run_cmd, workdir.path(), runner.timeout_s, config)?;
    wall_time += phase.elapsed;
    let verdict = match phase.exit {
        Exit::Code(0) => Verdict::Pass,
        Exit::TimedOut => Verdict::Timeout,
        Exit::Code(_) | Exit::Signal(_) => {
            let asserted = runner
                .assertion_markers
                .iter()
                .any(|m| phase.stderr.contains(m.as_str()) || phase.stdout.contains(m.as_str()));
            if asserted {
                Verdict::TestFailure
            } else {
                Verdict::RuntimeError
            }
        }
    };
    Ok(result(verdict, phase, wall_time))
}

fn result(verdict: Verdict, phase: Phase, wall_time: f64) -> ExecutionResult {
    ExecutionResult {
        verdict,
        stdout_tail: phase.stdout,
        stderr_tail: phase.stderr,
        wall_time,
    }
}

fn run_phase(template: &[String], workdir: &Path, timeout_s: f64, config: &SandboxConfig) -> Result<Phase, ExecError> {
    let dir = workdir.to_string_lossy();
    let argv: Vec<String> = template.iter().map(|a| a.replace(WORKDIR, &dir)).collect();
    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..])
        .current_dir(workdir)
        .env_clear()
        .env("PATH", std::env::var_os("PATH").unwrap_or_default())
        .env("HOME", workdir)
        .env("TMPDIR", workdir)
        .env("LANG", "C.UTF-8")
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());

    let limits = ChildLimits {
        cpu_seconds: timeout_s.ceil() as u64 + 1,
        file_size: config.file_size_limit,
        memory: config.memory_limit,
        isolate_network: config.isolate_network,
    };
    // SAFETY: the closure only issues async-signal-safe syscalls.
    unsafe {
        cmd.pre_exec(move || {
            limits.apply();
            Ok(())
        });
    }

    let started = Instant::now();
    let mut child = cmd.spawn().map_err(ExecError::Sandbox)?;
    let pid = child.id() as libc::pid_t;
    let out_reader = tail_reader(child.stdout.take(), config.output_limit);
    let err_reader = tail_reader(child.stderr.take(), config.output_limit);

    let exit = wait_with_timeout(&mut child, pid, Duration::from_secs_f64(timeout_s))?;
    let elapsed = started.elapsed().as_secs_f64();
    // Stragglers left in the group would keep the pipes open.
    // SAFETY: plain kill(2) on the child's own process group.
    unsafe {
        libc::killpg(pid, libc::SIGKILL);
    }
    // Tails mention the random workdir; mask it so logs are reproducible.
    let stdout = out_reader.join().unwrap_or_default().replace(dir.as_ref(), "<workdir>");
    let mut stderr = err_reader.join().unwrap_or_default().replace(dir.as_ref(), "<workdir>");
    if let Exit::Signal(sig) = exit {
        stderr.push_str(&format!("\n[terminated by signal {sig}]"));
    }
    Ok(Phase {
        exit,
        stdout,
        stderr,
        elapsed,
    })
}

fn wait_with_timeout(child: &mut Child, pid: libc::pid_t, timeout: Duration) -> Result<Exit, ExecError> {
    match child.wait_timeout(timeout).map_err(ExecError::Sandbox)? {
        Some(status) => Ok(match (status.code(), status.signal()) {
            (Some(code), _) => Exit::Code(code),
            (None, Some(sig)) => Exit::Signal(sig),
            (None, None) => Exit::Code(-1),
        }),
        None => {
            // SAFETY: see above.
            unsafe {
                libc::killpg(pid, libc::SIGKILL);
            }
            child.wait().map_err(ExecError::Sandbox)?;
            Ok(Exit::TimedOut)
        }
    }
}

fn tail_reader<R: Read + Send + 'static>(stream: Option<R>, limit: usize) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let Some(mut stream) = stream else {
            return String::new();
        };
        let mut kept: Vec<u8> = Vec::new();
        let mut buf = [0u8; 8192];
        loop {
            match stream.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    kept.extend_from_slice(&buf[..n]);
                    if kept.len() > 2 * limit {
                        kept.drain(..kept.len() - limit);
                    }
                }
            }
        }
        if kept.len() > limit {
            kept.drain(..kept.len() - limit);
        }
        String::from_utf8_lossy(&kept).into_owned()
    })
}

#[derive(Clone, Copy)]
struct ChildLimits {
    cpu_seconds: u64,
    file_size: u64,
    memory: Option<u64>,
    isolate_network: bool,
}

impl ChildLimits {
    /// Runs in the forked child before exec. Failures are ignored: limits
    /// are applied where the platform permits.
    fn apply(&self) {
        // SAFETY: setsid/setrlimit/unshare are async-signal-safe syscalls
        // operating on the calling (child) process only.
        unsafe {
            libc::setsid();
            set_limit(libc::RLIMIT_CORE, 0);
            set_limit(libc::RLIMIT_CPU, self.cpu_seconds);
            set_limit(libc::RLIMIT_FSIZE, self.file_size);
            if let Some(bytes) = self.memory {
                set_limit(libc::RLIMIT_AS, bytes);
            }
            if self.isolate_network && libc::unshare(libc::CLONE_NEWNET) != 0 {
                libc::unshare(libc::CLONE_NEWUSER | libc::CLONE_NEWNET);
            }
        }
    }
}

unsafe fn set_limit(resource: libc::__rlimit_resource_t, value: u64) {
    let lim = libc::rlimit {
        rlim_cur: value as libc::rlim_t,
        rlim_max: value as libc::rlim_t,
    };
    libc::setrlimit(resource, &lim);
}
