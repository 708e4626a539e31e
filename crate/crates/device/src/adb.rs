//! Android Debug Bridge adapter.
//!
//! Every bridge call goes through an [`AdbRunner`], so command construction
//! can be checked without a device. [`ProcessRunner`] is the real one.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Mutex, OnceLock};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use regex::Regex;
use revperf_core::logcat::{format_threadtime_stamp, year_of};
use revperf_core::{
    parse_gui_dump, parse_logcat_line, CommandOutcome, DeviceCommand, GuiState, LogEntry, MetricSample, Selector,
};
use serde::{Deserialize, Serialize};

use crate::{BackendCapabilities, BackendError, DeviceBackend};

/// Upper bound for any single bridge invocation.
pub const ADB_TIMEOUT: Duration = Duration::from_secs(15);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdbConfig {
    pub adb_binary_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_serial: Option<String>,
    pub package_name: String,
    #[serde(default = "default_poll_interval")]
    pub poll_interval_ms: u64,
}

fn default_poll_interval() -> u64 {
    1000
}

impl AdbConfig {
    pub fn new(package_name: impl Into<String>) -> Self {
        AdbConfig {
            adb_binary_path: PathBuf::from("adb"),
            device_serial: None,
            package_name: package_name.into(),
            poll_interval_ms: default_poll_interval(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.poll_interval_ms < 100 {
            return Err(format!("poll_interval_ms must be >= 100, got {}", self.poll_interval_ms));
        }
        if self.package_name.trim().is_empty() {
            return Err("package_name is empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunOutput {
    pub status: i32,
    pub stdout: String,
    pub stderr: String,
}

pub trait AdbRunner: Send {
    /// Runs `adb <args>` to completion.
    fn run(&mut self, args: &[String], timeout: Duration) -> Result<RunOutput, BackendError>;

    /// Starts a long-running `adb <args>` and hands back its stdout.
    fn stream(&mut self, args: &[String]) -> Result<Box<dyn BufRead + Send>, BackendError>;

    /// Stops any streams started with [`AdbRunner::stream`].
    fn shutdown(&mut self) {}
}

/// Spawns the real `adb` binary.
pub struct ProcessRunner {
    binary: PathBuf,
    streams: Vec<Child>,
}

impl ProcessRunner {
    pub fn new(binary: impl Into<PathBuf>) -> Self {
        ProcessRunner { binary: binary.into(), streams: Vec::new() }
    }
}

fn drain<R: Read + Send + 'static>(r: Option<R>) -> JoinHandle<String> {
    thread::spawn(move || {
        let mut s = String::new();
        if let Some(mut r) = r {
            let mut buf = Vec::new();
            let _ = r.read_to_end(&mut buf);
            s = String::from_utf8_lossy(&buf).into_owned();
        }
        s
    })
}

impl AdbRunner for ProcessRunner {
    fn run(&mut self, args: &[String], timeout: Duration) -> Result<RunOutput, BackendError> {
        let mut child = Command::new(&self.binary)
            .args(args)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| BackendError::DeviceUnreachable(format!("{}: {e}", self.binary.display())))?;
        let out = drain(child.stdout.take());
        let err = drain(child.stderr.take());
        let start = Instant::now();
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if start.elapsed() >= timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(BackendError::DeviceUnreachable(format!(
                        "adb {} timed out after {}s",
                        args.join(" "),
                        timeout.as_secs()
                    )));
                }
                Ok(None) => thread::sleep(Duration::from_millis(10)),
                Err(e) => return Err(BackendError::DeviceUnreachable(e.to_string())),
            }
        };
        Ok(RunOutput {
            status: status.code().unwrap_or(-1),
            stdout: out.join().unwrap_or_default(),
            stderr: err.join().unwrap_or_default(),
        })
    }

    fn stream(&mut self, args: &[String]) -> Result<Box<dyn BufRead + Send>, BackendError> {
        let mut child = Command::new(&self.binary)
            .args(args)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| BackendError::DeviceUnreachable(format!("{}: {e}", self.binary.display())))?;
        let stdout = child.stdout.take().ok_or_else(|| BackendError::DeviceUnreachable("no stdout".into()))?;
        self.streams.push(child);
        Ok(Box::new(BufReader::new(stdout)))
    }

    fn shutdown(&mut self) {
        for mut c in self.streams.drain(..) {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

impl Drop for ProcessRunner {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Escapes text for `input text`: spaces become `%s`, shell metacharacters
/// are backslash-escaped.
pub fn escape_input_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len() * 2);
    for c in text.chars() {
        match c {
            ' ' => out.push_str("%s"),
            '\\' | '"' | '\'' | '`' | '$' | '&' | '|' | ';' | '<' | '>' | '(' | ')' | '*' | '~' | '#' | '%' | '!'
            | '?' | '[' | ']' | '{' | '}' => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out
}

/// Java + native heap (KB) and total PSS (KB) from `dumpsys meminfo <pkg>`.
pub fn parse_meminfo(text: &str) -> Option<(u64, u64)> {
    let first_number = |label: &str| {
        text.lines().find_map(|l| {
            let rest = l.trim_start().strip_prefix(label)?;
            rest.split_whitespace().next()?.parse::<u64>().ok()
        })
    };
    let java = first_number("Java Heap:");
    let native = first_number("Native Heap:");
    let total = first_number("TOTAL PSS:").or_else(|| first_number("TOTAL:"));
    match (java, native) {
        (None, None) => None,
        (j, n) => Some((j.unwrap_or(0) + n.unwrap_or(0), total.unwrap_or(0))),
    }
}

/// Used swap (KB) from `/proc/meminfo`.
pub fn parse_swap_used(text: &str) -> u64 {
    let field = |name: &str| {
        text.lines()
            .find_map(|l| l.strip_prefix(name)?.split_whitespace().next()?.parse::<u64>().ok())
            .unwrap_or(0)
    };
    field("SwapTotal:").saturating_sub(field("SwapFree:"))
}

fn activity_record_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"ActivityRecord\{([0-9a-f]+) u\d+ ([^\s/}]+)/([^\s}]+)").expect("activity regex"))
}

/// Distinct activity records for `package` in `dumpsys activity activities`.
pub fn count_activities(text: &str, package: &str) -> u32 {
    let ids: BTreeSet<&str> = activity_record_re()
        .captures_iter(text)
        .filter(|c| &c[2] == package)
        .map(|c| c.get(1).map_or("", |m| m.as_str()))
        .collect();
    ids.len() as u32
}

/// The resumed activity (`pkg/.Activity`) in `dumpsys activity activities`.
pub fn resumed_activity(text: &str) -> Option<String> {
    text.lines()
        .filter(|l| l.contains("mResumedActivity") || l.contains("topResumedActivity") || l.contains("ResumedActivity:"))
        .find_map(|l| activity_record_re().captures(l).map(|c| format!("{}/{}", &c[2], &c[3])))
}

/// (process ticks, total ticks, cpu count) from `cat /proc/<pid>/stat /proc/stat`.
pub fn parse_cpu_ticks(text: &str) -> Option<(u64, u64, u32)> {
    let mut lines = text.lines();
    let pid_line = lines.next()?;
    // the command name may contain spaces; fields resume after the closing paren
    let after = &pid_line[pid_line.rfind(')')? + 1..];
    let fields: Vec<&str> = after.split_whitespace().collect();
    // after ')' the first field is state (field 3), so utime (14) is index 11
    let utime: u64 = fields.get(11)?.parse().ok()?;
    let stime: u64 = fields.get(12)?.parse().ok()?;
    let mut total = None;
    let mut cpus = 0;
    for l in lines {
        if let Some(rest) = l.strip_prefix("cpu ") {
            total = Some(rest.split_whitespace().filter_map(|v| v.parse::<u64>().ok()).sum());
        } else if l.starts_with("cpu") {
            cpus += 1;
        }
    }
    Some((utime + stime, total?, cpus.max(1)))
}

fn wall_ms() -> i64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as i64).unwrap_or(0)
}

pub struct AdbBackend<R: AdbRunner> {
    config: AdbConfig,
    runner: R,
    logs: Arc<Mutex<Vec<LogEntry>>>,
    reader: Option<JoinHandle<()>>,
    saved_rotation: Option<(String, String)>,
    last_cpu: Option<(u64, u64)>,
    settle: Duration,
    last_gui: Option<GuiState>,
}

impl AdbBackend<ProcessRunner> {
    pub fn connect(config: AdbConfig) -> Result<Self, BackendError> {
        let runner = ProcessRunner::new(config.adb_binary_path.clone());
        let mut b = AdbBackend::with_runner(config, runner)?;
        let state = b.adb(&["get-state"])?;
        if state.status != 0 || state.stdout.trim() != "device" {
            return Err(BackendError::DeviceUnreachable(format!(
                "device state `{}` {}",
                state.stdout.trim(),
                state.stderr.trim()
            )));
        }
        Ok(b)
    }
}

impl<R: AdbRunner> AdbBackend<R> {
    pub fn with_runner(config: AdbConfig, runner: R) -> Result<Self, BackendError> {
        config.validate().map_err(BackendError::InvalidCommand)?;
        Ok(AdbBackend {
            config,
            runner,
            logs: Arc::new(Mutex::new(Vec::new())),
            reader: None,
            saved_rotation: None,
            last_cpu: None,
            settle: Duration::from_millis(500),
            last_gui: None,
        })
    }

    /// Pause between a state-changing command and the dump that follows it.
    pub fn with_settle(mut self, settle: Duration) -> Self {
        self.settle = settle;
        self
    }

    pub fn runner(&self) -> &R {
        &self.runner
    }

    fn argv(&self, args: &[&str]) -> Vec<String> {
        let mut v = Vec::with_capacity(args.len() + 2);
        if let Some(serial) = &self.config.device_serial {
            v.push("-s".to_string());
            v.push(serial.clone());
        }
        v.extend(args.iter().map(|s| s.to_string()));
        v
    }

    fn adb(&mut self, args: &[&str]) -> Result<RunOutput, BackendError> {
        let argv = self.argv(args);
        let out = self.runner.run(&argv, ADB_TIMEOUT)?;
        let err = out.stderr.to_ascii_lowercase();
        if err.contains("device offline") || err.contains("no devices") || err.contains("not found") && err.contains("device")
        {
            return Err(BackendError::DeviceUnreachable(out.stderr.trim().to_string()));
        }
        Ok(out)
    }

    fn shell(&mut self, args: &[&str]) -> Result<RunOutput, BackendError> {
        let mut full = vec!["shell"];
        full.extend_from_slice(args);
        self.adb(&full)
    }

    fn tap_point(&mut self, target: &Selector) -> Result<(i32, i32), BackendError> {
        if let Selector::Point { x, y } = target {
            return Ok((*x, *y));
        }
        let gui = self.dump_gui()?;
        let node = gui.root.resolve(target)?;
        Ok(node.bounds.center())
    }

    fn start_log_stream(&mut self) -> Result<(), BackendError> {
        if self.reader.is_some() {
            return Ok(());
        }
        let stamp = format_threadtime_stamp(wall_ms());
        let argv = self.argv(&["logcat", "-v", "threadtime", "-T", &stamp]);
        let stream = self.runner.stream(&argv)?;
        let sink = Arc::clone(&self.logs);
        self.reader = Some(thread::spawn(move || {
            for line in stream.lines() {
                let Ok(line) = line else { break };
                if let Some(e) = parse_logcat_line(&line, year_of(wall_ms())) {
                    sink.lock().unwrap_or_else(|p| p.into_inner()).push(e);
                }
            }
        }));
        Ok(())
    }

    fn pid(&mut self) -> Result<Option<u32>, BackendError> {
        let pkg = self.config.package_name.clone();
        let out = self.shell(&["pidof", &pkg])?;
        Ok(out.stdout.split_whitespace().next().and_then(|p| p.parse().ok()))
    }

    fn run_mapped(&mut self, cmd: &DeviceCommand) -> Result<RunOutput, BackendError> {
        match cmd {
            DeviceCommand::Click { target } => {
                let (x, y) = self.tap_point(target)?;
                self.shell(&["input", "tap", &x.to_string(), &y.to_string()])
            }
            DeviceCommand::Swipe { from, to, duration_ms } => self.shell(&[
                "input",
                "swipe",
                &from.0.to_string(),
                &from.1.to_string(),
                &to.0.to_string(),
                &to.1.to_string(),
                &duration_ms.to_string(),
            ]),
            DeviceCommand::InputText { target, text } => {
                if let Some(t) = target {
                    let (x, y) = self.tap_point(t)?;
                    self.shell(&["input", "tap", &x.to_string(), &y.to_string()])?;
                }
                self.shell(&["input", "text", &escape_input_text(text)])
            }
            DeviceCommand::RotateScreen { orientation } => {
                if self.saved_rotation.is_none() {
                    let accel = self.shell(&["settings", "get", "system", "accelerometer_rotation"])?;
                    let user = self.shell(&["settings", "get", "system", "user_rotation"])?;
                    self.saved_rotation = Some((accel.stdout.trim().to_string(), user.stdout.trim().to_string()));
                }
                self.shell(&["settings", "put", "system", "accelerometer_rotation", "0"])?;
                self.shell(&["settings", "put", "system", "user_rotation", &orientation.user_rotation().to_string()])
            }
            DeviceCommand::Wait { duration_ms } => {
                thread::sleep(Duration::from_millis(*duration_ms));
                Ok(RunOutput::default())
            }
            DeviceCommand::LockScreen => self.shell(&["input", "keyevent", "26"]),
            DeviceCommand::UnlockScreen => {
                self.shell(&["input", "keyevent", "26"])?;
                self.shell(&["input", "keyevent", "82"])?;
                let (x, y0, y1) = match &self.last_gui {
                    Some(g) => {
                        let b = g.root.bounds;
                        ((b.left + b.right) / 2, b.top + (b.bottom - b.top) * 4 / 5, b.top + (b.bottom - b.top) / 5)
                    }
                    None => (540, 1600, 400),
                };
                self.shell(&["input", "swipe", &x.to_string(), &y0.to_string(), &x.to_string(), &y1.to_string(), "300"])
            }
            DeviceCommand::PressBack => self.shell(&["input", "keyevent", "4"]),
            DeviceCommand::LaunchApp { package } => {
                self.shell(&["monkey", "-p", package, "-c", "android.intent.category.LAUNCHER", "1"])
            }
            DeviceCommand::AdjustSetting { namespace, key, value } => {
                self.shell(&["settings", "put", namespace.as_str(), key, value])
            }
            DeviceCommand::InvokeDetector => Ok(RunOutput::default()),
        }
    }
}

impl<R: AdbRunner> DeviceBackend for AdbBackend<R> {
    fn capabilities(&self) -> BackendCapabilities {
        BackendCapabilities::ALL
    }

    fn execute_command(&mut self, cmd: &DeviceCommand) -> Result<CommandOutcome, BackendError> {
        cmd.check_payload().map_err(BackendError::InvalidCommand)?;
        let start = Instant::now();
        let out = self.run_mapped(cmd)?;
        let gui_after = if cmd.is_state_changing() {
            thread::sleep(self.settle);
            Some(self.dump_gui()?)
        } else {
            None
        };
        let elapsed_ms = start.elapsed().as_millis() as u64;
        if out.status != 0 {
            let detail = format!("adb exited with {}: {}", out.status, out.stderr.trim());
            return Ok(CommandOutcome::failed(detail, gui_after, elapsed_ms));
        }
        Ok(CommandOutcome::ok(format!("{cmd}"), gui_after, elapsed_ms))
    }

    fn dump_gui(&mut self) -> Result<GuiState, BackendError> {
        let out = self.adb(&["exec-out", "uiautomator", "dump", "/dev/tty"])?;
        let xml = match out.stdout.find("</hierarchy>") {
            Some(end) => &out.stdout[..end + "</hierarchy>".len()],
            None => return Err(BackendError::MalformedDump(out.stdout.chars().take(200).collect())),
        };
        let mut state = parse_gui_dump(xml)?;
        let activities = self.shell(&["dumpsys", "activity", "activities"])?;
        if let Some(a) = resumed_activity(&activities.stdout) {
            state.foreground_activity = a;
        }
        state.timestamp = wall_ms();
        self.last_gui = Some(state.clone());
        Ok(state)
    }

    fn poll_logs(&mut self, since: i64) -> Result<Vec<LogEntry>, BackendError> {
        self.start_log_stream()?;
        let logs = self.logs.lock().unwrap_or_else(|p| p.into_inner());
        Ok(logs.iter().filter(|e| e.timestamp > since).cloned().collect())
    }

    fn sample_metrics(&mut self) -> Result<MetricSample, BackendError> {
        let pkg = self.config.package_name.clone();
        let swap_kb = parse_swap_used(&self.shell(&["cat", "/proc/meminfo"])?.stdout);
        let timestamp = wall_ms();
        let Some(pid) = self.pid()? else {
            self.last_cpu = None;
            return Ok(MetricSample {
                timestamp,
                heap_kb: 0,
                total_mem_kb: 0,
                swap_kb,
                cpu_percent: 0.0,
                activity_count: 0,
                process_running: false,
            });
        };
        let (heap_kb, total_mem_kb) = parse_meminfo(&self.shell(&["dumpsys", "meminfo", &pkg])?.stdout).unwrap_or((0, 0));
        let activity_count = count_activities(&self.shell(&["dumpsys", "activity", "activities"])?.stdout, &pkg);
        let stat = self.shell(&["cat", &format!("/proc/{pid}/stat"), "/proc/stat"])?;
        let cpu_percent = match parse_cpu_ticks(&stat.stdout) {
            Some((proc_ticks, total, cpus)) => {
                let pct = match self.last_cpu {
                    Some((p0, t0)) if total > t0 => {
                        let per_core = (total - t0) as f64 / f64::from(cpus);
                        (proc_ticks.saturating_sub(p0) as f64 / per_core * 100.0).clamp(0.0, 100.0)
                    }
                    _ => 0.0,
                };
                self.last_cpu = Some((proc_ticks, total));
                pct
            }
            None => 0.0,
        };
        Ok(MetricSample { timestamp, heap_kb, total_mem_kb, swap_kb, cpu_percent, activity_count, process_running: true })
    }

    fn now_ms(&self) -> i64 {
        wall_ms()
    }

    fn finish(&mut self) -> Result<(), BackendError> {
        if let Some((accel, user)) = self.saved_rotation.take() {
            if !accel.is_empty() && accel != "null" {
                self.shell(&["settings", "put", "system", "accelerometer_rotation", &accel])?;
            }
            if !user.is_empty() && user != "null" {
                self.shell(&["settings", "put", "system", "user_rotation", &user])?;
            }
        }
        self.runner.shutdown();
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
        Ok(())
    }
}
