use std::collections::VecDeque;
use std::io::{BufRead, Cursor};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use revperf_core::{DeviceCommand, Orientation, Selector, SettingNamespace};
use revperf_device::{AdbBackend, AdbConfig, AdbRunner, BackendError, DeviceBackend, RunOutput};

const DUMP: &str = r#"<?xml version='1.0' encoding='UTF-8' standalone='yes' ?><hierarchy rotation="0"><node index="0" text="" resource-id="" class="android.widget.FrameLayout" content-desc="" clickable="false" enabled="true" bounds="[0,0][1080,1920]"><node index="0" text="" resource-id="org.x:id/fab_add" class="android.widget.ImageButton" content-desc="" clickable="true" enabled="true" bounds="[880,1720][1040,1880]" /></node></hierarchy>UI hierchary dumped to: /dev/tty"#;

const ACTIVITIES: &str = "  mResumedActivity: ActivityRecord{1a2b u0 org.x/.Main t5}\n    * Hist #0: ActivityRecord{1a2b u0 org.x/.Main t5}\n";

#[derive(Clone, Default)]
struct Fake {
    calls: Arc<Mutex<Vec<Vec<String>>>>,
    offline: bool,
    logcat: Arc<Mutex<VecDeque<String>>>,
}

impl Fake {
    fn calls(&self) -> Vec<String> {
        self.calls.lock().unwrap().iter().map(|c| c.join(" ")).collect()
    }
}

impl AdbRunner for Fake {
    fn run(&mut self, args: &[String], timeout: Duration) -> Result<RunOutput, BackendError> {
        assert_eq!(timeout, Duration::from_secs(15));
        self.calls.lock().unwrap().push(args.to_vec());
        if self.offline {
            return Ok(RunOutput { status: 1, stdout: String::new(), stderr: "error: device offline".into() });
        }
        let joined = args.join(" ");
        let stdout = if joined.contains("uiautomator dump") {
            DUMP.to_string()
        } else if joined.contains("dumpsys activity activities") {
            ACTIVITIES.to_string()
        } else if joined.contains("settings get system accelerometer_rotation") {
            "1\n".into()
        } else if joined.contains("settings get system user_rotation") {
            "0\n".into()
        } else if joined.ends_with("pidof org.x") {
            "4321\n".into()
        } else if joined.contains("dumpsys meminfo org.x") {
            "   Java Heap:    30000\n Native Heap:    10960\n   TOTAL PSS:    98304\n".into()
        } else if joined.contains("cat /proc/meminfo") {
            "SwapTotal: 1000 kB\nSwapFree: 1000 kB\n".into()
        } else if joined.contains("/proc/4321/stat") {
            "4321 (org.x) S 1 2 3 4 5 6 7 8 9 10 100 20 0\ncpu  100 0 100 800\ncpu0 1\n".into()
        } else {
            String::new()
        };
        Ok(RunOutput { status: 0, stdout, stderr: String::new() })
    }

    fn stream(&mut self, args: &[String]) -> Result<Box<dyn BufRead + Send>, BackendError> {
        self.calls.lock().unwrap().push(args.to_vec());
        let text: Vec<String> = self.logcat.lock().unwrap().drain(..).collect();
        Ok(Box::new(Cursor::new(text.join("\n").into_bytes())))
    }
}

fn backend(serial: Option<&str>) -> (AdbBackend<Fake>, Fake) {
    let fake = Fake::default();
    let config = AdbConfig {
        adb_binary_path: PathBuf::from("/opt/android/platform-tools/adb"),
        device_serial: serial.map(str::to_string),
        package_name: "org.x".into(),
        poll_interval_ms: 1000,
    };
    (AdbBackend::with_runner(config, fake.clone()).unwrap().with_settle(Duration::ZERO), fake)
}

fn first_call_for(cmd: DeviceCommand) -> Vec<String> {
    let (mut b, fake) = backend(None);
    b.execute_command(&cmd).unwrap();
    fake.calls()
}

#[test]
fn command_mapping_is_exact() {
    let calls = first_call_for(DeviceCommand::Click { target: Selector::Point { x: 10, y: 20 } });
    assert_eq!(calls[0], "shell input tap 10 20");

    let calls = first_call_for(DeviceCommand::Click { target: Selector::ResourceId("fab_add".into()) });
    assert_eq!(calls[0], "exec-out uiautomator dump /dev/tty");
    assert!(calls.contains(&"shell input tap 960 1800".to_string()), "{calls:?}");

    let calls = first_call_for(DeviceCommand::Swipe { from: (500, 1500), to: (500, 300), duration_ms: 250 });
    assert_eq!(calls[0], "shell input swipe 500 1500 500 300 250");

    let calls = first_call_for(DeviceCommand::InputText { target: None, text: "hi there".into() });
    assert_eq!(calls[0], "shell input text hi%sthere");

    let calls = first_call_for(DeviceCommand::RotateScreen { orientation: Orientation::Landscape });
    assert_eq!(
        &calls[..4],
        [
            "shell settings get system accelerometer_rotation",
            "shell settings get system user_rotation",
            "shell settings put system accelerometer_rotation 0",
            "shell settings put system user_rotation 1",
        ]
    );

    assert_eq!(first_call_for(DeviceCommand::LockScreen)[0], "shell input keyevent 26");
    let calls = first_call_for(DeviceCommand::UnlockScreen);
    assert_eq!(&calls[..2], ["shell input keyevent 26", "shell input keyevent 82"]);
    assert!(calls[2].starts_with("shell input swipe "));
    assert_eq!(first_call_for(DeviceCommand::PressBack)[0], "shell input keyevent 4");
    assert_eq!(
        first_call_for(DeviceCommand::LaunchApp { package: "org.x".into() })[0],
        "shell monkey -p org.x -c android.intent.category.LAUNCHER 1"
    );
    assert_eq!(
        first_call_for(DeviceCommand::AdjustSetting {
            namespace: SettingNamespace::Global,
            key: "window_animation_scale".into(),
            value: "0.5".into()
        })[0],
        "shell settings put global window_animation_scale 0.5"
    );
    assert!(first_call_for(DeviceCommand::InvokeDetector).is_empty());
}

#[test]
fn serial_prefix_and_rotation_restore() {
    let (mut b, fake) = backend(Some("emulator-5554"));
    b.execute_command(&DeviceCommand::RotateScreen { orientation: Orientation::Portrait }).unwrap();
    b.finish().unwrap();
    let calls = fake.calls();
    assert!(calls.iter().all(|c| c.starts_with("-s emulator-5554 ")), "{calls:?}");
    let tail: Vec<_> = calls.iter().rev().take(2).rev().cloned().collect();
    assert_eq!(
        tail,
        [
            "-s emulator-5554 shell settings put system accelerometer_rotation 1",
            "-s emulator-5554 shell settings put system user_rotation 0",
        ]
    );
}

#[test]
fn dump_and_metrics() {
    let (mut b, fake) = backend(None);
    let gui = b.dump_gui().unwrap();
    assert_eq!(gui.foreground_activity, "org.x/.Main");
    assert_eq!(gui.root.node_count(), 2);
    let m = b.sample_metrics().unwrap();
    assert_eq!((m.heap_kb, m.total_mem_kb, m.swap_kb, m.activity_count), (40960, 98304, 0, 1));
    assert!(m.process_running);
    let calls = fake.calls();
    for expected in ["shell dumpsys meminfo org.x", "shell dumpsys activity activities", "shell cat /proc/meminfo", "shell cat /proc/4321/stat /proc/stat"] {
        assert!(calls.iter().any(|c| c == expected), "{expected} missing from {calls:?}");
    }
}

#[test]
fn logcat_stream_is_parsed_and_filtered() {
    let (mut b, fake) = backend(None);
    fake.logcat.lock().unwrap().extend([
        "--------- beginning of main".to_string(),
        "06-01 12:00:00.100  1234  1234 I EGL_emulation: app_time_stats: avg=29.89ms min=16.77ms max=34.09ms count=34".into(),
        "06-01 12:00:01.100  1234  1234 I EGL_emulation: app_time_stats: avg=3456.54ms min=3456.54ms max=3456.54ms count=1".into(),
    ]);
    // the reader thread drains the stream on the first poll
    let mut all = b.poll_logs(0).unwrap();
    for _ in 0..100 {
        if all.len() == 2 {
            break;
        }
        std::thread::sleep(Duration::from_millis(10));
        all = b.poll_logs(0).unwrap();
    }
    assert_eq!(all.len(), 2);
    let later = b.poll_logs(all[0].timestamp).unwrap();
    assert_eq!(later, all[1..]);
    let calls = fake.calls();
    let logcat = calls.iter().find(|c| c.starts_with("logcat")).unwrap();
    assert!(logcat.starts_with("logcat -v threadtime -T "), "{logcat}");
}

#[test]
fn offline_device_is_unreachable() {
    let (mut b, mut fake) = backend(None);
    fake.offline = true;
    let mut b2 = AdbBackend::with_runner(AdbConfig::new("org.x"), fake).unwrap();
    assert!(matches!(b2.dump_gui(), Err(BackendError::DeviceUnreachable(_))));
    assert!(b.dump_gui().is_ok());
}

#[test]
fn poll_interval_floor() {
    let mut c = AdbConfig::new("org.x");
    c.poll_interval_ms = 50;
    assert!(c.validate().is_err());
    assert!(AdbBackend::with_runner(c, Fake::default()).is_err());
}
