//! Parsing of `logcat -v threadtime` output and the emulator frame-stat lines it carries.
//!
//! Threadtime lines carry no year, so callers supply the capture year.

use std::sync::OnceLock;

use chrono::{DateTime, Datelike, NaiveDate, Timelike};
use regex::Regex;

use crate::model::{FrameStatsSample, LogEntry, LogPriority};

/// Tag of the emulator GL layer that reports `app_time_stats`.
pub const FRAME_STATS_TAG: &str = "EGL_emulation";

fn threadtime_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^(\d{2})-(\d{2})\s+(\d{2}):(\d{2}):(\d{2})\.(\d{3})\s+(\d+)\s+(\d+)\s+([VDIWEF])\s+(\S(?:.*?\S)??)\s*: ?(.*)$",
        )
        .expect("threadtime regex")
    })
}

fn frame_stats_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"app_time_stats:\s+avg=(\d+(?:\.\d+)?)ms\s+min=(\d+(?:\.\d+)?)ms\s+max=(\d+(?:\.\d+)?)ms(?:\s+count=(\d+))?",
        )
        .expect("frame stats regex")
    })
}

/// Parses one threadtime line. Dividers, continuation lines and garbage yield `None`.
pub fn parse_logcat_line(line: &str, year: i32) -> Option<LogEntry> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    let caps = threadtime_re().captures(line)?;
    let num = |i: usize| caps[i].parse::<u32>().ok();

    let date = NaiveDate::from_ymd_opt(year, num(1)?, num(2)?)?;
    let time = date.and_hms_milli_opt(num(3)?, num(4)?, num(5)?, num(6)?)?;
    let timestamp = time.and_utc().timestamp_millis();

    Some(LogEntry {
        timestamp,
        pid: num(7)?,
        tid: num(8)?,
        priority: LogPriority::from_char(caps[9].chars().next()?)?,
        tag: caps[10].to_string(),
        message: caps[11].to_string(),
    })
}

/// Parses every line of a logcat capture, dropping anything that is not an entry.
pub fn parse_logcat(text: &str, year: i32) -> Vec<LogEntry> {
    text.lines().filter_map(|l| parse_logcat_line(l, year)).collect()
}

/// Formats an entry as a threadtime line (UTC wall clock).
pub fn format_threadtime(entry: &LogEntry) -> String {
    format!(
        "{} {:>5} {:>5} {} {}: {}",
        format_threadtime_stamp(entry.timestamp),
        entry.pid,
        entry.tid,
        entry.priority.as_char(),
        entry.tag,
        entry.message
    )
}

/// `MM-DD HH:MM:SS.mmm` for an epoch-millisecond timestamp, as used by `logcat -T`.
pub fn format_threadtime_stamp(timestamp_ms: i64) -> String {
    let dt = DateTime::from_timestamp_millis(timestamp_ms).unwrap_or_default();
    format!(
        "{:02}-{:02} {:02}:{:02}:{:02}.{:03}",
        dt.month(),
        dt.day(),
        dt.hour(),
        dt.minute(),
        dt.second(),
        dt.timestamp_subsec_millis()
    )
}

/// UTC year of an epoch-millisecond timestamp.
pub fn year_of(timestamp_ms: i64) -> i32 {
    DateTime::from_timestamp_millis(timestamp_ms).unwrap_or_default().year()
}

/// Extracts an `app_time_stats` sample from an `EGL_emulation` entry.
///
/// A missing `count=` field (the line is sometimes wrapped) is read as one frame.
pub fn extract_frame_stats(entry: &LogEntry) -> Option<FrameStatsSample> {
    if entry.tag != FRAME_STATS_TAG {
        return None;
    }
    let caps = frame_stats_re().captures(&entry.message)?;
    let avg_ms: f64 = caps[1].parse().ok()?;
    let min_ms: f64 = caps[2].parse().ok()?;
    let max_ms: f64 = caps[3].parse().ok()?;
    let count = match caps.get(4) {
        Some(m) => m.as_str().parse().ok()?,
        None => 1,
    };
    if count == 0 || !(min_ms <= avg_ms && avg_ms <= max_ms) {
        return None;
    }
    Some(FrameStatsSample { avg_ms, min_ms, max_ms, count, timestamp: entry.timestamp })
}

/// Message body the emulator writes for a frame-stat batch.
pub fn frame_stats_message(avg_ms: f64, min_ms: f64, max_ms: f64, count: u32) -> String {
    format!("app_time_stats: avg={avg_ms:.2}ms min={min_ms:.2}ms max={max_ms:.2}ms count={count}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FIG6_FIRST: &str = "06-01 12:00:00.100  1234  1234 I EGL_emulation: app_time_stats: avg=29.89ms min=16.77ms max=34.09ms count=34";

    #[test]
    fn parses_threadtime_line() {
        let e = parse_logcat_line(FIG6_FIRST, 2025).unwrap();
        assert_eq!(e.tag, "EGL_emulation");
        assert_eq!(e.priority, LogPriority::I);
        assert_eq!(e.pid, 1234);
        assert_eq!(e.tid, 1234);
        assert_eq!(e.message, "app_time_stats: avg=29.89ms min=16.77ms max=34.09ms count=34");
        // 2025-06-01T12:00:00.100Z
        assert_eq!(e.timestamp, 1_748_779_200_100);
    }

    #[test]
    fn rejects_non_entries() {
        assert!(parse_logcat_line("", 2025).is_none());
        assert!(parse_logcat_line("--------- beginning of main", 2025).is_none());
        assert!(parse_logcat_line("\tat com.example.Foo.bar(Foo.java:12)", 2025).is_none());
        assert!(parse_logcat_line("02-30 12:00:00.000  1  1 I Tag: impossible date", 2025).is_none());
        assert!(parse_logcat_line("06-01 12:00:00.000  1  1 X Tag: bad level", 2025).is_none());
    }

    #[test]
    fn padded_tags_and_empty_messages() {
        let e = parse_logcat_line("06-01 12:00:00.000  10  11 W ActivityManager   : ", 2025).unwrap();
        assert_eq!(e.tag, "ActivityManager");
        assert_eq!(e.message, "");
        let e = parse_logcat_line("06-01 12:00:00.000  10  11 D Some Tag: hi: there", 2025).unwrap();
        assert_eq!(e.tag, "Some Tag");
        assert_eq!(e.message, "hi: there");
    }

    #[test]
    fn frame_stats_from_lag_line() {
        let e = LogEntry {
            timestamp: 5,
            pid: 1,
            tid: 1,
            priority: LogPriority::I,
            tag: FRAME_STATS_TAG.into(),
            message: "app_time_stats: avg=3456.54ms min=3456.54ms max=3456.54ms count=1".into(),
        };
        let s = extract_frame_stats(&e).unwrap();
        assert_eq!((s.avg_ms, s.min_ms, s.max_ms, s.count, s.timestamp), (3456.54, 3456.54, 3456.54, 1, 5));

        let e2 = LogEntry {
            message: "app_time_stats: avg=29.90ms min=16.80ms max=36.15ms count=34".into(),
            ..e.clone()
        };
        let s = extract_frame_stats(&e2).unwrap();
        assert_eq!((s.avg_ms, s.min_ms, s.max_ms, s.count), (29.90, 16.80, 36.15, 34));

        let wrong_tag = LogEntry { tag: "ActivityManager".into(), ..e };
        assert!(extract_frame_stats(&wrong_tag).is_none());
    }

    #[test]
    fn frame_stats_without_count_reads_as_one() {
        let e = LogEntry {
            timestamp: 0,
            pid: 1,
            tid: 1,
            priority: LogPriority::I,
            tag: FRAME_STATS_TAG.into(),
            message: "app_time_stats: avg=3456.54ms min=3456.54ms max=3456.54ms".into(),
        };
        assert_eq!(extract_frame_stats(&e).unwrap().count, 1);
    }

    fn arb_entry() -> impl Strategy<Value = LogEntry> {
        (
            // 2025-01-01 .. 2025-12-31, millisecond resolution
            1_735_689_600_000i64..1_767_225_599_999,
            0u32..100_000,
            0u32..100_000,
            prop::sample::select(vec![
                LogPriority::V,
                LogPriority::D,
                LogPriority::I,
                LogPriority::W,
                LogPriority::E,
                LogPriority::F,
            ]),
            "[A-Za-z_][A-Za-z0-9_.]{0,20}",
            "[ -~]{0,60}",
        )
            .prop_map(|(timestamp, pid, tid, priority, tag, message)| LogEntry {
                timestamp,
                pid,
                tid,
                priority,
                tag,
                message,
            })
    }

    proptest! {
        #[test]
        fn threadtime_round_trip(entry in arb_entry()) {
            let line = format_threadtime(&entry);
            let parsed = parse_logcat_line(&line, 2025).unwrap();
            prop_assert_eq!(&parsed, &entry);
            let again = parse_logcat_line(&format_threadtime(&parsed), 2025).unwrap();
            prop_assert_eq!(again, parsed);
        }

        #[test]
        fn frame_stats_need_the_emulator_tag(entry in arb_entry(), avg in 0.0f64..5000.0) {
            prop_assume!(entry.tag != FRAME_STATS_TAG);
            let msg = frame_stats_message(avg, 0.0, avg + 1.0, 3);
            let with_stats = LogEntry { message: msg, ..entry.clone() };
            prop_assert!(extract_frame_stats(&with_stats).is_none());
            prop_assert!(extract_frame_stats(&entry).is_none());
        }
    }
}
