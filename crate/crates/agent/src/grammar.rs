//! One-line command grammar the reasoner answers in.
//!
//! ```text
//! CLICK id=<resource_id> | CLICK text="<text>" | CLICK x=<n> y=<n>
//! SWIPE x1=<n> y1=<n> x2=<n> y2=<n> ms=<n>
//! INPUT_TEXT [id=..|text=..|x= y=] value="<text>"
//! ROTATE orientation=portrait|landscape
//! WAIT ms=<n>
//! LOCK_SCREEN | UNLOCK_SCREEN | BACK | INVOKE_DETECTOR
//! LAUNCH_APP pkg=<package>
//! SET_SETTING ns=system|secure|global key=<key> value=<value>
//! ```
//!
//! Values may be double-quoted with `\"`, `\\` and `\n` escapes. The rendered
//! form of [`DeviceCommand`] is this grammar, so parsing its `Display` output
//! gives the command back.

use std::collections::BTreeMap;

use revperf_core::{CommandKind, DeviceCommand, Orientation, Selector, SettingNamespace};

/// Argument grammar of each kind, as shown to the reasoner.
pub fn operation_grammar(kind: CommandKind) -> (&'static str, &'static str) {
    match kind {
        CommandKind::Click => ("CLICK id=<resource_id> | CLICK text=\"<text>\" | CLICK x=<n> y=<n>", "tap a widget"),
        CommandKind::Swipe => ("SWIPE x1=<n> y1=<n> x2=<n> y2=<n> ms=<n>", "drag or scroll gesture"),
        CommandKind::InputText => ("INPUT_TEXT id=<resource_id> value=\"<text>\"", "type into a field (id optional if focused)"),
        CommandKind::RotateScreen => ("ROTATE orientation=portrait|landscape", "rotate the screen"),
        CommandKind::Wait => ("WAIT ms=<100..60000>", "let time pass without input"),
        CommandKind::LockScreen => ("LOCK_SCREEN", "press power to lock"),
        CommandKind::UnlockScreen => ("UNLOCK_SCREEN", "wake and unlock"),
        CommandKind::PressBack => ("BACK", "system back key"),
        CommandKind::LaunchApp => ("LAUNCH_APP pkg=<package>", "start or bring the app to front"),
        CommandKind::AdjustSetting => (
            "SET_SETTING ns=system|secure|global key=<key> value=<value>",
            "change a device setting",
        ),
        CommandKind::InvokeDetector => ("INVOKE_DETECTOR", "all reproduction steps done; start issue detection"),
    }
}

fn tokenize(s: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut chars = s.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        let Some(&c) = chars.peek() else { break };
        let mut tok = String::new();
        if c == '"' {
            return Err("value without a key".into());
        }
        while let Some(&c) = chars.peek() {
            if c.is_whitespace() {
                break;
            }
            chars.next();
            if c == '"' {
                loop {
                    match chars.next() {
                        None => return Err("unterminated quote".into()),
                        Some('"') => break,
                        Some('\\') => match chars.next() {
                            Some('n') => tok.push('\n'),
                            Some(e @ ('"' | '\\')) => tok.push(e),
                            Some(other) => return Err(format!("unknown escape `\\{other}`")),
                            None => return Err("unterminated escape".into()),
                        },
                        Some(ch) => tok.push(ch),
                    }
                }
            } else {
                tok.push(c);
            }
        }
        out.push(tok);
    }
    Ok(out)
}

fn args(tokens: &[String]) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for t in tokens {
        let (k, v) = t.split_once('=').ok_or_else(|| format!("expected key=value, got `{t}`"))?;
        if map.insert(k.to_ascii_lowercase(), v.to_string()).is_some() {
            return Err(format!("duplicate argument `{k}`"));
        }
    }
    Ok(map)
}

struct Args(BTreeMap<String, String>);

impl Args {
    fn take(&mut self, key: &str) -> Option<String> {
        self.0.remove(key)
    }

    fn req(&mut self, key: &str) -> Result<String, String> {
        self.take(key).ok_or_else(|| format!("missing `{key}=`"))
    }

    fn num<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, String> {
        let v = self.req(key)?;
        v.parse().map_err(|_| format!("`{key}` must be a number, got `{v}`"))
    }

    fn selector(&mut self) -> Result<Option<Selector>, String> {
        if let Some(id) = self.take("id") {
            return Ok(Some(Selector::ResourceId(id)));
        }
        if let Some(t) = self.take("text") {
            return Ok(Some(Selector::Text(t)));
        }
        match (self.0.contains_key("x"), self.0.contains_key("y")) {
            (true, true) => Ok(Some(Selector::Point { x: self.num("x")?, y: self.num("y")? })),
            (false, false) => Ok(None),
            _ => Err("coordinates need both `x=` and `y=`".into()),
        }
    }

    fn done(self) -> Result<(), String> {
        match self.0.keys().next() {
            Some(k) => Err(format!("unexpected argument `{k}`")),
            None => Ok(()),
        }
    }
}

fn parse_line(line: &str) -> Result<DeviceCommand, String> {
    let tokens = tokenize(line)?;
    let (head, rest) = tokens.split_first().ok_or("empty command")?;
    let kind = CommandKind::from_keyword(&head.to_ascii_uppercase())
        .or_else(|| match head.to_ascii_uppercase().as_str() {
            "ROTATE_SCREEN" => Some(CommandKind::RotateScreen),
            "PRESS_BACK" => Some(CommandKind::PressBack),
            "ADJUST_SETTING" => Some(CommandKind::AdjustSetting),
            _ => None,
        })
        .ok_or_else(|| format!("unknown command `{head}`"))?;
    let mut a = Args(args(rest)?);
    let cmd = match kind {
        CommandKind::Click => DeviceCommand::Click { target: a.selector()?.ok_or("CLICK needs id=, text= or x= y=")? },
        CommandKind::Swipe => DeviceCommand::Swipe {
            from: (a.num("x1")?, a.num("y1")?),
            to: (a.num("x2")?, a.num("y2")?),
            duration_ms: a.num("ms")?,
        },
        CommandKind::InputText => {
            let value = a.req("value")?;
            DeviceCommand::InputText { target: a.selector()?, text: value }
        }
        CommandKind::RotateScreen => {
            let o = a.req("orientation")?;
            let orientation = match o.to_ascii_lowercase().as_str() {
                "portrait" => Orientation::Portrait,
                "landscape" => Orientation::Landscape,
                _ => return Err(format!("orientation must be portrait or landscape, got `{o}`")),
            };
            DeviceCommand::RotateScreen { orientation }
        }
        CommandKind::Wait => DeviceCommand::Wait { duration_ms: a.num("ms")? },
        CommandKind::LockScreen => DeviceCommand::LockScreen,
        CommandKind::UnlockScreen => DeviceCommand::UnlockScreen,
        CommandKind::PressBack => DeviceCommand::PressBack,
        CommandKind::InvokeDetector => DeviceCommand::InvokeDetector,
        CommandKind::LaunchApp => DeviceCommand::LaunchApp { package: a.req("pkg")? },
        CommandKind::AdjustSetting => {
            let ns = a.req("ns")?;
            let namespace = match ns.to_ascii_lowercase().as_str() {
                "system" => SettingNamespace::System,
                "secure" => SettingNamespace::Secure,
                "global" => SettingNamespace::Global,
                _ => return Err(format!("ns must be system, secure or global, got `{ns}`")),
            };
            DeviceCommand::AdjustSetting { namespace, key: a.req("key")?, value: a.req("value")? }
        }
    };
    a.done()?;
    cmd.check_payload()?;
    Ok(cmd)
}

/// Extracts the command from a reply: the line after `ACTION:` when present,
/// otherwise the last non-empty line. Surrounding backticks are ignored.
pub fn parse_command(reply: &str) -> Result<DeviceCommand, String> {
    let clean = |l: &str| l.trim().trim_matches('`').trim().to_string();
    let line = reply
        .lines()
        .rev()
        .find_map(|l| l.trim().strip_prefix("ACTION:").map(clean))
        .or_else(|| reply.lines().rev().map(clean).find(|l| !l.is_empty()))
        .ok_or("empty reply")?;
    parse_line(&line).map_err(|e| format!("cannot parse `{line}`: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_examples() {
        assert_eq!(
            parse_command("CLICK id=fab_add").unwrap(),
            DeviceCommand::Click { target: Selector::ResourceId("fab_add".into()) }
        );
        assert_eq!(
            parse_command("Thought: the list is open\nACTION: `WAIT ms=1500`\n").unwrap(),
            DeviceCommand::Wait { duration_ms: 1500 }
        );
        assert_eq!(
            parse_command("INPUT_TEXT id=note_body value=\"hello \\\"you\\\"\"").unwrap(),
            DeviceCommand::InputText {
                target: Some(Selector::ResourceId("note_body".into())),
                text: "hello \"you\"".into()
            }
        );
        assert_eq!(
            parse_command("click text=\"New note\"").unwrap(),
            DeviceCommand::Click { target: Selector::Text("New note".into()) }
        );
        assert!(parse_command("fly to the moon").is_err());
        assert!(parse_command("CLICK").is_err());
        assert!(parse_command("WAIT ms=abc").is_err());
        assert!(parse_command("CLICK x=3").is_err());
        assert!(parse_command("BACK now=1").is_err());
        assert!(parse_command("").is_err());
    }

    fn arb_word() -> impl Strategy<Value = String> {
        "[a-z_][a-z0-9_./:]{0,12}"
    }

    fn arb_text() -> impl Strategy<Value = String> {
        "[ -~\n]{1,16}"
    }

    fn arb_selector() -> impl Strategy<Value = Selector> {
        prop_oneof![
            arb_word().prop_map(Selector::ResourceId),
            arb_text().prop_map(Selector::Text),
            (0i32..4000, 0i32..4000).prop_map(|(x, y)| Selector::Point { x, y }),
        ]
    }

    fn arb_command() -> impl Strategy<Value = DeviceCommand> {
        prop_oneof![
            arb_selector().prop_map(|target| DeviceCommand::Click { target }),
            (0i32..2000, 0i32..2000, 0i32..2000, 0i32..2000, 1u64..5000)
                .prop_map(|(a, b, c, d, ms)| DeviceCommand::Swipe { from: (a, b), to: (c, d), duration_ms: ms }),
            (prop::option::of(arb_selector()), arb_text())
                .prop_map(|(target, text)| DeviceCommand::InputText { target, text }),
            prop::bool::ANY.prop_map(|l| DeviceCommand::RotateScreen {
                orientation: if l { Orientation::Landscape } else { Orientation::Portrait }
            }),
            (1u64..100_000).prop_map(|d| DeviceCommand::Wait { duration_ms: d }),
            Just(DeviceCommand::LockScreen),
            Just(DeviceCommand::UnlockScreen),
            Just(DeviceCommand::PressBack),
            Just(DeviceCommand::InvokeDetector),
            arb_word().prop_map(|package| DeviceCommand::LaunchApp { package }),
            (arb_word(), arb_text()).prop_map(|(key, value)| DeviceCommand::AdjustSetting {
                namespace: SettingNamespace::Secure,
                key,
                value
            }),
        ]
    }

    proptest! {
        #[test]
        fn display_round_trips(cmd in arb_command()) {
            prop_assert_eq!(parse_command(&cmd.to_string()).unwrap(), cmd);
        }
    }
}
