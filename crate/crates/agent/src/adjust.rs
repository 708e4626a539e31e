//! Settings changes implied by the complaint's triggers, applied before the
//! app is launched.

use revperf_core::{DeviceCommand, SettingNamespace};

const ANIMATION_KEYS: [&str; 3] = ["window_animation_scale", "transition_animation_scale", "animator_duration_scale"];

fn setting(namespace: SettingNamespace, key: &str, value: &str) -> DeviceCommand {
    DeviceCommand::AdjustSetting { namespace, key: key.into(), value: value.into() }
}

fn any(text: &str, words: &[&str]) -> bool {
    words.iter().any(|w| text.contains(w))
}

/// Commands for every settings vocabulary hit in `triggers`, in a fixed
/// order and without duplicates.
pub fn adjustments_for(triggers: &[String]) -> Vec<DeviceCommand> {
    let text = triggers.join("\n").to_lowercase();
    let mut out = Vec::new();
    if text.contains("animation") {
        let scale = if any(&text, &["disabl", "turn off", "turned off", "animations off", "no animation", "remov"]) {
            Some("0")
        } else if any(&text, &["reduc", "lower", "less animation", "fewer"]) {
            Some("0.5")
        } else {
            None
        };
        if let Some(scale) = scale {
            out.extend(ANIMATION_KEYS.iter().map(|k| setting(SettingNamespace::Global, k, scale)));
        }
    }
    if any(&text, &["dark mode", "dark theme", "night mode"]) {
        out.push(setting(SettingNamespace::Secure, "ui_night_mode", "2"));
    }
    if any(&text, &["font size", "large font", "larger font", "font scale", "big font"]) {
        out.push(setting(SettingNamespace::System, "font_scale", "1.3"));
    }
    if any(&text, &["battery saver", "power saving", "power saver", "low power"]) {
        out.push(setting(SettingNamespace::Global, "low_power", "1"));
    }
    if any(&text, &["airplane", "flight mode"]) {
        out.push(setting(SettingNamespace::Global, "airplane_mode_on", "1"));
    }
    out
}
