use serde::{Deserialize, Serialize};

use super::NormalizeError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Hours,
    Celsius,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitValue {
    pub magnitude: f64,
    pub unit: Unit,
    pub original: String,
    /// Set when a conventional value was substituted for an idiom.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idiom: Option<String>,
}

/// Hours assumed for "overnight".
pub const OVERNIGHT_HOURS: f64 = 12.0;
pub const ROOM_TEMPERATURE_C: f64 = 25.0;

/// Results are rounded to six decimals so unit arithmetic lands on the
/// nearest short decimal (393 K is exactly 119.85, not 119.85000000000002).
fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

const APPROX: [&str; 6] = ["approximately ", "about ", "approx. ", "ca. ", "~", "≈"];

/// Splits `text` into (number, unit) per the documented grammar:
/// optional approximation word, a decimal number, then a unit word.
fn split_quantity(text: &str) -> Option<(f64, String)> {
    let mut s = text.trim().to_lowercase();
    for a in APPROX {
        if let Some(rest) = s.strip_prefix(a) {
            s = rest.trim_start().to_string();
        }
    }
    let s = s.replace('−', "-");
    let end = s
        .char_indices()
        .find(|&(i, c)| !(c.is_ascii_digit() || c == '.' || (i == 0 && c == '-')))
        .map_or(s.len(), |(i, _)| i);
    let (num, unit) = s.split_at(end);
    let value: f64 = num.parse().ok().filter(|v: &f64| v.is_finite())?;
    Some((value, unit.trim().to_string()))
}

fn hours_per(unit: &str) -> Option<f64> {
    Some(match unit {
        "s" | "sec" | "secs" | "second" | "seconds" => 1.0 / 3600.0,
        "min" | "mins" | "minute" | "minutes" => 1.0 / 60.0,
        "h" | "hr" | "hrs" | "hour" | "hours" => 1.0,
        "d" | "day" | "days" => 24.0,
        "week" | "weeks" | "wk" | "wks" => 168.0,
        _ => return None,
    })
}

/// Duration in hours. Grammar: `[approx] NUMBER UNIT` with units
/// s/min/h/day/week (and their plurals), or the idiom "overnight" (12 h,
/// flagged). Ranges and other shapes are rejected.
pub fn standardize_time(text: &str) -> Result<UnitValue, NormalizeError> {
    let original = text.to_string();
    let lower = text.trim().to_lowercase();
    if lower == "overnight" {
        return Ok(UnitValue { magnitude: OVERNIGHT_HOURS, unit: Unit::Hours, original, idiom: Some("overnight".into()) });
    }
    let (value, unit) = split_quantity(text).ok_or_else(|| NormalizeError::Unparseable(original.clone()))?;
    let factor = hours_per(&unit).ok_or_else(|| NormalizeError::Unparseable(original.clone()))?;
    if value < 0.0 {
        return Err(NormalizeError::Unparseable(original));
    }
    Ok(UnitValue { magnitude: round6(value * factor), unit: Unit::Hours, original, idiom: None })
}

enum Scale {
    C,
    K,
    F,
}

fn temperature_scale(unit: &str) -> Option<Scale> {
    let compact: String = unit.chars().filter(|c| !c.is_whitespace()).collect();
    Some(match compact.as_str() {
        "°c" | "ºc" | "˚c" | "℃" | "oc" | "c" | "degc" | "degreesc" | "degreec" | "degreescelsius" | "celsius" => Scale::C,
        "k" | "kelvin" => Scale::K,
        "°f" | "ºf" | "˚f" | "℉" | "f" | "degf" | "degreesf" | "fahrenheit" => Scale::F,
        _ => return None,
    })
}

/// Temperature in °C. Grammar: `[approx] NUMBER UNIT` with °C/K/°F spellings,
/// or the room-temperature idiom ("room temperature", "RT", "r.t.",
/// "ambient temperature") mapped to 25 °C and flagged.
pub fn standardize_temperature(text: &str) -> Result<UnitValue, NormalizeError> {
    let original = text.to_string();
    let lower = text.trim().to_lowercase();
    if matches!(lower.as_str(), "room temperature" | "rt" | "r.t." | "ambient temperature" | "ambient") {
        return Ok(UnitValue {
            magnitude: ROOM_TEMPERATURE_C,
            unit: Unit::Celsius,
            original,
            idiom: Some("room temperature".into()),
        });
    }
    let (value, unit) = split_quantity(text).ok_or_else(|| NormalizeError::Unparseable(original.clone()))?;
    let celsius = match temperature_scale(&unit).ok_or_else(|| NormalizeError::Unparseable(original.clone()))? {
        Scale::C => value,
        Scale::K if value >= 0.0 => value - 273.15,
        Scale::K => return Err(NormalizeError::Unparseable(original)),
        Scale::F => (value - 32.0) * 5.0 / 9.0,
    };
    Ok(UnitValue { magnitude: round6(celsius), unit: Unit::Celsius, original, idiom: None })
}

/// Whitespace-like characters mapped to a plain space before collapsing.
pub const SPACE_LIKE: [char; 5] = ['\u{00A0}', '\u{202F}', '\u{2009}', '\u{2007}', '\t'];
/// Invisible characters removed outright.
pub const INVISIBLE: [char; 4] = ['\u{200B}', '\u{200C}', '\u{200D}', '\u{FEFF}'];
/// Punctuation stripped from either end.
pub const EDGE_PUNCTUATION: [char; 3] = [',', ';', ':'];

/// Applies the tables above, collapses whitespace runs and trims. Idempotent.
pub fn clean_special_chars(text: &str) -> String {
    let mapped: String = text
        .chars()
        .filter(|c| !INVISIBLE.contains(c))
        .map(|c| if SPACE_LIKE.contains(&c) { ' ' } else { c })
        .collect();
    let collapsed = mapped.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.trim_matches(|c: char| c.is_whitespace() || EDGE_PUNCTUATION.contains(&c)).to_string()
}
