//! GUI action vocabulary and its canonical JSON encoding.
//!
//! Coordinates are normalized to `[0, 1]` on both axes at ingestion, so every
//! downstream threshold is resolution independent. Payloads live inside the
//! enum variants, which makes a kind/payload mismatch unrepresentable.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// A point in normalized screen space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    x: f64,
    y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        check_unit("x", x)?;
        check_unit("y", y)?;
        Ok(Self { x, y })
    }

    /// Clamps each axis into `[0, 1]`; non-finite input maps to 0.
    pub fn clamped(x: f64, y: f64) -> Self {
        let c = |v: f64| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        Self { x: c(x), y: c(y) }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn distance_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(&self, other: &Point) -> f64 {
        self.distance_sq(other).sqrt()
    }
}

fn check_unit(axis: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Range {
            axis,
            value: v,
            max: 1.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScreenDims {
    width: u32,
    height: u32,
}

impl ScreenDims {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain(format!(
                "screen dimensions must be positive, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }
}

/// Converts a pixel coordinate into normalized space.
pub fn normalize_point(px: i64, py: i64, dims: ScreenDims) -> Result<Point> {
    let (w, h) = (dims.width as i64, dims.height as i64);
    if !(0..=w).contains(&px) {
        return Err(Error::Range {
            axis: "x",
            value: px as f64,
            max: w as f64,
        });
    }
    if !(0..=h).contains(&py) {
        return Err(Error::Range {
            axis: "y",
            value: py as f64,
            max: h as f64,
        });
    }
    Ok(Point {
        x: px as f64 / w as f64,
        y: py as f64 / h as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Up,
        Direction::Down,
        Direction::Left,
        Direction::Right,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "up" => Ok(Direction::Up),
            "down" => Ok(Direction::Down),
            "left" => Ok(Direction::Left),
            "right" => Ok(Direction::Right),
            other => Err(Error::schema(
                "direction",
                format!("invalid value `{other}` for field"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionKind {
    Click,
    LongPress,
    Scroll,
    Type,
    Launch,
    Wait,
    PressBack,
    PressHome,
    Finished,
}

impl ActionKind {
    pub const ALL: [ActionKind; 9] = [
        ActionKind::Click,
        ActionKind::LongPress,
        ActionKind::Scroll,
        ActionKind::Type,
        ActionKind::Launch,
        ActionKind::Wait,
        ActionKind::PressBack,
        ActionKind::PressHome,
        ActionKind::Finished,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ActionKind::Click => "click",
            ActionKind::LongPress => "long_press",
            ActionKind::Scroll => "scroll",
            ActionKind::Type => "type",
            ActionKind::Launch => "launch",
            ActionKind::Wait => "wait",
            ActionKind::PressBack => "press_back",
            ActionKind::PressHome => "press_home",
            ActionKind::Finished => "finished",
        }
    }

    /// Payload-free kinds scored by exact type match.
    pub fn is_system(&self) -> bool {
        matches!(
            self,
            ActionKind::Wait | ActionKind::PressBack | ActionKind::PressHome | ActionKind::Finished
        )
    }
}

impl FromStr for ActionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActionKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnsupportedAction(s.to_string()))
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Click(Point),
    LongPress(Point),
    Scroll { start: Point, direction: Direction },
    Type(String),
    Launch(String),
    Wait,
    PressBack,
    PressHome,
    Finished,
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Click(_) => ActionKind::Click,
            Action::LongPress(_) => ActionKind::LongPress,
            Action::Scroll { .. } => ActionKind::Scroll,
            Action::Type(_) => ActionKind::Type,
            Action::Launch(_) => ActionKind::Launch,
            Action::Wait => ActionKind::Wait,
            Action::PressBack => ActionKind::PressBack,
            Action::PressHome => ActionKind::PressHome,
            Action::Finished => ActionKind::Finished,
        }
    }

    /// Builds the payload-free action for a system kind.
    pub fn system(kind: ActionKind) -> Option<Action> {
        match kind {
            ActionKind::Wait => Some(Action::Wait),
            ActionKind::PressBack => Some(Action::PressBack),
            ActionKind::PressHome => Some(Action::PressHome),
            ActionKind::Finished => Some(Action::Finished),
            _ => None,
        }
    }

    pub fn point(&self) -> Option<Point> {
        match self {
            Action::Click(p) | Action::LongPress(p) => Some(*p),
            Action::Scroll { start, .. } => Some(*start),
            _ => None,
        }
    }

    /// Parses the canonical JSON object form. Unknown fields are ignored.
    pub fn from_json(value: &Value) -> Result<Action> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::schema("", "action must be a JSON object"))?;
        let kind = match obj.get("type") {
            Some(Value::String(s)) => s.parse::<ActionKind>()?,
            Some(_) => return Err(Error::schema("type", "expected string for field")),
            None => return Err(Error::schema("type", "missing field")),
        };
        let action = match kind {
            ActionKind::Click => Action::Click(point_field(obj)?),
            ActionKind::LongPress => Action::LongPress(point_field(obj)?),
            ActionKind::Scroll => Action::Scroll {
                start: point_field(obj)?,
                direction: str_field(obj, "direction")?.parse()?,
            },
            ActionKind::Type => Action::Type(str_field(obj, "text")?.to_string()),
            ActionKind::Launch => Action::Launch(str_field(obj, "app")?.to_string()),
            ActionKind::Wait => Action::Wait,
            ActionKind::PressBack => Action::PressBack,
            ActionKind::PressHome => Action::PressHome,
            ActionKind::Finished => Action::Finished,
        };
        Ok(action)
    }

    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("type".into(), Value::from(self.kind().as_str()));
        match self {
            Action::Click(p) | Action::LongPress(p) => insert_point(&mut obj, p),
            Action::Scroll { start, direction } => {
                insert_point(&mut obj, start);
                obj.insert("direction".into(), Value::from(direction.as_str()));
            }
            Action::Type(text) => {
                obj.insert("text".into(), Value::from(text.as_str()));
            }
            Action::Launch(app) => {
                obj.insert("app".into(), Value::from(app.as_str()));
            }
            Action::Wait | Action::PressBack | Action::PressHome | Action::Finished => {}
        }
        Value::Object(obj)
    }
}

/// Free-function form of [`Action::from_json`].
pub fn parse_action(record: &Value) -> Result<Action> {
    Action::from_json(record)
}

/// Free-function form of [`Action::to_json`].
pub fn serialize_action(action: &Action) -> Value {
    action.to_json()
}

fn insert_point(obj: &mut Map<String, Value>, p: &Point) {
    obj.insert("x".into(), Value::from(p.x));
    obj.insert("y".into(), Value::from(p.y));
}

fn point_field(obj: &Map<String, Value>) -> Result<Point> {
    let x = num_field(obj, "x")?;
    let y = num_field(obj, "y")?;
    Point::new(x, y).map_err(|e| match e {
        Error::Range { axis, value, .. } => Error::schema(
            axis,
            format!("coordinate {value} outside [0, 1] in field"),
        ),
        other => other,
    })
}

fn num_field(obj: &Map<String, Value>, key: &str) -> Result<f64> {
    match obj.get(key) {
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::schema(key, "expected number for field")),
        None => Err(Error::schema(key, "missing field")),
    }
}

fn str_field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a str> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(Error::schema(key, "expected string for field")),
        None => Err(Error::schema(key, "missing field")),
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        Action::from_json(&value).map_err(serde::de::Error::custom)
    }
}
