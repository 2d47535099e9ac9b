//! Offline rule-based translator from operator phrases to instructions.
//!
//! Understands three sentence shapes:
//!
//! - `new task at (5, 19.5) deliver to C type 1 [priority 2]`
//! - `wall at (7,5) (8,5) (8,4.8) (7,4.8)` or `gate from (1,1) to (2,1.4)`
//! - `set priority of task 3 to 10` / `prioritize task 3`
//!
//! Anything else is rejected. A real language model can replace this by
//! producing the same JSON instruction objects.

use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::scenario::{Instruction, Location};
use crate::workspace::ObstacleKind;

/// Priority given by "prioritize task N" without an explicit value.
pub const DEFAULT_BOOST: f64 = 10.0;
/// Half-thickness of a wall given by its two end points.
pub const WALL_HALF_WIDTH: f64 = 0.2;

const NUM: &str = r"-?\d+(?:\.\d+)?";

fn re(cell: &'static OnceLock<Regex>, pattern: impl FnOnce() -> String) -> &'static Regex {
    cell.get_or_init(|| Regex::new(&pattern()).expect("static pattern"))
}

fn point_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, || format!(r"\(\s*({NUM})\s*,\s*({NUM})\s*\)"))
}

fn parse_points(s: &str) -> Vec<Point> {
    point_re()
        .captures_iter(s)
        .map(|c| Point::new(c[1].parse().unwrap(), c[2].parse().unwrap()))
        .collect()
}

/// A parenthesised point or a bare site name.
fn parse_location(s: &str) -> Option<Location> {
    static SITE: OnceLock<Regex> = OnceLock::new();
    if let Some(p) = parse_points(s).first() {
        return Some(Location::Point(*p));
    }
    let site = re(&SITE, || r"^\s*(?:site\s+|room\s+)?([A-Za-z][A-Za-z0-9_]*)".to_string());
    site.captures(s).map(|c| Location::Named(c[1].to_string()))
}

fn number_after(text: &str, word: &str) -> Option<f64> {
    let r = Regex::new(&format!(r"\b{word}\s*(?:of\s+|=\s*|:\s*)?({NUM})")).expect("pattern");
    r.captures(text).and_then(|c| c[1].parse().ok())
}

fn translate_priority(text: &str) -> Option<Result<Instruction>> {
    static R: OnceLock<Regex> = OnceLock::new();
    let r = re(&R, || {
        format!(r"(?:priority\s+(?:of\s+)?task\s+(\d+)(?:\s+(?:to|=)\s*({NUM}))?|prioriti[sz]e\s+task\s+(\d+)(?:\s+(?:to|with|at)\s*({NUM}))?)")
    });
    let c = r.captures(text)?;
    let task = c.get(1).or(c.get(3))?.as_str().parse::<u32>().ok()?;
    let value = c.get(2).or(c.get(4)).and_then(|m| m.as_str().parse::<f64>().ok());
    let priority = match value {
        Some(v) => v,
        None if text.contains("prioriti") => DEFAULT_BOOST,
        None => return Some(Err(Error::Parse(format!("no priority value given for task {task}")))),
    };
    Some(Ok(Instruction::ChangeTaskPriority { task, priority }))
}

fn translate_obstacle(text: &str) -> Option<Result<Instruction>> {
    static R: OnceLock<Regex> = OnceLock::new();
    let r = re(&R, || r"\b(wall|obstacle|gate|bush|barrier|blockage)\b".to_string());
    let c = r.captures(text)?;
    let kind = match &c[1] {
        "gate" => ObstacleKind::Gate,
        "bush" => ObstacleKind::Bush,
        _ => ObstacleKind::Wall,
    };
    let pts = parse_points(text);
    let polygon = match pts.len() {
        0 | 1 => return Some(Err(Error::Parse("obstacle needs two end points or at least three corners".into()))),
        2 => {
            let (a, b) = (pts[0], pts[1]);
            if a.x == b.x || a.y == b.y {
                segment_box(a, b)
            } else {
                // two opposite corners of a box
                vec![
                    Point::new(a.x.min(b.x), a.y.min(b.y)),
                    Point::new(a.x.max(b.x), a.y.min(b.y)),
                    Point::new(a.x.max(b.x), a.y.max(b.y)),
                    Point::new(a.x.min(b.x), a.y.max(b.y)),
                ]
            }
        }
        _ => pts,
    };
    Some(Ok(Instruction::ObstacleUpdate { polygon, kind }))
}

/// Thin box around an axis-aligned segment.
fn segment_box(a: Point, b: Point) -> Vec<Point> {
    let w = WALL_HALF_WIDTH;
    let (x0, x1) = (a.x.min(b.x), a.x.max(b.x));
    let (y0, y1) = (a.y.min(b.y), a.y.max(b.y));
    let (x0, x1, y0, y1) = if a.y == b.y { (x0, x1, y0 - w, y1 + w) } else { (x0 - w, x1 + w, y0, y1) };
    vec![Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)]
}

fn translate_task(text: &str) -> Option<Result<Instruction>> {
    static R: OnceLock<Regex> = OnceLock::new();
    let r = re(&R, || r"\b(?:new|add|another)\b.*\btask\b".to_string());
    if !r.is_match(text) {
        return None;
    }
    static PICK: OnceLock<Regex> = OnceLock::new();
    static DROP: OnceLock<Regex> = OnceLock::new();
    let pick = re(&PICK, || r"\b(?:at|from|pickup)\s+(.*)".to_string());
    let drop = re(&DROP, || r"\b(?:deliver(?:ed)?|bring|take\s+it|drop(?:\s+off)?)\s+(?:it\s+)?(?:to|at)\s+(.*)".to_string());

    let Some(drop_at) = drop.captures(text).map(|c| c.get(1).unwrap().start()) else {
        return Some(Err(Error::Parse("task has no delivery location".into())));
    };
    let head = &text[..drop_at];
    let pickup = pick.captures(head).and_then(|c| parse_location(&c[1]));
    let delivery = parse_location(&text[drop_at..]);
    let (Some(pickup), Some(delivery)) = (pickup, delivery) else {
        return Some(Err(Error::Parse("could not read pickup or delivery location".into())));
    };
    let task_type = number_after(text, "type").map_or(0, |t| t as usize);
    let priority = number_after(text, "priority").unwrap_or(1.0);
    Some(Ok(Instruction::AddTask {
        pickup,
        delivery,
        task_type,
        priority,
    }))
}

/// Maps one operator sentence to an instruction.
pub fn translate(text: &str) -> Result<Instruction> {
    let lower = text.trim().to_lowercase();
    // site names keep their original case
    let restore = |ins: Instruction| match ins {
        Instruction::AddTask {
            pickup,
            delivery,
            task_type,
            priority,
        } => Instruction::AddTask {
            pickup: upcase_site(pickup, text),
            delivery: upcase_site(delivery, text),
            task_type,
            priority,
        },
        other => other,
    };
    for rule in [translate_priority, translate_task, translate_obstacle] {
        if let Some(result) = rule(&lower) {
            return result.map(restore);
        }
    }
    Err(Error::Parse(format!("no rule matches '{}'", text.trim())))
}

fn upcase_site(loc: Location, original: &str) -> Location {
    match loc {
        Location::Named(name) => {
            let found = original
                .split(|c: char| !c.is_alphanumeric() && c != '_')
                .find(|w| w.eq_ignore_ascii_case(&name))
                .map(str::to_string);
            Location::Named(found.unwrap_or(name))
        }
        p => p,
    }
}
