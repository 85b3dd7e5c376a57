//! Tag predicates for buffer search.
//!
//! Textual form: atoms joined by `&` (or `and`), each optionally negated with
//! `!`. Atoms:
//!
//! | atom                 | meaning                               |
//! |----------------------|---------------------------------------|
//! | `class=OC`           | class detected in the buffer          |
//! | `max_anomaly>0.8`    | max anomaly score comparison          |
//! | `mean_anomaly<=0.2`  | mean anomaly score comparison         |
//! | `var_anomaly<0.01`   | anomaly score variance comparison     |
//! | `track=12`           | object track id present               |
//! | `object=pedestrian`  | any track of this object class        |
//! | `*`                  | always true                           |

use std::str::FromStr;

use crate::buffering::BufferTag;
use crate::error::{Error, Result};
use crate::types::EventClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl Cmp {
    fn eval(self, a: f64, b: f64) -> bool {
        match self {
            Cmp::Lt => a < b,
            Cmp::Le => a <= b,
            Cmp::Gt => a > b,
            Cmp::Ge => a >= b,
            Cmp::Eq => a == b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TagPredicate {
    Always,
    Class(EventClass),
    MaxAnomaly(Cmp, f64),
    MeanAnomaly(Cmp, f64),
    VarAnomaly(Cmp, f64),
    Track(u64),
    Object(String),
    Not(Box<TagPredicate>),
    All(Vec<TagPredicate>),
}

impl TagPredicate {
    pub fn matches(&self, tag: &BufferTag) -> bool {
        match self {
            TagPredicate::Always => true,
            TagPredicate::Class(c) => tag.has_class(*c),
            TagPredicate::MaxAnomaly(op, x) => op.eval(tag.anomaly.max, *x),
            TagPredicate::MeanAnomaly(op, x) => op.eval(tag.anomaly.mean, *x),
            TagPredicate::VarAnomaly(op, x) => op.eval(tag.anomaly.variance, *x),
            TagPredicate::Track(id) => tag.objects.contains_key(id),
            TagPredicate::Object(class) => tag.objects.values().any(|t| &t.object_class == class),
            TagPredicate::Not(p) => !p.matches(tag),
            TagPredicate::All(ps) => ps.iter().all(|p| p.matches(tag)),
        }
    }
}

fn split_op(atom: &str) -> Option<(&str, Cmp, &str)> {
    for (tok, op) in [(">=", Cmp::Ge), ("<=", Cmp::Le), (">", Cmp::Gt), ("<", Cmp::Lt), ("=", Cmp::Eq)] {
        if let Some(i) = atom.find(tok) {
            return Some((atom[..i].trim(), op, atom[i + tok.len()..].trim()));
        }
    }
    None
}

fn parse_atom(atom: &str) -> Result<TagPredicate> {
    let atom = atom.trim();
    if let Some(rest) = atom.strip_prefix('!') {
        return Ok(TagPredicate::Not(Box::new(parse_atom(rest)?)));
    }
    if atom == "*" {
        return Ok(TagPredicate::Always);
    }
    let bad = |why: &str| Error::param(format!("predicate '{atom}': {why}"));
    let (key, op, rhs) = split_op(atom).ok_or_else(|| bad("expected key<op>value"))?;
    let num = || rhs.parse::<f64>().map_err(|_| bad("expected a number"));
    let eq_only = |p: TagPredicate| if op == Cmp::Eq { Ok(p) } else { Err(bad("only '=' is supported")) };
    match key {
        "class" => eq_only(TagPredicate::Class(rhs.parse()?)),
        "track" => eq_only(TagPredicate::Track(rhs.parse().map_err(|_| bad("expected a track id"))?)),
        "object" => eq_only(TagPredicate::Object(rhs.to_string())),
        "max_anomaly" => Ok(TagPredicate::MaxAnomaly(op, num()?)),
        "mean_anomaly" => Ok(TagPredicate::MeanAnomaly(op, num()?)),
        "var_anomaly" => Ok(TagPredicate::VarAnomaly(op, num()?)),
        _ => Err(bad("unknown key")),
    }
}

impl FromStr for TagPredicate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let normalized = s.replace(" and ", "&");
        let atoms: Vec<_> = normalized.split('&').filter(|a| !a.trim().is_empty()).collect();
        match atoms.len() {
            0 => Err(Error::param("empty predicate")),
            1 => parse_atom(atoms[0]),
            _ => Ok(TagPredicate::All(atoms.into_iter().map(parse_atom).collect::<Result<_>>()?)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buffering::{AnomalyStats, ObjectTrack};

    fn tag() -> BufferTag {
        let mut t = BufferTag {
            anomaly: AnomalyStats { mean: 0.3, max: 0.85, variance: 0.02 },
            classes: vec!["OC".parse().unwrap()],
            ..Default::default()
        };
        t.objects.insert(12, ObjectTrack { object_class: "pedestrian".into(), points: vec![] });
        t
    }

    #[test]
    fn parse_and_match() {
        let t = tag();
        for (q, expect) in [
            ("class=OC", true),
            ("class=TC", false),
            ("max_anomaly>0.8", true),
            ("max_anomaly > 0.9", false),
            ("mean_anomaly<=0.3", true),
            ("var_anomaly<0.01", false),
            ("track=12", true),
            ("object=pedestrian & class=OC", true),
            ("object=car and class=OC", false),
            ("!class=N", true),
            ("*", true),
        ] {
            let p: TagPredicate = q.parse().unwrap();
            assert_eq!(p.matches(&t), expect, "{q}");
        }
    }

    #[test]
    fn parse_errors() {
        for q in ["", "class>OC", "colour=red", "max_anomaly>abc", "class=XX", "track=a"] {
            assert!(q.parse::<TagPredicate>().is_err(), "{q}");
        }
    }
}
