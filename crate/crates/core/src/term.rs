//! First-order-logic terms and their canonical text syntax.
//!
//! A term is written `pred(subject,arg,...)`, for example
//! `inc(tx_brate@embb,Q4)`, `inc(PRB@embb,C3,C5)`, `toPF(sched@urllc)`,
//! `sched(g1,Q4,75)` or `noSched(g2)`. Rendering is canonical, so the text
//! of a term doubles as its key in stores and exports.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Separator between terms in the key of a [`TermSet`].
pub const CONJUNCTION: char = '&';

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: &'static str },
    #[error("unknown predicate `{name}` at byte {pos}")]
    UnknownPredicate { pos: usize, name: String },
    #[error("illegal arguments for predicate `{predicate}`")]
    IllegalArguments { predicate: String },
    #[error("invalid subject `{0}`")]
    InvalidSubject(String),
    #[error("duplicate subject `{0}` in term set")]
    DuplicateSubject(String),
}

/// Relative-magnitude bucket of a value against running quartile estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Quartile {
    Q1,
    Q2,
    Q3,
    Q4,
    Max,
}

impl Quartile {
    pub const ALL: [Quartile; 5] = [Self::Q1, Self::Q2, Self::Q3, Self::Q4, Self::Max];

    /// Q1..Q4 map to 1..4 and MAX to 5.
    pub fn ordinal(self) -> u8 {
        match self {
            Self::Q1 => 1,
            Self::Q2 => 2,
            Self::Q3 => 3,
            Self::Q4 => 4,
            Self::Max => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Q1 => "Q1",
            Self::Q2 => "Q2",
            Self::Q3 => "Q3",
            Self::Q4 => "Q4",
            Self::Max => "MAX",
        }
    }

    fn from_token(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|q| q.as_str() == s)
    }
}

impl fmt::Display for Quartile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// PRB category `C1..C10`; category `Ci` covers `[(i-1)*5, i*5)` PRBs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Category(u8);

impl Category {
    pub const COUNT: u8 = 10;

    pub fn new(index: u8) -> Option<Self> {
        (1..=Self::COUNT).contains(&index).then_some(Self(index))
    }

    pub fn index(self) -> u8 {
        self.0
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.0)
    }
}

/// Share of a group's users that are scheduled, on the 25% grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Percentage(u8);

impl Percentage {
    pub const GRID: [u8; 5] = [0, 25, 50, 75, 100];

    pub fn new(value: u8) -> Option<Self> {
        Self::GRID.contains(&value).then_some(Self(value))
    }

    /// Nearest grid point to `100 * scheduled / total`; ties round up.
    pub fn nearest(scheduled: usize, total: usize) -> Self {
        assert!(total > 0, "percentage of an empty group");
        // Compare on the integer scale 4*scheduled/total against grid steps.
        // step = round_half_up(4 * scheduled / total)
        let step = (8 * scheduled + total) / (2 * total);
        Self((step.min(4) * 25) as u8)
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl fmt::Display for Percentage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Scheduling policy of a RAN slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Policy {
    #[serde(rename = "WF")]
    Wf,
    #[serde(rename = "RR")]
    Rr,
    #[serde(rename = "PF")]
    Pf,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Self::Wf, Self::Rr, Self::Pf];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Wf => "WF",
            Self::Rr => "RR",
            Self::Pf => "PF",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Predicate {
    Inc,
    Dec,
    Const,
    To(Policy),
    Sched,
    NoSched,
}

impl Predicate {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Inc => "inc",
            Self::Dec => "dec",
            Self::Const => "const",
            Self::To(Policy::Wf) => "toWF",
            Self::To(Policy::Rr) => "toRR",
            Self::To(Policy::Pf) => "toPF",
            Self::Sched => "sched",
            Self::NoSched => "noSched",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "inc" => Self::Inc,
            "dec" => Self::Dec,
            "const" => Self::Const,
            "toWF" => Self::To(Policy::Wf),
            "toRR" => Self::To(Policy::Rr),
            "toPF" => Self::To(Policy::Pf),
            "sched" => Self::Sched,
            "noSched" => Self::NoSched,
            _ => return None,
        })
    }

    /// True for inc/dec/const.
    pub fn is_direction(self) -> bool {
        matches!(self, Self::Inc | Self::Dec | Self::Const)
    }
}

/// Variable a term talks about: `KPI@slice`, `PRB@slice`, `sched@slice`,
/// `KPI@g0` or a bare group id such as `g0`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Subject(String);

impl Subject {
    pub fn new(text: impl Into<String>) -> Result<Self, TermError> {
        let text = text.into();
        let mut parts = text.split('@');
        let valid_ident = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_');
        let ok = match (parts.next(), parts.next(), parts.next()) {
            (Some(var), None, _) => valid_ident(var),
            (Some(var), Some(scope), None) => valid_ident(var) && valid_ident(scope),
            _ => false,
        };
        if ok {
            Ok(Self(text))
        } else {
            Err(TermError::InvalidSubject(text))
        }
    }

    pub fn scoped(var: &str, scope: &str) -> Self {
        Self::new(alloc::format!("{var}@{scope}")).expect("identifier parts")
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Part before `@`.
    pub fn variable(&self) -> &str {
        self.0.split('@').next().unwrap_or(&self.0)
    }

    /// Part after `@`, if any.
    pub fn scope(&self) -> Option<&str> {
        self.0.split_once('@').map(|(_, s)| s)
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TermArgs {
    None,
    Quartile(Quartile),
    Category(Category),
    Transition(Category, Category),
    Schedule(Quartile, Percentage),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymbolicTerm {
    predicate: Predicate,
    subject: Subject,
    args: TermArgs,
}

impl SymbolicTerm {
    pub fn new(predicate: Predicate, subject: Subject, args: TermArgs) -> Result<Self, TermError> {
        let legal = match predicate {
            Predicate::Inc | Predicate::Dec => matches!(args, TermArgs::Quartile(_) | TermArgs::Transition(..)),
            Predicate::Const => matches!(args, TermArgs::Quartile(_) | TermArgs::Category(_)),
            Predicate::To(_) | Predicate::NoSched => args == TermArgs::None,
            Predicate::Sched => matches!(args, TermArgs::Schedule(..)),
        };
        if legal {
            Ok(Self { predicate, subject, args })
        } else {
            Err(TermError::IllegalArguments { predicate: predicate.as_str().to_string() })
        }
    }

    pub fn predicate(&self) -> Predicate {
        self.predicate
    }

    pub fn subject(&self) -> &Subject {
        &self.subject
    }

    pub fn args(&self) -> TermArgs {
        self.args
    }

    pub fn quartile(&self) -> Option<Quartile> {
        match self.args {
            TermArgs::Quartile(q) | TermArgs::Schedule(q, _) => Some(q),
            _ => None,
        }
    }

    pub fn render(&self) -> String {
        self.to_string()
    }

    pub fn parse(text: &str) -> Result<Self, TermError> {
        Parser { src: text, pos: 0 }.term()
    }
}

impl fmt::Display for SymbolicTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}", self.predicate.as_str(), self.subject)?;
        match self.args {
            TermArgs::None => {}
            TermArgs::Quartile(q) => write!(f, ",{q}")?,
            TermArgs::Category(c) => write!(f, ",{c}")?,
            TermArgs::Transition(a, b) => write!(f, ",{a},{b}")?,
            TermArgs::Schedule(q, p) => write!(f, ",{q},{p}")?,
        }
        f.write_str(")")
    }
}

impl FromStr for SymbolicTerm {
    type Err = TermError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for SymbolicTerm {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SymbolicTerm {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Self::parse(&text).map_err(serde::de::Error::custom)
    }
}

enum Arg {
    Quartile(Quartile),
    Category(Category),
    Percentage(Percentage),
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn syntax<T>(&self, msg: &'static str) -> Result<T, TermError> {
        Err(TermError::Syntax { pos: self.pos, msg })
    }

    fn peek(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn expect(&mut self, byte: u8, msg: &'static str) -> Result<(), TermError> {
        if self.peek() == Some(byte) {
            self.pos += 1;
            Ok(())
        } else {
            self.syntax(msg)
        }
    }

    fn take_while(&mut self, pred: impl Fn(u8) -> bool) -> &str {
        let start = self.pos;
        while self.peek().is_some_and(&pred) {
            self.pos += 1;
        }
        &self.src[start..self.pos]
    }

    fn term(&mut self) -> Result<SymbolicTerm, TermError> {
        let start = self.pos;
        let name = self.take_while(|b| b.is_ascii_alphabetic());
        if name.is_empty() {
            return self.syntax("expected predicate name");
        }
        let predicate = Predicate::from_name(name)
            .ok_or_else(|| TermError::UnknownPredicate { pos: start, name: name.to_string() })?;
        self.expect(b'(', "expected `(`")?;
        let subject_pos = self.pos;
        let subject_text = self.take_while(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'@');
        let subject = Subject::new(subject_text).map_err(|_| TermError::Syntax {
            pos: subject_pos,
            msg: "expected subject identifier",
        })?;
        let mut args = Vec::new();
        while self.peek() == Some(b',') {
            self.pos += 1;
            args.push(self.arg()?);
        }
        self.expect(b')', "expected `,` or `)`")?;
        if self.pos != self.src.len() {
            return self.syntax("trailing input after term");
        }
        let args = match (predicate, args.as_slice()) {
            (_, []) => TermArgs::None,
            (_, [Arg::Quartile(q)]) => TermArgs::Quartile(*q),
            (_, [Arg::Category(c)]) => TermArgs::Category(*c),
            (_, [Arg::Category(a), Arg::Category(b)]) => TermArgs::Transition(*a, *b),
            (_, [Arg::Quartile(q), Arg::Percentage(p)]) => TermArgs::Schedule(*q, *p),
            _ => return Err(TermError::IllegalArguments { predicate: predicate.as_str().to_string() }),
        };
        SymbolicTerm::new(predicate, subject, args)
    }

    fn arg(&mut self) -> Result<Arg, TermError> {
        let start = self.pos;
        let token = self.take_while(|b| b.is_ascii_alphanumeric());
        if let Some(q) = Quartile::from_token(token) {
            return Ok(Arg::Quartile(q));
        }
        if let Some(c) = token
            .strip_prefix('C')
            .filter(|d| !d.starts_with('0'))
            .and_then(|d| d.parse::<u8>().ok())
            .and_then(Category::new)
        {
            return Ok(Arg::Category(c));
        }
        if let Some(p) = (token == "0" || !token.starts_with('0'))
            .then(|| token.parse::<u8>().ok())
            .flatten()
            .and_then(Percentage::new)
        {
            return Ok(Arg::Percentage(p));
        }
        Err(TermError::Syntax { pos: start, msg: "expected quartile, category or percentage" })
    }
}

/// Conjunction of terms with exactly one term per subject, kept in subject
/// order. Used for symbolic states, symbolic actions and effects.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermSet {
    terms: BTreeMap<Subject, SymbolicTerm>,
}

pub type SymbolicState = TermSet;
pub type SymbolicAction = TermSet;

impl TermSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_terms(terms: impl IntoIterator<Item = SymbolicTerm>) -> Result<Self, TermError> {
        let mut set = Self::new();
        for term in terms {
            set.insert(term)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, term: SymbolicTerm) -> Result<(), TermError> {
        let subject = term.subject.clone();
        if self.terms.contains_key(&subject) {
            return Err(TermError::DuplicateSubject(subject.0));
        }
        self.terms.insert(subject, term);
        Ok(())
    }

    pub fn get(&self, subject: &Subject) -> Option<&SymbolicTerm> {
        self.terms.get(subject)
    }

    pub fn get_str(&self, subject: &str) -> Option<&SymbolicTerm> {
        self.terms.iter().find(|(s, _)| s.as_str() == subject).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SymbolicTerm> {
        self.terms.values()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Canonical key: terms in subject order joined by `&`.
    pub fn key(&self) -> String {
        let mut key = String::new();
        for (i, term) in self.terms.values().enumerate() {
            if i > 0 {
                key.push(CONJUNCTION);
            }
            key.push_str(&term.render());
        }
        key
    }

    pub fn parse_key(key: &str) -> Result<Self, TermError> {
        if key.is_empty() {
            return Ok(Self::new());
        }
        Self::from_terms(key.split(CONJUNCTION).map(SymbolicTerm::parse).collect::<Result<Vec<_>, _>>()?)
    }

    pub fn rendered(&self) -> Vec<String> {
        self.terms.values().map(SymbolicTerm::render).collect()
    }
}

impl Serialize for TermSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.terms.values())
    }
}

impl<'de> Deserialize<'de> for TermSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let terms = Vec::<SymbolicTerm>::deserialize(deserializer)?;
        Self::from_terms(terms).map_err(serde::de::Error::custom)
    }
}

/// Symbolic state observed after an action, attributed to that action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Effect {
    pub caused_at: u64,
    pub terms: TermSet,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(text: &str) -> SymbolicTerm {
        let term = SymbolicTerm::parse(text).unwrap();
        assert_eq!(term.render(), text);
        term
    }

    #[test]
    fn parses_scalar_term() {
        let t = roundtrip("inc(tx_brate@embb,Q4)");
        assert_eq!(t.predicate(), Predicate::Inc);
        assert_eq!(t.subject().as_str(), "tx_brate@embb");
        assert_eq!(t.subject().variable(), "tx_brate");
        assert_eq!(t.subject().scope(), Some("embb"));
        assert_eq!(t.args(), TermArgs::Quartile(Quartile::Q4));
    }

    #[test]
    fn parses_schedule_term() {
        let t = roundtrip("sched(g1,Q4,75)");
        assert_eq!(t.predicate(), Predicate::Sched);
        assert_eq!(t.args(), TermArgs::Schedule(Quartile::Q4, Percentage::new(75).unwrap()));
        roundtrip("sched(g0,MAX,100)");
        roundtrip("noSched(g2)");
    }

    #[test]
    fn parses_category_terms() {
        let t = roundtrip("inc(PRB@embb,C3,C5)");
        assert_eq!(t.args(), TermArgs::Transition(Category::new(3).unwrap(), Category::new(5).unwrap()));
        roundtrip("const(PRB@urllc,C10)");
        roundtrip("toPF(sched@mmtc)");
    }

    #[test]
    fn rejects_unknown_predicate() {
        assert!(matches!(
            SymbolicTerm::parse("grow(x,Q1)"),
            Err(TermError::UnknownPredicate { pos: 0, .. })
        ));
    }

    #[test]
    fn rejects_illegal_arguments() {
        for bad in ["sched(g0,Q1)", "inc(x,C1)", "toWF(sched@embb,Q1)", "noSched(g0,Q1,25)", "const(x,C1,C2)"] {
            assert!(
                matches!(SymbolicTerm::parse(bad), Err(TermError::IllegalArguments { .. })),
                "{bad}"
            );
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        assert_eq!(
            SymbolicTerm::parse("inc(x,Q5)"),
            Err(TermError::Syntax { pos: 6, msg: "expected quartile, category or percentage" })
        );
        assert!(matches!(SymbolicTerm::parse("inc(x,Q1"), Err(TermError::Syntax { pos: 8, .. })));
        assert!(matches!(SymbolicTerm::parse("inc(x,Q1) "), Err(TermError::Syntax { pos: 9, .. })));
        assert!(SymbolicTerm::parse("sched(g0,Q1,30)").is_err());
        assert!(SymbolicTerm::parse("sched(g0,Q1,075)").is_err());
        assert!(SymbolicTerm::parse("const(PRB@x,C11)").is_err());
        assert!(SymbolicTerm::parse("const(PRB@x,C01)").is_err());
        assert!(SymbolicTerm::parse("inc(a@b@c,Q1)").is_err());
    }

    #[test]
    fn percentage_grid_rounds_ties_up() {
        assert_eq!(Percentage::nearest(2, 3).value(), 75);
        assert_eq!(Percentage::nearest(1, 3).value(), 25);
        assert_eq!(Percentage::nearest(1, 2).value(), 50);
        assert_eq!(Percentage::nearest(0, 2).value(), 0);
        assert_eq!(Percentage::nearest(3, 3).value(), 100);
        // 1/8 = 12.5% sits exactly between 0 and 25.
        assert_eq!(Percentage::nearest(1, 8).value(), 25);
        assert_eq!(Percentage::nearest(3, 8).value(), 50);
    }

    #[test]
    fn term_set_is_order_insensitive() {
        let a = SymbolicTerm::parse("inc(b,Q1)").unwrap();
        let b = SymbolicTerm::parse("dec(a,Q2)").unwrap();
        let s1 = TermSet::from_terms([a.clone(), b.clone()]).unwrap();
        let s2 = TermSet::from_terms([b, a]).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.key(), "dec(a,Q2)&inc(b,Q1)");
        assert_eq!(TermSet::parse_key(&s1.key()).unwrap(), s1);
    }

    #[test]
    fn term_set_rejects_duplicate_subject() {
        let a = SymbolicTerm::parse("inc(a,Q1)").unwrap();
        let b = SymbolicTerm::parse("dec(a,Q2)").unwrap();
        assert_eq!(TermSet::from_terms([a, b]), Err(TermError::DuplicateSubject("a".into())));
    }
}
