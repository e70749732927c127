//! Marker sentences planted in synthetic documents, and the patterns that
//! recover them. Values never contain periods or commas, so a marker ends
//! at the first period.

use std::sync::LazyLock;

use regex::Regex;

pub const MONTHS: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

/// What a court did with a relief.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Disposition {
    Ordered,
    Declined,
    Reserved,
}

impl Disposition {
    pub fn verb(self) -> &'static str {
        match self {
            Disposition::Ordered => "ordered",
            Disposition::Declined => "declined to order",
            Disposition::Reserved => "reserved orders on",
        }
    }

    pub fn from_verb(verb: &str) -> Option<Self> {
        match verb.to_ascii_lowercase().as_str() {
            "ordered" | "orders" => Some(Disposition::Ordered),
            "declined to order" | "declines to order" => Some(Disposition::Declined),
            "reserved orders on" => Some(Disposition::Reserved),
            _ => None,
        }
    }

    /// Outcome text as it appears in a decision point.
    pub fn outcome(self, relief: &str) -> String {
        format!("{} {relief}", self.verb())
    }

    /// Split an outcome string back into disposition and relief.
    pub fn parse_outcome(outcome: &str) -> Option<(Self, &str)> {
        let t = outcome.trim();
        for d in [
            Disposition::Declined,
            Disposition::Reserved,
            Disposition::Ordered,
        ] {
            if let Some(rest) = strip_prefix_ci(t, d.verb()) {
                let rest = rest.trim();
                if !rest.is_empty() {
                    return Some((d, rest.trim_end_matches('.')));
                }
            }
        }
        None
    }
}

fn strip_prefix_ci<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    let head = s.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix)
        .then(|| &s[prefix.len()..])
}

pub fn appellant_sentence(x: &str) -> String {
    format!("The appellant in the present appeal is {x}.")
}

pub fn respondent_sentence(x: &str) -> String {
    format!("The respondent in the present appeal is {x}.")
}

pub fn issue_sentence(x: &str) -> String {
    format!("The question for determination is {x}.")
}

pub fn appellant_stance_sentence(reliefs: &[&str]) -> String {
    format!("The appellant seeks {}.", reliefs.join(" and "))
}

pub fn respondent_stance_sentence(x: &str) -> String {
    format!("The respondent resists the appeal on the footing that {x}.")
}

pub fn court_sentence(x: &str) -> String {
    format!("The present appeal is heard by the {x}.")
}

pub fn precedent_sentence(a: &str, b: &str, relief: &str) -> String {
    format!(
        "Reliance is placed on the precedent in {a} v. {b}, where the appellant seeks {relief}."
    )
}

pub fn final_sentence(disposition: Disposition, relief: &str) -> String {
    match disposition {
        Disposition::Ordered => format!("Accordingly, the Court orders {relief}."),
        _ => format!("Accordingly, the Court declines to order {relief}."),
    }
}

pub const NEUTRAL_FINAL: &str = "The appeal is disposed of in the above terms.";

pub const DIRECTIONS_LEAD_IN: &str = "The Court issues the following directions:";

/// A planted decision point as one sentence.
pub fn decision_sentence(
    issue: &str,
    maker: &str,
    disposition: Disposition,
    relief: &str,
    time: Option<&str>,
    reasoning: Option<&str>,
) -> String {
    let mut s = format!(
        "On the issue of {issue}, the {maker} {} {relief}",
        disposition.verb()
    );
    if let Some(t) = time {
        s.push_str(" in ");
        s.push_str(t);
    }
    if let Some(r) = reasoning {
        s.push_str(", reasoning that ");
        s.push_str(r);
    }
    s.push('.');
    s
}

fn ci(pattern: &str) -> Regex {
    Regex::new(&format!("(?i){pattern}")).expect("marker pattern")
}

pub static APPELLANT: LazyLock<Regex> =
    LazyLock::new(|| ci(r"\bthe appellant in the present appeal is ([^.]+)\."));
pub static RESPONDENT: LazyLock<Regex> =
    LazyLock::new(|| ci(r"\bthe respondent in the present appeal is ([^.]+)\."));
pub static ISSUE: LazyLock<Regex> =
    LazyLock::new(|| ci(r"\bthe question for determination is ([^.]+)\."));
pub static APPELLANT_STANCE: LazyLock<Regex> =
    LazyLock::new(|| ci(r"\bthe appellant seeks ([^.]+)\."));
pub static RESPONDENT_STANCE: LazyLock<Regex> =
    LazyLock::new(|| ci(r"\bthe respondent resists the appeal on the footing that ([^.]+)\."));
pub static COURT: LazyLock<Regex> =
    LazyLock::new(|| ci(r"\bthe present appeal is heard by the ([^.]+)\."));
pub static FINAL: LazyLock<Regex> =
    LazyLock::new(|| ci(r"\baccordingly, the court (orders|declines to order) ([^.]+)\."));

/// Groups: issue, maker, verb, relief, time, reasoning.
pub static DECISION: LazyLock<Regex> = LazyLock::new(|| {
    let months = MONTHS.join("|");
    Regex::new(&format!(
        r"On the issue of ([^,.]+), the ([^.,]+?) (ordered|declined to order|reserved orders on) ([^.,]+?)(?: in ((?:{months}) \d{{4}}))?(?:, reasoning that ([^.]+))?\."
    ))
    .expect("decision pattern")
});

/// Last capture of `re` in `text`, group 1.
pub fn last_capture(re: &Regex, text: &str) -> Option<String> {
    re.captures_iter(text)
        .last()
        .map(|c| c[1].trim().to_string())
}

/// A decision point recovered from text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoundDecision {
    pub issue: String,
    pub maker: String,
    pub disposition: Disposition,
    pub relief: String,
    pub time: Option<String>,
    pub reasoning: Option<String>,
}

pub fn find_decisions(text: &str) -> Vec<FoundDecision> {
    DECISION
        .captures_iter(text)
        .filter_map(|c| {
            Some(FoundDecision {
                issue: c[1].trim().to_string(),
                maker: c[2].trim().to_string(),
                disposition: Disposition::from_verb(&c[3])?,
                relief: c[4].trim().to_string(),
                time: c.get(5).map(|m| m.as_str().to_string()),
                reasoning: c.get(6).map(|m| m.as_str().trim().to_string()),
            })
        })
        .collect()
}

/// Court names compared case-insensitively, ignoring a leading "the" and
/// runs of whitespace.
pub fn normalize_court(name: &str) -> String {
    let lower = name.trim().to_lowercase();
    let words: Vec<&str> = lower.split_whitespace().collect();
    let words = match words.first() {
        Some(&"the") => &words[1..],
        _ => &words[..],
    };
    words.join(" ")
}

/// Reliefs named in an appellant stance.
pub fn stance_reliefs(stance: &str) -> Vec<String> {
    stance
        .split(" and ")
        .map(|s| s.trim().trim_end_matches('.').to_lowercase())
        .filter(|s| !s.is_empty())
        .collect()
}
