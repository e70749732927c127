//! Synthetic appeal documents with planted ground truth.
//!
//! Besides clean cases the corpus plants five kinds of trap, each of which
//! can only be resolved with the help of one or two specific stages:
//!
//! | trap | label | needs |
//! |------|-------|-------|
//! | `ReservedThenOrdered` | 1 | role labels (final statement), ruling |
//! | `PrecedentStance` | 1 | role labels (stance quoted from a precedent) |
//! | `CollateralRelief` | 0 | case context (order not sought by appellant) |
//! | `LowerCourtOrder` | 0 | decision points, case context |
//! | `LateOrder` | 1 | decision points (order beyond the first 1000 words) |

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::markers::{self, Disposition};
use super::CaseRecord;
use crate::pipeline::{CaseContext, DecisionPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrapKind {
    Clean,
    ReservedThenOrdered,
    PrecedentStance,
    CollateralRelief,
    LowerCourtOrder,
    LateOrder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticCase {
    pub record: CaseRecord,
    pub planted_context: CaseContext,
    /// Every planted point in document order.
    pub planted_points: Vec<DecisionPoint>,
    pub planted_label: u8,
    /// Last sentence of the document.
    pub final_statement: String,
    pub trap: TrapKind,
}

/// 1 iff the present court orders a relief named in the appellant's stance,
/// either in a flagged decision point or in the final statement.
pub fn planted_label(context: &CaseContext, points: &[DecisionPoint], final_statement: &str) -> u8 {
    let sought = markers::stance_reliefs(&context.appellant_stance);
    let mut ordered: Vec<String> = points
        .iter()
        .filter(|p| p.present_court_decision)
        .filter_map(|p| match Disposition::parse_outcome(&p.outcome) {
            Some((Disposition::Ordered, relief)) => Some(relief.to_lowercase()),
            _ => None,
        })
        .collect();
    for c in markers::FINAL.captures_iter(final_statement) {
        if Disposition::from_verb(&c[1]) == Some(Disposition::Ordered) {
            ordered.push(c[2].trim().to_lowercase());
        }
    }
    u8::from(ordered.iter().any(|r| sought.contains(r)))
}

const APPELLANTS: &[&str] = &[
    "Ramesh Kumar",
    "Sunita Devi",
    "M/s Ganga Traders",
    "the State of Punjab",
    "Mohan Lal Verma",
    "Kavita Sharma",
    "the Municipal Corporation of Pune",
    "Abdul Rahim",
    "Lakshmi Narayanan",
    "the petitioner-workman",
];

const RESPONDENTS: &[&str] = &[
    "the Union of India",
    "Suresh Chand",
    "the Oriental Insurance Company Limited",
    "the State of Rajasthan",
    "Meena Kumari",
    "the respondent-Management",
    "the Punjab State Electricity Board",
    "Harish Gupta",
];

const ISSUES: &[&str] = &[
    "whether the termination of the appellant was lawful",
    "whether the suit was barred by limitation",
    "whether the detention was validly made",
    "whether the compensation awarded was adequate",
    "whether the agreement to sell was enforceable",
    "whether the pension could be withheld",
    "whether the transfer was arbitrary",
    "whether the eviction decree could be executed",
];

const RELIEFS: &[&str] = &[
    "reinstatement of the appellant",
    "payment of back wages",
    "refund of the security deposit",
    "quashing of the detention",
    "restoration of possession of the suit property",
    "enhancement of compensation",
    "release of the withheld pension",
    "a declaration of title",
    "specific performance of the agreement",
    "remand of the matter for fresh consideration",
];

const COLLATERAL: &[&str] = &[
    "a fresh inquiry by the department",
    "interest on the deposited amount",
    "a report from the registry",
    "deposit of the decretal amount",
    "expunging of the adverse remarks",
    "a status report from the authorities",
];

const RESPONDENT_STANCES: &[&str] = &[
    "the order under challenge calls for no interference",
    "the claim is barred by limitation",
    "the appellant has no enforceable right",
    "the relief sought is beyond the scope of the proceedings",
    "the findings of fact are concurrent",
];

const PRESENT_COURTS: &[&str] = &[
    "Supreme Court of India",
    "High Court of Bombay",
    "High Court of Delhi",
    "High Court of Madras",
    "High Court of Calcutta",
];

const LOWER_COURTS: &[&str] = &[
    "Trial Court",
    "District Court",
    "Labour Court",
    "First Appellate Court",
    "Tribunal",
];

const REASONS: &[&str] = &[
    "the inquiry was conducted in breach of natural justice",
    "the limitation period had expired",
    "the evidence on record was insufficient",
    "the statutory notice was not served",
    "an alternative remedy was available",
    "the findings of fact were not perverse",
];

const PRECEDENT_PARTIES: &[(&str, &str)] = &[
    ("Sharma", "Union of India"),
    ("Bhagwati Prasad", "State of Bihar"),
    ("Narayan Rao", "Collector of Thane"),
    ("Rukmini Bai", "Mahadeo"),
];

const DOCS: &[&str] = &[
    "agreement to sell",
    "show cause notice",
    "inquiry report",
    "sale deed",
    "lease deed",
    "charge sheet",
    "medical report",
    "service book",
];

const SIDES: &[&str] = &["appellant", "respondent"];

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items.choose(rng).copied().unwrap_or_default()
}

fn month_year(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{} {}",
        pick(rng, &markers::MONTHS),
        rng.random_range(2005..=2020)
    )
}

fn filler(rng: &mut ChaCha8Rng) -> String {
    let side = pick(rng, SIDES);
    let doc = pick(rng, DOCS);
    match rng.random_range(0..8) {
        0 => format!("Learned counsel for the {side} took the Court through the pleadings and the documentary evidence on record."),
        1 => format!("It was submitted on behalf of the {side} that the {doc} had to be read as a whole."),
        2 => format!("The {doc} dated {} {} forms part of the paper book.", rng.random_range(1..=28), month_year(rng)),
        3 => "Both sides filed written submissions within the time allowed.".to_string(),
        4 => format!("The {doc} was not disputed by either side at any stage."),
        5 => "The record shows that notice was served on all parties well in time.".to_string(),
        6 => format!("A copy of the {doc} was placed on record by the {side}."),
        _ => format!("The matter was listed on several occasions and was finally heard in {}.", month_year(rng)),
    }
}

fn words(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Case kinds in corpus order, plus the labels to give the clean cases.
fn trap_plan(n: usize, rng: &mut ChaCha8Rng) -> (Vec<TrapKind>, Vec<u8>) {
    let share = |p: f64| (n as f64 * p).round() as usize;
    let mut plan = Vec::with_capacity(n);
    let counts = [
        (TrapKind::ReservedThenOrdered, share(0.08)),
        (TrapKind::PrecedentStance, share(0.06)),
        (TrapKind::LateOrder, share(0.20)),
        (TrapKind::CollateralRelief, share(0.08)),
        (TrapKind::LowerCourtOrder, share(0.10)),
    ];
    for (kind, c) in counts {
        plan.extend(std::iter::repeat_n(kind, c));
    }
    plan.truncate(n);
    let ones = plan.iter().filter(|k| trap_label(**k) == Some(1)).count();
    let rest = n - plan.len();
    let clean_ones = (n / 2).saturating_sub(ones).min(rest);
    let mut clean: Vec<u8> = std::iter::repeat_n(1, clean_ones)
        .chain(std::iter::repeat_n(0, rest - clean_ones))
        .collect();
    clean.shuffle(rng);
    plan.extend(std::iter::repeat_n(TrapKind::Clean, rest));
    plan.shuffle(rng);
    (plan, clean)
}

fn trap_label(kind: TrapKind) -> Option<u8> {
    match kind {
        TrapKind::ReservedThenOrdered | TrapKind::PrecedentStance | TrapKind::LateOrder => Some(1),
        TrapKind::CollateralRelief | TrapKind::LowerCourtOrder => Some(0),
        TrapKind::Clean => None,
    }
}

/// Deterministic corpus of `n` cases for `seed`, labels balanced to within one.
pub fn generate_synthetic_corpus(n: usize, seed: u64) -> Vec<SyntheticCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (plan, clean_labels) = trap_plan(n, &mut rng);
    let mut clean_labels = clean_labels.into_iter();
    plan.into_iter()
        .enumerate()
        .map(|(i, kind)| {
            let label = trap_label(kind).unwrap_or_else(|| clean_labels.next().unwrap_or(0));
            build_case(&mut rng, i, kind, label)
        })
        .collect()
}

struct Point {
    maker: String,
    present: bool,
    disposition: Disposition,
    relief: String,
    issue: String,
    time: Option<String>,
    reasoning: Option<String>,
}

impl Point {
    fn sentence(&self) -> String {
        markers::decision_sentence(
            &self.issue,
            &self.maker,
            self.disposition,
            &self.relief,
            self.time.as_deref(),
            self.reasoning.as_deref(),
        )
    }

    fn planted(&self) -> DecisionPoint {
        DecisionPoint {
            issue: self.issue.clone(),
            decision_maker: self.maker.clone(),
            outcome: self.disposition.outcome(&self.relief),
            time: self.time.clone(),
            reasoning: self.reasoning.clone(),
            present_court_decision: self.present,
        }
    }
}

fn build_case(rng: &mut ChaCha8Rng, i: usize, kind: TrapKind, label: u8) -> SyntheticCase {
    let appellant = pick(rng, APPELLANTS);
    let respondent = if rng.random_bool(0.15) {
        ""
    } else {
        pick(rng, RESPONDENTS)
    };
    let issue = pick(rng, ISSUES);
    let court = pick(rng, PRESENT_COURTS);
    let respondent_stance = pick(rng, RESPONDENT_STANCES);
    let mut reliefs: Vec<&str> = RELIEFS.choose_multiple(rng, 3).copied().collect();
    let other_relief = reliefs.pop().unwrap_or_default();
    if rng.random_bool(0.5) {
        reliefs.pop();
    }
    let sought = reliefs.clone();
    let main = sought[0];
    let mut collateral: Vec<&str> = COLLATERAL.choose_multiple(rng, 2).copied().collect();
    let extra_collateral = collateral.pop().unwrap_or_default();
    let collateral = collateral.pop().unwrap_or_default();

    let point = |rng: &mut ChaCha8Rng,
                 maker: &str,
                 present: bool,
                 d: Disposition,
                 relief: &str,
                 issue: &str| Point {
        maker: maker.to_string(),
        present,
        disposition: d,
        relief: relief.to_string(),
        issue: issue.to_string(),
        time: rng
            .random_bool(if present { 0.4 } else { 0.7 })
            .then(|| month_year(rng)),
        reasoning: rng.random_bool(0.6).then(|| pick(rng, REASONS).to_string()),
    };

    // Lower-court history.
    let mut lower_makers: Vec<&str> = LOWER_COURTS.choose_multiple(rng, 2).copied().collect();
    lower_makers.sort_by_key(|m| LOWER_COURTS.iter().position(|x| x == m));
    let mut lower = Vec::new();
    if kind == TrapKind::LowerCourtOrder {
        lower.push(point(
            rng,
            lower_makers[0],
            false,
            Disposition::Ordered,
            main,
            issue,
        ));
        lower.push(point(
            rng,
            lower_makers[1],
            false,
            Disposition::Declined,
            main,
            issue,
        ));
    } else {
        lower.push(point(
            rng,
            lower_makers[0],
            false,
            Disposition::Declined,
            main,
            issue,
        ));
        if rng.random_bool(0.4) {
            let d = if rng.random_bool(0.5) {
                Disposition::Declined
            } else {
                Disposition::Reserved
            };
            lower.push(point(rng, lower_makers[1], false, d, main, issue));
        }
    }

    // Present-court points and final statement.
    let ordered_relief = sought.choose(rng).copied().unwrap_or(main);
    let side_issue = "whether further directions were warranted";
    let mut present = Vec::new();
    let final_statement = match kind {
        TrapKind::Clean if label == 1 => {
            present.push(point(
                rng,
                court,
                true,
                Disposition::Ordered,
                ordered_relief,
                issue,
            ));
            if rng.random_bool(0.75) {
                markers::final_sentence(Disposition::Ordered, ordered_relief)
            } else {
                markers::NEUTRAL_FINAL.to_string()
            }
        }
        TrapKind::Clean => {
            present.push(point(rng, court, true, Disposition::Declined, main, issue));
            if rng.random_bool(0.75) {
                markers::final_sentence(Disposition::Declined, main)
            } else {
                markers::NEUTRAL_FINAL.to_string()
            }
        }
        TrapKind::ReservedThenOrdered => {
            present.push(point(rng, court, true, Disposition::Reserved, main, issue));
            markers::final_sentence(Disposition::Ordered, main)
        }
        TrapKind::PrecedentStance => {
            present.push(point(rng, court, true, Disposition::Ordered, main, issue));
            markers::final_sentence(Disposition::Ordered, main)
        }
        TrapKind::CollateralRelief => {
            present.push(point(
                rng,
                court,
                true,
                Disposition::Ordered,
                collateral,
                side_issue,
            ));
            present.push(point(rng, court, true, Disposition::Declined, main, issue));
            markers::final_sentence(Disposition::Declined, main)
        }
        TrapKind::LowerCourtOrder => {
            present.push(point(rng, court, true, Disposition::Declined, main, issue));
            markers::NEUTRAL_FINAL.to_string()
        }
        TrapKind::LateOrder => {
            present.push(point(rng, court, true, Disposition::Ordered, main, issue));
            markers::NEUTRAL_FINAL.to_string()
        }
    };
    let bullets = rng.random_bool(0.3);
    if bullets && present.len() < 2 {
        present.push(point(
            rng,
            court,
            true,
            Disposition::Declined,
            extra_collateral,
            side_issue,
        ));
    }

    // Assemble the document.
    let mut facts = vec![
        markers::appellant_sentence(appellant),
        markers::court_sentence(court),
    ];
    if !respondent.is_empty() {
        facts.insert(1, markers::respondent_sentence(respondent));
    }
    facts.push(format!(
        "The dispute traces back to the {} executed in {}.",
        pick(rng, DOCS),
        month_year(rng)
    ));
    facts.push(markers::issue_sentence(issue));
    facts.push(markers::appellant_stance_sentence(&sought));
    facts.push(markers::respondent_stance_sentence(respondent_stance));

    let mut paragraphs = vec![facts.join(" ")];
    if kind == TrapKind::PrecedentStance {
        let (a, b) = PRECEDENT_PARTIES.choose(rng).copied().unwrap_or(("A", "B"));
        paragraphs.push(markers::precedent_sentence(a, b, other_relief));
    }
    let mut history: Vec<String> = lower.iter().map(Point::sentence).collect();
    for _ in 0..rng.random_range(1..=3) {
        history.push(filler(rng));
    }
    paragraphs.push(history.join(" "));
    if kind == TrapKind::LateOrder {
        let mut total: usize = paragraphs.iter().map(|p| words(p)).sum();
        while total <= 1100 {
            let para: Vec<String> = (0..8).map(|_| filler(rng)).collect();
            let para = para.join(" ");
            total += words(&para);
            paragraphs.push(para);
        }
    }
    if bullets {
        let style = rng.random_range(0..3);
        let mut lines = vec![markers::DIRECTIONS_LEAD_IN.to_string()];
        for (k, p) in present.iter().enumerate() {
            let tag = match style {
                0 => format!("{}.", k + 1),
                1 => format!("({})", (b'a' + k as u8) as char),
                _ => format!("({})", ["i", "ii", "iii", "iv"][k.min(3)]),
            };
            lines.push(format!("{tag} {}", p.sentence()));
        }
        paragraphs.push(lines.join("\n"));
    } else {
        paragraphs.push(
            present
                .iter()
                .map(Point::sentence)
                .collect::<Vec<_>>()
                .join(" "),
        );
    }
    paragraphs.push(final_statement.clone());
    let text = paragraphs.join("\n\n");

    let planted_context = CaseContext {
        appellants: appellant.to_string(),
        respondents: respondent.to_string(),
        issue: issue.to_string(),
        appellant_stance: sought.join(" and "),
        respondent_stance: respondent_stance.to_string(),
        present_court: court.to_string(),
    };
    let planted_points: Vec<DecisionPoint> =
        lower.iter().chain(&present).map(Point::planted).collect();
    let planted = planted_label(&planted_context, &planted_points, &final_statement);
    debug_assert_eq!(planted, label, "case {i} ({kind:?})");
    let reference = reference_explanation(&planted_context, &present, &final_statement, planted);
    SyntheticCase {
        record: CaseRecord {
            case_id: format!("syn-{i:04}"),
            text,
            gold_label: Some(planted),
            reference_explanation: Some(reference),
        },
        planted_context,
        planted_points,
        planted_label: planted,
        final_statement,
        trap: kind,
    }
}

fn reference_explanation(
    ctx: &CaseContext,
    present: &[Point],
    final_statement: &str,
    label: u8,
) -> String {
    let against = if ctx.respondents.is_empty() {
        "the respondent"
    } else {
        &ctx.respondents
    };
    let mut analysis: Vec<String> = present
        .iter()
        .map(|p| {
            format!(
                "On {}, the {} {} {}.",
                p.issue,
                p.maker,
                p.disposition.verb(),
                p.relief
            )
        })
        .collect();
    if final_statement != markers::NEUTRAL_FINAL {
        analysis.push(format!(
            "The closing order of the court reads: {final_statement}"
        ));
    }
    format!(
        "Facts of the Case:\n{} appealed against {} before the {}, seeking {}.\n\n\
         Legal Issue(s) Presented:\nThe court had to decide {}.\n\n\
         Applicable Law and Precedents:\nThe decision rests on the record of the earlier proceedings and the orders passed at each stage.\n\n\
         Analysis / Reasoning:\n{}\n\n\
         Predicted Conclusion:\nAppeal {}.",
        ctx.appellants,
        against,
        ctx.present_court,
        ctx.appellant_stance,
        ctx.issue,
        analysis.join(" "),
        if label == 1 { "Granted" } else { "Dismissed" }
    )
}
