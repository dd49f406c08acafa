use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Corpus, Record};
use crate::treebank::parse_top;

pub const INTENTS: [&str; 6] = [
    "GET_WEATHER",
    "CREATE_ALARM",
    "CREATE_REMINDER",
    "GET_DIRECTIONS",
    "GET_EVENT",
    "GET_INFO_TRAFFIC",
];

pub const SLOTS: [&str; 10] = [
    "LOCATION",
    "DATE_TIME",
    "WEATHER_ATTRIBUTE",
    "TODO",
    "PERSON_REMINDED",
    "DESTINATION",
    "SOURCE",
    "METHOD_TRAVEL",
    "NAME_EVENT",
    "CATEGORY_EVENT",
];

const MAX_DEPTH: usize = 3;
const NEST_PROB: f64 = 0.4;

const PLACES: &[&str] = &[
    "boston", "paris", "chicago", "seattle", "denver", "downtown", "the airport", "the mall", "my office", "home",
    "union station", "the stadium",
];
const TIMES: &[&str] = &[
    "tomorrow", "tonight", "at 7 am", "at noon", "at 6 pm", "this weekend", "on monday", "next friday",
    "in the morning", "in an hour",
];
const ATTRIBUTES: &[&str] = &["rainy", "cold", "sunny", "windy", "snowing", "hot", "foggy"];
const TODOS: &[&str] = &[
    "buy milk", "call mom", "pay rent", "walk the dog", "pick up laundry", "water the plants", "book a table",
];
const PEOPLE: &[&str] = &["john", "my wife", "dad", "sarah", "the kids"];
const METHODS: &[&str] = &["car", "bus", "train", "bike", "foot"];
const EVENT_NAMES: &[&str] = &["eagles", "lakers", "coldplay", "red sox", "yankees", "jazz fest", "knicks"];
const EVENT_KINDS: &[&str] = &["game", "concert", "festival", "parade", "show", "match"];

fn lexicon(slot: &str) -> &'static [&'static str] {
    match slot {
        "LOCATION" | "DESTINATION" | "SOURCE" => PLACES,
        "DATE_TIME" => TIMES,
        "WEATHER_ATTRIBUTE" => ATTRIBUTES,
        "TODO" => TODOS,
        "PERSON_REMINDED" => PEOPLE,
        "METHOD_TRAVEL" => METHODS,
        "NAME_EVENT" => EVENT_NAMES,
        "CATEGORY_EVENT" => EVENT_KINDS,
        _ => unreachable!("slot without lexicon"),
    }
}

/// Intent that may fill a slot, if any.
fn nested_intent(slot: &str) -> Option<&'static str> {
    match slot {
        "DESTINATION" => Some("GET_EVENT"),
        "TODO" => Some("GET_DIRECTIONS"),
        _ => None,
    }
}

fn templates(intent: &str, nested: bool) -> &'static [&'static str] {
    match (intent, nested) {
        ("GET_WEATHER", _) => &[
            "what is the weather in {LOCATION}",
            "is it {WEATHER_ATTRIBUTE} in {LOCATION} {DATE_TIME}",
            "will it be {WEATHER_ATTRIBUTE} {DATE_TIME}",
            "weather forecast for {LOCATION}",
            "how is the weather {DATE_TIME}",
        ],
        ("CREATE_ALARM", _) => &[
            "set an alarm {DATE_TIME}",
            "wake me up {DATE_TIME}",
            "please set my alarm for {DATE_TIME}",
            "alarm {DATE_TIME} please",
        ],
        ("CREATE_REMINDER", _) => &[
            "remind me to {TODO} {DATE_TIME}",
            "remind {PERSON_REMINDED} to {TODO}",
            "set a reminder to {TODO}",
            "remind me {DATE_TIME} to {TODO}",
        ],
        ("GET_DIRECTIONS", false) => &[
            "directions to {DESTINATION}",
            "how do i get to {DESTINATION} by {METHOD_TRAVEL}",
            "driving directions from {SOURCE} to {DESTINATION}",
            "show me the way to {DESTINATION}",
        ],
        ("GET_DIRECTIONS", true) => &["get directions to {DESTINATION}", "check the route to {DESTINATION}"],
        ("GET_EVENT", false) => &[
            "when is the {NAME_EVENT} {CATEGORY_EVENT}",
            "find {CATEGORY_EVENT} events in {LOCATION}",
            "any {CATEGORY_EVENT} {DATE_TIME}",
            "what time does the {NAME_EVENT} {CATEGORY_EVENT} start",
        ],
        ("GET_EVENT", true) => &["the {NAME_EVENT} {CATEGORY_EVENT}", "the {CATEGORY_EVENT} in {LOCATION}"],
        ("GET_INFO_TRAFFIC", _) => &[
            "how is traffic to {DESTINATION}",
            "is there traffic on the way to {DESTINATION} {DATE_TIME}",
            "traffic report for {LOCATION}",
            "any delays driving to {DESTINATION}",
        ],
        _ => unreachable!("unknown synthetic intent"),
    }
}

/// Returns (utterance words, bracket tree text).
fn expand(intent: &str, budget: usize, nested: bool, rng: &mut ChaCha8Rng) -> (Vec<String>, String) {
    let template = templates(intent, nested).choose(rng).expect("templates are nonempty");
    let mut words = Vec::new();
    let mut top = format!("[IN:{intent}");
    for piece in template.split_whitespace() {
        if let Some(slot) = piece.strip_prefix('{').and_then(|p| p.strip_suffix('}')) {
            top.push_str(&format!(" [SL:{slot}"));
            match nested_intent(slot) {
                Some(inner) if budget > 1 && rng.random_bool(NEST_PROB) => {
                    let (w, t) = expand(inner, budget - 1, true, rng);
                    words.extend(w);
                    top.push(' ');
                    top.push_str(&t);
                }
                _ => {
                    let value = lexicon(slot).choose(rng).expect("lexicons are nonempty");
                    for w in value.split_whitespace() {
                        words.push(w.to_string());
                        top.push(' ');
                        top.push_str(w);
                    }
                }
            }
            top.push_str(" ]");
        } else {
            words.push(piece.to_string());
            top.push(' ');
            top.push_str(piece);
        }
    }
    top.push_str(" ]");
    (words, top)
}

fn domain_of(intent: &str) -> &'static str {
    match intent {
        "GET_WEATHER" => "weather",
        "CREATE_ALARM" => "alarm",
        "CREATE_REMINDER" => "reminder",
        _ => "navigation",
    }
}

/// One example from the template grammar.
pub fn sample_example(rng: &mut ChaCha8Rng) -> (String, Vec<String>, String) {
    let intent = INTENTS.choose(rng).expect("intents are nonempty");
    let (words, top) = expand(intent, MAX_DEPTH, false, rng);
    (domain_of(intent).to_string(), words, top)
}

/// Train and test corpora from the template grammar, disjoint by surface
/// string. Gives up on a side after many duplicate draws, so tiny
/// grammars cannot loop forever.
pub fn gen_synthetic(seed: u64, n_train: usize, n_test: usize) -> (Corpus, Corpus) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut draw = |n: usize, rng: &mut ChaCha8Rng| {
        let mut records = Vec::with_capacity(n);
        let mut misses = 0;
        while records.len() < n && misses < 100 * n.max(10) {
            let (domain, words, top) = sample_example(rng);
            let text = words.join(" ");
            if !seen.insert(text.clone()) {
                misses += 1;
                continue;
            }
            let tree = parse_top(&top).expect("grammar emits well-formed trees");
            records.push(Record::new(records.len(), &domain, &text, tree));
        }
        Corpus::new(records)
    };
    let train = draw(n_train, &mut rng);
    let test = draw(n_test, &mut rng);
    (train, test)
}
