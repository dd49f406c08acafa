use knnicl::treebank::{
    canonicalize, depth, exact_match, parse_api, parse_top, serialize_api, tree_to_api, ApiCall, Arg, ArgValue,
};
use proptest::prelude::*;

const NAMES: &[&str] = &["GET_EVENT", "GET_DIRECTIONS", "A", "B2", "CREATE_ALARM", "X_Y_Z"];
const WORDS: &[&str] = &["the", "Eagles", "game", "7", "am", "it's", "New", "york", "a.m.", "ok"];

fn arb_span() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(WORDS).prop_map(str::to_string), 1..4)
}

fn arb_api() -> impl Strategy<Value = ApiCall> {
    let leaf = (prop::sample::select(NAMES), prop::collection::vec((prop::sample::select(NAMES), arb_span()), 0..3))
        .prop_map(|(name, args)| ApiCall {
            name: name.into(),
            args: args
                .into_iter()
                .map(|(slot, span)| Arg {
                    slot: slot.into(),
                    value: ArgValue::Span(span),
                })
                .collect(),
        });
    leaf.prop_recursive(3, 24, 3, |inner| {
        let value = prop_oneof![arb_span().prop_map(ArgValue::Span), inner.prop_map(ArgValue::Call)];
        (prop::sample::select(NAMES), prop::collection::vec((prop::sample::select(NAMES), value), 1..4)).prop_map(
            |(name, args)| ApiCall {
                name: name.into(),
                args: args
                    .into_iter()
                    .map(|(slot, value)| Arg {
                        slot: slot.into(),
                        value,
                    })
                    .collect(),
            },
        )
    })
}

/// Reverses and rotates sibling lists at every level, driven by `seed`.
fn shuffle_siblings(api: &ApiCall, seed: u64) -> ApiCall {
    let mut args: Vec<Arg> = api
        .args
        .iter()
        .enumerate()
        .map(|(i, a)| Arg {
            slot: a.slot.clone(),
            value: match &a.value {
                ArgValue::Call(c) => ArgValue::Call(shuffle_siblings(c, seed.rotate_left(i as u32 + 1))),
                v => v.clone(),
            },
        })
        .collect();
    if !args.is_empty() {
        if seed & 1 == 1 {
            args.reverse();
        }
        let n = args.len();
        args.rotate_left((seed as usize >> 1) % n);
    }
    ApiCall {
        name: api.name.clone(),
        args,
    }
}

fn brute_depth(api: &ApiCall) -> usize {
    let text = serialize_api(api);
    let mut d = 0i64;
    let mut best = 0i64;
    for t in text.split(' ') {
        match t {
            "(" => {
                d += 1;
                best = best.max(d);
            }
            ")" => d -= 1,
            _ => {}
        }
    }
    best as usize
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn serialization_round_trips(api in arb_api()) {
        let text = serialize_api(&api);
        prop_assert_eq!(parse_api(&text).unwrap(), api.clone());
        let squeezed = text.replace(" ( ", "(").replace(" , ", ",").replace(" = ", "=");
        prop_assert_eq!(parse_api(&squeezed).unwrap(), api);
    }

    #[test]
    fn exact_match_ignores_sibling_order(api in arb_api(), seed in any::<u64>()) {
        let shuffled = shuffle_siblings(&api, seed);
        prop_assert!(exact_match(&serialize_api(&shuffled), &api).is_correct());
        prop_assert_eq!(canonicalize(&shuffled), canonicalize(&api));
    }

    #[test]
    fn exact_match_is_symmetric(a in arb_api(), b in arb_api()) {
        let ab = exact_match(&serialize_api(&a), &b).score;
        let ba = exact_match(&serialize_api(&b), &a).score;
        prop_assert_eq!(ab, ba);
        prop_assert_eq!(ab == 1, canonicalize(&a) == canonicalize(&b));
    }

    #[test]
    fn canonical_form_is_idempotent(api in arb_api()) {
        let c = canonicalize(&api);
        prop_assert_eq!(canonicalize(&c), c.clone());
        prop_assert_eq!(depth(&c), depth(&api));
        prop_assert_eq!(depth(&api), brute_depth(&api));
    }
}

#[test]
fn directions_tree_reduces_to_nested_call() {
    let tree = parse_top(
        "[IN:GET_DIRECTIONS Driving directions to [SL:DESTINATION [IN:GET_EVENT the [SL:NAME_EVENT Eagles ] [SL:CATEGORY_EVENT game ] ] ] ]",
    )
    .unwrap();
    let api = tree_to_api(&tree);
    assert_eq!(
        serialize_api(&api),
        "GET_DIRECTIONS ( DESTINATION = GET_EVENT ( NAME_EVENT = \" Eagles \" , CATEGORY_EVENT = \" game \" ) )"
    );
    assert_eq!(depth(&api), 2);
    assert_eq!(parse_top(&tree.to_string()).unwrap(), tree);
}

#[test]
fn every_ordering_of_three_siblings_matches() {
    let gold = parse_api("A ( X = \" 1 \" , Y = B ( P = \" 2 \" , Q = \" 3 \" ) , Z = \" 4 \" )").unwrap();
    let parts = ["X = \" 1 \"", "Y = B ( Q = \" 3 \" , P = \" 2 \" )", "Z = \" 4 \""];
    let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    for o in orders {
        let pred = format!("A ( {} , {} , {} )", parts[o[0]], parts[o[1]], parts[o[2]]);
        assert!(exact_match(&pred, &gold).is_correct(), "{pred}");
    }
}

#[test]
fn near_misses_score_zero() {
    let gold = parse_api("A ( X = \" new york \" )").unwrap();
    for pred in [
        "A ( X = \" New york \" )",
        "A ( X = \" york new \" )",
        "A ( Y = \" new york \" )",
        "B ( X = \" new york \" )",
        "A ( X = \" new york \" , X = \" new york \" )",
        "A ( X = \" new york \"",
        "",
    ] {
        let m = exact_match(pred, &gold);
        assert_eq!(m.score, 0, "{pred}");
        assert_eq!(m.gold_depth, 1);
    }
    assert_eq!(exact_match("A ( X = \" 1 \"", &gold).pred_depth, None);
}

#[test]
fn malformed_top_is_rejected() {
    for bad in [
        "[IN:A x",
        "[IN:A x ] ]",
        "[SL:A x ]",
        "[IN:a x ]",
        "[IN:A [SL:B ] ]",
        "[IN:A x ] [IN:B y ]",
        "",
    ] {
        assert!(parse_top(bad).is_err(), "{bad}");
    }
}
