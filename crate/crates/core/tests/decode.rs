use knnicl::datastore::{build_datastore, Datastore, DatastoreBuilder, KnnConfig, RecordFilter};
use knnicl::decode::{
    build_prompt, decode_greedy, interpolate, step_distribution, DecodeError, DecoderConfig, Mode, Prompt, Retriever,
    Session, StopReason,
};
use knnicl::lm::{LanguageModel, NGramConfig, NGramLm, TokenDistribution};
use knnicl::textcore::{ContextEncoder, EncoderConfig, HashedNgramEncoder, TokenId, Vocabulary, EOS, LPAREN, QUOTE, RPAREN};
use knnicl::treebank::{parse_api, ApiCall};
use proptest::prelude::*;

const ROWS: &[(&str, &str)] = &[
    ("what is the weather", "GET_WEATHER ( )"),
    ("weather in boston", "GET_WEATHER ( LOCATION = \" boston \" )"),
    ("is it cold in paris", "GET_WEATHER ( WEATHER_ATTRIBUTE = \" cold \" , LOCATION = \" paris \" )"),
    ("set an alarm for 7 am", "CREATE_ALARM ( DATE_TIME = \" for 7 am \" )"),
    ("wake me up at 6", "CREATE_ALARM ( DATE_TIME = \" at 6 \" )"),
    ("driving directions to the game", "GET_DIRECTIONS ( DESTINATION = GET_EVENT ( CATEGORY_EVENT = \" game \" ) )"),
    ("directions to boston", "GET_DIRECTIONS ( DESTINATION = \" boston \" )"),
    ("when is the eagles game", "GET_EVENT ( NAME_EVENT = \" eagles \" , CATEGORY_EVENT = \" game \" )"),
];

struct Fixture {
    vocab: Vocabulary,
    lm: NGramLm,
    encoder: HashedNgramEncoder,
    examples: Vec<(Vec<String>, ApiCall)>,
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn fixture() -> Fixture {
    let mut vocab = Vocabulary::new();
    let corpus: Vec<_> = ROWS.iter().map(|(u, a)| (vocab.intern_text(u), vocab.intern_text(a))).collect();
    let lm = NGramLm::train(&corpus, &vocab, NGramConfig::default()).unwrap();
    let examples = ROWS.iter().map(|(u, a)| (words(u), parse_api(a).unwrap())).collect();
    Fixture {
        vocab,
        lm,
        encoder: HashedNgramEncoder::new(EncoderConfig::default()).unwrap(),
        examples,
    }
}

fn exemplars(idx: &[usize]) -> Vec<(Vec<String>, String)> {
    idx.iter().map(|&i| (words(ROWS[i].0), ROWS[i].1.to_string())).collect()
}

#[test]
fn prompt_layout() {
    let bare = build_prompt::<String, String, _>(None, &[], &["hello", "there"]).unwrap();
    assert_eq!(bare.tokens(), ["hello", "there", "<sep>"]);

    let ten: Vec<_> = (0..10).map(|i| ROWS[i % ROWS.len()]).collect();
    let ten: Vec<(Vec<String>, String)> = ten.iter().map(|(u, a)| (words(u), a.to_string())).collect();
    let p = build_prompt(Some("GET_WEATHER ( LOCATION )"), &ten, &["rain", "today"]).unwrap();
    assert_eq!(p.exemplars.len(), 10);
    for (ex, (u, _)) in p.exemplars.iter().zip(&ten) {
        assert_eq!(&ex.utterance, u);
    }
    let toks = p.tokens();
    assert_eq!(&toks[..5], ["GET_WEATHER", "(", "LOCATION", ")", "what"]);
    assert_eq!(toks.iter().filter(|t| *t == "</s>").count(), 10);
    assert_eq!(toks.iter().filter(|t| *t == "<sep>").count(), 11);
    assert_eq!(&toks[toks.len() - 3..], ["rain", "today", "<sep>"]);
    let first = &toks[4..];
    let end = first.iter().position(|t| t == "</s>").unwrap();
    assert_eq!(first[..end].join(" "), format!("what is the weather <sep> {}", ROWS[0].1));
}

#[test]
fn malformed_prompts_are_rejected() {
    let bad = vec![(words("a b"), "GET_WEATHER ( ".to_string())];
    assert!(matches!(
        build_prompt(None, &bad, &["x"]),
        Err(DecodeError::MalformedExemplar { index: 0, .. })
    ));
    let empty_utt = vec![(Vec::<String>::new(), "A ( )".to_string())];
    assert!(matches!(
        build_prompt(None, &empty_utt, &["x"]),
        Err(DecodeError::MalformedExemplar { index: 0, .. })
    ));
    assert!(matches!(
        build_prompt::<String, String, String>(None, &[], &[]),
        Err(DecodeError::EmptyTarget)
    ));
}

#[test]
fn hand_computed_mixture() {
    let p_lm = TokenDistribution::new(vec![0.8, 0.2]).unwrap();
    let p_knn = TokenDistribution::new(vec![0.0, 1.0]).unwrap();
    let p = interpolate(&p_lm, &p_knn, 0.5).unwrap();
    assert!((p.get(0) - 0.4).abs() < 1e-15);
    assert!((p.get(1) - 0.6).abs() < 1e-15);
}

fn dist_strategy(n: usize) -> impl Strategy<Value = TokenDistribution> {
    prop::collection::vec(0.0f64..1.0, n)
        .prop_filter("some mass", |w| w.iter().sum::<f64>() > 1e-3)
        .prop_map(|w| TokenDistribution::from_weights(w).unwrap())
}

proptest! {
    #[test]
    fn mixture_is_the_convex_combination(
        a in dist_strategy(12),
        b in dist_strategy(12),
        lambda in 0.0f64..=1.0,
    ) {
        let p = interpolate(&a, &b, lambda).unwrap();
        for i in 0..12 {
            let want = lambda * b.probs()[i] + (1.0 - lambda) * a.probs()[i];
            prop_assert!((p.probs()[i] - want).abs() <= 1e-12);
        }
        prop_assert!((p.sum() - 1.0).abs() <= 1e-6);
        if lambda < 1.0 {
            for i in 0..12 {
                if a.probs()[i] > 0.0 {
                    prop_assert!(p.probs()[i] > 0.0);
                }
            }
        }
        prop_assert_eq!(interpolate(&a, &b, 0.0).unwrap(), a.clone());
        prop_assert_eq!(interpolate(&a, &b, 1.0).unwrap(), b.clone());
    }

    #[test]
    fn common_scaling_keeps_the_argmax(
        a in prop::collection::vec(0.01f64..1.0, 8),
        b in prop::collection::vec(0.01f64..1.0, 8),
        c in 0.01f64..100.0,
        lambda in 0.0f64..=1.0,
    ) {
        let plain = interpolate(
            &TokenDistribution::from_weights(a.clone()).unwrap(),
            &TokenDistribution::from_weights(b.clone()).unwrap(),
            lambda,
        ).unwrap();
        let scaled = interpolate(
            &TokenDistribution::from_weights(a.iter().map(|x| x * c).collect()).unwrap(),
            &TokenDistribution::from_weights(b.iter().map(|x| x * c).collect()).unwrap(),
            lambda,
        ).unwrap();
        let top = plain.probs().iter().cloned().fold(f64::MIN, f64::max);
        let runner_up = plain.probs().iter().cloned().filter(|&x| x < top).fold(f64::MIN, f64::max);
        prop_assume!(top - runner_up > 1e-9);
        prop_assert_eq!(plain.argmax(), scaled.argmax());
    }
}

#[test]
fn single_record_store_picks_the_nested_intent() {
    let mut vocab = Vocabulary::new();
    for row in ROWS {
        vocab.intern_text(row.0);
        vocab.intern_text(row.1);
    }
    let utterance = words("Driving directions to the Eagles game");
    let u: Vec<&str> = utterance.iter().map(String::as_str).collect();
    let prefix_text = ["GET_DIRECTIONS", "(", "DESTINATION", "="];
    let corpus: Vec<_> = ROWS.iter().map(|(u, a)| (vocab.tokenize(u), vocab.tokenize(a))).collect();
    let lm = NGramLm::train(&corpus, &vocab, NGramConfig::default()).unwrap();
    let encoder = HashedNgramEncoder::new(EncoderConfig::default()).unwrap();
    let get_event = vocab.get("GET_EVENT").unwrap();
    let mut builder = DatastoreBuilder::new(encoder.dim(), encoder.fingerprint(), vocab.fingerprint(), RecordFilter::LabelsOnly);
    builder.push(&encoder.encode_context(&u, &prefix_text).unwrap(), get_event).unwrap();
    let store = builder.finish();

    let prompt = build_prompt::<String, String, _>(None, &[], &utterance).unwrap();
    let retriever = Retriever::new(&store, &encoder).unwrap();
    let cfg = DecoderConfig::with_knn(1.0, KnnConfig::new(1, 100.0));
    let prefix: Vec<TokenId> = prefix_text.iter().map(|t| vocab.get(t).unwrap()).collect();
    let dist = step_distribution(&lm, Some(retriever), &vocab, &cfg, &prompt, &prefix).unwrap();
    assert_eq!(vocab.surface(dist.argmax()), Some("GET_EVENT"));
    assert_eq!(dist.get(get_event), 1.0);
}

/// Greedy loop straight over the LM, with its own stopping rule.
fn lm_greedy_oracle(lm: &NGramLm, vocab: &Vocabulary, prompt: &Prompt, max_len: usize) -> Vec<TokenId> {
    let space = prompt.token_space(vocab);
    let state = lm.prepare(&prompt.encode(&space)).unwrap();
    let mut out = Vec::new();
    let (mut depth, mut opened, mut quoted) = (0, false, false);
    while out.len() < max_len {
        let d = lm.next_dist(&state, &out);
        let best = d
            .probs()
            .iter()
            .enumerate()
            .fold((0usize, f64::MIN), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc })
            .0 as TokenId;
        if best == EOS {
            break;
        }
        out.push(best);
        if best == QUOTE {
            quoted = !quoted;
        } else if best == LPAREN && !quoted {
            depth += 1;
            opened = true;
        } else if best == RPAREN && !quoted {
            depth -= 1;
        }
        if opened && depth == 0 {
            break;
        }
    }
    out
}

#[test]
fn lambda_zero_matches_plain_lm_greedy() {
    let f = fixture();
    let store = build_datastore(&f.examples, &f.encoder, &f.vocab, RecordFilter::LabelsOnly).unwrap();
    let retriever = Retriever::new(&store, &f.encoder).unwrap();
    let targets = ["weather in paris", "set an alarm for 6 am", "directions to the eagles game", "is it cold"];
    for (i, t) in targets.iter().enumerate() {
        let prompt = build_prompt(None, &exemplars(&[i, i + 3]), &words(t)).unwrap();
        let cfg = DecoderConfig {
            lambda: 0.0,
            knn: Some(KnnConfig::new(5, 100.0)),
            max_len: 128,
        };
        let mut session = Session::new(&f.lm, Some(retriever), &f.vocab, &prompt).unwrap();
        let out = session.decode(&cfg).unwrap();
        assert_eq!(out.tokens, lm_greedy_oracle(&f.lm, &f.vocab, &prompt, 128), "{t}");
        assert_eq!(out.trace.mode, Mode::Icl);
    }
}

#[test]
fn modes_follow_config() {
    let knn = Some(KnnConfig::new(4, 50.0));
    let cfg = |lambda| DecoderConfig { lambda, knn, max_len: 128 };
    assert_eq!(cfg(0.0).mode(10, true), Mode::Icl);
    assert_eq!(cfg(0.5).mode(10, false), Mode::Icl);
    assert_eq!(cfg(0.5).mode(0, true), Mode::KnnLm);
    assert_eq!(cfg(0.5).mode(10, true), Mode::KnnIcl);
    assert!(cfg(1.5).validate().is_err());
    assert!(DecoderConfig { max_len: 3, ..cfg(0.5) }.validate().is_err());
}

#[test]
fn lambda_zero_steps_equal_icl_bitwise() {
    let f = fixture();
    let store = build_datastore(&f.examples, &f.encoder, &f.vocab, RecordFilter::AllTokens).unwrap();
    let retriever = Retriever::new(&store, &f.encoder).unwrap();
    let prompt = build_prompt(None, &exemplars(&[0, 3, 6]), &words("weather in boston today")).unwrap();
    let with_store = DecoderConfig {
        lambda: 0.0,
        knn: Some(KnnConfig::new(8, 100.0)),
        max_len: 128,
    };
    let mut a = Vec::new();
    Session::new(&f.lm, Some(retriever), &f.vocab, &prompt)
        .unwrap()
        .decode_observed(&with_store, |_, d| a.push(d.clone()))
        .unwrap();
    let mut b = Vec::new();
    Session::new(&f.lm, None, &f.vocab, &prompt)
        .unwrap()
        .decode_observed(&DecoderConfig::default(), |_, d| b.push(d.clone()))
        .unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!(x.probs().iter().zip(y.probs()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

#[test]
fn decoding_is_deterministic_and_traced() {
    let f = fixture();
    let store = build_datastore(&f.examples, &f.encoder, &f.vocab, RecordFilter::LabelsOnly).unwrap();
    let retriever = Retriever::new(&store, &f.encoder).unwrap();
    let prompt = build_prompt(None, &exemplars(&[1, 2]), &words("is it cold in boston")).unwrap();
    let cfg = DecoderConfig::with_knn(0.5, KnnConfig::new(3, 100.0));
    let (text, trace) = decode_greedy(&f.lm, Some(retriever), &f.vocab, &cfg, &prompt).unwrap();
    let (text2, trace2) = decode_greedy(&f.lm, Some(retriever), &f.vocab, &cfg, &prompt).unwrap();
    assert_eq!(text, text2);
    assert_eq!(trace, trace2);
    assert_eq!(trace.mode, Mode::KnnIcl);
    let emitted = text.split_whitespace().count() + usize::from(trace.stop == StopReason::Eos);
    assert_eq!(trace.len(), emitted);
    assert!(trace.steps.iter().all(|s| s.top5_lm.len() == 5 && s.top5_knn.len() <= 5));
    assert!(trace.steps.iter().all(|s| s.neighbor_distances.len() == 3));

    let mut buf = Vec::new();
    trace.write_jsonl(&mut buf).unwrap();
    let lines: Vec<serde_json::Value> = String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), trace.len());
    for (i, l) in lines.iter().enumerate() {
        assert_eq!(l["step"], i);
        for key in ["chosen", "top5_lm", "top5_knn", "neighbor_distances"] {
            assert!(l.get(key).is_some(), "{key}");
        }
    }
}

#[test]
fn truncation_still_returns_text() {
    let f = fixture();
    let prompt = build_prompt(None, &exemplars(&[2]), &words("is it cold in paris")).unwrap();
    let cfg = DecoderConfig {
        max_len: 4,
        ..DecoderConfig::default()
    };
    let (text, trace) = decode_greedy(&f.lm, None, &f.vocab, &cfg, &prompt).unwrap();
    assert_eq!(trace.stop, StopReason::MaxLen);
    assert!(trace.truncated());
    assert_eq!(text.split_whitespace().count(), 4);
}

#[test]
fn empty_store_falls_back_to_the_lm() {
    let f = fixture();
    let store: Datastore =
        DatastoreBuilder::new(f.encoder.dim(), f.encoder.fingerprint(), f.vocab.fingerprint(), RecordFilter::LabelsOnly)
            .finish();
    let retriever = Retriever::new(&store, &f.encoder).unwrap();
    let prompt = build_prompt(None, &exemplars(&[0]), &words("what is the weather")).unwrap();
    let cfg = DecoderConfig::with_knn(0.7, KnnConfig::new(3, 100.0));
    let (text, trace) = decode_greedy(&f.lm, Some(retriever), &f.vocab, &cfg, &prompt).unwrap();
    let (plain, _) = decode_greedy(&f.lm, None, &f.vocab, &DecoderConfig::default(), &prompt).unwrap();
    assert_eq!(text, plain);
    assert!(trace.steps.iter().all(|s| s.note.is_some()));
}

#[test]
fn mismatched_store_is_rejected() {
    let f = fixture();
    let store = build_datastore(&f.examples, &f.encoder, &f.vocab, RecordFilter::LabelsOnly).unwrap();
    let other = HashedNgramEncoder::new(EncoderConfig {
        seed: 1,
        ..EncoderConfig::default()
    })
    .unwrap();
    assert!(Retriever::new(&store, &other).is_err());
    let mut vocab = f.vocab.clone();
    vocab.intern("zebra");
    let retriever = Retriever::new(&store, &f.encoder).unwrap();
    let prompt = build_prompt::<String, String, _>(None, &[], &["zebra"]).unwrap();
    assert!(Session::new(&f.lm, Some(retriever), &vocab, &prompt).is_err());
}

#[test]
fn cached_session_matches_fresh_sessions() {
    let f = fixture();
    let store = build_datastore(&f.examples, &f.encoder, &f.vocab, RecordFilter::AllTokens).unwrap();
    let retriever = Retriever::new(&store, &f.encoder).unwrap();
    let prompt = build_prompt(None, &exemplars(&[5, 7]), &words("directions to the eagles game")).unwrap();
    let mut shared = Session::new(&f.lm, Some(retriever), &f.vocab, &prompt).unwrap();
    shared.prefetch(40);
    for &lambda in &[0.1, 0.5, 0.9] {
        for &k in &[1, 5, 40] {
            for &temp in &[1.0, 100.0] {
                let cfg = DecoderConfig::with_knn(lambda, KnnConfig::new(k, temp));
                let cached = shared.decode(&cfg).unwrap();
                let (fresh, trace) = decode_greedy(&f.lm, Some(retriever), &f.vocab, &cfg, &prompt).unwrap();
                assert_eq!(cached.text, fresh);
                assert_eq!(cached.trace, trace);
            }
        }
    }
}
