use knnicl::lm::{sequence, EncodedPrompt, LanguageModel, LmError, NGramConfig, NGramLm, TokenDistribution};
use knnicl::textcore::{TokenId, Vocabulary, QUOTE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook interpolated absolute discounting, computed by scanning the raw
/// sequences for every query.
fn oracle_prob(seqs: &[Vec<TokenId>], history: &[TokenId], w: TokenId, order: usize, d: f64, v: usize) -> f64 {
    let mut p = 1.0 / v as f64;
    for n in 1..=order {
        if n - 1 > history.len() {
            break;
        }
        let ctx = &history[history.len() - (n - 1)..];
        let mut total = 0.0;
        let mut hit = 0.0;
        let mut types = std::collections::BTreeSet::new();
        for s in seqs {
            for i in (n - 1).max(1)..s.len() {
                if &s[i - (n - 1)..i] == ctx {
                    total += 1.0;
                    types.insert(s[i]);
                    if s[i] == w {
                        hit += 1.0;
                    }
                }
            }
        }
        if total > 0.0 {
            p = (f64::max(hit - d, 0.0) + d * types.len() as f64 * p) / total;
        }
    }
    p
}

type Pairs = Vec<(Vec<TokenId>, Vec<TokenId>)>;

fn toy() -> (Vocabulary, Pairs) {
    let mut v = Vocabulary::new();
    let rows = [
        ("what is the weather", "GET_WEATHER ( )"),
        ("weather in boston", "GET_WEATHER ( LOCATION = \" boston \" )"),
        ("is it cold in paris", "GET_WEATHER ( WEATHER_ATTRIBUTE = \" cold \" , LOCATION = \" paris \" )"),
        ("set an alarm for 7 am", "CREATE_ALARM ( DATE_TIME = \" for 7 am \" )"),
    ];
    let corpus = rows
        .iter()
        .map(|(u, a)| (v.intern_text(u), v.intern_text(a)))
        .collect();
    (v, corpus)
}

fn prompt_for(vocab: &Vocabulary, target: &str, exemplars: &[(&str, &str)]) -> EncodedPrompt {
    let target: Vec<TokenId> = vocab.tokenize(target);
    EncodedPrompt {
        exemplars: exemplars
            .iter()
            .map(|(u, a)| sequence(&vocab.tokenize(u), &vocab.tokenize(a)))
            .collect(),
        target,
        space_len: vocab.len(),
        vocab_fingerprint: vocab.fingerprint(),
    }
}

#[test]
fn base_model_matches_textbook_oracle() {
    let (vocab, corpus) = toy();
    let lm = NGramLm::train(&corpus, &vocab, NGramConfig::default()).unwrap();
    let seqs: Vec<_> = corpus.iter().map(|(u, a)| sequence(u, a)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let v = vocab.len();
    for _ in 0..100 {
        let len = rng.random_range(1..6);
        let mut history: Vec<TokenId> = (0..len).map(|_| rng.random_range(0..v as TokenId)).collect();
        if rng.random_bool(0.5) {
            // take a real context so higher orders fire
            let s = &seqs[rng.random_range(0..seqs.len())];
            let cut = rng.random_range(2..s.len());
            history = s[..cut].to_vec();
        }
        let dist = lm.base_dist(&history, v);
        assert!((dist.sum() - 1.0).abs() < 1e-9);
        for w in 0..v as TokenId {
            let want = oracle_prob(&seqs, &history, w, 3, 0.75, v);
            assert!((dist.get(w) - want).abs() < 1e-12, "w={w} got {} want {want}", dist.get(w));
        }
    }
}

#[test]
fn single_sequence_prefers_observed_continuation() {
    let mut v = Vocabulary::new();
    let corpus = vec![(v.intern_text("wake me up"), v.intern_text("CREATE_ALARM ( )"))];
    let lm = NGramLm::train(&corpus, &v, NGramConfig::default()).unwrap();
    let seq = sequence(&corpus[0].0, &corpus[0].1);
    for i in 1..seq.len() {
        let dist = lm.base_dist(&seq[..i], v.len());
        assert_eq!(dist.argmax(), seq[i], "position {i}");
    }
}

#[test]
fn unseen_trigram_keeps_mass() {
    let (vocab, corpus) = toy();
    let lm = NGramLm::train(&corpus, &vocab, NGramConfig::default()).unwrap();
    let hist = [vocab.get("paris").unwrap(), vocab.get("alarm").unwrap()];
    let dist = lm.base_dist(&hist, vocab.len());
    assert!(dist.probs().iter().all(|&p| p > 0.0));
}

#[test]
fn next_dist_is_normalized_over_random_states() {
    let (vocab, corpus) = toy();
    let lm = NGramLm::train(&corpus, &vocab, NGramConfig::default()).unwrap();
    let prompt = prompt_for(&vocab, "is it cold in boston", &[("weather in paris", "GET_WEATHER ( LOCATION = \" paris \" )")]);
    let state = lm.prepare(&prompt).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let len = rng.random_range(0..12);
        let prefix: Vec<TokenId> = (0..len).map(|_| rng.random_range(0..vocab.len() as TokenId)).collect();
        let d = lm.next_dist(&state, &prefix);
        assert!(TokenDistribution::new(d.probs().to_vec()).is_ok());
        assert!(d.probs().iter().all(|&p| p > 0.0) || prefix.iter().filter(|&&t| t == QUOTE).count() % 2 == 1);
    }
}

#[test]
fn zero_prompt_mix_is_the_base_model() {
    let (vocab, corpus) = toy();
    let cfg = NGramConfig { prompt_mix: 0.0, ..Default::default() };
    let lm = NGramLm::train(&corpus, &vocab, cfg).unwrap();
    let prompt = prompt_for(&vocab, "weather in paris", &[("set an alarm for 7 am", "CREATE_ALARM ( DATE_TIME = \" for 7 am \" )")]);
    let state = lm.prepare(&prompt).unwrap();
    let mut history = vec![1];
    history.extend(&prompt.target);
    history.push(3);
    for extra in [vec![], vocab.tokenize("GET_WEATHER ("), vocab.tokenize("GET_WEATHER ( LOCATION =")] {
        let mut h = history.clone();
        h.extend(&extra);
        assert_eq!(lm.next_dist(&state, &extra), lm.base_dist(&h, vocab.len()));
    }
}

#[test]
fn copy_lower_bound_right_after_open_quote() {
    let (vocab, corpus) = toy();
    let lm = NGramLm::train(&corpus, &vocab, NGramConfig::default()).unwrap();
    let target = "is it cold in boston";
    let prompt = prompt_for(&vocab, target, &[]);
    let prefix = vocab.tokenize("GET_WEATHER ( LOCATION = \"");
    let d = lm.next_dist_for(&prompt, &prefix).unwrap();
    let beta = lm.config().copy_boost;
    for t in vocab.tokenize(target) {
        assert!(d.get(t) >= beta / 5.0, "{}", vocab.surface(t).unwrap());
    }
}

#[test]
fn full_copy_support_is_utterance_plus_close_quote() {
    let (vocab, corpus) = toy();
    let cfg = NGramConfig { copy_boost: 1.0, ..Default::default() };
    let lm = NGramLm::train(&corpus, &vocab, cfg).unwrap();
    let target = "is it cold in boston";
    let prompt = prompt_for(&vocab, target, &[]);
    let mut want: Vec<TokenId> = vocab.tokenize(target);
    // an empty span may not close
    let opened = lm.next_dist_for(&prompt, &vocab.tokenize("GET_WEATHER ( LOCATION = \"")).unwrap();
    let support: Vec<TokenId> = (0..vocab.len() as TokenId).filter(|&t| opened.get(t) > 0.0).collect();
    want.sort();
    assert_eq!(support, want);
    let inside = lm.next_dist_for(&prompt, &vocab.tokenize("GET_WEATHER ( LOCATION = \" boston")).unwrap();
    let support: Vec<TokenId> = (0..vocab.len() as TokenId).filter(|&t| inside.get(t) > 0.0).collect();
    want.push(QUOTE);
    want.sort();
    assert_eq!(support, want);
}

#[test]
fn prompt_exemplars_steer_the_intent() {
    // base corpus: 20 weather requests, 2 alarms
    let mut v = Vocabulary::new();
    let mut corpus = Vec::new();
    for i in 0..20 {
        corpus.push((v.intern_text(&format!("weather report number {i}")), v.intern_text("GET_WEATHER ( )")));
    }
    for _ in 0..2 {
        corpus.push((v.intern_text("alarm please"), v.intern_text("GET_ALARM ( )")));
    }
    v.intern_text("show my alarms");
    let cfg = NGramConfig { prompt_recency: 1.0, ..Default::default() };
    let lm = NGramLm::train(&corpus, &v, cfg).unwrap();
    let exemplars: Vec<(String, String)> = (0..10).map(|i| (format!("show alarms {i}"), "GET_ALARM ( )".to_string())).collect();
    let ex_refs: Vec<(&str, &str)> = exemplars.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();

    let empty = prompt_for(&v, "show my alarms", &[]);
    let steered = prompt_for(&v, "show my alarms", &ex_refs);
    let weather = v.get("GET_WEATHER").unwrap();
    let alarm = v.get("GET_ALARM").unwrap();
    assert_eq!(lm.next_dist_for(&empty, &[]).unwrap().argmax(), weather);

    // hand-built tables at the first API position (history `... alarms SEP`);
    // unigram totals count every position after BOS
    // base: trigram (alarms, SEP) unseen; bigram SEP -> {WEATHER: 20, ALARM: 2}
    let vsz = v.len() as f64;
    let d = 0.75;
    let uni_total = corpus.iter().map(|(u, a)| u.len() + a.len() + 2).sum::<usize>() as f64;
    let uni_alarm = (2.0 - d) / uni_total;
    let uni_types = {
        let mut s = std::collections::BTreeSet::new();
        for (u, a) in &corpus {
            s.extend(sequence(u, a).into_iter().skip(1));
        }
        s.len() as f64
    };
    let p1 = |own: f64| own + d * uni_types / uni_total / vsz;
    let base_alarm = ((2.0 - d) + d * 2.0 * p1(uni_alarm)) / 22.0;
    // prompt: trigram (alarms, SEP) unseen in exemplars; bigram SEP -> {ALARM: 10}
    let ex_total: f64 = ex_refs.iter().map(|(u, a)| (v.tokenize(u).len() + v.tokenize(a).len() + 2) as f64).sum();
    let ex_types = {
        let mut s = std::collections::BTreeSet::new();
        for (u, a) in &ex_refs {
            s.extend(sequence(&v.tokenize(u), &v.tokenize(a)).into_iter().skip(1));
        }
        s.len() as f64
    };
    let q1_alarm = (10.0 - d) / ex_total + d * ex_types / ex_total / vsz;
    let prompt_alarm = ((10.0 - d) + d * q1_alarm) / 10.0;
    let mixed_alarm = 0.5 * base_alarm + 0.5 * prompt_alarm;

    let got = lm.next_dist_for(&steered, &[]).unwrap();
    assert!((got.get(alarm) - mixed_alarm).abs() < 1e-12);
    assert_eq!(got.argmax(), alarm);
}

#[test]
fn later_exemplars_weigh_more() {
    let mut v = Vocabulary::new();
    let corpus = vec![(v.intern_text("x"), v.intern_text("A ( )")), (v.intern_text("y"), v.intern_text("B ( )"))];
    let lm = NGramLm::train(&corpus, &v, NGramConfig::default()).unwrap();
    let (a, b) = (v.get("A").unwrap(), v.get("B").unwrap());
    let ab = prompt_for(&v, "z", &[("x", "A ( )"), ("y", "B ( )")]);
    let ba = prompt_for(&v, "z", &[("y", "B ( )"), ("x", "A ( )")]);
    assert_eq!(lm.next_dist_for(&ab, &[]).unwrap().argmax(), b);
    assert_eq!(lm.next_dist_for(&ba, &[]).unwrap().argmax(), a);
}

#[test]
fn errors() {
    let (vocab, corpus) = toy();
    assert!(matches!(NGramLm::train(&[], &vocab, NGramConfig::default()), Err(LmError::EmptyCorpus)));
    let bad = NGramConfig { prompt_mix: 1.5, ..Default::default() };
    assert!(matches!(NGramLm::train(&corpus, &vocab, bad), Err(LmError::BadConfig(_))));
    let lm = NGramLm::train(&corpus, &vocab, NGramConfig::default()).unwrap();
    let mut other = vocab.clone();
    other.intern("extra");
    let foreign = prompt_for(&other, "weather", &[]);
    assert!(matches!(lm.prepare(&foreign), Err(LmError::VocabMismatch(_))));
    let mut out_of_range = prompt_for(&vocab, "weather", &[]);
    out_of_range.exemplars.push(vec![10_000]);
    assert!(matches!(lm.prepare(&out_of_range), Err(LmError::VocabMismatch(_))));
}

#[test]
fn model_file_round_trip() {
    let (vocab, corpus) = toy();
    let lm = NGramLm::train(&corpus, &vocab, NGramConfig::default()).unwrap();
    let bytes = lm.to_bytes();
    assert_eq!(&bytes[..4], b"NGLM");
    let back = NGramLm::from_bytes(&bytes).unwrap();
    assert_eq!(back, lm);
    assert!(matches!(NGramLm::from_bytes(&bytes[..bytes.len() - 3]), Err(LmError::CorruptModel(_))));
    let mut wrong_version = bytes.clone();
    wrong_version[4] = 9;
    assert!(matches!(NGramLm::from_bytes(&wrong_version), Err(LmError::VersionMismatch(9))));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.nglm");
    lm.save(&path).unwrap();
    assert_eq!(NGramLm::load(&path).unwrap(), lm);
}
