use proptest::prelude::*;

use weaklabel::corpus::{corpus_stats, Corpus, Entity, LabelSource, Note};
use weaklabel::cost::{decoder_flops, fit_linear, project_gpu_time, CostSample, DecoderCostSpec, LinearFit};
use weaklabel::distill::{LabelStatus, Provenance, WeakLabelResult, WeakLabelSet};
use weaklabel::eval::{match_entities, micro_scores, MatchMode, PredictionSet};
use weaklabel::export::{from_bio, is_well_formed, to_bio, tokenize_subwords, Vocabulary};
use weaklabel::prompt::{FewShotExample, Label, PromptTemplate, INST_CLOSE};
use weaklabel::select::select_gold_subset;

const WORDS: &[&str] = &["take", "the", "tablet", "daily", "for", "pain", "mg", "40", "PO", "nitro", "(", ")", ",", "."];

/// Words joined by single spaces, with their char spans.
fn sentence(words: &[usize]) -> (String, Vec<(usize, usize)>) {
    let mut text = String::new();
    let mut spans = Vec::new();
    for &w in words {
        if !text.is_empty() {
            text.push(' ');
        }
        let start = text.chars().count();
        text.push_str(WORDS[w]);
        spans.push((start, text.chars().count()));
    }
    (text, spans)
}

fn ent(s: usize, e: usize, t: &str) -> Entity {
    Entity::new(s, e, "", t, LabelSource::Gold)
}

fn span_strategy() -> impl Strategy<Value = Vec<(usize, usize, bool)>> {
    prop::collection::vec((0..30usize, 1..6usize, any::<bool>()), 0..8)
}

fn to_entities(raw: &[(usize, usize, bool)]) -> Vec<Entity> {
    raw.iter()
        .map(|&(s, len, t)| ent(s, s + len, if t { "A" } else { "B" }))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn bio_round_trip(words in prop::collection::vec(0..WORDS.len(), 1..20), picks in prop::collection::vec((0..20usize, 1..4usize, any::<bool>()), 0..6)) {
        let vocab = Vocabulary::fixture();
        let (text, spans) = sentence(&words);
        // non-overlapping word-aligned entities
        let mut taken = vec![false; spans.len()];
        let mut ents = Vec::new();
        for (w, len, t) in picks {
            if w >= spans.len() {
                continue;
            }
            let last = (w + len - 1).min(spans.len() - 1);
            if taken[w..=last].iter().any(|&x| x) {
                continue;
            }
            taken[w..=last].iter_mut().for_each(|x| *x = true);
            let (s, e) = (spans[w].0, spans[last].1);
            let surface: String = text.chars().skip(s).take(e - s).collect();
            ents.push(Entity::new(s, e, surface, if t { "Drug" } else { "Form" }, LabelSource::Gold));
        }
        ents.sort();
        let tokens = tokenize_subwords(&text, &vocab);
        let (ex, drops) = to_bio("n", 0, &tokens, &ents, 256);
        prop_assert_eq!(drops.total(), 0);
        prop_assert!(is_well_formed(&ex.tags));
        let mut back = from_bio(&ex, &text, LabelSource::Gold);
        back.sort();
        prop_assert_eq!(back, ents);
    }

    #[test]
    fn exported_tags_always_well_formed(raw in span_strategy(), n_tokens in 1..40usize, max in 1..40usize) {
        let text = "ab ".repeat(n_tokens);
        let tokens = tokenize_subwords(&text, &Vocabulary::fixture());
        let ents: Vec<Entity> = to_entities(&raw).into_iter().filter(|e| e.end <= text.len()).collect();
        let (ex, drops) = to_bio("n", 0, &tokens, &ents, max);
        prop_assert!(is_well_formed(&ex.tags));
        prop_assert_eq!(ex.tags.len(), ex.tokens.len());
        prop_assert!(ex.tokens.len() <= max);
        let begins = ex.tags.iter().filter(|t| t.to_string().starts_with("B-")).count();
        prop_assert_eq!(begins + drops.total(), ents.len());
    }

    #[test]
    fn matching_symmetry_and_order(g in span_strategy(), p in span_strategy()) {
        let (g, p) = (to_entities(&g), to_entities(&p));
        for mode in MatchMode::BOTH {
            let a = match_entities(&g, &p, mode).counts;
            let b = match_entities(&p, &g, mode).counts;
            prop_assert_eq!((a.tp, a.fp, a.fn_), (b.tp, b.fn_, b.fp));
            let s = a.scores();
            prop_assert!((0.0..=1.0).contains(&s.f1));
        }
        let strict = match_entities(&g, &p, MatchMode::Strict);
        let lenient = match_entities(&g, &p, MatchMode::Lenient);
        prop_assert!(strict.counts.tp <= lenient.counts.tp);
    }

    #[test]
    fn selection_partitions(counts in prop::collection::vec(0..6usize, 1..40), n_s in 1..50usize) {
        let notes: Vec<Note> = counts.iter().enumerate().map(|(i, &c)| {
            let ents = (0..c).map(|k| Entity::new(k, k + 1, "x", "T", LabelSource::Gold)).collect();
            Note::new(format!("id{i:02}"), "x".repeat(c.max(1)), ents).unwrap()
        }).collect();
        let mut reversed = notes.clone();
        reversed.reverse();
        let a = select_gold_subset(&Corpus::new(notes), n_s).unwrap();
        let b = select_gold_subset(&Corpus::new(reversed), n_s).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.gold_ids.len(), n_s.min(counts.len()));
        let mut all: Vec<String> = a.gold_ids.iter().chain(&a.weak_ids).cloned().collect();
        all.sort();
        all.dedup();
        prop_assert_eq!(all.len(), counts.len());
    }

    #[test]
    fn flops_monotone(n in 0..1u64 << 40, l in 0..200u64, c in 0..8192u64, d in 0..16384u64, t in 0..4096u64, field in 0..5usize) {
        let spec = DecoderCostSpec { total_params: n, n_layer: l, n_ctx: c, d_attn: d, n_tokens_out: t };
        let mut bigger = spec;
        match field {
            0 => bigger.total_params += 1,
            1 => bigger.n_layer += 1,
            2 => bigger.n_ctx += 1,
            3 => bigger.d_attn += 1,
            _ => bigger.n_tokens_out += 1,
        }
        prop_assert!(decoder_flops(&bigger) >= decoder_flops(&spec));
        let doubled = DecoderCostSpec { n_tokens_out: 2 * t, ..spec };
        prop_assert_eq!(decoder_flops(&doubled), 2 * decoder_flops(&spec));
    }

    #[test]
    fn projection_is_affine(slope in 0.0..1e4f64, intercept in 0.0..1e4f64, a in 0..1_000_000u64, b in 0..1_000_000u64) {
        let fit = LinearFit { intercept, slope, r_squared: 1.0 };
        let diff = project_gpu_time(&fit, a + b).seconds - project_gpu_time(&fit, a).seconds;
        let want = slope * b as f64;
        prop_assert!((diff - want).abs() <= 1e-9 * (1.0 + intercept + slope * (a + b) as f64));
    }

    #[test]
    fn ols_residuals_orthogonal(points in prop::collection::vec((1..1000usize, 0.0..1e4f64), 3..60)) {
        prop_assume!(points.iter().any(|p| p.0 != points[0].0));
        let samples: Vec<CostSample> = points.iter().map(|&(x, y)| CostSample { note_count: x, gpu_seconds: y }).collect();
        let f = fit_linear(&samples).unwrap();
        let (mut r0, mut r1, mut y0, mut y1) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for s in &samples {
            let x = s.note_count as f64;
            let r = s.gpu_seconds - f.predict(x);
            r0 += r;
            r1 += r * x;
            y0 += s.gpu_seconds.abs() + f.intercept.abs();
            y1 += (s.gpu_seconds * x).abs() + (f.intercept * x).abs();
        }
        prop_assert!(r0.abs() <= 1e-9 * y0.max(1.0));
        prop_assert!(r1.abs() <= 1e-9 * y1.max(1.0));
        prop_assert!((0.0..=1.0).contains(&f.r_squared));
    }

    #[test]
    fn template_turn_count(k in 0..8usize) {
        let examples: Vec<FewShotExample> = (0..k)
            .map(|i| FewShotExample::new(format!("Give drug{i} now."), vec![Label::new(format!("drug{i}"), "Drug")]).unwrap())
            .collect();
        let t = PromptTemplate::new(weaklabel::corpus::Benchmark::Medication2018.schema(), examples);
        let prompt = t.render_inference_prompt("Some sentence.").unwrap();
        // instruction turn, k examples, and the input turn
        prop_assert_eq!(prompt.matches(INST_CLOSE).count(), 2 + k);
        prop_assert!(prompt.ends_with("Some sentence. [/INST]"));
    }
}

#[test]
fn micro_is_pooled_not_averaged() {
    let text = "abcdefghij";
    let notes = vec![
        Note::new("a", text, vec![Entity::new(0, 1, "a", "T", LabelSource::Gold)]).unwrap(),
        Note::new(
            "b",
            text,
            (0..9).map(|i| Entity::new(i, i + 1, &text[i..i + 1], "T", LabelSource::Gold)).collect(),
        )
        .unwrap(),
    ];
    let corpus = Corpus::new(notes);
    let mut pred = PredictionSet::new();
    pred.insert("a".into(), vec![ent(0, 1, "T")]);
    pred.insert("b".into(), vec![ent(0, 1, "T")]);
    let r = micro_scores(&corpus, &pred, MatchMode::Strict).unwrap();
    // pooled: tp 2, fn 8 -> recall 0.2, precision 1
    let pooled = 2.0 * 1.0 * 0.2 / 1.2;
    assert!((r.micro.f1 - pooled).abs() < 1e-12);
    let per_note_mean = (1.0 + 2.0 * (1.0 / 9.0) / (1.0 + 1.0 / 9.0)) / 2.0;
    assert!((r.micro.f1 - per_note_mean).abs() > 0.1);
    let total: usize = r.per_type.values().map(|t| t.counts.tp + t.counts.fn_).sum();
    assert_eq!(total, 10);
}

#[test]
fn weak_stats_failed_percentage() {
    let text = "s. ".repeat(100);
    let note = Note::new("w", text.trim_end(), Vec::new()).unwrap().segmented();
    assert_eq!(note.sentences.len(), 100);
    let results = note
        .sentences
        .iter()
        .map(|s| {
            let failed = s.index < 2;
            WeakLabelResult {
                note_id: "w".into(),
                sentence_index: s.index,
                status: if failed { LabelStatus::Failed } else { LabelStatus::Empty },
                entities: Vec::new(),
                parsed: 0,
                skipped_objects: 0,
                dropped_unrecovered: 0,
                dropped_bad_type: 0,
                raw_text: if failed { "garbage".into() } else { "[]".into() },
                error: None,
            }
        })
        .collect();
    let prov = Provenance {
        model_id: "m".into(),
        template_digest: "d".into(),
        max_new_tokens: 128,
        top_k: 1,
    };
    let set = WeakLabelSet::new(results, prov).unwrap();
    let stats = corpus_stats(&Corpus::new(vec![note]), Some(&set)).unwrap();
    assert_eq!(stats.failed_sentence_pct, Some(2.0));
    assert_eq!(stats.sentence_count, 100);
}

#[test]
fn tokenizer_examples() {
    let with_whole = Vocabulary::from_pieces(["[UNK]", "ni", "##tro", "nitro"]).unwrap();
    let t = tokenize_subwords("nitro", &with_whole);
    assert_eq!(t.iter().map(|x| x.text.as_str()).collect::<Vec<_>>(), ["nitro"]);
    let split = Vocabulary::from_pieces(["[UNK]", "ni", "##tro"]).unwrap();
    let t = tokenize_subwords("nitro", &split);
    assert_eq!(
        t.iter().map(|x| (x.text.as_str(), x.start, x.end)).collect::<Vec<_>>(),
        [("ni", 0, 2), ("##tro", 2, 5)]
    );
    let t = tokenize_subwords("qzx", &split);
    assert_eq!(t.iter().map(|x| (x.text.as_str(), x.start, x.end)).collect::<Vec<_>>(), [("[UNK]", 0, 3)]);
}
