use proptest::prelude::*;
use unitprompt::container::Container;
use unitprompt::decode::{beam_search, sequence_logprob, DecodeConfig, StepScorer};
use unitprompt::harness::{auto_bleu, bleu, edit_distance, fewshot_subsample, Dataset, Example};
use unitprompt::numcore::Tensor;
use unitprompt::unitizer::{data_size_bits, kmeans_fit, DataFormat, FeatureMatrix};
use unitprompt::unitlm::Vocabulary;
use unitprompt::verbalizer::{FixedVerbalizer, Verbalized};

/// Fixed per-position distributions over a tiny space; the last id is eos.
#[derive(Debug)]
struct Table {
    rows: Vec<Vec<f64>>,
}

impl StepScorer for Table {
    fn space(&self) -> usize {
        self.rows[0].len()
    }

    fn eos(&self) -> usize {
        self.space() - 1
    }

    fn log_probs(&mut self, prefix: &[usize]) -> unitprompt::Result<Vec<f64>> {
        // Mix in the previous id so the distribution depends on the prefix.
        let row = &self.rows[prefix.len() % self.rows.len()];
        let shift = prefix.last().copied().unwrap_or(0);
        let n = row.len();
        let raw: Vec<f64> = (0..n).map(|i| row[(i + shift) % n]).collect();
        let z: f64 = raw.iter().sum();
        Ok(raw.iter().map(|p| (p / z).ln()).collect())
    }
}

fn table() -> impl Strategy<Value = Table> {
    (2usize..5, 1usize..4).prop_flat_map(|(space, rows)| {
        prop::collection::vec(prop::collection::vec(0.05f64..1.0, space), rows).prop_map(|rows| Table { rows })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn edit_distance_is_a_bounded_symmetric_metric(
        a in prop::collection::vec(0u8..4, 0..12),
        b in prop::collection::vec(0u8..4, 0..12),
    ) {
        let d = edit_distance(&a, &b);
        prop_assert_eq!(d, edit_distance(&b, &a));
        prop_assert!(d <= a.len().max(b.len()));
        prop_assert!(d >= a.len().abs_diff(b.len()));
        prop_assert_eq!(edit_distance(&a, &a), 0);
    }

    #[test]
    fn bleu_of_a_corpus_against_itself_is_100(
        corpus in prop::collection::vec(prop::collection::vec(0u16..50, 1..15), 1..6),
    ) {
        let score = bleu(&corpus, &corpus).unwrap();
        prop_assert!((score - 100.0).abs() < 1e-9, "{score}");
    }

    #[test]
    fn auto_bleu_is_a_fraction(tokens in prop::collection::vec(0u8..5, 2..30), n in 1usize..3) {
        let score = auto_bleu(&tokens, n).unwrap();
        prop_assert!((0.0..=1.0).contains(&score));
    }

    #[test]
    fn fewshot_is_balanced_and_seeded(per_class in prop::collection::vec(3usize..8, 1..5), k in 1usize..4, seed: u64) {
        let examples: Vec<Example> = per_class
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| {
                (0..n).map(move |i| Example {
                    units: vec![c, i],
                    labels: vec![format!("c{c}")],
                    meta: serde_json::Value::Null,
                })
            })
            .collect();
        let ds = Dataset::new(examples);
        let sub = fewshot_subsample(&ds, k, seed).unwrap();
        for c in 0..per_class.len() {
            let count = sub.examples.iter().filter(|e| e.labels[0] == format!("c{c}")).count();
            prop_assert_eq!(count, k);
        }
        prop_assert_eq!(sub, fewshot_subsample(&ds, k, seed).unwrap());
    }

    #[test]
    fn beam_scores_rederive_and_respect_eos(mut scorer in table(), beam in 1usize..4, max_len in 1usize..5) {
        let config = DecodeConfig { beam, max_len, ..DecodeConfig::default() };
        let eos = scorer.eos();
        for h in beam_search(&mut scorer, &config).unwrap() {
            let rescored = sequence_logprob(&mut scorer, &h.units).unwrap();
            prop_assert!((rescored - h.logprob).abs() <= 1e-6);
            prop_assert!(h.units.last() == Some(&eos) || h.units.len() == max_len);
        }
    }

    #[test]
    fn kmeans_inertia_never_increases(
        points in prop::collection::vec(prop::collection::vec(-3.0f32..3.0, 2), 4..40),
        k in 1usize..4,
        seed: u64,
    ) {
        let values: Vec<f32> = points.iter().flatten().copied().collect();
        let f = FeatureMatrix::new(points.len(), 2, values).unwrap();
        let fit = kmeans_fit(&[f], k, 30, seed).unwrap();
        for w in fit.inertia.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0), "{:?}", fit.inertia);
        }
    }

    #[test]
    fn container_round_trips_and_detects_corruption(
        data in prop::collection::vec(-1e3f64..1e3, 1..20),
        flip in any::<prop::sample::Index>(),
    ) {
        let t = Tensor::new(vec![data.len()], data.clone()).unwrap();
        let mut c = Container::new("component = \"TEST\"\n");
        c.push_tensor("x", &t);
        let bytes = c.to_bytes();
        let back = Container::from_bytes(&bytes).unwrap();
        let x: Tensor<f64> = back.tensor("x").unwrap();
        prop_assert_eq!(x.data(), &data[..]);

        // Corrupt one payload byte; the trailing hash must catch it.
        let payload_start = bytes.len() - 8 - 8 * data.len();
        let mut bad = bytes.clone();
        bad[payload_start + flip.index(8 * data.len())] ^= 0x40;
        prop_assert!(Container::from_bytes(&bad).is_err());
    }

    #[test]
    fn fixed_verbalizer_inverts_its_map(n_labels in 1usize..20, n_units in 20usize..60, seed: u64) {
        let vocab = Vocabulary::new(n_units).unwrap();
        let v = FixedVerbalizer::from_seed(n_labels, vocab, seed).unwrap();
        for l in 0..n_labels {
            let u = v.unit(l).unwrap();
            prop_assert!(!vocab.is_reserved(u));
            prop_assert_eq!(v.verbalize(u), Verbalized::Label(l));
        }
    }

    #[test]
    fn data_size_ratio_does_not_depend_on_duration(clusters in 1usize..5000, t in 0.1f64..1e4) {
        let format = DataFormat::Units { clusters };
        let one = data_size_bits(format, 1.0).unwrap();
        let many = data_size_bits(format, t).unwrap();
        prop_assert_eq!(one.ratio_to_waveform, many.ratio_to_waveform);
        prop_assert!((many.bits - one.bits * t).abs() <= 1e-9 * many.bits.max(1.0));
    }
}
