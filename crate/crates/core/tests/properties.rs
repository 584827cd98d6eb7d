use anchorlvm::assignment::{Assignment, NodeId, Scope};
use anchorlvm::estimation::{estimate_parent_given_value, DatasetPriors, ParentGivenValueTable};
use anchorlvm::identification::{adjustment_workspaces, fit_model, fit_model_with_order, FitOptions, DEFAULT_DELTA};
use anchorlvm::inference::posterior_value;
use anchorlvm::ingest::{tabulate_joint, CountTable, EventRecord};
use anchorlvm::network::{AnchorPolarity, NetworkSpec, NodeRole};
use anchorlvm::report::internal_structure_report;
use anchorlvm::synthlab::{
    exact_inputs, exact_parent_given_value, random_ground_truth, random_ground_truth_with, GeneratorOptions,
    GroundTruthModel, Oracle, Structure,
};
use anchorlvm::table::JointTable;
use proptest::prelude::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn structure() -> impl Strategy<Value = Structure> {
    prop_oneof![Just(Structure::Naive), Just(Structure::Gated), Just(Structure::TwitterShaped)]
}

fn ground_truth() -> impl Strategy<Value = GroundTruthModel> {
    (any::<u64>(), 1usize..=8, structure()).prop_map(|(seed, n, s)| random_ground_truth(seed, n, s))
}

/// Random valid network: ranks V < B1..Bk < A, random forward edges,
/// shuffled declaration order.
fn network() -> impl Strategy<Value = NetworkSpec> {
    (1usize..=6)
        .prop_flat_map(|k| {
            (
                Just(k),
                prop::collection::vec(any::<bool>(), k),
                prop::collection::vec(any::<bool>(), k * k),
                prop::collection::vec(any::<bool>(), k),
                any::<u64>(),
            )
        })
        .prop_map(|(k, from_v, between, into_a, seed)| {
            let b = |i: usize| format!("B{i}");
            let mut edges = vec![("V".to_owned(), "A".to_owned())];
            for i in 0..k {
                if from_v[i] {
                    edges.push(("V".into(), b(i)));
                }
                if into_a[i] {
                    edges.push((b(i), "A".into()));
                }
                for j in i + 1..k {
                    if between[i * k + j] {
                        edges.push((b(i), b(j)));
                    }
                }
            }
            let mut nodes: Vec<(String, NodeRole)> = (0..k).map(|i| (b(i), NodeRole::Behavior)).collect();
            nodes.push(("V".into(), NodeRole::LatentValue));
            nodes.push(("A".into(), NodeRole::Anchor));
            nodes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            NetworkSpec::new(nodes, edges, AnchorPolarity::Negative, 0.0).expect("forward edges form a valid network")
        })
}

/// A topological order chosen at random among the valid ones.
fn random_topological_order(spec: &NetworkSpec, seed: u64) -> Vec<NodeId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placed: Vec<NodeId> = Vec::new();
    while placed.len() < spec.len() {
        let ready: Vec<NodeId> = spec
            .node_ids()
            .filter(|n| !placed.contains(n) && spec.parents(*n).iter().all(|p| placed.contains(p)))
            .collect();
        placed.push(*ready.choose(&mut rng).expect("acyclic"));
    }
    placed
}

fn evidence(spec: &NetworkSpec, scope_bits: u32, value_bits: u32) -> Assignment {
    let mut e = Assignment::empty();
    for (i, n) in spec.observed().into_iter().enumerate() {
        if scope_bits >> i & 1 == 1 {
            e.set(n, value_bits >> i & 1 == 1);
        }
    }
    e
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn topological_order_respects_edges(spec in network()) {
        let order = spec.topological_order();
        prop_assert_eq!(order.len(), spec.len());
        let position = |n: NodeId| order.iter().position(|&m| m == n).expect("every node placed");
        for &(parent, child) in spec.edges() {
            prop_assert!(position(parent) < position(child));
        }
        prop_assert!(spec.parents(spec.latent()).is_empty());
        prop_assert!(spec.children(spec.anchor()).is_empty());
        prop_assert!(spec.parents(spec.anchor()).contains(&spec.latent()));
    }

    #[test]
    fn blanket_reduction_is_the_anchor_parent_set(spec in network()) {
        let mut blanket = spec.markov_blanket_reduction();
        let mut parents = spec.parents(spec.anchor()).to_vec();
        blanket.sort();
        parents.sort();
        prop_assert_eq!(blanket, parents);
    }

    #[test]
    fn marginalizing_commutes_with_projection(
        states in prop::collection::vec(0u32..16, 1..200),
        keep_bits in 1u32..16,
    ) {
        let spec = NetworkSpec::parse(
            r#"{"nodes": [{"name": "V", "role": "latent"}, {"name": "A", "role": "anchor"},
                {"name": "X", "role": "behavior"}, {"name": "Y", "role": "behavior"}, {"name": "Z", "role": "behavior"}],
                "edges": [["V", "A"], ["V", "X"], ["V", "Y"], ["V", "Z"]], "anchor_polarity": "negative", "epsilon": 0}"#,
        ).unwrap();
        let observed = spec.observed();
        let records: Vec<EventRecord> = states
            .iter()
            .enumerate()
            .map(|(i, &s)| EventRecord { id: i.to_string(), behaviors: evidence(&spec, 0b1111, s) })
            .collect();
        let keep: Vec<NodeId> = observed.iter().enumerate().filter(|(i, _)| keep_bits >> i & 1 == 1).map(|(_, &n)| n).collect();
        let marginal = tabulate_joint(records.clone(), &spec, 0.0).unwrap().marginalize(&keep).unwrap();
        let mut projected = CountTable::new(Scope::new(keep.clone()));
        for r in &records {
            projected.add_state(r.behaviors.values_mask());
        }
        let projected = projected.to_table(0.0).unwrap();
        for (m, p) in marginal.probs().iter().zip(projected.probs()) {
            prop_assert!((m - p).abs() <= 1e-15);
        }
    }

    #[test]
    fn estimator_recovers_exact_mixtures(gt in ground_truth(), p_r in 0.0f64..0.45, gap in 0.1f64..0.55) {
        let priors = DatasetPriors::new(p_r, p_r + gap).unwrap();
        let inputs = exact_inputs(&gt, priors);
        let pgv = estimate_parent_given_value(&inputs.randomized, &inputs.algorithmic, &priors, gt.spec()).unwrap();
        let truth = exact_parent_given_value(&gt).unwrap();
        prop_assert!(pgv.diagnostics().is_empty());
        for w in 0..truth.scope().cells() {
            for v in [false, true] {
                prop_assert!((pgv.prob(w, v) - truth.prob(w, v)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn estimator_flags_exactly_the_out_of_range_entries(
        a in prop::collection::vec(0.01f64..1.0, 4),
        b in prop::collection::vec(0.01f64..1.0, 4),
    ) {
        let spec = NetworkSpec::parse(
            r#"{"nodes": [{"name": "V", "role": "latent"}, {"name": "A", "role": "anchor"},
                {"name": "W", "role": "behavior"}, {"name": "X", "role": "behavior"}],
                "edges": [["V", "A"], ["V", "W"], ["W", "A"], ["V", "X"]], "anchor_polarity": "negative", "epsilon": 0}"#,
        ).unwrap();
        let table = |p: &[f64]| {
            let total: f64 = p.iter().sum();
            JointTable::new(spec.observed_scope(), p.iter().flat_map(|x| [x / total / 2.0; 2]).collect(), 0).unwrap()
        };
        let priors = DatasetPriors::default();
        if let Ok(pgv) = estimate_parent_given_value(&table(&a), &table(&b), &priors, &spec) {
            let out_of_range = (0..pgv.scope().cells())
                .flat_map(|w| [pgv.raw(w, false), pgv.raw(w, true)])
                .any(|r| !(-1e-12..=1.0 + 1e-12).contains(&r));
            prop_assert_eq!(out_of_range, !pgv.diagnostics().is_empty());
        }
    }

    #[test]
    fn exact_fit_reproduces_every_identified_entry(gt in ground_truth()) {
        let (_, model) = exact_inputs(&gt, DatasetPriors::default()).fit(&gt).unwrap();
        prop_assert_eq!(model.report().total_clamped, 0);
        let truth = gt.to_fitted_model();
        for (fit, want) in model.cpts().iter().zip(truth.cpts()) {
            prop_assert_eq!(fit.parents(), want.parents());
            for (i, (f, w)) in fit.entries().iter().zip(want.entries()).enumerate() {
                if f.flag != anchorlvm::identification::EntryFlag::Unidentified {
                    prop_assert!((f.raw - w.raw).abs() <= 1e-9, "{} entry {}: {} vs {}", gt.spec().name(fit.node()), i, f.raw, w.raw);
                }
            }
        }
    }

    #[test]
    fn fitting_order_does_not_matter(gt in ground_truth(), order_seed in any::<u64>()) {
        let inputs = exact_inputs(&gt, DatasetPriors::default());
        let pgv = inputs.parent_given_value(&gt).unwrap();
        let options = FitOptions { prior_v: gt.prior_v(), ..FitOptions::default() };
        let canonical = fit_model(gt.spec(), &inputs.observed, &pgv, &options).unwrap();
        let order = random_topological_order(gt.spec(), order_seed);
        let shuffled = fit_model_with_order(gt.spec(), &inputs.observed, &pgv, &options, &order).unwrap();
        prop_assert_eq!(canonical.cpts(), shuffled.cpts());
    }

    #[test]
    fn adjustment_matrices_are_column_stochastic(gt in ground_truth()) {
        let inputs = exact_inputs(&gt, DatasetPriors::default());
        let (_, model) = inputs.fit(&gt).unwrap();
        let spec = gt.spec();
        let cpt_a = model.cpt(spec.anchor());
        for node in spec.observed().into_iter().filter(|&n| n != spec.anchor() && spec.has_latent_parent(n)) {
            for ws in adjustment_workspaces(node, &inputs.observed, cpt_a, spec, DEFAULT_DELTA).unwrap() {
                for v in 0..2 {
                    prop_assert!((ws.r[0][v] + ws.r[1][v] - 1.0).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn inference_matches_the_oracle(gt in ground_truth(), scope_bits in any::<u32>(), value_bits in any::<u32>()) {
        let model = gt.to_fitted_model();
        let oracle = Oracle::new(&gt).unwrap();
        let e = evidence(gt.spec(), scope_bits, value_bits);
        match (posterior_value(&model, &e), oracle.posterior(&e)) {
            (Ok(got), Ok(want)) => prop_assert!((got.raw - want).abs() <= 1e-12),
            (Err(_), Err(_)) => {}
            (got, want) => prop_assert!(false, "disagree on {}: {:?} vs {:?}", gt.spec().display(&e), got, want),
        }
    }

    #[test]
    fn anchor_forces_the_posterior(
        seed in any::<u64>(),
        n in 1usize..=6,
        s in structure(),
        positive in any::<bool>(),
        scope_bits in any::<u32>(),
        value_bits in any::<u32>(),
    ) {
        let polarity = if positive { AnchorPolarity::Positive } else { AnchorPolarity::Negative };
        let gt = random_ground_truth_with(seed, n, s, &GeneratorOptions { polarity, ..GeneratorOptions::default() });
        let (_, model) = exact_inputs(&gt, DatasetPriors::default()).fit(&gt).unwrap();
        let e = evidence(gt.spec(), scope_bits, value_bits).with(gt.spec().anchor(), true);
        if let Ok(r) = posterior_value(&model, &e) {
            if positive {
                prop_assert!(r.raw >= 1.0 - 1e-12, "{}", r.raw);
            } else {
                prop_assert!(r.raw <= 1e-12, "{}", r.raw);
            }
        }
    }

    #[test]
    fn value_blind_factors_leave_the_prior(gt in ground_truth(), scope_bits in any::<u32>(), value_bits in any::<u32>()) {
        let mut flat = gt.clone();
        let latent = gt.spec().latent();
        for node in gt.spec().node_ids().filter(|&n| n != latent) {
            let f = gt.factor(node);
            if let Some(pos) = f.parents.iter().position(|&p| p == latent) {
                let bit = 1usize << (f.parents.len() - 1 - pos);
                flat.set_factor(node, (0..f.p_one.len()).map(|r| f.p_one[r & !bit]).collect());
            }
        }
        let e = evidence(gt.spec(), scope_bits, value_bits);
        if let Ok(r) = posterior_value(&flat.to_fitted_model(), &e) {
            prop_assert!((r.raw - gt.prior_v()).abs() <= 1e-12);
        }
    }

    #[test]
    fn report_is_a_function_of_the_model(gt in ground_truth()) {
        let model = gt.to_fitted_model();
        let reparsed = anchorlvm::identification::FittedModel::parse(&model.to_json()).unwrap();
        let a = internal_structure_report(&model, &[]);
        let b = internal_structure_report(&reparsed, &[]);
        prop_assert_eq!(a.to_json(), b.to_json());
        let raws: Vec<f64> = a.rows.iter().filter_map(|r| r.raw).collect();
        prop_assert!(raws.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn parent_given_value_rejects_non_probabilities() {
    let scope = Scope::new(vec![]);
    assert!(ParentGivenValueTable::from_conditionals(scope.clone(), vec![1.2], vec![1.0]).is_err());
    assert!(ParentGivenValueTable::from_conditionals(scope, vec![1.0], vec![1.0]).is_ok());
}
