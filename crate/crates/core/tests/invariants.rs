use std::sync::OnceLock;

use lattice_design_core::energy::{boltzmann_probability, contact_energy, scoring_g};
use lattice_design_core::fold_oracle::FoldEngine;
use lattice_design_core::lattice::{average_contact_map, enumerate_compact_conformations, BackbiteSampler};
use lattice_design_core::metrics::roc;
use lattice_design_core::qubo::{decode, encode, encode_assignment, qubo_energy};
use lattice_design_core::refine::{
    build_constraints, contact_type_vector, perceptron_refine, EpsilonVector, FoldedSequence,
    LinearConstraint,
};
use lattice_design_core::solvers::{
    qubo_sa, random_sequence, sequence_sa, AnnealSchedule, QuboAnnealer, SwapChain, SwapObjective,
};
use lattice_design_core::{
    AverageContactMap, Composition, Conformation, ContactMap, DeltaContactMap, DesignScore,
    EnergyMatrix, OracleConfig, QuboProblem, QuboWeights, Sequence, SequenceSpace,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Lattice {
    maps: Vec<ContactMap>,
    avg: AverageContactMap,
}

fn lattice(side: usize) -> &'static Lattice {
    static L3: OnceLock<Lattice> = OnceLock::new();
    static L4: OnceLock<Lattice> = OnceLock::new();
    let cell = if side == 3 { &L3 } else { &L4 };
    cell.get_or_init(|| {
        let maps: Vec<ContactMap> = enumerate_compact_conformations(side, false)
            .unwrap()
            .iter()
            .map(|c| c.contact_map())
            .collect();
        let avg = average_contact_map(&maps).unwrap();
        Lattice { maps, avg }
    })
}

fn matrix(d: usize) -> impl Strategy<Value = EnergyMatrix> {
    prop::collection::vec(-2.0f64..2.0, d * d).prop_map(move |v| EnergyMatrix::symmetrized(d, v).unwrap().0)
}

fn shuffled(comp: Vec<u32>) -> impl Strategy<Value = Sequence> {
    let c = Composition::new(comp).unwrap();
    any::<u64>().prop_map(move |seed| random_sequence(&c, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// `H` evaluated term by term from the one-hot bits, with the implied first
/// type at every site carrying `1 - Σ bits`.
fn qubo_by_definition(a: &[bool], dc: &DeltaContactMap, e: &EnergyMatrix, comp: &Composition, w: QuboWeights) -> f64 {
    let n = dc.n();
    let d = e.size();
    let x = |i: usize, m: usize| a[i * (d - 1) + m - 1] as u8 as f64;
    let y = |i: usize, m: usize| {
        if m == 0 {
            1.0 - (1..d).map(|k| x(i, k)).sum::<f64>()
        } else {
            x(i, m)
        }
    };
    let mut h = 0.0;
    for m in 1..d {
        let c: f64 = (0..n).map(|i| x(i, m)).sum();
        h += w.a1 * (c - comp.counts()[m] as f64).powi(2);
    }
    for i in 0..n {
        for m in 1..d {
            for k in 1..d {
                if m != k {
                    h += w.a2 * x(i, m) * x(i, k);
                }
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            for m in 0..d {
                for k in 0..d {
                    h += w.b * dc.get(i, j) * y(i, m) * y(j, k) * e.get(m, k);
                }
            }
        }
    }
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fold_probabilities_sum_to_one(e in matrix(3), s in shuffled(vec![3, 3, 3]), beta in 0.0f64..10.0) {
        let l = lattice(3);
        let energies: Vec<f64> = l.maps.iter().map(|c| contact_energy(c, &s, &e).unwrap()).collect();
        let total: f64 = (0..energies.len()).map(|k| boltzmann_probability(&energies, k, beta)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relabeling_types_preserves_energies(e in matrix(3), s in shuffled(vec![5, 5, 6]), perm in Just(vec![0usize, 1, 2]).prop_shuffle()) {
        let l = lattice(4);
        let moved = Sequence::new(s.residues().iter().map(|&t| perm[t as usize] as u8).collect());
        let e2 = e.relabeled(&perm);
        for c in l.maps.iter().take(10) {
            prop_assert!((contact_energy(c, &s, &e).unwrap() - contact_energy(c, &moved, &e2).unwrap()).abs() < 1e-12);
        }
        let dc = DeltaContactMap::new(&l.maps[0], &l.avg).unwrap();
        prop_assert!((scoring_g(&dc, &s, &e).unwrap() - scoring_g(&dc, &moved, &e2).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn score_splits_into_native_and_mean_field(e in matrix(3), s in shuffled(vec![5, 5, 6]), target in 0usize..38) {
        let l = lattice(4);
        let dc = DeltaContactMap::new(&l.maps[target], &l.avg).unwrap();
        let r = s.residues();
        let mut mean = 0.0;
        for i in 0..16 {
            for j in (i + 1)..16 {
                mean += l.avg.get(i, j) * e.get(r[i] as usize, r[j] as usize);
            }
        }
        let native = contact_energy(&l.maps[target], &s, &e).unwrap();
        let g = scoring_g(&dc, &s, &e).unwrap();
        prop_assert!((g - (native - mean)).abs() < 1e-10);
        prop_assert!((DesignScore::new(&dc, &e).value(r) - g).abs() < 1e-10);
        // the same energy through the contact-type feature vector
        let n = contact_type_vector(&l.maps[target], &s, 3).unwrap();
        prop_assert!((EpsilonVector::from_matrix(&e).dot(&n.as_f64()) - native).abs() < 1e-10);
    }

    #[test]
    fn qubo_matches_its_definition(
        e in matrix(3),
        bits in prop::collection::vec(any::<bool>(), 18),
        target in 0usize..3,
        a1 in 0.1f64..5.0, a2 in 0.1f64..5.0, b in 0.1f64..2.0,
    ) {
        let l = lattice(3);
        let dc = DeltaContactMap::new(&l.maps[target], &l.avg).unwrap();
        let comp = Composition::new(vec![3, 3, 3]).unwrap();
        let w = QuboWeights::new(a1, a2, b).unwrap();
        let p = encode(&dc, &e, &comp, w).unwrap();
        let h = qubo_energy(&p, &bits).unwrap();
        prop_assert!((h - qubo_by_definition(&bits, &dc, &e, &comp, w)).abs() < 1e-9);
    }

    #[test]
    fn valid_assignments_score_b_times_g(e in matrix(3), s in shuffled(vec![3, 3, 3]), target in 0usize..3, b in 0.1f64..3.0) {
        let l = lattice(3);
        let dc = DeltaContactMap::new(&l.maps[target], &l.avg).unwrap();
        let comp = Composition::new(vec![3, 3, 3]).unwrap();
        let p = encode(&dc, &e, &comp, QuboWeights::new(2.1, 2.1, b).unwrap()).unwrap();
        let a = encode_assignment(&s, 3).unwrap();
        prop_assert!((qubo_energy(&p, &a).unwrap() - b * scoring_g(&dc, &s, &e).unwrap()).abs() < 1e-9);
        let back = decode(&a, &comp).unwrap();
        prop_assert_eq!(back.valid_sequence(), Some(&s));
    }

    #[test]
    fn qubo_text_round_trips(e in matrix(4), target in 0usize..3) {
        let l = lattice(3);
        let dc = DeltaContactMap::new(&l.maps[target], &l.avg).unwrap();
        let p = encode(&dc, &e, &Composition::new(vec![2, 2, 2, 3]).unwrap(), QuboWeights::default()).unwrap();
        let text = p.to_text();
        let back = QuboProblem::from_text(&text).unwrap();
        prop_assert_eq!(back.to_text(), text);
    }

    #[test]
    fn sequence_text_and_rank_round_trip(s in shuffled(vec![4, 0, 7, 5])) {
        let space = SequenceSpace::new(Composition::new(vec![4, 0, 7, 5]).unwrap()).unwrap();
        let r = space.rank(&s).unwrap();
        prop_assert_eq!(space.unrank(r), Some(s.clone()));
        prop_assert_eq!(s.to_string().parse::<Sequence>().unwrap(), s);
    }

    #[test]
    fn one_update_raises_the_margin_by_eta_norm_squared(
        eps in prop::collection::vec(-1.0f64..1.0, 6),
        x in prop::collection::vec(-4i32..=4, 6),
        c in -2.0f64..0.0,
        eta in 0.01f64..1.0,
    ) {
        let x: Vec<f64> = x.into_iter().map(f64::from).collect();
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        prop_assume!(norm2 > 0.0);
        let eps = EpsilonVector::new(3, eps).unwrap();
        let con = LinearConstraint { x, c };
        let before = con.margin(&eps);
        prop_assume!(before < 0.0);
        let out = perceptron_refine(&eps, std::slice::from_ref(&con), eta, 1).unwrap();
        prop_assert_eq!(out.updates, 1);
        prop_assert!((con.margin(&out.epsilon) - (before + eta * norm2)).abs() < 1e-9);
    }

    #[test]
    fn perceptron_solves_separable_systems(
        w in prop::collection::vec(-1.0f64..1.0, 6),
        xs in prop::collection::vec(prop::collection::vec(-3i32..=3, 6), 1..40),
    ) {
        // label every x by a hidden separator with a clear margin
        let hidden = EpsilonVector::new(3, w).unwrap();
        let cons: Vec<LinearConstraint> = xs
            .into_iter()
            .map(|x| x.into_iter().map(f64::from).collect::<Vec<_>>())
            .filter_map(|x| {
                let m = hidden.dot(&x);
                (m.abs() > 0.05).then(|| LinearConstraint { x: x.iter().map(|v| v * m.signum()).collect(), c: 0.0 })
            })
            .collect();
        let start = EpsilonVector::new(3, vec![0.0; 6]).unwrap();
        let out = perceptron_refine(&start, &cons, 0.1, 200_000).unwrap();
        prop_assert!(out.satisfied);
        prop_assert!(cons.iter().all(|c| c.is_satisfied(&out.epsilon)));
    }

    #[test]
    fn roc_depends_only_on_the_ranking(scores in prop::collection::vec(-5.0f64..5.0, 2..200), flags in prop::collection::vec(any::<bool>(), 200)) {
        prop_assume!(flags[..scores.len()].iter().any(|&f| f));
        let order = |key: &dyn Fn(f64) -> f64| {
            let mut idx: Vec<usize> = (0..scores.len()).collect();
            idx.sort_by(|&a, &b| key(scores[a]).total_cmp(&key(scores[b])).then(a.cmp(&b)));
            roc(idx.into_iter().map(|k| flags[k])).unwrap().q
        };
        let q = order(&|v| v);
        prop_assert!((q - order(&|v| v.exp() + 3.0 * v)).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&q));
    }

    #[test]
    fn constraints_ignore_history_order(e in matrix(3), seqs in prop::collection::vec(shuffled(vec![3, 3, 3]), 1..8), target in 0usize..3) {
        let l = lattice(3);
        let engine = FoldEngine::new(&l.maps).unwrap();
        let cfg = OracleConfig::new(3.0, 0.8).unwrap();
        let folds: Vec<_> = seqs.iter().map(|s| engine.fold(s, &e, cfg).unwrap()).collect();
        let mut hist: Vec<FoldedSequence> = seqs.iter().zip(&folds).map(|(sequence, fold)| FoldedSequence { sequence, fold }).collect();
        let a = build_constraints(&engine, &hist, target, 3, cfg, 10).unwrap();
        hist.reverse();
        let b = build_constraints(&engine, &hist, target, 3, cfg, 10).unwrap();
        prop_assert_eq!(&a, &b);
        // zero-offset constraints keep their status under positive rescaling
        let eps = EpsilonVector::from_matrix(&e);
        let scaled = EpsilonVector::from_matrix(&e.scaled(7.5));
        for c in a.iter().filter(|c| c.c == 0.0) {
            prop_assert_eq!(c.margin(&eps) >= 0.0, c.margin(&scaled) >= 0.0);
        }
    }

    #[test]
    fn annealing_is_deterministic(e in matrix(3), seed in any::<u64>(), target in 0usize..38) {
        let l = lattice(4);
        let dc = DeltaContactMap::new(&l.maps[target], &l.avg).unwrap();
        let score = DesignScore::new(&dc, &e);
        let comp = Composition::new(vec![5, 5, 6]).unwrap();
        let init = random_sequence(&comp, &mut ChaCha8Rng::seed_from_u64(seed));
        let sched = AnnealSchedule::new(10.0, 1e-3, 2000, seed).unwrap();
        let a = sequence_sa(&score, &init, &sched, true);
        let b = sequence_sa(&score, &init, &sched, true);
        prop_assert_eq!(&a, &b);
        prop_assert!(comp.matches(&a.best));
        prop_assert!(a.best_value <= score.value(init.residues()) + 1e-12);
    }

    #[test]
    fn backbite_keeps_compact_chains(seed in any::<u64>(), side in 5usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sampler = BackbiteSampler::new(Conformation::serpentine(side).unwrap());
        for c in sampler.sample(5, 50, &mut rng) {
            let again: Conformation = c.to_string().parse().unwrap();
            prop_assert_eq!(&again, &c);
            prop_assert_eq!(c.contact_map().contact_count(), (side - 1) * (side - 1));
        }
    }
}

/// Six-site toy objective with arbitrary values per state.
struct Table(Vec<(Vec<u8>, f64)>);

impl SwapObjective for Table {
    fn value(&self, s: &[u8]) -> f64 {
        self.0.iter().find(|(k, _)| k == s).unwrap().1
    }
}

#[test]
fn swap_chain_samples_the_boltzmann_distribution() {
    let space = SequenceSpace::new(Composition::new(vec![3, 3]).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let states: Vec<(Vec<u8>, f64)> = space
        .iter()
        .map(|s| (s.residues().to_vec(), rand::Rng::gen_range(&mut rng, 0.0..2.0)))
        .collect();
    let table = Table(states.clone());
    let t = 0.7;
    let z: f64 = states.iter().map(|(_, v)| (-v / t).exp()).sum();
    let mut chain = SwapChain::new(&table, &space.unrank(0).unwrap(), 5);
    let mut hits = vec![0u64; states.len()];
    let samples = 200_000;
    for _ in 0..samples {
        for _ in 0..5 {
            chain.step(t);
        }
        let k = states.iter().position(|(s, _)| s == chain.state()).unwrap();
        hits[k] += 1;
    }
    let chi2: f64 = states
        .iter()
        .zip(&hits)
        .map(|((_, v), &h)| {
            let want = samples as f64 * (-v / t).exp() / z;
            (h as f64 - want).powi(2) / want
        })
        .sum();
    // 19 degrees of freedom; thinned samples are still mildly correlated
    assert!(chi2 < 80.0, "chi2 = {chi2}");
}

#[test]
fn qubo_annealer_tracks_its_energy() {
    let l = lattice(4);
    let e = lattice_design_core::energy::ground_truth::eps3();
    let dc = DeltaContactMap::new(&l.maps[5], &l.avg).unwrap();
    let comp = Composition::new(vec![5, 5, 6]).unwrap();
    let p = encode(&dc, &e, &comp, QuboWeights::default()).unwrap();
    let init = encode_assignment(&comp.first_sequence(), 3).unwrap();
    let mut ann = QuboAnnealer::new(&p, &comp, &init, 3).unwrap();
    for k in 0..200_000u64 {
        ann.step(2.0 * (1.0 - k as f64 / 200_000.0) + 0.05);
        if k % 1000 == 999 {
            let exact = qubo_energy(&p, ann.bits()).unwrap();
            assert!((ann.energy() - exact).abs() <= 1e-7, "drift {} at step {k}", ann.energy() - exact);
            assert_eq!(ann.is_valid(), decode(ann.bits(), &comp).unwrap().valid_sequence().is_some());
        }
    }
}

#[test]
fn heavy_penalties_end_on_valid_assignments() {
    let l = lattice(3);
    let e = lattice_design_core::energy::ground_truth::eps3();
    let comp = Composition::new(vec![3, 3, 3]).unwrap();
    for target in 0..3 {
        let dc = DeltaContactMap::new(&l.maps[target], &l.avg).unwrap();
        let p = encode(&dc, &e, &comp, QuboWeights::new(50.0, 50.0, 1.0).unwrap()).unwrap();
        let run = qubo_sa(&p, &comp, &AnnealSchedule::new(1.0, 0.05, 20_000, 0).unwrap(), 20).unwrap();
        let valid = run
            .restarts
            .iter()
            .filter(|r| decode(&r.best_assignment, &comp).unwrap().valid_sequence().is_some())
            .count();
        assert!(valid >= 18, "{valid}/20 valid for target {target}");
        assert!(run.report.is_empty());
    }
}
