use proptest::prelude::*;

use hubsim::config::{parse_config, ConfigTree, SimConfig};
use hubsim::error::Result;
use hubsim::fabric::{Device, FabricConfig, LinkModel};
use hubsim::nvme::{DriverKind, NvmeConfig, NvmeSystem, Workload};
use hubsim::report::percentile;
use hubsim::scenarios::{self, ScenarioId};
use hubsim::sim::{Dist, Engine, Event, EventKind, Handler, RngStream, SimTime};
use hubsim::switch::{
    validate_program, AggregationSession, AluOp, Rejection, SwitchLimits, SwitchProgram,
};
use hubsim::transport::{assemble, split, Message, Reassembler};

fn op_set() -> impl Strategy<Value = std::collections::BTreeSet<AluOp>> {
    proptest::collection::btree_set(
        proptest::sample::select(AluOp::ALL.to_vec()),
        0..=AluOp::ALL.len(),
    )
}

#[derive(Debug, Clone, Copy)]
struct Tick;
impl EventKind for Tick {
    fn kind(&self) -> &'static str {
        "tick"
    }
}

struct Recorder {
    seen: Vec<(SimTime, u64)>,
    /// Delays scheduled from inside the handler, consumed in order.
    follow_ups: Vec<u64>,
    issued: Vec<(SimTime, u64)>,
}

impl Handler<Tick> for Recorder {
    fn handle(&mut self, e: &mut Engine<Tick>, ev: Event<Tick>) -> Result<()> {
        self.seen.push((ev.fire_time, ev.seq));
        if let Some(d) = self.follow_ups.pop() {
            let id = e.schedule(SimTime::ns(d), ev.target, Tick)?;
            self.issued.push((e.now() + SimTime::ns(d), id.0));
        }
        Ok(())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_then_assemble_in_any_order(len in 1u64..200_000, mtu in 1u64..9_000, seed in any::<u64>()) {
        let m = Message::synthetic(7, seed, len).unwrap();
        let mut ps = split(&m, mtu).unwrap();
        prop_assert_eq!(ps.len() as u64, len.div_ceil(mtu));
        prop_assert_eq!(ps.iter().map(|p| p.payload_bytes).sum::<u64>(), len);
        // deterministic shuffle from the seed
        let mut rng = RngStream::new(seed, "shuffle");
        for i in (1..ps.len()).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            ps.swap(i, j);
        }
        prop_assert_eq!(assemble(&ps), Some(m));
    }

    #[test]
    fn duplicates_before_completion_are_ignored(len in 1u64..50_000, mtu in 1u64..4_096, dup in any::<prop::sample::Index>()) {
        let m = Message::synthetic(1, 2, len).unwrap();
        let ps = split(&m, mtu).unwrap();
        // a copy of some packet other than the last one, sent twice in a row
        let i = dup.index(ps.len().max(2) - 1).min(ps.len() - 1);
        let mut r = Reassembler::new();
        let mut out = None;
        for (k, p) in ps.iter().enumerate() {
            let copies = if k == i && k + 1 < ps.len() { 2 } else { 1 };
            for _ in 0..copies {
                if let Some(x) = r.push(*p) {
                    prop_assert!(out.is_none());
                    out = Some(x);
                }
            }
        }
        prop_assert_eq!(out, Some(m));
        prop_assert_eq!(r.pending(), 0);
    }

    #[test]
    fn aggregation_matches_wrapped_sum(
        vecs in (1usize..12, 1usize..24).prop_flat_map(|(w, s)| {
            proptest::collection::vec(proptest::collection::vec(any::<u32>(), s), w)
        }),
        order_seed in any::<u64>(),
    ) {
        let workers = vecs.len();
        let mut s = AggregationSession::new(0, workers, vecs[0].len()).unwrap();
        let mut order: Vec<usize> = (0..workers).collect();
        let mut rng = RngStream::new(order_seed, "order");
        for i in (1..order.len()).rev() {
            order.swap(i, (rng.next_u64() % (i as u64 + 1)) as usize);
        }
        let mut want = vec![0u32; vecs[0].len()];
        for v in &vecs {
            for (w, x) in want.iter_mut().zip(v) {
                *w = w.wrapping_add(*x);
            }
        }
        let mut got = None;
        for &w in &order {
            got = s.contribute(w, &vecs[w]).unwrap();
        }
        prop_assert_eq!(got, Some(want));
        prop_assert_eq!(s.round(), 1);
    }

    #[test]
    fn dispatch_follows_time_seq_order(
        initial in proptest::collection::vec(0u64..500, 1..200),
        follow_ups in proptest::collection::vec(0u64..50, 0..200),
    ) {
        let mut e = Engine::new();
        let c = e.register("c");
        let mut h = Recorder { seen: Vec::new(), follow_ups, issued: Vec::new() };
        for &t in &initial {
            let id = e.schedule_at(SimTime::ns(t), c, Tick).unwrap();
            h.issued.push((SimTime::ns(t), id.0));
        }
        e.run(&mut h, SimTime::MAX).unwrap();
        let mut oracle = h.issued.clone();
        oracle.sort();
        prop_assert_eq!(h.seen, oracle);
    }

    #[test]
    fn admission_names_a_real_violation(
        stages in 0u32..30, num_stages in 1u32..20,
        state in 0u64..(1 << 26), sram in 0u64..(1 << 26),
        used in op_set(), allowed in op_set(),
    ) {
        let p = SwitchProgram { stages_used: stages, ops_used: used.clone(), state_bytes: state };
        let l = SwitchLimits { num_stages, sram_bytes: sram, allowed_ops: allowed.clone() };
        let ok = stages <= num_stages && used.is_subset(&allowed) && state <= sram;
        match validate_program(&p, &l) {
            Ok(()) => prop_assert!(ok),
            Err(Rejection::Stages { used: u, available: a }) => prop_assert!(u > a && u == stages),
            Err(Rejection::UnsupportedOp(op)) => prop_assert!(used.contains(&op) && !allowed.contains(&op)),
            Err(Rejection::Sram { used: u, available: a }) => prop_assert!(u > a && u == state),
        }
    }

    #[test]
    fn percentile_matches_sort_oracle(xs in proptest::collection::vec(0u64..1_000_000, 1..500)) {
        let mut sorted = xs.clone();
        sorted.sort_unstable();
        for p in [1.0, 50.0, 95.0, 99.0, 100.0] {
            let rank = ((p / 100.0 * xs.len() as f64).ceil() as usize).max(1);
            prop_assert_eq!(percentile(&xs, p).unwrap(), sorted[rank - 1]);
        }
    }

    #[test]
    fn dist_samples_stay_in_bounds(lo in 0u64..10_000, span in 0u64..10_000, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, "dist");
        let d = Dist::uniform(lo, lo + span).unwrap();
        let mean = (lo + span / 2).max(1) as f64;
        let ln = Dist::lognormal_with_mean(mean, 0.3, 4 * (lo + span) + 1).unwrap();
        for dist in [d, ln] {
            let (a, b) = dist.bounds();
            for _ in 0..50 {
                let s = dist.sample(&mut rng).as_ns();
                prop_assert!(a <= s && s <= b);
            }
        }
    }

    #[test]
    fn link_never_beats_nominal(base in 0u64..10_000, bw in 1u64..100_000, bytes in 0u64..1 << 20, seed in any::<u64>()) {
        let l = LinkModel::new(base, bw).unwrap().with_jitter(Dist::uniform(0, 100).unwrap());
        let mut rng = RngStream::new(seed, "link");
        let t = l.traversal_time(bytes, &mut rng);
        prop_assert!(t >= l.nominal_time(bytes));
        prop_assert!(t <= l.nominal_time(bytes) + SimTime::ns(100));
    }

    #[test]
    fn config_round_trips(depth in 2i64..65_536, loss in 0.0f64..0.5, cores in proptest::collection::vec(1i64..48, 1..6), reps in 2i64..5_000) {
        let text = format!(
            "[nvme]\nqueue_depth = {depth}\n[transport]\nloss = {loss}\n[ssd_cores]\ncores = {cores:?}\n[scenario]\nrepetitions = {reps}\nwarmup = 1\n"
        );
        let t = parse_config(&text).unwrap();
        prop_assert_eq!(t.int("nvme.queue_depth"), depth);
        let again = parse_config(&t.serialize()).unwrap();
        prop_assert_eq!(&again, &t);
        prop_assert!(SimConfig::from_tree(&t).is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn nvme_commands_complete_once_after_doorbell(
        fpga in any::<bool>(),
        ssds in 1usize..4,
        depth in 2u32..32,
        outstanding in 1usize..64,
        lo in 1u32..8, extra in 0u32..8,
        read_fraction in 0.0f64..=1.0,
        cores in 1usize..4,
        seed in any::<u64>(),
    ) {
        let driver = if fpga { DriverKind::Fpga } else { DriverKind::Cpu };
        let cfg = NvmeConfig { num_ssds: ssds, queue_depth: depth, ..NvmeConfig::default() };
        let w = Workload {
            read_fraction,
            nblocks: (lo, lo + extra),
            outstanding_per_ssd: outstanding,
            total_commands: Some(1_000),
            fpga_buffer: Device::Fpga,
        };
        let mut e = Engine::new();
        let mut sys = NvmeSystem::new(&mut e, cfg, FabricConfig::default(), driver, cores, w, seed).unwrap();
        sys.start(&mut e, None).unwrap();
        sys.run(&mut e, SimTime::ns(10_000_000_000)).unwrap();
        prop_assert_eq!(sys.records().len(), 1_000);
        prop_assert_eq!(sys.retired_total(), 1_000);
        let mut bytes = 0;
        for r in sys.records() {
            let (d, c) = (r.doorbell.unwrap(), r.completed.unwrap());
            prop_assert!(r.submitted.unwrap() <= d && d < c && c <= r.retired.unwrap());
            bytes += r.bytes;
        }
        let (occ, depth) = sys.max_sq_occupancy();
        prop_assert!(occ < depth);
        prop_assert_eq!(sys.fabric().bytes_moved(), bytes);
    }

    #[test]
    fn warmup_leaves_reps_minus_warmup_samples(reps in 2usize..120, frac in 0.0f64..1.0) {
        let warmup = ((reps - 1) as f64 * frac) as usize;
        let mut t = ConfigTree::defaults();
        t.set("scenario.repetitions", &reps.to_string()).unwrap();
        t.set("scenario.warmup", &warmup.to_string()).unwrap();
        let cfg = SimConfig::from_tree(&t).unwrap();
        for id in [ScenarioId::Inaggr, ScenarioId::GpuOffload] {
            let out = scenarios::run(id, &cfg, false).unwrap();
            for (label, s) in &out.metrics.latencies {
                prop_assert_eq!(s.len(), reps - warmup, "{} {}", id, label);
            }
        }
    }

    #[test]
    fn modes_agree_on_functional_outputs(seed in any::<u64>()) {
        let mut t = ConfigTree::defaults();
        t.set("scenario.repetitions", "40").unwrap();
        t.set("scenario.warmup", "4").unwrap();
        t.set("scenario.seed", &(seed >> 1).to_string()).unwrap();
        let cfg = SimConfig::from_tree(&t).unwrap();
        let a = scenarios::run(ScenarioId::Inaggr, &cfg, false).unwrap();
        prop_assert_eq!(a.metrics.counter("mismatch/fpga"), 0);
        prop_assert_eq!(a.metrics.counter("mismatch/cpu"), 0);
        prop_assert_eq!(a.metrics.counter("rounds/fpga"), a.metrics.counter("rounds/cpu"));
        let g = scenarios::run(ScenarioId::GpuOffload, &cfg, false).unwrap();
        prop_assert_eq!(
            g.metrics.counter("bytes/net/with-offload"),
            g.metrics.counter("bytes/net/without-offload")
        );
        let i = scenarios::run(ScenarioId::Interference, &cfg, false).unwrap();
        prop_assert_eq!(i.metrics.counter("bytes/on_gpu"), i.metrics.counter("bytes/offloaded"));
    }
}
