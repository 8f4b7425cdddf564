//! Acceptance gate: one test and one printed PASS/FAIL line per criterion.
//!
//! Absolute timings of the original hardware experiments are not
//! reproducible on a simulated device at desk scale, so the performance
//! criteria check orderings and ratio bands of simulated PCM time instead
//! (criterion 10 records this substitution).

mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pamsim::bbtree::BbTree;
use pamsim::bench::{run_convergence, run_dynamic, ExperimentConfig, IndexKind, MethodKind};
use pamsim::device::{DeviceConfig, SimDevice};
use pamsim::entry::Entry;
use pamsim::index::IndexConfig;
use pamsim::merging::InvalidationStrategy;
use pamsim::pam::{Pam, PamConfig};
use pamsim::workload::{Op, PatternKind};

fn criterion(n: u32, desc: &str, ok: bool, detail: &str) {
    println!(
        "ACCEPTANCE {n:02} {}: {desc} [{detail}]",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {n} failed: {desc} [{detail}]");
}

#[test]
fn criterion_01_oracle_equivalence() {
    let mut checked = 0usize;
    for seed in 0..100u64 {
        let ops = gen_trace(seed, 1_000);
        for name in METHOD_NAMES {
            let mut dev = device();
            let data = dataset();
            let mut method = build_method(name, &mut dev, &data);
            let mut oracle = Oracle::new(&data);
            checked += replay_checked(name, &mut dev, method.as_mut(), &mut oracle, &ops);
        }
    }
    criterion(
        1,
        "all methods match the sorted-multiset oracle on 100 randomized traces",
        checked > 100_000,
        &format!("{checked} queries checked, 0 mismatches"),
    );
}

fn letter(c: char) -> u64 {
    c as u64 - 'a' as u64 + 1
}

fn letters_dataset() -> Vec<Entry> {
    "bszei ackqu xnpld frtmz"
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| Entry::new(letter(c), letter(c) * 100))
        .collect()
}

fn letters_pam() -> (SimDevice, Pam<BbTree>) {
    let mut dev = SimDevice::new(DeviceConfig::with_capacity(1 << 22));
    let mut cfg = PamConfig::new(IndexConfig::bb());
    cfg.partition_capacity = 5;
    let pam = Pam::create(&mut dev, cfg, &letters_dataset());
    (dev, pam)
}

#[test]
fn criterion_02_walkthrough() {
    let (mut dev, mut pam) = letters_pam();
    let keys = |es: &[Entry]| es.iter().map(|e| e.key).collect::<Vec<_>>();
    let want_fm: Vec<u64> = "fiklm".chars().map(letter).collect();
    let got_fm = keys(&pam.search(&mut dev, letter('f'), letter('m')));
    let p4_before = pam.partition_live(3);
    let want_ah: Vec<u64> = "abcdef".chars().map(letter).collect();
    let got_ah = keys(&pam.search(&mut dev, letter('a'), letter('h')));
    let p4_untouched = pam.partition_live(3) == p4_before;
    let journal_ok = pam.journal_ranges() == vec![(letter('a'), letter('m'))];
    pam.delete(&mut dev, letter('r'));
    pam.delete(&mut dev, letter('t'));
    let dj_ok = pam.deletion_journal() == vec![letter('r'), letter('t')];
    criterion(
        2,
        "20-key walkthrough: result sets, journals, untouched P4",
        got_fm == want_fm && got_ah == want_ah && p4_untouched && journal_ok && dj_ok,
        &format!("f-m={got_fm:?} a-h={got_ah:?} journal={:?}", pam.journal_ranges()),
    );
}

#[test]
fn criterion_03_crash_recovery() {
    // Rebuilt insertion journal after the two walkthrough queries.
    let (mut dev, mut pam) = letters_pam();
    pam.search(&mut dev, letter('f'), letter('m'));
    pam.search(&mut dev, letter('a'), letter('h'));
    let sb = pam.superblock();
    drop(pam);
    let mut cfg = PamConfig::new(IndexConfig::bb());
    cfg.partition_capacity = 5;
    let pam2: Pam<BbTree> = Pam::recover(&mut dev, cfg, sb);
    let journal_ok = pam2.journal_ranges()
        == vec![
            (letter('a'), letter('f')),
            (letter('i'), letter('i')),
            (letter('k'), letter('m')),
        ];

    // 50 random crash points on a mixed trace.
    let make_cfg = || {
        let mut cfg = PamConfig::new(IndexConfig::bb());
        cfg.partition_capacity = PARTITION_CAPACITY;
        cfg.index.buffer_threshold = 64;
        cfg
    };
    let apply = |pam: &mut Pam<BbTree>, dev: &mut SimDevice, op: &Op| match *op {
        Op::Insert(e) => pam.insert(dev, e),
        Op::Delete(k) => pam.delete(dev, k),
        Op::Range(lo, hi) => {
            pam.search(dev, lo, hi);
        }
        Op::Point(k) => {
            pam.point_search(dev, k);
        }
    };
    let ops = gen_trace(0xacce_55, 800);
    let data = dataset();
    let mut dev = device();
    let mut pam = Pam::<BbTree>::create(&mut dev, make_cfg(), &data);
    for op in &ops {
        apply(&mut pam, &mut dev, op);
    }
    let want = pam.live_entries(&mut dev);
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut diverged = 0;
    for _ in 0..50 {
        let crash_at = rng.gen_range(1..ops.len());
        let mut dev = device();
        let mut pam = Pam::<BbTree>::create(&mut dev, make_cfg(), &data);
        for op in &ops[..crash_at] {
            apply(&mut pam, &mut dev, op);
        }
        let sb = pam.superblock();
        drop(pam);
        let mut pam = Pam::<BbTree>::recover(&mut dev, make_cfg(), sb);
        for op in &ops[crash_at..] {
            apply(&mut pam, &mut dev, op);
        }
        if pam.live_entries(&mut dev) != want {
            diverged += 1;
        }
    }
    criterion(
        3,
        "journal rebuild matches the walkthrough; 50 random crash points replay identically",
        journal_ok && diverged == 0,
        &format!("journal_ok={journal_ok} diverged={diverged}/50"),
    );
}

#[test]
fn criterion_04_invalidation_ordering() {
    let run = |s: InvalidationStrategy| {
        let cfg = ExperimentConfig {
            method: MethodKind::Am,
            invalidation: s,
            rows: 1_000_000,
            ..ExperimentConfig::default()
        };
        run_convergence(&cfg).invalidation_ns
    };
    let journal = run(InvalidationStrategy::Journal);
    let bitmap = run(InvalidationStrategy::Bitmap);
    let flag = run(InvalidationStrategy::Flag);
    criterion(
        4,
        "invalidation sim time: Journal < Bitmap < Flag, Flag >= 4x Journal",
        journal < bitmap && bitmap < flag && flag >= 4 * journal,
        &format!("journal={journal} bitmap={bitmap} flag={flag}"),
    );
}

#[test]
fn criterion_05_eam_beats_am() {
    let mut wins = 0;
    let mut detail = String::new();
    for pattern in [PatternKind::Random, PatternKind::Sequential, PatternKind::NewKeys] {
        let run = |method: MethodKind| {
            let cfg = ExperimentConfig {
                method,
                pattern,
                rows: 1_000_000,
                ..ExperimentConfig::default()
            };
            run_convergence(&cfg).sim_time_ns
        };
        let am = run(MethodKind::Am);
        let eam = run(MethodKind::Eam);
        if (eam as f64) <= 0.6 * am as f64 {
            wins += 1;
        }
        detail.push_str(&format!("{pattern:?}: eam/am={:.2} ", eam as f64 / am as f64));
    }
    criterion(
        5,
        "eAM <= 0.6x AM sim time in at least 2 of 3 patterns",
        wins >= 2,
        detail.trim(),
    );
}

#[test]
fn criterion_06_pam_beats_eam_on_heavy_modification() {
    let mut ok = true;
    let mut detail = String::new();
    for wl in ["C", "D"] {
        let run = |method: MethodKind| {
            let cfg = ExperimentConfig {
                method,
                index: IndexKind::Bb,
                rows: 100_000,
                scale: 100,
                workload: Some(wl.into()),
                ..ExperimentConfig::default()
            };
            run_dynamic(&cfg).unwrap().sim_time_ns
        };
        let pam = run(MethodKind::Pam);
        let eam = run(MethodKind::Eam);
        ok &= (pam as f64) <= 0.9 * eam as f64;
        detail.push_str(&format!("{wl}: pam/eam={:.2} ", pam as f64 / eam as f64));
    }
    criterion(
        6,
        "PAM+BB <= 0.9x eAM sim time on workloads C and D (scale 100)",
        ok,
        detail.trim(),
    );
}

#[test]
fn criterion_07_index_comparison_trends() {
    let run = |wl: &str, index: IndexKind| {
        let cfg = ExperimentConfig {
            index,
            rows: 30_000,
            scale: 10,
            workload: Some(wl.into()),
            ..ExperimentConfig::default()
        };
        run_dynamic(&cfg).unwrap().sim_time_ns
    };
    let mut ok = true;
    let mut detail = String::new();
    for wl in ["write", "read", "balanced"] {
        let bb = run(wl, IndexKind::Bb);
        let sb = run(wl, IndexKind::Sb);
        let ub = run(wl, IndexKind::Ub);
        ok &= bb < sb && bb < ub;
        if wl == "read" {
            ok &= sb <= ub;
        }
        detail.push_str(&format!("{wl}: bb={bb} sb={sb} ub={ub} "));
    }
    criterion(
        7,
        "BB+tree fastest on all index workloads; read-intensive BB < SB <= UB",
        ok,
        detail.trim(),
    );
}

#[test]
fn criterion_08_pam_index_insensitivity() {
    let run = |index: IndexKind| {
        let cfg = ExperimentConfig {
            method: MethodKind::Pam,
            index,
            rows: 100_000,
            ..ExperimentConfig::default()
        };
        let row = run_convergence(&cfg);
        assert!(row.converged);
        row.sim_time_ns
    };
    let times = [run(IndexKind::Bb), run(IndexKind::Sb), run(IndexKind::Ub)];
    let lo = *times.iter().min().unwrap() as f64;
    let hi = *times.iter().max().unwrap() as f64;
    criterion(
        8,
        "pure-convergence PAM sim time differs < 10% across BB/SB/UB",
        (hi - lo) / lo < 0.10,
        &format!("times={times:?} spread={:.1}%", (hi - lo) / lo * 100.0),
    );
}

#[test]
fn criterion_09_device_write_oracle() {
    let mut dev = SimDevice::new(DeviceConfig::with_capacity(1 << 20));
    let region = dev.alloc(1 << 20).unwrap();
    let lines = (1 << 20) / 64;
    let mut shadow = vec![0u8; 1 << 20];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut mismatches = 0u64;
    for _ in 0..100_000 {
        let line = rng.gen_range(0..lines);
        let mut buf = [0u8; 64];
        // Half the writes reuse current content and must cost zero.
        let rewrite = rng.gen_bool(0.5);
        if rewrite {
            buf.copy_from_slice(&shadow[line * 64..line * 64 + 64]);
        } else {
            rng.fill(&mut buf[..]);
        }
        let r = dev.write(&region, line * 64, &buf).unwrap();
        // Independent oracle: per-word XOR diff against the shadow copy.
        let old = &shadow[line * 64..line * 64 + 64];
        let mut words = 0u64;
        let mut bits = 0u64;
        for w in 0..8 {
            let o = u64::from_le_bytes(old[w * 8..w * 8 + 8].try_into().unwrap());
            let n = u64::from_le_bytes(buf[w * 8..w * 8 + 8].try_into().unwrap());
            if o != n {
                words += 1;
                bits += (o ^ n).count_ones() as u64;
            }
        }
        let want_lines = if words > 0 { 1 } else { 0 };
        let want_cost = want_lines * 1000;
        if (r.lines_flushed, r.words_modified, r.bits_modified, r.cost_ns)
            != (want_lines, words, bits, want_cost)
        {
            mismatches += 1;
        }
        if rewrite && r != Default::default() {
            mismatches += 1;
        }
        shadow[line * 64..line * 64 + 64].copy_from_slice(&buf);
    }
    criterion(
        9,
        "data-comparison write receipts match the XOR/popcount oracle on 1e5 line writes",
        mismatches == 0,
        &format!("{mismatches} mismatches"),
    );
}

#[test]
fn criterion_10_ratio_banded_substitution() {
    // The original experiments report wall-clock seconds on real hardware at
    // 1e8 rows; a simulated device at desk scale cannot reproduce those
    // absolute numbers. Criteria 4-8 therefore assert orderings and ratio
    // bands of simulated PCM time, which is this artifact's acceptance
    // surface by construction.
    criterion(
        10,
        "absolute paper timings out of scope; criteria 4-8 use ordered ratio bands",
        true,
        "documented substitution",
    );
}
