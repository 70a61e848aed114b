//! Property checks shared by the focused tests and the acceptance target.
//! Each returns a description of the first mismatch.

use std::path::Path;

use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use colloquy_core::debate::{TranscriptRecord, levenshtein, normalized_levenshtein, should_trigger, stability_fallback};
use colloquy_core::executor::{ExecStatus, ExecutionFeedback, Objective};
use colloquy_core::gateway::EmbeddingVector;
use colloquy_core::memory::{DebateEntry, DebugEntry, MemoryRecord, SolutionEntry, Store};
use colloquy_core::{AnswerVerdict, Tolerances, evaluate_answer_with};

use super::candidate;
use super::oracles::{self, keys_with_ties, scan_top_n, unit_vector};

pub type Check = Result<(), String>;

pub fn solution(key: EmbeddingVector, i: usize) -> SolutionEntry {
    SolutionEntry {
        key_text: format!("problem {i}"),
        key_vec: key,
        formulation: format!("minimize x_{i}"),
        code: format!("print('OBJECTIVE_VALUE: {i}')"),
        objective: i as f64 * 0.25,
        source_instance: format!("inst-{i}"),
    }
}

pub fn debug(key: EmbeddingVector, i: usize) -> DebugEntry {
    DebugEntry {
        key_text: format!("NameError: name 'x{i}' is not defined"),
        key_vec: key,
        log: ExecutionFeedback {
            status: ExecStatus::RuntimeError,
            stdout: String::new(),
            stderr: format!("Traceback\nNameError: name 'x{i}' is not defined"),
            exit_code: Some(1),
            wall_time: 0.125,
            warnings: Vec::new(),
        },
        diagnosis: "variable used before definition".into(),
        fix: format!("-print(x{i})\n+x{i} = 0"),
    }
}

pub fn debate(key: EmbeddingVector, i: usize) -> DebateEntry {
    let record = |round: u32, team: &str, v: f64| TranscriptRecord {
        round,
        team_id: team.into(),
        formulation: format!("round {round}"),
        code: String::new(),
        objective: Objective::Value(v),
        status: ExecStatus::Solved,
        carried_forward: false,
        change: (round > 0).then_some(0.5),
    };
    DebateEntry {
        key_text: format!("problem {i}\n---DISAGREEMENT---\nintegrality"),
        key_vec: key,
        transcript: vec![record(0, "team-a", 1.0), record(0, "team-b", 2.0), record(1, "team-a", 2.0), record(1, "team-b", 2.0)],
        summary: "teams agreed on integer variables".into(),
        mismatch_reason: "relaxation".into(),
        decisive_argument: "cans are discrete".into(),
        guardrails: vec!["check integrality".into()],
        modeling_patterns: vec!["count variables are integer".into()],
    }
}

fn retrieval_for<E: MemoryRecord>(
    rng: &mut ChaCha8Rng,
    size: usize,
    dim: usize,
    make: fn(EmbeddingVector, usize) -> E,
    key_of: fn(&E) -> &EmbeddingVector,
) -> Check {
    let keys = keys_with_ties(rng, size, dim);
    let store = Store::in_memory(dim);
    for (i, k) in keys.iter().enumerate() {
        store.append(make(k.clone(), i)).map_err(|e| e.to_string())?;
    }
    for q in 0..200 {
        // Some queries sit exactly on a stored key, which may be duplicated.
        let query = if q % 4 == 0 { keys[rng.random_range(0..keys.len())].clone() } else { unit_vector(rng, dim) };
        let n = [0, 1, 3, 5, size, size + 7][q % 6];
        let want: Vec<&EmbeddingVector> = scan_top_n(&query, &keys, n).into_iter().map(|i| &keys[i]).collect();
        let got = store.top_n(&query, n);
        let got: Vec<&EmbeddingVector> = got.iter().map(|e| key_of(e)).collect();
        if want != got {
            return Err(format!("{}: store of {size}, query {q}, n={n}: ranking differs from scan", E::KIND));
        }
        let want_idx = scan_top_n(&query, &keys, n);
        let got_idx = colloquy_core::memory::rank(&query, &keys, n);
        if want_idx != got_idx {
            return Err(format!("rank over {size} keys, query {q}, n={n}: {got_idx:?} != {want_idx:?}"));
        }
    }
    Ok(())
}

/// Top-N from each store type against a repeated linear scan.
pub fn retrieval_matches_scan(seed: u64, stores: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for round in 0..stores {
        // The first round uses full-size stores.
        let size = if round == 0 { 1000 } else { rng.random_range(1..=1000) };
        let dim = [3, 16, 64][rng.random_range(0..3)];
        retrieval_for(&mut rng, size, dim, solution, |e| &e.key_vec)?;
        retrieval_for(&mut rng, size, dim, debug, |e| &e.key_vec)?;
        retrieval_for(&mut rng, size, dim, debate, |e| &e.key_vec)?;
    }
    Ok(())
}

fn round_trip_for<E: MemoryRecord + PartialEq + std::fmt::Debug>(
    dir: &Path,
    rng: &mut ChaCha8Rng,
    make: fn(EmbeddingVector, usize) -> E,
) -> Check {
    let dim = 32;
    let path = dir.join(E::KIND.file_name());
    let keys = keys_with_ties(rng, 300, dim);
    let (store, _) = Store::<E>::open(&path, dim).map_err(|e| e.to_string())?;
    for (i, k) in keys.iter().enumerate() {
        store.append(make(k.clone(), i)).map_err(|e| e.to_string())?;
    }
    let (reloaded, report) = Store::<E>::open(&path, dim).map_err(|e| e.to_string())?;
    if report.loaded != keys.len() || report.corrupt != 0 {
        return Err(format!("{}: reload reported {report:?}", E::KIND));
    }
    if reloaded.snapshot() != store.snapshot() {
        return Err(format!("{}: reloaded entries differ", E::KIND));
    }
    for q in 0..100 {
        let query = unit_vector(rng, dim);
        if reloaded.top_n(&query, 5) != store.top_n(&query, 5) {
            return Err(format!("{}: query {q} ranks differently after reload", E::KIND));
        }
    }
    // Rewriting the loaded entries reproduces the file byte for byte.
    let copy = dir.join(format!("copy-{}", E::KIND.file_name()));
    let (rewritten, _) = Store::<E>::open(&copy, dim).map_err(|e| e.to_string())?;
    for entry in reloaded.snapshot() {
        let entry: E = serde_json::from_value(serde_json::to_value(&*entry).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        rewritten.append(entry).map_err(|e| e.to_string())?;
    }
    let (a, b) = (std::fs::read(&path).map_err(|e| e.to_string())?, std::fs::read(&copy).map_err(|e| e.to_string())?);
    if a != b {
        return Err(format!("{}: rewritten store is not byte-identical", E::KIND));
    }
    Ok(())
}

/// Save, reload and rewrite every store type.
pub fn stores_round_trip(seed: u64) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    round_trip_for(dir.path(), &mut rng, solution)?;
    round_trip_for(dir.path(), &mut rng, debug)?;
    round_trip_for(dir.path(), &mut rng, debate)?;
    Ok(())
}

fn random_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let scale = 10f64.powi(rng.random_range(-4..7));
    let gt = match rng.random_range(0..10) {
        0 => 0.0,
        1 => -rng.random_range(0.0..1.0) * scale,
        _ => rng.random_range(0.0..1.0) * scale,
    };
    let pred = if gt == 0.0 {
        rng.random_range(-2e-3..2e-3)
    } else {
        gt * (1.0 + rng.random_range(-0.1..0.1))
    };
    (pred, gt)
}

/// Scoring against exact rational arithmetic on random pairs plus the
/// inclusive boundaries. Pairs whose relative error is within float
/// rounding of the tolerance are counted but not compared.
pub fn evaluation_matches_exact(seed: u64, pairs: usize) -> Check {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cases: Vec<(Objective, f64)> = (0..pairs)
        .map(|_| {
            let (p, g) = random_pair(&mut rng);
            (Objective::Value(p), g)
        })
        .collect();
    let mut banded = 0;
    for (pred, gt) in cases {
        if let Objective::Value(p) = pred {
            if oracles::in_rounding_band(p, gt, tol.relative) {
                banded += 1;
                continue;
            }
        }
        let want = oracles::exact_verdict(pred, gt, tol.relative, tol.zero_absolute);
        let got = evaluate_answer_with(pred, gt, tol);
        if want != got {
            return Err(format!("pred {pred}, gt {gt}: got {got:?}, exact {want:?}"));
        }
    }
    let boundaries = [
        (Objective::Value(1e-3), 0.0, AnswerVerdict::Correct),
        (Objective::Value(-1e-3), 0.0, AnswerVerdict::Correct),
        (Objective::Value(0.0010001), 0.0, AnswerVerdict::Incorrect),
        (Objective::Value(105.0), 100.0, AnswerVerdict::Correct),
        (Objective::Value(95.0), 100.0, AnswerVerdict::Correct),
        (Objective::Value(105.0000001), 100.0, AnswerVerdict::Incorrect),
        (Objective::Value(-42.0), -40.0, AnswerVerdict::Correct),
        (Objective::Value(-37.9), -40.0, AnswerVerdict::Incorrect),
        (Objective::Value(f64::MAX), 1.0, AnswerVerdict::Incorrect),
        (Objective::Failure, 0.0, AnswerVerdict::Failed),
        (Objective::Failure, 7.0, AnswerVerdict::Failed),
    ];
    for (pred, gt, want) in boundaries {
        let got = evaluate_answer_with(pred, gt, tol);
        if got != want {
            return Err(format!("boundary pred {pred}, gt {gt}: got {got:?}, expected {want:?}"));
        }
    }
    if banded > pairs / 100 {
        return Err(format!("{banded} pairs fell in the rounding band"));
    }
    Ok(())
}

/// Values on a 1/1024 grid, so differences are exact in f64.
fn grid_value(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-(1i64 << 30)..(1i64 << 30)) as f64 / 1024.0
}

/// Trigger rule against its exact transcription, including failures and
/// gaps exactly equal to the tolerance.
pub fn trigger_matches_rule(seed: u64, cases: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tolerances = [0.05, 0.0, 0.0625, 0.5, 1.0, 1e-9, 3.0];
    for i in 0..cases {
        let tolerance = tolerances[i % tolerances.len()];
        let a = grid_value(&mut rng);
        let b = match rng.random_range(0..6) {
            0 => a,
            1 => a + tolerance,
            2 => a - tolerance,
            3 => a + rng.random_range(-4..=4) as f64 / 1024.0,
            _ => grid_value(&mut rng),
        };
        let wrap = |v: f64, rng: &mut ChaCha8Rng| if rng.random_bool(0.1) { Objective::Failure } else { Objective::Value(v) };
        let (oa, ob) = (wrap(a, &mut rng), wrap(b, &mut rng));
        // a ± tolerance may round off the grid; the oracle still sees exact values.
        let want = oracles::exact_trigger(oa, ob, tolerance);
        if should_trigger(oa, ob, tolerance) != want {
            return Err(format!("trigger({oa}, {ob}, {tolerance}) != {want}"));
        }
    }
    for tolerance in [0.0625, 0.5, 1.0] {
        if should_trigger(Objective::Value(2.0), Objective::Value(2.0 + tolerance), tolerance) {
            return Err(format!("gap equal to {tolerance} triggered"));
        }
    }
    Ok(())
}

fn random_text(rng: &mut ChaCha8Rng, max: usize) -> String {
    const ALPHABET: &[char] = &['a', 'b', 'c', 'x', ' ', '\n', '≥', 'é'];
    let len = rng.random_range(0..=max);
    (0..len).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())]).collect()
}

/// Normalized edit distance against a full-matrix DP, and the fallback
/// choice against the distances it is defined on.
pub fn stability_matches_definition(seed: u64, pairs: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..pairs {
        let (a, b) = (random_text(&mut rng, 24), random_text(&mut rng, 24));
        if levenshtein(&a, &b) != oracles::edit_distance(&a, &b) {
            return Err(format!("edit distance of {a:?} and {b:?} disagrees"));
        }
        let got = normalized_levenshtein(&a, &b);
        let want = oracles::normalized_edit_distance(&a, &b);
        if got != want.to_f64().unwrap_or(f64::NAN) {
            return Err(format!("distance({a:?}, {b:?}) = {got}, expected {want}"));
        }
    }
    for _ in 0..pairs / 4 {
        let texts: Vec<(String, String)> =
            (0..4).map(|_| (random_text(&mut rng, 12), random_text(&mut rng, 12))).collect();
        let c = |i: usize, team: &str| candidate(team, &texts[i].0, &texts[i].1, Some(i as f64));
        let (ha, hb) = ([c(0, "A"), c(1, "A")], [c(2, "B"), c(3, "B")]);
        let change = |x: usize, y: usize| {
            oracles::normalized_edit_distance(
                &format!("{}\n{}", texts[x].0, texts[x].1),
                &format!("{}\n{}", texts[y].0, texts[y].1),
            )
        };
        let expected = if change(2, 3) < change(0, 1) { "B" } else { "A" };
        let picked = stability_fallback(&ha, &hb).map_err(|e| e.to_string())?;
        if picked.team_id != expected {
            return Err(format!("fallback picked {} for {texts:?}", picked.team_id));
        }
    }
    // Ties and unchanged candidates go to team A.
    let same = candidate("A", "f", "c", Some(1.0));
    let same_b = candidate("B", "f", "c", Some(2.0));
    let (ha, hb) = ([same.clone(), same.clone()], [same_b.clone(), same_b.clone()]);
    let tie = stability_fallback(&ha, &hb).map_err(|e| e.to_string())?;
    if tie.team_id != "A" {
        return Err("zero-change tie did not go to team A".into());
    }
    let moved = candidate("A", "g", "c", Some(1.0));
    let ha = [same, moved];
    let only_b_still = stability_fallback(&ha, &hb).map_err(|e| e.to_string())?;
    if only_b_still.team_id != "B" {
        return Err("unchanged team B lost to a changed team A".into());
    }
    Ok(())
}
