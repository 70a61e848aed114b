#![allow(dead_code)]

pub mod checks;
pub mod oracles;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use colloquy_core::debate::DebateConfig;
use colloquy_core::executor::{ExecutionFeedback, Executor, ExecutorConfig, Objective};
use colloquy_core::gateway::{
    Cassette, ChatBackend, Gateway, HashedBagEmbedder, RecordingBackend, ScriptedBackend, ScriptedReply,
};
use colloquy_core::memory::{MemoryBank, MemorySettings};
use colloquy_core::orchestrator::{InstanceResult, Orchestrator};
use colloquy_core::team::{AgentTeam, CandidateSolution, ProblemInstance, TeamConfig};

pub const LLM: &str = "llm";
pub const TEAM_A: &str = "team-a";
pub const TEAM_B: &str = "team-b";

pub const FORMULATOR: &str = "You are the Formulator";
pub const PROGRAMMER: &str = "You are the Programmer";
pub const DEBUGGER: &str = "You are the Debugger";
pub const ANALYSIS: &str = "analyze multiple similar solved problems";
pub const DEBATE: &str = "agentic debate";
pub const SUMMARIZER: &str = "debate memory builder";
pub const DISCREPANCY: &str = "Two agent teams produced conflicting";
pub const SIGNATURE: &str = "You index failed";
pub const DIAGNOSIS: &str = "failed and was later repaired";

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn gateway(backend: Arc<dyn ChatBackend>) -> Arc<Gateway> {
    Arc::new(Gateway::new(Arc::new(HashedBagEmbedder::default())).with_backend(LLM, backend))
}

pub fn executor() -> Arc<Executor> {
    Arc::new(Executor::new(ExecutorConfig { timeout: Duration::from_secs(20), ..ExecutorConfig::default() }))
}

pub fn bank(gateway: &Arc<Gateway>) -> Arc<MemoryBank> {
    Arc::new(MemoryBank::in_memory(gateway.clone(), MemorySettings::new(LLM)))
}

pub fn team(id: &str, gateway: &Arc<Gateway>, executor: &Arc<Executor>, memory: Option<Arc<MemoryBank>>) -> AgentTeam {
    let mut config = TeamConfig::new(id, LLM);
    config.exec_timeout = Duration::from_secs(20);
    AgentTeam::new(config, gateway.clone(), executor.clone(), memory).expect("valid team")
}

pub fn orchestrator(gateway: &Arc<Gateway>, memory: Option<Arc<MemoryBank>>) -> Orchestrator {
    let exec = executor();
    Orchestrator::new(
        team(TEAM_A, gateway, &exec, memory.clone()),
        team(TEAM_B, gateway, &exec, memory.clone()),
        DebateConfig::default(),
        memory,
    )
}

pub fn candidate(team: &str, formulation: &str, code: &str, objective: Option<f64>) -> CandidateSolution {
    CandidateSolution {
        formulation: formulation.into(),
        code: code.into(),
        objective: Objective::from(objective),
        feedback: ExecutionFeedback::aborted("synthetic"),
        team_id: team.into(),
        debug_attempts: 0,
    }
}

pub fn text(s: impl Into<String>) -> ScriptedReply {
    ScriptedReply::text(s)
}

pub fn formulation_reply(f: &str) -> ScriptedReply {
    text(format!("<formulation>\n{f}\n</formulation>"))
}

pub fn python_reply(code: &str) -> ScriptedReply {
    text(format!("<python>\n{code}\n</python>"))
}

pub fn revision_reply(note: &str, f: &str, code: &str) -> ScriptedReply {
    text(format!("{note}\n<formulation>\n{f}\n</formulation>\n<python>\n{code}\n</python>"))
}

/// Script printing a fixed objective.
pub fn constant_code(value: f64) -> String {
    format!("print(\"OBJECTIVE_VALUE:\", {value:?})")
}

/// Paint-mixing case: two brands sold by the can, where the continuous
/// relaxation costs 68.06 and the whole-can answer costs 78.00.
pub mod paint {
    use super::*;

    pub const LP_FORMULATION: &str = "Decision variables: x_A, x_B >= 0 (continuous), amount of brand A and brand B paint in cans.\n\
Objective: minimize 11 x_A + 14 x_B\n\
Constraints:\n\
  dye: x_A + 5 x_B >= 20\n\
  thinner: 4 x_A + 3 x_B >= 17";

    pub const MILP_FORMULATION: &str = "Decision variables: x_A, x_B >= 0 (integer), cans of brand A and brand B bought.\n\
Objective: minimize 11 x_A + 14 x_B\n\
Constraints:\n\
  dye: x_A + 5 x_B >= 20\n\
  thinner: 4 x_A + 3 x_B >= 17\n\
  integrality: x_A, x_B integer";

    pub const LP_CODE: &str = r#"from fractions import Fraction

cost = (11, 14)
rows = [((1, 5), 20), ((4, 3), 17)]


def feasible(x, y):
    return x >= 0 and y >= 0 and all(a * x + b * y >= r for (a, b), r in rows)


points = []
for (a, b), r in rows:
    points += [(Fraction(r, a), Fraction(0)), (Fraction(0), Fraction(r, b))]
(a1, b1), r1 = rows[0]
(a2, b2), r2 = rows[1]
det = a1 * b2 - a2 * b1
points.append((Fraction(r1 * b2 - r2 * b1, det), Fraction(a1 * r2 - a2 * r1, det)))
best = min(cost[0] * x + cost[1] * y for x, y in points if feasible(x, y))
print("OBJECTIVE_VALUE:", round(float(best), 2))"#;

    pub const MILP_CODE: &str = r#"cost = (11, 14)
best = min(
    cost[0] * x + cost[1] * y
    for x in range(30)
    for y in range(30)
    if x + 5 * y >= 20 and 4 * x + 3 * y >= 17
)
print("OBJECTIVE_VALUE:", float(best))"#;

    pub fn problem() -> ProblemInstance {
        let mut p = ProblemInstance::new(
            "paint-mixing",
            "A workshop mixes two brands of paint. Brand A costs $11 per can; each can holds 1 unit of dye \
             and 4 units of thinner. Brand B costs $14 per can; each can holds 5 units of dye and 3 units of \
             thinner. The mixture needs at least 20 units of dye and at least 17 units of thinner. Paint is \
             bought in cans. How many cans of each brand minimize the total cost?",
        );
        p.ground_truth = Some(78.0);
        p.benchmark = "case-study".into();
        p
    }

    /// Three past solves: one continuous blending case and two whole-unit
    /// production cases.
    pub fn seed(bank: &MemoryBank) {
        let cases = [
            (
                "blend-1",
                "A paint blending plant combines two base liquids to make paint with at least 30% pigment. \
                 Base liquids are measured in litres. Minimize blending cost.",
                "Variables: fractions f1, f2 >= 0 continuous. minimize 3 f1 + 5 f2 s.t. f1 + f2 = 1, 0.2 f1 + 0.4 f2 >= 0.3",
                "print(\"OBJECTIVE_VALUE:\", 4.0)",
                4.0,
            ),
            (
                "art-1",
                "An art studio produces sculptures and paintings from clay and canvas. Each sculpture needs 4 kg \
                 clay, each painting 2 canvases. Items are whole units. Minimize production cost to meet orders.",
                "Variables: s, p >= 0 integer. minimize 40 s + 25 p s.t. s >= 3, p >= 5",
                "print(\"OBJECTIVE_VALUE:\", 245.0)",
                245.0,
            ),
            (
                "art-2",
                "A craft shop buys boxes of beads and spools of wire to build necklaces. Boxes and spools are \
                 indivisible units. Minimize purchase cost while covering bead and wire needs.",
                "Variables: b, w >= 0 integer. minimize 6 b + 4 w s.t. 50 b >= 120, 10 w >= 35",
                "print(\"OBJECTIVE_VALUE:\", 34.0)",
                34.0,
            ),
        ];
        for (id, description, formulation, code, value) in cases {
            let problem = ProblemInstance::new(id, description);
            bank.write_solution(&problem, &candidate("seed", formulation, code, Some(value))).expect("seed write");
        }
    }

    pub fn summary_json() -> String {
        serde_json::json!({
            "summary": "The teams swapped between continuous and whole-can models before agreeing that cans are indivisible, giving 78.00.",
            "mismatch_reason": "Whether cans of paint may be bought fractionally.",
            "decisive_argument": "Paint is bought in cans, so the purchase quantities must be integers even though the components are continuous.",
            "guardrails": ["Check the purchasing unit before relaxing integrality", "A lower objective from a relaxation is not evidence of correctness"],
            "modeling_patterns": ["Integer purchase quantities with continuous content coefficients"]
        })
        .to_string()
    }

    /// Every completion of the case, by lane.
    pub fn script() -> ScriptedBackend {
        let lp = |note: &str| revision_reply(note, LP_FORMULATION, LP_CODE);
        let milp = |note: &str| revision_reply(note, MILP_FORMULATION, MILP_CODE);
        ScriptedBackend::new()
            .reply_in_lane(TEAM_A, ANALYSIS, text("Case 1 is also about paint and treats quantities as continuous; follow its blending pattern."))
            .reply_in_lane(TEAM_B, ANALYSIS, text("Cases 2 and 3 buy indivisible units; model purchases as integers."))
            .reply_in_lane(TEAM_A, FORMULATOR, formulation_reply(LP_FORMULATION))
            .reply_in_lane(TEAM_B, FORMULATOR, formulation_reply(MILP_FORMULATION))
            .reply_in_lane(TEAM_A, PROGRAMMER, python_reply(LP_CODE))
            .reply_in_lane(TEAM_B, PROGRAMMER, python_reply(MILP_CODE))
            .reply_in_lane(TEAM_A, DEBATE, milp("The other team models cans as whole units; adopting integrality."))
            .reply_in_lane(TEAM_A, DEBATE, lp("The continuous model reaches 68.06, which is cheaper; reverting."))
            .reply_in_lane(TEAM_A, DEBATE, milp("Cans cannot be split, so integrality is required."))
            .reply_in_lane(TEAM_B, DEBATE, lp("The other team found 68.06; relaxing integrality for the lower cost."))
            .reply_in_lane(TEAM_B, DEBATE, milp("Fractional cans are not purchasable; restoring integrality."))
            .reply_in_lane(TEAM_B, DEBATE, milp("Keeping the integer model."))
            .reply_in_lane("coordinator", DISCREPANCY, text("Team A relaxes the can counts to continuous values (68.06) while team B keeps them integer (78.00)."))
            .reply_in_lane("coordinator", DISCREPANCY, text("The teams swapped models: team A is now integer (78.00) and team B continuous (68.06)."))
            .reply_in_lane("coordinator", DISCREPANCY, text("Team A relaxes the can counts to continuous values (68.06) while team B keeps them integer (78.00)."))
            .reply_in_lane("memory", SUMMARIZER, text(summary_json()))
    }

    pub fn cassette_path() -> PathBuf {
        fixtures().join("paint_mixing.cassette.jsonl")
    }

    /// Solves the case through `backend` on a freshly seeded shared bank and
    /// applies the write-back.
    pub fn run(backend: Arc<dyn ChatBackend>) -> (InstanceResult, Arc<MemoryBank>) {
        let gw = gateway(backend);
        let memory = bank(&gw);
        seed(&memory);
        let orch = orchestrator(&gw, Some(memory.clone()));
        let result = orch.solve_instance(&problem());
        let errors = orch.write_back(&result);
        assert!(errors.is_empty(), "write-back failed: {errors:?}");
        (result, memory)
    }

    /// Records the scripted case into an in-memory cassette.
    pub fn record() -> (Arc<Cassette>, Arc<ScriptedBackend>) {
        let script = Arc::new(script());
        let cassette = Arc::new(Cassette::in_memory());
        run(Arc::new(RecordingBackend::new(script.clone(), cassette.clone())));
        (cassette, script)
    }
}

/// Ten-instance toy benchmark: six easy agreements, one debate that
/// converges on the right answer, one shared wrong answer, one team that
/// never produces code, and one debate that runs out of rounds.
pub mod toy {
    use super::*;
    use colloquy_core::config::Config;
    use colloquy_core::orchestrator::RunSettings;

    pub fn config() -> Config {
        Config::load(fixtures().join("toy.toml")).expect("toy config")
    }

    pub fn benchmark() -> colloquy_core::benchmark::Benchmark {
        colloquy_core::benchmark::load_benchmark(fixtures().join("toy.jsonl")).expect("toy benchmark")
    }

    pub fn cassette_path() -> PathBuf {
        fixtures().join("toy.cassette.jsonl")
    }

    fn tag(i: u32) -> String {
        format!("Toy problem {i:02}:")
    }

    fn formulation(i: u32, variant: &str) -> String {
        format!("Variables: q >= 0. Objective: minimize cost of order {i}{variant}.")
    }

    pub fn script() -> ScriptedBackend {
        let mut s = ScriptedBackend::new();
        let initial = |s: ScriptedBackend, lane: &str, i: u32, value: f64| {
            let t = tag(i);
            s.reply_matching(Some(lane), &[FORMULATOR, &t], formulation_reply(&formulation(i, "")))
                .reply_matching(Some(lane), &[PROGRAMMER, &t], python_reply(&constant_code(value)))
        };
        for i in 1..=6 {
            let v = 100.0 + f64::from(i);
            s = initial(s, TEAM_A, i, v);
            s = initial(s, TEAM_B, i, v);
        }
        let revise = |s: ScriptedBackend, lane: &str, i: u32, variant: &str, value: f64| {
            let t = tag(i);
            s.reply_matching(
                Some(lane),
                &[DEBATE, &t],
                revision_reply("Revised.", &formulation(i, variant), &constant_code(value)),
            )
        };
        let describe = |s: ScriptedBackend, i: u32| {
            let t = tag(i);
            s.reply_matching(Some("coordinator"), &[DISCREPANCY, &t], text(format!("Objectives differ on order {i}.")))
        };

        // 07: 10 vs 12, both settle on 10.
        s = initial(s, TEAM_A, 7, 10.0);
        s = initial(s, TEAM_B, 7, 12.0);
        s = describe(s, 7);
        s = revise(s, TEAM_A, 7, "", 10.0);
        s = revise(s, TEAM_B, 7, " with a tighter bound", 10.0);

        // 08: both agree on a wrong value.
        s = initial(s, TEAM_A, 8, 60.0);
        s = initial(s, TEAM_B, 8, 60.0);

        // 09: team A never returns code; both end at a wrong 30.
        let t9 = tag(9);
        s = s
            .reply_matching(Some(TEAM_A), &[FORMULATOR, &t9], formulation_reply(&formulation(9, "")))
            .reply_matching(Some(TEAM_A), &[PROGRAMMER, &t9], text("I cannot write this code."))
            .reply_matching(Some(TEAM_A), &[PROGRAMMER, &t9], text("Still no code, sorry."));
        s = initial(s, TEAM_B, 9, 30.0);
        s = describe(s, 9);
        s = revise(s, TEAM_A, 9, "", 30.0);
        s = revise(s, TEAM_B, 9, "", 30.0);

        // 10: 1 vs 2 for three rounds; team A never changes, so it wins the fallback.
        s = initial(s, TEAM_A, 10, 1.0);
        s = initial(s, TEAM_B, 10, 2.0);
        for b in [2.5, 2.0, 2.5] {
            s = describe(s, 10);
            s = revise(s, TEAM_A, 10, "", 1.0);
            s = revise(s, TEAM_B, 10, " (revised)", b);
        }
        s
    }

    pub fn orchestrator(backend: Arc<dyn ChatBackend>) -> Orchestrator {
        config().build_with_gateway(gateway(backend), None).expect("toy runtime").orchestrator
    }

    pub fn settings(parallelism: usize) -> RunSettings {
        RunSettings { parallelism, ..config().run_settings() }
    }
}
