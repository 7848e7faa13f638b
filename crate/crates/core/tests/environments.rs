mod common;

use proptest::prelude::*;

use tdp_core::environments::{load_fixture_set, EnvError, EnvKind, Environment, TaskInstance};
use tdp_core::telemetry::check_constraints;

/// Hand model of the fridge task: which goals have ever held.
#[derive(Debug, Default)]
struct FridgeModel {
    in_kitchen: bool,
    fridge_open: bool,
    measured: bool,
    reached_kitchen: bool,
    opened: bool,
}

impl FridgeModel {
    fn apply(&mut self, action: &str) {
        match action {
            "go kitchen" | "go to kitchen" => self.in_kitchen = true,
            "go hallway" => self.in_kitchen = false,
            "open fridge" if self.in_kitchen => self.fridge_open = true,
            "measure water" if self.in_kitchen && self.fridge_open => self.measured = true,
            _ => {}
        }
        self.reached_kitchen |= self.in_kitchen;
        self.opened |= self.fridge_open;
    }

    fn reward(&self) -> f64 {
        [self.reached_kitchen, self.opened, self.measured].iter().filter(|b| **b).count() as f64 / 3.0
    }
}

const LAB_ACTIONS: [&str; 9] = [
    "go kitchen",
    "go to kitchen",
    "go hallway",
    "open fridge",
    "measure water",
    "take water",
    "activate stove",
    "look",
    "measure stove",
];

proptest! {
    #![proptest_config(ProptestConfig { cases: 300, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn lab_reward_tracks_latched_goals(actions in prop::collection::vec(prop::sample::select(LAB_ACTIONS.to_vec()), 1..25)) {
        let task = common::toy3_task("lab-fridge");
        let mut env = EnvKind::TextLab.create();
        env.reset(&task).unwrap();
        let mut model = FridgeModel::default();
        let mut total = 0.0;
        for action in actions {
            if env.is_done() {
                prop_assert_eq!(env.step(action), Err(EnvError::AlreadyDone));
                break;
            }
            let result = env.step(action).unwrap();
            model.apply(action);
            let delta = result.reward_delta.unwrap();
            prop_assert!(delta >= 0.0);
            total += delta;
            prop_assert!((total - model.reward()).abs() < 1e-9, "after {}: {} vs {}", action, total, model.reward());
            prop_assert_eq!(result.done, model.measured);
            prop_assert_eq!(env.metrics().reward, Some(model.reward()));
        }
    }
}

#[test]
fn lab_goals_stay_latched_after_leaving() {
    let task = common::toy3_task("lab-fridge");
    let mut env = EnvKind::TextLab.create();
    let start = env.reset(&task).unwrap();
    assert!(start.starts_with("Task: Measure the temperature"));
    assert_eq!(env.step("go kitchen").unwrap().reward_delta, Some(1.0 / 3.0));
    assert_eq!(env.step("go hallway").unwrap().reward_delta, Some(0.0));
    assert_eq!(env.metrics().reward, Some(1.0 / 3.0));
    assert_eq!(env.step("open fridge").unwrap().observation, "Nothing happens.");
}

fn play(env: &mut dyn Environment, task: &TaskInstance, actions: &[&str]) -> Vec<String> {
    env.reset(task).unwrap();
    actions.iter().map(|a| env.step(a).unwrap().observation).collect()
}

#[test]
fn every_environment_rejects_steps_after_done_and_resets_cleanly() {
    let cases: [(&str, &[&str]); 3] = [
        ("wiki-peoria", &["Search[Peoria]", "Lookup[river]", "Finish[Illinois]"]),
        (
            "travel-peoria",
            &["NotebookWrite[Flight F100 cost=210]", "MakePlan[Plan a 2-day trip from Colorado Springs to Peoria]"],
        ),
        ("lab-fridge", &["go kitchen", "open fridge", "measure water"]),
    ];
    for (id, actions) in cases {
        let task = common::toy3_task(id);
        let mut env = task.env_kind().create();
        assert_eq!(env.step(actions[0]), Err(EnvError::NotReset), "{id}");
        let first = play(env.as_mut(), &task, actions);
        assert!(env.is_done(), "{id}");
        assert!(env.metrics().delivered, "{id}");
        assert_eq!(env.step(actions[0]), Err(EnvError::AlreadyDone), "{id}");

        let second = play(env.as_mut(), &task, actions);
        assert_eq!(first, second, "{id}");
        env.reset(&task).unwrap();
        assert!(!env.is_done(), "{id}");
        assert!(!env.metrics().delivered, "{id}");
    }
}

#[test]
fn reset_forgets_the_previous_episode() {
    let task = common::toy3_task("travel-peoria");
    let mut env = task.env_kind().create();
    env.reset(&task).unwrap();
    env.step("NotebookWrite[something]").unwrap();
    env.reset(&task).unwrap();
    let obs = env.step("NotebookWrite[again]").unwrap().observation;
    assert!(obs.ends_with("its index is 0."), "{obs}");

    let wiki = common::toy3_task("wiki-peoria");
    let mut env = wiki.env_kind().create();
    env.reset(&wiki).unwrap();
    env.step("Search[Peoria]").unwrap();
    env.reset(&wiki).unwrap();
    assert!(env.step("Lookup[river]").unwrap().observation.starts_with("No page is active"));
}

#[test]
fn wrong_payload_is_refused() {
    let lab = common::toy3_task("lab-fridge");
    let mut env = EnvKind::MockWiki.create();
    assert!(matches!(env.reset(&lab), Err(EnvError::PayloadMismatch { .. })));
}

#[test]
fn travel_plan_is_scored_against_the_checklist() {
    let task = common::toy3_task("travel-peoria");
    let mut env = task.env_kind().create();
    env.reset(&task).unwrap();
    env.step("FlightSearch[Colorado Springs, Peoria, 2022-03-16]").unwrap();
    env.step("NotebookWrite[Flight F100 | cost=210]").unwrap();
    env.step("NotebookWrite[Accommodation Lake Suite | cost=900 | smoking allowed]").unwrap();
    env.step("MakePlan[trip]").unwrap();
    let plan = env.metrics().plan.expect("plan delivered");
    let score = check_constraints(Some(&plan), &task.gold.constraints);
    assert_eq!((score.commonsense_passed, score.commonsense_total), (1, 2));
    assert_eq!((score.hard_passed, score.hard_total), (0, 2));
    assert!(!score.all_passed);
    let none = check_constraints(None, &task.gold.constraints);
    assert_eq!(none.commonsense_passed + none.hard_passed, 0);
}

#[test]
fn fixture_errors_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    let err = load_fixture_set(&missing).unwrap_err().to_string();
    assert!(err.contains("absent.json"), "{err}");

    let bad = dir.path().join("broken.json");
    std::fs::write(&bad, "{ \"version\": 1, ").unwrap();
    let err = load_fixture_set(&bad).unwrap_err().to_string();
    assert!(err.contains("broken.json"), "{err}");

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert!(load_fixture_set(&empty).is_err());

    let mut lab: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(common::fixtures_dir().join("toy3/lab-fridge.json")).unwrap())
            .unwrap();
    lab["payload"]["rooms"][0]["exits"][0] = "attic".into();
    let path = dir.path().join("lab.json");
    std::fs::write(&path, lab.to_string()).unwrap();
    let err = load_fixture_set(&path).unwrap_err().to_string();
    assert!(err.contains("lab.json") && err.contains("attic"), "{err}");

    let mut wiki: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(common::fixtures_dir().join("toy3/wiki-peoria.json")).unwrap())
            .unwrap();
    wiki["gold"]["answer"] = "Narnia".into();
    let path = dir.path().join("wiki.json");
    std::fs::write(&path, wiki.to_string()).unwrap();
    let err = load_fixture_set(&path).unwrap_err().to_string();
    assert!(err.contains("Narnia"), "{err}");
}

#[test]
fn directory_loads_sorted_by_file_name() {
    let ids: Vec<String> = common::toy3().into_iter().map(|t| t.id).collect();
    assert_eq!(ids, ["lab-fridge", "travel-peoria", "wiki-peoria"]);
}

#[test]
fn environment_names_parse() {
    for kind in [EnvKind::MockWiki, EnvKind::TravelToy, EnvKind::TextLab] {
        assert_eq!(EnvKind::parse(kind.as_str()).unwrap(), kind);
        assert_eq!(kind.create().kind(), kind);
    }
    assert!(matches!(EnvKind::parse("alfworld"), Err(EnvError::UnknownEnvironment(_))));
}
