use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{normalize, EnvError, EnvKind, EnvMetrics, Environment, Payload, StepResult, TaskInstance};

pub const INVENTORY: &str = "inventory";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Room {
    pub name: String,
    #[serde(default)]
    pub exits: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabObject {
    pub name: String,
    /// A room name, a container object name, or `inventory`.
    pub location: String,
    #[serde(default)]
    pub portable: bool,
    #[serde(default)]
    pub container: bool,
    #[serde(default)]
    pub openable: bool,
    #[serde(default)]
    pub open: bool,
    #[serde(default)]
    pub activatable: bool,
    #[serde(default)]
    pub active: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoalCondition {
    AgentIn { room: String },
    Holding { object: String },
    IsOpen { object: String },
    IsActive { object: String },
    ObjectIn { object: String, container: String },
    Measured { object: String },
    Focused { object: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabPayload {
    pub rooms: Vec<Room>,
    pub start_room: String,
    #[serde(default)]
    pub objects: Vec<LabObject>,
    #[serde(default)]
    pub goals: Vec<GoalCondition>,
}

impl LabPayload {
    pub fn validate(&self) -> Result<(), String> {
        let rooms: BTreeSet<&str> = self.rooms.iter().map(|r| r.name.as_str()).collect();
        let objects: BTreeSet<&str> = self.objects.iter().map(|o| o.name.as_str()).collect();
        if !rooms.contains(self.start_room.as_str()) {
            return Err(format!("start room `{}` is not a room", self.start_room));
        }
        for room in &self.rooms {
            if let Some(exit) = room.exits.iter().find(|e| !rooms.contains(e.as_str())) {
                return Err(format!("room `{}` has unknown exit `{exit}`", room.name));
            }
        }
        for obj in &self.objects {
            let loc = obj.location.as_str();
            if loc != INVENTORY && !rooms.contains(loc) && !objects.contains(loc) {
                return Err(format!("object `{}` has unknown location `{loc}`", obj.name));
            }
        }
        for goal in &self.goals {
            let (room, objs): (Option<&str>, Vec<&str>) = match goal {
                GoalCondition::AgentIn { room } => (Some(room), vec![]),
                GoalCondition::Holding { object }
                | GoalCondition::IsOpen { object }
                | GoalCondition::IsActive { object }
                | GoalCondition::Measured { object }
                | GoalCondition::Focused { object } => (None, vec![object]),
                GoalCondition::ObjectIn { object, container } => (None, vec![object, container]),
            };
            if let Some(room) = room.filter(|r| !rooms.contains(r)) {
                return Err(format!("goal references unknown room `{room}`"));
            }
            if let Some(obj) = objs.into_iter().find(|o| !objects.contains(o)) {
                return Err(format!("goal references unknown object `{obj}`"));
            }
        }
        Ok(())
    }
}

/// Observable world state of the lab.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabWorld {
    pub rooms: BTreeMap<String, Room>,
    pub agent_room: String,
    pub objects: BTreeMap<String, LabObject>,
    pub measured: BTreeSet<String>,
    pub focused: BTreeSet<String>,
}

impl LabWorld {
    pub fn holds(&self, goal: &GoalCondition) -> bool {
        let obj = |name: &str| self.objects.get(name);
        match goal {
            GoalCondition::AgentIn { room } => &self.agent_room == room,
            GoalCondition::Holding { object } => obj(object).is_some_and(|o| o.location == INVENTORY),
            GoalCondition::IsOpen { object } => obj(object).is_some_and(|o| o.open),
            GoalCondition::IsActive { object } => obj(object).is_some_and(|o| o.active),
            GoalCondition::ObjectIn { object, container } => {
                obj(object).is_some_and(|o| &o.location == container)
            }
            GoalCondition::Measured { object } => self.measured.contains(object),
            GoalCondition::Focused { object } => self.focused.contains(object),
        }
    }

    /// Whether the agent can reach `name` from where it stands.
    pub fn accessible(&self, name: &str) -> bool {
        let mut current = name;
        // containment depth is bounded by the object count
        for _ in 0..=self.objects.len() {
            let Some(o) = self.objects.get(current) else {
                return false;
            };
            if o.location == INVENTORY || o.location == self.agent_room {
                return true;
            }
            match self.objects.get(&o.location) {
                Some(parent) if parent.container && (parent.open || !parent.openable) => {
                    current = &parent.name;
                }
                _ => return false,
            }
        }
        false
    }

    fn find(&self, name: &str) -> Option<String> {
        let key = normalize(name);
        self.objects.keys().find(|k| normalize(k) == key).cloned()
    }

    fn describe_room(&self) -> String {
        let visible: Vec<&str> = self
            .objects
            .values()
            .filter(|o| o.location != INVENTORY && self.accessible(&o.name))
            .map(|o| o.name.as_str())
            .collect();
        let exits = self
            .rooms
            .get(&self.agent_room)
            .map(|r| r.exits.join(", "))
            .unwrap_or_default();
        format!(
            "You are in the {}. You see: {}. Exits: {}.",
            self.agent_room,
            if visible.is_empty() { "nothing".to_string() } else { visible.join(", ") },
            if exits.is_empty() { "none".to_string() } else { exits }
        )
    }
}

/// Verb-grammar lab world with latched goal conditions and equal reward shares.
#[derive(Debug, Clone, Default)]
pub struct TextLab {
    world: LabWorld,
    goals: Vec<GoalCondition>,
    satisfied: Vec<bool>,
    loaded: bool,
    done: bool,
}

const NOTHING: &str = "Nothing happens.";

impl TextLab {
    pub fn world(&self) -> &LabWorld {
        &self.world
    }

    pub fn goals(&self) -> &[GoalCondition] {
        &self.goals
    }

    pub fn reward(&self) -> f64 {
        if self.goals.is_empty() {
            return 1.0;
        }
        let count = self.satisfied.iter().filter(|s| **s).count();
        count as f64 / self.goals.len() as f64
    }

    fn latch(&mut self) {
        for (goal, satisfied) in self.goals.iter().zip(self.satisfied.iter_mut()) {
            if !*satisfied && self.world.holds(goal) {
                *satisfied = true;
            }
        }
        self.done = self.satisfied.iter().all(|s| *s);
    }

    fn apply(&mut self, action: &str) -> String {
        let words: Vec<&str> = action.split_whitespace().collect();
        let Some((verb, rest)) = words.split_first() else {
            return NOTHING.to_string();
        };
        let rest: Vec<&str> = match (verb.to_lowercase().as_str(), rest.first()) {
            ("go", Some(&"to")) | ("focus", Some(&"on")) => rest[1..].to_vec(),
            _ => rest.to_vec(),
        };
        let arg = rest.join(" ");
        let world = &mut self.world;
        match verb.to_lowercase().as_str() {
            "go" => {
                let key = normalize(&arg);
                let target = world
                    .rooms
                    .get(&world.agent_room)
                    .and_then(|r| r.exits.iter().find(|e| normalize(e) == key).cloned());
                match target {
                    Some(room) => {
                        world.agent_room = room;
                        world.describe_room()
                    }
                    None => NOTHING.to_string(),
                }
            }
            "open" => match world.find(&arg).filter(|n| world.accessible(n)) {
                Some(name) if world.objects[&name].openable && !world.objects[&name].open => {
                    world.objects.get_mut(&name).map(|o| o.open = true);
                    format!("The {name} is now open.")
                }
                _ => NOTHING.to_string(),
            },
            "take" => match world.find(&arg).filter(|n| world.accessible(n)) {
                Some(name) if world.objects[&name].portable && world.objects[&name].location != INVENTORY => {
                    world.objects.get_mut(&name).map(|o| o.location = INVENTORY.to_string());
                    format!("You take the {name}.")
                }
                _ => NOTHING.to_string(),
            },
            "put" => {
                let Some(split) = rest.iter().position(|w| *w == "in" || *w == "into") else {
                    return NOTHING.to_string();
                };
                let (item, container) = (rest[..split].join(" "), rest[split + 1..].join(" "));
                let item = world.find(&item).filter(|n| world.objects[n].location == INVENTORY);
                let container = world.find(&container).filter(|n| world.accessible(n));
                match (item, container) {
                    (Some(item), Some(container))
                        if item != container
                            && world.objects[&container].container
                            && (world.objects[&container].open || !world.objects[&container].openable) =>
                    {
                        world.objects.get_mut(&item).map(|o| o.location = container.clone());
                        format!("You put the {item} in the {container}.")
                    }
                    _ => NOTHING.to_string(),
                }
            }
            "activate" => match world.find(&arg).filter(|n| world.accessible(n)) {
                Some(name) if world.objects[&name].activatable && !world.objects[&name].active => {
                    world.objects.get_mut(&name).map(|o| o.active = true);
                    format!("The {name} is now activated.")
                }
                _ => NOTHING.to_string(),
            },
            "measure" => match world.find(&arg).filter(|n| world.accessible(n)) {
                Some(name) => match world.objects[&name].measurement.clone() {
                    Some(value) => {
                        world.measured.insert(name.clone());
                        format!("The {name} measures {value}.")
                    }
                    None => NOTHING.to_string(),
                },
                None => NOTHING.to_string(),
            },
            "focus" => match world.find(&arg).filter(|n| world.accessible(n)) {
                Some(name) => {
                    world.focused.insert(name.clone());
                    format!("You focus on the {name}.")
                }
                None => NOTHING.to_string(),
            },
            _ => NOTHING.to_string(),
        }
    }
}

impl Environment for TextLab {
    fn kind(&self) -> EnvKind {
        EnvKind::TextLab
    }

    fn reset(&mut self, task: &TaskInstance) -> Result<String, EnvError> {
        let Payload::TextLab(payload) = &task.payload else {
            return Err(EnvError::PayloadMismatch {
                task: task.id.clone(),
                expected: EnvKind::TextLab.as_str(),
                found: task.payload.kind().as_str(),
            });
        };
        self.world = LabWorld {
            rooms: payload.rooms.iter().map(|r| (r.name.clone(), r.clone())).collect(),
            agent_room: payload.start_room.clone(),
            objects: payload.objects.iter().map(|o| (o.name.clone(), o.clone())).collect(),
            measured: BTreeSet::new(),
            focused: BTreeSet::new(),
        };
        self.goals = payload.goals.clone();
        self.satisfied = vec![false; self.goals.len()];
        self.loaded = true;
        self.latch();
        Ok(format!("Task: {}\n{}", task.query, self.world.describe_room()))
    }

    fn step(&mut self, action: &str) -> Result<StepResult, EnvError> {
        if !self.loaded {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::AlreadyDone);
        }
        let before = self.reward();
        let observation = self.apply(action);
        self.latch();
        Ok(StepResult {
            observation,
            reward_delta: Some(self.reward() - before),
            done: self.done,
        })
    }

    fn admissible_commands(&self) -> Vec<String> {
        vec![
            "go <room>: move to an adjacent room".into(),
            "open <object>: open a container or door".into(),
            "take <object>: pick up an object".into(),
            "put <object> in <container>: place a held object into a container".into(),
            "activate <object>: switch on a device".into(),
            "measure <object>: read a measurable property".into(),
            "focus <object>: focus on an object to signal it is the subject of the task".into(),
        ]
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn metrics(&self) -> EnvMetrics {
        EnvMetrics {
            done: self.done,
            delivered: self.done,
            reward: Some(self.reward()),
            answer: None,
            plan: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::Gold;

    fn object(name: &str, location: &str) -> LabObject {
        LabObject {
            name: name.into(),
            location: location.into(),
            portable: false,
            container: false,
            openable: false,
            open: false,
            activatable: false,
            active: false,
            measurement: None,
        }
    }

    fn lab(goals: Vec<GoalCondition>) -> TaskInstance {
        let mut thermometer = object("thermometer", "kitchen");
        thermometer.portable = true;
        let mut fridge = object("fridge", "kitchen");
        fridge.container = true;
        fridge.openable = true;
        let mut water = object("water", "fridge");
        water.measurement = Some("4 degrees".into());
        let mut stove = object("stove", "kitchen");
        stove.activatable = true;
        TaskInstance {
            version: 1,
            id: "lab".into(),
            query: "Measure the temperature of the water.".into(),
            gold: Gold::default(),
            payload: Payload::TextLab(LabPayload {
                rooms: vec![
                    Room {
                        name: "hallway".into(),
                        exits: vec!["kitchen".into()],
                    },
                    Room {
                        name: "kitchen".into(),
                        exits: vec!["hallway".into()],
                    },
                ],
                start_room: "hallway".into(),
                objects: vec![thermometer, fridge, water, stove],
                goals,
            }),
        }
    }

    #[test]
    fn empty_goal_set_is_vacuously_done() {
        let mut env = TextLab::default();
        env.reset(&lab(vec![])).unwrap();
        assert!(env.is_done());
        assert_eq!(env.metrics().reward, Some(1.0));
        assert_eq!(env.step("go kitchen"), Err(EnvError::AlreadyDone));
    }

    #[test]
    fn equal_shares() {
        let goals = vec![
            GoalCondition::AgentIn { room: "kitchen".into() },
            GoalCondition::IsOpen { object: "fridge".into() },
            GoalCondition::Measured { object: "water".into() },
            GoalCondition::IsActive { object: "stove".into() },
        ];
        let mut env = TextLab::default();
        env.reset(&lab(goals)).unwrap();
        assert_eq!(env.step("go to kitchen").unwrap().reward_delta, Some(0.25));
        env.step("open fridge").unwrap();
        assert_eq!(env.reward(), 0.5);
        // water inside the open fridge is reachable
        assert_eq!(env.step("measure water").unwrap().observation, "The water measures 4 degrees.");
        let last = env.step("activate stove").unwrap();
        assert!(last.done);
        assert_eq!(env.reward(), 1.0);
    }

    #[test]
    fn inapplicable_verbs_do_nothing() {
        let mut env = TextLab::default();
        env.reset(&lab(vec![GoalCondition::Measured { object: "water".into() }])).unwrap();
        for action in ["measure water", "take fridge", "open stove", "dance", "", "go attic", "put water in fridge"] {
            let r = env.step(action).unwrap();
            assert_eq!(r.observation, NOTHING, "{action}");
            assert_eq!(r.reward_delta, Some(0.0));
        }
    }

    #[test]
    fn put_requires_open_container() {
        let mut env = TextLab::default();
        env.reset(&lab(vec![GoalCondition::ObjectIn {
            object: "thermometer".into(),
            container: "fridge".into(),
        }]))
        .unwrap();
        env.step("go kitchen").unwrap();
        env.step("take thermometer").unwrap();
        assert_eq!(env.step("put thermometer in fridge").unwrap().observation, NOTHING);
        env.step("open fridge").unwrap();
        let r = env.step("put thermometer in fridge").unwrap();
        assert!(r.done);
    }

    #[test]
    fn fixture_validation() {
        assert!(lab(vec![GoalCondition::Holding { object: "unicorn".into() }])
            .validate()
            .is_err());
        assert!(lab(vec![GoalCondition::AgentIn { room: "kitchen".into() }]).validate().is_ok());
    }
}
