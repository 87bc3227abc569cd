//! Desk-scale household text world: one room of receptacles and objects,
//! ALFWorld-flavored action grammar and observations.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GeneratedTask;

pub const SEEN_TEMPLATES: &[&str] = &["put", "clean", "heat"];
pub const UNSEEN_TEMPLATES: &[&str] = &["cool", "examine"];
pub const SEEN_OBJECTS: &[&str] = &["soapbar", "book", "mug", "apple", "cellphone", "keychain"];
pub const UNSEEN_OBJECTS: &[&str] = &["candle", "pillow", "watch"];

const SURFACE_KINDS: &[&str] = &[
    "bed", "desk", "shelf", "dresser", "sidetable", "countertop", "toilet",
];
const DEST_KINDS: &[&str] = &["cabinet", "drawer", "shelf", "dresser"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Receptacle {
    pub name: String,
    pub kind: String,
    pub openable: bool,
    pub open: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEntity {
    pub name: String,
    pub kind: String,
    /// Receptacle index; `None` means in the agent's inventory.
    pub location: Option<usize>,
    pub clean: bool,
    pub heated: bool,
    pub cooled: bool,
    pub examined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Goal {
    Put { obj_kind: String, dest_kind: String },
    Clean { obj_kind: String, dest_kind: String },
    Heat { obj_kind: String, dest_kind: String },
    Cool { obj_kind: String, dest_kind: String },
    Examine { obj_kind: String },
}

impl Goal {
    pub fn text(&self) -> String {
        match self {
            Goal::Put { obj_kind, dest_kind } => format!("put a {obj_kind} in/on {dest_kind}"),
            Goal::Clean { obj_kind, dest_kind } => {
                format!("clean some {obj_kind} and put it in {dest_kind}")
            }
            Goal::Heat { obj_kind, dest_kind } => {
                format!("heat some {obj_kind} and put it in {dest_kind}")
            }
            Goal::Cool { obj_kind, dest_kind } => {
                format!("cool some {obj_kind} and put it in {dest_kind}")
            }
            Goal::Examine { obj_kind } => format!("examine the {obj_kind} with the desklamp"),
        }
    }

    pub fn template(&self) -> &'static str {
        match self {
            Goal::Put { .. } => "put",
            Goal::Clean { .. } => "clean",
            Goal::Heat { .. } => "heat",
            Goal::Cool { .. } => "cool",
            Goal::Examine { .. } => "examine",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdWorld {
    pub receptacles: Vec<Receptacle>,
    pub objects: Vec<ObjectEntity>,
    pub agent_at: Option<usize>,
    pub inventory: Option<usize>,
    pub goal: Goal,
}

impl HouseholdWorld {
    fn recep(&self, name: &str) -> Option<usize> {
        self.receptacles.iter().position(|r| r.name == name)
    }

    fn object(&self, name: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.name == name)
    }

    fn contents(&self, ri: usize) -> Vec<&str> {
        self.objects
            .iter()
            .filter(|o| o.location == Some(ri))
            .map(|o| o.name.as_str())
            .collect()
    }

    fn describe(&self, ri: usize) -> String {
        let r = &self.receptacles[ri];
        if r.openable && !r.open {
            return format!("The {} is closed.", r.name);
        }
        let items = self.contents(ri);
        let listing = if items.is_empty() {
            "nothing".to_string()
        } else {
            items
                .iter()
                .map(|n| format!("a {n}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        if r.openable {
            format!("The {} is open. In it, you see {listing}.", r.name)
        } else {
            format!("On the {}, you see {listing}.", r.name)
        }
    }

    pub fn initial_observation(&self) -> String {
        format!(
            "You are in the middle of a room. Looking quickly around you, you see {}.",
            self.receptacle_listing()
        )
    }

    pub fn receptacle_listing(&self) -> String {
        let names: Vec<String> = self.receptacles.iter().map(|r| format!("a {}", r.name)).collect();
        match names.len() {
            0 => String::new(),
            1 => names[0].clone(),
            _ => format!(
                "{}, and {}",
                names[..names.len() - 1].join(", "),
                names[names.len() - 1]
            ),
        }
    }

    /// Admissible commands in the current state, mirroring ALFWorld's
    /// state-dependent action listing.
    pub fn available_actions(&self) -> Vec<String> {
        let mut acts = Vec::new();
        for r in &self.receptacles {
            acts.push(format!("go to {}", r.name));
        }
        if let Some(ri) = self.agent_at {
            let r = &self.receptacles[ri];
            if r.openable {
                if r.open {
                    acts.push(format!("close {}", r.name));
                } else {
                    acts.push(format!("open {}", r.name));
                }
            }
            let reachable = !r.openable || r.open;
            if reachable {
                for o in &self.objects {
                    if o.location != Some(ri) {
                        continue;
                    }
                    if self.inventory.is_none() {
                        acts.push(format!("take {} from {}", o.name, r.name));
                    }
                    acts.push(format!("examine {}", o.name));
                }
                if let Some(held) = self.inventory {
                    let held_name = self.objects[held].name.clone();
                    acts.push(format!("put {} in/on {}", held_name, r.name));
                    match r.kind.as_str() {
                        "sinkbasin" => acts.push(format!("clean {held_name} with {}", r.name)),
                        "microwave" => acts.push(format!("heat {held_name} with {}", r.name)),
                        "fridge" => acts.push(format!("cool {held_name} with {}", r.name)),
                        _ => {}
                    }
                }
                if self
                    .objects
                    .iter()
                    .any(|o| o.kind == "desklamp" && o.location == Some(ri))
                {
                    acts.push("use desklamp 1".to_string());
                }
            }
        }
        if let Some(held) = self.inventory {
            acts.push(format!("examine {}", self.objects[held].name));
        }
        acts
    }

    /// Attempt the action; `None` means invalid and the world is untouched.
    pub fn apply(&mut self, action: &str) -> Option<String> {
        if let Some(name) = action.strip_prefix("go to ") {
            let ri = self.recep(name)?;
            self.agent_at = Some(ri);
            return Some(format!("You arrive at {}. {}", name, self.describe(ri)));
        }
        if let Some(name) = action.strip_prefix("open ") {
            let ri = self.recep(name)?;
            if self.agent_at != Some(ri) || !self.receptacles[ri].openable || self.receptacles[ri].open {
                return None;
            }
            self.receptacles[ri].open = true;
            return Some(format!("You open the {name}. {}", self.describe(ri)));
        }
        if let Some(name) = action.strip_prefix("close ") {
            let ri = self.recep(name)?;
            if self.agent_at != Some(ri) || !self.receptacles[ri].openable || !self.receptacles[ri].open {
                return None;
            }
            self.receptacles[ri].open = false;
            return Some(format!("You close the {name}."));
        }
        if let Some(rest) = action.strip_prefix("take ") {
            let (obj, recep) = rest.split_once(" from ")?;
            let oi = self.object(obj)?;
            let ri = self.recep(recep)?;
            let r = &self.receptacles[ri];
            if self.agent_at != Some(ri)
                || self.objects[oi].location != Some(ri)
                || (r.openable && !r.open)
                || self.inventory.is_some()
            {
                return None;
            }
            self.objects[oi].location = None;
            self.inventory = Some(oi);
            return Some(format!("You pick up the {obj} from the {recep}."));
        }
        if let Some(rest) = action.strip_prefix("put ") {
            let (obj, recep) = rest.split_once(" in/on ")?;
            let oi = self.object(obj)?;
            let ri = self.recep(recep)?;
            let r = &self.receptacles[ri];
            if self.agent_at != Some(ri) || self.inventory != Some(oi) || (r.openable && !r.open) {
                return None;
            }
            self.objects[oi].location = Some(ri);
            self.inventory = None;
            return Some(format!("You put the {obj} in/on the {recep}."));
        }
        for (verb, fixture) in [
            ("clean ", "sinkbasin"),
            ("heat ", "microwave"),
            ("cool ", "fridge"),
        ] {
            if let Some(rest) = action.strip_prefix(verb) {
                let (obj, recep) = rest.split_once(" with ")?;
                let oi = self.object(obj)?;
                let ri = self.recep(recep)?;
                if self.receptacles[ri].kind != fixture
                    || self.agent_at != Some(ri)
                    || self.inventory != Some(oi)
                {
                    return None;
                }
                match fixture {
                    "sinkbasin" => self.objects[oi].clean = true,
                    "microwave" => self.objects[oi].heated = true,
                    _ => self.objects[oi].cooled = true,
                }
                let done = verb.trim_end();
                return Some(format!("You {done} the {obj} using the {recep}."));
            }
        }
        if let Some(name) = action.strip_prefix("use ") {
            let oi = self.object(name)?;
            if self.objects[oi].kind != "desklamp" {
                return None;
            }
            let lamp_at = self.objects[oi].location?;
            if self.agent_at != Some(lamp_at) {
                return None;
            }
            if let Some(held) = self.inventory {
                self.objects[held].examined = true;
            }
            return Some(format!("You turn on the {name}."));
        }
        if let Some(name) = action.strip_prefix("examine ") {
            let oi = self.object(name)?;
            let visible = self.inventory == Some(oi)
                || (self.objects[oi].location.is_some()
                    && self.objects[oi].location == self.agent_at);
            if !visible {
                return None;
            }
            return Some(format!("You examine the {name}."));
        }
        None
    }

    fn object_meets_goal(&self, o: &ObjectEntity) -> bool {
        let placed_in = |dest_kind: &str| {
            o.location
                .map(|ri| self.receptacles[ri].kind == dest_kind)
                .unwrap_or(false)
        };
        match &self.goal {
            Goal::Put { obj_kind, dest_kind } => o.kind == *obj_kind && placed_in(dest_kind),
            Goal::Clean { obj_kind, dest_kind } => {
                o.kind == *obj_kind && o.clean && placed_in(dest_kind)
            }
            Goal::Heat { obj_kind, dest_kind } => {
                o.kind == *obj_kind && o.heated && placed_in(dest_kind)
            }
            Goal::Cool { obj_kind, dest_kind } => {
                o.kind == *obj_kind && o.cooled && placed_in(dest_kind)
            }
            Goal::Examine { obj_kind } => o.kind == *obj_kind && o.examined,
        }
    }

    pub fn goal_met(&self) -> bool {
        self.objects.iter().any(|o| self.object_meets_goal(o))
    }

    /// (satisfied, total) subgoals for dense reward.
    pub fn subgoals(&self) -> (usize, usize) {
        let obj_kind = match &self.goal {
            Goal::Put { obj_kind, .. }
            | Goal::Clean { obj_kind, .. }
            | Goal::Heat { obj_kind, .. }
            | Goal::Cool { obj_kind, .. }
            | Goal::Examine { obj_kind } => obj_kind,
        };
        let handled = self.objects.iter().enumerate().any(|(i, o)| {
            o.kind == *obj_kind
                && (self.inventory == Some(i)
                    || o.clean
                    || o.heated
                    || o.cooled
                    || o.examined
                    || self.object_meets_goal(o))
        });
        match &self.goal {
            Goal::Put { .. } | Goal::Examine { .. } => {
                (usize::from(handled) + usize::from(self.goal_met()), 2)
            }
            Goal::Clean { .. } => {
                let treated = self.objects.iter().any(|o| o.kind == *obj_kind && o.clean);
                (usize::from(handled) + usize::from(treated) + usize::from(self.goal_met()), 3)
            }
            Goal::Heat { .. } => {
                let treated = self.objects.iter().any(|o| o.kind == *obj_kind && o.heated);
                (usize::from(handled) + usize::from(treated) + usize::from(self.goal_met()), 3)
            }
            Goal::Cool { .. } => {
                let treated = self.objects.iter().any(|o| o.kind == *obj_kind && o.cooled);
                (usize::from(handled) + usize::from(treated) + usize::from(self.goal_met()), 3)
            }
        }
    }
}

/// Deterministically generate the world, goal and oracle plan for one task.
pub fn generate(rng: &mut impl Rng, unseen: bool) -> GeneratedTask<HouseholdWorld> {
    let (templates, objects): (&[&str], &[&str]) = if unseen {
        (UNSEEN_TEMPLATES, UNSEEN_OBJECTS)
    } else {
        (SEEN_TEMPLATES, SEEN_OBJECTS)
    };
    let template = *templates.choose(rng).unwrap();
    let obj_kind = (*objects.choose(rng).unwrap()).to_string();

    let mut receptacles = Vec::new();
    let n_cabinets = rng.random_range(1..=3);
    for i in 1..=n_cabinets {
        receptacles.push(Receptacle {
            name: format!("cabinet {i}"),
            kind: "cabinet".into(),
            openable: true,
            open: false,
        });
    }
    let n_drawers = rng.random_range(1..=3);
    for i in 1..=n_drawers {
        receptacles.push(Receptacle {
            name: format!("drawer {i}"),
            kind: "drawer".into(),
            openable: true,
            open: false,
        });
    }
    let mut surfaces: Vec<&str> = SURFACE_KINDS.to_vec();
    surfaces.shuffle(rng);
    let n_surfaces = rng.random_range(3..=4);
    for kind in surfaces.iter().take(n_surfaces) {
        receptacles.push(Receptacle {
            name: format!("{kind} 1"),
            kind: (*kind).to_string(),
            openable: false,
            open: false,
        });
    }
    for fixture in ["sinkbasin", "microwave", "fridge", "garbagecan"] {
        receptacles.push(Receptacle {
            name: format!("{fixture} 1"),
            kind: fixture.into(),
            openable: false,
            open: false,
        });
    }
    receptacles.sort_by(|a, b| a.name.cmp(&b.name));

    // destination kind must be present in this room and differ from source
    let present_dest_kinds: Vec<&str> = DEST_KINDS
        .iter()
        .copied()
        .filter(|k| receptacles.iter().any(|r| r.kind == *k))
        .collect();
    let dest_kind = (*present_dest_kinds.choose(rng).unwrap()).to_string();

    let source_candidates: Vec<usize> = receptacles
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            r.kind != dest_kind
                && !matches!(r.kind.as_str(), "sinkbasin" | "microwave" | "fridge" | "garbagecan")
        })
        .map(|(i, _)| i)
        .collect();
    let source = *source_candidates.choose(rng).unwrap();

    let mut objects_v = vec![ObjectEntity {
        name: format!("{obj_kind} 1"),
        kind: obj_kind.clone(),
        location: Some(source),
        clean: false,
        heated: false,
        cooled: false,
        examined: false,
    }];

    // desklamp for the examine template sits on a non-openable surface
    let lamp_at = if template == "examine" {
        let lamp_candidates: Vec<usize> = receptacles
            .iter()
            .enumerate()
            .filter(|(i, r)| !r.openable && *i != source && r.kind != "garbagecan")
            .map(|(i, _)| i)
            .collect();
        let at = *lamp_candidates.choose(rng).unwrap();
        objects_v.push(ObjectEntity {
            name: "desklamp 1".into(),
            kind: "desklamp".into(),
            location: Some(at),
            clean: false,
            heated: false,
            cooled: false,
            examined: false,
        });
        Some(at)
    } else {
        None
    };

    // decoys
    let decoy_pool: Vec<&&str> = objects.iter().filter(|k| **k != obj_kind).collect();
    for d in decoy_pool.iter().take(2) {
        let at = rng.random_range(0..receptacles.len());
        objects_v.push(ObjectEntity {
            name: format!("{} 1", d),
            kind: (**d).to_string(),
            location: Some(at),
            clean: false,
            heated: false,
            cooled: false,
            examined: false,
        });
    }

    let goal = match template {
        "put" => Goal::Put { obj_kind: obj_kind.clone(), dest_kind: dest_kind.clone() },
        "clean" => Goal::Clean { obj_kind: obj_kind.clone(), dest_kind: dest_kind.clone() },
        "heat" => Goal::Heat { obj_kind: obj_kind.clone(), dest_kind: dest_kind.clone() },
        "cool" => Goal::Cool { obj_kind: obj_kind.clone(), dest_kind: dest_kind.clone() },
        _ => Goal::Examine { obj_kind: obj_kind.clone() },
    };

    let world = HouseholdWorld {
        receptacles,
        objects: objects_v,
        agent_at: None,
        inventory: None,
        goal: goal.clone(),
    };

    let obj_name = format!("{obj_kind} 1");
    let src_name = world.receptacles[source].name.clone();
    let mut plan = vec![format!("go to {src_name}")];
    if world.receptacles[source].openable {
        plan.push(format!("open {src_name}"));
    }
    plan.push(format!("take {obj_name} from {src_name}"));
    match &goal {
        Goal::Clean { .. } => {
            plan.push("go to sinkbasin 1".into());
            plan.push(format!("clean {obj_name} with sinkbasin 1"));
        }
        Goal::Heat { .. } => {
            plan.push("go to microwave 1".into());
            plan.push(format!("heat {obj_name} with microwave 1"));
        }
        Goal::Cool { .. } => {
            plan.push("go to fridge 1".into());
            plan.push(format!("cool {obj_name} with fridge 1"));
        }
        _ => {}
    }
    match &goal {
        Goal::Examine { .. } => {
            let lamp_name = world.receptacles[lamp_at.unwrap()].name.clone();
            plan.push(format!("go to {lamp_name}"));
            plan.push("use desklamp 1".into());
        }
        _ => {
            let dest = world
                .receptacles
                .iter()
                .position(|r| r.kind == dest_kind)
                .unwrap();
            let dest_name = world.receptacles[dest].name.clone();
            plan.push(format!("go to {dest_name}"));
            if world.receptacles[dest].openable {
                plan.push(format!("open {dest_name}"));
            }
            plan.push(format!("put {obj_name} in/on {dest_name}"));
        }
    }

    let instruction = format!(
        "{} Your task is to: {}.",
        world.initial_observation(),
        goal.text()
    );
    GeneratedTask {
        instruction,
        initial_observation: world.initial_observation(),
        oracle_plan: plan,
        goal_template: goal.template().to_string(),
        world,
    }
}
