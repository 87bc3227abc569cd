//! Desk-scale science text world: several rooms, devices and containers,
//! ordered subgoals with a dense completion reward.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GeneratedTask;

pub const SEEN_TEMPLATES: &[&str] = &["boil", "wash"];
pub const UNSEEN_TEMPLATES: &[&str] = &["freeze"];
pub const SEEN_SUBSTANCES: &[&str] = &["water", "milk", "apple juice"];
pub const UNSEEN_SUBSTANCES: &[&str] = &["orange juice", "vinegar"];

const ROOMS: &[&str] = &["kitchen", "workshop", "greenhouse", "bathroom"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SciObject {
    pub name: String,
    /// Room index; `None` means held by the agent.
    pub room: Option<usize>,
    pub is_device: bool,
    pub active: bool,
    /// Device this object currently sits on, if any.
    pub placed_on: Option<String>,
    /// Container holding this substance, if poured.
    pub inside: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SciGoal {
    /// Pour the substance into the pot, put the pot on the stove, activate it.
    Boil { substance: String },
    /// Put the instrument on the sink and activate it.
    Wash { instrument: String },
    /// Pour the substance into the tray, put the tray in the freezer, activate it.
    Freeze { substance: String },
}

impl SciGoal {
    pub fn text(&self) -> String {
        match self {
            SciGoal::Boil { substance } => format!("boil the {substance}"),
            SciGoal::Wash { instrument } => format!("wash the {instrument}"),
            SciGoal::Freeze { substance } => format!("freeze the {substance}"),
        }
    }

    pub fn template(&self) -> &'static str {
        match self {
            SciGoal::Boil { .. } => "boil",
            SciGoal::Wash { .. } => "wash",
            SciGoal::Freeze { .. } => "freeze",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScienceWorld {
    pub objects: Vec<SciObject>,
    pub agent_room: usize,
    pub holding: Option<usize>,
    pub goal: SciGoal,
    pub examined_result: bool,
}

impl ScienceWorld {
    fn object(&self, name: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.name == name)
    }

    fn in_reach(&self, oi: usize) -> bool {
        self.holding == Some(oi) || self.objects[oi].room == Some(self.agent_room)
    }

    pub fn initial_observation(&self) -> String {
        format!(
            "You find yourself in the {}. Doors lead to the other rooms.",
            ROOMS[self.agent_room]
        )
    }

    fn room_contents(&self) -> String {
        let here: Vec<String> = self
            .objects
            .iter()
            .filter(|o| o.room == Some(self.agent_room))
            .map(|o| format!("a {}", o.name))
            .collect();
        if here.is_empty() {
            "nothing of note".to_string()
        } else {
            here.join(", ")
        }
    }

    pub fn available_actions(&self) -> Vec<String> {
        let mut acts = Vec::new();
        for r in ROOMS {
            acts.push(format!("teleport to {r}"));
        }
        acts.push("look around".to_string());
        let devices: Vec<&str> = self
            .objects
            .iter()
            .filter(|o| o.is_device)
            .map(|o| o.name.as_str())
            .collect();
        for o in &self.objects {
            if o.is_device {
                acts.push(format!("activate {}", o.name));
            } else {
                acts.push(format!("take {}", o.name));
                for c in ["metal pot", "ice tray"] {
                    if self.object(c).is_some() && o.name != c {
                        acts.push(format!("pour {} into {c}", o.name));
                    }
                }
                for d in &devices {
                    acts.push(format!("move {} to {d}", o.name));
                }
            }
            acts.push(format!("examine {}", o.name));
        }
        acts
    }

    pub fn apply(&mut self, action: &str) -> Option<String> {
        if let Some(room) = action.strip_prefix("teleport to ") {
            let ri = ROOMS.iter().position(|r| *r == room)?;
            self.agent_room = ri;
            return Some(format!("You teleport to the {room}. You see {}.", self.room_contents()));
        }
        if action == "look around" {
            return Some(format!(
                "You are in the {}. You see {}.",
                ROOMS[self.agent_room],
                self.room_contents()
            ));
        }
        if let Some(name) = action.strip_prefix("take ") {
            let oi = self.object(name)?;
            if self.objects[oi].is_device
                || self.objects[oi].room != Some(self.agent_room)
                || self.holding.is_some()
            {
                return None;
            }
            self.objects[oi].room = None;
            self.holding = Some(oi);
            return Some(format!("You pick up the {name}."));
        }
        if let Some(rest) = action.strip_prefix("pour ") {
            let (subst, container) = rest.split_once(" into ")?;
            let si = self.object(subst)?;
            let ci = self.object(container)?;
            if self.holding != Some(si) || !self.in_reach(ci) || self.objects[si].is_device {
                return None;
            }
            self.objects[si].inside = Some(container.to_string());
            self.objects[si].room = self.objects[ci].room;
            self.holding = None;
            return Some(format!("You pour the {subst} into the {container}."));
        }
        if let Some(rest) = action.strip_prefix("move ") {
            let (obj, device) = rest.split_once(" to ")?;
            let oi = self.object(obj)?;
            let di = self.object(device)?;
            if !self.objects[di].is_device
                || !self.in_reach(di)
                || !(self.in_reach(oi) || self.holding == Some(oi))
            {
                return None;
            }
            if self.holding == Some(oi) {
                self.holding = None;
            }
            self.objects[oi].room = self.objects[di].room;
            let device_name = self.objects[di].name.clone();
            self.objects[oi].placed_on = Some(device_name);
            // whatever was poured inside moves along
            let carried: Vec<usize> = self
                .objects
                .iter()
                .enumerate()
                .filter(|(_, c)| c.inside.as_deref() == Some(obj))
                .map(|(i, _)| i)
                .collect();
            for c in carried {
                self.objects[c].room = self.objects[di].room;
            }
            return Some(format!("You move the {obj} to the {device}."));
        }
        if let Some(name) = action.strip_prefix("activate ") {
            let oi = self.object(name)?;
            if !self.objects[oi].is_device || self.objects[oi].room != Some(self.agent_room) {
                return None;
            }
            self.objects[oi].active = true;
            return Some(format!("The {name} is now activated."));
        }
        if let Some(name) = action.strip_prefix("examine ") {
            let oi = self.object(name)?;
            if !self.in_reach(oi) {
                return None;
            }
            let processed = self.processing_complete();
            let target = self.goal_object();
            if name == target && processed {
                self.examined_result = true;
                let verb = match self.goal {
                    SciGoal::Boil { .. } => "boiling",
                    SciGoal::Wash { .. } => "clean",
                    SciGoal::Freeze { .. } => "frozen",
                };
                return Some(format!("The {name} is {verb}."));
            }
            return Some(format!("You examine the {name}. Nothing unusual."));
        }
        None
    }

    fn goal_object(&self) -> &str {
        match &self.goal {
            SciGoal::Boil { substance } | SciGoal::Freeze { substance } => substance,
            SciGoal::Wash { instrument } => instrument,
        }
    }

    fn device_and_container(&self) -> (&'static str, Option<&'static str>) {
        match &self.goal {
            SciGoal::Boil { .. } => ("stove", Some("metal pot")),
            SciGoal::Wash { .. } => ("sink", None),
            SciGoal::Freeze { .. } => ("freezer", Some("ice tray")),
        }
    }

    /// All pre-examination subgoals hold: substance in its container, the
    /// container (or instrument) on the device, device activated.
    fn processing_complete(&self) -> bool {
        let (satisfied, total) = self.subgoals();
        satisfied >= total - 1
    }

    pub fn goal_met(&self) -> bool {
        self.examined_result
    }

    pub fn subgoals(&self) -> (usize, usize) {
        let (device, container) = self.device_and_container();
        let target = self.goal_object().to_string();
        let ti = self.object(&target).unwrap();
        let di = self.object(device);
        let mut satisfied = 0;
        let mut total = 0;

        // handled: target has left its starting spot
        total += 1;
        if self.holding == Some(ti)
            || self.objects[ti].inside.is_some()
            || self.objects[ti].placed_on.is_some()
        {
            satisfied += 1;
        }
        if let Some(c) = container {
            total += 1;
            if self.objects[ti].inside.as_deref() == Some(c) {
                satisfied += 1;
            }
            total += 1;
            let on_device = self
                .object(c)
                .map(|ci| self.objects[ci].placed_on.as_deref() == Some(device))
                .unwrap_or(false);
            if on_device {
                satisfied += 1;
            }
        } else {
            total += 1;
            if self.objects[ti].placed_on.as_deref() == Some(device) {
                satisfied += 1;
            }
        }
        total += 1;
        if di.map(|d| self.objects[d].active).unwrap_or(false) {
            satisfied += 1;
        }
        total += 1;
        if self.examined_result {
            satisfied += 1;
        }
        (satisfied, total)
    }
}

pub fn generate(rng: &mut impl Rng, unseen: bool) -> GeneratedTask<ScienceWorld> {
    let templates: &[&str] = if unseen { UNSEEN_TEMPLATES } else { SEEN_TEMPLATES };
    let template = *templates.choose(rng).unwrap();
    let kitchen = 0;
    let bathroom = 3;

    let mut objects = vec![
        SciObject {
            name: "stove".into(),
            room: Some(kitchen),
            is_device: true,
            active: false,
            placed_on: None,
            inside: None,
        },
        SciObject {
            name: "freezer".into(),
            room: Some(kitchen),
            is_device: true,
            active: false,
            placed_on: None,
            inside: None,
        },
        SciObject {
            name: "sink".into(),
            room: Some(bathroom),
            is_device: true,
            active: false,
            placed_on: None,
            inside: None,
        },
        SciObject {
            name: "metal pot".into(),
            room: Some(kitchen),
            is_device: false,
            active: false,
            placed_on: None,
            inside: None,
        },
        SciObject {
            name: "ice tray".into(),
            room: Some(kitchen),
            is_device: false,
            active: false,
            placed_on: None,
            inside: None,
        },
    ];

    let goal;
    let target_name;
    let target_room;
    match template {
        "wash" => {
            let instruments = ["beaker", "flask", "petri dish"];
            target_name = (*instruments.choose(rng).unwrap()).to_string();
            target_room = rng.random_range(1..ROOMS.len());
            goal = SciGoal::Wash { instrument: target_name.clone() };
        }
        "freeze" => {
            target_name = (*UNSEEN_SUBSTANCES.choose(rng).unwrap()).to_string();
            target_room = rng.random_range(0..ROOMS.len());
            goal = SciGoal::Freeze { substance: target_name.clone() };
        }
        _ => {
            target_name = (*SEEN_SUBSTANCES.choose(rng).unwrap()).to_string();
            target_room = rng.random_range(0..ROOMS.len());
            goal = SciGoal::Boil { substance: target_name.clone() };
        }
    }
    objects.push(SciObject {
        name: target_name.clone(),
        room: Some(target_room),
        is_device: false,
        active: false,
        placed_on: None,
        inside: None,
    });

    let world = ScienceWorld {
        objects,
        agent_room: rng.random_range(0..ROOMS.len()),
        holding: None,
        goal: goal.clone(),
        examined_result: false,
    };

    let mut plan = vec![format!("teleport to {}", ROOMS[target_room]), "look around".to_string(), format!("take {target_name}")];
    match &goal {
        SciGoal::Boil { .. } => {
            plan.push(format!("teleport to {}", ROOMS[kitchen]));
            plan.push(format!("pour {target_name} into metal pot"));
            plan.push("move metal pot to stove".to_string());
            plan.push("activate stove".to_string());
            plan.push(format!("examine {target_name}"));
        }
        SciGoal::Freeze { .. } => {
            plan.push(format!("teleport to {}", ROOMS[kitchen]));
            plan.push(format!("pour {target_name} into ice tray"));
            plan.push("move ice tray to freezer".to_string());
            plan.push("activate freezer".to_string());
            plan.push(format!("examine {target_name}"));
        }
        SciGoal::Wash { .. } => {
            plan.push(format!("teleport to {}", ROOMS[bathroom]));
            plan.push(format!("move {target_name} to sink"));
            plan.push("activate sink".to_string());
            plan.push(format!("examine {target_name}"));
        }
    }

    let instruction = format!("{} Your task is to: {}.", world.initial_observation(), goal.text());
    GeneratedTask {
        instruction,
        initial_observation: world.initial_observation(),
        oracle_plan: plan,
        goal_template: goal.template().to_string(),
        world,
    }
}
