//! Desk-scale online-shopping text world: search, click, buy, with a dense
//! attribute-match reward.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GeneratedTask;

pub const SEEN_CATEGORIES: &[&str] = &["mug", "lamp", "backpack", "notebook"];
pub const UNSEEN_CATEGORIES: &[&str] = &["keyboard", "blanket"];
const COLORS: &[&str] = &["red", "blue", "green", "black", "white"];
const MATERIALS: &[&str] = &["ceramic", "steel", "cotton", "leather", "plastic"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub title: String,
    pub category: String,
    pub color: String,
    pub material: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "page", rename_all = "lowercase")]
pub enum Page {
    Home,
    Results { query: String },
    Product { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShoppingWorld {
    pub catalog: Vec<Product>,
    pub target: usize,
    pub page: Page,
    pub bought: Option<usize>,
}

impl ShoppingWorld {
    fn matching(&self, query: &str) -> Vec<usize> {
        self.catalog
            .iter()
            .enumerate()
            .filter(|(_, p)| p.category == query || p.title.contains(query))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn initial_observation(&self) -> String {
        "You are on the homepage of an online shop. There is a search bar.".to_string()
    }

    pub fn available_actions(&self) -> Vec<String> {
        let mut acts = Vec::new();
        let mut categories: Vec<&str> = self.catalog.iter().map(|p| p.category.as_str()).collect();
        categories.sort_unstable();
        categories.dedup();
        for c in categories {
            acts.push(format!("search[{c}]"));
        }
        for p in &self.catalog {
            acts.push(format!("click[{}]", p.title));
        }
        acts.push("click[buy now]".to_string());
        acts.push("click[back to search]".to_string());
        acts
    }

    pub fn apply(&mut self, action: &str) -> Option<String> {
        if self.bought.is_some() {
            return None;
        }
        if let Some(query) = action.strip_prefix("search[").and_then(|r| r.strip_suffix(']')) {
            let hits = self.matching(query);
            let listing = if hits.is_empty() {
                "no results".to_string()
            } else {
                hits.iter()
                    .map(|&i| self.catalog[i].title.clone())
                    .collect::<Vec<_>>()
                    .join("; ")
            };
            self.page = Page::Results { query: query.to_string() };
            return Some(format!("Search results for \"{query}\": {listing}."));
        }
        if let Some(arg) = action.strip_prefix("click[").and_then(|r| r.strip_suffix(']')) {
            match arg {
                "buy now" => {
                    let Page::Product { index } = self.page else {
                        return None;
                    };
                    self.bought = Some(index);
                    return Some(format!(
                        "You bought the {}. Thank you for your order.",
                        self.catalog[index].title
                    ));
                }
                "back to search" => {
                    self.page = Page::Home;
                    return Some("You are back on the homepage.".to_string());
                }
                title => {
                    let Page::Results { query } = &self.page else {
                        return None;
                    };
                    let listed = self.matching(query);
                    let idx = listed
                        .into_iter()
                        .find(|&i| self.catalog[i].title == title)?;
                    let p = &self.catalog[idx];
                    self.page = Page::Product { index: idx };
                    return Some(format!(
                        "You are viewing {}. Category: {}. Color: {}. Material: {}.",
                        p.title, p.category, p.color, p.material
                    ));
                }
            }
        }
        None
    }

    pub fn goal_met(&self) -> bool {
        self.bought == Some(self.target)
    }

    /// Attribute-match subgoals against the target product: category, color,
    /// material; zero until something is bought.
    pub fn subgoals(&self) -> (usize, usize) {
        let total = 3;
        let Some(b) = self.bought else { return (0, total) };
        let bought = &self.catalog[b];
        let target = &self.catalog[self.target];
        let mut ok = 0;
        if bought.category == target.category {
            ok += 1;
        }
        if bought.color == target.color {
            ok += 1;
        }
        if bought.material == target.material {
            ok += 1;
        }
        (ok, total)
    }
}

pub fn generate(rng: &mut impl Rng, unseen: bool) -> GeneratedTask<ShoppingWorld> {
    let categories: &[&str] = if unseen { UNSEEN_CATEGORIES } else { SEEN_CATEGORIES };
    let category = (*categories.choose(rng).unwrap()).to_string();
    let color = (*COLORS.choose(rng).unwrap()).to_string();
    let material = (*MATERIALS.choose(rng).unwrap()).to_string();

    let mut catalog = vec![Product {
        title: format!("{color} {material} {category}"),
        category: category.clone(),
        color: color.clone(),
        material: material.clone(),
    }];
    // distractors in the same category with different attributes
    let push_unique = |catalog: &mut Vec<Product>, p: Product| {
        if !catalog.iter().any(|q| q.title == p.title) {
            catalog.push(p);
        }
    };
    for _ in 0..3 {
        let c = *COLORS.choose(rng).unwrap();
        let m = *MATERIALS.choose(rng).unwrap();
        push_unique(
            &mut catalog,
            Product {
                title: format!("{c} {m} {category}"),
                category: category.clone(),
                color: c.to_string(),
                material: m.to_string(),
            },
        );
    }
    // and a couple from other categories
    for other in categories.iter().filter(|c| **c != category).take(2) {
        let c = *COLORS.choose(rng).unwrap();
        let m = *MATERIALS.choose(rng).unwrap();
        push_unique(
            &mut catalog,
            Product {
                title: format!("{c} {m} {other}"),
                category: (*other).to_string(),
                color: c.to_string(),
                material: m.to_string(),
            },
        );
    }
    catalog.shuffle(rng);
    let target = catalog
        .iter()
        .position(|p| p.category == category && p.color == color && p.material == material)
        .unwrap();

    let world = ShoppingWorld {
        catalog: catalog.clone(),
        target,
        page: Page::Home,
        bought: None,
    };
    let title = catalog[target].title.clone();
    let plan = vec![
        format!("search[{category}]"),
        format!("click[{title}]"),
        "click[buy now]".to_string(),
    ];
    let instruction = format!(
        "{} Your task is to: buy a {color} {material} {category}.",
        world.initial_observation()
    );
    GeneratedTask {
        instruction,
        initial_observation: world.initial_observation(),
        oracle_plan: plan,
        goal_template: format!("buy-{category}"),
        world,
    }
}
