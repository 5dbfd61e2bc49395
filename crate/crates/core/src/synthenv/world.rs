use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::action::{Action, ActionKind, Direction, Point};
use crate::error::{Error, Result};

pub const PHRASES: [&str; 2] = ["search weather", "call mom"];
pub const APPS: [&str; 2] = ["Chrome", "Settings"];

const SCROLL_ORIGIN: (f64, f64) = (0.5, 0.5);
const MIN_ELEMENT_GAP: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub id: usize,
    pub center: Point,
    /// `Click` or `LongPress`.
    pub affordance: ActionKind,
}

/// One discrete policy choice on a screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionTemplate {
    Element(usize),
    Scroll(Direction),
    Type(usize),
    Launch(usize),
    System(ActionKind),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Screen {
    pub elements: Vec<Element>,
    pub expert: Action,
}

impl Screen {
    /// Templates in a fixed order: elements, scroll directions, phrases,
    /// apps, system actions.
    pub fn templates(&self) -> Vec<ActionTemplate> {
        let mut out: Vec<ActionTemplate> = (0..self.elements.len()).map(ActionTemplate::Element).collect();
        out.extend(Direction::ALL.into_iter().map(ActionTemplate::Scroll));
        out.extend((0..PHRASES.len()).map(ActionTemplate::Type));
        out.extend((0..APPS.len()).map(ActionTemplate::Launch));
        out.extend(
            [ActionKind::Wait, ActionKind::PressBack, ActionKind::PressHome, ActionKind::Finished]
                .into_iter()
                .map(ActionTemplate::System),
        );
        out
    }

    /// Turns a template into a concrete action. Pointer actions get
    /// isotropic Gaussian jitter of `jitter_std` (clamped to the screen).
    pub fn render<R: Rng>(&self, template: ActionTemplate, jitter_std: f64, rng: &mut R) -> Action {
        match template {
            ActionTemplate::Element(i) => {
                let el = &self.elements[i];
                let p = jitter(el.center, jitter_std, rng);
                if el.affordance == ActionKind::LongPress {
                    Action::LongPress(p)
                } else {
                    Action::Click(p)
                }
            }
            ActionTemplate::Scroll(direction) => Action::Scroll {
                start: jitter(Point::clamped(SCROLL_ORIGIN.0, SCROLL_ORIGIN.1), jitter_std, rng),
                direction,
            },
            ActionTemplate::Type(i) => Action::Type(PHRASES[i].to_string()),
            ActionTemplate::Launch(i) => Action::Launch(APPS[i].to_string()),
            ActionTemplate::System(kind) => Action::system(kind).expect("system template"),
        }
    }

    /// Index into [`Screen::templates`] that renders the expert action.
    pub fn expert_template(&self) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.templates()
            .into_iter()
            .position(|t| self.render(t, 0.0, &mut rng) == self.expert)
            .expect("expert action is always a template")
    }
}

pub(crate) fn jitter<R: Rng>(p: Point, std: f64, rng: &mut R) -> Point {
    if std <= 0.0 {
        return p;
    }
    let n = Normal::new(0.0, std).expect("finite std");
    Point::clamped(p.x() + n.sample(rng), p.y() + n.sample(rng))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub screens: Vec<Screen>,
    /// Next screen reached by each screen's correct action; `None` once the
    /// task is finished.
    pub transitions: Vec<Option<usize>>,
    pub seed: u64,
}

impl SyntheticWorld {
    pub fn len(&self) -> usize {
        self.screens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.screens.is_empty()
    }

    pub fn expert_actions(&self) -> Vec<Action> {
        self.screens.iter().map(|s| s.expert.clone()).collect()
    }
}

fn place_elements<R: Rng>(branching: usize, rng: &mut R) -> Vec<Element> {
    let mut out: Vec<Element> = Vec::with_capacity(branching);
    for id in 0..branching {
        let mut center = Point::clamped(0.5, 0.5);
        for _ in 0..1000 {
            center = Point::clamped(rng.random_range(0.15..0.85), rng.random_range(0.15..0.85));
            if out.iter().all(|e| e.center.distance(&center) >= MIN_ELEMENT_GAP) {
                break;
            }
        }
        let affordance = if rng.random_bool(0.2) {
            ActionKind::LongPress
        } else {
            ActionKind::Click
        };
        out.push(Element { id, center, affordance });
    }
    out
}

fn pick_expert<R: Rng>(elements: &[Element], rng: &mut R) -> Action {
    let roll: f64 = rng.random();
    let mut rng_clone = ChaCha8Rng::seed_from_u64(0);
    let screen = Screen {
        elements: elements.to_vec(),
        expert: Action::Wait,
    };
    let template = if roll < 0.55 && !elements.is_empty() {
        ActionTemplate::Element(rng.random_range(0..elements.len()))
    } else if roll < 0.70 {
        ActionTemplate::Scroll(Direction::ALL[rng.random_range(0..4)])
    } else if roll < 0.85 {
        ActionTemplate::Type(rng.random_range(0..PHRASES.len()))
    } else if roll < 0.90 {
        ActionTemplate::Launch(rng.random_range(0..APPS.len()))
    } else {
        let sys = [ActionKind::Wait, ActionKind::PressBack, ActionKind::PressHome];
        ActionTemplate::System(sys[rng.random_range(0..sys.len())])
    };
    screen.render(template, 0.0, &mut rng_clone)
}

/// Builds a world of `length` screens whose expert path ends in `Finished`.
pub fn generate_task(length: usize, branching: usize, seed: u64) -> Result<(SyntheticWorld, Vec<Action>)> {
    if length < 1 {
        return Err(Error::domain("synthetic task length must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let screens: Vec<Screen> = (0..length)
        .map(|t| {
            let elements = place_elements(branching, &mut rng);
            let expert = if t + 1 == length {
                Action::Finished
            } else {
                pick_expert(&elements, &mut rng)
            };
            Screen { elements, expert }
        })
        .collect();
    let transitions = (0..length).map(|t| (t + 1 < length).then_some(t + 1)).collect();
    let world = SyntheticWorld {
        screens,
        transitions,
        seed,
    };
    let expert = world.expert_actions();
    Ok((world, expert))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{score_action, ScoringConfig};

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = generate_task(14, 4, 7).unwrap();
        let b = generate_task(14, 4, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_task(14, 4, 8).unwrap());
        assert_eq!(a.1.len(), 14);
        assert_eq!(a.1.last(), Some(&Action::Finished));
    }

    #[test]
    fn single_step_task_is_finished() {
        let (world, expert) = generate_task(1, 3, 0).unwrap();
        assert_eq!(expert, vec![Action::Finished]);
        assert_eq!(world.transitions, vec![None]);
        assert!(generate_task(0, 3, 0).is_err());
    }

    #[test]
    fn experts_score_perfectly_against_themselves() {
        let cfg = ScoringConfig::default();
        for seed in 0..50 {
            let (world, expert) = generate_task(20, 4, seed).unwrap();
            for (screen, a) in world.screens.iter().zip(&expert) {
                let s = score_action(a, a, &cfg);
                assert_eq!(s.s_raw, 1.0);
                assert!(s.valid);
                let t = screen.templates()[screen.expert_template()];
                let mut rng = ChaCha8Rng::seed_from_u64(1);
                assert_eq!(&screen.render(t, 0.0, &mut rng), a);
            }
        }
    }

    #[test]
    fn only_the_expert_template_is_valid() {
        let cfg = ScoringConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..20 {
            let (world, _) = generate_task(10, 4, seed).unwrap();
            for screen in &world.screens {
                let expert_idx = screen.expert_template();
                for (i, t) in screen.templates().into_iter().enumerate() {
                    let a = screen.render(t, 0.0, &mut rng);
                    let valid = score_action(&a, &screen.expert, &cfg).valid;
                    // elements may occasionally sit close together; the gap
                    // keeps them apart whenever placement succeeded
                    if i == expert_idx {
                        assert!(valid);
                    } else if !matches!(t, ActionTemplate::Element(_)) {
                        assert!(!valid, "{t:?} valid against {:?}", screen.expert);
                    }
                }
            }
        }
    }
}
