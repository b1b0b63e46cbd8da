//! Stochastic bracketed L-system and its turtle interpretation.
//!
//! The axiom places `n_axes` axis modules around the crown. Each `Axis`
//! rewrites into a sequence of metamers (internode, phyllotactic roll,
//! compound leaf and an optional lateral axis) and an optional terminal
//! flower. Rewriting stops once no `Axis` module is left.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rosepoint_core::{derive_seed, OrganLabel};

use crate::geometry::{self, add, cross, dot, normalize, rotate, scale, sub, V3};
use crate::mesh::PlantMesh;
use crate::{PlantParams, Result, SynthError};

pub const MAX_ATTEMPTS: usize = 100;

const GOLDEN_ANGLE: f64 = 137.5;
/// A lateral axis is borne on every `LATERAL_PERIOD`-th metamer.
const LATERAL_PERIOD: u32 = 3;
const LONG_NODES: (u32, u32) = (9, 11);
const SHORT_NODES: (u32, u32) = (6, 8);
const LATERAL_NODES: (u32, u32) = (3, 4);
const TAPER: f64 = 0.55;

#[derive(Debug, Clone, PartialEq)]
pub enum Module {
    Axis { order: usize, nodes: u32, radius: f64 },
    Internode { length: f64, r0: f64, r1: f64 },
    Leaf { leaflets: usize, size: f64 },
    Flower { size: f64 },
    Roll(f64),
    Pitch(f64),
    /// Bends the heading towards the vertical by the given fraction.
    Upright(f64),
    Push,
    Pop,
}

fn deg(a: f64) -> f64 {
    a.to_radians()
}

fn axiom(params: &PlantParams, rng: &mut ChaCha8Rng) -> Vec<Module> {
    let mut out = Vec::new();
    for i in 0..params.n_axes {
        let azimuth = 360.0 * i as f64 / params.n_axes as f64 + rng.random_range(-25.0..25.0);
        let tilt = if i == 0 { rng.random_range(0.0..10.0) } else { rng.random_range(12.0..32.0) };
        let long = rng.random::<f64>() < params.axis_morphotype_probs[0];
        let (lo, hi) = if long { LONG_NODES } else { SHORT_NODES };
        out.extend([
            Module::Push,
            Module::Roll(azimuth),
            Module::Pitch(tilt),
            Module::Axis {
                order: 0,
                nodes: rng.random_range(lo..=hi),
                radius: rng.random_range(params.branch_radius_range.0..params.branch_radius_range.1),
            },
            Module::Pop,
        ]);
    }
    out
}

fn rewrite_axis(params: &PlantParams, order: usize, nodes: u32, radius: f64, rng: &mut ChaCha8Rng) -> Vec<Module> {
    let mut out = Vec::new();
    let (lmin, lmax) = params.internode_length_range;
    let order_scale = 0.75f64.powi(order as i32);
    let phase = rng.random_range(0..LATERAL_PERIOD);
    for k in 0..nodes {
        let f0 = k as f64 / nodes as f64;
        let f1 = (k + 1) as f64 / nodes as f64;
        out.push(Module::Internode {
            length: rng.random_range(lmin..lmax) * order_scale,
            r0: radius * (1.0 - TAPER * f0),
            r1: radius * (1.0 - TAPER * f1),
        });
        out.push(Module::Roll(GOLDEN_ANGLE + rng.random_range(-12.0..12.0)));
        out.extend([
            Module::Push,
            Module::Pitch(rng.random_range(45.0..65.0)),
            Module::Leaf {
                leaflets: rng.random_range(params.leaflets_per_leaf.0..=params.leaflets_per_leaf.1),
                size: rng.random_range(0.85..1.15) * (0.8 + 0.4 * (1.0 - (2.0 * f0 - 1.0).abs())),
            },
            Module::Pop,
        ]);
        if order + 1 < params.recursion_depth && k >= 1 && k + 1 < nodes && (k + phase) % LATERAL_PERIOD == 0 {
            out.extend([
                Module::Push,
                Module::Roll(180.0),
                Module::Pitch(rng.random_range(30.0..50.0)),
                Module::Axis {
                    order: order + 1,
                    nodes: rng.random_range(LATERAL_NODES.0..=LATERAL_NODES.1),
                    radius: radius * (1.0 - TAPER * f1) * 0.7,
                },
                Module::Pop,
            ]);
        }
        out.push(Module::Pitch(rng.random_range(-6.0..6.0)));
        out.push(Module::Upright(0.15));
    }
    if rng.random::<f64>() < params.flower_prob_per_axis {
        out.push(Module::Flower { size: rng.random_range(0.85..1.15) * order_scale.sqrt() });
    }
    out
}

/// Applies productions until only terminal modules remain.
pub fn derive(params: &PlantParams, rng: &mut ChaCha8Rng) -> Vec<Module> {
    let mut word = axiom(params, rng);
    while word.iter().any(|m| matches!(m, Module::Axis { .. })) {
        let mut next = Vec::with_capacity(word.len() * 4);
        for m in word {
            match m {
                Module::Axis { order, nodes, radius } => next.extend(rewrite_axis(params, order, nodes, radius, rng)),
                other => next.push(other),
            }
        }
        word = next;
    }
    word
}

#[derive(Clone, Copy)]
struct Turtle {
    pos: V3,
    heading: V3,
    left: V3,
    up: V3,
}

impl Turtle {
    fn roll(&mut self, a: f64) {
        self.left = rotate(self.left, self.heading, a);
        self.up = rotate(self.up, self.heading, a);
    }

    fn pitch(&mut self, a: f64) {
        self.heading = rotate(self.heading, self.left, a);
        self.up = rotate(self.up, self.left, a);
    }

    fn upright(&mut self, fraction: f64) {
        let z = [0.0, 0.0, 1.0];
        let axis = cross(self.heading, z);
        let s = geometry::norm(axis);
        if s < 1e-9 {
            return;
        }
        let axis = scale(axis, 1.0 / s);
        let angle = fraction * dot(self.heading, z).clamp(-1.0, 1.0).acos();
        self.heading = normalize(rotate(self.heading, axis, angle));
        self.left = normalize(rotate(self.left, axis, angle));
        self.up = normalize(cross(self.heading, self.left));
    }
}

/// Interprets a terminal word into organ meshes.
pub fn interpret(word: &[Module], seed: u64) -> PlantMesh {
    let mut turtle = Turtle { pos: [0.0; 3], heading: [0.0, 0.0, 1.0], left: [0.0, 1.0, 0.0], up: [-1.0, 0.0, 0.0] };
    let mut stack = Vec::new();
    let mut organs = Vec::new();
    for m in word {
        match *m {
            Module::Internode { length, r0, r1 } => {
                let end = add(turtle.pos, scale(turtle.heading, length));
                organs.extend(geometry::tube(OrganLabel::Stem, turtle.pos, end, r0, r1));
                turtle.pos = end;
            }
            Module::Leaf { leaflets, size } => compound_leaf(&turtle, leaflets, size, &mut organs),
            Module::Flower { size } => flower(&turtle, size, &mut organs),
            Module::Roll(a) => turtle.roll(deg(a)),
            Module::Pitch(a) => turtle.pitch(deg(a)),
            Module::Upright(f) => turtle.upright(f),
            Module::Push => stack.push(turtle),
            Module::Pop => turtle = stack.pop().unwrap_or(turtle),
            Module::Axis { .. } => {}
        }
    }
    PlantMesh { organs, seed }
}

/// Unit normal of a lamina lying along `dir`, facing upwards where possible.
fn lamina_normal(dir: V3, fallback: V3) -> V3 {
    let z = [0.0, 0.0, 1.0];
    let n = sub(z, scale(dir, dot(z, dir)));
    if geometry::norm(n) < 1e-6 {
        fallback
    } else {
        normalize(n)
    }
}

fn compound_leaf(t: &Turtle, leaflets: usize, size: f64, organs: &mut Vec<crate::OrganMesh>) {
    let dir = t.heading;
    let normal = lamina_normal(dir, t.up);
    let side = normalize(cross(dir, normal));
    let pairs = (leaflets - 1) / 2;
    let petiole = 1.6 * size;
    let spacing = 1.2 * size;
    let rachis = petiole + spacing * pairs as f64;
    let tip = add(t.pos, scale(dir, rachis));
    organs.extend(geometry::tube(OrganLabel::Petiole, t.pos, tip, 0.07 * size, 0.035 * size));
    for s in [1.0, -1.0] {
        let d = normalize(add(dir, scale(side, 0.45 * s)));
        organs.extend(geometry::blade(OrganLabel::Stipule, t.pos, d, normal, 0.9 * size, 0.32 * size, 0.1, 0.0));
    }
    for p in 0..pairs {
        let at = add(t.pos, scale(dir, petiole + spacing * (p as f64 + 0.5)));
        let length = (2.6 + 0.25 * p as f64) * size;
        for s in [1.0, -1.0] {
            let d = normalize(add(scale(dir, 0.5), scale(side, 0.87 * s)));
            let n = lamina_normal(d, normal);
            organs.extend(geometry::blade(OrganLabel::Leaflet, at, d, n, length, 0.58 * length, 0.25, 0.12));
        }
    }
    let terminal = (2.9 + 0.25 * pairs as f64) * size;
    organs.extend(geometry::blade(OrganLabel::Leaflet, tip, dir, normal, terminal, 0.58 * terminal, 0.25, 0.12));
    if leaflets % 2 == 0 {
        let d = normalize(add(scale(dir, 0.5), scale(side, 0.87)));
        let n = lamina_normal(d, normal);
        organs.extend(geometry::blade(OrganLabel::Leaflet, tip, d, n, terminal * 0.8, 0.46 * terminal, 0.25, 0.12));
    }
}

fn flower(t: &Turtle, size: f64, organs: &mut Vec<crate::OrganMesh>) {
    let axis = t.heading;
    let u = t.left;
    let receptacle_radius = 0.55 * size;
    let centre = add(t.pos, scale(axis, receptacle_radius));
    organs.extend(geometry::icosphere(OrganLabel::Receptacle, centre, axis, 0.8 * receptacle_radius, receptacle_radius));
    for k in 0..5 {
        let az = std::f64::consts::TAU * k as f64 / 5.0;
        let radial = rotate(u, axis, az);
        let d = normalize(add(scale(axis, -0.35), radial));
        let base = add(t.pos, scale(radial, 0.5 * receptacle_radius));
        organs.extend(geometry::blade(OrganLabel::Sepal, base, d, axis, 1.8 * size, 0.55 * size, 0.2, 0.0));
    }
    let whorls = [(5, 70.0, 2.3), (5, 45.0, 2.0), (4, 20.0, 1.6)];
    for (w, &(count, opening, length)) in whorls.iter().enumerate() {
        for k in 0..count {
            let az = std::f64::consts::TAU * (k as f64 + 0.5 * w as f64) / count as f64;
            let radial = rotate(u, axis, az);
            let hinge = normalize(cross(axis, radial));
            let d = rotate(axis, hinge, deg(opening));
            let base = add(add(centre, scale(axis, 0.4 * receptacle_radius)), scale(radial, 0.3 * receptacle_radius));
            organs.extend(geometry::petal(base, d, axis, length * size, 0.9 * length * size, 0.25));
        }
    }
}

/// Generates a rosebush mesh, retrying with derived seeds until the vertical
/// extent falls within `target_height_range`.
pub fn generate_plant(params: &PlantParams, seed: u64) -> Result<PlantMesh> {
    params.validate()?;
    let (lo, hi) = params.target_height_range;
    let mut last_extent = 0.0;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, attempt as u64));
        let word = derive(params, &mut rng);
        let mesh = interpret(&word, seed);
        last_extent = mesh.vertical_extent();
        let has = |o: OrganLabel| mesh.organs.iter().any(|m| m.organ() == o);
        if (lo..=hi).contains(&last_extent) && has(OrganLabel::Stem) && has(OrganLabel::Leaflet) {
            return Ok(mesh);
        }
    }
    Err(SynthError::Generation { attempts: MAX_ATTEMPTS, last_extent })
}
