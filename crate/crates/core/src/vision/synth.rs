//! Procedural images: single geometric shapes on plain backgrounds.

use serde::{Deserialize, Serialize};

use crate::rng::{self, Rng};

use super::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    Square,
    Triangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
}

pub const SHAPES: [Shape; 3] = [Shape::Circle, Shape::Square, Shape::Triangle];
pub const COLORS: [Color; 4] = [Color::Red, Color::Green, Color::Blue, Color::Yellow];

impl Shape {
    pub fn name(self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
        }
    }
}

impl Color {
    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
        }
    }

    pub fn rgb(self) -> [f32; 3] {
        match self {
            Color::Red => [0.9, 0.1, 0.1],
            Color::Green => [0.1, 0.85, 0.15],
            Color::Blue => [0.1, 0.2, 0.95],
            Color::Yellow => [0.95, 0.9, 0.1],
        }
    }
}

const BACKGROUND: [f32; 3] = [0.08, 0.08, 0.08];

fn inside(shape: Shape, dy: f32, dx: f32, r: f32) -> bool {
    match shape {
        Shape::Circle => dx * dx + dy * dy <= r * r,
        Shape::Square => dx.abs() <= 0.8 * r && dy.abs() <= 0.8 * r,
        Shape::Triangle => {
            // apex up, base at dy = r
            dy >= -r && dy <= r && dx.abs() <= (dy + r) / 2.0
        }
    }
}

/// A `side × side` image holding one filled `shape` of colour `fill`, with a
/// jittered position and size and mild pixel noise.
pub fn draw_shape(side: usize, shape: Shape, fill: [f32; 3], rng: &mut Rng) -> Image {
    let s = side as f32;
    let r = s * rng::uniform(rng, 0.28, 0.38) as f32;
    let cy = s / 2.0 + s * rng::uniform(rng, -0.08, 0.08) as f32;
    let cx = s / 2.0 + s * rng::uniform(rng, -0.08, 0.08) as f32;
    let mut img = Image::filled(side, side, BACKGROUND);
    for y in 0..side {
        for x in 0..side {
            let base = if inside(shape, y as f32 + 0.5 - cy, x as f32 + 0.5 - cx, r) {
                fill
            } else {
                BACKGROUND
            };
            let noise = rng::uniform(rng, -0.03, 0.03) as f32;
            img.set_pixel(y, x, &base.map(|v| v + noise));
        }
    }
    img
}

/// A coloured shape.
pub fn colored_shape(side: usize, shape: Shape, color: Color, rng: &mut Rng) -> Image {
    draw_shape(side, shape, color.rgb(), rng)
}

/// A random shape in a random gray level, used as a distractor.
pub fn gray_shape(side: usize, rng: &mut Rng) -> Image {
    let shape = SHAPES[rng::below(rng, SHAPES.len())];
    let g = rng::uniform(rng, 0.35, 0.65) as f32;
    draw_shape(side, shape, [g, g, g], rng)
}
