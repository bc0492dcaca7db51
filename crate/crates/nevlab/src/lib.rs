//! Explicit univalent rational maps with fractal-like boundaries, and the
//! numerical machinery that checks their claimed properties.

pub mod analysis;
pub mod cli;
pub mod hedgehog;
pub mod htree;
pub mod needle;
pub mod ratmap;
pub mod snake;
pub mod svg;
pub mod treemap;
