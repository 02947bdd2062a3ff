//! Binary portable graymap rendering of an occupancy grid.

use airground_core::world::{CellState, GridMap};

pub const FREE_GRAY: u8 = 255;
pub const UNKNOWN_GRAY: u8 = 128;
pub const OCCUPIED_GRAY: u8 = 0;

/// P5 image with the map's +y axis pointing up.
pub fn render_pgm(map: &GridMap) -> Vec<u8> {
    let g = map.geometry();
    let mut out = format!("P5\n{} {}\n255\n", g.width, g.height).into_bytes();
    for row in (0..g.height).rev() {
        for col in 0..g.width {
            out.push(match map.get_flat(row * g.width + col) {
                CellState::Free => FREE_GRAY,
                CellState::Unknown => UNKNOWN_GRAY,
                CellState::Occupied => OCCUPIED_GRAY,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use airground_core::world::GridGeometry;
    use airground_core::Point2;

    #[test]
    fn header_and_orientation() {
        let mut map = GridMap::new(GridGeometry::new(1.0, Point2::zeros(), 3, 2));
        map.set_flat(0, CellState::Occupied);
        map.set_flat(5, CellState::Free);
        let img = render_pgm(&map);
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&img[..header.len()], header);
        assert_eq!(&img[header.len()..], &[UNKNOWN_GRAY, UNKNOWN_GRAY, FREE_GRAY, OCCUPIED_GRAY, UNKNOWN_GRAY, UNKNOWN_GRAY]);
    }
}
