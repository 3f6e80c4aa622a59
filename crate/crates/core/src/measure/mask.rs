//! Boundary extraction from binary annotation masks.

use std::collections::VecDeque;

use crate::geometry::Point2D;
use crate::image::GrayImage;

const NEIGHBORS_8: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];
const NEIGHBORS_4: [(isize, isize); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];

/// Largest 8-connected foreground component (`value > 0.5`), with interior
/// holes filled. Row-major boolean grid; `None` when the mask is empty.
pub fn largest_component(mask: &GrayImage) -> Option<Vec<bool>> {
    let (w, h) = (mask.width(), mask.height());
    let fg: Vec<bool> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| mask.get(x, y) > 0.5)
        .collect();
    let mut label = vec![0u32; w * h];
    let mut best: Option<(u32, usize)> = None;
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !fg[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        queue.push_back(start);
        let mut size = 0usize;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for (dx, dy) in NEIGHBORS_8 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if fg[j] && label[j] == 0 {
                    label[j] = next;
                    queue.push_back(j);
                }
            }
        }
        if best.map_or(true, |(_, s)| size > s) {
            best = Some((next, size));
        }
    }
    let (keep, _) = best?;
    let component: Vec<bool> = label.iter().map(|l| *l == keep).collect();

    // background reachable from the frame border (4-connected) stays outside
    let mut outside = vec![false; w * h];
    for i in 0..w * h {
        let (x, y) = (i % w, i / w);
        if (x == 0 || y == 0 || x == w - 1 || y == h - 1) && !component[i] {
            outside[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for (dx, dy) in NEIGHBORS_4 {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                continue;
            }
            let j = ny as usize * w + nx as usize;
            if !component[j] && !outside[j] {
                outside[j] = true;
                queue.push_back(j);
            }
        }
    }
    Some(outside.into_iter().map(|o| !o).collect())
}

/// Sub-pixel boundary of the largest mask component.
///
/// Every border pixel contributes the midpoint of each pixel edge it shares
/// with the outside, so points sit on the region's outline rather than half a
/// pixel inside it.
pub fn boundary_points(mask: &GrayImage) -> Vec<Point2D> {
    let (w, h) = (mask.width(), mask.height());
    let Some(region) = largest_component(mask) else {
        return Vec::new();
    };
    let inside = |x: isize, y: isize| {
        x >= 0 && y >= 0 && x < w as isize && y < h as isize && region[y as usize * w + x as usize]
    };
    let mut points = Vec::new();
    for y in 0..h as isize {
        for x in 0..w as isize {
            if !inside(x, y) {
                continue;
            }
            for (dx, dy) in NEIGHBORS_4 {
                if !inside(x + dx, y + dy) {
                    points.push(Point2D::new(
                        x as f64 + 0.5 * dx as f64,
                        y as f64 + 0.5 * dy as f64,
                    ));
                }
            }
        }
    }
    points
}
