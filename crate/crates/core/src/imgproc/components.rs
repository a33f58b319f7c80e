//! 8-connected component labelling and the small-component filter.

use crate::raster::BinaryEdgeMap;

/// Component labelling result: id 0 is background, edge pixels carry dense
/// ids starting at 1 in scan-order of first encounter. `sizes[k]` is the
/// pixel count of component `k + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u32>,
    pub sizes: Vec<usize>,
}

impl Labeling {
    pub fn num_components(&self) -> usize {
        self.sizes.len()
    }
}

pub fn connected_components(bin: &BinaryEdgeMap) -> Labeling {
    let (h, w) = (bin.height, bin.width);
    let mut labels = vec![0u32; h * w];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    let mut next = 1u32;
    for y in 0..h {
        for x in 0..w {
            if !bin.get(y, x) || labels[y * w + x] != 0 {
                continue;
            }
            let mut size = 0usize;
            labels[y * w + x] = next;
            stack.push((y, x));
            while let Some((cy, cx)) = stack.pop() {
                size += 1;
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        if dy == 0 && dx == 0 {
                            continue;
                        }
                        let ny = cy as isize + dy;
                        let nx = cx as isize + dx;
                        if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                            continue;
                        }
                        let (ny, nx) = (ny as usize, nx as usize);
                        if bin.get(ny, nx) && labels[ny * w + nx] == 0 {
                            labels[ny * w + nx] = next;
                            stack.push((ny, nx));
                        }
                    }
                }
            }
            sizes.push(size);
            next += 1;
        }
    }
    Labeling {
        height: h,
        width: w,
        labels,
        sizes,
    }
}

/// Removes every 8-connected component smaller than `min_size` pixels.
pub fn connectivity_filter(bin: &BinaryEdgeMap, min_size: usize) -> BinaryEdgeMap {
    if min_size == 0 {
        return bin.clone();
    }
    let labeling = connected_components(bin);
    let keep: Vec<bool> = labeling.sizes.iter().map(|&s| s >= min_size).collect();
    let mut out = BinaryEdgeMap::empty(bin.height, bin.width);
    for (i, &label) in labeling.labels.iter().enumerate() {
        if label != 0 && keep[(label - 1) as usize] {
            out.data[i] = true;
        }
    }
    out
}
