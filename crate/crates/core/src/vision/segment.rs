use super::Image;

/// A high-resolution image split into tiles plus a downscaled overview.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmented {
    /// Whole image resized to one tile.
    pub main: Image,
    /// Tiles in raster order.
    pub subimages: Vec<Image>,
    pub rows: usize,
    pub cols: usize,
}

impl Segmented {
    /// Number of tiles in each row, as consumed by the patched-image template.
    pub fn row_lengths(&self) -> Vec<usize> {
        vec![self.cols; self.rows]
    }
}

/// Pads right/bottom with zeros to tile multiples and cuts `tile × tile`
/// pieces from the top-left to the bottom-right.
pub fn segment_image(image: &Image, tile: usize) -> Segmented {
    assert!(tile > 0, "tile side must be positive");
    let rows = image.height().div_ceil(tile);
    let cols = image.width().div_ceil(tile);
    let canvas = image.pad_to(rows * tile, cols * tile);
    let subimages = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| canvas.crop(r * tile, c * tile, tile, tile))
        .collect();
    Segmented {
        main: image.resize(tile, tile),
        subimages,
        rows,
        cols,
    }
}
