use super::{Object, PanelSpec, Raster};

/// Pixel value of empty space.
pub const BACKGROUND: u8 = 0;

/// Foreground intensity of a color level; darker in the drawing sense means
/// a larger value here.
pub fn color_intensity(level: u8) -> u8 {
    75 + 45 * level.min(4)
}

fn covers(o: &Object, dx: f64, dy: f64, r: f64) -> bool {
    match o.kind {
        // upward triangle inscribed in the radius-r circle
        0 => {
            let h = 1.5 * r;
            let top = -r;
            let t = (dy - top) / h;
            (0.0..=1.0).contains(&t) && dx.abs() <= t * r * 3f64.sqrt() / 2.0
        }
        1 => dx.abs() <= 0.9 * r && dy.abs() <= 0.9 * r,
        2 => dx * dx + dy * dy <= r * r,
        _ => {
            let arm = 0.3 * r;
            (dx.abs() <= r && dy.abs() <= arm) || (dy.abs() <= r && dx.abs() <= arm)
        }
    }
}

/// Renders a panel without anti-aliasing: a pixel is set when its center
/// falls inside the shape.
pub fn rasterize(panel: &PanelSpec, size: u16) -> Raster {
    let mut raster = Raster::filled(size, BACKGROUND);
    let lattice = f64::from(panel.lattice());
    let cell = f64::from(size) / lattice;
    let n = usize::from(size);
    for o in panel.objects() {
        let row = f64::from(o.position / panel.lattice());
        let col = f64::from(o.position % panel.lattice());
        // snapping the center to a fixed sub-pixel offset keeps every slot
        // on the same sampling phase, so size levels stay distinguishable
        let cx = ((col + 0.5) * cell).floor() + 0.25;
        let cy = ((row + 0.5) * cell).floor() + 0.25;
        let r = cell * (0.18 + 0.07 * f64::from(o.size));
        let value = color_intensity(o.color);
        let x0 = (cx - r).floor().max(0.0) as usize;
        let x1 = ((cx + r).ceil() as usize).min(n);
        let y0 = (cy - r).floor().max(0.0) as usize;
        let y1 = ((cy + r).ceil() as usize).min(n);
        let pixels = raster.pixels_mut();
        for y in y0..y1 {
            for x in x0..x1 {
                if covers(o, x as f64 + 0.5 - cx, y as f64 + 0.5 - cy, r) {
                    pixels[y * n + x] = value;
                }
            }
        }
    }
    raster
}
