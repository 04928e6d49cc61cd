use crate::error::{Error, Result};

/// Sensor-centered point cloud: `x` right, `y` down, `z` forward range, meters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloudFrame {
    pub points: Vec<[f64; 3]>,
}

/// 3-channel 8-bit depth image, channel-planar `[3, height, width]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl DepthImage {
    pub fn get(&self, channel: usize, row: usize, col: usize) -> u8 {
        self.data[(channel * self.height + row) * self.width + col]
    }
}

/// Pixel `(row, col)` hit by a point, if it lands inside the image.
pub fn project_point(p: &[f64; 3], width: usize, height: usize, focal: f64) -> Option<(usize, usize)> {
    let [x, y, z] = *p;
    if z <= 0.0 {
        return None;
    }
    let u = (focal * x / z + width as f64 / 2.0).floor();
    let v = (focal * y / z + height as f64 / 2.0).floor();
    if u < 0.0 || v < 0.0 || u >= width as f64 || v >= height as f64 {
        return None;
    }
    Some((v as usize, u as usize))
}

/// Intensity for range `z` given the nearest and farthest in-image ranges.
///
/// The nearest point maps to 255 and the farthest to 1; 0 is reserved for
/// empty pixels.
pub fn encode_depth(z: f64, z_min: f64, z_max: f64) -> u8 {
    let span = z_max - z_min;
    let d = if span > 0.0 { (z - z_min) / span } else { 0.0 };
    (255.0 * (1.0 - d)).round().clamp(1.0, 255.0) as u8
}

/// Pinhole z-buffer projection of a point cloud to a pseudo-depth image.
///
/// The nearest point wins each pixel. Its range is min-max normalized over the
/// in-image points, `d = (z − z_min)/(z_max − z_min)`, and written as
/// `max(1, round(255·(1 − d)))` to all three channels. Empty pixels are 0.
pub fn project_pointcloud_to_depth(frame: &PointCloudFrame, width: usize, height: usize, focal: f64) -> Result<DepthImage> {
    if !(focal > 0.0) {
        return Err(Error::Config(format!("focal length must be positive, got {focal}")));
    }
    if !frame.points.iter().any(|p| p[2] > 0.0) {
        return Err(Error::NoProjectablePoints);
    }
    let mut zbuf = vec![f64::INFINITY; width * height];
    let mut z_min = f64::INFINITY;
    let mut z_max = 0.0f64;
    for p in &frame.points {
        if let Some((row, col)) = project_point(p, width, height, focal) {
            let cell = &mut zbuf[row * width + col];
            if p[2] < *cell {
                *cell = p[2];
            }
            z_min = z_min.min(p[2]);
            z_max = z_max.max(p[2]);
        }
    }
    let plane = width * height;
    let mut data = vec![0u8; 3 * plane];
    for (i, &z) in zbuf.iter().enumerate() {
        if z.is_finite() {
            let v = encode_depth(z, z_min, z_max);
            for c in 0..3 {
                data[c * plane + i] = v;
            }
        }
    }
    Ok(DepthImage { width, height, data })
}
