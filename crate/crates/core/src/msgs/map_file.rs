//! `map_server`-style map files: an 8-bit PGM raster plus a YAML sidecar.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{Header, MapMetaData, MsgError, OccupancyGrid, Pose};

pub const DEFAULT_OCCUPIED_THRESH: f64 = 0.65;
pub const DEFAULT_FREE_THRESH: f64 = 0.196;

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct MapMetadata {
    pub image: String,
    pub resolution: f64,
    /// `[x, y, yaw]` of the lower-left pixel in the map frame.
    pub origin: Vec<f64>,
    #[serde(default = "default_occupied")]
    pub occupied_thresh: f64,
    #[serde(default = "default_free")]
    pub free_thresh: f64,
    #[serde(default)]
    pub negate: u8,
}

fn default_occupied() -> f64 {
    DEFAULT_OCCUPIED_THRESH
}

fn default_free() -> f64 {
    DEFAULT_FREE_THRESH
}

fn bad(field: &str, reason: impl Into<String>) -> MsgError {
    MsgError::BadYamlField(field.into(), reason.into())
}

/// Field name quoted in a serde error ("missing field `resolution`"), or "yaml".
fn yaml_error_field(e: &serde_yaml::Error) -> &'static str {
    let text = e.to_string();
    ["image", "resolution", "origin", "occupied_thresh", "free_thresh", "negate"]
        .into_iter()
        .find(|f| text.contains(&format!("`{f}`")) || text.starts_with(&format!("{f}:")))
        .unwrap_or("yaml")
}

impl MapMetadata {
    fn read(yaml_path: &Path) -> Result<Self, MsgError> {
        let text = std::fs::read_to_string(yaml_path)
            .map_err(|_| MsgError::FileMissing(yaml_path.display().to_string()))?;
        let meta: MapMetadata =
            serde_yaml::from_str(&text).map_err(|e| bad(yaml_error_field(&e), e.to_string()))?;
        meta.check()?;
        Ok(meta)
    }

    fn check(&self) -> Result<(), MsgError> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(bad("resolution", "must be positive"));
        }
        if self.origin.len() != 3 || self.origin.iter().any(|v| !v.is_finite()) {
            return Err(bad("origin", "expected [x, y, yaw]"));
        }
        if !(0.0..=1.0).contains(&self.occupied_thresh) {
            return Err(bad("occupied_thresh", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.free_thresh) || self.free_thresh > self.occupied_thresh {
            return Err(bad("free_thresh", "must lie in [0, occupied_thresh]"));
        }
        if self.negate > 1 {
            return Err(bad("negate", "must be 0 or 1"));
        }
        Ok(())
    }

    /// Trinary cell value for one 8-bit pixel.
    pub fn classify(&self, v: u8) -> i8 {
        let p = if self.negate == 1 {
            v as f64 / 255.0
        } else {
            (255 - v) as f64 / 255.0
        };
        if p >= self.occupied_thresh {
            OccupancyGrid::OCCUPIED
        } else if p <= self.free_thresh {
            OccupancyGrid::FREE
        } else {
            OccupancyGrid::UNKNOWN
        }
    }
}

/// Loads a map using the image path named inside the YAML (relative to the YAML's directory).
pub fn load_map_yaml(yaml_path: &Path) -> Result<OccupancyGrid, MsgError> {
    let meta = MapMetadata::read(yaml_path)?;
    let image = PathBuf::from(&meta.image);
    let image = if image.is_absolute() {
        image
    } else {
        yaml_path.parent().unwrap_or(Path::new(".")).join(image)
    };
    build_grid(&meta, &image)
}

/// Loads a map from an explicit YAML sidecar and raster path.
pub fn load_map_file(yaml_path: &Path, image_path: &Path) -> Result<OccupancyGrid, MsgError> {
    let meta = MapMetadata::read(yaml_path)?;
    build_grid(&meta, image_path)
}

fn read_pgm(path: &Path) -> Result<(u32, u32, Vec<u8>), MsgError> {
    let bytes = std::fs::read(path).map_err(|_| MsgError::FileMissing(path.display().to_string()))?;
    if let Some((w, h)) = pnm_dims(&bytes) {
        if w == 0 || h == 0 {
            return Err(MsgError::ImageSizeZero);
        }
    }
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Pnm)
        .map_err(|e| bad("image", format!("{}: {e}", path.display())))?
        .into_luma8();
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return Err(MsgError::ImageSizeZero);
    }
    Ok((w, h, img.into_raw()))
}

/// Width and height from a PNM header, if it parses.
fn pnm_dims(bytes: &[u8]) -> Option<(u64, u64)> {
    // Binary payload follows the header; only the leading ASCII matters.
    let head = &bytes[..bytes.len().min(512)];
    let end = head.iter().position(|b| !b.is_ascii()).unwrap_or(head.len());
    let text = std::str::from_utf8(&head[..end]).ok()?;
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    let magic = tokens.next()?;
    if !magic.starts_with('P') {
        return None;
    }
    let w = tokens.next()?.parse().ok()?;
    let h = tokens.next()?.parse().ok()?;
    Some((w, h))
}

fn build_grid(meta: &MapMetadata, image_path: &Path) -> Result<OccupancyGrid, MsgError> {
    let (w, h, pixels) = read_pgm(image_path)?;
    let (wu, hu) = (w as usize, h as usize);
    let mut data = vec![OccupancyGrid::UNKNOWN; wu * hu];
    for img_row in 0..hu {
        // Image row 0 is the top edge; grid row 0 sits at the origin.
        let grid_row = hu - 1 - img_row;
        let src = &pixels[img_row * wu..(img_row + 1) * wu];
        let dst = &mut data[grid_row * wu..(grid_row + 1) * wu];
        for (d, &v) in dst.iter_mut().zip(src) {
            *d = meta.classify(v);
        }
    }
    Ok(OccupancyGrid {
        header: Header::new(0, 0.0, "map"),
        info: MapMetaData {
            map_load_time: Default::default(),
            resolution: meta.resolution,
            width: w,
            height: h,
            origin: Pose::planar(meta.origin[0], meta.origin[1], meta.origin[2]),
        },
        data,
    })
}

/// Writes `grid` as `<stem>.pgm` + `<stem>.yaml` in `map_saver` conventions
/// (occupied 0, free 254, unknown 205). Returns the YAML path.
pub fn save_map_file(grid: &OccupancyGrid, dir: &Path, stem: &str) -> std::io::Result<PathBuf> {
    let (w, h) = (grid.width(), grid.height());
    let mut bytes = format!("P5\n# CREATOR: navviz {:.3} m/pix\n{w} {h}\n255\n", grid.resolution()).into_bytes();
    bytes.reserve(w * h);
    for img_row in 0..h {
        let row = h - 1 - img_row;
        for col in 0..w {
            bytes.push(match grid.get(col, row) {
                v if v >= 65 => 0,
                v if (0..=19).contains(&v) => 254,
                _ => 205,
            });
        }
    }
    let pgm = dir.join(format!("{stem}.pgm"));
    std::fs::write(&pgm, bytes)?;
    let o = &grid.info.origin;
    let yaml = format!(
        "image: {stem}.pgm\nresolution: {}\norigin: [{}, {}, {}]\nnegate: 0\noccupied_thresh: {}\nfree_thresh: {}\n",
        grid.resolution(),
        o.position.x,
        o.position.y,
        o.yaw(),
        DEFAULT_OCCUPIED_THRESH,
        DEFAULT_FREE_THRESH
    );
    let yaml_path = dir.join(format!("{stem}.yaml"));
    std::fs::write(&yaml_path, yaml)?;
    Ok(yaml_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_pgm(dir: &Path, name: &str, w: usize, h: usize, px: &[u8]) -> PathBuf {
        let mut b = format!("P5\n{w} {h}\n255\n").into_bytes();
        b.extend_from_slice(px);
        let p = dir.join(name);
        std::fs::write(&p, b).unwrap();
        p
    }

    fn write_yaml(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("map.yaml");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn white_image_is_free() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm(dir.path(), "m.pgm", 3, 2, &[255; 6]);
        let y = write_yaml(dir.path(), "image: m.pgm\nresolution: 0.05\norigin: [0.0, 0.0, 0.0]\nnegate: 0\n");
        let g = load_map_yaml(&y).unwrap();
        assert_eq!((g.info.width, g.info.height), (3, 2));
        assert!(g.data.iter().all(|&v| v == 0));
    }

    #[test]
    fn rows_are_flipped() {
        let dir = tempfile::tempdir().unwrap();
        // Top image row black, bottom white.
        write_pgm(dir.path(), "m.pgm", 2, 2, &[0, 0, 255, 255]);
        let y = write_yaml(dir.path(), "image: m.pgm\nresolution: 1\norigin: [0, 0, 0]\n");
        let g = load_map_yaml(&y).unwrap();
        assert_eq!(g.data, vec![0, 0, 100, 100]);
    }

    #[test]
    fn negate_inverts() {
        let meta = MapMetadata {
            image: String::new(),
            resolution: 1.0,
            origin: vec![0.0; 3],
            occupied_thresh: 0.65,
            free_thresh: 0.196,
            negate: 1,
        };
        assert_eq!(meta.classify(255), 100);
        assert_eq!(meta.classify(0), 0);
        assert_eq!(meta.classify(128), -1);
    }

    #[test]
    fn error_paths() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_map_yaml(&dir.path().join("none.yaml")),
            Err(MsgError::FileMissing(_))
        ));
        let y = write_yaml(dir.path(), "image: gone.pgm\nresolution: 1\norigin: [0, 0, 0]\n");
        assert!(matches!(load_map_yaml(&y), Err(MsgError::FileMissing(_))));
        let y = write_yaml(dir.path(), "image: m.pgm\nresolution: -1\norigin: [0, 0, 0]\n");
        assert!(matches!(load_map_yaml(&y), Err(MsgError::BadYamlField(f, _)) if f == "resolution"));
        let y = write_yaml(dir.path(), "image: m.pgm\nresolution: 1\norigin: [0, 0]\n");
        assert!(matches!(load_map_yaml(&y), Err(MsgError::BadYamlField(f, _)) if f == "origin"));
        let y = write_yaml(dir.path(), "image: m.pgm\norigin: [0, 0, 0]\n");
        assert!(matches!(load_map_yaml(&y), Err(MsgError::BadYamlField(_, _))));
        write_pgm(dir.path(), "z.pgm", 0, 0, &[]);
        let y = write_yaml(dir.path(), "image: z.pgm\nresolution: 1\norigin: [0, 0, 0]\n");
        assert_eq!(load_map_yaml(&y), Err(MsgError::ImageSizeZero));
    }

    #[test]
    fn save_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut g = OccupancyGrid::filled(5, 3, 0.1, 0);
        g.set(1, 0, 100);
        g.set(4, 2, -1);
        g.info.origin = Pose::planar(-1.0, 2.0, 0.0);
        let y = save_map_file(&g, dir.path(), "saved").unwrap();
        let back = load_map_yaml(&y).unwrap();
        assert_eq!(back.data, g.data);
        assert_eq!(back.info.origin.position, g.info.origin.position);
    }
}
