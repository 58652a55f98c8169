//! Minimal ASCII OBJ import (`v`, `vn`, `f`) and orthographic rasterisation
//! into a per-pixel normal map.

use std::path::Path;

use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mesh {
    pub positions: Vec<[f64; 3]>,
    pub normals: Vec<[f64; 3]>,
    /// Triangles as `(position index, optional normal index)` triples.
    pub triangles: Vec<[(usize, Option<usize>); 3]>,
}

impl Mesh {
    pub fn from_obj_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_obj(&text).map_err(|(line, message)| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        })
    }

    /// Parses the OBJ subset; other statements are ignored. Polygons are
    /// fan-triangulated. Errors carry the 1-based line number.
    pub fn parse_obj(text: &str) -> std::result::Result<Self, (usize, String)> {
        let mut mesh = Mesh::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            let mut parts = line.split_whitespace();
            let Some(tag) = parts.next() else { continue };
            match tag {
                "v" | "vn" => {
                    let xyz: Vec<f64> = parts
                        .take(3)
                        .map(|p| p.parse::<f64>().map_err(|e| (line_no, format!("bad number '{p}': {e}"))))
                        .collect::<std::result::Result<_, _>>()?;
                    if xyz.len() != 3 {
                        return Err((line_no, format!("'{tag}' needs three coordinates")));
                    }
                    let v = [xyz[0], xyz[1], xyz[2]];
                    if tag == "v" {
                        mesh.positions.push(v);
                    } else {
                        mesh.normals.push(v);
                    }
                }
                "f" => {
                    let corners: Vec<(usize, Option<usize>)> = parts
                        .map(|p| parse_corner(p, mesh.positions.len(), mesh.normals.len()).map_err(|m| (line_no, m)))
                        .collect::<std::result::Result<_, _>>()?;
                    if corners.len() < 3 {
                        return Err((line_no, "face needs at least three vertices".into()));
                    }
                    for k in 1..corners.len() - 1 {
                        mesh.triangles.push([corners[0], corners[k], corners[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        if mesh.triangles.is_empty() {
            return Err((0, "mesh has no faces".into()));
        }
        Ok(mesh)
    }
}

fn resolve(index: &str, count: usize) -> std::result::Result<usize, String> {
    let i: i64 = index.parse().map_err(|e| format!("bad index '{index}': {e}"))?;
    let resolved = if i > 0 { i - 1 } else { count as i64 + i };
    if resolved < 0 || resolved as usize >= count {
        return Err(format!("index {i} out of range (have {count})"));
    }
    Ok(resolved as usize)
}

fn parse_corner(token: &str, n_pos: usize, n_norm: usize) -> std::result::Result<(usize, Option<usize>), String> {
    let mut fields = token.split('/');
    let v = resolve(fields.next().unwrap_or(""), n_pos)?;
    let _texcoord = fields.next();
    let n = match fields.next() {
        Some(s) if !s.is_empty() => Some(resolve(s, n_norm)?),
        _ => None,
    };
    Ok((v, n))
}

fn normalize(v: [f64; 3]) -> Option<[f64; 3]> {
    let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (len > 0.0 && len.is_finite()).then(|| [v[0] / len, v[1] / len, v[2] / len])
}

/// Rasterised mesh: per-pixel unit normals (`None` for background) in image
/// coordinates (x right, y down, z towards the camera).
pub struct Raster {
    pub normals: Vec<Option<[f64; 3]>>,
    pub center: (usize, usize),
}

/// Orthographic projection along -z. The mesh bounding box is scaled to
/// `fill` of the frame and centred; mesh +y maps to image up.
pub fn rasterize(mesh: &Mesh, width: usize, height: usize, fill: f64) -> Raster {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &mesh.positions {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let span = [(hi[0] - lo[0]).max(1e-12), (hi[1] - lo[1]).max(1e-12)];
    let scale = (fill * width as f64 / span[0]).min(fill * height as f64 / span[1]);
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let (cx, cy) = (width / 2, height / 2);
    let project = |p: [f64; 3]| -> [f64; 3] {
        [
            cx as f64 + 0.5 + (p[0] - mid[0]) * scale,
            cy as f64 + 0.5 - (p[1] - mid[1]) * scale,
            p[2] * scale,
        ]
    };
    let mut depth = vec![f64::NEG_INFINITY; width * height];
    let mut normals: Vec<Option<[f64; 3]>> = vec![None; width * height];
    for tri in &mesh.triangles {
        let p: Vec<[f64; 3]> = tri.iter().map(|(i, _)| project(mesh.positions[*i])).collect();
        // Face normal in image space (y flipped).
        let world: Vec<[f64; 3]> = tri.iter().map(|(i, _)| mesh.positions[*i]).collect();
        let e1 = [world[1][0] - world[0][0], world[1][1] - world[0][1], world[1][2] - world[0][2]];
        let e2 = [world[2][0] - world[0][0], world[2][1] - world[0][1], world[2][2] - world[0][2]];
        let face = [
            e1[1] * e2[2] - e1[2] * e2[1],
            e1[2] * e2[0] - e1[0] * e2[2],
            e1[0] * e2[1] - e1[1] * e2[0],
        ];
        let area = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        if area.abs() < 1e-12 {
            continue;
        }
        let x0 = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let x1 = (p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max).ceil() as usize).min(width);
        let y0 = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let y1 = (p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max).ceil() as usize).min(height);
        for y in y0..y1 {
            for x in x0..x1 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let w0 = ((p[1][0] - px) * (p[2][1] - py) - (p[2][0] - px) * (p[1][1] - py)) / area;
                let w1 = ((p[2][0] - px) * (p[0][1] - py) - (p[0][0] - px) * (p[2][1] - py)) / area;
                let w2 = 1.0 - w0 - w1;
                if w0 < -1e-12 || w1 < -1e-12 || w2 < -1e-12 {
                    continue;
                }
                let z = w0 * p[0][2] + w1 * p[1][2] + w2 * p[2][2];
                let idx = y * width + x;
                if z <= depth[idx] {
                    continue;
                }
                let interpolated = if tri.iter().all(|(_, n)| n.is_some()) {
                    let ns: Vec<[f64; 3]> = tri.iter().map(|(_, n)| mesh.normals[n.unwrap()]).collect();
                    [0, 1, 2].map(|a| w0 * ns[0][a] + w1 * ns[1][a] + w2 * ns[2][a])
                } else {
                    face
                };
                if let Some(mut n) = normalize(interpolated) {
                    if n[2] < 0.0 {
                        n = [-n[0], -n[1], -n[2]];
                    }
                    depth[idx] = z;
                    // Mesh y is up, image y is down.
                    normals[idx] = Some([n[0], -n[1], n[2]]);
                }
            }
        }
    }
    Raster {
        normals,
        center: (cx, cy),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUAD: &str = "\
# unit square facing +z
v -1 -1 0
v 1 -1 0
v 1 1 0
v -1 1 0
vn 0 0 1
f 1//1 2//1 3//1 4//1
";

    #[test]
    fn parses_subset_and_triangulates() {
        let m = Mesh::parse_obj(QUAD).unwrap();
        assert_eq!(m.positions.len(), 4);
        assert_eq!(m.normals.len(), 1);
        assert_eq!(m.triangles.len(), 2);
    }

    #[test]
    fn reports_line_numbers() {
        let err = Mesh::parse_obj("v 0 0 0\nv 1 x 0\n").unwrap_err();
        assert_eq!(err.0, 2);
        let err = Mesh::parse_obj("v 0 0 0\nf 1 2 3\n").unwrap_err();
        assert_eq!(err.0, 2);
    }

    #[test]
    fn flat_square_rasterises_to_frontal_normals() {
        let m = Mesh::parse_obj(QUAD).unwrap();
        let r = rasterize(&m, 20, 20, 0.5);
        let fg: Vec<_> = r.normals.iter().flatten().collect();
        assert!(!fg.is_empty());
        assert!(fg.iter().all(|n| (n[2] - 1.0).abs() < 1e-12));
        assert!(r.normals[0].is_none());
    }
}
