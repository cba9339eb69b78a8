//! Flat binary volume format.
//!
//! A text header of one record per line,
//!
//! ```text
//! SMEAN1
//! dim 2
//! counts 161 161
//! spacing 0.0131 0.0093
//! origin -1.05 -0.75
//! payload reconstruction
//! attr semi_axes 1.0 0.7
//! end
//! ```
//!
//! followed by `prod(counts)` little-endian `f64` values in row-major order
//! (last axis fastest). Floats in the header use the shortest representation
//! that parses back to the same bits. Image nodes without a value are stored
//! as NaN.

use std::io::{BufRead, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{ensure, Error, Result};
use crate::forward::{MeanData, RadialGrid};
use crate::geometry::{build_sphere_quadrature, Ellipsoid};
use crate::reconstruction::{Diagnostics, ReconImage, Stage, VolumeGrid};

pub const MAGIC: &str = "SMEAN1";

/// What the payload holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Payload {
    /// Sampled ground truth.
    Phantom,
    Backprojected,
    Reconstruction,
    /// Spherical means indexed by (direction, radius).
    Means,
}

impl Payload {
    fn tag(self) -> &'static str {
        match self {
            Self::Phantom => "phantom",
            Self::Backprojected => "backprojected",
            Self::Reconstruction => "reconstruction",
            Self::Means => "means",
        }
    }

    fn from_tag(tag: &str) -> Result<Self> {
        Ok(match tag {
            "phantom" => Self::Phantom,
            "backprojected" => Self::Backprojected,
            "reconstruction" => Self::Reconstruction,
            "means" => Self::Means,
            other => return Err(Error::Format(format!("unknown payload tag {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeFile {
    pub counts: Vec<usize>,
    pub spacing: Vec<f64>,
    pub origin: Vec<f64>,
    pub payload: Payload,
    /// Named float lists, e.g. `semi_axes`.
    pub attributes: Vec<(String, Vec<f64>)>,
    pub data: Vec<f64>,
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

fn parse_floats(fields: &[&str], what: &str) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .map_err(|_| Error::Format(format!("bad {what} value {f:?}")))
        })
        .collect()
}

impl VolumeFile {
    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn attribute(&self, key: &str) -> Option<&[f64]> {
        self.attributes
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_slice())
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        ensure!(n >= 1, Format, "volume needs at least one axis");
        ensure!(
            self.spacing.len() == n && self.origin.len() == n,
            Format,
            "spacing and origin need {n} entries"
        );
        let len: usize = self.counts.iter().product();
        ensure!(
            self.data.len() == len,
            Format,
            "payload has {} values, counts imply {len}",
            self.data.len()
        );
        ensure!(
            self.attributes
                .iter()
                .all(|(k, _)| !k.is_empty() && !k.contains(char::is_whitespace)),
            Format,
            "attribute names must be non-empty words"
        );
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        self.validate()?;
        let counts: Vec<String> = self.counts.iter().map(|c| c.to_string()).collect();
        let mut header = format!(
            "{MAGIC}\ndim {}\ncounts {}\nspacing {}\norigin {}\npayload {}\n",
            self.dim(),
            counts.join(" "),
            join(&self.spacing),
            join(&self.origin),
            self.payload.tag()
        );
        for (k, v) in &self.attributes {
            header.push_str(&format!("attr {k} {}\n", join(v)));
        }
        header.push_str("end\n");
        out.write_all(header.as_bytes())?;
        let mut bytes = Vec::with_capacity(8 * self.data.len());
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&bytes)?;
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut input: R) -> Result<Self> {
        let mut line = String::new();
        let next_line = |input: &mut R, line: &mut String| -> Result<()> {
            line.clear();
            let read = input.read_line(line)?;
            ensure!(read > 0 && line.ends_with('\n'), Format, "truncated header");
            line.pop();
            Ok(())
        };
        next_line(&mut input, &mut line)?;
        ensure!(line == MAGIC, Format, "bad magic {line:?}, expected {MAGIC}");

        let (mut dim, mut counts, mut spacing, mut origin, mut payload) = (None, None, None, None, None);
        let mut attributes = Vec::new();
        loop {
            next_line(&mut input, &mut line)?;
            let fields: Vec<&str> = line.split(' ').collect();
            match fields[0] {
                "end" => break,
                "dim" => {
                    let d = fields.get(1).and_then(|f| f.parse::<usize>().ok());
                    dim = Some(d.ok_or_else(|| Error::Format(format!("bad dim line {line:?}")))?);
                }
                "counts" => {
                    let c = fields[1..]
                        .iter()
                        .map(|f| f.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>();
                    counts = Some(c.map_err(|_| Error::Format(format!("bad counts line {line:?}")))?);
                }
                "spacing" => spacing = Some(parse_floats(&fields[1..], "spacing")?),
                "origin" => origin = Some(parse_floats(&fields[1..], "origin")?),
                "payload" => {
                    payload = Some(Payload::from_tag(fields.get(1).copied().unwrap_or(""))?);
                }
                "attr" if fields.len() >= 2 => {
                    attributes.push((fields[1].to_string(), parse_floats(&fields[2..], fields[1])?));
                }
                other => return Err(Error::Format(format!("unknown header record {other:?}"))),
            }
        }
        let missing = |what: &str| Error::Format(format!("header lacks {what}"));
        let dim = dim.ok_or_else(|| missing("dim"))?;
        let counts: Vec<usize> = counts.ok_or_else(|| missing("counts"))?;
        ensure!(
            counts.len() == dim,
            Format,
            "counts has {} entries, dim is {dim}",
            counts.len()
        );
        let len = counts
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c))
            .ok_or_else(|| Error::Format("counts overflow".into()))?;

        let mut bytes = Vec::new();
        input.take(8 * len as u64 + 1).read_to_end(&mut bytes)?;
        ensure!(
            bytes.len() >= 8 * len,
            Format,
            "truncated payload: {} of {} bytes",
            bytes.len(),
            8 * len
        );
        ensure!(bytes.len() == 8 * len, Format, "trailing bytes after payload");
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();

        let file = Self {
            counts,
            spacing: spacing.ok_or_else(|| missing("spacing"))?,
            origin: origin.ok_or_else(|| missing("origin"))?,
            payload: payload.ok_or_else(|| missing("payload"))?,
            attributes,
            data,
        };
        file.validate()?;
        Ok(file)
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }

    /// Volume of a sampled field; `geometry` is stored so the interior
    /// mask can be rebuilt.
    pub fn from_image(image: &ReconImage, payload: Payload, geometry: Option<&Ellipsoid>) -> Self {
        let grid = &image.grid;
        let data = image
            .values
            .iter()
            .zip(&image.defined)
            .map(|(&v, &d)| if d { v } else { f64::NAN })
            .collect();
        Self {
            counts: grid.counts().to_vec(),
            spacing: grid.spacing().to_vec(),
            origin: grid.origin().to_vec(),
            payload,
            attributes: geometry
                .map(|g| vec![("semi_axes".to_string(), g.semi_axes().to_vec())])
                .unwrap_or_default(),
            data,
        }
    }

    pub fn geometry(&self) -> Result<Option<Ellipsoid>> {
        self.attribute("semi_axes")
            .map(|a| Ellipsoid::new(a.to_vec()))
            .transpose()
    }

    /// Image with NaN nodes undefined; the mask is rebuilt from the stored
    /// semi-axes when present.
    pub fn to_image(&self) -> Result<ReconImage> {
        ensure!(self.payload != Payload::Means, Format, "means payload is not an image");
        let mut grid = VolumeGrid::from_parts(self.counts.clone(), self.origin.clone(), self.spacing.clone())?;
        if let Some(geometry) = self.geometry()? {
            ensure!(
                geometry.dim() == self.dim(),
                Format,
                "semi_axes do not match the volume dimension"
            );
            grid.set_ellipsoid_mask(&geometry);
        }
        let defined = self.data.iter().map(|v| !v.is_nan()).collect();
        let values = self.data.iter().map(|&v| if v.is_nan() { 0.0 } else { v }).collect();
        let stage = match self.payload {
            Payload::Backprojected => Stage::Backprojected,
            _ => Stage::LaplacianApplied,
        };
        Ok(ReconImage {
            grid,
            values,
            defined,
            stage,
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn from_means(data: &MeanData) -> Self {
        let radii = data.radii;
        Self {
            counts: vec![data.directions.len(), radii.len()],
            spacing: vec![1.0, radii.step()],
            origin: vec![0.0, radii.first()],
            payload: Payload::Means,
            attributes: vec![
                ("semi_axes".to_string(), data.geometry.semi_axes().to_vec()),
                ("direction_order".to_string(), vec![data.directions.order() as f64]),
                (
                    "staggered".to_string(),
                    vec![if radii.is_staggered() { 1.0 } else { 0.0 }],
                ),
            ],
            data: data.values.clone(),
        }
    }

    /// Mean data; the direction quadrature is rebuilt from its order.
    pub fn to_means(&self) -> Result<MeanData> {
        ensure!(
            self.payload == Payload::Means,
            Format,
            "payload is {:?}, not means",
            self.payload
        );
        ensure!(self.dim() == 2, Format, "means volume must have 2 axes");
        let geometry = self
            .geometry()?
            .ok_or_else(|| Error::Format("means volume lacks semi_axes".into()))?;
        let scalar = |key: &str| -> Result<f64> {
            match self.attribute(key) {
                Some([v]) => Ok(*v),
                _ => Err(Error::Format(format!("means volume lacks a scalar {key}"))),
            }
        };
        let order = scalar("direction_order")?;
        ensure!(
            order >= 1.0 && order.fract() == 0.0,
            Format,
            "bad direction_order {order}"
        );
        let staggered = scalar("staggered")? != 0.0;
        let directions = Arc::new(build_sphere_quadrature(geometry.dim(), order as usize)?);
        ensure!(
            directions.len() == self.counts[0],
            Format,
            "direction_order {order} gives {} directions, file has {}",
            directions.len(),
            self.counts[0]
        );
        let radii = RadialGrid::from_step(self.counts[1], self.spacing[1], staggered)?;
        ensure!(
            radii.first() == self.origin[1],
            Format,
            "radial origin does not match the grid layout"
        );
        Ok(MeanData {
            geometry,
            directions,
            radii,
            values: self.data.clone(),
        })
    }
}
