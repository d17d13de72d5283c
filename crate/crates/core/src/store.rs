//! Append-only draw store.
//!
//! Layout:
//!
//! ```text
//! softsurv-draws 1\n
//! <DrawHeader as one line of JSON>\n
//! record*
//! ```
//!
//! Each record is little-endian binary:
//!
//! ```text
//! u64 iteration
//! u8  family (0 exponential, 1 weibull)
//! f64 rate, f64 shape (0 for exponential), f64 eta, f64 sigma_mu
//! u32 n_w, then n_w f64 frailties
//! u32 n_trees, then per tree:
//!     f64 bandwidth, u32 n_nodes, then n_nodes preorder nodes:
//!         u8 0 + f64 leaf mean | u8 1 + u32 coordinate + f64 cutpoint
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::forest::{PreorderNode, SoftTree};
use crate::hazard::BaselineHazard;
use crate::sampler::{Draw, DrawHeader, PosteriorDraws};

pub const MAGIC: &str = "softsurv-draws 1";

pub struct DrawWriter<W: Write> {
    inner: W,
}

impl<W: Write> DrawWriter<W> {
    pub fn new(mut inner: W, header: &DrawHeader) -> Result<Self> {
        let json = serde_json::to_string(header).map_err(|e| Error::Store(e.to_string()))?;
        writeln!(inner, "{MAGIC}")?;
        writeln!(inner, "{json}")?;
        Ok(Self { inner })
    }

    pub fn append(&mut self, draw: &Draw) -> Result<()> {
        let w = &mut self.inner;
        w.write_u64::<LE>(draw.iteration)?;
        let (tag, rate, shape) = match draw.bh {
            BaselineHazard::Exponential { rate } => (0u8, rate, 0.0),
            BaselineHazard::Weibull { shape, rate } => (1u8, rate, shape),
        };
        w.write_u8(tag)?;
        w.write_f64::<LE>(rate)?;
        w.write_f64::<LE>(shape)?;
        w.write_f64::<LE>(draw.eta)?;
        w.write_f64::<LE>(draw.sigma_mu)?;
        w.write_u32::<LE>(len_u32(draw.w.len())?)?;
        for &v in &draw.w {
            w.write_f64::<LE>(v)?;
        }
        w.write_u32::<LE>(len_u32(draw.trees.len())?)?;
        for tree in &draw.trees {
            w.write_f64::<LE>(tree.bandwidth())?;
            let nodes = tree.preorder();
            w.write_u32::<LE>(len_u32(nodes.len())?)?;
            for node in nodes {
                match node {
                    PreorderNode::Leaf(mu) => {
                        w.write_u8(0)?;
                        w.write_f64::<LE>(mu)?;
                    }
                    PreorderNode::Branch(coord, cut) => {
                        w.write_u8(1)?;
                        w.write_u32::<LE>(len_u32(coord)?)?;
                        w.write_f64::<LE>(cut)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Store(format!("count {n} does not fit in u32")))
}

pub fn write_draws<W: Write>(out: W, draws: &PosteriorDraws) -> Result<()> {
    let mut w = DrawWriter::new(out, &draws.header)?;
    for d in &draws.draws {
        w.append(d)?;
    }
    w.finish()?;
    Ok(())
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == ErrorKind::UnexpectedEof {
        Error::Store("truncated record".into())
    } else {
        Error::Io(e)
    }
}

fn read_draw<R: Read>(r: &mut R, iteration: u64) -> Result<Draw> {
    let tag = r.read_u8().map_err(truncated)?;
    let rate = r.read_f64::<LE>().map_err(truncated)?;
    let shape = r.read_f64::<LE>().map_err(truncated)?;
    let bh = match tag {
        0 => BaselineHazard::Exponential { rate },
        1 => BaselineHazard::Weibull { shape, rate },
        t => return Err(Error::Store(format!("unknown baseline family tag {t}"))),
    };
    let eta = r.read_f64::<LE>().map_err(truncated)?;
    let sigma_mu = r.read_f64::<LE>().map_err(truncated)?;
    let n_w = r.read_u32::<LE>().map_err(truncated)?;
    let w = (0..n_w)
        .map(|_| r.read_f64::<LE>().map_err(truncated))
        .collect::<Result<Vec<_>>>()?;
    let n_trees = r.read_u32::<LE>().map_err(truncated)?;
    let mut trees = Vec::with_capacity(n_trees.min(1 << 16) as usize);
    for _ in 0..n_trees {
        let bandwidth = r.read_f64::<LE>().map_err(truncated)?;
        let n_nodes = r.read_u32::<LE>().map_err(truncated)?;
        let mut nodes = Vec::with_capacity(n_nodes.min(1 << 16) as usize);
        for _ in 0..n_nodes {
            let node = match r.read_u8().map_err(truncated)? {
                0 => PreorderNode::Leaf(r.read_f64::<LE>().map_err(truncated)?),
                1 => {
                    let coord = r.read_u32::<LE>().map_err(truncated)? as usize;
                    PreorderNode::Branch(coord, r.read_f64::<LE>().map_err(truncated)?)
                }
                t => return Err(Error::Store(format!("unknown node tag {t}"))),
            };
            nodes.push(node);
        }
        let tree = SoftTree::from_preorder(&nodes, bandwidth)
            .ok_or_else(|| Error::Store("invalid tree node list".into()))?;
        trees.push(tree);
    }
    Ok(Draw {
        iteration,
        bh,
        eta,
        w,
        sigma_mu,
        trees,
    })
}

pub fn read_draws<R: Read>(input: R) -> Result<PosteriorDraws> {
    let mut r = BufReader::new(input);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end_matches('\n') != MAGIC {
        return Err(Error::Store("not a draw store (bad magic line)".into()));
    }
    line.clear();
    r.read_line(&mut line)?;
    let header: DrawHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Store(format!("header: {e}")))?;
    let mut draws = Vec::new();
    loop {
        let iteration = match r.read_u64::<LE>() {
            Ok(v) => v,
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => {
                if r.fill_buf()?.is_empty() {
                    break;
                }
                return Err(Error::Store("truncated record".into()));
            }
            Err(e) => return Err(e.into()),
        };
        draws.push(read_draw(&mut r, iteration)?);
    }
    Ok(PosteriorDraws { header, draws })
}

pub fn save(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let f = File::create(path)?;
    write_draws(BufWriter::new(f), draws)
}

pub fn load(path: &Path) -> Result<PosteriorDraws> {
    read_draws(File::open(path)?)
}
