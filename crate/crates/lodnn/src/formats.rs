//! On-disk formats: coefficient text files, the binary network container and
//! the surrogate container (text header followed by a network container).

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use lodnn_core::dense::DenseMatrix;
use lodnn_core::fem::CoefficientField;
use lodnn_core::mesh::{Level, MeshHierarchy};
use lodnn_core::nn::{Layer, Network, NetworkCertificate};
use lodnn_core::sparse::SparseMatrix;
use lodnn_core::surrogate::{LocalSurrogate, SpectralBounds, SurrogateGeometry};

use crate::error::{format_err, AppError, AppResult};

pub const NETWORK_MAGIC: &[u8; 8] = b"LODNNNET";
pub const NETWORK_VERSION: u32 = 1;
pub const SURROGATE_MAGIC: &str = "lodnn-surrogate";
pub const SURROGATE_VERSION: u32 = 1;

const TAG_DENSE: u8 = 0;
const TAG_CSR: u8 = 1;

/// Writes `d nH r_eps r_h alpha beta` and one value per line.
pub fn write_coefficient<W: Write>(mut w: W, a: &CoefficientField) -> AppResult<()> {
    let h = a.hierarchy();
    writeln!(w, "{} {} {} {} {} {}", h.dim(), h.n_coarse(), h.r_eps(), h.r_h(), a.alpha(), a.beta())?;
    for v in a.values() {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

pub fn read_coefficient<R: Read>(r: R) -> AppResult<CoefficientField> {
    let mut text = String::new();
    BufReader::new(r).read_to_string(&mut text)?;
    let mut tokens = text.split_whitespace();
    let mut next = |name: &str| tokens.next().ok_or_else(|| format_err("coefficient file", format!("missing {name}")));
    let int = |s: &str, name: &str| s.parse::<usize>().map_err(|e| format_err("coefficient file", format!("{name}: {e}")));
    let d = int(next("d")?, "d")?;
    let nh = int(next("nH")?, "nH")?;
    let r_eps = int(next("r_eps")?, "r_eps")?;
    let r_h = int(next("r_h")?, "r_h")?;
    let float = |s: &str, name: &str| s.parse::<f64>().map_err(|e| format_err("coefficient file", format!("{name}: {e}")));
    let alpha = float(next("alpha")?, "alpha")?;
    let beta = float(next("beta")?, "beta")?;
    let hier = MeshHierarchy::new(d, nh, r_eps, r_h)?;
    let values: Vec<f64> = tokens.map(|t| float(t, "value")).collect::<AppResult<_>>()?;
    let expected = hier.num_elements(Level::Eps);
    if values.len() != expected {
        return Err(format_err("coefficient file", format!("expected {expected} values, found {}", values.len())));
    }
    Ok(CoefficientField::new(&hier, values, alpha, beta)?)
}

pub fn save_coefficient(path: &Path, a: &CoefficientField) -> AppResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_coefficient(&mut w, a)?;
    w.flush()?;
    Ok(())
}

pub fn load_coefficient(path: &Path) -> AppResult<CoefficientField> {
    read_coefficient(File::open(path)?)
}

fn put_u64<W: Write>(w: &mut W, v: usize) -> io::Result<()> {
    w.write_all(&(v as u64).to_le_bytes())
}

fn put_f64s<W: Write>(w: &mut W, v: &[f64]) -> io::Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn get_u64<R: Read>(r: &mut R) -> io::Result<usize> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b) as usize)
}

fn get_f64s<R: Read>(r: &mut R, n: usize) -> io::Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
}

/// A layer is written densely when that is smaller and loses nothing.
fn dense_is_exact_and_smaller(w: &SparseMatrix) -> bool {
    let dense = w.rows() * w.cols() * 8;
    let csr = w.nnz() * 12 + (w.rows() + 1) * 8;
    dense <= csr && w.count_nonzero() == w.nnz()
}

/// Binary container: magic, version, layer count, then per layer
/// `rows, cols, tag` and either dense row-major weights or CSR arrays,
/// followed by the bias. All numbers are little-endian.
pub fn write_network<W: Write>(mut w: W, net: &Network) -> AppResult<()> {
    w.write_all(NETWORK_MAGIC)?;
    w.write_all(&NETWORK_VERSION.to_le_bytes())?;
    put_u64(&mut w, net.depth())?;
    for layer in net.layers() {
        let m = layer.weights();
        put_u64(&mut w, m.rows())?;
        put_u64(&mut w, m.cols())?;
        if dense_is_exact_and_smaller(m) {
            w.write_all(&[TAG_DENSE])?;
            put_f64s(&mut w, m.to_dense().as_slice())?;
        } else {
            w.write_all(&[TAG_CSR])?;
            put_u64(&mut w, m.nnz())?;
            for p in m.row_ptr() {
                put_u64(&mut w, *p)?;
            }
            for c in m.col_indices() {
                w.write_all(&c.to_le_bytes())?;
            }
            put_f64s(&mut w, m.values())?;
        }
        put_f64s(&mut w, layer.bias())?;
    }
    Ok(())
}

pub fn read_network<R: Read>(mut r: R) -> AppResult<Network> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != NETWORK_MAGIC {
        return Err(format_err("network container", "bad magic"));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    let version = u32::from_le_bytes(v);
    if version != NETWORK_VERSION {
        return Err(format_err("network container", format!("unsupported version {version}")));
    }
    let depth = get_u64(&mut r)?;
    let mut layers = Vec::with_capacity(depth.min(1 << 16));
    for _ in 0..depth {
        let rows = get_u64(&mut r)?;
        let cols = get_u64(&mut r)?;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let weights = match tag[0] {
            TAG_DENSE => {
                let data = get_f64s(&mut r, rows * cols)?;
                SparseMatrix::from_dense(&DenseMatrix::from_row_major(rows, cols, data)?, 0.0)
            }
            TAG_CSR => {
                let nnz = get_u64(&mut r)?;
                let row_ptr = (0..=rows).map(|_| get_u64(&mut r)).collect::<io::Result<Vec<_>>>()?;
                let mut buf = vec![0u8; nnz * 4];
                r.read_exact(&mut buf)?;
                let col_idx = buf.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("chunk of 4"))).collect();
                let values = get_f64s(&mut r, nnz)?;
                SparseMatrix::from_csr(rows, cols, row_ptr, col_idx, values)?
            }
            t => return Err(format_err("network container", format!("unknown layer tag {t}"))),
        };
        let bias = get_f64s(&mut r, rows)?;
        layers.push(Layer::new(weights, bias)?);
    }
    Ok(Network::new(layers)?)
}

pub fn save_network(path: &Path, net: &Network) -> AppResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_network(&mut w, net)?;
    w.flush()?;
    Ok(())
}

pub fn load_network(path: &Path) -> AppResult<Network> {
    read_network(BufReader::new(File::open(path)?))
}

fn header_fields(s: &LocalSurrogate) -> Vec<(String, String)> {
    let g = &s.geometry;
    let b = &s.bounds;
    let c = &s.certificate;
    let mut f: Vec<(String, String)> = vec![
        ("dim".into(), g.dim.to_string()),
        ("n_coarse".into(), g.n_coarse.to_string()),
        ("ell".into(), g.ell.to_string()),
        ("r_eps".into(), g.r_eps.to_string()),
        ("r_h".into(), g.r_h.to_string()),
        ("alpha".into(), s.alpha.to_string()),
        ("beta".into(), s.beta.to_string()),
        ("eta".into(), s.eta.to_string()),
        ("theta".into(), s.theta.to_string()),
        ("gamma".into(), s.gamma.to_string()),
        ("v_resc".into(), s.v_resc.to_string()),
        ("vhat_resc".into(), s.vhat_resc.to_string()),
        ("delta".into(), s.delta.to_string()),
        ("delta_hat".into(), s.delta_hat.to_string()),
        ("bounds.v_inf".into(), b.v_inf.to_string()),
        ("bounds.v_sup".into(), b.v_sup.to_string()),
        ("bounds.vhat_inf".into(), b.vhat_inf.to_string()),
        ("bounds.vhat_sup".into(), b.vhat_sup.to_string()),
        ("bounds.norm_interp".into(), b.norm_interp.to_string()),
        ("bounds.norm_prolong".into(), b.norm_prolong.to_string()),
        ("bounds.norm_element_prolong".into(), b.norm_element_prolong.to_string()),
        ("cert.target".into(), c.target.clone()),
        ("cert.domain".into(), c.domain.clone()),
        ("cert.tolerance".into(), c.tolerance.to_string()),
        ("cert.depth".into(), c.depth.to_string()),
        ("cert.params".into(), c.params.to_string()),
    ];
    for (k, v) in &c.budget {
        f.push((format!("budget.{k}"), v.to_string()));
    }
    f
}

/// Text header of `key = value` lines closed by `end`, then the network.
pub fn write_surrogate<W: Write>(mut w: W, s: &LocalSurrogate) -> AppResult<()> {
    writeln!(w, "{SURROGATE_MAGIC} {SURROGATE_VERSION}")?;
    for (k, v) in header_fields(s) {
        if v.contains('\n') {
            return Err(format_err("surrogate header", format!("value of {k} spans lines")));
        }
        writeln!(w, "{k} = {v}")?;
    }
    writeln!(w, "end")?;
    write_network(w, &s.net)
}

struct Header(Vec<(String, String)>);

impl Header {
    fn raw(&self, key: &str) -> AppResult<&str> {
        self.0
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| format_err("surrogate header", format!("missing {key}")))
    }

    fn f64(&self, key: &str) -> AppResult<f64> {
        self.raw(key)?.parse().map_err(|e| format_err("surrogate header", format!("{key}: {e}")))
    }

    fn usize(&self, key: &str) -> AppResult<usize> {
        self.raw(key)?.parse().map_err(|e| format_err("surrogate header", format!("{key}: {e}")))
    }
}

pub fn read_surrogate<R: BufRead>(mut r: R) -> AppResult<LocalSurrogate> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let mut first = line.split_whitespace();
    if first.next() != Some(SURROGATE_MAGIC) {
        return Err(format_err("surrogate container", "bad magic"));
    }
    if first.next() != Some(&SURROGATE_VERSION.to_string()) {
        return Err(format_err("surrogate container", "unsupported version"));
    }
    let mut fields = Vec::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(format_err("surrogate header", "missing end"));
        }
        let l = line.trim_end_matches('\n');
        if l == "end" {
            break;
        }
        let (k, v) = l.split_once(" = ").ok_or_else(|| format_err("surrogate header", format!("bad line {l:?}")))?;
        fields.push((k.to_string(), v.to_string()));
    }
    let h = Header(fields);
    let net = read_network(&mut r)?;
    let geometry = SurrogateGeometry::new(h.usize("dim")?, h.usize("n_coarse")?, h.usize("ell")?, h.usize("r_eps")?, h.usize("r_h")?)?;
    let bounds = SpectralBounds {
        v_inf: h.f64("bounds.v_inf")?,
        v_sup: h.f64("bounds.v_sup")?,
        vhat_inf: h.f64("bounds.vhat_inf")?,
        vhat_sup: h.f64("bounds.vhat_sup")?,
        norm_interp: h.f64("bounds.norm_interp")?,
        norm_prolong: h.f64("bounds.norm_prolong")?,
        norm_element_prolong: h.f64("bounds.norm_element_prolong")?,
    };
    let budget = h
        .0
        .iter()
        .filter_map(|(k, v)| k.strip_prefix("budget.").map(|name| (name, v)))
        .map(|(name, v)| {
            v.parse::<f64>()
                .map(|x| (name.to_string(), x))
                .map_err(|e| format_err("surrogate header", format!("budget.{name}: {e}")))
        })
        .collect::<AppResult<Vec<_>>>()?;
    let certificate = NetworkCertificate {
        target: h.raw("cert.target")?.to_string(),
        domain: h.raw("cert.domain")?.to_string(),
        tolerance: h.f64("cert.tolerance")?,
        depth: h.usize("cert.depth")?,
        params: h.usize("cert.params")?,
        budget,
    };
    let s = LocalSurrogate {
        net,
        geometry,
        alpha: h.f64("alpha")?,
        beta: h.f64("beta")?,
        eta: h.f64("eta")?,
        theta: h.f64("theta")?,
        gamma: h.f64("gamma")?,
        v_resc: h.f64("v_resc")?,
        vhat_resc: h.f64("vhat_resc")?,
        delta: h.f64("delta")?,
        delta_hat: h.f64("delta_hat")?,
        bounds,
        certificate,
    };
    s.validate()?;
    Ok(s)
}

pub fn save_surrogate(path: &Path, s: &LocalSurrogate) -> AppResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_surrogate(&mut w, s)?;
    w.flush()?;
    Ok(())
}

pub fn load_surrogate(path: &Path) -> AppResult<LocalSurrogate> {
    read_surrogate(BufReader::new(File::open(path)?))
}

/// Loads a surrogate and checks that it serves `hier` with oversampling `ell`.
pub fn load_surrogate_for(path: &Path, hier: &MeshHierarchy, ell: usize) -> AppResult<LocalSurrogate> {
    let s = load_surrogate(path)?;
    let want = SurrogateGeometry::of_hierarchy(hier, ell)?;
    if s.geometry != want {
        return Err(AppError::Core(lodnn_core::Error::InvalidGeometry(format!(
            "surrogate in {} was built for {:?}, expected {:?}",
            path.display(),
            s.geometry,
            want
        ))));
    }
    Ok(s)
}
