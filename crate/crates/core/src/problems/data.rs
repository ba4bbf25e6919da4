use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matcore::{matmul_nt, thin_qr, DenseMatrix};

pub const CONTAINER_MAGIC: &[u8; 4] = b"LNDG";
pub const CONTAINER_VERSION: u32 = 1;

const KIND_PCA: u32 = 1;
const KIND_ICA: u32 = 2;

/// Haar-distributed point on St(p, n): Q factor of a Gaussian draw.
pub fn random_stiefel(n: usize, p: usize, rng: &mut impl Rng) -> Result<DenseMatrix> {
    if p == 0 || n < p {
        return Err(Error::Contract(format!("random_stiefel needs 1 <= p <= n, got n={n}, p={p}")));
    }
    loop {
        let g = DenseMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal));
        match thin_qr(&g) {
            Ok((q, _)) => return Ok(q),
            // probability zero, but a degenerate draw is not worth failing over
            Err(Error::RankDeficient { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaInstance {
    /// `N x n`, one sample per row.
    pub data: DenseMatrix,
    pub noise_sigma: f64,
    pub planted_u: DenseMatrix,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcaInstance {
    pub sources: DenseMatrix,
    pub mixing: DenseMatrix,
    /// `sources · mixingᵀ`
    pub data: DenseMatrix,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Pca(PcaInstance),
    Ica(IcaInstance),
}

/// Rows drawn from `N(0, U Uᵀ + sigma I_n)` as `U z + sqrt(sigma) w`.
pub fn gen_pca_data(n: usize, p: usize, big_n: usize, sigma: f64, seed: u64) -> Result<PcaInstance> {
    if big_n == 0 {
        return Err(Error::config("N", "sample count must be positive"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::config("sigma", format!("must be finite and nonnegative, got {sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_stiefel(n, p, &mut rng)?;
    let noise = sigma.sqrt();
    let mut data = DenseMatrix::zeros(big_n, n);
    let mut z = vec![0.0; p];
    for r in 0..big_n {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let row = data.row_mut(r);
        for (i, out) in row.iter_mut().enumerate() {
            let planted: f64 = u.row(i).iter().zip(&z).map(|(a, b)| a * b).sum();
            let w: f64 = rng.sample(StandardNormal);
            *out = planted + noise * w;
        }
    }
    Ok(PcaInstance {
        data,
        noise_sigma: sigma,
        planted_u: u,
        seed,
    })
}

/// Standard Laplace draw by inverse CDF of a uniform on (-1/2, 1/2).
fn laplace(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    if u == -0.5 {
        return laplace(rng);
    }
    -u.signum() * (-2.0 * u.abs()).ln_1p()
}

/// Laplace sources mixed by a Haar orthogonal matrix.
pub fn gen_ica_data(n: usize, big_n: usize, seed: u64) -> Result<IcaInstance> {
    if big_n == 0 {
        return Err(Error::config("N", "sample count must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mixing = random_stiefel(n, n, &mut rng)?;
    let sources = DenseMatrix::from_fn(big_n, n, |_, _| laplace(&mut rng));
    let data = matmul_nt(&sources, &mixing)?;
    Ok(IcaInstance {
        sources,
        mixing,
        data,
        seed,
    })
}

fn put_matrix(out: &mut Vec<u8>, m: &DenseMatrix) {
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes an instance: magic, version, kind, seed, sigma, then each
/// matrix as `(rows u64, cols u64, row-major f64...)`, all little-endian.
pub fn write_instance(w: &mut impl Write, inst: &Instance) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(CONTAINER_MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    match inst {
        Instance::Pca(p) => {
            out.extend_from_slice(&KIND_PCA.to_le_bytes());
            out.extend_from_slice(&p.seed.to_le_bytes());
            out.extend_from_slice(&p.noise_sigma.to_le_bytes());
            put_matrix(&mut out, &p.data);
            put_matrix(&mut out, &p.planted_u);
        }
        Instance::Ica(i) => {
            out.extend_from_slice(&KIND_ICA.to_le_bytes());
            out.extend_from_slice(&i.seed.to_le_bytes());
            out.extend_from_slice(&0f64.to_le_bytes());
            put_matrix(&mut out, &i.sources);
            put_matrix(&mut out, &i.mixing);
            put_matrix(&mut out, &i.data);
        }
    }
    w.write_all(&out)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const K: usize>(&mut self) -> Result<[u8; K]> {
        let end = self.pos + K;
        let bytes = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| Error::Container(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(bytes.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn matrix(&mut self) -> Result<DenseMatrix> {
        let rows = self.u64()? as usize;
        let cols = self.u64()? as usize;
        let len = rows
            .checked_mul(cols)
            .filter(|&l| l.saturating_mul(8) <= self.buf.len() - self.pos)
            .ok_or_else(|| Error::Container(format!("matrix {rows}x{cols} exceeds payload")))?;
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(self.f64()?);
        }
        DenseMatrix::new(rows, cols, data).map_err(|e| Error::Container(e.to_string()))
    }
}

pub fn read_instance(r: &mut impl Read) -> Result<Instance> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if &c.take::<4>()? != CONTAINER_MAGIC {
        return Err(Error::Container("bad magic".into()));
    }
    let version = c.u32()?;
    if version != CONTAINER_VERSION {
        return Err(Error::Container(format!("unsupported version {version}")));
    }
    let kind = c.u32()?;
    let seed = c.u64()?;
    let sigma = c.f64()?;
    let inst = match kind {
        KIND_PCA => Instance::Pca(PcaInstance {
            data: c.matrix()?,
            planted_u: c.matrix()?,
            noise_sigma: sigma,
            seed,
        }),
        KIND_ICA => Instance::Ica(IcaInstance {
            sources: c.matrix()?,
            mixing: c.matrix()?,
            data: c.matrix()?,
            seed,
        }),
        other => return Err(Error::Container(format!("unknown instance kind {other}"))),
    };
    if c.pos != buf.len() {
        return Err(Error::Container(format!("{} trailing bytes", buf.len() - c.pos)));
    }
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{matmul_tn, sym_eig};

    fn orthonormality_error(q: &DenseMatrix) -> f64 {
        let mut g = matmul_tn(q, q).unwrap();
        g.add_diag(-1.0);
        g.frobenius_norm()
    }

    #[test]
    fn stiefel_draw_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_stiefel(12, 4, &mut rng).unwrap();
        assert!(orthonormality_error(&q) < 1e-12);
        assert!(random_stiefel(2, 3, &mut rng).is_err());
    }

    #[test]
    fn scalar_stiefel_is_a_fair_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 10_000;
        let plus = (0..draws)
            .filter(|_| random_stiefel(1, 1, &mut rng).unwrap().get(0, 0) > 0.0)
            .count() as f64;
        let expected = draws as f64 / 2.0;
        let chi2 = 2.0 * (plus - expected).powi(2) / expected;
        // 1 dof, p = 0.001
        assert!(chi2 < 10.83, "chi2 = {chi2}");
    }

    #[test]
    fn stiefel_column_mean_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, draws) = (5, 10_000);
        let mut mean = vec![0.0; n];
        for _ in 0..draws {
            let q = random_stiefel(n, 1, &mut rng).unwrap();
            for (m, v) in mean.iter_mut().zip(q.as_slice()) {
                *m += v / draws as f64;
            }
        }
        // each coordinate of a uniform unit vector has variance 1/n
        let sd = (1.0 / (n as f64 * draws as f64)).sqrt();
        assert!(mean.iter().all(|m| m.abs() < 4.0 * sd), "{mean:?}");
    }

    #[test]
    fn pca_covariance_spectrum() {
        let (n, p, sigma) = (6, 2, 0.1);
        let inst = gen_pca_data(n, p, 40_000, sigma, 7).unwrap();
        let mut cov = matmul_tn(&inst.data, &inst.data).unwrap();
        cov.scale_mut(1.0 / 40_000.0);
        let w = sym_eig(&cov).unwrap().values;
        for &v in &w[..n - p] {
            assert!((v - sigma).abs() < 0.02, "{w:?}");
        }
        for &v in &w[n - p..] {
            assert!((v - 1.0 - sigma).abs() < 0.05, "{w:?}");
        }
    }

    #[test]
    fn noiseless_square_pca_lies_in_planted_span() {
        let inst = gen_pca_data(4, 4, 50, 0.0, 3).unwrap();
        // with p = n the span is everything; check the rows reproduce through U Uᵀ
        let u = &inst.planted_u;
        let proj = crate::matcore::matmul(&inst.data, &matmul_nt(u, u).unwrap()).unwrap();
        assert!(proj.distance(&inst.data).unwrap() < 1e-12 * inst.data.frobenius_norm());
        let inst = gen_pca_data(5, 2, 30, 0.0, 3).unwrap();
        let u = &inst.planted_u;
        let proj = crate::matcore::matmul(&inst.data, &matmul_nt(u, u).unwrap()).unwrap();
        assert!(proj.distance(&inst.data).unwrap() < 1e-12 * inst.data.frobenius_norm());
    }

    #[test]
    fn generators_are_seed_deterministic() {
        assert_eq!(gen_pca_data(5, 2, 20, 0.1, 9).unwrap(), gen_pca_data(5, 2, 20, 0.1, 9).unwrap());
        assert_ne!(gen_pca_data(5, 2, 20, 0.1, 9).unwrap(), gen_pca_data(5, 2, 20, 0.1, 10).unwrap());
        assert_eq!(gen_ica_data(4, 30, 9).unwrap(), gen_ica_data(4, 30, 9).unwrap());
    }

    #[test]
    fn laplace_variance() {
        let inst = gen_ica_data(1, 10_000, 11).unwrap();
        let s = inst.sources.as_slice();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / s.len() as f64;
        assert!((var - 2.0).abs() < 0.1, "var = {var}");
    }

    #[test]
    fn ica_mixing_is_orthogonal() {
        let inst = gen_ica_data(10, 100, 12).unwrap();
        assert!(orthonormality_error(&inst.mixing) < 1e-12);
    }

    #[test]
    fn container_round_trip() {
        for inst in [
            Instance::Pca(gen_pca_data(5, 2, 7, 0.1, 1).unwrap()),
            Instance::Ica(gen_ica_data(3, 8, 2).unwrap()),
        ] {
            let mut buf = Vec::new();
            write_instance(&mut buf, &inst).unwrap();
            assert_eq!(&buf[..4], b"LNDG");
            assert_eq!(read_instance(&mut buf.as_slice()).unwrap(), inst);
        }
    }

    #[test]
    fn container_rejects_corruption() {
        let inst = Instance::Pca(gen_pca_data(3, 1, 4, 0.1, 1).unwrap());
        let mut buf = Vec::new();
        write_instance(&mut buf, &inst).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_instance(&mut bad.as_slice()).is_err());
        assert!(read_instance(&mut &buf[..buf.len() - 3]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_instance(&mut long.as_slice()).is_err());
    }
}
