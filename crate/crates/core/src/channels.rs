//! Wyner-model channel generation and channel dumps.
//!
//! Each realization is drawn from its own generator stream, derived from
//! `(seed, draw index)`, so Monte Carlo realization `i` is reproducible
//! regardless of which worker draws it or in which order.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Aggregate channels `h_k` from all BSs to each user.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    gains: Vec<Vec<Complex64>>,
    variances: Vec<Vec<f64>>,
    seed: Option<u64>,
    draw: Option<u64>,
}

impl ChannelState {
    /// Deterministic channel with no variance profile attached.
    pub fn from_gains(gains: Vec<Vec<Complex64>>) -> Result<Self> {
        let variances = gains
            .iter()
            .map(|h| h.iter().map(|g| g.norm_sqr()).collect())
            .collect();
        Self::with_profile(gains, variances, None, None)
    }

    /// Real-valued channel, convenient for tests.
    pub fn from_real(gains: &[&[f64]]) -> Result<Self> {
        Self::from_gains(
            gains
                .iter()
                .map(|h| h.iter().map(|&g| Complex64::new(g, 0.0)).collect())
                .collect(),
        )
    }

    fn with_profile(
        gains: Vec<Vec<Complex64>>,
        variances: Vec<Vec<f64>>,
        seed: Option<u64>,
        draw: Option<u64>,
    ) -> Result<Self> {
        let m = gains.first().map(Vec::len).unwrap_or(0);
        if gains.is_empty() || m == 0 {
            return Err(Error::Dimension("channel needs at least one user and BS".into()));
        }
        if gains.iter().any(|h| h.len() != m) || variances.iter().any(|v| v.len() != m) {
            return Err(Error::Dimension("ragged channel matrix".into()));
        }
        if gains
            .iter()
            .flatten()
            .any(|g| !(g.re.is_finite() && g.im.is_finite()))
        {
            return Err(Error::Domain("non-finite channel gain".into()));
        }
        Ok(Self {
            gains,
            variances,
            seed,
            draw,
        })
    }

    pub fn num_users(&self) -> usize {
        self.gains.len()
    }

    pub fn num_bs(&self) -> usize {
        self.gains[0].len()
    }

    /// `h_k` for 1-based user `k`.
    pub fn user(&self, user: usize) -> &[Complex64] {
        &self.gains[user - 1]
    }

    pub fn gains(&self) -> &[Vec<Complex64>] {
        &self.gains
    }

    /// `σ²_{k,m}`, indexed `[k-1][m-1]`.
    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn draw(&self) -> Option<u64> {
        self.draw
    }
}

/// Generator for realization `draw` of an experiment seeded with `seed`.
pub fn realization_rng(seed: u64, draw: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    rng
}

/// One `CN(0, variance)` draw; real and imaginary parts each carry half
/// the variance.
pub fn sample_complex_gaussian<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> Result<Complex64> {
    if !(variance.is_finite() && variance >= 0.0) {
        return Err(Error::Domain(format!("variance {variance} must be nonnegative")));
    }
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    if variance == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let scale = (variance / 2.0).sqrt();
    Ok(Complex64::new(re * scale, im * scale))
}

/// Cell arrangement of the linear Wyner model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    TwoCell,
    ThreeCell,
}

impl Topology {
    pub fn num_bs(self) -> usize {
        match self {
            Topology::TwoCell => 2,
            Topology::ThreeCell => 3,
        }
    }

    pub fn num_users(self) -> usize {
        self.num_bs()
    }

    /// Variance matrix `σ²_{k,m}`.
    pub fn variance_profile(self, alpha: f64, beta: f64) -> Result<Vec<Vec<f64>>> {
        check_disparity("alpha", alpha)?;
        check_disparity("beta", beta)?;
        Ok(match self {
            Topology::TwoCell => vec![vec![1.0, alpha], vec![alpha * beta, beta]],
            Topology::ThreeCell => vec![
                vec![1.0, alpha, 0.0],
                vec![alpha * beta, beta, alpha * beta],
                vec![0.0, alpha, 1.0],
            ],
        })
    }

    /// Draws one realization from `rng`.
    pub fn sample<R: Rng + ?Sized>(self, alpha: f64, beta: f64, rng: &mut R) -> Result<ChannelState> {
        let variances = self.variance_profile(alpha, beta)?;
        let gains = variances
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&v| sample_complex_gaussian(v, rng))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        ChannelState::with_profile(gains, variances, None, None)
    }

    /// Realization `draw` of the experiment seeded with `seed`.
    pub fn realization(self, alpha: f64, beta: f64, seed: u64, draw: u64) -> Result<ChannelState> {
        let mut rng = realization_rng(seed, draw);
        let mut state = self.sample(alpha, beta, &mut rng)?;
        state.seed = Some(seed);
        state.draw = Some(draw);
        Ok(state)
    }
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Topology::TwoCell => "two-cell",
            Topology::ThreeCell => "three-cell",
        })
    }
}

impl std::str::FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-cell" => Ok(Topology::TwoCell),
            "three-cell" => Ok(Topology::ThreeCell),
            other => Err(Error::Config(format!("unknown topology `{other}`"))),
        }
    }
}

fn check_disparity(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {value} outside (0, 1]")))
    }
}

/// Two cells, one user per cell.
pub fn wyner_two_cell<R: Rng + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> Result<ChannelState> {
    Topology::TwoCell.sample(alpha, beta, rng)
}

/// Three cells in a line; users 1 and 3 see no signal from the far BS.
pub fn wyner_three_cell<R: Rng + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> Result<ChannelState> {
    Topology::ThreeCell.sample(alpha, beta, rng)
}

#[derive(Debug, Serialize, Deserialize)]
struct ChannelRecord {
    realization: usize,
    user: usize,
    bs: usize,
    re: f64,
    im: f64,
}

/// Writes channels as CSV rows `(realization, user, bs, re, im)`, with
/// 1-based user and BS ids and shortest round-trip float formatting.
pub fn write_channel_csv<W: Write>(writer: W, realizations: &[ChannelState]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for (r, state) in realizations.iter().enumerate() {
        for (k, h) in state.gains.iter().enumerate() {
            for (m, g) in h.iter().enumerate() {
                out.serialize(ChannelRecord {
                    realization: r,
                    user: k + 1,
                    bs: m + 1,
                    re: g.re,
                    im: g.im,
                })?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a channel dump back. Realizations must be numbered `0..R` and each
/// must list every `(user, bs)` entry exactly once.
pub fn read_channel_csv<R: Read>(reader: R) -> Result<Vec<ChannelState>> {
    const MAX_DIM: usize = 64;
    let mut input = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = input.headers()?.clone();
    let expected = ["realization", "user", "bs", "re", "im"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    let mut entries: Vec<Vec<Vec<Option<Complex64>>>> = Vec::new();
    for (row, record) in input.deserialize::<ChannelRecord>().enumerate() {
        let line = row + 2;
        let rec = record?;
        let err = |message: String| Error::Parse { line, message };
        if rec.user == 0 || rec.bs == 0 || rec.user > MAX_DIM || rec.bs > MAX_DIM {
            return Err(err(format!("user/bs ids must be in 1..={MAX_DIM}")));
        }
        if !(rec.re.is_finite() && rec.im.is_finite()) {
            return Err(err("non-finite gain".into()));
        }
        if rec.realization > entries.len() {
            return Err(err(format!("realization {} out of sequence", rec.realization)));
        }
        if rec.realization == entries.len() {
            entries.push(Vec::new());
        }
        let table = &mut entries[rec.realization];
        if table.len() < rec.user {
            table.resize(rec.user, Vec::new());
        }
        let row = &mut table[rec.user - 1];
        if row.len() < rec.bs {
            row.resize(rec.bs, None);
        }
        if row[rec.bs - 1].replace(Complex64::new(rec.re, rec.im)).is_some() {
            return Err(err(format!(
                "duplicate entry for user {} bs {}",
                rec.user, rec.bs
            )));
        }
    }
    let states = entries
        .into_iter()
        .enumerate()
        .map(|(r, table)| {
            let m = table.iter().map(Vec::len).max().unwrap_or(0);
            let gains = table
                .into_iter()
                .map(|row| {
                    if row.len() != m || row.iter().any(Option::is_none) {
                        return None;
                    }
                    Some(row.into_iter().flatten().collect::<Vec<_>>())
                })
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::Parse {
                    line: 0,
                    message: format!("realization {r} is missing entries"),
                })?;
            let mut state = ChannelState::from_gains(gains)?;
            state.draw = Some(r as u64);
            Ok(state)
        })
        .collect::<Result<Vec<ChannelState>>>()?;
    if let Some(first) = states.first() {
        let shape = (first.num_users(), first.num_bs());
        if let Some(r) = states.iter().position(|s| (s.num_users(), s.num_bs()) != shape) {
            return Err(Error::Parse {
                line: 0,
                message: format!("realization {r} has a different shape than realization 0"),
            });
        }
    }
    Ok(states)
}
