//! Monte Carlo null distributions for the unit-root and trace statistics.
//!
//! Tables are generated on first use and kept in a process-wide registry,
//! optionally mirrored to a JSON cache directory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::johansen::trace_statistics;
use super::unit_root::{unit_root_statistic, Deterministic, Form};
use super::StatsError;

/// Environment variable naming a directory for cached tables.
pub const CACHE_DIR_ENV: &str = "COINTARB_CACHE_DIR";

const TABLE_VERSION: u32 = 1;
const BASE_SEED: u64 = 0x5eed_2019_c01e_7ab1;
const CHUNK: usize = 500;

const UNIVARIATE_GRID: &[usize] = &[100, 250, 500, 1000, 2500, 5000, 10_000];
const JOHANSEN_GRID: &[usize] = &[100, 250, 500, 1000, 2500];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    AdfNc,
    AdfC,
    AdfCt,
    KssRaw,
    KssDemeaned,
    KssDetrended,
    JohansenTrace { dims: usize },
}

impl TestKind {
    pub fn label(&self) -> String {
        match self {
            TestKind::AdfNc => "adf_nc".into(),
            TestKind::AdfC => "adf_c".into(),
            TestKind::AdfCt => "adf_ct".into(),
            TestKind::KssRaw => "kss_raw".into(),
            TestKind::KssDemeaned => "kss_demeaned".into(),
            TestKind::KssDetrended => "kss_detrended".into(),
            TestKind::JohansenTrace { dims } => format!("johansen_trace_{dims}"),
        }
    }

    /// Unit-root statistics reject for small values, the trace test for large.
    pub fn left_tail(&self) -> bool {
        !matches!(self, TestKind::JohansenTrace { .. })
    }

    pub fn sample_grid(&self) -> &'static [usize] {
        match self {
            TestKind::JohansenTrace { .. } => JOHANSEN_GRID,
            _ => UNIVARIATE_GRID,
        }
    }

    fn code(&self) -> u64 {
        match self {
            TestKind::AdfNc => 1,
            TestKind::AdfC => 2,
            TestKind::AdfCt => 3,
            TestKind::KssRaw => 4,
            TestKind::KssDemeaned => 5,
            TestKind::KssDetrended => 6,
            TestKind::JohansenTrace { dims } => 100 + *dims as u64,
        }
    }

    fn univariate(&self) -> Option<(Form, Deterministic)> {
        Some(match self {
            TestKind::AdfNc => (Form::Linear, Deterministic::None),
            TestKind::AdfC => (Form::Linear, Deterministic::Constant),
            TestKind::AdfCt => (Form::Linear, Deterministic::Trend),
            TestKind::KssRaw => (Form::Cubic, Deterministic::None),
            TestKind::KssDemeaned => (Form::Cubic, Deterministic::Constant),
            TestKind::KssDetrended => (Form::Cubic, Deterministic::Trend),
            TestKind::JohansenTrace { .. } => return None,
        })
    }
}

/// 0.0001, 0.0002, 0.0005, then 0.001 to 0.999 in steps of 0.001.
pub fn default_levels() -> Vec<f64> {
    let mut v = vec![0.0001, 0.0002, 0.0005];
    v.extend((1..1000).map(|i| i as f64 / 1000.0));
    v
}

/// Quantiles of one simulated null distribution at a single sample size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalValueTable {
    pub version: u32,
    pub kind: TestKind,
    pub sample_size: usize,
    pub levels: Vec<f64>,
    pub quantiles: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
}

impl CriticalValueTable {
    /// Lower-tail quantile at `level`, interpolated between stored levels.
    pub fn quantile(&self, level: f64) -> f64 {
        let l = &self.levels;
        let q = &self.quantiles;
        if level <= l[0] {
            return q[0];
        }
        if level >= l[l.len() - 1] {
            return q[q.len() - 1];
        }
        let i = l.partition_point(|x| *x <= level) - 1;
        let w = (level - l[i]) / (l[i + 1] - l[i]);
        q[i] + w * (q[i + 1] - q[i])
    }

    /// Critical value for a test of size `alpha` in the rejecting tail.
    pub fn critical_value(&self, alpha: f64) -> f64 {
        if self.kind.left_tail() {
            self.quantile(alpha)
        } else {
            self.quantile(1.0 - alpha)
        }
    }

    /// Empirical null CDF at `stat`, read off the quantile grid.
    pub fn cdf(&self, stat: f64) -> f64 {
        let l = &self.levels;
        let q = &self.quantiles;
        if stat.is_nan() {
            return f64::NAN;
        }
        if stat < q[0] {
            return 0.0;
        }
        if stat >= q[q.len() - 1] {
            return 1.0;
        }
        let i = q.partition_point(|x| *x <= stat) - 1;
        let span = q[i + 1] - q[i];
        if span <= 0.0 {
            return l[i];
        }
        l[i] + (stat - q[i]) / span * (l[i + 1] - l[i])
    }

    pub fn pvalue(&self, stat: f64) -> f64 {
        if self.kind.left_tail() {
            self.cdf(stat)
        } else {
            1.0 - self.cdf(stat)
        }
    }
}

fn simulate_null(kind: TestKind, t: usize, rng: &mut ChaCha8Rng) -> f64 {
    if let Some((form, det)) = kind.univariate() {
        let mut s = vec![0.0; t];
        for i in 1..t {
            let e: f64 = StandardNormal.sample(rng);
            s[i] = s[i - 1] + e;
        }
        return unit_root_statistic(&s, form, det, 0).unwrap_or(f64::NAN);
    }
    let TestKind::JohansenTrace { dims } = kind else {
        unreachable!()
    };
    let columns: Vec<Vec<f64>> = (0..dims)
        .map(|_| {
            let mut c = vec![0.0; t];
            for i in 1..t {
                let e: f64 = StandardNormal.sample(rng);
                c[i] = c[i - 1] + e;
            }
            c
        })
        .collect();
    trace_statistics(&columns, 1)
        .map(|v| v[0])
        .unwrap_or(f64::NAN)
}

/// Simulates `reps` draws of the null statistic at sample size `t` and
/// returns its quantiles at `levels`. Chunks of replications use their own
/// ChaCha stream so the result does not depend on thread scheduling.
pub fn critical_values_mc(
    kind: TestKind,
    t: usize,
    levels: &[f64],
    reps: usize,
    seed: u64,
) -> CriticalValueTable {
    assert!(reps >= 2, "need at least two replications");
    assert!(
        levels.windows(2).all(|w| w[0] < w[1]),
        "levels must be increasing"
    );
    let n_chunks = reps.div_ceil(CHUNK);
    let next = AtomicUsize::new(0);
    let threads = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(n_chunks);
    let mut chunks: Vec<(usize, Vec<f64>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let c = next.fetch_add(1, Ordering::Relaxed);
                        if c >= n_chunks {
                            break;
                        }
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        rng.set_stream(c as u64);
                        let count = CHUNK.min(reps - c * CHUNK);
                        let draws: Vec<f64> = (0..count)
                            .map(|_| simulate_null(kind, t, &mut rng))
                            .collect();
                        done.push((c, draws));
                    }
                    done
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    chunks.sort_by_key(|c| c.0);
    let mut draws: Vec<f64> = chunks
        .into_iter()
        .flat_map(|c| c.1)
        .filter(|x| x.is_finite())
        .collect();
    draws.sort_by(f64::total_cmp);

    let n = draws.len();
    let quantiles = levels
        .iter()
        .map(|level| {
            let h = level * (n - 1) as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            draws[lo] + (h - lo as f64) * (draws[hi] - draws[lo])
        })
        .collect();
    CriticalValueTable {
        version: TABLE_VERSION,
        kind,
        sample_size: t,
        levels: levels.to_vec(),
        quantiles,
        reps,
        seed,
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

type Slot = Arc<OnceLock<Arc<CriticalValueTable>>>;

/// Lazily generated tables over each test's sample-size grid.
pub struct NullTables {
    cache_dir: Option<PathBuf>,
    univariate_reps: usize,
    johansen_reps: usize,
    seed: u64,
    slots: Mutex<HashMap<(TestKind, usize), Slot>>,
}

impl NullTables {
    pub fn new(cache_dir: Option<PathBuf>) -> Self {
        NullTables {
            cache_dir,
            univariate_reps: 50_000,
            johansen_reps: 10_000,
            seed: BASE_SEED,
            slots: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_reps(mut self, univariate: usize, johansen: usize) -> Self {
        self.univariate_reps = univariate;
        self.johansen_reps = johansen;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Shared registry; honours the cache directory environment variable.
    pub fn global() -> &'static NullTables {
        static GLOBAL: OnceLock<NullTables> = OnceLock::new();
        GLOBAL.get_or_init(|| NullTables::new(std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from)))
    }

    fn reps_for(&self, kind: TestKind) -> usize {
        match kind {
            TestKind::JohansenTrace { .. } => self.johansen_reps,
            _ => self.univariate_reps,
        }
    }

    fn seed_for(&self, kind: TestKind, t: usize) -> u64 {
        splitmix(self.seed ^ (kind.code() << 40) ^ t as u64)
    }

    /// Table at grid size `t`, generated or loaded on first request.
    pub fn table(&self, kind: TestKind, t: usize) -> Arc<CriticalValueTable> {
        let slot = {
            let mut map = self.slots.lock().expect("table registry poisoned");
            map.entry((kind, t)).or_default().clone()
        };
        slot.get_or_init(|| Arc::new(self.load_or_generate(kind, t)))
            .clone()
    }

    fn cache_path(dir: &Path, kind: TestKind, t: usize) -> PathBuf {
        dir.join(format!("{}_T{}.json", kind.label(), t))
    }

    fn load_or_generate(&self, kind: TestKind, t: usize) -> CriticalValueTable {
        let reps = self.reps_for(kind);
        let seed = self.seed_for(kind, t);
        let levels = default_levels();
        if let Some(dir) = &self.cache_dir {
            match read_cached(&Self::cache_path(dir, kind, t)) {
                Ok(Some(table))
                    if table.version == TABLE_VERSION
                        && table.kind == kind
                        && table.sample_size == t
                        && table.reps == reps
                        && table.seed == seed
                        && table.levels == levels =>
                {
                    return table;
                }
                Ok(_) => {}
                Err(e) => log::warn!("ignoring unreadable critical value cache: {e}"),
            }
        }
        log::info!(
            "simulating {} null distribution at T={} ({} reps)",
            kind.label(),
            t,
            reps
        );
        let table = critical_values_mc(kind, t, &levels, reps, seed);
        if let Some(dir) = &self.cache_dir {
            if let Err(e) = write_cached(&Self::cache_path(dir, kind, t), &table) {
                log::warn!("could not write critical value cache: {e}");
            }
        }
        table
    }

    /// Grid points bracketing `t` and the weight on the lower one, with
    /// interpolation linear in 1/T.
    fn bracket(kind: TestKind, t: usize) -> (usize, usize, f64) {
        let grid = kind.sample_grid();
        if t <= grid[0] {
            return (grid[0], grid[0], 1.0);
        }
        if t >= grid[grid.len() - 1] {
            let g = grid[grid.len() - 1];
            return (g, g, 1.0);
        }
        let i = grid.partition_point(|g| *g <= t) - 1;
        let (lo, hi) = (grid[i], grid[i + 1]);
        if lo == t {
            return (lo, lo, 1.0);
        }
        let w = (1.0 / t as f64 - 1.0 / hi as f64) / (1.0 / lo as f64 - 1.0 / hi as f64);
        (lo, hi, w)
    }

    /// Generates the tables that a statistic at sample size `t` will need.
    pub fn prepare(&self, kind: TestKind, t: usize) {
        let (lo, hi, _) = Self::bracket(kind, t);
        self.table(kind, lo);
        self.table(kind, hi);
    }

    pub fn pvalue(&self, kind: TestKind, t: usize, stat: f64) -> f64 {
        let (lo, hi, w) = Self::bracket(kind, t);
        let p_lo = self.table(kind, lo).pvalue(stat);
        if lo == hi {
            return p_lo;
        }
        let p_hi = self.table(kind, hi).pvalue(stat);
        (w * p_lo + (1.0 - w) * p_hi).clamp(0.0, 1.0)
    }

    pub fn critical_value(&self, kind: TestKind, t: usize, alpha: f64) -> f64 {
        let (lo, hi, w) = Self::bracket(kind, t);
        let c_lo = self.table(kind, lo).critical_value(alpha);
        if lo == hi {
            return c_lo;
        }
        w * c_lo + (1.0 - w) * self.table(kind, hi).critical_value(alpha)
    }
}

fn read_cached(path: &Path) -> Result<Option<CriticalValueTable>, StatsError> {
    match std::fs::read_to_string(path) {
        Ok(text) => serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| StatsError::Cache(e.to_string())),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(StatsError::Cache(e.to_string())),
    }
}

fn write_cached(path: &Path, table: &CriticalValueTable) -> Result<(), StatsError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| StatsError::Cache(e.to_string()))?;
    }
    let text = serde_json::to_string(table).map_err(|e| StatsError::Cache(e.to_string()))?;
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text).map_err(|e| StatsError::Cache(e.to_string()))?;
    std::fs::rename(&tmp, path).map_err(|e| StatsError::Cache(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_monotone() {
        let levels = default_levels();
        let a = critical_values_mc(TestKind::AdfNc, 100, &levels, 2000, 7);
        let b = critical_values_mc(TestKind::AdfNc, 100, &levels, 2000, 7);
        assert_eq!(a, b);
        assert!(a.quantiles.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn cdf_inverts_quantile() {
        let levels = default_levels();
        let t = critical_values_mc(TestKind::KssRaw, 100, &levels, 4000, 3);
        for level in [0.01, 0.05, 0.1, 0.5] {
            let q = t.quantile(level);
            assert!((t.cdf(q) - level).abs() < 1e-3, "level {level}");
        }
        assert_eq!(t.cdf(-1e9), 0.0);
        assert_eq!(t.cdf(1e9), 1.0);
    }

    #[test]
    fn trace_table_is_right_tailed() {
        let levels = default_levels();
        let t = critical_values_mc(TestKind::JohansenTrace { dims: 1 }, 100, &levels, 1000, 1);
        assert!(t.pvalue(t.critical_value(0.05)) > 0.04);
        assert!(t.pvalue(t.critical_value(0.05)) < 0.06);
        assert!(t.pvalue(1e6) == 0.0);
    }

    #[test]
    fn bracket_weights() {
        assert_eq!(NullTables::bracket(TestKind::AdfNc, 50), (100, 100, 1.0));
        assert_eq!(
            NullTables::bracket(TestKind::AdfNc, 1000),
            (1000, 1000, 1.0)
        );
        assert_eq!(
            NullTables::bracket(TestKind::AdfNc, 99_999),
            (10_000, 10_000, 1.0)
        );
        let (lo, hi, w) = NullTables::bracket(TestKind::AdfNc, 2000);
        assert_eq!((lo, hi), (1000, 2500));
        assert!(w > 0.0 && w < 1.0);
    }

    #[test]
    fn disk_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let reg = NullTables::new(Some(dir.path().to_path_buf())).with_reps(1000, 1000);
        let a = reg.table(TestKind::AdfC, 100);
        assert!(dir.path().join("adf_c_T100.json").exists());
        let reg2 = NullTables::new(Some(dir.path().to_path_buf())).with_reps(1000, 1000);
        assert_eq!(*reg2.table(TestKind::AdfC, 100), *a);
    }
}
