//! Quantized CDF tables: 16 fractional bits, one bucket per symbol in the
//! support window plus a trailing escape bucket; every bucket holds at least
//! one quantum. Bucket masses are floored, zero buckets bumped to one, and
//! the residual (either sign) lands on the largest bucket (first on ties).

pub const CDF_BITS: u32 = 16;
pub const CDF_TOTAL: u32 = 1 << CDF_BITS;
pub const DEFAULT_K_MIN: i32 = -64;
pub const DEFAULT_K_MAX: i32 = 63;
pub const SIGMA_MIN: f64 = 0.01;
pub const SIGMA_MAX: f64 = 64.0;

#[derive(Debug, Clone)]
pub struct CdfTable {
    pub k_min: i32,
    pub k_max: i32,
    /// Cumulative entries: entries[0] == 0, entries[len-1] == 65536.
    pub entries: Vec<u32>,
}

#[derive(Debug, PartialEq, Eq)]
pub enum CdfError {
    SigmaOutOfRange,
    BadWindow,
    Malformed,
}

impl CdfTable {
    pub fn support(&self) -> usize {
        (self.k_max - self.k_min + 1) as usize
    }

    pub fn escape_bucket(&self) -> usize {
        self.support()
    }

    pub fn validate(&self) -> Result<(), CdfError> {
        let n = self.support() + 2;
        if self.entries.len() != n || self.entries[0] != 0 || self.entries[n - 1] != CDF_TOTAL {
            return Err(CdfError::Malformed);
        }
        for w in self.entries.windows(2) {
            if w[1] <= w[0] {
                return Err(CdfError::Malformed);
            }
        }
        Ok(())
    }
}

fn laplace_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.5 * x.exp()
    } else {
        1.0 - 0.5 * (-x).exp()
    }
}

pub fn build_laplace_cdf(mu: f64, sigma: f64, k_min: i32, k_max: i32) -> Result<CdfTable, CdfError> {
    if !(SIGMA_MIN * (1.0 - 1e-3)..=SIGMA_MAX * (1.0 + 1e-3)).contains(&sigma) {
        return Err(CdfError::SigmaOutOfRange);
    }
    let sigma = sigma.clamp(SIGMA_MIN, SIGMA_MAX);
    if k_min >= k_max {
        return Err(CdfError::BadWindow);
    }
    let support = (k_max - k_min + 1) as usize;
    let mut cdf_vals = Vec::with_capacity(support + 1);
    for j in 0..=support {
        let edge = k_min as f64 - 0.5 + j as f64;
        cdf_vals.push(laplace_cdf((edge - mu) / sigma));
    }
    let mut quanta: Vec<i64> = Vec::with_capacity(support + 1);
    for j in 0..support {
        let mass = cdf_vals[j + 1] - cdf_vals[j];
        quanta.push((mass * CDF_TOTAL as f64).floor() as i64);
    }
    let escape = (1.0 - (cdf_vals[support] - cdf_vals[0])).max(0.0);
    quanta.push((escape * CDF_TOTAL as f64).floor() as i64);

    for q in quanta.iter_mut() {
        if *q < 1 {
            *q = 1;
        }
    }
    let sum: i64 = quanta.iter().sum();
    let deficit = CDF_TOTAL as i64 - sum;
    let mut largest = 0usize;
    for (i, q) in quanta.iter().enumerate() {
        if *q > quanta[largest] {
            largest = i;
        }
    }
    quanta[largest] += deficit;
    if quanta[largest] < 1 {
        return Err(CdfError::Malformed);
    }

    let mut entries = Vec::with_capacity(support + 2);
    entries.push(0u32);
    let mut acc = 0i64;
    for q in &quanta {
        acc += q;
        entries.push(acc as u32);
    }
    let table = CdfTable { k_min, k_max, entries };
    table.validate()?;
    Ok(table)
}

/// Near-uniform table over 0..num_symbols-1 plus escape.
pub fn build_uniform_cdf(num_symbols: usize) -> CdfTable {
    let per = (CDF_TOTAL as u64 / (num_symbols as u64 + 1)) as u32;
    let mut entries = Vec::with_capacity(num_symbols + 2);
    entries.push(0);
    let mut acc = 0u32;
    for _ in 0..num_symbols {
        acc += per;
        entries.push(acc);
    }
    entries.push(CDF_TOTAL);
    CdfTable { k_min: 0, k_max: num_symbols as i32 - 1, entries }
}
