//! Seeded synthetic CID market with tunable predictability.
//!
//! Every hourly product carries a latent mid price on a one-minute grid:
//!
//! ```text
//! m_k = m_{k-1} + r_k
//! r_k = rho * r_{k-1} + sigma * (sqrt(c) * z_common_k + sqrt(1 - c) * z_k)
//! ```
//!
//! `z_common` is shared by all products trading in the same minute. Quarter-hour
//! products follow their hour's mid plus an independent AR(1) deviation. Trades
//! arrive as a Poisson process whose rate grows toward delivery, priced at the
//! current mid plus noise. The book snapshot taken at minute `k` is centered on
//! the last traded mid `m_{k-1}` and its volume imbalance leans toward the sign
//! of the next return `r_k` with probability `lob_imbalance_signal`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use crate::error::{Error, Result};
use crate::market::{
    FundamentalRecord, Horizon, ImbalanceRecord, LobSnapshot, MarketDataset, Product, Timestamp, Trade, DAY,
    HOUR, MINUTE, QUARTER_HOUR,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    /// First delivery day (UTC midnight).
    pub start: Timestamp,
    pub days: u32,
    /// EUR/MWh
    pub base_price: f64,
    /// AR(1) coefficient of the latent one-minute return.
    pub momentum_rho: f64,
    /// Innovation scale of the latent return, EUR/MWh per sqrt(min).
    pub noise_sigma: f64,
    /// Trades per minute when a product opens.
    pub trade_intensity_base: f64,
    /// Relative intensity increase per hour of elapsed trading time.
    pub intensity_growth: f64,
    /// Probability that the book imbalance points at the next return's sign.
    pub lob_imbalance_signal: f64,
    /// Share of the innovation variance common to all trading products.
    pub cross_product_corr: f64,
    pub areas: Vec<String>,
    /// Hours between session open and delivery start.
    pub session_hours: f64,
    /// Gate closure before delivery, minutes.
    pub gate_closure_min: i64,
    /// Standard deviation of trade prices around the mid, EUR/MWh.
    pub trade_noise: f64,
    pub volume_log_mu: f64,
    pub volume_log_sigma: f64,
    pub quarter_hours: bool,
    pub qh_intensity_factor: f64,
    pub qh_deviation_rho: f64,
    pub qh_deviation_sigma: f64,
    pub lob: bool,
    pub lob_quarter_hours: bool,
    pub lob_levels: usize,
    pub lob_mean_volume: f64,
    /// Relative volume shift between the heavy and the thin side.
    pub lob_tilt: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 7,
            start: Timestamp::from_secs(1_704_067_200), // 2024-01-01
            days: 14,
            base_price: 80.0,
            momentum_rho: 0.4,
            noise_sigma: 0.5,
            trade_intensity_base: 1.5,
            intensity_growth: 0.3,
            lob_imbalance_signal: 0.3,
            cross_product_corr: 0.3,
            areas: vec!["DE".into()],
            session_hours: 6.0,
            gate_closure_min: 5,
            trade_noise: 0.2,
            volume_log_mu: 0.0,
            volume_log_sigma: 0.5,
            quarter_hours: true,
            qh_intensity_factor: 0.5,
            qh_deviation_rho: 0.8,
            qh_deviation_sigma: 0.3,
            lob: true,
            lob_quarter_hours: false,
            lob_levels: 10,
            lob_mean_volume: 1.5,
            lob_tilt: 0.6,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("generator: {m}")));
        if !(0.0..1.0).contains(&self.momentum_rho) {
            return bad("momentum_rho must lie in [0, 1)");
        }
        if !(self.noise_sigma > 0.0) {
            return bad("noise_sigma must be positive");
        }
        if !(self.trade_intensity_base > 0.0) {
            return bad("trade_intensity_base must be positive");
        }
        if !(self.intensity_growth >= 0.0) {
            return bad("intensity_growth must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.lob_imbalance_signal) || !(0.0..=1.0).contains(&self.cross_product_corr) {
            return bad("lob_imbalance_signal and cross_product_corr must lie in [0, 1]");
        }
        if self.areas.is_empty() || self.areas.len() > u16::MAX as usize {
            return bad("need at least one delivery area");
        }
        if self.days == 0 {
            return bad("days must be >= 1");
        }
        if !self.start.is_aligned(DAY) {
            return bad("start must be a UTC midnight");
        }
        if !(self.session_hours >= 3.5) {
            return bad("session_hours must cover the forecasting window (>= 3.5)");
        }
        if !(1..=30).contains(&self.gate_closure_min) {
            return bad("gate_closure_min must lie in 1..=30");
        }
        if !(self.trade_noise >= 0.0 && self.volume_log_sigma >= 0.0 && self.qh_deviation_sigma >= 0.0) {
            return bad("noise scales must be non-negative");
        }
        if !(0.0..1.0).contains(&self.qh_deviation_rho) || !(self.qh_intensity_factor > 0.0) {
            return bad("invalid quarter-hour settings");
        }
        if self.lob_levels == 0 || !(self.lob_mean_volume > 0.0) || !(0.0..1.0).contains(&self.lob_tilt) {
            return bad("invalid order book settings");
        }
        Ok(())
    }

    fn session_secs(&self) -> i64 {
        (self.session_hours * HOUR as f64).round() as i64
    }

    /// Hourly products in delivery order.
    pub fn hourly_products(&self) -> impl Iterator<Item = Product> + '_ {
        let n = self.days as i64 * 24;
        (0..n).map(move |h| Product::hourly(self.start.add_secs(h * HOUR)).expect("aligned"))
    }
}

fn rng_for(seed: u64, key: i64, stream: u64) -> ChaCha8Rng {
    // splitmix-style mixing so neighboring keys get unrelated streams
    let mut x = seed ^ (key as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(x ^ (x >> 31))
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Shared per-minute factor, indexed by absolute minute.
struct CommonFactor {
    first_minute: i64,
    values: Vec<f64>,
}

impl CommonFactor {
    fn new(seed: u64, first_minute: i64, last_minute: i64) -> Self {
        let mut rng = rng_for(seed, 0, 99);
        let values = (first_minute..=last_minute).map(|_| std_normal(&mut rng)).collect();
        CommonFactor { first_minute, values }
    }

    fn at(&self, minute: i64) -> f64 {
        self.values[(minute - self.first_minute) as usize]
    }
}

/// Latent price path on absolute minutes `first_minute..`.
#[derive(Clone, Debug)]
pub struct LatentPath {
    pub first_minute: i64,
    pub mids: Vec<f64>,
    pub returns: Vec<f64>,
}

impl LatentPath {
    pub fn mid(&self, minute: i64) -> f64 {
        self.mids[(minute - self.first_minute) as usize]
    }

    pub fn ret(&self, minute: i64) -> f64 {
        self.returns[(minute - self.first_minute) as usize]
    }

    pub fn last_minute(&self) -> i64 {
        self.first_minute + self.mids.len() as i64 - 1
    }
}

/// Smooth hourly price profile added to the base price.
fn hourly_shape(hour_of_day: i64) -> f64 {
    let h = hour_of_day as f64;
    -12.0 * (2.0 * std::f64::consts::PI * (h - 14.0) / 24.0).cos() + 8.0 * (-((h - 19.0).powi(2)) / 4.0).exp()
}

struct Generator<'a> {
    cfg: &'a GeneratorConfig,
    common: CommonFactor,
}

impl<'a> Generator<'a> {
    fn new(cfg: &'a GeneratorConfig) -> Self {
        let first = cfg.start.secs() / MINUTE - cfg.session_secs() / MINUTE - 120;
        let last = cfg.start.secs() / MINUTE + cfg.days as i64 * 24 * 60 + 120;
        Generator {
            cfg,
            common: CommonFactor::new(cfg.seed, first, last),
        }
    }

    fn open_minute(&self, product: &Product) -> i64 {
        (product.delivery_start.secs() - self.cfg.session_secs()) / MINUTE
    }

    fn close_minute(&self, product: &Product) -> i64 {
        product.delivery_start.secs() / MINUTE - self.cfg.gate_closure_min
    }

    fn hourly_path(&self, product: &Product) -> LatentPath {
        let cfg = self.cfg;
        let key = product.delivery_start.secs();
        let mut rng = rng_for(cfg.seed, key, 0);
        let first = self.open_minute(product);
        // cover the last quarter-hour's session plus one look-ahead minute for the book tilt
        let last = self.close_minute(product) + if cfg.quarter_hours { 45 } else { 0 } + 1;
        let (rho, sigma, c) = (cfg.momentum_rho, cfg.noise_sigma, cfg.cross_product_corr);
        let hod = (key.rem_euclid(DAY)) / HOUR;
        let mut mid = cfg.base_price + hourly_shape(hod) + 5.0 * std_normal(&mut rng);
        let mut r = sigma / (1.0 - rho * rho).sqrt() * std_normal(&mut rng);
        let n = (last - first + 1) as usize;
        let mut mids = Vec::with_capacity(n);
        let mut returns = Vec::with_capacity(n);
        for k in first..=last {
            if k > first {
                let u = sigma * (c.sqrt() * self.common.at(k) + (1.0 - c).sqrt() * std_normal(&mut rng));
                r = rho * r + u;
                mid += r;
            }
            mids.push(mid);
            returns.push(r);
        }
        LatentPath {
            first_minute: first,
            mids,
            returns,
        }
    }

    fn quarter_path(&self, hour_path: &LatentPath, qh: &Product, q: u64) -> LatentPath {
        let cfg = self.cfg;
        let mut rng = rng_for(cfg.seed, qh.delivery_start.secs(), 10 + q);
        let first = self.open_minute(qh);
        let last = self.close_minute(qh) + 1;
        let phi = cfg.qh_deviation_rho;
        let sd = cfg.qh_deviation_sigma;
        let mut dev = sd / (1.0 - phi * phi).sqrt() * std_normal(&mut rng);
        let mut mids = Vec::new();
        let mut returns = Vec::new();
        let mut prev = hour_path.mid(first) + dev;
        for k in first..=last {
            if k > first {
                dev = phi * dev + sd * std_normal(&mut rng);
            }
            let m = hour_path.mid(k) + dev;
            returns.push(m - prev);
            mids.push(m);
            prev = m;
        }
        LatentPath {
            first_minute: first,
            mids,
            returns,
        }
    }

    fn emit_trades(
        &self,
        out: &mut Vec<Trade>,
        product: &Product,
        path: &LatentPath,
        rng: &mut ChaCha8Rng,
        intensity_factor: f64,
    ) {
        let cfg = self.cfg;
        let open = self.open_minute(product);
        let close = self.close_minute(product);
        let volume = LogNormal::new(cfg.volume_log_mu, cfg.volume_log_sigma.max(1e-12)).expect("valid lognormal");
        let noise = Normal::new(0.0, cfg.trade_noise.max(0.0)).expect("valid normal");
        let sdat_start = product.delivery_start.secs() / MINUTE - 30;
        for k in open..close {
            let elapsed_h = (k - open) as f64 / 60.0;
            let lambda = intensity_factor * cfg.trade_intensity_base * (1.0 + cfg.intensity_growth * elapsed_h);
            let n = Poisson::new(lambda).map(|p| p.sample(rng) as usize).unwrap_or(0);
            if n == 0 {
                continue;
            }
            let mut secs: Vec<i64> = (0..n).map(|_| rng.random_range(0..60)).collect();
            secs.sort_unstable();
            for s in secs {
                let area = if k >= sdat_start && cfg.areas.len() > 1 {
                    rng.random_range(0..cfg.areas.len()) as u16
                } else {
                    0
                };
                out.push(Trade {
                    product: *product,
                    exec_time: Timestamp::from_secs(k * MINUTE + s),
                    volume: volume.sample(rng),
                    price: path.mid(k) + noise.sample(rng),
                    area: crate::market::AreaId(area),
                });
            }
        }
    }

    fn emit_books(&self, out: &mut Vec<LobSnapshot>, product: &Product, path: &LatentPath) {
        let cfg = self.cfg;
        let mut rng = rng_for(cfg.seed, product.delivery_start.secs(), 2 + product.length.minutes() as u64);
        let gap = Exp::new(10.0).expect("rate");
        let vol = Exp::new(1.0 / cfg.lob_mean_volume).expect("rate");
        let open = self.open_minute(product);
        let close = self.close_minute(product);
        for k in (open + 1)..=close {
            let mid = path.mid(k - 1);
            let next = path.ret(k);
            let informative = rng.random::<f64>() < cfg.lob_imbalance_signal;
            let coin = rng.random::<bool>();
            let lean_up = if informative { next > 0.0 } else { coin };
            let lean = if lean_up { 1.0 } else { -1.0 };
            let half_spread = 0.05 + 0.05 * rng.random::<f64>();
            let ladder = |sign: f64, scale: f64, rng: &mut ChaCha8Rng| {
                let mut price = mid + sign * half_spread;
                (0..cfg.lob_levels)
                    .map(|i| {
                        if i > 0 {
                            price += sign * (0.05 + gap.sample(rng));
                        }
                        (price, (0.05 + vol.sample(rng)) * scale)
                    })
                    .collect::<Vec<_>>()
            };
            let bids = ladder(-1.0, 1.0 + cfg.lob_tilt * lean, &mut rng);
            let asks = ladder(1.0, 1.0 - cfg.lob_tilt * lean, &mut rng);
            out.push(LobSnapshot {
                product: *product,
                time: Timestamp::from_secs(k * MINUTE),
                bids,
                asks,
            });
        }
    }
}

/// Deterministic fundamentals curve: (load, solar, wind onshore, wind offshore) in MW.
pub fn fundamental_curve(delivery_start: Timestamp) -> [f64; 4] {
    use std::f64::consts::PI;
    let hod = (delivery_start.secs().rem_euclid(DAY) / HOUR) as f64;
    let day = (delivery_start.secs().div_euclid(DAY)) as f64;
    let load = 55_000.0 + 10_000.0 * (2.0 * PI * (hod - 8.0) / 24.0).sin();
    let solar = if (6.0..=18.0).contains(&hod) {
        30_000.0 * (PI * (hod - 6.0) / 12.0).sin()
    } else {
        0.0
    };
    let wind_on = 15_000.0 + 8_000.0 * (2.0 * PI * day / 7.0 + hod / 24.0).sin();
    let wind_off = 3_000.0 + 1_500.0 * (2.0 * PI * day / 5.0 + hod / 24.0).cos();
    [load, solar, wind_on, wind_off]
}

/// Relative noise of generated fundamentals around [`fundamental_curve`].
pub const FUNDAMENTAL_NOISE: f64 = 0.03;

/// Builds the full synthetic dataset. Identical configs give identical datasets.
pub fn generate(config: &GeneratorConfig) -> Result<MarketDataset> {
    config.validate()?;
    let gen = Generator::new(config);
    let mut b = MarketDataset::builder();
    for a in &config.areas {
        b.area(a);
    }
    let mut trades = Vec::new();
    let mut books = Vec::new();
    for product in config.hourly_products() {
        let path = gen.hourly_path(&product);
        let mut rng = rng_for(config.seed, product.delivery_start.secs(), 1);
        trades.clear();
        gen.emit_trades(&mut trades, &product, &path, &mut rng, 1.0);
        if config.lob {
            books.clear();
            gen.emit_books(&mut books, &product, &path);
            for s in books.drain(..) {
                b.add_snapshot(s)?;
            }
        }
        if config.quarter_hours {
            for (q, qh) in product.quarter_hours().iter().enumerate() {
                let qpath = gen.quarter_path(&path, qh, q as u64);
                let mut qrng = rng_for(config.seed, qh.delivery_start.secs(), 20 + q as u64);
                gen.emit_trades(&mut trades, qh, &qpath, &mut qrng, config.qh_intensity_factor);
                if config.lob && config.lob_quarter_hours {
                    books.clear();
                    gen.emit_books(&mut books, qh, &qpath);
                    for s in books.drain(..) {
                        b.add_snapshot(s)?;
                    }
                }
            }
        }
        for t in trades.drain(..) {
            b.add_trade(t)?;
        }
    }

    // fundamentals for every delivery hour, one day of margin each side
    let mut rng = rng_for(config.seed, 0, 3);
    let first_hour = config.start.secs() - DAY;
    let last_hour = config.start.secs() + (config.days as i64 + 1) * DAY;
    for h in (first_hour..last_hour).step_by(HOUR as usize) {
        let t = Timestamp::from_secs(h);
        let truth = fundamental_curve(t);
        let noisy = |x: f64, rng: &mut ChaCha8Rng| (x * (1.0 + FUNDAMENTAL_NOISE * std_normal(rng))).max(0.0);
        let da = truth.map(|x| noisy(x, &mut rng));
        b.add_fundamental(FundamentalRecord {
            delivery_start: t,
            horizon: Horizon::DayAhead,
            load_mw: Some(da[0]),
            solar_mw: da[1],
            wind_onshore_mw: da[2],
            wind_offshore_mw: da[3],
        })?;
        let id = [da[1], da[2], da[3]].map(|x| noisy(x, &mut rng));
        b.add_fundamental(FundamentalRecord {
            delivery_start: t,
            horizon: Horizon::Intraday,
            load_mw: None,
            solar_mw: id[0],
            wind_onshore_mw: id[1],
            wind_offshore_mw: id[2],
        })?;
    }

    // NRV saldo: AR(1) per quarter hour, published 15..=45 minutes after the quarter starts
    let mut rng = rng_for(config.seed, 0, 4);
    let first_q = config.start.secs() - config.session_secs() - HOUR;
    let first_q = first_q - first_q.rem_euclid(QUARTER_HOUR);
    let mut saldo = 0.0;
    for q in (first_q..last_hour).step_by(QUARTER_HOUR as usize) {
        saldo = 0.8 * saldo + 200.0 * std_normal(&mut rng);
        let delay = ImbalanceRecord::MIN_DELAY + rng.random_range(0..=30) * MINUTE;
        b.add_imbalance(ImbalanceRecord {
            quarter_start: Timestamp::from_secs(q),
            saldo_mw: saldo,
            publish_time: Timestamp::from_secs(q + delay),
        })?;
    }
    Ok(b.build())
}

/// Latent mid/return path of an hourly product as used by [`generate`].
pub fn latent_hourly_path(config: &GeneratorConfig, product: &Product) -> Result<LatentPath> {
    config.validate()?;
    if !product.is_hourly() {
        return Err(Error::InvalidArgument(format!("{product} is not hourly")));
    }
    Ok(Generator::new(config).hourly_path(product))
}

/// Monte-Carlo accuracy of the optimal one-step direction forecast
/// `sign(E[r_next | r_prev, book lean])` on the latent return process.
pub fn bayes_accuracy_oracle(config: &GeneratorConfig, n_draws: usize) -> Result<f64> {
    config.validate()?;
    if n_draws < 100_000 {
        return Err(Error::InvalidArgument(format!("n_draws must be >= 1e5, got {n_draws}")));
    }
    let rho = config.momentum_rho;
    let sigma = config.noise_sigma;
    let q = config.lob_imbalance_signal;
    let phi = StatNormal::new(0.0, 1.0).expect("standard normal");
    let mut rng = rng_for(config.seed, -1, 5);
    let mut r = sigma / (1.0 - rho * rho).sqrt() * std_normal(&mut rng);
    let mut hits = 0usize;
    for _ in 0..n_draws {
        let mu = rho * r;
        let next = mu + sigma * std_normal(&mut rng);
        let informative = rng.random::<f64>() < q;
        let coin = rng.random::<bool>();
        let lean = if (informative && next > 0.0) || (!informative && coin) { 1.0 } else { -1.0 };
        // E[X | lean] has the sign of mu + q * lean * E|X| for X ~ N(mu, sigma^2)
        let abs_mean = sigma * (2.0 / std::f64::consts::PI).sqrt() * (-(mu * mu) / (2.0 * sigma * sigma)).exp()
            + mu * (1.0 - 2.0 * phi.cdf(-mu / sigma));
        let predict_up = mu + q * lean * abs_mean > 0.0;
        if predict_up == (next > 0.0) {
            hits += 1;
        }
        r = next;
    }
    Ok(hits as f64 / n_draws as f64)
}
